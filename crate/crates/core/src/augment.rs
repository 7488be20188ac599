//! Hard semi-doubly-stochastic transform matrices and the five heuristic
//! augmentations expressed as such matrices.
//!
//! Index convention: `m[i][j] = 1` means the item at source position `i` of
//! the padded sequence is placed at view position `j`. Applying a matrix
//! therefore reads columns: view position `j` receives the single source row
//! with a one in column `j`, or the empty sentinel when the column is empty.
//! Rows `i >= |s|` belong to the padding; placing one of them inside the
//! view introduces a new item (insert or substitute).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{PaddedSequence, Slot};
use crate::error::{Error, Result, Violation};
use crate::matrix::Matrix;

/// Square 0/1 matrix with at most one 1 in every row and every column,
/// stored as the row-to-column assignment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TransformMatrix {
    targets: Vec<Option<usize>>,
}

impl TransformMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            targets: (0..n).map(Some).collect(),
        }
    }

    /// Identity on the first `prefix` rows, all other rows empty.
    pub fn identity_prefix(n: usize, prefix: usize) -> Self {
        Self {
            targets: (0..n).map(|i| (i < prefix).then_some(i)).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            targets: vec![None; n],
        }
    }

    /// Builds from a row-to-column assignment, rejecting column collisions.
    pub fn from_targets(targets: Vec<Option<usize>>) -> Result<Self> {
        let n = targets.len();
        let mut used = vec![false; n];
        let mut violations = Vec::new();
        for (i, t) in targets.iter().enumerate() {
            if let Some(j) = *t {
                if j >= n {
                    return Err(Error::InvalidArgument {
                        op: "from_targets",
                        detail: format!("row {i} targets column {j} >= {n}"),
                    });
                }
                if used[j] && violations.len() < 10 {
                    violations.push(Violation::Col { col: j, sum: 2.0 });
                }
                used[j] = true;
            }
        }
        if violations.is_empty() {
            Ok(Self { targets })
        } else {
            Err(Error::InvalidMatrix(violations))
        }
    }

    /// Accepts a dense matrix iff [`validate`] does.
    pub fn from_dense(m: &Matrix) -> Result<Self> {
        validate(m).map_err(Error::InvalidMatrix)?;
        let targets = (0..m.rows())
            .map(|i| m.row(i).iter().position(|&v| v == 1.0))
            .collect();
        Ok(Self { targets })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    /// View position of source row `i`, if placed.
    pub fn target(&self, i: usize) -> Option<usize> {
        self.targets[i]
    }

    pub fn targets(&self) -> &[Option<usize>] {
        &self.targets
    }

    /// Source row placed at view position `j`, if any.
    pub fn sources(&self) -> Vec<Option<usize>> {
        let mut src = vec![None; self.n()];
        for (i, t) in self.targets.iter().enumerate() {
            if let Some(j) = *t {
                src[j] = Some(i);
            }
        }
        src
    }

    /// Coordinates `(i, j)` of the ones, by row.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|j| (i, j)))
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.n();
        let mut m = Matrix::zeros(n, n);
        for (i, j) in self.entries() {
            m[(i, j)] = 1.0;
        }
        m
    }

    /// Boolean product `self * other`: apply `self`, then `other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.n() != other.n() {
            return Err(Error::Dimension {
                op: "compose",
                lhs: (self.n(), self.n()),
                rhs: (other.n(), other.n()),
            });
        }
        Ok(Self {
            targets: self
                .targets
                .iter()
                .map(|t| t.and_then(|j| other.targets[j]))
                .collect(),
        })
    }

    /// Number of ones.
    pub fn placed(&self) -> usize {
        self.targets.iter().flatten().count()
    }
}

/// Checks that `m` is square with entries in {0, 1} and all row and column
/// sums in {0, 1}. Reports at most the first 10 violations.
pub fn validate(m: &Matrix) -> core::result::Result<(), Vec<Violation>> {
    const LIMIT: usize = 10;
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(vec![Violation::NotSquare { rows, cols }]);
    }
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let v = m[(i, j)];
            if v != 0.0 && v != 1.0 && out.len() < LIMIT {
                out.push(Violation::Entry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    for (row, sum) in m.row_sums().into_iter().enumerate() {
        if sum != 0.0 && sum != 1.0 && out.len() < LIMIT {
            out.push(Violation::Row { row, sum });
        }
    }
    for (col, sum) in m.col_sums().into_iter().enumerate() {
        if sum != 0.0 && sum != 1.0 && out.len() < LIMIT {
            out.push(Violation::Col { col, sum });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// A transformed copy of a padded sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedView {
    pub items: Vec<Slot>,
    pub source: PaddedSequence,
    pub matrix: TransformMatrix,
}

impl AugmentedView {
    /// Whether position `j` holds an item.
    pub fn present(&self) -> Vec<bool> {
        self.items.iter().map(Option::is_some).collect()
    }
}

pub fn apply(m: &TransformMatrix, s: &PaddedSequence) -> Result<AugmentedView> {
    if m.n() != s.len() {
        return Err(Error::Dimension {
            op: "apply",
            lhs: (m.n(), m.n()),
            rhs: (s.len(), 1),
        });
    }
    let items = m.sources().into_iter().map(|src| src.map(|i| s.item(i))).collect();
    Ok(AugmentedView {
        items,
        source: s.clone(),
        matrix: m.clone(),
    })
}

fn bad(op: &'static str, detail: alloc::string::String) -> Error {
    Error::InvalidArgument { op, detail }
}

fn check_prefix(op: &'static str, n: usize, s_len: usize) -> Result<()> {
    if s_len > n {
        return Err(bad(op, format!("prefix {s_len} longer than n {n}")));
    }
    Ok(())
}

/// Keeps `[start, start + crop_len)` of the unpadded prefix, left-aligned.
pub fn matrix_for_crop(n: usize, s_len: usize, start: usize, crop_len: usize) -> Result<TransformMatrix> {
    check_prefix("crop", n, s_len)?;
    if crop_len == 0 {
        return Err(Error::EmptyView);
    }
    if start + crop_len > s_len {
        return Err(bad(
            "crop",
            format!("window {start}+{crop_len} exceeds prefix {s_len}"),
        ));
    }
    let targets = (0..n)
        .map(|i| (start..start + crop_len).contains(&i).then(|| i - start))
        .collect();
    Ok(TransformMatrix { targets })
}

/// Drops the given prefix positions; survivors keep their order, left-aligned.
pub fn matrix_for_mask(n: usize, s_len: usize, positions: &[usize]) -> Result<TransformMatrix> {
    check_prefix("mask", n, s_len)?;
    let mut masked = vec![false; s_len];
    for &p in positions {
        if p >= s_len {
            return Err(bad("mask", format!("position {p} outside prefix {s_len}")));
        }
        masked[p] = true;
    }
    let mut next = 0;
    let mut targets = vec![None; n];
    for i in 0..s_len {
        if !masked[i] {
            targets[i] = Some(next);
            next += 1;
        }
    }
    Ok(TransformMatrix { targets })
}

/// Moves the item at `start + t` to `start + perm[t]`; everything else in the
/// prefix stays put.
pub fn matrix_for_reorder(n: usize, s_len: usize, start: usize, perm: &[usize]) -> Result<TransformMatrix> {
    check_prefix("reorder", n, s_len)?;
    let w = perm.len();
    if start + w > s_len {
        return Err(bad(
            "reorder",
            format!("window {start}+{w} exceeds prefix {s_len}"),
        ));
    }
    let mut seen = vec![false; w];
    for &p in perm {
        if p >= w || seen[p] {
            return Err(bad("reorder", format!("invalid permutation {perm:?}")));
        }
        seen[p] = true;
    }
    let mut targets: Vec<Option<usize>> = (0..n).map(|i| (i < s_len).then_some(i)).collect();
    for (t, &p) in perm.iter().enumerate() {
        targets[start + t] = Some(start + p);
    }
    Ok(TransformMatrix { targets })
}

/// Places pad row `s_len + t` at view position `slots[t]`; original items fill
/// the remaining positions in order, and any that no longer fit are dropped.
pub fn matrix_for_insert(n: usize, s_len: usize, slots: &[usize]) -> Result<TransformMatrix> {
    check_prefix("insert", n, s_len)?;
    if slots.len() > n - s_len {
        return Err(bad(
            "insert",
            format!("{} slots but only {} pad rows", slots.len(), n - s_len),
        ));
    }
    let mut taken = vec![false; n];
    let mut targets = vec![None; n];
    for (t, &slot) in slots.iter().enumerate() {
        if slot >= n || taken[slot] {
            return Err(bad("insert", format!("slot collision or overflow at {slot}")));
        }
        taken[slot] = true;
        targets[s_len + t] = Some(slot);
    }
    let mut free = (0..n).filter(|&j| !taken[j]);
    for target in targets.iter_mut().take(s_len) {
        *target = free.next();
    }
    Ok(TransformMatrix { targets })
}

/// For each `(p, r)`, original position `p` is emptied and pad row `r` takes
/// its view position.
pub fn matrix_for_substitute(n: usize, s_len: usize, mapping: &[(usize, usize)]) -> Result<TransformMatrix> {
    check_prefix("substitute", n, s_len)?;
    let mut targets: Vec<Option<usize>> = (0..n).map(|i| (i < s_len).then_some(i)).collect();
    let mut used_pos = vec![false; s_len];
    let mut used_row = vec![false; n];
    for &(p, r) in mapping {
        if p >= s_len || used_pos[p] {
            return Err(bad("substitute", format!("invalid position {p}")));
        }
        if r < s_len || r >= n || used_row[r] {
            return Err(bad("substitute", format!("invalid or reused pad row {r}")));
        }
        used_pos[p] = true;
        used_row[r] = true;
        targets[p] = None;
        targets[r] = Some(p);
    }
    Ok(TransformMatrix { targets })
}

/// What a transform matrix does to a sequence of unpadded length `s_len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentationProfile {
    /// Original rows left empty.
    pub masked: usize,
    /// Original rows placed somewhere other than their own position.
    pub reordered: usize,
    /// Pad rows placed anywhere.
    pub introduced: usize,
    /// `displacement[d]` counts placed rows with `|j - i| = d`.
    pub displacement: Vec<usize>,
}

pub fn classify(m: &TransformMatrix, s_len: usize) -> AugmentationProfile {
    let n = m.n();
    let mut profile = AugmentationProfile {
        masked: 0,
        reordered: 0,
        introduced: 0,
        displacement: vec![0; n.max(1)],
    };
    for (i, t) in m.targets().iter().enumerate() {
        match (*t, i < s_len) {
            (None, true) => profile.masked += 1,
            (None, false) => {}
            (Some(j), original) => {
                if original && j != i {
                    profile.reordered += 1;
                }
                if !original {
                    profile.introduced += 1;
                }
                profile.displacement[i.abs_diff(j)] += 1;
            }
        }
    }
    profile
}
