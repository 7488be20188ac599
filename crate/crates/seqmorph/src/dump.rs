//! Text renderings of averaged transformation matrices.

use std::fmt::Write as _;

use seqmorph_core::augment::{classify, TransformMatrix};
use seqmorph_core::Matrix;

use crate::error::FormatError;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixDump {
    pub mean: Matrix,
    pub users: usize,
    /// `displacement[d]` counts placed rows moved by `d`, over the cohort.
    pub displacement: Vec<usize>,
    pub placed: usize,
}

/// Element-wise mean of `matrices`, which must share a size, plus the summed
/// displacement histogram.
pub fn average(matrices: &[TransformMatrix], s_len: usize) -> Result<MatrixDump, FormatError> {
    let first = matrices
        .first()
        .ok_or_else(|| FormatError::Config("empty cohort".into()))?;
    let n = first.n();
    let mut mean = Matrix::zeros(n, n);
    let mut displacement = vec![0; n];
    let mut placed = 0;
    for m in matrices {
        if m.n() != n {
            return Err(FormatError::Config(format!("cohort mixes sizes {n} and {}", m.n())));
        }
        for (i, j) in m.entries() {
            mean[(i, j)] += 1.0;
        }
        for (d, c) in classify(m, s_len).displacement.iter().enumerate() {
            displacement[d] += c;
        }
        placed += m.placed();
    }
    mean.scale_assign(1.0 / matrices.len() as f64);
    Ok(MatrixDump {
        mean,
        users: matrices.len(),
        displacement,
        placed,
    })
}

/// Plain PGM (P2); 255 is an entry of 1, 0 an entry of 0.
pub fn pgm(m: &Matrix) -> String {
    let mut out = format!("P2\n{} {}\n255\n", m.cols(), m.rows());
    for r in 0..m.rows() {
        let line: Vec<String> = m
            .row(r)
            .iter()
            .map(|v| ((v.clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// `row col value` per nonzero entry, then the displacement histogram.
pub fn coordinates(dump: &MatrixDump) -> String {
    let mut out = format!("# users {} placed {}\n# row col mean\n", dump.users, dump.placed);
    let m = &dump.mean;
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if m[(r, c)] != 0.0 {
                writeln!(out, "{r} {c} {}", m[(r, c)]).expect("string write");
            }
        }
    }
    out.push_str("# displacement count\n");
    for (d, c) in dump.displacement.iter().enumerate() {
        writeln!(out, "{d} {c}").expect("string write");
    }
    out
}
