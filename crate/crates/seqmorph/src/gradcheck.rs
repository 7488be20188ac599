//! Finite-difference report over every primitive and composite loss.

use rand::Rng;
use seqmorph_core::autodiff::checks::{check_primitive, FD_STEP};
use seqmorph_core::autodiff::{grad_check, PRIMITIVES};
use seqmorph_core::checks::{check_composite, COMPOSITES};
use seqmorph_core::Matrix;

pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub kind: &'static str,
    pub name: String,
    pub worst: f64,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.worst < TOLERANCE
    }
}

/// Function whose backward rule is deliberately wrong: `sum(x * c)` where
/// `c` is `x` detached, checked as if `c` were not detached. The analytic
/// gradient is `x`, the true one `2x`.
pub fn corrupted_fixture<R: Rng + ?Sized>(rng: &mut R) -> seqmorph_core::Result<f64> {
    let x = Matrix::from_fn(3, 3, |_, _| rng.gen_range(0.5..2.0));
    grad_check(
        |t, v| {
            let c = t.constant_view(v[0])?;
            let p = t.hadamard(v[0], c)?;
            t.sum(p)
        },
        &[x],
        FD_STEP,
    )
}

/// Worst relative error per item over `trials` random instances. The
/// negative control is appended when `negative_control` is set.
pub fn run<R: Rng + ?Sized>(trials: usize, negative_control: bool, rng: &mut R) -> seqmorph_core::Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    for (kind, names, check) in [
        ("primitive", PRIMITIVES, check_primitive::<R> as fn(&str, &mut R) -> seqmorph_core::Result<f64>),
        ("composite", COMPOSITES, check_composite::<R>),
    ] {
        for &name in names {
            let mut worst = 0.0f64;
            for _ in 0..trials {
                worst = worst.max(check(name, rng)?);
            }
            lines.push(CheckLine {
                kind,
                name: name.into(),
                worst,
            });
        }
    }
    if negative_control {
        let mut worst = 0.0f64;
        for _ in 0..trials.max(1) {
            worst = worst.max(corrupted_fixture(rng)?);
        }
        lines.push(CheckLine {
            kind: "fixture",
            name: "corrupted_backward".into(),
            worst,
        });
    }
    Ok(lines)
}

pub fn render(lines: &[CheckLine]) -> String {
    let mut out = String::new();
    for l in lines {
        let verdict = if l.passed() { "PASS" } else { "FAIL" };
        out += &format!("{verdict} {:<9} {:<20} {:.3e}\n", l.kind, l.name, l.worst);
    }
    out
}
