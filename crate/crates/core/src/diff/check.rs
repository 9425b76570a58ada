//! Central finite-difference verification of reverse-mode gradients.

use ndarray::Array2;
use serde::Serialize;

use super::{Tape, Var};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Coordinate `(row, col)` of the worst relative error.
    pub worst: (usize, usize),
    pub coords: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Relative error `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn eval<F>(f: &F, point: &Array2<f64>) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.param(point.clone());
    let out = f(&mut tape, x)?;
    if tape.value(out).dim() != (1, 1) {
        return Err(Error::Contract("grad_check function must return a scalar".into()));
    }
    Ok(tape.scalar(out))
}

/// Compares the reverse-mode gradient of `f` at `point` with the central
/// difference `(f(x + h e_k) - f(x - h e_k)) / 2h` on every coordinate.
pub fn grad_check<F>(f: F, point: &Array2<f64>, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step {step} must be positive")));
    }
    let mut tape = Tape::new();
    let x = tape.param(point.clone());
    let out = f(&mut tape, x)?;
    let analytic = tape.backward(out)?.wrt(&tape, x);

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: (0, 0),
        coords: point.len(),
        tol,
        passed: true,
    };
    let mut probe = point.clone();
    for ((r, c), &base) in point.indexed_iter() {
        probe[[r, c]] = base + step;
        let up = eval(&f, &probe)?;
        probe[[r, c]] = base - step;
        let down = eval(&f, &probe)?;
        probe[[r, c]] = base;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[[r, c]];
        let rel = rel_err(a, numeric);
        report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = (r, c);
        }
    }
    report.passed = report.max_rel_err < tol;
    Ok(report)
}
