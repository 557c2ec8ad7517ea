//! Closed-form ridge solves for the output layer.
//!
//! Both forms solve `min |W|^2 / gamma + |D W - Y|^2`; the primal form
//! factors the `d x d` Gram matrix, the dual form the `l x l` one.

use nalgebra::{Cholesky, DMatrix, FullPivLU};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SolveRequest<'a> {
    pub design: &'a DMatrix<f64>,
    pub targets: &'a DMatrix<f64>,
    pub gamma: f64,
}

impl<'a> SolveRequest<'a> {
    pub fn new(design: &'a DMatrix<f64>, targets: &'a DMatrix<f64>, gamma: f64) -> Result<Self> {
        let req = Self {
            design,
            targets,
            gamma,
        };
        req.validate()?;
        Ok(req)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "regularization gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if self.design.nrows() != self.targets.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, targets {}",
                self.design.nrows(),
                self.targets.nrows()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    Primal,
    Dual,
}

/// Primal when the design has no more columns than rows.
pub fn choose_path(design: &DMatrix<f64>) -> SolvePath {
    if design.ncols() <= design.nrows() {
        SolvePath::Primal
    } else {
        SolvePath::Dual
    }
}

/// Solves `(G + I/gamma) X = rhs` for symmetric `G`, Cholesky first and a
/// full-pivot LU if that breaks down.
fn regularized_solve(mut gram: DMatrix<f64>, rhs: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let ridge = 1.0 / gamma;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    if let Some(chol) = Cholesky::new(gram.clone()) {
        return Ok(chol.solve(rhs));
    }
    let lu = FullPivLU::new(gram);
    let u_diag: Vec<f64> = (0..lu.u().nrows()).map(|i| lu.u()[(i, i)].abs()).collect();
    let hi = u_diag.iter().copied().fold(0.0, f64::max);
    let lo = u_diag.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    match lu.solve(rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ => Err(Error::Factorization {
            message: "regularized Gram matrix is numerically singular".into(),
            condition,
        }),
    }
}

/// `W = (D^T D + I/gamma)^{-1} D^T Y`, without forming the inverse.
pub fn solve_primal(req: SolveRequest<'_>) -> Result<DMatrix<f64>> {
    req.validate()?;
    let dt = req.design.transpose();
    let gram = &dt * req.design;
    let rhs = &dt * req.targets;
    regularized_solve(gram, &rhs, req.gamma)
}

/// `W = D^T (D D^T + I/gamma)^{-1} Y`.
pub fn solve_dual(req: SolveRequest<'_>) -> Result<DMatrix<f64>> {
    req.validate()?;
    let gram = req.design * req.design.transpose();
    let alpha = regularized_solve(gram, req.targets, req.gamma)?;
    Ok(req.design.tr_mul(&alpha))
}

pub fn solve_auto(req: SolveRequest<'_>) -> Result<DMatrix<f64>> {
    match choose_path(req.design) {
        SolvePath::Primal => solve_primal(req),
        SolvePath::Dual => solve_dual(req),
    }
}

/// `|(D^T D + I/gamma) W - D^T Y|_F` and `|D^T Y|_F`, the stationarity
/// residual of the ridge objective and its natural scale.
pub fn normal_equation_residual(req: SolveRequest<'_>, w: &DMatrix<f64>) -> (f64, f64) {
    let dt = req.design.transpose();
    let rhs = &dt * req.targets;
    let lhs = &dt * (req.design * w) + w / req.gamma;
    ((lhs - &rhs).norm(), rhs.norm())
}
