//! Linearized displacement refinement with an adaptively weighted data term.
//!
//! Each outer iteration samples the post-deformation frame at the current
//! displacement, re-weights amplitude against gradient mismatch per sample,
//! and solves one sparse symmetric positive definite system for the
//! displacement update. Forcing every weight to one reduces the data term to
//! the amplitude-only cost (GLUE).

mod assemble;
mod cg;
mod refine;
mod regularizer;
mod sparse;

pub use assemble::{assemble_from_warped, assemble_system, linearized_cost, LinearSystem};
pub use cg::{solve_dense, solve_sparse, CgSolution, DENSE_MAX_DIM};
pub use refine::{rglue_refine, IterationDiagnostics, Refinement};
pub use regularizer::{build_regularizer, regularizer_cost, RegularizationWeights};
pub use sparse::{CsrMatrix, Triplet};

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::grid::{GradientPair, Grid, WarpedQuantities};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Axial-displacement regularization toward the axial neighbor.
    pub alpha1: f64,
    /// Axial-displacement regularization toward the lateral neighbor.
    pub alpha2: f64,
    /// Lateral-displacement regularization toward the axial neighbor.
    pub beta1: f64,
    /// Lateral-displacement regularization toward the lateral neighbor.
    pub beta2: f64,
    /// Weight of the gradient-mismatch terms.
    pub gamma: f64,
    /// Steepness of the amplitude/gradient weight sigmoid.
    pub lambda: f64,
    pub outer_iterations: usize,
    /// Relative residual `‖b - Ax‖ / ‖b‖` at which CG stops.
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
    /// Force every amplitude weight to one (plain GLUE).
    pub glue_mode: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            alpha1: 3.0,
            alpha2: 0.3,
            beta1: 3.0,
            beta2: 0.3,
            gamma: 0.5,
            lambda: 20.0,
            outer_iterations: 5,
            cg_tolerance: 1e-8,
            cg_max_iterations: 10_000,
            glue_mode: false,
        }
    }
}

impl SolverParams {
    pub fn glue(mut self) -> Self {
        self.glue_mode = true;
        self
    }

    pub fn regularization(&self) -> RegularizationWeights {
        RegularizationWeights {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.regularization().validate()?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.outer_iterations == 0 {
            return Err(Error::InvalidParameter("outer_iterations must be at least 1".into()));
        }
        if !(self.cg_tolerance > 0.0) || self.cg_max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "CG tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-sample amplitude weight θ. The gradient weight `Γ = γ(1 - θ)` is
/// derived on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub theta: Grid,
}

impl WeightMap {
    /// θ ≡ 1: amplitude-only data term.
    pub fn glue(rows: usize, cols: usize) -> Self {
        Self {
            theta: Grid::filled(rows, cols, 1.0),
        }
    }

    pub fn uniform(rows: usize, cols: usize, theta: f64) -> Self {
        Self {
            theta: Grid::filled(rows, cols, theta),
        }
    }

    #[inline]
    pub fn theta_at(&self, k: usize) -> f64 {
        self.theta.as_slice()[k]
    }

    #[inline]
    pub fn gradient_weight(&self, gamma: f64, k: usize) -> f64 {
        gamma * (1.0 - self.theta.as_slice()[k])
    }

    pub fn mean(&self) -> f64 {
        self.theta.mean()
    }
}

/// Squared mismatches at the current displacement. Gradient terms already
/// include γ. Samples whose warped position was clamped carry zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct DataResiduals {
    pub rows: usize,
    pub cols: usize,
    pub amplitude: Vec<f64>,
    pub grad_y: Vec<f64>,
    pub grad_x: Vec<f64>,
}

impl DataResiduals {
    /// `δ = D_I - (D_∇y + D_∇x)`.
    pub fn delta(&self, k: usize) -> f64 {
        self.amplitude[k] - (self.grad_y[k] + self.grad_x[k])
    }
}

pub fn data_residuals(
    i1: &Grid,
    grads1: &GradientPair,
    warped: &WarpedQuantities,
    gamma: f64,
) -> Result<DataResiduals> {
    let shape = (warped.rows, warped.cols);
    check_shape(shape, i1.shape())?;
    check_shape(shape, grads1.axial.shape())?;
    let len = warped.rows * warped.cols;
    let mut out = DataResiduals {
        rows: warped.rows,
        cols: warped.cols,
        amplitude: vec![0.0; len],
        grad_y: vec![0.0; len],
        grad_x: vec![0.0; len],
    };
    let (f1, gy1, gx1) = (i1.as_slice(), grads1.axial.as_slice(), grads1.lateral.as_slice());
    for k in 0..len {
        if warped.clamped[k] {
            continue;
        }
        out.amplitude[k] = (f1[k] - warped.i2[k]).powi(2);
        out.grad_y[k] = gamma * (gy1[k] - warped.grad_y[k]).powi(2);
        out.grad_x[k] = gamma * (gx1[k] - warped.grad_x[k]).powi(2);
    }
    Ok(out)
}

/// Largest argument passed to `exp` in the weight sigmoid.
const SIGMOID_CLAMP: f64 = 700.0;
/// Largest double below one, so θ stays strictly inside (0, 1).
const THETA_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// `θ = 1 / (1 + exp(λ·δ))`; `glue_mode` returns θ ≡ 1 instead.
pub fn update_weight_map(residuals: &DataResiduals, lambda: f64, glue_mode: bool) -> WeightMap {
    let (m, n) = (residuals.rows, residuals.cols);
    if glue_mode {
        return WeightMap::glue(m, n);
    }
    let theta = (0..m * n)
        .map(|k| {
            let arg = (lambda * residuals.delta(k)).clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
            (1.0 / (1.0 + arg.exp())).min(THETA_MAX)
        })
        .collect();
    WeightMap {
        theta: Grid::new(m, n, theta).expect("residual dimensions are non-zero"),
    }
}
