use crate::error::{check_shape, Error, Result};
use crate::grid::{gradients, DisplacementField, FrameDerivatives, RFFrame};

use super::assemble::{assemble_from_warped, linearized_cost};
use super::cg::{pcg, Outcome};
use super::regularizer::build_regularizer;
use super::{data_residuals, update_weight_map, SolverParams, WeightMap};

#[derive(Clone, Debug, PartialEq)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// Weighted cost at the displacement the iteration started from.
    pub cost: f64,
    /// Quadratic model of the cost after applying the update.
    pub linearized_cost: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub mean_theta: f64,
    /// Samples whose warped position left the frame.
    pub clamped: usize,
    /// `max |Δd|` of the update.
    pub max_update: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub displacement: DisplacementField,
    pub weights: WeightMap,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Gauss–Newton refinement of `d0` with per-iteration weight updates.
///
/// Every outer iteration warps `I₂` to the current displacement, computes the
/// data residuals, updates θ from them (skipped in GLUE mode, where θ ≡ 1),
/// assembles the linearized system and adds its solution to the displacement.
///
/// If CG hits its iteration cap, the approximate update is still applied
/// and the state reached so far is returned inside
/// [`Error::RefineNotConverged`].
pub fn rglue_refine(
    i1: &RFFrame,
    i2: &RFFrame,
    d0: &DisplacementField,
    params: &SolverParams,
) -> Result<Refinement> {
    check_shape(i1.shape(), i2.shape())?;
    check_shape(i1.shape(), d0.shape())?;
    params.validate()?;

    let (m, n) = i1.shape();
    let weights_r = params.regularization();
    let regularizer = build_regularizer(m, n, &weights_r)?;
    let grads1 = gradients(i1);
    let der2 = FrameDerivatives::new(i2);

    let mut d = d0.clone();
    let mut theta = if params.glue_mode {
        WeightMap::glue(m, n)
    } else {
        WeightMap::uniform(m, n, 0.5)
    };
    let mut diagnostics = Vec::with_capacity(params.outer_iterations);

    for iteration in 0..params.outer_iterations {
        let warped = der2.warp(&d)?;
        let residuals = data_residuals(i1, &grads1, &warped, params.gamma)?;
        theta = update_weight_map(&residuals, params.lambda, params.glue_mode);
        let system = assemble_from_warped(i1, &grads1, &warped, &d, &theta, params.gamma, &regularizer)?;
        let (delta, outcome) = pcg(&system, params.cg_tolerance, params.cg_max_iterations)?;

        let cost = linearized_cost(i1, &grads1, &warped, &d, &theta, params.gamma, &weights_r, None);
        let model = linearized_cost(
            i1,
            &grads1,
            &warped,
            &d,
            &theta,
            params.gamma,
            &weights_r,
            Some(&delta),
        );
        let (cg_iterations, cg_residual, converged) = match outcome {
            Outcome::Converged { iterations, residual } => (iterations, residual, true),
            Outcome::Stalled { iterations, residual } => (iterations, residual, false),
        };
        d.add_interleaved(&delta);
        diagnostics.push(IterationDiagnostics {
            iteration: iteration + 1,
            cost,
            linearized_cost: model,
            cg_iterations,
            cg_residual,
            mean_theta: theta.mean(),
            clamped: warped.clamped_count(),
            max_update: delta.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
        });
        if !converged {
            return Err(Error::RefineNotConverged {
                iteration: iteration + 1,
                residual: cg_residual,
                partial: Box::new(Refinement {
                    displacement: d,
                    weights: theta,
                    diagnostics,
                }),
            });
        }
    }

    Ok(Refinement {
        displacement: d,
        weights: theta,
        diagnostics,
    })
}
