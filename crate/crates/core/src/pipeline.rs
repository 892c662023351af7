//! End-to-end estimation: DP initialization, weighted refinement, strain.

use crate::dp::{dp_displacement, DPParams};
use crate::error::{Error, Result};
use crate::grid::{DisplacementField, RFFrame};
use crate::solver::{rglue_refine, Refinement, SolverParams};
use crate::strain::{least_squares_strain, Axis, StrainImage};

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateParams {
    /// `None` picks [`DPParams::default_for`] the pre-deformation frame.
    pub dp: Option<DPParams>,
    pub solver: SolverParams,
    pub strain_window: usize,
    pub strain_axis: Axis,
}

impl Default for EstimateParams {
    fn default() -> Self {
        Self {
            dp: None,
            solver: SolverParams::default(),
            strain_window: 3,
            strain_axis: Axis::Axial,
        }
    }
}

/// Where CG gave up, when it did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stall {
    pub iteration: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub initial: DisplacementField,
    pub refinement: Refinement,
    /// Compressive strain is positive: the slope of the negated displacement.
    pub strain: StrainImage,
    pub stall: Option<Stall>,
}

pub fn estimate(i1: &RFFrame, i2: &RFFrame, params: &EstimateParams) -> Result<Estimate> {
    let dp = params.dp.clone().unwrap_or_else(|| DPParams::default_for(i1));
    let initial = dp_displacement(i1, i2, &dp)?;
    let (refinement, stall) = match rglue_refine(i1, i2, &initial, &params.solver) {
        Ok(r) => (r, None),
        Err(Error::RefineNotConverged {
            iteration,
            residual,
            partial,
        }) => (*partial, Some(Stall { iteration, residual })),
        Err(e) => return Err(e),
    };
    let strain = displacement_strain(&refinement.displacement, params.strain_window, params.strain_axis)?;
    Ok(Estimate {
        initial,
        refinement,
        strain,
        stall,
    })
}

/// Strain of one displacement component, sign-flipped so compression reads positive.
pub fn displacement_strain(disp: &DisplacementField, window: usize, axis: Axis) -> Result<StrainImage> {
    let component = match axis {
        Axis::Axial => &disp.axial,
        Axis::Lateral => &disp.lateral,
    };
    least_squares_strain(&component.map(|v| -v), window, axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn identical_frames_give_zero_strain() {
        let frame = RFFrame::new(Grid::from_fn(24, 6, |i, j| ((i * 13 + j * 7) % 11) as f64 - 5.0)).unwrap();
        let est = estimate(&frame, &frame, &EstimateParams::default()).unwrap();
        assert!(est.stall.is_none());
        assert!(est.initial.axial.as_slice().iter().all(|&v| v == 0.0));
        assert!(est.strain.as_slice().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn strain_sign_convention() {
        let disp = DisplacementField::new(
            Grid::from_fn(10, 2, |i, _| -0.03 * i as f64),
            Grid::zeros(10, 2),
        )
        .unwrap();
        let s = displacement_strain(&disp, 3, Axis::Axial).unwrap();
        assert!(s.as_slice().iter().all(|v| (v - 0.03).abs() < 1e-14));
    }
}
