use crate::error::{check_shape, Result};
use crate::grid::{gradients, DisplacementField, FrameDerivatives, GradientPair, Grid, RFFrame, WarpedQuantities};

use super::regularizer::{regularizer_cost, RegularizationWeights};
use super::sparse::{CsrMatrix, Triplet};
use super::{SolverParams, WeightMap};

/// `(H_I + H_∇y + H_∇x + D) Δd = P_I μ₁ + P_∇y μ₂ + P_∇x μ₃ − D d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Per-sample linearization: residuals `r` and Jacobian rows `v` of the three
/// data terms, `r_t − v_t·Δ` being the linearized mismatch.
struct Linearization {
    r: [f64; 3],
    v: [[f64; 2]; 3],
}

#[inline]
fn linearize(i1: &[f64], grads1: &GradientPair, w: &WarpedQuantities, k: usize) -> Linearization {
    Linearization {
        r: [
            i1[k] - w.i2[k],
            grads1.axial.as_slice()[k] - w.grad_y[k],
            grads1.lateral.as_slice()[k] - w.grad_x[k],
        ],
        v: [
            [w.i2_a[k], w.i2_l[k]],
            [w.grad_y_a[k], w.grad_y_l[k]],
            [w.grad_x_a[k], w.grad_x_l[k]],
        ],
    }
}

/// Assembles the system from precomputed warped quantities. Clamped samples
/// contribute no data block and no data right-hand side.
pub fn assemble_from_warped(
    i1: &Grid,
    grads1: &GradientPair,
    warped: &WarpedQuantities,
    d: &DisplacementField,
    theta: &WeightMap,
    gamma: f64,
    regularizer: &CsrMatrix,
) -> Result<LinearSystem> {
    let shape = (warped.rows, warped.cols);
    check_shape(shape, i1.shape())?;
    check_shape(shape, d.shape())?;
    check_shape(shape, theta.theta.shape())?;
    let len = shape.0 * shape.1;
    assert_eq!(regularizer.dim(), 2 * len, "regularizer dimension mismatch");

    let mut triplets: Vec<Triplet> = Vec::with_capacity(4 * len + regularizer.nnz());
    let mut rhs = vec![0.0; 2 * len];
    let f1 = i1.as_slice();
    for k in 0..len {
        if warped.clamped[k] {
            continue;
        }
        let lin = linearize(f1, grads1, warped, k);
        let th = theta.theta_at(k);
        let gw = theta.gradient_weight(gamma, k);
        let weight = [th, gw, gw];
        let (mut aa, mut al, mut ll) = (0.0, 0.0, 0.0);
        let (mut ba, mut bl) = (0.0, 0.0);
        for t in 0..3 {
            let [va, vl] = lin.v[t];
            aa += weight[t] * va * va;
            al += weight[t] * va * vl;
            ll += weight[t] * vl * vl;
            let g = weight[t] * lin.r[t];
            ba += va * g;
            bl += vl * g;
        }
        let (ra, rl) = (2 * k, 2 * k + 1);
        triplets.push((ra, ra, aa));
        triplets.push((ra, rl, al));
        triplets.push((rl, ra, al));
        triplets.push((rl, rl, ll));
        rhs[ra] = ba;
        rhs[rl] = bl;
    }
    triplets.extend(regularizer.triplets());
    let dd = regularizer.mul_vec(&d.to_interleaved());
    for (b, r) in rhs.iter_mut().zip(dd) {
        *b -= r;
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(2 * len, &triplets),
        rhs,
    })
}

/// Assembles the linearized system around the displacement `d`.
pub fn assemble_system(
    i1: &RFFrame,
    i2: &FrameDerivatives,
    d: &DisplacementField,
    theta: &WeightMap,
    params: &SolverParams,
    regularizer: &CsrMatrix,
) -> Result<LinearSystem> {
    let warped = i2.warp(d)?;
    assemble_from_warped(i1, &gradients(i1), &warped, d, theta, params.gamma, regularizer)
}

/// Quadratic model of the weighted cost around `d`, evaluated at the update
/// `delta` (interleaved; `None` means zero):
/// `Σ θ(r₁ − v₁·Δ)² + Γ(r₂ − v₂·Δ)² + Γ(r₃ − v₃·Δ)² + R(d + Δ)`.
#[allow(clippy::too_many_arguments)]
pub fn linearized_cost(
    i1: &Grid,
    grads1: &GradientPair,
    warped: &WarpedQuantities,
    d: &DisplacementField,
    theta: &WeightMap,
    gamma: f64,
    weights: &RegularizationWeights,
    delta: Option<&[f64]>,
) -> f64 {
    let len = warped.rows * warped.cols;
    let f1 = i1.as_slice();
    let mut data = 0.0;
    for k in 0..len {
        if warped.clamped[k] {
            continue;
        }
        let lin = linearize(f1, grads1, warped, k);
        let (da, dl) = delta.map_or((0.0, 0.0), |x| (x[2 * k], x[2 * k + 1]));
        let th = theta.theta_at(k);
        let gw = theta.gradient_weight(gamma, k);
        for (t, w) in [th, gw, gw].into_iter().enumerate() {
            let e = lin.r[t] - lin.v[t][0] * da - lin.v[t][1] * dl;
            data += w * e * e;
        }
    }
    let reg = match delta {
        None => regularizer_cost(weights, d),
        Some(x) => {
            let mut moved = d.clone();
            moved.add_interleaved(x);
            regularizer_cost(weights, &moved)
        }
    };
    data + reg
}
