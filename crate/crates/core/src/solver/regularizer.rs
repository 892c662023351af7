use crate::error::{Error, Result};
use crate::grid::DisplacementField;

use super::sparse::{CsrMatrix, Triplet};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizationWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl RegularizationWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// Neighbor differences of the regularizer as `(unknown, unknown, weight)`.
/// Axial unknowns sit at even, lateral unknowns at odd interleaved indices.
fn couplings(m: usize, n: usize, w: &RegularizationWeights) -> impl Iterator<Item = (usize, usize, f64)> {
    let w = *w;
    (0..m).flat_map(move |i| {
        (0..n).flat_map(move |j| {
            let k = i * n + j;
            let mut out = [(0, 0, 0.0); 4];
            let mut len = 0;
            if i > 0 {
                let up = (i - 1) * n + j;
                out[len] = (2 * k, 2 * up, w.alpha1);
                out[len + 1] = (2 * k + 1, 2 * up + 1, w.beta1);
                len += 2;
            }
            if j > 0 {
                let left = k - 1;
                out[len] = (2 * k, 2 * left, w.alpha2);
                out[len + 1] = (2 * k + 1, 2 * left + 1, w.beta2);
                len += 2;
            }
            out.into_iter().take(len)
        })
    })
}

/// Regularization matrix `D` for an `m x n` grid.
///
/// `R = Σ α₁(a−a↑)² + α₂(a−a←)² + β₁(l−l↑)² + β₂(l−l←)²`. Each squared
/// difference `w(u−v)²` adds `w` to both diagonal entries and `−w` to the two
/// off-diagonal ones, so `D` is half the Hessian of `R`, on the same scale as
/// the data blocks (which are half the Hessian of the data term).
pub fn build_regularizer(m: usize, n: usize, weights: &RegularizationWeights) -> Result<CsrMatrix> {
    weights.validate()?;
    let mut triplets: Vec<Triplet> = Vec::with_capacity(16 * m * n);
    for (p, q, w) in couplings(m, n, weights) {
        triplets.push((p, p, w));
        triplets.push((q, q, w));
        triplets.push((p, q, -w));
        triplets.push((q, p, -w));
    }
    // Keep every diagonal entry stored even when a sample has no neighbor.
    for k in 0..2 * m * n {
        triplets.push((k, k, 0.0));
    }
    Ok(CsrMatrix::from_triplets(2 * m * n, &triplets))
}

/// Value of `R` at the displacement `d`.
pub fn regularizer_cost(weights: &RegularizationWeights, d: &DisplacementField) -> f64 {
    let (m, n) = d.shape();
    let (a, l) = (d.axial.as_slice(), d.lateral.as_slice());
    let at = |u: usize| if u.is_multiple_of(2) { a[u / 2] } else { l[u / 2] };
    couplings(m, n, weights)
        .map(|(p, q, w)| w * (at(p) - at(q)).powi(2))
        .sum()
}
