//! Strain from displacement by sliding-window least-squares slopes, plus a
//! median filter for comparison images.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Axial,
    Lateral,
}

/// Strain per sample (dimensionless), all values finite.
#[derive(Clone, Debug, PartialEq)]
pub struct StrainImage(Grid);

impl StrainImage {
    pub fn new(grid: Grid) -> Result<Self> {
        if !grid.all_finite() {
            return Err(Error::InvalidParameter("strain image contains non-finite values".into()));
        }
        Ok(Self(grid))
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }
}

impl Deref for StrainImage {
    type Target = Grid;

    fn deref(&self) -> &Grid {
        &self.0
    }
}

/// Slope of the ordinary least-squares line through `window_len` samples
/// centered on each position along `axis`. Windows that would cross the
/// border are shifted inwards so every sample uses a full window.
pub fn least_squares_strain(disp: &Grid, window_len: usize, axis: Axis) -> Result<StrainImage> {
    let extent = match axis {
        Axis::Axial => disp.rows(),
        Axis::Lateral => disp.cols(),
    };
    if window_len < 3 || window_len.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "window length must be odd and at least 3, got {window_len}"
        )));
    }
    if window_len > extent {
        return Err(Error::InvalidParameter(format!(
            "window length {window_len} exceeds the {extent} samples along the axis"
        )));
    }
    let half = window_len / 2;
    let centered: Vec<f64> = (0..window_len).map(|t| t as f64 - half as f64).collect();
    let denom: f64 = centered.iter().map(|c| c * c).sum();

    let (m, n) = disp.shape();
    let out = Grid::from_fn(m, n, |i, j| {
        let pos = match axis {
            Axis::Axial => i,
            Axis::Lateral => j,
        };
        let start = pos.saturating_sub(half).min(extent - window_len);
        let numer: f64 = centered
            .iter()
            .enumerate()
            .map(|(t, c)| {
                let v = match axis {
                    Axis::Axial => disp[(start + t, j)],
                    Axis::Lateral => disp[(i, start + t)],
                };
                c * v
            })
            .sum();
        numer / denom
    });
    StrainImage::new(out)
}

/// `k x k` median with edge-replicated padding.
pub fn median_filter(img: &Grid, k: usize) -> Result<Grid> {
    if k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("median kernel must be odd, got {k}")));
    }
    let half = (k / 2) as isize;
    let (m, n) = img.shape();
    let mut window = Vec::with_capacity(k * k);
    Ok(Grid::from_fn(m, n, |i, j| {
        window.clear();
        for di in -half..=half {
            for dj in -half..=half {
                let y = (i as isize + di).clamp(0, m as isize - 1) as usize;
                let x = (j as isize + dj).clamp(0, n as isize - 1) as usize;
                window.push(img[(y, x)]);
            }
        }
        let mid = window.len() / 2;
        *window.select_nth_unstable_by(mid, f64::total_cmp).1
    }))
}
