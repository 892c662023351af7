//! Strain image quality metrics: RMSE against ground truth, SNR of a
//! background window, and CNR between target and background windows.
//!
//! Standard deviations use the population divisor `N`.

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::grid::Grid;

/// Inclusive rectangular window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Window {
    pub fn new(row_start: usize, row_end: usize, col_start: usize, col_end: usize) -> Self {
        Self {
            row_start,
            row_end,
            col_start,
            col_end,
        }
    }

    pub fn area(&self) -> usize {
        (self.row_end + 1).saturating_sub(self.row_start)
            * (self.col_end + 1).saturating_sub(self.col_start)
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.row_start > self.row_end || self.col_start > self.col_end {
            return Err(Error::InvalidRegion(format!("window {self:?} is empty")));
        }
        if self.row_end >= rows || self.col_end >= cols {
            return Err(Error::InvalidRegion(format!(
                "window {self:?} exceeds a {rows}x{cols} image"
            )));
        }
        if self.area() < 2 {
            return Err(Error::InvalidRegion(format!(
                "window {self:?} needs at least two samples"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStats {
    pub mean: f64,
    pub std: f64,
}

pub fn window_stats(img: &Grid, w: &Window) -> Result<WindowStats> {
    w.validate(img.rows(), img.cols())?;
    let mut values = Vec::with_capacity(w.area());
    for i in w.row_start..=w.row_end {
        values.extend_from_slice(&img.row(i)[w.col_start..=w.col_end]);
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    Ok(WindowStats {
        mean,
        std: var.sqrt(),
    })
}

pub fn rmse(est: &Grid, truth: &Grid) -> Result<f64> {
    check_shape(truth.shape(), est.shape())?;
    let sum: f64 = est
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok((sum / est.len() as f64).sqrt())
}

/// `mean / std` over the window.
pub fn snr(img: &Grid, w: &Window) -> Result<f64> {
    let s = window_stats(img, w)?;
    if s.std == 0.0 {
        return Err(Error::Undefined {
            metric: "SNR",
            reason: "window has zero variance",
        });
    }
    Ok(s.mean / s.std)
}

/// `sqrt(2 (s̄_b − s̄_t)² / (σ_b² + σ_t²))`.
pub fn cnr(img: &Grid, target: &Window, background: &Window) -> Result<f64> {
    let t = window_stats(img, target)?;
    let b = window_stats(img, background)?;
    cnr_from_stats(&t, &b)
}

pub fn cnr_from_stats(target: &WindowStats, background: &WindowStats) -> Result<f64> {
    let noise = background.std.powi(2) + target.std.powi(2);
    if noise == 0.0 {
        return Err(Error::Undefined {
            metric: "CNR",
            reason: "both windows have zero variance",
        });
    }
    Ok((2.0 * (background.mean - target.mean).powi(2) / noise).sqrt())
}

/// Equal-width bins over `[lo, hi]`; values outside are counted separately.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnrHistogram {
    pub bins: HistogramBins,
    /// CNR of every defined target×background pair, target-major.
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
    pub below: usize,
    pub above: usize,
    /// Pairs whose CNR was undefined.
    pub excluded: usize,
    /// `None` when every pair was excluded.
    pub mean: Option<f64>,
}

impl CnrHistogram {
    pub fn edges(&self) -> Vec<f64> {
        let width = (self.bins.hi - self.bins.lo) / self.bins.count as f64;
        (0..=self.bins.count)
            .map(|k| self.bins.lo + width * k as f64)
            .collect()
    }
}

pub fn cnr_histogram(
    img: &Grid,
    targets: &[Window],
    backgrounds: &[Window],
    bins: HistogramBins,
) -> Result<CnrHistogram> {
    if targets.is_empty() || backgrounds.is_empty() {
        return Err(Error::InvalidParameter(
            "CNR histogram needs at least one target and one background window".into(),
        ));
    }
    if bins.count == 0 || !(bins.hi > bins.lo) {
        return Err(Error::InvalidParameter(format!("invalid histogram bins {bins:?}")));
    }
    let t_stats = targets
        .iter()
        .map(|w| window_stats(img, w))
        .collect::<Result<Vec<_>>>()?;
    let b_stats = backgrounds
        .iter()
        .map(|w| window_stats(img, w))
        .collect::<Result<Vec<_>>>()?;

    let mut values = Vec::with_capacity(targets.len() * backgrounds.len());
    let mut excluded = 0;
    for t in &t_stats {
        for b in &b_stats {
            match cnr_from_stats(t, b) {
                Ok(v) => values.push(v),
                Err(Error::Undefined { .. }) => excluded += 1,
                Err(e) => return Err(e),
            }
        }
    }

    let mut counts = vec![0usize; bins.count];
    let (mut below, mut above) = (0, 0);
    let width = (bins.hi - bins.lo) / bins.count as f64;
    for &v in &values {
        if v < bins.lo {
            below += 1;
        } else if v > bins.hi {
            above += 1;
        } else {
            let k = (((v - bins.lo) / width) as usize).min(bins.count - 1);
            counts[k] += 1;
        }
    }
    let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    Ok(CnrHistogram {
        bins,
        values,
        counts,
        below,
        above,
        excluded,
        mean,
    })
}
