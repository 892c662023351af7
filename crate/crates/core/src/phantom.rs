//! Synthetic RF frame pairs with analytically known deformation.
//!
//! A layered medium is compressed axially under uniform stress (layers act
//! as springs in series). Scatterers with random amplitudes are splatted
//! onto an axially up-sampled grid before and after the deformation and
//! convolved with a separable point-spread function.
//!
//! Compression moves tissue toward the transducer, so the axial ground-truth
//! displacement is negative and grows in magnitude with depth. Strains are
//! reported as positive magnitudes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DisplacementField, Grid, RFFrame};

/// Center frequency over sampling frequency of the default pulse
/// (7.27 MHz sampled at 100 MHz).
pub const DEFAULT_PULSE_FREQUENCY: f64 = 7.27 / 100.0;
/// Envelope standard deviation in samples, about 60% fractional bandwidth.
pub const DEFAULT_PULSE_SIGMA: f64 = 8.6;
/// Lateral beam standard deviation in RF lines.
pub const DEFAULT_BEAM_SIGMA: f64 = 2.0;
pub const DEFAULT_AXIAL_UPSAMPLE: usize = 8;
/// RMS amplitude of the synthesized pre-deformation frame. The default
/// solver weights were tuned against frames at this level.
pub const DEFAULT_RMS_AMPLITUDE: f64 = 0.4;
pub const DEFAULT_SCATTERER_DENSITY: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Fraction of the total depth occupied by this layer, in (0, 1].
    pub thickness_fraction: f64,
    /// Young's modulus in kPa.
    pub youngs_modulus: f64,
}

/// Separable point-spread function.
///
/// Axial taps are spaced `1 / axial_upsample` samples apart; lateral taps
/// one RF line apart. Both tap lists have odd length and are centered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psf {
    pub axial: Vec<f64>,
    pub lateral: Vec<f64>,
    pub axial_upsample: usize,
}

impl Psf {
    /// Gaussian-windowed cosine pulse axially, Gaussian beam laterally.
    pub fn gaussian_pulse(frequency: f64, pulse_sigma: f64, beam_sigma: f64, upsample: usize) -> Self {
        let upsample = upsample.max(1);
        let half = (3.5 * pulse_sigma * upsample as f64).ceil() as isize;
        let axial = (-half..=half)
            .map(|k| {
                let t = k as f64 / upsample as f64;
                (-t * t / (2.0 * pulse_sigma * pulse_sigma)).exp()
                    * (2.0 * std::f64::consts::PI * frequency * t).cos()
            })
            .collect();
        let half = (3.0 * beam_sigma).ceil() as isize;
        let lateral = (-half..=half)
            .map(|k| {
                let x = k as f64;
                (-x * x / (2.0 * beam_sigma * beam_sigma)).exp()
            })
            .collect();
        Self {
            axial,
            lateral,
            axial_upsample: upsample,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, taps) in [("axial", &self.axial), ("lateral", &self.lateral)] {
            if taps.is_empty() || taps.len() % 2 == 0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} PSF needs an odd, non-zero number of taps"
                )));
            }
            if !taps.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} PSF taps must be finite")));
            }
        }
        if self.axial_upsample == 0 {
            return Err(Error::InvalidParameter("axial_upsample must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for Psf {
    fn default() -> Self {
        Self::gaussian_pulse(
            DEFAULT_PULSE_FREQUENCY,
            DEFAULT_PULSE_SIGMA,
            DEFAULT_BEAM_SIGMA,
            DEFAULT_AXIAL_UPSAMPLE,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub rows: usize,
    pub cols: usize,
    /// Overall fractional axial compression, in [0, 0.1].
    pub compression: f64,
    /// Layers ordered from the transducer downwards.
    pub layers: Vec<Layer>,
    /// Scatterers per sample.
    pub scatterer_density: f64,
    pub psf: Psf,
    /// Both frames are scaled by one factor so that the pre-deformation
    /// frame has this RMS amplitude.
    pub rms_amplitude: f64,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn homogeneous(rows: usize, cols: usize, compression: f64, seed: u64) -> Self {
        Self::layered(rows, cols, compression, &[(1.0, 20.0)], seed)
    }

    /// Layers given as `(thickness_fraction, youngs_modulus_kpa)` pairs.
    pub fn layered(
        rows: usize,
        cols: usize,
        compression: f64,
        layers: &[(f64, f64)],
        seed: u64,
    ) -> Self {
        Self {
            rows,
            cols,
            compression,
            layers: layers
                .iter()
                .map(|&(thickness_fraction, youngs_modulus)| Layer {
                    thickness_fraction,
                    youngs_modulus,
                })
                .collect(),
            scatterer_density: DEFAULT_SCATTERER_DENSITY,
            psf: Psf::default(),
            rms_amplitude: DEFAULT_RMS_AMPLITUDE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::InvalidParameter(format!(
                "phantom must be at least 2x2, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(0.0..=0.1).contains(&self.compression) {
            return Err(Error::InvalidParameter(format!(
                "compression must lie in [0, 0.1], got {}",
                self.compression
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("phantom needs at least one layer".into()));
        }
        for layer in &self.layers {
            if !(layer.youngs_modulus > 0.0) || !layer.youngs_modulus.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "Young's modulus must be positive, got {}",
                    layer.youngs_modulus
                )));
            }
            if !(layer.thickness_fraction > 0.0 && layer.thickness_fraction <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "layer thickness fraction must lie in (0, 1], got {}",
                    layer.thickness_fraction
                )));
            }
        }
        let total: f64 = self.layers.iter().map(|l| l.thickness_fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "layer thickness fractions must sum to 1, got {total}"
            )));
        }
        if !(self.scatterer_density > 0.0) || !self.scatterer_density.is_finite() {
            return Err(Error::InvalidParameter("scatterer density must be positive".into()));
        }
        if !(self.rms_amplitude > 0.0) || !self.rms_amplitude.is_finite() {
            return Err(Error::InvalidParameter("RMS amplitude must be positive".into()));
        }
        self.psf.validate()
    }

    /// Layer index of every row. Boundaries sit at the rounded cumulative
    /// thickness fractions.
    pub fn row_layers(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.rows);
        let mut cumulative = 0.0;
        let mut start = 0;
        for (k, layer) in self.layers.iter().enumerate() {
            cumulative += layer.thickness_fraction;
            let end = if k + 1 == self.layers.len() {
                self.rows
            } else {
                ((cumulative * self.rows as f64).round() as usize).clamp(start, self.rows)
            };
            out.extend(std::iter::repeat_n(k, end - start));
            start = end;
        }
        out
    }
}

/// Per-layer strain under uniform stress: `σ = c·H / Σ(h_k/E_k)`, `ε_k = σ/E_k`.
pub fn layer_strains(spec: &PhantomSpec) -> Result<Vec<f64>> {
    for layer in &spec.layers {
        if !(layer.youngs_modulus > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Young's modulus must be positive, got {}",
                layer.youngs_modulus
            )));
        }
    }
    if spec.layers.is_empty() {
        return Err(Error::InvalidParameter("phantom needs at least one layer".into()));
    }
    let height: f64 = spec.layers.iter().map(|l| l.thickness_fraction).sum();
    let compliance: f64 = spec
        .layers
        .iter()
        .map(|l| l.thickness_fraction / l.youngs_modulus)
        .sum();
    let stress = spec.compression * height / compliance;
    Ok(spec.layers.iter().map(|l| stress / l.youngs_modulus).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub displacement: DisplacementField,
    /// Positive compressive axial strain.
    pub axial_strain: Grid,
}

/// Strain of the layer containing each row.
fn row_strains(spec: &PhantomSpec) -> Result<Vec<f64>> {
    let strains = layer_strains(spec)?;
    Ok(spec.row_layers().into_iter().map(|k| strains[k]).collect())
}

/// Axial displacement profile `a(i) = -Σ_{r<i} ε(r)`.
fn axial_profile(strain_per_row: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(strain_per_row.len());
    let mut acc = 0.0;
    for &eps in strain_per_row {
        out.push(-acc);
        acc += eps;
    }
    out
}

/// Piecewise-linear continuation of the axial profile to any depth `y`.
fn axial_at(profile: &[f64], strain_per_row: &[f64], y: f64) -> f64 {
    let last = profile.len() - 1;
    if y <= 0.0 {
        return -strain_per_row[0] * y;
    }
    let base = (y.floor() as usize).min(last);
    profile[base] - strain_per_row[base] * (y - base as f64)
}

pub fn ground_truth_displacement(spec: &PhantomSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let strains = row_strains(spec)?;
    let profile = axial_profile(&strains);
    let (m, n) = (spec.rows, spec.cols);
    Ok(GroundTruth {
        displacement: DisplacementField {
            axial: Grid::from_fn(m, n, |i, _| profile[i]),
            lateral: Grid::zeros(m, n),
        },
        axial_strain: Grid::from_fn(m, n, |i, _| strains[i]),
    })
}

struct Scatterer {
    y: f64,
    x: f64,
    amplitude: f64,
}

/// Pre- and post-deformation frames plus ground truth. Both frames share one
/// scale factor that brings the pre-deformation frame to `spec.rms_amplitude`.
pub fn synthesize_pair(spec: &PhantomSpec) -> Result<(RFFrame, RFFrame, GroundTruth)> {
    spec.validate()?;
    let truth = ground_truth_displacement(spec)?;
    let strains = row_strains(spec)?;
    let profile = axial_profile(&strains);

    let (m, n) = (spec.rows, spec.cols);
    let up = spec.psf.axial_upsample;
    let half_axial = spec.psf.axial.len() / 2;
    let half_lateral = spec.psf.lateral.len() / 2;
    let margin_y = half_axial.div_ceil(up) + 1;
    let margin_x = half_lateral + 1;

    // Deep scatterers move up into the field of view after compression.
    let y_lo = -(margin_y as f64);
    let y_hi = (m - 1 + margin_y) as f64 / (1.0 - spec.compression) + 1.0;
    let x_lo = -(margin_x as f64);
    let x_hi = (n - 1 + margin_x) as f64;
    let area = (y_hi - y_lo) * (x_hi - x_lo);
    let count = (spec.scatterer_density * area).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scatterers: Vec<Scatterer> = (0..count)
        .map(|_| Scatterer {
            y: rng.gen_range(y_lo..y_hi),
            x: rng.gen_range(x_lo..x_hi),
            amplitude: StandardNormal.sample(&mut rng),
        })
        .collect();

    let fine_rows = (m - 1 + 2 * margin_y) * up + 1;
    let fine_cols = n + 2 * margin_x;
    let mut field1 = vec![0.0; fine_rows * fine_cols];
    let mut field2 = vec![0.0; fine_rows * fine_cols];
    for s in &scatterers {
        let fx = s.x + margin_x as f64;
        let fy1 = (s.y + margin_y as f64) * up as f64;
        let moved = s.y + axial_at(&profile, &strains, s.y);
        let fy2 = (moved + margin_y as f64) * up as f64;
        splat(&mut field1, fine_rows, fine_cols, fy1, fx, s.amplitude);
        splat(&mut field2, fine_rows, fine_cols, fy2, fx, s.amplitude);
    }

    let psf_image = |field: &[f64]| -> Grid {
        // Lateral pass at the output columns only, then axial at output rows.
        let mut lateral = vec![0.0; fine_rows * n];
        for r in 0..fine_rows {
            for j in 0..n {
                let c0 = j + margin_x - half_lateral;
                let mut acc = 0.0;
                for (t, &w) in spec.psf.lateral.iter().enumerate() {
                    acc += w * field[r * fine_cols + c0 + t];
                }
                lateral[r * n + j] = acc;
            }
        }
        Grid::from_fn(m, n, |i, j| {
            let center = (i + margin_y) * up;
            let r0 = center - half_axial;
            spec.psf
                .axial
                .iter()
                .enumerate()
                .map(|(t, &w)| w * lateral[(r0 + t) * n + j])
                .sum()
        })
    };

    let i1 = psf_image(&field1);
    let i2 = psf_image(&field2);
    let rms = (i1.as_slice().iter().map(|v| v * v).sum::<f64>() / i1.len() as f64).sqrt();
    let scale = if rms > 0.0 { spec.rms_amplitude / rms } else { 1.0 };
    Ok((
        RFFrame::new(i1.map(|v| v * scale))?,
        RFFrame::new(i2.map(|v| v * scale))?,
        truth,
    ))
}

fn splat(field: &mut [f64], rows: usize, cols: usize, y: f64, x: f64, amplitude: f64) {
    let i0 = y.floor();
    let j0 = x.floor();
    let wy = y - i0;
    let wx = x - j0;
    let (i0, j0) = (i0 as isize, j0 as isize);
    for (di, fy) in [(0, 1.0 - wy), (1, wy)] {
        for (dj, fx) in [(0, 1.0 - wx), (1, wx)] {
            let (i, j) = (i0 + di, j0 + dj);
            if i >= 0 && j >= 0 && (i as usize) < rows && (j as usize) < cols {
                field[i as usize * cols + j as usize] += amplitude * fy * fx;
            }
        }
    }
}

/// Adds zero-mean Gaussian noise with `σ = max|frame| / 10^(psnr_db/20)`.
pub fn add_gaussian_noise(frame: &RFFrame, psnr_db: f64, seed: u64) -> Result<RFFrame> {
    if !psnr_db.is_finite() {
        return Err(Error::InvalidParameter(format!("PSNR must be finite, got {psnr_db}")));
    }
    let sigma = noise_sigma(frame, psnr_db);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = frame.map(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        v + sigma * z
    });
    RFFrame::new(noisy)
}

pub fn noise_sigma(frame: &Grid, psnr_db: f64) -> f64 {
    frame.max_abs() / 10f64.powf(psnr_db / 20.0)
}

/// Inclusive rectangular index region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierRegion {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl OutlierRegion {
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.row_start > self.row_end || self.col_start > self.col_end {
            return Err(Error::InvalidRegion(format!("{self:?} is empty")));
        }
        if self.row_end >= rows || self.col_end >= cols {
            return Err(Error::InvalidRegion(format!(
                "{self:?} exceeds a {rows}x{cols} frame"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.row_start..=self.row_end).contains(&i) && (self.col_start..=self.col_end).contains(&j)
    }
}

/// Multiplies every sample inside `region` by `factor`.
pub fn inject_multiplicative_outlier(
    frame: &RFFrame,
    region: OutlierRegion,
    factor: f64,
) -> Result<RFFrame> {
    region.validate(frame.rows(), frame.cols())?;
    let mut out = frame.grid().clone();
    for i in region.row_start..=region.row_end {
        for j in region.col_start..=region.col_end {
            out[(i, j)] *= factor;
        }
    }
    RFFrame::new(out)
}

/// Adds `fraction * max|frame|` (peak taken before modification) to every
/// sample of each listed column.
pub fn inject_additive_line_outliers(
    frame: &RFFrame,
    lines: &[usize],
    fraction: f64,
) -> Result<RFFrame> {
    if let Some(&bad) = lines.iter().find(|&&j| j >= frame.cols()) {
        return Err(Error::InvalidRegion(format!(
            "column {bad} outside a frame with {} columns",
            frame.cols()
        )));
    }
    let offset = fraction * frame.max_abs();
    let mut out = frame.grid().clone();
    let mut columns = lines.to_vec();
    columns.sort_unstable();
    columns.dedup();
    for i in 0..out.rows() {
        for &j in &columns {
            out[(i, j)] += offset;
        }
    }
    RFFrame::new(out)
}
