//! TOML run configuration. Relative paths are resolved against the directory
//! holding the config file.

use std::path::{Path, PathBuf};

use rglue_core::dp::DPParams;
use rglue_core::metrics::{HistogramBins, Window};
use rglue_core::phantom::{
    OutlierRegion, PhantomSpec, Psf, DEFAULT_AXIAL_UPSAMPLE, DEFAULT_BEAM_SIGMA, DEFAULT_PULSE_FREQUENCY,
    DEFAULT_PULSE_SIGMA, DEFAULT_RMS_AMPLITUDE, DEFAULT_SCATTERER_DENSITY,
};
use rglue_core::solver::SolverParams;
use rglue_core::strain::Axis;
use rglue_core::Grid;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Amplitude-only data term.
    Glue,
    /// Adaptive amplitude/gradient weighting.
    Rglue,
    /// Integer DP initialization without refinement.
    Dp,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    pub phantom: Option<PhantomConfig>,
    pub frames: Option<FramesConfig>,
    #[serde(default)]
    pub corruption: CorruptionConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub strain: StrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_method() -> Method {
    Method::Rglue
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub rows: usize,
    pub cols: usize,
    pub compression: f64,
    /// `[thickness_fraction, youngs_modulus_kpa]` from the top down.
    #[serde(default = "one_layer")]
    pub layers: Vec<[f64; 2]>,
    #[serde(default = "density")]
    pub scatterer_density: f64,
    #[serde(default = "rms")]
    pub rms_amplitude: f64,
    #[serde(default)]
    pub psf: PsfConfig,
}

fn one_layer() -> Vec<[f64; 2]> {
    vec![[1.0, 20.0]]
}

fn density() -> f64 {
    DEFAULT_SCATTERER_DENSITY
}

fn rms() -> f64 {
    DEFAULT_RMS_AMPLITUDE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsfConfig {
    /// Center frequency over sampling frequency.
    pub frequency: f64,
    pub pulse_sigma: f64,
    pub beam_sigma: f64,
    pub axial_upsample: usize,
}

impl Default for PsfConfig {
    fn default() -> Self {
        Self {
            frequency: DEFAULT_PULSE_FREQUENCY,
            pulse_sigma: DEFAULT_PULSE_SIGMA,
            beam_sigma: DEFAULT_BEAM_SIGMA,
            axial_upsample: DEFAULT_AXIAL_UPSAMPLE,
        }
    }
}

impl PhantomConfig {
    pub fn spec(&self, seed: u64) -> PhantomSpec {
        let layers: Vec<(f64, f64)> = self.layers.iter().map(|l| (l[0], l[1])).collect();
        let mut spec = PhantomSpec::layered(self.rows, self.cols, self.compression, &layers, seed);
        spec.scatterer_density = self.scatterer_density;
        spec.rms_amplitude = self.rms_amplitude;
        spec.psf = Psf::gaussian_pulse(
            self.psf.frequency,
            self.psf.pulse_sigma,
            self.psf.beam_sigma,
            self.psf.axial_upsample,
        );
        spec
    }
}

/// Pre-existing frames, RFF1 (`.rff`) or CSV.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramesConfig {
    pub pre: PathBuf,
    pub post: PathBuf,
    /// Ground-truth axial strain, if known.
    pub truth_strain: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    /// Peak SNR in dB of Gaussian noise added to both frames.
    pub noise_psnr_db: Option<f64>,
    pub outlier: Option<OutlierConfig>,
    pub lines: Option<LinesConfig>,
}

/// Multiplies an inclusive region of the post-deformation frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierConfig {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
    pub factor: f64,
}

impl OutlierConfig {
    pub fn region(&self) -> OutlierRegion {
        OutlierRegion {
            row_start: self.row_start,
            row_end: self.row_end,
            col_start: self.col_start,
            col_end: self.col_end,
        }
    }
}

/// Adds a fraction of the peak amplitude to whole columns of the
/// post-deformation frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinesConfig {
    pub columns: Vec<usize>,
    pub fraction: f64,
}

/// Overrides for [`DPParams::default_for`].
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub axial_range: Option<usize>,
    pub lateral_range: Option<usize>,
    pub smoothness_weight: Option<f64>,
    pub line_coupling: Option<f64>,
}

impl InitConfig {
    pub fn params(&self, i1: &Grid) -> DPParams {
        let d = DPParams::default_for(i1);
        DPParams {
            axial_range: self.axial_range.unwrap_or(d.axial_range),
            lateral_range: self.lateral_range.unwrap_or(d.lateral_range),
            smoothness_weight: self.smoothness_weight.unwrap_or(d.smoothness_weight),
            line_coupling: self.line_coupling.unwrap_or(d.line_coupling),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrainConfig {
    pub window: usize,
    pub axis: Axis,
}

impl Default for StrainConfig {
    fn default() -> Self {
        Self {
            window: 3,
            axis: Axis::Axial,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Strain image to score; defaults to `strain.csv` in the output directory.
    pub estimate: Option<PathBuf>,
    /// Defaults to the frames' truth, then `truth_strain.csv` in the output
    /// directory when present.
    pub truth: Option<PathBuf>,
    pub snr: Vec<Window>,
    pub cnr: Vec<CnrPair>,
    pub histogram: Option<HistogramConfig>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnrPair {
    pub target: Window,
    pub background: Window,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub targets: Vec<Window>,
    pub backgrounds: Vec<Window>,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl HistogramConfig {
    pub fn bins(&self) -> HistogramBins {
        HistogramBins {
            lo: self.lo,
            hi: self.hi,
            count: self.bins,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write PGM previews of strain and θ.
    pub pgm: bool,
    /// Gray-level range of the strain preview; defaults to the image range.
    pub strain_range: Option<[f64; 2]>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("rglue-out"),
            pgm: true,
            strain_range: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = &mut self.frames {
            fix(&mut f.pre);
            fix(&mut f.post);
            if let Some(t) = &mut f.truth_strain {
                fix(t);
            }
        }
        if let Some(p) = &mut self.eval.estimate {
            fix(p);
        }
        if let Some(p) = &mut self.eval.truth {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.phantom.is_some() && self.frames.is_some() {
            return Err(Failure::config("give either [phantom] or [frames], not both"));
        }
        if let Some(f) = &self.frames {
            let mut paths = vec![&f.pre, &f.post];
            paths.extend(f.truth_strain.as_ref());
            for p in paths {
                if !p.exists() {
                    return Err(Failure::config(format!("frame file {} does not exist", p.display())));
                }
            }
        }
        if let Some(p) = &self.eval.truth {
            if !p.exists() {
                return Err(Failure::config(format!("truth file {} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.phantom {
            p.spec(self.seed).validate().map_err(|e| Failure::config(e.to_string()))?;
        }
        self.solver.validate().map_err(|e| Failure::config(e.to_string()))?;
        Ok(())
    }
}
