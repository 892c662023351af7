//! The four subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use rglue_core::dp::dp_displacement;
use rglue_core::io::{load_grid, save_csv, save_pgm, save_rff};
use rglue_core::metrics::{cnr, cnr_histogram, rmse, snr, Window};
use rglue_core::phantom::{
    add_gaussian_noise, inject_additive_line_outliers, inject_multiplicative_outlier, layer_strains,
    synthesize_pair,
};
use rglue_core::pipeline::{displacement_strain, estimate, EstimateParams};
use rglue_core::{Error, Grid, RFFrame};
use serde::Serialize;

use crate::config::{CorruptionConfig, Method, PhantomConfig, RunConfig};
use crate::failure::{Failure, EXIT_STALLED};
use crate::report::{self, Record};

/// Noise on the two frames is drawn from seeds derived from the run seed.
const PRE_NOISE_STREAM: u64 = 1;
const POST_NOISE_STREAM: u64 = 2;

pub struct Frames {
    pub pre: RFFrame,
    pub post: RFFrame,
    pub truth_strain: Option<Grid>,
}

fn write_err(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| Failure::from(e).context(format!("writing {}", path.display()))
}

fn save_csv_at(dir: &Path, name: &str, grid: &Grid) -> Result<(), Failure> {
    let path = dir.join(name);
    save_csv(&path, grid).map_err(write_err(&path))
}

fn corrupt(pre: RFFrame, post: RFFrame, c: &CorruptionConfig, seed: u64) -> Result<(RFFrame, RFFrame), Failure> {
    let (mut pre, mut post) = (pre, post);
    if let Some(psnr) = c.noise_psnr_db {
        pre = add_gaussian_noise(&pre, psnr, seed.wrapping_add(PRE_NOISE_STREAM))?;
        post = add_gaussian_noise(&post, psnr, seed.wrapping_add(POST_NOISE_STREAM))?;
    }
    if let Some(o) = &c.outlier {
        post = inject_multiplicative_outlier(&post, o.region(), o.factor)?;
    }
    if let Some(l) = &c.lines {
        post = inject_additive_line_outliers(&post, &l.columns, l.fraction)?;
    }
    Ok((pre, post))
}

fn load_frame(path: &Path) -> Result<RFFrame, Failure> {
    let grid = load_grid(path).map_err(|e| Failure::from(e).context(format!("reading {}", path.display())))?;
    Ok(RFFrame::new(grid)?)
}

/// Frames from the phantom section (synthesized and corrupted) or from files.
pub fn frames(cfg: &RunConfig) -> Result<Frames, Failure> {
    if let Some(p) = &cfg.phantom {
        let (pre, post, truth) = synthesize_pair(&p.spec(cfg.seed))?;
        let (pre, post) = corrupt(pre, post, &cfg.corruption, cfg.seed)?;
        return Ok(Frames {
            pre,
            post,
            truth_strain: Some(truth.axial_strain),
        });
    }
    let Some(f) = &cfg.frames else {
        return Err(Failure::config("config needs a [phantom] or a [frames] section"));
    };
    let (pre, post) = corrupt(load_frame(&f.pre)?, load_frame(&f.post)?, &cfg.corruption, cfg.seed)?;
    let truth_strain = match &f.truth_strain {
        Some(p) => Some(load_grid(p).map_err(|e| Failure::from(e).context(format!("reading {}", p.display())))?),
        None => None,
    };
    Ok(Frames {
        pre,
        post,
        truth_strain,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    layer_strains: Vec<f64>,
    files: ManifestFiles,
    phantom: &'a PhantomConfig,
    corruption: &'a CorruptionConfig,
}

#[derive(Serialize)]
struct ManifestFiles {
    pre: &'static str,
    post: &'static str,
    truth_axial: &'static str,
    truth_lateral: &'static str,
    truth_strain: &'static str,
}

pub fn synth(cfg: &RunConfig) -> Result<(), Failure> {
    let Some(phantom) = &cfg.phantom else {
        return Err(Failure::config("synth needs a [phantom] section"));
    };
    let spec = phantom.spec(cfg.seed);
    let (pre, post, truth) = synthesize_pair(&spec)?;
    let (pre, post) = corrupt(pre, post, &cfg.corruption, cfg.seed)?;

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("creating {}: {e}", dir.display())))?;
    let files = ManifestFiles {
        pre: "pre.rff",
        post: "post.rff",
        truth_axial: "truth_axial.csv",
        truth_lateral: "truth_lateral.csv",
        truth_strain: "truth_strain.csv",
    };
    for (name, grid) in [(files.pre, pre.grid()), (files.post, post.grid())] {
        let path = dir.join(name);
        save_rff(&path, grid).map_err(write_err(&path))?;
    }
    save_csv_at(dir, files.truth_axial, &truth.displacement.axial)?;
    save_csv_at(dir, files.truth_lateral, &truth.displacement.lateral)?;
    save_csv_at(dir, files.truth_strain, &truth.axial_strain)?;

    let manifest = Manifest {
        seed: cfg.seed,
        layer_strains: layer_strains(&spec)?,
        files,
        phantom,
        corruption: &cfg.corruption,
    };
    let text = toml::to_string(&manifest).map_err(|e| Failure::other(format!("serializing manifest: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

/// Whether CG gave up somewhere; outputs are written either way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Stalled,
}

impl Outcome {
    pub fn into_result(self) -> Result<(), Failure> {
        match self {
            Outcome::Done => Ok(()),
            Outcome::Stalled => Err(Failure {
                code: EXIT_STALLED,
                message: "solver did not converge; partial outputs were written".into(),
            }),
        }
    }
}

fn range(grid: &Grid) -> (f64, f64) {
    let lo = grid.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.as_slice().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

pub fn estimate_into(cfg: &RunConfig, method: Method, dir: &Path) -> Result<Outcome, Failure> {
    let frames = frames(cfg)?;
    let dp = cfg.init.params(&frames.pre);
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("creating {}: {e}", dir.display())))?;

    let (initial, displacement, theta, diagnostics, stall) = if method == Method::Dp {
        let d = dp_displacement(&frames.pre, &frames.post, &dp)?;
        (d.clone(), d, None, Vec::new(), None)
    } else {
        let mut solver = cfg.solver.clone();
        solver.glue_mode = method == Method::Glue;
        let params = EstimateParams {
            dp: Some(dp),
            solver,
            strain_window: cfg.strain.window,
            strain_axis: cfg.strain.axis,
        };
        let est = estimate(&frames.pre, &frames.post, &params)?;
        let r = est.refinement;
        (
            est.initial,
            r.displacement,
            Some(r.weights.theta),
            r.diagnostics,
            est.stall.map(|s| (s.iteration, s.residual)),
        )
    };
    let strain = displacement_strain(&displacement, cfg.strain.window, cfg.strain.axis)?;

    save_csv_at(dir, "dp_axial.csv", &initial.axial)?;
    save_csv_at(dir, "dp_lateral.csv", &initial.lateral)?;
    save_csv_at(dir, "displacement_axial.csv", &displacement.axial)?;
    save_csv_at(dir, "displacement_lateral.csv", &displacement.lateral)?;
    save_csv_at(dir, "strain.csv", &strain)?;
    if let Some(t) = &frames.truth_strain {
        save_csv_at(dir, "truth_strain.csv", t)?;
    }
    if cfg.output.pgm {
        let (lo, hi) = cfg.output.strain_range.map_or_else(|| range(&strain), |r| (r[0], r[1]));
        let path = dir.join("strain.pgm");
        save_pgm(&path, &strain, lo, hi).map_err(write_err(&path))?;
    }
    if let Some(theta) = &theta {
        save_csv_at(dir, "theta.csv", theta)?;
        if cfg.output.pgm {
            let path = dir.join("theta.pgm");
            save_pgm(&path, theta, 0.0, 1.0).map_err(write_err(&path))?;
        }
    }
    fs::write(dir.join("diagnostics.txt"), report::diagnostics_text(method, &diagnostics, stall))?;

    if let Some((iteration, residual)) = stall {
        eprintln!("warning: CG stalled at outer iteration {iteration} (relative residual {residual:e})");
        return Ok(Outcome::Stalled);
    }
    Ok(Outcome::Done)
}

fn defined(r: rglue_core::Result<f64>) -> Result<Option<f64>, Failure> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn truth_path(cfg: &RunConfig, dir: &Path) -> Option<PathBuf> {
    if let Some(p) = &cfg.eval.truth {
        return Some(p.clone());
    }
    if let Some(p) = cfg.frames.as_ref().and_then(|f| f.truth_strain.clone()) {
        return Some(p);
    }
    let p = dir.join("truth_strain.csv");
    p.exists().then_some(p)
}

/// Scores the strain image in `dir` (or the configured one) and writes
/// `metrics.txt` and, when configured, `cnr_histogram.txt` next to it.
pub fn eval_in(cfg: &RunConfig, dir: &Path, estimate_override: Option<&Path>) -> Result<Vec<Record>, Failure> {
    let est_path = estimate_override
        .map(Path::to_path_buf)
        .or_else(|| cfg.eval.estimate.clone())
        .unwrap_or_else(|| dir.join("strain.csv"));
    let read = |p: &Path| load_grid(p).map_err(|e| Failure::from(e).context(format!("reading {}", p.display())));
    let est = read(&est_path)?;
    fs::create_dir_all(dir)?;

    let mut records = Vec::new();
    if let Some(p) = truth_path(cfg, dir) {
        let truth = read(&p)?;
        let full = Window::new(0, est.rows() - 1, 0, est.cols() - 1);
        records.push(Record {
            metric: "rmse",
            value: Some(rmse(&est, &truth).map_err(|e| Failure::other(e.to_string()))?),
            place: format!("window={}", report::window(&full)),
        });
    }
    for w in &cfg.eval.snr {
        records.push(Record {
            metric: "snr",
            value: defined(snr(&est, w))?,
            place: format!("window={}", report::window(w)),
        });
    }
    for pair in &cfg.eval.cnr {
        records.push(Record {
            metric: "cnr",
            value: defined(cnr(&est, &pair.target, &pair.background))?,
            place: format!(
                "target={} background={}",
                report::window(&pair.target),
                report::window(&pair.background)
            ),
        });
    }
    if let Some(h) = &cfg.eval.histogram {
        let hist = cnr_histogram(&est, &h.targets, &h.backgrounds, h.bins())?;
        records.push(Record {
            metric: "cnr_mean",
            value: hist.mean,
            place: format!("targets={} backgrounds={}", h.targets.len(), h.backgrounds.len()),
        });
        let text = report::histogram_text(&hist, &est, &h.targets, &h.backgrounds)?;
        fs::write(dir.join("cnr_histogram.txt"), text)?;
    }
    fs::write(dir.join("metrics.txt"), report::metrics_text(&records))?;
    Ok(records)
}

pub fn compare(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let root = &cfg.output.dir;
    let mut outcome = Outcome::Done;
    let mut runs = Vec::new();
    for method in [Method::Glue, Method::Rglue] {
        let dir = root.join(report::method_name(method));
        if estimate_into(cfg, method, &dir)? == Outcome::Stalled {
            outcome = Outcome::Stalled;
        }
        runs.push(eval_in(cfg, &dir, Some(&dir.join("strain.csv")))?);
    }
    fs::write(root.join("compare.txt"), report::compare_text(&runs[0], &runs[1]))?;
    Ok(outcome)
}
