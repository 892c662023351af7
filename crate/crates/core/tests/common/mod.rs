//! Reference implementations written against plain row-major vectors, kept
//! independent of the crate's own stencils so they can serve as oracles.
#![allow(dead_code)]

use rand::Rng;
use rglue_core::grid::DisplacementField;
use rglue_core::solver::SolverParams;
use rglue_core::{Grid, RFFrame};

#[derive(Clone, Debug)]
pub struct Plain {
    pub m: usize,
    pub n: usize,
    pub v: Vec<f64>,
}

impl Plain {
    pub fn from_grid(g: &Grid) -> Self {
        Self {
            m: g.rows(),
            n: g.cols(),
            v: g.as_slice().to_vec(),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.n + j]
    }

    /// Derivative along rows (`axis == 0`) or columns (`axis == 1`):
    /// one-sided at the two ends, centered elsewhere.
    pub fn deriv(&self, axis: usize) -> Plain {
        let mut out = vec![0.0; self.v.len()];
        for i in 0..self.m {
            for j in 0..self.n {
                let (pos, len) = if axis == 0 { (i, self.m) } else { (j, self.n) };
                let get = |p: usize| if axis == 0 { self.at(p, j) } else { self.at(i, p) };
                let (lo, hi) = (pos.saturating_sub(1), (pos + 1).min(len - 1));
                out[i * self.n + j] = (get(hi) - get(lo)) / (hi - lo) as f64;
            }
        }
        Plain { m: self.m, n: self.n, v: out }
    }

    /// Bilinear value at `(y, x)` after clamping into the frame, plus whether
    /// the clamp changed anything.
    pub fn interp(&self, y: f64, x: f64) -> (f64, bool) {
        let yc = y.max(0.0).min((self.m - 1) as f64);
        let xc = x.max(0.0).min((self.n - 1) as f64);
        let i0 = (yc as usize).min(self.m - 2);
        let j0 = (xc as usize).min(self.n - 2);
        let (ty, tx) = (yc - i0 as f64, xc - j0 as f64);
        let v = self.at(i0, j0) * (1.0 - ty) * (1.0 - tx)
            + self.at(i0 + 1, j0) * ty * (1.0 - tx)
            + self.at(i0, j0 + 1) * (1.0 - ty) * tx
            + self.at(i0 + 1, j0 + 1) * ty * tx;
        (v, yc != y || xc != x)
    }
}

/// Residuals and Jacobian rows of the three data terms at one sample, or
/// `None` when the warped position left the frame.
pub type SampleModel = Option<([f64; 3], [[f64; 2]; 3])>;

pub fn sample_models(i1: &Grid, i2: &Grid, d: &DisplacementField) -> Vec<SampleModel> {
    let f1 = Plain::from_grid(i1);
    let f2 = Plain::from_grid(i2);
    let (g1y, g1x) = (f1.deriv(0), f1.deriv(1));
    let (g2y, g2x) = (f2.deriv(0), f2.deriv(1));
    let (g2yy, g2yx) = (g2y.deriv(0), g2y.deriv(1));
    let (g2xy, g2xx) = (g2x.deriv(0), g2x.deriv(1));
    let mut out = Vec::with_capacity(f1.v.len());
    for i in 0..f1.m {
        for j in 0..f1.n {
            let y = i as f64 + d.axial[(i, j)];
            let x = j as f64 + d.lateral[(i, j)];
            let (w, flagged) = f2.interp(y, x);
            if flagged {
                out.push(None);
                continue;
            }
            let s = |p: &Plain| p.interp(y, x).0;
            let (wy, wx) = (s(&g2y), s(&g2x));
            out.push(Some((
                [f1.at(i, j) - w, g1y.at(i, j) - wy, g1x.at(i, j) - wx],
                [[wy, wx], [s(&g2yy), s(&g2yx)], [s(&g2xy), s(&g2xx)]],
            )));
        }
    }
    out
}

/// Sum over up and left neighbor pairs of the weighted squared differences.
pub fn regularizer(m: usize, n: usize, p: &SolverParams, d: &[f64]) -> f64 {
    let a = |i: usize, j: usize| d[2 * (i * n + j)];
    let l = |i: usize, j: usize| d[2 * (i * n + j) + 1];
    let mut r = 0.0;
    for i in 0..m {
        for j in 0..n {
            if i > 0 {
                r += p.alpha1 * (a(i, j) - a(i - 1, j)).powi(2) + p.beta1 * (l(i, j) - l(i - 1, j)).powi(2);
            }
            if j > 0 {
                r += p.alpha2 * (a(i, j) - a(i, j - 1)).powi(2) + p.beta2 * (l(i, j) - l(i, j - 1)).powi(2);
            }
        }
    }
    r
}

/// Quadratic model of the weighted cost at `d + step`.
pub fn model_cost(
    models: &[SampleModel],
    theta: &[f64],
    d: &[f64],
    step: &[f64],
    m: usize,
    n: usize,
    p: &SolverParams,
) -> f64 {
    let mut c = 0.0;
    for (k, model) in models.iter().enumerate() {
        let Some((r, v)) = model else { continue };
        let w = [theta[k], p.gamma * (1.0 - theta[k]), p.gamma * (1.0 - theta[k])];
        for t in 0..3 {
            let e = r[t] - v[t][0] * step[2 * k] - v[t][1] * step[2 * k + 1];
            c += w[t] * e * e;
        }
    }
    let moved: Vec<f64> = d.iter().zip(step).map(|(a, b)| a + b).collect();
    c + regularizer(m, n, p, &moved)
}

/// Central-difference gradient and Hessian of `f` at zero. Exact up to
/// rounding when `f` is quadratic.
pub fn fd_gradient_hessian(dim: usize, h: f64, f: impl Fn(&[f64]) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; dim];
    let mut eval = |pairs: &[(usize, f64)]| {
        for &(i, s) in pairs {
            x[i] += s;
        }
        let v = f(&x);
        for &(i, s) in pairs {
            x[i] -= s;
        }
        v
    };
    let mut grad = vec![0.0; dim];
    let mut hess = vec![0.0; dim * dim];
    for p in 0..dim {
        grad[p] = (eval(&[(p, h)]) - eval(&[(p, -h)])) / (2.0 * h);
        for q in p..dim {
            let v = (eval(&[(p, h), (q, h)]) - eval(&[(p, h), (q, -h)]) - eval(&[(p, -h), (q, h)])
                + eval(&[(p, -h), (q, -h)]))
                / (4.0 * h * h);
            hess[p * dim + q] = v;
            hess[q * dim + p] = v;
        }
    }
    (grad, hess)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn random_frame(rng: &mut impl Rng, m: usize, n: usize) -> RFFrame {
    RFFrame::new(Grid::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
}

pub fn random_displacement(rng: &mut impl Rng, m: usize, n: usize, span: f64) -> DisplacementField {
    DisplacementField::new(
        Grid::from_fn(m, n, |_, _| rng.gen_range(-span..span)),
        Grid::from_fn(m, n, |_, _| rng.gen_range(-span..span)),
    )
    .unwrap()
}

pub fn random_theta(rng: &mut impl Rng, m: usize, n: usize) -> Grid {
    Grid::from_fn(m, n, |_, _| rng.gen_range(0.01..0.99))
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
