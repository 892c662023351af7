//! Grid types shared by every stage of the pipeline.
//!
//! Index convention: `i` is the axial (row, depth) index and `j` the lateral
//! (column, RF line) index. Storage is row-major.

use std::ops::{Deref, Index, IndexMut};

use crate::error::{check_shape, Error, Result};

/// Dense row-major grid of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidFrame(format!(
                "grid must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidFrame(format!(
                "expected {} samples for a {rows}x{cols} grid, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid must be non-empty");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid must be non-empty");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Grid {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Grid {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// One RF frame: `rows` axial samples by `cols` RF lines.
///
/// At least 2×2 (gradients need a neighbor along each axis) with finite
/// samples throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct RFFrame(Grid);

impl RFFrame {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.rows() < 2 || grid.cols() < 2 {
            return Err(Error::InvalidFrame(format!(
                "frame must be at least 2x2, got {}x{}",
                grid.rows(),
                grid.cols()
            )));
        }
        if !grid.all_finite() {
            return Err(Error::InvalidFrame("frame contains non-finite samples".into()));
        }
        Ok(Self(grid))
    }

    pub fn from_vec(rows: usize, cols: usize, samples: Vec<f64>) -> Result<Self> {
        Self::new(Grid::new(rows, cols, samples)?)
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }
}

impl Deref for RFFrame {
    type Target = Grid;

    fn deref(&self) -> &Grid {
        &self.0
    }
}

/// Axial (∂/∂i) and lateral (∂/∂j) derivatives of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientPair {
    pub axial: Grid,
    pub lateral: Grid,
}

/// Discrete gradient: central differences in the interior, forward/backward
/// differences on the first/last row and column.
///
/// Panics if the grid has fewer than two rows or columns.
pub fn gradients(grid: &Grid) -> GradientPair {
    let (m, n) = grid.shape();
    assert!(m >= 2 && n >= 2, "gradients need at least a 2x2 grid");
    let mut axial = Grid::zeros(m, n);
    let mut lateral = Grid::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            axial[(i, j)] = if i == 0 {
                grid[(1, j)] - grid[(0, j)]
            } else if i == m - 1 {
                grid[(m - 1, j)] - grid[(m - 2, j)]
            } else {
                (grid[(i + 1, j)] - grid[(i - 1, j)]) / 2.0
            };
            lateral[(i, j)] = if j == 0 {
                grid[(i, 1)] - grid[(i, 0)]
            } else if j == n - 1 {
                grid[(i, n - 1)] - grid[(i, n - 2)]
            } else {
                (grid[(i, j + 1)] - grid[(i, j - 1)]) / 2.0
            };
        }
    }
    GradientPair { axial, lateral }
}

/// Bilinear interpolation at the sub-sample position `(y, x)`.
///
/// Coordinates are clamped to `[0, rows-1] x [0, cols-1]` first; the returned
/// flag is `true` when clamping moved the position. Exact on grid nodes.
pub fn sample_bilinear(grid: &Grid, y: f64, x: f64) -> (f64, bool) {
    let (m, n) = grid.shape();
    let ymax = (m - 1) as f64;
    let xmax = (n - 1) as f64;
    let yc = y.clamp(0.0, ymax);
    let xc = x.clamp(0.0, xmax);
    let clamped = yc != y || xc != x;

    let (i0, fy) = cell(yc, m);
    let (j0, fx) = cell(xc, n);
    let i1 = (i0 + 1).min(m - 1);
    let j1 = (j0 + 1).min(n - 1);

    let top = (1.0 - fx) * grid[(i0, j0)] + fx * grid[(i0, j1)];
    let bottom = (1.0 - fx) * grid[(i1, j0)] + fx * grid[(i1, j1)];
    ((1.0 - fy) * top + fy * bottom, clamped)
}

#[inline]
fn cell(coord: f64, len: usize) -> (usize, f64) {
    if len == 1 {
        return (0, 0.0);
    }
    let base = (coord.floor() as usize).min(len - 2);
    (base, coord - base as f64)
}

/// Per-sample axial and lateral displacement, in samples.
///
/// The interleaved vector view is `[a(0,0), l(0,0), a(0,1), l(0,1), ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    pub axial: Grid,
    pub lateral: Grid,
}

impl DisplacementField {
    pub fn new(axial: Grid, lateral: Grid) -> Result<Self> {
        check_shape(axial.shape(), lateral.shape())?;
        Ok(Self { axial, lateral })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            axial: Grid::zeros(rows, cols),
            lateral: Grid::zeros(rows, cols),
        }
    }

    pub fn uniform(rows: usize, cols: usize, axial: f64, lateral: f64) -> Self {
        Self {
            axial: Grid::filled(rows, cols, axial),
            lateral: Grid::filled(rows, cols, lateral),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.axial.shape()
    }

    pub fn to_interleaved(&self) -> Vec<f64> {
        self.axial
            .as_slice()
            .iter()
            .zip(self.lateral.as_slice())
            .flat_map(|(&a, &l)| [a, l])
            .collect()
    }

    pub fn from_interleaved(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != 2 * rows * cols {
            return Err(Error::InvalidParameter(format!(
                "interleaved displacement needs {} values, got {}",
                2 * rows * cols,
                values.len()
            )));
        }
        let axial = values.iter().step_by(2).copied().collect();
        let lateral = values.iter().skip(1).step_by(2).copied().collect();
        Ok(Self {
            axial: Grid::new(rows, cols, axial)?,
            lateral: Grid::new(rows, cols, lateral)?,
        })
    }

    /// `d <- d + delta` with `delta` in interleaved layout.
    pub fn add_interleaved(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), 2 * self.axial.len());
        let axial = self.axial.as_mut_slice();
        for (k, a) in axial.iter_mut().enumerate() {
            *a += delta[2 * k];
        }
        let lateral = self.lateral.as_mut_slice();
        for (k, l) in lateral.iter_mut().enumerate() {
            *l += delta[2 * k + 1];
        }
    }
}

/// Derivatives of the post-deformation frame, precomputed on the integer grid.
#[derive(Clone, Debug)]
pub struct FrameDerivatives {
    pub frame: Grid,
    pub grads: GradientPair,
    /// Gradient of the axial derivative (∇I₂,y differentiated along a and l).
    pub grad_of_axial: GradientPair,
    /// Gradient of the lateral derivative (∇I₂,x differentiated along a and l).
    pub grad_of_lateral: GradientPair,
}

impl FrameDerivatives {
    pub fn new(frame: &RFFrame) -> Self {
        let grads = gradients(frame);
        let grad_of_axial = gradients(&grads.axial);
        let grad_of_lateral = gradients(&grads.lateral);
        Self {
            frame: frame.grid().clone(),
            grads,
            grad_of_axial,
            grad_of_lateral,
        }
    }

    pub fn warp(&self, disp: &DisplacementField) -> Result<WarpedQuantities> {
        warped_quantities(
            &self.frame,
            &self.grads,
            [&self.grad_of_axial, &self.grad_of_lateral],
            disp,
        )
    }
}

/// One sample of [`WarpedQuantities`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpedSample {
    pub i2: f64,
    pub i2_a: f64,
    pub i2_l: f64,
    pub grad_y: f64,
    pub grad_x: f64,
    pub grad_y_a: f64,
    pub grad_y_l: f64,
    pub grad_x_a: f64,
    pub grad_x_l: f64,
    pub clamped: bool,
}

/// The post-deformation frame and its derivatives sampled at the warped
/// positions `(i + a(i,j), j + l(i,j))`, stored column-wise per quantity.
///
/// `i2_a`/`grad_y` and `i2_l`/`grad_x` come from the same discrete gradient
/// grids, so each pair is equal sample by sample.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedQuantities {
    pub rows: usize,
    pub cols: usize,
    pub i2: Vec<f64>,
    pub i2_a: Vec<f64>,
    pub i2_l: Vec<f64>,
    pub grad_y: Vec<f64>,
    pub grad_x: Vec<f64>,
    pub grad_y_a: Vec<f64>,
    pub grad_y_l: Vec<f64>,
    pub grad_x_a: Vec<f64>,
    pub grad_x_l: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl WarpedQuantities {
    pub fn sample(&self, k: usize) -> WarpedSample {
        WarpedSample {
            i2: self.i2[k],
            i2_a: self.i2_a[k],
            i2_l: self.i2_l[k],
            grad_y: self.grad_y[k],
            grad_x: self.grad_x[k],
            grad_y_a: self.grad_y_a[k],
            grad_y_l: self.grad_y_l[k],
            grad_x_a: self.grad_x_a[k],
            grad_x_l: self.grad_x_l[k],
            clamped: self.clamped[k],
        }
    }

    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

/// Samples `I₂`, its gradient and the gradients of its gradient components
/// at `(i + a, j + l)` for every sample of `disp`.
pub fn warped_quantities(
    i2: &Grid,
    grads2: &GradientPair,
    gradgrads2: [&GradientPair; 2],
    disp: &DisplacementField,
) -> Result<WarpedQuantities> {
    let shape = i2.shape();
    check_shape(shape, disp.shape())?;
    check_shape(shape, grads2.axial.shape())?;
    check_shape(shape, grads2.lateral.shape())?;
    for g in gradgrads2 {
        check_shape(shape, g.axial.shape())?;
        check_shape(shape, g.lateral.shape())?;
    }

    let (m, n) = shape;
    let len = m * n;
    let mut out = WarpedQuantities {
        rows: m,
        cols: n,
        i2: Vec::with_capacity(len),
        i2_a: Vec::with_capacity(len),
        i2_l: Vec::with_capacity(len),
        grad_y: Vec::with_capacity(len),
        grad_x: Vec::with_capacity(len),
        grad_y_a: Vec::with_capacity(len),
        grad_y_l: Vec::with_capacity(len),
        grad_x_a: Vec::with_capacity(len),
        grad_x_l: Vec::with_capacity(len),
        clamped: Vec::with_capacity(len),
    };
    let [gy, gx] = gradgrads2;
    for i in 0..m {
        for j in 0..n {
            let y = i as f64 + disp.axial[(i, j)];
            let x = j as f64 + disp.lateral[(i, j)];
            let (value, clamped) = sample_bilinear(i2, y, x);
            let da = sample_bilinear(&grads2.axial, y, x).0;
            let dl = sample_bilinear(&grads2.lateral, y, x).0;
            out.i2.push(value);
            out.i2_a.push(da);
            out.i2_l.push(dl);
            out.grad_y.push(da);
            out.grad_x.push(dl);
            out.grad_y_a.push(sample_bilinear(&gy.axial, y, x).0);
            out.grad_y_l.push(sample_bilinear(&gy.lateral, y, x).0);
            out.grad_x_a.push(sample_bilinear(&gx.axial, y, x).0);
            out.grad_x_l.push(sample_bilinear(&gx.lateral, y, x).0);
            out.clamped.push(clamped);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rows: usize, cols: usize, seed: u64) -> Grid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn frame_rejects_degenerate_shapes() {
        assert!(RFFrame::from_vec(1, 4, vec![0.0; 4]).is_err());
        assert!(RFFrame::from_vec(4, 1, vec![0.0; 4]).is_err());
        assert!(RFFrame::from_vec(2, 2, vec![0.0, 1.0, f64::NAN, 2.0]).is_err());
        assert!(RFFrame::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(RFFrame::from_vec(2, 2, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn gradients_of_constant_are_zero() {
        let g = gradients(&Grid::filled(6, 5, 5.0));
        assert!(g.axial.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.lateral.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_of_axial_ramp() {
        let g = gradients(&Grid::from_fn(7, 4, |i, _| 2.0 * i as f64));
        for i in 0..7 {
            for j in 0..4 {
                assert_eq!(g.axial[(i, j)], 2.0);
                assert_eq!(g.lateral[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn gradients_match_direct_stencil() {
        let f = random_grid(5, 5, 11);
        let g = gradients(&f);
        let at = |i: isize, j: isize| f[(i as usize, j as usize)];
        for i in 0..5isize {
            for j in 0..5isize {
                let ay = match i {
                    0 => at(1, j) - at(0, j),
                    4 => at(4, j) - at(3, j),
                    _ => 0.5 * (at(i + 1, j) - at(i - 1, j)),
                };
                let ax = match j {
                    0 => at(i, 1) - at(i, 0),
                    4 => at(i, 4) - at(i, 3),
                    _ => 0.5 * (at(i, j + 1) - at(i, j - 1)),
                };
                assert!((g.axial[(i as usize, j as usize)] - ay).abs() < 1e-15);
                assert!((g.lateral[(i as usize, j as usize)] - ax).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bilinear_is_exact_on_nodes() {
        let f = random_grid(6, 7, 3);
        assert_eq!(sample_bilinear(&f, 3.0, 4.0), (f[(3, 4)], false));
        assert_eq!(sample_bilinear(&f, 5.0, 6.0), (f[(5, 6)], false));
        assert_eq!(sample_bilinear(&f, 0.0, 0.0), (f[(0, 0)], false));
    }

    #[test]
    fn bilinear_midpoint() {
        let mut f = Grid::zeros(3, 3);
        f[(1, 1)] = 2.0;
        f[(2, 1)] = 6.0;
        assert_eq!(sample_bilinear(&f, 1.5, 1.0).0, 4.0);
        f[(1, 2)] = 6.0;
        assert_eq!(sample_bilinear(&f, 1.0, 1.5).0, 4.0);
    }

    #[test]
    fn bilinear_clamps_and_flags() {
        let f = random_grid(4, 4, 5);
        assert_eq!(sample_bilinear(&f, -1.5, 0.0), (f[(0, 0)], true));
        assert_eq!(sample_bilinear(&f, 3.0, 9.0), (f[(3, 3)], true));
        assert!(!sample_bilinear(&f, 3.0, 3.0).1);
    }

    #[test]
    fn bilinear_is_exact_on_affine_grids() {
        let f = Grid::from_fn(5, 6, |i, j| 0.5 + 1.25 * i as f64 - 0.75 * j as f64);
        for &(y, x) in &[(0.3, 0.7), (2.25, 4.9), (3.99, 0.01), (1.5, 2.5)] {
            let expected = 0.5 + 1.25 * y - 0.75 * x;
            assert!((sample_bilinear(&f, y, x).0 - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn interleaved_layout() {
        let d = DisplacementField::new(
            Grid::new(1, 2, vec![1.0, 2.0]).unwrap(),
            Grid::new(1, 2, vec![10.0, 20.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(d.to_interleaved(), vec![1.0, 10.0, 2.0, 20.0]);
        let back = DisplacementField::from_interleaved(1, 2, &d.to_interleaved()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn zero_warp_is_identity() {
        let frame = RFFrame::new(random_grid(6, 5, 9)).unwrap();
        let der = FrameDerivatives::new(&frame);
        let w = der.warp(&DisplacementField::zeros(6, 5)).unwrap();
        assert_eq!(w.i2, frame.as_slice());
        assert_eq!(w.i2_a, der.grads.axial.as_slice());
        assert_eq!(w.i2_l, der.grads.lateral.as_slice());
        assert_eq!(w.grad_y, der.grads.axial.as_slice());
        assert_eq!(w.grad_x, der.grads.lateral.as_slice());
        assert_eq!(w.grad_y_a, der.grad_of_axial.axial.as_slice());
        assert_eq!(w.grad_y_l, der.grad_of_axial.lateral.as_slice());
        assert_eq!(w.grad_x_a, der.grad_of_lateral.axial.as_slice());
        assert_eq!(w.grad_x_l, der.grad_of_lateral.lateral.as_slice());
        assert_eq!(w.clamped_count(), 0);
    }

    #[test]
    fn integer_shift_samples_nodes() {
        let frame = RFFrame::new(random_grid(10, 4, 21)).unwrap();
        let der = FrameDerivatives::new(&frame);
        let w = der.warp(&DisplacementField::uniform(10, 4, 3.0, 0.0)).unwrap();
        for i in 0..7 {
            for j in 0..4 {
                let k = i * 4 + j;
                assert_eq!(w.i2[k], frame[(i + 3, j)]);
                assert!(!w.clamped[k]);
            }
        }
        for k in 7 * 4..40 {
            assert!(w.clamped[k]);
        }
    }

    #[test]
    fn random_warp_matches_interpolation_oracle() {
        let frame = RFFrame::new(random_grid(6, 6, 33)).unwrap();
        let der = FrameDerivatives::new(&frame);
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let disp = DisplacementField::new(
            Grid::from_fn(6, 6, |_, _| rng.gen_range(-0.9..0.9)),
            Grid::from_fn(6, 6, |_, _| rng.gen_range(-0.9..0.9)),
        )
        .unwrap();
        let w = der.warp(&disp).unwrap();
        // Direct four-neighbor weighting, written independently of `cell`.
        let oracle = |g: &Grid, y: f64, x: f64| {
            let y = y.clamp(0.0, 5.0);
            let x = x.clamp(0.0, 5.0);
            let mut acc = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    let wy = (1.0 - (y - i as f64).abs()).max(0.0);
                    let wx = (1.0 - (x - j as f64).abs()).max(0.0);
                    acc += wy * wx * g[(i, j)];
                }
            }
            acc
        };
        for i in 0..6 {
            for j in 0..6 {
                let k = i * 6 + j;
                let y = i as f64 + disp.axial[(i, j)];
                let x = j as f64 + disp.lateral[(i, j)];
                assert!((w.i2[k] - oracle(&frame, y, x)).abs() < 1e-12);
                assert!((w.i2_a[k] - oracle(&der.grads.axial, y, x)).abs() < 1e-12);
                assert!((w.grad_x_l[k] - oracle(&der.grad_of_lateral.lateral, y, x)).abs() < 1e-12);
                assert!((w.grad_y_l[k] - oracle(&der.grad_of_axial.lateral, y, x)).abs() < 1e-12);
                let out = !(0.0..=5.0).contains(&y) || !(0.0..=5.0).contains(&x);
                assert_eq!(w.clamped[k], out);
            }
        }
    }

    #[test]
    fn warp_rejects_shape_mismatch() {
        let frame = RFFrame::new(random_grid(6, 5, 1)).unwrap();
        let der = FrameDerivatives::new(&frame);
        assert!(matches!(
            der.warp(&DisplacementField::zeros(5, 5)),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
