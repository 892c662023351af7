//! Integer displacement initialization by dynamic programming.
//!
//! Each RF line is solved as a 1D shortest path over rows whose state is the
//! joint integer shift `(a, l)`. The unary cost is the absolute amplitude
//! mismatch plus a weak L1 pull toward the previous line's solution at the same
//! row; transitions between rows cost `w·(|Δa| + |Δl|)`. The min-convolution
//! with the L1 transition is evaluated by a two-pass distance transform per
//! axis, so each row costs O(states).

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::grid::{DisplacementField, Grid, RFFrame};


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DPParams {
    /// Axial search half-width in samples.
    pub axial_range: usize,
    /// Lateral search half-width in RF lines.
    pub lateral_range: usize,
    /// Penalty per unit change of displacement between adjacent rows.
    pub smoothness_weight: f64,
    /// Penalty per unit difference from the previous line's shift at the
    /// same row.
    pub line_coupling: f64,
}

impl DPParams {
    /// Axial ±⌈0.05·rows⌉, lateral ±2, row weight 2·mean|I₁|, line coupling
    /// 0.05·mean|I₁|. A weak line coupling keeps one unmatched edge line from
    /// dragging the rest of the frame along.
    pub fn default_for(i1: &Grid) -> Self {
        let mean_abs = i1.as_slice().iter().map(|v| v.abs()).sum::<f64>() / i1.len() as f64;
        Self {
            axial_range: (0.05 * i1.rows() as f64).ceil() as usize,
            lateral_range: 2,
            smoothness_weight: 2.0 * mean_abs,
            line_coupling: 0.05 * mean_abs,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("smoothness weight", self.smoothness_weight),
            ("line coupling", self.line_coupling),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Shift-state lattice `[-A, A] x [-L, L]`, laid out lateral-major:
/// `state = (a + A) * (2L + 1) + (l + L)`.
#[derive(Clone, Copy, Debug)]
struct States {
    axial_range: isize,
    lateral_range: isize,
    axial_len: usize,
    lateral_len: usize,
}

impl States {
    fn new(params: &DPParams) -> Self {
        Self {
            axial_range: params.axial_range as isize,
            lateral_range: params.lateral_range as isize,
            axial_len: 2 * params.axial_range + 1,
            lateral_len: 2 * params.lateral_range + 1,
        }
    }

    fn len(&self) -> usize {
        self.axial_len * self.lateral_len
    }

    #[inline]
    fn shift(&self, s: usize) -> (isize, isize) {
        let a = (s / self.lateral_len) as isize - self.axial_range;
        let l = (s % self.lateral_len) as isize - self.lateral_range;
        (a, l)
    }

    #[inline]
    fn index(&self, a: isize, l: isize) -> usize {
        (a + self.axial_range) as usize * self.lateral_len + (l + self.lateral_range) as usize
    }

    /// Tie-break order: smaller |a|+|l|, then smaller a, then smaller l.
    #[inline]
    fn key(&self, s: usize) -> (isize, isize, isize) {
        let (a, l) = self.shift(s);
        (a.abs() + l.abs(), a, l)
    }

    #[inline]
    fn better(&self, value: f64, s: usize, best_value: f64, best: usize) -> bool {
        value < best_value || (value == best_value && self.key(s) < self.key(best))
    }
}

#[inline]
fn sample_clamped(grid: &Grid, i: isize, j: isize) -> f64 {
    let i = i.clamp(0, grid.rows() as isize - 1) as usize;
    let j = j.clamp(0, grid.cols() as isize - 1) as usize;
    grid[(i, j)]
}

/// Unary cost of shift state `s` at `(i, j)`: data mismatch plus the
/// inter-line coupling to `prev` (the previous line's shift at this row).
fn unary(
    i1: &Grid,
    i2: &Grid,
    states: &States,
    coupling: f64,
    i: usize,
    j: usize,
    s: usize,
    prev: Option<(isize, isize)>,
) -> f64 {
    let (a, l) = states.shift(s);
    let data = (i1[(i, j)] - sample_clamped(i2, i as isize + a, j as isize + l)).abs();
    let pull = prev.map_or(0.0, |(pa, pl)| coupling * ((a - pa).abs() + (l - pl).abs()) as f64);
    data + pull
}

/// In-place L1 min-convolution along one axis of the state lattice, carrying
/// the argmin with the lattice tie-break order.
fn distance_transform_1d(
    states: &States,
    values: &mut [f64],
    args: &mut [usize],
    idx: &[usize],
    w: f64,
) {
    for k in 1..idx.len() {
        let (cur, prev) = (idx[k], idx[k - 1]);
        let cand = values[prev] + w;
        if states.better(cand, args[prev], values[cur], args[cur]) {
            values[cur] = cand;
            args[cur] = args[prev];
        }
    }
    for k in (0..idx.len() - 1).rev() {
        let (cur, next) = (idx[k], idx[k + 1]);
        let cand = values[next] + w;
        if states.better(cand, args[next], values[cur], args[cur]) {
            values[cur] = cand;
            args[cur] = args[next];
        }
    }
}

/// Integer displacement field by per-line dynamic programming with
/// inter-line coupling, processed from the first RF line to the last.
pub fn dp_displacement(i1: &RFFrame, i2: &RFFrame, params: &DPParams) -> Result<DisplacementField> {
    check_shape(i1.shape(), i2.shape())?;
    params.validate()?;
    let (m, n) = i1.shape();
    let states = States::new(params);
    let ns = states.len();
    let w = params.smoothness_weight;

    let axial_lines: Vec<Vec<usize>> = (0..states.lateral_len)
        .map(|li| (0..states.axial_len).map(|ai| ai * states.lateral_len + li).collect())
        .collect();
    let lateral_lines: Vec<Vec<usize>> = (0..states.axial_len)
        .map(|ai| (0..states.lateral_len).map(|li| ai * states.lateral_len + li).collect())
        .collect();

    let mut out = DisplacementField::zeros(m, n);
    let mut prev_line: Option<Vec<(isize, isize)>> = None;
    let mut cost = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut args = vec![0usize; ns];
    let mut back = vec![0usize; m * ns];

    for j in 0..n {
        let prev_at = |i: usize| prev_line.as_ref().map(|p| p[i]);
        for s in 0..ns {
            cost[s] = unary(i1, i2, &states, params.line_coupling, 0, j, s, prev_at(0));
        }
        for i in 1..m {
            next.copy_from_slice(&cost);
            for (s, a) in args.iter_mut().enumerate() {
                *a = s;
            }
            for line in &axial_lines {
                distance_transform_1d(&states, &mut next, &mut args, line, w);
            }
            for line in &lateral_lines {
                distance_transform_1d(&states, &mut next, &mut args, line, w);
            }
            let row_back = &mut back[i * ns..(i + 1) * ns];
            for s in 0..ns {
                row_back[s] = args[s];
                cost[s] = next[s] + unary(i1, i2, &states, params.line_coupling, i, j, s, prev_at(i));
            }
        }

        let mut best = 0;
        for s in 1..ns {
            if states.better(cost[s], s, cost[best], best) {
                best = s;
            }
        }
        let mut path = vec![(0isize, 0isize); m];
        let mut s = best;
        for i in (0..m).rev() {
            path[i] = states.shift(s);
            if i > 0 {
                s = back[i * ns + s];
            }
        }
        for (i, &(a, l)) in path.iter().enumerate() {
            out.axial[(i, j)] = a as f64;
            out.lateral[(i, j)] = l as f64;
        }
        prev_line = Some(path);
    }
    Ok(out)
}

/// Objective minimized for line `j` given the path of line `j-1`: summed
/// unary costs plus row-to-row transition penalties.
pub fn line_cost(
    i1: &RFFrame,
    i2: &RFFrame,
    params: &DPParams,
    j: usize,
    path: &[(isize, isize)],
    prev: Option<&[(isize, isize)]>,
) -> f64 {
    let states = States::new(params);
    let w = params.smoothness_weight;
    let mut total = 0.0;
    for (i, &(a, l)) in path.iter().enumerate() {
        let s = states.index(a, l);
        total += unary(i1, i2, &states, params.line_coupling, i, j, s, prev.map(|p| p[i]));
        if i > 0 {
            let (pa, pl) = path[i - 1];
            total += w * ((a - pa).abs() + (l - pl).abs()) as f64;
        }
    }
    total
}
