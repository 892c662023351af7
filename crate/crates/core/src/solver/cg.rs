use crate::error::{Error, Result};

use super::assemble::LinearSystem;
use super::SolverParams;

#[derive(Clone, Debug, PartialEq)]
pub struct CgSolution {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// True relative residual `‖b − A x‖ / ‖b‖` of the returned solution.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_relative_residual(system: &LinearSystem, x: &[f64], rhs_norm: f64) -> f64 {
    let ax = system.matrix.mul_vec(x);
    let r: Vec<f64> = system.rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
    norm(&r) / rhs_norm
}

/// Jacobi-preconditioned conjugate gradient from a zero initial guess.
///
/// Stops once the relative residual drops to `params.cg_tolerance`. Hitting
/// `params.cg_max_iterations` first yields [`Error::NotConverged`].
pub fn solve_sparse(system: &LinearSystem, params: &SolverParams) -> Result<CgSolution> {
    let (x, outcome) = pcg(system, params.cg_tolerance, params.cg_max_iterations)?;
    match outcome {
        Outcome::Converged { iterations, residual } => Ok(CgSolution {
            solution: x,
            iterations,
            relative_residual: residual,
        }),
        Outcome::Stalled { iterations, residual } => Err(Error::NotConverged { iterations, residual }),
    }
}

pub(crate) enum Outcome {
    Converged { iterations: usize, residual: f64 },
    Stalled { iterations: usize, residual: f64 },
}

/// PCG returning the iterate even when the iteration cap is hit.
pub(crate) fn pcg(system: &LinearSystem, tolerance: f64, max_iterations: usize) -> Result<(Vec<f64>, Outcome)> {
    let a = &system.matrix;
    let b = &system.rhs;
    let n = b.len();
    assert_eq!(a.dim(), n, "matrix and right-hand side disagree in size");
    if !a.all_finite() || !b.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteSystem);
    }

    let rhs_norm = norm(b);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok((x, Outcome::Converged { iterations: 0, residual: 0.0 }));
    }

    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    for iteration in 1..=max_iterations {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // Breakdown: the operator is not positive definite along p.
            let residual = true_relative_residual(system, &x, rhs_norm);
            return Ok((x, Outcome::Stalled { iterations: iteration, residual }));
        }
        let step = rz / pap;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        if norm(&r) / rhs_norm <= tolerance {
            let residual = true_relative_residual(system, &x, rhs_norm);
            if residual <= tolerance {
                return Ok((x, Outcome::Converged { iterations: iteration, residual }));
            }
            // Recursive residual drifted; restart from the true residual.
            let ax = a.mul_vec(&x);
            for k in 0..n {
                r[k] = b[k] - ax[k];
            }
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    let residual = true_relative_residual(system, &x, rhs_norm);
    Ok((
        x,
        Outcome::Stalled {
            iterations: max_iterations,
            residual,
        },
    ))
}

/// Largest system handled by [`solve_dense`].
pub const DENSE_MAX_DIM: usize = 1024;

/// Dense Cholesky solve for small systems.
pub fn solve_dense(system: &LinearSystem) -> Result<Vec<f64>> {
    let n = system.rhs.len();
    if n > DENSE_MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "dense solve limited to {DENSE_MAX_DIM} unknowns, got {n}"
        )));
    }
    if !system.matrix.all_finite() || !system.rhs.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteSystem);
    }
    let mut l = system.matrix.to_dense();
    for j in 0..n {
        let mut diag = l[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) {
            return Err(Error::InvalidParameter(
                "matrix is not positive definite".into(),
            ));
        }
        let diag = diag.sqrt();
        l[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = l[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / diag;
        }
    }
    let mut y = system.rhs.clone();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::CsrMatrix;

    fn system(triplets: &[(usize, usize, f64)], rhs: Vec<f64>) -> LinearSystem {
        LinearSystem {
            matrix: CsrMatrix::from_triplets(rhs.len(), triplets),
            rhs,
        }
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let s = system(&[(0, 0, 2.0), (1, 1, 3.0)], vec![0.0, 0.0]);
        let sol = solve_sparse(&s, &SolverParams::default()).unwrap();
        assert_eq!(sol.solution, vec![0.0, 0.0]);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn diagonal_system() {
        let s = system(&[(0, 0, 2.0), (1, 1, 4.0), (2, 2, 0.5)], vec![1.0, -2.0, 3.0]);
        let sol = solve_sparse(&s, &SolverParams::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        for (x, e) in sol.solution.iter().zip([0.5, -0.5, 6.0]) {
            assert!((x - e).abs() < 1e-14);
        }
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let n = 50;
        let mut t = Vec::new();
        for k in 0..n {
            t.push((k, k, 2.1));
            if k + 1 < n {
                t.push((k, k + 1, -1.0));
                t.push((k + 1, k, -1.0));
            }
        }
        let rhs: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).sin()).collect();
        let s = system(&t, rhs);
        let params = SolverParams {
            cg_tolerance: 1e-13,
            ..SolverParams::default()
        };
        let cg = solve_sparse(&s, &params).unwrap();
        let dense = solve_dense(&s).unwrap();
        let scale = dense.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in cg.solution.iter().zip(&dense) {
            assert!((a - b).abs() / scale < 1e-10);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let n = 200;
        let mut t = Vec::new();
        for k in 0..n {
            t.push((k, k, 2.0001));
            if k + 1 < n {
                t.push((k, k + 1, -1.0));
                t.push((k + 1, k, -1.0));
            }
        }
        let s = system(&t, vec![1.0; n]);
        let params = SolverParams {
            cg_max_iterations: 3,
            ..SolverParams::default()
        };
        match solve_sparse(&s, &params) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-8);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_nan() {
        let s = system(&[(0, 0, f64::NAN)], vec![1.0]);
        assert!(matches!(solve_sparse(&s, &SolverParams::default()), Err(Error::NonFiniteSystem)));
        assert!(matches!(solve_dense(&s), Err(Error::NonFiniteSystem)));
    }
}
