//! Nonlinear solvers for the implicit midpoint equations.
//!
//! Every stepper writes its defining equation as a fixed point `x = g(x)`
//! over flat ambient coordinates; Newton works on the residual `x - g(x)`.
//! Residuals are measured blockwise: the largest Euclidean norm over the
//! per-spin (or per-quaternion) blocks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SpinError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    FixedPoint,
    Newton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub method: SolverMethod,
    /// Absolute tolerance on the blockwise residual norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Central-difference step for the Newton Jacobian.
    pub fd_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            method: SolverMethod::FixedPoint,
            tol: 1e-12,
            max_iter: 100,
            fd_step: 1e-6,
        }
    }
}

impl SolverSettings {
    pub fn newton() -> Self {
        Self {
            method: SolverMethod::Newton,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(SpinError::Configuration(format!(
                "solver tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(SpinError::Configuration("solver max_iter must be at least 1".into()));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(SpinError::Configuration(format!(
                "solver fd_step must be positive, got {}",
                self.fd_step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Largest Euclidean norm over consecutive blocks of `block` entries.
pub fn block_norm(v: &[f64], block: usize) -> f64 {
    let block = block.max(1);
    v.chunks(block)
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn block_distance(a: &[f64], b: &[f64], block: usize) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    block_norm(&diff, block)
}

/// Extra fixed-point sweeps allowed after the tolerance is met.
const POLISH_SWEEPS: usize = 4;

/// Iterates `x ← g(x)` until the update is at most `tol`, then keeps going
/// for up to a few sweeps while the update still shrinks, so the answer sits
/// at round-off rather than at the tolerance. Over long runs this keeps the
/// per-step error from accumulating into the conserved quantities.
///
/// The reported residual is the size of the last update, `|x_k - g(x_k)|`;
/// the returned solution is `g(x_k)`.
pub fn solve_fixed_point<G>(mut g: G, x0: Vec<f64>, settings: &SolverSettings, block: usize) -> Result<SolveReport>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    settings.validate()?;
    let mut x = x0;
    let mut residual = f64::INFINITY;
    let mut converged_at = None;
    for iteration in 1..=settings.max_iter {
        let gx = g(&x)?;
        let update = block_distance(&gx, &x, block);
        if !update.is_finite() {
            return Ok(SolveReport {
                solution: gx,
                iterations: iteration,
                residual: update,
                converged: false,
            });
        }
        if let Some(first) = converged_at {
            // Stop polishing once round-off stagnates; keep the better iterate.
            if update >= residual {
                return Ok(SolveReport {
                    solution: x,
                    iterations: iteration,
                    residual,
                    converged: true,
                });
            }
            residual = update;
            x = gx;
            if update == 0.0 || iteration - first >= POLISH_SWEEPS {
                return Ok(SolveReport {
                    solution: x,
                    iterations: iteration,
                    residual,
                    converged: true,
                });
            }
            continue;
        }
        residual = update;
        x = gx;
        if residual <= settings.tol {
            if residual == 0.0 {
                return Ok(SolveReport {
                    solution: x,
                    iterations: iteration,
                    residual,
                    converged: true,
                });
            }
            converged_at = Some(iteration);
        }
    }
    Ok(SolveReport {
        solution: x,
        iterations: settings.max_iter,
        residual,
        converged: converged_at.is_some(),
    })
}

/// Newton's method on `r(x) = 0` with a central-difference Jacobian.
pub fn solve_newton<R>(mut r: R, x0: Vec<f64>, settings: &SolverSettings, block: usize) -> Result<SolveReport>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    settings.validate()?;
    let dim = x0.len();
    let mut x = x0;
    let mut residual = f64::INFINITY;
    for iteration in 0..settings.max_iter {
        let rx = r(&x)?;
        residual = block_norm(&rx, block);
        if !residual.is_finite() {
            return Ok(SolveReport {
                solution: x,
                iterations: iteration,
                residual,
                converged: false,
            });
        }
        if residual <= settings.tol {
            return Ok(SolveReport {
                solution: x,
                iterations: iteration,
                residual,
                converged: true,
            });
        }

        let h = settings.fd_step;
        let mut jac = DMatrix::zeros(dim, dim);
        let mut probe = x.clone();
        for col in 0..dim {
            let orig = probe[col];
            probe[col] = orig + h;
            let plus = r(&probe)?;
            probe[col] = orig - h;
            let minus = r(&probe)?;
            probe[col] = orig;
            for row in 0..dim {
                jac[(row, col)] = (plus[row] - minus[row]) / (2.0 * h);
            }
        }
        let step = jac
            .lu()
            .solve(&DVector::from_vec(rx))
            .ok_or(SpinError::SolverSingular { iteration })?;
        for (xi, di) in x.iter_mut().zip(step.iter()) {
            *xi -= di;
        }
    }
    let rx = r(&x)?;
    residual = residual.min(block_norm(&rx, block));
    let converged = block_norm(&rx, block) <= settings.tol;
    Ok(SolveReport {
        solution: x,
        iterations: settings.max_iter,
        residual,
        converged,
    })
}

/// Solves `x = g(x)` with the configured method. A fixed-point run that does
/// not converge falls back to Newton from the same starting point; the
/// reported iteration count covers both attempts.
pub fn solve_implicit<G>(mut g: G, x0: Vec<f64>, settings: &SolverSettings, block: usize) -> Result<SolveReport>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let residual_of = |g: &mut G, x: &[f64]| -> Result<Vec<f64>> {
        let gx = g(x)?;
        Ok(x.iter().zip(&gx).map(|(a, b)| a - b).collect())
    };
    match settings.method {
        SolverMethod::Newton => solve_newton(|x| residual_of(&mut g, x), x0, settings, block),
        SolverMethod::FixedPoint => {
            let first = solve_fixed_point(&mut g, x0.clone(), settings, block);
            match first {
                Ok(report) if report.converged => Ok(report),
                Ok(report) => {
                    let spent = report.iterations;
                    let mut second = solve_newton(|x| residual_of(&mut g, x), x0, settings, block)?;
                    second.iterations += spent;
                    Ok(second)
                }
                // A fixed-point iterate can wander into a singular region
                // (antipodal midpoint) where Newton from x0 may not.
                Err(_) => solve_newton(|x| residual_of(&mut g, x), x0, settings, block),
            }
        }
    }
}
