//! Numerical certificates for the structural properties of the steppers.
//!
//! All routines are deterministic and report the stencil they used. The
//! orbit area form is fixed once as `ω_w(u, v) = w · (u × v) / |w|²`,
//! summed over spins.

use nalgebra::Rotation3;

use crate::error::{Result, SpinError};
use crate::integrate::{
    collective_midpoint_step_lifted, extended_spherical_midpoint_step, run_trajectory, StepperSpec, Trajectory,
};
use crate::model::{Hamiltonian, Rotated};
use crate::quat::{hopf, QuaternionConfiguration};
use crate::spin::{SpinConfiguration, Vec3};

const TANGENT_TOL: f64 = 1e-8;

/// Orthonormal frame `(e₁ᵢ, e₂ᵢ)` of each spin's tangent plane, oriented so
/// that `e₁ᵢ × e₂ᵢ` points along `w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentBasis {
    pub frames: Vec<[Vec3; 2]>,
}

impl TangentBasis {
    pub fn at(w: &SpinConfiguration) -> Self {
        Self {
            frames: w.iter().map(tangent_frame).collect(),
        }
    }

    /// Dimension of the product of orbits, `2n`.
    pub fn dim(&self) -> usize {
        2 * self.frames.len()
    }
}

fn tangent_frame(w: &Vec3) -> [Vec3; 2] {
    let u = w.normalize();
    // Start from the coordinate axis least aligned with w.
    let axis = if u.x.abs() <= u.y.abs() && u.x.abs() <= u.z.abs() {
        Vec3::x()
    } else if u.y.abs() <= u.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let e1 = (axis - u * u.dot(&axis)).normalize();
    let e2 = u.cross(&e1);
    [e1, e2]
}

fn area_form(w: &Vec3, u: &Vec3, v: &Vec3) -> f64 {
    w.dot(&u.cross(v)) / w.norm_squared()
}

/// `ω_w(u, v) = w · (u × v) / |w|²` on the orbit through `w`.
pub fn symplectic_form(w: &Vec3, u: &Vec3, v: &Vec3) -> Result<f64> {
    let r = w.norm();
    if r == 0.0 {
        return Err(SpinError::Domain("area form at the origin".into()));
    }
    for t in [u, v] {
        if t.dot(w).abs() / r > TANGENT_TOL * t.norm().max(1.0) {
            return Err(SpinError::Domain(format!(
                "vector {t:?} is not tangent to the sphere through {w:?}"
            )));
        }
    }
    Ok(area_form(w, u, v))
}

/// Symplectic defect with the stencil and context it was measured with.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectReport {
    pub defect: f64,
    pub fd_step: f64,
    pub dt: Option<f64>,
    pub method: Option<String>,
    pub model: Option<String>,
    pub state: SpinConfiguration,
}

/// Point at arc length `s` along the great circle through `w` with unit
/// initial velocity `e`.
fn along_geodesic(w: &Vec3, e: &Vec3, s: f64) -> Vec3 {
    let r = w.norm();
    w * (s / r).cos() + e * (r * (s / r).sin())
}

/// Largest `|ω(Ju, Jv) − ω(u, v)|` over pairs of [`TangentBasis`] vectors,
/// with `J` the tangent action of `map` assembled by central differences
/// along great circles of arc length `fd_step`.
pub fn symplectic_defect_of_map<M>(mut map: M, w: &SpinConfiguration, fd_step: f64) -> Result<f64>
where
    M: FnMut(&SpinConfiguration) -> Result<SpinConfiguration>,
{
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(SpinError::Configuration(format!(
            "fd_step must be positive, got {fd_step}"
        )));
    }
    let image = map(w)?;
    if image.len() != w.len() {
        return Err(SpinError::Configuration("map changed the number of spins".into()));
    }
    let basis = TangentBasis::at(w);
    let n = w.len();

    // columns[k][j]: tangent action of basis vector k on spin j of the image
    let mut columns: Vec<Vec<Vec3>> = Vec::with_capacity(basis.dim());
    let mut sources: Vec<(usize, Vec3)> = Vec::with_capacity(basis.dim());
    for (i, frame) in basis.frames.iter().enumerate() {
        let r = w[i].norm();
        let chord = 2.0 * r * (fd_step / r).sin();
        for e in frame {
            let mut plus = w.spins().to_vec();
            let mut minus = plus.clone();
            plus[i] = along_geodesic(&w[i], e, fd_step);
            minus[i] = along_geodesic(&w[i], e, -fd_step);
            let fp = map(&SpinConfiguration::new(plus)?)?;
            let fm = map(&SpinConfiguration::new(minus)?)?;
            let col = (0..n)
                .map(|j| {
                    let d = (fp[j] - fm[j]) / chord;
                    let u = image[j].normalize();
                    d - u * u.dot(&d)
                })
                .collect();
            columns.push(col);
            sources.push((i, *e));
        }
    }

    let mut defect = 0.0f64;
    for a in 0..columns.len() {
        for b in (a + 1)..columns.len() {
            let after: f64 = (0..n)
                .map(|j| area_form(&image[j], &columns[a][j], &columns[b][j]))
                .sum();
            let (ia, ea) = &sources[a];
            let (ib, eb) = &sources[b];
            let before = if ia == ib { area_form(&w[*ia], ea, eb) } else { 0.0 };
            defect = defect.max((after - before).abs());
        }
    }
    Ok(defect)
}

/// [`symplectic_defect_of_map`] for one step of `spec` on `model`.
pub fn symplectic_defect(
    spec: &StepperSpec,
    model: &dyn Hamiltonian,
    w: &SpinConfiguration,
    fd_step: f64,
) -> Result<DefectReport> {
    let defect = symplectic_defect_of_map(|x| spec.step(model, x).map(|o| o.state), w, fd_step)?;
    Ok(DefectReport {
        defect,
        fd_step,
        dt: Some(spec.dt),
        method: Some(spec.method.label()),
        model: Some(model.name().to_string()),
        state: w.clone(),
    })
}

/// `max_{t,i} | |w_i(t)| − |w_i(0)| |`.
pub fn orbit_defect(traj: &Trajectory) -> f64 {
    let Some(first) = traj.states.first() else {
        return 0.0;
    };
    let r0 = first.norms();
    traj.states
        .iter()
        .flat_map(|s| s.iter().zip(&r0).map(|(w, r)| (w.norm() - r).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDrift {
    /// `max_t |H(w(t)) − H(w(0))|`
    pub max_drift: f64,
    /// Least-squares slope of `H(w(t)) − H(w(0))` against `t`.
    pub trend: f64,
    /// Maximum drift over the first and second halves of the run.
    pub first_half: f64,
    pub second_half: f64,
}

pub fn energy_drift(traj: &Trajectory, model: &dyn Hamiltonian) -> EnergyDrift {
    let energies: Vec<f64> = traj.states.iter().map(|s| model.value(s.spins())).collect();
    let h0 = energies.first().copied().unwrap_or(0.0);
    let dev: Vec<f64> = energies.iter().map(|h| h - h0).collect();
    let max_abs = |s: &[f64]| s.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let half = dev.len() / 2;
    EnergyDrift {
        max_drift: max_abs(&dev),
        trend: linear_slope(&traj.times, &dev).unwrap_or(0.0),
        first_half: max_abs(&dev[..(half + 1).min(dev.len())]),
        second_half: max_abs(&dev[half..]),
    }
}

/// Least-squares slope of `y` against `x`; `None` if `x` has no spread.
pub fn linear_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = x[..n].iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Slope of `log(error)` against `log(dt)`.
pub fn log_log_slope(dts: &[f64], errors: &[f64]) -> Option<f64> {
    let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    linear_slope(&lx, &ly)
}

/// Errors below this are treated as exact.
pub const EXACT_ERROR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub t_final: f64,
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when every error is below [`EXACT_ERROR`].
    pub slope: Option<f64>,
}

/// Global error at `t_final` against `reference(w0, t_final)` for each `dt`,
/// and the fitted order.
///
/// Every `dt` must divide `t_final` into a whole number of steps. Errors that
/// fail to decrease with `dt` are reported as a diagnostic failure.
pub fn convergence_order<R>(
    spec: &StepperSpec,
    model: &dyn Hamiltonian,
    w0: &SpinConfiguration,
    t_final: f64,
    reference: R,
    dts: &[f64],
) -> Result<ConvergenceReport>
where
    R: Fn(&SpinConfiguration, f64) -> Result<SpinConfiguration>,
{
    if dts.len() < 2 {
        return Err(SpinError::Configuration("need at least two step sizes".into()));
    }
    let exact = reference(w0, t_final)?;
    let mut errors = Vec::with_capacity(dts.len());
    for &dt in dts {
        let steps = (t_final / dt).round();
        if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final.abs().max(1.0) {
            return Err(SpinError::Configuration(format!(
                "dt = {dt} does not divide t = {t_final}"
            )));
        }
        let traj = run_trajectory(model, w0, &spec.clone().with_dt(dt), steps as usize).map_err(|f| f.error)?;
        errors.push(traj.last().max_distance(&exact));
    }
    if errors.iter().all(|e| *e < EXACT_ERROR) {
        return Ok(ConvergenceReport {
            t_final,
            dts: dts.to_vec(),
            errors,
            slope: None,
        });
    }
    let mut order: Vec<usize> = (0..dts.len()).collect();
    order.sort_by(|a, b| dts[*b].total_cmp(&dts[*a]));
    for pair in order.windows(2) {
        let (coarse, fine) = (pair[0], pair[1]);
        if errors[fine] >= errors[coarse] {
            return Err(SpinError::Diagnostic(format!(
                "error does not decrease with dt: {:e} at dt = {} vs {:e} at dt = {}",
                errors[coarse], dts[coarse], errors[fine], dts[fine]
            )));
        }
    }
    let slope = log_log_slope(dts, &errors);
    Ok(ConvergenceReport {
        t_final,
        dts: dts.to_vec(),
        errors,
        slope,
    })
}

/// `max_z |P(upper(z)) − lower(P(z))|` over `points`, in flat coordinates.
pub fn intertwining_defect<U, L, P>(mut upper: U, mut lower: L, projection: P, points: &[Vec<f64>]) -> Result<f64>
where
    U: FnMut(&[f64]) -> Result<Vec<f64>>,
    L: FnMut(&[f64]) -> Result<Vec<f64>>,
    P: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut defect = 0.0f64;
    for z in points {
        let a = projection(&upper(z)?)?;
        let b = lower(&projection(z)?)?;
        if a.len() != b.len() {
            return Err(SpinError::Configuration("projected states differ in dimension".into()));
        }
        let d = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        defect = defect.max(d);
    }
    Ok(defect)
}

/// Intertwining of the quaternion-space midpoint step for `H ∘ π` with the
/// extended spherical midpoint step for `H`, through the Hopf map.
pub fn hopf_intertwining_defect(
    model: &dyn Hamiltonian,
    spec: &StepperSpec,
    points: &[QuaternionConfiguration],
) -> Result<f64> {
    let flat: Vec<Vec<f64>> = points.iter().map(|z| z.to_flat()).collect();
    intertwining_defect(
        |z: &[f64]| {
            let z = QuaternionConfiguration::from_flat(z)?;
            Ok(collective_midpoint_step_lifted(model, &z, spec)?.0.to_flat())
        },
        |w: &[f64]| {
            let w = SpinConfiguration::from_flat(w)?;
            Ok(extended_spherical_midpoint_step(model, &w, spec)?.state.to_flat())
        },
        |z: &[f64]| Ok(hopf(&QuaternionConfiguration::from_flat(z)?).to_flat()),
        &flat,
    )
}

/// `max_i |step(R·w; H∘R⁻¹)_i − (R·step(w; H))_i|`.
pub fn equivariance_defect(
    spec: &StepperSpec,
    model: &dyn Hamiltonian,
    rotation: &Rotation3<f64>,
    w: &SpinConfiguration,
) -> Result<f64> {
    let rotated_model = Rotated::new(model, *rotation);
    let lhs = spec.step(&rotated_model, &w.rotated(rotation))?.state;
    let rhs = spec.step(model, w)?.state.rotated(rotation);
    Ok(lhs.max_distance(&rhs))
}
