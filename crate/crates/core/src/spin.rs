//! Spin configurations on `(R^3 \ {0})^n` and the Lie–Poisson primitives
//! that act on them: the Hamiltonian vector field `w_k × ∂H/∂w_k`, the ray
//! projection onto the unit spheres, the norm-scaled chordal midpoint used
//! by the extended spherical midpoint method, and the Poisson bracket.

use std::ops::Index;

use nalgebra::{Rotation3, Vector3};
use rand::Rng;

use crate::error::{Result, SpinError};
use crate::model::Hamiltonian;

pub type Vec3 = Vector3<f64>;

/// Spins closer to the origin than this have no well-defined ray.
pub const RAY_EPSILON: f64 = 1e-8;
/// Componentwise `|w_i + W_i|` below this is treated as an antipodal pair.
pub const ANTIPODAL_EPSILON: f64 = 1e-8;
/// Accepted deviation from unit norm for unit-sphere methods.
pub const NORM_TOL: f64 = 1e-8;

/// A state `w = (w_1, ..., w_n)` with every `w_i` nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinConfiguration {
    spins: Vec<Vec3>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<Vec3>) -> Result<Self> {
        if spins.is_empty() {
            return Err(SpinError::Configuration(
                "a configuration needs at least one spin".into(),
            ));
        }
        for (index, w) in spins.iter().enumerate() {
            if !w.iter().all(|c| c.is_finite()) {
                return Err(SpinError::Configuration(format!("spin {index} is not finite")));
            }
            if w.norm() == 0.0 {
                return Err(SpinError::SingularRay { index, norm: 0.0 });
            }
        }
        Ok(Self { spins })
    }

    /// Builds a configuration on the unit spheres by normalizing every spin.
    pub fn unit(spins: Vec<Vec3>) -> Result<Self> {
        let raw = Self::new(spins)?;
        ray_project(&raw)
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(3) {
            return Err(SpinError::Configuration(format!(
                "flat spin vector has length {}, not a multiple of 3",
                flat.len()
            )));
        }
        Self::new(unflatten(flat))
    }

    pub(crate) fn from_vecs_unchecked(spins: Vec<Vec3>) -> Self {
        Self { spins }
    }

    /// `n` independent spins drawn uniformly from the unit sphere.
    pub fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let spins = (0..n).map(|_| random_unit_vector(rng)).collect();
        Self { spins }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[Vec3] {
        &self.spins
    }

    pub fn into_spins(self) -> Vec<Vec3> {
        self.spins
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec3> {
        self.spins.iter()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.spins.iter().map(|w| w.norm()).collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.spins)
    }

    /// True when every spin has unit length within `tol`.
    pub fn is_unit(&self, tol: f64) -> bool {
        self.spins.iter().all(|w| (w.norm() - 1.0).abs() <= tol)
    }

    /// Applies the same rotation to every spin.
    pub fn rotated(&self, rotation: &Rotation3<f64>) -> Self {
        Self {
            spins: self.spins.iter().map(|w| rotation * w).collect(),
        }
    }

    /// Componentwise rescaling `λ ⊙ w`.
    pub fn scaled(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.len() {
            return Err(SpinError::Configuration(format!(
                "{} scale factors for {} spins",
                factors.len(),
                self.len()
            )));
        }
        Self::new(self.spins.iter().zip(factors).map(|(w, s)| w * *s).collect())
    }

    /// Largest per-spin Euclidean distance to `other`.
    pub fn max_distance(&self, other: &SpinConfiguration) -> f64 {
        max_spin_distance(&self.spins, &other.spins)
    }
}

impl Index<usize> for SpinConfiguration {
    type Output = Vec3;

    fn index(&self, index: usize) -> &Vec3 {
        &self.spins[index]
    }
}

impl<'a> IntoIterator for &'a SpinConfiguration {
    type Item = &'a Vec3;
    type IntoIter = std::slice::Iter<'a, Vec3>;

    fn into_iter(self) -> Self::IntoIter {
        self.spins.iter()
    }
}

pub(crate) fn flatten(spins: &[Vec3]) -> Vec<f64> {
    spins.iter().flat_map(|w| [w.x, w.y, w.z]).collect()
}

pub(crate) fn unflatten(flat: &[f64]) -> Vec<Vec3> {
    flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub(crate) fn max_spin_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

fn check_len(model: &dyn Hamiltonian, n: usize) -> Result<()> {
    if model.len() != n {
        return Err(SpinError::Configuration(format!(
            "model `{}` has {} spins, configuration has {}",
            model.name(),
            model.len(),
            n
        )));
    }
    Ok(())
}

/// `X_H(w)_k = w_k × ∂H/∂w_k`.
pub fn eval_vector_field(model: &dyn Hamiltonian, w: &SpinConfiguration) -> Result<Vec<Vec3>> {
    check_len(model, w.len())?;
    Ok(hamiltonian_field(model, w.spins()))
}

pub(crate) fn hamiltonian_field(model: &dyn Hamiltonian, w: &[Vec3]) -> Vec<Vec3> {
    let grad = model.gradient(w);
    w.iter().zip(&grad).map(|(wk, gk)| wk.cross(gk)).collect()
}

/// Projects every spin onto the unit sphere along its ray.
pub fn ray_project(w: &SpinConfiguration) -> Result<SpinConfiguration> {
    ray_project_slice(w.spins()).map(SpinConfiguration::from_vecs_unchecked)
}

pub(crate) fn ray_project_slice(w: &[Vec3]) -> Result<Vec<Vec3>> {
    w.iter()
        .enumerate()
        .map(|(index, wi)| {
            let norm = wi.norm();
            if norm <= RAY_EPSILON {
                Err(SpinError::SingularRay { index, norm })
            } else {
                Ok(wi / norm)
            }
        })
        .collect()
}

/// `Γ(w, W)_i = sqrt(|w_i||W_i|) (w_i + W_i) / |w_i + W_i|`.
///
/// The chordal midpoint rescaled to the geometric mean of the two radii; on
/// a common sphere it lands back on that sphere.
pub fn gamma_midpoint(w: &SpinConfiguration, big_w: &SpinConfiguration) -> Result<SpinConfiguration> {
    if w.len() != big_w.len() {
        return Err(SpinError::Configuration(format!(
            "cannot pair {} spins with {}",
            w.len(),
            big_w.len()
        )));
    }
    gamma_slice(w.spins(), big_w.spins()).map(SpinConfiguration::from_vecs_unchecked)
}

pub(crate) fn gamma_slice(w: &[Vec3], big_w: &[Vec3]) -> Result<Vec<Vec3>> {
    w.iter()
        .zip(big_w)
        .enumerate()
        .map(|(index, (a, b))| {
            let sum = a + b;
            let norm = sum.norm();
            if norm <= ANTIPODAL_EPSILON {
                return Err(SpinError::Antipodal { index, norm });
            }
            Ok(sum * ((a.norm() * b.norm()).sqrt() / norm))
        })
        .collect()
}

/// `{F, G}(w) = Σ_k (∂F/∂w_k × ∂G/∂w_k) · w_k`.
pub fn poisson_bracket(f: &dyn Hamiltonian, g: &dyn Hamiltonian, w: &SpinConfiguration) -> Result<f64> {
    check_len(f, w.len())?;
    check_len(g, w.len())?;
    let df = f.gradient(w.spins());
    let dg = g.gradient(w.spins());
    Ok(w.iter()
        .zip(df.iter().zip(&dg))
        .map(|(wk, (a, b))| a.cross(b).dot(wk))
        .sum())
}
