//! Hamiltonian model catalog.
//!
//! Every model exposes an analytic gradient; finite differences only appear
//! in tests. Two adapters build new models from old ones: [`RayExtension`]
//! makes any model constant on rays, and [`Rotated`] conjugates a model by a
//! rotation acting diagonally on all spins.

use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3};

use crate::error::{Result, SpinError};
use crate::spin::Vec3;

/// An energy function on `(R^3 \ {0})^n` with its gradient `∂H/∂w_i`.
///
/// `value` and `gradient` assume the slice has `len()` spins; the public
/// operations in [`crate::spin`] check that before calling in.
#[allow(clippy::len_without_is_empty)]
pub trait Hamiltonian: Send + Sync {
    fn name(&self) -> &str;

    /// Number of spins the model acts on.
    fn len(&self) -> usize;

    fn value(&self, w: &[Vec3]) -> f64;

    fn gradient(&self, w: &[Vec3]) -> Vec<Vec3>;

    /// Whether `H(λ ⊙ w) = H(w)` for all componentwise positive `λ`.
    fn is_ray_constant(&self) -> bool {
        false
    }
}

impl<H: Hamiltonian + ?Sized> Hamiltonian for &H {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn len(&self) -> usize {
        (**self).len()
    }
    fn value(&self, w: &[Vec3]) -> f64 {
        (**self).value(w)
    }
    fn gradient(&self, w: &[Vec3]) -> Vec<Vec3> {
        (**self).gradient(w)
    }
    fn is_ray_constant(&self) -> bool {
        (**self).is_ray_constant()
    }
}

impl<H: Hamiltonian + ?Sized> Hamiltonian for Box<H> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn len(&self) -> usize {
        (**self).len()
    }
    fn value(&self, w: &[Vec3]) -> f64 {
        (**self).value(w)
    }
    fn gradient(&self, w: &[Vec3]) -> Vec<Vec3> {
        (**self).gradient(w)
    }
    fn is_ray_constant(&self) -> bool {
        (**self).is_ray_constant()
    }
}

impl<H: Hamiltonian + ?Sized> Hamiltonian for Arc<H> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn len(&self) -> usize {
        (**self).len()
    }
    fn value(&self, w: &[Vec3]) -> f64 {
        (**self).value(w)
    }
    fn gradient(&self, w: &[Vec3]) -> Vec<Vec3> {
        (**self).gradient(w)
    }
    fn is_ray_constant(&self) -> bool {
        (**self).is_ray_constant()
    }
}

/// Classical Heisenberg chain `H = Σ_i w_i · w_{i+1}`.
#[derive(Debug, Clone)]
pub struct HeisenbergChain {
    n: usize,
    periodic: bool,
}

impl HeisenbergChain {
    pub fn new(n: usize, periodic: bool) -> Result<Self> {
        if n < 2 {
            return Err(SpinError::Configuration(format!(
                "a chain needs at least 2 spins, got {n}"
            )));
        }
        Ok(Self { n, periodic })
    }

    /// Chain closed by `w_0 = w_n`.
    pub fn periodic(n: usize) -> Result<Self> {
        Self::new(n, true)
    }

    pub fn open(n: usize) -> Result<Self> {
        Self::new(n, false)
    }

    fn bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let count = if self.periodic { self.n } else { self.n - 1 };
        (0..count).map(move |i| (i, (i + 1) % self.n))
    }
}

impl Hamiltonian for HeisenbergChain {
    fn name(&self) -> &str {
        if self.periodic {
            "heisenberg_chain"
        } else {
            "heisenberg_chain_open"
        }
    }

    fn len(&self) -> usize {
        self.n
    }

    fn value(&self, w: &[Vec3]) -> f64 {
        self.bonds().map(|(i, j)| w[i].dot(&w[j])).sum()
    }

    fn gradient(&self, w: &[Vec3]) -> Vec<Vec3> {
        let mut g = vec![Vec3::zeros(); self.n];
        for (i, j) in self.bonds() {
            g[i] += w[j];
            g[j] += w[i];
        }
        g
    }
}

/// Free rigid body `H = ½ Σ_a w_a² / I_a`, applied independently to each spin.
#[derive(Debug, Clone)]
pub struct RigidBody {
    n: usize,
    inverse_inertia: Vec3,
}

impl RigidBody {
    pub fn new(n: usize, inertia: [f64; 3]) -> Result<Self> {
        if n == 0 {
            return Err(SpinError::Configuration("rigid body needs at least one spin".into()));
        }
        if inertia.iter().any(|i| !(i.is_finite() && *i > 0.0)) {
            return Err(SpinError::Configuration(format!(
                "moments of inertia must be positive, got {inertia:?}"
            )));
        }
        Ok(Self {
            n,
            inverse_inertia: Vec3::new(1.0 / inertia[0], 1.0 / inertia[1], 1.0 / inertia[2]),
        })
    }
}

impl Hamiltonian for RigidBody {
    fn name(&self) -> &str {
        "rigid_body"
    }

    fn len(&self) -> usize {
        self.n
    }

    fn value(&self, w: &[Vec3]) -> f64 {
        w.iter()
            .map(|wi| 0.5 * wi.component_mul(wi).dot(&self.inverse_inertia))
            .sum()
    }

    fn gradient(&self, w: &[Vec3]) -> Vec<Vec3> {
        w.iter().map(|wi| wi.component_mul(&self.inverse_inertia)).collect()
    }
}

/// Linear coupling to a constant field, `H = Σ_i w_i · B`.
#[derive(Debug, Clone)]
pub struct FieldModel {
    n: usize,
    field: Vec3,
}

impl FieldModel {
    pub fn new(n: usize, field: Vec3) -> Result<Self> {
        if n == 0 || !field.iter().all(|c| c.is_finite()) {
            return Err(SpinError::Configuration(
                "field model needs n >= 1 and a finite field".into(),
            ));
        }
        Ok(Self { n, field })
    }

    pub fn field(&self) -> Vec3 {
        self.field
    }

    /// Exact flow of `ẇ = w × B`: rotation about `B` by angle `-|B| t`.
    pub fn exact_flow(&self, w: &[Vec3], t: f64) -> Vec<Vec3> {
        let strength = self.field.norm();
        if strength == 0.0 {
            return w.to_vec();
        }
        let axis = nalgebra::Unit::new_normalize(self.field);
        let rotation = Rotation3::from_axis_angle(&axis, -strength * t);
        w.iter().map(|wi| rotation * wi).collect()
    }
}

impl Hamiltonian for FieldModel {
    fn name(&self) -> &str {
        "field"
    }

    fn len(&self) -> usize {
        self.n
    }

    fn value(&self, w: &[Vec3]) -> f64 {
        w.iter().map(|wi| wi.dot(&self.field)).sum()
    }

    fn gradient(&self, _w: &[Vec3]) -> Vec<Vec3> {
        vec![self.field; self.n]
    }
}

/// Point vortices on the sphere, `H = -Σ_{i<j} γ_i γ_j ln(2 - 2 w_i · w_j)`.
///
/// Only meaningful on the unit spheres; steppers reach it through the ray
/// projection.
#[derive(Debug, Clone)]
pub struct PointVortices {
    strengths: Vec<f64>,
}

impl PointVortices {
    pub fn new(strengths: Vec<f64>) -> Result<Self> {
        if strengths.len() < 2 {
            return Err(SpinError::Configuration(
                "point vortices need at least 2 vortices".into(),
            ));
        }
        if strengths.iter().any(|g| *g == 0.0 || !g.is_finite()) {
            return Err(SpinError::Configuration(
                "vortex strengths must be finite and nonzero".into(),
            ));
        }
        Ok(Self { strengths })
    }
}

impl Hamiltonian for PointVortices {
    fn name(&self) -> &str {
        "point_vortices"
    }

    fn len(&self) -> usize {
        self.strengths.len()
    }

    fn value(&self, w: &[Vec3]) -> f64 {
        let n = self.strengths.len();
        let mut h = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                h -= self.strengths[i] * self.strengths[j] * (2.0 - 2.0 * w[i].dot(&w[j])).ln();
            }
        }
        h
    }

    fn gradient(&self, w: &[Vec3]) -> Vec<Vec3> {
        let n = self.strengths.len();
        let mut g = vec![Vec3::zeros(); n];
        for i in 0..n {
            for j in i + 1..n {
                let c = self.strengths[i] * self.strengths[j] / (1.0 - w[i].dot(&w[j]));
                g[i] += w[j] * c;
                g[j] += w[i] * c;
            }
        }
        g
    }
}

/// `H = c`; every stepper must leave the state untouched.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    n: usize,
    value: f64,
}

impl ConstantModel {
    pub fn new(n: usize, value: f64) -> Result<Self> {
        if n == 0 {
            return Err(SpinError::Configuration("constant model needs n >= 1".into()));
        }
        Ok(Self { n, value })
    }
}

impl Hamiltonian for ConstantModel {
    fn name(&self) -> &str {
        "constant"
    }

    fn len(&self) -> usize {
        self.n
    }

    fn value(&self, _w: &[Vec3]) -> f64 {
        self.value
    }

    fn gradient(&self, _w: &[Vec3]) -> Vec<Vec3> {
        vec![Vec3::zeros(); self.n]
    }

    fn is_ray_constant(&self) -> bool {
        true
    }
}

/// Ray-constant extension `H̃(w) = H(r_1 w_1/|w_1|, ..., r_n w_n/|w_n|)`.
///
/// With unit radii this is `H ∘ ρ`. On the product of spheres with the given
/// radii, `H̃` and `H` have the same Hamiltonian vector field.
pub struct RayExtension<H> {
    base: H,
    radii: Vec<f64>,
    name: String,
}

impl<H: Hamiltonian> RayExtension<H> {
    pub fn new(base: H, radii: Vec<f64>) -> Result<Self> {
        if radii.len() != base.len() {
            return Err(SpinError::Configuration(format!(
                "{} radii for a {}-spin model",
                radii.len(),
                base.len()
            )));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(SpinError::Configuration("ray extension radii must be positive".into()));
        }
        let name = format!("ray_extended({})", base.name());
        Ok(Self { base, radii, name })
    }

    /// `H ∘ ρ`.
    pub fn unit(base: H) -> Self {
        let radii = vec![1.0; base.len()];
        let name = format!("ray_extended({})", base.name());
        Self { base, radii, name }
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    fn lift(&self, w: &[Vec3]) -> Vec<Vec3> {
        w.iter().zip(&self.radii).map(|(wi, r)| wi * (r / wi.norm())).collect()
    }
}

impl<H: Hamiltonian> Hamiltonian for RayExtension<H> {
    fn name(&self) -> &str {
        &self.name
    }

    fn len(&self) -> usize {
        self.base.len()
    }

    fn value(&self, w: &[Vec3]) -> f64 {
        self.base.value(&self.lift(w))
    }

    fn gradient(&self, w: &[Vec3]) -> Vec<Vec3> {
        let g = self.base.gradient(&self.lift(w));
        w.iter()
            .zip(g)
            .zip(&self.radii)
            .map(|((wi, gi), r)| {
                let norm = wi.norm();
                let u = wi / norm;
                (gi - u * u.dot(&gi)) * (r / norm)
            })
            .collect()
    }

    fn is_ray_constant(&self) -> bool {
        true
    }
}

/// `H ∘ R⁻¹` for a rotation `R` acting on every spin.
pub struct Rotated<H> {
    base: H,
    rotation: Rotation3<f64>,
    name: String,
}

impl<H: Hamiltonian> Rotated<H> {
    pub fn new(base: H, rotation: Rotation3<f64>) -> Self {
        let name = format!("rotated({})", base.name());
        Self { base, rotation, name }
    }
}

impl<H: Hamiltonian> Hamiltonian for Rotated<H> {
    fn name(&self) -> &str {
        &self.name
    }

    fn len(&self) -> usize {
        self.base.len()
    }

    fn value(&self, w: &[Vec3]) -> f64 {
        let inv: Matrix3<f64> = self.rotation.transpose().into_inner();
        let pulled: Vec<Vec3> = w.iter().map(|wi| inv * wi).collect();
        self.base.value(&pulled)
    }

    fn gradient(&self, w: &[Vec3]) -> Vec<Vec3> {
        let inv: Matrix3<f64> = self.rotation.transpose().into_inner();
        let pulled: Vec<Vec3> = w.iter().map(|wi| inv * wi).collect();
        self.base
            .gradient(&pulled)
            .into_iter()
            .map(|g| self.rotation * g)
            .collect()
    }

    fn is_ray_constant(&self) -> bool {
        self.base.is_ray_constant()
    }
}

/// Identifies a catalog model together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Chain { n: usize, periodic: bool },
    RigidBody { n: usize, inertia: [f64; 3] },
    Field { n: usize, field: [f64; 3] },
    PointVortices { strengths: Vec<f64> },
    Constant { n: usize, value: f64 },
}

pub fn make_model(spec: &ModelSpec) -> Result<Arc<dyn Hamiltonian>> {
    Ok(match spec {
        ModelSpec::Chain { n, periodic } => Arc::new(HeisenbergChain::new(*n, *periodic)?),
        ModelSpec::RigidBody { n, inertia } => Arc::new(RigidBody::new(*n, *inertia)?),
        ModelSpec::Field { n, field } => Arc::new(FieldModel::new(*n, Vec3::from(*field))?),
        ModelSpec::PointVortices { strengths } => Arc::new(PointVortices::new(strengths.clone())?),
        ModelSpec::Constant { n, value } => Arc::new(ConstantModel::new(*n, *value)?),
    })
}
