//! Quaternions, the extended Hopf map and collective Hamiltonians.
//!
//! Pure imaginary quaternions `b i + c j + d k` are identified with
//! `(b, c, d) ∈ R^3`. The extended Hopf map `π(z) = ¼ z k z̄` sends nonzero
//! quaternions onto nonzero spins with `|π(z)| = |z|²/4`, and its fibres are
//! the circles `z e^{kθ}`.
//!
//! The symplectic vector field of a function `F` on `H^n` is taken to be
//! `X_F(z) = -∇F(z) k`. With this sign, `T_zπ · X_{H∘π}(z) = X_H(π(z))` where
//! `X_H(w) = w × ∇H(w)`; the opposite sign makes `π` intertwine `X_{H∘π}`
//! with `-X_H` instead.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Result, SpinError};
use crate::model::Hamiltonian;
use crate::spin::{SpinConfiguration, Vec3, RAY_EPSILON};

/// `a + b i + c j + d k`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Quaternion {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Self = Self::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Self = Self::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Self = Self::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Self = Self::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn pure(v: &Vec3) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn real(&self) -> f64 {
        self.a
    }

    pub fn imag(&self) -> Vec3 {
        Vec3::new(self.b, self.c, self.d)
    }

    pub fn conj(&self) -> Self {
        Self::new(self.a, -self.b, -self.c, -self.d)
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Euclidean inner product on `R^4`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.a * other.a + self.b * other.b + self.c * other.c + self.d * other.d
    }

    pub fn inv(&self) -> Result<Self> {
        let n2 = self.norm_squared();
        if n2 == 0.0 {
            return Err(SpinError::SingularQuaternion("inverse of zero".into()));
        }
        Ok(self.conj() * (1.0 / n2))
    }

    /// `e^{kθ} = cos θ + k sin θ`.
    pub fn exp_k(theta: f64) -> Self {
        Self::new(theta.cos(), 0.0, 0.0, theta.sin())
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }
}

impl Mul for Quaternion {
    type Output = Self;

    fn mul(self, q: Self) -> Self {
        let p = self;
        Self::new(
            p.a * q.a - p.b * q.b - p.c * q.c - p.d * q.d,
            p.a * q.b + p.b * q.a + p.c * q.d - p.d * q.c,
            p.a * q.c - p.b * q.d + p.c * q.a + p.d * q.b,
            p.a * q.d + p.b * q.c - p.c * q.b + p.d * q.a,
        )
    }
}

impl Mul<f64> for Quaternion {
    type Output = Self;

    fn mul(self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }
}

impl Add for Quaternion {
    type Output = Self;

    fn add(self, q: Self) -> Self {
        Self::new(self.a + q.a, self.b + q.b, self.c + q.c, self.d + q.d)
    }
}

impl AddAssign for Quaternion {
    fn add_assign(&mut self, q: Self) {
        *self = *self + q;
    }
}

impl Sub for Quaternion {
    type Output = Self;

    fn sub(self, q: Self) -> Self {
        Self::new(self.a - q.a, self.b - q.b, self.c - q.c, self.d - q.d)
    }
}

impl Neg for Quaternion {
    type Output = Self;

    fn neg(self) -> Self {
        Self::new(-self.a, -self.b, -self.c, -self.d)
    }
}

pub fn qmul(a: Quaternion, b: Quaternion) -> Quaternion {
    a * b
}

pub fn qconj(a: Quaternion) -> Quaternion {
    a.conj()
}

pub fn qinv(a: Quaternion) -> Result<Quaternion> {
    a.inv()
}

/// `n` nonzero quaternions.
#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionConfiguration {
    quats: Vec<Quaternion>,
}

impl QuaternionConfiguration {
    pub fn new(quats: Vec<Quaternion>) -> Result<Self> {
        if quats.is_empty() {
            return Err(SpinError::Configuration("empty quaternion configuration".into()));
        }
        if let Some(i) = quats.iter().position(|q| q.norm_squared() == 0.0) {
            return Err(SpinError::SingularQuaternion(format!("component {i} is zero")));
        }
        Ok(Self { quats })
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(4) {
            return Err(SpinError::Configuration(format!(
                "flat quaternion vector has length {}",
                flat.len()
            )));
        }
        Self::new(unflatten_quats(flat))
    }

    pub fn len(&self) -> usize {
        self.quats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quats.is_empty()
    }

    pub fn quats(&self) -> &[Quaternion] {
        &self.quats
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten_quats(&self.quats)
    }

    /// Moves each component along its fibre, `z_i e^{k θ_i}`.
    pub fn fibre_shift(&self, phases: &[f64]) -> Self {
        Self {
            quats: self
                .quats
                .iter()
                .zip(phases)
                .map(|(z, t)| *z * Quaternion::exp_k(*t))
                .collect(),
        }
    }

    /// Componentwise scaling `λ ⊙ z`.
    pub fn scaled(&self, factors: &[f64]) -> Result<Self> {
        Self::new(self.quats.iter().zip(factors).map(|(z, s)| *z * *s).collect())
    }
}

impl Index<usize> for QuaternionConfiguration {
    type Output = Quaternion;

    fn index(&self, index: usize) -> &Quaternion {
        &self.quats[index]
    }
}

pub(crate) fn flatten_quats(q: &[Quaternion]) -> Vec<f64> {
    q.iter().flat_map(|z| z.to_array()).collect()
}

pub(crate) fn unflatten_quats(flat: &[f64]) -> Vec<Quaternion> {
    flat.chunks_exact(4)
        .map(|c| Quaternion::new(c[0], c[1], c[2], c[3]))
        .collect()
}

/// Componentwise `π(z) = ¼ z k z̄`.
pub fn hopf(z: &QuaternionConfiguration) -> SpinConfiguration {
    SpinConfiguration::from_vecs_unchecked(hopf_slice(z.quats()))
}

pub(crate) fn hopf_one(z: &Quaternion) -> Vec3 {
    let p = *z * Quaternion::K * z.conj() * 0.25;
    debug_assert!(p.a.abs() <= 1e-12 * z.norm_squared().max(1.0));
    p.imag()
}

pub(crate) fn hopf_slice(z: &[Quaternion]) -> Vec<Vec3> {
    z.iter().map(hopf_one).collect()
}

/// The double covering `z ↦ z²` of `C^n`.
pub fn double_cover(z: &[Complex64]) -> Vec<Complex64> {
    z.iter().map(|zi| zi * zi).collect()
}

/// `T_zπ · u = ¼ (u k z̄ + z k ū)` componentwise.
pub fn hopf_tangent(z: &[Quaternion], u: &[Quaternion]) -> Result<Vec<Vec3>> {
    if z.len() != u.len() {
        return Err(SpinError::Configuration("tangent vector has the wrong shape".into()));
    }
    Ok(z.iter().zip(u).map(|(zi, ui)| hopf_tangent_one(zi, ui)).collect())
}

pub(crate) fn hopf_tangent_one(z: &Quaternion, u: &Quaternion) -> Vec3 {
    let k = Quaternion::K;
    ((*u * k * z.conj() + *z * k * u.conj()) * 0.25).imag()
}

/// Euclidean adjoint of [`hopf_tangent`]: `v ↦ -½ v z k` componentwise.
pub fn hopf_tangent_adjoint(z: &[Quaternion], v: &[Vec3]) -> Result<Vec<Quaternion>> {
    if z.len() != v.len() {
        return Err(SpinError::Configuration("cotangent vector has the wrong shape".into()));
    }
    Ok(z.iter().zip(v).map(|(zi, vi)| adjoint_one(zi, vi)).collect())
}

fn adjoint_one(z: &Quaternion, v: &Vec3) -> Quaternion {
    Quaternion::pure(v) * *z * Quaternion::K * -0.5
}

/// A right inverse of [`hopf`]: `z_i = 2 sqrt|w_i| q_i` with `q_i` the
/// half-angle unit quaternion rotating `k` onto `w_i/|w_i|`. Directions close
/// to `-k` switch to a chart rotated by `i`.
pub fn hopf_section(w: &SpinConfiguration) -> Result<QuaternionConfiguration> {
    let quats = hopf_section_slice(w.spins())?;
    Ok(QuaternionConfiguration { quats })
}

pub(crate) fn hopf_section_slice(w: &[Vec3]) -> Result<Vec<Quaternion>> {
    w.iter()
        .enumerate()
        .map(|(index, wi)| {
            let norm = wi.norm();
            if norm <= RAY_EPSILON {
                return Err(SpinError::SingularRay { index, norm });
            }
            Ok(section_one(&(wi / norm)) * (2.0 * norm.sqrt()))
        })
        .collect()
}

/// Unit quaternion `q` with `q k q̄ = u`.
fn section_one(u: &Vec3) -> Quaternion {
    // Rotation taking `from` to `u`: normalize(1 + from·u, from × u).
    let half_turn = |from: Vec3| {
        let axis = from.cross(u);
        let q = Quaternion::new(1.0 + from.dot(u), axis.x, axis.y, axis.z);
        q * (1.0 / q.norm())
    };
    if -u.z > 1.0 - 1e-6 {
        // i k ī = -k, so rotate -k onto u afterwards.
        half_turn(-Vec3::z()) * Quaternion::I
    } else {
        half_turn(Vec3::z())
    }
}

/// The collective Hamiltonian `H ∘ π` on `H*^n`.
pub struct CollectiveModel<H> {
    base: H,
}

impl<H: Hamiltonian> CollectiveModel<H> {
    pub fn new(base: H) -> Self {
        Self { base }
    }

    pub fn base(&self) -> &H {
        &self.base
    }

    pub fn value(&self, z: &[Quaternion]) -> f64 {
        self.base.value(&hopf_slice(z))
    }

    /// `∇(H∘π)(z) = (T_zπ)^* ∇H(π(z))`.
    pub fn gradient(&self, z: &[Quaternion]) -> Vec<Quaternion> {
        let g = self.base.gradient(&hopf_slice(z));
        z.iter().zip(&g).map(|(zi, gi)| adjoint_one(zi, gi)).collect()
    }
}

/// `X_F(z) = -∇F(z) k` componentwise.
pub fn quat_hamiltonian_vf<H: Hamiltonian>(f: &CollectiveModel<H>, z: &[Quaternion]) -> Vec<Quaternion> {
    f.gradient(z).into_iter().map(|g| -(g * Quaternion::K)).collect()
}

/// Largest `|Re(z_i⁻¹ Y_i)|`: zero when `Y` is tangent to the 3-spheres.
pub fn sphere_tangency_residual(z: &[Quaternion], y: &[Quaternion]) -> Result<f64> {
    z.iter()
        .zip(y)
        .try_fold(0.0f64, |acc, (zi, yi)| Ok(acc.max((zi.inv()? * *yi).real().abs())))
}

/// Largest `|Re(k z_i⁻¹ Y_i)|`: zero when `Y` is orthogonal to the Hopf fibres.
pub fn fibre_orthogonality_residual(z: &[Quaternion], y: &[Quaternion]) -> Result<f64> {
    z.iter().zip(y).try_fold(0.0f64, |acc, (zi, yi)| {
        Ok(acc.max((Quaternion::K * zi.inv()? * *yi).real().abs()))
    })
}
