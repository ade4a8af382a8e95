//! Geodesic midpoints for the two non-flat metrics.
//!
//! For the scaled metric, geodesics are images of straight horizontal
//! segments in quaternion space. Two lifts `z`, `Z` are aligned by moving
//! `Z` along its fibre until `z̄Z` has no `k` component and a positive real
//! part; the segment between them is then horizontal and as short as
//! possible.

use crate::error::{Result, SpinError};
use crate::quat::{hopf_one, hopf_section_slice, hopf_tangent_one, Quaternion, QuaternionConfiguration};
use crate::spin::{SpinConfiguration, Vec3, ANTIPODAL_EPSILON};

fn align_one(index: usize, z: &Quaternion, big_z: &Quaternion) -> Result<Quaternion> {
    let p = z.conj() * *big_z;
    let overlap = p.a.hypot(p.d);
    if overlap <= ANTIPODAL_EPSILON * z.norm() * big_z.norm() {
        return Err(SpinError::Geometry(format!(
            "spin {index}: lifts are antipodal in every fibre phase (overlap {overlap:e})"
        )));
    }
    Ok(*big_z * Quaternion::exp_k((-p.d).atan2(p.a)))
}

pub(crate) fn aligned_lifts_slice(w: &[Vec3], big_w: &[Vec3]) -> Result<(Vec<Quaternion>, Vec<Quaternion>)> {
    if w.len() != big_w.len() {
        return Err(SpinError::Configuration(format!(
            "configurations differ in length: {} vs {}",
            w.len(),
            big_w.len()
        )));
    }
    let z = hopf_section_slice(w)?;
    let big_z = hopf_section_slice(big_w)?
        .iter()
        .zip(&z)
        .enumerate()
        .map(|(i, (zz, z0))| align_one(i, z0, zz))
        .collect::<Result<Vec<_>>>()?;
    Ok((z, big_z))
}

/// Section lifts of `w` and `W` with `W`'s lift moved along its fibre so the
/// straight segment between them is horizontal.
pub fn aligned_lifts(
    w: &SpinConfiguration,
    big_w: &SpinConfiguration,
) -> Result<(QuaternionConfiguration, QuaternionConfiguration)> {
    let (z, big_z) = aligned_lifts_slice(w.spins(), big_w.spins())?;
    Ok((QuaternionConfiguration::new(z)?, QuaternionConfiguration::new(big_z)?))
}

/// Midpoint and midpoint velocity of the unit-time scaled-metric geodesic
/// from `w` to `W`.
pub(crate) fn scaled_midpoint_slice(w: &[Vec3], big_w: &[Vec3]) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let (z, big_z) = aligned_lifts_slice(w, big_w)?;
    let mut mid = Vec::with_capacity(z.len());
    let mut velocity = Vec::with_capacity(z.len());
    for (a, b) in z.iter().zip(&big_z) {
        let m = (*a + *b) * 0.5;
        mid.push(hopf_one(&m));
        velocity.push(hopf_tangent_one(&m, &(*b - *a)));
    }
    Ok((mid, velocity))
}

pub fn geodesic_midpoint_scaled(
    w: &SpinConfiguration,
    big_w: &SpinConfiguration,
) -> Result<(SpinConfiguration, Vec<Vec3>)> {
    let (mid, velocity) = scaled_midpoint_slice(w.spins(), big_w.spins())?;
    Ok((SpinConfiguration::new(mid)?, velocity))
}

/// Midpoint and midpoint velocity of the unit-time great-circle arc from
/// `w_i` to `W_i` on the sphere of radius `|w_i|`.
pub fn geodesic_midpoint_round(
    w: &SpinConfiguration,
    big_w: &SpinConfiguration,
) -> Result<(SpinConfiguration, Vec<Vec3>)> {
    if w.len() != big_w.len() {
        return Err(SpinError::Configuration(format!(
            "configurations differ in length: {} vs {}",
            w.len(),
            big_w.len()
        )));
    }
    let mut mid = Vec::with_capacity(w.len());
    let mut velocity = Vec::with_capacity(w.len());
    for (index, (a, b)) in w.iter().zip(big_w.iter()).enumerate() {
        let r = a.norm();
        if (b.norm() - r).abs() > 1e-8 * r {
            return Err(SpinError::Domain(format!(
                "spin {index} changes radius from {r} to {}; no great circle joins them",
                b.norm()
            )));
        }
        let sum = a + b;
        let norm = sum.norm();
        if norm <= ANTIPODAL_EPSILON * r {
            return Err(SpinError::Geometry(format!(
                "spin {index}: antipodal endpoints, no unique great circle"
            )));
        }
        mid.push(sum * (r / norm));
        let chord = b - a;
        let len = chord.norm();
        if len == 0.0 {
            velocity.push(Vec3::zeros());
        } else {
            let angle = 2.0 * len.atan2(norm);
            velocity.push(chord * (r * angle / len));
        }
    }
    Ok((SpinConfiguration::new(mid)?, velocity))
}
