//! Fixed-size matrix aliases and small helpers shared by the geometry code.
//!
//! Tangent vectors live in a padded 4-dimensional coordinate space and noise
//! vectors in a padded 6-dimensional one; unused trailing entries stay zero.

use nalgebra::{Quaternion, SMatrix, SVector, UnitQuaternion};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Vec3<S> = SVector<S, 3>;
pub type Vec4<S> = SVector<S, 4>;
pub type Vec6<S> = SVector<S, 6>;
pub type Mat3<S> = SMatrix<S, 3, 3>;
pub type Mat4<S> = SMatrix<S, 4, 4>;
pub type Mat46<S> = SMatrix<S, 4, 6>;
pub type Mat64<S> = SMatrix<S, 6, 4>;

pub fn pad3<S: Real>(m: &Mat3<S>) -> Mat4<S> {
    let mut out = Mat4::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(m);
    out
}

pub fn top3<S: Real>(v: &Vec4<S>) -> Vec3<S> {
    Vec3::new(v[0], v[1], v[2])
}

pub fn ext3<S: Real>(v: &Vec3<S>) -> Vec4<S> {
    Vec4::new(v[0], v[1], v[2], S::zero())
}

pub fn hat<S: Real>(v: &Vec3<S>) -> Mat3<S> {
    Mat3::new(
        S::zero(),
        -v[2],
        v[1],
        v[2],
        S::zero(),
        -v[0],
        -v[1],
        v[0],
        S::zero(),
    )
}

pub fn so3_exp<S: Real>(v: &Vec3<S>) -> UnitQuaternion<S> {
    UnitQuaternion::from_scaled_axis(*v)
}

pub fn so3_log<S: Real>(q: &UnitQuaternion<S>) -> Vec3<S> {
    q.scaled_axis()
}

pub fn rotation<S: Real>(q: &UnitQuaternion<S>) -> Mat3<S> {
    q.to_rotation_matrix().into_inner()
}

pub fn quat_from_coords<S: Real>(c: &Vec4<S>) -> UnitQuaternion<S> {
    UnitQuaternion::new_unchecked(Quaternion::from(*c))
}

pub fn quat_coords<S: Real>(q: &UnitQuaternion<S>) -> Vec4<S> {
    q.into_inner().coords
}

/// Applies the inverse of a map `T_{x0} -> T_y` (stored as an ambient matrix
/// vanishing on the normal space at `x0`) to a vector tangent at `y`.
/// `normal0` is the projector onto the normal space (and padding) at `x0`.
pub fn inverse_apply<S: Real>(a: &Mat4<S>, normal0: &Mat4<S>, y: &Vec4<S>) -> Result<Vec4<S>> {
    let gram = a.transpose() * a + normal0;
    gram.lu().solve(&(a.transpose() * y)).ok_or(Error::Singular)
}

/// Matrix form of [`inverse_apply`].
pub fn inverse_map<S: Real>(a: &Mat4<S>, normal0: &Mat4<S>) -> Result<Mat4<S>> {
    let gram = a.transpose() * a + normal0;
    let inv = gram.try_inverse().ok_or(Error::Singular)?;
    Ok(inv * a.transpose())
}

pub fn noise_head<S: Real>(e: &Vec6<S>) -> Vec4<S> {
    Vec4::new(e[0], e[1], e[2], e[3])
}
