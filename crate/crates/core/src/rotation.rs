//! Small fixed-size 3D algebra generic over [`Real`], plus axis-angle maps.

use crate::autodiff::Real;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

pub fn identity<T: Real>() -> Mat3<T> {
    let (o, z) = (T::cst(1.0), T::cst(0.0));
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat_vec<T: Real>(a: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    [[a[0][0], a[1][0], a[2][0]], [a[0][1], a[1][1], a[2][1]], [a[0][2], a[1][2], a[2][2]]]
}

pub fn add3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn det(a: &Mat3<f64>) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Below this squared angle the Taylor expansions are used.
const SMALL_ANGLE_SQ: f64 = 1e-8;

/// Rotation matrix of an axis-angle vector (Rodrigues' formula).
///
/// `R = I + a·K + b·K²` with `K = [aa]×`, `a = sin φ / φ`,
/// `b = (1 - cos φ) / φ²`. Near zero the series expansions keep the map
/// smooth and exactly the identity at the origin.
pub fn rodrigues<T: Real>(aa: &Vec3<T>) -> Mat3<T> {
    let [x, y, z] = *aa;
    let angle_sq = x * x + y * y + z * z;
    let (a, b) = if angle_sq.value() < SMALL_ANGLE_SQ {
        (-(angle_sq / 6.0) + 1.0, -(angle_sq / 24.0) + 0.5)
    } else {
        let angle = angle_sq.sqrt();
        (angle.sin() / angle, (-angle.cos() + 1.0) / angle_sq)
    };
    // K² = aa·aaᵀ - |aa|² I
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let one = T::cst(1.0);
    [
        [one - b * (yy + zz), b * xy - a * z, b * xz + a * y],
        [b * xy + a * z, one - b * (xx + zz), b * yz - a * x],
        [b * xz - a * y, b * yz + a * x, one - b * (xx + yy)],
    ]
}

/// Inverse of [`rodrigues`] returning the canonical vector with norm in `[0, π]`.
pub fn axis_angle_from_matrix(r: &Mat3<f64>) -> Vec3<f64> {
    let cos = ((r[0][0] + r[1][1] + r[2][2] - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let w = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    if angle < 1e-6 {
        // sin φ ≈ φ, so w ≈ 2·aa
        return [w[0] * 0.5, w[1] * 0.5, w[2] * 0.5];
    }
    if std::f64::consts::PI - angle > 1e-4 {
        let s = angle / (2.0 * angle.sin());
        return [w[0] * s, w[1] * s, w[2] * s];
    }
    // Near π: R ≈ 2·n·nᵀ - I; take the column of (R + I)/2 with the largest diagonal.
    let k = (0..3).max_by(|&i, &j| r[i][i].total_cmp(&r[j][j])).unwrap_or(0);
    let mut n = [0.0; 3];
    for (i, ni) in n.iter_mut().enumerate() {
        *ni = (r[i][k] + r[k][i]) * 0.5 + if i == k { 1.0 } else { 0.0 };
    }
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let mut n = [n[0] / norm, n[1] / norm, n[2] / norm];
    // fix the sign with the antisymmetric part when it is informative
    if n[0] * w[0] + n[1] * w[1] + n[2] * w[2] < 0.0 {
        n = [-n[0], -n[1], -n[2]];
    }
    [n[0] * angle, n[1] * angle, n[2] * angle]
}

/// Squared Frobenius distance between two rotation matrices.
pub fn frobenius_sq<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> T {
    let mut acc = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            acc = acc + (a[i][j] - b[i][j]).sq();
        }
    }
    acc
}
