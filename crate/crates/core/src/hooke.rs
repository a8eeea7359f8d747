//! Plane-elasticity stiffness in Kelvin (orthonormal Voigt) notation.
//!
//! A symmetric 2x2 tensor `t` is stored as the 3-vector
//! `(t11, t22, sqrt(2)*t12)`.  With this scaling the tensor contraction
//! becomes the plain dot product and rotations act as orthogonal 3x3
//! matrices, so complementary energy is a plain matrix inverse and no
//! factor-of-2 bookkeeping is needed anywhere in the laminate algebra.

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Kelvin 3-vector of a symmetric 2x2 tensor.
pub type KelvinVec = Vector3<f64>;

/// Pack a symmetric 2x2 matrix into its Kelvin vector.
pub fn kelvin_vec(t: &Matrix2<f64>) -> KelvinVec {
    Vector3::new(t[(0, 0)], t[(1, 1)], SQRT2 * 0.5 * (t[(0, 1)] + t[(1, 0)]))
}

/// Unpack a Kelvin vector into the symmetric 2x2 matrix it represents.
pub fn kelvin_mat(v: &KelvinVec) -> Matrix2<f64> {
    let s = v[2] / SQRT2;
    Matrix2::new(v[0], s, s, v[1])
}

/// Kelvin matrix of the map `t -> Q(a)^T t Q(a)` (components of a tensor in
/// the frame rotated by angle `a`).
pub fn rotation_kelvin(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    let (c2, s2, cs) = (c * c, s * s, c * s);
    Matrix3::new(
        c2,
        s2,
        SQRT2 * cs,
        s2,
        c2,
        -SQRT2 * cs,
        -SQRT2 * cs,
        SQRT2 * cs,
        c2 - s2,
    )
}

/// Isotropic Lamé parameters.
///
/// The 2-D bulk modulus is `kappa = lambda + mu`; the 3-D algebra operations
/// use `kappa = lambda + 2 mu / 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicModuli {
    pub lambda: f64,
    pub mu: f64,
}

impl IsotropicModuli {
    pub fn new(lambda: f64, mu: f64) -> Self {
        Self { lambda, mu }
    }

    /// Plane-strain Lamé parameters from Young's modulus and Poisson ratio.
    pub fn from_young_poisson_plane_strain(e: f64, nu: f64) -> Self {
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        Self { lambda, mu }
    }

    /// 2-D bulk modulus `lambda + mu`.
    pub fn kappa_2d(&self) -> f64 {
        self.lambda + self.mu
    }

    /// 3-D bulk modulus `lambda + 2 mu / 3`.
    pub fn kappa_3d(&self) -> f64 {
        self.lambda + 2.0 * self.mu / 3.0
    }

    pub fn hooke(&self) -> Hooke2D {
        Hooke2D::isotropic(self)
    }
}

/// Plane-elasticity stiffness as a symmetric positive-semidefinite 3x3
/// matrix in Kelvin notation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hooke2D {
    pub k: Matrix3<f64>,
}

impl Hooke2D {
    /// Wrap a Kelvin matrix, checking symmetry and near-positive
    /// semidefiniteness (`eigenvalues >= -1e-12 * ||K||`).
    pub fn new(k: Matrix3<f64>) -> Result<Self> {
        let nrm = k.norm();
        let asym = (k - k.transpose()).norm();
        if asym > 1e-12 * nrm.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hooke matrix not symmetric: asymmetry {asym:e}"
            )));
        }
        let h = Self { k: 0.5 * (k + k.transpose()) };
        let tol = 1e-12 * nrm.max(1.0);
        if h.min_eigenvalue() < -tol {
            return Err(Error::InvalidArgument(format!(
                "Hooke matrix indefinite: min eigenvalue {:e}",
                h.min_eigenvalue()
            )));
        }
        Ok(h)
    }

    /// Isotropic law `A xi = 2 mu xi + lambda tr(xi) I`.
    ///
    /// In Kelvin notation: `[[2mu+la, la, 0], [la, 2mu+la, 0], [0, 0, 2mu]]`.
    pub fn isotropic(m: &IsotropicModuli) -> Self {
        let (la, mu) = (m.lambda, m.mu);
        Self {
            k: Matrix3::new(
                2.0 * mu + la,
                la,
                0.0,
                la,
                2.0 * mu + la,
                0.0,
                0.0,
                0.0,
                2.0 * mu,
            ),
        }
    }

    pub fn zero() -> Self {
        Self { k: Matrix3::zeros() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { k: self.k * s }
    }

    /// Contraction `(A xi) : eta` through the Kelvin dot product.
    pub fn contract(&self, xi: &KelvinVec, eta: &KelvinVec) -> f64 {
        (self.k * xi).dot(eta)
    }

    /// Full fourth-order component `A_{ijkl}` recovered from the Kelvin matrix.
    pub fn tensor_component(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let idx = |a: usize, b: usize| -> (usize, f64) {
            match (a, b) {
                (0, 0) => (0, 1.0),
                (1, 1) => (1, 1.0),
                _ => (2, 1.0 / SQRT2),
            }
        };
        let (r, fr) = idx(i, j);
        let (c, fc) = idx(k, l);
        self.k[(r, c)] * fr * fc
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.k.symmetric_eigenvalues().min()
    }

    pub fn norm(&self) -> f64 {
        self.k.norm()
    }

    pub fn inverse(&self) -> Result<Matrix3<f64>> {
        self.k
            .try_inverse()
            .ok_or_else(|| Error::SingularLamination("Hooke matrix not invertible".into()))
    }
}

/// Rotate a Hooke law by angle `a`:
/// `A*(m1, m2, a) = R(a)^T A*(m1, m2, 0) R(a)` with `R(a) xi = Q(a)^T xi Q(a)`.
///
/// Rotation preserves the eigenvalues of the Kelvin matrix, and `a = pi` is
/// the identity (orientations only matter modulo pi).
pub fn rotate_hooke(h: &Hooke2D, a: f64) -> Hooke2D {
    let r = rotation_kelvin(a);
    Hooke2D { k: r.transpose() * h.k * r }
}

/// Principal decomposition of a symmetric 2x2 tensor.
///
/// Eigenvalues are ordered by decreasing magnitude; `angle` is the direction
/// of the leading eigenvector in `[0, pi)`.  `None` when the tensor is
/// (numerically) isotropic and the direction is indeterminate.
#[derive(Debug, Clone, Copy)]
pub struct Principal {
    pub values: [f64; 2],
    pub angle: Option<f64>,
}

pub fn principal(t: &Matrix2<f64>) -> Principal {
    let m = 0.5 * (t[(0, 0)] + t[(1, 1)]);
    let d = 0.5 * (t[(0, 0)] - t[(1, 1)]);
    let s = 0.5 * (t[(0, 1)] + t[(1, 0)]);
    let r = (d * d + s * s).sqrt();
    let (hi, lo) = (m + r, m - r);
    let scale = hi.abs().max(lo.abs());
    if r <= 1e-12 * scale.max(1e-300) {
        return Principal { values: [hi, lo], angle: None };
    }
    // direction of the algebraically largest eigenvalue
    let mut angle = 0.5 * (2.0 * s).atan2(2.0 * d);
    let values = if hi.abs() >= lo.abs() {
        [hi, lo]
    } else {
        angle += std::f64::consts::FRAC_PI_2;
        [lo, hi]
    };
    angle = angle.rem_euclid(std::f64::consts::PI);
    if angle >= std::f64::consts::PI {
        angle = 0.0;
    }
    Principal { values, angle: Some(angle) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn kelvin_round_trip_is_exact() {
        let t = Matrix2::new(1.25, -0.5, -0.5, 3.0);
        assert_eq!(kelvin_mat(&kelvin_vec(&t)), t);
    }

    #[test]
    fn kelvin_contraction_matches_full_tensor() {
        // (A xi):eta == K xihat . etahat for random symmetric xi, eta
        let m = IsotropicModuli::new(0.7, 1.3);
        let a = Hooke2D::isotropic(&m);
        let apply = |xi: &Matrix2<f64>| -> Matrix2<f64> {
            2.0 * m.mu * xi + m.lambda * xi.trace() * Matrix2::identity()
        };
        let cases = [
            Matrix2::new(1.0, 0.3, 0.3, -0.2),
            Matrix2::new(0.0, 1.0, 1.0, 0.0),
            Matrix2::new(-2.0, 0.7, 0.7, 0.4),
        ];
        for xi in &cases {
            for eta in &cases {
                let full = (apply(xi) * eta).trace();
                let kelvin = a.contract(&kelvin_vec(xi), &kelvin_vec(eta));
                assert!((full - kelvin).abs() <= 1e-12 * full.abs().max(1.0));
            }
        }
    }

    #[test]
    fn isotropic_kelvin_entries() {
        // the 24.07 / 12.96 / 11.11 matrix is isotropic with E=15, nu=0.35
        let m = IsotropicModuli::from_young_poisson_plane_strain(15.0, 0.35);
        let k = Hooke2D::isotropic(&m).k;
        assert!((k[(0, 0)] - 24.07).abs() < 5e-3);
        assert!((k[(0, 1)] - 12.96).abs() < 5e-3);
        assert!((k[(2, 2)] - 11.11).abs() < 2e-3);
        let mu = 0.5 * (k[(0, 0)] - k[(0, 1)]);
        assert!((mu - m.mu).abs() < 1e-12);
        assert!((m.kappa_2d() - (m.lambda + m.mu)).abs() < 1e-15);
    }

    #[test]
    fn rotation_is_orthogonal_group_action() {
        let r = rotation_kelvin(0.7);
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-14);
        let a = Hooke2D::isotropic(&IsotropicModuli::new(0.4, 1.1));
        let r1 = rotate_hooke(&rotate_hooke(&a, 0.3), 0.4);
        let r2 = rotate_hooke(&a, 0.7);
        assert!((r1.k - r2.k).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn rotation_by_pi_is_identity() {
        let mut k = Matrix3::zeros();
        k[(0, 0)] = 3.0;
        k[(1, 1)] = 1.0;
        k[(2, 2)] = 0.5;
        k[(0, 1)] = 0.2;
        k[(1, 0)] = 0.2;
        let h = Hooke2D::new(k).unwrap();
        let r = rotate_hooke(&h, std::f64::consts::PI);
        assert!((r.k - h.k).norm() < 1e-13 * h.norm());
        // and rotation preserves eigenvalues
        let e0 = h.k.symmetric_eigenvalues();
        let e1 = rotate_hooke(&h, 0.9).k.symmetric_eigenvalues();
        let mut v0: Vec<f64> = e0.iter().copied().collect();
        let mut v1: Vec<f64> = e1.iter().copied().collect();
        v0.sort_by(f64::total_cmp);
        v1.sort_by(f64::total_cmp);
        for (a, b) in v0.iter().zip(&v1) {
            assert!((a - b).abs() < 1e-12 * h.norm());
        }
    }

    #[test]
    fn principal_pure_shear() {
        let p = principal(&Matrix2::new(0.0, 1.0, 1.0, 0.0));
        assert!((p.values[0] - 1.0).abs() < 1e-14);
        assert!((p.values[1] + 1.0).abs() < 1e-14);
        assert!((p.angle.unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn principal_diagonal_and_degenerate() {
        let p = principal(&Matrix2::new(2.0, 0.0, 0.0, 1.0));
        assert_eq!(p.angle.unwrap(), 0.0);
        let q = principal(&Matrix2::identity());
        assert!(q.angle.is_none());
        // |-3| > 1: leading direction is e2
        let r = principal(&Matrix2::new(1.0, 0.0, 0.0, -3.0));
        assert!((r.values[0] + 3.0).abs() < 1e-14);
        assert!((r.angle.unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn principal_rotated() {
        let a = std::f64::consts::FRAC_PI_6;
        let (s, c) = a.sin_cos();
        let q = Matrix2::new(c, -s, s, c);
        let t = q * Matrix2::new(2.0, 0.0, 0.0, 1.0) * q.transpose();
        let p = principal(&t);
        assert!((p.angle.unwrap() - a).abs() < 1e-12);
        let dir = Vector2::new(p.angle.unwrap().cos(), p.angle.unwrap().sin());
        assert!(((t * dir) - p.values[0] * dir).norm() < 1e-12);
    }
}
