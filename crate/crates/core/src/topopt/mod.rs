//! Relaxed (homogenized) topology optimization.
//!
//! Conductivity designs use rank-1 laminates `A*(theta, phi)`; elasticity
//! compliance uses rank-2 laminates built from the optimal
//! complementary-energy bound; SIMP is the convexified fictitious-material
//! variant.  Every alternate-minimization loop reports an objective that
//! decreases monotonically at the discrete level: both half-steps are exact
//! minimizations of the same quadrature energy (the elasticity design step is
//! additionally guarded by a global accept test against the assembled law).

mod cond;
mod elastic;
mod simp;

pub use cond::{
    alt_min_cond_compliance, alt_min_torsion, cond_target_gradient_run, penalize_cond_compliance,
    CondConfig, TargetConfig,
};
pub use elastic::{
    alt_min_elastic_compliance, penalize_elastic, ElasticConfig, ElasticDesign, GaussDesign,
};
pub use simp::{simp_run, SimpConfig};

use nalgebra::{Matrix2, Matrix3};

use crate::error::Result;
use crate::hooke::{principal, KelvinVec};
use crate::laminate::lam_bounds;
use crate::mesh::Mesh2D;

/// Volume handling of the elasticity-type loops: either a fixed cost weight
/// `l` on `int theta`, or a volume target met by dichotomy each iteration.
#[derive(Debug, Clone, Copy)]
pub enum VolumeMode {
    FixedMultiplier(f64),
    VolumeTarget(f64),
}

/// Per-element relaxed conductivity design.
#[derive(Debug, Clone)]
pub struct RelaxedDesign {
    /// density of the weak phase alpha
    pub theta: Vec<f64>,
    /// lamination angle (direction of the lambda^+ eigenvector), mod pi
    pub phi: Vec<f64>,
    pub multiplier: f64,
    pub v_target: f64,
}

/// Rank-1 laminate conductivity
/// `A*(theta, phi) = Q(phi) diag(lambda^+, lambda^-) Q(phi)^T`.
pub fn rank1_tensor(theta: f64, phi: f64, alpha: f64, beta: f64) -> Matrix2<f64> {
    let (lo, hi) = lam_bounds(alpha, beta, theta).expect("valid phases");
    let (s, c) = phi.sin_cos();
    let q = Matrix2::new(c, -s, s, c);
    q * Matrix2::new(hi, 0.0, 0.0, lo) * q.transpose()
}

/// Partial derivative of the rank-1 tensor with respect to `theta`.
pub fn rank1_dtheta(theta: f64, phi: f64, alpha: f64, beta: f64) -> Matrix2<f64> {
    let lo = 1.0 / (theta / alpha + (1.0 - theta) / beta);
    let dlo = -lo * lo * (1.0 / alpha - 1.0 / beta);
    let dhi = alpha - beta;
    let (s, c) = phi.sin_cos();
    let q = Matrix2::new(c, -s, s, c);
    q * Matrix2::new(dhi, 0.0, 0.0, dlo) * q.transpose()
}

/// Partial derivative of the rank-1 tensor with respect to `phi`.
pub fn rank1_dphi(theta: f64, phi: f64, alpha: f64, beta: f64) -> Matrix2<f64> {
    let (lo, hi) = lam_bounds(alpha, beta, theta).expect("valid phases");
    let (s, c) = phi.sin_cos();
    let q = Matrix2::new(c, -s, s, c);
    let dq = Matrix2::new(-s, -c, c, -s);
    let d = Matrix2::new(hi, 0.0, 0.0, lo);
    dq * d * q.transpose() + q * d * dq.transpose()
}

/// Per-element design derivatives `dJ/dtheta = (dA*/dtheta) grad u . grad p`
/// and `dJ/dphi = (dA*/dphi) grad u . grad p`, returned as densities whose
/// integral over the element is the exact discrete derivative.
pub fn grad_wrt_design(
    mesh: &Mesh2D,
    u: &[f64],
    p: &[f64],
    da_dtheta: &[Matrix2<f64>],
    da_dphi: &[Matrix2<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let q = crate::fem::Quad1::for_mesh(mesh);
    let area = mesh.element_area();
    let mut dt = Vec::with_capacity(mesh.num_elements());
    let mut dp = Vec::with_capacity(mesh.num_elements());
    for (e, conn) in mesh.elements.iter().enumerate() {
        let mut at = 0.0;
        let mut ap = 0.0;
        for g in &q.gauss {
            let mut gu = nalgebra::Vector2::zeros();
            let mut gp = nalgebra::Vector2::zeros();
            for a in 0..4 {
                gu[0] += g.grad[a][0] * u[conn[a]];
                gu[1] += g.grad[a][1] * u[conn[a]];
                gp[0] += g.grad[a][0] * p[conn[a]];
                gp[1] += g.grad[a][1] * p[conn[a]];
            }
            at += g.weight * (da_dtheta[e] * gu).dot(&gp);
            ap += g.weight * (da_dphi[e] * gu).dot(&gp);
        }
        dt.push(at / area);
        dp.push(ap / area);
    }
    (dt, dp)
}

/// Orientation of the leading (largest magnitude) principal direction of a
/// symmetric tensor, in `[0, pi)`; `None` at isotropic points where the
/// caller keeps the previous angle.
pub fn pedersen_angle(sigma: &Matrix2<f64>) -> Option<f64> {
    principal(sigma).angle
}

/// The cosine penalization `theta_pen = (1 - cos(pi theta)) / 2`, pushing
/// densities towards 0/1 with fixed points {0, 1/2, 1}.
pub fn penalize_theta(theta: f64) -> f64 {
    0.5 * (1.0 - (std::f64::consts::PI * theta).cos())
}

/// Explicit optimal density of the elasticity compliance problem:
/// `theta = min(1, sqrt((kappa+mu)/(4 mu kappa l)) (|s1| + |s2|))`, floored
/// at `theta_min` to keep the assembled law nonsingular.
pub fn theta_opt_elastic(
    sigma: &Matrix2<f64>,
    kappa: f64,
    mu: f64,
    ell: f64,
    theta_min: f64,
) -> Result<f64> {
    if ell <= 0.0 {
        return Err(crate::error::Error::InvalidArgument(format!(
            "theta_opt needs a positive multiplier, got {ell}"
        )));
    }
    let p = principal(sigma);
    let total = p.values[0].abs() + p.values[1].abs();
    let t = ((kappa + mu) / (4.0 * mu * kappa * ell)).sqrt() * total;
    Ok(t.clamp(theta_min, 1.0))
}

/// Explicit optimal density of the convexified (SIMP, p = 1) problem:
/// `theta = 1` if `A^-1 tau . tau >= l`, else `sqrt(A^-1 tau . tau / l)`,
/// floored at `theta_min`.
pub fn simp_theta_update(
    tau: &KelvinVec,
    a_inv: &Matrix3<f64>,
    ell: f64,
    theta_min: f64,
) -> f64 {
    let q = (a_inv * tau).dot(tau);
    if q >= ell {
        1.0
    } else {
        (q / ell).sqrt().clamp(theta_min, 1.0)
    }
}

/// Intermediate-density ("gray") measure `int theta (1 - theta) dx` over the
/// active elements.
pub fn gray_measure(mesh: &Mesh2D, theta: &[f64]) -> f64 {
    let area = mesh.element_area();
    theta
        .iter()
        .enumerate()
        .filter(|(e, _)| mesh.active[*e])
        .map(|(_, t)| t * (1.0 - t) * area)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hooke::kelvin_vec;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn rank1_tensor_cases() {
        // theta = 0: pure beta
        let a0 = rank1_tensor(0.0, 0.3, 1.0, 2.0);
        assert!((a0 - Matrix2::identity() * 2.0).norm() < 1e-14);
        // 45 degrees: off-diagonal (lambda+ - lambda-)/2 = 1/12
        let a = rank1_tensor(0.5, PI / 4.0, 1.0, 2.0);
        assert!((a[(0, 1)] - 1.0 / 12.0).abs() < 1e-14);
        // phi and phi + pi coincide
        let b = rank1_tensor(0.5, 0.7, 1.0, 2.0);
        let c = rank1_tensor(0.5, 0.7 + PI, 1.0, 2.0);
        assert!((b - c).norm() < 1e-13);
        // eigenvalues are exactly (lambda+, lambda-)
        let eigs = a.symmetric_eigenvalues();
        let mut v: Vec<f64> = eigs.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        assert!((v[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rank1_derivatives_match_finite_differences() {
        let (theta, phi, al, be) = (0.42, 0.7, 1.0, 2.0);
        let t = 1e-6;
        let fd_t = (rank1_tensor(theta + t, phi, al, be) - rank1_tensor(theta - t, phi, al, be))
            / (2.0 * t);
        let fd_p = (rank1_tensor(theta, phi + t, al, be) - rank1_tensor(theta, phi - t, al, be))
            / (2.0 * t);
        assert!((fd_t - rank1_dtheta(theta, phi, al, be)).norm() < 1e-8);
        assert!((fd_p - rank1_dphi(theta, phi, al, be)).norm() < 1e-8);
        // isotropic point: dA/dphi = 0 when lambda+ = lambda-
        let dp = rank1_dphi(0.5, 0.3, 2.0, 2.0);
        assert!(dp.norm() < 1e-13);
    }

    #[test]
    fn pedersen_angles() {
        assert_eq!(pedersen_angle(&Matrix2::new(2.0, 0.0, 0.0, 1.0)), Some(0.0));
        let a = pedersen_angle(&Matrix2::new(1.0, 0.0, 0.0, -3.0)).unwrap();
        assert!((a - PI / 2.0).abs() < 1e-12);
        assert_eq!(pedersen_angle(&Matrix2::identity()), None);
        // rotated tensor
        let ang = PI / 6.0;
        let (s, c) = ang.sin_cos();
        let q = Matrix2::new(c, -s, s, c);
        let sig = q * Matrix2::new(2.0, 0.0, 0.0, 1.0) * q.transpose();
        assert!((pedersen_angle(&sig).unwrap() - ang).abs() < 1e-12);
        // adding pi to the rotation leaves the angle unchanged
        let q2 = -q;
        let sig2 = q2 * Matrix2::new(2.0, 0.0, 0.0, 1.0) * q2.transpose();
        assert!((pedersen_angle(&sig2).unwrap() - ang).abs() < 1e-12);
    }

    #[test]
    fn penalization_values() {
        assert!((penalize_theta(0.5) - 0.5).abs() < 1e-15);
        assert!((penalize_theta(0.25) - 0.14644660940672624).abs() < 1e-12);
        assert_eq!(penalize_theta(0.0), 0.0);
        assert!((penalize_theta(1.0) - 1.0).abs() < 1e-15);
        for t in [0.1, 0.2, 0.3, 0.4] {
            assert!(penalize_theta(t) < t);
            assert!(penalize_theta(1.0 - t) > 1.0 - t);
        }
    }

    #[test]
    fn theta_opt_values() {
        let s = Matrix2::new(1.0, 0.0, 0.0, 0.0);
        let t = theta_opt_elastic(&s, 1.0, 1.0, 1.0, 1e-3).unwrap();
        assert!((t - (0.5f64).sqrt()).abs() < 1e-12);
        // saturation
        let big = Matrix2::new(10.0, 0.0, 0.0, 5.0);
        assert_eq!(theta_opt_elastic(&big, 1.0, 1.0, 1.0, 1e-3).unwrap(), 1.0);
        // monotone decreasing in l
        let mut last = f64::INFINITY;
        for ell in [0.5, 1.0, 2.0, 4.0] {
            let v = theta_opt_elastic(&s, 1.0, 1.0, ell, 1e-3).unwrap();
            assert!(v <= last);
            last = v;
        }
        assert!(theta_opt_elastic(&s, 1.0, 1.0, 0.0, 1e-3).is_err());
    }

    #[test]
    fn simp_update_branches() {
        let a = crate::hooke::Hooke2D::isotropic(&crate::hooke::IsotropicModuli::new(1.0, 1.0));
        let a_inv = a.inverse().unwrap();
        // tau with A^-1 tau.tau = q
        let tau = kelvin_vec(&Matrix2::new(1.0, 0.0, 0.0, 1.0));
        let q = (a_inv * tau).dot(&tau);
        // branch 1: q >= l
        assert_eq!(simp_theta_update(&tau, &a_inv, q / 4.0, 1e-3), 1.0);
        // interior branch: l = 4q -> theta = 1/2
        assert!((simp_theta_update(&tau, &a_inv, 4.0 * q, 1e-3) - 0.5).abs() < 1e-12);
        // continuity at the branch point
        assert!((simp_theta_update(&tau, &a_inv, q, 1e-3) - 1.0).abs() < 1e-12);
    }
}
