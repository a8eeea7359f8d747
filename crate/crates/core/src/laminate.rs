//! Closed-form composite algebra: sequential laminates, Hashin–Shtrikman
//! bounds and attaining microstructures, and the optimal complementary-energy
//! bound used by the elasticity optimizer.
//!
//! All elasticity objects live in Kelvin notation (see [`crate::hooke`]).
//! The degenerate-void laminate (matrix phase B = 0) is handled by dedicated
//! operations instead of taking limits of the general two-phase formula,
//! which would cancel catastrophically.

use nalgebra::{Matrix2, Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::hooke::{Hooke2D, IsotropicModuli, KelvinVec};

/// Directions and weights of a sequential (rank-p) lamination.
#[derive(Debug, Clone, PartialEq)]
pub struct LaminationSpec {
    pub directions: Vec<Vector2<f64>>,
    pub weights: Vec<f64>,
}

impl LaminationSpec {
    pub fn new(directions: Vec<Vector2<f64>>, weights: Vec<f64>) -> Result<Self> {
        if directions.len() != weights.len() || directions.is_empty() {
            return Err(Error::InvalidArgument(
                "lamination needs matching, non-empty directions and weights".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("lamination weights sum to {sum}, not 1")));
        }
        if weights.iter().any(|w| *w < -1e-15) {
            return Err(Error::InvalidArgument("negative lamination weight".into()));
        }
        for e in &directions {
            if (e.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument("lamination directions must be unit".into()));
            }
        }
        Ok(Self { directions, weights })
    }
}

/// Harmonic and arithmetic two-phase means
/// `lambda_theta^- = (theta/alpha + (1-theta)/beta)^-1`,
/// `lambda_theta^+ = theta alpha + (1-theta) beta`.
///
/// These are the extreme eigenvalues of any two-phase composite mixed in
/// proportions `theta`, `1-theta`.
pub fn lam_bounds(alpha: f64, beta: f64, theta: f64) -> Result<(f64, f64)> {
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!("phase alpha must be positive, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta must be in [0,1], got {theta}")));
    }
    let lo = 1.0 / (theta / alpha + (1.0 - theta) / beta);
    let hi = theta * alpha + (1.0 - theta) * beta;
    Ok((lo, hi))
}

/// Simple laminate of two (possibly anisotropic) conductors in direction `e`:
/// `A* = tA + (1-t)B - t(1-t) (A-B)e (x) (A-B)^T e / ((1-t)Ae.e + tBe.e)`.
pub fn simple_laminate(
    a: &Matrix2<f64>,
    b: &Matrix2<f64>,
    theta: f64,
    e: &Vector2<f64>,
) -> Result<Matrix2<f64>> {
    let denom = (1.0 - theta) * (a * e).dot(e) + theta * (b * e).dot(e);
    if denom.abs() < 1e-300 {
        return Err(Error::SingularLamination("zero denominator in simple laminate".into()));
    }
    let d = a - b;
    let de = d * e;
    let dte = d.transpose() * e;
    Ok(theta * a + (1.0 - theta) * b - theta * (1.0 - theta) / denom * de * dte.transpose())
}

/// Rank-p sequential laminate with matrix `B` and inclusion `A`:
/// `theta (A* - B)^-1 = (A - B)^-1 + (1-theta) sum_i m_i e_i(x)e_i / (B e_i . e_i)`.
pub fn rank_p_laminate_scalar(
    a: &Matrix2<f64>,
    b: &Matrix2<f64>,
    theta: f64,
    spec: &LaminationSpec,
) -> Result<Matrix2<f64>> {
    let d = a - b;
    let d_inv = d.try_inverse().ok_or_else(|| {
        Error::SingularLamination(
            "A - B is singular; use the direct simple-laminate formula".into(),
        )
    })?;
    let mut m = d_inv;
    for (e, w) in spec.directions.iter().zip(&spec.weights) {
        let bee = (b * e).dot(e);
        if bee.abs() < 1e-300 {
            return Err(Error::SingularLamination("B e.e vanishes".into()));
        }
        m += (1.0 - theta) * w / bee * e * e.transpose();
    }
    let m_inv = m
        .try_inverse()
        .ok_or_else(|| Error::SingularLamination("accumulated lamination matrix singular".into()))?;
    Ok(b + theta * m_inv)
}

/// Report of the scalar Hashin–Shtrikman checks for a candidate tensor.
#[derive(Debug, Clone)]
pub struct HsReport {
    pub eig_bounds_ok: bool,
    pub lower_trace_ok: bool,
    pub upper_trace_ok: bool,
    /// non-negative slack means satisfied; `INFINITY` flags a division guard
    pub eig_slack: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
}

/// Check the Hashin–Shtrikman bounds for a symmetric 2x2 tensor mixed from
/// `alpha`, `beta` in proportions `theta`, `1-theta`:
/// eigenvalues within `[lambda^-, lambda^+]` and the two trace bounds
/// `sum 1/(l_i - alpha) <= 1/(l^- - alpha) + 1/(l^+ - alpha)`,
/// `sum 1/(beta - l_i) <= 1/(beta - l^-) + 1/(beta - l^+)`.
pub fn hs_check_scalar(a_star: &Matrix2<f64>, theta: f64, alpha: f64, beta: f64) -> Result<HsReport> {
    let (lo, hi) = lam_bounds(alpha, beta, theta)?;
    let eigs = a_star.symmetric_eigenvalues();
    let l = [eigs[0], eigs[1]];
    let scale = beta.abs().max(1.0);
    let eig_slack = l
        .iter()
        .map(|li| (li - lo).min(hi - li))
        .fold(f64::INFINITY, f64::min);
    let guard = 1e-14 * scale;
    let at_alpha = l.iter().any(|li| (li - alpha).abs() <= guard);
    let at_beta = l.iter().any(|li| (beta - li).abs() <= guard);
    let (lower_slack, upper_slack);
    if at_alpha {
        lower_slack = f64::INFINITY;
    } else {
        let lhs: f64 = l.iter().map(|li| 1.0 / (li - alpha)).sum();
        let rhs = 1.0 / (lo - alpha) + 1.0 / (hi - alpha);
        lower_slack = rhs - lhs;
    }
    if at_beta {
        upper_slack = f64::INFINITY;
    } else {
        let lhs: f64 = l.iter().map(|li| 1.0 / (beta - li)).sum();
        let rhs = 1.0 / (beta - lo) + 1.0 / (beta - hi);
        upper_slack = rhs - lhs;
    }
    Ok(HsReport {
        eig_bounds_ok: eig_slack >= -1e-12 * scale,
        lower_trace_ok: lower_slack >= -1e-10,
        upper_trace_ok: upper_slack >= -1e-10,
        eig_slack,
        lower_slack,
        upper_slack,
    })
}

/// Lamination weights that attain the upper Hashin–Shtrikman bound for
/// target eigenvalues `l`:
/// `m_i = beta (lambda^+ - l_i) / ((1-theta)(beta-alpha)(beta - l_i))`.
///
/// The targets must lie on the upper-bound surface (checked to 1e-8).
pub fn hs_attaining_weights(
    l: &[f64; 2],
    theta: f64,
    alpha: f64,
    beta: f64,
) -> Result<LaminationSpec> {
    let (lo, hi) = lam_bounds(alpha, beta, theta)?;
    let lhs: f64 = l.iter().map(|li| 1.0 / (beta - li)).sum();
    let rhs = 1.0 / (beta - lo) + 1.0 / (beta - hi);
    let residual = lhs - rhs;
    if residual.abs() > 1e-8 * rhs.abs().max(1.0) {
        return Err(Error::OffBoundSurface { residual });
    }
    let weights: Vec<f64> = l
        .iter()
        .map(|li| beta * (hi - li) / ((1.0 - theta) * (beta - alpha) * (beta - li)))
        .collect();
    LaminationSpec::new(vec![Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)], weights)
}

/// The lamination cost tensor `f_A^c(e)` of an isotropic phase, as a Kelvin
/// quadratic form:
/// `f_A^c(e) xi . xi = A xi . xi - |A xi e|^2 / mu
///   + (mu + la) ((A xi) e . e)^2 / (mu (2 mu + la))`.
pub fn fc_tensor(a: &IsotropicModuli, e: &Vector2<f64>) -> Result<Matrix3<f64>> {
    let (la, mu) = (a.lambda, a.mu);
    if mu <= 0.0 || 2.0 * mu + la <= 0.0 {
        return Err(Error::InvalidArgument("fc tensor needs mu > 0 and 2mu + lambda > 0".into()));
    }
    let apply = |xi: &Matrix2<f64>| 2.0 * mu * xi + la * xi.trace() * Matrix2::identity();
    let quad = |xi: &Matrix2<f64>| -> f64 {
        let axi = apply(xi);
        let axie = axi * e;
        (axi * xi).trace() - axie.dot(&axie) / mu
            + (mu + la) / (mu * (2.0 * mu + la)) * axie.dot(e).powi(2)
    };
    // polarization of the quadratic form over the Kelvin basis
    let basis = [
        Matrix2::new(1.0, 0.0, 0.0, 0.0),
        Matrix2::new(0.0, 0.0, 0.0, 1.0),
        Matrix2::new(0.0, 1.0 / crate::hooke::SQRT2, 1.0 / crate::hooke::SQRT2, 0.0),
    ];
    let mut f = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let sum = basis[i] + basis[j];
            f[(i, j)] = 0.5 * (quad(&sum) - quad(&basis[i]) - quad(&basis[j]));
        }
    }
    Ok(f)
}

fn fc_sum(a: &IsotropicModuli, spec: &LaminationSpec) -> Result<Matrix3<f64>> {
    let mut sum = Matrix3::zeros();
    for (e, w) in spec.directions.iter().zip(&spec.weights) {
        sum += *w * fc_tensor(a, e)?;
    }
    Ok(sum)
}

/// Rank-p sequential laminate of solid `A` with void inclusions:
/// `(A*)^-1 = A^-1 + (1-theta)/theta (sum_i m_i f_A^c(e_i))^-1`.
///
/// Each `f_A^c(e)` is a rank-1 Kelvin quadratic form, so the accumulated sum
/// is invertible only for at least three weighted directions; rank-2
/// laminates carry no stress transverse to their frame and must go through
/// [`void_laminate_complementary_energy`] (pseudo-inverse on the carried
/// subspace) or the ersatz-regularized law.
pub fn rank_p_laminate_elastic_void(
    a: &IsotropicModuli,
    theta: f64,
    spec: &LaminationSpec,
) -> Result<Hooke2D> {
    if theta <= 0.0 {
        return Err(Error::InvalidArgument("void laminate needs theta > 0".into()));
    }
    if theta >= 1.0 {
        return Ok(Hooke2D::isotropic(a));
    }
    let sum = fc_sum(a, spec)?;
    let eigs = sum.symmetric_eigenvalues();
    let scale = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if eigs.min() <= 1e-12 * scale.max(1e-300) {
        return Err(Error::SingularLamination(format!(
            "accumulated f^c sum is rank-deficient (eigenvalues {:?}); the rank-1 \
             cost forms need at least three weighted directions to span the \
             symmetric tensors",
            eigs
        )));
    }
    let sum_inv = sum
        .try_inverse()
        .ok_or_else(|| Error::SingularLamination("f^c sum not invertible".into()))?;
    let a_inv = Hooke2D::isotropic(a).inverse()?;
    let astar_inv = a_inv + (1.0 - theta) / theta * sum_inv;
    let astar = astar_inv
        .try_inverse()
        .ok_or_else(|| Error::SingularLamination("A* inverse failed".into()))?;
    Hooke2D::new(astar)
}

/// Complementary energy `(A*)^-1 sigma . sigma` of the rank-p void laminate,
/// valid also when the cost sum is rank-deficient (pseudo-inverse of the
/// singular directions; the laminate carries no stress there).
pub fn void_laminate_complementary_energy(
    a: &IsotropicModuli,
    theta: f64,
    spec: &LaminationSpec,
    sigma: &KelvinVec,
) -> Result<f64> {
    let sum = fc_sum(a, spec)?;
    let eig = nalgebra::SymmetricEigen::new(sum);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut pinv = Matrix3::zeros();
    for i in 0..3 {
        let ev = eig.eigenvalues[i];
        if ev > 1e-12 * scale.max(1e-300) {
            let v = eig.eigenvectors.column(i);
            pinv += 1.0 / ev * v * v.transpose();
        }
    }
    let a_inv = Hooke2D::isotropic(a).inverse()?;
    let m = a_inv + (1.0 - theta) / theta * pinv;
    Ok((m * sigma).dot(sigma))
}

/// Regularized void laminate for assembly: the void phase is replaced by the
/// ersatz material `delta * A`, which removes the structural shear
/// singularity of the ideal laminate while converging to it as `delta -> 0`:
/// `(A*)^-1 = A^-1 + (1-theta) (delta A + theta sum_i m_i f_A^c(e_i))^-1`.
pub fn rank_p_laminate_elastic_ersatz(
    a: &IsotropicModuli,
    theta: f64,
    spec: &LaminationSpec,
    delta: f64,
) -> Result<Hooke2D> {
    let sum = fc_sum(a, spec)?;
    let ka = Hooke2D::isotropic(a);
    let m = delta * ka.k + theta * sum;
    let m_inv = m
        .try_inverse()
        .ok_or_else(|| Error::SingularLamination("ersatz lamination matrix singular".into()))?;
    let astar_inv = ka.inverse()? + (1.0 - theta) * m_inv;
    let astar = astar_inv
        .try_inverse()
        .ok_or_else(|| Error::SingularLamination("A* inverse failed".into()))?;
    Hooke2D::new(astar)
}

/// Optimal 2-D complementary-energy bound for a void-mixed composite:
/// `g*(sigma) = (kappa + mu)/(4 mu kappa) (|s1| + |s2|)^2` with the optimal
/// rank-2 weights `m1 = |s2|/(|s1|+|s2|)`, `m2 = |s1|/(|s1|+|s2|)` and
/// lamination directions along the eigenvectors of `sigma`.
#[derive(Debug, Clone)]
pub struct GStar2d {
    pub value: f64,
    pub weights: [f64; 2],
    pub directions: [Vector2<f64>; 2],
    /// true when `sigma = 0` and the weights are meaningless
    pub degenerate: bool,
}

pub fn g_star_2d(sigma: &Matrix2<f64>, kappa: f64, mu: f64) -> GStar2d {
    let p = crate::hooke::principal(sigma);
    let (s1, s2) = (p.values[0], p.values[1]);
    let total = s1.abs() + s2.abs();
    let angle = p.angle.unwrap_or(0.0);
    let e1 = Vector2::new(angle.cos(), angle.sin());
    let e2 = Vector2::new(-angle.sin(), angle.cos());
    if total == 0.0 {
        return GStar2d {
            value: 0.0,
            weights: [f64::NAN, f64::NAN],
            directions: [e1, e2],
            degenerate: true,
        };
    }
    let value = (kappa + mu) / (4.0 * mu * kappa) * total * total;
    // weight convention: m1 belongs to the direction of s1 (the leading
    // eigenvalue) and is proportional to |s2|
    GStar2d {
        value,
        weights: [s2.abs() / total, s1.abs() / total],
        directions: [e1, e2],
        degenerate: false,
    }
}

/// 3-D bound for zero Poisson ratio (`kappa = 2 mu / 3`), split in two
/// regimes at `|s3| = |s1| + |s2|` for eigenvalues sorted by magnitude
/// `|s1| <= |s2| <= |s3|`.
#[derive(Debug, Clone)]
pub struct GStar3d {
    pub value: f64,
    pub weights: [f64; 3],
    pub rank2_regime: bool,
    pub degenerate: bool,
}

pub fn g_star_3d(eigs: [f64; 3], mu: f64) -> Result<GStar3d> {
    let s = [eigs[0].abs(), eigs[1].abs(), eigs[2].abs()];
    if !(s[0] <= s[1] && s[1] <= s[2]) {
        return Err(Error::InvalidArgument(
            "eigenvalues must be sorted by increasing magnitude".into(),
        ));
    }
    let total = s[0] + s[1] + s[2];
    if total == 0.0 {
        return Ok(GStar3d {
            value: 0.0,
            weights: [f64::NAN; 3],
            rank2_regime: false,
            degenerate: true,
        });
    }
    if s[2] <= s[0] + s[1] {
        let value = (s[0] + s[1] + s[2]).powi(2) / (4.0 * mu);
        let weights = [
            (s[2] + s[1] - s[0]) / total,
            (s[0] - s[1] + s[2]) / total,
            (s[0] + s[1] - s[2]) / total,
        ];
        Ok(GStar3d { value, weights, rank2_regime: false, degenerate: false })
    } else {
        let value = ((s[0] + s[1]).powi(2) + s[2] * s[2]) / (2.0 * mu);
        let pair = s[0] + s[1];
        let weights = if pair == 0.0 {
            // formula limit with |s1| = 0
            [1.0, 0.0, 0.0]
        } else {
            [s[1] / pair, s[0] / pair, 0.0]
        };
        Ok(GStar3d { value, weights, rank2_regime: true, degenerate: false })
    }
}

/// Slack report for the isotropic Hashin–Shtrikman moduli bounds.
///
/// The printed source has sign typos in three of the four second terms
/// (they would prevent the bounds from collapsing to Hill's exact result
/// for equal shear moduli); the corrected inequalities are used:
///
/// ```text
/// kappa* >= kappa_B + theta / (1/(kappa_A-kappa_B) + (1-theta)/(2mu_B+la_B))
/// kappa* <= kappa_A - (1-theta) / (1/(kappa_A-kappa_B) - theta/(2mu_A+la_A))
/// mu*    >= mu_B + theta / (1/(mu_A-mu_B) + (1-theta) c_B)
/// mu*    <= mu_A - (1-theta) / (1/(mu_A-mu_B) - theta c_A)
/// ```
/// with `c_P = 2 (N-1) (kappa_P + 2 mu_P) / ((N^2+N-2) mu_P (2 mu_P + la_P))`.
#[derive(Debug, Clone)]
pub struct HsModuliReport {
    pub kappa_interval: (f64, f64),
    pub mu_interval: (f64, f64),
    /// slack >= 0 iff the corresponding bound is satisfied;
    /// order: kappa lower, kappa upper, mu lower, mu upper
    pub slacks: [f64; 4],
    pub ok: [bool; 4],
    /// division guards hit (modulus exactly at a phase value)
    pub guarded: bool,
}

pub fn hs_isotropic_moduli_check(
    kappa_star: f64,
    mu_star: f64,
    theta: f64,
    a: &IsotropicModuli,
    b: &IsotropicModuli,
    n: usize,
) -> Result<HsModuliReport> {
    let nf = n as f64;
    let kappa = |m: &IsotropicModuli| m.lambda + 2.0 * m.mu / nf;
    let (ka, kb) = (kappa(a), kappa(b));
    let (ma, mb) = (a.mu, b.mu);
    if !(mb < ma && kb < ka && mb >= 0.0 && kb >= 0.0) {
        return Err(Error::InvalidArgument(
            "need 0 <= mu_B < mu_A and 0 <= kappa_B < kappa_A".into(),
        ));
    }
    let c = |m: &IsotropicModuli| {
        2.0 * (nf - 1.0) * (kappa(m) + 2.0 * m.mu)
            / ((nf * nf + nf - 2.0) * m.mu * (2.0 * m.mu + m.lambda))
    };
    let kappa_lo = kb + theta / (1.0 / (ka - kb) + (1.0 - theta) / (2.0 * mb + b.lambda));
    let kappa_hi = ka - (1.0 - theta) / (1.0 / (ka - kb) - theta / (2.0 * ma + a.lambda));
    let (mu_lo, mu_hi);
    if mb > 0.0 {
        mu_lo = mb + theta / (1.0 / (ma - mb) + (1.0 - theta) * c(b));
    } else {
        // void weak phase: lower bound degenerates to mu* >= 0
        mu_lo = 0.0;
    }
    mu_hi = ma - (1.0 - theta) / (1.0 / (ma - mb) - theta * c(a));

    let guard = 1e-14 * ka.max(ma).max(1.0);
    let guarded = (kappa_star - ka).abs() <= guard
        || (kappa_star - kb).abs() <= guard
        || (mu_star - ma).abs() <= guard
        || (mu_star - mb).abs() <= guard;

    let slacks = [
        kappa_star - kappa_lo,
        kappa_hi - kappa_star,
        mu_star - mu_lo,
        mu_hi - mu_star,
    ];
    let tol = -1e-12 * ka.max(ma);
    Ok(HsModuliReport {
        kappa_interval: (kappa_lo, kappa_hi),
        mu_interval: (mu_lo, mu_hi),
        slacks,
        ok: slacks.map(|s| s >= tol),
        guarded,
    })
}
