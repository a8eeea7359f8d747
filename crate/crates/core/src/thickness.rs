//! Parametric thickness optimization of a membrane or an elastic plate:
//! adjoint gradients, projected gradient with volume projection, the
//! optimality-criteria iteration and H1 gradient smoothing.
//!
//! Design fields are per-element (P0); states are Q1.  All gradient checks
//! are against the discrete objective, so the per-element gradient is the
//! exact derivative of the assembled objective (the element mean of
//! `grad u . grad p`).

use crate::error::{Error, Result};
use crate::fem::{
    assemble_elasticity, assemble_scalar, compliance, grad_dot_mean, screened_poisson_p0,
    strain_at, HookeField, Quad1, ScalarCoeff,
};
use crate::field::{Association, ScalarField};
use crate::hooke::{Hooke2D, IsotropicModuli};
use crate::mesh::Mesh2D;
use crate::sparse::solve;

#[derive(Debug, Clone)]
pub enum ObjectiveKind {
    Compliance,
    /// least-squares tracking of a nodal target displacement
    TargetDisplacement(Vec<f64>),
}

#[derive(Debug, Clone)]
pub enum ThicknessModel {
    Membrane,
    Plate(IsotropicModuli),
}

#[derive(Debug, Clone)]
pub struct ThicknessProblem {
    pub mesh: Mesh2D,
    /// constant body load (membrane)
    pub body_load: f64,
    /// traction on Neumann-tagged edges (plate)
    pub surface_load: [f64; 2],
    pub h_min: f64,
    pub h_max: f64,
    pub h_mean: f64,
    pub objective: ObjectiveKind,
    pub model: ThicknessModel,
    pub solver_tol: f64,
}

impl ThicknessProblem {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.h_min && self.h_min <= self.h_mean && self.h_mean <= self.h_max) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < h_min <= h0 <= h_max, got {} {} {}",
                self.h_min, self.h_mean, self.h_max
            )));
        }
        Ok(())
    }
}

pub use crate::history::{IterRecord, OptHistory};

/// Solve the state equation for the thickness field `h`.
pub fn solve_state(p: &ThicknessProblem, h: &[f64]) -> Result<Vec<f64>> {
    match &p.model {
        ThicknessModel::Membrane => {
            let f = ScalarField::constant(&p.mesh, Association::PerElement, p.body_load);
            let sys = assemble_scalar(
                &p.mesh,
                &ScalarCoeff::Scalar(h),
                Some(&f),
                None,
                0.5 * p.h_min,
            )?;
            solve(&sys, p.solver_tol)
        }
        ThicknessModel::Plate(m) => {
            let base = Hooke2D::isotropic(m);
            let laws: Vec<Hooke2D> = h.iter().map(|&he| base.scale(he)).collect();
            let sys = assemble_elasticity(&p.mesh, &HookeField::PerElement(&laws), p.surface_load)?;
            solve(&sys, p.solver_tol)
        }
    }
}

/// Solve the adjoint equation `-div(h grad p) = -j'(u)`.
///
/// For the compliance `j' = f`, so `p = -u` analytically; for the target
/// objective `j'(u) = 2 (u - u0)`.
pub fn solve_adjoint(p: &ThicknessProblem, h: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    match &p.objective {
        ObjectiveKind::Compliance => Ok(u.iter().map(|v| -v).collect()),
        ObjectiveKind::TargetDisplacement(u0) => match &p.model {
            ThicknessModel::Membrane => {
                let mut sys = assemble_scalar(
                    &p.mesh,
                    &ScalarCoeff::Scalar(h),
                    None,
                    None,
                    0.5 * p.h_min,
                )?;
                // consistent rhs: -2 M (u - u0) before constraint elimination,
                // rebuilt here from the mass form
                let q = Quad1::for_mesh(&p.mesh);
                let mut rhs = vec![0.0; p.mesh.num_nodes()];
                for conn in &p.mesh.elements {
                    for g in &q.gauss {
                        let diff: f64 =
                            (0..4).map(|a| g.shape[a] * (u[conn[a]] - u0[conn[a]])).sum();
                        for a in 0..4 {
                            rhs[conn[a]] -= 2.0 * g.weight * g.shape[a] * diff;
                        }
                    }
                }
                for &(d, v) in &sys.constrained_dofs {
                    rhs[d] = v;
                }
                sys.rhs = rhs;
                solve(&sys, p.solver_tol)
            }
            ThicknessModel::Plate(_) => Err(Error::InvalidArgument(
                "target-displacement objective is only wired for the membrane model".into(),
            )),
        },
    }
}

/// Discrete objective value.
pub fn objective(p: &ThicknessProblem, u: &[f64]) -> f64 {
    match &p.objective {
        ObjectiveKind::Compliance => match &p.model {
            ThicknessModel::Membrane => {
                // int f u with the same consistent load used in assembly
                let q = Quad1::for_mesh(&p.mesh);
                let mut acc = 0.0;
                for (e, conn) in p.mesh.elements.iter().enumerate() {
                    if !p.mesh.active[e] {
                        continue;
                    }
                    for &n in conn {
                        acc += p.body_load * u[n] * q.hx * q.hy / 4.0;
                    }
                }
                acc
            }
            ThicknessModel::Plate(_) => compliance(&p.mesh, p.surface_load, u),
        },
        ObjectiveKind::TargetDisplacement(u0) => {
            let q = Quad1::for_mesh(&p.mesh);
            let mut acc = 0.0;
            for conn in &p.mesh.elements {
                for g in &q.gauss {
                    let diff: f64 = (0..4).map(|a| g.shape[a] * (u[conn[a]] - u0[conn[a]])).sum();
                    acc += g.weight * diff * diff;
                }
            }
            acc
        }
    }
}

/// Per-element gradient `J'(h) = grad u . grad p` (element mean, which is the
/// exact derivative of the discrete objective with respect to the element
/// thickness divided by the element area).
pub fn gradient(p: &ThicknessProblem, u: &[f64], padj: &[f64]) -> Vec<f64> {
    match &p.model {
        ThicknessModel::Membrane => grad_dot_mean(&p.mesh, u, padj),
        ThicknessModel::Plate(m) => {
            let base = Hooke2D::isotropic(m);
            let q = Quad1::for_mesh(&p.mesh);
            let area = p.mesh.element_area();
            p.mesh
                .elements
                .iter()
                .map(|conn| {
                    let mut acc = 0.0;
                    for g in &q.gauss {
                        let eu = strain_at(g, conn, u);
                        let ep = strain_at(g, conn, padj);
                        acc += g.weight * (base.k * eu).dot(&ep);
                    }
                    acc / area
                })
                .collect()
        }
    }
}

/// H1 smoothing of a raw per-element gradient: screened Poisson problem
/// `-eps^2 Lap g + g = g_raw` with natural boundary conditions.
pub fn regularize_gradient(mesh: &Mesh2D, g_raw: &[f64], eps: f64) -> Result<Vec<f64>> {
    screened_poisson_p0(mesh, g_raw, eps)
}

/// Bisection for a monotone scalar equation `f(l) = target`.
pub(crate) fn bisect(
    f: impl Fn(f64) -> f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    increasing: bool,
    tol: f64,
    max_iter: usize,
) -> f64 {
    let val = |l: f64| if increasing { f(l) } else { -f(l) };
    let t = if increasing { target } else { -target };
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let v = val(mid);
        if (v - t).abs() <= tol {
            return mid;
        }
        if v < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Project a thickness field onto the admissible set
/// `{h_min <= h <= h_max, mean(h) = h0}`:
/// `P(h) = clamp(h + l)` with the multiplier `l` found by dichotomy.
pub fn project_uad(
    mesh: &Mesh2D,
    h: &[f64],
    h_min: f64,
    h_max: f64,
    h_mean: f64,
) -> Result<(Vec<f64>, f64)> {
    if !(h_min <= h_mean && h_mean <= h_max) {
        return Err(Error::InfeasibleVolume { target: h_mean, lo: h_min, hi: h_max });
    }
    let active: Vec<usize> =
        (0..mesh.num_elements()).filter(|&e| mesh.active[e]).collect();
    let n = active.len() as f64;
    let mean_of = |l: f64| -> f64 {
        active.iter().map(|&e| (h[e] + l).clamp(h_min, h_max)).sum::<f64>() / n
    };
    // exact multiplier when the unshifted field already projects to the mean
    let tol = 1e-10 * h_max;
    let l = if (mean_of(0.0) - h_mean).abs() <= tol {
        0.0
    } else {
        let lo = h_min - h.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let hi = h_max - h.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        bisect(mean_of, h_mean, lo, hi, true, tol, 200)
    };
    let mut out = h.to_vec();
    for &e in &active {
        out[e] = (h[e] + l).clamp(h_min, h_max);
    }
    for e in 0..mesh.num_elements() {
        if !mesh.active[e] {
            out[e] = h_min;
        }
    }
    Ok((out, l))
}

/// Projected gradient descent with the adaptive step rule (grow 1.1x on
/// decrease, halve and retry on increase).  Stops when the optimality
/// residual `|h - P(h - mu J'(h))|_inf <= eps_stop * mu * h_max`.
pub fn projected_gradient_run(
    p: &ThicknessProblem,
    iterations: usize,
    mu0: f64,
    eps_stop: f64,
) -> Result<(Vec<f64>, OptHistory)> {
    p.validate()?;
    if iterations < 1 {
        return Err(Error::InvalidArgument("need at least one iteration".into()));
    }
    let mesh = &p.mesh;
    let area = mesh.element_area();
    let mut h = vec![p.h_mean; mesh.num_elements()];
    let mut history = OptHistory::default();
    let mut mu = mu0;

    let mut u = solve_state(p, &h)?;
    let mut j = objective(p, &u);

    for _ in 0..iterations {
        let padj = solve_adjoint(p, &h, &u)?;
        let g = gradient(p, &u, &padj);

        // optimality residual at the current iterate
        let raw: Vec<f64> = h.iter().zip(&g).map(|(hv, gv)| hv - mu * gv).collect();
        let (proj, l) = project_uad(mesh, &raw, p.h_min, p.h_max, p.h_mean)?;
        let residual = h
            .iter()
            .zip(&proj)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let volume: f64 = h
            .iter()
            .enumerate()
            .filter(|(e, _)| mesh.active[*e])
            .map(|(_, v)| v * area)
            .sum();
        history.push(IterRecord { objective: j, volume, step: mu, multiplier: l, residual });
        if residual <= eps_stop * mu * p.h_max {
            history.converged = true;
            return Ok((h, history));
        }

        // adaptive step: accept only non-increasing trials
        loop {
            let raw: Vec<f64> = h.iter().zip(&g).map(|(hv, gv)| hv - mu * gv).collect();
            let (trial, _) = project_uad(mesh, &raw, p.h_min, p.h_max, p.h_mean)?;
            let u_trial = solve_state(p, &trial)?;
            let j_trial = objective(p, &u_trial);
            if j_trial <= j {
                h = trial;
                u = u_trial;
                j = j_trial;
                mu *= 1.1;
                break;
            }
            mu *= 0.5;
            if mu < 1e-12 {
                history.aborted = Some("step underflow".into());
                return Ok((h, history));
            }
        }
    }
    Ok((h, history))
}

/// Optimality-criteria iteration for the compliance objective.
///
/// Each half step is an exact discrete minimization (state minimizes the
/// complementary energy over equilibrated Gauss-point fluxes; the thickness
/// update is the closed-form minimizer under the volume constraint), so the
/// objective decreases monotonically up to solver tolerance.
pub fn optimality_criteria_run(
    p: &ThicknessProblem,
    iterations: usize,
) -> Result<(Vec<f64>, OptHistory)> {
    p.validate()?;
    if !matches!(p.objective, ObjectiveKind::Compliance) {
        return Err(Error::InvalidArgument(
            "optimality criteria requires the compliance objective".into(),
        ));
    }
    let mesh = &p.mesh;
    let area = mesh.element_area();
    let active: Vec<usize> =
        (0..mesh.num_elements()).filter(|&e| mesh.active[e]).collect();
    let n_active = active.len() as f64;
    let mut h = vec![p.h_mean; mesh.num_elements()];
    let mut history = OptHistory::default();

    for it in 0..iterations {
        let u = solve_state(p, &h)?;
        let j = objective(p, &u);

        // element dual-energy weights c_e = int_e |tau|^2 (membrane) or
        // int_e A^-1 tau . tau (plate), tau the equilibrated flux/stress
        let c: Vec<f64> = match &p.model {
            ThicknessModel::Membrane => grad_dot_mean(mesh, &u, &u)
                .iter()
                .zip(h.iter())
                .map(|(d, he)| d * he * he * area)
                .collect(),
            ThicknessModel::Plate(m) => {
                let base = Hooke2D::isotropic(m);
                let q = Quad1::for_mesh(mesh);
                mesh.elements
                    .iter()
                    .enumerate()
                    .map(|(e, conn)| {
                        let mut acc = 0.0;
                        for g in &q.gauss {
                            let eps = strain_at(g, conn, &u);
                            acc += g.weight * (base.k * eps).dot(&eps);
                        }
                        acc * h[e] * h[e]
                    })
                    .collect()
            }
        };
        let cmax = active.iter().map(|&e| c[e]).fold(0.0f64, f64::max);
        if cmax <= 0.0 {
            return Err(Error::Optimization("all-zero stress field: load missing".into()));
        }

        // h(l) = clamp(sqrt(c_e / (l area))), dichotomy on the volume
        let h_of = |e: usize, l: f64| -> f64 {
            (c[e] / (l * area)).sqrt().clamp(p.h_min, p.h_max)
        };
        let mean_of = |l: f64| -> f64 { active.iter().map(|&e| h_of(e, l)).sum::<f64>() / n_active };
        let l_lo = cmax / (p.h_min * p.h_min * area) + 1.0;
        let l_hi = 1e-30;
        // mean is decreasing in l: bracket [hi_mean at l_hi ... lo at l_lo]
        let l = bisect(mean_of, p.h_mean, l_hi, l_lo, false, 1e-10 * p.h_max, 200);
        let mut h_new = h.clone();
        for &e in &active {
            h_new[e] = h_of(e, l);
        }
        let volume: f64 = active.iter().map(|&e| h_new[e] * area).sum();
        let residual = h
            .iter()
            .zip(&h_new)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        h = h_new;
        history.push(IterRecord { objective: j, volume, step: 0.0, multiplier: l, residual });
        if it > 0 && residual < 1e-12 * p.h_max {
            history.converged = true;
            break;
        }
    }
    Ok((h, history))
}
