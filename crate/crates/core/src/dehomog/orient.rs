//! Orientation fields on the double angle, their singularities, and the
//! harmonic regularization.
//!
//! The cell orientation `alpha` only matters modulo pi, so everything works
//! with the unit vector `b = (cos 2a, sin 2a)`.  The rotated Hooke law is
//! quadratic in `b` through the affine Kelvin matrix `S(b)`, which makes the
//! constrained smoothing problem amenable to Newton steps on a linear
//! saddle-point system.

use nalgebra::{Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::fem::Quad1;
use crate::history::OptHistory;
use crate::hooke::{KelvinVec, SQRT2};
use crate::mesh::Mesh2D;
use crate::sparse::{minres, CsrMatrix};

/// Per-element unit vectors of the doubled angle `beta = 2 alpha`.
#[derive(Debug, Clone)]
pub struct OrientationField {
    pub b: Vec<[f64; 2]>,
}

impl OrientationField {
    pub fn from_angles(alpha: &[f64]) -> Self {
        Self { b: alpha.iter().map(|a| [(2.0 * a).cos(), (2.0 * a).sin()]).collect() }
    }

    /// Cell angles `alpha = beta/2 mod pi`.
    pub fn angles(&self) -> Vec<f64> {
        self.b
            .iter()
            .map(|b| (0.5 * b[1].atan2(b[0])).rem_euclid(std::f64::consts::PI))
            .collect()
    }
}

/// Affine part of `S(b)`: `S(b) = S0 + b1 S1 + b2 S2` with `S(b)` the Kelvin
/// rotation by `beta/2`.
pub(crate) fn s_const() -> Matrix3<f64> {
    Matrix3::new(0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0)
}

pub(crate) fn s_lin(component: usize) -> Matrix3<f64> {
    match component {
        0 => Matrix3::new(0.5, -0.5, 0.0, -0.5, 0.5, 0.0, 0.0, 0.0, 1.0),
        _ => Matrix3::new(
            0.0,
            0.0,
            1.0 / SQRT2,
            0.0,
            0.0,
            -1.0 / SQRT2,
            -1.0 / SQRT2,
            1.0 / SQRT2,
            0.0,
        ),
    }
}

pub(crate) fn s_of(b: [f64; 2]) -> Matrix3<f64> {
    s_const() + b[0] * s_lin(0) + b[1] * s_lin(1)
}

/// Area-weighted nodal lift of a per-element orientation, renormalized.
pub fn nodal_orientation(mesh: &Mesh2D, b: &OrientationField) -> Vec<[f64; 2]> {
    let mut acc = vec![[0.0; 2]; mesh.num_nodes()];
    for (e, conn) in mesh.elements.iter().enumerate() {
        if !mesh.active[e] {
            continue;
        }
        for &n in conn {
            acc[n][0] += b.b[e][0];
            acc[n][1] += b.b[e][1];
        }
    }
    for v in &mut acc {
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if norm > 1e-12 {
            v[0] /= norm;
            v[1] /= norm;
        } else {
            *v = [1.0, 0.0];
        }
    }
    acc
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a;
    while x > std::f64::consts::PI {
        x -= 2.0 * std::f64::consts::PI;
    }
    while x < -std::f64::consts::PI {
        x += 2.0 * std::f64::consts::PI;
    }
    x
}

/// Winding numbers of `b` around interior mesh vertices, reported as the
/// half-integer charges of the underlying orientation `alpha = beta/2`.
/// Only nonzero charges are returned.
pub fn detect_singularities(mesh: &Mesh2D, field: &OrientationField) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let angle = |e: usize| -> f64 { field.b[e][1].atan2(field.b[e][0]) };
    for j in 1..mesh.ny {
        for i in 1..mesh.nx {
            let cycle = [
                mesh.element_index(i - 1, j - 1),
                mesh.element_index(i, j - 1),
                mesh.element_index(i, j),
                mesh.element_index(i - 1, j),
            ];
            if cycle.iter().any(|&e| !mesh.active[e]) {
                continue;
            }
            let mut total = 0.0;
            for k in 0..4 {
                total += wrap_angle(angle(cycle[(k + 1) % 4]) - angle(cycle[k]));
            }
            let winding = total / (2.0 * std::f64::consts::PI);
            if winding.abs() > 0.25 {
                out.push((mesh.node_index(i, j), 0.5 * winding.round()));
            }
        }
    }
    out
}

/// Total winding of `b` along the outer boundary of the active region
/// (per the discrete index theorem it equals twice the sum of the interior
/// alpha-charges).
pub fn boundary_winding(mesh: &Mesh2D, field: &OrientationField) -> f64 {
    let angle = |e: usize| -> f64 { field.b[e][1].atan2(field.b[e][0]) };
    // walk the outer ring of elements counter-clockwise
    let (nx, ny) = (mesh.nx, mesh.ny);
    let mut ring = Vec::new();
    for i in 0..nx {
        ring.push(mesh.element_index(i, 0));
    }
    for j in 1..ny {
        ring.push(mesh.element_index(nx - 1, j));
    }
    for i in (0..nx - 1).rev() {
        ring.push(mesh.element_index(i, ny - 1));
    }
    for j in (1..ny - 1).rev() {
        ring.push(mesh.element_index(0, j));
    }
    let mut total = 0.0;
    for k in 0..ring.len() {
        total += wrap_angle(angle(ring[(k + 1) % ring.len()]) - angle(ring[k]));
    }
    total / (2.0 * std::f64::consts::PI)
}

/// `b ^ grad b = b1 grad b2 - b2 grad b1` at a Gauss point of a nodal field
/// (approximates `grad beta`).
fn b_wedge_grad(
    g: &crate::fem::GaussData,
    conn: &[usize; 4],
    nodal: &[[f64; 2]],
) -> Vector2<f64> {
    let mut b = [0.0; 2];
    let mut gb1 = Vector2::zeros();
    let mut gb2 = Vector2::zeros();
    for a in 0..4 {
        let v = nodal[conn[a]];
        b[0] += g.shape[a] * v[0];
        b[1] += g.shape[a] * v[1];
        gb1 += Vector2::new(g.grad[a][0], g.grad[a][1]) * v[0];
        gb2 += Vector2::new(g.grad[a][0], g.grad[a][1]) * v[1];
    }
    b[0] * gb2 - b[1] * gb1
}

/// Weak harmonic residual of the doubled angle on the nodal lift:
/// `max_i |int grad(beta) . grad(N_i)| / ||grad N_i||` over interior basis
/// functions, with `grad beta = b ^ grad b`.
pub fn harmonic_residual(mesh: &Mesh2D, nodal: &[[f64; 2]]) -> f64 {
    let q = Quad1::for_mesh(mesh);
    let n = mesh.num_nodes();
    let mut r = vec![0.0; n];
    let mut diag = vec![0.0; n];
    for conn in &mesh.elements {
        for g in &q.gauss {
            let w = b_wedge_grad(g, conn, nodal);
            for a in 0..4 {
                let ga = Vector2::new(g.grad[a][0], g.grad[a][1]);
                r[conn[a]] += g.weight * w.dot(&ga);
                diag[conn[a]] += g.weight * ga.dot(&ga);
            }
        }
    }
    let boundary: Vec<bool> = {
        let mut b = vec![false; n];
        for e in &mesh.boundary_edges {
            b[e.nodes.0] = true;
            b[e.nodes.1] = true;
        }
        b
    };
    let mut worst = 0.0f64;
    for i in 0..n {
        if !boundary[i] && diag[i] > 0.0 {
            worst = worst.max(r[i].abs() / diag[i].sqrt());
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct RegularizeConfig {
    /// weight of the smoothing term
    pub eta: f64,
    pub newton_iters: usize,
    /// stop when the harmonic residual falls below this
    pub tol: f64,
    pub solver_tol: f64,
}

impl Default for RegularizeConfig {
    fn default() -> Self {
        Self { eta: 0.1, newton_iters: 50, tol: 1e-10, solver_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct RegularizeReport {
    pub residual_before: f64,
    pub residual_after: f64,
    pub history: OptHistory,
    /// number of damped fallback steps taken
    pub fallbacks: usize,
}

/// Objective of the regularization:
/// `int (A*(m,b)^-1 sigma . sigma + eta^2 |b ^ grad b|^2)` with
/// `A*(m,b) = S(b)^T K0(m) S(b)` evaluated on the (renormalized) nodal field.
fn smoothing_objective(
    mesh: &Mesh2D,
    nodal: &[[f64; 2]],
    k0_inv: &[Matrix3<f64>],
    sigma: &[KelvinVec],
    eta: f64,
) -> f64 {
    let q = Quad1::for_mesh(mesh);
    let mut acc = 0.0;
    for (e, conn) in mesh.elements.iter().enumerate() {
        if !mesh.active[e] {
            continue;
        }
        for (gi, g) in q.gauss.iter().enumerate() {
            let mut b = [0.0; 2];
            for a in 0..4 {
                b[0] += g.shape[a] * nodal[conn[a]][0];
                b[1] += g.shape[a] * nodal[conn[a]][1];
            }
            let norm = (b[0] * b[0] + b[1] * b[1]).sqrt().max(1e-12);
            let s = s_of([b[0] / norm, b[1] / norm]);
            let ss = s * sigma[4 * e + gi];
            acc += g.weight * (k0_inv[e] * ss).dot(&ss);
            let w = b_wedge_grad(g, conn, nodal);
            acc += g.weight * eta * eta * w.dot(&w);
        }
    }
    acc
}

/// Newton regularization of the orientation towards a harmonic doubled
/// angle.  `k0` is the unrotated Hooke law per element, `sigma` the
/// Gauss-point stresses of the current design.
pub fn regularize_orientation(
    mesh: &Mesh2D,
    b0: &OrientationField,
    k0: &[Matrix3<f64>],
    sigma: &[KelvinVec],
    cfg: &RegularizeConfig,
) -> Result<(OrientationField, RegularizeReport)> {
    if cfg.eta <= 0.0 {
        return Err(Error::InvalidArgument("eta must be positive".into()));
    }
    let q = Quad1::for_mesh(mesh);
    let n = mesh.num_nodes();
    let interior: Vec<Option<usize>> = {
        let mut boundary = vec![false; n];
        for e in &mesh.boundary_edges {
            boundary[e.nodes.0] = true;
            boundary[e.nodes.1] = true;
        }
        let mut idx = 0;
        boundary
            .iter()
            .map(|b| {
                if *b {
                    None
                } else {
                    idx += 1;
                    Some(idx - 1)
                }
            })
            .collect()
    };
    let n_int = interior.iter().flatten().count();
    let ndof = n + n_int;

    let k0_inv: Vec<Matrix3<f64>> = k0
        .iter()
        .map(|k| k.try_inverse().ok_or_else(|| Error::SingularLamination("K0 singular".into())))
        .collect::<Result<_>>()?;

    let mut nodal = nodal_orientation(mesh, b0);
    let residual_before = harmonic_residual(mesh, &nodal);
    let mut history = OptHistory::default();
    let mut fallbacks = 0usize;
    let mut objective = smoothing_objective(mesh, &nodal, &k0_inv, sigma, cfg.eta);

    for _ in 0..cfg.newton_iters {
        let residual = harmonic_residual(mesh, &nodal);
        history.push(crate::history::IterRecord {
            objective,
            volume: 0.0,
            step: 1.0,
            multiplier: 0.0,
            residual,
        });
        if residual <= cfg.tol {
            break;
        }

        // KKT system in (s, p): the increment is parametrized tangentially,
        // delta b = s * b_perp per node, since normal components are removed
        // by the renormalization anyway and keep the system from being
        // solvable
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut rhs = vec![0.0; ndof];
        for (e, conn) in mesh.elements.iter().enumerate() {
            if !mesh.active[e] {
                continue;
            }
            for (gi, g) in q.gauss.iter().enumerate() {
                let mut b = [0.0; 2];
                for a in 0..4 {
                    b[0] += g.shape[a] * nodal[conn[a]][0];
                    b[1] += g.shape[a] * nodal[conn[a]][1];
                }
                let sv = &sigma[4 * e + gi];
                let kinv = &k0_inv[e];
                let n_sigma = [s_lin(0) * sv, s_lin(1) * sv];
                let sb = s_of(b) * sv;
                // per nodal dof a: energy direction q_a and wedge direction d_a
                let mut q_dir = [KelvinVec::zeros(); 4];
                let mut d_dir = [Vector2::zeros(); 4];
                for a in 0..4 {
                    let t = [-nodal[conn[a]][1], nodal[conn[a]][0]];
                    q_dir[a] = g.shape[a] * (t[0] * n_sigma[0] + t[1] * n_sigma[1]);
                    let dot = b[0] * nodal[conn[a]][0] + b[1] * nodal[conn[a]][1];
                    d_dir[a] = dot * Vector2::new(g.grad[a][0], g.grad[a][1]);
                }
                let wcur = b_wedge_grad(g, conn, &nodal);
                let eta2 = cfg.eta * cfg.eta;
                for a in 0..4 {
                    let row = conn[a];
                    rhs[row] -= g.weight * (kinv * sb).dot(&q_dir[a]);
                    rhs[row] -= g.weight * eta2 * wcur.dot(&d_dir[a]);
                    for b2 in 0..4 {
                        let val = g.weight
                            * ((kinv * q_dir[a]).dot(&q_dir[b2])
                                + eta2 * d_dir[a].dot(&d_dir[b2]));
                        if val != 0.0 {
                            triplets.push((row, conn[b2], val));
                        }
                    }
                    // constraint coupling with interior multipliers
                    for b2 in 0..4 {
                        if let Some(iq) = interior[conn[b2]] {
                            let gq = Vector2::new(g.grad[b2][0], g.grad[b2][1]);
                            let val = g.weight * d_dir[a].dot(&gq);
                            if val != 0.0 {
                                triplets.push((row, n + iq, val));
                                triplets.push((n + iq, row, val));
                            }
                        }
                    }
                }
                for a in 0..4 {
                    if let Some(iq) = interior[conn[a]] {
                        let gq = Vector2::new(g.grad[a][0], g.grad[a][1]);
                        rhs[n + iq] -= g.weight * wcur.dot(&gq);
                    }
                }
            }
        }
        // small Tikhonov term keeps the energy block definite where sigma
        // and the smoothing term both degenerate
        let scale = triplets
            .iter()
            .filter(|(r, c, _)| r == c && *r < n)
            .map(|(_, _, v)| v.abs())
            .fold(0.0f64, f64::max);
        for d in 0..n {
            triplets.push((d, d, 1e-9 * scale.max(1e-30)));
        }
        let kkt = CsrMatrix::from_triplets(ndof, &mut triplets);

        let delta = match minres(&kkt, &rhs, cfg.solver_tol, 60 * ndof) {
            Ok(d) => d,
            Err(_) => {
                // damped fallback: drop the multiplier block and take half a
                // smoothing step
                fallbacks += 1;
                let mut t2 = kkt_energy_block(&kkt, n);
                let a2 = CsrMatrix::from_triplets(n, &mut t2);
                let sys = crate::sparse::SparseSystem::new(
                    a2,
                    rhs[..n].to_vec(),
                    vec![],
                    vec![],
                    crate::sparse::Nullspace::None,
                );
                let mut d = crate::sparse::solve(&sys, 1e-8)?;
                for v in &mut d {
                    *v *= 0.5;
                }
                d.extend(std::iter::repeat(0.0).take(n_int));
                d
            }
        };

        // rotate each nodal vector by the tangential increment and damp by
        // halves if neither the objective nor the residual improves
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let mut trial = nodal.clone();
            for i in 0..n {
                let s = step * delta[i];
                let v = [
                    nodal[i][0] - s * nodal[i][1],
                    nodal[i][1] + s * nodal[i][0],
                ];
                let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
                trial[i] = [v[0] / norm, v[1] / norm];
            }
            let obj_trial = smoothing_objective(mesh, &trial, &k0_inv, sigma, cfg.eta);
            let res_trial = harmonic_residual(mesh, &trial);
            if obj_trial <= objective + 1e-12 * objective.abs() || res_trial < residual {
                nodal = trial;
                objective = obj_trial;
                improved = true;
                break;
            }
            step *= 0.5;
            fallbacks += 1;
        }
        if !improved {
            break;
        }
    }

    let residual_after = harmonic_residual(mesh, &nodal);
    // write back per-element orientation from the corner average
    let b = mesh
        .elements
        .iter()
        .map(|conn| {
            let mut v = [0.0; 2];
            for &nid in conn {
                v[0] += nodal[nid][0];
                v[1] += nodal[nid][1];
            }
            let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if norm > 1e-12 {
                [v[0] / norm, v[1] / norm]
            } else {
                [1.0, 0.0]
            }
        })
        .collect();
    Ok((
        OrientationField { b },
        RegularizeReport { residual_before, residual_after, history, fallbacks },
    ))
}

/// Extract the leading `m x m` block of a CSR matrix as triplets.
fn kkt_energy_block(a: &CsrMatrix, m: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for r in 0..m {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            if a.col_idx[k] < m {
                out.push((r, a.col_idx[k], a.values[k]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hooke::{Hooke2D, IsotropicModuli};
    use crate::mesh::build_rect_mesh;

    fn vortex_field(mesh: &Mesh2D, center: [f64; 2]) -> OrientationField {
        let b = (0..mesh.num_elements())
            .map(|e| {
                let [x, y] = mesh.element_center(e);
                let a = (y - center[1]).atan2(x - center[0]);
                [a.cos(), a.sin()]
            })
            .collect();
        OrientationField { b }
    }

    #[test]
    fn constant_field_has_no_singularities() {
        let mesh = build_rect_mesh(8, 8, 1.0, 1.0, &[]).unwrap();
        let f = OrientationField { b: vec![[1.0, 0.0]; mesh.num_elements()] };
        assert!(detect_singularities(&mesh, &f).is_empty());
    }

    #[test]
    fn vortex_has_single_half_charge() {
        let mesh = build_rect_mesh(9, 9, 1.0, 1.0, &[]).unwrap();
        let f = vortex_field(&mesh, [0.5, 0.5]);
        let s = detect_singularities(&mesh, &f);
        assert_eq!(s.len(), 1, "expected one singularity, got {s:?}");
        assert_eq!(s[0].1, 0.5);
        // index theorem: boundary winding equals twice the enclosed charge
        let w = boundary_winding(&mesh, &f);
        assert!((w - 1.0).abs() < 1e-10, "boundary winding {w}");
    }

    #[test]
    fn winding_conservation_on_synthetic_fields() {
        let mesh = build_rect_mesh(11, 11, 1.0, 1.0, &[]).unwrap();
        // two vortices of equal charge inside
        let b = (0..mesh.num_elements())
            .map(|e| {
                let [x, y] = mesh.element_center(e);
                let a1 = (y - 0.3).atan2(x - 0.3);
                let a2 = (y - 0.7).atan2(x - 0.7);
                let a = a1 + a2;
                [a.cos(), a.sin()]
            })
            .collect();
        let f = OrientationField { b };
        let charges: f64 = detect_singularities(&mesh, &f).iter().map(|c| c.1).sum();
        let w = boundary_winding(&mesh, &f);
        assert!((w - 2.0 * charges).abs() < 1e-9, "w {w} charges {charges}");
    }

    #[test]
    fn harmonic_residual_zero_for_constant() {
        let mesh = build_rect_mesh(8, 8, 1.0, 1.0, &[]).unwrap();
        let f = OrientationField { b: vec![[0.6, 0.8]; mesh.num_elements()] };
        let nodal = nodal_orientation(&mesh, &f);
        assert!(harmonic_residual(&mesh, &nodal) < 1e-12);
    }

    fn uniform_setup(
        mesh: &Mesh2D,
    ) -> (Vec<Matrix3<f64>>, Vec<KelvinVec>) {
        let k0 = Hooke2D::isotropic(&IsotropicModuli::from_young_poisson_plane_strain(15.0, 0.35));
        let laws = vec![k0.k; mesh.num_elements()];
        // mild anisotropic stress so the energy term is active
        let sigma = vec![KelvinVec::new(1.0, 0.3, 0.1); 4 * mesh.num_elements()];
        (laws, sigma)
    }

    #[test]
    fn already_harmonic_field_is_kept() {
        let mesh = build_rect_mesh(8, 8, 1.0, 1.0, &[]).unwrap();
        let (laws, sigma) = uniform_setup(&mesh);
        let f = OrientationField { b: vec![[1.0, 0.0]; mesh.num_elements()] };
        let cfg = RegularizeConfig { eta: 0.1, newton_iters: 5, ..Default::default() };
        let (out, rep) = regularize_orientation(&mesh, &f, &laws, &sigma, &cfg).unwrap();
        assert!(rep.residual_after <= 1e-10);
        for b in &out.b {
            assert!((b[0] - 1.0).abs() < 1e-6 && b[1].abs() < 1e-6);
        }
    }

    #[test]
    fn smooth_perturbation_residual_drops() {
        let mesh = build_rect_mesh(16, 16, 1.0, 1.0, &[]).unwrap();
        let b = (0..mesh.num_elements())
            .map(|e| {
                let [x, y] = mesh.element_center(e);
                let beta = 0.6 * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
                [beta.cos(), beta.sin()]
            })
            .collect();
        let f = OrientationField { b };
        let (laws, sigma) = uniform_setup(&mesh);
        let cfg = RegularizeConfig { eta: 0.1, newton_iters: 40, ..Default::default() };
        let (_, rep) = regularize_orientation(&mesh, &f, &laws, &sigma, &cfg).unwrap();
        assert!(
            rep.residual_after <= rep.residual_before / 10.0,
            "residual {} -> {}",
            rep.residual_before,
            rep.residual_after
        );
    }
}
