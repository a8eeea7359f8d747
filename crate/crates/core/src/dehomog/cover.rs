//! Dilation field and the conformal grid map on the orientation double
//! cover.
//!
//! When the doubled angle is harmonic, `grad phi = e^r Q(alpha)` admits a
//! solution; `r` comes from a least-squares Poisson solve and `phi` from a
//! per-component fit after the per-element branch `T_K` (with
//! `T_K^2 = Q(beta)`) has been fixed by parity propagation along a spanning
//! tree of the element adjacency graph.  A cycle with odd parity is exactly
//! a singularity, which has been excluded before.

use std::collections::VecDeque;

use nalgebra::Vector2;

use crate::dehomog::orient::{detect_singularities, nodal_orientation, OrientationField};
use crate::error::{Error, Result};
use crate::fem::Quad1;
use crate::mesh::Mesh2D;
use crate::sparse::{solve, CsrMatrix, Nullspace, SparseSystem};

/// Result of the dilation solve.
#[derive(Debug, Clone)]
pub struct DilationResult {
    /// nodal dilation, mean zero
    pub r: Vec<f64>,
    /// value of the least-squares functional at the minimizer
    pub residual: f64,
}

fn neumann_stiffness(mesh: &Mesh2D) -> CsrMatrix {
    let q = Quad1::for_mesh(mesh);
    let mut triplets = Vec::with_capacity(16 * mesh.num_elements());
    for conn in &mesh.elements {
        for g in &q.gauss {
            for a in 0..4 {
                for b in 0..4 {
                    let v = g.weight
                        * (g.grad[a][0] * g.grad[b][0] + g.grad[a][1] * g.grad[b][1]);
                    triplets.push((conn[a], conn[b], v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_nodes(), &mut triplets)
}

/// Gauss-point target `rot90(b ^ grad b) / 2` (candidate for `grad r`).
fn dilation_targets(mesh: &Mesh2D, nodal_b: &[[f64; 2]]) -> Vec<Vector2<f64>> {
    let q = Quad1::for_mesh(mesh);
    let mut out = Vec::with_capacity(4 * mesh.num_elements());
    for conn in &mesh.elements {
        for g in &q.gauss {
            let mut b = [0.0; 2];
            let mut gb1 = Vector2::zeros();
            let mut gb2 = Vector2::zeros();
            for a in 0..4 {
                let v = nodal_b[conn[a]];
                b[0] += g.shape[a] * v[0];
                b[1] += g.shape[a] * v[1];
                gb1 += Vector2::new(g.grad[a][0], g.grad[a][1]) * v[0];
                gb2 += Vector2::new(g.grad[a][0], g.grad[a][1]) * v[1];
            }
            let grad_beta = b[0] * gb2 - b[1] * gb1;
            out.push(0.5 * Vector2::new(-grad_beta[1], grad_beta[0]));
        }
    }
    out
}

/// Least-squares dilation: minimize `int |grad r - rot90(grad beta)/2|^2`,
/// normalized to mean zero.  Refused when the orientation still carries
/// singular charges.
pub fn dilation_field(mesh: &Mesh2D, field: &OrientationField) -> Result<DilationResult> {
    let charges = detect_singularities(mesh, field);
    if !charges.is_empty() {
        return Err(Error::OrientationSingular(charges));
    }
    let nodal_b = nodal_orientation(mesh, field);
    let targets = dilation_targets(mesh, &nodal_b);
    let q = Quad1::for_mesh(mesh);
    let matrix = neumann_stiffness(mesh);
    let mut rhs = vec![0.0; mesh.num_nodes()];
    for (e, conn) in mesh.elements.iter().enumerate() {
        for (gi, g) in q.gauss.iter().enumerate() {
            let t = &targets[4 * e + gi];
            for a in 0..4 {
                rhs[conn[a]] += g.weight * (t[0] * g.grad[a][0] + t[1] * g.grad[a][1]);
            }
        }
    }
    let sys = SparseSystem::new(matrix, rhs, vec![], vec![], Nullspace::ScalarMean);
    let r = solve(&sys, 1e-12)?;
    // least-squares residual
    let mut residual = 0.0;
    for (e, conn) in mesh.elements.iter().enumerate() {
        for (gi, g) in q.gauss.iter().enumerate() {
            let mut gr = Vector2::zeros();
            for a in 0..4 {
                gr += Vector2::new(g.grad[a][0], g.grad[a][1]) * r[conn[a]];
            }
            let d = gr - targets[4 * e + gi];
            residual += g.weight * d.dot(&d);
        }
    }
    Ok(DilationResult { r, residual })
}

/// The conformal map on the double cover: per-element branch angle (with
/// `T_K = Q(angle)`, `T_K^2 = Q(beta)`), the P1-discontinuous nodal values of
/// `phi` on the plus branch, the nodal dilation and the fitting energy.
#[derive(Debug, Clone)]
pub struct CoverMap {
    pub t_angle: Vec<f64>,
    /// per element, per corner: `[phi_1, phi_2]`
    pub phi: Vec<[[f64; 2]; 4]>,
    pub r: Vec<f64>,
    pub fit_energy: f64,
}

/// Propagate branch parities along a spanning tree of the active-element
/// adjacency graph, then fit `phi` by two scalar least-squares problems:
/// `2 sum_K int_K |grad(phi o g+_K) - e^r T_K|^2 -> min`.
pub fn conformal_map(
    mesh: &Mesh2D,
    field: &OrientationField,
    dilation: &DilationResult,
) -> Result<CoverMap> {
    let charges = detect_singularities(mesh, field);
    if !charges.is_empty() {
        return Err(Error::OrientationSingular(charges));
    }
    let ne = mesh.num_elements();
    // principal half angle in (-pi/2, pi/2]
    let half: Vec<f64> = field.b.iter().map(|b| 0.5 * b[1].atan2(b[0])).collect();

    // parity by BFS over the element grid; per connected component of the
    // active set, inactive elements inherit a parity too (their fit weight
    // is tiny)
    let mut angle = vec![f64::NAN; ne];
    let mut visited = vec![false; ne];
    let neighbors = |e: usize| -> Vec<usize> {
        let (i, j) = (e % mesh.nx, e / mesh.nx);
        let mut out = Vec::with_capacity(4);
        if i + 1 < mesh.nx {
            out.push(e + 1);
        }
        if i > 0 {
            out.push(e - 1);
        }
        if j + 1 < mesh.ny {
            out.push(e + mesh.nx);
        }
        if j > 0 {
            out.push(e - mesh.nx);
        }
        out
    };
    for start in 0..ne {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        angle[start] = half[start];
        let mut queue = VecDeque::from([start]);
        while let Some(e) = queue.pop_front() {
            for nb in neighbors(e) {
                if visited[nb] {
                    // non-tree edge: parity consistency check between
                    // active neighbors
                    if mesh.active[e] && mesh.active[nb] {
                        let d = (angle[nb] - angle[e]).rem_euclid(2.0 * std::f64::consts::PI);
                        let dist = d.min(2.0 * std::f64::consts::PI - d);
                        if dist > 0.5 * std::f64::consts::PI + 0.2 {
                            return Err(Error::Optimization(format!(
                                "branch parity conflict between elements {e} and {nb}"
                            )));
                        }
                    }
                    continue;
                }
                visited[nb] = true;
                // choose the branch of half[nb] closest to angle[e]
                let cand = half[nb];
                let d = (cand - angle[e]).rem_euclid(2.0 * std::f64::consts::PI);
                let dist = d.min(2.0 * std::f64::consts::PI - d);
                angle[nb] = if dist <= 0.5 * std::f64::consts::PI {
                    cand
                } else {
                    cand + std::f64::consts::PI
                };
                queue.push_back(nb);
            }
        }
    }

    // least-squares fit of the two components of phi
    let q = Quad1::for_mesh(mesh);
    let weight = |e: usize| if mesh.active[e] { 1.0 } else { 1e-6 };
    let mut triplets = Vec::with_capacity(16 * ne);
    for (e, conn) in mesh.elements.iter().enumerate() {
        let w = weight(e);
        for g in &q.gauss {
            for a in 0..4 {
                for b in 0..4 {
                    triplets.push((
                        conn[a],
                        conn[b],
                        w * g.weight
                            * (g.grad[a][0] * g.grad[b][0] + g.grad[a][1] * g.grad[b][1]),
                    ));
                }
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(mesh.num_nodes(), &mut triplets);

    let mut psi = [vec![0.0; mesh.num_nodes()], vec![0.0; mesh.num_nodes()]];
    for comp in 0..2 {
        let mut rhs = vec![0.0; mesh.num_nodes()];
        for (e, conn) in mesh.elements.iter().enumerate() {
            let w = weight(e);
            let (s, c) = angle[e].sin_cos();
            // rows of Q(angle): grad phi_1 = e^r (c, -s), grad phi_2 = e^r (s, c)
            let row = if comp == 0 { [c, -s] } else { [s, c] };
            for g in &q.gauss {
                let mut rg = 0.0;
                for a in 0..4 {
                    rg += g.shape[a] * dilation.r[conn[a]];
                }
                let scale = rg.exp();
                for a in 0..4 {
                    rhs[conn[a]] += w
                        * g.weight
                        * scale
                        * (row[0] * g.grad[a][0] + row[1] * g.grad[a][1]);
                }
            }
        }
        let sys =
            SparseSystem::new(matrix.clone(), rhs, vec![], vec![], Nullspace::ScalarMean);
        psi[comp] = solve(&sys, 1e-12)?;
    }

    // fitting energy and per-element phi storage
    let mut fit_energy = 0.0;
    let mut phi = Vec::with_capacity(ne);
    for (e, conn) in mesh.elements.iter().enumerate() {
        let (s, c) = angle[e].sin_cos();
        for g in &q.gauss {
            let mut rg = 0.0;
            let mut g1 = Vector2::zeros();
            let mut g2 = Vector2::zeros();
            for a in 0..4 {
                rg += g.shape[a] * dilation.r[conn[a]];
                g1 += Vector2::new(g.grad[a][0], g.grad[a][1]) * psi[0][conn[a]];
                g2 += Vector2::new(g.grad[a][0], g.grad[a][1]) * psi[1][conn[a]];
            }
            let scale = rg.exp();
            if mesh.active[e] {
                let d1 = g1 - scale * Vector2::new(c, -s);
                let d2 = g2 - scale * Vector2::new(s, c);
                fit_energy += 2.0 * g.weight * (d1.dot(&d1) + d2.dot(&d2));
            }
        }
        let mut corners = [[0.0; 2]; 4];
        for a in 0..4 {
            corners[a] = [psi[0][conn[a]], psi[1][conn[a]]];
        }
        phi.push(corners);
    }

    Ok(CoverMap { t_angle: angle, phi, r: dilation.r.clone(), fit_energy })
}

/// Per-element conformality defect `||grad(phi)^T grad(phi) - e^{2r} Id|| /
/// e^{2r}` at element centers.
pub fn conformality_defect(mesh: &Mesh2D, cover: &CoverMap) -> Vec<f64> {
    let q = Quad1::for_mesh(mesh);
    let mut out = Vec::with_capacity(mesh.num_elements());
    for (e, conn) in mesh.elements.iter().enumerate() {
        let g = &q.center;
        let mut j: nalgebra::Matrix2<f64> = nalgebra::Matrix2::zeros();
        let mut rg = 0.0;
        for a in 0..4 {
            rg += g.shape[a] * cover.r[conn[a]];
            for comp in 0..2 {
                j[(comp, 0)] += g.grad[a][0] * cover.phi[e][a][comp];
                j[(comp, 1)] += g.grad[a][1] * cover.phi[e][a][comp];
            }
        }
        let metric = j.transpose() * j;
        let target = (2.0 * rg).exp();
        let id: nalgebra::Matrix2<f64> = nalgebra::Matrix2::identity();
        out.push((metric - id * target).norm() / target);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;

    fn field_from_alpha(mesh: &Mesh2D, f: impl Fn(f64, f64) -> f64) -> OrientationField {
        let b = (0..mesh.num_elements())
            .map(|e| {
                let [x, y] = mesh.element_center(e);
                let beta = 2.0 * f(x, y);
                [beta.cos(), beta.sin()]
            })
            .collect();
        OrientationField { b }
    }

    #[test]
    fn constant_alpha_gives_zero_dilation_and_identity_map() {
        let mesh = build_rect_mesh(16, 16, 1.0, 1.0, &[]).unwrap();
        let f = field_from_alpha(&mesh, |_, _| 0.0);
        let d = dilation_field(&mesh, &f).unwrap();
        for v in &d.r {
            assert!(v.abs() < 1e-10);
        }
        assert!(d.residual < 1e-12);
        let cover = conformal_map(&mesh, &f, &d).unwrap();
        assert!(cover.fit_energy < 1e-12, "energy {}", cover.fit_energy);
        // grad phi is the identity: phi recovers coordinates up to constants
        let e0 = 0;
        let dx = cover.phi[e0][1][0] - cover.phi[e0][0][0];
        assert!((dx - 1.0 / 16.0).abs() < 1e-9);
    }

    #[test]
    fn constant_rotation_gives_orthogonal_map() {
        let mesh = build_rect_mesh(16, 16, 1.0, 1.0, &[]).unwrap();
        let f = field_from_alpha(&mesh, |_, _| std::f64::consts::FRAC_PI_4);
        let d = dilation_field(&mesh, &f).unwrap();
        let cover = conformal_map(&mesh, &f, &d).unwrap();
        assert!(cover.fit_energy < 1e-10);
        // per-element Jacobian orthogonal with unit determinant
        let q = Quad1::for_mesh(&mesh);
        for (e, conn) in mesh.elements.iter().enumerate() {
            let g = &q.center;
            let mut j: nalgebra::Matrix2<f64> = nalgebra::Matrix2::zeros();
            for a in 0..4 {
                for comp in 0..2 {
                    j[(comp, 0)] += g.grad[a][0] * cover.phi[e][a][comp];
                    j[(comp, 1)] += g.grad[a][1] * cover.phi[e][a][comp];
                }
            }
            assert!((j.determinant() - 1.0).abs() < 1e-9);
            assert!((j.transpose() * j - nalgebra::Matrix2::identity()).norm() < 1e-9);
        }
    }

    #[test]
    fn linear_alpha_matches_symbolic_solution() {
        // alpha(x) = x1 is harmonic; grad r = (0, 1), so r = x2 - mean and
        // grad phi = e^{x2} Q(x1)
        let mesh = build_rect_mesh(64, 64, 1.0, 1.0, &[]).unwrap();
        let f = field_from_alpha(&mesh, |x, _| x);
        let d = dilation_field(&mesh, &f).unwrap();
        assert!(d.residual < 1e-6, "lsq residual {}", d.residual);
        for (n, &[_, y]) in mesh.nodes.iter().enumerate() {
            assert!((d.r[n] - (y - 0.5)).abs() < 1e-3, "r({y}) = {}", d.r[n]);
        }
        let cover = conformal_map(&mesh, &f, &d).unwrap();
        assert!(cover.fit_energy < 1e-3, "fit energy {}", cover.fit_energy);
        let defects = conformality_defect(&mesh, &cover);
        let mut sorted = defects.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        assert!(median <= 0.05, "median conformality defect {median}");
    }

    #[test]
    fn refuses_singular_fields() {
        let mesh = build_rect_mesh(9, 9, 1.0, 1.0, &[]).unwrap();
        let b = (0..mesh.num_elements())
            .map(|e| {
                let [x, y] = mesh.element_center(e);
                let a = (y - 0.5).atan2(x - 0.5);
                [a.cos(), a.sin()]
            })
            .collect();
        let f = OrientationField { b };
        assert!(matches!(
            dilation_field(&mesh, &f),
            Err(Error::OrientationSingular(_))
        ));
    }
}
