//! Q1 finite elements on structured rectangle meshes.
//!
//! Scalar (conductivity / membrane) and plane-elasticity assembly with 2x2
//! Gauss quadrature, consistent boundary loads, element stresses and a P0
//! screened-Poisson smoother.  Strains are handled in Kelvin notation so the
//! elastic energy density is the plain dot product `K e . e`.

use nalgebra::{Matrix2, Matrix3};

use crate::error::{Error, Result};
use crate::field::{Association, ScalarField, TensorField2};
use crate::hooke::{Hooke2D, KelvinVec, SQRT2};
use crate::mesh::{BoundaryTag, Mesh2D};
use crate::sparse::{CsrMatrix, Nullspace, SparseSystem};

/// Per-Gauss-point shape data of the uniform `hx x hy` element.
#[derive(Debug, Clone, Copy)]
pub struct GaussData {
    /// quadrature weight including the Jacobian
    pub weight: f64,
    pub shape: [f64; 4],
    /// physical gradients of the four shape functions
    pub grad: [[f64; 2]; 4],
}

/// Shape data for a Q1 rectangle: the four Gauss points plus the center.
#[derive(Debug, Clone, Copy)]
pub struct Quad1 {
    pub gauss: [GaussData; 4],
    pub center: GaussData,
    pub hx: f64,
    pub hy: f64,
}

fn gauss_data(hx: f64, hy: f64, xi: f64, eta: f64, weight: f64) -> GaussData {
    let n = [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ];
    let dxi = [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ];
    let mut grad = [[0.0; 2]; 4];
    for a in 0..4 {
        grad[a][0] = dxi[a][0] * 2.0 / hx;
        grad[a][1] = dxi[a][1] * 2.0 / hy;
    }
    GaussData { weight: weight * hx * hy / 4.0, shape: n, grad }
}

impl Quad1 {
    pub fn new(hx: f64, hy: f64) -> Self {
        let g = 1.0 / 3f64.sqrt();
        let pts = [(-g, -g), (g, -g), (g, g), (-g, g)];
        let gauss = pts.map(|(xi, eta)| gauss_data(hx, hy, xi, eta, 1.0));
        let center = gauss_data(hx, hy, 0.0, 0.0, 4.0);
        Quad1 { gauss, center, hx, hy }
    }

    pub fn for_mesh(mesh: &Mesh2D) -> Self {
        let (hx, hy) = mesh.element_size();
        Self::new(hx, hy)
    }
}

/// Kelvin strain rows (3 x 8) at one Gauss point: column `2a + c` is the
/// strain of a unit displacement of node `a`, component `c`.
pub fn kelvin_b(g: &GaussData) -> [KelvinVec; 8] {
    let mut b = [KelvinVec::zeros(); 8];
    for a in 0..4 {
        let [dx, dy] = g.grad[a];
        b[2 * a] = KelvinVec::new(dx, 0.0, dy / SQRT2);
        b[2 * a + 1] = KelvinVec::new(0.0, dy, dx / SQRT2);
    }
    b
}

/// 4x4 scalar stiffness for a (possibly anisotropic) constant coefficient.
pub fn scalar_element_matrix(q: &Quad1, c: &Matrix2<f64>) -> [[f64; 4]; 4] {
    let mut ke = [[0.0; 4]; 4];
    for g in &q.gauss {
        for a in 0..4 {
            let ga = nalgebra::Vector2::new(g.grad[a][0], g.grad[a][1]);
            let cga = c * ga;
            for b in 0..4 {
                ke[a][b] += g.weight * (cga[0] * g.grad[b][0] + cga[1] * g.grad[b][1]);
            }
        }
    }
    ke
}

/// 8x8 elastic stiffness for per-Gauss Kelvin Hooke matrices.
pub fn elastic_element_matrix(q: &Quad1, k: &[Matrix3<f64>; 4]) -> [[f64; 8]; 8] {
    let mut ke = [[0.0; 8]; 8];
    for (gi, g) in q.gauss.iter().enumerate() {
        let b = kelvin_b(g);
        let mut kb = [KelvinVec::zeros(); 8];
        for (col, bc) in b.iter().enumerate() {
            kb[col] = k[gi] * bc;
        }
        for row in 0..8 {
            for col in 0..8 {
                ke[row][col] += g.weight * b[row].dot(&kb[col]);
            }
        }
    }
    ke
}

/// Per-element coefficient of a scalar problem.
pub enum ScalarCoeff<'a> {
    Scalar(&'a [f64]),
    Matrix(&'a [Matrix2<f64>]),
}

impl ScalarCoeff<'_> {
    fn matrix(&self, e: usize) -> Matrix2<f64> {
        match self {
            ScalarCoeff::Scalar(v) => Matrix2::identity() * v[e],
            ScalarCoeff::Matrix(v) => v[e],
        }
    }

    fn check_floor(&self, floor: f64, n: usize) -> Result<()> {
        for e in 0..n {
            let min = match self {
                ScalarCoeff::Scalar(v) => v[e],
                ScalarCoeff::Matrix(v) => v[e].symmetric_eigenvalues().min(),
            };
            if min < floor {
                return Err(Error::CoercivityFloor { element: e, value: min, floor });
            }
        }
        Ok(())
    }
}

fn scalar_dirichlet(mesh: &Mesh2D) -> Vec<(usize, f64)> {
    mesh.tagged_nodes(BoundaryTag::Dirichlet).into_iter().map(|n| (n, 0.0)).collect()
}

/// Assemble `int coeff grad(u) . grad(v)` with load `source` and a constant
/// Neumann flux on `Neumann`-tagged edges.  Dirichlet nodes are constrained
/// to zero.  The coefficient must stay above the coercivity floor.
pub fn assemble_scalar(
    mesh: &Mesh2D,
    coeff: &ScalarCoeff,
    source: Option<&ScalarField>,
    neumann_flux: Option<f64>,
    floor: f64,
) -> Result<SparseSystem> {
    coeff.check_floor(floor, mesh.num_elements())?;
    let q = Quad1::for_mesh(mesh);
    let n = mesh.num_nodes();
    let mut triplets = Vec::with_capacity(mesh.num_elements() * 16);
    let mut rhs = vec![0.0; n];

    for (e, conn) in mesh.elements.iter().enumerate() {
        let ke = scalar_element_matrix(&q, &coeff.matrix(e));
        for a in 0..4 {
            for b in 0..4 {
                triplets.push((conn[a], conn[b], ke[a][b]));
            }
        }
        if let Some(f) = source {
            match f.association {
                Association::PerElement => {
                    if mesh.active[e] {
                        let fe = f.values[e];
                        for &node in conn {
                            rhs[node] += fe * q.hx * q.hy / 4.0;
                        }
                    }
                }
                Association::PerNode => {
                    if mesh.active[e] {
                        for g in &q.gauss {
                            let fg: f64 =
                                (0..4).map(|a| g.shape[a] * f.values[conn[a]]).sum();
                            for a in 0..4 {
                                rhs[conn[a]] += g.weight * g.shape[a] * fg;
                            }
                        }
                    }
                }
            }
        }
    }

    if let Some(flux) = neumann_flux {
        for edge in mesh.tagged_edges(BoundaryTag::Neumann) {
            let l = mesh.edge_length(edge);
            rhs[edge.nodes.0] += 0.5 * flux * l;
            rhs[edge.nodes.1] += 0.5 * flux * l;
        }
    }

    let matrix = CsrMatrix::from_triplets(n, &mut triplets);
    Ok(SparseSystem::new(matrix, rhs, scalar_dirichlet(mesh), vec![], Nullspace::None))
}

/// Hooke law layout over the mesh.
pub enum HookeField<'a> {
    Uniform(&'a Hooke2D),
    PerElement(&'a [Hooke2D]),
    /// `4 * num_elements` Kelvin matrices in Gauss-point order.
    PerGauss(&'a [Matrix3<f64>]),
}

impl HookeField<'_> {
    fn gauss_matrices(&self, e: usize) -> [Matrix3<f64>; 4] {
        match self {
            HookeField::Uniform(h) => [h.k; 4],
            HookeField::PerElement(v) => [v[e].k; 4],
            HookeField::PerGauss(v) => [v[4 * e], v[4 * e + 1], v[4 * e + 2], v[4 * e + 3]],
        }
    }
}

/// Interleaved vector dofs of an element: `[2n0, 2n0+1, ..., 2n3+1]`.
pub fn element_dofs_vector(conn: &[usize; 4]) -> [usize; 8] {
    let mut d = [0usize; 8];
    for a in 0..4 {
        d[2 * a] = 2 * conn[a];
        d[2 * a + 1] = 2 * conn[a] + 1;
    }
    d
}

/// Consistent nodal load vector of a constant traction `g` on all
/// `Neumann`-tagged edges.
pub fn surface_load_vector(mesh: &Mesh2D, g: [f64; 2]) -> Vec<f64> {
    let mut f = vec![0.0; 2 * mesh.num_nodes()];
    for edge in mesh.tagged_edges(BoundaryTag::Neumann) {
        let l = mesh.edge_length(edge);
        for node in [edge.nodes.0, edge.nodes.1] {
            f[2 * node] += 0.5 * g[0] * l;
            f[2 * node + 1] += 0.5 * g[1] * l;
        }
    }
    f
}

/// Assemble the plane-elasticity stiffness `int A e(u) . e(v)` with a
/// constant surface traction on `Neumann`-tagged edges.  Both displacement
/// components of Dirichlet nodes are clamped; an empty Dirichlet set is
/// rejected (rigid modes).
pub fn assemble_elasticity(
    mesh: &Mesh2D,
    hooke: &HookeField,
    surface_load: [f64; 2],
) -> Result<SparseSystem> {
    let dirichlet = mesh.tagged_nodes(BoundaryTag::Dirichlet);
    if dirichlet.is_empty() {
        return Err(Error::RigidModes);
    }
    let q = Quad1::for_mesh(mesh);
    let ndof = 2 * mesh.num_nodes();
    let mut triplets = Vec::with_capacity(mesh.num_elements() * 64);
    for (e, conn) in mesh.elements.iter().enumerate() {
        let ke = elastic_element_matrix(&q, &hooke.gauss_matrices(e));
        let dofs = element_dofs_vector(conn);
        for a in 0..8 {
            for b in 0..8 {
                triplets.push((dofs[a], dofs[b], ke[a][b]));
            }
        }
    }
    let rhs = surface_load_vector(mesh, surface_load);
    let matrix = CsrMatrix::from_triplets(ndof, &mut triplets);
    let constrained = dirichlet.iter().flat_map(|&n| [(2 * n, 0.0), (2 * n + 1, 0.0)]).collect();
    Ok(SparseSystem::new(matrix, rhs, constrained, vec![], Nullspace::None))
}

/// Compliance `int_{Gamma_N} g . u ds` by edge quadrature (exact for Q1).
/// For an equilibrium solution it equals the strain energy `int A e(u).e(u)`.
pub fn compliance(mesh: &Mesh2D, g: [f64; 2], u: &[f64]) -> f64 {
    let mut j = 0.0;
    for edge in mesh.tagged_edges(BoundaryTag::Neumann) {
        let l = mesh.edge_length(edge);
        for node in [edge.nodes.0, edge.nodes.1] {
            j += 0.5 * l * (g[0] * u[2 * node] + g[1] * u[2 * node + 1]);
        }
    }
    j
}

/// Kelvin strain of a displacement field at one Gauss point of an element.
pub fn strain_at(g: &GaussData, conn: &[usize; 4], u: &[f64]) -> KelvinVec {
    let b = kelvin_b(g);
    let mut e = KelvinVec::zeros();
    for a in 0..4 {
        e += b[2 * a] * u[2 * conn[a]] + b[2 * a + 1] * u[2 * conn[a] + 1];
    }
    e
}

/// Per-element stress at the element center.
pub fn stress(mesh: &Mesh2D, hooke: &HookeField, u: &[f64]) -> TensorField2 {
    let q = Quad1::for_mesh(mesh);
    let values = mesh
        .elements
        .iter()
        .enumerate()
        .map(|(e, conn)| {
            let strain = strain_at(&q.center, conn, u);
            // center Hooke: average of the Gauss laws (equal for per-element)
            let ks = hooke.gauss_matrices(e);
            let k = (ks[0] + ks[1] + ks[2] + ks[3]) * 0.25;
            k * strain
        })
        .collect();
    TensorField2 { association: Association::PerElement, values }
}

/// Per-Gauss-point stresses, `4 * num_elements` Kelvin vectors.
pub fn stress_gauss(mesh: &Mesh2D, hooke: &HookeField, u: &[f64]) -> Vec<KelvinVec> {
    let q = Quad1::for_mesh(mesh);
    let mut out = Vec::with_capacity(4 * mesh.num_elements());
    for (e, conn) in mesh.elements.iter().enumerate() {
        let ks = hooke.gauss_matrices(e);
        for (gi, g) in q.gauss.iter().enumerate() {
            out.push(ks[gi] * strain_at(g, conn, u));
        }
    }
    out
}

/// Strain energy `sum_e int_e A e(u) . e(u)` by Gauss quadrature.
pub fn strain_energy(mesh: &Mesh2D, hooke: &HookeField, u: &[f64]) -> f64 {
    let q = Quad1::for_mesh(mesh);
    let mut acc = 0.0;
    for (e, conn) in mesh.elements.iter().enumerate() {
        let ks = hooke.gauss_matrices(e);
        for (gi, g) in q.gauss.iter().enumerate() {
            let eps = strain_at(g, conn, u);
            acc += g.weight * (ks[gi] * eps).dot(&eps);
        }
    }
    acc
}

/// Scalar gradient of a nodal field at element centers.
pub fn grad_scalar_center(mesh: &Mesh2D, u: &[f64]) -> Vec<[f64; 2]> {
    let q = Quad1::for_mesh(mesh);
    mesh.elements
        .iter()
        .map(|conn| {
            let mut g = [0.0; 2];
            for a in 0..4 {
                g[0] += q.center.grad[a][0] * u[conn[a]];
                g[1] += q.center.grad[a][1] * u[conn[a]];
            }
            g
        })
        .collect()
}

/// Per-element mean of `c grad(u) . grad(v)` (unit coefficient bilinear form
/// density).  This is the exact derivative of the assembled stiffness energy
/// with respect to a per-element scalar coefficient, divided by the area.
pub fn grad_dot_mean(mesh: &Mesh2D, u: &[f64], v: &[f64]) -> Vec<f64> {
    let q = Quad1::for_mesh(mesh);
    let area = mesh.element_area();
    mesh.elements
        .iter()
        .map(|conn| {
            let mut acc = 0.0;
            for g in &q.gauss {
                let mut gu = [0.0; 2];
                let mut gv = [0.0; 2];
                for a in 0..4 {
                    gu[0] += g.grad[a][0] * u[conn[a]];
                    gu[1] += g.grad[a][1] * u[conn[a]];
                    gv[0] += g.grad[a][0] * v[conn[a]];
                    gv[1] += g.grad[a][1] * v[conn[a]];
                }
                acc += g.weight * (gu[0] * gv[0] + gu[1] * gv[1]);
            }
            acc / area
        })
        .collect()
}

/// Scalar energy `int c grad(u).grad(u)` for per-element scalar coefficient.
pub fn scalar_energy(mesh: &Mesh2D, coeff: &[f64], u: &[f64]) -> f64 {
    let dens = grad_dot_mean(mesh, u, u);
    let area = mesh.element_area();
    dens.iter().zip(coeff).map(|(d, c)| d * c * area).sum()
}

/// Screened Poisson smoother on per-element (P0) data:
/// `(-eps^2 Laplacian + Id) out = input` with natural (Neumann) boundary,
/// realized as a finite-volume scheme on the element grid.  `eps = 0`
/// returns the input; the element mean is preserved exactly.
pub fn screened_poisson_p0(mesh: &Mesh2D, input: &[f64], eps: f64) -> Result<Vec<f64>> {
    if eps == 0.0 {
        return Ok(input.to_vec());
    }
    let (hx, hy) = mesh.element_size();
    let area = hx * hy;
    let ne = mesh.num_elements();
    let mut triplets = Vec::with_capacity(5 * ne);
    let mut rhs = vec![0.0; ne];
    for e in 0..ne {
        triplets.push((e, e, area));
        rhs[e] = area * input[e];
        let i = e % mesh.nx;
        let j = e / mesh.nx;
        let mut link = |other: usize, coupling: f64| {
            if mesh.active[e] && mesh.active[other] {
                triplets.push((e, e, eps * eps * coupling));
                triplets.push((e, other, -eps * eps * coupling));
            }
        };
        if i + 1 < mesh.nx {
            link(e + 1, hy / hx);
        }
        if i > 0 {
            link(e - 1, hy / hx);
        }
        if j + 1 < mesh.ny {
            link(e + mesh.nx, hx / hy);
        }
        if j > 0 {
            link(e - mesh.nx, hx / hy);
        }
    }
    let matrix = CsrMatrix::from_triplets(ne, &mut triplets);
    let sys = SparseSystem::new(matrix, rhs, vec![], vec![], Nullspace::None);
    crate::sparse::solve(&sys, 1e-12)
}

/// Periodic identification of opposite-boundary nodes (unit-cell meshes).
#[derive(Debug, Clone)]
pub struct PeriodicMap {
    /// node -> reduced index
    pub reduced: Vec<usize>,
    pub n_reduced: usize,
    /// (master, slave) node pairs that were identified
    pub pairs: Vec<(usize, usize)>,
}

pub fn periodic_map(mesh: &Mesh2D) -> PeriodicMap {
    let (nx, ny) = (mesh.nx, mesh.ny);
    let mut reduced = vec![usize::MAX; mesh.num_nodes()];
    let mut pairs = Vec::new();
    let mut count = 0usize;
    for j in 0..=ny {
        for i in 0..=nx {
            let node = mesh.node_index(i, j);
            let (mi, mj) = (i % nx, j % ny);
            if mi == i && mj == j {
                reduced[node] = count;
                count += 1;
            }
        }
    }
    for j in 0..=ny {
        for i in 0..=nx {
            let node = mesh.node_index(i, j);
            let master = mesh.node_index(i % nx, j % ny);
            if node != master {
                reduced[node] = reduced[master];
                pairs.push((master, node));
            }
        }
    }
    PeriodicMap { reduced, n_reduced: count, pairs }
}
