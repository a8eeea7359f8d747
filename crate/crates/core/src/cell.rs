//! Periodic cell problems on the unit cell and homogenized tensors.
//!
//! The parametrized family is the square cell with a centered rectangular
//! hole: element centers `(y1, y2)` with `|y1 - 1/2| < m1/2` and
//! `|y2 - 1/2| < m2/2` are void.  Void is realized by an ersatz factor on a
//! fixed structured mesh, which keeps one mesh for every `m` and makes table
//! construction trivially parallel; the traction-free hole boundary is
//! recovered in the ersatz limit.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Matrix2, Matrix3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{kelvin_b, periodic_map, PeriodicMap, Quad1};
use crate::hooke::{Hooke2D, IsotropicModuli, KelvinVec};
use crate::mesh::{build_rect_mesh, Mesh2D};
use crate::sparse::{solve, CsrMatrix, Nullspace, SparseSystem};

/// Unit cell with a centered rectangular hole.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub m: (f64, f64),
    pub resolution: usize,
    pub mesh: Mesh2D,
}

impl CellGeometry {
    pub fn new(m: (f64, f64), resolution: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&m.0) || !(0.0..=1.0).contains(&m.1) {
            return Err(Error::InvalidArgument(format!("hole sizes must be in [0,1], got {m:?}")));
        }
        let mesh = build_rect_mesh(resolution, resolution, 1.0, 1.0, &[])?;
        Ok(Self { m, resolution, mesh })
    }

    /// Element-is-void indicator.
    pub fn is_void(&self, e: usize) -> bool {
        let [y1, y2] = self.mesh.element_center(e);
        (y1 - 0.5).abs() < 0.5 * self.m.0 && (y2 - 0.5).abs() < 0.5 * self.m.1
    }

    /// Void area fraction of the discrete cell.
    pub fn void_fraction(&self) -> f64 {
        let n = self.mesh.num_elements();
        (0..n).filter(|&e| self.is_void(e)).count() as f64 / n as f64
    }
}

fn periodic_scalar_matrix(
    mesh: &Mesh2D,
    map: &PeriodicMap,
    coeff: &[Matrix2<f64>],
) -> CsrMatrix {
    let q = Quad1::for_mesh(mesh);
    let mut triplets = Vec::with_capacity(16 * mesh.num_elements());
    for (e, conn) in mesh.elements.iter().enumerate() {
        let ke = crate::fem::scalar_element_matrix(&q, &coeff[e]);
        for a in 0..4 {
            for b in 0..4 {
                triplets.push((map.reduced[conn[a]], map.reduced[conn[b]], ke[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(map.n_reduced, &mut triplets)
}

fn expand_mean_zero(mesh: &Mesh2D, map: &PeriodicMap, reduced: &[f64]) -> Vec<f64> {
    let mut full: Vec<f64> = (0..mesh.num_nodes()).map(|n| reduced[map.reduced[n]]).collect();
    let mean = full.iter().sum::<f64>() / full.len() as f64;
    for v in &mut full {
        *v -= mean;
    }
    full
}

/// Solve the two scalar cell problems
/// `-div(A(y)(grad w_i + e_i)) = 0`, `w_i` periodic and mean-zero.
pub fn correctors_scalar(cell: &CellGeometry, coeff: &[Matrix2<f64>]) -> Result<[Vec<f64>; 2]> {
    let mesh = &cell.mesh;
    let map = periodic_map(mesh);
    let matrix = periodic_scalar_matrix(mesh, &map, coeff);
    let q = Quad1::for_mesh(mesh);
    let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for dir in 0..2 {
        let mut rhs = vec![0.0; map.n_reduced];
        let e_dir = nalgebra::Vector2::new(if dir == 0 { 1.0 } else { 0.0 }, if dir == 1 {
            1.0
        } else {
            0.0
        });
        for (e, conn) in mesh.elements.iter().enumerate() {
            let ae = coeff[e] * e_dir;
            for g in &q.gauss {
                for a in 0..4 {
                    rhs[map.reduced[conn[a]]] -=
                        g.weight * (ae[0] * g.grad[a][0] + ae[1] * g.grad[a][1]);
                }
            }
        }
        let sys = SparseSystem::new(
            matrix.clone(),
            rhs,
            vec![],
            map.pairs.clone(),
            Nullspace::ScalarMean,
        );
        let w = solve(&sys, 1e-12)?;
        out[dir] = expand_mean_zero(mesh, &map, &w);
    }
    Ok(out)
}

/// Homogenized 2x2 conductivity
/// `A*_ji = int_Y A (e_i + grad w_i) . (e_j + grad w_j)`.
pub fn homogenize_scalar(
    cell: &CellGeometry,
    coeff: &[Matrix2<f64>],
    correctors: &[Vec<f64>; 2],
) -> Matrix2<f64> {
    let mesh = &cell.mesh;
    let q = Quad1::for_mesh(mesh);
    let mut astar = Matrix2::zeros();
    for (e, conn) in mesh.elements.iter().enumerate() {
        for g in &q.gauss {
            let mut grads = [nalgebra::Vector2::zeros(); 2];
            for dir in 0..2 {
                let mut gr = nalgebra::Vector2::new(0.0, 0.0);
                for a in 0..4 {
                    gr[0] += g.grad[a][0] * correctors[dir][conn[a]];
                    gr[1] += g.grad[a][1] * correctors[dir][conn[a]];
                }
                gr[dir] += 1.0;
                grads[dir] = gr;
            }
            for i in 0..2 {
                let flux = coeff[e] * grads[i];
                for j in 0..2 {
                    astar[(j, i)] += g.weight * flux.dot(&grads[j]);
                }
            }
        }
    }
    0.5 * (astar + astar.transpose())
}

fn periodic_elastic_matrix(
    mesh: &Mesh2D,
    map: &PeriodicMap,
    hooke: &[Matrix3<f64>],
) -> CsrMatrix {
    let q = Quad1::for_mesh(mesh);
    let mut triplets = Vec::with_capacity(64 * mesh.num_elements());
    for (e, conn) in mesh.elements.iter().enumerate() {
        let ke = crate::fem::elastic_element_matrix(&q, &[hooke[e]; 4]);
        let mut dofs = [0usize; 8];
        for a in 0..4 {
            dofs[2 * a] = 2 * map.reduced[conn[a]];
            dofs[2 * a + 1] = 2 * map.reduced[conn[a]] + 1;
        }
        for a in 0..8 {
            for b in 0..8 {
                triplets.push((dofs[a], dofs[b], ke[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(2 * map.n_reduced, &mut triplets)
}

/// The three elastic cell problems for the Kelvin basis strains.  Returns
/// periodic mean-zero nodal displacement fields (interleaved components).
pub fn correctors_elastic(cell: &CellGeometry, hooke: &[Matrix3<f64>]) -> Result<[Vec<f64>; 3]> {
    let mesh = &cell.mesh;
    let map = periodic_map(mesh);
    let matrix = periodic_elastic_matrix(mesh, &map, hooke);
    let q = Quad1::for_mesh(mesh);
    let mut out: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for k in 0..3 {
        let mut xi = KelvinVec::zeros();
        xi[k] = 1.0;
        let mut rhs = vec![0.0; 2 * map.n_reduced];
        for (e, conn) in mesh.elements.iter().enumerate() {
            let stress = hooke[e] * xi;
            for g in &q.gauss {
                let b = kelvin_b(g);
                for a in 0..4 {
                    let rn = map.reduced[conn[a]];
                    rhs[2 * rn] -= g.weight * stress.dot(&b[2 * a]);
                    rhs[2 * rn + 1] -= g.weight * stress.dot(&b[2 * a + 1]);
                }
            }
        }
        let sys = SparseSystem::new(
            matrix.clone(),
            rhs,
            vec![],
            map.pairs.clone(),
            Nullspace::VectorMean,
        );
        let w = solve(&sys, 1e-12)?;
        // expand to full mesh, interleaved, mean-zero per component
        let mut full = vec![0.0; 2 * mesh.num_nodes()];
        for n in 0..mesh.num_nodes() {
            full[2 * n] = w[2 * map.reduced[n]];
            full[2 * n + 1] = w[2 * map.reduced[n] + 1];
        }
        let nn = mesh.num_nodes() as f64;
        let mx = full.iter().step_by(2).sum::<f64>() / nn;
        let my = full.iter().skip(1).step_by(2).sum::<f64>() / nn;
        for n in 0..mesh.num_nodes() {
            full[2 * n] -= mx;
            full[2 * n + 1] -= my;
        }
        out[k] = full;
    }
    Ok(out)
}

/// Homogenized Hooke law
/// `K*_ij = int_Y A (xi_i + e(w_i)) . (xi_j + e(w_j))` in Kelvin notation.
pub fn homogenize_elastic(
    cell: &CellGeometry,
    hooke: &[Matrix3<f64>],
    correctors: &[Vec<f64>; 3],
) -> Result<Hooke2D> {
    let mesh = &cell.mesh;
    let q = Quad1::for_mesh(mesh);
    let mut kstar = Matrix3::zeros();
    for (e, conn) in mesh.elements.iter().enumerate() {
        for g in &q.gauss {
            let mut strains = [KelvinVec::zeros(); 3];
            for (k, strain) in strains.iter_mut().enumerate() {
                let mut s = crate::fem::strain_at(g, conn, &correctors[k]);
                s[k] += 1.0;
                *strain = s;
            }
            for i in 0..3 {
                let stress = hooke[e] * strains[i];
                for j in 0..3 {
                    kstar[(j, i)] += g.weight * stress.dot(&strains[j]);
                }
            }
        }
    }
    Hooke2D::new(0.5 * (kstar + kstar.transpose()))
}

/// Per-element Kelvin Hooke matrices for a holed cell: solid phase `base`,
/// void elements scaled by `ersatz`.
pub fn cell_hooke_field(cell: &CellGeometry, base: &Hooke2D, ersatz: f64) -> Vec<Matrix3<f64>> {
    (0..cell.mesh.num_elements())
        .map(|e| if cell.is_void(e) { base.k * ersatz } else { base.k })
        .collect()
}

/// Homogenized tensor of one cell sample (builds geometry, correctors and
/// the tensor in one call).
pub fn homogenize_cell(
    base: &IsotropicModuli,
    m: (f64, f64),
    resolution: usize,
    ersatz: f64,
) -> Result<Hooke2D> {
    let cell = CellGeometry::new(m, resolution)?;
    let hooke = cell_hooke_field(&cell, &Hooke2D::isotropic(base), ersatz);
    let w = correctors_elastic(&cell, &hooke)?;
    homogenize_elastic(&cell, &hooke, &w)
}

/// Sampled grid of homogenized tensors `A*(m1, m2, 0)` with central
/// finite-difference gradients on the sample grid (one-sided at the
/// boundary).
#[derive(Debug)]
pub struct MicroTable {
    pub n_m: usize,
    pub resolution: usize,
    pub ersatz: f64,
    pub base: IsotropicModuli,
    pub values: Vec<Hooke2D>,
    pub grad_m1: Vec<Matrix3<f64>>,
    pub grad_m2: Vec<Matrix3<f64>>,
    clamp_warnings: AtomicU64,
}

impl Clone for MicroTable {
    fn clone(&self) -> Self {
        Self {
            n_m: self.n_m,
            resolution: self.resolution,
            ersatz: self.ersatz,
            base: self.base,
            values: self.values.clone(),
            grad_m1: self.grad_m1.clone(),
            grad_m2: self.grad_m2.clone(),
            clamp_warnings: AtomicU64::new(self.clamp_warnings.load(Ordering::Relaxed)),
        }
    }
}

/// Build the table by solving every cell sample (parallel over samples).
pub fn build_micro_table(
    base: &IsotropicModuli,
    n_m: usize,
    resolution: usize,
    ersatz: f64,
) -> Result<MicroTable> {
    if n_m < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 samples per axis, got {n_m}")));
    }
    let dm = 1.0 / (n_m - 1) as f64;
    let samples: Vec<(usize, usize)> =
        (0..n_m).flat_map(|j| (0..n_m).map(move |i| (i, j))).collect();
    let values: Vec<Hooke2D> = samples
        .par_iter()
        .map(|&(i, j)| homogenize_cell(base, (i as f64 * dm, j as f64 * dm), resolution, ersatz))
        .collect::<Result<Vec<_>>>()?;

    let at = |i: usize, j: usize| -> &Matrix3<f64> { &values[j * n_m + i].k };
    let mut grad_m1 = Vec::with_capacity(values.len());
    let mut grad_m2 = Vec::with_capacity(values.len());
    for j in 0..n_m {
        for i in 0..n_m {
            let g1 = if i == 0 {
                (at(1, j) - at(0, j)) / dm
            } else if i == n_m - 1 {
                (at(n_m - 1, j) - at(n_m - 2, j)) / dm
            } else {
                (at(i + 1, j) - at(i - 1, j)) / (2.0 * dm)
            };
            let g2 = if j == 0 {
                (at(i, 1) - at(i, 0)) / dm
            } else if j == n_m - 1 {
                (at(i, n_m - 1) - at(i, n_m - 2)) / dm
            } else {
                (at(i, j + 1) - at(i, j - 1)) / (2.0 * dm)
            };
            grad_m1.push(g1);
            grad_m2.push(g2);
        }
    }
    Ok(MicroTable {
        n_m,
        resolution,
        ersatz,
        base: *base,
        values,
        grad_m1,
        grad_m2,
        clamp_warnings: AtomicU64::new(0),
    })
}

impl MicroTable {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_m - 1) as f64
    }

    pub fn at(&self, i: usize, j: usize) -> &Hooke2D {
        &self.values[j * self.n_m + i]
    }

    pub fn clamp_warnings(&self) -> u64 {
        self.clamp_warnings.load(Ordering::Relaxed)
    }

    /// Bilinear interpolation of the tensor and its two gradients at `m`.
    /// Out-of-range queries are clamped and counted.
    pub fn lookup(&self, m: (f64, f64)) -> (Hooke2D, Matrix3<f64>, Matrix3<f64>) {
        let clamp = |v: f64| -> f64 {
            if !(0.0..=1.0).contains(&v) {
                self.clamp_warnings.fetch_add(1, Ordering::Relaxed);
                v.clamp(0.0, 1.0)
            } else {
                v
            }
        };
        let (m1, m2) = (clamp(m.0), clamp(m.1));
        let dm = self.spacing();
        let fx = (m1 / dm).min((self.n_m - 2) as f64);
        let fy = (m2 / dm).min((self.n_m - 2) as f64);
        let i = fx.floor() as usize;
        let j = fy.floor() as usize;
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let idx = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
        let w = [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), tx * ty, (1.0 - tx) * ty];
        let mut k = Matrix3::zeros();
        let mut g1 = Matrix3::zeros();
        let mut g2 = Matrix3::zeros();
        for (&(a, b), &wc) in idx.iter().zip(&w) {
            k += wc * self.values[b * self.n_m + a].k;
            g1 += wc * self.grad_m1[b * self.n_m + a];
            g2 += wc * self.grad_m2[b * self.n_m + a];
        }
        (Hooke2D { k }, g1, g2)
    }

    /// Serialize as a self-describing CSV (reloadable bit-exactly).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# micro-table lambda={} mu={} n_m={} resolution={} ersatz={}\n",
            self.base.lambda, self.base.mu, self.n_m, self.resolution, self.ersatz
        ));
        out.push_str("m1,m2");
        for name in ["k", "dk_dm1", "dk_dm2"] {
            for (r, c) in UPPER {
                out.push_str(&format!(",{name}{}{}", r + 1, c + 1));
            }
        }
        out.push('\n');
        let dm = self.spacing();
        for j in 0..self.n_m {
            for i in 0..self.n_m {
                let idx = j * self.n_m + i;
                let mut row = format!("{},{}", i as f64 * dm, j as f64 * dm);
                for mat in [&self.values[idx].k, &self.grad_m1[idx], &self.grad_m2[idx]] {
                    for (r, c) in UPPER {
                        row.push_str(&format!(",{}", mat[(r, c)]));
                    }
                }
                out.push_str(&row);
                out.push('\n');
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let meta = lines
            .next()
            .ok_or_else(|| Error::Parse("empty micro-table file".into()))?;
        let mut lambda = None;
        let mut mu = None;
        let mut n_m = None;
        let mut resolution = None;
        let mut ersatz = None;
        for tok in meta.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                match k {
                    "lambda" => lambda = v.parse().ok(),
                    "mu" => mu = v.parse().ok(),
                    "n_m" => n_m = v.parse().ok(),
                    "resolution" => resolution = v.parse().ok(),
                    "ersatz" => ersatz = v.parse().ok(),
                    _ => {}
                }
            }
        }
        let (lambda, mu, n_m, resolution, ersatz) =
            match (lambda, mu, n_m, resolution, ersatz) {
                (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
                _ => return Err(Error::Parse("micro-table metadata line incomplete".into())),
            };
        let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
        if !header.starts_with("m1,m2") {
            return Err(Error::Parse("unexpected micro-table header".into()));
        }
        let mut values = Vec::new();
        let mut grad_m1 = Vec::new();
        let mut grad_m2 = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<_>>()?;
            if cols.len() != 2 + 18 {
                return Err(Error::Parse(format!("expected 20 columns, got {}", cols.len())));
            }
            let unpack = |off: usize| -> Matrix3<f64> {
                let mut m = Matrix3::zeros();
                for (k, &(r, c)) in UPPER.iter().enumerate() {
                    m[(r, c)] = cols[off + k];
                    m[(c, r)] = cols[off + k];
                }
                m
            };
            values.push(Hooke2D { k: unpack(2) });
            grad_m1.push(unpack(8));
            grad_m2.push(unpack(14));
        }
        if values.len() != n_m * n_m {
            return Err(Error::Parse(format!(
                "expected {} rows, got {}",
                n_m * n_m,
                values.len()
            )));
        }
        Ok(MicroTable {
            n_m,
            resolution,
            ersatz,
            base: IsotropicModuli::new(lambda, mu),
            values,
            grad_m1,
            grad_m2,
            clamp_warnings: AtomicU64::new(0),
        })
    }
}

const UPPER: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hooke::rotate_hooke;

    fn layered_coeff(cell: &CellGeometry, alpha: f64, beta: f64, theta: f64) -> Vec<Matrix2<f64>> {
        (0..cell.mesh.num_elements())
            .map(|e| {
                let [y1, _] = cell.mesh.element_center(e);
                Matrix2::identity() * if y1 < theta { alpha } else { beta }
            })
            .collect()
    }

    #[test]
    fn constant_coefficient_gives_zero_correctors() {
        let cell = CellGeometry::new((0.0, 0.0), 8).unwrap();
        let coeff = vec![Matrix2::identity() * 2.5; cell.mesh.num_elements()];
        let w = correctors_scalar(&cell, &coeff).unwrap();
        for dir in 0..2 {
            for v in &w[dir] {
                assert!(v.abs() < 1e-10);
            }
        }
        let astar = homogenize_scalar(&cell, &coeff, &w);
        assert!((astar - Matrix2::identity() * 2.5).norm() < 1e-9);
    }

    #[test]
    fn layered_cell_matches_harmonic_arithmetic_means() {
        let cell = CellGeometry::new((0.0, 0.0), 64).unwrap();
        let coeff = layered_coeff(&cell, 1.0, 2.0, 0.5);
        let w = correctors_scalar(&cell, &coeff).unwrap();
        let astar = homogenize_scalar(&cell, &coeff, &w);
        assert!((astar[(0, 0)] - 4.0 / 3.0).abs() < 0.02 * (4.0 / 3.0));
        assert!((astar[(1, 1)] - 1.5).abs() < 0.02 * 1.5);
        assert!(astar[(0, 1)].abs() < 1e-9);
        // w2 vanishes for a laminate in y1
        for v in &w[1] {
            assert!(v.abs() < 1e-9);
        }
        // w1 is the 1-D sawtooth: piecewise linear, exact at nodes
        let lo = 1.0 / (0.5 / 1.0 + 0.5 / 2.0);
        let slope_alpha = lo / 1.0 - 1.0;
        let n = cell.resolution;
        let w1 = &w[0];
        let h = 1.0 / n as f64;
        let node = |i: usize| cell.mesh.node_index(i, n / 2);
        let d01 = w1[node(1)] - w1[node(0)];
        assert!((d01 - slope_alpha * h).abs() < 1e-8);
    }

    #[test]
    fn layered_correctors_mean_zero() {
        let cell = CellGeometry::new((0.0, 0.0), 32).unwrap();
        let coeff = layered_coeff(&cell, 1.0, 2.0, 0.5);
        let w = correctors_scalar(&cell, &coeff).unwrap();
        let norm: f64 = w[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mean: f64 = w[0].iter().sum::<f64>() / w[0].len() as f64;
        assert!(mean.abs() <= 1e-10 * norm.max(1e-300));
    }

    #[test]
    fn checkerboard_correctors_have_cell_symmetry() {
        // under 180-degree rotation the checkerboard is invariant and the
        // corrector is odd: w1(y) = -w1(1-y1, 1-y2)
        let n = 16;
        let cell = CellGeometry::new((0.0, 0.0), n).unwrap();
        let coeff: Vec<Matrix2<f64>> = (0..cell.mesh.num_elements())
            .map(|e| {
                let [y1, y2] = cell.mesh.element_center(e);
                let parity = ((y1 * 2.0).floor() as i64 + (y2 * 2.0).floor() as i64) % 2;
                Matrix2::identity() * if parity == 0 { 1.0 } else { 3.0 }
            })
            .collect();
        let w = correctors_scalar(&cell, &coeff).unwrap();
        for i in 0..=n {
            for j in 0..=n {
                let a = w[0][cell.mesh.node_index(i, j)];
                let b = w[0][cell.mesh.node_index(n - i, n - j)];
                assert!((a + b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn scalar_cell_energy_forms_agree() {
        // int A(e_i + grad w_i).e_j equals the symmetric energy form
        let cell = CellGeometry::new((0.0, 0.0), 16).unwrap();
        let coeff = layered_coeff(&cell, 1.0, 2.0, 0.4);
        let w = correctors_scalar(&cell, &coeff).unwrap();
        let astar = homogenize_scalar(&cell, &coeff, &w);
        // flux-average form
        let q = Quad1::for_mesh(&cell.mesh);
        let mut fluxform = Matrix2::zeros();
        for (e, conn) in cell.mesh.elements.iter().enumerate() {
            for g in &q.gauss {
                for i in 0..2 {
                    let mut gr = nalgebra::Vector2::new(0.0, 0.0);
                    for a in 0..4 {
                        gr[0] += g.grad[a][0] * w[i][conn[a]];
                        gr[1] += g.grad[a][1] * w[i][conn[a]];
                    }
                    gr[i] += 1.0;
                    let flux = coeff[e] * gr;
                    fluxform[(0, i)] += g.weight * flux[0];
                    fluxform[(1, i)] += g.weight * flux[1];
                }
            }
        }
        assert!((astar - fluxform).norm() < 1e-10 * astar.norm());
    }

    #[test]
    fn homogeneous_elastic_cell_returns_base() {
        let base = IsotropicModuli::new(1.0, 1.0);
        let astar = homogenize_cell(&base, (0.0, 0.0), 8, 1e-3).unwrap();
        let k = Hooke2D::isotropic(&base);
        assert!((astar.k - k.k).norm() < 1e-9 * k.norm());
    }

    #[test]
    fn zero_measure_slit_keeps_base() {
        let base = IsotropicModuli::new(1.0, 1.0);
        let astar = homogenize_cell(&base, (0.5, 0.0), 8, 1e-3).unwrap();
        let k = Hooke2D::isotropic(&base);
        assert!((astar.k - k.k).norm() < 1e-9 * k.norm());
    }

    #[test]
    fn square_hole_has_square_symmetry() {
        let base = IsotropicModuli::new(0.8, 1.2);
        let astar = homogenize_cell(&base, (0.4, 0.4), 24, 1e-3).unwrap();
        let rel = (astar.k[(0, 0)] - astar.k[(1, 1)]).abs() / astar.k[(0, 0)].abs();
        assert!(rel < 1e-8, "relative asymmetry {rel}");
        // orthotropy: no normal-shear coupling
        assert!(astar.k[(0, 2)].abs() <= 1e-6 * astar.norm());
        assert!(astar.k[(1, 2)].abs() <= 1e-6 * astar.norm());
    }

    #[test]
    fn rotation_by_half_pi_swaps_hole_axes() {
        let base = IsotropicModuli::new(1.0, 1.0);
        let a12 = homogenize_cell(&base, (0.3, 0.6), 24, 1e-3).unwrap();
        let a21 = homogenize_cell(&base, (0.6, 0.3), 24, 1e-3).unwrap();
        let rot = rotate_hooke(&a12, std::f64::consts::FRAC_PI_2);
        for r in 0..3 {
            for c in 0..3 {
                let d = (rot.k[(r, c)] - a21.k[(r, c)]).abs();
                assert!(d <= 0.02 * a21.norm(), "entry ({r},{c}): {d}");
            }
        }
    }

    #[test]
    fn table_corners_and_lookup() {
        let base = IsotropicModuli::new(1.0, 1.0);
        let table = build_micro_table(&base, 5, 12, 1e-3).unwrap();
        let k = Hooke2D::isotropic(&base);
        // corner (0,0): solid
        assert!((table.at(0, 0).k - k.k).norm() < 1e-8 * k.norm());
        // corner (1,1): ersatz scale
        assert!(table.at(4, 4).norm() <= 2e-3 * k.norm());
        // node lookup returns the stored value exactly
        let (v, _, _) = table.lookup((0.25, 0.5));
        assert_eq!(v.k, table.at(1, 2).k);
        // midpoint of a cell is the average of the four corners
        let (v, _, _) = table.lookup((0.125, 0.125));
        let avg = 0.25
            * (table.at(0, 0).k + table.at(1, 0).k + table.at(0, 1).k + table.at(1, 1).k);
        assert!((v.k - avg).norm() < 1e-12 * avg.norm());
        // clamped lookups are counted
        assert_eq!(table.clamp_warnings(), 0);
        let _ = table.lookup((-0.1, 0.5));
        assert_eq!(table.clamp_warnings(), 1);
    }

    #[test]
    fn table_monotone_and_gradient_signs() {
        let base = IsotropicModuli::new(1.0, 1.0);
        let table = build_micro_table(&base, 5, 16, 1e-3).unwrap();
        // entries of A*(m1, .) non-increasing in m2
        for i in 0..5 {
            for j in 0..4 {
                let a = table.at(i, j).k;
                let b = table.at(i, j + 1).k;
                assert!(b[(0, 0)] <= a[(0, 0)] + 1e-9);
                assert!(b[(1, 1)] <= a[(1, 1)] + 1e-9);
            }
        }
        // dK11/dm2 <= 0 in the interior, and on average more sensitive than
        // dK11/dm1
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut count = 0;
        for j in 1..4 {
            for i in 1..4 {
                let g1 = table.grad_m1[j * 5 + i][(0, 0)];
                let g2 = table.grad_m2[j * 5 + i][(0, 0)];
                assert!(g2 <= 1e-9, "dK11/dm2 = {g2} at ({i},{j})");
                s1 += g1.abs();
                s2 += g2.abs();
                count += 1;
            }
        }
        assert!(s2 / count as f64 >= s1 / count as f64);
    }

    #[test]
    fn table_csv_round_trip_bit_exact() {
        let base = IsotropicModuli::new(0.7, 1.3);
        let table = build_micro_table(&base, 5, 8, 1e-3).unwrap();
        let csv = table.to_csv();
        let back = MicroTable::from_csv(&csv).unwrap();
        assert_eq!(table.n_m, back.n_m);
        for (a, b) in table.values.iter().zip(&back.values) {
            assert_eq!(a.k, b.k);
        }
        for (a, b) in table.grad_m1.iter().zip(&back.grad_m1) {
            assert_eq!(a, b);
        }
        assert_eq!(csv, back.to_csv());
    }

    #[test]
    fn void_fraction_converges() {
        let c = CellGeometry::new((0.5, 0.5), 64).unwrap();
        assert!((c.void_fraction() - 0.25).abs() < 0.02);
    }
}
