//! Sparse symmetric systems and a diagonally preconditioned conjugate
//! gradient solver.
//!
//! Dirichlet constraints are applied by row/column elimination (not penalty),
//! so the reduced operator stays symmetric positive definite and plain CG
//! convergence theory applies.  Periodic couplings are realized by a
//! degree-of-freedom map at assembly time; the folded pairs are recorded in
//! the system.  Pure-Neumann and periodic problems are singular up to
//! constants: those systems carry a nullspace descriptor and the solver works
//! in the mean-zero quotient space.

use crate::error::{Error, Result};

/// Compressed-row sparse matrix (full symmetric storage).
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut rows: Vec<usize> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets.iter() {
            if rows.last() == Some(&r) && col_idx.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] += self.values[k];
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.values[k];
            }
        }
        m
    }
}

/// Nullspace of a singular (consistent) system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nullspace {
    None,
    /// Constants (scalar periodic / pure-Neumann problems).
    ScalarMean,
    /// Per-component translations of an interleaved 2-vector field.
    VectorMean,
}

/// Assembled linear system with its constraint metadata.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub constrained_dofs: Vec<(usize, f64)>,
    pub periodic_pairs: Vec<(usize, usize)>,
    pub nullspace: Nullspace,
}

impl SparseSystem {
    /// Row/column elimination of the Dirichlet constraints.  Constrained
    /// rows/columns are zeroed with a unit diagonal and the known products
    /// are moved to the right-hand side.
    pub fn new(
        matrix: CsrMatrix,
        rhs: Vec<f64>,
        constrained_dofs: Vec<(usize, f64)>,
        periodic_pairs: Vec<(usize, usize)>,
        nullspace: Nullspace,
    ) -> Self {
        let mut sys = SparseSystem { matrix, rhs, constrained_dofs, periodic_pairs, nullspace };
        sys.eliminate_constraints();
        sys
    }

    fn eliminate_constraints(&mut self) {
        if self.constrained_dofs.is_empty() {
            return;
        }
        let n = self.matrix.n;
        let mut fixed = vec![None; n];
        for &(d, v) in &self.constrained_dofs {
            fixed[d] = Some(v);
        }
        // move known columns to the rhs, then zero rows/cols
        let m = &mut self.matrix;
        for r in 0..n {
            if fixed[r].is_some() {
                continue;
            }
            for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                let c = m.col_idx[k];
                if let Some(v) = fixed[c] {
                    self.rhs[r] -= m.values[k] * v;
                    m.values[k] = 0.0;
                }
            }
        }
        for r in 0..n {
            if let Some(v) = fixed[r] {
                for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                    m.values[k] = if m.col_idx[k] == r { 1.0 } else { 0.0 };
                }
                self.rhs[r] = v;
            }
        }
    }
}

/// Result metadata of a CG solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
}

fn project_nullspace(x: &mut [f64], ns: Nullspace) {
    match ns {
        Nullspace::None => {}
        Nullspace::ScalarMean => {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            for v in x.iter_mut() {
                *v -= mean;
            }
        }
        Nullspace::VectorMean => {
            let n2 = x.len() / 2;
            let mut m = [0.0; 2];
            for i in 0..n2 {
                m[0] += x[2 * i];
                m[1] += x[2 * i + 1];
            }
            m[0] /= n2 as f64;
            m[1] /= n2 as f64;
            for i in 0..n2 {
                x[2 * i] -= m[0];
                x[2 * i + 1] -= m[1];
            }
        }
    }
}

/// Solve the system by preconditioned conjugate gradients (Jacobi
/// preconditioner) to the given relative residual.
///
/// Singular-but-consistent systems (periodic / pure-Neumann, flagged by their
/// nullspace) are solved in the mean-zero quotient space; the right-hand side
/// must satisfy the zero-mean solvability condition and the returned solution
/// is mean-zero.  `tol` must lie in `(0, 1e-2]`.
pub fn solve(system: &SparseSystem, tol: f64) -> Result<Vec<f64>> {
    solve_with_guess(system, tol, None).map(|(x, _)| x)
}

pub fn solve_with_guess(
    system: &SparseSystem,
    tol: f64,
    guess: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(Error::InvalidArgument(format!(
            "solver tolerance must be in (0, 1e-2], got {tol}"
        )));
    }
    let a = &system.matrix;
    let n = a.n;
    let mut b = system.rhs.clone();

    // solvability of singular systems: reject a right-hand side whose
    // nullspace component is significant against both the compatible part
    // and an absolute roundoff floor derived from the operator
    if system.nullspace != Nullspace::None {
        let removed = {
            let mut p = b.clone();
            project_nullspace(&mut p, system.nullspace);
            let mut acc = 0.0;
            for (orig, proj) in b.iter().zip(&p) {
                acc += (orig - proj) * (orig - proj);
            }
            let kept = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            (acc.sqrt(), kept)
        };
        let diag_max = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = 1e-12 * diag_max * (n as f64).sqrt();
        let tol = 1e-8 * removed.1 + floor;
        if removed.0 > tol {
            return Err(Error::IncompatibleRhs { mean: removed.0, tol });
        }
        project_nullspace(&mut b, system.nullspace);
    }

    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveReport { iterations: 0, residual: 0.0 }));
    }

    let diag = a.diagonal();
    let inv_diag: Vec<f64> =
        diag.iter().map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let mut x = match guess {
        Some(g) if g.len() == n => g.to_vec(),
        _ => vec![0.0; n],
    };
    project_nullspace(&mut x, system.nullspace);

    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    project_nullspace(&mut r, system.nullspace);

    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    project_nullspace(&mut z, system.nullspace);
    let mut p = z.clone();
    let mut rz = r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
    let mut ap = vec![0.0; n];

    let max_iter = (10 * n).max(2000);
    let mut history: Vec<f64> = Vec::new();
    let mut rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();

    for it in 0..max_iter {
        if rnorm <= tol * bnorm {
            project_nullspace(&mut x, system.nullspace);
            return Ok((x, SolveReport { iterations: it, residual: rnorm / bnorm }));
        }
        a.matvec(&p, &mut ap);
        project_nullspace(&mut ap, system.nullspace);
        let pap = p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        if pap <= 0.0 {
            return Err(Error::SolverDiverged {
                iterations: it,
                residual: rnorm / bnorm,
                history,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project_nullspace(&mut r, system.nullspace);
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        project_nullspace(&mut z, system.nullspace);
        let rz_new = r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if history.len() >= 20 {
            history.remove(0);
        }
        history.push(rnorm / bnorm);
    }

    if rnorm <= tol * bnorm {
        project_nullspace(&mut x, system.nullspace);
        return Ok((x, SolveReport { iterations: max_iter, residual: rnorm / bnorm }));
    }
    Err(Error::SolverDiverged { iterations: max_iter, residual: rnorm / bnorm, history })
}

/// MINRES for symmetric (possibly indefinite) systems, used for the
/// saddle-point Newton steps of the orientation regularization.
pub fn minres(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let beta1 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if beta1 == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = b.to_vec();
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let (mut oldb, mut beta) = (0.0f64, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0f64, 0.0f64, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut av = vec![0.0; n];

    for _ in 0..max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        a.matvec(&v, &mut av);
        if oldb > 0.0 {
            let c = beta / oldb;
            for i in 0..n {
                av[i] -= c * r1[i];
            }
        }
        let alfa = v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>();
        let c = alfa / beta;
        for i in 0..n {
            av[i] -= c * r2[i];
        }
        r1.copy_from_slice(&r2);
        r2.copy_from_slice(&av);
        y.copy_from_slice(&av);
        oldb = beta;
        beta = y.iter().map(|v| v * v).sum::<f64>().sqrt();

        // plane rotation of the tridiagonal factorization
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        for i in 0..n {
            let w1i = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1i - delta * w2[i]) / gamma;
            x[i] += phi * w[i];
        }
        if phibar <= tol * beta1 {
            return Ok(x);
        }
        if beta <= f64::MIN_POSITIVE {
            return Ok(x);
        }
    }
    // report the achieved residual
    let mut res = vec![0.0; n];
    a.matvec(&x, &mut res);
    let rnorm = res
        .iter()
        .zip(b)
        .map(|(ax, bi)| (bi - ax) * (bi - ax))
        .sum::<f64>()
        .sqrt();
    if rnorm <= 1e-6 * beta1 {
        return Ok(x);
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: rnorm / beta1,
        history: vec![phibar / beta1],
    })
}
