//! Convexified "fictitious material" method and SIMP.
//!
//! The Hooke law is `theta^p A` with a single density design variable.  The
//! density enters the complementary energy as a scalar factor, so the
//! per-element update is an exact closed-form minimization and every
//! fixed-exponent phase is an exact alternate minimization (monotone
//! objective).  Across exponent increases no monotonicity holds.

use crate::error::{Error, Result};
use crate::fem::{assemble_elasticity, strain_at, HookeField, Quad1};
use crate::history::{IterRecord, OptHistory};
use crate::hooke::{Hooke2D, IsotropicModuli};
use crate::mesh::Mesh2D;
use crate::sparse::solve;
use crate::thickness::bisect;
use crate::topopt::VolumeMode;

#[derive(Debug, Clone)]
pub struct SimpConfig {
    pub mesh: Mesh2D,
    pub moduli: IsotropicModuli,
    pub traction: [f64; 2],
    pub mode: VolumeMode,
    pub theta0: f64,
    pub theta_min: f64,
    pub solver_tol: f64,
}

fn design_volume(mesh: &Mesh2D, theta: &[f64]) -> f64 {
    let area = mesh.element_area();
    theta
        .iter()
        .enumerate()
        .filter(|(e, _)| mesh.active[*e])
        .map(|(_, t)| t * area)
        .sum()
}

/// Run the double minimization over the exponent schedule
/// `[(p, iterations), ...]`; `p = 1` is the convexified problem, `p > 1`
/// the SIMP penalization.  Returns the final density and one history per
/// schedule phase.
pub fn simp_run(
    cfg: &SimpConfig,
    schedule: &[(f64, usize)],
) -> Result<(Vec<f64>, Vec<OptHistory>)> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty exponent schedule".into()));
    }
    if cfg.traction == [0.0, 0.0] {
        return Err(Error::Optimization("zero surface load".into()));
    }
    let mesh = &cfg.mesh;
    let base = Hooke2D::isotropic(&cfg.moduli);
    let base_inv = base.inverse()?;
    let q = Quad1::for_mesh(mesh);
    let area = mesh.element_area();
    let active: Vec<usize> = (0..mesh.num_elements()).filter(|&e| mesh.active[e]).collect();

    let theta0 = match cfg.mode {
        VolumeMode::VolumeTarget(v) => v,
        VolumeMode::FixedMultiplier(_) => cfg.theta0,
    };
    let mut theta = vec![theta0.clamp(cfg.theta_min, 1.0); mesh.num_elements()];
    let mut histories = Vec::with_capacity(schedule.len());

    for &(p, iterations) in schedule {
        if p < 1.0 {
            return Err(Error::InvalidArgument(format!("exponent must be >= 1, got {p}")));
        }
        let mut history = OptHistory::default();
        for _ in 0..iterations {
            let laws: Vec<Hooke2D> = theta
                .iter()
                .enumerate()
                .map(|(e, &t)| {
                    if mesh.active[e] {
                        base.scale(t.powf(p))
                    } else {
                        base.scale(cfg.theta_min.powf(p))
                    }
                })
                .collect();
            let sys = assemble_elasticity(mesh, &HookeField::PerElement(&laws), cfg.traction)?;
            let u = solve(&sys, cfg.solver_tol)?;

            // per-element complementary weights c_e = int_e A^-1 tau . tau
            // with tau = theta^p A e(u)
            let mut c = vec![0.0; mesh.num_elements()];
            let mut energy = 0.0;
            for (e, conn) in mesh.elements.iter().enumerate() {
                let mut acc = 0.0;
                for g in &q.gauss {
                    let eps = strain_at(g, conn, &u);
                    let tau: nalgebra::Vector3<f64> = laws[e].k * eps;
                    acc += g.weight * (base_inv * tau).dot(&tau);
                }
                c[e] = acc;
                let tpow = laws[e].k[(2, 2)] / base.k[(2, 2)];
                energy += acc / tpow;
            }

            let volume = design_volume(mesh, &theta);
            let objective = match cfg.mode {
                VolumeMode::FixedMultiplier(l) => energy + l * volume,
                VolumeMode::VolumeTarget(_) => energy,
            };

            // closed-form update: theta = (p c / (l a))^(1/(p+1)) clamped
            let update = |e: usize, l: f64| -> f64 {
                if c[e] <= 0.0 {
                    return cfg.theta_min;
                }
                (p * c[e] / (l * area)).powf(1.0 / (p + 1.0)).clamp(cfg.theta_min, 1.0)
            };
            let ell = match cfg.mode {
                VolumeMode::FixedMultiplier(l) => l,
                VolumeMode::VolumeTarget(v) => {
                    let target = v * mesh.active_area();
                    let vol_of =
                        |l: f64| -> f64 { active.iter().map(|&e| update(e, l) * area).sum() };
                    let cmax = active.iter().map(|&e| c[e]).fold(0.0f64, f64::max);
                    let hi = p * cmax.max(1e-300) / (cfg.theta_min.powf(p + 1.0) * area) + 1.0;
                    bisect(vol_of, target, 1e-300, hi, false, 1e-10 * mesh.active_area(), 200)
                }
            };
            let mut residual = 0.0f64;
            for &e in &active {
                let t = update(e, ell);
                residual = residual.max((t - theta[e]).abs());
                theta[e] = t;
            }
            history.push(IterRecord {
                objective,
                volume: design_volume(mesh, &theta),
                step: p,
                multiplier: ell,
                residual,
            });
        }
        histories.push(history);
    }
    Ok((theta, histories))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_case, Preset};
    use crate::topopt::gray_measure;

    fn bridge_cfg() -> SimpConfig {
        let case = build_case(Preset::Bridge, 32, 16, 2.0, 1.0, 1.0).unwrap();
        SimpConfig {
            mesh: case.mesh,
            moduli: IsotropicModuli::from_young_poisson_plane_strain(15.0, 0.35),
            traction: case.traction,
            mode: VolumeMode::VolumeTarget(0.4),
            theta0: 0.4,
            theta_min: 1e-3,
            solver_tol: 1e-11,
        }
    }

    #[test]
    fn p1_phase_is_monotone() {
        let cfg = bridge_cfg();
        let (_, hists) = simp_run(&cfg, &[(1.0, 25)]).unwrap();
        let js = hists[0].objectives();
        for w in js.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0),
                "SIMP p=1 not monotone: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn exponent_schedule_penalizes() {
        let cfg = bridge_cfg();
        let (theta1, _) = simp_run(&cfg, &[(1.0, 30)]).unwrap();
        let g1 = gray_measure(&cfg.mesh, &theta1);
        let (theta3, hists) =
            simp_run(&cfg, &[(1.0, 30), (2.0, 20), (3.0, 20)]).unwrap();
        let g3 = gray_measure(&cfg.mesh, &theta3);
        assert!(g3 <= 0.1 * g1, "penalization too weak: {g1} -> {g3}");
        // within each phase the objective is monotone
        for h in &hists {
            for w in h.objectives().windows(2) {
                assert!(w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn full_material_is_stationary() {
        let case = build_case(Preset::Bridge, 12, 6, 2.0, 1.0, 1.0).unwrap();
        let cfg = SimpConfig {
            mesh: case.mesh,
            moduli: IsotropicModuli::new(1.0, 1.0),
            traction: case.traction,
            mode: VolumeMode::VolumeTarget(1.0),
            theta0: 1.0,
            theta_min: 1e-3,
            solver_tol: 1e-11,
        };
        let (theta, hists) = simp_run(&cfg, &[(1.0, 3)]).unwrap();
        for t in &theta {
            assert!((t - 1.0).abs() < 1e-9);
        }
        assert!(hists[0].records[1].residual < 1e-9);
    }
}
