use latticeopt::hooke::IsotropicModuli;
use latticeopt::problems::{build_case, Preset};
use latticeopt::topopt::*;

fn main() {
    let case = build_case(Preset::Bridge, 32, 16, 2.0, 1.0, 1.0).unwrap();
    let cfg = ElasticConfig {
        mesh: case.mesh.clone(),
        moduli: IsotropicModuli::from_young_poisson_plane_strain(15.0, 0.35),
        traction: case.traction,
        mode: VolumeMode::VolumeTarget(0.4),
        iterations: 80,
        tol: 1e-3,
        theta0: 0.4,
        theta_min: 1e-3,
        ersatz: 1e-3,
        move_limit: 1.0,
        solver_tol: 1e-11,
    };
    let (design, hist) = alt_min_elastic_compliance(&cfg).unwrap();
    let g0 = gray_measure(&cfg.mesh, &design.theta);
    println!("composite J {:.6} gray {:.6}", hist.objectives().last().unwrap(), g0);
    for iters in [10usize, 20, 30, 40] {
        let (pen, ph) = penalize_elastic(&cfg, &design, iters).unwrap();
        let g1 = gray_measure(&cfg.mesh, &pen.theta);
        println!("pen {iters:2} iters: gray {:.6} ratio {:.4} vol {:.4} J {:.4}",
            g1, g1 / g0, ph.records.last().unwrap().volume, ph.records.last().unwrap().objective);
    }

    // radiator conductivity ratio
    let case = build_case(Preset::Radiator, 32, 32, 1.0, 1.0, 1.0).unwrap();
    let ccfg = CondConfig {
        mesh: case.mesh.clone(),
        alpha: 0.01,
        beta: 1.0,
        volume_fraction: 0.5,
        theta0: 0.5,
        iterations: 50,
        source: 0.0,
        flux: case.flux,
        solver_tol: 1e-12,
    };
    let (d, h) = alt_min_cond_compliance(&ccfg).unwrap();
    let g0 = gray_measure(&ccfg.mesh, &d.theta);
    println!("radiator composite J {:.6} gray {:.6}", h.objectives().last().unwrap(), g0);
    for iters in [10usize, 20, 30] {
        let (pen, _) = penalize_cond_compliance(&ccfg, &d, iters).unwrap();
        let g1 = gray_measure(&ccfg.mesh, &pen.theta);
        println!("radiator pen {iters:2}: gray {:.6} ratio {:.4}", g1, g1 / g0);
    }
}
