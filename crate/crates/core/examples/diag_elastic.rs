use latticeopt::hooke::IsotropicModuli;
use latticeopt::problems::{build_case, Preset};
use latticeopt::topopt::{alt_min_elastic_compliance, ElasticConfig, VolumeMode};

fn main() {
    let case = build_case(Preset::Cantilever, 12, 24, 10.0, 20.0, 1.0).unwrap();
    let cfg = ElasticConfig {
        mesh: case.mesh,
        moduli: IsotropicModuli::from_young_poisson_plane_strain(15.0, 0.35),
        traction: case.traction,
        mode: VolumeMode::VolumeTarget(0.5),
        iterations: 400,
        tol: 1e-3,
        theta0: 0.5,
        theta_min: 1e-3,
        ersatz: 1e-3,
        move_limit: 1.0,
        solver_tol: 1e-11,
    };
    let (_, hist) = alt_min_elastic_compliance(&cfg).unwrap();
    for (i, r) in hist.records.iter().enumerate() {
        if i % 25 == 0 || i + 3 > hist.records.len() {
            println!("it {i:3}  J {:.10}  vol {:.6}  crit {:.3e}", r.objective, r.volume, r.residual);
        }
    }
    println!("converged: {} after {} iterations", hist.converged, hist.records.len());
    // monotonicity check with the absolute 1e-10 slack
    let js = hist.objectives();
    let mut worst: f64 = 0.0;
    for w in js.windows(2) {
        worst = worst.max(w[1] - w[0]);
    }
    println!("worst increase: {worst:e}");
}
