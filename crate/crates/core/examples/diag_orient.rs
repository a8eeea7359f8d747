use latticeopt::dehomog::{harmonic_residual, nodal_orientation, OrientationField, RegularizeConfig};
use latticeopt::hooke::{Hooke2D, IsotropicModuli, KelvinVec};
use latticeopt::mesh::build_rect_mesh;

fn main() {
    let mesh = build_rect_mesh(16, 16, 1.0, 1.0, &[]).unwrap();
    let b: Vec<[f64; 2]> = (0..mesh.num_elements())
        .map(|e| {
            let [x, y] = mesh.element_center(e);
            let beta = 0.6 * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
            [beta.cos(), beta.sin()]
        })
        .collect();
    let f = OrientationField { b };
    let k0 = Hooke2D::isotropic(&IsotropicModuli::from_young_poisson_plane_strain(15.0, 0.35));
    let laws = vec![k0.k; mesh.num_elements()];
    let sigma = vec![KelvinVec::new(1.0, 0.3, 0.1); 4 * mesh.num_elements()];
    let cfg = RegularizeConfig { eta: 0.1, newton_iters: 10, ..Default::default() };
    let (out, rep) = latticeopt::dehomog::regularize_orientation(&mesh, &f, &laws, &sigma, &cfg).unwrap();
    println!("before {:.6e} after {:.6e} fallbacks {}", rep.residual_before, rep.residual_after, rep.fallbacks);
    for (i, r) in rep.history.records.iter().enumerate() {
        println!("newton {i}: obj {:.8} residual {:.4e}", r.objective, r.residual);
    }
    let nodal = nodal_orientation(&mesh, &out);
    println!("final residual check: {:.4e}", harmonic_residual(&mesh, &nodal));
}
