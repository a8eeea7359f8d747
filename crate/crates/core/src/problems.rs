//! Named benchmark cases: cantilever, bridge, MBB beam, L-beam, radiator.
//!
//! Loads act on a small band of the boundary (default two edge lengths)
//! around the nominal load point.

use crate::error::Result;
use crate::mesh::{build_rect_mesh, BoundarySpec, BoundaryTag, Mesh2D, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Cantilever,
    Bridge,
    Mbb,
    LBeam,
    Radiator,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cantilever" => Some(Self::Cantilever),
            "bridge" => Some(Self::Bridge),
            "mbb" => Some(Self::Mbb),
            "lbeam" | "l-beam" => Some(Self::LBeam),
            "radiator" => Some(Self::Radiator),
            _ => None,
        }
    }

    /// Natural domain proportions (lx, ly) of the case.
    pub fn default_domain(&self) -> (f64, f64) {
        match self {
            Preset::Cantilever => (10.0, 20.0),
            Preset::Bridge => (2.0, 1.0),
            Preset::Mbb => (3.0, 1.0),
            Preset::LBeam => (1.0, 1.0),
            Preset::Radiator => (1.0, 1.0),
        }
    }
}

/// A fully meshed case: tagged mesh plus the traction (or scalar flux)
/// applied on the Neumann-tagged edges.
#[derive(Debug, Clone)]
pub struct Case {
    pub mesh: Mesh2D,
    pub traction: [f64; 2],
    pub flux: f64,
}

/// Build a preset on an `nx x ny` grid of the `lx x ly` rectangle.
/// `band` is the half-width of load/support bands in edge lengths.
pub fn build_case(preset: Preset, nx: usize, ny: usize, lx: f64, ly: f64, band: f64) -> Result<Case> {
    let hx = lx / nx as f64;
    let hy = ly / ny as f64;
    let case = match preset {
        Preset::Cantilever => {
            // clamped left edge, downward load on a small mid-right band
            let b = band * hy;
            let mesh = build_rect_mesh(
                nx,
                ny,
                lx,
                ly,
                &[
                    BoundarySpec::whole(Side::Left, BoundaryTag::Dirichlet),
                    BoundarySpec {
                        side: Side::Right,
                        interval: (0.5 * ly - b, 0.5 * ly + b),
                        tag: BoundaryTag::Neumann,
                    },
                ],
            )?;
            Case { mesh, traction: [0.0, -1.0], flux: 0.0 }
        }
        Preset::Bridge => {
            // supports at the bottom corners, downward load at bottom middle
            let b = band * hx;
            let mesh = build_rect_mesh(
                nx,
                ny,
                lx,
                ly,
                &[
                    BoundarySpec {
                        side: Side::Bottom,
                        interval: (0.0, 2.0 * b),
                        tag: BoundaryTag::Dirichlet,
                    },
                    BoundarySpec {
                        side: Side::Bottom,
                        interval: (lx - 2.0 * b, lx),
                        tag: BoundaryTag::Dirichlet,
                    },
                    BoundarySpec {
                        side: Side::Bottom,
                        interval: (0.5 * lx - b, 0.5 * lx + b),
                        tag: BoundaryTag::Neumann,
                    },
                ],
            )?;
            Case { mesh, traction: [0.0, -1.0], flux: 0.0 }
        }
        Preset::Mbb => {
            // supports at the bottom corners, downward load at top middle
            let b = band * hx;
            let mesh = build_rect_mesh(
                nx,
                ny,
                lx,
                ly,
                &[
                    BoundarySpec {
                        side: Side::Bottom,
                        interval: (0.0, 2.0 * b),
                        tag: BoundaryTag::Dirichlet,
                    },
                    BoundarySpec {
                        side: Side::Bottom,
                        interval: (lx - 2.0 * b, lx),
                        tag: BoundaryTag::Dirichlet,
                    },
                    BoundarySpec {
                        side: Side::Top,
                        interval: (0.5 * lx - b, 0.5 * lx + b),
                        tag: BoundaryTag::Neumann,
                    },
                ],
            )?;
            Case { mesh, traction: [0.0, -1.0], flux: 0.0 }
        }
        Preset::LBeam => {
            // L-shape by masking the upper-right block of the square;
            // clamped along the top of the vertical arm, load at the tip of
            // the horizontal arm
            let arm = 0.4 * ly.min(lx);
            let b = band * hy;
            let mut mesh = build_rect_mesh(
                nx,
                ny,
                lx,
                ly,
                &[
                    BoundarySpec {
                        side: Side::Top,
                        interval: (0.0, arm),
                        tag: BoundaryTag::Dirichlet,
                    },
                    BoundarySpec {
                        side: Side::Right,
                        interval: (arm - 2.0 * b, arm),
                        tag: BoundaryTag::Neumann,
                    },
                ],
            )?;
            mesh.mask_elements(|[x, y]| x > arm && y > arm);
            Case { mesh, traction: [0.0, -1.0], flux: 0.0 }
        }
        Preset::Radiator => {
            // scalar heat problem: unit influx on a band of the top edge,
            // temperature fixed along the bottom edge
            let mesh = build_rect_mesh(
                nx,
                ny,
                lx,
                ly,
                &[
                    BoundarySpec::whole(Side::Bottom, BoundaryTag::Dirichlet),
                    BoundarySpec {
                        side: Side::Top,
                        interval: (0.4 * lx, 0.6 * lx),
                        tag: BoundaryTag::Neumann,
                    },
                ],
            )?;
            Case { mesh, traction: [0.0, 0.0], flux: 1.0 }
        }
    };
    Ok(case)
}

/// Square with homogeneous Dirichlet boundary (torsion-type problems).
pub fn dirichlet_square(n: usize, l: f64) -> Result<Mesh2D> {
    build_rect_mesh(
        n,
        n,
        l,
        l,
        &[
            BoundarySpec::whole(Side::Left, BoundaryTag::Dirichlet),
            BoundarySpec::whole(Side::Right, BoundaryTag::Dirichlet),
            BoundarySpec::whole(Side::Bottom, BoundaryTag::Dirichlet),
            BoundarySpec::whole(Side::Top, BoundaryTag::Dirichlet),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantilever_tags() {
        let c = build_case(Preset::Cantilever, 10, 20, 10.0, 20.0, 1.0).unwrap();
        let d = c.mesh.tagged_edges(BoundaryTag::Dirichlet);
        assert_eq!(d.len(), 20);
        assert!(d.iter().all(|e| e.side == Side::Left));
        let n = c.mesh.tagged_edges(BoundaryTag::Neumann);
        assert_eq!(n.len(), 2);
        assert!(n.iter().all(|e| e.side == Side::Right));
    }

    #[test]
    fn lbeam_mask() {
        let c = build_case(Preset::LBeam, 10, 10, 1.0, 1.0, 1.0).unwrap();
        let inactive = c.mesh.active.iter().filter(|a| !**a).count();
        assert_eq!(inactive, 36); // 6x6 block masked
    }

    #[test]
    fn radiator_is_flux_driven() {
        let c = build_case(Preset::Radiator, 10, 10, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(c.flux, 1.0);
        assert_eq!(c.mesh.tagged_edges(BoundaryTag::Neumann).len(), 2);
    }
}
