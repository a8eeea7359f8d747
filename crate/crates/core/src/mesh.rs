//! Structured quadrilateral meshes of a rectangle with tagged boundary
//! segments.
//!
//! Nodes are numbered row-major: node `(i, j)` has index `j*(nx+1) + i` and
//! coordinates `(i*lx/nx, j*ly/ny)`.  Element `(i, j)` has index `j*nx + i`
//! and counter-clockwise connectivity `[n(i,j), n(i+1,j), n(i+1,j+1),
//! n(i,j+1)]`.  Irregular domains (L-beams) are realized by masking elements
//! of the rectangle; masked elements keep ersatz stiffness and are excluded
//! from objective and volume integrals.

use crate::error::{Error, Result};

/// Sides of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Boundary condition tag carried by boundary edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
    Free,
}

/// A tagged interval on one side of the rectangle.  The interval is in
/// physical coordinates along the side (x for Bottom/Top, y for Left/Right).
#[derive(Debug, Clone, Copy)]
pub struct BoundarySpec {
    pub side: Side,
    pub interval: (f64, f64),
    pub tag: BoundaryTag,
}

impl BoundarySpec {
    pub fn whole(side: Side, tag: BoundaryTag) -> Self {
        Self { side, interval: (f64::NEG_INFINITY, f64::INFINITY), tag }
    }
}

/// A boundary edge: pair of node indices plus its tag and side.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub nodes: (usize, usize),
    pub tag: BoundaryTag,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 4]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Elements excluded from the physical domain (ersatz stiffness, no
    /// objective/volume contribution).  Empty means all active.
    pub active: Vec<bool>,
}

/// Build a structured rectangle mesh with tagged boundary intervals.
///
/// Untagged boundary edges default to `Free`.  Overlapping tagged intervals
/// on the same side are rejected.
pub fn build_rect_mesh(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    boundary_spec: &[BoundarySpec],
) -> Result<Mesh2D> {
    if nx < 1 || ny < 1 {
        return Err(Error::InvalidMesh(format!("need nx, ny >= 1, got {nx} x {ny}")));
    }
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::InvalidMesh(format!("need positive side lengths, got {lx} x {ly}")));
    }
    let hx = lx / nx as f64;
    let hy = ly / ny as f64;

    // reject overlapping tagged intervals per side regardless of resolution
    for side in [Side::Left, Side::Right, Side::Bottom, Side::Top] {
        let len = match side {
            Side::Left | Side::Right => ly,
            Side::Bottom | Side::Top => lx,
        };
        let specs: Vec<(f64, f64)> = boundary_spec
            .iter()
            .filter(|s| s.side == side)
            .map(|s| {
                let (a, b) = s.interval;
                (a.min(b).max(0.0), a.max(b).min(len))
            })
            .collect();
        for i in 0..specs.len() {
            for j in i + 1..specs.len() {
                let lo = specs[i].0.max(specs[j].0);
                let hi = specs[i].1.min(specs[j].1);
                if lo < hi {
                    return Err(Error::OverlappingTags { side, at: (lo, hi) });
                }
            }
        }
    }

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 * hx, j as f64 * hy]);
        }
    }
    let nid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut elements = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            elements.push([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)]);
        }
    }

    let mut boundary_edges = Vec::new();
    let mut tag_edge = |nodes_pair: (usize, usize), side: Side, mid: f64| -> Result<()> {
        let mut tag = None;
        for spec in boundary_spec.iter().filter(|s| s.side == side) {
            let (a, b) = spec.interval;
            if mid >= a.min(b) && mid <= a.max(b) {
                if tag.is_some() {
                    return Err(Error::OverlappingTags { side, at: (mid, mid) });
                }
                tag = Some(spec.tag);
            }
        }
        boundary_edges.push(BoundaryEdge {
            nodes: nodes_pair,
            tag: tag.unwrap_or(BoundaryTag::Free),
            side,
        });
        Ok(())
    };

    for i in 0..nx {
        let mid = (i as f64 + 0.5) * hx;
        tag_edge((nid(i, 0), nid(i + 1, 0)), Side::Bottom, mid)?;
        tag_edge((nid(i, ny), nid(i + 1, ny)), Side::Top, mid)?;
    }
    for j in 0..ny {
        let mid = (j as f64 + 0.5) * hy;
        tag_edge((nid(0, j), nid(0, j + 1)), Side::Left, mid)?;
        tag_edge((nid(nx, j), nid(nx, j + 1)), Side::Right, mid)?;
    }

    Ok(Mesh2D {
        nx,
        ny,
        lx,
        ly,
        nodes,
        elements,
        boundary_edges,
        active: vec![true; nx * ny],
    })
}

impl Mesh2D {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn element_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Element sizes (uniform over the structured grid).
    pub fn element_size(&self) -> (f64, f64) {
        (self.lx / self.nx as f64, self.ly / self.ny as f64)
    }

    pub fn element_area(&self) -> f64 {
        let (hx, hy) = self.element_size();
        hx * hy
    }

    pub fn element_center(&self, e: usize) -> [f64; 2] {
        let i = e % self.nx;
        let j = e / self.nx;
        let (hx, hy) = self.element_size();
        [(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy]
    }

    /// Total area of active elements.
    pub fn active_area(&self) -> f64 {
        self.element_area() * self.active.iter().filter(|a| **a).count() as f64
    }

    /// Mask out elements whose center satisfies the predicate; they become
    /// inactive (ersatz material, no objective/volume contribution).
    pub fn mask_elements<F: Fn([f64; 2]) -> bool>(&mut self, is_void: F) {
        for e in 0..self.num_elements() {
            if is_void(self.element_center(e)) {
                self.active[e] = false;
            }
        }
    }

    /// Nodes lying on edges with the given tag, sorted and deduplicated.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| [e.nodes.0, e.nodes.1])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn tagged_edges(&self, tag: BoundaryTag) -> Vec<&BoundaryEdge> {
        self.boundary_edges.iter().filter(|e| e.tag == tag).collect()
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let a = self.nodes[e.nodes.0];
        let b = self.nodes[e.nodes.1];
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }
}
