//! Cartesian Q2 grids on the unit square.
//!
//! Nodes live on a `(2 nx + 1) × (2 ny + 1)` lattice numbered row-major with
//! x fastest. Element `(ex, ey)` owns the lattice nodes `(2ex + a, 2ey + b)`
//! for `a, b ∈ {0, 1, 2}`.

use crate::error::{Error, Result};
use crate::field::{Anisotropy, Point};
use crate::quadrature::GAUSS3_POINTS;

/// Tolerance on `|b · n|` below which an edge counts as parallel.
pub const PARALLEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Inflow,
    Outflow,
    Parallel,
}

impl BoundaryKind {
    /// Inflow and outflow edges together make up the Robin part of the
    /// boundary.
    pub fn is_transverse(self) -> bool {
        !matches!(self, BoundaryKind::Parallel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    /// Local node indices along this side, in increasing coordinate order.
    fn local_nodes(self) -> [usize; 3] {
        match self {
            Side::Left => [0, 3, 6],
            Side::Right => [2, 5, 8],
            Side::Bottom => [0, 1, 2],
            Side::Top => [6, 7, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub element: usize,
    pub side: Side,
    /// Global node indices, ordered along the edge.
    pub nodes: [usize; 3],
    pub start: Point,
    pub end: Point,
    pub kind: Option<BoundaryKind>,
}

impl BoundaryEdge {
    pub fn normal(&self) -> [f64; 2] {
        self.side.normal()
    }

    pub fn length(&self) -> f64 {
        ((self.end[0] - self.start[0]).powi(2) + (self.end[1] - self.start[1]).powi(2)).sqrt()
    }

    /// Physical point at edge parameter `s ∈ [-1, 1]`.
    pub fn point(&self, s: f64) -> Point {
        let t = 0.5 * (s + 1.0);
        [
            self.start[0] + t * (self.end[0] - self.start[0]),
            self.start[1] + t * (self.end[1] - self.start[1]),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    elements: Vec<[usize; 9]>,
    edges: Vec<BoundaryEdge>,
}

impl Grid {
    /// Grid with `nx × ny` Q2 elements of size `1/nx × 1/ny`.
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!(
                "element counts must be positive, got {nx}x{ny}"
            )));
        }
        let hx = 1.0 / nx as f64;
        let hy = 1.0 / ny as f64;
        let stride = 2 * nx + 1;
        let mut elements = Vec::with_capacity(nx * ny);
        for ey in 0..ny {
            for ex in 0..nx {
                let mut conn = [0; 9];
                for b in 0..3 {
                    for a in 0..3 {
                        conn[3 * b + a] = (2 * ey + b) * stride + 2 * ex + a;
                    }
                }
                elements.push(conn);
            }
        }
        let mut grid = Self {
            nx,
            ny,
            hx,
            hy,
            elements,
            edges: Vec::new(),
        };
        grid.edges = grid.collect_edges();
        Ok(grid)
    }

    /// Grid described by its lattice interval counts: `lx × ly` lattice
    /// intervals of width `1/lx`, i.e. `lx/2 × ly/2` elements. Counts must be
    /// even and at least 2.
    pub fn from_lattice(lx: usize, ly: usize) -> Result<Self> {
        if lx < 2 || ly < 2 || !lx.is_multiple_of(2) || !ly.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "lattice interval counts must be even and >= 2, got {lx}x{ly}"
            )));
        }
        Self::new(lx / 2, ly / 2)
    }

    /// Square grid whose lattice spacing is `h`; `1/h` must be an even
    /// integer.
    pub fn with_spacing(h: f64) -> Result<Self> {
        let n = lattice_count(h)?;
        Self::from_lattice(n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Element width.
    pub fn hx(&self) -> f64 {
        self.hx
    }

    /// Element height.
    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Distance between neighbouring lattice nodes along x.
    pub fn lattice_spacing(&self) -> f64 {
        0.5 * self.hx
    }

    pub fn nodes_x(&self) -> usize {
        2 * self.nx + 1
    }

    pub fn nodes_y(&self) -> usize {
        2 * self.ny + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_x() * self.nodes_y()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[[usize; 9]] {
        &self.elements
    }

    pub fn edges(&self) -> &[BoundaryEdge] {
        &self.edges
    }

    pub fn node(&self, index: usize) -> Point {
        let stride = self.nodes_x();
        let (i, j) = (index % stride, index / stride);
        [
            i as f64 * 0.5 * self.hx,
            j as f64 * 0.5 * self.hy,
        ]
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> Point {
        let (ex, ey) = (e % self.nx, e / self.nx);
        [ex as f64 * self.hx, ey as f64 * self.hy]
    }

    /// Affine map from reference coordinates to element `e`.
    pub fn to_physical(&self, e: usize, xi: [f64; 2]) -> Point {
        let o = self.element_origin(e);
        [
            o[0] + 0.5 * (xi[0] + 1.0) * self.hx,
            o[1] + 0.5 * (xi[1] + 1.0) * self.hy,
        ]
    }

    /// Scale factors turning reference gradients into physical gradients.
    pub fn gradient_scale(&self) -> [f64; 2] {
        [2.0 / self.hx, 2.0 / self.hy]
    }

    /// Jacobian determinant of the element map.
    pub fn jacobian_det(&self) -> f64 {
        0.25 * self.hx * self.hy
    }

    pub fn is_classified(&self) -> bool {
        self.edges.iter().all(|e| e.kind.is_some())
    }

    /// Tags every boundary edge by the sign of `b · n` at its midpoint.
    ///
    /// Fails when `b · n` changes sign across the Gauss points of one edge,
    /// which means the mesh does not resolve the field on that edge.
    pub fn classify_boundary(mut self, field: &dyn Anisotropy) -> Result<Self> {
        for (index, edge) in self.edges.iter_mut().enumerate() {
            let n = edge.normal();
            let flux = |p: Point| {
                let b = field.direction(p);
                b.x * n[0] + b.y * n[1]
            };
            let kind = classify_value(flux(edge.point(0.0)));
            for s in GAUSS3_POINTS {
                let other = classify_value(flux(edge.point(s)));
                if other != kind {
                    return Err(Error::UnresolvedBoundary { edge: index });
                }
            }
            edge.kind = Some(kind);
        }
        Ok(self)
    }

    /// Sorted, deduplicated node indices lying on edges of the given kind.
    pub fn boundary_nodes(&self, kind: BoundaryKind) -> Result<Vec<usize>> {
        let mut nodes = Vec::new();
        for edge in &self.edges {
            match edge.kind {
                None => return Err(Error::Unclassified),
                Some(k) if k == kind => nodes.extend_from_slice(&edge.nodes),
                Some(_) => {}
            }
        }
        nodes.sort_unstable();
        nodes.dedup();
        Ok(nodes)
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..self.num_nodes()).map(|i| f(self.node(i))).collect()
    }

    fn collect_edges(&self) -> Vec<BoundaryEdge> {
        let mut edges = Vec::with_capacity(2 * (self.nx + self.ny));
        let mut push = |e: usize, side: Side| {
            let local = side.local_nodes();
            let conn = &self.elements[e];
            let nodes = [conn[local[0]], conn[local[1]], conn[local[2]]];
            edges.push(BoundaryEdge {
                element: e,
                side,
                nodes,
                start: self.node(nodes[0]),
                end: self.node(nodes[2]),
                kind: None,
            });
        };
        for ex in 0..self.nx {
            push(ex, Side::Bottom);
        }
        for ey in 0..self.ny {
            push(ey * self.nx + self.nx - 1, Side::Right);
        }
        for ex in 0..self.nx {
            push((self.ny - 1) * self.nx + ex, Side::Top);
        }
        for ey in 0..self.ny {
            push(ey * self.nx, Side::Left);
        }
        edges
    }
}

fn classify_value(bn: f64) -> BoundaryKind {
    if bn.abs() <= PARALLEL_TOL {
        BoundaryKind::Parallel
    } else if bn < 0.0 {
        BoundaryKind::Inflow
    } else {
        BoundaryKind::Outflow
    }
}

/// Number of lattice intervals per unit length for spacing `h`.
pub fn lattice_count(h: f64) -> Result<usize> {
    if !(h > 0.0 && h <= 0.5) {
        return Err(Error::InvalidGrid(format!("lattice spacing {h} out of (0, 0.5]")));
    }
    let n = (1.0 / h).round();
    if ((1.0 / h) - n).abs() > 1e-9 * n || !(n as usize).is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!(
            "1/h must be an even integer, got h = {h}"
        )));
    }
    Ok(n as usize)
}
