//! Uniform triangulations of the square `[-1, 1]^2` with edge topology.

mod quadrature;

pub use quadrature::{
    edge_quadrature, gauss_legendre_unit, triangle_quadrature, QuadratureRule,
    MAX_QUADRATURE_DEGREE,
};

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Lower-left corner and side length of the computational domain.
pub const DOMAIN_MIN: f64 = -1.0;
pub const DOMAIN_SIDE: f64 = 2.0;
pub const DOMAIN_AREA: f64 = DOMAIN_SIDE * DOMAIN_SIDE;

/// An edge shared by two cells.
///
/// `left` is the cell with the larger index; the jump across the edge is
/// `v|_left - v|_right` and `normal` is the unit normal pointing out of `left`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdge {
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: usize,
    pub normal: Point,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub cell: usize,
    pub normal: Point,
    pub length: f64,
}

/// Square-split triangulation of `[-1, 1]^2` with `n` subdivisions per axis.
///
/// Square `(i, j)` holds cells `2 (j n + i)` (below the diagonal) and
/// `2 (j n + i) + 1` (above it); every square is cut along its
/// lower-left to upper-right diagonal, so `n -> 2n` refinement is nested.
#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    interior_edges: Vec<InteriorEdge>,
    boundary_edges: Vec<BoundaryEdge>,
    cell_edges: Vec<[EdgeRef; 3]>,
    h: f64,
}

/// Reference from a cell's local edge to the global edge lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRef {
    Interior(usize),
    Boundary(usize),
}

impl Mesh {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "mesh needs at least one subdivision".into(),
            ));
        }
        let step = DOMAIN_SIDE / n as f64;
        let vid = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([DOMAIN_MIN + i as f64 * step, DOMAIN_MIN + j as f64 * step]);
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                cells.push([v00, v10, v11]);
                cells.push([v00, v11, v01]);
            }
        }

        // local edge e of a cell joins local vertices (e+1, e+2), i.e. it is
        // opposite to vertex e
        let mut owners: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (c, tri) in cells.iter().enumerate() {
            for e in 0..3 {
                let a = tri[(e + 1) % 3];
                let b = tri[(e + 2) % 3];
                owners.entry((a.min(b), a.max(b))).or_default().push((c, e));
            }
        }
        let mut keys: Vec<_> = owners.keys().copied().collect();
        keys.sort_unstable();

        let mut interior_edges = Vec::new();
        let mut boundary_edges = Vec::new();
        let mut cell_edges = vec![[EdgeRef::Boundary(usize::MAX); 3]; cells.len()];
        for key in keys {
            let list = &owners[&key];
            let (a, b) = key;
            let pa = vertices[a];
            let pb = vertices[b];
            let length = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            match list.as_slice() {
                &[(c, e)] => {
                    let normal = outward_normal(&vertices, &cells[c], e);
                    cell_edges[c][e] = EdgeRef::Boundary(boundary_edges.len());
                    boundary_edges.push(BoundaryEdge {
                        vertices: [a, b],
                        cell: c,
                        normal,
                        length,
                    });
                }
                &[(c0, e0), (c1, e1)] => {
                    let ((left, el), (right, er)) = if c0 > c1 {
                        ((c0, e0), (c1, e1))
                    } else {
                        ((c1, e1), (c0, e0))
                    };
                    let normal = outward_normal(&vertices, &cells[left], el);
                    let id = interior_edges.len();
                    cell_edges[left][el] = EdgeRef::Interior(id);
                    cell_edges[right][er] = EdgeRef::Interior(id);
                    interior_edges.push(InteriorEdge {
                        vertices: [a, b],
                        left,
                        right,
                        normal,
                        length,
                    });
                }
                _ => unreachable!("edge with more than two cells in a planar triangulation"),
            }
        }

        Ok(Self {
            n,
            vertices,
            cells,
            interior_edges,
            boundary_edges,
            cell_edges,
            h: step * std::f64::consts::SQRT_2,
        })
    }

    /// Subdivisions per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Maximum cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.interior_edges
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Global edges of a cell, indexed by the opposite local vertex.
    pub fn cell_edges(&self, cell: usize) -> &[EdgeRef; 3] {
        &self.cell_edges[cell]
    }

    pub fn cell_vertices(&self, cell: usize) -> [Point; 3] {
        let t = self.cells[cell];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.cells.len() {
            return Err(Error::CellOutOfRange {
                cell,
                cells: self.cells.len(),
            });
        }
        Ok(())
    }

    pub fn cell_geometry(&self, cell: usize) -> CellGeometry {
        CellGeometry::new(self.cell_vertices(cell))
    }

    /// Cell containing `p`; points on shared edges resolve to one of the
    /// adjacent cells, points outside the domain are clamped onto it.
    pub fn locate(&self, p: Point) -> usize {
        let n = self.n;
        let step = DOMAIN_SIDE / n as f64;
        let fx = ((p[0] - DOMAIN_MIN) / step).clamp(0.0, n as f64);
        let fy = ((p[1] - DOMAIN_MIN) / step).clamp(0.0, n as f64);
        let i = (fx.floor() as usize).min(n - 1);
        let j = (fy.floor() as usize).min(n - 1);
        let lx = fx - i as f64;
        let ly = fy - j as f64;
        let base = 2 * (j * n + i);
        if ly <= lx {
            base
        } else {
            base + 1
        }
    }
}

fn outward_normal(vertices: &[Point], tri: &[usize; 3], local_edge: usize) -> Point {
    let a = vertices[tri[(local_edge + 1) % 3]];
    let b = vertices[tri[(local_edge + 2) % 3]];
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    // counterclockwise cell: the outward normal of a->b is the tangent rotated clockwise
    [(b[1] - a[1]) / len, -(b[0] - a[0]) / len]
}

/// Affine map from the reference triangle onto a mesh cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub origin: Point,
    /// Columns are `v1 - v0` and `v2 - v0`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub inv_jacobian: [[f64; 2]; 2],
}

impl CellGeometry {
    pub fn new(v: [Point; 3]) -> Self {
        let j = [
            [v[1][0] - v[0][0], v[2][0] - v[0][0]],
            [v[1][1] - v[0][1], v[2][1] - v[0][1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv = [
            [j[1][1] / det, -j[0][1] / det],
            [-j[1][0] / det, j[0][0] / det],
        ];
        Self {
            origin: v[0],
            jacobian: j,
            det,
            inv_jacobian: inv,
        }
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }

    pub fn to_physical(&self, r: Point) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * r[0] + j[0][1] * r[1],
            self.origin[1] + j[1][0] * r[0] + j[1][1] * r[1],
        ]
    }

    pub fn to_reference(&self, p: Point) -> Point {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1]];
        let ji = &self.inv_jacobian;
        [
            ji[0][0] * d[0] + ji[0][1] * d[1],
            ji[1][0] * d[0] + ji[1][1] * d[1],
        ]
    }

    /// Maps a reference gradient to the physical one: `J^{-T} g`.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let ji = &self.inv_jacobian;
        [
            ji[0][0] * g[0] + ji[1][0] * g[1],
            ji[0][1] * g[0] + ji[1][1] * g[1],
        ]
    }
}
