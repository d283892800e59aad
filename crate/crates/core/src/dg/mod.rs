//! Broken polynomial spaces on the square mesh, their continuous subspace,
//! and discrete fields.

mod assembly;

pub(crate) use assembly::{
    assemble_field_weighted_mass, integrate_pointwise, integrate_pointwise2,
};

pub use assembly::{
    assemble_mass, assemble_nonlinear, assemble_nonlinear_jacobian, assemble_sipg,
    assemble_weighted_mass, default_penalty, edge_quadrature_degree, load_vector,
    sipg_smooth_load, volume_quadrature_degree, NonlinearVariant,
};

use std::collections::HashMap;
use std::sync::Arc;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use crate::error::{Error, Result};
use crate::mesh::{CellGeometry, Mesh, Point, QuadratureRule};

/// Nodal Lagrange basis of degree `r` on the reference triangle.
///
/// Nodes sit at `(i / r, j / r)` with `i + j <= r`, enumerated row by row
/// (`j` outer, `i` inner); for `r = 1` they coincide with the cell vertices.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    degree: usize,
    nodes: Vec<Point>,
    lattice: Vec<(usize, usize)>,
    exponents: Vec<(i32, i32)>,
    /// `coeffs[k][i]`: coefficient of monomial `k` in basis function `i`.
    coeffs: Vec<Vec<f64>>,
}

impl LagrangeBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidArgument("polynomial degree must be >= 1".into()));
        }
        let r = degree;
        let mut lattice = Vec::new();
        for j in 0..=r {
            for i in 0..=(r - j) {
                lattice.push((i, j));
            }
        }
        let nodes: Vec<Point> = lattice
            .iter()
            .map(|&(i, j)| [i as f64 / r as f64, j as f64 / r as f64])
            .collect();
        let mut exponents = Vec::new();
        for total in 0..=r as i32 {
            for b in 0..=total {
                exponents.push((total - b, b));
            }
        }
        let dim = nodes.len();
        let vandermonde = Mat::<f64>::from_fn(dim, dim, |row, k| {
            let (a, b) = exponents[k];
            nodes[row][0].powi(a) * nodes[row][1].powi(b)
        });
        let inv = vandermonde.partial_piv_lu().inverse();
        let coeffs = (0..dim)
            .map(|k| (0..dim).map(|i| inv[(k, i)]).collect())
            .collect();
        Ok(Self {
            degree,
            nodes,
            lattice,
            exponents,
            coeffs,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    /// Local indices of the nodes at the three reference vertices.
    pub fn vertex_nodes(&self) -> [usize; 3] {
        let r = self.degree;
        let find = |t: (usize, usize)| self.lattice.iter().position(|&l| l == t).unwrap();
        [find((0, 0)), find((r, 0)), find((0, r))]
    }

    pub fn values(&self, p: Point, out: &mut [f64]) {
        out.fill(0.0);
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            let m = p[0].powi(a) * p[1].powi(b);
            for (o, c) in out.iter_mut().zip(&self.coeffs[k]) {
                *o += c * m;
            }
        }
    }

    /// Reference-coordinate gradients.
    pub fn gradients(&self, p: Point, out: &mut [[f64; 2]]) {
        out.fill([0.0, 0.0]);
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            let dx = if a > 0 {
                a as f64 * p[0].powi(a - 1) * p[1].powi(b)
            } else {
                0.0
            };
            let dy = if b > 0 {
                b as f64 * p[0].powi(a) * p[1].powi(b - 1)
            } else {
                0.0
            };
            for (o, c) in out.iter_mut().zip(&self.coeffs[k]) {
                o[0] += c * dx;
                o[1] += c * dy;
            }
        }
    }

    /// Basis values and reference gradients tabulated at the points of `rule`.
    pub fn tabulate(&self, rule: &QuadratureRule) -> BasisTable {
        let dim = self.dim();
        let mut values = vec![0.0; rule.len() * dim];
        let mut grads = vec![[0.0; 2]; rule.len() * dim];
        for (q, &p) in rule.points.iter().enumerate() {
            self.values(p, &mut values[q * dim..(q + 1) * dim]);
            self.gradients(p, &mut grads[q * dim..(q + 1) * dim]);
        }
        BasisTable { dim, values, grads }
    }
}

#[derive(Debug, Clone)]
pub struct BasisTable {
    dim: usize,
    values: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

impl BasisTable {
    #[inline]
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.dim..(q + 1) * self.dim]
    }

    #[inline]
    pub fn grads(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.dim..(q + 1) * self.dim]
    }
}

/// The broken space `V_h` of piecewise degree-`r` polynomials together with
/// the node identification that defines the continuous subspace `S_h`.
#[derive(Debug, Clone)]
pub struct DgSpace {
    mesh: Arc<Mesh>,
    basis: LagrangeBasis,
    geometry: Vec<CellGeometry>,
    /// Continuous node id of every global DG degree of freedom.
    continuous_map: Vec<usize>,
    continuous_count: usize,
    /// DG degrees of freedom attached to each continuous node.
    continuous_members: Vec<Vec<usize>>,
}

impl DgSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        let basis = LagrangeBasis::new(degree)?;
        let geometry = (0..mesh.num_cells()).map(|c| mesh.cell_geometry(c)).collect();

        // Lagrange nodes live on the integer lattice of spacing 2 / (n r);
        // coincident nodes share lattice coordinates exactly.
        let n = mesh.n();
        let r = degree;
        let side = n * r + 1;
        let vertex_lattice = |v: usize| ((v % (n + 1)) * r, (v / (n + 1)) * r);
        let dim = basis.dim();
        let mut continuous_map = Vec::with_capacity(mesh.num_cells() * dim);
        let mut ids: HashMap<usize, usize> = HashMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (c, tri) in mesh.cells().iter().enumerate() {
            let p0 = vertex_lattice(tri[0]);
            let p1 = vertex_lattice(tri[1]);
            let p2 = vertex_lattice(tri[2]);
            for (local, &(i, j)) in basis.lattice.iter().enumerate() {
                let x = p0.0 as isize
                    + (i as isize * (p1.0 as isize - p0.0 as isize)
                        + j as isize * (p2.0 as isize - p0.0 as isize))
                        / r as isize;
                let y = p0.1 as isize
                    + (i as isize * (p1.1 as isize - p0.1 as isize)
                        + j as isize * (p2.1 as isize - p0.1 as isize))
                        / r as isize;
                let key = y as usize * side + x as usize;
                let next = ids.len();
                let id = *ids.entry(key).or_insert(next);
                if id == members.len() {
                    members.push(Vec::new());
                }
                members[id].push(c * dim + local);
                continuous_map.push(id);
            }
        }
        Ok(Self {
            mesh,
            basis,
            geometry,
            continuous_map,
            continuous_count: members.len(),
            continuous_members: members,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn local_dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn ndofs(&self) -> usize {
        self.mesh.num_cells() * self.local_dim()
    }

    pub fn num_continuous(&self) -> usize {
        self.continuous_count
    }

    pub fn continuous_map(&self) -> &[usize] {
        &self.continuous_map
    }

    pub fn continuous_members(&self, node: usize) -> &[usize] {
        &self.continuous_members[node]
    }

    pub fn geometry(&self, cell: usize) -> &CellGeometry {
        &self.geometry[cell]
    }

    pub fn cell_dofs(&self, cell: usize) -> std::ops::Range<usize> {
        let d = self.local_dim();
        cell * d..(cell + 1) * d
    }

    /// Physical coordinates of every global DG node.
    pub fn node_coordinates(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.ndofs());
        for g in &self.geometry {
            for &p in self.basis.nodes() {
                out.push(g.to_physical(p));
            }
        }
        out
    }

    fn layout(&self) -> Layout {
        Layout {
            cells: self.mesh.num_cells(),
            degree: self.degree(),
        }
    }

    pub fn check(&self, field: &DgField) -> Result<()> {
        if field.layout != self.layout() || field.coeffs.len() != self.ndofs() {
            return Err(Error::SpaceMismatch {
                expected: self.ndofs(),
                got: field.coeffs.len(),
            });
        }
        Ok(())
    }

    pub fn zero_field(&self, kind: FieldKind) -> DgField {
        DgField {
            coeffs: vec![0.0; self.ndofs()],
            kind,
            layout: self.layout(),
        }
    }

    pub fn field(&self, coeffs: Vec<f64>, kind: FieldKind) -> Result<DgField> {
        if coeffs.len() != self.ndofs() {
            return Err(Error::SpaceMismatch {
                expected: self.ndofs(),
                got: coeffs.len(),
            });
        }
        Ok(DgField {
            coeffs,
            kind,
            layout: self.layout(),
        })
    }

    pub fn constant(&self, value: f64) -> DgField {
        DgField {
            coeffs: vec![value; self.ndofs()],
            kind: FieldKind::Continuous,
            layout: self.layout(),
        }
    }

    /// Nodal interpolant; continuous because Lagrange nodes coincide.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> DgField {
        let coeffs = self.node_coordinates().into_iter().map(f).collect();
        DgField {
            coeffs,
            kind: FieldKind::Continuous,
            layout: self.layout(),
        }
    }

    /// Expands a vector over continuous nodes into DG coefficients.
    pub fn prolongate(&self, continuous: &[f64]) -> DgField {
        assert_eq!(continuous.len(), self.continuous_count);
        let coeffs = self.continuous_map.iter().map(|&id| continuous[id]).collect();
        DgField {
            coeffs,
            kind: FieldKind::Continuous,
            layout: self.layout(),
        }
    }

    /// Sums DG entries of `v` per continuous node: the transpose of `prolongate`.
    pub fn restrict_sum(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.continuous_count];
        for (i, &id) in self.continuous_map.iter().enumerate() {
            out[id] += v[i];
        }
        out
    }

    /// Value of `field` at reference point `p` of `cell`.
    pub fn eval_field(&self, field: &DgField, cell: usize, p: Point) -> Result<f64> {
        self.check(field)?;
        self.mesh.check_cell(cell)?;
        let mut phi = vec![0.0; self.local_dim()];
        self.basis.values(p, &mut phi);
        Ok(field.coeffs[self.cell_dofs(cell)]
            .iter()
            .zip(&phi)
            .map(|(c, v)| c * v)
            .sum())
    }

    /// Physical gradient of `field` restricted to `cell`, at reference point `p`.
    pub fn broken_gradient(&self, field: &DgField, cell: usize, p: Point) -> Result<[f64; 2]> {
        self.check(field)?;
        self.mesh.check_cell(cell)?;
        let mut g = vec![[0.0; 2]; self.local_dim()];
        self.basis.gradients(p, &mut g);
        let mut acc = [0.0; 2];
        for (c, gi) in field.coeffs[self.cell_dofs(cell)].iter().zip(&g) {
            acc[0] += c * gi[0];
            acc[1] += c * gi[1];
        }
        Ok(self.geometry[cell].push_gradient(acc))
    }

    /// Value of `field` at a physical point, evaluated in the cell that
    /// contains it.
    pub fn eval_at(&self, field: &DgField, p: Point) -> Result<f64> {
        let cell = self.mesh.locate(p);
        let r = self.geometry[cell].to_reference(p);
        self.eval_field(field, cell, r)
    }

    /// `(u, 1)`.
    pub fn integral(&self, field: &DgField, mass: &crate::linalg::SparseMatrix) -> Result<f64> {
        self.check(field)?;
        let ones = vec![1.0; self.ndofs()];
        Ok(mass.bilinear(&ones, &field.coeffs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Broken,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    cells: usize,
    degree: usize,
}

/// Coefficients of a discrete function in the local nodal bases.
#[derive(Debug, Clone, PartialEq)]
pub struct DgField {
    coeffs: Vec<f64>,
    kind: FieldKind,
    layout: Layout,
}

impl DgField {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.layout.degree
    }

    pub fn num_cells(&self) -> usize {
        self.layout.cells
    }

    /// Same layout, new coefficients.
    pub fn with_coeffs(&self, coeffs: Vec<f64>, kind: FieldKind) -> DgField {
        assert_eq!(coeffs.len(), self.coeffs.len());
        DgField {
            coeffs,
            kind,
            layout: self.layout,
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &DgField) -> DgField {
        assert_eq!(self.layout, other.layout);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + alpha * b)
            .collect();
        let kind = if self.kind == FieldKind::Continuous && other.kind == FieldKind::Continuous {
            FieldKind::Continuous
        } else {
            FieldKind::Broken
        };
        DgField {
            coeffs,
            kind,
            layout: self.layout,
        }
    }

    /// Largest coefficient mismatch at geometrically coincident nodes.
    pub fn continuity_defect(&self, space: &DgSpace) -> f64 {
        let mut worst = 0.0f64;
        for node in 0..space.num_continuous() {
            let m = space.continuous_members(node);
            let first = self.coeffs[m[0]];
            for &i in &m[1..] {
                worst = worst.max((self.coeffs[i] - first).abs());
            }
        }
        worst
    }
}
