//! Assembly of the interior-penalty form, mass matrices and the
//! cubic nonlinearity over a [`DgSpace`].

use crate::error::{Error, Result};
use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::mesh::{edge_quadrature, triangle_quadrature, InteriorEdge, Point};

use super::{DgField, DgSpace};

/// Volume rule degree; `4r` integrates `(U^3, phi)` exactly.
pub fn volume_quadrature_degree(r: usize) -> usize {
    (2 * r + 2).max(4 * r)
}

pub fn edge_quadrature_degree(r: usize) -> usize {
    2 * r + 2
}

/// Default penalty `10 r (r + 1)`.
pub fn default_penalty(r: usize) -> f64 {
    10.0 * (r * (r + 1)) as f64
}

/// Nonlinear term `f^m` used by the time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearVariant {
    /// `f^m = (U^m)^3 - U^{m-1}`: convex splitting.
    Splitting,
    /// `f^m = (U^m)^3 - U^m`: fully implicit.
    Implicit,
}

impl std::fmt::Display for NonlinearVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NonlinearVariant::Splitting => "splitting",
            NonlinearVariant::Implicit => "implicit",
        })
    }
}

impl std::str::FromStr for NonlinearVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "splitting" => Ok(Self::Splitting),
            "implicit" => Ok(Self::Implicit),
            other => Err(Error::Parse(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Cell-block-diagonal matrix `(w phi_j, phi_i)` where the weight is given
/// per cell and quadrature point.
fn assemble_cell_blocks(
    space: &DgSpace,
    degree: usize,
    mut weight: impl FnMut(usize, usize, &[f64]) -> f64,
) -> SparseMatrix {
    let rule = triangle_quadrature(degree).expect("quadrature degree within table");
    let table = space.basis().tabulate(&rule);
    let d = space.local_dim();
    let n = space.ndofs();
    let mut b = TripletBuilder::with_capacity(n, n, space.mesh().num_cells() * d * d);
    let mut local = vec![0.0; d * d];
    for cell in 0..space.mesh().num_cells() {
        local.fill(0.0);
        let det = space.geometry(cell).det.abs();
        for q in 0..rule.len() {
            let phi = table.values(q);
            let w = rule.weights[q] * det * weight(cell, q, phi);
            for i in 0..d {
                for j in 0..d {
                    local[i * d + j] += w * phi[i] * phi[j];
                }
            }
        }
        let off = cell * d;
        for i in 0..d {
            for j in 0..d {
                b.push(off + i, off + j, local[i * d + j]);
            }
        }
    }
    b.build(true)
}

/// `L^2` mass matrix.
pub fn assemble_mass(space: &DgSpace) -> SparseMatrix {
    assemble_cell_blocks(space, 2 * space.degree(), |_, _, _| 1.0)
}

/// Mass matrix weighted by a smooth function of position.
pub fn assemble_weighted_mass(
    space: &DgSpace,
    degree: usize,
    weight: impl Fn(Point) -> f64,
) -> SparseMatrix {
    let rule = triangle_quadrature(degree).expect("quadrature degree within table");
    assemble_cell_blocks(space, degree, |cell, q, _| {
        weight(space.geometry(cell).to_physical(rule.points[q]))
    })
}

#[inline]
fn local_value(coeffs: &[f64], phi: &[f64]) -> f64 {
    coeffs.iter().zip(phi).map(|(c, p)| c * p).sum()
}

/// Symmetric interior-penalty matrix with penalty `sigma0 / h_e` on every
/// interior edge; boundary edges carry no terms.
pub fn assemble_sipg(space: &DgSpace, sigma0: f64) -> Result<SparseMatrix> {
    if !(sigma0 > 0.0 && sigma0.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "penalty must be positive, got {sigma0}"
        )));
    }
    let r = space.degree();
    let d = space.local_dim();
    let n = space.ndofs();
    let mesh = space.mesh();
    let mut b = TripletBuilder::with_capacity(
        n,
        n,
        mesh.num_cells() * d * d + mesh.interior_edges().len() * 4 * d * d,
    );

    // volume gradients
    let rule = triangle_quadrature(volume_quadrature_degree(r))?;
    let table = space.basis().tabulate(&rule);
    let mut grads = vec![[0.0; 2]; d];
    let mut local = vec![0.0; d * d];
    for cell in 0..mesh.num_cells() {
        let g = space.geometry(cell);
        local.fill(0.0);
        for q in 0..rule.len() {
            for (out, gr) in grads.iter_mut().zip(table.grads(q)) {
                *out = g.push_gradient(*gr);
            }
            let w = rule.weights[q] * g.det.abs();
            for i in 0..d {
                for j in 0..d {
                    local[i * d + j] += w * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                }
            }
        }
        let off = cell * d;
        for i in 0..d {
            for j in 0..d {
                b.push(off + i, off + j, local[i * d + j]);
            }
        }
    }

    // interior edges: consistency, symmetry and penalty terms
    let erule = edge_quadrature(edge_quadrature_degree(r))?;
    let mut trace = EdgeTrace::new(d);
    let mut block = vec![0.0; 4 * d * d];
    for edge in mesh.interior_edges() {
        block.fill(0.0);
        let pen = sigma0 / edge.length;
        for q in 0..erule.len() {
            trace.evaluate(space, edge, erule.points[q][0]);
            let w = erule.weights[q] * edge.length;
            // side 0 = left (sign +1), side 1 = right (sign -1)
            for si in 0..2 {
                let s_i = if si == 0 { 1.0 } else { -1.0 };
                for i in 0..d {
                    let vi = trace.values[si][i];
                    let dni = trace.normal_grads[si][i];
                    for sj in 0..2 {
                        let s_j = if sj == 0 { 1.0 } else { -1.0 };
                        for j in 0..d {
                            let vj = trace.values[sj][j];
                            let dnj = trace.normal_grads[sj][j];
                            let val = -0.5 * dnj * s_i * vi - 0.5 * dni * s_j * vj
                                + pen * s_i * s_j * vi * vj;
                            block[((si * d + i) * 2 + sj) * d + j] += w * val;
                        }
                    }
                }
            }
        }
        let cells = [edge.left, edge.right];
        for si in 0..2 {
            for i in 0..d {
                for sj in 0..2 {
                    for j in 0..d {
                        b.push(
                            cells[si] * d + i,
                            cells[sj] * d + j,
                            block[((si * d + i) * 2 + sj) * d + j],
                        );
                    }
                }
            }
        }
    }
    Ok(b.build(true))
}

/// Basis traces of the two cells adjacent to an interior edge at one point.
pub(crate) struct EdgeTrace {
    pub point: Point,
    pub values: [Vec<f64>; 2],
    pub normal_grads: [Vec<f64>; 2],
    grads: Vec<[f64; 2]>,
}

impl EdgeTrace {
    pub fn new(d: usize) -> Self {
        Self {
            point: [0.0, 0.0],
            values: [vec![0.0; d], vec![0.0; d]],
            normal_grads: [vec![0.0; d], vec![0.0; d]],
            grads: vec![[0.0; 2]; d],
        }
    }

    pub fn evaluate(&mut self, space: &DgSpace, edge: &InteriorEdge, s: f64) {
        let mesh = space.mesh();
        let a = mesh.vertices()[edge.vertices[0]];
        let bv = mesh.vertices()[edge.vertices[1]];
        let x = [a[0] + s * (bv[0] - a[0]), a[1] + s * (bv[1] - a[1])];
        self.point = x;
        for (side, cell) in [edge.left, edge.right].into_iter().enumerate() {
            let g = space.geometry(cell);
            let r = g.to_reference(x);
            space.basis().values(r, &mut self.values[side]);
            space.basis().gradients(r, &mut self.grads);
            for (out, gr) in self.normal_grads[side].iter_mut().zip(&self.grads) {
                let p = g.push_gradient(*gr);
                *out = p[0] * edge.normal[0] + p[1] * edge.normal[1];
            }
        }
    }
}

/// `(f, phi_i)` for a smooth `f`.
pub fn load_vector(space: &DgSpace, degree: usize, f: impl Fn(Point) -> f64) -> Result<Vec<f64>> {
    let rule = triangle_quadrature(degree)?;
    let table = space.basis().tabulate(&rule);
    let d = space.local_dim();
    let mut out = vec![0.0; space.ndofs()];
    for cell in 0..space.mesh().num_cells() {
        let g = space.geometry(cell);
        let det = g.det.abs();
        let dofs = &mut out[cell * d..(cell + 1) * d];
        for q in 0..rule.len() {
            let w = rule.weights[q] * det * f(g.to_physical(rule.points[q]));
            for (o, p) in dofs.iter_mut().zip(table.values(q)) {
                *o += w * p;
            }
        }
    }
    Ok(out)
}

/// `a_h(u, phi_i)` for a smooth `u` given through its gradient: volume
/// gradients minus edge terms `(grad u . n_e) [phi_i]`; the jumps of `u`
/// vanish.
pub fn sipg_smooth_load(
    space: &DgSpace,
    degree: usize,
    grad_u: impl Fn(Point) -> [f64; 2],
) -> Result<Vec<f64>> {
    let rule = triangle_quadrature(degree)?;
    let table = space.basis().tabulate(&rule);
    let d = space.local_dim();
    let mut out = vec![0.0; space.ndofs()];
    for cell in 0..space.mesh().num_cells() {
        let g = space.geometry(cell);
        let det = g.det.abs();
        for q in 0..rule.len() {
            let gu = grad_u(g.to_physical(rule.points[q]));
            let w = rule.weights[q] * det;
            for (i, gr) in table.grads(q).iter().enumerate() {
                let p = g.push_gradient(*gr);
                out[cell * d + i] += w * (gu[0] * p[0] + gu[1] * p[1]);
            }
        }
    }
    let erule = edge_quadrature(degree)?;
    let mut trace = EdgeTrace::new(d);
    for edge in space.mesh().interior_edges() {
        for q in 0..erule.len() {
            trace.evaluate(space, edge, erule.points[q][0]);
            let gu = grad_u(trace.point);
            let dn = gu[0] * edge.normal[0] + gu[1] * edge.normal[1];
            let w = erule.weights[q] * edge.length * dn;
            for i in 0..d {
                out[edge.left * d + i] -= w * trace.values[0][i];
                out[edge.right * d + i] += w * trace.values[1][i];
            }
        }
    }
    Ok(out)
}

/// `(f^m, phi_i)` with `f^m = U^3 - U_prev` (splitting) or `U^3 - U` (implicit).
pub fn assemble_nonlinear(
    space: &DgSpace,
    u: &DgField,
    u_prev: &DgField,
    variant: NonlinearVariant,
) -> Result<Vec<f64>> {
    space.check(u)?;
    space.check(u_prev)?;
    let rule = triangle_quadrature(volume_quadrature_degree(space.degree()))?;
    let table = space.basis().tabulate(&rule);
    let d = space.local_dim();
    let mut out = vec![0.0; space.ndofs()];
    for cell in 0..space.mesh().num_cells() {
        let det = space.geometry(cell).det.abs();
        let cu = &u.coeffs()[cell * d..(cell + 1) * d];
        let cp = &u_prev.coeffs()[cell * d..(cell + 1) * d];
        for q in 0..rule.len() {
            let phi = table.values(q);
            let uq = local_value(cu, phi);
            let lin = match variant {
                NonlinearVariant::Splitting => local_value(cp, phi),
                NonlinearVariant::Implicit => uq,
            };
            let w = rule.weights[q] * det * (uq * uq * uq - lin);
            for (o, p) in out[cell * d..(cell + 1) * d].iter_mut().zip(phi) {
                *o += w * p;
            }
        }
    }
    Ok(out)
}

/// Derivative of [`assemble_nonlinear`] with respect to `U`:
/// `(f'(U) phi_j, phi_i)` with `f' = 3U^2` or `3U^2 - 1`.
pub fn assemble_nonlinear_jacobian(
    space: &DgSpace,
    u: &DgField,
    variant: NonlinearVariant,
) -> Result<SparseMatrix> {
    space.check(u)?;
    let d = space.local_dim();
    let shift = match variant {
        NonlinearVariant::Splitting => 0.0,
        NonlinearVariant::Implicit => 1.0,
    };
    let coeffs = u.coeffs();
    Ok(assemble_cell_blocks(
        space,
        volume_quadrature_degree(space.degree()),
        |cell, _, phi| {
            let uq = local_value(&coeffs[cell * d..(cell + 1) * d], phi);
            3.0 * uq * uq - shift
        },
    ))
}

/// Mass matrix weighted by `g(U)` evaluated pointwise from a discrete field.
pub(crate) fn assemble_field_weighted_mass(
    space: &DgSpace,
    u: &DgField,
    g: impl Fn(f64) -> f64,
) -> Result<SparseMatrix> {
    space.check(u)?;
    let d = space.local_dim();
    let coeffs = u.coeffs();
    Ok(assemble_cell_blocks(
        space,
        volume_quadrature_degree(space.degree()),
        |cell, _, phi| g(local_value(&coeffs[cell * d..(cell + 1) * d], phi)),
    ))
}

/// `int_Omega g(U) dx` with the volume rule of the space.
pub(crate) fn integrate_pointwise(
    space: &DgSpace,
    u: &DgField,
    g: impl Fn(f64) -> f64,
) -> Result<f64> {
    space.check(u)?;
    let rule = triangle_quadrature(volume_quadrature_degree(space.degree()))?;
    let table = space.basis().tabulate(&rule);
    let d = space.local_dim();
    let mut acc = 0.0;
    for cell in 0..space.mesh().num_cells() {
        let det = space.geometry(cell).det.abs();
        let cu = &u.coeffs()[cell * d..(cell + 1) * d];
        for q in 0..rule.len() {
            acc += rule.weights[q] * det * g(local_value(cu, table.values(q)));
        }
    }
    Ok(acc)
}

/// `int_Omega g(U, V) dx` for two fields on the same space.
pub(crate) fn integrate_pointwise2(
    space: &DgSpace,
    u: &DgField,
    v: &DgField,
    g: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    space.check(u)?;
    space.check(v)?;
    let rule = triangle_quadrature(volume_quadrature_degree(space.degree()))?;
    let table = space.basis().tabulate(&rule);
    let d = space.local_dim();
    let mut acc = 0.0;
    for cell in 0..space.mesh().num_cells() {
        let det = space.geometry(cell).det.abs();
        let cu = &u.coeffs()[cell * d..(cell + 1) * d];
        let cv = &v.coeffs()[cell * d..(cell + 1) * d];
        for q in 0..rule.len() {
            let phi = table.values(q);
            acc += rule.weights[q] * det * g(local_value(cu, phi), local_value(cv, phi));
        }
    }
    Ok(acc)
}
