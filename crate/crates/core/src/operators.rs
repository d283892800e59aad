//! Inverse discrete Laplacian, the `-1,h` inner product, projections and
//! the node-averaged continuous reconstruction.

use std::sync::Arc;

use crate::dg::{
    assemble_mass, assemble_sipg, load_vector, sipg_smooth_load, DgField, DgSpace, FieldKind,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, BorderedLu, SparseLu, SparseMatrix, TripletBuilder};
use faer::Mat;
use crate::mesh::Point;

/// A space together with its assembled mass and SIPG matrices.
#[derive(Debug, Clone)]
pub struct Discretization {
    space: Arc<DgSpace>,
    mass: SparseMatrix,
    sipg: SparseMatrix,
    sigma0: f64,
    /// `M 1`, the coefficient vector of the functional `v -> (v, 1)`.
    mass_ones: Vec<f64>,
}

impl Discretization {
    pub fn new(space: Arc<DgSpace>, sigma0: f64) -> Result<Self> {
        let mass = assemble_mass(&space);
        let sipg = assemble_sipg(&space, sigma0)?;
        let mass_ones = mass.mul_vec(&vec![1.0; space.ndofs()]);
        Ok(Self {
            space,
            mass,
            sipg,
            sigma0,
            mass_ones,
        })
    }

    pub fn space(&self) -> &DgSpace {
        &self.space
    }

    pub fn space_arc(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn sipg(&self) -> &SparseMatrix {
        &self.sipg
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn mass_ones(&self) -> &[f64] {
        &self.mass_ones
    }

    /// `(u, 1)`.
    pub fn total_mass(&self, u: &DgField) -> f64 {
        dot(&self.mass_ones, u.coeffs())
    }

    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.bilinear(u, v)
    }

    pub fn energy_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.sipg.bilinear(u, v)
    }

    /// Removes the mean: `u - (u, 1) / |Omega|`.
    pub fn mean_free(&self, u: &DgField) -> DgField {
        let area: f64 = self.mass_ones.iter().sum();
        let mean = self.total_mass(u) / area;
        let c: Vec<f64> = u.coeffs().iter().map(|v| v - mean).collect();
        u.with_coeffs(c, u.kind())
    }
}

/// `Delta_h^{-1}` through the SIPG matrix bordered by the mean constraint:
///
/// ```text
/// [ A    M1 ] [ t ]   [ M zeta ]
/// [ 1^T M 0 ] [ l ] = [   0    ]
/// ```
///
/// whose `t` equals `-Delta_h^{-1} zeta`. The constant kernel of `A` is
/// removed by pinning one coefficient, `A + s e_0 e_0^T`, and the pin is
/// carried as an extra border unknown.
pub struct InverseLaplacianSolver {
    disc: Arc<Discretization>,
    lu: BorderedLu,
}

impl InverseLaplacianSolver {
    pub fn new(disc: Arc<Discretization>) -> Result<Self> {
        let n = disc.space.ndofs();
        let s = disc.sipg.max_abs();
        let mut b = TripletBuilder::with_capacity(n, n, disc.sipg.nnz() + 1);
        b.push_matrix(&disc.sipg, 0, 0, 1.0);
        b.push(0, 0, s);
        let mut pin = vec![0.0; n];
        pin[0] = 1.0;
        let neg_pin: Vec<f64> = pin.iter().map(|v| -s * v).collect();
        let mut d = Mat::<f64>::zeros(2, 2);
        d[(1, 1)] = -1.0;
        let lu = BorderedLu::new(
            &b.build(true),
            vec![disc.mass_ones.clone(), neg_pin],
            vec![disc.mass_ones.clone(), pin],
            d,
        )?;
        Ok(Self { disc, lu })
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    /// Coefficients of `-Delta_h^{-1}` applied to the functional `rhs`
    /// (`rhs = M zeta` for a field `zeta`).
    pub fn solve_functional(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.lu.solve(rhs, &[0.0, 0.0])?.0)
    }

    /// `-Delta_h^{-1} zeta` as raw coefficients.
    pub fn neg_inverse(&self, zeta: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.disc.mass.mul_vec(zeta);
        self.solve_functional(&rhs)
    }

    /// `theta = Delta_h^{-1} zeta`, mean-zero.
    pub fn inv_laplacian(&self, zeta: &DgField) -> Result<DgField> {
        self.disc.space.check(zeta)?;
        let t = self.neg_inverse(zeta.coeffs())?;
        Ok(zeta.with_coeffs(t.into_iter().map(|v| -v).collect(), FieldKind::Broken))
    }

    /// `(zeta, xi)_{-1,h} = a_h(-Delta_h^{-1} zeta, -Delta_h^{-1} xi)`.
    pub fn minus1_inner(&self, zeta: &DgField, xi: &DgField) -> Result<f64> {
        self.disc.space.check(zeta)?;
        self.disc.space.check(xi)?;
        let tz = self.neg_inverse(zeta.coeffs())?;
        let tx = self.neg_inverse(xi.coeffs())?;
        Ok(self.disc.sipg.bilinear(&tz, &tx))
    }

    pub fn minus1_norm(&self, zeta: &DgField) -> Result<f64> {
        self.minus1_norm_sq_coeffs(zeta.coeffs()).map(|v| v.max(0.0).sqrt())
    }

    /// `||zeta||_{-1,h}^2` computed as `(zeta, -Delta_h^{-1} zeta)`.
    pub fn minus1_norm_sq_coeffs(&self, zeta: &[f64]) -> Result<f64> {
        let mz = self.disc.mass.mul_vec(zeta);
        let t = self.solve_functional(&mz)?;
        Ok(dot(&mz, &t))
    }
}

/// Degree of the rule used for loads of smooth functions.
pub fn smooth_load_degree(r: usize) -> usize {
    2 * r + 6
}

/// DG elliptic projection: `a_h(u - P u, v) + (u - P u, v) = 0` on `V_h`.
pub fn elliptic_projection(
    disc: &Discretization,
    u: impl Fn(Point) -> f64,
    grad_u: impl Fn(Point) -> [f64; 2],
) -> Result<DgField> {
    let space = disc.space();
    let deg = smooth_load_degree(space.degree());
    let mut rhs = sipg_smooth_load(space, deg, grad_u)?;
    for (r, l) in rhs.iter_mut().zip(load_vector(space, deg, u)?) {
        *r += l;
    }
    let system = disc.sipg.add(1.0, &disc.mass, 1.0);
    let x = SparseLu::new(&system)?.solve(&rhs)?;
    space.field(x, FieldKind::Broken)
}

/// Starting-value projections onto the continuous subspace `S_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProjection {
    /// `L^2` projection onto `S_h`.
    L2Continuous,
    /// `H^1` elliptic projection onto `S_h`.
    EllipticContinuous,
}

impl std::str::FromStr for InitialProjection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2_continuous" => Ok(Self::L2Continuous),
            "elliptic_continuous" => Ok(Self::EllipticContinuous),
            other => Err(Error::Parse(format!("unknown projection '{other}'"))),
        }
    }
}

/// A smooth function of position with its gradient.
pub trait ScalarField: Sync {
    fn value(&self, p: Point) -> f64;

    fn gradient(&self, p: Point) -> [f64; 2] {
        let h = 1e-6;
        [
            (self.value([p[0] + h, p[1]]) - self.value([p[0] - h, p[1]])) / (2.0 * h),
            (self.value([p[0], p[1] + h]) - self.value([p[0], p[1] - h])) / (2.0 * h),
        ]
    }
}

/// Wraps a closure; the gradient falls back to central differences.
pub struct FnField<F>(pub F);

impl<F: Fn(Point) -> f64 + Sync> ScalarField for FnField<F> {
    fn value(&self, p: Point) -> f64 {
        (self.0)(p)
    }
}

/// `P^T A P` for the prolongation `P : S_h -> V_h`.
pub fn restrict_to_continuous(space: &DgSpace, a: &SparseMatrix) -> SparseMatrix {
    let map = space.continuous_map();
    let nc = space.num_continuous();
    let mut b = TripletBuilder::with_capacity(nc, nc, a.nnz());
    for (i, j, v) in a.iter() {
        b.push(map[i], map[j], v);
    }
    b.build(a.is_symmetric())
}

/// Continuous starting value `U^0` in `S_h`.
pub fn project_initial(
    disc: &Discretization,
    u0: &dyn ScalarField,
    method: InitialProjection,
) -> Result<DgField> {
    let space = disc.space();
    let deg = smooth_load_degree(space.degree());
    let mut rhs = load_vector(space, deg, |p| u0.value(p))?;
    let system = match method {
        InitialProjection::L2Continuous => restrict_to_continuous(space, &disc.mass),
        InitialProjection::EllipticContinuous => {
            let a = sipg_smooth_load(space, deg, |p| u0.gradient(p))?;
            for (r, v) in rhs.iter_mut().zip(a) {
                *r += v;
            }
            restrict_to_continuous(space, &disc.sipg.add(1.0, &disc.mass, 1.0))
        }
    };
    let c = SparseLu::new(&system)?.solve(&space.restrict_sum(&rhs))?;
    Ok(space.prolongate(&c))
}

/// Continuous reconstruction: each shared Lagrange node takes the mean of
/// the DG coefficients attached to it.
pub fn node_average(space: &DgSpace, v: &DgField) -> Result<DgField> {
    space.check(v)?;
    let nc = space.num_continuous();
    let mut avg = vec![0.0; nc];
    for (node, a) in avg.iter_mut().enumerate() {
        let m = space.continuous_members(node);
        *a = m.iter().map(|&i| v.coeffs()[i]).sum::<f64>() / m.len() as f64;
    }
    Ok(space.prolongate(&avg))
}
