//! Convergence-rate harness against a nested reference run, the discrete
//! spectrum estimate of the linearized operator, and the nonlinear discrete
//! Gronwall bound.

use std::sync::Arc;

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par, Side};
use rayon::prelude::*;

use crate::dg::{assemble_field_weighted_mass, DgField, DgSpace};
use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, BorderedLu, SparseMatrix, TripletBuilder};
use crate::mesh::{triangle_quadrature, Mesh, DOMAIN_AREA};
use crate::operators::{Discretization, InverseLaplacianSolver, ScalarField};
use crate::time_stepper::{run_on, ModelParams, Observer, SimState, StepRecord};

// ---------------------------------------------------------------- errors

/// Squared `L^2` norm and broken `H^1` seminorm of `uc - uf`, where `uc`
/// lives on a mesh that `uf`'s mesh refines.
pub fn nested_difference(
    coarse: &DgSpace,
    uc: &DgField,
    fine: &DgSpace,
    uf: &DgField,
) -> Result<(f64, f64)> {
    coarse.check(uc)?;
    fine.check(uf)?;
    let (nc, nf) = (coarse.mesh().n(), fine.mesh().n());
    if nf % nc != 0 {
        return Err(Error::InvalidArgument(format!(
            "mesh n={nf} does not refine n={nc}"
        )));
    }
    let degree = 2 * coarse.degree().max(fine.degree()) + 2;
    let rule = triangle_quadrature(degree)?;
    let fmesh = fine.mesh();
    let (l2, h1) = (0..fmesh.num_cells())
        .into_par_iter()
        .map(|cell| -> Result<(f64, f64)> {
            let g = fine.geometry(cell);
            let v = fmesh.cell_vertices(cell);
            let centroid = [
                (v[0][0] + v[1][0] + v[2][0]) / 3.0,
                (v[0][1] + v[1][1] + v[2][1]) / 3.0,
            ];
            let parent = coarse.mesh().locate(centroid);
            let pg = coarse.geometry(parent);
            let mut acc = (0.0, 0.0);
            for (q, w) in rule.points.iter().zip(&rule.weights) {
                let x = g.to_physical(*q);
                let rc = pg.to_reference(x);
                let d = coarse.eval_field(uc, parent, rc)? - fine.eval_field(uf, cell, *q)?;
                let gc = coarse.broken_gradient(uc, parent, rc)?;
                let gf = fine.broken_gradient(uf, cell, *q)?;
                let wd = w * g.det.abs();
                acc.0 += wd * d * d;
                acc.1 += wd * ((gc[0] - gf[0]).powi(2) + (gc[1] - gf[1]).powi(2));
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((l2, h1))
}

/// Squared `L^2` and broken `H^1` seminorm errors against a smooth function.
pub fn exact_difference(space: &DgSpace, uh: &DgField, u: &dyn ScalarField) -> Result<(f64, f64)> {
    space.check(uh)?;
    let rule = triangle_quadrature(2 * space.degree() + 6)?;
    let mut acc = (0.0, 0.0);
    for cell in 0..space.mesh().num_cells() {
        let g = space.geometry(cell);
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let x = g.to_physical(*q);
            let d = space.eval_field(uh, cell, *q)? - u.value(x);
            let gh = space.broken_gradient(uh, cell, *q)?;
            let gu = u.gradient(x);
            let wd = w * g.det.abs();
            acc.0 += wd * d * d;
            acc.1 += wd * ((gh[0] - gu[0]).powi(2) + (gh[1] - gu[1]).powi(2));
        }
    }
    Ok(acc)
}

/// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` for successive pairs; `None`
/// where either error vanishes.
pub fn observed_orders(h: &[f64], err: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; err.len()];
    for i in 1..err.len() {
        let (ec, ef) = (err[i - 1], err[i]);
        if ec > 0.0 && ef > 0.0 && ec.is_finite() && ef.is_finite() {
            out[i] = Some((ec / ef).ln() / (h[i - 1] / h[i]).ln());
        }
    }
    out
}

// ---------------------------------------------------------------- convergence

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub err_linf_l2: f64,
    pub order_l2: Option<f64>,
    pub err_l2_h1: f64,
    pub order_h1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub epsilon: f64,
    pub k: f64,
    pub t_final: f64,
    pub scheme: crate::dg::NonlinearVariant,
    pub reference_n: usize,
}

pub const CONVERGENCE_HEADER: &str = "n,h,err_linf_l2,order_l2,err_l2_h1,order_h1";

fn fmt_order(o: Option<f64>) -> String {
    o.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CONVERGENCE_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{},{:.16e},{}\n",
                r.n,
                r.h,
                r.err_linf_l2,
                fmt_order(r.order_l2),
                r.err_l2_h1,
                fmt_order(r.order_h1)
            ));
        }
        s
    }

    pub fn final_orders(&self) -> (Option<f64>, Option<f64>) {
        self.rows
            .last()
            .map(|r| (r.order_l2, r.order_h1))
            .unwrap_or((None, None))
    }
}

/// Checks that `n_list` is increasing and nested and `reference_n` is
/// twice its maximum.
pub fn validate_study(n_list: &[usize], reference_n: usize) -> Vec<String> {
    let mut e = Vec::new();
    if n_list.is_empty() {
        e.push("n_list must not be empty".into());
        return e;
    }
    if n_list.contains(&0) {
        e.push("n_list entries must be >= 1".into());
        return e;
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] || w[1] % w[0] != 0 {
            e.push(format!("n_list is not nested: {} -> {}", w[0], w[1]));
        }
    }
    let max = *n_list.iter().max().unwrap();
    if reference_n != 2 * max {
        e.push(format!(
            "reference_n must be 2*max(n_list) = {}, got {reference_n}",
            2 * max
        ));
    }
    e
}

struct URecorder(Vec<DgField>);

impl Observer for URecorder {
    fn on_record(&mut self, _r: &StepRecord, s: &SimState) -> Result<()> {
        self.0.push(s.u.clone());
        Ok(())
    }
}

fn run_trajectory(
    params: &ModelParams,
    n: usize,
    u0: &dyn ScalarField,
) -> Result<(Arc<Discretization>, Vec<DgField>)> {
    let space = Arc::new(DgSpace::new(Arc::new(Mesh::uniform(n)?), params.degree)?);
    let disc = Arc::new(Discretization::new(space, params.sigma0)?);
    let mut rec = URecorder(Vec::new());
    run_on(disc.clone(), params, u0, &mut rec)?;
    Ok((disc, rec.0))
}

/// Errors below this multiple of `max(1, ||U_ref||_{L^inf(L^2)})` are
/// reported as zero.
pub const ERROR_NOISE_FLOOR: f64 = 1e-12;

/// Spatial errors of runs on `n_list` against the run on `reference_n`, with
/// identical time discretization. Runs execute concurrently.
///
/// Both norms range over the computed levels `m = 1..M`; the starting
/// values only enter through the projection of `u0`, whose error is limited
/// by the regularity of the data (a kinked `d0` caps it near `h^1.5`). With
/// `T = 0` the `L^inf(L^2)` column falls back to `m = 0`.
pub fn convergence_study(
    params: &ModelParams,
    u0: &dyn ScalarField,
    n_list: &[usize],
    reference_n: usize,
) -> Result<ConvergenceReport> {
    let mut errors = validate_study(n_list, reference_n);
    errors.extend(params.errors());
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let mut all: Vec<usize> = n_list.to_vec();
    all.push(reference_n);
    let runs = all
        .par_iter()
        .map(|&n| run_trajectory(params, n, u0))
        .collect::<Result<Vec<_>>>()?;
    let (ref_disc, ref_traj) = runs.last().unwrap();
    let k = params.k;
    let mut h = Vec::new();
    let mut el2 = Vec::new();
    let mut eh1 = Vec::new();
    for (disc, traj) in &runs[..n_list.len()] {
        let mut linf: f64 = 0.0;
        let mut l2h1 = 0.0;
        for (m, (uc, uf)) in traj.iter().zip(ref_traj).enumerate() {
            if m == 0 && traj.len() > 1 {
                continue;
            }
            let (l2, semi) = nested_difference(disc.space(), uc, ref_disc.space(), uf)?;
            linf = linf.max(l2.sqrt());
            if m > 0 {
                l2h1 += k * semi;
            }
        }
        h.push(disc.space().mesh().h());
        el2.push(linf);
        eh1.push(l2h1.sqrt());
    }
    // differences at roundoff level carry no rate information
    let ref_norm = ref_traj
        .iter()
        .map(|u| ref_disc.mass().bilinear(u.coeffs(), u.coeffs()).sqrt())
        .fold(1.0, f64::max);
    let floor = ERROR_NOISE_FLOOR * ref_norm;
    for e in el2.iter_mut().chain(eh1.iter_mut()) {
        if *e <= floor {
            *e = 0.0;
        }
    }
    let ol2 = observed_orders(&h, &el2);
    let oh1 = observed_orders(&h, &eh1);
    let rows = (0..n_list.len())
        .map(|i| ConvergenceRow {
            n: n_list[i],
            h: h[i],
            err_linf_l2: el2[i],
            order_l2: ol2[i],
            err_l2_h1: eh1[i],
            order_h1: oh1[i],
        })
        .collect();
    Ok(ConvergenceReport {
        rows,
        epsilon: params.epsilon,
        k: params.k,
        t_final: params.t_final,
        scheme: params.scheme,
        reference_n,
    })
}

// ---------------------------------------------------------------- spectrum

/// Source of the weight `f'` in the numerator.
#[derive(Debug, Clone, Copy)]
pub enum SpectrumWeight<'a> {
    /// `f'(U) = 3U^2 - 1` of a reference field.
    Field(&'a DgField),
    /// A constant replacing `f'`.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    Dense,
    ShiftInvert,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions {
    /// Largest DOF count handled by the dense path.
    pub dense_limit: usize,
    pub tol: f64,
    pub max_iter: usize,
}

pub const DENSE_SPECTRUM_LIMIT: usize = 3000;

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            dense_limit: DENSE_SPECTRUM_LIMIT,
            tol: 1e-11,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumResult {
    pub lambda_min: f64,
    pub method: SpectrumMethod,
}

/// Numerator matrix `eps A + ((1 - eps^3)/eps) (f' phi_j, phi_i)`.
pub fn spectrum_numerator(
    disc: &Discretization,
    weight: SpectrumWeight<'_>,
    epsilon: f64,
) -> Result<(SparseMatrix, f64)> {
    let c = (1.0 - epsilon.powi(3)) / epsilon;
    let (w, fmin) = match weight {
        SpectrumWeight::Field(u) => {
            let wm = assemble_field_weighted_mass(disc.space(), u, |v| 3.0 * v * v - 1.0)?;
            (wm, -1.0)
        }
        SpectrumWeight::Constant(v) => (disc.mass().add(v, disc.mass(), 0.0), v),
    };
    Ok((disc.sipg().add(epsilon, &w, c), c * fmin))
}

/// `min_Phi [eps a_h(Phi,Phi) + ((1-eps^3)/eps)(f' Phi, Phi)] / ||Phi||_{-1,h}^2`
/// over mean-zero DG fields.
pub fn spectrum_estimate(
    inv: &InverseLaplacianSolver,
    weight: SpectrumWeight<'_>,
    epsilon: f64,
) -> Result<f64> {
    spectrum_estimate_with(inv, weight, epsilon, SpectrumOptions::default()).map(|r| r.lambda_min)
}

pub fn spectrum_estimate_with(
    inv: &InverseLaplacianSolver,
    weight: SpectrumWeight<'_>,
    epsilon: f64,
    opts: SpectrumOptions,
) -> Result<SpectrumResult> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if let SpectrumWeight::Field(u) = weight {
        inv.discretization().space().check(u)?;
    }
    let disc = inv.discretization();
    let (num, cmin) = spectrum_numerator(disc, weight, epsilon)?;
    if disc.space().ndofs() <= opts.dense_limit {
        Ok(SpectrumResult {
            lambda_min: dense_spectrum(inv, &num)?,
            method: SpectrumMethod::Dense,
        })
    } else {
        // lambda >= -(c f'_min)^2 / (4 eps); shift strictly below
        let sigma = -(cmin.min(0.0)).powi(2) / (4.0 * epsilon) - 1.0;
        Ok(SpectrumResult {
            lambda_min: shift_invert_spectrum(inv, &num, sigma, opts)?,
            method: SpectrumMethod::ShiftInvert,
        })
    }
}

fn dense_spectrum(inv: &InverseLaplacianSolver, num: &SparseMatrix) -> Result<f64> {
    let disc = inv.discretization();
    let n = disc.space().ndofs();
    if n < 2 {
        return Err(Error::EigenFailure("mean-zero space is trivial".into()));
    }
    let c = disc.mass_ones();
    let p = (0..n)
        .max_by(|&i, &j| c[i].abs().total_cmp(&c[j].abs()))
        .unwrap();
    let free: Vec<usize> = (0..n).filter(|&i| i != p).collect();
    let m = free.len();
    let ratio: Vec<f64> = free.iter().map(|&i| c[i] / c[p]).collect();

    // columns of M Z, Z e_a = e_{free[a]} - ratio[a] e_p
    let mass = disc.mass().to_dense();
    let mz: Vec<Vec<f64>> = (0..m)
        .map(|a| (0..n).map(|i| mass[i][free[a]] - ratio[a] * mass[i][p]).collect())
        .collect();
    let t: Vec<Vec<f64>> = mz
        .par_iter()
        .map(|col| inv.solve_functional(col))
        .collect::<Result<_>>()?;
    let bt = Mat::<f64>::from_fn(m, n, |a, i| mz[a][i]);
    let tm = Mat::<f64>::from_fn(n, m, |i, b| t[b][i]);
    let g = &bt * &tm;
    let g = Mat::<f64>::from_fn(m, m, |a, b| 0.5 * (g[(a, b)] + g[(b, a)]));

    let nd = num.to_dense();
    let ntil = Mat::<f64>::from_fn(m, m, |a, b| {
        let (i, j) = (free[a], free[b]);
        nd[i][j] - ratio[b] * nd[i][p] - ratio[a] * nd[p][j] + ratio[a] * ratio[b] * nd[p][p]
    });
    let llt = g
        .llt(Side::Lower)
        .map_err(|e| Error::EigenFailure(format!("Gram matrix not positive definite: {e:?}")))?;
    let l = llt.L();
    // C = L^{-1} N L^{-T}
    let mut x = ntil;
    solve_lower_triangular_in_place(l, x.as_mut(), Par::rayon(0));
    let mut y = x.transpose().to_owned();
    solve_lower_triangular_in_place(l, y.as_mut(), Par::rayon(0));
    let cm = Mat::<f64>::from_fn(m, m, |a, b| 0.5 * (y[(a, b)] + y[(b, a)]));
    let ev = cm
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
    ev.into_iter()
        .reduce(f64::min)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::EigenFailure("no finite eigenvalue".into()))
}

/// Shift-invert Lanczos in the `(.,.)_{-1,h}` inner product: the largest
/// eigenvalue `theta` of `(N - sigma G)^{-1} G` gives `lambda = sigma + 1/theta`.
fn shift_invert_spectrum(
    inv: &InverseLaplacianSolver,
    num: &SparseMatrix,
    sigma: f64,
    opts: SpectrumOptions,
) -> Result<f64> {
    let disc = inv.discretization();
    let n = disc.space().ndofs();
    let c = disc.mass_ones();
    let mass = disc.mass();
    let a = disc.sipg();

    // [N, -sigma M, c, 0; -M, A, 0, c; c^T, 0, 0, 0; 0, c^T, 0, 0]
    let mut b = TripletBuilder::with_capacity(
        2 * n,
        2 * n,
        num.nnz() + 2 * mass.nnz() + a.nnz(),
    );
    b.push_matrix(num, 0, 0, 1.0);
    b.push_matrix(mass, 0, n, -sigma);
    b.push_matrix(mass, n, 0, -1.0);
    b.push_matrix(a, n, n, 1.0);
    let mut c_top = vec![0.0; 2 * n];
    c_top[..n].copy_from_slice(c);
    let mut c_bottom = vec![0.0; 2 * n];
    c_bottom[n..].copy_from_slice(c);
    let border = vec![c_top, c_bottom];
    let lu = BorderedLu::new(&b.build(false), border.clone(), border, Mat::zeros(2, 2))?;

    let gram = |x: &[f64]| -> Result<Vec<f64>> {
        let mx = mass.mul_vec(x);
        let t = inv.solve_functional(&mx)?;
        Ok(mass.mul_vec(&t))
    };
    let apply = |gv: &[f64]| -> Result<Vec<f64>> {
        let mut rhs = vec![0.0; 2 * n];
        rhs[..n].copy_from_slice(gv);
        let mut x = lu.solve(&rhs, &[0.0, 0.0])?.0;
        x.truncate(n);
        Ok(x)
    };
    let mean_free = |x: &mut [f64]| {
        let s = dot(c, x) / DOMAIN_AREA;
        for v in x.iter_mut() {
            *v -= s;
        }
    };

    let mut v0: Vec<f64> = (0..n)
        .map(|i| ((i as f64) * 1.618_033_988_75 + 0.5).sin() + 0.1 * ((i as f64) * 0.37).cos())
        .collect();
    mean_free(&mut v0);
    let g0 = gram(&v0)?;
    let nrm = dot(&v0, &g0).sqrt();
    if !(nrm > 0.0) {
        return Err(Error::EigenFailure("degenerate start vector".into()));
    }
    let mut basis = vec![v0.iter().map(|x| x / nrm).collect::<Vec<_>>()];
    let mut gbasis = vec![g0.iter().map(|x| x / nrm).collect::<Vec<_>>()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut prev_theta = f64::NAN;
    let max_iter = opts.max_iter.min(n - 1).max(1);
    for j in 0..max_iter {
        let mut w = apply(&gbasis[j])?;
        let aj = dot(&w, &gbasis[j]);
        for _ in 0..2 {
            for (vi, gi) in basis.iter().zip(&gbasis) {
                let h = dot(&w, gi);
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= h * vk;
                }
            }
        }
        alpha.push(aj);
        let gw = gram(&w)?;
        let bj = dot(&w, &gw).max(0.0).sqrt();

        let k = alpha.len();
        let t = Mat::<f64>::from_fn(k, k, |r, s| {
            if r == s {
                alpha[r]
            } else if r + 1 == s {
                beta[r]
            } else if s + 1 == r {
                beta[s]
            } else {
                0.0
            }
        });
        let eig = t
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
        let s = eig.S();
        let u = eig.U();
        let (imax, theta) = (0..k)
            .map(|i| (i, s[i]))
            .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        let resid = (bj * u[(k - 1, imax)]).abs();
        let converged = resid <= opts.tol * theta.abs()
            || (j > 4 && (theta - prev_theta).abs() <= opts.tol * theta.abs() * 1e-2);
        prev_theta = theta;
        if converged || bj <= 1e-14 * theta.abs() {
            if !(theta > 0.0) {
                return Err(Error::EigenFailure("shift is not below the spectrum".into()));
            }
            return Ok(sigma + 1.0 / theta);
        }
        beta.push(bj);
        basis.push(w.iter().map(|x| x / bj).collect());
        gbasis.push(gw.iter().map(|x| x / bj).collect());
    }
    Err(Error::EigenFailure(format!(
        "Lanczos did not converge in {max_iter} iterations (max |v| {})",
        max_abs(&basis[basis.len() - 1])
    )))
}

pub const SPECTRUM_HEADER: &str = "n,epsilon,lambda_min";

// ---------------------------------------------------------------- Gronwall

/// Data of the nonlinear discrete Gronwall inequality
/// `S_{l+1} - S_l <= b_l S_l + k_l S_l^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallInput {
    pub s1: f64,
    /// `b_1, ..., b_{L-1}`.
    pub b: Vec<f64>,
    /// `k_1, ..., k_{L-1}`.
    pub k: Vec<f64>,
    pub p: f64,
    pub len: usize,
}

impl GronwallInput {
    pub fn constant(s1: f64, b: f64, k: f64, p: f64, len: usize) -> Self {
        let m = len.saturating_sub(1);
        Self {
            s1,
            b: vec![b; m],
            k: vec![k; m],
            p,
            len,
        }
    }
}

/// `a_l = prod_{s<l} 1/(1+b_s)` for `l = 1..=L`.
pub fn gronwall_weights(b: &[f64], len: usize) -> Vec<f64> {
    let mut a = Vec::with_capacity(len);
    let mut acc = 1.0;
    for l in 1..=len {
        if l > 1 {
            acc /= 1.0 + b[l - 2];
        }
        a.push(acc);
    }
    a
}

/// Upper bounds on `S_l` for `l = 2..=L` (element `l - 2`).
pub fn gronwall_bound(input: &GronwallInput) -> Result<Vec<f64>> {
    let GronwallInput { s1, b, k, p, len } = input;
    let (s1, p, len) = (*s1, *p, *len);
    let mut bad = Vec::new();
    if !(s1 > 0.0 && s1.is_finite()) {
        bad.push(format!("S_1 must be positive, got {s1}"));
    }
    if !(p > 1.0 && p.is_finite()) {
        bad.push(format!("p must exceed 1, got {p}"));
    }
    let need = len.saturating_sub(1);
    if b.len() < need || k.len() < need {
        bad.push(format!("b and k need {need} entries"));
    }
    if b.iter().chain(k.iter()).any(|v| !(*v >= 0.0 && v.is_finite())) {
        bad.push("b and k must be nonnegative".into());
    }
    if !bad.is_empty() {
        return Err(Error::Config(bad));
    }
    let a = gronwall_weights(b, len);
    let q = 1.0 - p;
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(need);
    for l in 2..=len {
        sum += k[l - 2] * a[l - 1].powf(q);
        let bracket = s1.powf(q) + q * sum;
        if !(bracket > 0.0) {
            return Err(Error::ConditionViolated { index: l });
        }
        out.push(bracket.powf(1.0 / q) / a[l - 1]);
    }
    Ok(out)
}
