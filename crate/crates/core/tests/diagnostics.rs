//! Gronwall bound, spectrum estimate and the convergence harness.

use std::sync::Arc;

use chdg::diagnostics::{
    convergence_study, gronwall_bound, nested_difference, spectrum_estimate,
    spectrum_estimate_with, GronwallInput, SpectrumMethod, SpectrumOptions, SpectrumWeight,
};
use chdg::dg::{default_penalty, DgSpace, NonlinearVariant};
use chdg::interface::{InitialCondition, TestCase};
use chdg::mesh::Mesh;
use chdg::operators::{
    elliptic_projection, project_initial, Discretization, FnField, InitialProjection,
    InverseLaplacianSolver, ScalarField,
};
use chdg::time_stepper::ModelParams;
use chdg::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_admissible(input: &GronwallInput, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut s = vec![input.s1];
    for l in 1..input.len {
        let cur = s[l - 1];
        let step = input.b[l - 1] * cur + input.k[l - 1] * cur.powf(input.p);
        s.push(cur + rng.random_range(0.0..=1.0) * step);
    }
    s
}

#[test]
fn gronwall_dominates_random_sequences() {
    let input = GronwallInput::constant(0.01, 0.1, 0.01, 3.0, 10);
    let bound = gronwall_bound(&input).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut violations = 0;
    for _ in 0..10_000 {
        let s = random_admissible(&input, &mut rng);
        for l in 2..=input.len {
            if s[l - 1] > bound[l - 2] * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0);
    // the extremal sequence sits below the bound too
    let mut s = input.s1;
    for l in 1..input.len {
        s += input.b[l - 1] * s + input.k[l - 1] * s.powf(input.p);
        assert!(s <= bound[l - 1] * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn gronwall_bound_is_an_upper_bound(
        s1 in 1e-3f64..2.0,
        p in 1.1f64..4.0,
        b in proptest::collection::vec(0.0f64..0.5, 12),
        k in proptest::collection::vec(0.0f64..0.2, 12),
        seed in any::<u64>(),
    ) {
        let input = GronwallInput { s1, b, k, p, len: 13 };
        match gronwall_bound(&input) {
            Ok(bound) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..20 {
                    let s = random_admissible(&input, &mut rng);
                    for l in 2..=input.len {
                        prop_assert!(s[l - 1] <= bound[l - 2] * (1.0 + 1e-10));
                    }
                }
            }
            Err(Error::ConditionViolated { index }) => prop_assert!(index >= 2 && index <= 13),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }
}

#[test]
fn gronwall_rejects_bad_input() {
    assert!(gronwall_bound(&GronwallInput::constant(0.0, 0.1, 0.1, 2.0, 4)).is_err());
    assert!(gronwall_bound(&GronwallInput::constant(1.0, 0.1, 0.1, 1.0, 4)).is_err());
    assert!(gronwall_bound(&GronwallInput::constant(1.0, -0.1, 0.1, 2.0, 4)).is_err());
}

fn disc(n: usize, sigma0: f64) -> Arc<Discretization> {
    let space = Arc::new(DgSpace::new(Arc::new(Mesh::uniform(n).unwrap()), 1).unwrap());
    Arc::new(Discretization::new(space, sigma0).unwrap())
}

fn dense_of(m: &chdg::linalg::SparseMatrix) -> Vec<Vec<f64>> {
    m.to_dense()
}

/// Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the Rayleigh quotient `x^T N x / x^T G x` over mean-zero `x` by
/// locally optimal conjugate gradients from random starts.
fn rayleigh_oracle(d: &Discretization, eps: f64, fprime: f64, starts: usize) -> f64 {
    let n = d.space().ndofs();
    let a = dense_of(d.sipg());
    let m = dense_of(d.mass());
    let c = d.mass_ones().to_vec();
    let cf = (1.0 - eps.powi(3)) / eps;
    let num: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| eps * a[i][j] + cf * fprime * m[i][j]).collect())
        .collect();
    // G x = M (A + c c^T)^{-1} M x on mean-zero x, assembled column by column
    let ac: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[i][j] + c[i] * c[j]).collect()).collect();
    let mut g = vec![vec![0.0; n]; n];
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|i| m[i][j]).collect();
        let t = gauss_solve(ac.clone(), col);
        let mt = matvec(&m, &t);
        for i in 0..n {
            g[i][j] = mt[i];
        }
    }
    let project = |x: &mut Vec<f64>| {
        let s = dotp(&c, x) / 4.0;
        for v in x.iter_mut() {
            *v -= s;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut best = f64::INFINITY;
    for _ in 0..starts {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        project(&mut x);
        let mut prev: Option<Vec<f64>> = None;
        let mut rho = f64::INFINITY;
        for _ in 0..3000 {
            let nx = matvec(&num, &x);
            let gx = matvec(&g, &x);
            rho = dotp(&x, &nx) / dotp(&x, &gx);
            let mut r: Vec<f64> = nx.iter().zip(&gx).map(|(p, q)| p - rho * q).collect();
            project(&mut r);
            let rn = dotp(&r, &r).sqrt();
            if rn < 1e-13 * dotp(&x, &x).sqrt() * rho.abs().max(1.0) {
                break;
            }
            let mut dirs = vec![x.clone(), r];
            if let Some(p) = &prev {
                dirs.push(p.clone());
            }
            // Gram-Schmidt in the G inner product for a well conditioned pencil
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for dvec in dirs {
                let mut v = dvec;
                for _ in 0..2 {
                    for b in &basis {
                        let h = dotp(&v, &matvec(&g, b));
                        for (vi, bi) in v.iter_mut().zip(b) {
                            *vi -= h * bi;
                        }
                    }
                }
                let nv = dotp(&v, &matvec(&g, &v));
                if nv > 1e-28 {
                    let s = nv.sqrt();
                    basis.push(v.into_iter().map(|y| y / s).collect());
                }
            }
            let k = basis.len();
            let nb: Vec<Vec<f64>> = basis.iter().map(|b| matvec(&num, b)).collect();
            let h: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| dotp(&basis[i], &nb[j])).collect()).collect();
            let hm = faer::Mat::from_fn(k, k, |i, j| 0.5 * (h[i][j] + h[j][i]));
            let eig = hm.self_adjoint_eigen(faer::Side::Lower).unwrap();
            let y: Vec<f64> = (0..k).map(|i| eig.U()[(i, 0)]).collect();
            let mut nxt = vec![0.0; n];
            for (yi, b) in y.iter().zip(&basis) {
                for (o, bi) in nxt.iter_mut().zip(b) {
                    *o += yi * bi;
                }
            }
            let mut p = vec![0.0; n];
            for (yi, b) in y.iter().zip(&basis).skip(1) {
                for (o, bi) in p.iter_mut().zip(b) {
                    *o += yi * bi;
                }
            }
            prev = Some(p);
            x = nxt;
        }
        best = best.min(rho);
    }
    best
}

#[test]
fn spectrum_with_negative_constant_matches_rayleigh_oracle() {
    let d = disc(4, 20.0);
    let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
    let lam = spectrum_estimate(&inv, SpectrumWeight::Constant(-1.0), 0.1).unwrap();
    let oracle = rayleigh_oracle(&d, 0.1, -1.0, 100);
    assert!((lam - oracle).abs() <= 1e-6 * lam.abs().max(1.0), "{lam} vs {oracle}");
}

#[test]
fn spectrum_with_positive_constant_is_nonnegative() {
    for n in [3, 5] {
        let d = disc(n, 20.0);
        let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
        let lam = spectrum_estimate(&inv, SpectrumWeight::Constant(1.0), 0.1).unwrap();
        assert!(lam >= 0.0, "{lam}");
    }
}

#[test]
fn shift_invert_agrees_with_dense() {
    let eps = 0.1;
    let d = disc(5, 20.0);
    let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
    let ic = InitialCondition::new(TestCase::Test1, eps).unwrap();
    let u = elliptic_projection(&d, |p| ic.value(p), |p| ic.gradient(p)).unwrap();
    for w in [SpectrumWeight::Field(&u), SpectrumWeight::Constant(-1.0), SpectrumWeight::Constant(1.0)] {
        let dense = spectrum_estimate_with(&inv, w, eps, SpectrumOptions::default()).unwrap();
        let opts = SpectrumOptions { dense_limit: 0, ..SpectrumOptions::default() };
        let it = spectrum_estimate_with(&inv, w, eps, opts).unwrap();
        assert_eq!(dense.method, SpectrumMethod::Dense);
        assert_eq!(it.method, SpectrumMethod::ShiftInvert);
        let tol = 1e-7 * dense.lambda_min.abs().max(1.0);
        assert!((dense.lambda_min - it.lambda_min).abs() <= tol, "{w:?}: {} vs {}", dense.lambda_min, it.lambda_min);
    }
}

#[test]
fn spectrum_nondecreasing_in_penalty() {
    let eps = 0.1;
    let ic = InitialCondition::new(TestCase::Test1, eps).unwrap();
    let mut lams = Vec::new();
    for sigma0 in [20.0, 40.0, 80.0] {
        let d = disc(5, sigma0);
        let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
        let u = elliptic_projection(&d, |p| ic.value(p), |p| ic.gradient(p)).unwrap();
        lams.push(spectrum_estimate(&inv, SpectrumWeight::Field(&u), eps).unwrap());
    }
    assert!(lams.windows(2).all(|w| w[1] >= w[0]), "{lams:?}");
}

fn base_params(k: f64, t: f64) -> ModelParams {
    let mut p = ModelParams::new(0.1, k, t, NonlinearVariant::Splitting);
    p.sigma0 = default_penalty(1);
    p
}

#[test]
fn constant_solution_has_zero_errors() {
    let p = base_params(1e-4, 3e-4);
    let r = convergence_study(&p, &FnField(|_| 1.0), &[2, 4], 8).unwrap();
    for row in &r.rows {
        assert_eq!((row.err_linf_l2, row.err_l2_h1), (0.0, 0.0), "{row:?}");
    }
    assert!(r.rows.iter().all(|row| row.order_l2.is_none() && row.order_h1.is_none()));
    let csv = r.to_csv();
    assert!(csv.starts_with("n,h,err_linf_l2,order_l2,err_l2_h1,order_h1\n"));
}

#[test]
fn non_nested_lists_rejected() {
    let p = base_params(1e-4, 1e-4);
    for (list, reference) in [(vec![5usize, 10], 40usize), (vec![4, 6], 12), (vec![8, 4], 16)] {
        assert!(matches!(
            convergence_study(&p, &FnField(|_| 1.0), &list, reference),
            Err(Error::Config(_))
        ));
    }
}

#[test]
fn linear_data_projects_without_h1_error() {
    let f = FnField(|p: [f64; 2]| 0.3 * p[0] - p[1]);
    let dc = disc(2, 20.0);
    let df = disc(4, 20.0);
    let uc = project_initial(&dc, &f, InitialProjection::L2Continuous).unwrap();
    let uf = project_initial(&df, &f, InitialProjection::L2Continuous).unwrap();
    let (l2, h1) = nested_difference(dc.space(), &uc, df.space(), &uf).unwrap();
    assert!(l2 < 1e-24 && h1 < 1e-24, "{l2:e} {h1:e}");
}

#[test]
fn errors_decrease_and_reports_are_deterministic() {
    let p = base_params(1e-5, 5e-5);
    for test in [TestCase::Test1, TestCase::Test2, TestCase::Test3] {
        let ic = InitialCondition::new(test, p.epsilon).unwrap();
        let a = convergence_study(&p, &ic, &[4, 8], 16).unwrap();
        let b = convergence_study(&p, &ic, &[4, 8], 16).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.rows[1].err_linf_l2 < a.rows[0].err_linf_l2, "{test:?}");
        assert!(a.rows[1].err_l2_h1 < a.rows[0].err_l2_h1, "{test:?}");
    }
}
