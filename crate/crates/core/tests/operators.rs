//! Inverse discrete Laplacian, the "-1,h" inner product, projections and
//! node averaging.

use std::sync::Arc;

use chdg::diagnostics::{exact_difference, observed_orders};
use chdg::dg::{default_penalty, DgField, DgSpace, FieldKind};
use chdg::interface::{InitialCondition, TestCase};
use chdg::mesh::{edge_quadrature, triangle_quadrature, Mesh};
use chdg::operators::{
    elliptic_projection, node_average, project_initial, Discretization, FnField,
    InitialProjection, InverseLaplacianSolver, ScalarField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disc(n: usize, r: usize) -> Arc<Discretization> {
    let space = Arc::new(DgSpace::new(Arc::new(Mesh::uniform(n).unwrap()), r).unwrap());
    Arc::new(Discretization::new(space, default_penalty(r)).unwrap())
}

fn random_field(d: &Discretization, rng: &mut ChaCha8Rng) -> DgField {
    let c = (0..d.space().ndofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    d.space().field(c, FieldKind::Broken).unwrap()
}

fn random_mean_zero(d: &Discretization, rng: &mut ChaCha8Rng) -> DgField {
    let f = random_field(d, rng);
    d.mean_free(&f)
}

#[test]
fn inverse_satisfies_defining_identity() {
    let d = disc(4, 1);
    let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let zeta = random_mean_zero(&d, &mut rng);
    let theta = inv.inv_laplacian(&zeta).unwrap();
    assert!(d.total_mass(&theta).abs() <= 1e-12 * 4.0);
    let neg: Vec<f64> = theta.coeffs().iter().map(|v| -v).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let w = random_mean_zero(&d, &mut rng);
        let lhs = d.sipg().bilinear(&neg, w.coeffs());
        let rhs = d.mass().bilinear(zeta.coeffs(), w.coeffs());
        worst = worst.max((lhs - rhs).abs());
    }
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn inverse_of_zero_is_zero() {
    let d = disc(3, 2);
    let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
    let z = inv.inv_laplacian(&d.space().constant(0.0)).unwrap();
    assert!(z.coeffs().iter().all(|v| *v == 0.0));
}

#[test]
fn three_forms_of_minus1_inner_product_agree() {
    let d = disc(4, 1);
    let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let z = random_mean_zero(&d, &mut rng);
        let x = random_mean_zero(&d, &mut rng);
        let a = inv.minus1_inner(&z, &x).unwrap();
        let tz = inv.inv_laplacian(&z).unwrap();
        let tx = inv.inv_laplacian(&x).unwrap();
        let b = -d.mass().bilinear(z.coeffs(), tx.coeffs());
        let c = -d.mass().bilinear(tz.coeffs(), x.coeffs());
        assert!((a - b).abs() <= 1e-10 && (a - c).abs() <= 1e-10, "{a} {b} {c}");
        let sym = inv.minus1_inner(&x, &z).unwrap();
        assert!((a - sym).abs() <= 1e-12);
    }
}

#[test]
fn minus1_inner_is_bilinear() {
    let d = disc(3, 1);
    let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (z1, z2, x) = (
        random_field(&d, &mut rng),
        random_field(&d, &mut rng),
        random_field(&d, &mut rng),
    );
    let comb = z1.add_scaled(-2.5, &z2);
    let lhs = inv.minus1_inner(&comb, &x).unwrap();
    let rhs = inv.minus1_inner(&z1, &x).unwrap() - 2.5 * inv.minus1_inner(&z2, &x).unwrap();
    assert!((lhs - rhs).abs() < 1e-12);
}

#[test]
fn mean_shift_invariance() {
    let d = disc(4, 1);
    let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = random_field(&d, &mut rng);
    let shifted = z.add_scaled(1.0, &d.space().constant(3.7));
    let a = inv.inv_laplacian(&z).unwrap();
    let b = inv.inv_laplacian(&shifted).unwrap();
    for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
        assert!((x - y).abs() < 1e-12);
    }
    let na = inv.minus1_norm(&z).unwrap();
    let nb = inv.minus1_norm(&shifted).unwrap();
    assert!((na - nb).abs() < 1e-12 * na.max(1.0));
    assert!(inv.minus1_norm(&d.space().constant(1.0)).unwrap() < 1e-7);
}

fn l2_norm(d: &Discretization, f: &DgField) -> f64 {
    d.mass().bilinear(f.coeffs(), f.coeffs()).sqrt()
}

#[test]
fn minus1_norm_bounded_by_l2_norm() {
    // a fixed smooth field: the ratio converges under refinement
    let smooth = |p: [f64; 2]| (std::f64::consts::PI * p[0]).sin() * (1.0 + p[1]) + p[1].powi(3);
    let mut ratios = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut random_ratios = Vec::new();
    for n in [2, 4, 8] {
        let d = disc(n, 1);
        let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
        let z = d.mean_free(&d.space().interpolate(smooth));
        ratios.push(inv.minus1_norm(&z).unwrap() / l2_norm(&d, &z));
        let r = random_mean_zero(&d, &mut rng);
        random_ratios.push(inv.minus1_norm(&r).unwrap() / l2_norm(&d, &r));
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max / min < 1.5, "{ratios:?}");
    assert!(random_ratios.iter().all(|r| *r <= max), "{random_ratios:?} vs {max}");
}

#[test]
fn inverse_type_bound_is_mesh_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut vals = Vec::new();
    for n in [4, 8, 16] {
        let d = disc(n, 1);
        let inv = InverseLaplacianSolver::new(d.clone()).unwrap();
        let z = random_mean_zero(&d, &mut rng);
        let h = d.space().mesh().h();
        vals.push(l2_norm(&d, &z) * h / inv.minus1_norm(&z).unwrap());
    }
    for v in &vals[1..] {
        assert!(*v <= 4.0 * vals[0] && *v >= vals[0] / 4.0, "{vals:?}");
    }
}

struct CosCos;

impl ScalarField for CosCos {
    fn value(&self, p: [f64; 2]) -> f64 {
        let pi = std::f64::consts::PI;
        (pi * p[0]).cos() * (pi * p[1]).cos()
    }
    fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        let pi = std::f64::consts::PI;
        [
            -pi * (pi * p[0]).sin() * (pi * p[1]).cos(),
            -pi * (pi * p[0]).cos() * (pi * p[1]).sin(),
        ]
    }
}

#[test]
fn elliptic_projection_rates() {
    let mut h = Vec::new();
    let mut l2 = Vec::new();
    let mut h1 = Vec::new();
    for n in [4, 8, 16] {
        let d = disc(n, 1);
        let p = elliptic_projection(&d, |x| CosCos.value(x), |x| CosCos.gradient(x)).unwrap();
        let (e0, e1) = exact_difference(d.space(), &p, &CosCos).unwrap();
        h.push(d.space().mesh().h());
        l2.push(e0.sqrt());
        h1.push(e1.sqrt());
    }
    let o2 = observed_orders(&h, &l2);
    let o1 = observed_orders(&h, &h1);
    let (a, b) = (o2[2].unwrap(), o1[2].unwrap());
    assert!((1.8..=2.2).contains(&a), "L2 orders {o2:?}");
    assert!((0.85..=1.15).contains(&b), "H1 orders {o1:?}");
    assert!(l2.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn elliptic_projection_reproduces_polynomials() {
    let d = disc(4, 1);
    let p = elliptic_projection(&d, |x| x[0], |_| [1.0, 0.0]).unwrap();
    let exact = d.space().interpolate(|x| x[0]);
    for (a, b) in p.coeffs().iter().zip(exact.coeffs()) {
        assert!((a - b).abs() < 1e-12);
    }
    let d = disc(3, 2);
    let q = |x: [f64; 2]| x[0] * x[0] - x[0] * x[1] + 0.5 * x[1] * x[1] - x[1];
    let gq = |x: [f64; 2]| [2.0 * x[0] - x[1], -x[0] + x[1] - 1.0];
    let p = elliptic_projection(&d, q, gq).unwrap();
    let exact = d.space().interpolate(q);
    for (a, b) in p.coeffs().iter().zip(exact.coeffs()) {
        assert!((a - b).abs() < 1e-11);
    }
}

#[test]
fn continuous_projection_of_linear_data() {
    let d = disc(5, 1);
    let u = project_initial(&d, &FnField(|x: [f64; 2]| x[1]), InitialProjection::L2Continuous).unwrap();
    let exact = d.space().interpolate(|x| x[1]);
    for (a, b) in u.coeffs().iter().zip(exact.coeffs()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(u.kind(), FieldKind::Continuous);
    assert!(u.continuity_defect(d.space()) <= 1e-13);
}

/// Tensor Gauss-Legendre quadrature on a uniform grid of squares.
fn fine_integral(f: &dyn Fn([f64; 2]) -> f64, squares: usize) -> f64 {
    let rule = edge_quadrature(19).unwrap();
    let side = 2.0 / squares as f64;
    let mut total = 0.0;
    for j in 0..squares {
        for i in 0..squares {
            for (a, wa) in rule.points.iter().zip(&rule.weights) {
                for (b, wb) in rule.points.iter().zip(&rule.weights) {
                    let x = [-1.0 + side * (i as f64 + a[0]), -1.0 + side * (j as f64 + b[0])];
                    total += wa * wb * side * side * f(x);
                }
            }
        }
    }
    total
}

#[test]
fn l2_projection_preserves_test1_mass() {
    let d = disc(40, 1);
    let ic = InitialCondition::new(TestCase::Test1, 0.1).unwrap();
    let u = project_initial(&d, &ic, InitialProjection::L2Continuous).unwrap();
    let exact = fine_integral(&|x| ic.value(x), 200);
    let mass = d.total_mass(&u);
    assert!((mass - exact).abs() <= 1e-6, "{mass} vs {exact}");
}

/// `sum_K ||v - avg(v)||^2_K` and `sum_e h_e ||[v]||^2_e`.
fn kp_terms(space: &DgSpace, v: &DgField) -> (f64, f64) {
    let avg = node_average(space, v).unwrap();
    let diff = v.add_scaled(-1.0, &avg);
    let vol = triangle_quadrature(6).unwrap();
    let mut lhs = 0.0;
    for c in 0..space.mesh().num_cells() {
        let det = space.geometry(c).det.abs();
        for (p, w) in vol.points.iter().zip(&vol.weights) {
            lhs += w * det * space.eval_field(&diff, c, *p).unwrap().powi(2);
        }
    }
    let eq = edge_quadrature(6).unwrap();
    let mut rhs = 0.0;
    let mesh = space.mesh();
    for e in mesh.interior_edges() {
        let a = mesh.vertices()[e.vertices[0]];
        let b = mesh.vertices()[e.vertices[1]];
        for (p, w) in eq.points.iter().zip(&eq.weights) {
            let x = [a[0] + p[0] * (b[0] - a[0]), a[1] + p[0] * (b[1] - a[1])];
            let jl = space.eval_field(v, e.left, space.geometry(e.left).to_reference(x)).unwrap();
            let jr = space.eval_field(v, e.right, space.geometry(e.right).to_reference(x)).unwrap();
            rhs += w * e.length * e.length * (jl - jr).powi(2);
        }
    }
    (lhs, rhs)
}

#[test]
fn node_average_error_controlled_by_jumps() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for r in [1, 2] {
        let mut ratios = Vec::new();
        for n in [2, 4, 8] {
            let d = disc(n, r);
            let v = random_field(&d, &mut rng);
            let (lhs, rhs) = kp_terms(d.space(), &v);
            ratios.push(lhs / rhs);
        }
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min <= 4.0, "r={r}: {ratios:?}");
    }
}

#[test]
fn node_average_of_jump_free_field_is_exact() {
    let d = disc(4, 2);
    let v = d.space().interpolate(|x| (x[0] - 0.2).exp() * x[1]);
    let (lhs, rhs) = kp_terms(d.space(), &v);
    assert!(rhs < 1e-28 && lhs < 1e-28, "{lhs:e} {rhs:e}");
}
