//! Assembly checks against brute-force evaluation through the pointwise
//! field API.

use std::sync::Arc;

use chdg::dg::{
    assemble_mass, assemble_nonlinear, assemble_nonlinear_jacobian, assemble_sipg, DgField,
    DgSpace, FieldKind, NonlinearVariant,
};
use chdg::mesh::{edge_quadrature, triangle_quadrature, Mesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(n: usize, r: usize) -> DgSpace {
    DgSpace::new(Arc::new(Mesh::uniform(n).unwrap()), r).unwrap()
}

fn random_field(s: &DgSpace, rng: &mut ChaCha8Rng) -> DgField {
    let c = (0..s.ndofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    s.field(c, FieldKind::Broken).unwrap()
}

/// Independent evaluation of the SIPG form term by term.
fn sipg_oracle(s: &DgSpace, u: &DgField, v: &DgField, sigma0: f64) -> f64 {
    let mesh = s.mesh();
    let vol = triangle_quadrature(12).unwrap();
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        let area = s.geometry(c).area();
        for (p, w) in vol.points.iter().zip(&vol.weights) {
            let gu = s.broken_gradient(u, c, *p).unwrap();
            let gv = s.broken_gradient(v, c, *p).unwrap();
            total += 2.0 * area * w * (gu[0] * gv[0] + gu[1] * gv[1]);
        }
    }
    let eq = edge_quadrature(12).unwrap();
    for e in mesh.interior_edges() {
        let a = mesh.vertices()[e.vertices[0]];
        let b = mesh.vertices()[e.vertices[1]];
        for (p, w) in eq.points.iter().zip(&eq.weights) {
            let x = [a[0] + p[0] * (b[0] - a[0]), a[1] + p[0] * (b[1] - a[1])];
            let side = |f: &DgField, cell: usize| {
                let r = s.geometry(cell).to_reference(x);
                let val = s.eval_field(f, cell, r).unwrap();
                let g = s.broken_gradient(f, cell, r).unwrap();
                (val, g[0] * e.normal[0] + g[1] * e.normal[1])
            };
            let (ul, dul) = side(u, e.left);
            let (ur, dur) = side(u, e.right);
            let (vl, dvl) = side(v, e.left);
            let (vr, dvr) = side(v, e.right);
            let ju = ul - ur;
            let jv = vl - vr;
            let avg_du = 0.5 * (dul + dur);
            let avg_dv = 0.5 * (dvl + dvr);
            total += w * e.length * (-avg_du * jv - avg_dv * ju + sigma0 / e.length * ju * jv);
        }
    }
    total
}

fn l2_oracle(s: &DgSpace, u: &DgField, v: &DgField) -> f64 {
    let vol = triangle_quadrature(12).unwrap();
    let mut total = 0.0;
    for c in 0..s.mesh().num_cells() {
        let area = s.geometry(c).area();
        for (p, w) in vol.points.iter().zip(&vol.weights) {
            total += 2.0 * area * w * s.eval_field(u, c, *p).unwrap() * s.eval_field(v, c, *p).unwrap();
        }
    }
    total
}

#[test]
fn sipg_annihilates_constants() {
    for r in 1..=2 {
        let s = space(3, r);
        let a = assemble_sipg(&s, 20.0).unwrap();
        let ones = vec![1.0; s.ndofs()];
        let y = a.mul_vec(&ones);
        assert!(y.iter().all(|v| v.abs() < 1e-12), "r={r}");
    }
}

#[test]
fn sipg_two_triangle_jump() {
    let s = space(1, 1);
    let sigma0 = 10.0;
    let a = assemble_sipg(&s, sigma0).unwrap();
    let u = vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
    let val = a.bilinear(&u, &u);
    assert!((val - 4.0 * sigma0).abs() < 1e-12, "{val}");
    let f = s.field(u, FieldKind::Broken).unwrap();
    assert!((sipg_oracle(&s, &f, &f, sigma0) - 4.0 * sigma0).abs() < 1e-12);
}

#[test]
fn sipg_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for r in 1..=2 {
        let s = space(2, r);
        let a = assemble_sipg(&s, 7.5).unwrap();
        for _ in 0..5 {
            let u = random_field(&s, &mut rng);
            let v = random_field(&s, &mut rng);
            let fast = a.bilinear(u.coeffs(), v.coeffs());
            let slow = sipg_oracle(&s, &u, &v, 7.5);
            assert!((fast - slow).abs() < 1e-12 * slow.abs().max(1.0), "r={r}: {fast} vs {slow}");
        }
    }
}

#[test]
fn sipg_is_symmetric() {
    let s = space(4, 2);
    let a = assemble_sipg(&s, 60.0).unwrap();
    assert!(a.is_symmetric());
    assert!(a.asymmetry() <= 1e-12 * a.max_abs());
}

#[test]
fn sipg_consistency_on_continuous_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for r in 1..=2 {
        let s = space(3, r);
        let a = assemble_sipg(&s, 20.0).unwrap();
        let k = assemble_sipg(&s, 1e-300).unwrap();
        let cu: Vec<f64> = (0..s.num_continuous()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cv: Vec<f64> = (0..s.num_continuous()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = s.prolongate(&cu);
        let v = s.prolongate(&cv);
        // volume term alone, via the oracle with no edges contributing
        let vol = triangle_quadrature(12).unwrap();
        let mut grad_only = 0.0;
        for c in 0..s.mesh().num_cells() {
            let area = s.geometry(c).area();
            for (p, w) in vol.points.iter().zip(&vol.weights) {
                let gu = s.broken_gradient(&u, c, *p).unwrap();
                let gv = s.broken_gradient(&v, c, *p).unwrap();
                grad_only += 2.0 * area * w * (gu[0] * gv[0] + gu[1] * gv[1]);
            }
        }
        let full = a.bilinear(u.coeffs(), v.coeffs());
        assert!((full - grad_only).abs() < 1e-13 * grad_only.abs().max(1.0));
        assert!((k.bilinear(u.coeffs(), v.coeffs()) - grad_only).abs() < 1e-12);
    }
}

#[test]
fn sipg_coercive_at_default_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let s = space(4, 1);
    let a = assemble_sipg(&s, 10.0).unwrap();
    let vol = triangle_quadrature(4).unwrap();
    let eq = edge_quadrature(4).unwrap();
    let mesh = s.mesh();
    for _ in 0..200 {
        let v = random_field(&s, &mut rng);
        let av = a.bilinear(v.coeffs(), v.coeffs());
        let mut norm = 0.0;
        for c in 0..mesh.num_cells() {
            let area = s.geometry(c).area();
            for (p, w) in vol.points.iter().zip(&vol.weights) {
                let g = s.broken_gradient(&v, c, *p).unwrap();
                norm += 2.0 * area * w * (g[0] * g[0] + g[1] * g[1]);
            }
        }
        for e in mesh.interior_edges() {
            let pa = mesh.vertices()[e.vertices[0]];
            let pb = mesh.vertices()[e.vertices[1]];
            for (p, w) in eq.points.iter().zip(&eq.weights) {
                let x = [pa[0] + p[0] * (pb[0] - pa[0]), pa[1] + p[0] * (pb[1] - pa[1])];
                let val = |cell: usize| {
                    s.eval_field(&v, cell, s.geometry(cell).to_reference(x)).unwrap()
                };
                let j = val(e.left) - val(e.right);
                // h_e^{-1} int_e [v]^2 with ds = h_e dt
                norm += w * j * j;
            }
        }
        assert!(av > 0.0);
        assert!(av >= 0.1 * norm, "a(v,v) = {av}, norm = {norm}");
    }
}

#[test]
fn mass_total_area_and_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for r in 1..=2 {
        let s = space(3, r);
        let m = assemble_mass(&s);
        let ones = vec![1.0; s.ndofs()];
        assert!((m.bilinear(&ones, &ones) - 4.0).abs() < 1e-13);
        let u = random_field(&s, &mut rng);
        let v = random_field(&s, &mut rng);
        let fast = m.bilinear(u.coeffs(), v.coeffs());
        assert!((fast - l2_oracle(&s, &u, &v)).abs() < 1e-12);
    }
}

#[test]
fn mass_is_positive_definite() {
    let s = space(2, 1);
    let m = assemble_mass(&s);
    let d = m.to_dense();
    let mat = faer::Mat::<f64>::from_fn(d.len(), d.len(), |i, j| d[i][j]);
    let ev = mat.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
    assert!(ev.iter().cloned().fold(f64::INFINITY, f64::min) > 0.0);
}

#[test]
fn nonlinear_vector_constant_states() {
    let s = space(3, 1);
    let m = assemble_mass(&s);
    for variant in [NonlinearVariant::Splitting, NonlinearVariant::Implicit] {
        for c in [0.0, 1.0] {
            let u = s.constant(c);
            let v = assemble_nonlinear(&s, &u, &u, variant).unwrap();
            assert!(v.iter().all(|x| x.abs() < 1e-14));
        }
    }
    let two = s.constant(2.0);
    let v = assemble_nonlinear(&s, &two, &two, NonlinearVariant::Splitting).unwrap();
    let m1 = m.mul_vec(&vec![1.0; s.ndofs()]);
    for (a, b) in v.iter().zip(&m1) {
        assert!((a - 6.0 * b).abs() < 1e-13);
    }
}

#[test]
fn nonlinear_rejects_mismatched_spaces() {
    let a = space(2, 1);
    let b = space(3, 1);
    let res = assemble_nonlinear(&a, &a.constant(0.0), &b.constant(0.0), NonlinearVariant::Splitting);
    assert!(res.is_err());
}

#[test]
fn jacobian_constant_states() {
    let s = space(3, 1);
    let m = assemble_mass(&s);
    let zero = s.constant(0.0);
    let js = assemble_nonlinear_jacobian(&s, &zero, NonlinearVariant::Splitting).unwrap();
    assert!(js.max_abs() == 0.0);
    let ji = assemble_nonlinear_jacobian(&s, &zero, NonlinearVariant::Implicit).unwrap();
    assert!(ji.add(1.0, &m, 1.0).max_abs() < 1e-15);
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let s = space(2, 1);
    for trial in 0..20 {
        let variant = if trial % 2 == 0 {
            NonlinearVariant::Splitting
        } else {
            NonlinearVariant::Implicit
        };
        let u = random_field(&s, &mut rng);
        let prev = random_field(&s, &mut rng);
        let dir = random_field(&s, &mut rng);
        let j = assemble_nonlinear_jacobian(&s, &u, variant).unwrap();
        let jd = j.mul_vec(dir.coeffs());
        let step = 1e-6;
        let plus = assemble_nonlinear(&s, &u.add_scaled(step, &dir), &prev, variant).unwrap();
        let minus = assemble_nonlinear(&s, &u.add_scaled(-step, &dir), &prev, variant).unwrap();
        for i in 0..s.ndofs() {
            let fd = (plus[i] - minus[i]) / (2.0 * step);
            assert!((fd - jd[i]).abs() < 1e-6, "{fd} vs {}", jd[i]);
        }
    }
}

#[test]
fn nonpositive_penalty_rejected() {
    let s = space(2, 1);
    assert!(assemble_sipg(&s, 0.0).is_err());
    assert!(assemble_sipg(&s, -1.0).is_err());
}
