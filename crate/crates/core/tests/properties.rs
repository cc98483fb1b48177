//! Statistical and bound properties of the densities on the unit sphere.

use nalgebra::DVector;
use pathmeasure_core::jacobi::{rho_p, sinh_bound, w_cubic_constant, w_p_expansion};
use pathmeasure_core::mc::{curvature_exponential_moment, sample_bp, Serial};
use pathmeasure_core::path::develop_unrestricted;
use pathmeasure_core::rng::RngStream;
use pathmeasure_core::{DrivingPath, Manifold, Partition, Sphere};

/// Increments with `|db_i| < eps` in uniformly random directions.
fn path_in_h_eps(p: &Partition, d: usize, eps: f64, rng: &mut RngStream) -> DrivingPath {
    let incs = (0..p.n())
        .map(|_| {
            let v = rng.normal_vec(d);
            v.normalize() * (eps * rng.uniform())
        })
        .collect();
    DrivingPath::new(p.clone(), incs).unwrap()
}

fn worst_cubic_ratio(eps: f64, cases: u64) -> f64 {
    let m = Sphere::new(2);
    let p = Partition::uniform(8).unwrap();
    let c1 = w_cubic_constant(m.curvature_bound(), 2, eps);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let mut rng = RngStream::new(61, case);
        let b = path_in_h_eps(&p, 2, eps, &mut rng);
        let rep = rho_p(&m, &develop_unrestricted(&m, &b));
        let cubes: f64 = b.increments().iter().map(|db| db.norm().powi(3)).sum();
        worst = worst.max(rep.w_p.unwrap().abs() / (c1 * cubes));
    }
    worst
}

#[test]
fn w_p_cubic_bound_on_small_increments() {
    assert!(worst_cubic_ratio(0.1, 2000) <= 1.0);
    // The bound is loose; it keeps holding far beyond the default eps.
    for eps in [0.5, 1.0, 2.0, 3.0] {
        let r = worst_cubic_ratio(eps, 500);
        println!("eps = {eps}: max |W_P| / (C_1 sum |db|^3) = {r:.3e}");
        assert!(r <= 1.0);
    }
}

#[test]
fn w_p_decomposition_matches_term_by_term_expansion() {
    let m = Sphere::new(3);
    let p = Partition::uniform(16).unwrap();
    for case in 0..200 {
        let mut rng = RngStream::new(62, case);
        let sigma = develop_unrestricted(&m, &sample_bp(&p, 3, &mut rng));
        let rep = rho_p(&m, &sigma);
        if rep.degenerate {
            continue;
        }
        let w = w_p_expansion(&m, &sigma).unwrap();
        assert!((rep.rho.ln() + rep.r_p / 6.0 - w).abs() <= 1e-9);
    }
}

#[test]
fn density_below_sinh_bound() {
    let m = Sphere::new(3);
    let p = Partition::uniform(8).unwrap();
    for case in 0..500 {
        let mut rng = RngStream::new(63, case);
        let b = sample_bp(&p, 3, &mut rng);
        let rho = rho_p(&m, &develop_unrestricted(&m, &b)).rho;
        // Ric = 2 I >= -(d - 1) K for any K >= 0.
        for k in [0.0, 0.5, 1.0] {
            assert!(rho <= sinh_bound(b.increments(), k) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn density_along_fixed_brownian_path_tends_to_scalar_factor() {
    let m = Sphere::new(2);
    let fine = Partition::uniform(1 << 14).unwrap();
    let mut rng = RngStream::new(64, 0);
    let b = sample_bp(&fine, 2, &mut rng);
    let mut prev_gap = f64::INFINITY;
    for k in [6, 8, 10, 12, 14] {
        let level = Partition::uniform(1 << k).unwrap();
        let bl = b.aggregate(&level).unwrap();
        let rep = rho_p(&m, &develop_unrestricted(&m, &bl));
        // log rho + R_P / 6 = W_P = O(sum |db|^3) -> 0.
        let gap = (rep.rho.ln() + rep.r_p / 6.0).abs();
        assert!(gap < prev_gap);
        prev_gap = gap;
        if k == 14 {
            // R_P tends to the quadratic variation 2 = Scal.
            assert!((rep.rho.ln() + 1.0 / 3.0).abs() < 0.02, "{}", rep.rho.ln());
        }
    }
}

#[test]
fn density_along_straight_line_is_cauchy() {
    let m = Sphere::new(2);
    let v = DVector::from_row_slice(&[1.2, -0.4]);
    let rho = |n: usize| {
        let p = Partition::uniform(n).unwrap();
        let b = DrivingPath::new(p, vec![&v / n as f64; n]).unwrap();
        rho_p(&m, &develop_unrestricted(&m, &b)).rho
    };
    let diffs: Vec<f64> = [4, 8, 16, 32, 64].iter().map(|&n| (rho(2 * n) - rho(n)).abs()).collect();
    for w in diffs.windows(2) {
        assert!((w[1] / w[0] - 0.5).abs() < 0.05, "{diffs:?}");
    }
}

#[test]
fn curvature_moment_shape() {
    let m = Sphere::new(2);
    let k: f64 = 1.0;
    let d = 2.0;
    for n in [32, 64] {
        let p = Partition::uniform(n).unwrap();
        for pw in [-1.0 / 6.0, -1.0 / 3.0] {
            let e = curvature_exponential_moment(&Serial, &m, &p, pw, 1.0, 20_000, 65);
            let upper = (2.0 * d * pw * pw * k * k * p.mesh()).exp();
            assert!(e.mean >= 1.0 - 3.0 * e.std_error, "{e:?}");
            assert!(e.mean <= upper + 3.0 * e.std_error, "{e:?} vs {upper}");
        }
    }
}
