mod common;

use approx::assert_relative_eq;
use qpnet::network::{build_network, build_projectors, HSelector, NetworkParams};
use qpnet::problem::{read_problem_file, validate};
use qpnet::stability::{default_alpha_grid, search_alpha, stability_margin};
use qpnet::{linalg, oracle, Matrix, Vector};

use common::*;

/// Roots of `det(S - x I)` by sign-change scan and bisection over the
/// Gershgorin interval. Independent of the Jacobi sweep under test.
fn charpoly_roots(s: &Matrix) -> Vec<f64> {
    let k = s.nrows();
    let radius = (0..k)
        .map(|i| s.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let f = |x: f64| det_small(&(s - Matrix::identity(k, k) * x));
    let (lo, hi) = (-radius - 1.0, radius + 1.0);
    let steps = 20_000;
    let mut roots = Vec::new();
    let mut prev = (lo, f(lo));
    for i in 1..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let fx = f(x);
        if fx == 0.0 {
            roots.push(x);
        } else if prev.1 * fx < 0.0 {
            let (mut a, mut b) = (prev.0, x);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if f(a) * f(mid) <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev = (x, fx);
    }
    roots
}

#[test]
fn fixtures_load_with_expected_shapes() {
    let p1 = load("example1.json");
    let d = p1.dims();
    assert_eq!((d.n, d.m, d.h), (3, 1, 2));
    let p2 = load("example2.json");
    let d = p2.dims();
    assert_eq!((d.n, d.m, d.h), (4, 1, 2));
    assert_eq!(p2.q[(0, 1)], 0.35);
    assert_eq!(p2.q[(1, 3)], p2.q[(3, 1)]);
    let file = read_problem_file(&fixture("example2.json")).unwrap();
    assert_eq!(file.id.as_deref(), Some("example2"));
}

#[test]
fn example1_validates_with_min_eigenvalue_point_four() {
    let p = load("example1.json");
    let report = validate(&p);
    assert!(report.all_pass(), "{report:?}");
    assert_relative_eq!(
        report.get("q_positive_semidefinite").unwrap().value,
        0.4,
        epsilon = 1e-12
    );
    let eig = linalg::eigenvalues_symmetric(&p.q).unwrap();
    for (got, want) in eig.iter().zip([0.4, 0.6, 0.72]) {
        assert_relative_eq!(*got, want, epsilon = 1e-12);
    }
}

#[test]
fn example2_eigenvalues_agree_with_characteristic_polynomial() {
    let p = load("example2.json");
    let eig = linalg::eigenvalues_symmetric(&p.q).unwrap();
    let roots = charpoly_roots(&p.q);
    assert_eq!(roots.len(), 4);
    for (a, b) in eig.iter().zip(&roots) {
        assert!((a - b).abs() <= 1e-9 * b.abs(), "{eig:?} vs {roots:?}");
    }
    for (a, b) in eig.iter().zip([0.3012, 0.9396, 1.8547, 4.0045]) {
        assert!((a - b).abs() <= 1e-3, "{eig:?}");
    }
    let report = validate(&p);
    assert!(report.all_pass());
    assert_relative_eq!(
        report.get("q_positive_definite").unwrap().value,
        eig[0],
        epsilon = 1e-15
    );
}

#[test]
fn prose_variant_of_example1_has_same_optimum() {
    let a = oracle::solve(&load("example1.json")).unwrap();
    let b = oracle::solve(&load("example1_prose_B.json")).unwrap();
    assert!(a.active_set.is_empty() && b.active_set.is_empty());
    for (x, y) in a.x_star.iter().zip(&b.x_star) {
        assert_relative_eq!(*x, *y, epsilon = 1e-12);
    }
    assert_relative_eq!(a.u_star[0], 7.0 / 8.0, epsilon = 1e-12);
}

#[test]
fn printed_c_variant_has_a_different_optimum() {
    let p = load("example2_printed_c.json");
    let sol = oracle::solve(&p).unwrap();
    let expected = [4.2119, 0.8283, 0.2930, 0.3506];
    for (x, e) in sol.x_star.iter().zip(expected) {
        assert!((x - e).abs() <= 1e-3, "{:?}", sol.x_star);
    }
    assert!(oracle::kkt_residuals(&p, &sol).unwrap().max() <= 1e-8);
    // the printed optimum is feasible for this data but not optimal
    let printed = Vector::from_vec(vec![2.6080, 1.8757, -0.5792, 0.1317]);
    assert!(p.objective(&printed) > sol.objective + 1.0);
}

#[test]
fn example1_p_and_w_blocks() {
    let p = load("example1.json");
    let net = build_network(
        &p,
        NetworkParams::new(0.45, 0.0, 2.0).unwrap(),
        HSelector::Zero,
    )
    .unwrap();
    let first = [-79.0 / 30.0, 67.0 / 30.0, -34.0 / 30.0];
    for (i, e) in first.iter().enumerate() {
        assert_relative_eq!(net.p[i], *e, epsilon = 1e-12);
    }
    assert_eq!(net.p.rows(3, 2).as_slice(), p.b_ineq.as_slice());
    assert_eq!(net.w.view((3, 3), (2, 2)).amax(), 0.0);
    let minus_b = net.w.view((3, 0), (2, 3)) + &p.a_ineq;
    assert_eq!(minus_b.amax(), 0.0);

    let (m, _) = build_projectors(&p).unwrap();
    let g = (Matrix::identity(3, 3) - &m) * &p.q + &m;
    assert!((net.w.view((0, 0), (3, 3)) - g).amax() <= 1e-15);
}

#[test]
fn stability_verdicts_for_bundled_configurations() {
    let p1 = load("example1.json");
    for (gamma, selector) in [(0.0, HSelector::Zero), (1.0, HSelector::FirstHRows)] {
        let net =
            build_network(&p1, NetworkParams::new(0.45, gamma, 2.0).unwrap(), selector).unwrap();
        assert!(!stability_margin(&net).stable);
        assert!(search_alpha(&net, 2.0, &default_alpha_grid()).is_none());
    }

    let p2 = load("example2.json");
    let net = build_network(
        &p2,
        NetworkParams::new(0.3, 1.0, 2.0).unwrap(),
        HSelector::FirstHRows,
    )
    .unwrap();
    let (alpha, report) = search_alpha(&net, 2.0, &default_alpha_grid()).unwrap();
    assert_eq!(alpha, 0.3018059416240312);
    assert!(report.stable && report.margin < -0.05);
    let eig = linalg::eigenvalues_symmetric(&{
        let s = Matrix::identity(6, 6) - &net.w * alpha;
        s.transpose() * s
    })
    .unwrap();
    assert_relative_eq!(report.norm, eig[5].sqrt(), max_relative = 1e-9);
}
