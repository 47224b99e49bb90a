use pbsim_core::optim::{gsc_from_lwp, sc_default_coeffs, scale_hyperparams};
use pbsim_core::quadratic::{
    dominant_magnitude, linear_grid, log_grid, optimal_halflife, poly_roots, stability_heatmap, QuadMethod,
    QuadMethodSpec, SearchSpec,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn method() -> impl Strategy<Value = QuadMethod> {
    prop::sample::select(QuadMethod::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn roots_have_small_residuals(coeffs in prop::collection::vec(-3.0f64..3.0, 2..14)) {
        let mut c = coeffs;
        c[0] = if c[0].abs() < 0.1 { 1.0 } else { c[0] };
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        let roots = poly_roots(&c).unwrap();
        prop_assert_eq!(roots.len(), c.len() - 1);
        for r in roots {
            let p = c.iter().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * r + k);
            prop_assert!(p.norm() < 1e-6 * norm * (1.0 + r.norm()).powi(c.len() as i32 - 1), "residual {} at {}", p.norm(), r);
        }
    }

    #[test]
    fn char_poly_residuals(method in method(), m in 0.0f64..0.999, el in 1e-4f64..4.0, d in 0usize..=12) {
        let poly = QuadMethodSpec::defaults(method).recurrence(m, el, d).char_poly();
        let norm = poly.iter().map(|x| x * x).sum::<f64>().sqrt();
        for r in poly_roots(&poly).unwrap() {
            let p = poly.iter().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * r + k);
            prop_assert!(p.norm() < 1e-6 * norm, "residual {}", p.norm());
        }
    }

    #[test]
    fn lwp_gsc_conversion(m in 0.01f64..0.99, t in 0.0f64..20.0) {
        let (a, b) = gsc_from_lwp(m, t).unwrap();
        prop_assert!((a + b - (1.0 + t)).abs() < 1e-9 * (1.0 + t));
        prop_assert!((m * b - t).abs() < 1e-9 * (1.0 + t));
    }

    #[test]
    fn sc_coefficients_preserve_total_step(m in 0.0f64..0.999, d in 0usize..64) {
        let (a, b) = sc_default_coeffs(m, d);
        // a / (1 - m) + b = 1 / (1 - m)
        prop_assert!((a / (1.0 - m) + b - 1.0 / (1.0 - m)).abs() < 1e-9 / (1.0 - m));
    }

    #[test]
    fn hyperparameter_scaling_composes(eta in 1e-4f64..1.0, m in 0.0f64..0.999, n_r in 1usize..256, n1 in 1usize..256, n2 in 1usize..256) {
        let (e1, m1) = scale_hyperparams(eta, m, n_r, n1);
        let (e2, m2) = scale_hyperparams(e1, m1, n1, n2);
        let (ed, md) = scale_hyperparams(eta, m, n_r, n2);
        prop_assert!((m2 - md).abs() < 1e-12);
        prop_assert!((e2 - ed).abs() < 1e-9 * ed.abs().max(1e-12));
        // per-sample effective step eta / ((1 - m) N) is invariant
        if m > 0.0 {
            let eff = |e: f64, mm: f64, n: usize| e / ((1.0 - mm) * n as f64);
            prop_assert!((eff(e1, m1, n1) - eff(eta, m, n_r)).abs() < 1e-8 * eff(eta, m, n_r));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn simulated_rate_matches_dominant_root(method in method(), m in 0.0f64..0.99, log_el in -3.0f64..0.3, d in 0usize..=10) {
        let rec = QuadMethodSpec::defaults(method).recurrence(m, 10f64.powf(log_el), d);
        let r = dominant_magnitude(&rec.char_poly()).unwrap();
        prop_assume!(r < 0.999);
        let est = rec.simulate(20_000, 1.0).unwrap();
        prop_assert!(!est.diverged);
        prop_assert!((est.rate - r).abs() < 1e-3, "rate {} vs r_max {}", est.rate, r);
    }

    #[test]
    fn unstable_roots_diverge(m in 0.0f64..0.9, d in 0usize..=4) {
        let rec = QuadMethodSpec::defaults(QuadMethod::Gdm).recurrence(m, 3.9 + 2.0 * m, d);
        let r = dominant_magnitude(&rec.char_poly()).unwrap();
        prop_assume!(r > 1.01);
        prop_assert!(rec.simulate(20_000, 1.0).unwrap().diverged);
    }

    #[test]
    fn heatmap_is_order_independent(seed in 0u64..1000) {
        let spec = QuadMethodSpec::defaults(QuadMethod::LwpWPlusGsc);
        let ms = linear_grid(0.0, 0.95, 5);
        let mut els = log_grid(1e-3, 2.0, 6);
        let forward = stability_heatmap(&spec, 2, &ms, &els).unwrap();
        let k = (seed as usize) % els.len();
        els.rotate_left(k);
        let rotated = stability_heatmap(&spec, 2, &ms, &els).unwrap();
        for i in 0..ms.len() {
            for j in 0..els.len() {
                prop_assert_eq!(rotated.r_max[i][j], forward.r_max[i][(j + k) % els.len()]);
            }
        }
    }
}

#[test]
fn spike_compensation_enlarges_stability_region_at_delay_one() {
    let ms = linear_grid(0.0, 0.99, 100);
    let els = log_grid(1e-3, 4.0, 120);
    let gdm = stability_heatmap(&QuadMethodSpec::defaults(QuadMethod::Gdm), 1, &ms, &els).unwrap();
    let gsc = stability_heatmap(&QuadMethodSpec::defaults(QuadMethod::Gsc), 1, &ms, &els).unwrap();
    let mut gdm_cells = 0;
    let mut gsc_cells = 0;
    for i in 0..ms.len() {
        for j in 0..els.len() {
            if gdm.is_stable(i, j) {
                gdm_cells += 1;
                assert!(gsc.is_stable(i, j), "m={} el={} gdm r={} gsc r={}", ms[i], els[j], gdm.r_max[i][j], gsc.r_max[i][j]);
            }
            gsc_cells += gsc.is_stable(i, j) as usize;
        }
    }
    assert!(gsc_cells > gdm_cells);
}

#[test]
fn optimal_halflife_is_monotone_in_kappa() {
    let search = SearchSpec {
        m_grid: linear_grid(0.0, 0.99, 25),
        ..SearchSpec::default()
    };
    for method in QuadMethod::ALL {
        for d in [0usize, 2] {
            let mut prev = 0.0;
            for kappa in [1.0, 3.0, 10.0, 40.0, 100.0, 500.0] {
                let hl = optimal_halflife(&QuadMethodSpec::defaults(method), kappa, d, &search).unwrap().half_life;
                assert!(hl >= prev, "{} D={d} kappa={kappa}: {hl} < {prev}", method.name());
                prev = hl;
            }
        }
    }
}

#[test]
fn mitigations_never_lose_to_delayed_gdm() {
    let search = SearchSpec::default();
    for d in [1usize, 2, 5] {
        let gdm = optimal_halflife(&QuadMethodSpec::defaults(QuadMethod::Gdm), 1e3, d, &search).unwrap().half_life;
        for method in [QuadMethod::Gsc, QuadMethod::Lwp, QuadMethod::LwpWPlusGsc] {
            let hl = optimal_halflife(&QuadMethodSpec::defaults(method), 1e3, d, &search).unwrap().half_life;
            assert!(hl <= gdm, "{} D={d}: {hl} > {gdm}", method.name());
        }
    }
}
