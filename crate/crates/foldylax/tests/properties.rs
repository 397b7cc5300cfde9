use foldylax::cluster::{derive_coupling, BubbleCluster, CouplingData, MaterialParams, OmegaMode};
use foldylax::kernel::{apply_k, neumann_solve, KernelSpec, Truncation};
use foldylax::laplace::{eval_t, hrs_freq_norm, op_norm, FrequencyGrid};
use foldylax::paths::{
    aggregate_weights, atomic_power, count_paths, enumerate_all, enumerate_paths, maximize_path, path_amplitude,
    AmplitudeParams, Path, DEFAULT_BUDGET,
};
use foldylax::signal::{hrs_norm, CausalSignal, TimeGrid};
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

fn coupling(centers: Vec<[f64; 3]>, omega_m: f64) -> CouplingData {
    let c = BubbleCluster::new(centers, 1e-3, 0.9).unwrap();
    derive_coupling(&c, &MaterialParams::air_in_water(), OmegaMode::Explicit(omega_m)).unwrap()
}

fn spread_centers(m: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), m).prop_map(move |raw| {
        raw.iter()
            .enumerate()
            .map(|(k, &(x, y, z))| [0.05 * k as f64 + 0.01 * x, 0.01 * y, 0.01 * z])
            .collect()
    })
}

fn signal(grid: TimeGrid, a: f64, w: f64, t0: f64) -> CausalSignal {
    CausalSignal::from_fn(grid, |t| {
        let u = t - t0;
        a * (-u * u * 4e8).exp() * (w * u).sin()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coupling_is_translation_invariant(
        centers in spread_centers(4),
        shift in (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64),
    ) {
        let a = coupling(centers.clone(), 5e-5);
        let moved = centers.iter().map(|c| [c[0] + shift.0, c[1] + shift.1, c[2] + shift.2]).collect();
        let b = coupling(moved, 5e-5);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((a.q[(i, j)] - b.q[(i, j)]).abs() <= 1e-9 * a.q[(i, j)].abs());
                prop_assert!((a.tau[(i, j)] - b.tau[(i, j)]).abs() <= 1e-9 * a.tau[(i, j)].abs());
            }
        }
    }

    #[test]
    fn hrs_norm_is_a_norm(
        a in -3.0..3.0f64, b in -3.0..3.0f64,
        w1 in 1e3..3e4f64, w2 in 1e3..3e4f64,
        r in 0usize..3,
    ) {
        let g = TimeGrid::new(4e-4, 2001).unwrap();
        let sigma = 5e3;
        let f = signal(g, 1.0, w1, 1e-4);
        let h = signal(g, 1.0, w2, 2e-4);
        let nf = hrs_norm(&f, r, sigma).unwrap();
        let nh = hrs_norm(&h, r, sigma).unwrap();
        let scaled = hrs_norm(&f.scaled(a), r, sigma).unwrap();
        prop_assert!((scaled - a.abs() * nf).abs() <= 1e-10 * nf.max(1e-300) * a.abs().max(1.0));
        let sum = hrs_norm(&f.scaled(a).axpy(b, &h).unwrap(), r, sigma).unwrap();
        prop_assert!(sum <= a.abs() * nf + b.abs() * nh + 1e-10 * (nf + nh));
        if r > 0 {
            // (σ²+ω²)^{r} weights are increasing in r once σ ≥ 1
            prop_assert!(nf >= hrs_norm(&f, r - 1, sigma).unwrap());
        }
    }

    #[test]
    fn apply_k_is_linear(a in -2.0..2.0f64, centers in spread_centers(3)) {
        let cd = coupling(centers, 5e-5);
        let g = TimeGrid::new(6e-4, 1500).unwrap();
        let spec = KernelSpec::new(cd);
        let w1: Vec<_> = (0..3).map(|i| signal(g, 1.0, 2e4, 1e-4 + 2e-5 * i as f64)).collect();
        let w2: Vec<_> = (0..3).map(|i| signal(g, 0.5, 1.2e4, 2e-4 - 3e-5 * i as f64)).collect();
        let comb: Vec<_> = w1.iter().zip(&w2).map(|(x, y)| x.axpy(a, y).unwrap()).collect();
        let k1 = apply_k(&spec, &w1).unwrap();
        let k2 = apply_k(&spec, &w2).unwrap();
        let kc = apply_k(&spec, &comb).unwrap();
        for i in 0..3 {
            let expect = k1[i].axpy(a, &k2[i]).unwrap();
            let scale = expect.max_abs().max(kc[i].max_abs()).max(1e-300);
            prop_assert!(expect.axpy(-1.0, &kc[i]).unwrap().max_abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn neumann_series_superposes(a in -2.0..2.0f64) {
        let cd = coupling(vec![[0.0; 3], [0.02, 0.0, 0.0], [0.0, 0.03, 0.0]], 5e-5);
        let g = TimeGrid::new(6e-4, 1500).unwrap();
        let spec = KernelSpec::new(cd);
        let v1: Vec<_> = (0..3).map(|i| signal(g, 1.0, 2e4, 1e-4 + 2e-5 * i as f64)).collect();
        let v2: Vec<_> = (0..3).map(|i| signal(g, 1.0, 1e4, 1.5e-4 + 1e-5 * i as f64)).collect();
        let vc: Vec<_> = v1.iter().zip(&v2).map(|(x, y)| x.axpy(a, y).unwrap()).collect();
        let s1 = neumann_solve(&spec, &v1, Truncation::Fixed(3), 0, 1e3).unwrap();
        let s2 = neumann_solve(&spec, &v2, Truncation::Fixed(3), 0, 1e3).unwrap();
        let sc = neumann_solve(&spec, &vc, Truncation::Fixed(3), 0, 1e3).unwrap();
        for i in 0..3 {
            let expect = s1.partial[i].axpy(a, &s2.partial[i]).unwrap();
            let scale = expect.max_abs().max(1e-300);
            prop_assert!(expect.axpy(-1.0, &sc.partial[i]).unwrap().max_abs() <= 1e-10 * scale.max(sc.partial[i].max_abs()));
        }
    }

    #[test]
    fn path_count_matches_enumeration(
        centers in spread_centers(4),
        n in 1usize..5, start in 1usize..5, end in 1usize..5,
    ) {
        let cd = coupling(centers, 5e-5);
        let listed = enumerate_paths(&cd, n, start, end, DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(listed.len() as f64, count_paths(&cd.q, n, start, end));
        for p in &listed {
            prop_assert_eq!(p.len(), n);
            prop_assert!(p.indices.windows(2).all(|s| s[0] != s[1]));
        }
    }

    #[test]
    fn maximizer_dominates_every_path(centers in spread_centers(4), picks in prop::collection::vec(0usize..4, 4)) {
        let cd = coupling(centers, 4.8795e-5);
        let params = AmplitudeParams { sigma: 1e3, m: 10.0, h: 1e3, r: 0, d_max: 0.1, drop_path_delay: false };
        let all = enumerate_all(&cd, 3, DEFAULT_BUDGET).unwrap();
        let (_, l_star) = maximize_path(&all, &cd, &params).unwrap();
        let mut idx: Vec<usize> = picks.iter().map(|k| k + 1).collect();
        for k in 1..idx.len() {
            if idx[k] == idx[k - 1] {
                idx[k] = idx[k] % 4 + 1;
            }
        }
        let g = Path::from_indices(&cd, &idx).unwrap();
        prop_assert!(path_amplitude(&g, &cd, &params) <= l_star);
    }

    #[test]
    fn multiplier_bound_holds(
        centers in spread_centers(3),
        coeffs in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3 * 64),
    ) {
        let cd = coupling(centers, 5e-5);
        let sigma0 = 3.0 / cd.omega_m;
        let fg = FrequencyGrid::uniform(sigma0, 5.0 / cd.omega_m, 64);
        let ts = eval_t(&cd, &fg, None).unwrap();
        let v: Vec<DVector<Complex64>> = (0..64)
            .map(|k| DVector::from_fn(3, |i, _| {
                let (re, im) = coeffs[3 * k + i];
                Complex64::new(re, im)
            }))
            .collect();
        let tv: Vec<_> = ts.t.iter().zip(&v).map(|(t, x)| t * x).collect();
        let sup = ts.t.iter().map(op_norm).fold(0.0, f64::max);
        for r in 0..3 {
            prop_assert!(hrs_freq_norm(&tv, &fg, r) <= sup * hrs_freq_norm(&v, &fg, r) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn atomic_power_matches_matrix_power() {
    for m in 1..=4usize {
        let centers: Vec<[f64; 3]> = (0..m).map(|k| [0.021 * k as f64, 0.013 * (k * k) as f64, 0.0]).collect();
        let cd = coupling(centers, 5e-5);
        let w2 = cd.omega_m * cd.omega_m;
        let base = cd.q.map(|x| x / w2);
        let mut power = base.clone();
        for n in 1..=4usize {
            let trains = atomic_power(&cd, n).unwrap();
            let agg = aggregate_weights(&trains);
            for i in 0..m {
                for j in 0..m {
                    let e = power[(i, j)];
                    assert!((agg[(i, j)] - e).abs() <= 1e-12 * e.abs().max(1e-300), "M={m} N={n}");
                }
            }
            power = &power * &base;
        }
    }
}
