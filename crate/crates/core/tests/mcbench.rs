use jdexpand::error::McError;
use jdexpand::mcbench::*;
use jdexpand::model::*;
use jdexpand::symexpr::{constant, exp, scale, state, sub, Expr};

fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn cfg(paths: usize, steps_per_year: usize, seed: u64) -> MCConfig {
    MCConfig {
        paths,
        steps_per_year,
        seed,
        antithetic: true,
    }
}

fn call_payoff(k: f64) -> Expr {
    // max(e^x - K, 0) written as (y + |y|)/2.
    let y = sub(&exp(&state(0)), &constant(k));
    scale(0.5, &(&y + &jdexpand::symexpr::abs(&y)))
}

fn gauss_cdf_diff(a: f64, b: f64, mean: f64, sd: f64) -> f64 {
    phi((b - mean) / sd) - phi((a - mean) / sd)
}

#[test]
fn deterministic_path_is_exact() {
    let m = make_bm_auxiliary(&[0.7], &[vec![1.0]]).unwrap();
    let m = JumpDiffusionModel::diffusion("drift", m.drift.clone(), vec![vec![constant(0.0)]]).unwrap();
    let est = simulate_moment(&m, &state(0), 0.5, &[1.2], &cfg(1000, 100, 3)).unwrap();
    assert!((est.mean - (1.2 + 0.7 * 0.5)).abs() < 1e-12, "{}", est.mean);
    assert_eq!(est.std_error, 0.0);
    assert_eq!(est.steps, 50);
}

#[test]
fn gbm_call_matches_closed_form() {
    let (r, sig, k, t) = (0.03, 0.2, 100.0, 0.25);
    let m = make_gbm(r, 0.0, sig).unwrap();
    let x = 100f64.ln();
    let est = simulate_moment(&m, &call_payoff(k), t, &[x], &cfg(200_000, 2500, 17)).unwrap();
    let sd = sig * t.sqrt();
    let d1 = (x - k.ln() + (r + 0.5 * sig * sig) * t) / sd;
    // Catalog models carry a zero discount rate, so this is the forward value.
    let forward = (x + r * t).exp() * phi(d1) - k * phi(d1 - sd);
    assert!((est.mean - forward).abs() < 4.0 * est.std_error, "{} +- {} vs {forward}", est.mean, est.std_error);
    assert_eq!(est.paths_used, 200_000);
}

#[test]
fn same_seed_is_bitwise_identical() {
    let m = make_sv_model(&sv_representative_params(0.5)).unwrap();
    let c = cfg(5000, 250, 99);
    let a = simulate_moment(&m, &call_payoff(100.0), 0.25, &[100f64.ln(), 0.04], &c).unwrap();
    let b = simulate_moment(&m, &call_payoff(100.0), 0.25, &[100f64.ln(), 0.04], &c).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    let c2 = MCConfig { seed: 100, ..c };
    let d = simulate_moment(&m, &call_payoff(100.0), 0.25, &[100f64.ln(), 0.04], &c2).unwrap();
    assert_ne!(a.mean, d.mean);
}

#[test]
fn thread_count_does_not_matter() {
    let m = make_merton(&MertonParams {
        r: 0.03,
        delta: 0.0,
        sigma: 0.2,
        lambda: 1.0,
        m_j: -0.05,
        sigma_j: 0.1,
    })
    .unwrap();
    let c = cfg(20_000, 500, 5);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_moment(&m, &call_payoff(100.0), 0.25, &[100f64.ln()], &c).unwrap())
    };
    let one = run(1);
    for n in [2, 4, 7] {
        let many = run(n);
        assert_eq!(one.mean.to_bits(), many.mean.to_bits());
        assert_eq!(one.std_error.to_bits(), many.std_error.to_bits());
    }
}

#[test]
fn quadrupling_paths_halves_the_error() {
    let m = make_gbm(0.03, 0.0, 0.2).unwrap();
    let f = call_payoff(100.0);
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let a = simulate_moment(&m, &f, 0.25, &[100f64.ln()], &cfg(20_000, 100, seed)).unwrap();
        let b = simulate_moment(&m, &f, 0.25, &[100f64.ln()], &cfg(80_000, 100, seed)).unwrap();
        ratios.push(b.std_error / a.std_error);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 0.5).abs() < 0.1, "{ratios:?}");
}

/// Classical RK4 for `x' = b(x)`.
fn rk4(b: impl Fn(&[f64]) -> Vec<f64>, x0: &[f64], t: f64, n: usize) -> Vec<f64> {
    let h = t / n as f64;
    let mut x = x0.to_vec();
    let axpy = |x: &[f64], k: &[f64], a: f64| x.iter().zip(k).map(|(x, k)| x + a * k).collect::<Vec<_>>();
    for _ in 0..n {
        let k1 = b(&x);
        let k2 = b(&axpy(&x, &k1, h / 2.0));
        let k3 = b(&axpy(&x, &k2, h / 2.0));
        let k4 = b(&axpy(&x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

#[test]
fn drift_only_paths_follow_the_ode() {
    // Catalog drifts with the noise switched off.
    let p = sv_representative_params(0.5);
    let sv = make_sv_model(&p).unwrap();
    let zero = vec![vec![constant(0.0); 2]; 2];
    let det = JumpDiffusionModel::diffusion("sv_drift", sv.drift.clone(), zero).unwrap();
    let lv = make_logvol_model(&logvol_reference_params(1.0)).unwrap();
    let det_lv = JumpDiffusionModel::diffusion("lv_drift", lv.drift.clone(), vec![vec![constant(0.0); 2]; 2]).unwrap();
    for (m, x0, lip) in [(det, vec![4.6, 0.09], p.kappa_v + 0.5 + p.lambda0.max(1.0)), (det_lv, vec![4.6, -2.0], 1.0)] {
        let (t, spy) = (1.0, 400);
        let dt = 1.0 / spy as f64;
        let ode = rk4(|x| m.drift_at(x).unwrap(), &x0, t, 4000);
        for i in 0..2 {
            let est = simulate_moment(&m, &state(i), t, &x0, &cfg(4, spy, 0)).unwrap();
            assert_eq!(est.std_error, 0.0);
            assert!((est.mean - ode[i]).abs() < 10.0 * dt * lip, "{}[{i}]: {} vs {}", m.name, est.mean, ode[i]);
        }
    }
}

#[test]
fn jump_count_matches_intensity() {
    let m = make_merton(&MertonParams {
        r: 0.0,
        delta: 0.0,
        sigma: 0.2,
        lambda: 3.0,
        m_j: 0.0,
        sigma_j: 0.1,
    })
    .unwrap();
    let t = 0.5;
    let est = simulate_jump_count(&m, t, &[0.0], &cfg(100_000, 2000, 8)).unwrap();
    assert!((est.mean - 3.0 * t).abs() < 4.0 * est.std_error, "{} +- {}", est.mean, est.std_error);
}

#[test]
fn brownian_histogram_matches_gaussian() {
    let (mu, s2, t, x) = (0.1, 0.25, 0.5, 0.3);
    let m = make_bm_auxiliary(&[mu], &[vec![s2]]).unwrap();
    let edges: Vec<f64> = (0..=40).map(|i| x + mu * t - 1.5 + 0.075 * i as f64).collect();
    let h = simulate_density_cell(&m, t, &[x], 0, &edges, &cfg(200_000, 50, 21)).unwrap();
    let sd = (s2 * t).sqrt();
    let max_se = h.std_error.iter().cloned().fold(0.0, f64::max);
    let mut sup: f64 = 0.0;
    for (k, w) in edges.windows(2).enumerate() {
        let exact = gauss_cdf_diff(w[0], w[1], x + mu * t, sd) / (w[1] - w[0]);
        sup = sup.max((h.density[k] - exact).abs());
    }
    assert!(sup < 4.0 * max_se, "sup {sup} vs 4 SE {}", 4.0 * max_se);
    let mass: f64 = h.density.iter().zip(edges.windows(2)).map(|(d, w)| d * (w[1] - w[0])).sum();
    assert!((mass - h.mass_inside).abs() < 1e-12);
    assert!(h.mass_inside <= 1.0);
    assert_eq!(h.centers().len(), 40);
}

#[test]
fn histogram_mass_outside_grid() {
    let m = make_bm_auxiliary(&[0.0], &[vec![1.0]]).unwrap();
    let h = simulate_density_cell(&m, 1.0, &[0.0], 0, &[-0.5, 0.0, 0.5], &cfg(20_000, 10, 1)).unwrap();
    let want = gauss_cdf_diff(-0.5, 0.5, 0.0, 1.0);
    assert!(h.mass_inside < 1.0);
    assert!((h.mass_inside - want).abs() < 0.02);
    let h = simulate_density_cell(&m, 1.0, &[0.0], 0, &[10.0, 11.0], &cfg(2000, 10, 1)).unwrap();
    assert_eq!(h.density, vec![0.0]);
    assert_eq!(h.std_error, vec![0.0]);
}

#[test]
fn ou_histogram_peaks_at_the_mean() {
    let m = make_ou(&MeanRevertingParams {
        kappa: 1.0,
        alpha: 0.0,
        sigma: 0.5,
    })
    .unwrap();
    let t = 5.0;
    let x0 = 2.0;
    let mean = x0 * (-t as f64).exp();
    let edges: Vec<f64> = (0..=31).map(|i| -1.55 + 0.1 * i as f64).collect();
    let h = simulate_density_cell(&m, t, &[x0], 0, &edges, &cfg(200_000, 200, 4)).unwrap();
    let argmax = (0..h.density.len())
        .max_by(|&a, &b| h.density[a].total_cmp(&h.density[b]))
        .unwrap();
    let nearest = edges.partition_point(|&e| e <= mean) - 1;
    assert_eq!(argmax, nearest);
}

#[test]
fn translation_shortcut_matches_direct_runs() {
    let m = make_gbm(0.03, 0.0, 0.2).unwrap();
    let f = call_payoff(100.0);
    let c = cfg(10_000, 100, 12);
    let offsets = [-0.1, 0.0, 0.05];
    let grid = simulate_moment_grid(&m, &f, 0.25, &[100f64.ln()], 0, &offsets, &c).unwrap();
    for (o, g) in offsets.iter().zip(&grid) {
        let direct = simulate_moment(&m, &f, 0.25, &[100f64.ln() + o], &c).unwrap();
        assert!((g.mean - direct.mean).abs() < 1e-9 * direct.mean.abs().max(1.0));
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let m = make_cir(&MeanRevertingParams {
        kappa: 2.0,
        alpha: 0.04,
        sigma: 0.3,
    })
    .unwrap();
    let c = cfg(100, 100, 0);
    assert!(matches!(simulate_moment(&m, &state(0), 1.0, &[-0.1], &c), Err(McError::InvalidStart(_))));
    assert!(matches!(simulate_moment(&m, &state(0), 1.0, &[f64::NAN], &c), Err(McError::InvalidStart(_))));
    assert!(matches!(simulate_moment(&m, &state(0), 1.0, &[0.1, 0.2], &c), Err(McError::InvalidStart(_))));
    assert!(matches!(simulate_moment(&m, &state(0), 0.0, &[0.1], &c), Err(McError::InvalidConfig(_))));
    assert!(matches!(
        simulate_moment(&m, &state(0), 1.0, &[0.1], &MCConfig { paths: 0, ..c }),
        Err(McError::InvalidConfig(_))
    ));
    assert!(matches!(
        simulate_moment(&m, &state(0), 1e6, &[0.1], &MCConfig { steps_per_year: 1_000_000, ..c }),
        Err(McError::StepOverflow(_))
    ));
    assert!(simulate_moment(&m, &state(1), 1.0, &[0.1], &c).is_err());
    assert!(simulate_density_cell(&m, 1.0, &[0.1], 0, &[0.0, 0.0], &c).is_err());
}
