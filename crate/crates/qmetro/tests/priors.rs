use std::f64::consts::PI;

use proptest::prelude::*;
use qmetro::measurements::{catalog_pom, PomName};
use qmetro::priors::*;
use qmetro::probes::*;
use qmetro::Error;

/// Midpoint rule over the prior box, for moment oracles.
fn midpoint_mean(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| f(lo + (i as f64 + 0.5) * h)).sum::<f64>() / n as f64
}

fn trapz(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}

#[test]
fn flat_prior_moments() {
    let p = FlatPrior::new(vec![0.3, -1.0], vec![PI / 2.0, 2.0]).unwrap();
    for k in 0..2 {
        let (lo, hi) = (p.lower(k), p.upper(k));
        let m = p.means()[k];
        let var = midpoint_mean(lo, hi, |t| (t - m).powi(2));
        let m2 = midpoint_mean(lo, hi, |t| t * t);
        assert!((p.variance(k) - var).abs() < 1e-8);
        assert!((p.second_moment(k) - m2).abs() < 1e-8);
        assert!((hi - lo - p.widths()[k]).abs() < 1e-15);
    }
    assert!((p.density() - 1.0 / (PI / 2.0 * 2.0)).abs() < 1e-15);
    assert!(p.contains(&[0.3, -1.0]) && !p.contains(&[2.0, -1.0]));
    assert_eq!(p.grid_points(), &[DEFAULT_GRID_2D, DEFAULT_GRID_2D]);
    assert_eq!(FlatPrior::single(0.0, 1.0).unwrap().grid_points(), &[DEFAULT_GRID_1D]);
}

#[test]
fn invalid_priors_are_rejected() {
    assert!(matches!(FlatPrior::single(0.0, 0.0), Err(Error::InvalidInput(_))));
    assert!(matches!(FlatPrior::single(0.0, -1.0), Err(Error::InvalidInput(_))));
    assert!(FlatPrior::new(vec![0.0], vec![1.0, 2.0]).is_err());
}

#[test]
fn grid_spans_the_box() {
    let p = FlatPrior::with_grid(vec![1.0], vec![2.0], vec![5]).unwrap();
    assert_eq!(p.grid(0), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
}

#[test]
fn intrinsic_width_and_repetitions() {
    assert!((noon_intrinsic_width(2).unwrap() - PI / 2.0).abs() < 1e-15);
    assert!((noon_intrinsic_width(3).unwrap() - PI / 6.0).abs() < 1e-15);
    assert!(noon_intrinsic_width(0).is_err());
    // Prior π/2 with F_q = 4: variance π²/48, so μ ≥ 12/π².
    let v = FlatPrior::single(0.0, PI / 2.0).unwrap().variance(0);
    assert!((worthwhile_repetitions(v, 4.0).unwrap() - 12.0 / (PI * PI)).abs() < 1e-12);
    assert!(worthwhile_repetitions(0.0, 4.0).is_err());
    assert!(worthwhile_repetitions(1.0, 0.0).is_err());
}

fn noon_scan(seed: u64, mu: &[usize]) -> PriorScan {
    let probe = make_probe(ProbeKind::Noon, 2.0).unwrap();
    let gen = Generator::jz(probe.space()).unwrap();
    let pom = catalog_pom(PomName::CountingEven, probe.space()).unwrap();
    let prior = FlatPrior::with_grid(vec![0.0], vec![PI / 2.0], vec![401]).unwrap();
    prior_scan(&probe, &gen, &pom, &prior, &[0.2], mu, seed).unwrap()
}

#[test]
fn posterior_snapshots_are_normalised() {
    let scan = noon_scan(7, &[0, 1, 10, 50]);
    assert_eq!(scan.snapshots.len(), 4);
    for (mu, post) in &scan.snapshots {
        assert!((trapz(&scan.axes[0], post) - 1.0).abs() < 1e-6, "μ = {mu}");
        assert!(post.iter().all(|&p| p >= 0.0));
    }
    // No data yet: the posterior is the prior.
    let (mu0, p0) = &scan.snapshots[0];
    assert_eq!(*mu0, 0);
    assert!(p0.iter().all(|&p| (p - 2.0 / PI).abs() < 1e-12));
}

#[test]
fn scans_are_deterministic_per_seed() {
    let a = noon_scan(11, &[5, 20]);
    let b = noon_scan(11, &[5, 20]);
    let c = noon_scan(12, &[5, 20]);
    assert_eq!(a.snapshots, b.snapshots);
    assert_ne!(a.snapshots, c.snapshots);
}

#[test]
fn coherent_posterior_concentrates_at_truth() {
    let probe = make_probe(ProbeKind::Coherent, 2.0).unwrap();
    let gen = Generator::jz(probe.space()).unwrap();
    let pom = catalog_pom(PomName::UndoCountCoherent, probe.space()).unwrap();
    let prior = FlatPrior::with_grid(vec![0.0], vec![1.0], vec![401]).unwrap();
    let truth = 0.2;
    let scan = prior_scan(&probe, &gen, &pom, &prior, &[truth], &[300], 3).unwrap();
    let post = &scan.snapshots[0].1;
    let (imax, _) = post.iter().enumerate().fold((0, 0.0), |b, (i, &p)| if p > b.1 { (i, p) } else { b });
    // Fisher information 2 per shot: σ ≈ 1/√600 ≈ 0.04.
    assert!((scan.axes[0][imax] - truth).abs() < 0.15, "argmax {}", scan.axes[0][imax]);
    assert_eq!(scan.maxima_counts(), vec![(300, 1)]);
}

#[test]
fn two_parameter_scan() {
    let probe = make_qubit_network(1.0, 2).unwrap();
    let gen = Generator::qubit_network(probe.space()).unwrap();
    let pom = catalog_pom(PomName::QubitLocal, probe.space()).unwrap();
    let prior = FlatPrior::with_grid(vec![PI / 4.0; 2], vec![PI / 4.0; 2], vec![41, 41]).unwrap();
    let scan = prior_scan(&probe, &gen, &pom, &prior, &[0.8, 0.7], &[0, 20], 5).unwrap();
    assert_eq!(scan.axes.len(), 2);
    for (_, post) in &scan.snapshots {
        let rows: Vec<f64> = post.chunks(41).map(|r| trapz(&scan.axes[1], r)).collect();
        assert!((trapz(&scan.axes[0], &rows) - 1.0).abs() < 1e-6);
    }
    assert!(matches!(
        prior_scan(&probe, &gen, &pom, &prior, &[3.0, 0.7], &[1], 5),
        Err(Error::InvalidInput(_))
    ));
}

proptest! {
    #[test]
    fn sine_error_matches_integral(w in 0.01f64..6.0) {
        let oracle = midpoint_mean(-w / 2.0, w / 2.0, |t| 4.0 * (t / 2.0).sin().powi(2));
        prop_assert!((prior_sine_error(w) - oracle).abs() < 1e-8);
    }

    #[test]
    fn sine_error_tracks_square_error_for_narrow_priors(w in 0.01f64..2.0) {
        // 1 − cos x ≥ x²/2 − x⁴/24 gives a relative gap of at most W²/80.
        let square = w * w / 12.0;
        let sine = prior_sine_error(w);
        prop_assert!(sine <= square);
        prop_assert!((square - sine) / square <= w * w / 80.0 + 1e-9);
    }
}
