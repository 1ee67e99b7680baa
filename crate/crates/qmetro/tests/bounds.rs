use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use qmetro::bayes_mc::{McConfig, MseCurve};
use qmetro::bounds::*;
use qmetro::fockspace::{CMatrix, DENSE_MAX_DIM};
use qmetro::measurements::{catalog_pom, LikelihoodModel, PomName};
use qmetro::networks::{qfim_sensor_symmetric, NetworkSpec};
use qmetro::probes::*;
use qmetro::{Error, C64};

/// 4ΔJz² from photon-number populations.
fn four_variance_jz(p: &ProbeState) -> f64 {
    let s = p.space();
    let (mut m1, mut m2) = (0.0, 0.0);
    for (i, w) in p.populations().iter().enumerate() {
        let jz = 0.5 * (s.occupation(i, 0) as f64 - s.occupation(i, 1) as f64);
        m1 += w * jz;
        m2 += w * jz * jz;
    }
    4.0 * (m2 - m1 * m1)
}

/// Tr(ρL²) with L from ρL + Lρ = −2i[G, ρ], solved by vectorisation and a
/// pseudo-inverse.
fn sld_fisher(rho: &CMatrix, g: &CMatrix) -> f64 {
    let n = rho.nrows();
    let id = CMatrix::identity(n, n);
    let lhs = id.kronecker(rho) + rho.transpose().kronecker(&id);
    let drho = (g * rho - rho * g) * C64::new(0.0, -1.0);
    let rhs = CMatrix::from_column_slice(n * n, 1, (drho * C64::new(2.0, 0.0)).as_slice());
    let vec_l = lhs.pseudo_inverse(1e-12).unwrap() * rhs;
    let l = CMatrix::from_column_slice(n, n, vec_l.as_slice());
    (rho * &l * &l).trace().re
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn pure_qfi_is_four_variance() {
    for kind in ProbeKind::OPTICAL {
        let p = make_probe(kind, 2.0).unwrap();
        let g = Generator::jz(p.space()).unwrap();
        let f = qfi(&p, &g).unwrap();
        assert!((f - four_variance_jz(&p)).abs() < 1e-9, "{}", kind.name());
        if p.space().dim() <= DENSE_MAX_DIM {
            let fm = qfi_mixed(&p, &g).unwrap();
            assert!((fm - f).abs() < 1e-7, "{}: {fm} vs {f}", kind.name());
        }
    }
    // NOON: 4ΔJz² = N².
    let p = make_probe(ProbeKind::Noon, 3.0).unwrap();
    assert!((qfi(&p, &Generator::jz(p.space()).unwrap()).unwrap() - 9.0).abs() < 1e-12);
}

#[test]
fn mixed_qfi_matches_sld_solve() {
    let input = lossy_optimal_input().unwrap();
    for eta in [0.6, 0.9] {
        let p = lossy_encode(&input, eta, 0.0).unwrap();
        let g = Generator::numbers(p.space(), &[0]).unwrap();
        let f = qfi_mixed(&p, &g).unwrap();
        let oracle = sld_fisher(&p.density(), &g.matrix(0).unwrap());
        assert!((f - oracle).abs() < 1e-8 * oracle.max(1.0), "η = {eta}: {f} vs {oracle}");
    }
}

#[test]
fn qubit_qfim_is_sensor_symmetric() {
    for gamma in [0.3, 1.0, 1.7] {
        let p = make_qubit_network(gamma, 2).unwrap();
        let g = Generator::qubit_network(p.space()).unwrap();
        let f = qfim(&p, &g).unwrap();
        let spec = NetworkSpec::new(2, 0.25, qubit_network_correlation(gamma, 2)).unwrap();
        let (expected, _) = qfim_sensor_symmetric(&spec);
        assert!((&f - &expected).abs().max() < 1e-12, "γ = {gamma}");
    }
}

#[test]
fn singular_fisher_is_reported() {
    // γ = 0 is the GHZ pair: only θ₁ + θ₂ is visible.
    let p = make_qubit_network(0.0, 2).unwrap();
    let g = Generator::qubit_network(p.space()).unwrap();
    let f = qfim(&p, &g).unwrap();
    let w = DMatrix::identity(2, 2) * 0.5;
    assert!(matches!(qcrb_curve_matrix(&f, &w, 3), Err(Error::SingularFisher)));
    assert!(matches!(qcrb_curve(0.0, 3), Err(Error::SingularFisher)));
    assert!(matches!(qcrb_curve(f64::INFINITY, 3), Err(Error::SingularFisher)));
}

#[test]
fn crb_curves() {
    let c = qcrb_curve(4.0, 3).unwrap();
    assert_eq!(c, vec![0.25, 0.125, 0.25 / 3.0]);
    let f = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
    let inv = f.clone().try_inverse().unwrap();
    let m = qcrb_curve_matrix(&f, &w, 2).unwrap();
    assert!((m[0] - (&w * inv).trace()).abs() < 1e-14);
    assert!((m[1] - m[0] / 2.0).abs() < 1e-15);
}

#[test]
fn saturation_requires_persistence() {
    let curve = |errors: Vec<f64>| MseCurve {
        mus: vec![1, 2, 3, 4, 5],
        stderr: vec![0.0; 5],
        errors,
        config: McConfig::default_1d(1, 5),
    };
    let crb = qcrb_curve(1.0, 5).unwrap();
    // Touches the bound at μ = 2, leaves it at μ = 3, settles from μ = 4.
    let mse = curve(vec![2.0, 0.5, 0.6, 0.25, 0.2]);
    assert_eq!(saturation_mu(&mse, &crb, 0.05), Some(4));
    let never = curve(vec![2.0, 1.0, 1.0, 1.0, 1.0]);
    assert_eq!(saturation_mu(&never, &crb, 0.05), None);
    let always = curve(crb.clone());
    assert_eq!(saturation_mu(&always, &crb, 0.0), Some(1));
}

#[test]
fn noon_classical_fisher_is_n_squared() {
    let p = make_probe(ProbeKind::Noon, 2.0).unwrap();
    let g = Generator::jz(p.space()).unwrap();
    let pom = catalog_pom(PomName::CountingEven, p.space()).unwrap();
    let model = LikelihoodModel::from_probe(&p, &g, &pom).unwrap();
    let pts: Vec<Vec<f64>> = [0.1, 0.5, 1.0].iter().map(|&t| vec![t]).collect();
    for f in classical_fisher(&model, &pts, 1e-4).unwrap() {
        assert!((f[(0, 0)] - 4.0).abs() < 1e-5, "{}", f[(0, 0)]);
    }
    assert!(classical_fisher(&model, &pts, 0.0).is_err());
}

#[test]
fn noon_qzzb_matches_independent_integral() {
    let p = make_probe(ProbeKind::Noon, 2.0).unwrap();
    let g = Generator::jz(p.space()).unwrap();
    let w = PI / 2.0;
    let profile = FidelityProfile::new(&p, &g, w, 4001).unwrap();
    let zz = qzzb(&profile, 4);
    for (i, z) in zz.iter().enumerate() {
        let mu = (i + 1) as i32;
        // |f(θ)|² = cos²θ for the two-photon NOON probe.
        let oracle = 0.5 * simpson(|t| t * (1.0 - t / w) * (1.0 - (1.0 - t.cos().powi(2 * mu)).sqrt()), 0.0, w, 4000);
        assert!((z - oracle).abs() < 1e-6 * oracle, "μ = {mu}: {z} vs {oracle}");
    }
    assert!(zz.windows(2).all(|p| p[1] < p[0]));
}

#[test]
fn noon_qwwb_matches_direct_supremum() {
    let p = make_probe(ProbeKind::Noon, 2.0).unwrap();
    let g = Generator::jz(p.space()).unwrap();
    let w = PI / 2.0;
    let profile = FidelityProfile::new(&p, &g, w, DEFAULT_PROFILE_POINTS).unwrap();
    let ww = qwwb(&profile, 3).unwrap();
    for (i, got) in ww.iter().enumerate() {
        let m = (i + 1) as i32;
        let best = profile
            .theta
            .iter()
            .filter_map(|&t| {
                let f2m = t.cos().powi(2 * m);
                let den = 2.0 * f2m - 2.0 * (1.0 - 2.0 * t / w) * (t.cos().powi(2) * (2.0 * t).cos()).powi(m);
                (den.abs() >= 1e-12).then(|| (t * (1.0 - t / w)).powi(2) * f2m * f2m / den)
            })
            .fold(f64::MIN, f64::max);
        assert!((got - best).abs() < 1e-12 * best.abs().max(1.0), "μ = {m}");
    }
}

#[test]
fn profile_rejects_bad_input() {
    let p = make_probe(ProbeKind::Noon, 2.0).unwrap();
    let g = Generator::jz(p.space()).unwrap();
    assert!(FidelityProfile::new(&p, &g, 0.0, 10).is_err());
    assert!(FidelityProfile::new(&p, &g, 1.0, 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn qfi_is_phase_invariant(theta in -PI..PI) {
        let p = make_probe(ProbeKind::Tsv, 2.0).unwrap();
        let g = Generator::jz(p.space()).unwrap();
        let moved = encode(&p, &g, &[theta]).unwrap();
        prop_assert!((qfi(&moved, &g).unwrap() - qfi(&p, &g).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn classical_fisher_never_exceeds_quantum(theta in 0.05f64..1.5, which in 0usize..2) {
        let p = make_probe(ProbeKind::Coherent, 1.0).unwrap();
        let g = Generator::jz(p.space()).unwrap();
        let name = [PomName::CountingEven, PomName::QuadraturePi8][which];
        let model = LikelihoodModel::from_probe(&p, &g, &catalog_pom(name, p.space()).unwrap()).unwrap();
        if let Ok(f) = classical_fisher(&model, &[vec![theta]], 1e-4) {
            prop_assert!(f[0][(0, 0)] <= qfi(&p, &g).unwrap() + 1e-6);
        }
    }
}
