use std::f64::consts::PI;

use proptest::prelude::*;
use qmetro::fockspace::{expm_hermitian, CMatrix, CVector, ModeSpace};
use qmetro::probes::*;
use qmetro::{Error, C64};

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Mean of N1 + N2 straight from the populations.
fn photon_number(p: &ProbeState) -> f64 {
    let space = p.space();
    p.populations()
        .iter()
        .enumerate()
        .map(|(i, w)| w * space.total_quanta(i) as f64)
        .sum()
}

#[test]
fn optical_probes_carry_two_photons() {
    for kind in ProbeKind::OPTICAL {
        let p = make_probe(kind, 2.0).unwrap();
        assert!((p.nbar() - 2.0).abs() < 1e-4, "{}: {}", kind.name(), p.nbar());
        assert!((photon_number(&p) - p.nbar()).abs() < 1e-9);
        assert!(p.leakage() <= LEAKAGE_TOL);
        assert!(p.is_pure());
        assert!((p.purity() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn noon_vector() {
    let p = make_probe(ProbeKind::Noon, 2.0).unwrap();
    let s = p.space();
    let v = p.vector().unwrap();
    let h = 0.5f64.sqrt();
    assert!((v[s.index(&[2, 0])].re - h).abs() < 1e-15);
    assert!((v[s.index(&[0, 2])].re - h).abs() < 1e-15);
    assert!((v.norm() - 1.0).abs() < 1e-15);
    assert_eq!(p.leakage(), 0.0);
}

#[test]
fn mandel_q_and_j_of_simple_probes() {
    // Coherent: Poissonian arms, no correlation.
    let (q, j) = correlations(&make_probe(ProbeKind::Coherent, 2.0).unwrap()).unwrap();
    assert!(q.abs() < 1e-6 && j.abs() < 1e-6, "coherent {q} {j}");
    // NOON: n1 ∈ {0, 2}, perfectly anticorrelated arms.
    let (q, j) = correlations(&make_probe(ProbeKind::Noon, 2.0).unwrap()).unwrap();
    assert!(q.abs() < 1e-12 && (j + 1.0).abs() < 1e-12);
    // Squeezed vacuum with n̄ = 1 per arm: Var n = 2n̄(n̄+1), so Q = 2n̄+1 = 3.
    let (q, j) = correlations(&make_probe(ProbeKind::Tsv, 2.0).unwrap()).unwrap();
    assert!((q - 3.0).abs() < 1e-3 && j.abs() < 1e-6, "tsv {q} {j}");
}

#[test]
fn refined_twin_cat_hits_its_targets() {
    let (r, a) = refine_twin_cat(TSC_INTERMEDIATE, 2.0, TSC_INTERMEDIATE_Q).unwrap();
    let p = make_twin_squeezed_cat(r, a, 71).unwrap();
    let (q, _) = correlations(&p).unwrap();
    assert!((photon_number(&p) - 2.0).abs() < 1e-6, "n̄ = {}", photon_number(&p));
    assert!((q - TSC_INTERMEDIATE_Q).abs() < 1e-3, "Q = {q}");
    // The published starting point is already close.
    assert!((r - TSC_INTERMEDIATE.0).abs() < 0.05 && (a - TSC_INTERMEDIATE.1).abs() < 0.05);
}

#[test]
fn invalid_probe_requests() {
    assert!(matches!(
        make_probe_with_cutoff(ProbeKind::Tsv, 2.0, 11),
        Err(Error::CutoffTooSmall { .. })
    ));
    assert!(matches!(make_probe_with_cutoff(ProbeKind::Noon, 2.0, 2), Err(Error::CutoffTooSmall { .. })));
    assert!(matches!(make_probe(ProbeKind::Noon, 2.5), Err(Error::InvalidInput(_))));
    assert!(matches!(make_probe(ProbeKind::Tsv, 3.0), Err(Error::InvalidInput(_))));
    assert!(matches!(make_probe(ProbeKind::Coherent, -1.0), Err(Error::InvalidInput(_))));
    assert!(matches!(make_probe(ProbeKind::QubitGamma, 2.0), Err(Error::InvalidInput(_))));
    assert!(matches!(ProbeKind::from_name("cat"), Err(Error::InvalidInput(_))));
    assert!(matches!(make_qubit_network(0.5, 1), Err(Error::InvalidInput(_))));
}

#[test]
fn names_round_trip() {
    for kind in ProbeKind::OPTICAL {
        assert_eq!(ProbeKind::from_name(kind.name()).unwrap(), kind);
    }
}

#[test]
fn lossless_channel_is_plain_phase_encoding() {
    let p = lossy_optimal_input().unwrap();
    let gen = Generator::numbers(p.space(), &[0]).unwrap();
    let a = lossy_encode(&p, 1.0, 0.4).unwrap().density();
    let b = encode(&p, &gen, &[0.4]).unwrap().density();
    assert!(max_abs(&(a - b)) < 1e-14);
}

#[test]
fn loss_removes_photons_in_proportion() {
    let p = lossy_optimal_input().unwrap();
    let s = p.space();
    let n1: Vec<f64> = (0..s.dim()).map(|i| s.occupation(i, 0) as f64).collect();
    let before = p.expect_diagonal(&n1);
    for eta in [0.3, 0.75, 0.9] {
        let out = lossy_encode(&p, eta, 0.0).unwrap();
        assert!((out.density().trace().re - 1.0).abs() < 1e-12);
        assert!((out.expect_diagonal(&n1) - eta * before).abs() < 1e-12);
    }
    assert!(matches!(lossy_encode(&p, 0.0, 0.0), Err(Error::InvalidInput(_))));
}

#[test]
fn encode_matches_dense_exponential() {
    let p = make_probe(ProbeKind::Coherent, 1.0).unwrap();
    let gen = Generator::jz(p.space()).unwrap();
    let theta = 0.9;
    let u = expm_hermitian(&gen.matrix(0).unwrap(), theta).unwrap();
    let expected = &u * p.vector().unwrap();
    let got = encode(&p, &gen, &[theta]).unwrap();
    assert!((got.vector().unwrap() - expected).norm() < 1e-12);
    assert_eq!(gen.max_commutator(), 0.0);
}

#[test]
fn noon_encoding_has_two_phase_groups() {
    let p = make_probe(ProbeKind::Noon, 4.0).unwrap();
    let enc = Encoding::new(&p, &Generator::jz(p.space()).unwrap()).unwrap();
    assert_eq!(enc.populated_groups(), 2);
    assert!(enc.is_pure());
    let v = enc.branch_state(0, &[PI / 4.0]);
    // e^{−iπ/4·(±2)} on the two arms.
    let s = p.space();
    let ratio = v[s.index(&[4, 0])] / v[s.index(&[0, 4])];
    assert!((ratio - C64::new(-1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn imaging_probes_spend_the_budget() {
    let g = make_imaging_probe(ImagingKind::GlobalGnoon { alpha: 2f64.sqrt() }, 3, 2.0).unwrap();
    assert!((photon_number(&g) - 2.0).abs() < 1e-12);
    for n in 1..4 {
        let l = make_imaging_probe(ImagingKind::LocalProduct { n }, 2, 2.0).unwrap();
        assert!((photon_number(&l) - 2.0).abs() < 1e-12, "N = {n}");
    }
    assert!(matches!(
        make_imaging_probe(ImagingKind::LocalProduct { n: 1 }, 2, 10.0),
        Err(Error::InvalidInput(_))
    ));
    let gen = Generator::imaging(g.space()).unwrap();
    assert_eq!(gen.len(), 3);
}

#[test]
fn mixed_state_purity() {
    let space = ModeSpace::qubits(1).unwrap();
    let rho = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.5, 0.0)]));
    let p = ProbeState::from_density(rho, space, ProbeKind::Custom).unwrap();
    assert!(!p.is_pure());
    assert!((p.purity() - 0.5).abs() < 1e-15);
}

proptest! {
    #[test]
    fn qubit_network_correlation_matches_state(gamma in 0.0f64..3.0, d in 2usize..6) {
        let p = make_qubit_network(gamma, d).unwrap();
        let s = p.space();
        let pops = p.populations();
        prop_assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let z = |i: usize, k: usize| 0.5 - s.occupation(i, k) as f64;
        let (mut z1, mut z11, mut z12) = (0.0, 0.0, 0.0);
        for (i, w) in pops.iter().enumerate() {
            z1 += w * z(i, 0);
            z11 += w * z(i, 0) * z(i, 0);
            z12 += w * z(i, 0) * z(i, 1);
        }
        let j = (z12 - z1 * z1) / (z11 - z1 * z1);
        prop_assert!((j - qubit_network_correlation(gamma, d)).abs() < 1e-12);
    }

    #[test]
    fn qubit_correlation_is_realisable(gamma in 0.0f64..100.0, d in 2usize..8) {
        let j = qubit_network_correlation(gamma, d);
        prop_assert!(j <= 1.0 + 1e-15);
        prop_assert!(j >= -1.0 / (d as f64 - 1.0) - 1e-12);
    }

    #[test]
    fn encoding_preserves_norm(theta in -PI..PI, n in 1u32..6) {
        let p = make_probe(ProbeKind::Noon, n as f64).unwrap();
        let gen = Generator::jz(p.space()).unwrap();
        let e = encode(&p, &gen, &[theta]).unwrap();
        prop_assert!((e.vector().unwrap().norm() - 1.0).abs() < 1e-12);
        prop_assert!((e.nbar() - n as f64).abs() < 1e-12);
    }
}
