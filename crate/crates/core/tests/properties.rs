use std::f64::consts::PI;

use hltomo::detection::{hl_distribution, joint_statistics, DetectorEfficiency, LoField};
use hltomo::fock::{build_state, fidelity, mean_photon_number, FockMatrix, StatePrep};
use hltomo::ingestion::{fold_phase, randomize_phases, RawPulseRecord};
use hltomo::oscillator::oscillator_wavefunction;
use hltomo::pattern::PatternFunctions;
use hltomo::sampling::sample_trace;
use hltomo::tomography::{reconstruct, ReconstructOptions};
use num_complex::Complex64;
use proptest::prelude::*;

fn diag_state() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 4).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn joint_statistics_normalized(
        re in -2.0f64..2.0, im in -2.0f64..2.0, beta in 0.5f64..6.0,
        phi in 0.0f64..6.3, eta_c in 0.1f64..=1.0, eta_d in 0.1f64..=1.0,
    ) {
        let lo = LoField::new(beta, phi).unwrap();
        let eff = DetectorEfficiency::new(eta_c, eta_d).unwrap();
        let q = joint_statistics(&StatePrep::Coherent(Complex64::new(re, im)), &lo, &eff, None).unwrap();
        prop_assert!(q.tail_mass() < 1e-9);
        prop_assert!((q.total() + q.tail_mass() - 1.0).abs() < 1e-10);
        prop_assert!(q.table().iter().all(|&p| p >= 0.0));
        let p = hl_distribution(&q);
        prop_assert!((p.total() - q.total()).abs() < 1e-10);
    }

    #[test]
    fn single_photon_bracket_nonnegative(beta in 0.3f64..8.0, eta in 0.05f64..=1.0) {
        let eff = DetectorEfficiency::equal(eta).unwrap();
        let q = joint_statistics(&StatePrep::Fock(1), &LoField::new(beta, 0.0).unwrap(), &eff, None).unwrap();
        prop_assert!(q.table().iter().all(|&p| p >= 0.0));
        prop_assert!((q.total() + q.tail_mass() - 1.0).abs() < 1e-10);
        let p = hl_distribution(&q);
        for d in 0..=p.max_delta() {
            prop_assert!((p.pmf(d) - p.pmf(-d)).abs() < 1e-14);
        }
    }

    #[test]
    fn coherent_phase_covariance(re in -1.5f64..1.5, im in -1.5f64..1.5, phi in -4.0f64..4.0) {
        let a = Complex64::new(re, im);
        let eff = DetectorEfficiency::IDEAL;
        let q1 = joint_statistics(&StatePrep::Coherent(a), &LoField::new(3.0, phi).unwrap(), &eff, Some(80)).unwrap();
        let rotated = a * Complex64::from_polar(1.0, -phi);
        let q2 = joint_statistics(&StatePrep::Coherent(rotated), &LoField::new(3.0, 0.0).unwrap(), &eff, Some(80)).unwrap();
        prop_assert_eq!(q1.n_max(), q2.n_max());
        for (x, y) in q1.table().iter().zip(q2.table()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn wavefunction_parity(n in 0usize..30, x in -8.0f64..8.0) {
        let a = oscillator_wavefunction(n, x, 40).unwrap();
        let b = oscillator_wavefunction(n, -x, 40).unwrap();
        let s = if n % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((a - s * b).abs() <= 1e-15 * (1.0 + a.abs()));
    }

    #[test]
    fn pattern_symmetry_and_envelope(n in 0usize..=10, m in 0usize..=10, x in -8.0f64..8.0) {
        let pf = PatternFunctions::new(10).unwrap();
        let a = pf.value(n, m, x).unwrap();
        prop_assert_eq!(a, pf.value(m, n, x).unwrap());
        prop_assert!(a.abs() <= hltomo::pattern::envelope(10));
    }

    #[test]
    fn fidelity_symmetric(p in diag_state(), q in diag_state()) {
        let (a, b) = (FockMatrix::from_diagonal(&p), FockMatrix::from_diagonal(&q));
        let f1 = fidelity(&a, &b).unwrap();
        let f2 = fidelity(&b, &a).unwrap();
        prop_assert!((f1 - f2).abs() < 1e-10);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-10);
        prop_assert!(f1 <= 1.0 + 1e-9);
        if p.iter().zip(&q).any(|(x, y)| (x - y).abs() > 1e-3) {
            prop_assert!(f1 < 1.0 - 1e-9);
        }
    }

    #[test]
    fn coherent_state_is_physical(re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let rho = build_state(&StatePrep::Coherent(Complex64::new(re, im)), 40).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-10);
        prop_assert!(rho.eigenvalues().iter().all(|&l| l >= -1e-12));
        prop_assert!(rho.hermiticity_defect() <= 1e-12);
    }

    #[test]
    fn phav_mean_photon_number(r in 0.0f64..2.5) {
        let rho = build_state(&StatePrep::Phav(r), 40).unwrap();
        prop_assert!((mean_photon_number(&rho) - r * r).abs() < 1e-9);
    }

    #[test]
    fn fold_range(phi in -50.0f64..50.0) {
        let f = fold_phase(phi);
        prop_assert!((0.0..=PI).contains(&f));
        prop_assert_eq!(fold_phase(f), f);
    }

    #[test]
    fn random_phases_keep_differences(counts in prop::collection::vec((0u64..40, 0u64..40), 1..200), s1: u64, s2: u64) {
        let recs: Vec<RawPulseRecord> = counts
            .iter()
            .enumerate()
            .map(|(i, &(c, d))| RawPulseRecord { pulse: i as u64, piezo_step: 0, n_c: c, n_d: d })
            .collect();
        let a = randomize_phases(&recs, 2.0, s1).unwrap();
        let b = randomize_phases(&recs, 2.0, s2).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.delta == y.delta && x.delta_phi == y.delta_phi));
        prop_assert!(a.iter().all(|x| (0.0..PI).contains(&x.phase)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reconstruction_is_hermitian(seed: u64) {
        let phases: Vec<f64> = (0..20_000).map(|i| (i as f64 + 0.5) * PI / 20_000.0).collect();
        let s = sample_trace(&StatePrep::Coherent(Complex64::new(0.8, 0.3)), 3.0, &phases, &DetectorEfficiency::IDEAL, seed).unwrap();
        let r = reconstruct(&s, &ReconstructOptions { dim: 6, ..Default::default() }).unwrap();
        prop_assert_eq!(r.rho.hermiticity_defect(), 0.0);
        prop_assert!(r.rho_err.iter().all(|&e| e >= 0.0));
        prop_assert!((0..6).all(|n| r.rho.get(n, n).im.abs() <= 1e-12));
    }
}
