//! Statistical checks of the pulse simulator against exact enumeration of
//! the noise model.

use sarg04::protocol::{run_simulation, sift, AnnouncementSet, Basis, Polarization, SimConfig};
use sarg04::ratemodel::{overall_gain, DetectorParams, SourceParams};

/// Exact conclusive and error probabilities for a pulse whose photon
/// reaches Bob, enumerated over sent state, flip, basis, Born outcome and
/// announcement.
fn enumerate_detected(e_det: f64) -> (f64, f64) {
    let mut conclusive = 0.0;
    let mut error = 0.0;
    for sent in Polarization::ALL {
        let announcements: Vec<_> = AnnouncementSet::ALL
            .into_iter()
            .filter(|s| s.members().contains(&sent))
            .collect();
        assert_eq!(announcements.len(), 2);
        for (arriving, p_flip) in [(sent, 1.0 - e_det), (sent.orthogonal(), e_det)] {
            for basis in [Basis::Z, Basis::X] {
                for outcome in basis.states() {
                    let p_outcome = arriving.overlap(outcome);
                    for &set in &announcements {
                        let w = 0.25 * p_flip * 0.5 * p_outcome * 0.5;
                        let s = sift(sent, set, basis, outcome).unwrap();
                        if s.conclusive {
                            conclusive += w;
                            if s.inferred != Some(sent) {
                                error += w;
                            }
                        }
                    }
                }
            }
        }
    }
    (conclusive, error)
}

/// Same, for a dark count: uniformly random outcome in Bob's basis.
fn enumerate_dark() -> (f64, f64) {
    let mut conclusive = 0.0;
    let mut error = 0.0;
    for sent in Polarization::ALL {
        for set in AnnouncementSet::containing(sent) {
            for basis in [Basis::Z, Basis::X] {
                for outcome in basis.states() {
                    let w = 0.25 * 0.5 * 0.5 * 0.5;
                    let s = sift(sent, set, basis, outcome).unwrap();
                    if s.conclusive {
                        conclusive += w;
                        error += w * (s.inferred != Some(sent)) as u8 as f64;
                    }
                }
            }
        }
    }
    (conclusive, error)
}

#[test]
fn flip_model_reproduces_closed_form_click_terms() {
    for e_det in [0.0, 0.033, 0.1, 0.25, 0.49] {
        let (c, e) = enumerate_detected(e_det);
        assert!((c - (0.25 + e_det / 2.0)).abs() < 1e-15, "e_det = {e_det}");
        assert!((e - e_det / 2.0).abs() < 1e-15);
    }
    let (c, e) = enumerate_dark();
    assert_eq!(c, 0.5);
    assert_eq!(e, 0.25);
}

fn within(k: u64, n: u64, p: f64, max_z: f64) -> bool {
    let se = (p * (1.0 - p) / n as f64).sqrt();
    ((k as f64 / n as f64) - p).abs() <= max_z * se
}

#[test]
fn misaligned_perfect_channel_matches_enumeration() {
    let e_det = 0.1;
    let det = DetectorParams {
        p_dark: 0.0,
        e_det,
        f_ec: 1.0,
    };
    let est = run_simulation(&SimConfig::new(30.0, 1.0, det, 1_000_000, 8)).unwrap();
    let t = est.tally;
    assert_eq!(t.detected, t.all.pulses);
    assert!(within(
        t.all.conclusive,
        t.all.pulses,
        0.25 + e_det / 2.0,
        5.0
    ));
    assert!(within(t.all.errors, t.all.pulses, e_det / 2.0, 5.0));
}

#[test]
fn dark_counts_alone_are_random() {
    let det = DetectorParams {
        p_dark: 0.02,
        e_det: 0.033,
        f_ec: 1.0,
    };
    let est = run_simulation(&SimConfig::new(0.5, 0.0, det, 2_000_000, 17)).unwrap();
    assert_eq!(est.tally.detected, 0);
    assert!(within(est.tally.all.conclusive, est.pulses, 0.01, 5.0));
    let e = est.e_mu.unwrap();
    assert!(within(e.successes, e.trials, 0.5, 5.0));
}

#[test]
fn ideal_channel_rates() {
    let det = DetectorParams {
        p_dark: 0.0,
        e_det: 0.0,
        f_ec: 1.0,
    };
    let est = run_simulation(&SimConfig::new(30.0, 1.0, det, 1_000_000, 99)).unwrap();
    assert!(within(est.tally.all.conclusive, est.pulses, 0.25, 5.0));
    assert_eq!(est.tally.all.errors, 0);
    assert_eq!(est.e_mu.unwrap().value, 0.0);
}

#[test]
fn paper_point_gain_converges() {
    let det = DetectorParams::default();
    let (mu, eta) = (0.5, 0.045);
    let est = run_simulation(&SimConfig::new(mu, eta, det, 10_000_000, 123)).unwrap();
    let q = overall_gain(SourceParams::new(mu).unwrap(), eta, &det);
    assert!(est.q_mu.z_score(q).abs() <= 4.0);
}

#[test]
fn batch_size_changes_streams_not_statistics() {
    let det = DetectorParams::default();
    let mut a = SimConfig::new(0.5, 0.3, det, 500_000, 1);
    let mut b = a;
    a.batch_size = 1 << 12;
    b.batch_size = 1 << 18;
    let ea = run_simulation(&a).unwrap();
    let eb = run_simulation(&b).unwrap();
    assert_ne!(ea.tally, eb.tally);
    let q = overall_gain(SourceParams::new(0.5).unwrap(), 0.3, &det);
    assert!(ea.q_mu.z_score(q).abs() < 5.0 && eb.q_mu.z_score(q).abs() < 5.0);
}
