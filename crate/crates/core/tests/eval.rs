use gesturehmm::baselines::MovementEvent;
use gesturehmm::eval::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn confusion_examples() {
    let y = [0, 0, 1, 2, 2, 2, 1];
    let cm = confusion(&y, &y, 0).unwrap();
    for (i, row) in cm.counts.iter().enumerate() {
        assert_eq!(row.iter().sum::<u64>(), y.iter().filter(|&&l| l == i).count() as u64);
        assert_eq!(row[i], row.iter().sum::<u64>());
    }
    // One-based labels [1,1,2,2] vs [1,2,2,2] are [0,0,1,1] vs [0,1,1,1] in memory.
    let cm = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 0).unwrap();
    assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 2]]);
    assert_eq!(cm.accuracy(), 0.75);
    assert_eq!(confusion(&[0], &[0], 4).unwrap().n_classes(), 4);
}

#[test]
fn precision_recall_hand_computed() {
    let cm = ConfusionMatrix {
        counts: vec![vec![1, 1], vec![0, 2]],
    };
    let s = precision_recall(&cm);
    assert_eq!(s.precision, vec![1.0, 2.0 / 3.0]);
    assert_eq!(s.recall, vec![0.5, 1.0]);
    assert!(s.precision_valid.iter().chain(&s.recall_valid).all(|&v| v));
}

#[test]
fn empty_class_sentinel() {
    let cm = confusion(&[0, 0, 2], &[0, 2, 2], 4).unwrap();
    let s = precision_recall(&cm);
    for c in [1, 3] {
        assert_eq!((s.precision[c], s.recall[c]), (0.0, 0.0));
        assert!(!s.precision_valid[c] && !s.recall_valid[c]);
    }
    assert!(s.precision.iter().chain(&s.recall).all(|v| v.is_finite()));
}

fn reference_events() -> Vec<MovementEvent> {
    vec![
        MovementEvent::new(30, 80, Some(2)),
        MovementEvent::new(150, 190, Some(1)),
        MovementEvent::new(260, 330, Some(3)),
    ]
}

fn paint(events: &[MovementEvent], len: usize, shift: usize) -> Vec<usize> {
    let mut l = vec![0; len];
    for ev in events {
        for t in ev.onset + shift..=ev.end + shift {
            l[t] = ev.movement_label.unwrap();
        }
    }
    l
}

#[test]
fn lags_identity_shift_and_dropout() {
    let evs = reference_events();
    for r in event_lags(&evs, &paint(&evs, 400, 0)) {
        assert!(r.matched);
        assert_eq!((r.onset_lag, r.end_lag), (Some(0), Some(0)));
    }
    for r in event_lags(&evs, &paint(&evs, 400, 3)) {
        assert_eq!((r.onset_lag, r.end_lag), (Some(3), Some(3)));
        assert_eq!(r.onset_lag_ms(), Some(30.0));
    }
    let mut pred = paint(&evs, 400, 0);
    pred[150..=190].fill(0);
    let recs = event_lags(&evs, &pred);
    assert!(!recs[1].matched && recs[1].onset_lag.is_none() && recs[1].end_lag.is_none());
    assert!(recs[0].matched && recs[2].matched);
}

#[test]
fn early_onset_within_search_window() {
    let ev = [MovementEvent::new(100, 150, Some(1))];
    let mut pred = vec![0; 200];
    pred[60..=150].fill(1);
    assert_eq!(event_lags(&ev, &pred)[0].onset_lag, Some(-40));
    let mut pred = vec![0; 200];
    pred[40..=49].fill(1);
    assert!(!event_lags(&ev, &pred)[0].matched);
}

#[test]
fn misclassified_block_durations() {
    let truth = vec![1; 30];
    let mut pred = truth.clone();
    for t in [5, 6, 7, 20] {
        pred[t] = 0;
    }
    assert_eq!(misclassified_blocks(&truth, &pred).unwrap(), vec![3, 1]);
    assert!(misclassified_blocks(&truth, &truth).unwrap().is_empty());
    // Adjacent errors with different wrong labels still form one block.
    assert_eq!(misclassified_blocks(&[0, 0, 0], &[1, 2, 0]).unwrap(), vec![2]);
}

fn subject(name: &str, answer: impl Fn(i32, u8) -> u8) -> Vec<SmtscResponse> {
    let mut rows = Vec::new();
    for rep in 1..=REPETITIONS {
        for lag in MIN_TRIAL_LAG..=MAX_TRIAL_LAG {
            rows.push(SmtscResponse {
                subject: name.into(),
                lag,
                response: answer(lag, rep),
                repetition: rep,
            });
        }
    }
    rows
}

#[test]
fn smtsc_uniform_block() {
    let mut rows = Vec::new();
    for s in 0..4 {
        rows.extend(subject(&format!("p{s}"), |lag, _| u8::from((0..=10).contains(&lag))));
    }
    let w = smtsc_window(&SmtscResponseTable::new(rows).unwrap(), DEFAULT_FRAME_MS).unwrap();
    // Mean of 0..=10 is 5, population variance (11^2 - 1) / 12 = 10.
    assert!((w.mu_frames - 5.0).abs() < 1e-12);
    assert!((w.sigma_frames - 3.1622776601683795).abs() < 1e-12);
    assert_eq!(w.n_positive, 4 * 3 * 11);
    assert!((w.window_ms[1] - (5.0 + 10f64.sqrt()) * 1000.0 / 60.0).abs() < 1e-9);
}

#[test]
fn smtsc_random_subject_excluded() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut rows = Vec::new();
    for s in 0..3 {
        rows.extend(subject(&format!("p{s}"), |lag, _| u8::from((-2..=12).contains(&lag))));
    }
    let noisy: Vec<u8> = (0..3 * 51).map(|_| rng.random_range(0..=1)).collect();
    rows.extend(subject("random", |lag, rep| noisy[(rep as usize - 1) * 51 + (lag - MIN_TRIAL_LAG) as usize]));
    let table = SmtscResponseTable::new(rows).unwrap();
    assert!(inconsistent_subjects(&table).contains("random"));
    let w = smtsc_window(&table, DEFAULT_FRAME_MS).unwrap();
    assert_eq!(w.excluded_subjects, vec!["random".to_string()]);
    assert!((w.mu_frames - 5.0).abs() < 1e-12);
}

#[test]
fn smtsc_csv_round_trip() {
    let table = SmtscResponseTable::new(subject("a", |lag, _| u8::from(lag > 3))).unwrap();
    let mut buf = Vec::new();
    table.to_csv(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("subject,lag,response,repetition"));
    assert_eq!(SmtscResponseTable::from_csv(buf.as_slice()).unwrap(), table);
    assert!(SmtscResponseTable::from_csv("subject,lag,response,repetition\na,3,2,1\n".as_bytes()).is_err());
}

fn rec(lag: Option<i64>) -> LagRecord {
    LagRecord {
        event: MovementEvent::new(0, 5, Some(1)),
        onset_lag: lag,
        end_lag: lag,
        matched: lag.is_some(),
    }
}

#[test]
fn latency_examples() {
    let zeros: Vec<_> = (0..4).map(|_| rec(Some(0))).collect();
    let b = latency_budget(&zeros, &default_profiles(), CANONICAL_WINDOW_MS[1], &default_curve_thresholds());
    assert!(b.profiles.iter().all(|p| p.delayed == 0));
    let android = b.profiles.iter().find(|p| p.name == "slow-android").unwrap();
    assert_eq!(android.acceptable_lag_ms, 88.0);
    assert_eq!(b.curve.first(), Some(&(-500.0, 4)));
    assert_eq!(b.curve.last(), Some(&(1000.0, 0)));
}

#[test]
fn variance_ratio_known_value() {
    // Var{1..5} = 2.5, var{2,4,6,8,10} = 10; F = 0.25 with (4, 4) dof.
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 4.0, 6.0, 8.0, 10.0];
    let t = variance_ratio_test(&a, &b).unwrap();
    assert_eq!((t.statistic, t.df1, t.df2), (0.25, 4, 4));
    // The F(4, 4) cdf is I_p(2, 2) = 3p^2 - 2p^3 with p = x / (1 + x).
    let p = 0.25 / 1.25;
    let cdf = 3.0 * p * p - 2.0 * p * p * p;
    assert!((t.p_value - 2.0 * cdf).abs() < 1e-12);
    assert!(variance_ratio_test(&[1.0], &b).is_err());
}

fn arb_label_pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..300).prop_flat_map(|n| {
        (
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(0usize..4, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn block_sum_equals_off_diagonal((truth, pred) in arb_label_pair()) {
        let cm = confusion(&truth, &pred, 0).unwrap();
        prop_assert_eq!(cm.total(), truth.len() as u64);
        let blocks = misclassified_blocks(&truth, &pred).unwrap();
        prop_assert_eq!(blocks.iter().sum::<usize>() as u64, cm.off_diagonal());
        prop_assert!(blocks.iter().all(|&b| b > 0));
    }

    #[test]
    fn relabelled_perfect_prediction_is_off_diagonal(truth in prop::collection::vec(0usize..4, 1..200), shift in 1usize..4) {
        let pred: Vec<usize> = truth.iter().map(|l| (l + shift) % 4).collect();
        let cm = confusion(&truth, &pred, 4).unwrap();
        let s = precision_recall(&cm);
        for c in 0..4 {
            prop_assert_eq!(cm.counts[c][c], 0);
            prop_assert_eq!(s.precision[c], 0.0);
            prop_assert_eq!(s.recall[c], 0.0);
        }
    }

    #[test]
    fn latency_monotone_in_hardware_lag(lags in prop::collection::vec(prop::option::weighted(0.9, -50i64..100), 0..40), h1 in 0.0f64..300.0, dh in 0.0f64..300.0) {
        let recs: Vec<_> = lags.into_iter().map(rec).collect();
        let profiles = [LatencyProfile::new("a", h1).unwrap(), LatencyProfile::new("b", h1 + dh).unwrap()];
        let b = latency_budget(&recs, &profiles, 208.0, &[]);
        prop_assert!(b.profiles[0].delayed <= b.profiles[1].delayed);
    }

    #[test]
    fn smtsc_invariant_to_row_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for s in 0..5 {
            let lo = rng.random_range(-6..4);
            let hi = lo + rng.random_range(4..20);
            let flip: Vec<bool> = (0..153).map(|_| rng.random_bool(0.05)).collect();
            rows.extend(subject(&format!("s{s}"), |lag, rep| {
                let base = u8::from((lo..=hi).contains(&lag));
                if flip[(rep as usize - 1) * 51 + (lag - MIN_TRIAL_LAG) as usize] { 1 - base } else { base }
            }));
        }
        let a = smtsc_window(&SmtscResponseTable::new(rows.clone()).unwrap(), DEFAULT_FRAME_MS).unwrap();
        rows.shuffle(&mut rng);
        for r in rows.iter_mut() {
            // Swap repetition numbers 1 and 3.
            r.repetition = 4 - r.repetition;
        }
        let b = smtsc_window(&SmtscResponseTable::new(rows).unwrap(), DEFAULT_FRAME_MS).unwrap();
        prop_assert_eq!(a, b);
    }
}
