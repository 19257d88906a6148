use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socbal::analytics::{
    balance_frequency, is_stable_last_half, is_unchanged, stability_initially_balanced, stability_last_half,
    triad_class_histogram, SettingKey, StabilityCriterion, Strictness,
};
use socbal::dynamics::random_initialization;
use socbal::graph::{enumerate_triad_initializations, triad_initialization};
use socbal::{BalancedTriadClass, InteractionKind, InteractionMatrix, Sign, Trajectory, UpdateMechanism};

fn trajectory(matrices: Vec<InteractionMatrix>) -> Trajectory {
    Trajectory {
        matrices,
        decisions: Vec::new(),
        refusals: 0,
        aborted: None,
    }
}

fn flip(m: &InteractionMatrix, rng: &mut impl Rng) -> InteractionMatrix {
    let mut out = m.clone();
    let n = m.entries().len();
    let (i, j, s) = m.iter().nth(rng.random_range(0..n)).unwrap();
    out.set(i, j, -s).unwrap();
    out
}

/// A trajectory of `t` steps whose last change happens at step `change`
/// (`None` for never). Returns it with the planted labels.
fn planted(rng: &mut impl Rng, m: usize, t: usize, change: Option<usize>) -> Trajectory {
    let mut states = vec![random_initialization(m, rng).unwrap()];
    for step in 1..=t {
        let prev = states[step - 1].clone();
        let moves = match change {
            Some(c) if step == c => true,
            Some(c) if step < c => rng.random_bool(0.5),
            _ => false,
        };
        states.push(if moves { flip(&prev, rng) } else { prev });
    }
    trajectory(states)
}

#[test]
fn planted_change_points_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let t = 10;
        let change = if rng.random_bool(0.3) { None } else { Some(rng.random_range(1..=t)) };
        let m = rng.random_range(3..7);
        let traj = planted(&mut rng, m, t, change);
        // stable iff no change during the final five rounds, i.e. in steps 6..=10
        let expect_stable = change.is_none_or(|c| c <= 5);
        assert_eq!(is_stable_last_half(&traj, None), expect_stable, "change {change:?}");
        assert_eq!(is_unchanged(&traj, StabilityCriterion::AllIterationsIdentical), change.is_none());
    }
}

#[test]
fn change_at_step_seven_breaks_initial_stability() {
    let init = BalancedTriadClass::AllPlus.matrix();
    let mut states = vec![init.clone(); 11];
    let mut moved = init.clone();
    moved.set(1, 2, Sign::Negative).unwrap();
    states[7] = moved;
    let t = trajectory(states);
    let tally = stability_initially_balanced([&t], StabilityCriterion::AllIterationsIdentical);
    assert_eq!((tally.stable, tally.total), (0, 1));
    assert_eq!(stability_initially_balanced([&t], StabilityCriterion::FinalMatchesInitial).stable, 1);
}

#[test]
fn initially_balanced_denominator() {
    // ten simulations from each of the five balanced states, six settings
    let balanced: Vec<_> = enumerate_triad_initializations()
        .into_iter()
        .filter(InteractionMatrix::is_clustering_balanced)
        .collect();
    assert_eq!(balanced.len(), 5);
    let mut all = Vec::new();
    for _setting in 0..6 {
        for init in enumerate_triad_initializations() {
            for _ in 0..10 {
                all.push(trajectory(vec![init.clone(); 11]));
            }
        }
    }
    let tally = stability_initially_balanced(&all, StabilityCriterion::AllIterationsIdentical);
    assert_eq!(tally.total, 300);
    assert_eq!(tally.stable, 300);
    assert_eq!(stability_last_half(&all, None).total, 3840);
}

#[test]
fn stability_window_shrinks_with_shorter_horizons() {
    let p = InteractionMatrix::uniform(3, Sign::Positive).unwrap();
    let q = triad_initialization(5).unwrap();
    // T = 6: window is 3 rounds, states 3..=6
    let t = trajectory(vec![q.clone(), q.clone(), q, p.clone(), p.clone(), p.clone(), p]);
    assert!(is_stable_last_half(&t, None));
    assert!(!is_stable_last_half(&t, Some(4)));
}

fn key() -> SettingKey {
    SettingKey::new(InteractionKind::Relationship, UpdateMechanism::Homophily, 3, "synthetic")
}

proptest! {
    #[test]
    fn final_only_criterion_is_never_stricter(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts: Vec<_> = (0..n)
            .map(|_| {
                let init = BalancedTriadClass::ALL[rng.random_range(0..5)].matrix();
                let mut states = vec![init.clone()];
                for _ in 0..10 {
                    let prev = states.last().unwrap().clone();
                    let next = match rng.random_range(0..4) {
                        0 => flip(&prev, &mut rng),
                        1 => init.clone(),
                        _ => prev,
                    };
                    states.push(next);
                }
                trajectory(states)
            })
            .collect();
        let loose = stability_initially_balanced(&ts, StabilityCriterion::FinalMatchesInitial);
        let strict = stability_initially_balanced(&ts, StabilityCriterion::AllIterationsIdentical);
        prop_assert_eq!(loose.total, strict.total);
        prop_assert!(loose.stable >= strict.stable);
    }

    #[test]
    fn balance_report_invariants(codes in proptest::collection::vec(0usize..64, 1..60), refusing in proptest::collection::vec(any::<bool>(), 60)) {
        let ts: Vec<_> = codes
            .iter()
            .zip(&refusing)
            .map(|(&c, &r)| {
                let m = triad_initialization(c).unwrap();
                let mut t = trajectory(vec![m.clone(), m]);
                t.refusals = usize::from(r && c % 3 == 0);
                t
            })
            .collect();
        let groups = BTreeMap::from([(key(), ts.clone())]);
        let row = balance_frequency(&groups, 0.9).rows.remove(0);
        prop_assert!(row.balanced <= row.valid);
        prop_assert!(row.structural <= row.balanced);
        if let Some(f) = row.frequency {
            prop_assert!((0.0..=100.0).contains(&f));
        }
        let hist = triad_class_histogram(ts.iter().filter(|t| t.is_valid()).map(Trajectory::final_matrix));
        prop_assert_eq!(hist.total(), row.balanced);
        if row.strictness == Some(Strictness::S) {
            prop_assert_eq!(hist.count(BalancedTriadClass::AllMinus), 0);
        }
    }
}
