use proptest::prelude::*;
use socbal::graph::{
    enumerate_triad_initializations, enumerate_triads, initialization_index, triad_initialization,
    TRIAD_INITIALIZATIONS,
};
use socbal::{BalancedTriadClass, InteractionMatrix, Sign};

/// Raw ±1/0 values in `(0,1),(0,2),(1,0),(1,2),(2,0),(2,1)` order.
fn oracle_entries(code: usize) -> [i8; 6] {
    let mut out = [0i8; 6];
    let mut c = code;
    for e in &mut out {
        *e = (c % 3) as i8 - 1;
        c /= 3;
    }
    out
}

/// Brute-force classification that never touches the library predicates.
/// Returns (structural, clustering). Balance needs reciprocity, no neutral
/// link, and a dyad pattern with either zero or two negative dyads
/// (structural) or additionally three negative dyads (clustering).
fn oracle(v: [i8; 6]) -> (bool, bool) {
    let [s01, s02, s10, s12, s20, s21] = v;
    if v.contains(&0) || s01 != s10 || s02 != s20 || s12 != s21 {
        return (false, false);
    }
    let negative_dyads = [s01, s02, s12].iter().filter(|&&s| s < 0).count();
    let structural = negative_dyads % 2 == 0;
    (structural, structural || negative_dyads == 3)
}

fn matrix_of(v: [i8; 6]) -> InteractionMatrix {
    InteractionMatrix::from_entries(3, v.iter().map(|&x| Sign::try_from(x).unwrap()).collect()).unwrap()
}

#[test]
fn exhaustive_three_agent_census_matches_oracle() {
    let (mut structural, mut clustering) = (0, 0);
    for code in 0..729 {
        let v = oracle_entries(code);
        let m = matrix_of(v);
        let (s, c) = oracle(v);
        assert_eq!(m.is_structurally_balanced(), s, "{v:?}");
        assert_eq!(m.is_clustering_balanced(), c, "{v:?}");
        structural += usize::from(s);
        clustering += usize::from(c);
    }
    assert_eq!((structural, clustering), (4, 5));
}

#[test]
fn balanced_classes_cover_the_clustering_balanced_states() {
    let mut seen = Vec::new();
    for code in 0..729 {
        let m = matrix_of(oracle_entries(code));
        let class = m.triad(0, 1, 2).unwrap().balanced_class();
        assert_eq!(class.is_some(), m.is_clustering_balanced());
        if let Some(c) = class {
            assert_eq!(c.matrix(), m);
            assert_eq!(c.is_structural(), m.is_structurally_balanced());
            seen.push(c);
        }
    }
    seen.sort_by_key(|c| c.bin());
    assert_eq!(seen, BalancedTriadClass::ALL.to_vec());
}

#[test]
fn initialization_census() {
    let all = enumerate_triad_initializations();
    assert_eq!(all.len(), TRIAD_INITIALIZATIONS);
    for (i, m) in all.iter().enumerate() {
        assert!(!m.has_neutral());
        assert_eq!(initialization_index(m), Some(i));
        for j in 0..i {
            assert_ne!(&all[j], m);
        }
    }
    assert_eq!(triad_initialization(0).unwrap(), InteractionMatrix::uniform(3, Sign::Negative).unwrap());
    assert_eq!(triad_initialization(63).unwrap(), InteractionMatrix::uniform(3, Sign::Positive).unwrap());
    assert!(triad_initialization(64).is_none());
}

#[test]
fn triad_census() {
    let binomial = |n: usize| n * (n - 1) * (n - 2) / 6;
    assert_eq!(enumerate_triads(6).unwrap().len(), 20);
    assert_eq!(enumerate_triads(10).unwrap().len(), 120);
    for m in 3..12 {
        let t = enumerate_triads(m).unwrap();
        assert_eq!(t.len(), binomial(m));
        assert!(t.iter().all(|&[i, j, k]| i < j && j < k && k < m));
    }
    assert!(enumerate_triads(2).is_err());
}

fn signed() -> impl Strategy<Value = Sign> + Clone {
    prop_oneof![Just(Sign::Negative), Just(Sign::Positive)]
}

fn any_sign() -> impl Strategy<Value = Sign> + Clone {
    prop_oneof![Just(Sign::Negative), Just(Sign::Neutral), Just(Sign::Positive)]
}

fn matrix(sign: impl Strategy<Value = Sign> + Clone) -> impl Strategy<Value = InteractionMatrix> {
    (3usize..8).prop_flat_map(move |m| {
        proptest::collection::vec(sign.clone(), m * (m - 1))
            .prop_map(move |e| InteractionMatrix::from_entries(m, e).unwrap())
    })
}

/// Two-faction assignment: positive within, negative across.
fn factions(m: usize, side: &[bool]) -> InteractionMatrix {
    InteractionMatrix::symmetric_from_fn(m, |i, j| if side[i] == side[j] { Sign::Positive } else { Sign::Negative })
        .unwrap()
}

proptest! {
    #[test]
    fn structural_implies_clustering(m in matrix(any_sign())) {
        if m.is_structurally_balanced() {
            prop_assert!(m.is_clustering_balanced());
        }
        if m.is_clustering_balanced() {
            prop_assert!(m.is_symmetric() && !m.has_neutral());
        }
    }

    #[test]
    fn cycle_product_is_rotation_invariant(m in matrix(any_sign()), seed in 0usize..1000) {
        let n = m.m();
        let i = seed % n;
        let j = (i + 1 + seed / 7 % (n - 1)) % n;
        let k = (0..n).find(|&k| k != i && k != j).unwrap();
        let p = m.cycle_product(i, j, k).unwrap();
        prop_assert_eq!(p, m.cycle_product(j, k, i).unwrap());
        prop_assert_eq!(p, m.cycle_product(k, i, j).unwrap());
        prop_assert_eq!(p, m[(i, j)] * m[(j, k)] * m[(k, i)]);
    }

    #[test]
    fn edge_counts_are_consistent(m in matrix(any_sign())) {
        let n = m.m();
        let c = m.edge_and_cycle_counts();
        let neutral = m.iter().filter(|(_, _, s)| s.is_neutral()).count();
        prop_assert_eq!(c.positive_edges + c.negative_edges + neutral, n * (n - 1));
        prop_assert!(c.positive_cycles <= 2 * enumerate_triads(n).unwrap().len());
    }

    #[test]
    fn two_faction_states_are_structurally_balanced(side in proptest::collection::vec(any::<bool>(), 3..9)) {
        let m = factions(side.len(), &side);
        prop_assert!(m.is_structurally_balanced());
        let c = m.edge_and_cycle_counts();
        prop_assert_eq!(c.positive_cycles, 2 * enumerate_triads(side.len()).unwrap().len());
    }

    #[test]
    fn flipping_one_directed_link_breaks_balance(side in proptest::collection::vec(any::<bool>(), 3..9), pick in 0usize..100) {
        let mut m = factions(side.len(), &side);
        let (i, j, s) = m.iter().nth(pick % (side.len() * (side.len() - 1))).unwrap();
        m.set(i, j, -s).unwrap();
        prop_assert!(!m.is_symmetric());
        prop_assert!(!m.is_clustering_balanced());
    }

    #[test]
    fn matrix_serde_round_trip(m in matrix(any_sign())) {
        let json = serde_json::to_string(&m).unwrap();
        let back: InteractionMatrix = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn initial_states_reject_neutral(m in matrix(signed())) {
        prop_assert!(m.check_initial().is_ok());
        let mut z = m.clone();
        z.set(0, 1, Sign::Neutral).unwrap();
        prop_assert!(z.check_initial().is_err());
    }
}
