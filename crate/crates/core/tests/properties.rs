mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn reachability_matches_bfs() {
    common::reachability_matches_bfs(200).unwrap();
}

#[test]
fn reachability_is_monotone_in_hops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=30 {
        let a = common::random_graph(&mut rng, n, 0.1, false);
        let rows = a.reachability_rows(0, 4);
        for w in rows.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(lo, hi)| lo <= hi));
        }
    }
}

#[test]
fn hop_weights_are_a_decreasing_distribution() {
    common::hop_weights_hold().unwrap();
}

#[test]
fn identity_perturbation_has_maximal_energy() {
    common::identity_energy_is_exact(100).unwrap();
}

#[test]
fn energies_stay_positive() {
    common::energies_stay_positive(10_000).unwrap();
}

#[test]
fn structure_patterns_respect_their_contracts() {
    common::patterns_hold(1000).unwrap();
}

#[test]
fn planted_surrogate_ranking_is_recovered() {
    common::planted_surrogate_is_recovered(20).unwrap();
}

#[test]
fn never_gated_slots_keep_zero_weight() {
    common::never_gated_slots_stay_zero(30).unwrap();
}
