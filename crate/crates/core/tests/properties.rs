mod common;

use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochmatch::chain::QueueWord;
use stochmatch::detailed::{
    is_admissible_b, is_admissible_f, project_to_queue, reverse_copy, BackwardChain, Trajectory,
};
use stochmatch::drift::random_state;
use stochmatch::measures::{extend_measure_half, reduce_measure};
use stochmatch::{Multigraph, ProbMeasure, ProductForm};

fn fixture_graph() -> impl Strategy<Value = Multigraph> {
    prop::sample::select(common::ALL.to_vec()).prop_map(|n| common::load(n).graph)
}

fn graph_and_arrivals() -> impl Strategy<Value = (Multigraph, Vec<usize>)> {
    fixture_graph().prop_flat_map(|g| {
        let n = g.len();
        (Just(g), prop::collection::vec(0..n, 0..200))
    })
}

proptest! {
    #[test]
    fn backward_chain_tracks_queue((g, arrivals) in graph_and_arrivals()) {
        let traj = Trajectory::fcfm(&g, arrivals.clone()).unwrap();
        let mut chain = BackwardChain::new(&g);
        for n in 0..=arrivals.len() {
            let b = chain.word();
            prop_assert_eq!(&b, &traj.backward_word(n));
            prop_assert!(is_admissible_b(&g, &b));
            prop_assert!(is_admissible_f(&g, &reverse_copy(&b)) || b.is_empty());
            prop_assert_eq!(reverse_copy(&reverse_copy(&b)), b.clone());
            let w = project_to_queue(&g, &b).unwrap();
            prop_assert_eq!(w.letters().to_vec(), traj.queue_word(n));
            if n < arrivals.len() {
                chain.step(arrivals[n]);
            }
        }
    }

    #[test]
    fn queue_word_text_round_trip(g in fixture_graph(), len in 0usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(w) = random_state(&g, len, &mut rng) {
            prop_assert_eq!(QueueWord::parse(&g, &w.display(&g)).unwrap(), w);
        }
    }

    #[test]
    fn extend_then_reduce_is_identity(
        g in fixture_graph(),
        raw in prop::collection::vec(1u32..50, 5),
    ) {
        let total: u32 = raw[..g.len()].iter().sum();
        let w: Vec<BigRational> = raw[..g.len()]
            .iter()
            .map(|&k| BigRational::new(k.into(), total.into()))
            .collect();
        let mu = ProbMeasure::from_rationals(&g, w).unwrap();
        let map = g.minimal_blowup().unwrap();
        let hat = extend_measure_half(&mu, &map).unwrap();
        let back = reduce_measure(&hat, &map).unwrap();
        prop_assert_eq!(back.exact_weights(), mu.exact_weights());
    }

    #[test]
    fn truncated_mass_is_monotone(name in prop::sample::select(vec!["square", "k3", "ex2", "ex3"])) {
        let fx = common::load(name);
        let pf = ProductForm::new(&fx.graph, &fx.mu).unwrap();
        let mut last = 0.0;
        for l in 0..6 {
            let m = pf.truncated_mass(l);
            let listed: f64 = pf.table(l).iter().map(|(_, p)| p).sum();
            prop_assert!((m - listed).abs() < 1e-12);
            prop_assert!(m >= last - 1e-15 && m <= 1.0 + 1e-12);
            last = m;
        }
    }
}
