mod common;

use common::{check_against_oracle, random_table};
use ffc::model::train_stream;
use ffc::predictor::{formation_probability, predict_from, predict_step};
use ffc::simulator::{builtin_plays, random_formation, seeded_rng, Simulator};
use ffc::{Formation, GridSpec, TransitionTable};
use proptest::prelude::*;

#[test]
fn queries_match_brute_force_on_small_grids() {
    for (gx, gy) in [(1, 1), (2, 1), (1, 2), (2, 2), (3, 2)] {
        let spec = GridSpec::default().with_cells(gx, gy).unwrap();
        for seed in 0..20 {
            let table = random_table(spec, seed);
            if let Err(e) = check_against_oracle(&table) {
                panic!("grid {gx}x{gy} seed {seed}: {e}");
            }
        }
    }
}

fn simulated_packages(seed: u64, draws: usize) -> Vec<ffc::VisionPackage> {
    let mut sim = Simulator::new(GridSpec::default(), builtin_plays(), seed, 0.0).unwrap();
    (0..draws).flat_map(|_| sim.draw_next().packages).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn row_sums_count_outgoing_transitions(seed in any::<u64>()) {
        let packages = simulated_packages(seed, 30);
        let spec = GridSpec::default();
        let table = train_stream(spec, &packages).unwrap();
        let mut expected = vec![0u64; spec.state_count()];
        let mut prev: Option<Formation> = None;
        for pkg in &packages {
            let f = Formation::from_package(&spec, pkg, prev.as_ref()).unwrap();
            if let Some(p) = &prev {
                for s in p.states() {
                    expected[spec.encode(s).unwrap().value()] += 1;
                }
            }
            prev = Some(f);
        }
        for (i, want) in expected.iter().enumerate() {
            prop_assert_eq!(table.row_total(spec.index(i).unwrap()), *want);
        }
        prop_assert_eq!(table.total_recorded(), 6 * (packages.len() as u64 - 1));
    }

    #[test]
    fn merging_sessions_equals_summing_tables(seed in any::<u64>(), split in 1usize..40) {
        let packages = simulated_packages(seed, 20);
        let split = split.min(packages.len() - 1);
        let spec = GridSpec::default();
        let a = train_stream(spec, &packages[..split]).unwrap();
        let b = train_stream(spec, &packages[split..]).unwrap();
        let mut merged = TransitionTable::new(spec).unwrap();
        merged.merge(&a).unwrap();
        merged.merge(&b).unwrap();
        let mut summed = std::collections::BTreeMap::new();
        for (f, t, c) in a.entries().chain(b.entries()) {
            *summed.entry((f, t)).or_insert(0) += c;
        }
        let merged_entries: Vec<_> = merged.entries().map(|(f, t, c)| ((f, t), c)).collect();
        prop_assert_eq!(merged_entries, summed.into_iter().collect::<Vec<_>>());
        prop_assert_eq!(merged.total_recorded(), a.total_recorded() + b.total_recorded());
    }

    #[test]
    fn prediction_invariants(table_seed in any::<u64>(), trial_seed in any::<u64>(), base in 0.0f64..=1.0) {
        let spec = GridSpec::default();
        let table = if table_seed % 2 == 0 {
            random_table(spec, table_seed)
        } else {
            train_stream(spec, &simulated_packages(table_seed, 60)).unwrap()
        };
        let mut rng = seeded_rng(trial_seed);
        let current = Formation::from_positions(&spec, &random_formation(&spec, &mut rng), None);
        let pred = predict_step(&table, &current, base).unwrap();

        prop_assert!(pred.formation.states().iter().all(|s| s.centroid == pred.formation.centroid()));
        prop_assert_eq!(pred.p_formation, formation_probability(pred.p_centroid, &pred.per_player_p));
        prop_assert_eq!(pred.confidence, base * pred.p_formation);
        prop_assert!((0.0..=1.0).contains(&pred.p_formation));
        prop_assert_eq!(pred.has_unseen(), pred.p_formation == 0.0);
        for (i, p) in pred.per_player_p.iter().enumerate() {
            let unseen = pred.unseen_ids.contains(&(i as u8 + 1));
            let ok = if unseen { *p == 0.0 } else { *p > 0.0 && *p <= 1.0 };
            prop_assert!(ok, "robot {} p={}", i + 1, p);
        }
        // Same inputs, same bytes.
        let again = predict_step(&table, &current, base).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&pred).unwrap(),
            serde_json::to_string(&again).unwrap()
        );

        let chain = predict_from(&table, &current, 4).unwrap();
        let mut product = 1.0;
        for w in chain.windows(2) {
            prop_assert!(w[1].confidence <= w[0].confidence);
        }
        for p in &chain {
            product *= p.p_formation;
            prop_assert_eq!(p.confidence, product);
        }
    }
}
