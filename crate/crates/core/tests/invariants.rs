use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use streamq::diagnostics::effective_dimension;
use streamq::envs::{gen_lowrank, gen_tabular, occupancy, parse_instance, value_iteration, write_instance, GenOptions};
use streamq::policy::Policy;
use streamq::qfunc::TargetNetworks;
use streamq::s3q::{run_s3q, S3qOptions, Stop};
use streamq::s4q::{run_s4q, S4qConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_instances_round_trip_bit_exactly(s in 2usize..6, a in 2usize..4, h in 1usize..5, d in 2usize..5, seed in 0u64..500) {
        let mdp = gen_lowrank(s, a, h, d, seed, &GenOptions::default()).unwrap();
        let text = write_instance(&mdp);
        let back = parse_instance(&text).unwrap();
        prop_assert_eq!(write_instance(&back), text);
        prop_assert_eq!(back.instance_id(), mdp.instance_id());
        prop_assert!(mdp.check_structure().passes());
    }

    #[test]
    fn occupancy_is_a_distribution_per_level(s in 2usize..5, a in 2usize..4, h in 1usize..4, seed in 0u64..500) {
        let mdp = gen_tabular(s, a, h, seed, &GenOptions::default()).unwrap();
        for pi in [Policy::Uniform, Policy::Greedy(TargetNetworks::zeros(h, mdp.dim()))] {
            let occ = occupancy(&mdp, &pi).unwrap();
            for level in occ {
                prop_assert!(level.iter().all(|&p| p >= 0.0));
                prop_assert!((level.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn optimal_value_stays_in_unit_interval(s in 2usize..6, a in 2usize..4, h in 1usize..5, seed in 0u64..500) {
        let mdp = gen_tabular(s, a, h, seed, &GenOptions::default()).unwrap();
        let (_, v) = value_iteration(&mdp);
        let v0 = v.start_value(&mdp);
        prop_assert!((0.0..=1.0).contains(&v0));
    }

    #[test]
    fn effective_dimension_bracket_is_ordered(s in 2usize..5, h in 1usize..4, n in 1u64..100_000, lambda in 0.1f64..4.0, seed in 0u64..500) {
        let mdp = gen_tabular(s, 2, h, seed, &GenOptions::default()).unwrap();
        let e = effective_dimension(&mdp, &[Policy::Uniform], n, lambda, 0).unwrap();
        prop_assert!(e.lower >= 0.0);
        prop_assert!(e.lower <= e.upper);
    }

    #[test]
    fn committed_targets_never_leave_the_ball(k in 4u64..600, seed in 0u64..500) {
        let mdp = gen_lowrank(4, 2, 2, 3, seed, &GenOptions::default()).unwrap();
        let out = run_s3q(&mdp, &Policy::Uniform, None, &Stop::budget(k), 1.0, &mut ChaCha8Rng::seed_from_u64(seed), &S3qOptions::default()).unwrap();
        prop_assert!(out.stats.max_committed_norm <= 1.0);
        prop_assert!(out.qbest.max_theta_norm() <= 1.0);
        prop_assert_eq!(out.stats.trajectories, k);
    }

    #[test]
    fn s4q_rows_are_consistent(k in 1u64..400, seed in 0u64..500) {
        let mdp = gen_tabular(2, 2, 2, seed, &GenOptions { value_cap: 0.3, ..Default::default() }).unwrap();
        let rec = run_s4q(&mdp, k, &S4qConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(rec.rows.len() as u64, k);
        let mut cum = 0.0;
        for (i, r) in rec.rows.iter().enumerate() {
            prop_assert_eq!(r.episode, i as u64 + 1);
            prop_assert!(r.inst_regret >= -1e-12);
            cum += r.inst_regret;
            prop_assert!((r.cum_regret - cum).abs() <= 1e-9);
            if i > 0 {
                prop_assert!(r.mem_entries >= rec.rows[i - 1].mem_entries);
            }
        }
    }
}
