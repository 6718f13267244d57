use genex::dataset::synthetic::{informative_classification, InformativeSpec};
use genex::experiment::{run_pipeline, Ablation, ExperimentConfig};
use genex::inference::threshold_for;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn threshold_admits_rounded_share(
        conf in prop::collection::vec(0.0f64..1.0, 1..200),
        quantile in 0.0f64..=1.0,
    ) {
        let tau = threshold_for(&conf, quantile).unwrap();
        let through = conf.iter().filter(|&&c| c >= tau).count();
        let target = (quantile * conf.len() as f64).round() as usize;
        // ties at the cut can only let more through
        prop_assert!(through >= target);
        let ties = conf.iter().filter(|&&c| c == tau).count();
        prop_assert!(through <= target + ties);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn plans_respect_budgets(
        seed in 0u64..1000,
        q_max in 0usize..5,
        lambda in prop::option::of(0usize..4),
        ablation in prop::sample::select(vec![Ablation::Full, Ablation::VEmpty, Ablation::VEqualsU]),
    ) {
        let data = informative_classification(&InformativeSpec {
            n: 6,
            num_classes: 2,
            num_informative: 2,
            size: 150,
            redundant_copy: false,
            seed,
        })
        .unwrap()
        .dataset;
        let cfg = ExperimentConfig {
            seed,
            q_max,
            lambda,
            ablation,
            buckets_log2: 1,
            obs_fraction: 0.3,
            pretrain_epochs: 3,
            final_epochs: 1,
            repetitions: 1,
            mc_samples: 2,
            jobs: 1,
            ..ExperimentConfig::default()
        };
        let r = run_pipeline(&cfg, &data).unwrap();
        let rep = &r.runs[0].reps[0];
        for p in rep.plan.buckets.values() {
            prop_assert!(p.u.len() <= q_max);
            prop_assert!(p.v.is_subset(&p.u));
            prop_assert!(p.v.len() <= rep.plan.lambda);
        }
        for o in &rep.outcomes {
            prop_assert!(o.oracle_queries <= o.u_size);
            prop_assert!(!o.used_generator || o.v_size > 0);
        }
    }
}
