//! Protocol properties over generated streams and configurations.

mod common;

use proptest::prelude::*;
use radar_tta::adaptation::{adapt_stream, entropy_buckets, frozen_predictions, AdaptConfig};
use radar_tta::feature_io::plan_eventwise_batches;
use radar_tta::mmd::mmd2_unbiased;
use radar_tta::source_model::entropy;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn stream_protocol(seed in any::<u64>()) {
        protocol_case(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn bank_is_fifo(seed in any::<u64>()) {
        fifo_case(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn threshold_is_strict(seed in any::<u64>()) {
        threshold_case(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn zero_rate_equals_frozen(seed in 0u64..1000, batch in 1usize..8) {
        let fx = fixture(seed);
        let cfg = AdaptConfig { learning_rate: 0.0, batch_size: batch, ..AdaptConfig::default() };
        let plan = plan_eventwise_batches(&fx.target, batch).unwrap();
        let mut model = fx.model.clone();
        let report = adapt_stream(&mut model, &fx.target, &plan, &cfg).unwrap();
        prop_assert_eq!(&model, &fx.model);
        let frozen = frozen_predictions(&fx.model, &fx.target).unwrap();
        for r in &report.records {
            let i = fx.target.position(&r.id).unwrap();
            prop_assert_eq!(r.prediction, frozen[i].0);
            prop_assert_eq!(&r.probs, &frozen[i].1);
        }
    }

    #[test]
    fn entropy_is_bounded(p in 0.0f64..=1.0) {
        let h = entropy(&[p, 1.0 - p]).unwrap();
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&h));
    }

    #[test]
    fn buckets_partition_samples(
        samples in prop::collection::vec((0.0f64..=std::f64::consts::LN_2, any::<bool>()), 0..200),
        n in 1usize..12,
    ) {
        let b = entropy_buckets(&samples, n).unwrap();
        prop_assert_eq!(b.len(), n);
        prop_assert_eq!(b.iter().map(|x| x.count).sum::<usize>(), samples.len());
        prop_assert_eq!(b[0].lo, 0.0);
        prop_assert_eq!(b[n - 1].hi, std::f64::consts::LN_2);
        for w in b.windows(2) {
            prop_assert!((w[0].hi - w[1].lo).abs() < 1e-15);
        }
        for x in &b {
            prop_assert!(x.errors <= x.count);
        }
    }

    #[test]
    fn mmd_is_symmetric_and_zero_on_repeats(
        x in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..8),
        y in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..8),
        sigma in 0.3f64..4.0,
    ) {
        let a = mmd2_unbiased(&x, &y, sigma).unwrap();
        let b = mmd2_unbiased(&y, &x, sigma).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        let same = vec![x[0].clone(); 2];
        prop_assert!(mmd2_unbiased(&same, &same, sigma).unwrap().abs() < 1e-12);
    }
}
