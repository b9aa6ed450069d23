use erglim_core::trimsum::{schedule_r, schedule_r_checked};
use erglim_core::{IntTrim, RealTrim, Schedule, TrimError};
use proptest::prelude::*;

fn fill(vals: &[i128], r_max: usize) -> IntTrim {
    let mut a = IntTrim::new(r_max);
    for &v in vals {
        a.push(v);
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn trimmed_sum_drops_the_largest(vals in prop::collection::vec(-50i128..1000, 0..200), r_max in 0usize..12) {
        let a = fill(&vals, r_max);
        let mut sorted = vals.clone();
        sorted.sort_unstable_by(|x, y| y.cmp(x));
        let held = r_max.min(vals.len());
        prop_assert_eq!(a.top(), &sorted[..held]);
        prop_assert_eq!(a.count(), vals.len() as u64);
        for r in 0..=held {
            let want: i128 = sorted[r..].iter().sum();
            prop_assert_eq!(a.trimmed_sum(r).unwrap(), want);
        }
        prop_assert!(a.trimmed_sum(held + 1).is_err());
        for k in 1..=held {
            prop_assert_eq!(a.kth_max(k).unwrap(), sorted[k - 1]);
        }
        prop_assert!(a.kth_max(0).is_err());
    }

    #[test]
    fn order_does_not_matter(vals in prop::collection::vec(0i128..100, 1..100), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = vals.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (a, b) = (fill(&vals, 7), fill(&shuffled, 7));
        prop_assert_eq!(a.top(), b.top());
        prop_assert_eq!(a.sum(), b.sum());
    }

    #[test]
    fn merge_is_one_pass(vals in prop::collection::vec(0i128..300, 0..150), cut in 0usize..150) {
        let cut = cut.min(vals.len());
        let (l, r) = vals.split_at(cut);
        let (a, b) = (fill(l, 9), fill(r, 9));
        let whole = fill(&vals, 9);
        prop_assert_eq!(&a.merge(&b), &whole);
        prop_assert_eq!(&b.merge(&a), &whole);
    }

    #[test]
    fn push_n_is_repeated_push(runs in prop::collection::vec((0i128..40, 0u64..30), 0..30), r_max in 1usize..10) {
        let mut a = IntTrim::new(r_max);
        let mut flat = Vec::new();
        for &(v, n) in &runs {
            a.push_n(v, n);
            flat.extend(std::iter::repeat(v).take(n as usize));
        }
        prop_assert_eq!(&a, &fill(&flat, r_max));
    }

    #[test]
    fn real_values_keep_the_identity(vals in prop::collection::vec(0.0f64..1e6, 1..100)) {
        let mut a = RealTrim::new(5);
        for &v in &vals {
            a.push(v);
        }
        let total: f64 = vals.iter().sum();
        let held = a.top().len();
        let removed: f64 = a.top().iter().sum();
        let t = a.trimmed_sum(held).unwrap();
        prop_assert!((t + removed - total).abs() <= 1e-9 * total.max(1.0));
    }
}

#[test]
fn schedules() {
    assert_eq!(schedule_r(3, Schedule::Light { r: 2 }), Ok(2));
    assert!(matches!(schedule_r(15, Schedule::LoglogPow { u: 2.0 }), Err(TrimError::DomainError { .. })));
    for n in [16u64, 100, 10_000, 1_000_000_000] {
        let ll = (n as f64).ln().ln();
        assert_eq!(schedule_r(n, Schedule::LoglogPow { u: 1.5 }).unwrap(), ll.powf(1.5).floor() as u64);
        let arg = (n as f64 * (n as f64).ln() / 2f64.ln()).ln().ln();
        assert_eq!(schedule_r(n, Schedule::LoglogPowRebased { u: 1.5 }).unwrap(), arg.powf(1.5).floor() as u64);
    }
    assert!(matches!(
        schedule_r_checked(1_000_000, Schedule::LoglogPow { u: 6.0 }, 8),
        Err(TrimError::ExceedsRmax { .. })
    ));
}
