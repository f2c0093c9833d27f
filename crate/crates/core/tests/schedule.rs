mod common;

use diffsort::schedule::{Comparator, ComparatorSchedule, NetworkKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_permutation_sorts() {
    for schedule in common::schedules_up_to(7) {
        for perm in common::permutations(schedule.n()) {
            let mut v = perm.clone();
            schedule.apply_hard(&mut v).unwrap();
            assert!(
                v.windows(2).all(|w| w[0] <= w[1]),
                "{:?} n={} on {perm:?}",
                schedule.kind(),
                schedule.n()
            );
        }
    }
}

#[test]
fn zero_one_principle_up_to_sixteen() {
    for schedule in common::schedules_up_to(16) {
        assert!(
            schedule.validate_discrete().unwrap(),
            "{} n={}",
            schedule.kind(),
            schedule.n()
        );
    }
}

#[test]
fn bitonic_layers_share_one_stride() {
    for k in 1..=6 {
        let s = ComparatorSchedule::bitonic(1 << k).unwrap();
        for layer in s.layers() {
            let stride = common::layer_stride(layer);
            assert!(layer
                .iter()
                .all(|c| c.min_pos.abs_diff(c.max_pos) == stride));
            assert_eq!(layer.len(), s.n() / 2);
        }
    }
}

#[test]
fn bitonic_merge_separates_halves() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for n in [4, 8, 16, 32] {
        let s = ComparatorSchedule::bitonic(n).unwrap();
        for _ in 0..50 {
            let mut v = common::gapped_values(&mut rng, n, 1.0);
            for layer in s.layers() {
                let before = v.clone();
                for c in layer {
                    let (a, b) = (before[c.min_pos], before[c.max_pos]);
                    v[c.min_pos] = a.min(b);
                    v[c.max_pos] = a.max(b);
                }
                // only the last stage's layers are merging one bitonic block
                if common::layer_stride(layer) * 2 <= n && layer.iter().all(|c| c.is_ascending()) {
                    assert_eq!(common::merge_violations(layer, &v), 0);
                }
            }
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

#[test]
fn truncated_networks_stop_sorting() {
    for kind in [NetworkKind::OddEven, NetworkKind::Bitonic] {
        let s = ComparatorSchedule::new(kind, 8).unwrap();
        let cut = s.truncated(s.layer_count() - 1);
        assert!(!cut.validate_discrete().unwrap());
    }
}

#[test]
fn custom_schedule_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let s = ComparatorSchedule::odd_even(5).unwrap();
    s.save(&path).unwrap();
    assert_eq!(ComparatorSchedule::load(&path).unwrap(), s);

    let bad = r#"{"n":2,"kind":"odd-even","layers":[[[0,2]],[]]}"#;
    assert!(ComparatorSchedule::from_json(bad).is_err());
    let dup = ComparatorSchedule::from_layers(
        3,
        NetworkKind::OddEven,
        vec![vec![
            Comparator {
                min_pos: 0,
                max_pos: 1,
            },
            Comparator {
                min_pos: 1,
                max_pos: 2,
            },
        ]],
    );
    assert!(dup.is_err());
}

proptest! {
    #[test]
    fn hard_apply_matches_std_sort(v in prop::collection::vec(-1000i32..1000, 1..=32)) {
        let n = v.len();
        let mut expect = v.clone();
        expect.sort();
        let mut oe = v.clone();
        ComparatorSchedule::odd_even(n).unwrap().apply_hard(&mut oe).unwrap();
        prop_assert_eq!(&oe, &expect);
        if n.is_power_of_two() {
            let mut bi = v.clone();
            ComparatorSchedule::bitonic(n).unwrap().apply_hard(&mut bi).unwrap();
            prop_assert_eq!(&bi, &expect);
        }
    }
}
