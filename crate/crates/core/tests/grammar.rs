use mobility_core::routines::{compression_ratio, sequitur};
use proptest::prelude::*;

fn sequence() -> impl Strategy<Value = Vec<u32>> {
    (2u32..=11).prop_flat_map(|k| prop::collection::vec(0..k, 1..=500))
}

fn has_repeated_digram(seq: &[u32]) -> bool {
    let mut seen = std::collections::HashMap::new();
    for i in 0..seq.len().saturating_sub(1) {
        let key = (seq[i], seq[i + 1]);
        match seen.get(&key) {
            Some(&j) if j + 1 < i => return true,
            Some(_) => {}
            None => {
                seen.insert(key, i);
            }
        }
    }
    false
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn grammar_invariants_hold(seq in sequence()) {
        let g = sequitur(&seq);
        prop_assert_eq!(g.check_invariants(&seq), Ok(()));
    }

    #[test]
    fn ratio_is_one_iff_no_repeat(seq in sequence()) {
        let g = sequitur(&seq);
        let r = compression_ratio(&seq, &g).unwrap();
        prop_assert!(r >= 1.0);
        prop_assert_eq!(r == 1.0, !has_repeated_digram(&seq));
    }
}

#[test]
fn low_alphabet_runs() {
    for seq in [vec![0; 37], [0, 0, 0, 1].repeat(20), [0, 1, 1].repeat(30)] {
        sequitur(&seq).check_invariants(&seq).unwrap();
    }
}
