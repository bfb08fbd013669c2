use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[path = "common/session_reference.rs"]
mod session_reference;

use session_reference::{fuzz, random_step, run_sequence};

#[test]
fn hundred_thousand_random_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e55_1011);
    let completed = fuzz(100_000, &mut rng).unwrap_or_else(|e| panic!("{e}"));
    // The walk must actually reach the interesting states.
    assert!(completed > 1000, "only {completed} sequences completed");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]
    #[test]
    fn sequences_follow_the_reference(seed in any::<u64>(), len in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps: Vec<_> = (0..len).map(|_| random_step(&mut rng)).collect();
        if let Err(e) = run_sequence(&steps) {
            prop_assert!(false, "{}", e);
        }
    }
}
