mod common;

use common::state_machine::run_sequences;

const SEQUENCES: usize = 1000;

#[tokio::test]
async fn random_call_sequences_keep_the_invariants() {
    let (refits, terminated) = run_sequences(SEQUENCES).await;
    // the sequences must reach deep states, not just bounce off errors
    assert!(refits > 2 * SEQUENCES, "{refits} refits");
    assert!(terminated > SEQUENCES / 10, "{terminated} terminations");
}
