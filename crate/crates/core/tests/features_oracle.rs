mod common;

use common::oracle::{assert_oracle, small_store};
use scam_radar::features::extract_features;
use scam_radar::ingest::DataStore;
use scam_radar::model::AccountAddress;

#[test]
fn test_features_match_brute_force_oracle() {
    for seed in 1..=8 {
        let store = small_store(seed);
        // Six benign tokens, six scam tokens, WETH and the three stablecoins at least.
        assert!(store.tokens().len() >= 16, "{} tokens", store.tokens().len());
        assert_oracle(&store);
    }
}

#[test]
fn test_permutation_invariance() {
    let store = small_store(5);
    let mut events = store.events().to_vec();
    let mut transfers = store.transfers().to_vec();
    events.reverse();
    transfers.reverse();
    let shuffled = DataStore::new(
        store.tokens().values().cloned().collect(),
        store.pools().values().cloned().collect(),
        events,
        transfers,
        store.prices().clone(),
    )
    .unwrap()
    .with_study_time(store.study_time())
    .unwrap();
    for token in store.tokens().keys() {
        assert_eq!(
            extract_features(&store, token).unwrap(),
            extract_features(&shuffled, token).unwrap()
        );
    }
}

#[test]
fn test_unknown_token_is_not_found() {
    let store = small_store(1);
    let missing: AccountAddress = "0x00000000000000000000000000000000000000ff".parse().unwrap();
    assert!(extract_features(&store, &missing).is_err());
}
