mod common;

use slotbarter::dataset::{ingest, write_reuse_csv, HashFilter};

#[test]
fn breach_fixture_matches_hand_counts() {
    let bad = common::breach10_mismatches();
    assert!(bad.is_empty(), "mismatches: {bad:?}");
}

#[test]
fn quartile_fixture() {
    let bad = common::quartile_mismatches();
    assert!(bad.is_empty(), "mismatches: {bad:?}");
}

#[test]
fn disabling_the_filter_keeps_hashes() {
    let off = HashFilter {
        enabled: false,
        ..HashFilter::default()
    };
    let d = ingest(common::BREACH10.as_bytes(), common::SALT, &off).unwrap();
    assert_eq!(d.summary.hashed, 0);
    assert_eq!(d.summary.entries, 8);
    // cat's hashed alpha entry joins alpha and gamma directly
    assert_eq!(d.summary.lcc_sites, 3);
}

#[test]
fn salt_never_reaches_outputs() {
    let d = ingest(common::BREACH10.as_bytes(), common::SALT, &HashFilter::default()).unwrap();
    let mut csv = Vec::new();
    write_reuse_csv(&d, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap() + &d.ecosystem.to_text();
    assert!(!text.contains("fixture-salt"));
    assert!(!text.contains("x.com"));
    assert!(text.contains("alpha,beta,1,1,1"));
}
