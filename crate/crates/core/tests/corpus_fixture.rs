use std::collections::BTreeMap;
use std::io::BufReader;

use valuescope::corpus::{parse_dump, preprocess, DropReason};

const DUMP: &[u8] = include_bytes!("fixtures/dump_10x40.jsonl");

#[test]
fn dump_parses_with_one_skipped_line() {
    let d = parse_dump(BufReader::new(DUMP)).unwrap();
    assert_eq!(d.posts.len(), 10);
    assert_eq!(d.comments.len(), 40);
    assert_eq!(d.skipped, 1);
    assert!(d.posts.iter().any(|p| p.post_id == "p9" && p.has_media));
    assert!(d.comments.iter().all(|c| c.community == "quietharbor"));
}

#[test]
fn dump_exclusions_match_the_plan() {
    let d = parse_dump(BufReader::new(DUMP)).unwrap();
    let out = preprocess(&d.comments, &d.posts, 1_700_000_000).unwrap();
    let expected: BTreeMap<DropReason, usize> = [
        (DropReason::UnresolvedPost, 1),
        (DropReason::NotFirstLevel, 4),
        (DropReason::Deleted, 2),
        (DropReason::Edited, 2),
        (DropReason::UrlOnly, 2),
        (DropReason::MediaPost, 4),
        (DropReason::LateComment, 2),
        (DropReason::RetrievedTooSoon, 2),
    ]
    .into();
    assert_eq!(out.dropped, expected);
    assert_eq!(out.comments.len(), 21);
    assert_eq!(out.comments.len() + out.dropped_total(), 40);
    let ids: Vec<&str> = out.comments.iter().map(|c| c.comment_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert!(out
        .comments
        .iter()
        .all(|c| c.post_id != "p9" && !c.post_title.is_empty()));
}

#[test]
fn per_comment_retrieval_wins_over_scrape_time() {
    let d = parse_dump(BufReader::new(DUMP)).unwrap();
    // Every comment carries its own retrieval time, so the scrape time only
    // has to be late enough to pass the sanity check.
    let a = preprocess(&d.comments, &d.posts, 1_700_000_000).unwrap();
    let b = preprocess(&d.comments, &d.posts, i64::MAX).unwrap();
    assert_eq!(a, b);
    assert!(preprocess(&d.comments, &d.posts, 0).is_err());
}
