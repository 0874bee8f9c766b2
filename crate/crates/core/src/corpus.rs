//! Dump ingestion, preprocessing exclusions and temporal binning.
//!
//! Input files hold one serialized object per line. Field names follow the
//! common community-dump schema (`id`, `link_id`, `parent_id`, `subreddit`,
//! `created_utc`, `retrieved_on`, `score`, `edited`, ...) and the crate's own
//! canonical names (`comment_id`, `post_id`, `community`, `created_at`,
//! `retrieved_at`, `net_votes`, ...) are accepted as aliases.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use chrono::{DateTime, Datelike, Months, NaiveDate, TimeZone, Utc};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// One day in seconds. Day arithmetic is fixed-width UTC.
pub const DAY_SECONDS: i64 = 86_400;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unreadable input stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("scrape time {scrape_time} precedes every comment creation time")]
    ScrapeTimeTooEarly { scrape_time: i64 },
    #[error("bin width of {0} months does not divide 12")]
    InvalidBinWidth(u32),
    #[error("origin {origin} is after the earliest comment ({earliest})")]
    OriginAfterData { origin: NaiveDate, earliest: i64 },
    #[error("invalid period `{0}`; expected YYYY-YYYY")]
    InvalidPeriod(String),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    pub post_id: String,
    pub community: String,
    pub author: String,
    pub title: String,
    pub body: String,
    pub created_at: i64,
    pub has_media: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawComment {
    pub comment_id: String,
    pub parent_id: String,
    pub post_id: String,
    pub community: String,
    pub author: String,
    pub body: String,
    pub created_at: i64,
    pub retrieved_at: Option<i64>,
    pub net_votes: i64,
    pub edited: bool,
    pub deleted: bool,
}

/// A first-level comment that passed every preprocessing exclusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: String,
    pub parent_id: String,
    pub post_id: String,
    pub community: String,
    pub author: String,
    pub body: String,
    pub created_at: i64,
    pub retrieved_at: Option<i64>,
    pub net_votes: i64,
    pub post_title: String,
    pub post_body: String,
}

impl From<&Comment> for RawComment {
    fn from(c: &Comment) -> Self {
        RawComment {
            comment_id: c.comment_id.clone(),
            parent_id: c.parent_id.clone(),
            post_id: c.post_id.clone(),
            community: c.community.clone(),
            author: c.author.clone(),
            body: c.body.clone(),
            created_at: c.created_at,
            retrieved_at: c.retrieved_at,
            net_votes: c.net_votes,
            edited: false,
            deleted: false,
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ParsedDump {
    pub posts: Vec<RawPost>,
    pub comments: Vec<RawComment>,
    pub skipped: usize,
}

enum Record {
    Post(RawPost),
    Comment(RawComment),
}

/// Parses a line-delimited dump stream holding posts, comments, or both.
///
/// Blank lines are ignored. Lines that fail to decode, or decode to an object
/// that is neither a valid post nor a valid comment, are counted in
/// `skipped`. Only a failing reader aborts.
pub fn parse_dump<R: BufRead>(mut reader: R) -> Result<ParsedDump, CorpusError> {
    let mut lines = Vec::new();
    loop {
        let mut buf = Vec::new();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        lines.push(buf);
    }

    let parsed: Vec<Option<Option<Record>>> = lines
        .par_iter()
        .map(|bytes| {
            let text = match std::str::from_utf8(bytes) {
                Ok(t) => t.trim(),
                Err(_) => return Some(None),
            };
            if text.is_empty() {
                return None;
            }
            Some(parse_record(text))
        })
        .collect();

    let mut dump = ParsedDump::default();
    for entry in parsed.into_iter().flatten() {
        match entry {
            Some(Record::Post(p)) => dump.posts.push(p),
            Some(Record::Comment(c)) => dump.comments.push(c),
            None => dump.skipped += 1,
        }
    }
    Ok(dump)
}

fn parse_record(line: &str) -> Option<Record> {
    let value: Value = serde_json::from_str(line).ok()?;
    let obj = value.as_object()?;
    if obj.contains_key("title") {
        post_from(&value).map(Record::Post)
    } else if ["parent_id", "link_id", "comment_id", "body"]
        .iter()
        .any(|k| obj.contains_key(*k))
    {
        comment_from(&value).map(Record::Comment)
    } else {
        None
    }
}

fn str_field(v: &Value, names: &[&str]) -> Option<String> {
    names
        .iter()
        .find_map(|n| v.get(*n).and_then(Value::as_str).map(str::to_owned))
}

fn int_field(v: &Value, names: &[&str]) -> Option<i64> {
    names.iter().find_map(|n| match v.get(*n)? {
        Value::Number(num) => num.as_i64().or_else(|| num.as_f64().map(|f| f as i64)),
        Value::String(s) => s.trim().parse::<f64>().ok().map(|f| f as i64),
        _ => None,
    })
}

fn truthy(v: Option<&Value>) -> bool {
    match v {
        Some(Value::Bool(b)) => *b,
        Some(Value::Number(n)) => n.as_f64().is_some_and(|f| f != 0.0),
        Some(Value::String(s)) => !s.is_empty() && s != "false" && s != "0",
        Some(Value::Object(o)) => !o.is_empty(),
        _ => false,
    }
}

fn strip_kind(id: &str, kind: &str) -> String {
    id.strip_prefix(kind).unwrap_or(id).to_owned()
}

fn post_from(v: &Value) -> Option<RawPost> {
    let post_id = strip_kind(&str_field(v, &["post_id", "id", "name"])?, "t3_");
    let created_at = int_field(v, &["created_at", "created_utc"])?;
    if post_id.is_empty() || created_at <= 0 {
        return None;
    }
    let media_hint = str_field(v, &["post_hint"])
        .is_some_and(|h| matches!(h.as_str(), "image" | "hosted:video" | "rich:video"));
    let has_media = truthy(v.get("has_media"))
        || truthy(v.get("is_video"))
        || truthy(v.get("is_gallery"))
        || truthy(v.get("media"))
        || truthy(v.get("secure_media"))
        || media_hint;
    Some(RawPost {
        post_id,
        community: str_field(v, &["community", "subreddit"]).unwrap_or_default(),
        author: str_field(v, &["author"]).unwrap_or_default(),
        title: str_field(v, &["title"]).unwrap_or_default(),
        body: str_field(v, &["body", "selftext"]).unwrap_or_default(),
        created_at,
        has_media,
    })
}

fn comment_from(v: &Value) -> Option<RawComment> {
    let comment_id = strip_kind(&str_field(v, &["comment_id", "id"])?, "t1_");
    let post_id = strip_kind(&str_field(v, &["post_id", "link_id"])?, "t3_");
    let parent_id = strip_kind(&str_field(v, &["parent_id"])?, "t3_");
    let created_at = int_field(v, &["created_at", "created_utc"])?;
    let retrieved_at = int_field(v, &["retrieved_at", "retrieved_on", "retrieved_utc"]);
    let net_votes = int_field(v, &["net_votes", "score"])?;
    let body = str_field(v, &["body"]).unwrap_or_default();
    if comment_id.is_empty() || created_at <= 0 {
        return None;
    }
    if retrieved_at.is_some_and(|r| r < created_at) {
        return None;
    }
    let deleted = truthy(v.get("deleted")) || matches!(body.trim(), "[deleted]" | "[removed]");
    Some(RawComment {
        comment_id,
        parent_id,
        post_id,
        community: str_field(v, &["community", "subreddit"]).unwrap_or_default(),
        author: str_field(v, &["author"]).unwrap_or_default(),
        body,
        created_at,
        retrieved_at,
        net_votes,
        edited: truthy(v.get("edited")),
        deleted,
    })
}

/// Why a comment was excluded. The first matching reason in declaration
/// order is the one counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    UnresolvedPost,
    NotFirstLevel,
    Deleted,
    Edited,
    UrlOnly,
    MediaPost,
    LateComment,
    RetrievedTooSoon,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Preprocessed {
    pub comments: Vec<Comment>,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl Preprocessed {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

fn url_only_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^(?:<?(?:https?://|www\.)\S+>?|\[[^\]]*\]\((?:https?://|www\.)[^)\s]+\))$")
            .expect("valid url regex")
    })
}

/// True when the trimmed body is a single URL token.
pub fn is_url_only(body: &str) -> bool {
    url_only_regex().is_match(body.trim())
}

/// The exclusion that applies to `comment`, if any.
///
/// The retrieval check uses the comment's own `retrieved_at` when the dump
/// carries one and falls back to `scrape_time` otherwise.
pub fn exclusion(
    comment: &RawComment,
    post: Option<&RawPost>,
    scrape_time: i64,
) -> Option<DropReason> {
    let Some(post) = post else {
        return Some(DropReason::UnresolvedPost);
    };
    if comment.parent_id != comment.post_id {
        return Some(DropReason::NotFirstLevel);
    }
    if comment.deleted {
        return Some(DropReason::Deleted);
    }
    if comment.edited {
        return Some(DropReason::Edited);
    }
    if is_url_only(&comment.body) {
        return Some(DropReason::UrlOnly);
    }
    if post.has_media {
        return Some(DropReason::MediaPost);
    }
    if comment.created_at - post.created_at > DAY_SECONDS {
        return Some(DropReason::LateComment);
    }
    let retrieved = comment.retrieved_at.unwrap_or(scrape_time);
    if retrieved - comment.created_at < DAY_SECONDS {
        return Some(DropReason::RetrievedTooSoon);
    }
    None
}

/// Applies the preprocessing exclusions and keeps first-level comments.
///
/// Output is sorted by `comment_id`.
pub fn preprocess(
    comments: &[RawComment],
    posts: &[RawPost],
    scrape_time: i64,
) -> Result<Preprocessed, CorpusError> {
    if !comments.is_empty() && comments.iter().all(|c| c.created_at > scrape_time) {
        return Err(CorpusError::ScrapeTimeTooEarly { scrape_time });
    }
    let mut by_id: HashMap<&str, &RawPost> = HashMap::with_capacity(posts.len());
    for p in posts {
        by_id.entry(p.post_id.as_str()).or_insert(p);
    }

    let mut out = Preprocessed::default();
    for c in comments {
        let post = by_id.get(c.post_id.as_str()).copied();
        match exclusion(c, post, scrape_time) {
            Some(reason) => *out.dropped.entry(reason).or_default() += 1,
            None => {
                let post = post.expect("resolved above");
                out.comments.push(Comment {
                    comment_id: c.comment_id.clone(),
                    parent_id: c.parent_id.clone(),
                    post_id: c.post_id.clone(),
                    community: c.community.clone(),
                    author: c.author.clone(),
                    body: c.body.clone(),
                    created_at: c.created_at,
                    retrieved_at: c.retrieved_at,
                    net_votes: c.net_votes,
                    post_title: post.title.clone(),
                    post_body: post.body.clone(),
                })
            }
        }
    }
    out.comments.sort_by(|a, b| a.comment_id.cmp(&b.comment_id));
    Ok(out)
}

/// A calendar-aligned time bin. Ordering and equality use `(start, end)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeBin {
    pub start: i64,
    pub end: i64,
    /// Year fraction of the bin midpoint; Jan–Jun 2020 is `2020.25`.
    pub label: f64,
    /// Year fraction of the bin start; Jan–Jun 2020 is `2020.0`.
    pub start_label: f64,
}

impl PartialEq for TimeBin {
    fn eq(&self, other: &Self) -> bool {
        (self.start, self.end) == (other.start, other.end)
    }
}
impl Eq for TimeBin {}
impl PartialOrd for TimeBin {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for TimeBin {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.start, self.end).cmp(&(other.start, other.end))
    }
}

impl TimeBin {
    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }
}

fn midnight(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight exists"))
}

fn bin_at(origin: NaiveDate, width: u32, k: u32) -> TimeBin {
    let start_date = origin + Months::new(width * k);
    let end_date = origin + Months::new(width * (k + 1));
    let year_frac = |d: NaiveDate, extra_months: f64| {
        d.year() as f64 + (d.month0() as f64 + extra_months) / 12.0
    };
    TimeBin {
        start: midnight(start_date).timestamp(),
        end: midnight(end_date).timestamp(),
        label: year_frac(start_date, width as f64 / 2.0),
        start_label: year_frac(start_date, 0.0),
    }
}

/// Partitions comments into contiguous bins of `width_months`, aligned to
/// `origin`. Bins run from the first occupied one to the last occupied one;
/// interior bins are present even when empty.
pub fn time_bin(
    comments: &[Comment],
    width_months: u32,
    origin: NaiveDate,
) -> Result<BTreeMap<TimeBin, Vec<Comment>>, CorpusError> {
    if width_months == 0 || 12 % width_months != 0 {
        return Err(CorpusError::InvalidBinWidth(width_months));
    }
    let mut out = BTreeMap::new();
    let Some(earliest) = comments.iter().map(|c| c.created_at).min() else {
        return Ok(out);
    };
    let origin_ts = midnight(origin).timestamp();
    if earliest < origin_ts {
        return Err(CorpusError::OriginAfterData { origin, earliest });
    }

    let index_of = |t: i64| -> u32 {
        let dt = DateTime::<Utc>::from_timestamp(t, 0).expect("timestamp in range");
        let months = (dt.year() - origin.year()) * 12 + dt.month0() as i32 - origin.month0() as i32;
        let mut k = (months.max(0) as u32) / width_months;
        while k > 0 && bin_at(origin, width_months, k).start > t {
            k -= 1;
        }
        while bin_at(origin, width_months, k).end <= t {
            k += 1;
        }
        k
    };

    let mut grouped: BTreeMap<u32, Vec<Comment>> = BTreeMap::new();
    for c in comments {
        grouped
            .entry(index_of(c.created_at))
            .or_default()
            .push(c.clone());
    }
    let first = *grouped.keys().next().expect("nonempty");
    let last = *grouped.keys().next_back().expect("nonempty");
    for k in first..=last {
        out.insert(
            bin_at(origin, width_months, k),
            grouped.remove(&k).unwrap_or_default(),
        );
    }
    Ok(out)
}

/// A closed range of calendar years, `[Jan 1 first, Jan 1 last+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub first_year: i32,
    pub last_year: i32,
}

impl Period {
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        let bad = || CorpusError::InvalidPeriod(s.to_owned());
        let (a, b) = s.trim().split_once('-').ok_or_else(bad)?;
        let first_year: i32 = a.trim().parse().map_err(|_| bad())?;
        let last_year: i32 = b.trim().parse().map_err(|_| bad())?;
        if last_year < first_year || first_year < 1 || last_year > 9998 {
            return Err(bad());
        }
        Ok(Period {
            first_year,
            last_year,
        })
    }

    pub fn start(&self) -> i64 {
        midnight(NaiveDate::from_ymd_opt(self.first_year, 1, 1).expect("valid year")).timestamp()
    }

    pub fn end(&self) -> i64 {
        midnight(NaiveDate::from_ymd_opt(self.last_year + 1, 1, 1).expect("valid year")).timestamp()
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start() <= t && t < self.end()
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.first_year, self.last_year)
    }
}

/// Which side of the preference-predictor split a comment belongs to.
/// Assignment is a pure function of the comment id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    PredictorTrain,
    Heldout,
}

impl Partition {
    pub fn assign(comment_id: &str, train_fraction: f64) -> Self {
        let u = crate::seed::unit_interval(crate::seed::text_hash(comment_id));
        if u < train_fraction {
            Partition::PredictorTrain
        } else {
            Partition::Heldout
        }
    }
}

#[derive(Serialize)]
struct CommentRow<'a> {
    comment_id: &'a str,
    post_id: &'a str,
    community: &'a str,
    author: &'a str,
    created_at: i64,
    net_votes: i64,
    partition: Partition,
    post_title: &'a str,
    body: &'a str,
}

/// Writes cleaned comments as CSV with a partition column.
pub fn write_comments_csv<W: Write>(
    w: W,
    comments: &[Comment],
    train_fraction: f64,
) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(w);
    for c in comments {
        wtr.serialize(CommentRow {
            comment_id: &c.comment_id,
            post_id: &c.post_id,
            community: &c.community,
            author: &c.author,
            created_at: c.created_at,
            net_votes: c.net_votes,
            partition: Partition::assign(&c.comment_id, train_fraction),
            post_title: &c.post_title,
            body: &c.body,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> Result<(), CorpusError> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads one JSON object per line, failing on any malformed line.
pub fn read_jsonl<R: BufRead, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T0: i64 = 1_600_000_000;

    fn post(id: &str) -> RawPost {
        RawPost {
            post_id: id.into(),
            community: "askscience".into(),
            author: "op".into(),
            title: "Why is the sky blue?".into(),
            body: String::new(),
            created_at: T0,
            has_media: false,
        }
    }

    fn comment(id: &str, post_id: &str) -> RawComment {
        RawComment {
            comment_id: id.into(),
            parent_id: post_id.into(),
            post_id: post_id.into(),
            community: "askscience".into(),
            author: "alice".into(),
            body: "Rayleigh scattering.".into(),
            created_at: T0 + 3_600,
            retrieved_at: Some(T0 + 30 * DAY_SECONDS),
            net_votes: 12,
            edited: false,
            deleted: false,
        }
    }

    #[test]
    fn empty_stream() {
        let dump = parse_dump(&b""[..]).unwrap();
        assert_eq!(dump, ParsedDump::default());
    }

    #[test]
    fn truncated_line_is_skipped() {
        let input = concat!(
            r#"{"id":"c1","link_id":"t3_p1","parent_id":"t3_p1","subreddit":"x","author":"a","body":"hi","created_utc":1600000000,"score":3}"#,
            "\n",
            r#"{"id":"c2","link_id":"t3_p1","par"#,
            "\n"
        );
        let dump = parse_dump(input.as_bytes()).unwrap();
        assert_eq!(
            (dump.posts.len(), dump.comments.len(), dump.skipped),
            (0, 1, 1)
        );
        let c = &dump.comments[0];
        assert_eq!(c.post_id, "p1");
        assert_eq!(c.parent_id, "p1");
        assert_eq!(c.net_votes, 3);
    }

    #[test]
    fn dump_schema_mapping() {
        let input = concat!(
            r#"{"id":"p9","subreddit":"stocks","author":"op","title":"t","selftext":"d","created_utc":"1600000000","is_video":true}"#,
            "\n",
            r#"{"id":"c9","link_id":"t3_p9","parent_id":"t1_c8","subreddit":"stocks","author":"a","body":"[removed]","created_utc":1600000100,"retrieved_on":1600100000,"score":-2,"edited":1600000500}"#,
            "\n",
            r#"{"id":"c10","link_id":"t3_p9","parent_id":"t3_p9","body":"x","created_utc":1600000100,"retrieved_on":1500000000,"score":1}"#,
            "\n",
            "\n",
            r#"[1,2,3]"#,
        );
        let dump = parse_dump(input.as_bytes()).unwrap();
        assert_eq!(dump.posts.len(), 1);
        assert!(dump.posts[0].has_media);
        assert_eq!(dump.posts[0].body, "d");
        assert_eq!(dump.comments.len(), 1);
        let c = &dump.comments[0];
        assert!(c.deleted && c.edited);
        assert_eq!(c.parent_id, "t1_c8");
        assert_eq!(c.net_votes, -2);
        // retrieved before created, and a non-object line
        assert_eq!(dump.skipped, 2);
    }

    #[test]
    fn invalid_utf8_counts_as_skipped() {
        let mut input = b"{\"id\":\"c1\",\"body\":\"\xff\"}\n".to_vec();
        input.extend_from_slice(b"{}\n");
        let dump = parse_dump(&input[..]).unwrap();
        assert_eq!(dump.skipped, 2);
    }

    #[test]
    fn clean_comment_kept() {
        let out = preprocess(&[comment("c1", "p1")], &[post("p1")], T0 + 40 * DAY_SECONDS).unwrap();
        assert_eq!(out.comments.len(), 1);
        assert_eq!(out.comments[0].post_title, "Why is the sky blue?");
    }

    #[test]
    fn exclusions() {
        let scrape = T0 + 40 * DAY_SECONDS;
        let mut edited = comment("c1", "p1");
        edited.edited = true;
        let mut late = comment("c2", "p1");
        late.created_at = T0 + 90_000;
        let mut url = comment("c3", "p1");
        url.body = "  https://example.com/a?b=c  ".into();
        let mut nested = comment("c4", "p1");
        nested.parent_id = "t1_c1".into();
        let mut fresh = comment("c5", "p1");
        fresh.retrieved_at = Some(fresh.created_at + 3_600);
        let orphan = comment("c6", "missing");
        let mut deleted = comment("c7", "p1");
        deleted.deleted = true;
        let media = comment("c8", "p2");
        let mut p2 = post("p2");
        p2.has_media = true;
        let mut boundary = comment("c9", "p1");
        boundary.created_at = T0 + DAY_SECONDS;
        boundary.retrieved_at = Some(boundary.created_at + DAY_SECONDS);

        let out = preprocess(
            &[
                edited, late, url, nested, fresh, orphan, deleted, media, boundary,
            ],
            &[post("p1"), p2],
            scrape,
        )
        .unwrap();
        assert_eq!(out.comments.len(), 1);
        assert_eq!(out.comments[0].comment_id, "c9");
        for reason in [
            DropReason::Edited,
            DropReason::LateComment,
            DropReason::UrlOnly,
            DropReason::NotFirstLevel,
            DropReason::RetrievedTooSoon,
            DropReason::UnresolvedPost,
            DropReason::Deleted,
            DropReason::MediaPost,
        ] {
            assert_eq!(out.dropped.get(&reason), Some(&1), "{reason:?}");
        }
    }

    #[test]
    fn scrape_time_fallback() {
        let mut c = comment("c1", "p1");
        c.retrieved_at = None;
        let kept = preprocess(&[c.clone()], &[post("p1")], c.created_at + DAY_SECONDS).unwrap();
        assert_eq!(kept.comments.len(), 1);
        let dropped = preprocess(&[c.clone()], &[post("p1")], c.created_at + 10).unwrap();
        assert_eq!(dropped.comments.len(), 0);
    }

    #[test]
    fn scrape_time_before_all_comments_is_fatal() {
        let err = preprocess(&[comment("c1", "p1")], &[post("p1")], T0).unwrap_err();
        assert!(matches!(err, CorpusError::ScrapeTimeTooEarly { .. }));
    }

    #[test]
    fn url_detection() {
        assert!(is_url_only("http://a.b"));
        assert!(is_url_only("www.example.org/x"));
        assert!(is_url_only("[source](https://example.org/paper.pdf)"));
        assert!(!is_url_only("see https://example.org"));
        assert!(!is_url_only("no links"));
    }

    fn at(date: &str) -> Comment {
        let d = NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap();
        let c = comment(date, "p1");
        let mut kept = preprocess(&[c], &[post("p1")], T0 + 40 * DAY_SECONDS)
            .unwrap()
            .comments
            .remove(0);
        kept.created_at = midnight(d).timestamp() + 12 * 3600;
        kept
    }

    #[test]
    fn half_year_label() {
        let origin = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let bins = time_bin(&[at("2020-03-15")], 6, origin).unwrap();
        assert_eq!(bins.len(), 1);
        let bin = bins.keys().next().unwrap();
        assert_eq!(bin.start_label, 2020.0);
        assert_eq!(bin.label, 2020.25);
        assert_eq!(
            bin.start,
            midnight(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()).timestamp()
        );
        assert_eq!(
            bin.end,
            midnight(NaiveDate::from_ymd_opt(2020, 7, 1).unwrap()).timestamp()
        );
    }

    #[test]
    fn same_half_year_same_bin() {
        let origin = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let bins = time_bin(&[at("2021-07-01"), at("2021-12-31")], 6, origin).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins.values().next().unwrap().len(), 2);
    }

    #[test]
    fn five_years_ten_bins() {
        let origin = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let bins = time_bin(
            &[at("2019-01-02"), at("2021-05-05"), at("2023-12-30")],
            6,
            origin,
        )
        .unwrap();
        assert_eq!(bins.len(), 10);
        let total: usize = bins.values().map(Vec::len).sum();
        assert_eq!(total, 3);
        let starts: Vec<i64> = bins.keys().map(|b| b.start).collect();
        assert!(bins
            .keys()
            .zip(bins.keys().skip(1))
            .all(|(a, b)| a.end == b.start));
        assert!(starts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn time_bin_errors() {
        let origin = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        assert!(time_bin(&[], 6, origin).unwrap().is_empty());
        assert!(matches!(
            time_bin(&[at("2020-01-01")], 5, origin),
            Err(CorpusError::InvalidBinWidth(5))
        ));
        let late_origin = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        assert!(matches!(
            time_bin(&[at("2020-01-01")], 6, late_origin),
            Err(CorpusError::OriginAfterData { .. })
        ));
    }

    #[test]
    fn period_parsing() {
        let p = Period::parse("2019-2020").unwrap();
        assert!(p.contains(midnight(NaiveDate::from_ymd_opt(2020, 12, 31).unwrap()).timestamp()));
        assert!(!p.contains(midnight(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap()).timestamp()));
        assert!(Period::parse("2020").is_err());
        assert!(Period::parse("2021-2019").is_err());
    }
}
