//! Post ingestion, preprocessing, labels and control features.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Two posts by one author with the same cleaned title this close together are duplicates.
pub const DEDUP_WINDOW_SECS: i64 = 300;
/// 2020-03-01T00:00:00Z
pub const DEFAULT_COVID_START: i64 = 1_583_020_800;
/// 2021-07-01T00:00:00Z
pub const DEFAULT_COVID_END: i64 = 1_625_097_600;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no posts")]
    Empty,
    #[error("only {candidates} non-resonant candidates for {resonant} resonant posts")]
    NotEnoughNonResonant { candidates: usize, resonant: usize },
    #[error("covid bounds out of order: {0} > {1}")]
    BadCovidBounds(i64, i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    IAte,
    Homemade,
    ProChef,
    OtherOrMissing,
}

impl Tag {
    /// Case-insensitive mapping from flair text.
    pub fn from_flair(flair: Option<&str>) -> Tag {
        let Some(f) = flair else {
            return Tag::OtherOrMissing;
        };
        let f = f.to_lowercase();
        if f.contains("i ate") {
            Tag::IAte
        } else if f.contains("homemade") {
            Tag::Homemade
        } else if f.contains("pro/chef") {
            Tag::ProChef
        } else {
            Tag::OtherOrMissing
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::IAte => "IAte",
            Tag::Homemade => "Homemade",
            Tag::ProChef => "ProChef",
            Tag::OtherOrMissing => "OtherOrMissing",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        match s {
            "IAte" => Some(Tag::IAte),
            "Homemade" => Some(Tag::Homemade),
            "ProChef" => Some(Tag::ProChef),
            "OtherOrMissing" => Some(Tag::OtherOrMissing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub id: String,
    pub author: String,
    pub title_raw: String,
    pub title_clean: String,
    pub created_utc: i64,
    pub num_comments: u64,
    pub score: i64,
    pub tag: Tag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestIssue {
    Malformed { line: usize, message: String },
    MissingRequiredKey { line: usize, key: &'static str },
    BadValue { line: usize, key: &'static str },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub lines: usize,
    pub issues: Vec<IngestIssue>,
}

impl IngestReport {
    pub fn error_count(&self) -> usize {
        self.issues.len()
    }
}

/// Keep a title character? Letters, digits, whitespace and `' - & ( ) / , .`.
fn keep_title_char(c: char) -> bool {
    c.is_alphabetic() || c.is_numeric() || c.is_whitespace() || "'-&()/,.".contains(c)
}

/// Strip emoji and special characters, then collapse whitespace runs.
pub fn clean_title(raw: &str) -> String {
    let kept: String = raw.chars().filter(|&c| keep_title_char(c)).collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn json_str(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn json_i64(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().filter(|f| f.is_finite()).map(|f| f as i64)),
        Value::String(s) => s.trim().parse::<f64>().ok().filter(|f| f.is_finite()).map(|f| f as i64),
        _ => None,
    }
}

fn parse_post_line(line_no: usize, line: &str) -> Result<PostRecord, IngestIssue> {
    let v: Value = serde_json::from_str(line).map_err(|e| IngestIssue::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    let obj = v.as_object().ok_or(IngestIssue::Malformed {
        line: line_no,
        message: "not a JSON object".into(),
    })?;
    let get = |key: &'static str| {
        obj.get(key)
            .filter(|v| !v.is_null())
            .ok_or(IngestIssue::MissingRequiredKey { line: line_no, key })
    };
    let bad = |key: &'static str| IngestIssue::BadValue { line: line_no, key };

    let id = json_str(get("id")?).ok_or(bad("id"))?;
    let author = json_str(get("author")?).ok_or(bad("author"))?;
    let title = json_str(get("title")?).ok_or(bad("title"))?;
    let created_utc = json_i64(get("created_utc")?).filter(|t| *t > 0).ok_or(bad("created_utc"))?;
    let num_comments = json_i64(get("num_comments")?)
        .filter(|n| *n >= 0)
        .ok_or(bad("num_comments"))? as u64;
    let score = obj.get("score").and_then(json_i64).unwrap_or(0);
    let flair = obj.get("link_flair_text").and_then(Value::as_str);
    Ok(PostRecord {
        id,
        author,
        title_clean: clean_title(&title),
        title_raw: title,
        created_utc,
        num_comments,
        score,
        tag: Tag::from_flair(flair),
    })
}

/// Parse JSON Lines posts. Bad lines are skipped and recorded.
pub fn read_posts<R: BufRead>(reader: R) -> Result<(Vec<PostRecord>, IngestReport), CorpusError> {
    let mut posts = Vec::new();
    let mut report = IngestReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match parse_post_line(i + 1, &line) {
            Ok(p) => posts.push(p),
            Err(issue) => report.issues.push(issue),
        }
    }
    Ok((posts, report))
}

pub fn ingest_posts(path: &Path) -> Result<(Vec<PostRecord>, IngestReport), CorpusError> {
    let f = std::fs::File::open(path)?;
    read_posts(std::io::BufReader::new(f))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub removed_empty_or_deleted: usize,
    pub removed_duplicates: usize,
    pub output: usize,
}

fn is_empty_or_deleted(p: &PostRecord) -> bool {
    let t = p.title_raw.trim();
    t.is_empty() || t == "[deleted]" || t == "[removed]" || p.author == "[deleted]" || p.title_clean.is_empty()
}

/// Drop empty/deleted posts and five-minute duplicates; titles are (re)cleaned.
///
/// Within a duplicate cluster the earliest post survives (ties broken by
/// input position). Output keeps input order.
pub fn preprocess(posts: Vec<PostRecord>) -> (Vec<PostRecord>, FilterReport) {
    let mut report = FilterReport {
        input: posts.len(),
        ..Default::default()
    };
    let mut alive: Vec<PostRecord> = posts
        .into_iter()
        .map(|mut p| {
            p.title_clean = clean_title(&p.title_raw);
            p
        })
        .filter(|p| {
            let drop = is_empty_or_deleted(p);
            report.removed_empty_or_deleted += usize::from(drop);
            !drop
        })
        .collect();

    let mut order: Vec<usize> = (0..alive.len()).collect();
    order.sort_by_key(|&i| (alive[i].created_utc, i));
    let mut last_kept: HashMap<(&str, &str), i64> = HashMap::new();
    let mut keep = vec![true; alive.len()];
    for &i in &order {
        let p = &alive[i];
        let key = (p.author.as_str(), p.title_clean.as_str());
        match last_kept.get(&key) {
            Some(&t) if p.created_utc - t <= DEDUP_WINDOW_SECS => keep[i] = false,
            _ => {
                last_kept.insert(key, p.created_utc);
            }
        }
    }
    report.removed_duplicates = keep.iter().filter(|k| !**k).count();
    let mut k = keep.into_iter();
    alive.retain(|_| k.next().unwrap_or(false));
    report.output = alive.len();
    (alive, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovidPeriod {
    Pre,
    During,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DayQuartile {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl DayQuartile {
    /// UTC hour buckets: [0,6) Q1, [6,12) Q2, [12,18) Q3, [18,24) Q4.
    pub fn from_hour(hour: u32) -> DayQuartile {
        match hour {
            0..=5 => DayQuartile::Q1,
            6..=11 => DayQuartile::Q2,
            12..=17 => DayQuartile::Q3,
            _ => DayQuartile::Q4,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Half-open COVID periods: Pre < start ≤ During < end ≤ Post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovidBounds {
    pub start: i64,
    pub end: i64,
}

impl Default for CovidBounds {
    fn default() -> Self {
        CovidBounds {
            start: DEFAULT_COVID_START,
            end: DEFAULT_COVID_END,
        }
    }
}

impl CovidBounds {
    pub fn new(start: i64, end: i64) -> Result<Self, CorpusError> {
        if start > end {
            return Err(CorpusError::BadCovidBounds(start, end));
        }
        Ok(CovidBounds { start, end })
    }

    pub fn period(&self, t: i64) -> CovidPeriod {
        if t < self.start {
            CovidPeriod::Pre
        } else if t < self.end {
            CovidPeriod::During
        } else {
            CovidPeriod::Post
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlFeatures {
    pub is_weekend: bool,
    pub covid_period: CovidPeriod,
    pub is_experienced_user: bool,
    pub day_quartile: DayQuartile,
    pub tag: Tag,
}

/// UTC hour of day.
pub fn utc_hour(t: i64) -> u32 {
    (t.rem_euclid(86_400) / 3_600) as u32
}

/// UTC weekday, Monday = 0 … Sunday = 6.
pub fn utc_weekday(t: i64) -> u32 {
    // 1970-01-01 was a Thursday
    ((t.div_euclid(86_400) + 3).rem_euclid(7)) as u32
}

pub fn derive_controls(post: &PostRecord, experienced: &HashSet<String>, covid: CovidBounds) -> ControlFeatures {
    ControlFeatures {
        is_weekend: utc_weekday(post.created_utc) >= 5,
        covid_period: covid.period(post.created_utc),
        is_experienced_user: experienced.contains(&post.author),
        day_quartile: DayQuartile::from_hour(utc_hour(post.created_utc)),
        tag: post.tag,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperiencedUsers {
    pub authors: HashSet<String>,
    /// Minimum post count for membership.
    pub min_posts: u64,
}

/// Most active authors by post count.
///
/// With cap = ⌈top_fraction · distinct authors⌉, the threshold is the
/// smallest count c such that at most `cap` authors have ≥ c posts; every
/// author at or above c is in the set.
pub fn experienced_user_set(posts: &[PostRecord], top_fraction: f64) -> Result<ExperiencedUsers, CorpusError> {
    if posts.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for p in posts {
        *counts.entry(p.author.as_str()).or_default() += 1;
    }
    let cap = (top_fraction * counts.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut sorted: Vec<u64> = counts.values().copied().collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    // sorted[cap] is the first author outside the cap; c must exceed its count
    let min_posts = match sorted.get(cap) {
        Some(&outside) => outside + 1,
        None => sorted.last().copied().unwrap_or(1),
    };
    let authors = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_posts)
        .map(|(a, _)| a.to_string())
        .collect();
    Ok(ExperiencedUsers { authors, min_posts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub engagement: bool,
    /// `None`: not part of the resonance task.
    pub resonance: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    /// Parallel to the input posts.
    pub labels: Vec<LabelSet>,
    pub resonance_threshold: u64,
    pub resonant_count: usize,
    pub non_resonant_count: usize,
}

/// Minimum comment count for the top `1 − quantile` share of posts.
///
/// This is the ⌈(1−q)·n⌉-th largest count; all posts tied with it are included.
pub fn resonance_threshold(comment_counts: &[u64], quantile: f64) -> Option<u64> {
    if comment_counts.is_empty() {
        return None;
    }
    let n = comment_counts.len();
    let top = crate::matcher::nearest_rank(n, 1.0 - quantile);
    let mut sorted = comment_counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    Some(sorted[top - 1])
}

/// Engagement for every post plus a seeded, class-balanced resonance subset.
pub fn build_labels(posts: &[PostRecord], resonant_quantile: f64, seed: u64) -> Result<Labels, CorpusError> {
    let counts: Vec<u64> = posts.iter().map(|p| p.num_comments).collect();
    let threshold = resonance_threshold(&counts, resonant_quantile).ok_or(CorpusError::Empty)?;
    let resonant: Vec<usize> = (0..posts.len()).filter(|&i| counts[i] >= threshold).collect();
    let candidates: Vec<usize> = (0..posts.len())
        .filter(|&i| counts[i] <= 1 && counts[i] < threshold)
        .collect();
    if candidates.len() < resonant.len() {
        return Err(CorpusError::NotEnoughNonResonant {
            candidates: candidates.len(),
            resonant: resonant.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: BTreeSet<usize> = sample(&mut rng, candidates.len(), resonant.len())
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    let resonant_set: HashSet<usize> = resonant.iter().copied().collect();
    let labels = posts
        .iter()
        .enumerate()
        .map(|(i, p)| LabelSet {
            engagement: p.num_comments >= 1,
            resonance: if resonant_set.contains(&i) {
                Some(true)
            } else if chosen.contains(&i) {
                Some(false)
            } else {
                None
            },
        })
        .collect();
    Ok(Labels {
        labels,
        resonance_threshold: threshold,
        resonant_count: resonant.len(),
        non_resonant_count: chosen.len(),
    })
}

/// Canonical post table:
/// `id,author,title_clean,created_utc,num_comments,score,tag,engagement,resonance`.
pub fn write_post_table<W: Write>(posts: &[PostRecord], labels: &[LabelSet], w: W) -> Result<(), CorpusError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "id",
        "author",
        "title_clean",
        "created_utc",
        "num_comments",
        "score",
        "tag",
        "engagement",
        "resonance",
    ])?;
    for (p, l) in posts.iter().zip(labels) {
        let resonance = match l.resonance {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        wr.write_record([
            p.id.as_str(),
            p.author.as_str(),
            p.title_clean.as_str(),
            &p.created_utc.to_string(),
            &p.num_comments.to_string(),
            &p.score.to_string(),
            p.tag.as_str(),
            if l.engagement { "1" } else { "0" },
            resonance,
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Read a table written by [`write_post_table`]. `title_raw` is set to the cleaned title.
pub fn read_post_table<R: std::io::Read>(r: R) -> Result<(Vec<PostRecord>, Vec<LabelSet>), CorpusError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut posts = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| f(i).parse::<i64>().unwrap_or(0);
        posts.push(PostRecord {
            id: f(0).to_string(),
            author: f(1).to_string(),
            title_raw: f(2).to_string(),
            title_clean: f(2).to_string(),
            created_utc: num(3),
            num_comments: num(4).max(0) as u64,
            score: num(5),
            tag: Tag::parse(f(6)).unwrap_or(Tag::OtherOrMissing),
        });
        labels.push(LabelSet {
            engagement: f(7) == "1",
            resonance: match f(8) {
                "1" => Some(true),
                "0" => Some(false),
                _ => None,
            },
        });
    }
    Ok((posts, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, author: &str, title: &str, t: i64, comments: u64) -> PostRecord {
        PostRecord {
            id: id.into(),
            author: author.into(),
            title_raw: title.into(),
            title_clean: clean_title(title),
            created_utc: t,
            num_comments: comments,
            score: 0,
            tag: Tag::OtherOrMissing,
        }
    }

    #[test]
    fn flair_mapping() {
        assert_eq!(Tag::from_flair(Some("Homemade")), Tag::Homemade);
        assert_eq!(Tag::from_flair(Some("[I ATE]")), Tag::IAte);
        assert_eq!(Tag::from_flair(Some("Pro/Chef")), Tag::ProChef);
        assert_eq!(Tag::from_flair(Some("Recipe")), Tag::OtherOrMissing);
        assert_eq!(Tag::from_flair(None), Tag::OtherOrMissing);
    }

    #[test]
    fn ingest_lines() {
        let data = concat!(
            r#"{"id":"a","author":"x","title":"Pizza!","created_utc":1600000000,"num_comments":3,"link_flair_text":"Homemade"}"#,
            "\n",
            "{not json\n",
            r#"{"id":"b","author":"y","title":"Soup","created_utc":"1600000100.0","num_comments":0}"#,
            "\n",
            r#"{"id":"c","author":"y","created_utc":1600000100,"num_comments":0}"#,
            "\n"
        );
        let (posts, rep) = read_posts(data.as_bytes()).unwrap();
        assert_eq!(posts.len(), 2);
        assert_eq!(posts[0].tag, Tag::Homemade);
        assert_eq!(posts[0].title_clean, "Pizza");
        assert_eq!(posts[1].tag, Tag::OtherOrMissing);
        assert_eq!(posts[1].created_utc, 1_600_000_100);
        assert_eq!(rep.error_count(), 2);
        assert!(matches!(rep.issues[0], IngestIssue::Malformed { line: 2, .. }));
        assert_eq!(rep.issues[1], IngestIssue::MissingRequiredKey { line: 4, key: "title" });
    }

    #[test]
    fn title_cleaning() {
        assert_eq!(clean_title("Ramen 🍜!!"), "Ramen");
        assert_eq!(clean_title("  Mac & cheese (homemade), w/ bacon.  "), "Mac & cheese (homemade), w/ bacon.");
        assert_eq!(clean_title("Crème brûlée #1 :)"), "Crème brûlée 1 )");
        assert_eq!(clean_title("👩‍🍳🔥"), "");
        assert_eq!(clean_title("mom's   stir-fry\t\n"), "mom's stir-fry");
    }

    #[test]
    fn dedup_window() {
        let (out, rep) = preprocess(vec![post("1", "a", "Pizza", 1000, 0), post("2", "a", "Pizza", 1200, 0)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "1");
        assert_eq!(rep.removed_duplicates, 1);

        let (out, _) = preprocess(vec![post("1", "a", "Pizza", 1000, 0), post("2", "a", "Pizza", 1400, 0)]);
        assert_eq!(out.len(), 2);

        // different author or title is not a duplicate
        let (out, _) = preprocess(vec![post("1", "a", "Pizza", 1000, 0), post("2", "b", "Pizza", 1000, 0)]);
        assert_eq!(out.len(), 2);

        // earliest survives even if it comes later in the input
        let (out, _) = preprocess(vec![post("late", "a", "Pizza!", 1100, 0), post("early", "a", "Pizza", 1000, 0)]);
        assert_eq!(out.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), vec!["early"]);
    }

    #[test]
    fn dedup_window_is_anchored() {
        let posts = (0..5).map(|k| post(&k.to_string(), "a", "Soup", 1000 + 240 * k, 0)).collect();
        let (out, _) = preprocess(posts);
        let ids: Vec<&str> = out.iter().map(|p| p.id.as_str()).collect();
        // 0 kept; 240 dup of 0; 480 > 300 after 0 → kept; 720 dup of 480; 960 kept
        assert_eq!(ids, vec!["0", "2", "4"]);
    }

    #[test]
    fn removes_empty_and_deleted() {
        let mut del = post("3", "[deleted]", "Cake", 10, 0);
        del.author = "[deleted]".into();
        let (out, rep) = preprocess(vec![
            post("1", "a", "", 10, 0),
            post("2", "a", "[removed]", 10, 0),
            del,
            post("4", "a", "🍕🍕", 10, 0),
            post("5", "a", "Cake", 10, 0),
        ]);
        assert_eq!(out.len(), 1);
        assert_eq!(rep.removed_empty_or_deleted, 4);
        assert_eq!(rep.input, 5);
        assert_eq!(rep.output, 1);
    }

    #[test]
    fn quartiles_and_weekend() {
        // 2021-01-02 is a Saturday
        let sat_0030 = 1_609_545_600 + 30 * 60;
        let p = post("1", "a", "x", sat_0030, 0);
        let c = derive_controls(&p, &HashSet::new(), CovidBounds::default());
        assert!(c.is_weekend);
        assert_eq!(c.day_quartile, DayQuartile::Q1);
        assert_eq!(c.covid_period, CovidPeriod::During);

        let mon_1300 = 1_609_545_600 + 2 * 86_400 + 13 * 3600;
        let c = derive_controls(&post("1", "a", "x", mon_1300, 0), &HashSet::new(), CovidBounds::default());
        assert!(!c.is_weekend);
        assert_eq!(c.day_quartile, DayQuartile::Q3);
    }

    #[test]
    fn covid_boundaries_half_open() {
        let b = CovidBounds::default();
        assert_eq!(b.period(DEFAULT_COVID_START - 1), CovidPeriod::Pre);
        assert_eq!(b.period(DEFAULT_COVID_START), CovidPeriod::During);
        assert_eq!(b.period(DEFAULT_COVID_END - 1), CovidPeriod::During);
        assert_eq!(b.period(DEFAULT_COVID_END), CovidPeriod::Post);
        assert!(CovidBounds::new(5, 4).is_err());
    }

    fn authored(counts: &[u64]) -> Vec<PostRecord> {
        let mut v = Vec::new();
        for (a, &c) in counts.iter().enumerate() {
            for k in 0..c {
                v.push(post(&format!("{a}-{k}"), &format!("user{a}"), "x", 1000, 0));
            }
        }
        v
    }

    #[test]
    fn experienced_threshold() {
        // 99 authors, cap ⌈0.05·99⌉ = 5: counts ≥ 2 cover four authors
        let mut counts = vec![9, 7, 7, 5];
        counts.extend(std::iter::repeat(1).take(95));
        let e = experienced_user_set(&authored(&counts), 0.05).unwrap();
        assert_eq!(e.min_posts, 2);
        assert_eq!(e.authors.len(), 4);

        // ties straddling the cap: nobody tied at the boundary is admitted partially
        let mut counts = vec![9, 7, 7, 7, 7, 7];
        counts.extend(std::iter::repeat(1).take(94));
        let e = experienced_user_set(&authored(&counts), 0.05).unwrap();
        assert_eq!(e.min_posts, 8);
        assert_eq!(e.authors.len(), 1);

        let mut counts = vec![50];
        counts.extend(std::iter::repeat(1).take(99));
        let e = experienced_user_set(&authored(&counts), 0.05).unwrap();
        assert_eq!(e.authors.len(), 1);
        assert!(e.authors.contains("user0"));
        assert!(experienced_user_set(&[], 0.05).is_err());
    }

    #[test]
    fn labels_nearest_rank() {
        let posts: Vec<PostRecord> = (0..990u64)
            .map(|k| post(&format!("z{k}"), "a", "x", 10, k % 2))
            .chain((991..=1000u64).map(|c| post(&c.to_string(), "a", "x", 10, c)))
            .collect();
        let counts: Vec<u64> = (1..=1000).collect();
        assert_eq!(resonance_threshold(&counts, 0.99), Some(991));

        let l = build_labels(&posts, 0.99, 7).unwrap();
        assert_eq!(l.resonance_threshold, 991);
        assert_eq!(l.resonant_count, 10);
        assert_eq!(l.non_resonant_count, 10);
        assert_eq!(l.labels.iter().filter(|x| x.resonance.is_some()).count(), 20);
        for (p, lab) in posts.iter().zip(&l.labels) {
            assert_eq!(lab.engagement, p.num_comments >= 1);
            match lab.resonance {
                Some(true) => assert!(p.num_comments >= 991),
                Some(false) => assert!(p.num_comments <= 1),
                None => {}
            }
        }
        assert_eq!(l, build_labels(&posts, 0.99, 7).unwrap());
    }

    #[test]
    fn labels_need_candidates() {
        let posts: Vec<PostRecord> = (1..=100u64).map(|c| post(&c.to_string(), "a", "x", 10, c + 5)).collect();
        assert!(matches!(
            build_labels(&posts, 0.99, 1),
            Err(CorpusError::NotEnoughNonResonant { candidates: 0, resonant: 1 })
        ));
    }

    #[test]
    fn post_table_round_trip() {
        let posts = vec![post("1", "a", "Pizza, cheesy", 10, 2), post("2", "b", "Soup", 20, 0)];
        let labels = vec![
            LabelSet { engagement: true, resonance: Some(true) },
            LabelSet { engagement: false, resonance: None },
        ];
        let mut buf = Vec::new();
        write_post_table(&posts, &labels, &mut buf).unwrap();
        let (p2, l2) = read_post_table(buf.as_slice()).unwrap();
        assert_eq!(l2, labels);
        assert_eq!(p2[0].title_clean, "Pizza, cheesy");
        assert_eq!(p2[1].num_comments, 0);
    }
}
