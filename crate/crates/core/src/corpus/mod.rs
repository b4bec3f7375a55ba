//! Corpus data model, JSON-lines I/O, stratified splitting and validation.
//!
//! A corpus is two files: a JSON array of category records and a JSON-lines
//! file with one request per line:
//!
//! ```text
//! {"id":"r1","tokens":["I'm","hungry"],"given_category":3,"gold_categories":[3,7]}
//! ```
//!
//! `gold_categories` is only present on completely annotated splits (test).

mod stats;
mod synth;

pub use stats::{corpus_stats, fleiss_kappa, fleiss_kappa_counts, vote_summary};
pub use stats::{FunctionStats, MeanStd, StatsReport, VoteBucket, VoteRecord, VoteSummary};
pub use synth::{generate_synthetic, read_gold_sets, SynthConfig, SyntheticCorpus};

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three action groups categories belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Function {
    SpotSearch,
    RestaurantSearch,
    AppLaunch,
}

impl Function {
    pub const ALL: [Function; 3] = [
        Function::SpotSearch,
        Function::RestaurantSearch,
        Function::AppLaunch,
    ];

    pub fn index(self) -> usize {
        match self {
            Function::SpotSearch => 0,
            Function::RestaurantSearch => 1,
            Function::AppLaunch => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Function::SpotSearch => "spot_search",
            Function::RestaurantSearch => "restaurant_search",
            Function::AppLaunch => "app_launch",
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A pre-defined system action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: usize,
    pub name: String,
    pub function: Function,
    #[serde(alias = "template", default)]
    pub action_template: String,
}

/// One user utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub tokens: Vec<String>,
    pub given_category: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_categories: Option<BTreeSet<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "valid" | "validation" => Ok(SplitTag::Valid),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::InvalidConfig(format!("unknown split tag {other:?}"))),
        }
    }
}

/// A split of requests together with the category metadata they refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub categories: Vec<Category>,
    pub requests: Vec<Request>,
    pub split: SplitTag,
}

impl Dataset {
    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn given(&self) -> Vec<usize> {
        self.requests.iter().map(|r| r.given_category).collect()
    }

    /// Gold sets, falling back to `{given}` for requests without complete annotation.
    pub fn gold_or_given(&self) -> Vec<BTreeSet<usize>> {
        self.requests
            .iter()
            .map(|r| {
                r.gold_categories
                    .clone()
                    .unwrap_or_else(|| BTreeSet::from([r.given_category]))
            })
            .collect()
    }

    pub fn functions(&self) -> Vec<Function> {
        self.categories.iter().map(|c| c.function).collect()
    }

    /// Checks every request against the category table and the split's annotation contract.
    /// Line numbers in errors are 1-based request positions.
    pub fn validate(&self) -> Result<()> {
        validate_categories(&self.categories)?;
        for (idx, r) in self.requests.iter().enumerate() {
            validate_request(r, self.categories.len(), self.split, idx + 1)?;
        }
        Ok(())
    }
}

fn validate_categories(categories: &[Category]) -> Result<()> {
    if categories.len() < 2 {
        return Err(Error::InvalidCategories(format!(
            "need at least 2 categories, got {}",
            categories.len()
        )));
    }
    for (expected, c) in categories.iter().enumerate() {
        if c.id != expected {
            return Err(Error::InvalidCategories(format!(
                "category ids must be dense and sorted: position {expected} holds id {}",
                c.id
            )));
        }
    }
    Ok(())
}

fn validate_request(r: &Request, num_categories: usize, split: SplitTag, line: usize) -> Result<()> {
    if r.tokens.is_empty() {
        return Err(Error::EmptyTokens(r.id.clone()));
    }
    if r.given_category >= num_categories {
        return Err(Error::UnknownCategory {
            category: r.given_category,
            line,
        });
    }
    match &r.gold_categories {
        Some(gold) => {
            if let Some(&bad) = gold.iter().find(|&&c| c >= num_categories) {
                return Err(Error::UnknownCategory { category: bad, line });
            }
            if !gold.contains(&r.given_category) {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "gold_categories of {} does not contain given category {}",
                        r.id, r.given_category
                    ),
                });
            }
        }
        None if split == SplitTag::Test => return Err(Error::IncompleteGold(r.id.clone())),
        None => {}
    }
    Ok(())
}

pub fn load_categories(path: impl AsRef<Path>) -> Result<Vec<Category>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let categories: Vec<Category> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    validate_categories(&categories)?;
    Ok(categories)
}

/// Loads and validates a JSON-lines corpus. Blank lines are skipped but still counted.
pub fn load_corpus(
    path: impl AsRef<Path>,
    categories_path: impl AsRef<Path>,
    split: SplitTag,
) -> Result<Dataset> {
    let categories = load_categories(categories_path)?;
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut requests = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        validate_request(&request, categories.len(), split, line_no)?;
        requests.push(request);
    }
    Ok(Dataset {
        categories,
        requests,
        split,
    })
}

pub fn write_categories(categories: &[Category], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(categories)
        .map_err(|e| Error::InvalidCategories(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_corpus(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in &dataset.requests {
        let line = serde_json::to_string(r).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Converts a tab-separated corpus (`id<TAB>given<TAB>space separated tokens[<TAB>comma separated gold]`)
/// into canonical requests. Lines starting with `#` are ignored.
pub fn convert_tsv(text: &str) -> Result<Vec<Request>> {
    let mut requests = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let parse_id = |s: &str| {
            s.trim().parse::<usize>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad category id {s:?}: {e}"),
            })
        };
        let given_category = parse_id(fields[1])?;
        let tokens = fields[2].split_whitespace().map(str::to_owned).collect();
        let gold_categories = match fields.get(3).map(|s| s.trim()) {
            Some(s) if !s.is_empty() => Some(
                s.split(',')
                    .map(parse_id)
                    .collect::<Result<BTreeSet<usize>>>()?,
            ),
            _ => None,
        };
        requests.push(Request {
            id: fields[0].to_owned(),
            tokens,
            given_category,
            gold_categories,
        });
    }
    Ok(requests)
}

/// Per-category stratified split into (train, valid, test).
///
/// Each category's requests are shuffled with a seeded stream, then cut into
/// `round(n * r0)`, `round(n * r1)` and the remainder. Within each output the
/// input order is preserved. Outputs are tagged train/valid/test; the test
/// annotation contract is not enforced here since corpora are usually split
/// before complete annotation exists.
pub fn split_dataset(d: &Dataset, ratios: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InfeasibleSplit(format!("ratios must be non-negative: {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InfeasibleSplit(format!("ratios sum to {total}, expected 1")));
    }

    let c = d.category_count();
    let mut per_category: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (idx, r) in d.requests.iter().enumerate() {
        if r.given_category >= c {
            return Err(Error::UnknownCategory {
                category: r.given_category,
                line: idx + 1,
            });
        }
        per_category[r.given_category].push(idx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0u8; d.requests.len()];
    for (cat, members) in per_category.iter_mut().enumerate() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        let n0 = (n as f64 * ratios[0]).round() as usize;
        let n1 = (n as f64 * ratios[1]).round() as usize;
        if n0 + n1 > n {
            return Err(Error::InfeasibleSplit(format!(
                "category {cat} has {n} requests, cannot allocate {n0} + {n1}"
            )));
        }
        let counts = [n0, n1, n - n0 - n1];
        for (slot, (&count, &ratio)) in counts.iter().zip(ratios.iter()).enumerate() {
            if ratio > 0.0 && count == 0 {
                return Err(Error::InfeasibleSplit(format!(
                    "category {cat} has {n} requests, too few to populate split {slot} at ratio {ratio}"
                )));
            }
        }
        members.shuffle(&mut rng);
        for (pos, &idx) in members.iter().enumerate() {
            assignment[idx] = if pos < n0 {
                0
            } else if pos < n0 + n1 {
                1
            } else {
                2
            };
        }
    }

    let pick = |slot: u8, split: SplitTag| Dataset {
        categories: d.categories.clone(),
        requests: d
            .requests
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == slot)
            .map(|(r, _)| r.clone())
            .collect(),
        split,
    };
    Ok((
        pick(0, SplitTag::Train),
        pick(1, SplitTag::Valid),
        pick(2, SplitTag::Test),
    ))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn categories(n: usize) -> Vec<Category> {
        (0..n)
            .map(|id| Category {
                id,
                name: format!("cat{id}"),
                function: Function::ALL[id % 3],
                action_template: format!("do {id}"),
            })
            .collect()
    }

    pub fn request(id: &str, tokens: &[&str], given: usize, gold: Option<&[usize]>) -> Request {
        Request {
            id: id.to_owned(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            given_category: given,
            gold_categories: gold.map(|g| g.iter().copied().collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use std::collections::HashSet;

    fn write_fixture(dir: &Path, lines: &[&str], n_categories: usize) -> (std::path::PathBuf, std::path::PathBuf) {
        let corpus = dir.join("corpus.jsonl");
        let cats = dir.join("categories.json");
        fs::write(&corpus, lines.join("\n")).unwrap();
        write_categories(&categories(n_categories), &cats).unwrap();
        (corpus, cats)
    }

    #[test]
    fn loads_valid_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, cats) = write_fixture(
            dir.path(),
            &[
                r#"{"id":"a","tokens":["x","y"],"given_category":0}"#,
                r#"{"id":"b","tokens":["y"],"given_category":1}"#,
                r#"{"id":"c","tokens":["z"],"given_category":1,"gold_categories":[0,1]}"#,
            ],
            2,
        );
        let d = load_corpus(&corpus, &cats, SplitTag::Train).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.category_count(), 2);
        assert_eq!(d.requests[2].gold_categories, Some(BTreeSet::from([0, 1])));
    }

    #[test]
    fn unknown_category_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, cats) = write_fixture(
            dir.path(),
            &[
                r#"{"id":"a","tokens":["x"],"given_category":0}"#,
                r#"{"id":"b","tokens":["x"],"given_category":99}"#,
            ],
            70,
        );
        let err = load_corpus(&corpus, &cats, SplitTag::Train).unwrap_err();
        assert_eq!(err.to_string(), "unknown category 99 at line 2");
    }

    #[test]
    fn test_split_requires_gold() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, cats) = write_fixture(
            dir.path(),
            &[
                r#"{"id":"a","tokens":["x"],"given_category":0,"gold_categories":[0]}"#,
                r#"{"id":"b","tokens":["x"],"given_category":1}"#,
            ],
            2,
        );
        let err = load_corpus(&corpus, &cats, SplitTag::Test).unwrap_err();
        assert!(err.to_string().contains("incomplete gold labels"), "{err}");
    }

    #[test]
    fn empty_tokens_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, cats) = write_fixture(dir.path(), &[r#"{"id":"a","tokens":[],"given_category":0}"#], 2);
        assert!(matches!(
            load_corpus(&corpus, &cats, SplitTag::Train),
            Err(Error::EmptyTokens(_))
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, cats) = write_fixture(
            dir.path(),
            &[r#"{"id":"a","tokens":["x"],"given_category":0}"#, "{not json"],
            2,
        );
        match load_corpus(&corpus, &cats, SplitTag::Train) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gold_must_contain_given() {
        let r = request("a", &["x"], 1, Some(&[0]));
        assert!(validate_request(&r, 2, SplitTag::Test, 1).is_err());
    }

    #[test]
    fn non_dense_category_ids_rejected() {
        let mut cats = categories(3);
        cats[2].id = 5;
        assert!(validate_categories(&cats).is_err());
    }

    fn grid_dataset(n_categories: usize, per_category: usize) -> Dataset {
        let requests = (0..n_categories * per_category)
            .map(|i| request(&format!("r{i}"), &["t"], i % n_categories, None))
            .collect();
        Dataset {
            categories: categories(n_categories),
            requests,
            split: SplitTag::Train,
        }
    }

    #[test]
    fn stratified_split_is_exact_on_divisible_counts() {
        let d = grid_dataset(10, 10);
        let (a, b, c) = split_dataset(&d, [0.8, 0.1, 0.1], 7).unwrap();
        for cat in 0..10 {
            let count = |s: &Dataset| s.requests.iter().filter(|r| r.given_category == cat).count();
            assert_eq!((count(&a), count(&b), count(&c)), (8, 1, 1));
        }
        let ids: HashSet<_> = a.requests.iter().chain(&b.requests).chain(&c.requests).map(|r| r.id.clone()).collect();
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn identity_split() {
        let d = grid_dataset(3, 4);
        let (a, b, c) = split_dataset(&d, [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(a.requests, d.requests);
        assert!(b.is_empty() && c.is_empty());
    }

    #[test]
    fn split_is_deterministic() {
        let d = grid_dataset(5, 9);
        let x = split_dataset(&d, [0.6, 0.2, 0.2], 42).unwrap();
        let y = split_dataset(&d, [0.6, 0.2, 0.2], 42).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn infeasible_split_errors() {
        let d = grid_dataset(4, 3);
        assert!(matches!(
            split_dataset(&d, [0.9, 0.05, 0.05], 0),
            Err(Error::InfeasibleSplit(_))
        ));
        assert!(split_dataset(&d, [0.5, 0.2, 0.2], 0).is_err());
    }

    #[test]
    fn tsv_conversion() {
        let text = "# header\nq1\t2\tI am hungry\t2,5\nq2\t0\tnice view\n";
        let reqs = convert_tsv(text).unwrap();
        assert_eq!(reqs.len(), 2);
        assert_eq!(reqs[0].tokens, vec!["I", "am", "hungry"]);
        assert_eq!(reqs[0].gold_categories, Some(BTreeSet::from([2, 5])));
        assert_eq!(reqs[1].gold_categories, None);
        assert!(convert_tsv("bad line").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_partitions_input(
                n_categories in 2usize..6,
                per_category in 3usize..15,
                seed in any::<u64>(),
                a in 0.2f64..0.8,
            ) {
                let d = grid_dataset(n_categories, per_category);
                let b = (1.0 - a) / 2.0;
                let ratios = [a, b, 1.0 - a - b];
                if let Ok((x, y, z)) = split_dataset(&d, ratios, seed) {
                    let mut ids: Vec<_> = x.requests.iter().chain(&y.requests).chain(&z.requests).map(|r| r.id.clone()).collect();
                    prop_assert_eq!(ids.len(), d.len());
                    ids.sort();
                    ids.dedup();
                    prop_assert_eq!(ids.len(), d.len());
                    for cat in 0..n_categories {
                        let count = x.requests.iter().filter(|r| r.given_category == cat).count();
                        let expected = per_category as f64 * a;
                        prop_assert!((count as f64 - expected).abs() <= 0.5 + 1e-9);
                    }
                }
            }
        }
    }
}
