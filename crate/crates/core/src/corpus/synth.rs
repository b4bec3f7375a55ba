//! Synthetic corpora with incomplete training annotation and complete test annotation.
//!
//! Function centres are drawn from a unit normal, category prototypes scatter
//! around their function centre, and each request is its seed prototype plus
//! isotropic noise. A request's gold set is every category whose prototype lies
//! within `gold_radius` of the request vector, plus the seed itself. Training
//! requests only carry the seed as `given_category`; their full gold sets are
//! returned separately so propagation quality can be judged.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_categories, write_corpus, Category, Dataset, Function, Request, SplitTag};
use crate::encoder::{EmbeddingTable, OovPolicy, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_categories: usize,
    pub num_functions: usize,
    pub train_per_category: usize,
    pub valid_per_category: usize,
    pub test_per_category: usize,
    pub embedding_dim: usize,
    /// Scale of the function centres around the origin.
    pub function_spread: f64,
    /// Scale of category prototypes around their function centre.
    pub prototype_spread: f64,
    pub noise_scale: f64,
    pub gold_radius: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_categories: 20,
            num_functions: 3,
            train_per_category: 100,
            valid_per_category: 10,
            test_per_category: 20,
            embedding_dim: 16,
            function_spread: 1.0,
            prototype_spread: 0.5,
            noise_scale: 0.3,
            gold_radius: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_categories < 2 {
            return bad(format!("num_categories must be >= 2, got {}", self.num_categories));
        }
        if !(1..=Function::ALL.len()).contains(&self.num_functions) {
            return bad(format!("num_functions must be in 1..=3, got {}", self.num_functions));
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if self.gold_radius.is_nan() || self.gold_radius <= 0.0 {
            return bad(format!("gold_radius must be positive, got {}", self.gold_radius));
        }
        for (name, v) in [
            ("function_spread", self.function_spread),
            ("prototype_spread", self.prototype_spread),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative real, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    pub embeddings: EmbeddingTable,
    pub prototypes: Vec<Vector>,
    /// Complete gold sets of the training requests, hidden from training.
    pub train_gold: Vec<BTreeSet<usize>>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("standard deviation validated as finite and non-negative")
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let dim = cfg.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let function_of = |c: usize| c * cfg.num_functions / cfg.num_categories;
    let categories: Vec<Category> = (0..cfg.num_categories)
        .map(|id| {
            let function = Function::ALL[function_of(id)];
            Category {
                id,
                name: format!("{}_{id:02}", function.as_str()),
                function,
                action_template: format!("invoke action {id}"),
            }
        })
        .collect();

    let centre_dist = normal(cfg.function_spread);
    let centres: Vec<Vector> = (0..cfg.num_functions)
        .map(|_| (0..dim).map(|_| centre_dist.sample(&mut rng)).collect())
        .collect();
    let proto_dist = normal(cfg.prototype_spread);
    let prototypes: Vec<Vector> = (0..cfg.num_categories)
        .map(|c| {
            centres[function_of(c)]
                .iter()
                .map(|m| m + proto_dist.sample(&mut rng))
                .collect()
        })
        .collect();

    let noise = normal(cfg.noise_scale);
    let mut embeddings = EmbeddingTable::new(dim, OovPolicy::ZeroVector)?;
    let mut make_split = |prefix: &str, per_category: usize, rng: &mut ChaCha8Rng| -> Result<(Vec<Request>, Vec<BTreeSet<usize>>)> {
        let mut requests = Vec::with_capacity(per_category * cfg.num_categories);
        let mut golds = Vec::with_capacity(requests.capacity());
        for i in 0..per_category {
            for (c, proto) in prototypes.iter().enumerate() {
                let v: Vector = proto.iter().map(|p| p + noise.sample(rng)).collect();
                let mut gold: BTreeSet<usize> = prototypes
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| euclidean(&v, p) <= cfg.gold_radius)
                    .map(|(j, _)| j)
                    .collect();
                gold.insert(c);
                let token = format!("{prefix}{:06}", i * cfg.num_categories + c);
                embeddings.insert(token.clone(), v)?;
                requests.push(Request {
                    id: token.clone(),
                    tokens: vec![token],
                    given_category: c,
                    gold_categories: Some(gold.clone()),
                });
                golds.push(gold);
            }
        }
        Ok((requests, golds))
    };

    let (mut train_requests, train_gold) = make_split("tr", cfg.train_per_category, &mut rng)?;
    for r in &mut train_requests {
        r.gold_categories = None;
    }
    let (valid_requests, _) = make_split("va", cfg.valid_per_category, &mut rng)?;
    let (test_requests, _) = make_split("te", cfg.test_per_category, &mut rng)?;

    let dataset = |requests, split| Dataset {
        categories: categories.clone(),
        requests,
        split,
    };
    Ok(SyntheticCorpus {
        train: dataset(train_requests, SplitTag::Train),
        valid: dataset(valid_requests, SplitTag::Valid),
        test: dataset(test_requests, SplitTag::Test),
        embeddings,
        prototypes,
        train_gold,
    })
}

impl SyntheticCorpus {
    /// Writes `categories.json`, `{train,valid,test}.jsonl`, `embeddings.txt` and
    /// the hidden training gold sets as `train_gold.jsonl` (one JSON array per line).
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_categories(&self.train.categories, dir.join("categories.json"))?;
        write_corpus(&self.train, dir.join("train.jsonl"))?;
        write_corpus(&self.valid, dir.join("valid.jsonl"))?;
        write_corpus(&self.test, dir.join("test.jsonl"))?;
        self.embeddings.write_text(dir.join("embeddings.txt"))?;
        let mut gold = String::new();
        for g in &self.train_gold {
            gold.push_str(&serde_json::to_string(g).expect("serializing integer sets cannot fail"));
            gold.push('\n');
        }
        let path = dir.join("train_gold.jsonl");
        std::fs::write(&path, gold).map_err(|e| Error::io(path, e))
    }
}

pub fn read_gold_sets(path: impl AsRef<Path>) -> Result<Vec<BTreeSet<usize>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::encode;

    fn small() -> SynthConfig {
        SynthConfig {
            num_categories: 5,
            train_per_category: 4,
            valid_per_category: 2,
            test_per_category: 10,
            embedding_dim: 4,
            seed: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn sizes_and_gold_contain_given() {
        let s = generate_synthetic(&small()).unwrap();
        assert_eq!(s.test.len(), 50);
        assert_eq!(s.train.len(), 20);
        assert_eq!(s.valid.len(), 10);
        assert!(s.train.requests.iter().all(|r| r.gold_categories.is_none()));
        for r in &s.test.requests {
            assert!(r.gold_categories.as_ref().unwrap().contains(&r.given_category));
        }
        s.test.validate().unwrap();
        s.train.validate().unwrap();
        assert_eq!(s.train_gold.len(), s.train.len());
    }

    #[test]
    fn gold_sets_agree_with_brute_force_scan() {
        let s = generate_synthetic(&SynthConfig { noise_scale: 0.6, ..small() }).unwrap();
        for r in &s.test.requests {
            let x = encode(r, &s.embeddings).unwrap();
            let mut expected = BTreeSet::from([r.given_category]);
            for (j, p) in s.prototypes.iter().enumerate() {
                let d2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2.sqrt() <= 1.0 {
                    expected.insert(j);
                }
            }
            assert_eq!(r.gold_categories.as_ref().unwrap(), &expected);
        }
    }

    #[test]
    fn zero_noise_small_radius_gives_singleton_gold() {
        let base = SynthConfig { noise_scale: 0.0, ..small() };
        let protos = generate_synthetic(&base).unwrap().prototypes;
        let mut min_dist = f64::INFINITY;
        for a in 0..protos.len() {
            for b in a + 1..protos.len() {
                min_dist = min_dist.min(euclidean(&protos[a], &protos[b]));
            }
        }
        let s = generate_synthetic(&SynthConfig { gold_radius: min_dist * 0.5, ..base }).unwrap();
        for r in &s.test.requests {
            assert_eq!(r.gold_categories.as_ref().unwrap(), &BTreeSet::from([r.given_category]));
        }
        for g in &s.train_gold {
            assert_eq!(g.len(), 1);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.embeddings.to_text().unwrap(), b.embeddings.to_text().unwrap());
        let c = generate_synthetic(&SynthConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(a.prototypes, c.prototypes);
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(generate_synthetic(&SynthConfig { num_categories: 1, ..small() }).is_err());
        assert!(generate_synthetic(&SynthConfig { gold_radius: 0.0, ..small() }).is_err());
        assert!(generate_synthetic(&SynthConfig { num_functions: 4, ..small() }).is_err());
        assert!(generate_synthetic(&SynthConfig { noise_scale: -1.0, ..small() }).is_err());
    }

    #[test]
    fn categories_grouped_into_functions() {
        let s = generate_synthetic(&SynthConfig { num_categories: 20, ..small() }).unwrap();
        let funcs = s.train.functions();
        assert_eq!(funcs[0], Function::SpotSearch);
        assert_eq!(funcs[19], Function::AppLaunch);
        assert!(funcs.windows(2).all(|w| w[0] <= w[1]));
    }
}
