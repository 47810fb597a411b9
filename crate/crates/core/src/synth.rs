//! Seeded generators for entity-resolution test data.
//!
//! Two profiles imitate well-known benchmark shapes: `ds` (bibliographic
//! records, one clean source against a large noisy one, blocking at 0.2) and
//! `ab` (product listings from two shops, blocking at 0.05). Records go
//! through the regular blocking path, so generated data exercises exactly the
//! code that real files do.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{AttrValue, CandidatePair, RecordEntity};
use crate::error::{Error, Result};
use crate::ingest::{
    align_truth, block_records, AttributeSpec, DatasetSpec, GroundTruth, SimilarityKind, Workload,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Ds,
    Ab,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ds" => Ok(Profile::Ds),
            "ab" => Ok(Profile::Ab),
            other => Err(Error::Config(format!("unknown synthetic profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub profile: Profile,
    /// Fraction of the full-size entity count to generate.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SynthSpec {
    pub fn new(profile: Profile, scale: f64, seed: u64) -> Self {
        SynthSpec { profile, scale, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale <= 4.0) {
            return Err(Error::Config(format!("synthetic scale must lie in (0,4], got {}", self.scale)));
        }
        Ok(())
    }
}

/// Generated sources, matches and the schema to block them with.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub name: String,
    pub left: Vec<RecordEntity>,
    pub right: Vec<RecordEntity>,
    pub matches: Vec<(String, String)>,
    pub attributes: Vec<AttributeSpec>,
    pub threshold: f64,
}

impl SynthData {
    pub fn build(&self) -> Result<(Workload, GroundTruth)> {
        let w = block_records(
            &self.name,
            &self.attributes,
            self.threshold,
            self.left.clone(),
            Some(self.right.clone()),
        )?;
        let t = align_truth(&w, &self.matches)?;
        Ok((w, t))
    }

    /// Writes `left.csv`, `right.csv`, `matches.csv` and `dataset.toml` into
    /// `dir` and returns the spec pointing at them.
    pub fn write(&self, dir: &Path) -> Result<DatasetSpec> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cols: Vec<String> = self.attributes.iter().map(|a| a.column.clone()).collect();
        write_records(&dir.join("left.csv"), &cols, &self.left)?;
        write_records(&dir.join("right.csv"), &cols, &self.right)?;
        let truth = dir.join("matches.csv");
        let mut w = csv::Writer::from_path(&truth).map_err(|e| Error::parse(&truth, e.to_string()))?;
        let csv_err = |e: csv::Error| Error::parse(&truth, e.to_string());
        w.write_record(["left_id", "right_id"]).map_err(csv_err)?;
        for (a, b) in &self.matches {
            w.write_record([a, b]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&truth, e))?;
        let spec = DatasetSpec {
            name: self.name.clone(),
            left: "left.csv".into(),
            right: Some("right.csv".into()),
            ground_truth: "matches.csv".into(),
            id_column: "id".into(),
            delimiter: ',',
            threshold: self.threshold,
            attributes: self.attributes.clone(),
        };
        let toml_path = dir.join("dataset.toml");
        std::fs::write(&toml_path, spec.to_toml()).map_err(|e| Error::io(&toml_path, e))?;
        let mut resolved = spec;
        resolved.resolve_relative(dir);
        Ok(resolved)
    }
}

fn write_records(path: &Path, cols: &[String], records: &[RecordEntity]) -> Result<()> {
    let err = |e: csv::Error| Error::parse(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["id".to_string()];
    header.extend(cols.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for r in records {
        let mut row = vec![r.id.clone()];
        for c in cols {
            row.push(match r.get(c) {
                Some(AttrValue::Text(s)) => s.clone(),
                Some(AttrValue::Number(x)) => x.to_string(),
                _ => String::new(),
            });
        }
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x51_7e_da_7a);
    Ok(match spec.profile {
        Profile::Ds => bibliographic(&mut rng, spec.scale),
        Profile::Ab => products(&mut rng, spec.scale),
    })
}

/// Generates and blocks in one step.
pub fn build(spec: &SynthSpec) -> Result<(Workload, GroundTruth)> {
    generate(spec)?.build()
}

/// Rank-frequency sampler over a fixed list.
struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, exponent: f64) -> Self {
        let mut acc = 0.0;
        let cdf = (1..=n)
            .map(|r| {
                acc += 1.0 / (r as f64).powf(exponent);
                acc
            })
            .collect();
        Zipf { cdf }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let u = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(0.0);
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

fn pseudo_words(rng: &mut impl Rng, n: usize, min_syl: usize, max_syl: usize) -> Vec<String> {
    const C: &[&str] = &[
        "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "ch",
        "st", "tr", "pl", "gr",
    ];
    const V: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ea"];
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syl = rng.random_range(min_syl..=max_syl);
        let mut w = String::new();
        for _ in 0..syl {
            w.push_str(C.choose(rng).unwrap());
            w.push_str(V.choose(rng).unwrap());
        }
        if rng.random::<f64>() < 0.3 {
            w.push_str(C.choose(rng).unwrap());
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn typo(rng: &mut impl Rng, word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() < 3 {
        return word.to_string();
    }
    let i = rng.random_range(1..chars.len());
    match rng.random_range(0..3) {
        0 => {
            chars.remove(i);
        }
        1 => chars.swap(i - 1, i),
        _ => chars[i] = (b'a' + rng.random_range(0..26u8)) as char,
    }
    chars.into_iter().collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn text(v: &str) -> AttrValue {
    if v.trim().is_empty() {
        AttrValue::Missing
    } else {
        AttrValue::Text(v.to_string())
    }
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(4)
}

struct Paper {
    topic: usize,
    title: Vec<usize>,
    authors: Vec<(usize, usize)>,
    venue: usize,
}

const VENUES: &[(&str, &str)] = &[
    ("SIGMOD Conference", "Proc. ACM SIGMOD Int. Conf. on Management of Data"),
    ("VLDB", "Very Large Data Bases"),
    ("ICDE", "Proc. Int. Conf. on Data Engineering"),
    ("ACM Trans. Database Syst.", "ACM TODS"),
    ("SIGMOD Record", "ACM SIGMOD Record"),
    ("VLDB J.", "The VLDB Journal"),
];

/// Papers per research topic. Papers of one topic share title words and
/// authors, which is what makes different papers look alike.
const TOPIC_SIZE: usize = 16;
const TOPIC_WORDS: usize = 6;
const TOPIC_AUTHORS: usize = 10;

/// Bibliographic profile: titles, author lists and venue.
fn bibliographic(rng: &mut ChaCha8Rng, scale: f64) -> SynthData {
    let vocab = pseudo_words(rng, 8000, 2, 4);
    let given = pseudo_words(rng, 900, 1, 3);
    let surnames = pseudo_words(rng, 8000, 2, 3);
    let word_z = Zipf::new(vocab.len(), 0.92);
    let given_z = Zipf::new(given.len(), 0.8);
    let sur_z = Zipf::new(surnames.len(), 0.5);

    let n_left = scaled(2616, scale);
    let n_topics = n_left.div_ceil(TOPIC_SIZE);
    let topic_words: Vec<Vec<usize>> = (0..n_topics)
        .map(|_| {
            let mut pool = Vec::with_capacity(TOPIC_WORDS);
            while pool.len() < TOPIC_WORDS {
                let w = word_z.sample(rng);
                if !pool.contains(&w) {
                    pool.push(w);
                }
            }
            pool
        })
        .collect();
    let topic_authors: Vec<Vec<(usize, usize)>> = (0..n_topics)
        .map(|_| (0..TOPIC_AUTHORS).map(|_| (given_z.sample(rng), sur_z.sample(rng))).collect())
        .collect();

    let draw_title = |rng: &mut ChaCha8Rng, topic: usize, from_topic: usize, general: usize| -> Vec<usize> {
        let mut t: Vec<usize> = Vec::with_capacity(from_topic + general);
        let pool = &topic_words[topic];
        while t.len() < from_topic.min(pool.len()) {
            let w = *pool.choose(rng).unwrap();
            if !t.contains(&w) {
                t.push(w);
            }
        }
        let target = t.len() + general;
        while t.len() < target {
            let w = word_z.sample(rng);
            if !t.contains(&w) {
                t.push(w);
            }
        }
        t
    };
    let draw_authors = |rng: &mut ChaCha8Rng, topic: usize, k: usize, p_topic: f64| -> Vec<(usize, usize)> {
        let mut a: Vec<(usize, usize)> = Vec::with_capacity(k);
        while a.len() < k {
            let x = if rng.random::<f64>() < p_topic {
                *topic_authors[topic].choose(rng).unwrap()
            } else {
                (given_z.sample(rng), sur_z.sample(rng))
            };
            if !a.contains(&x) {
                a.push(x);
            }
        }
        a
    };
    let papers: Vec<Paper> = (0..n_left)
        .map(|i| {
            let topic = i / TOPIC_SIZE;
            let (tw, gw) = (rng.random_range(2..=4), rng.random_range(2..=4));
            let k = rng.random_range(1..=4);
            Paper {
                topic,
                title: draw_title(rng, topic, tw, gw),
                authors: draw_authors(rng, topic, k, 0.5),
                venue: rng.random_range(0..VENUES.len()),
            }
        })
        .collect();

    let render_title = |words: &[usize]| -> String {
        words
            .iter()
            .enumerate()
            .map(|(i, &w)| if i == 0 { capitalize(&vocab[w]) } else { vocab[w].clone() })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let full_names = |authors: &[(usize, usize)]| -> String {
        authors
            .iter()
            .map(|&(g, s)| format!("{} {}", capitalize(&given[g]), capitalize(&surnames[s])))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let initials = |authors: &[(usize, usize)]| -> String {
        authors
            .iter()
            .map(|&(g, s)| format!("{} {}", given[g][..1].to_uppercase(), capitalize(&surnames[s])))
            .collect::<Vec<_>>()
            .join(", ")
    };

    let left: Vec<RecordEntity> = papers
        .iter()
        .enumerate()
        .map(|(i, p)| RecordEntity {
            id: format!("d{i}"),
            attributes: vec![
                ("title".into(), text(&render_title(&p.title))),
                ("authors".into(), text(&full_names(&p.authors))),
                ("venue".into(), text(VENUES[p.venue].0)),
            ],
        })
        .collect();

    let mut right = Vec::new();
    let mut matches = Vec::new();
    let push = |right: &mut Vec<RecordEntity>, title: String, authors: String, venue: String| {
        let id = format!("s{}", right.len());
        right.push(RecordEntity {
            id: id.clone(),
            attributes: vec![
                ("title".into(), text(&title)),
                ("authors".into(), text(&authors)),
                ("venue".into(), text(&venue)),
            ],
        });
        id
    };
    let style = |rng: &mut ChaCha8Rng, a: &[(usize, usize)], p_initials: f64| {
        if rng.random::<f64>() < p_initials {
            initials(a)
        } else {
            full_names(a)
        }
    };
    for (i, p) in papers.iter().enumerate() {
        // Noisy copies of the paper itself.
        let copies = match rng.random::<f64>() {
            u if u < 0.04 => 0,
            u if u < 0.30 => 1,
            u if u < 0.64 => 2,
            u if u < 0.86 => 3,
            _ => 4,
        };
        for _ in 0..copies {
            let heavy = rng.random::<f64>() < 0.3;
            let drop = if heavy { 0.3 } else { 0.1 };
            let mut words: Vec<usize> = p.title.iter().copied().filter(|_| rng.random::<f64>() >= drop).collect();
            if words.is_empty() {
                words.push(p.title[0]);
            }
            if rng.random::<f64>() < if heavy { 0.6 } else { 0.1 } {
                let k = rng.random_range(1..=4);
                words.extend(draw_title(rng, p.topic, 0, k));
            }
            let title = render_title(&words)
                .split(' ')
                .map(|w| if rng.random::<f64>() < 0.05 { typo(rng, w) } else { w.to_string() })
                .collect::<Vec<_>>()
                .join(" ");
            let authors = if heavy && rng.random::<f64>() < 0.15 {
                String::new()
            } else {
                let mut a = p.authors.clone();
                if a.len() > 1 && rng.random::<f64>() < 0.2 {
                    a.truncate(1);
                }
                style(rng, &a, 0.3)
            };
            let venue = match rng.random_range(0..3) {
                0 => VENUES[p.venue].0.to_string(),
                1 => VENUES[p.venue].1.to_string(),
                _ => String::new(),
            };
            let id = push(&mut right, title, authors, venue);
            matches.push((format!("d{i}"), id));
        }
        // Other papers of the same topic.
        for _ in 0..rng.random_range(16..=30) {
            let (tw, gw) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let title = render_title(&draw_title(rng, p.topic, tw, gw));
            let k = rng.random_range(2..=4);
            let mut authors = draw_authors(rng, p.topic, k, 0.8);
            if rng.random::<f64>() < 0.8 {
                let anchor = *p.authors.choose(rng).unwrap();
                if !authors.contains(&anchor) {
                    authors[0] = anchor;
                }
            }
            let authors = style(rng, &authors, 0.6);
            let v = rng.random_range(0..VENUES.len());
            let venue = if rng.random::<bool>() { VENUES[v].0 } else { VENUES[v].1 };
            push(&mut right, title, authors, venue.to_string());
        }
    }
    SynthData {
        name: "ds-synth".into(),
        left,
        right,
        matches,
        attributes: vec![
            AttributeSpec { column: "title".into(), kind: SimilarityKind::JaccardToken, weight: None },
            AttributeSpec { column: "authors".into(), kind: SimilarityKind::JaccardToken, weight: None },
            AttributeSpec { column: "venue".into(), kind: SimilarityKind::JaroWinkler, weight: None },
        ],
        threshold: 0.2,
    }
}

/// Product profile: a name with brand, model code and category words, plus
/// a long free-text description.
fn products(rng: &mut ChaCha8Rng, scale: f64) -> SynthData {
    let brands = pseudo_words(rng, 70, 2, 3);
    let feature_words = pseudo_words(rng, 2500, 1, 3);
    let categories: Vec<Vec<usize>> = (0..45)
        .map(|_| (0..rng.random_range(1..=3)).map(|_| rng.random_range(0..feature_words.len())).collect())
        .collect();
    let feat_z = Zipf::new(feature_words.len(), 0.955);
    let brand_z = Zipf::new(brands.len(), 1.0);
    let cat_z = Zipf::new(categories.len(), 0.9);

    struct Product {
        brand: usize,
        category: usize,
        code: String,
        features: Vec<usize>,
        description: Vec<usize>,
    }
    let n = scaled(1081, scale);
    let prods: Vec<Product> = (0..n)
        .map(|_| {
            let letters: String = (0..rng.random_range(2..=3)).map(|_| (b'A' + rng.random_range(0..26u8)) as char).collect();
            let digits: u32 = rng.random_range(10..99_999);
            let suffix: String = (0..rng.random_range(0..=2)).map(|_| (b'A' + rng.random_range(0..26u8)) as char).collect();
            let features = (0..rng.random_range(2..=5)).map(|_| feat_z.sample(rng)).collect();
            let description = (0..rng.random_range(25..=70)).map(|_| feat_z.sample(rng)).collect();
            Product {
                brand: brand_z.sample(rng),
                category: cat_z.sample(rng),
                code: format!("{letters}{digits}{suffix}"),
                features,
                description,
            }
        })
        .collect();

    let words = |idx: &[usize]| idx.iter().map(|&i| feature_words[i].clone()).collect::<Vec<_>>().join(" ");
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n + n / 100);
    let mut matches = Vec::new();
    for (i, p) in prods.iter().enumerate() {
        let name = format!(
            "{} {} {} - {}",
            capitalize(&brands[p.brand]),
            words(&p.features),
            words(&categories[p.category]),
            p.code
        );
        left.push(RecordEntity {
            id: format!("a{i}"),
            attributes: vec![("name".into(), text(&name)), ("description".into(), text(&words(&p.description)))],
        });
    }
    for (i, p) in prods.iter().enumerate() {
        if rng.random::<f64>() < 0.005 {
            continue;
        }
        let code = match rng.random_range(0..4) {
            0 => p.code.clone(),
            1 => {
                let cut = p.code.find(|c: char| c.is_ascii_digit()).unwrap_or(0);
                format!("{}-{}", &p.code[..cut], &p.code[cut..])
            }
            2 => p.code.to_lowercase(),
            _ => format!("{}/{}", p.code, (b'A' + rng.random_range(0..26u8)) as char),
        };
        let mut feats: Vec<usize> = p.features.iter().copied().filter(|_| rng.random::<f64>() < 0.5).collect();
        feats.extend((0..rng.random_range(0..=3)).map(|_| feat_z.sample(rng)));
        let brand = if rng.random::<f64>() < 0.9 { capitalize(&brands[p.brand]) } else { String::new() };
        let name = format!("{brand} {} {} {code}", words(&categories[p.category]), words(&feats));
        let description = if rng.random::<f64>() < 0.5 {
            String::new()
        } else {
            let mut d: Vec<usize> = p.description.iter().copied().filter(|_| rng.random::<f64>() < 0.35).collect();
            d.extend((0..rng.random_range(5..=25)).map(|_| feat_z.sample(rng)));
            words(&d)
        };
        let id = format!("b{}", right.len());
        right.push(RecordEntity {
            id: id.clone(),
            attributes: vec![("name".into(), text(&name)), ("description".into(), text(&description))],
        });
        matches.push((format!("a{i}"), id));
    }
    // A few listings without a counterpart.
    for _ in 0..(n / 60).max(1) {
        let p = &prods[rng.random_range(0..n)];
        let name = format!(
            "{} {} {}",
            capitalize(&brands[brand_z.sample(rng)]),
            words(&categories[p.category]),
            words(&(0..3).map(|_| feat_z.sample(rng)).collect::<Vec<_>>())
        );
        let description = words(&(0..rng.random_range(10..=40)).map(|_| feat_z.sample(rng)).collect::<Vec<_>>());
        let id = format!("b{}", right.len());
        right.push(RecordEntity {
            id,
            attributes: vec![("name".into(), text(&name)), ("description".into(), text(&description))],
        });
    }
    SynthData {
        name: "ab-synth".into(),
        left,
        right,
        matches,
        attributes: vec![
            AttributeSpec { column: "name".into(), kind: SimilarityKind::JaccardToken, weight: None },
            AttributeSpec { column: "description".into(), kind: SimilarityKind::JaccardToken, weight: None },
        ],
        threshold: 0.05,
    }
}

/// A workload whose metric-ordered blocks of `subset_size` pairs have the
/// given equivalence proportions. Equivalent pairs share more tokens than
/// inequivalent ones, so the risk model has something to learn. Returns the
/// workload and its ground truth aligned with `pairs`.
pub fn proportion_workload(proportions: &[f64], subset_size: usize, seed: u64) -> (Workload, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = proportions.len();
    let total = m * subset_size;
    let mut left = Vec::with_capacity(total);
    let mut right = Vec::with_capacity(total);
    let mut left_tokens = Vec::with_capacity(total);
    let mut right_tokens = Vec::with_capacity(total);
    let mut pairs = Vec::with_capacity(total);
    let mut truth = Vec::with_capacity(total);
    for (k, &p) in proportions.iter().enumerate() {
        let equiv = (p * subset_size as f64).round() as usize;
        let mut flags: Vec<bool> = (0..subset_size).map(|i| i < equiv).collect();
        for i in (1..flags.len()).rev() {
            flags.swap(i, rng.random_range(0..=i));
        }
        for (j, &e) in flags.iter().enumerate() {
            let idx = k * subset_size + j;
            let metric = (k as f64 + (j as f64 + 0.5) / subset_size as f64) / m as f64;
            let shared = if e { 0.85 } else { 0.15 };
            let mut l: Vec<u32> = Vec::new();
            let mut r: Vec<u32> = Vec::new();
            for t in 0..40u32 {
                let u: f64 = rng.random();
                if u < 0.15 {
                    l.push(t);
                    if rng.random::<f64>() < shared {
                        r.push(t);
                    }
                } else if u < 0.2 {
                    r.push(t);
                }
            }
            left.push(RecordEntity { id: format!("l{idx}"), attributes: vec![] });
            right.push(RecordEntity { id: format!("r{idx}"), attributes: vec![] });
            left_tokens.push(l);
            right_tokens.push(r);
            pairs.push(CandidatePair {
                pair_id: crate::datamodel::pair_id(idx, idx),
                left: idx,
                right: idx,
                attr_sims: vec![metric],
                metric,
                label: Default::default(),
                sampled: false,
            });
            truth.push(e);
        }
    }
    let w = Workload {
        name: "proportions".into(),
        attributes: vec![],
        weights: vec![1.0],
        threshold: 0.0,
        single_source: false,
        left,
        right,
        left_tokens,
        right_tokens,
        vocab: (0..40).map(|t| format!("t{t}")).collect(),
        pairs,
    };
    (w, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec::new(Profile::Ds, 0.05, 3);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.right, b.right);
        assert_eq!(a.matches, b.matches);
        let c = generate(&SynthSpec::new(Profile::Ds, 0.05, 4)).unwrap();
        assert_ne!(a.right, c.right);
    }

    #[test]
    fn blocked_pairs_respect_threshold() {
        for profile in [Profile::Ds, Profile::Ab] {
            let (w, t) = build(&SynthSpec::new(profile, 0.05, 1)).unwrap();
            assert!(!w.is_empty());
            assert!(w.pairs.iter().all(|p| p.metric >= w.threshold));
            assert_eq!(t.equivalent.len(), w.len());
            assert!(t.equivalent_count() > 0);
        }
    }

    #[test]
    fn written_files_round_trip_through_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&SynthSpec::new(Profile::Ab, 0.03, 2)).unwrap();
        data.write(dir.path()).unwrap();
        let spec = DatasetSpec::from_toml_file(dir.path().join("dataset.toml")).unwrap();
        let (from_files, t1) = crate::ingest::build_workload(&spec).unwrap();
        let (direct, t2) = data.build().unwrap();
        assert_eq!(from_files.len(), direct.len());
        assert_eq!(t1.equivalent, t2.equivalent);
        for (a, b) in from_files.pairs.iter().zip(&direct.pairs) {
            assert_eq!(a.pair_id, b.pair_id);
            assert!((a.metric - b.metric).abs() < 1e-12);
        }
    }

    #[test]
    fn proportion_workload_matches_request() {
        let props = [0.0, 0.1, 0.5, 0.9, 1.0];
        let (w, truth) = proportion_workload(&props, 20, 1);
        assert_eq!(w.len(), 100);
        for (k, p) in props.iter().enumerate() {
            let e = truth[k * 20..(k + 1) * 20].iter().filter(|t| **t).count();
            assert_eq!(e, (p * 20.0) as usize);
        }
    }
}

