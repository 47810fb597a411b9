//! Dataset loading, attribute similarity and blocking.
//!
//! A [`DatasetSpec`] names one or two delimited source files, the attribute
//! schema and the blocking threshold. [`build_workload`] turns it into the
//! candidate pairs whose aggregated metric reaches the threshold, plus the
//! ground truth kept aside for the simulated oracle.

pub mod similarity;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{pair_id, AttrValue, CandidatePair, PairId, RecordEntity};
use crate::error::{Error, Result};
pub use similarity::{
    aggregate_metric, jaccard, jaro_winkler, number_sim, number_sim_str, tokenize,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    JaccardToken,
    JaroWinkler,
    Number,
}

impl SimilarityKind {
    pub fn is_text(self) -> bool {
        !matches!(self, SimilarityKind::Number)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub column: String,
    pub kind: SimilarityKind,
    /// Explicit weight; defaults to the number of distinct values of the column.
    #[serde(default)]
    pub weight: Option<f64>,
}

/// Structured dataset configuration, usually read from TOML:
///
/// ```toml
/// name = "ds"
/// left = "DBLP2.csv"
/// right = "Scholar.csv"          # omit to match records within `left`
/// ground_truth = "DBLP-Scholar_perfectMapping.csv"
/// id_column = "id"
/// threshold = 0.2
///
/// [[attributes]]
/// column = "title"
/// kind = "jaccard-token"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub left: PathBuf,
    #[serde(default)]
    pub right: Option<PathBuf>,
    pub ground_truth: PathBuf,
    #[serde(default = "default_id_column")]
    pub id_column: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub threshold: f64,
    pub attributes: Vec<AttributeSpec>,
}

fn default_name() -> String {
    "dataset".into()
}

fn default_id_column() -> String {
    "id".into()
}

fn default_delimiter() -> char {
    ','
}

impl DatasetSpec {
    /// Reads a TOML spec; relative paths resolve against the spec's directory.
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: DatasetSpec =
            toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if let Some(dir) = path.parent() {
            spec.resolve_relative(dir);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn resolve_relative(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.left);
        if let Some(r) = self.right.as_mut() {
            fix(r);
        }
        fix(&mut self.ground_truth);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("dataset spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "blocking threshold {} outside [0,1]",
                self.threshold
            )));
        }
        if self.attributes.is_empty() {
            return Err(Error::Config("no attributes configured".into()));
        }
        let explicit: Vec<f64> = self.attributes.iter().filter_map(|a| a.weight).collect();
        if explicit.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("attribute weights must be non-negative".into()));
        }
        if explicit.len() == self.attributes.len() && explicit.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one attribute weight must be positive".into()));
        }
        Ok(())
    }

    pub fn single_source(&self) -> bool {
        self.right.is_none()
    }
}

/// The blocked candidate pairs together with the records they reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub attributes: Vec<AttributeSpec>,
    /// Normalized attribute weights.
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub single_source: bool,
    pub left: Vec<RecordEntity>,
    pub right: Vec<RecordEntity>,
    /// Sorted, deduplicated token ids over all text attributes, per record.
    pub left_tokens: Vec<Vec<u32>>,
    pub right_tokens: Vec<Vec<u32>>,
    pub vocab: Vec<String>,
    /// Sorted by pair id.
    pub pairs: Vec<CandidatePair>,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn left_record(&self, idx: usize) -> &RecordEntity {
        &self.left[idx]
    }

    pub fn right_record(&self, idx: usize) -> &RecordEntity {
        if self.single_source {
            &self.left[idx]
        } else {
            &self.right[idx]
        }
    }

    pub fn pair_tokens(&self, pair: &CandidatePair) -> (&[u32], &[u32]) {
        let r = if self.single_source {
            &self.left_tokens[pair.right]
        } else {
            &self.right_tokens[pair.right]
        };
        (&self.left_tokens[pair.left], r)
    }

    /// Keeps only the pairs at the given indices, preserving order.
    pub fn restrict(&self, keep: &[usize]) -> Workload {
        let mut w = self.clone();
        w.pairs = keep.iter().map(|&i| self.pairs[i].clone()).collect();
        w
    }
}

/// Ground-truth equivalence, aligned with `Workload::pairs`. Only the oracle
/// and the evaluation code read it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub equivalent: Vec<bool>,
    /// Matches listed in the ground-truth file, before blocking.
    pub listed_matches: usize,
}

impl GroundTruth {
    pub fn equivalent_count(&self) -> usize {
        self.equivalent.iter().filter(|e| **e).count()
    }

    pub fn restrict(&self, keep: &[usize]) -> GroundTruth {
        GroundTruth {
            equivalent: keep.iter().map(|&i| self.equivalent[i]).collect(),
            listed_matches: self.listed_matches,
        }
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path, delimiter: char) -> Result<Table> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let headers = rdr
        .byte_headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .map(|h| String::from_utf8_lossy(h).trim().trim_start_matches('\u{feff}').to_string())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for rec in rdr.byte_records() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let mut row: Vec<String> = rec
            .iter()
            .map(|f| String::from_utf8_lossy(f).trim().to_string())
            .collect();
        row.resize(headers.len(), String::new());
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

fn load_records(path: &Path, spec: &DatasetSpec) -> Result<Vec<RecordEntity>> {
    let table = read_table(path, spec.delimiter)?;
    let col = |name: &str| {
        table
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{} has no column {name:?}", path.display())))
    };
    let id_col = col(&spec.id_column)?;
    let mut columns: Vec<(String, usize, SimilarityKind)> = Vec::new();
    for a in &spec.attributes {
        if columns.iter().any(|(c, _, _)| *c == a.column) {
            continue;
        }
        columns.push((a.column.clone(), col(&a.column)?, a.kind));
    }
    let numeric: HashSet<&str> = spec
        .attributes
        .iter()
        .filter(|a| a.kind == SimilarityKind::Number)
        .map(|a| a.column.as_str())
        .collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, row) in table.rows.iter().enumerate() {
        let id = row[id_col].clone();
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, format!("duplicate id {id:?} on row {}", line + 2)));
        }
        let mut attributes = Vec::with_capacity(columns.len());
        for (name, idx, _) in &columns {
            let raw = &row[*idx];
            let value = if raw.is_empty() {
                AttrValue::Missing
            } else if numeric.contains(name.as_str()) {
                let parsed = similarity::parse_number(raw).map_err(|e| {
                    Error::parse(path, format!("row {} column {name}: {e}", line + 2))
                })?;
                parsed.map_or(AttrValue::Missing, AttrValue::Number)
            } else {
                AttrValue::Text(raw.clone())
            };
            attributes.push((name.clone(), value));
        }
        out.push(RecordEntity { id, attributes });
    }
    Ok(out)
}

fn load_ground_truth(path: &Path, delimiter: char) -> Result<Vec<(String, String)>> {
    let table = read_table(path, delimiter)?;
    if table.headers.len() < 2 {
        return Err(Error::parse(path, "ground truth needs two id columns"));
    }
    table
        .rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r[0].is_empty() || r[1].is_empty() {
                Err(Error::parse(path, format!("row {} has an empty id", i + 2)))
            } else {
                Ok((r[0].clone(), r[1].clone()))
            }
        })
        .collect()
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    vocab: Vec<String>,
}

impl Interner {
    fn intern(&mut self, tok: String) -> u32 {
        if let Some(id) = self.ids.get(&tok) {
            return *id;
        }
        let id = self.vocab.len() as u32;
        self.ids.insert(tok.clone(), id);
        self.vocab.push(tok);
        id
    }

    fn set(&mut self, text: &str) -> Vec<u32> {
        let mut v: Vec<u32> = tokenize(text).into_iter().map(|t| self.intern(t)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Precomputed per-record attribute representations used during blocking.
struct Prepared {
    /// `[attr][record]` token ids for Jaccard attributes.
    tokens: Vec<Vec<Vec<u32>>>,
    /// `[attr][record]` raw strings for Jaro-Winkler attributes.
    strings: Vec<Vec<Option<String>>>,
    /// `[attr][record]` numbers.
    numbers: Vec<Vec<Option<f64>>>,
    all_tokens: Vec<Vec<u32>>,
}

fn prepare(records: &[RecordEntity], attrs: &[AttributeSpec], interner: &mut Interner) -> Prepared {
    let n = records.len();
    let mut p = Prepared {
        tokens: vec![Vec::new(); attrs.len()],
        strings: vec![Vec::new(); attrs.len()],
        numbers: vec![Vec::new(); attrs.len()],
        all_tokens: vec![Vec::new(); n],
    };
    for (a, spec) in attrs.iter().enumerate() {
        match spec.kind {
            SimilarityKind::JaccardToken => {
                p.tokens[a] = records
                    .iter()
                    .map(|r| match r.get(&spec.column) {
                        Some(AttrValue::Text(s)) => interner.set(s),
                        _ => Vec::new(),
                    })
                    .collect()
            }
            SimilarityKind::JaroWinkler => {
                p.strings[a] = records
                    .iter()
                    .map(|r| match r.get(&spec.column) {
                        Some(AttrValue::Text(s)) if !s.trim().is_empty() => Some(s.to_lowercase()),
                        _ => None,
                    })
                    .collect()
            }
            SimilarityKind::Number => {
                p.numbers[a] = records
                    .iter()
                    .map(|r| match r.get(&spec.column) {
                        Some(AttrValue::Number(x)) => Some(*x),
                        _ => None,
                    })
                    .collect()
            }
        }
    }
    for (i, r) in records.iter().enumerate() {
        let mut all = Vec::new();
        for spec in attrs.iter().filter(|a| a.kind.is_text()) {
            if let Some(AttrValue::Text(s)) = r.get(&spec.column) {
                all.extend(interner.set(s));
            }
        }
        all.sort_unstable();
        all.dedup();
        p.all_tokens[i] = all;
    }
    p
}

/// Attribute weights: explicit when given, otherwise the count of distinct
/// non-missing values across all sources; normalized to sum to one.
pub fn attribute_weights(
    attrs: &[AttributeSpec],
    sources: &[&[RecordEntity]],
) -> Result<Vec<f64>> {
    let mut raw = Vec::with_capacity(attrs.len());
    for a in attrs {
        let w = match a.weight {
            Some(w) => w,
            None => {
                let mut distinct = HashSet::new();
                for src in sources {
                    for r in src.iter() {
                        match r.get(&a.column) {
                            Some(AttrValue::Text(s)) if !s.trim().is_empty() => {
                                distinct.insert(s.trim().to_string());
                            }
                            Some(AttrValue::Number(x)) => {
                                distinct.insert(x.to_string());
                            }
                            _ => {}
                        }
                    }
                }
                distinct.len() as f64
            }
        };
        raw.push(w);
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("all attribute weights are zero".into()));
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

fn pair_sims(
    attrs: &[AttributeSpec],
    l: &Prepared,
    r: &Prepared,
    i: usize,
    j: usize,
    shared: Option<&[u16]>,
) -> Vec<f64> {
    attrs
        .iter()
        .enumerate()
        .map(|(a, spec)| match spec.kind {
            SimilarityKind::JaccardToken => {
                let (x, y) = (&l.tokens[a][i], &r.tokens[a][j]);
                if x.is_empty() || y.is_empty() {
                    return 0.0;
                }
                match shared {
                    Some(s) => jaccard_from_shared(x, y, s[a]),
                    None => {
                        let inter = similarity::sorted_intersection_len(x, y);
                        inter as f64 / (x.len() + y.len() - inter) as f64
                    }
                }
            }
            SimilarityKind::JaroWinkler => match (&l.strings[a][i], &r.strings[a][j]) {
                (Some(x), Some(y)) => jaro_winkler(x, y),
                _ => 0.0,
            },
            SimilarityKind::Number => number_sim(l.numbers[a][i], r.numbers[a][j]),
        })
        .collect()
}

fn jaccard_from_shared(x: &[u32], y: &[u32], shared: u16) -> f64 {
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    let inter = shared as usize;
    inter as f64 / (x.len() + y.len() - inter) as f64
}

fn weighted(weights: &[f64], sims: &[f64]) -> f64 {
    weights.iter().zip(sims).map(|(w, s)| w * s).sum::<f64>().clamp(0.0, 1.0)
}

/// Builds the candidate workload for in-memory record collections.
///
/// Pairs sharing no token on any Jaccard attribute can only score the summed
/// weight of the other attributes; when that is below the threshold they are
/// skipped through an inverted index without changing the result.
pub fn block_records(
    name: &str,
    attrs: &[AttributeSpec],
    threshold: f64,
    left: Vec<RecordEntity>,
    right: Option<Vec<RecordEntity>>,
) -> Result<Workload> {
    let single = right.is_none();
    let right_vec = right.unwrap_or_default();
    let weights = {
        let sources: Vec<&[RecordEntity]> = if single {
            vec![&left]
        } else {
            vec![&left, &right_vec]
        };
        attribute_weights(attrs, &sources)?
    };
    let mut interner = Interner::default();
    let lp = prepare(&left, attrs, &mut interner);
    let rp = if single {
        None
    } else {
        Some(prepare(&right_vec, attrs, &mut interner))
    };
    let rp_ref = rp.as_ref().unwrap_or(&lp);
    let n_right = if single { left.len() } else { right_vec.len() };

    let jaccard_attrs: Vec<usize> = attrs
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind == SimilarityKind::JaccardToken)
        .map(|(i, _)| i)
        .collect();
    let other_weight: f64 = attrs
        .iter()
        .zip(&weights)
        .filter(|(a, _)| a.kind != SimilarityKind::JaccardToken)
        .map(|(_, w)| *w)
        .sum();
    let indexed = !jaccard_attrs.is_empty() && other_weight < threshold;

    // index[attr][token] -> right records containing it
    let mut index: Vec<HashMap<u32, Vec<u32>>> = vec![HashMap::new(); attrs.len()];
    if indexed {
        for &a in &jaccard_attrs {
            for (j, toks) in rp_ref.tokens[a].iter().enumerate() {
                for &t in toks {
                    index[a].entry(t).or_default().push(j as u32);
                }
            }
        }
    }

    let n_attr = attrs.len();
    let mut pairs: Vec<CandidatePair> = (0..left.len())
        .into_par_iter()
        .map_init(
            || (vec![0u16; n_right * n_attr], Vec::<u32>::new()),
            |(counts, touched), i| {
                let mut out = Vec::new();
                let lo = if single { i + 1 } else { 0 };
                if indexed {
                    for &a in &jaccard_attrs {
                        for t in &lp.tokens[a][i] {
                            if let Some(post) = index[a].get(t) {
                                for &j in post {
                                    let ju = j as usize;
                                    if ju < lo {
                                        continue;
                                    }
                                    let base = ju * n_attr;
                                    if counts[base..base + n_attr].iter().all(|c| *c == 0) {
                                        touched.push(j);
                                    }
                                    counts[base + a] = counts[base + a].saturating_add(1);
                                }
                            }
                        }
                    }
                    for &j in touched.iter() {
                        let ju = j as usize;
                        let base = ju * n_attr;
                        let shared = &counts[base..base + n_attr];
                        // Jaccard part plus the best the other attributes could add.
                        let ceiling: f64 = other_weight
                            + jaccard_attrs
                                .iter()
                                .map(|&a| weights[a] * jaccard_from_shared(&lp.tokens[a][i], &rp_ref.tokens[a][ju], shared[a]))
                                .sum::<f64>();
                        if ceiling < threshold {
                            counts[base..base + n_attr].iter_mut().for_each(|c| *c = 0);
                            continue;
                        }
                        let sims = pair_sims(attrs, &lp, rp_ref, i, ju, Some(shared));
                        let metric = weighted(&weights, &sims);
                        if metric >= threshold {
                            out.push(CandidatePair {
                                pair_id: pair_id(i, ju),
                                left: i,
                                right: ju,
                                attr_sims: sims,
                                metric,
                                label: Default::default(),
                                sampled: false,
                            });
                        }
                        counts[base..base + n_attr].iter_mut().for_each(|c| *c = 0);
                    }
                    touched.clear();
                } else {
                    for j in lo..n_right {
                        let sims = pair_sims(attrs, &lp, rp_ref, i, j, None);
                        let metric = weighted(&weights, &sims);
                        if metric >= threshold {
                            out.push(CandidatePair {
                                pair_id: pair_id(i, j),
                                left: i,
                                right: j,
                                attr_sims: sims,
                                metric,
                                label: Default::default(),
                                sampled: false,
                            });
                        }
                    }
                }
                out
            },
        )
        .flatten()
        .collect();
    pairs.sort_unstable_by_key(|p| p.pair_id);

    let Prepared { all_tokens: left_tokens, .. } = lp;
    let right_tokens = rp.map(|p| p.all_tokens).unwrap_or_default();
    Ok(Workload {
        name: name.to_string(),
        attributes: attrs.to_vec(),
        weights,
        threshold,
        single_source: single,
        left,
        right: right_vec,
        left_tokens,
        right_tokens,
        vocab: interner.vocab,
        pairs,
    })
}

/// Aligns ground-truth id pairs with the workload's candidate pairs.
pub fn align_truth(workload: &Workload, matches: &[(String, String)]) -> Result<GroundTruth> {
    let left_ids: HashMap<&str, usize> = workload
        .left
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let right_ids: HashMap<&str, usize> = if workload.single_source {
        left_ids.clone()
    } else {
        workload
            .right
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect()
    };
    let mut positives: HashSet<PairId> = HashSet::with_capacity(matches.len());
    for (a, b) in matches {
        let (Some(&i), Some(&j)) = (left_ids.get(a.as_str()), right_ids.get(b.as_str())) else {
            return Err(Error::Schema(format!(
                "ground truth references unknown ids ({a}, {b})"
            )));
        };
        let (i, j) = if workload.single_source && j < i { (j, i) } else { (i, j) };
        positives.insert(pair_id(i, j));
    }
    Ok(GroundTruth {
        equivalent: workload
            .pairs
            .iter()
            .map(|p| positives.contains(&p.pair_id))
            .collect(),
        listed_matches: positives.len(),
    })
}

/// Loads sources and ground truth named by `spec` and blocks the workload.
pub fn build_workload(spec: &DatasetSpec) -> Result<(Workload, GroundTruth)> {
    spec.validate()?;
    let left = load_records(&spec.left, spec)?;
    let right = match &spec.right {
        Some(p) => Some(load_records(p, spec)?),
        None => None,
    };
    let matches = load_ground_truth(&spec.ground_truth, spec.delimiter)?;
    let workload = block_records(&spec.name, &spec.attributes, spec.threshold, left, right)?;
    let truth = align_truth(&workload, &matches)?;
    Ok((workload, truth))
}
