//! Embedding and judgment ingestion, vocabulary alignment and integrity
//! summaries.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Coords, Embedding};

/// How words are matched between embedding vocabularies and datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Trim and lowercase.
    #[default]
    Lowercase,
    /// Trim only.
    Exact,
}

impl Normalization {
    pub fn apply(self, word: &str) -> String {
        match self {
            Normalization::Lowercase => word.trim().to_lowercase(),
            Normalization::Exact => word.trim().to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub parsed: usize,
    pub skipped_blank: usize,
    pub skipped_header: usize,
    pub skipped_duplicate: usize,
    pub skipped_zero: usize,
}

/// Immutable word → vector lookup with a single dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    source_name: String,
    normalization: Normalization,
    entries: Vec<Embedding>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(source_name: impl Into<String>, dim: usize, normalization: Normalization) -> Self {
        Self {
            dim,
            source_name: source_name.into(),
            normalization,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Returns `false` when the normalized word is already present.
    pub fn insert(&mut self, embedding: Embedding) -> Result<bool> {
        if embedding.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: embedding.dim(),
            });
        }
        let key = self.normalization.apply(embedding.word());
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        self.index.insert(key.clone(), self.entries.len());
        self.entries
            .push(Embedding::new(key, embedding.vector().to_vec())?);
        Ok(true)
    }

    pub fn get(&self, word: &str) -> Option<&Embedding> {
        self.index
            .get(&self.normalization.apply(word))
            .map(|&i| &self.entries[i])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn iter(&self) -> impl Iterator<Item = &Embedding> {
        self.entries.iter()
    }

    /// Writes the store in the text vector format, in insertion order.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut line = String::new();
        for e in &self.entries {
            line.clear();
            line.push_str(e.word());
            for v in e.vector() {
                let _ = write!(line, " {v}");
            }
            line.push('\n');
            out.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn looks_like_w2v_header(tokens: &[&str]) -> bool {
    tokens.len() == 2 && tokens.iter().all(|t| t.parse::<usize>().is_ok())
}

/// Reads `<word> <v1> ... <vD>` lines. An optional `count dim` header line is
/// accepted. Zero vectors and repeated words are skipped and counted.
pub fn load_embeddings_text(
    path: &Path,
    expected_dim: Option<usize>,
    normalization: Normalization,
) -> Result<(EmbeddingStore, LoadStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut stats = LoadStats::default();
    let mut store: Option<EmbeddingStore> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            stats.skipped_blank += 1;
            continue;
        }
        if lineno == 1 && looks_like_w2v_header(&tokens) {
            stats.skipped_header += 1;
            continue;
        }
        let word = tokens[0];
        let values = tokens[1..]
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::format(path, lineno, format!("malformed number `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let dim = match &store {
            Some(s) => s.dim(),
            None => expected_dim.unwrap_or(values.len()),
        };
        if values.len() != dim || dim == 0 {
            return Err(Error::format(
                path,
                lineno,
                format!("`{word}` has {} components, expected {dim}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(path, lineno, format!("`{word}` has a non-finite component")));
        }
        if values.iter().all(|v| *v == 0.0) {
            stats.skipped_zero += 1;
            continue;
        }
        let store =
            store.get_or_insert_with(|| EmbeddingStore::new(source.clone(), dim, normalization));
        if store.insert(Embedding::new(word, values)?)? {
            stats.parsed += 1;
        } else {
            stats.skipped_duplicate += 1;
        }
    }

    match store {
        Some(store) => {
            log::info!(
                "{}: {} vectors (D={}), skipped {} duplicate, {} zero, {} blank",
                path.display(),
                stats.parsed,
                store.dim(),
                stats.skipped_duplicate,
                stats.skipped_zero,
                stats.skipped_blank
            );
            Ok((store, stats))
        }
        None => Err(Error::format(path, 0, "no embeddings found")),
    }
}

/// Native scale of the ratings in a judgment file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingScale {
    /// 1..7 Likert ratings, mapped by `(r - 1) / 6`.
    #[default]
    #[serde(rename = "raw_1_7")]
    Raw1To7,
    /// 0..10 ratings, mapped by `r / 10`.
    #[serde(rename = "raw_0_10")]
    Raw0To10,
    /// Already in `[0, 1]`.
    Unit,
}

impl RatingScale {
    fn bounds(self) -> (f64, f64) {
        match self {
            RatingScale::Raw1To7 => (1.0, 7.0),
            RatingScale::Raw0To10 => (0.0, 10.0),
            RatingScale::Unit => (0.0, 1.0),
        }
    }

    /// Maps a rating onto `[0, 1]`, or `None` if it is outside the scale.
    pub fn rescale(self, rating: f64) -> Option<f64> {
        let (lo, hi) = self.bounds();
        if !(lo..=hi).contains(&rating) {
            return None;
        }
        Some(match self {
            RatingScale::Unit => rating,
            _ => (rating - lo) / (hi - lo),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            RatingScale::Raw1To7 => "raw_1_7",
            RatingScale::Raw0To10 => "raw_0_10",
            RatingScale::Unit => "unit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Contextualized,
    #[default]
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordPair {
    pub word_a: String,
    pub word_b: String,
    pub target: f64,
    pub group: Option<String>,
}

/// Word pairs with human similarity targets in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityDataset {
    name: String,
    pairs: Vec<WordPair>,
    provenance: Provenance,
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl SimilarityDataset {
    /// Validates targets, self-pairs, duplicate pairs within a group and
    /// minimum group sizes.
    pub fn new(name: impl Into<String>, pairs: Vec<WordPair>, provenance: Provenance) -> Result<Self> {
        let name = name.into();
        let mut seen: HashSet<(Option<&str>, (String, String))> = HashSet::new();
        let mut group_sizes: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, p) in pairs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.target) {
                return Err(Error::Integrity(format!(
                    "{name}: pair {i} target {} outside [0, 1]",
                    p.target
                )));
            }
            if p.word_a == p.word_b {
                return Err(Error::Integrity(format!(
                    "{name}: pair {i} compares `{}` with itself",
                    p.word_a
                )));
            }
            let key = (p.group.as_deref(), unordered(&p.word_a, &p.word_b));
            if !seen.insert(key) {
                return Err(Error::Integrity(format!(
                    "{name}: duplicate pair {}/{} (pair {i})",
                    p.word_a, p.word_b
                )));
            }
            if let Some(g) = &p.group {
                *group_sizes.entry(g).or_default() += 1;
            }
        }
        if let Some((g, n)) = group_sizes.iter().find(|(_, n)| **n < 2) {
            return Err(Error::Integrity(format!(
                "{name}: group `{g}` has {n} pair(s), at least 2 required"
            )));
        }
        Ok(Self {
            name,
            pairs,
            provenance,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pairs(&self) -> &[WordPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Distinct group labels in first-appearance order.
    pub fn groups(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.pairs
            .iter()
            .filter_map(|p| p.group.as_deref())
            .filter(|g| seen.insert(*g))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct JudgmentOptions {
    pub scale: RatingScale,
    pub provenance: Provenance,
    /// Keep only rows whose `pos` column equals this tag (case-insensitive).
    pub pos_filter: Option<String>,
    pub name: Option<String>,
}

/// Reads a delimited judgment file with header `word1,word2,rating[,group]`.
///
/// The delimiter (tab or comma) is taken from the header line. A column
/// named `pos` is used only for `pos_filter`; the fourth column, or one
/// named `group`, `hypernym` or `category`, carries the group label.
pub fn load_judgments(path: &Path, options: &JudgmentOptions) -> Result<SimilarityDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = text
        .lines()
        .next()
        .ok_or_else(|| Error::format(path, 1, "missing header row"))?;
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_lowercase())
        .collect();
    if headers.len() < 3 {
        return Err(Error::format(
            path,
            1,
            "header must name at least word1, word2, rating",
        ));
    }
    let pos_col = headers.iter().position(|h| h == "pos");
    let group_col = headers
        .iter()
        .position(|h| matches!(h.as_str(), "group" | "hypernym" | "category"))
        .or_else(|| (headers.len() > 3 && pos_col != Some(3)).then_some(3));
    if options.pos_filter.is_some() && pos_col.is_none() {
        return Err(Error::Config(format!(
            "{}: pos filter requested but file has no `pos` column",
            path.display()
        )));
    }

    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() < 3 {
            return Err(Error::format(path, row, "expected at least 3 columns"));
        }
        if let (Some(filter), Some(col)) = (&options.pos_filter, pos_col) {
            if !record.get(col).unwrap_or("").eq_ignore_ascii_case(filter) {
                continue;
            }
        }
        let rating: f64 = record[2]
            .parse()
            .map_err(|_| Error::format(path, row, format!("malformed rating `{}`", &record[2])))?;
        let target = options.scale.rescale(rating).ok_or_else(|| Error::RatingRange {
            path: path.to_path_buf(),
            row,
            rating,
            scale: options.scale.name().to_string(),
        })?;
        let group = group_col
            .and_then(|c| record.get(c))
            .filter(|g| !g.is_empty())
            .map(str::to_string);
        pairs.push(WordPair {
            word_a: record[0].to_string(),
            word_b: record[1].to_string(),
            target,
            group,
        });
    }

    let name = options.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    SimilarityDataset::new(name, pairs, options.provenance)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedPair {
    pub index: usize,
    pub word_a: String,
    pub word_b: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DropReport {
    pub dropped: Vec<DroppedPair>,
}

impl DropReport {
    pub fn is_empty(&self) -> bool {
        self.dropped.is_empty()
    }

    pub fn len(&self) -> usize {
        self.dropped.len()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("index\tword1\tword2\treason\n");
        for d in &self.dropped {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", d.index, d.word_a, d.word_b, d.reason);
        }
        out
    }
}

/// Keeps the pairs whose words both resolve in `store`, preserving order.
///
/// A group left with a single resolvable pair is dropped as well, since its
/// correlation would be undefined.
pub fn align(dataset: &SimilarityDataset, store: &EmbeddingStore) -> Result<(SimilarityDataset, DropReport)> {
    let mut report = DropReport::default();
    let mut kept: Vec<(usize, WordPair)> = Vec::new();
    for (i, p) in dataset.pairs().iter().enumerate() {
        let missing: Vec<&str> = [&p.word_a, &p.word_b]
            .into_iter()
            .filter(|w| store.get(w).is_none())
            .map(String::as_str)
            .collect();
        if missing.is_empty() {
            let (ea, eb) = (store.get(&p.word_a), store.get(&p.word_b));
            if ea.map(Embedding::word) == eb.map(Embedding::word) {
                report.dropped.push(DroppedPair {
                    index: i,
                    word_a: p.word_a.clone(),
                    word_b: p.word_b.clone(),
                    reason: "both words resolve to the same vector".into(),
                });
            } else {
                kept.push((i, p.clone()));
            }
        } else {
            report.dropped.push(DroppedPair {
                index: i,
                word_a: p.word_a.clone(),
                word_b: p.word_b.clone(),
                reason: format!("missing: {}", missing.join(" ")),
            });
        }
    }

    let mut group_sizes: HashMap<&str, usize> = HashMap::new();
    for (_, p) in &kept {
        if let Some(g) = &p.group {
            *group_sizes.entry(g.as_str()).or_default() += 1;
        }
    }
    let small: HashSet<String> = group_sizes
        .into_iter()
        .filter(|(_, n)| *n < 2)
        .map(|(g, _)| g.to_string())
        .collect();
    let mut pairs = Vec::with_capacity(kept.len());
    for (i, p) in kept {
        match &p.group {
            Some(g) if small.contains(g) => report.dropped.push(DroppedPair {
                index: i,
                word_a: p.word_a,
                word_b: p.word_b,
                reason: format!("group `{g}` left with fewer than 2 pairs"),
            }),
            _ => pairs.push(p),
        }
    }
    report.dropped.sort_by_key(|d| d.index);

    if pairs.is_empty() {
        return Err(Error::EmptyAlignment(dataset.name().to_string()));
    }
    let aligned = SimilarityDataset::new(dataset.name(), pairs, dataset.provenance())?;
    Ok((aligned, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub words: usize,
    pub pairs: usize,
    /// `pairs == words·(words−1)/2`.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableSummary {
    pub groups: Vec<GroupSummary>,
    pub total: GroupSummary,
}

impl TableSummary {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("group\twords\tpairs\tcomplete\n");
        for g in self.groups.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", g.group, g.words, g.pairs, g.complete);
        }
        out
    }
}

fn summarize<'a>(label: &str, pairs: impl Iterator<Item = &'a WordPair>) -> GroupSummary {
    let mut words = BTreeSet::new();
    let mut n = 0;
    for p in pairs {
        words.insert(p.word_a.as_str());
        words.insert(p.word_b.as_str());
        n += 1;
    }
    let w = words.len();
    GroupSummary {
        group: label.to_string(),
        words: w,
        pairs: n,
        complete: n == w * w.saturating_sub(1) / 2,
    }
}

/// Per-group word and pair counts, plus an `All` row over the whole dataset.
pub fn integrity_check(dataset: &SimilarityDataset) -> TableSummary {
    let groups: Vec<GroupSummary> = dataset
        .groups()
        .into_iter()
        .map(|g| {
            summarize(
                g,
                dataset.pairs().iter().filter(|p| p.group.as_deref() == Some(g)),
            )
        })
        .collect();
    for g in groups.iter().filter(|g| !g.complete) {
        log::warn!(
            "{}: group `{}` has {} pairs over {} words, not fully crossed",
            dataset.name(),
            g.group,
            g.pairs,
            g.words
        );
    }
    TableSummary {
        groups,
        total: summarize("All", dataset.pairs().iter()),
    }
}

/// Aligned pairs resolved to dense vector indices, ready for training and
/// scoring.
#[derive(Debug, Clone)]
pub struct PairTable {
    pub(crate) dim: usize,
    pub(crate) words: Vec<Embedding>,
    pub(crate) pairs: Vec<(usize, usize)>,
    pub(crate) targets: Vec<f64>,
    pub(crate) groups: Vec<Option<usize>>,
    pub(crate) group_names: Vec<String>,
}

impl PairTable {
    /// Every word must resolve; run [`align`] first.
    pub fn build(dataset: &SimilarityDataset, store: &EmbeddingStore) -> Result<Self> {
        let mut word_index: HashMap<&str, usize> = HashMap::new();
        let mut words = Vec::new();
        let mut pairs = Vec::with_capacity(dataset.len());
        let group_names: Vec<String> = dataset.groups().into_iter().map(str::to_string).collect();
        let group_index: HashMap<&str, usize> = group_names
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        let mut resolve = |w: &str| -> Result<usize> {
            let emb = store.get(w).ok_or_else(|| {
                Error::Integrity(format!("`{w}` is not in the embedding store; align first"))
            })?;
            Ok(*word_index.entry(emb.label()).or_insert_with(|| {
                words.push(emb.clone());
                words.len() - 1
            }))
        };
        for p in dataset.pairs() {
            let ia = resolve(&p.word_a)?;
            let ib = resolve(&p.word_b)?;
            if ia == ib {
                return Err(Error::Integrity(format!(
                    "`{}` and `{}` resolve to the same vector; align first",
                    p.word_a, p.word_b
                )));
            }
            pairs.push((ia, ib));
        }
        Ok(Self {
            dim: store.dim(),
            words,
            pairs,
            targets: dataset.pairs().iter().map(|p| p.target).collect(),
            groups: dataset
                .pairs()
                .iter()
                .map(|p| p.group.as_deref().map(|g| group_index[g]))
                .collect(),
            group_names,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub(crate) fn vector(&self, word: usize) -> &[f64] {
        self.words[word].vector()
    }

    pub(crate) fn embedding(&self, word: usize) -> &Embedding {
        &self.words[word]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    fn pair(a: &str, b: &str, t: f64, g: Option<&str>) -> WordPair {
        WordPair {
            word_a: a.into(),
            word_b: b.into(),
            target: t,
            group: g.map(str::to_string),
        }
    }

    #[test]
    fn loads_small_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(&dir, "v.txt", "coat 0.1 0.2 0.3\nhat -1 0 2.5\n");
        let (store, stats) = load_embeddings_text(&path, None, Normalization::Lowercase).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.dim(), 3);
        assert_eq!(stats.parsed, 2);
        assert_eq!(store.get("hat").unwrap().vector(), &[-1.0, 0.0, 2.5]);
    }

    #[test]
    fn wrong_arity_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(&dir, "v.txt", "a 1 2 3\nb 1 2\nc 1 2 3\n");
        match load_embeddings_text(&path, None, Normalization::Lowercase) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let path = write_tmp(&dir, "w.txt", "a 1 2 x\n");
        assert!(matches!(
            load_embeddings_text(&path, None, Normalization::Lowercase),
            Err(Error::Format { line: 1, .. })
        ));
        let path = write_tmp(&dir, "e.txt", "");
        assert!(load_embeddings_text(&path, None, Normalization::Lowercase).is_err());
        let path = write_tmp(&dir, "d.txt", "a 1 2\n");
        assert!(load_embeddings_text(&path, Some(3), Normalization::Lowercase).is_err());
    }

    #[test]
    fn header_and_zero_vectors_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(&dir, "v.txt", "3 2\na 1 2\nz 0 0\nA 5 5\n\nb 3 4\n");
        let (store, stats) = load_embeddings_text(&path, None, Normalization::Lowercase).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(stats.skipped_header, 1);
        assert_eq!(stats.skipped_zero, 1);
        assert_eq!(stats.skipped_duplicate, 1);
        assert_eq!(stats.skipped_blank, 1);
        assert_eq!(store.get("a").unwrap().vector(), &[1.0, 2.0]);
    }

    #[test]
    fn store_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(
            &dir,
            "v.txt",
            "coat 0.1 0.30000000000000004 -1e-300\nhat 3.141592653589793 2.718281828459045 1e22\n",
        );
        let (store, _) = load_embeddings_text(&path, None, Normalization::Lowercase).unwrap();
        let out = dir.path().join("out.txt");
        store.write_text(&out).unwrap();
        let (back, _) = load_embeddings_text(&out, None, Normalization::Lowercase).unwrap();
        for e in store.iter() {
            let b = back.get(e.word()).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(e.vector()), bits(b.vector()));
        }
    }

    #[test]
    fn rescaling_of_likert_ratings() {
        let s = RatingScale::Raw1To7;
        assert!((s.rescale(1.469).unwrap() - 0.469 / 6.0).abs() < 1e-15);
        assert!((s.rescale(6.438).unwrap() - 5.438 / 6.0).abs() < 1e-15);
        assert_eq!(s.rescale(1.0), Some(0.0));
        assert_eq!(s.rescale(7.0), Some(1.0));
        assert_eq!(s.rescale(7.5), None);
        assert_eq!(RatingScale::Unit.rescale(0.25), Some(0.25));
        assert_eq!(RatingScale::Unit.rescale(1.25), None);
        assert_eq!(RatingScale::Raw0To10.rescale(7.5), Some(0.75));
    }

    #[test]
    fn loads_judgments_with_groups() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(
            &dir,
            "clothing.csv",
            "word1,word2,rating,group\nhat,overalls,1.469,Clothing\ncoat,jacket,6.438,Clothing\n",
        );
        let ds = load_judgments(&path, &JudgmentOptions::default()).unwrap();
        assert_eq!(ds.name(), "clothing");
        assert_eq!(ds.len(), 2);
        assert!((ds.pairs()[0].target - 0.078_166_666_666_666_67).abs() < 1e-12);
        assert!((ds.pairs()[1].target - 0.906_333_333_333_333_3).abs() < 1e-12);
        assert_eq!(ds.pairs()[0].group.as_deref(), Some("Clothing"));
    }

    #[test]
    fn tab_delimited_and_pos_filter() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(
            &dir,
            "sl.tsv",
            "word1\tword2\trating\tpos\nold\tnew\t1.58\tA\nsmart\tclever\t9.2\tA\nhat\tcap\t8.1\tN\nbook\tpaper\t3.0\tn\n",
        );
        let opts = JudgmentOptions {
            scale: RatingScale::Raw0To10,
            pos_filter: Some("N".into()),
            ..Default::default()
        };
        let ds = load_judgments(&path, &opts).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.pairs().iter().all(|p| p.group.is_none()));
    }

    #[test]
    fn rating_out_of_range_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(&dir, "x.csv", "word1,word2,rating\na,b,3\nc,d,8\n");
        match load_judgments(&path, &JudgmentOptions::default()) {
            Err(Error::RatingRange { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_unordered_pair_in_group_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(
            &dir,
            "x.csv",
            "word1,word2,rating,group\na,b,3,G\nb,a,4,G\n",
        );
        assert!(matches!(
            load_judgments(&path, &JudgmentOptions::default()),
            Err(Error::Integrity(_))
        ));
        // the same pair under two different groups is allowed
        let ok = SimilarityDataset::new(
            "x",
            vec![
                pair("a", "b", 0.1, Some("G")),
                pair("a", "c", 0.1, Some("G")),
                pair("b", "a", 0.2, Some("H")),
                pair("b", "c", 0.2, Some("H")),
            ],
            Provenance::Plain,
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn dataset_invariants() {
        let self_pair = SimilarityDataset::new("x", vec![pair("a", "a", 0.5, None)], Provenance::Plain);
        assert!(self_pair.is_err());
        let lonely = SimilarityDataset::new(
            "x",
            vec![pair("a", "b", 0.5, Some("G")), pair("a", "c", 0.5, Some("H")), pair("b", "c", 0.5, Some("H"))],
            Provenance::Plain,
        );
        assert!(lonely.is_err());
    }

    fn store_of(words: &[&str]) -> EmbeddingStore {
        let mut store = EmbeddingStore::new("t", 2, Normalization::Lowercase);
        for (i, w) in words.iter().enumerate() {
            store
                .insert(Embedding::new(*w, vec![1.0, i as f64 + 1.0]).unwrap())
                .unwrap();
        }
        store
    }

    #[test]
    fn align_cases() {
        let ds = SimilarityDataset::new(
            "d",
            vec![pair("a", "b", 0.1, None), pair("b", "c", 0.2, None), pair("a", "zz", 0.3, None)],
            Provenance::Plain,
        )
        .unwrap();
        let full = store_of(&["a", "b", "c", "zz"]);
        let (same, report) = align(&ds, &full).unwrap();
        assert_eq!(same, ds);
        assert!(report.is_empty());

        let partial = store_of(&["a", "b", "c"]);
        let (sub, report) = align(&ds, &partial).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(report.len(), 1);
        assert_eq!(report.dropped[0].index, 2);
        let (again, report2) = align(&sub, &partial).unwrap();
        assert_eq!(again, sub);
        assert!(report2.is_empty());

        let none = store_of(&["q"]);
        assert!(matches!(align(&ds, &none), Err(Error::EmptyAlignment(_))));
    }

    #[test]
    fn align_normalizes_case() {
        let ds = SimilarityDataset::new("d", vec![pair("coat", "hat", 0.5, None)], Provenance::Plain).unwrap();
        let lower = store_of(&["Coat", "hat"]);
        assert_eq!(align(&ds, &lower).unwrap().0.len(), 1);

        let same = SimilarityDataset::new(
            "d",
            vec![pair("coat", "Coat", 0.5, None), pair("coat", "hat", 0.5, None)],
            Provenance::Plain,
        )
        .unwrap();
        let (sub, report) = align(&same, &lower).unwrap();
        assert_eq!(sub.len(), 1);
        assert_eq!(report.dropped[0].index, 0);

        let mut exact = EmbeddingStore::new("t", 2, Normalization::Exact);
        exact.insert(Embedding::new("Coat", vec![1.0, 0.0]).unwrap()).unwrap();
        exact.insert(Embedding::new("hat", vec![0.0, 1.0]).unwrap()).unwrap();
        assert!(align(&ds, &exact).is_err());
    }

    #[test]
    fn align_drops_groups_left_with_one_pair() {
        let ds = SimilarityDataset::new(
            "d",
            vec![
                pair("a", "b", 0.1, Some("G")),
                pair("a", "x", 0.1, Some("G")),
                pair("a", "c", 0.1, Some("H")),
                pair("b", "c", 0.1, Some("H")),
            ],
            Provenance::Plain,
        )
        .unwrap();
        let (sub, report) = align(&ds, &store_of(&["a", "b", "c"])).unwrap();
        assert_eq!(sub.groups(), vec!["H"]);
        assert_eq!(report.len(), 2);
    }

    fn complete_group(group: &str, prefix: &str, n: usize) -> Vec<WordPair> {
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                out.push(pair(&format!("{prefix}{i}"), &format!("{prefix}{j}"), 0.5, Some(group)));
            }
        }
        out
    }

    #[test]
    fn integrity_counts_fully_crossed_groups() {
        let mut pairs = complete_group("Birds", "b", 30);
        pairs.extend(complete_group("Clothing", "c", 29));
        let ds = SimilarityDataset::new("all", pairs, Provenance::Plain).unwrap();
        let summary = integrity_check(&ds);
        assert_eq!(summary.groups[0].words, 30);
        assert_eq!(summary.groups[0].pairs, 435);
        assert_eq!(summary.groups[1].words, 29);
        assert_eq!(summary.groups[1].pairs, 406);
        assert!(summary.groups.iter().all(|g| g.complete));
        assert_eq!(summary.total.words, 59);
        assert_eq!(summary.total.pairs, 841);
        assert!(!summary.total.complete);
        assert!(summary.to_tsv().starts_with("group\twords\tpairs\tcomplete\nBirds\t30\t435\ttrue\n"));
    }

    #[test]
    fn eight_group_totals() {
        // words per hypernym, as in the co-hyponym judgment collection
        let sizes = [30, 29, 28, 28, 22, 21, 20, 20];
        let mut pairs = Vec::new();
        for (g, n) in sizes.iter().enumerate() {
            pairs.extend(complete_group(&format!("g{g}"), &format!("w{g}_"), *n));
        }
        let ds = SimilarityDataset::new("all", pairs, Provenance::Plain).unwrap();
        let summary = integrity_check(&ds);
        assert_eq!(summary.total.words, 198);
        assert_eq!(summary.total.pairs, 2418);
    }

    #[test]
    fn pair_table_shares_word_vectors() {
        let ds = SimilarityDataset::new(
            "d",
            vec![pair("a", "b", 0.1, None), pair("B", "c", 0.2, None)],
            Provenance::Plain,
        )
        .unwrap();
        let table = PairTable::build(&ds, &store_of(&["a", "b", "c"])).unwrap();
        assert_eq!(table.words.len(), 3);
        assert_eq!(table.pairs, vec![(0, 1), (1, 2)]);
    }
}
