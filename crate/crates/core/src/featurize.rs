//! Text featurization: tokenization, n-gram extraction, and count/TF-IDF
//! weighting into sparse vectors over a fitted vocabulary.
//!
//! The vocabulary fixes the feature space at fit time; n-grams unseen during
//! fitting are silently dropped at transform time. Index assignment is
//! lexicographic over the term strings so that identical corpora always
//! produce identical vocabularies.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::select::SelectionMask;

/// Token emitted when subword segmentation finds no vocabulary match.
pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Punctuation for the word tokenizer: Unicode categories P* and S*.
pub fn is_punctuation(c: char) -> bool {
    matches!(
        c.general_category_group(),
        GeneralCategoryGroup::Punctuation | GeneralCategoryGroup::Symbol
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Char,
    Word,
    Subword,
}

/// Configuration-level description of a tokenizer. `Subword` requires a
/// vocabulary file (one token per line); `Char`/`Word` must not set one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub kind: TokenizerKind,
    pub lowercase: bool,
    pub subword_vocab: Option<PathBuf>,
}

impl TokenizerSpec {
    /// Char tokenizer; lowercasing on by default.
    pub fn char_default() -> Self {
        Self {
            kind: TokenizerKind::Char,
            lowercase: true,
            subword_vocab: None,
        }
    }

    /// Word tokenizer; lowercasing on by default.
    pub fn word_default() -> Self {
        Self {
            kind: TokenizerKind::Word,
            lowercase: true,
            subword_vocab: None,
        }
    }

    /// Subword tokenizer over an external vocabulary file. Subword
    /// vocabularies are case-sensitive artifacts, so lowercasing is off.
    pub fn subword(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: TokenizerKind::Subword,
            lowercase: false,
            subword_vocab: Some(path.into()),
        }
    }

    /// Default lowercasing for a kind: on for Char/Word, off for Subword.
    pub fn default_lowercase(kind: TokenizerKind) -> bool {
        kind != TokenizerKind::Subword
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.subword_vocab) {
            (TokenizerKind::Subword, None) => Err(Error::SubwordVocabMissing),
            (TokenizerKind::Char, Some(_)) => Err(Error::UnexpectedSubwordVocab("char")),
            (TokenizerKind::Word, Some(_)) => Err(Error::UnexpectedSubwordVocab("word")),
            _ => Ok(()),
        }
    }
}

/// A loaded, self-contained tokenizer. Unlike [`TokenizerSpec`] this embeds
/// the subword vocabulary, so serialized models do not depend on external
/// files at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Tokenizer {
    Char { lowercase: bool },
    Word { lowercase: bool },
    Subword(SubwordVocab),
}

impl Tokenizer {
    pub fn from_spec(spec: &TokenizerSpec) -> Result<Tokenizer> {
        spec.validate()?;
        Ok(match spec.kind {
            TokenizerKind::Char => Tokenizer::Char {
                lowercase: spec.lowercase,
            },
            TokenizerKind::Word => Tokenizer::Word {
                lowercase: spec.lowercase,
            },
            TokenizerKind::Subword => {
                let path = spec.subword_vocab.as_ref().expect("validated above");
                Tokenizer::Subword(SubwordVocab::load(path, spec.lowercase)?)
            }
        })
    }

    /// Splits text into tokens.
    ///
    /// Char: one token per Unicode scalar value. Word: whitespace split,
    /// with every punctuation character broken out as its own token.
    /// Subword: whitespace split, then greedy longest-match against the
    /// embedded vocabulary with `<unk>` fallback. Empty text yields an
    /// empty token list.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match self {
            Tokenizer::Char { lowercase } => {
                let owned;
                let s = if *lowercase {
                    owned = text.to_lowercase();
                    &owned
                } else {
                    text
                };
                s.chars().map(String::from).collect()
            }
            Tokenizer::Word { lowercase } => {
                let owned;
                let s = if *lowercase {
                    owned = text.to_lowercase();
                    &owned
                } else {
                    text
                };
                let mut tokens = Vec::new();
                for chunk in s.split_whitespace() {
                    let mut word = String::new();
                    for c in chunk.chars() {
                        if is_punctuation(c) {
                            if !word.is_empty() {
                                tokens.push(std::mem::take(&mut word));
                            }
                            tokens.push(c.to_string());
                        } else {
                            word.push(c);
                        }
                    }
                    if !word.is_empty() {
                        tokens.push(word);
                    }
                }
                tokens
            }
            Tokenizer::Subword(vocab) => vocab.tokenize(text),
        }
    }

    /// Stable identity string; vocabularies record it so transform can
    /// detect tokenizer/vocabulary mismatches.
    pub fn fingerprint(&self) -> String {
        match self {
            Tokenizer::Char { lowercase } => format!("char/lc={lowercase}"),
            Tokenizer::Word { lowercase } => format!("word/lc={lowercase}"),
            Tokenizer::Subword(v) => format!("subword/lc={}/{}", v.lowercase, v.digest()),
        }
    }
}

/// Embedded subword vocabulary with greedy longest-match segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SubwordVocabData", into = "SubwordVocabData")]
pub struct SubwordVocab {
    tokens: Vec<String>,
    lowercase: bool,
    set: HashSet<String>,
    max_token_chars: usize,
}

#[derive(Serialize, Deserialize, Clone)]
struct SubwordVocabData {
    tokens: Vec<String>,
    lowercase: bool,
}

impl From<SubwordVocabData> for SubwordVocab {
    fn from(d: SubwordVocabData) -> Self {
        SubwordVocab::from_tokens(d.tokens, d.lowercase)
    }
}

impl From<SubwordVocab> for SubwordVocabData {
    fn from(v: SubwordVocab) -> Self {
        SubwordVocabData {
            tokens: v.tokens,
            lowercase: v.lowercase,
        }
    }
}

impl SubwordVocab {
    /// Reads a vocabulary file: UTF-8, one token per line. Tokens
    /// containing whitespace are unreachable under whitespace pre-splitting
    /// and are dropped.
    pub fn load(path: impl AsRef<Path>, lowercase: bool) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let tokens: Vec<String> = raw
            .lines()
            .map(str::trim_end)
            .filter(|t| !t.is_empty() && !t.chars().any(char::is_whitespace))
            .map(str::to_owned)
            .collect();
        if tokens.is_empty() {
            return Err(Error::EmptySubwordVocab(path.to_path_buf()));
        }
        Ok(Self::from_tokens(tokens, lowercase))
    }

    fn from_tokens(tokens: Vec<String>, lowercase: bool) -> Self {
        let set: HashSet<String> = tokens.iter().cloned().collect();
        let max_token_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(1);
        Self {
            tokens,
            lowercase,
            set,
            max_token_chars,
        }
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        let owned;
        let s = if self.lowercase {
            owned = text.to_lowercase();
            &owned
        } else {
            text
        };
        let mut tokens = Vec::new();
        for chunk in s.split_whitespace() {
            let bounds: Vec<usize> = chunk
                .char_indices()
                .map(|(i, _)| i)
                .chain(std::iter::once(chunk.len()))
                .collect();
            let n_chars = bounds.len() - 1;
            let mut i = 0;
            while i < n_chars {
                let max_len = self.max_token_chars.min(n_chars - i);
                let mut matched = 0;
                for len in (1..=max_len).rev() {
                    if self.set.contains(&chunk[bounds[i]..bounds[i + len]]) {
                        matched = len;
                        break;
                    }
                }
                if matched > 0 {
                    tokens.push(chunk[bounds[i]..bounds[i + matched]].to_owned());
                    i += matched;
                } else {
                    tokens.push(UNKNOWN_TOKEN.to_owned());
                    i += 1;
                }
            }
        }
        tokens
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update((t.len() as u32).to_le_bytes());
            h.update(t.as_bytes());
        }
        hex_prefix(&h.finalize(), 12)
    }
}

/// Which n-gram orders to extract. Bigram terms join their two tokens with
/// a single space; char and word tokens never contain whitespace in a way
/// that could collide with a unigram term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NGramOrders {
    #[serde(rename = "uni")]
    Uni,
    #[serde(rename = "bi")]
    Bi,
    #[serde(rename = "uni+bi")]
    UniBi,
}

impl NGramOrders {
    pub fn includes_unigrams(self) -> bool {
        matches!(self, NGramOrders::Uni | NGramOrders::UniBi)
    }

    pub fn includes_bigrams(self) -> bool {
        matches!(self, NGramOrders::Bi | NGramOrders::UniBi)
    }
}

impl fmt::Display for NGramOrders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NGramOrders::Uni => write!(f, "uni"),
            NGramOrders::Bi => write!(f, "bi"),
            NGramOrders::UniBi => write!(f, "uni+bi"),
        }
    }
}

impl std::str::FromStr for NGramOrders {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uni" | "unigram" | "1" => Ok(NGramOrders::Uni),
            "bi" | "bigram" | "2" => Ok(NGramOrders::Bi),
            "uni+bi" | "unibi" | "1+2" => Ok(NGramOrders::UniBi),
            other => Err(format!("unknown n-gram orders {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Count,
    TfIdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramConfig {
    pub orders: NGramOrders,
    pub weighting: Weighting,
}

impl NGramConfig {
    pub fn counts(orders: NGramOrders) -> Self {
        Self {
            orders,
            weighting: Weighting::Count,
        }
    }

    pub fn tfidf(orders: NGramOrders) -> Self {
        Self {
            orders,
            weighting: Weighting::TfIdf,
        }
    }
}

/// A fitted term-to-index map. `m = len()` is the feature-space dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyData", into = "VocabularyData")]
pub struct Vocabulary {
    terms: Vec<String>,
    ngram: NGramConfig,
    tokenizer_fingerprint: String,
    idf: Option<Vec<f64>>,
    index: HashMap<String, u32>,
    id: u64,
}

#[derive(Serialize, Deserialize, Clone)]
struct VocabularyData {
    terms: Vec<String>,
    ngram: NGramConfig,
    tokenizer_fingerprint: String,
    idf: Option<Vec<f64>>,
}

impl From<VocabularyData> for Vocabulary {
    fn from(d: VocabularyData) -> Self {
        Vocabulary::assemble(d.terms, d.ngram, d.tokenizer_fingerprint, d.idf)
    }
}

impl From<Vocabulary> for VocabularyData {
    fn from(v: Vocabulary) -> Self {
        VocabularyData {
            terms: v.terms,
            ngram: v.ngram,
            tokenizer_fingerprint: v.tokenizer_fingerprint,
            idf: v.idf,
        }
    }
}

impl Vocabulary {
    /// Fits a vocabulary over every n-gram occurring at least once in the
    /// corpus. Terms are indexed in lexicographic order. With TF-IDF
    /// weighting, smoothed idf values are fitted on the same corpus:
    /// `idf(t) = ln((1+N)/(1+df(t))) + 1`.
    pub fn fit(tokenizer: &Tokenizer, ngram: NGramConfig, corpus: &Dataset) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyDataset(corpus.name().to_owned()));
        }
        let mut df: HashMap<String, u32> = HashMap::new();
        let mut any_tokens = false;
        for example in corpus.iter() {
            let tokens = tokenizer.tokenize(example.text());
            any_tokens |= !tokens.is_empty();
            let mut seen: HashSet<String> = HashSet::new();
            for_each_ngram(&tokens, ngram.orders, |gram| {
                seen.insert(gram.into_owned());
            });
            for gram in seen {
                *df.entry(gram).or_insert(0) += 1;
            }
        }
        if !any_tokens {
            return Err(Error::NoTokens);
        }

        let mut terms: Vec<String> = df.keys().cloned().collect();
        terms.sort();
        let idf = match ngram.weighting {
            Weighting::Count => None,
            Weighting::TfIdf => {
                let n = corpus.len() as f64;
                Some(
                    terms
                        .iter()
                        .map(|t| ((1.0 + n) / (1.0 + f64::from(df[t]))).ln() + 1.0)
                        .collect(),
                )
            }
        };
        Ok(Self::assemble(
            terms,
            ngram,
            tokenizer.fingerprint(),
            idf,
        ))
    }

    fn assemble(
        terms: Vec<String>,
        ngram: NGramConfig,
        tokenizer_fingerprint: String,
        idf: Option<Vec<f64>>,
    ) -> Self {
        let index: HashMap<String, u32> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let id = {
            let mut h = Sha256::new();
            h.update(tokenizer_fingerprint.as_bytes());
            h.update([0u8]);
            h.update([ngram_tag(ngram)]);
            for t in &terms {
                h.update((t.len() as u32).to_le_bytes());
                h.update(t.as_bytes());
            }
            u64_prefix(&h.finalize())
        };
        Self {
            terms,
            ngram,
            tokenizer_fingerprint,
            idf,
            index,
            id,
        }
    }

    /// The feature-space dimension m.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn ngram(&self) -> NGramConfig {
        self.ngram
    }

    pub fn idf(&self) -> Option<&[f64]> {
        self.idf.as_deref()
    }

    /// Content-derived identity; stable across processes and versions.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Maps text into the fitted feature space. Count weighting emits raw
    /// occurrence counts; TF-IDF emits count x idf, L2-normalized.
    /// Out-of-vocabulary n-grams are dropped.
    pub fn transform(&self, tokenizer: &Tokenizer, text: &str) -> Result<FeatureVector> {
        let fp = tokenizer.fingerprint();
        if fp != self.tokenizer_fingerprint {
            return Err(Error::SpaceMismatch {
                expected: self.tokenizer_fingerprint.clone(),
                got: fp,
            });
        }
        let tokens = tokenizer.tokenize(text);
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for_each_ngram(&tokens, self.ngram.orders, |gram| {
            if let Some(&idx) = self.index.get(gram.as_ref()) {
                *counts.entry(idx).or_insert(0.0) += 1.0;
            }
        });
        let mut entries: Vec<(u32, f64)> = counts.into_iter().collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        if let (Weighting::TfIdf, Some(idf)) = (self.ngram.weighting, &self.idf) {
            for (i, v) in &mut entries {
                *v *= idf[*i as usize];
            }
            let norm = entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, v) in &mut entries {
                    *v /= norm;
                }
            }
        }
        Ok(FeatureVector {
            space: self.id,
            dim: self.terms.len() as u32,
            entries,
        })
    }
}

fn ngram_tag(cfg: NGramConfig) -> u8 {
    let order = match cfg.orders {
        NGramOrders::Uni => 0u8,
        NGramOrders::Bi => 1,
        NGramOrders::UniBi => 2,
    };
    let weight = match cfg.weighting {
        Weighting::Count => 0u8,
        Weighting::TfIdf => 4,
    };
    order | weight
}

/// Calls `f` for every n-gram of the requested orders. Bigrams are the
/// straightforward sliding window over the token sequence, joined with a
/// single space.
fn for_each_ngram<'a, F>(tokens: &'a [String], orders: NGramOrders, mut f: F)
where
    F: FnMut(std::borrow::Cow<'a, str>),
{
    if orders.includes_unigrams() {
        for t in tokens {
            f(std::borrow::Cow::Borrowed(t.as_str()));
        }
    }
    if orders.includes_bigrams() {
        for pair in tokens.windows(2) {
            f(std::borrow::Cow::Owned(format!("{} {}", pair[0], pair[1])));
        }
    }
}

/// Sparse non-negative feature vector tied to the vocabulary (or masked
/// space) that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    space: u64,
    dim: u32,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    /// Builds a vector, validating that indices are strictly increasing and
    /// in bounds and that values are positive and finite.
    pub fn new(space: u64, dim: u32, entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut prev: Option<u32> = None;
        for &(i, v) in &entries {
            if i >= dim || prev.is_some_and(|p| p >= i) {
                return Err(Error::DimensionMismatch {
                    expected: dim as usize,
                    got: i as usize,
                });
            }
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonFinite("feature value"));
            }
            prev = Some(i);
        }
        Ok(Self {
            space,
            dim,
            entries,
        })
    }

    pub(crate) fn from_parts(space: u64, dim: u32, entries: Vec<(u32, f64)>) -> Self {
        Self {
            space,
            dim,
            entries,
        }
    }

    pub fn space(&self) -> u64 {
        self.space
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Value at a coordinate; absent coordinates are 0.
    pub fn get(&self, idx: u32) -> f64 {
        match self.entries.binary_search_by_key(&idx, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Sparse dot product against a dense weight vector.
    pub fn dot_dense(&self, weights: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| v * weights[i as usize])
            .sum()
    }
}

/// The full transform h: tokenizer + n-gram config + vocabulary + optional
/// feature-selection mask. Immutable after assembly and safe to share
/// across concurrent callers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    tokenizer: Tokenizer,
    vocab: Vocabulary,
    mask: Option<SelectionMask>,
}

impl FeaturePipeline {
    /// Fits tokenizer + vocabulary over a corpus.
    pub fn fit(tokenizer: Tokenizer, ngram: NGramConfig, corpus: &Dataset) -> Result<Self> {
        let vocab = Vocabulary::fit(&tokenizer, ngram, corpus)?;
        Ok(Self {
            tokenizer,
            vocab,
            mask: None,
        })
    }

    /// Attaches a selection mask fitted over this pipeline's raw space.
    pub fn with_mask(mut self, mask: SelectionMask) -> Result<Self> {
        if mask.original_dim() as usize != self.vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vocab.len(),
                got: mask.original_dim() as usize,
            });
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn mask(&self) -> Option<&SelectionMask> {
        self.mask.as_ref()
    }

    /// Dimension of the produced vectors (after masking, if any).
    pub fn output_dim(&self) -> usize {
        match &self.mask {
            Some(m) => m.len(),
            None => self.vocab.len(),
        }
    }

    /// Identity of the produced feature space.
    pub fn output_space(&self) -> u64 {
        match &self.mask {
            Some(m) => m.space_of(self.vocab.id()),
            None => self.vocab.id(),
        }
    }

    /// Raw transform without the mask (used to fit selection masks).
    pub fn transform_unmasked(&self, text: &str) -> Result<FeatureVector> {
        self.vocab.transform(&self.tokenizer, text)
    }

    pub fn transform(&self, text: &str) -> Result<FeatureVector> {
        let v = self.vocab.transform(&self.tokenizer, text)?;
        match &self.mask {
            Some(m) => m.apply(&v),
            None => Ok(v),
        }
    }
}

pub(crate) fn u64_prefix(digest: &[u8]) -> u64 {
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub(crate) fn hex_prefix(digest: &[u8], chars: usize) -> String {
    let full: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    full[..chars].to_owned()
}
