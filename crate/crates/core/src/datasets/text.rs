use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{DenseMatrix, DenseVector};

/// Ordered terms with a reverse index; a term's index is its position.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the first occurrence of each term, in order.
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary::default();
        for t in terms {
            v.insert(t.into());
        }
        v
    }

    /// Adds a term if new; returns its index either way.
    pub fn insert(&mut self, term: String) -> usize {
        if let Some(&i) = self.index.get(&term) {
            return i;
        }
        let i = self.terms.len();
        self.index.insert(term.clone(), i);
        self.terms.push(term);
        i
    }

    /// Terms of all documents that occur at least `min_count` times, in first-seen order.
    pub fn build<S: AsRef<str>>(docs: &[Vec<S>], min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        for d in docs {
            for t in d {
                let c = counts.entry(t.as_ref()).or_insert(0);
                if *c == 0 {
                    order.push(t.as_ref());
                }
                *c += 1;
            }
        }
        Self::from_terms(order.into_iter().filter(|t| counts[t] >= min_count))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, i: usize) -> Option<&str> {
        self.terms.get(i).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// UTF-8, one term per line; line number is the index.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = String::new();
        for t in &self.terms {
            if t.contains('\n') {
                return Err(Error::InvalidArgument(format!(
                    "term {t:?} contains a newline"
                )));
            }
            s.push_str(t);
            s.push('\n');
        }
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = fs::read_to_string(path)?;
        let terms: Vec<&str> = s.lines().collect();
        let v = Self::from_terms(terms.iter().copied());
        if v.len() != terms.len() {
            return Err(Error::Format(
                "vocabulary file contains duplicate terms".into(),
            ));
        }
        Ok(v)
    }
}

/// Lowercases, strips punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| !c.is_ascii_punctuation())
                .collect::<String>()
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Binary bag-of-words rows; out-of-vocabulary tokens are ignored.
pub fn bow_featurize<S: AsRef<str>>(docs: &[Vec<S>], vocab: &Vocabulary) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(docs.len(), vocab.len());
    for (r, doc) in docs.iter().enumerate() {
        let row = m.row_mut(r);
        for t in doc {
            if let Some(i) = vocab.get(t.as_ref()) {
                row[i] = 1.0;
            }
        }
    }
    m
}

pub const WORD_START: char = '^';
pub const WORD_END: char = '$';

/// Character bigrams of `^word$`; the empty word has none.
pub fn char_bigrams(word: &str) -> Vec<String> {
    if word.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = std::iter::once(WORD_START)
        .chain(word.chars())
        .chain(std::iter::once(WORD_END))
        .collect();
    chars.windows(2).map(|w| w.iter().collect()).collect()
}

/// Bigram vocabulary over a word list, in first-seen order.
pub fn char_bigram_vocabulary<S: AsRef<str>>(words: &[S]) -> Vocabulary {
    Vocabulary::from_terms(words.iter().flat_map(|w| char_bigrams(w.as_ref())))
}

/// Binary indicator over the bigram vocabulary; unseen bigrams are ignored.
pub fn char_bigram_featurize(word: &str, vocab: &Vocabulary) -> DenseVector {
    let mut v = vec![0.0; vocab.len()];
    for b in char_bigrams(word) {
        if let Some(i) = vocab.get(&b) {
            v[i] = 1.0;
        }
    }
    DenseVector::from_vec(v).expect("finite")
}

/// Featurizes many words into rows.
pub fn char_bigram_matrix<S: AsRef<str>>(words: &[S], vocab: &Vocabulary) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(words.len(), vocab.len());
    for (r, w) in words.iter().enumerate() {
        m.row_mut(r)
            .copy_from_slice(char_bigram_featurize(w.as_ref(), vocab).as_slice());
    }
    m
}

/// `idf_i = ln(N / (1 + df_i))` over a reference corpus.
pub fn compute_idf<S: AsRef<str>>(docs: &[Vec<S>], vocab: &Vocabulary) -> DenseVector {
    let mut df = vec![0usize; vocab.len()];
    for doc in docs {
        let mut seen = vec![false; vocab.len()];
        for t in doc {
            if let Some(i) = vocab.get(t.as_ref()) {
                if !seen[i] {
                    seen[i] = true;
                    df[i] += 1;
                }
            }
        }
    }
    let n = docs.len() as f64;
    DenseVector::from_vec(df.iter().map(|&d| (n / (1.0 + d as f64)).ln()).collect())
        .expect("finite for N >= 1")
}

/// Raw term counts.
pub fn term_frequencies<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary) -> Vec<f64> {
    let mut tf = vec![0.0; vocab.len()];
    for t in doc {
        if let Some(i) = vocab.get(t.as_ref()) {
            tf[i] += 1.0;
        }
    }
    tf
}

/// `embedding * (tf .* idf)` where `embedding` is `k x |vocab|` (one column per word).
pub fn tfidf_doc_embedding<S: AsRef<str>>(
    doc: &[S],
    vocab: &Vocabulary,
    idf: &DenseVector,
    embedding: &DenseMatrix,
) -> Result<DenseVector> {
    if idf.len() != vocab.len() || embedding.cols() != vocab.len() {
        return dim_err(
            "tfidf_doc_embedding",
            format!(
                "vocabulary {} vs idf {} vs embedding columns {}",
                vocab.len(),
                idf.len(),
                embedding.cols()
            ),
        );
    }
    let tf = term_frequencies(doc, vocab);
    let w: Vec<(usize, f64)> = tf
        .iter()
        .zip(idf.as_slice())
        .enumerate()
        .filter(|(_, (t, _))| **t != 0.0)
        .map(|(i, (t, d))| (i, t * d))
        .collect();
    let out = (0..embedding.rows()).map(|r| {
        let row = embedding.row(r);
        w.iter().map(|&(i, v)| row[i] * v).sum::<f64>()
    });
    DenseVector::from_vec(out.collect())
}
