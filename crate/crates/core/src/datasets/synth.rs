use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use super::text::{char_bigram_matrix, char_bigram_vocabulary, Vocabulary};
use super::views::{Manifest, ViewedDataset};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Rng};

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// `x = A s + noise`, `y = B s + noise` with `s ~ N(0, I_latent)`, Gaussian
/// loadings `A` (`d1 x latent`), `B` (`d2 x latent`) and isotropic noise of
/// standard deviation `noise_sd`.
///
/// Returns the data together with the population canonical correlations of
/// the generating model (descending, `latent_dim` of them).
pub fn synth_shared_latent(
    n: usize,
    d1: usize,
    d2: usize,
    latent_dim: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(ViewedDataset, Vec<f64>)> {
    if latent_dim == 0 || latent_dim > d1.min(d2) {
        return Err(Error::InvalidArgument(format!(
            "latent_dim {latent_dim} must be in 1..={}",
            d1.min(d2)
        )));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise_sd must be finite and >= 0, got {noise_sd}"
        )));
    }
    let mut rng = Rng::seed_from(seed);
    let a = rng.normal_matrix(d1, latent_dim);
    let b = rng.normal_matrix(d2, latent_dim);
    let mut x = DenseMatrix::zeros(n, d1);
    let mut y = DenseMatrix::zeros(n, d2);
    let mut s = vec![0.0; latent_dim];
    for i in 0..n {
        s.iter_mut().for_each(|v| *v = rng.normal());
        for (r, out) in x.row_mut(i).iter_mut().enumerate() {
            *out =
                a.row(r).iter().zip(&s).map(|(w, z)| w * z).sum::<f64>() + noise_sd * rng.normal();
        }
        for (r, out) in y.row_mut(i).iter_mut().enumerate() {
            *out =
                b.row(r).iter().zip(&s).map(|(w, z)| w * z).sum::<f64>() + noise_sd * rng.normal();
        }
    }
    let mut extra = BTreeMap::new();
    extra.insert("latent_dim".into(), latent_dim.to_string());
    extra.insert("noise_sd".into(), noise_sd.to_string());
    extra.insert("seed".into(), seed.to_string());
    let manifest = Manifest {
        binary_views: false,
        x_name: "x".into(),
        y_name: "y".into(),
        provenance: "synthetic shared latent".into(),
        extra,
    };
    let rho = latent_canonical_correlations(&a, &b, noise_sd)?;
    Ok((ViewedDataset::new(x, y, None, manifest)?, rho))
}

/// Population canonical correlations of `x = A s + σ e1`, `y = B s + σ e2`.
///
/// With `Gx = AᵀA`, `Mx = (Gx + σ²I)⁻¹ Gx` (and likewise `My`), the squared
/// correlations are the eigenvalues of `Mx My`, which are those of the
/// symmetric `Mx^½ My Mx^½`. Everything stays `latent x latent`.
pub fn latent_canonical_correlations(
    a: &DenseMatrix,
    b: &DenseMatrix,
    noise_sd: f64,
) -> Result<Vec<f64>> {
    let l = a.cols();
    let shrink = |m: &DenseMatrix| -> Result<DMatrix<f64>> {
        let m = to_na(m);
        let g = m.transpose() * &m;
        let reg = &g + DMatrix::identity(l, l) * (noise_sd * noise_sd);
        let chol = reg.cholesky().ok_or_else(|| {
            Error::InvalidArgument("loading matrix is rank deficient and noise is zero".into())
        })?;
        let s = chol.solve(&g);
        Ok((&s + s.transpose()) * 0.5)
    };
    let mx = shrink(a)?;
    let my = shrink(b)?;
    let e = SymmetricEigen::new(mx);
    let root = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let mx_half = &e.eigenvectors * root * e.eigenvectors.transpose();
    let s = &mx_half * my * &mx_half;
    let s = (&s + s.transpose()) * 0.5;
    let mut rho: Vec<f64> = SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .map(|v| v.clamp(0.0, 1.0).sqrt())
        .collect();
    rho.sort_by(|p, q| q.total_cmp(p));
    Ok(rho)
}

/// Shape of a synthetic two-script name-matching task.
#[derive(Clone, Debug, PartialEq)]
pub struct TransliterationConfig {
    pub n_train: usize,
    pub n_tune: usize,
    pub tune_positives: usize,
    pub n_test: usize,
    pub test_positives: usize,
    /// Per-syllable probability of a spelling variant in either script.
    pub noise: f64,
    pub min_syllables: usize,
    pub max_syllables: usize,
    pub seed: u64,
}

impl Default for TransliterationConfig {
    fn default() -> Self {
        Self {
            n_train: 5000,
            n_tune: 1000,
            tune_positives: 180,
            n_test: 5468,
            test_positives: 982,
            noise: 0.15,
            min_syllables: 2,
            max_syllables: 4,
            seed: 0,
        }
    }
}

/// Train pairs are all positives; tune/test carry 0/1 labels (1 = same name).
#[derive(Clone, Debug)]
pub struct TransliterationData {
    pub train: ViewedDataset,
    pub tune: ViewedDataset,
    pub test: ViewedDataset,
    pub x_vocab: Vocabulary,
    pub y_vocab: Vocabulary,
    pub train_words: Vec<(String, String)>,
    pub tune_words: Vec<(String, String)>,
    pub test_words: Vec<(String, String)>,
}

// Devanagari consonant and its romanizations (first is the usual one).
// Retroflex and dental stops collapse onto the same Latin letters.
const CONSONANTS: [(&str, &[&str]); 31] = [
    ("क", &["k"]),
    ("ख", &["kh"]),
    ("ग", &["g"]),
    ("घ", &["gh"]),
    ("च", &["ch"]),
    ("छ", &["chh", "ch"]),
    ("ज", &["j"]),
    ("झ", &["jh"]),
    ("ट", &["t"]),
    ("ठ", &["th"]),
    ("ड", &["d"]),
    ("ढ", &["dh"]),
    ("ण", &["n"]),
    ("त", &["t"]),
    ("थ", &["th"]),
    ("द", &["d"]),
    ("ध", &["dh"]),
    ("न", &["n"]),
    ("प", &["p"]),
    ("फ", &["ph", "f"]),
    ("ब", &["b"]),
    ("भ", &["bh"]),
    ("म", &["m"]),
    ("य", &["y"]),
    ("र", &["r"]),
    ("ल", &["l"]),
    ("व", &["v", "w"]),
    ("श", &["sh"]),
    ("ष", &["sh"]),
    ("स", &["s"]),
    ("ह", &["h"]),
];

// (independent letter, dependent sign, romanizations). The first vowel is
// inherent: it has no sign after a consonant.
const VOWELS: [(&str, &str, &[&str]); 10] = [
    ("अ", "", &["a"]),
    ("आ", "ा", &["aa", "a"]),
    ("इ", "ि", &["i"]),
    ("ई", "ी", &["ee", "i"]),
    ("उ", "ु", &["u"]),
    ("ऊ", "ू", &["oo", "u"]),
    ("ए", "े", &["e"]),
    ("ऐ", "ै", &["ai", "ei"]),
    ("ओ", "ो", &["o"]),
    ("औ", "ौ", &["au", "ou"]),
];

const VIRAMA: &str = "्";

/// Short/long partner used for spelling variation in the Devanagari rendering.
fn length_partner(v: usize) -> usize {
    match v {
        2 => 3,
        3 => 2,
        4 => 5,
        5 => 4,
        _ => v,
    }
}

/// One syllable of the latent name: up to two onset consonants and a vowel.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Syllable {
    onset: Vec<usize>,
    vowel: usize,
}

/// Syllables plus an optional final consonant with no vowel.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Name {
    syllables: Vec<Syllable>,
    coda: Option<usize>,
}

fn random_name(cfg: &TransliterationConfig, rng: &mut Rng) -> Name {
    let len = cfg.min_syllables + rng.below(cfg.max_syllables - cfg.min_syllables + 1);
    let syllables = (0..len)
        .map(|i| {
            let onset = if i == 0 && rng.bernoulli(0.15) {
                Vec::new()
            } else if i > 0 && rng.bernoulli(0.15) {
                vec![rng.below(CONSONANTS.len()), rng.below(CONSONANTS.len())]
            } else {
                vec![rng.below(CONSONANTS.len())]
            };
            let vowel = if rng.bernoulli(0.3) {
                0
            } else {
                1 + rng.below(VOWELS.len() - 1)
            };
            Syllable { onset, vowel }
        })
        .collect();
    let coda = rng.bernoulli(0.4).then(|| rng.below(CONSONANTS.len()));
    Name { syllables, coda }
}

fn pick<'a>(options: &[&'a str], noise: f64, rng: &mut Rng) -> &'a str {
    if options.len() > 1 && rng.bernoulli(noise) {
        options[1 + rng.below(options.len() - 1)]
    } else {
        options[0]
    }
}

/// Latin romanization; ambiguous spellings vary per occurrence.
fn render_x(name: &Name, noise: f64, rng: &mut Rng) -> String {
    let mut s = String::new();
    for syl in &name.syllables {
        for &c in &syl.onset {
            s.push_str(pick(CONSONANTS[c].1, noise, rng));
        }
        s.push_str(pick(VOWELS[syl.vowel].2, noise, rng));
    }
    if let Some(c) = name.coda {
        s.push_str(pick(CONSONANTS[c].1, noise, rng));
    }
    s
}

/// Devanagari rendering: vowel letters word-initially, vowel signs after
/// consonants, virama-joined clusters; long/short vowels occasionally swapped.
fn render_y(name: &Name, noise: f64, rng: &mut Rng) -> String {
    let mut s = String::new();
    for syl in &name.syllables {
        let v = if rng.bernoulli(noise) {
            length_partner(syl.vowel)
        } else {
            syl.vowel
        };
        if syl.onset.is_empty() {
            s.push_str(VOWELS[v].0);
            continue;
        }
        for (i, &c) in syl.onset.iter().enumerate() {
            if i > 0 {
                s.push_str(VIRAMA);
            }
            s.push_str(CONSONANTS[c].0);
        }
        s.push_str(VOWELS[v].1);
    }
    if let Some(c) = name.coda {
        s.push_str(CONSONANTS[c].0);
    }
    s
}

/// `name` with one syllable redrawn, like a candidate that a name search
/// would surface for it.
fn near_miss(name: &Name, cfg: &TransliterationConfig, rng: &mut Rng) -> Name {
    let mut out = name.clone();
    let i = rng.below(out.syllables.len());
    let donor = random_name(cfg, rng);
    out.syllables[i] = donor.syllables[i.min(donor.syllables.len() - 1)].clone();
    out
}

fn labelled_pairs(
    cfg: &TransliterationConfig,
    n: usize,
    positives: usize,
    rng: &mut Rng,
) -> (Vec<(String, String)>, Vec<usize>) {
    let mut out = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let a = random_name(cfg, rng);
        let positive = i < positives;
        let b = if positive {
            a.clone()
        } else {
            loop {
                let b = if rng.bernoulli(0.5) {
                    near_miss(&a, cfg, rng)
                } else {
                    random_name(cfg, rng)
                };
                if b != a {
                    break b;
                }
            }
        };
        out.push((render_x(&a, cfg.noise, rng), render_y(&b, cfg.noise, rng)));
        labels.push(usize::from(positive));
    }
    let perm = rng.permutation(n);
    (
        perm.iter().map(|&i| out[i].clone()).collect(),
        perm.iter().map(|&i| labels[i]).collect(),
    )
}

/// Names drawn as syllable sequences (the shared latent), rendered in Latin
/// and Devanagari with independent spelling variation, and featurized
/// as binary character-bigram indicators over vocabularies built from the
/// training words.
pub fn synth_transliteration(cfg: &TransliterationConfig) -> Result<TransliterationData> {
    if cfg.tune_positives > cfg.n_tune || cfg.test_positives > cfg.n_test {
        return Err(Error::InvalidArgument("more positives than pairs".into()));
    }
    if cfg.min_syllables == 0 || cfg.min_syllables > cfg.max_syllables {
        return Err(Error::InvalidArgument(
            "syllable range must satisfy 1 <= min <= max".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::InvalidArgument(format!(
            "noise must be a probability, got {}",
            cfg.noise
        )));
    }
    let mut rng = Rng::seed_from(cfg.seed);
    let train_words: Vec<(String, String)> = (0..cfg.n_train)
        .map(|_| {
            let name = random_name(cfg, &mut rng);
            (
                render_x(&name, cfg.noise, &mut rng),
                render_y(&name, cfg.noise, &mut rng),
            )
        })
        .collect();
    let (tune_words, tune_labels) = labelled_pairs(cfg, cfg.n_tune, cfg.tune_positives, &mut rng);
    let (test_words, test_labels) = labelled_pairs(cfg, cfg.n_test, cfg.test_positives, &mut rng);

    let xs: Vec<&str> = train_words.iter().map(|p| p.0.as_str()).collect();
    let ys: Vec<&str> = train_words.iter().map(|p| p.1.as_str()).collect();
    let x_vocab = char_bigram_vocabulary(&xs);
    let y_vocab = char_bigram_vocabulary(&ys);

    let mut extra = BTreeMap::new();
    extra.insert(
        "features".into(),
        "character bigrams with ^/$ boundaries".into(),
    );
    extra.insert("seed".into(), cfg.seed.to_string());
    let manifest = Manifest {
        binary_views: true,
        x_name: "latin".into(),
        y_name: "devanagari".into(),
        provenance: "synthetic transliteration".into(),
        extra,
    };
    let build = |words: &[(String, String)], labels: Option<Vec<usize>>| -> Result<ViewedDataset> {
        let xs: Vec<&str> = words.iter().map(|p| p.0.as_str()).collect();
        let ys: Vec<&str> = words.iter().map(|p| p.1.as_str()).collect();
        ViewedDataset::new(
            char_bigram_matrix(&xs, &x_vocab),
            char_bigram_matrix(&ys, &y_vocab),
            labels,
            manifest.clone(),
        )
    };
    Ok(TransliterationData {
        train: build(&train_words, None)?,
        tune: build(&tune_words, Some(tune_labels))?,
        test: build(&test_words, Some(test_labels))?,
        x_vocab: x_vocab.clone(),
        y_vocab: y_vocab.clone(),
        train_words,
        tune_words,
        test_words,
    })
}
