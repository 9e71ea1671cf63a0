use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crlkit::datasets::{char_bigram_featurize, reassemble, Vocabulary};
use crlkit::eval::{
    ablation_grid, reconstruct_from, reconstruction_mse, sum_correlation, transfer_both,
    tuned_matching, write_pgm, ClassifierConfig, EvalReport, TransferProtocol,
};
use crlkit::model::gradcheck::{check_gradient, random_case, standard_masks, GradCheckTolerance};
use crlkit::model::TwoViewEncoder;
use crlkit::{Activation, CorrNetParams, DenseMatrix, ReconLoss, Rng, ViewTag};
use log::info;

use crate::config::{DataKind, ExperimentConfig, Metric, ModelKind};
use crate::data::{self, Splits};
use crate::fetch::sha256_hex;
use crate::models::{train_model, AnyModel};
use crate::{ConfigError, NumericFailure};

fn prepare_output(cfg: &ExperimentConfig, command: &str) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join(format!("{command}.conf")), cfg.to_text())?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn protocol(cfg: &ExperimentConfig) -> TransferProtocol {
    TransferProtocol {
        folds: cfg.eval.folds,
        seed: cfg.eval.seed,
        classifier: ClassifierConfig {
            l2: cfg.eval.l2,
            max_iter: cfg.eval.max_iter,
            ..Default::default()
        },
    }
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(cfg.to_text().as_bytes())[..16].to_string()
}

fn write_pairs(path: &Path, words: &[(String, String)], labels: &[usize]) -> Result<()> {
    let mut s = String::new();
    for ((x, y), l) in words.iter().zip(labels) {
        let _ = writeln!(s, "{x}\t{y}\t{l}");
    }
    write(path, s)
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let Splits { train, words, .. } = data::load(&cfg.data)?;
    let out = prepare_output(cfg, "train")?;
    info!(
        "training {} on {} pairs ({} x {})",
        cfg.model.kind,
        train.len(),
        train.x.cols(),
        train.y.cols()
    );
    let (model, log) = train_model(cfg, cfg.model.kind, cfg.model.k, &train)?;
    write(&out.join("model.ckpt"), model.to_bytes())?;
    write(&out.join("train_log.csv"), log.to_csv())?;
    if let Some(w) = words {
        w.x_vocab.save(out.join("x_vocab.txt"))?;
        w.y_vocab.save(out.join("y_vocab.txt"))?;
        write_pairs(&out.join("tune.tsv"), &w.tune_words, w.tune.labels()?)?;
        write_pairs(&out.join("test.tsv"), &w.test_words, w.test.labels()?)?;
    }
    println!("wrote {} to {}", model.describe(), out.display());
    Ok(())
}

/// Original, reconstruction from the left half alone, reconstruction from the right half alone.
fn dump_recon(
    model: &AnyModel,
    test: &crlkit::datasets::ViewedDataset,
    dir: &Path,
    count: usize,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let idx: Vec<usize> = (0..count.min(test.len())).collect();
    let part = test.select(&idx);
    let original = reassemble(&part.x, &part.y)?;
    let (lx, ly) = reconstruct_from(model, ViewTag::X, &part.x)?;
    let (rx, ry) = reconstruct_from(model, ViewTag::Y, &part.y)?;
    let from_left = reassemble(&lx, &ly)?;
    let from_right = reassemble(&rx, &ry)?;
    for i in 0..idx.len() {
        let mut pixels = Vec::with_capacity(28 * 84);
        for r in 0..28 {
            for img in [&original, &from_left, &from_right] {
                pixels.extend_from_slice(&img.row(i)[r * 28..(r + 1) * 28]);
            }
        }
        write_pgm(dir.join(format!("recon_{i:03}.pgm")), &pixels, 28, 84)?;
    }
    Ok(())
}

pub fn eval(
    cfg: &ExperimentConfig,
    model_path: &Path,
    recon_dir: Option<&Path>,
    recon_count: usize,
) -> Result<()> {
    let model = AnyModel::load(model_path)?;
    let Splits { test, .. } = data::load(&cfg.data)?;
    for view in [ViewTag::X, ViewTag::Y] {
        let have = if view == ViewTag::X {
            test.x.cols()
        } else {
            test.y.cols()
        };
        if model.view_dim(view) != have {
            bail!(ConfigError(format!(
                "checkpoint expects {} columns in the {view} view, dataset has {have}",
                model.view_dim(view)
            )));
        }
    }
    if recon_dir.is_some() && (cfg.data.kind != DataKind::Mnist || !model.has_decoder()) {
        bail!(ConfigError(
            "--dump-recon needs MNIST data and a model with a decoder".into()
        ));
    }
    let out = prepare_output(cfg, "eval")?;
    let mut report = EvalReport::default();
    for metric in &cfg.eval.metrics {
        match metric {
            Metric::Correlation => {
                let hx = model.encode_view(ViewTag::X, &test.x)?;
                let hy = model.encode_view(ViewTag::Y, &test.y)?;
                report.sum_correlation = Some(sum_correlation(&hx, &hy)?);
            }
            Metric::Mse if model.has_decoder() => {
                let (s, c) = reconstruction_mse(&model, &test.to_batch())?;
                report.mse_self = Some(s);
                report.mse_cross = Some(c);
            }
            Metric::Mse => info!("skipping mse: {} has no decoder", model.describe()),
            Metric::Transfer if test.labels.is_some() && cfg.data.kind == DataKind::Mnist => {
                let t = transfer_both(&model, &test, &protocol(cfg))?;
                report.transfer_l2r = Some(t.l2r);
                report.transfer_r2l = Some(t.r2l);
                report.folds = cfg.eval.folds;
            }
            Metric::Transfer => info!("skipping transfer: dataset has no class labels"),
        }
    }
    report.metadata = BTreeMap::from([
        ("config_hash".to_string(), config_hash(cfg)),
        ("dataset".to_string(), test.manifest.provenance.clone()),
        ("model".to_string(), model.describe()),
        ("seed".to_string(), cfg.train.seed.to_string()),
    ]);
    report.validate()?;
    write(&out.join("eval.csv"), report.to_csv())?;
    print!("{}", report.to_text());
    if let Some(dir) = recon_dir {
        dump_recon(&model, &test, dir, recon_count)?;
        println!("reconstructions written to {}", dir.display());
    }
    Ok(())
}

pub fn ablate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.ablate_masks.is_empty() {
        bail!(ConfigError("ablate.masks is empty".into()));
    }
    let Splits { train, test, .. } = data::load(&cfg.data)?;
    test.labels()
        .map_err(|_| ConfigError("ablation needs a labelled dataset".into()))?;
    let out = prepare_output(cfg, "ablate")?;
    let m = &cfg.model;
    let init = CorrNetParams::new(
        train.x.cols(),
        train.y.cols(),
        m.k,
        m.hidden_act,
        m.output_act,
        m.loss,
        &mut Rng::seed_from(cfg.train.seed),
    )?;
    info!("ablating {} masks", cfg.ablate_masks.len());
    let rows = ablation_grid(
        &init,
        &train.to_batch(),
        &test,
        &cfg.ablate_masks,
        &cfg.train,
        &protocol(cfg),
    )?;
    let mut csv = String::from("mask,transfer_l2r,transfer_r2l,sum_correlation\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.mask, r.l2r, r.r2l, r.sum_correlation);
    }
    write(&out.join("ablation.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn sweep_dims(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.sweep_dims.is_empty() || cfg.sweep_dims.contains(&0) {
        bail!(ConfigError("sweep.dims must list positive widths".into()));
    }
    let Splits { train, test, .. } = data::load(&cfg.data)?;
    let out = prepare_output(cfg, "sweep-dims")?;
    let names: Vec<String> = cfg.sweep_models.iter().map(ModelKind::to_string).collect();
    let mut csv = format!("dim,{}\n", names.join(","));
    for &dim in &cfg.sweep_dims {
        let mut row = dim.to_string();
        for &kind in &cfg.sweep_models {
            let (model, _) = train_model(cfg, kind, dim, &train)?;
            let corr = sum_correlation(
                &model.encode_view(ViewTag::X, &test.x)?,
                &model.encode_view(ViewTag::Y, &test.y)?,
            )?;
            info!("dim {dim} {kind}: {corr:.3}");
            let _ = write!(row, ",{corr}");
        }
        let _ = writeln!(csv, "{row}");
        // partial results survive an interrupted sweep
        write(&out.join("sweep_dims.csv"), &csv)?;
    }
    print!("{csv}");
    Ok(())
}

/// Finite-difference checks over `cases` random problems, cycling hidden
/// activations and reconstruction losses; each case runs every standard mask.
pub fn gradcheck(cases: usize, seed: u64, lambda: f64) -> Result<()> {
    let mut rng = Rng::seed_from(seed);
    let mut failed = 0;
    for i in 0..cases {
        let act = [Activation::Sigmoid, Activation::Tanh][i % 2];
        let loss = [ReconLoss::Squared, ReconLoss::CrossEntropy][(i / 2) % 2];
        let case = random_case(&mut rng, act, loss);
        let mut worst: f64 = 0.0;
        let mut bad = Vec::new();
        for mask in standard_masks(lambda) {
            let r = check_gradient(
                &case.params,
                &case.batch,
                &mask,
                GradCheckTolerance::default(),
            )?;
            worst = worst.max(r.max_rel_err);
            if !r.passed() {
                bad.push(format!("{mask} ({} entries)", r.failures.len()));
            }
        }
        if bad.is_empty() {
            println!(
                "case {i:>2} ok    max rel err {worst:.2e}  {}",
                case.description
            );
        } else {
            failed += 1;
            println!("case {i:>2} FAIL  {}  {}", bad.join(", "), case.description);
        }
    }
    if failed > 0 {
        bail!(NumericFailure(format!(
            "{failed} of {cases} gradient checks failed"
        )));
    }
    println!("all {cases} cases passed");
    Ok(())
}

fn read_pairs(
    path: &Path,
    xv: &Vocabulary,
    yv: &Vocabulary,
) -> Result<crlkit::datasets::ViewedDataset> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let f: Vec<&str> = line.split('\t').collect();
        let [x, y, label] = f[..] else {
            bail!(ConfigError(format!(
                "{}:{}: expected `x<TAB>y<TAB>label`",
                path.display(),
                i + 1
            )));
        };
        let label: usize = match label.trim() {
            "0" => 0,
            "1" => 1,
            other => bail!(ConfigError(format!(
                "{}:{}: label must be 0 or 1, got `{other}`",
                path.display(),
                i + 1
            ))),
        };
        xs.push(char_bigram_featurize(x, xv).as_slice().to_vec());
        ys.push(char_bigram_featurize(y, yv).as_slice().to_vec());
        labels.push(label);
    }
    if labels.is_empty() {
        bail!(ConfigError(format!("{} holds no pairs", path.display())));
    }
    let stack = |rows: Vec<Vec<f64>>, cols: usize| -> Result<DenseMatrix> {
        let n = rows.len();
        Ok(DenseMatrix::from_vec(n, cols, rows.concat())?)
    };
    let manifest = crlkit::datasets::Manifest {
        binary_views: true,
        provenance: path.display().to_string(),
        ..Default::default()
    };
    Ok(crlkit::datasets::ViewedDataset::new(
        stack(xs, xv.len())?,
        stack(ys, yv.len())?,
        Some(labels),
        manifest,
    )?)
}

pub struct MatchArgs<'a> {
    pub model: &'a Path,
    pub x_vocab: &'a Path,
    pub y_vocab: &'a Path,
    pub tune: &'a Path,
    pub pairs: &'a Path,
}

pub fn match_pairs(cfg: &ExperimentConfig, a: &MatchArgs<'_>) -> Result<()> {
    let model = AnyModel::load(a.model)?;
    let xv =
        Vocabulary::load(a.x_vocab).with_context(|| format!("reading {}", a.x_vocab.display()))?;
    let yv =
        Vocabulary::load(a.y_vocab).with_context(|| format!("reading {}", a.y_vocab.display()))?;
    if model.view_dim(ViewTag::X) != xv.len() || model.view_dim(ViewTag::Y) != yv.len() {
        bail!(ConfigError(format!(
            "vocabularies have {} and {} terms, checkpoint expects {} and {}",
            xv.len(),
            yv.len(),
            model.view_dim(ViewTag::X),
            model.view_dim(ViewTag::Y)
        )));
    }
    let tune = read_pairs(a.tune, &xv, &yv)?;
    let test = read_pairs(a.pairs, &xv, &yv)?;
    let out = prepare_output(cfg, "match")?;
    let m = tuned_matching(&model, &tune, &test)?;
    let csv = format!(
        "threshold,tune_f1,precision,recall,f1\n{},{},{},{},{}\n",
        m.tuned.threshold, m.tuned.f1, m.precision, m.recall, m.f1
    );
    write(&out.join("match.csv"), &csv)?;
    println!(
        "threshold {:.6} (tune F1 {:.4})",
        m.tuned.threshold, m.tuned.f1
    );
    println!(
        "precision {:.4}  recall {:.4}  F1 {:.4}",
        m.precision, m.recall, m.f1
    );
    Ok(())
}
