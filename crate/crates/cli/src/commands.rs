//! Subcommand implementations. Every artifact is written under the output
//! directory with a fixed name; see the README for the list.

use std::path::{Path, PathBuf};

use prunenet::network::{load_mnist_idx, EpochLog};
use prunenet::pruning::{iterate_prune, prune_step, retrain, PruneRecord, PruneRow};
use prunenet::report::{
    banding_ratio, input_act_pct, layer_stats, measure_act_pct, sparsity_pgm, tradeoff_csv,
    weight_histogram, EnergyModel, Storage,
};
use prunenet::sensitivity::{curves_to_csv, suggest_fractions, suggest_qualities, sweep_all};
use prunenet::sparse::{encode_model, write_atomic, Encoding};
use prunenet::{evaluate, load_checkpoint, train, Dataset, DecayMode, Model};

use crate::config::{ConfigError, RunConfig};
use crate::error::CliError;
use crate::experiments::{tradeoff, TradeoffSetup};
use crate::fetch::{fetch, standard_urls, Fetched};

pub const BASELINE: &str = "baseline.ckpt";
pub const PRUNED: &str = "pruned.ckpt";
pub const RETRAINED: &str = "retrained.ckpt";
pub const ITERATED: &str = "iterated.ckpt";
pub const EXPORTED: &str = "model.spnn";

pub struct Data {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

pub fn load_data(cfg: &RunConfig) -> Result<Data, CliError> {
    let d = &cfg.data;
    d.check()?;
    let load = |i: &str, l: &str| {
        load_mnist_idx(d.file(i), d.file(l)).map_err(|e| CliError::Data(e.to_string()))
    };
    let all = load(&d.train_images, &d.train_labels)?;
    let test = load(&d.test_images, &d.test_labels)?;
    if d.validation == 0 || d.validation >= all.len() {
        return Err(ConfigError::Value {
            key: "data.validation".into(),
            msg: format!("must lie in 1..{}", all.len()),
        }
        .into());
    }
    let (mut train, validation) = all
        .split_validation(d.validation, d.validation_seed)
        .map_err(|e| CliError::Data(e.to_string()))?;
    if d.train_limit > 0 {
        train = train.head(d.train_limit);
    }
    Ok(Data {
        train,
        validation,
        test,
    })
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let err = |msg: String| CliError::Output {
        path: path.to_path_buf(),
        msg,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| err(e.to_string()))?;
    }
    write_atomic(path, bytes).map_err(|e| err(e.to_string()))
}

fn write_out(cfg: &RunConfig, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = out_path(cfg, name);
    write(&path, bytes)?;
    Ok(path)
}

fn save(cfg: &RunConfig, name: &str, model: &Model) -> Result<PathBuf, CliError> {
    let (bytes, _) = encode_model(model, Encoding::Dense)?;
    write_out(cfg, name, &bytes)
}

/// Loads a checkpoint, defaulting to `default` in the output directory.
pub fn load_model(
    cfg: &RunConfig,
    explicit: Option<&Path>,
    default: &str,
) -> Result<Model, CliError> {
    let path = explicit.map_or_else(|| out_path(cfg, default), Path::to_path_buf);
    if !path.exists() {
        return Err(ConfigError::MissingPath(path).into());
    }
    load_checkpoint(&path).map_err(|source| CliError::Checkpoint { path, source })
}

fn epoch_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,lr,mean_loss,train_error\n");
    for e in log {
        s += &format!("{},{},{},{}\n", e.epoch, e.lr, e.mean_loss, e.train_error);
    }
    s
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

pub fn cmd_fetch(cfg: &RunConfig, urls: &[String], base_url: Option<&str>) -> Result<(), CliError> {
    let mut all = urls.to_vec();
    if let Some(base) = base_url {
        all.extend(standard_urls(base));
    }
    if all.is_empty() {
        return Err(ConfigError::Value {
            key: "fetch".into(),
            msg: "give --url or --base-url".into(),
        }
        .into());
    }
    for f in fetch(&all, &cfg.data.dir)? {
        match f {
            Fetched::Downloaded(p) => println!("fetched {}", p.display()),
            Fetched::AlreadyPresent(p) => println!("verified {}", p.display()),
        }
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Model, CliError> {
    let data = load_data(cfg)?;
    let model = Model::init(
        cfg.arch.input(),
        cfg.arch.specs_with_dropout(cfg.dropout),
        cfg.seed,
    )?;
    let (model, log) = train(model, &data.train, &cfg.train)?;
    let val = evaluate(&model, &data.validation)?;
    let test = evaluate(&model, &data.test)?;
    let ckpt = save(cfg, BASELINE, &model)?;
    write_out(cfg, "train_log.csv", epoch_csv(&log).as_bytes())?;
    write_out(
        cfg,
        "train_metrics.csv",
        format!("metric,value\nvalidation_error,{val}\ntest_error,{test}\n").as_bytes(),
    )?;
    println!(
        "trained {} for {} epochs: validation error {}, test error {}",
        cfg.arch,
        cfg.train.epochs,
        pct(val),
        pct(test)
    );
    println!("checkpoint {}", ckpt.display());
    Ok(model)
}

pub fn cmd_prune(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let mut model = load_model(cfg, checkpoint, BASELINE)?;
    let thresholds = prune_step(&mut model, &cfg.prune, 1)?;
    let err = evaluate(&model, &data.validation)?;
    let record = PruneRecord {
        baseline_error: f64::NAN,
        rows: model
            .weighted_layers()
            .into_iter()
            .map(|l| {
                let p = model.param(l).expect("weighted");
                PruneRow {
                    iteration: 1,
                    layer: model.specs()[l].name.clone(),
                    threshold: thresholds[l],
                    weights_total: p.total(),
                    weights_remaining: p.live_count(),
                    error_after_retrain: err,
                }
            })
            .collect(),
        rejected: None,
    };
    save(cfg, PRUNED, &model)?;
    write_out(cfg, "prune_record.csv", record.to_csv().as_bytes())?;
    print!("{}", record.to_csv());
    println!("validation error without retraining {}", pct(err));
    Ok(())
}

pub fn cmd_retrain(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let model = load_model(cfg, checkpoint, PRUNED)?;
    let active = cfg.prune.freeze.active_layers(&model, 1);
    let (model, log) = retrain(
        model,
        &data.train,
        &cfg.prune.retrain,
        &active,
        cfg.prune.dropout_adjust,
    )?;
    save(cfg, RETRAINED, &model)?;
    write_out(cfg, "retrain_log.csv", epoch_csv(&log).as_bytes())?;
    println!(
        "retrained: validation error {}, test error {}",
        pct(evaluate(&model, &data.validation)?),
        pct(evaluate(&model, &data.test)?)
    );
    Ok(())
}

pub fn cmd_iterate(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
) -> Result<(Model, PruneRecord), CliError> {
    let data = load_data(cfg)?;
    let model = load_model(cfg, checkpoint, BASELINE)?;
    let base_test = evaluate(&model, &data.test)?;
    let (model, record) = iterate_prune(model, &data.train, &data.validation, &cfg.prune)?;
    save(cfg, ITERATED, &model)?;
    write_out(cfg, "iterate_record.csv", record.to_csv().as_bytes())?;
    let (total, live) = model.weight_counts();
    print!("{}", record.to_csv());
    if let Some((it, err)) = record.rejected {
        println!("iteration {it} rejected: validation error {}", pct(err));
    }
    println!(
        "weights remaining {:.2}%; test error {} (baseline {})",
        100.0 * live as f64 / total as f64,
        pct(evaluate(&model, &data.test)?),
        pct(base_test)
    );
    Ok((model, record))
}

pub fn cmd_sensitivity(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let model = load_model(cfg, checkpoint, BASELINE)?;
    let eval = if cfg.sensitivity.on_test {
        &data.test
    } else {
        &data.validation
    };
    let curves = sweep_all(&model, &cfg.sensitivity.fractions, eval)?;
    let fractions = suggest_fractions(&curves, cfg.sensitivity.budget)?;
    let qualities = suggest_qualities(&model, &curves, cfg.sensitivity.budget)?;
    write_out(cfg, "sensitivity.csv", curves_to_csv(&curves).as_bytes())?;
    let mut s = String::from("layer,fraction,quality\n");
    for ((c, f), q) in curves.iter().zip(&fractions).zip(&qualities) {
        s += &format!("{},{},{}\n", c.layer, f, q);
    }
    write_out(cfg, "suggested_quality.csv", s.as_bytes())?;
    print!("{s}");
    Ok(())
}

pub fn cmd_export(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let model = load_model(cfg, checkpoint, ITERATED)?;
    let (bytes, report) = encode_model(
        &model,
        Encoding::Sparse {
            index_bits: cfg.index_bits,
        },
    )?;
    let (dense, _) = encode_model(&model, Encoding::Dense)?;
    let path = write_out(cfg, EXPORTED, &bytes)?;
    write_out(cfg, "storage.csv", report.to_csv().as_bytes())?;
    println!("wrote {} ({} bytes)", path.display(), bytes.len());
    println!(
        "dense checkpoint {} bytes; sparse file is {:.2}% of it",
        dense.len(),
        100.0 * bytes.len() as f64 / dense.len() as f64
    );
    println!(
        "index storage {:.1}% of value storage ({:.1}% with padding, {:.1}% counting headers)",
        100.0 * report.index_overhead(),
        100.0 * report.index_overhead_padded(),
        100.0 * report.index_overhead_with_headers()
    );
    Ok(())
}

pub fn cmd_import_check(
    cfg: &RunConfig,
    model_path: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<(), CliError> {
    let imported = load_model(cfg, model_path, EXPORTED)?;
    let reference = load_model(cfg, checkpoint, ITERATED)?;
    let data = load_data(cfg)?;
    let n = data.test.len();
    for start in (0..n).step_by(500) {
        let idx: Vec<usize> = (start..(start + 500).min(n)).collect();
        let (x, _) = data.test.batch(&idx);
        let a = imported.predict(&x)?;
        let b = reference.predict(&x)?;
        if let Some(i) = a
            .data()
            .iter()
            .zip(b.data())
            .position(|(p, q)| p.to_bits() != q.to_bits())
        {
            println!("MISMATCH");
            return Err(CliError::Mismatch(format!(
                "logit {} of sample {}",
                i % imported.num_classes(),
                start + i / imported.num_classes()
            )));
        }
    }
    println!("EXACT");
    Ok(())
}

pub fn cmd_report(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let model = load_model(cfg, checkpoint, ITERATED)?;
    let table = layer_stats(&model, &data.validation, cfg.act_samples)?;
    let mut text = table.to_text();
    text += &format!(
        "\nActivation density measured on {} validation samples.\n",
        cfg.act_samples.min(data.validation.len())
    );
    for l in model.weighted_layers() {
        let p = model.param(l).expect("weighted");
        let name = &model.specs()[l].name;
        if p.live_count() > 0 {
            let m = p.live_weights().fold(0f32, |a, w| a.max(w.abs())) as f64;
            let m = if m > 0.0 { m } else { 1.0 };
            let h = weight_histogram(p, cfg.histogram_bins, (-m, m))?;
            write_out(cfg, &format!("{name}_hist.csv"), h.to_csv().as_bytes())?;
        }
        if model.specs()[l].kind.is_dense() {
            write_out(cfg, &format!("{name}_mask.pgm"), &sparsity_pgm(p)?)?;
            let width = model.input().width;
            if l == 0 && p.weights().shape()[0] % width == 0 {
                text += &format!(
                    "{name} mask banding (center/outer density over {width}-pixel bands): {:.2}\n",
                    banding_ratio(p, width)?
                );
            }
        }
    }
    let act = measure_act_pct(&model, &data.validation, cfg.act_samples)?;
    let input_act = input_act_pct(&act);
    let energy = EnergyModel::default();
    let mut e = String::from("storage,memory_pj,compute_pj,total_pj\n");
    for (name, storage) in [("sram", Storage::Sram), ("dram", Storage::Dram)] {
        let est = energy.estimate(&model, storage, Some(&input_act));
        e += &format!(
            "{name},{},{},{}\n",
            est.memory_pj,
            est.compute_pj,
            est.total_pj()
        );
    }
    write_out(cfg, "report.txt", text.as_bytes())?;
    write_out(cfg, "report.csv", table.to_csv().as_bytes())?;
    write_out(cfg, "energy.csv", e.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn cmd_tradeoff(
    cfg: &RunConfig,
    l1_checkpoint: Option<&Path>,
    l2_checkpoint: Option<&Path>,
) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let l1_decay = DecayMode::L1(cfg.tradeoff.l1_coef);
    let l2_decay = match cfg.train.decay {
        DecayMode::L2(c) => DecayMode::L2(c),
        _ => DecayMode::L2(1e-4),
    };
    let baseline = |decay: DecayMode, path: Option<&Path>, name: &str| -> Result<Model, CliError> {
        if let Some(p) = path {
            return load_model(cfg, Some(p), name);
        }
        let model = Model::init(
            cfg.arch.input(),
            cfg.arch.specs_with_dropout(cfg.dropout),
            cfg.seed,
        )?;
        let tc = prunenet::TrainConfig {
            decay,
            ..cfg.train.clone()
        };
        let (model, _) = train(model, &data.train, &tc)?;
        save(cfg, name, &model)?;
        Ok(model)
    };
    let l1 = baseline(l1_decay, l1_checkpoint, "tradeoff_l1.ckpt")?;
    let l2 = baseline(l2_decay, l2_checkpoint, "tradeoff_l2.ckpt")?;
    let eval = if cfg.tradeoff.on_test {
        &data.test
    } else {
        &data.validation
    };
    let retrain = prunenet::TrainConfig {
        epochs: cfg.tradeoff.retrain_epochs,
        ..cfg.prune.retrain.clone()
    };
    let points = tradeoff(&TradeoffSetup {
        l1: &l1,
        l2: &l2,
        train: &data.train,
        eval,
        fractions: &cfg.tradeoff.fractions,
        retrain,
        l1_decay,
        l2_decay,
    })?;
    let csv = tradeoff_csv(&points);
    write_out(cfg, "tradeoff.csv", csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}
