use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use instrclass::evaluation::report::{
    accuracy_table_markdown, confusion_markdown, power_fits, write_confusion_csv, write_confusion_png, write_results_csv,
};
use instrclass::evaluation::{
    confusion_matrix, fit_model, per_class_metrics, run_experiment, ConfusionMatrix, ExperimentSplits, MetricReport,
    TrainedModel,
};
use instrclass::neural::io::save_network;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetKind, RunConfig};
use crate::data::{self, SplitData};
use crate::failure::{Failure, Outcome, Stage};

pub const MODEL_FILE_VERSION: u32 = 1;

/// Everything `eval` needs to score a trained model on new data.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub dataset_kind: DatasetKind,
    pub image_downscale: u32,
    pub families: Vec<u8>,
    pub class_names: Vec<String>,
    pub model: TrainedModel,
}

fn write_text(stage: &'static str, path: &Path, text: &str) -> Outcome<()> {
    std::fs::write(path, text).at(stage, path)
}

/// Creates the run directory and stores the resolved configuration in it.
pub fn prepare_run_dir(cfg: &RunConfig, stage: &'static str) -> Outcome<PathBuf> {
    let dir = cfg.run_dir().stage(stage)?;
    std::fs::create_dir_all(&dir).at(stage, &dir)?;
    write_text(stage, &dir.join("config.toml"), &cfg.to_toml().stage(stage)?)?;
    Ok(dir)
}

fn require_seed(cfg: &RunConfig, stage: &'static str) -> Outcome<u64> {
    cfg.training.seed.ok_or_else(|| Failure::new(stage, None, anyhow!("--seed is required")))
}

fn split_accuracy(model: &TrainedModel, split: &SplitData, names: &[String], stage: &'static str) -> Outcome<ConfusionMatrix> {
    let pred = model.predict(&split.data.inputs).stage(stage)?;
    let mut cm = confusion_matrix(&split.data.labels, &pred, names.len()).stage(stage)?;
    cm.class_names = names.to_vec();
    Ok(cm)
}

pub fn train(cfg: &RunConfig) -> Outcome<PathBuf> {
    const STAGE: &str = "train";
    let seed = require_seed(cfg, STAGE)?;
    let loaded = data::load(cfg)?;
    data::check_train_size(&loaded, cfg.dataset.per_class).stage(STAGE)?;
    let k = loaded.class_names.len();
    let train_split = loaded.train.first_per_class(cfg.dataset.per_class, k);
    let start = Instant::now();
    let (model, notes) = fit_model(&cfg.model, &train_split.data, loaded.valid.as_ref().map(|v| &v.data), k, seed)
        .with_context(|| format!("fitting {}", cfg.model.name()))
        .stage(STAGE)?;
    eprintln!("info train model={} seconds={:.3}", cfg.model.name(), start.elapsed().as_secs_f64());
    for n in &notes {
        eprintln!("note train {n}");
    }
    let dir = prepare_run_dir(cfg, STAGE)?;
    if let TrainedModel::Neural { network, history, .. } = &model {
        let weights = dir.join("weights.icnn");
        save_network(network, &weights).at(STAGE, &weights)?;
        let hist = dir.join("history.csv");
        history.write_csv(&hist).at(STAGE, &hist)?;
    }
    let train_cm = split_accuracy(&model, &train_split, &loaded.class_names, STAGE)?;
    println!("train accuracy={:.6}", train_cm.trace() as f64 / train_cm.total() as f64);
    if let Some(v) = &loaded.valid {
        let cm = split_accuracy(&model, v, &loaded.class_names, STAGE)?;
        println!("valid accuracy={:.6}", cm.trace() as f64 / cm.total() as f64);
    }
    let file = ModelFile {
        format_version: MODEL_FILE_VERSION,
        dataset_kind: cfg.dataset.kind,
        image_downscale: cfg.dataset.image_downscale,
        families: loaded.families,
        class_names: loaded.class_names,
        model,
    };
    let path = dir.join("model.json");
    write_text(STAGE, &path, &serde_json::to_string(&file).stage(STAGE)?)?;
    write_text(STAGE, &dir.join("notes.txt"), &notes.iter().map(|n| format!("{n}\n")).collect::<String>())?;
    println!("model {}", path.display());
    Ok(dir)
}

pub fn load_model_file(path: &Path) -> Outcome<ModelFile> {
    const STAGE: &str = "eval";
    let text = std::fs::read_to_string(path).at(STAGE, path)?;
    let file: ModelFile = serde_json::from_str(&text).at(STAGE, path)?;
    if file.format_version != MODEL_FILE_VERSION {
        return Err(Failure::new(
            STAGE,
            Some(path),
            anyhow!("model file version {} (supported: {MODEL_FILE_VERSION})", file.format_version),
        ));
    }
    Ok(file)
}

fn write_split_report(
    cfg: &RunConfig,
    dir: &Path,
    role: &str,
    cm: &ConfusionMatrix,
    stage: &'static str,
) -> Outcome<MetricReport> {
    let report = per_class_metrics(cm).stage(stage)?;
    write_text(stage, &dir.join(format!("metrics_{role}.json")), &serde_json::to_string_pretty(&report).stage(stage)?)?;
    let csv = dir.join(format!("confusion_{role}.csv"));
    write_confusion_csv(&csv, cm).at(stage, &csv)?;
    write_text(stage, &dir.join(format!("confusion_{role}.md")), &confusion_markdown(cm))?;
    if cfg.evaluation.confusion_png {
        let png = dir.join(format!("confusion_{role}.png"));
        write_confusion_png(&png, cm, cfg.evaluation.confusion_cell_px).at(stage, &png)?;
    }
    Ok(report)
}

/// Scores a model on the test split (and the validation split when one
/// exists). `model_path` defaults to the run directory of `cfg`.
pub fn eval(cfg: &RunConfig, model_path: Option<&Path>) -> Outcome<PathBuf> {
    const STAGE: &str = "eval";
    let path = match model_path {
        Some(p) => p.to_path_buf(),
        None => {
            require_seed(cfg, STAGE).map_err(|_| {
                Failure::new(STAGE, None, anyhow!("pass the training --seed or --model to locate the model"))
            })?;
            cfg.run_dir().stage(STAGE)?.join("model.json")
        }
    };
    let file = load_model_file(&path)?;
    if file.dataset_kind != cfg.dataset.kind || file.image_downscale != cfg.dataset.image_downscale {
        return Err(Failure::new(STAGE, Some(&path), anyhow!("model was trained on a different input representation")));
    }
    let loaded = data::load(cfg)?;
    if loaded.families != file.families {
        return Err(Failure::new(STAGE, Some(&path), anyhow!("model classes {:?} differ from dataset classes {:?}", file.families, loaded.families)));
    }
    let out = path.parent().unwrap_or(Path::new(".")).join("eval");
    std::fs::create_dir_all(&out).at(STAGE, &out)?;
    for (role, split) in [("valid", loaded.valid.as_ref()), ("test", Some(&loaded.test))] {
        let Some(split) = split else { continue };
        let cm = split_accuracy(&file.model, split, &file.class_names, STAGE)?;
        let r = write_split_report(cfg, &out, role, &cm, STAGE)?;
        println!("{role} accuracy={:.6} macro_f={:.6} n={}", r.accuracy, r.macro_f_measure, cm.total());
    }
    Ok(out)
}

/// Model names made unique by suffixing repeats (`random_forest`,
/// `random_forest_2`, ...).
fn unique_names(names: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(names.len());
    for n in names {
        let mut candidate = n.clone();
        let mut i = 2;
        while out.contains(&candidate) {
            candidate = format!("{n}_{i}");
            i += 1;
        }
        out.push(candidate);
    }
    out
}

pub fn sweep(cfg: &RunConfig) -> Outcome<PathBuf> {
    const STAGE: &str = "sweep";
    let seed = require_seed(cfg, STAGE)?;
    let loaded = data::load(cfg)?;
    let sizes = cfg.sweep_sizes();
    data::check_train_size(&loaded, sizes.iter().copied().max().unwrap_or(0)).stage(STAGE)?;
    let k = loaded.class_names.len();
    let dataset = cfg.dataset.kind.name();
    let models: Vec<_> = std::iter::once(&cfg.model).chain(&cfg.evaluation.extra_models).collect();
    let names = unique_names(models.iter().map(|m| m.name()).collect());
    let dir = prepare_run_dir(cfg, STAGE)?.join("sweep");
    std::fs::create_dir_all(&dir).at(STAGE, &dir)?;

    let mut results = Vec::new();
    for (spec, name) in models.iter().zip(&names) {
        let loader = |per_class: usize| {
            Ok(ExperimentSplits {
                train: loaded.train.first_per_class(per_class, k).data,
                valid: loaded.valid.as_ref().map(|v| v.data.clone()),
                test: loaded.test.data.clone(),
                class_names: loaded.class_names.clone(),
            })
        };
        let mut rows = run_experiment(spec, dataset, &sizes, cfg.evaluation.repeats, seed, loader)
            .with_context(|| format!("model {name}"))
            .stage(STAGE)?;
        for r in &mut rows {
            r.model_name = name.clone();
            eprintln!(
                "info sweep model={name} per_class={} accuracy={:.4} seconds={:.3}",
                r.per_class_samples, r.mean_accuracy, r.seconds
            );
            for n in &r.notes {
                eprintln!("note sweep model={name} per_class={} {n}", r.per_class_samples);
            }
            let csv = dir.join(format!("confusion_{name}_{}.csv", r.per_class_samples));
            write_confusion_csv(&csv, &r.confusion).at(STAGE, &csv)?;
        }
        results.extend(rows);
    }

    let csv = dir.join("results.csv");
    write_results_csv(&csv, &results).at(STAGE, &csv)?;
    let table = accuracy_table_markdown(&results);
    write_text(STAGE, &dir.join("table.md"), &table)?;
    print!("{table}");

    let fits_path = dir.join("power_fits.csv");
    let mut w = csv::Writer::from_path(&fits_path).at(STAGE, &fits_path)?;
    w.write_record(["model", "dataset", "a", "b", "r_squared_log", "status"]).at(STAGE, &fits_path)?;
    for (model, dataset, fit) in power_fits(&results) {
        match fit {
            Ok(f) => {
                let curve = dir.join(format!("power_curve_{model}.csv"));
                f.write_csv(&curve, cfg.evaluation.curve_samples).at(STAGE, &curve)?;
                let rec = [model, dataset, format!("{:.9}", f.a), format!("{:.9}", f.b), format!("{:.9}", f.r_squared_log), "ok".into()];
                w.write_record(&rec).at(STAGE, &fits_path)?;
            }
            // Fewer than two sizes, or a zero accuracy: nothing to fit.
            Err(e) => w.write_record([model, dataset, String::new(), String::new(), String::new(), e.to_string()]).at(STAGE, &fits_path)?,
        }
    }
    w.flush().at(STAGE, &fits_path)?;
    Ok(dir)
}
