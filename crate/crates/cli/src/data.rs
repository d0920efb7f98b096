//! Dataset directory: building it from NSynth metadata and audio, and
//! loading it back as model inputs.
//!
//! Layout of a data directory:
//! `manifest_<role>.csv`, `nufdic_<role>.csv` and `sidic_<role>/` for the
//! roles `train`, `valid` (optional) and `test`. The training manifest is
//! stored class by class in a seeded random order, so its first `s` rows
//! per class form nested subsets for every size `s`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use instrclass::dataset::{
    build_balanced_subset, build_nufdic, family_name, filter_classes, load_metadata_with, load_sidic_image, read_nufdic,
    render_sidic, BuildOptions, DatasetManifest, ExampleRecord, RangePolicy, Split,
};
use instrclass::dsp::wav::WavOptions;
use instrclass::neural::NeuralData;
use instrclass::rng;
use ndarray::{Array2, ArrayD, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::{DatasetKind, RunConfig};
use crate::failure::{Failure, Outcome, Stage};

fn manifest_path(dir: &Path, role: &str) -> PathBuf {
    dir.join(format!("manifest_{role}.csv"))
}

fn nufdic_path(dir: &Path, role: &str) -> PathBuf {
    dir.join(format!("nufdic_{role}.csv"))
}

fn sidic_dir(dir: &Path, role: &str) -> PathBuf {
    dir.join(format!("sidic_{role}"))
}

/// Splits a balanced pool into held-out test, held-out validation and
/// training records, per class, after a seeded shuffle.
fn partition(pool: &DatasetManifest, n_test: usize, n_valid: usize, seed: u64) -> [Vec<ExampleRecord>; 3] {
    let mut rng = rng::stream(seed, 1);
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for &class in &pool.classes {
        let mut members: Vec<&ExampleRecord> = pool.records.iter().filter(|r| r.family == class).collect();
        members.shuffle(&mut rng);
        let (t, rest) = members.split_at(n_test);
        let (v, tr) = rest.split_at(n_valid);
        test.extend(t.iter().map(|r| (*r).clone()));
        valid.extend(v.iter().map(|r| (*r).clone()));
        train.extend(tr.iter().map(|r| (*r).clone()));
    }
    [train, valid, test]
}

fn manifest(records: Vec<ExampleRecord>, per_class: usize, classes: &[u8], seed: u64) -> DatasetManifest {
    DatasetManifest { records, per_class, classes: classes.to_vec(), seed }
}

/// Builds every dataset file the configured model needs and returns the
/// data directory.
pub fn build(cfg: &RunConfig, jobs: Option<usize>) -> Outcome<PathBuf> {
    const STAGE: &str = "build";
    for p in cfg.input_paths() {
        if !p.exists() {
            return Err(Failure::new(STAGE, Some(p), anyhow!("input path does not exist")));
        }
    }
    let (p, d) = (&cfg.paths, &cfg.dataset);
    let policy = if d.skip_out_of_range { RangePolicy::Skip } else { RangePolicy::Reject };
    let load = |path: &Path, split| load_metadata_with(path, split, policy).at(STAGE, path);

    let (records, skipped) = load(&p.train_metadata, Split::Train)?;
    if skipped > 0 {
        eprintln!("info build skipped {skipped} out-of-range notes in {}", p.train_metadata.display());
    }
    let n_test = if p.test_metadata.is_none() { d.test_per_class } else { 0 };
    let n_valid = if p.valid_metadata.is_none() { d.valid_per_class } else { 0 };
    let pool_size = cfg.train_pool();
    let pool = build_balanced_subset(&records, pool_size + n_test + n_valid, d.seed).at(STAGE, &p.train_metadata)?;
    let classes = pool.classes.clone();
    let [train, held_valid, held_test] = partition(&pool, n_test, n_valid, d.seed);

    let official = |meta: &Path, split: Split, per_class: usize| -> Outcome<DatasetManifest> {
        let (recs, _) = load(meta, split)?;
        let m = if per_class > 0 {
            build_balanced_subset(&recs, per_class, d.seed).at(STAGE, meta)?
        } else {
            DatasetManifest::from_records(filter_classes(recs))
        };
        if let Some(c) = m.classes.iter().find(|c| !classes.contains(c)) {
            return Err(Failure::new(STAGE, Some(meta), anyhow!("family {} ({}) is absent from the training split", c, family_name(*c))));
        }
        Ok(m)
    };
    let valid = match (&p.valid_metadata, &p.valid_wav_dir) {
        (Some(meta), Some(wav)) => Some((official(meta, Split::Valid, d.valid_per_class)?, wav.clone())),
        _ if n_valid > 0 => Some((manifest(held_valid, n_valid, &classes, d.seed), p.train_wav_dir.clone())),
        _ => None,
    };
    let test = match (&p.test_metadata, &p.test_wav_dir) {
        (Some(meta), Some(wav)) => (official(meta, Split::Test, d.test_per_class)?, wav.clone()),
        _ => (manifest(held_test, n_test, &classes, d.seed), p.train_wav_dir.clone()),
    };
    let roles = [
        ("train", Some((manifest(train, pool_size, &classes, d.seed), p.train_wav_dir.clone()))),
        ("valid", valid),
        ("test", Some(test)),
    ];

    let dir = cfg.data_dir().stage(STAGE)?;
    std::fs::create_dir_all(&dir).at(STAGE, &dir)?;
    let config_copy = dir.join("config.toml");
    std::fs::write(&config_copy, cfg.to_toml().stage(STAGE)?).at(STAGE, &config_copy)?;
    let opts = BuildOptions {
        wav: WavOptions { expected_rate: cfg.features.sample_rate, allow_any_rate: cfg.features.allow_any_rate },
        jobs,
        max_failure_fraction: d.max_failure_fraction,
    };
    let stft = &cfg.features.stft;
    for (role, entry) in roles {
        let Some((m, wav_dir)) = entry else { continue };
        let path = manifest_path(&dir, role);
        m.write_csv(&path).at(STAGE, &path)?;
        if d.kind.needs_features() {
            let out = nufdic_path(&dir, role);
            let s = build_nufdic(&m, &wav_dir, stft, &out, &opts).at(STAGE, &out)?;
            report(role, "nufdic", s.rows_written, &s.failures);
        }
        if d.kind.needs_images() {
            let out = sidic_dir(&dir, role);
            let s = render_sidic(&m, &wav_dir, stft, &out, &opts).at(STAGE, &out)?;
            report(role, "sidic", s.rows_written, &s.failures);
        }
    }
    Ok(dir)
}

fn report(role: &str, what: &str, rows: usize, failures: &[(String, String)]) {
    eprintln!("info build role={role} dataset={what} rows={rows} failures={}", failures.len());
    for (id, why) in failures {
        eprintln!("warn build role={role} note={id} skipped: {why}");
    }
}

/// One split loaded as model inputs.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub data: NeuralData,
    pub ids: Vec<String>,
}

impl SplitData {
    /// The first `per_class` rows of every class, in stored order.
    pub fn first_per_class(&self, per_class: usize, k: usize) -> SplitData {
        let mut seen = vec![0usize; k];
        let rows: Vec<usize> = (0..self.ids.len())
            .filter(|&i| {
                let c = &mut seen[self.data.labels[i]];
                *c += 1;
                *c <= per_class
            })
            .collect();
        SplitData { data: self.data.select(&rows), ids: rows.iter().map(|&i| self.ids[i].clone()).collect() }
    }
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub class_names: Vec<String>,
    pub families: Vec<u8>,
    pub train: SplitData,
    pub valid: Option<SplitData>,
    pub test: SplitData,
}

/// Loads the data directory for `cfg`, which `build` must have produced.
pub fn load(cfg: &RunConfig) -> Outcome<Loaded> {
    const STAGE: &str = "load";
    let dir = cfg.data_dir().stage(STAGE)?;
    let train_manifest = manifest_path(&dir, "train");
    if !train_manifest.exists() {
        return Err(Failure::new(
            STAGE,
            Some(&dir),
            anyhow!("dataset not built for this configuration; run `instrclass build` first"),
        ));
    }
    let families = DatasetManifest::read_csv(&train_manifest).at(STAGE, &train_manifest)?.classes;
    let class_names = families.iter().map(|&f| family_name(f).to_string()).collect();
    let load_role = |role: &str| load_role(cfg, &dir, role, &families);
    let valid = if manifest_path(&dir, "valid").exists() { Some(load_role("valid")?) } else { None };
    Ok(Loaded { train: load_role("train")?, valid, test: load_role("test")?, class_names, families })
}

fn labels_for(families: &[u8], classes: &[u8], ids: &[String], file: &Path) -> Outcome<Vec<usize>> {
    families
        .iter()
        .zip(ids)
        .map(|(f, id)| {
            classes
                .iter()
                .position(|c| c == f)
                .ok_or_else(|| Failure::new("load", Some(file), anyhow!("note {id}: family {f} is not a training class")))
        })
        .collect()
}

fn load_images(dir: &Path, ids: &[String], factor: u32) -> Outcome<ArrayD<f64>> {
    let images: Vec<Array2<f64>> = ids
        .par_iter()
        .map(|id| {
            let path = dir.join(format!("{id}.png"));
            load_sidic_image(&path, factor).at("load", &path)
        })
        .collect::<Outcome<_>>()?;
    if images.is_empty() {
        return Err(Failure::new("load", Some(dir), anyhow!("no spectrogram images")));
    }
    let views: Vec<_> = images.iter().map(|a| a.view()).collect();
    let stacked = ndarray::stack(Axis(0), &views).context("images differ in size").at("load", dir)?;
    Ok(stacked.insert_axis(Axis(1)).into_dyn())
}

fn load_role(cfg: &RunConfig, dir: &Path, role: &str, classes: &[u8]) -> Outcome<SplitData> {
    let features = if cfg.dataset.kind.needs_features() {
        let path = nufdic_path(dir, role);
        let t = read_nufdic(&path).at("load", &path)?;
        let labels = labels_for(&t.families, classes, &t.file_ids, &path)?;
        Some((t.features, t.file_ids, labels))
    } else {
        None
    };
    let images = if cfg.dataset.kind.needs_images() {
        let idir = sidic_dir(dir, role);
        let mpath = idir.join("manifest.csv");
        let m = DatasetManifest::read_csv(&mpath).at("load", &mpath)?;
        let ids: Vec<String> = m.records.iter().map(|r| r.file_id.clone()).collect();
        let fams: Vec<u8> = m.records.iter().map(|r| r.family).collect();
        let labels = labels_for(&fams, classes, &ids, &mpath)?;
        Some((load_images(&idir, &ids, cfg.dataset.image_downscale)?, ids, labels))
    } else {
        None
    };
    let (inputs, ids, labels) = match (cfg.dataset.kind, features, images) {
        (DatasetKind::Nufdic, Some((x, ids, y)), _) => (vec![x.into_dyn()], ids, y),
        (DatasetKind::Sidic, _, Some((x, ids, y))) => (vec![x], ids, y),
        (DatasetKind::Dual, Some((fx, fids, fy)), Some((ix, iids, _))) => {
            // Keep notes present in both modalities, in feature-table order.
            let at: HashMap<&str, usize> = iids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            let keep: Vec<(usize, usize)> =
                fids.iter().enumerate().filter_map(|(r, id)| at.get(id.as_str()).map(|&i| (r, i))).collect();
            let rows: Vec<usize> = keep.iter().map(|k| k.0).collect();
            let imgs: Vec<usize> = keep.iter().map(|k| k.1).collect();
            (
                vec![ix.select(Axis(0), &imgs), fx.select(Axis(0), &rows).into_dyn()],
                rows.iter().map(|&r| fids[r].clone()).collect(),
                rows.iter().map(|&r| fy[r]).collect(),
            )
        }
        _ => unreachable!("dataset kind selects the modalities loaded above"),
    };
    if ids.is_empty() {
        return Err(Failure::new("load", Some(dir), anyhow!("{role} split is empty")));
    }
    let data = NeuralData::new(inputs, labels).at("load", dir)?;
    Ok(SplitData { data, ids })
}

/// Errors unless every class has at least `per_class` training rows.
pub fn check_train_size(loaded: &Loaded, per_class: usize) -> anyhow::Result<()> {
    let k = loaded.class_names.len();
    let mut counts = vec![0usize; k];
    for &y in &loaded.train.data.labels {
        counts[y] += 1;
    }
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n < per_class) {
        bail!("class {} has {n} usable training notes, fewer than the requested {per_class}", loaded.class_names[c]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(per_class: usize) -> DatasetManifest {
        let records = (0..3u8)
            .flat_map(|f| {
                (0..per_class).map(move |i| ExampleRecord {
                    file_id: format!("n{f}_{i:03}"),
                    family: f,
                    source: 0,
                    pitch: 60,
                    velocity: 100,
                    split: Split::Train,
                })
            })
            .collect();
        DatasetManifest { records, per_class, classes: vec![0, 1, 2], seed: 0 }
    }

    #[test]
    fn partition_is_disjoint_and_balanced() {
        let [train, valid, test] = partition(&pool(10), 2, 3, 5);
        assert_eq!((train.len(), valid.len(), test.len()), (15, 9, 6));
        let mut ids: Vec<&str> = train.iter().chain(&valid).chain(&test).map(|r| r.file_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 30);
        for f in 0..3 {
            assert_eq!(test.iter().filter(|r| r.family == f).count(), 2);
        }
        assert_eq!(partition(&pool(10), 2, 3, 5)[0], train);
    }

    #[test]
    fn first_per_class_takes_a_prefix() {
        let x = ArrayD::from_shape_fn(ndarray::IxDyn(&[6, 1]), |i| i[0] as f64);
        let s = SplitData {
            data: NeuralData::new(vec![x], vec![0, 1, 0, 0, 1, 1]).unwrap(),
            ids: (0..6).map(|i| i.to_string()).collect(),
        };
        let sub = s.first_per_class(2, 2);
        assert_eq!(sub.ids, ["0", "1", "2", "4"]);
        assert_eq!(sub.data.labels, [0, 1, 0, 1]);
    }
}
