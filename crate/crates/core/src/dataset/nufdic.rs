//! Numeric feature tables: one 168-value feature row per note plus labels.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use super::{DatasetManifest, ExampleRecord};
use crate::dsp::wav::{read_wav, WavOptions};
use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::features::{feature_names, format_sig9, FeatureExtractor, FeatureVector, FEATURE_LEN};

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub wav: WavOptions,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    /// Abort when more than this fraction of files fail.
    pub max_failure_fraction: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            wav: WavOptions::default(),
            jobs: None,
            max_failure_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildSummary {
    pub rows_written: usize,
    /// `(file_id, reason)` for every skipped note.
    pub failures: Vec<(String, String)>,
}

pub(crate) fn wav_path(wav_dir: &Path, file_id: &str) -> PathBuf {
    wav_dir.join(format!("{file_id}.wav"))
}

/// Runs `work` over the manifest in parallel; results keep manifest order.
pub(crate) fn par_over_manifest<T, F>(manifest: &DatasetManifest, jobs: Option<usize>, work: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(&ExampleRecord) -> Result<T> + Sync + Send,
{
    let run = || manifest.records.par_iter().map(&work).collect::<Vec<_>>();
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
            .map(|pool| pool.install(run)),
        None => Ok(run()),
    }
}

pub(crate) fn check_failures(stage: &'static str, total: usize, failures: &[(String, String)], limit: f64) -> Result<()> {
    if total > 0 && failures.len() as f64 > limit * total as f64 {
        let (id, why) = &failures[0];
        return Err(Error::TooManyFailures {
            stage,
            failed: failures.len(),
            total,
            first: format!("{id}: {why}"),
        });
    }
    Ok(())
}

/// Extracts features for every manifest record and writes the CSV.
///
/// Unreadable notes are skipped and listed in the summary; if more than
/// `max_failure_fraction` of them fail nothing is written.
pub fn build_nufdic(
    manifest: &DatasetManifest,
    wav_dir: impl AsRef<Path>,
    cfg: &StftConfig,
    out_csv: impl AsRef<Path>,
    opts: &BuildOptions,
) -> Result<BuildSummary> {
    let wav_dir = wav_dir.as_ref();
    let extractor = FeatureExtractor::new(*cfg, opts.wav.expected_rate)?;
    let results = par_over_manifest(manifest, opts.jobs, |record| {
        let clip = read_wav(wav_path(wav_dir, &record.file_id), &opts.wav)?;
        if clip.sample_rate == extractor.sample_rate {
            extractor.extract(&clip)
        } else {
            FeatureExtractor::new(*cfg, clip.sample_rate)?.extract(&clip)
        }
    })?;
    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (record, result) in manifest.records.iter().zip(results) {
        match result {
            Ok(v) => rows.push((record, v)),
            Err(e) => failures.push((record.file_id.clone(), e.to_string())),
        }
    }
    check_failures("nufdic", manifest.len(), &failures, opts.max_failure_fraction)?;
    write_nufdic(out_csv, rows.iter().map(|(r, v)| (*r, v)))?;
    Ok(BuildSummary {
        rows_written: rows.len(),
        failures,
    })
}

pub fn nufdic_header() -> Vec<String> {
    let mut header = feature_names();
    header.extend(["family", "source", "file_id"].map(String::from));
    header
}

pub fn write_nufdic<'a>(
    path: impl AsRef<Path>,
    rows: impl IntoIterator<Item = (&'a ExampleRecord, &'a FeatureVector)>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(nufdic_header())?;
    let mut fields = Vec::with_capacity(FEATURE_LEN + 3);
    for (record, features) in rows {
        fields.clear();
        fields.extend(features.as_slice().iter().map(|&v| format_sig9(v)));
        fields.push(record.family.to_string());
        fields.push(record.source.to_string());
        fields.push(record.file_id.clone());
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A feature table read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct NufdicTable {
    pub features: Array2<f64>,
    pub families: Vec<u8>,
    pub sources: Vec<u8>,
    pub file_ids: Vec<String>,
}

impl NufdicTable {
    pub fn len(&self) -> usize {
        self.file_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.file_ids.is_empty()
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> NufdicTable {
        NufdicTable {
            features: self.features.select(ndarray::Axis(0), rows),
            families: rows.iter().map(|&i| self.families[i]).collect(),
            sources: rows.iter().map(|&i| self.sources[i]).collect(),
            file_ids: rows.iter().map(|&i| self.file_ids[i].clone()).collect(),
        }
    }
}

pub fn read_nufdic(path: impl AsRef<Path>) -> Result<NufdicTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != nufdic_header().iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::InvalidData(format!("{}: unexpected NuFDIC header", path.display())));
    }
    let mut data = Vec::new();
    let (mut families, mut sources, mut file_ids) = (Vec::new(), Vec::new(), Vec::new());
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::InvalidData(format!("{}: row {}: bad {what}", path.display(), line + 1));
        for i in 0..FEATURE_LEN {
            data.push(row[i].parse::<f64>().map_err(|_| bad(&header[i]))?);
        }
        families.push(row[FEATURE_LEN].parse().map_err(|_| bad("family"))?);
        sources.push(row[FEATURE_LEN + 1].parse().map_err(|_| bad("source"))?);
        file_ids.push(row[FEATURE_LEN + 2].to_string());
    }
    let features = Array2::from_shape_vec((file_ids.len(), FEATURE_LEN), data)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(NufdicTable {
        features,
        families,
        sources,
        file_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_balanced_subset, Split};
    use crate::dsp::wav::write_wav;
    use crate::synth;

    fn corpus(dir: &Path, per_class: usize) -> Vec<ExampleRecord> {
        let spec = synth::CorpusSpec { seconds: 0.5, ..Default::default() };
        let mut records = Vec::new();
        for family in [0u8, 4] {
            for i in 0..per_class {
                let id = format!("f{family}_{i}");
                write_wav(wav_path(dir, &id), &spec.note(family as usize, 3, i as u64)).unwrap();
                records.push(ExampleRecord {
                    file_id: id,
                    family,
                    source: 0,
                    pitch: 60,
                    velocity: 100,
                    split: Split::Train,
                });
            }
        }
        records
    }

    #[test]
    fn builds_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let recs = corpus(dir.path(), 3);
        let m = build_balanced_subset(&recs, 2, 5).unwrap();
        let out = dir.path().join("n.csv");
        let summary = build_nufdic(&m, dir.path(), &StftConfig::default(), &out, &BuildOptions::default()).unwrap();
        assert_eq!(summary.rows_written, 4);
        let table = read_nufdic(&out).unwrap();
        assert_eq!(table.features.dim(), (4, 168));
        assert_eq!(table.file_ids, m.records.iter().map(|r| r.file_id.clone()).collect::<Vec<_>>());
        let header = std::fs::read_to_string(&out).unwrap();
        assert_eq!(header.lines().next().unwrap().split(',').count(), 171);

        let again = dir.path().join("n2.csv");
        let opts = BuildOptions { jobs: Some(1), ..Default::default() };
        build_nufdic(&m, dir.path(), &StftConfig::default(), &again, &opts).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn empty_manifest_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("e.csv");
        let m = DatasetManifest::from_records(vec![]);
        let s = build_nufdic(&m, dir.path(), &StftConfig::default(), &out, &BuildOptions::default()).unwrap();
        assert_eq!(s.rows_written, 0);
        assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);
        assert!(read_nufdic(&out).unwrap().is_empty());
    }

    #[test]
    fn failures_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let recs = corpus(dir.path(), 2);
        std::fs::write(wav_path(dir.path(), &recs[0].file_id), b"broken").unwrap();
        let m = DatasetManifest::from_records(recs);
        let out = dir.path().join("f.csv");
        // 1 of 4 fails: above 1% by default.
        let err = build_nufdic(&m, dir.path(), &StftConfig::default(), &out, &BuildOptions::default()).unwrap_err();
        assert!(matches!(err, Error::TooManyFailures { failed: 1, total: 4, .. }));
        let lenient = BuildOptions { max_failure_fraction: 0.5, ..Default::default() };
        let s = build_nufdic(&m, dir.path(), &StftConfig::default(), &out, &lenient).unwrap();
        assert_eq!((s.rows_written, s.failures.len()), (3, 1));
    }
}
