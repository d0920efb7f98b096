//! NSynth metadata ingest, class filtering and balanced subsets, plus the
//! two materialised datasets: numeric feature tables and spectrogram images.

pub mod nufdic;
pub mod sidic;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use nufdic::{build_nufdic, read_nufdic, BuildOptions, BuildSummary, NufdicTable};
pub use sidic::{load_sidic_image, render_sidic, spectrogram_image, SIDIC_HEIGHT, SIDIC_WIDTH};

/// Instrument family names indexed by NSynth family id.
pub const FAMILY_NAMES: [&str; 11] = [
    "bass", "brass", "flute", "guitar", "keyboard", "mallet", "organ", "reed", "string", "synth_lead", "vocal",
];
pub const SOURCE_NAMES: [&str; 3] = ["acoustic", "electronic", "synthetic"];
pub const SYNTH_LEAD: u8 = 9;
pub const VELOCITIES: [u8; 5] = [25, 50, 75, 100, 127];
pub const PITCH_RANGE: std::ops::RangeInclusive<u8> = 21..=108;

pub fn family_name(family: u8) -> &'static str {
    FAMILY_NAMES.get(family as usize).copied().unwrap_or("unknown")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    /// Guesses the split from an NSynth directory such as `nsynth-valid/examples.json`.
    pub fn infer_from_path(path: &Path) -> Option<Split> {
        let text = path.to_string_lossy().to_ascii_lowercase();
        [Split::Train, Split::Valid, Split::Test]
            .into_iter()
            .find(|s| text.contains(&format!("nsynth-{}", s.as_str())))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidData(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub file_id: String,
    pub family: u8,
    pub source: u8,
    pub pitch: u8,
    pub velocity: u8,
    pub split: Split,
}

impl ExampleRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Metadata {
            note_id: self.file_id.clone(),
            reason,
        };
        if self.family as usize >= FAMILY_NAMES.len() {
            return Err(bad(format!("unknown instrument_family {}", self.family)));
        }
        if self.source as usize >= SOURCE_NAMES.len() {
            return Err(bad(format!("unknown instrument_source {}", self.source)));
        }
        if !PITCH_RANGE.contains(&self.pitch) {
            return Err(bad(format!("pitch {} outside MIDI 21..=108", self.pitch)));
        }
        if !VELOCITIES.contains(&self.velocity) {
            return Err(bad(format!("velocity {} not one of {VELOCITIES:?}", self.velocity)));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RawNote {
    instrument_family: Option<i64>,
    instrument_source: Option<i64>,
    pitch: Option<i64>,
    velocity: Option<i64>,
}

/// How to treat records whose pitch or velocity is outside the documented
/// ranges. Missing fields and unknown family/source codes are always errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RangePolicy {
    #[default]
    Reject,
    Skip,
}

/// Parses an NSynth `examples.json` (object keyed by note id). Records are
/// returned sorted by note id.
pub fn load_metadata(json_path: impl AsRef<Path>, split: Split) -> Result<Vec<ExampleRecord>> {
    load_metadata_with(json_path, split, RangePolicy::Reject).map(|(records, _)| records)
}

/// Like [`load_metadata`]; also returns the number of records skipped under
/// [`RangePolicy::Skip`].
pub fn load_metadata_with(
    json_path: impl AsRef<Path>,
    split: Split,
    policy: RangePolicy,
) -> Result<(Vec<ExampleRecord>, usize)> {
    let path = json_path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<String, RawNote> = serde_json::from_reader(BufReader::new(file))?;
    parse_notes(raw, split, policy)
}

/// Parses metadata already in memory.
pub fn parse_metadata(json: &str, split: Split) -> Result<Vec<ExampleRecord>> {
    let raw: BTreeMap<String, RawNote> = serde_json::from_str(json)?;
    parse_notes(raw, split, RangePolicy::Reject).map(|(r, _)| r)
}

fn parse_notes(raw: BTreeMap<String, RawNote>, split: Split, policy: RangePolicy) -> Result<(Vec<ExampleRecord>, usize)> {
    let mut records = Vec::with_capacity(raw.len());
    let mut skipped = 0;
    for (note_id, note) in raw {
        let field = |v: Option<i64>, name: &str| {
            v.ok_or_else(|| Error::Metadata {
                note_id: note_id.clone(),
                reason: format!("missing field {name}"),
            })
        };
        let family = field(note.instrument_family, "instrument_family")?;
        let source = field(note.instrument_source, "instrument_source")?;
        let pitch = field(note.pitch, "pitch")?;
        let velocity = field(note.velocity, "velocity")?;
        let narrow = |v: i64, name: &str| {
            u8::try_from(v).map_err(|_| Error::Metadata {
                note_id: note_id.clone(),
                reason: format!("{name} {v} out of range"),
            })
        };
        let record = ExampleRecord {
            family: narrow(family, "instrument_family")?,
            source: narrow(source, "instrument_source")?,
            pitch: narrow(pitch, "pitch")?,
            velocity: narrow(velocity, "velocity")?,
            file_id: note_id.clone(),
            split,
        };
        if record.family as usize >= FAMILY_NAMES.len() || record.source as usize >= SOURCE_NAMES.len() {
            record.validate()?;
        }
        match (record.validate(), policy) {
            (Ok(()), _) => records.push(record),
            (Err(_), RangePolicy::Skip) => skipped += 1,
            (Err(e), RangePolicy::Reject) => return Err(e),
        }
    }
    Ok((records, skipped))
}

/// Drops synth_lead (family 9).
pub fn filter_classes(records: Vec<ExampleRecord>) -> Vec<ExampleRecord> {
    records.into_iter().filter(|r| r.family != SYNTH_LEAD).collect()
}

/// Records per family id.
pub fn class_counts(records: &[ExampleRecord]) -> BTreeMap<u8, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.family).or_insert(0) += 1;
    }
    counts
}

/// A class-balanced list of records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<ExampleRecord>,
    pub per_class: usize,
    /// Retained family ids in ascending order.
    pub classes: Vec<u8>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of `family` within [`Self::classes`].
    pub fn class_index(&self, family: u8) -> Option<usize> {
        self.classes.iter().position(|&c| c == family)
    }

    /// Wraps an unbalanced record list (e.g. a whole official split) so it
    /// can flow through the same builders.
    pub fn from_records(records: Vec<ExampleRecord>) -> Self {
        let classes: Vec<u8> = class_counts(&records).into_keys().collect();
        Self {
            records,
            per_class: 0,
            classes,
            seed: 0,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| annotate_csv(e, path))?;
        w.write_record(["file_id", "family", "source", "split"])?;
        for r in &self.records {
            w.write_record([
                r.file_id.as_str(),
                &r.family.to_string(),
                &r.source.to_string(),
                r.split.as_str(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a `file_id,family,source,split` CSV. Pitch and velocity are
    /// not stored there and come back as placeholders.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| annotate_csv(e, path))?;
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let get = |i: usize| row.get(i).unwrap_or_default();
            let parse = |i: usize| -> Result<u8> {
                get(i)
                    .parse()
                    .map_err(|_| Error::InvalidData(format!("{}: bad integer {:?}", path.display(), get(i))))
            };
            records.push(ExampleRecord {
                file_id: get(0).to_string(),
                family: parse(1)?,
                source: parse(2)?,
                pitch: 60,
                velocity: 100,
                split: get(3).parse()?,
            });
        }
        let counts = class_counts(&records);
        let per_class = match counts.values().collect::<BTreeSet<_>>().into_iter().collect::<Vec<_>>()[..] {
            [&n] => n,
            _ => 0,
        };
        Ok(Self {
            classes: counts.into_keys().collect(),
            records,
            per_class,
            seed: 0,
        })
    }
}

fn annotate_csv(e: csv::Error, path: &Path) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidData(format!("{}: {other:?}", path.display())),
    }
}

/// Samples `per_class` records from every retained family, uniformly
/// without replacement, using the ChaCha8 stream for `seed`.
///
/// The retained families are those present after removing synth_lead.
/// Within each class the candidates are ordered by file id before sampling,
/// and the sampled records are emitted class by class in file-id order.
pub fn build_balanced_subset(records: &[ExampleRecord], per_class: usize, seed: u64) -> Result<DatasetManifest> {
    let mut by_class: BTreeMap<u8, Vec<&ExampleRecord>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in records.iter().filter(|r| r.family != SYNTH_LEAD) {
        if !seen.insert(r.file_id.as_str()) {
            return Err(Error::InvalidData(format!("duplicate file_id {}", r.file_id)));
        }
        by_class.entry(r.family).or_default().push(r);
    }
    if let Some((&class, members)) = by_class.iter().min_by_key(|(_, v)| v.len()) {
        if members.len() < per_class {
            return Err(Error::InsufficientClass {
                requested: per_class,
                available: members.len(),
                class,
                name: family_name(class),
            });
        }
    }
    let mut rng = rng::stream(seed, 0);
    let mut out = Vec::with_capacity(per_class * by_class.len());
    for members in by_class.values_mut() {
        members.sort_by(|a, b| a.file_id.cmp(&b.file_id));
        let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), per_class).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| members[i].clone()));
    }
    Ok(DatasetManifest {
        records: out,
        per_class,
        classes: by_class.into_keys().collect(),
        seed,
    })
}

/// Pairwise intersections between split manifests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitReport {
    pub train_valid: Vec<String>,
    pub train_test: Vec<String>,
    pub valid_test: Vec<String>,
}

impl SplitReport {
    pub fn is_disjoint(&self) -> bool {
        self.train_valid.is_empty() && self.train_test.is_empty() && self.valid_test.is_empty()
    }
}

pub fn verify_split_disjointness(
    train: &DatasetManifest,
    valid: &DatasetManifest,
    test: &DatasetManifest,
) -> SplitReport {
    let ids = |m: &DatasetManifest| m.records.iter().map(|r| r.file_id.clone()).collect::<BTreeSet<_>>();
    let (a, b, c) = (ids(train), ids(valid), ids(test));
    SplitReport {
        train_valid: a.intersection(&b).cloned().collect(),
        train_test: a.intersection(&c).cloned().collect(),
        valid_test: b.intersection(&c).cloned().collect(),
    }
}
