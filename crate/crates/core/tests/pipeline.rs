//! Library-level runs from NSynth-style metadata and audio to saved models.

mod common;

use instrclass::classical::{load_model, save_model, train_random_forest, Classifier, ForestConfig, LabeledMatrix, Model};
use instrclass::dataset::{
    build_balanced_subset, build_nufdic, class_counts, load_metadata, read_nufdic, BuildOptions, ExampleRecord, Split,
    SYNTH_LEAD, VELOCITIES,
};
use instrclass::dsp::wav::write_wav;
use instrclass::dsp::StftConfig;
use instrclass::features::FEATURE_LEN;
use instrclass::neural::io::{decode, encode};
use instrclass::neural::{build_preset, train, Network, NeuralData, Preset, PresetOptions, TrainConfig};
use instrclass::synth::CorpusSpec;
use proptest::prelude::*;

/// Writes `examples.json` and `audio/` for `per_class` notes of three
/// families, plus synth_lead notes that every loader must drop.
fn nsynth_dir(root: &std::path::Path, per_class: usize) {
    let corpus = CorpusSpec { n_classes: 4, seconds: 0.5, ..Default::default() };
    std::fs::create_dir_all(root.join("audio")).unwrap();
    let mut meta = serde_json::Map::new();
    for (c, family) in [0u8, 3, 6, SYNTH_LEAD].into_iter().enumerate() {
        for i in 0..per_class {
            let id = format!("f{family}_{i:03}");
            write_wav(root.join("audio").join(format!("{id}.wav")), &corpus.note(c, 4, i as u64)).unwrap();
            let note = serde_json::json!({"instrument_family": family, "instrument_source": 1, "pitch": 64, "velocity": 75});
            meta.insert(id, note);
        }
    }
    std::fs::write(root.join("examples.json"), serde_json::Value::Object(meta).to_string()).unwrap();
}

fn labels(families: &[u8], classes: &[u8]) -> Vec<usize> {
    families.iter().map(|f| classes.iter().position(|c| c == f).unwrap()).collect()
}

#[test]
fn features_to_forest_and_back() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("nsynth-train");
    nsynth_dir(&root, 12);
    let records = load_metadata(root.join("examples.json"), Split::Train).unwrap();
    assert_eq!(records.len(), 48);

    let manifest = build_balanced_subset(&records, 10, 1).unwrap();
    assert_eq!(manifest.classes, vec![0, 3, 6]);
    let csv = dir.path().join("train.csv");
    let summary = build_nufdic(&manifest, root.join("audio"), &StftConfig::default(), &csv, &BuildOptions::default()).unwrap();
    assert_eq!(summary.rows_written, 30);
    let table = read_nufdic(&csv).unwrap();
    assert_eq!(table.features.ncols(), FEATURE_LEN);
    assert!(table.features.iter().all(|v| v.is_finite()));

    let y = labels(&table.families, &manifest.classes);
    let data = LabeledMatrix::new(table.features.clone(), y.clone(), 3).unwrap();
    let forest = train_random_forest(&data, &ForestConfig { n_trees: 20, ..Default::default() }).unwrap();
    let train_acc = common::accuracy(&forest.predict(data.x.view()).unwrap(), &y);
    assert!(train_acc > 0.9, "{train_acc}");

    let path = dir.path().join("forest.json");
    save_model(&Model::RandomForest(forest.clone()), &path).unwrap();
    let Model::RandomForest(back) = load_model(&path).unwrap() else { panic!("wrong kind") };
    assert_eq!(back, forest);
}

#[test]
fn network_weights_round_trip_after_training() {
    let blobs = common::blobs(20, 3);
    let data = NeuralData::new(vec![blobs.x.clone().into_dyn()], blobs.y.clone()).unwrap();
    let spec = build_preset(Preset::ComplexAnn, &[vec![2]], 3, &PresetOptions { hidden: Some(vec![8, 8, 4]), ..Default::default() }).unwrap();
    let cfg = TrainConfig { max_epochs: 5, batch_size: 8, early_stopping: None, ..Default::default() };
    let (net, _) = train(Network::build(&spec, 2).unwrap(), &data, None, &cfg).unwrap();
    let back = decode(&encode(&net).unwrap()).unwrap();
    assert_eq!(back.predict_proba(&data.inputs).unwrap(), net.predict_proba(&data.inputs).unwrap());
}

fn records(counts: &[usize]) -> Vec<ExampleRecord> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(family, &n)| {
            (0..n).map(move |i| ExampleRecord {
                file_id: format!("n{family:02}_{i:04}"),
                family: family as u8,
                source: 0,
                pitch: 60,
                velocity: VELOCITIES[i % VELOCITIES.len()],
                split: Split::Train,
            })
        })
        .collect()
}

proptest! {
    #[test]
    fn balanced_subset_is_exact_or_names_the_smallest_class(
        counts in prop::collection::vec(1usize..40, 2..11),
        per_class in 1usize..40,
        seed in any::<u64>(),
    ) {
        let recs = records(&counts);
        let kept: Vec<usize> = counts.iter().enumerate().filter(|(f, _)| *f as u8 != SYNTH_LEAD).map(|(_, &n)| n).collect();
        match build_balanced_subset(&recs, per_class, seed) {
            Ok(m) => {
                prop_assert!(kept.iter().all(|&n| n >= per_class));
                prop_assert_eq!(m.len(), per_class * kept.len());
                prop_assert!(class_counts(&m.records).values().all(|&n| n == per_class));
                prop_assert!(m.records.iter().all(|r| r.family != SYNTH_LEAD));
            }
            Err(instrclass::Error::InsufficientClass { available, .. }) => {
                prop_assert_eq!(available, *kept.iter().min().unwrap());
                prop_assert!(available < per_class);
            }
            Err(e) => prop_assert!(false, "unexpected error {}", e),
        }
    }
}
