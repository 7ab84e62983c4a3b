use std::fs;
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;
use rand::Rng;
use tda_stitch::dataset::{GrayImage, SIDE};
use tda_stitch::experiment::{
    read_summary_csv, run_experiment, write_report, ExperimentConfig, ExperimentError, RunOptions, RunRecord,
};
use tda_stitch::nn::TrainConfig;
use tda_stitch::{rng, Variant};

/// Stroke images whose class sets the stroke angle; even classes add a loop.
fn pool(n: usize) -> Vec<GrayImage> {
    let mut r = rng::stream(1, "pool", &[]);
    (0..n)
        .map(|i| {
            let class = (i % 10) as u8;
            let angle = f64::from(class) * std::f64::consts::PI / 10.0 + r.gen_range(-0.1..0.1);
            let (cx, cy) = (13.5 + r.gen_range(-2.0..2.0), 13.5 + r.gen_range(-2.0..2.0));
            let px = (0..SIDE * SIDE)
                .map(|k| {
                    let (y, x) = ((k / SIDE) as f64 - cy, (k % SIDE) as f64 - cx);
                    let along = x * angle.cos() + y * angle.sin();
                    let across = -x * angle.sin() + y * angle.cos();
                    let stroke = across.abs() < 1.5 && along.abs() < 10.0;
                    let ring = class % 2 == 0 && (4.0..6.0).contains(&x.hypot(y - 5.0));
                    if stroke || ring { 1.0 } else { 0.0 }
                })
                .collect();
            GrayImage::new(SIDE, SIDE, px).unwrap().with_label(class)
        })
        .collect()
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        sizes: vec![100],
        models: vec![Variant::Raw, Variant::Stitched],
        iterations: 2,
        test_size: 40,
        training: TrainConfig { epochs: 2, ..TrainConfig::default() },
        ..ExperimentConfig::paper(2)
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn runs_resume_and_ignore_thread_count() {
    let images = pool(200);
    let config = small_config();
    let a = tempfile::tempdir().unwrap();
    let records = run_experiment(&config, &images, a.path(), &RunOptions { threads: Some(1), progress: false }).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.epoch_accuracies.len() == 2 && r.noisy_train == 10));
    let runs = read(a.path(), "runs.csv");
    assert_eq!(String::from_utf8_lossy(&runs).lines().count(), 1 + 4 * 2);

    // a lost record is recomputed identically, the others are left alone
    let lost = a.path().join("records").join(RunRecord::file_name(Variant::Stitched, 100, 1));
    let before = fs::read(&lost).unwrap();
    fs::remove_file(&lost).unwrap();
    run_experiment(&config, &images, a.path(), &RunOptions::default()).unwrap();
    assert_eq!(fs::read(&lost).unwrap(), before);
    assert_eq!(read(a.path(), "runs.csv"), runs);

    let b = tempfile::tempdir().unwrap();
    run_experiment(&config, &images, b.path(), &RunOptions { threads: Some(3), progress: false }).unwrap();
    assert_eq!(read(b.path(), "runs.csv"), runs);
    assert_eq!(read(b.path(), "summary.csv"), read(a.path(), "summary.csv"));

    let other = ExperimentConfig { seed: 1, ..config };
    assert!(matches!(
        run_experiment(&other, &images, a.path(), &RunOptions::default()),
        Err(ExperimentError::ConfigMismatch(_))
    ));
}

fn full_records() -> Vec<RunRecord> {
    let mut r = rng::stream(2, "records", &[]);
    let mut out = Vec::new();
    for model in Variant::ALL {
        for size in [100, 250, 500, 1000] {
            for it in 0..10 {
                let accs = (0..20).map(|_| f64::from(r.gen_range(0..=100u8)) / 100.0).collect();
                out.push(RunRecord::new(model, size, it, accs, 100, 0));
            }
        }
    }
    out
}

fn count_elements(svg: &str, tag: &str, class: &str) -> Vec<usize> {
    // point counts of matching elements (0 for non-polylines)
    let mut reader = Reader::from_str(svg);
    let mut found = Vec::new();
    loop {
        match reader.read_event().expect("well-formed SVG") {
            Event::Eof => break,
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == tag.as_bytes() => {
                let attr = |name: &str| {
                    e.try_get_attribute(name).unwrap().map(|a| a.unescape_value().unwrap().into_owned())
                };
                if attr("class").as_deref() == Some(class) {
                    found.push(attr("points").map_or(0, |p| p.split_whitespace().count()));
                }
            }
            _ => {}
        }
    }
    found
}

#[test]
fn report_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let records = full_records();
    let (summaries, incomplete) = write_report(dir.path(), &records, 10, "Experiment & <test>").unwrap();
    assert!(incomplete.is_empty());
    assert_eq!(summaries.len(), 12);
    assert_eq!(read_summary_csv(&dir.path().join("summary.csv"), 10).unwrap(), summaries);

    let text = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("model,train_size,iteration,epoch,accuracy"));
    assert_eq!(text.lines().count(), 1 + 120 * 20);

    let acc = fs::read_to_string(dir.path().join("plots/accuracy_vs_size.svg")).unwrap();
    assert_eq!(count_elements(&acc, "g", "error-bar").len(), 12);
    assert_eq!(count_elements(&acc, "polyline", "mean-line"), vec![4; 3]);
    for size in [100, 250, 500, 1000] {
        let curves = fs::read_to_string(dir.path().join(format!("plots/epoch_curves_{size}.svg"))).unwrap();
        assert_eq!(count_elements(&curves, "polyline", "epoch-curve"), vec![20; 3]);
    }
}

#[test]
fn incomplete_groups_are_reported_not_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = full_records();
    records.retain(|r| !(r.model == Variant::Tda && r.train_size == 500 && r.iteration == 4));
    let (summaries, incomplete) = write_report(dir.path(), &records, 10, "partial").unwrap();
    assert_eq!(summaries.len(), 11);
    assert_eq!(incomplete, vec![(Variant::Tda, 500, 9)]);
}
