use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn pdwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdwave"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SPEC: &str = "\
n_patients = 4
seed = 11
rest_segments = 8
gross_segments = 3
fine_segments = 1
periodic_segments = 0
walking_segments = 3
";

struct Fixture {
    _dir: TempDir,
    root: PathBuf,
    data: PathBuf,
    tremor_model: PathBuf,
}

/// A small cohort and a tremor model trained on it, shared by the tests.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let spec = root.join("small.spec");
        std::fs::write(&spec, SMALL_SPEC).unwrap();
        let data = root.join("data");
        let o = pdwave(&["synth", "--spec", s(&spec), "--out", s(&data)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let tremor_model = root.join("tremor.model");
        let o = pdwave(&["train", "--data", s(&data), "--detector", "rest-tremor", "--out", s(&tremor_model)]);
        assert!(o.status.success(), "{}", stderr(&o));
        Fixture {
            _dir: dir,
            root,
            data,
            tremor_model,
        }
    })
}

fn scratch() -> TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn synth_default_writes_ten_patients_deterministically() {
    let dir = scratch();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = pdwave(&["synth", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let recordings: Vec<_> = std::fs::read_dir(a.join("recordings")).unwrap().collect();
    assert_eq!(recordings.len(), 10);
    for name in ["labels.csv", "cohort.spec", "recordings/P01.csv", "recordings/P10.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn synth_rejects_bad_specs_with_exit_2() {
    let dir = scratch();
    for (text, needle) in [
        ("no_such_key = 3\n", "no_such_key"),
        ("n_patients = 1\n", "n_patients"),
        ("tremor_amplitude_1 = 0.5\ntremor_amplitude_2 = 0.25\n", "tremor"),
    ] {
        let spec = dir.path().join("bad.spec");
        std::fs::write(&spec, text).unwrap();
        let o = pdwave(&["synth", "--spec", s(&spec), "--out", s(&dir.path().join("out"))]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(needle), "{}", stderr(&o));
    }
}

#[test]
fn usage_errors_exit_2() {
    let f = fixture();
    let out = f.root.join("never");
    for args in [
        vec!["train", "--data", s(&f.data), "--detector", "gait", "--out", s(&out)],
        vec!["train", "--data", s(&f.data), "--detector", "rest-tremor", "--out", s(&out), "--theta1", "1", "--theta2", "1"],
        vec!["train", "--data", s(&f.data), "--detector", "rest-tremor", "--out", s(&out), "--overlap", "1.0"],
        vec!["train", "--data", s(&f.data), "--detector", "rest-tremor", "--out", s(&out), "--wavelet-order", "5"],
        vec!["train", "--data", s(&f.data), "--detector", "rest-tremor", "--out", s(&out), "--svm-c", "0"],
        vec!["frobnicate"],
    ] {
        let o = pdwave(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    assert!(!out.exists());
}

#[test]
fn train_model_round_trips_and_is_reproducible() {
    let f = fixture();
    let bytes = std::fs::read(&f.tremor_model).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    let model = pdwave::modelfile::model_from_text(&text).unwrap();
    assert_eq!(pdwave::modelfile::model_to_text(&model), text);
    assert!(text.contains("kind = rest-tremor"));
    assert!(text.contains("theta1 = 2") && text.contains("seed = 42"));

    let again = f.root.join("tremor-again.model");
    let o = pdwave(&["train", "--data", s(&f.data), "--detector", "rest-tremor", "--out", s(&again)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&again).unwrap(), bytes);
}

#[test]
fn train_on_single_class_data_exits_2() {
    let dir = scratch();
    let spec = dir.path().join("none.spec");
    std::fs::write(&spec, format!("{SMALL_SPEC}tremor_prevalence = 0\n")).unwrap();
    let data = dir.path().join("data");
    assert!(pdwave(&["synth", "--spec", s(&spec), "--out", s(&data)]).status.success());
    let o = pdwave(&["train", "--data", s(&data), "--detector", "rest-tremor", "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("single class"), "{}", stderr(&o));
}

#[test]
fn missing_labels_exit_2() {
    let dir = scratch();
    let data = dir.path().join("data");
    std::fs::create_dir_all(data.join("recordings")).unwrap();
    let o = pdwave(&["train", "--data", s(&data), "--detector", "rest-tremor", "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("labels"), "{}", stderr(&o));
}

#[test]
fn evaluate_tremor_prints_three_by_three_matrix() {
    let f = fixture();
    let out = f.root.join("eval-tremor");
    let o = pdwave(&["evaluate", "--data", s(&f.data), "--detector", "rest-tremor", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("4 folds"), "{text}");
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with('|')).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].contains("True/Pred"));
    assert!(text.contains("seed=42") && text.contains("theta1=2"));
    assert_eq!(std::fs::read_to_string(out.join("report.txt")).unwrap(), text);
    let confusion = std::fs::read_to_string(out.join("confusion.csv")).unwrap();
    assert!(confusion.lines().nth(1).unwrap().starts_with("true\\pred,0,1,2"));
    assert!(!out.join("roc.csv").exists());
}

#[test]
fn evaluate_binary_reports_auc_and_roc() {
    let f = fixture();
    let out = f.root.join("eval-dysk");
    let o = pdwave(&["evaluate", "--data", s(&f.data), "--detector", "rest-dyskinesia", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("AUC (pooled):"));
    assert!(stdout(&o).contains("AUC (mean over folds):"));
    let roc = std::fs::read_to_string(out.join("roc.csv")).unwrap();
    assert!(roc.starts_with("# detector=rest-dyskinesia"));
    assert_eq!(roc.lines().nth(1), Some("fpr,tpr"));
}

#[test]
fn nineteen_patient_cohort_gives_nineteen_folds() {
    let dir = scratch();
    let spec = dir.path().join("19.spec");
    std::fs::write(
        &spec,
        "n_patients = 19\nrest_segments = 3\ngross_segments = 0\nfine_segments = 0\nperiodic_segments = 0\nwalking_segments = 0\nsegment_seconds = 20\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    assert!(pdwave(&["synth", "--spec", s(&spec), "--out", s(&data)]).status.success());
    let o = pdwave(&["evaluate", "--data", s(&data), "--detector", "rest-tremor", "--out", s(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("19 folds"), "{}", stdout(&o));
}

#[test]
fn evaluate_with_one_patient_exits_2() {
    let f = fixture();
    let dir = scratch();
    let data = dir.path().join("data");
    std::fs::create_dir_all(data.join("recordings")).unwrap();
    std::fs::copy(f.data.join("recordings/P01.csv"), data.join("recordings/P01.csv")).unwrap();
    let labels = std::fs::read_to_string(f.data.join("labels.csv")).unwrap();
    let own: String = labels
        .lines()
        .filter(|l| l.starts_with("patient_id") || l.starts_with("P01,"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(data.join("labels.csv"), own).unwrap();
    let o = pdwave(&["evaluate", "--data", s(&data), "--detector", "rest-tremor", "--out", s(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn predict_with_labels_stays_in_codomain() {
    let f = fixture();
    let out = f.root.join("pred.csv");
    let o = pdwave(&[
        "predict",
        "--model",
        s(&f.tremor_model),
        "--recording",
        s(&f.data.join("recordings/P02.csv")),
        "--labels",
        s(&f.data.join("labels.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("window_start,window_end,prediction"));
    let preds: Vec<u8> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    // 8 resting segments of 30 s give 5 windows each.
    assert_eq!(preds.len(), 40);
    assert!(preds.iter().all(|p| *p <= 2));
}

#[test]
fn predict_on_empty_recording_writes_header_only() {
    let f = fixture();
    let dir = scratch();
    let rec = dir.path().join("empty.csv");
    std::fs::write(&rec, "t,x,y,z\n").unwrap();
    let out = dir.path().join("p.csv");
    let o = pdwave(&["predict", "--model", s(&f.tremor_model), "--recording", s(&rec), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "window_start,window_end,prediction\n");
}

#[test]
fn predict_binary_model_adds_probability_column() {
    let f = fixture();
    let model = f.root.join("dysk.model");
    assert!(pdwave(&["train", "--data", s(&f.data), "--detector", "rest-dyskinesia", "--out", s(&model)])
        .status
        .success());
    let out = f.root.join("dysk.csv");
    let o = pdwave(&[
        "predict",
        "--model",
        s(&model),
        "--recording",
        s(&f.data.join("recordings/P01.csv")),
        "--labels",
        s(&f.data.join("labels.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("window_start,window_end,prediction,probability\n"));
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4);
        let p: f64 = cols[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn predict_severe_tremor_recording_mostly_level_two() {
    let f = fixture();
    let dir = scratch();
    let spec = dir.path().join("severe.spec");
    std::fs::write(
        &spec,
        "n_patients = 2\nseed = 99\nrest_segments = 6\ngross_segments = 0\nfine_segments = 0\nperiodic_segments = 0\nwalking_segments = 0\ntremor_prevalence = 1\ntremor_severe_fraction = 1\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    assert!(pdwave(&["synth", "--spec", s(&spec), "--out", s(&data)]).status.success());
    let out = dir.path().join("p.csv");
    let o = pdwave(&[
        "predict",
        "--model",
        s(&f.tremor_model),
        "--recording",
        s(&data.join("recordings/P01.csv")),
        "--labels",
        s(&data.join("labels.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let preds: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    let twos = preds.iter().filter(|p| **p == "2").count();
    assert!(2 * twos > preds.len(), "{twos} of {}", preds.len());
}

#[test]
fn predict_with_incompatible_model_exits_2() {
    let f = fixture();
    let dir = scratch();
    // A 5 s window resamples to 256 samples, one scale fewer than the model holds.
    let text = std::fs::read_to_string(&f.tremor_model)
        .unwrap()
        .replace("window_seconds = 10.0", "window_seconds = 5.0");
    let model = dir.path().join("tampered.model");
    std::fs::write(&model, text).unwrap();
    let o = pdwave(&[
        "predict",
        "--model",
        s(&model),
        "--recording",
        s(&f.data.join("recordings/P01.csv")),
        "--labels",
        s(&f.data.join("labels.csv")),
        "--out",
        s(&dir.path().join("p.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("features"), "{}", stderr(&o));

    let o = pdwave(&["predict", "--model", s(&dir.path().join("absent.model")), "--recording", s(&model), "--out", s(&dir.path().join("q.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn featurize_writes_documented_columns() {
    let f = fixture();
    let out = f.root.join("features.csv");
    let o = pdwave(&["featurize", "--data", s(&f.data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# window_seconds=10"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    // 7 identity columns, 3 axes x (cont + rel), rel_avg and w, with 9 scales.
    assert_eq!(header.len(), 7 + 3 * 18 + 9 + 9);
    assert_eq!(header[7], "cont_x_1");
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.split(',').count() == header.len()));
}
