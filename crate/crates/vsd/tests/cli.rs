use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vsd_core::imaging::RasterImage;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn vsd(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsd"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("run vsd")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = vsd(out, args);
    assert!(o.status.success(), "vsd {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn identical_files_evaluate_perfectly() {
    let t = tempfile::tempdir().unwrap();
    let scores = data("regression_scores.csv");
    ok(t.path(), &["evaluate", "--pred", p(&scores), "--gt", p(&scores)]);
    let report = json(&t.path().join("evaluation.json"));
    assert_eq!(report["tau"], 1.0);
    assert_eq!(report["mse"], 0.0);
    assert_eq!(report["n"], 120);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let o = vsd(t.path(), &["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let line = String::from_utf8_lossy(&o.stderr);
    let v: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(v["kind"], "usage");
}

#[test]
fn missing_input_fails_with_a_json_error() {
    let t = tempfile::tempdir().unwrap();
    let o = vsd(t.path(), &["process-annotations", "--log", "/nonexistent/log.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    let v: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(v["level"], "error");
    assert!(v["message"].as_str().unwrap().contains("/nonexistent/log.csv"));
}

#[test]
fn train_then_predict_on_the_checked_in_data() {
    let t = tempfile::tempdir().unwrap();
    let (features, scores) = (data("regression.vsdf"), data("regression_scores.csv"));
    for model in ["krr", "nu-svr"] {
        let out = t.path().join(model);
        ok(&out, &["train", "--features", p(&features), "--scores", p(&scores), "--model", model]);
        let m = json(&out.join("manifest.json"));
        assert!(m["results"]["test_tau"].as_f64().unwrap() > 0.5, "{model}: {}", m["results"]);
        let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
        assert_eq!(grid.lines().filter(|l| l.ends_with(",1")).count(), 1);

        let pred = out.join("pred");
        ok(&pred, &["predict", "--model", p(&out.join("model.json")), "--features", p(&features)]);
        let lines = fs::read_to_string(pred.join("predictions.csv")).unwrap();
        assert_eq!(lines.lines().count(), 121);
    }
}

#[test]
fn feature_layout_mismatch_names_the_factor() {
    let t = tempfile::tempdir().unwrap();
    let o = vsd(
        t.path(),
        &[
            "train",
            "--features",
            p(&data("regression.vsdf")),
            "--scores",
            p(&data("regression_scores.csv")),
            "--architectures",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dim"));
}

#[test]
fn tampered_model_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let features = data("regression.vsdf");
    ok(t.path(), &["train", "--features", p(&features), "--scores", p(&data("regression_scores.csv")), "--model", "krr"]);
    let path = t.path().join("model.json");
    let mut v = json(&path);
    let b = v["model"]["bias"].as_f64().unwrap();
    v["model"]["bias"] = serde_json::json!(b + 1.0);
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let o = vsd(&t.path().join("pred"), &["predict", "--model", p(&path), "--features", p(&features)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let log = data("annotations.csv");
    let (features, scores) = (data("regression.vsdf"), data("regression_scores.csv"));
    for run in ["a", "b"] {
        let d = t.path().join(run);
        ok(&d.join("anno"), &["process-annotations", "--log", p(&log)]);
        ok(&d.join("train"), &["train", "--features", p(&features), "--scores", p(&scores), "--seed", "4"]);
    }
    let single = t.path().join("one-thread");
    let o = Command::new(env!("CARGO_BIN_EXE_vsd"))
        .env("VSD_THREADS", "1")
        .args(["--out-dir", p(&single), "train", "--features", p(&features), "--scores", p(&scores), "--seed", "4"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let a = dir_contents(&t.path().join("a"));
    assert_eq!(a, dir_contents(&t.path().join("b")));
    assert_eq!(dir_contents(&t.path().join("a/train")), dir_contents(&single));
}

#[test]
fn checked_in_data_matches_the_generator() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth-bench", "data"]);
    let fresh = dir_contents(t.path());
    let mut stored = dir_contents(&data(""));
    stored.remove("annotations.csv");
    for (name, bytes) in &stored {
        assert_eq!(Some(bytes), fresh.get(name), "{name} differs from the generator");
    }
}

#[test]
fn annotation_outliers_are_excluded() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["process-annotations", "--log", p(&data("annotations.csv"))]);
    let mut rdr = csv::Reader::from_path(t.path().join("annotators.csv")).unwrap();
    let excluded: Vec<String> = rdr
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[5] == "0")
        .map(|r| r[0].to_string())
        .collect();
    assert_eq!(excluded, ["lowacc", "sparseslow", "toofew"]);
    let m = json(&t.path().join("manifest.json"));
    assert_eq!(m["results"]["n_long_removed"], 2);
    assert_eq!(m["results"]["n_rejected_rows"], 1);
    let diags = fs::read_to_string(t.path().join("diagnostics.csv")).unwrap();
    assert!(diags.contains("line 13"));
}

#[test]
fn mil_runs_both_schedules_on_the_checked_in_bags() {
    let t = tempfile::tempdir().unwrap();
    let mil = |n: &str| data(&format!("mil/{n}"));
    ok(
        t.path(),
        &[
            "mil",
            "--bags",
            p(&mil("bags.csv")),
            "--windows",
            p(&mil("windows.csv")),
            "--features",
            p(&mil("windows.vsdf")),
            "--boxes",
            p(&mil("gt_boxes.csv")),
            "--class",
            "cat",
        ],
    );
    let corloc = fs::read_to_string(t.path().join("corloc.csv")).unwrap();
    assert_eq!(corloc.lines().count(), 1 + 2 * 10);
    for s in ["standard", "easy_to_hard"] {
        let sel = fs::read_to_string(t.path().join(format!("selections_{s}.csv"))).unwrap();
        assert_eq!(sel.lines().count(), 31);
    }
}

#[test]
fn selftrain_writes_a_map_per_heuristic() {
    let t = tempfile::tempdir().unwrap();
    let scores = data("regression_scores.csv");
    ok(&t.path().join("split"), &["split", "--ids", p(&scores)]);
    let mut rdr = csv::Reader::from_path(&scores).unwrap();
    let rows: Vec<(String, f64)> = rdr.records().map(|r| r.unwrap()).map(|r| (r[0].to_string(), r[1].parse().unwrap())).collect();
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.1).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut boxes = String::from("image_id,class,xmin,ymin,xmax,ymax,truncated,occluded,difficult\n");
    for (id, s) in &rows {
        let class = if *s >= median { "cat" } else { "dog" };
        boxes.push_str(&format!("{id},{class},0,0,10,10,0,0,0\n"));
    }
    let boxes_path = t.path().join("boxes.csv");
    fs::write(&boxes_path, boxes).unwrap();
    let config = t.path().join("run.toml");
    fs::write(&config, "classes = [\"cat\", \"dog\"]\nheuristics = [\"RAND\", \"PRdifficulty\"]\nn_labeled = 10\nk = 5\nruns = 2\n").unwrap();
    let out = t.path().join("st");
    ok(
        &out,
        &[
            "selftrain",
            "--config",
            p(&config),
            "--features",
            p(&data("regression.vsdf")),
            "--boxes",
            p(&boxes_path),
            "--splits",
            p(&t.path().join("split/splits.csv")),
            "--pred-scores",
            p(&scores),
        ],
    );
    let map = fs::read_to_string(out.join("map.csv")).unwrap();
    // 10 labeled grow to 30 in steps of 5
    assert_eq!(map.lines().count(), 1 + 2 * 5);
    assert!(map.lines().skip(1).all(|l| l.ends_with(",2")));
}

#[test]
fn baselines_score_pnm_images() {
    let t = tempfile::tempdir().unwrap();
    let images = t.path().join("images");
    fs::create_dir(&images).unwrap();
    let flat = RasterImage::from_fn(32, 24, 1, |_, _| [128; 3]).unwrap();
    let halves = RasterImage::from_fn(32, 24, 1, |x, _| [if x < 16 { 0 } else { 255 }; 3]).unwrap();
    let noisy = RasterImage::from_fn(40, 40, 3, |x, y| {
        let v = (x * 37 + y * 91) % 251;
        [v as u8, (v * 3 % 256) as u8, (v * 7 % 256) as u8]
    })
    .unwrap();
    for (name, img, ext) in [("flat", &flat, "pgm"), ("halves", &halves, "pgm"), ("noisy", &noisy, "ppm")] {
        fs::write(images.join(format!("{name}.{ext}")), vsd::pnm::encode_pnm(img)).unwrap();
    }
    // Unsmoothed, so the step between the halves leaves no ramp pixels behind.
    ok(t.path(), &["baselines", "--images", p(&images), "--sigma", "0"]);
    let mut rdr = csv::Reader::from_path(t.path().join("baselines.csv")).unwrap();
    let rows: BTreeMap<String, Vec<String>> = rdr
        .records()
        .map(|r| r.unwrap())
        .map(|r| (r[0].to_string(), r.iter().skip(1).map(str::to_string).collect()))
        .collect();
    assert_eq!(rows["flat"][3], "1");
    assert_eq!(rows["halves"][3], "2");
    assert_eq!(rows["flat"][2], "0.0");
}

#[test]
fn voc_metadata_converts_and_feeds_properties() {
    let t = tempfile::tempdir().unwrap();
    let voc = t.path().join("voc");
    fs::create_dir(&voc).unwrap();
    for (i, class) in ["cat", "dog", "cat"].iter().enumerate() {
        fs::write(
            voc.join(format!("im{i}.xml")),
            format!(
                "<annotation><filename>im{i}.jpg</filename><size><width>100</width><height>80</height></size>\
                 <object><name>{class}</name><truncated>{}</truncated><difficult>0</difficult>\
                 <bndbox><xmin>10</xmin><ymin>10</ymin><xmax>{}</xmax><ymax>50</ymax></bndbox></object></annotation>",
                i % 2,
                30 + 20 * i
            ),
        )
        .unwrap();
    }
    let meta = t.path().join("meta");
    ok(&meta, &["convert-metadata", "--voc-dir", p(&voc)]);
    let boxes = fs::read_to_string(meta.join("boxes.csv")).unwrap();
    assert_eq!(boxes.lines().count(), 4);
    let props = t.path().join("props");
    ok(&props, &["compute-properties", "--boxes", p(&meta.join("boxes.csv")), "--sizes", p(&meta.join("sizes.csv"))]);
    let table = fs::read_to_string(props.join("properties.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}
