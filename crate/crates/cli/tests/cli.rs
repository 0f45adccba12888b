use std::path::Path;
use std::process::{Command, Output};

fn roomprint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roomprint"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = roomprint(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two rooms, five utterances each, the fifth held out.
fn write_manifest(path: &Path, extra: &str) {
    let mut text = String::from("speech_path,rir,room,condition,split\n");
    for (r, rir) in ["synth:250=0.3,4000=0.2;seed=1;len=0.6", "synth:250=0.6,4000=0.5;seed=2;len=1"]
        .iter()
        .enumerate()
    {
        for i in 0..5 {
            let split = if i == 4 { "test" } else { "train" };
            text += &format!("synth:seed={};len=3,\"{rir}\",room{r},near,{split}\n", 100 * r + i);
        }
    }
    text += extra;
    std::fs::write(path, text).unwrap();
}

#[test]
fn staged_run_matches_single_shot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = d.join("speech.rplgmm");
    let common = ["--mixtures", "8", "--orders", "12,12", "--seed", "3"];
    let with = |args: &[&str]| -> Vec<String> { args.iter().chain(&common).map(|a| a.to_string()).collect() };
    let run = |args: Vec<String>| ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    run(with(&["train-gmm", "synth:seed=900;len=20", "synth:seed=901;len=20", "--out", s(&model)]));
    assert!(model.exists());

    let manifest = d.join("manifest.csv");
    write_manifest(&manifest, "");
    let corpus = d.join("corpus");
    run(with(&["synth-dataset", "--manifest", s(&manifest), "--out", s(&corpus)]));
    let dataset = corpus.join("dataset.csv");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(corpus.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_train"], 8);
    assert_eq!(report["n_test"], 2);

    // One recording through the individual stages.
    let wav = corpus.join("test").join("room0_near_00005.wav");
    let channel = d.join("h.csv");
    run(with(&["estimate-channel", "--model", s(&model), "--input", s(&wav), "--out", s(&channel)]));
    let from_channel = d.join("a.json");
    let from_audio = d.join("b.json");
    run(with(&["extract-roomprint", "--channel", s(&channel), "--out", s(&from_channel), "--csv", s(&d.join("a.csv"))]));
    run(with(&["extract-roomprint", "--model", s(&model), "--input", s(&wav), "--out", s(&from_audio)]));
    assert_eq!(
        std::fs::read_to_string(&from_channel).unwrap(),
        std::fs::read_to_string(&from_audio).unwrap()
    );
    let rp_csv = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(rp_csv.lines().next().unwrap().split(',').count(), 26);

    // Features table, classifier and evaluation as separate steps.
    let features = d.join("features.csv");
    run(with(&["extract-roomprint", "--model", s(&model), "--dataset", s(&dataset), "--out", s(&features)]));
    let svm = d.join("rooms.rplsvm");
    run(with(&["train-classifier", "--features", s(&features), "--folds", "2", "--out", s(&svm)]));
    let staged = d.join("staged.json");
    let table = run(with(&["evaluate", "--classifier", s(&svm), "--features", s(&features), "--out", s(&staged)]));
    assert!(table.contains("Precision"));

    // The same evaluation computed straight from the dataset.
    let svm2 = d.join("rooms2.rplsvm");
    run(with(&["train-classifier", "--dataset", s(&dataset), "--model", s(&model), "--folds", "2", "--out", s(&svm2)]));
    assert_eq!(std::fs::read(&svm).unwrap(), std::fs::read(&svm2).unwrap());
    let direct = d.join("direct.json");
    run(with(&["evaluate", "--classifier", s(&svm2), "--dataset", s(&dataset), "--model", s(&model), "--out", s(&direct)]));
    assert_eq!(std::fs::read_to_string(&staged).unwrap(), std::fs::read_to_string(&direct).unwrap());

    let label = run(with(&["classify", "--classifier", s(&svm), "--roomprint", s(&from_audio)]));
    assert!(label.trim() == "room0" || label.trim() == "room1", "{label}");

    let sweep = d.join("sweep.csv");
    let cache = d.join("cache");
    let sweep_args = |out: &Path| {
        with(&[
            "sweep", "--dataset", s(&dataset), "--model", s(&model), "--fractions", "3,4", "--folds", "2", "--cache", s(&cache),
            "--out", s(out),
        ])
    };
    run(sweep_args(&sweep));
    let text = std::fs::read_to_string(&sweep).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("fraction,alpha,train,test,precision,recall,accuracy"));
    // A second sweep is served from the cache and agrees exactly.
    let again = d.join("sweep2.csv");
    run(sweep_args(&again));
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "speech_path,rir,room,condition,split\n").unwrap();
    let out = roomprint(&["synth-dataset", "--manifest", s(&empty), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest invalid"));

    let shared = dir.path().join("shared.csv");
    write_manifest(&shared, "");
    let text = std::fs::read_to_string(&shared).unwrap().replace("synth:seed=101;", "synth:seed=1;");
    std::fs::write(&shared, text).unwrap();
    let out = roomprint(&["synth-dataset", "--manifest", s(&shared), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());

    let out = roomprint(&["estimate-channel", "--model", "/no/such.rplgmm", "--input", "/no/such.wav", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let not_wav = dir.path().join("x.wav");
    std::fs::write(&not_wav, b"not audio at all").unwrap();
    let out = roomprint(&["extract-roomprint", "--channel", s(&not_wav), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = roomprint(&["extract-roomprint", "--orders", "banana", "--channel", "h.csv", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn skipped_files_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = d.join("m.rplgmm");
    ok(&["train-gmm", "synth:seed=5;len=20", "--mixtures", "4", "--out", s(&model)]);
    let manifest = d.join("manifest.csv");
    write_manifest(&manifest, "");
    let corpus = d.join("corpus");
    ok(&["synth-dataset", "--manifest", s(&manifest), "--out", s(&corpus)]);
    // A truncated recording the pipeline cannot use.
    let short = corpus.join("train").join("room0_near_00001.wav");
    let mut bytes = std::fs::read(&short).unwrap();
    bytes.truncate(60);
    std::fs::write(&short, bytes).unwrap();
    let features = d.join("f.csv");
    let skipped = d.join("skipped.json");
    let out = roomprint(&[
        "extract-roomprint", "--model", s(&model), "--dataset", s(&corpus.join("dataset.csv")), "--orders", "12,12",
        "--out", s(&features), "--skipped-out", s(&skipped),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&skipped).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 1);
    assert_eq!(std::fs::read_to_string(&features).unwrap().lines().count(), 10);
}
