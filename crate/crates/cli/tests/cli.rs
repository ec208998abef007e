//! End-to-end runs of the `weavelab` binary: exit codes, stdout/stderr split,
//! report contents and replay.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use weavelab::format::{save_t3b, AnyTensor};
use weavelab_core::Tensor3;

fn weavelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weavelab")).args(args).output().expect("binary runs")
}

fn stdout_lines(o: &Output) -> Vec<Value> {
    String::from_utf8(o.stdout.clone()).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn report(o: &Output) -> Value {
    stdout_lines(o).pop().expect("a report line")
}

fn save(dir: &Path, name: &str, t: AnyTensor) -> String {
    let p = dir.join(name);
    save_t3b(&p, &t).unwrap();
    p.display().to_string()
}

fn random_i32(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), lo: i32, hi: i32, zero_p: f64) -> Tensor3<i32> {
    Tensor3::from_fn(dims.0, dims.1, dims.2, |_, _, _| if rng.gen_bool(zero_p) { 0 } else { rng.gen_range(lo..=hi) })
        .unwrap()
}

#[test]
fn verify_equivalence_exit_codes() {
    let ok = weavelab(&["verify-equivalence", "--trials", "50", "--seed", "9"]);
    assert_eq!(ok.status.code(), Some(0));
    let lines = stdout_lines(&ok);
    assert_eq!(lines.len(), 51);
    assert!(lines[..50].iter().enumerate().all(|(i, l)| l["trial"] == i as u64 && l["exact"] == true));
    assert_eq!(lines[50]["payload"]["all_exact"], true);
    assert_eq!(lines[50]["manifest"]["command"], "verify-equivalence");
    assert!(String::from_utf8_lossy(&ok.stderr).contains("50/50 trials exact"));

    let float = weavelab(&["verify-equivalence", "--trials", "50", "--dtype", "f64"]);
    assert_eq!(float.status.code(), Some(0));

    let sabotaged = weavelab(&["verify-equivalence", "--trials", "50", "--sabotage"]);
    assert_eq!(sabotaged.status.code(), Some(1));
    assert!(report(&sabotaged)["payload"]["mismatches"].as_u64().unwrap() > 0);

    for bad in [&["verify-equivalence", "--trials", "0"][..], &["verify-equivalence"], &["no-such-command"]] {
        let o = weavelab(bad);
        assert_eq!(o.status.code(), Some(2), "{bad:?}");
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn simulate_single_image() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let image = save(dir.path(), "x.t3b", random_i32(&mut rng, (2, 9, 7), 1, 255, 0.0).into());
    let noise = save(dir.path(), "v.t3b", random_i32(&mut rng, (2, 9, 7), 1, 15, 0.0).into());
    let zero = save(dir.path(), "z.t3b", Tensor3::<i32>::zeros(2, 9, 7).unwrap().into());
    let filters = save(dir.path(), "f.t3b", random_i32(&mut rng, (6, 3, 3), -8, 8, 0.0).into());

    let off = weavelab(&[
        "simulate",
        "--image",
        &image,
        "--noise",
        &noise,
        "--filters",
        &filters,
        "--config",
        "tpu",
        "--zero-skip",
        "off",
    ]);
    assert_eq!(off.status.code(), Some(0), "{}", String::from_utf8_lossy(&off.stderr));
    let p = &report(&off)["payload"];
    assert_eq!(p["attacked"]["mac_issued"].as_u64().unwrap(), 2 * p["clean"]["mac_issued"].as_u64().unwrap());
    assert_eq!(p["issued_ratio"], 2.0);
    assert_eq!(p["config"]["rows"], 256);
    for field in ["mac_issued", "mac_skipped", "mac_executed", "cycles", "array_utilization"] {
        assert!(p["clean"].get(field).is_some(), "{field}");
    }

    let on = weavelab(&["simulate", "--image", &image, "--noise", &zero, "--filters", &filters, "--zero-skip", "on"]);
    let p = &report(&on)["payload"];
    assert_eq!(p["attacked"]["mac_executed"], p["clean"]["mac_executed"]);
    assert_eq!(p["extra_executed"], 0);

    let custom =
        weavelab(&["simulate", "--image", &image, "--noise", &noise, "--filters", &filters, "--config", "4x2"]);
    assert_eq!(report(&custom)["payload"]["config"]["cols"], 2);
}

#[test]
fn simulate_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let image = save(dir.path(), "x.t3b", Tensor3::<i32>::zeros(1, 4, 4).unwrap().into());
    let float = save(dir.path(), "v.t3b", Tensor3::<f64>::zeros(1, 4, 4).unwrap().into());
    let filters = save(dir.path(), "f.t3b", Tensor3::<i32>::zeros(1, 2, 2).unwrap().into());
    let junk = dir.path().join("junk.t3b");
    std::fs::write(&junk, b"T3B1\x01\x00").unwrap();
    let junk = junk.display().to_string();
    let cases: [&[&str]; 5] = [
        &["simulate", "--image", &image, "--noise", &junk, "--filters", &filters],
        &["simulate", "--image", &image, "--noise", &float, "--filters", &filters],
        &["simulate", "--image", &image, "--noise", &image, "--filters", &filters, "--config", "0x4"],
        &["simulate", "--image", &image, "--noise", &image, "--filters", &filters, "--zero-skip", "maybe"],
        &["simulate", "--image", &image, "--noise", "/nonexistent.t3b", "--filters", &filters],
    ];
    for args in cases {
        let o = weavelab(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn simulate_corpus_emits_jsonl_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..12 {
        save(&corpus, &format!("{i:02}.t3b"), random_i32(&mut rng, (1, 10, 10), 1, 255, 0.5).into());
    }
    let noise = save(dir.path(), "v.t3b", random_i32(&mut rng, (1, 10, 10), -3, 3, 0.9).into());
    let filters = save(dir.path(), "f.t3b", random_i32(&mut rng, (2, 3, 3), -4, 4, 0.2).into());
    let corpus = corpus.display().to_string();
    let o = weavelab(&["simulate", "--corpus", &corpus, "--noise", &noise, "--filters", &filters]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = stdout_lines(&o);
    assert_eq!(lines.len(), 13);
    assert_eq!(lines[3]["file"], "03.t3b");
    let summary = &lines[12]["payload"];
    assert_eq!(summary["images"], 12);
    assert_eq!(summary["clean_executed"]["count"], 12);
    assert!(summary["clean_executed"]["variance"].as_f64().unwrap() > 0.0);
    let executed: Vec<u64> = lines[..12].iter().map(|l| l["clean"]["mac_executed"].as_u64().unwrap()).collect();
    assert_eq!(summary["clean_executed"]["min"].as_u64(), executed.iter().min().copied());
}

struct Pipeline {
    dir: tempfile::TempDir,
    reports: Vec<PathBuf>,
}

impl Pipeline {
    fn model(&self) -> String {
        self.dir.path().join("m.tcnn").display().to_string()
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    /// Runs a command, checks it succeeded and keeps its stdout for replay.
    fn run(&mut self, name: &str, args: &[&str]) -> Value {
        let o = weavelab(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty(), "human summary goes to stderr");
        let path = self.dir.path().join(format!("{name}.json"));
        std::fs::write(&path, &o.stdout).unwrap();
        self.reports.push(path);
        report(&o)
    }
}

#[test]
fn train_craft_eval_replay() {
    let mut p = Pipeline { dir: tempfile::tempdir().unwrap(), reports: vec![] };
    let model = p.model();
    let v = p.path("v.t3b");
    let trained = p.run("train", &["train", "--seed", "2", "--samples", "240", "--epochs", "8", "--out", &model]);
    assert_eq!(trained["manifest"]["output"], model.as_str());
    assert_eq!(trained["payload"]["loss_history"].as_array().unwrap().len(), 8);

    let crafted = p
        .run("craft", &["craft", "--model", &model, "--seed", "2", "--samples", "60", "--max-iters", "4", "--out", &v]);
    let c = &crafted["payload"];
    assert!(c["linf"].as_f64().unwrap() <= 0.05);
    assert!(c["bit_stats"]["max_magnitude_bits"].as_u64().unwrap() <= 4);
    assert!(c["bit_comparison"]["random"][1]["bit_ratio"].as_f64().unwrap() > 1.0);

    let direct = p.run("eval_direct", &["eval", "--model", &model, "--perturbation", &v, "--samples", "120"]);
    let woven = p.run(
        "eval_woven",
        &["eval", "--model", &model, "--perturbation", &v, "--samples", "120", "--path", "interleaved"],
    );
    assert_eq!(direct["payload"], woven["payload"]);
    assert_eq!(woven["manifest"]["parameters"]["path"], "interleaved");

    let clean = p.run("eval_zero", &["eval", "--model", &model, "--samples", "120"]);
    assert_eq!(clean["payload"]["fooling_rate"], 0.0);
    assert_eq!(clean["payload"]["top1_clean"], clean["payload"]["top1_perturbed"]);

    for (i, method) in ["fgsm", "random-low", "random-high"].iter().enumerate() {
        let out = p.path(&format!("n{i}.t3b"));
        let r = p.run(method, &["craft", "--model", &model, "--method", method, "--samples", "10", "--out", &out]);
        let linf = r["payload"]["linf"].as_f64().unwrap();
        if *method == "random-high" {
            assert!(linf > 0.05 && r["payload"]["bit_comparison"].is_null());
        } else {
            assert!(linf <= 0.05);
        }
    }

    let reports = p.reports.clone();
    let artifact = std::fs::read(&v).unwrap();
    for r in reports {
        let o = weavelab(&["replay", &r.display().to_string()]);
        assert_eq!(o.status.code(), Some(0), "{}: {}", r.display(), String::from_utf8_lossy(&o.stderr));
        assert_eq!(report(&o)["payload"]["identical"], true);
    }
    // Replays write their artifacts elsewhere.
    assert_eq!(std::fs::read(&v).unwrap(), artifact);
}

#[test]
fn replay_detects_tampered_payload() {
    let dir = tempfile::tempdir().unwrap();
    let o = weavelab(&["verify-equivalence", "--trials", "3"]);
    let mut r = report(&o);
    r["payload"]["max_abs_diff"] = 1.0.into();
    let path = dir.path().join("r.json");
    std::fs::write(&path, serde_json::to_string(&r).unwrap()).unwrap();
    let replay = weavelab(&["replay", &path.display().to_string()]);
    assert_eq!(replay.status.code(), Some(1));
    assert_eq!(report(&replay)["payload"]["identical"], false);

    std::fs::write(&path, "not json").unwrap();
    assert_eq!(weavelab(&["replay", &path.display().to_string()]).status.code(), Some(2));
}

#[test]
fn model_and_dataset_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("m.tcnn");
    std::fs::write(&bogus, b"TCNN\x09\x00\x00\x00").unwrap();
    let o = weavelab(&["eval", "--model", &bogus.display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    let o = weavelab(&["train", "--data", &dir.path().join("missing").display().to_string(), "--out", "x.tcnn"]);
    assert_eq!(o.status.code(), Some(1));
    let o = weavelab(&["train", "--epochs", "0", "--out", &dir.path().join("m2.tcnn").display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn labeled_directory_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let corpus = weavelab_core::adversary::SyntheticCorpus::new(1, 12, 12, 3).unwrap();
    weavelab::dataset::save_labeled_dir(&data, &corpus.generate(60, 1, 0)).unwrap();
    let model = dir.path().join("m.tcnn").display().to_string();
    let data = data.display().to_string();
    let o = weavelab(&["train", "--data", &data, "--epochs", "3", "--out", &model]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&o);
    assert_eq!(r["payload"]["architecture"]["num_classes"], 3);
    assert_eq!(r["payload"]["samples"], 60);
    assert_eq!(r["manifest"]["inputs"][0], data.as_str());
    let e = weavelab(&["eval", "--model", &model, "--data", &data]);
    assert_eq!(report(&e)["payload"]["n_samples"], 60);
}
