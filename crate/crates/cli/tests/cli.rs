use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

const TINY: &str = r#"
[experiment]
algorithms = ["dqn", "ppo"]
rewards = ["rfn1"]

[workload]
horizon_slots = 172800
train_len = 86400
peak_level = 28.0
burst_magnitude = 3.0

[schedule]
train_episodes = 1
eval_episodes = 1
epochs = 1
seeds = [1, 2]

[dqn]
learning_starts = 200

[ppo]
rollout_length = 512
update_epochs = 2
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scalebench"));
    c.env_remove("SCALEBENCH_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn tiny_config(dir: &Path, out: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, format!("output_dir = {:?}\n{TINY}", out.display().to_string())).unwrap();
    path
}

fn train(config: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().lines().last().unwrap())
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn missing_config_exits_2() {
    assert_eq!(run(&["train", "--config", "/definitely/not/here.toml"]).status.code(), Some(2));
    assert_eq!(run(&["train"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--preset", "galaxy"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["validate", dir.path().to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn train_twice_gives_identical_bytes_and_full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let run_a = train(&tiny_config(dir.path(), &out_a), &["--jobs", "4"]);
    let cfg_b = dir.path().join("b.toml");
    std::fs::write(&cfg_b, format!("output_dir = {:?}\n{TINY}", out_b.display().to_string())).unwrap();
    let run_b = train(&cfg_b, &["--sequential"]);

    let runs: Vec<_> = files_under(&run_a).into_iter().filter(|(p, _)| p.starts_with("runs")).collect();
    assert_eq!(runs.len(), 4);
    assert_eq!(files_under(&run_a), files_under(&run_b));

    let rd = run_a.to_str().unwrap();
    let v = run(&["validate", rd]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
    assert!(String::from_utf8_lossy(&v.stdout).contains("RFn1"));
    let s = run(&["select", rd, "--alpha", "0.1"]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    assert!(String::from_utf8_lossy(&s.stdout).contains("RFn1: "));
    let r = run(&["report", rd]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(run_a.join("plots/RFn1.svg").is_file());

    // validate and report are idempotent.
    let before = files_under(&run_a);
    assert!(run(&["validate", rd, "--sequential"]).status.success());
    assert!(run(&["report", rd]).status.success());
    assert_eq!(before, files_under(&run_a));
}

#[test]
fn report_on_empty_run_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.toml"), TINY).unwrap();
    let out = run(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no run files"));
}

#[test]
fn gen_trace_writes_hashed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eval.csv");
    let out = run(&["gen-trace", "--preset", "desk", "--split", "eval", "-o", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next(), Some("slot,arrivals"));
    assert_eq!(lines.count(), 86_400);
}

#[test]
fn serve_answers_a_handshake() {
    let mut child = bin()
        .args(["serve", "--preset", "desk", "--serve", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("{line}")).to_string();

    let stream = TcpStream::connect(&addr).unwrap();
    let mut w = stream.try_clone().unwrap();
    let mut r = BufReader::new(stream);
    w.write_all(b"{\"cmd\":\"handshake\"}\n{\"cmd\":\"reset\",\"seed\":7}\n{\"cmd\":\"step\",\"action\":1}\n").unwrap();
    let mut replies = Vec::new();
    for _ in 0..3 {
        let mut l = String::new();
        r.read_line(&mut l).unwrap();
        replies.push(l);
    }
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(replies[0].contains("\"protocol_version\":1"), "{}", replies[0]);
    assert!(replies[2].contains("\"reward\":"), "{}", replies[2]);
}
