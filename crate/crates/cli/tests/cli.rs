use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const WORKED: &str = "3 3 1\n9\n10 6 4\n3 4 5\n1 1 0\n0 1 1\n0 0 1\n";

fn rlabc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlabc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn oracle_worked_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "tiny.sukp", WORKED);
    let o = rlabc(&["oracle", &inst]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "fitness 10\nsolution 011\n");

    let zero = write(dir.path(), "zero.sukp", &WORKED.replacen("\n9\n", "\n0\n", 1));
    let o = rlabc(&["oracle", &zero]);
    assert_eq!(stdout(&o), "fitness 0\nsolution 000\n");
}

#[test]
fn oracle_refuses_large_instances() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("big.sukp");
    let o = rlabc(&["gen", "--items", "30", "--elements", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = rlabc(&["oracle", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("24"), "{}", stderr(&o));
}

#[test]
fn solve_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "tiny.sukp", WORKED);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = rlabc(&[
            "solve",
            &inst,
            "--scheme",
            "rl",
            "--seed",
            "7",
            "--budget",
            "500",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let files: Vec<Vec<u8>> = ["summary.txt", "history.csv", "archive.csv"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let summary = String::from_utf8(outputs[0][0].clone()).unwrap();
    assert!(summary.contains("best_fitness 10.0"), "{summary}");
    assert!(summary.contains("solution 011") || summary.contains("solution 100"), "{summary}");
    let history = String::from_utf8(outputs[0][1].clone()).unwrap();
    assert!(history.starts_with("evaluations,best_fitness\n"));
    let archive = String::from_utf8(outputs[0][2].clone()).unwrap();
    assert!(archive.starts_with("solution,f1\n"));
}

#[test]
fn solve_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.sukp");
    let o = rlabc(&["solve", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nope.sukp"), "{}", stderr(&o));

    let inst = write(dir.path(), "tiny.sukp", WORKED);
    let o = rlabc(&["solve", &inst, "--scheme", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    for name in ["random", "pm", "ap", "ucb", "rl"] {
        assert!(stderr(&o).contains(name), "{}", stderr(&o));
    }

    let o = rlabc(&["solve", &inst, "--weights", "0.5,0.5"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    let exp = dir.path().join("missing.json");
    let o = rlabc(&[
        "solve",
        &inst,
        "--transfer",
        "frozen",
        "--experience",
        exp.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = rlabc(&["solve", &inst, "--budget", "notanumber"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_for_every_subcommand() {
    for sub in [
        vec!["--help"],
        vec!["solve", "--help"],
        vec!["bench", "--help"],
        vec!["oracle", "--help"],
        vec!["gen", "--help"],
        vec!["experience-inspect", "--help"],
    ] {
        let o = rlabc(&sub);
        assert_eq!(o.status.code(), Some(0), "{sub:?}");
        assert!(stdout(&o).contains("Usage"), "{sub:?}");
    }
    let o = rlabc(&["solve", "--help"]);
    assert!(stdout(&o).contains("overrides"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tiny.sukp", WORKED);
    let cfg = write(
        dir.path(),
        "run.toml",
        "instance = \"tiny.sukp\"\nscheme = \"pm\"\nseed = 3\nbudget = 200\n",
    );
    let o = rlabc(&["solve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("scheme pm\n"));
    assert!(stdout(&o).contains("seed 3\n"));
    let o = rlabc(&["solve", "--config", &cfg, "--scheme", "ucb"]);
    assert!(stdout(&o).contains("scheme ucb\n"));
    assert!(stdout(&o).contains("budget 200\n"));
}

#[test]
fn experience_roundtrip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "tiny.sukp", WORKED);
    let exp = dir.path().join("exp.json");
    let o = rlabc(&[
        "solve",
        &inst,
        "--budget",
        "300",
        "--save-experience",
        exp.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = rlabc(&["experience-inspect", exp.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("operators 4 objectives 1 solution_length 3"));

    for mode in ["frozen", "continue"] {
        let o = rlabc(&[
            "solve",
            &inst,
            "--budget",
            "300",
            "--transfer",
            mode,
            "--experience",
            exp.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let o = rlabc(&[
        "solve",
        &inst,
        "--operators",
        "flip1,exchange",
        "--transfer",
        "frozen",
        "--experience",
        exp.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    let junk = write(dir.path(), "junk.json", "{\"version\": 1}");
    assert_eq!(rlabc(&["experience-inspect", &junk]).status.code(), Some(4));
}

#[test]
fn gen_is_deterministic() {
    let a = rlabc(&["gen", "--items", "8", "--elements", "6", "--seed", "5"]);
    let b = rlabc(&["gen", "--items", "8", "--elements", "6", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("8 6 1\n"));
    let o = rlabc(&["gen", "--items", "8", "--elements", "6", "--density", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

fn bench_config(dir: &Path, instances: &[&str]) -> String {
    let mut text = String::from(
        "schemes = [\"rl\", \"pm\", \"random\"]\nseeds = 4\n[run]\nbudget = 400\ncolony_size = 6\n",
    );
    for i in instances {
        text.push_str(&format!("[[instances]]\npath = \"{i}\"\ngroup = \"small\"\n"));
    }
    write(dir, "matrix.toml", &text)
}

#[test]
fn bench_writes_ranks_and_is_parallel_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let o = rlabc(&[
        "gen",
        "--items",
        "20",
        "--elements",
        "20",
        "--density",
        "0.3",
        "--out",
        dir.path().join("g.sukp").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = bench_config(dir.path(), &["g.sukp"]);
    let mut records = Vec::new();
    for par in ["1", "4"] {
        let out = dir.path().join(format!("out{par}"));
        fs::create_dir(&out).unwrap();
        let o = rlabc(&["bench", &cfg, "--parallel", par, "--out-dir", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("ordering rl < pm < random by mean rank"));
        records.push(fs::read(out.join("records.csv")).unwrap());
        let ranks = fs::read_to_string(out.join("ranks.csv")).unwrap();
        let lines: Vec<&str> = ranks.lines().collect();
        assert_eq!(lines[0], "instance,scheme,mean_rank");
        assert_eq!(lines.len(), 1 + 3);
        let plot = fs::read_to_string(out.join("plot.csv")).unwrap();
        assert_eq!(plot.lines().count(), 1 + 3);
    }
    assert_eq!(records[0], records[1]);
    let text = String::from_utf8(records[0].clone()).unwrap();
    assert!(text.starts_with("instance,scheme,mode,seed,best_fitness,evals_to_target,wall_time_s\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 4);
}

#[test]
fn bench_fails_fast_on_missing_instance() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tiny.sukp", WORKED);
    let cfg = bench_config(dir.path(), &["tiny.sukp", "absent.sukp"]);
    let out = dir.path().join("out");
    fs::create_dir(&out).unwrap();
    let o = rlabc(&["bench", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("absent.sukp"), "{}", stderr(&o));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn bench_rejects_unknown_scheme() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "tiny.sukp", WORKED);
    let cfg = write(
        dir.path(),
        "m.toml",
        "schemes = [\"rl\", \"bogus\"]\n[[instances]]\npath = \"tiny.sukp\"\n",
    );
    let o = rlabc(&["bench", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
