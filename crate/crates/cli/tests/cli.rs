use std::path::Path;
use std::process::Command;

fn crisp(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_crisp")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "crisp {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let demos = d.join("demos.jsonl");
    let config = d.join("run.txt");
    std::fs::write(
        &config,
        format!(
            "env = maze\nvariant = crisp-irl\nmaze.observation = position\nhorizon = 60\n\
             lower.hidden = 16, 16\nhigher.hidden = 16, 16\nsac.batch_size = 32\ndisc_hidden = 16\n\
             total_steps = 700\nwarmup = 200\npopulation_period = 300\neval_every = 350\neval_rollouts = 4\n\
             demos = {}\n",
            demos.display()
        ),
    )
    .unwrap();
    crisp(&["gen-demos", "--config", s(&config), "--count", "4", "--seed", "2", "--out", s(&demos)]);
    let run = d.join("run");
    let out = crisp(&["train", "--config", s(&config), "--seed", "1", "--out", s(&run)]);
    assert!(out.contains("final_success"));
    let ckpt = run.join("checkpoint.bin");
    assert!(ckpt.exists() && run.join("metrics.csv").exists());

    let dg = d.join("dg.jsonl");
    let out = crisp(&["relabel", "--demos", s(&demos), "--checkpoint", s(&ckpt), "--parser", "window", "--k", "3", "--out", s(&dg)]);
    assert!(out.contains("transitions"));
    assert!(dg.exists());

    let out = crisp(&["eval", "--checkpoint", s(&ckpt), "--rollouts", "5"]);
    assert!(out.starts_with("success "));

    let grid = d.join("grid.txt");
    std::fs::write(&grid, "psi = 0.001, 0.01\nseeds = 0\n").unwrap();
    let archive = d.join("archive");
    let out = crisp(&["sweep", "--config", s(&config), "--grid", s(&grid), "--out", s(&archive)]);
    assert!(out.starts_with("2 runs"), "{out}");
    let out = crisp(&["plot", "--archive", s(&archive), "--out", s(&d.join("figs"))]);
    assert!(out.contains("success.svg"));
}

#[test]
fn bad_input_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_crisp"))
        .args(["gen-demos", "--env", "pond", "--count", "1", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown env"));
}
