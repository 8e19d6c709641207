use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kan-nqs"))
}

fn scratch(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stderr));
    })
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn bundled_configs_validate() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = run(&["validate", "--config", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        assert_eq!(json(&out)["command"], "validate");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = scratch("bad");
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "[hamiltonian]\nkind = \"tfim\"\nn_sites = 8\nsector = true\n").unwrap();
    assert_eq!(run(&["train", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&bad, "[hamiltonian]\nkind = \"j1j2\"\nn_sites = 8\ncolor = 1\n").unwrap();
    assert_eq!(run(&["validate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["validate"]).status.code(), Some(2));
    assert_eq!(run(&["validate", "--config", "/nonexistent/run.toml"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

const TINY: &str = r#"
[model]
kind = "sinekan"
hidden = [4, 4]
grid = 2
reflected = true
omega_init = 1.0

[hamiltonian]
kind = "j1j2"
n_sites = 8
j2 = 0.2

[sampler]
n_chains = 16
n_samples = 256
warmup_sweeps = 10

[training]
epochs = 20
lr = 1e-3
eval_samples = 256

[output]
observables = ["isotropic", "structure_factor", "dimer_dimer"]
observable_samples = 512

[ed]
k = 3
"#;

#[test]
fn train_then_inspect_the_checkpoint() {
    let dir = scratch("pipeline");
    let cfg = dir.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let (c, o) = (cfg.to_str().unwrap(), dir.to_str().unwrap());

    let out = run(&["train", "--config", c, "--out", o, "--seed", "4", "--threads", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = json(&out);
    assert_eq!(rec["model_seed"], 4);
    assert_eq!(rec["epochs"], 20);
    assert!(rec["fidelity"].as_f64().unwrap() > 0.0);
    let history = std::fs::read_to_string(dir.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,energy,variance,stderr,acceptance,lr,bias_h,clamp_count\n"));
    assert_eq!(history.lines().count(), 21);
    assert!(dir.join("results.json").exists() && dir.join("model.ckpt").exists());

    let out = run(&["observe", "--config", c, "--out", o, "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = std::fs::read_to_string(dir.join("observables.csv")).unwrap();
    assert!(series.starts_with("abscissa,value,stderr,mode,observable,model_tag\n"));
    assert!(series.contains(",exact,isotropic,ED\n") && series.contains(",stochastic,structure_factor,rSineKAN\n"));

    let out = run(&["fidelity", "--config", c, "--out", o, "--seed", "4"]);
    assert!(out.status.success());
    let f = json(&out);
    assert_eq!(f["fidelity"], rec["fidelity"]);

    let out = run(&["ed", "--config", c, "--out", o]);
    assert!(out.status.success());
    let eig = std::fs::read_to_string(dir.join("eigenvalues.csv")).unwrap();
    assert_eq!(eig.lines().count(), 4);
    assert!(eig.starts_with("index,eigenvalue,degenerate_with_ground\n0,"));

    // a checkpoint from a different architecture is refused
    let other = dir.join("other.toml");
    std::fs::write(&other, TINY.replace("hidden = [4, 4]", "hidden = [5, 4]")).unwrap();
    let ckpt = dir.join("model.ckpt");
    let out = run(&["fidelity", "--config", other.to_str().unwrap(), "--out", o, "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_one_row_per_length() {
    let dir = scratch("bench");
    let cfg = dir.join("bench.toml");
    std::fs::write(
        &cfg,
        "[model]\nhidden = [4, 4]\ngrid = 2\n[hamiltonian]\nkind = \"tfim\"\nn_sites = 8\n[bench]\nlengths = [8, 16]\npasses = 50\nwarmup_passes = 10\n",
    )
    .unwrap();
    let out = run(&["bench", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("bench.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "model_tag,n_sites,param_count,passes,warmup_passes,mean_ns");
    assert!(rows[1].starts_with("vSineKAN,8,") && rows[2].starts_with("vSineKAN,16,"));
}
