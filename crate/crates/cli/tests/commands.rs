use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[model]
d = 1
sigma = 0.5
r = 0.05
lambda = 1.0
mu_j = 0.0
sigma_j = 0.5

[network]
layers = 1
width = 8

[scheme]
tau = 0.1
maturity = 0.2

[training]
epochs_init = 32
epochs_first = 8
epochs_step = 4
samples_per_epoch = 128
init_samples = 128
batch = 64
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deep-imex")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn solve(dir: &Path, text: &str, seed: Option<&str>) -> String {
    let cfg = write_config(dir, "run.toml", text);
    let out = dir.join("run");
    let out = out.to_str().unwrap().to_string();
    let mut args = vec!["solve", "--config", &cfg, "--out", &out, "--quiet"];
    if let Some(s) = seed {
        args.extend(["--seed", s]);
    }
    let res = cli(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    out
}

fn manifest(run: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(Path::new(run).join("manifest.json")).unwrap()).unwrap()
}

fn rows(csv_text: &str) -> Vec<Vec<f64>> {
    csv_text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn solve_writes_one_checkpoint_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let run = solve(dir.path(), TINY, None);
    let m = manifest(&run);
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["checkpoints"].as_array().unwrap().len(), 3);
    assert_eq!(m["report"]["steps"].as_array().unwrap().len(), 2);
}

#[test]
fn seed_override_is_recorded_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = manifest(&solve(a.path(), TINY, Some("99")));
    let mb = manifest(&solve(b.path(), TINY, Some("99")));
    assert_eq!(ma["seed"], 99);
    assert_eq!(ma["config"]["training"]["seed"], 99);
    let losses = |m: &serde_json::Value| {
        m["report"]["steps"].as_array().unwrap().iter().map(|s| s["final_loss"].as_f64().unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(losses(&ma), losses(&mb));
}

#[test]
fn tau_that_does_not_divide_the_maturity_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &TINY.replace("tau = 0.1", "tau = 0.15"));
    let out = dir.path().join("run");
    let res = cli(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("tau"));
}

#[test]
fn unknown_keys_name_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &TINY.replace("width = 8", "width = 8\nwidht = 9"));
    let res = cli(&["solve", "--config", &cfg, "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("network.widht"));
}

#[test]
fn price_curve_columns_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = solve(dir.path(), TINY, None);
    let res = cli(&["price-curve", &run, "--t", "0.2", "--grid", "0:3:13"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "moneyness,price,intrinsic,time_value,resolved_t");
    let table = rows(&text);
    assert_eq!(table.len(), 13);
    assert!(table.windows(2).all(|w| w[1][0] > w[0][0]));
    // Every emitted field parses back to a value that prints identically.
    for line in text.lines().skip(1) {
        for field in line.split(',') {
            let v: f64 = field.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), field);
        }
    }
    // At m = 0 the price is the Softplus of a bounded network output.
    let cp = deep_imex::CheckpointF64::load_converting(&Path::new(&run).join("snapshots/u_00002.bin")).unwrap();
    let floor = deep_imex::scalar::softplus(cp.params.output_bound(), 1.0);
    assert!(table[0][1] >= 0.0 && table[0][3] <= floor);

    let res = cli(&["price-curve", &run, "--t", "0", "--grid", "0:3:13"]);
    for r in rows(&String::from_utf8(res.stdout).unwrap()) {
        assert_eq!(r[1], r[2]);
        assert_eq!(r[4], 0.0);
    }
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = solve(dir.path(), TINY, None);
    let csv_path = dir.path().join("cmp.csv");
    let res = cli(&["compare", &run, "--oracle", "model", "--out", csv_path.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "moneyness,model,oracle,abs_err");
    assert!(rows(&text).iter().all(|r| r[3] == 0.0));
    assert!(String::from_utf8_lossy(&res.stdout).contains("max_abs_err = 0"));

    // A barely trained network misses the series price by more than the default 5e-3.
    let res = cli(&["compare", &run, "--oracle", "merton-series"]);
    assert_eq!(res.status.code(), Some(3));

    let res = cli(&["compare", &run, "--oracle", "black-scholes"]);
    assert_eq!(res.status.code(), Some(2));
    let res = cli(&["compare", &run, "--oracle", "nope"]);
    assert_eq!(res.status.code(), Some(2));
    let res = cli(&["compare", dir.path().join("missing").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn dump_rule_writes_normalized_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", TINY);
    let res = cli(&["dump-rule", "--config", &cfg]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "weight,z1");
    let table = rows(&text);
    assert_eq!(table.len(), 5);
    assert!((table.iter().map(|r| r[0]).sum::<f64>() - 1.0).abs() < 1e-14);
}

#[test]
fn bad_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = solve(dir.path(), TINY, None);
    let res = cli(&["price-curve", &run, "--grid", "3:0:5"]);
    assert_eq!(res.status.code(), Some(2));
}
