use deep_imex::config::RunConfig;
use deep_imex::oracle::QmcConfig;
use deep_imex::run::{solve_to_dir, LoadedRun, Oracle, RunManifest};
use deep_imex::Error;

const TINY: &str = r#"
[model]
d = 2
sigma = 0.5
rho = 0.3
r = 0.05
lambda = 1.0
mu_j = 0.0
sigma_j = 0.5
rho_j = 0.2

[network]
layers = 1
width = 8

[scheme]
tau = 0.1
maturity = 0.3

[training]
epochs_init = 32
epochs_first = 8
epochs_step = 4
samples_per_epoch = 128
init_samples = 128
batch = 64
face_samples = 8
seed = 5

[oracle]
paths = 4096
replicates = 4
"#;

fn solved(text: &str) -> (tempfile::TempDir, RunManifest) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml(text).unwrap();
    let manifest = solve_to_dir(&cfg, dir.path(), false).unwrap();
    (dir, manifest)
}

#[test]
fn run_directory_lists_every_snapshot() {
    let (dir, manifest) = solved(TINY);
    assert_eq!(manifest.checkpoints.len(), 4);
    assert!(manifest.surrogates.is_empty());
    assert_eq!(manifest.seed, 5);
    for (k, entry) in manifest.checkpoints.iter().enumerate() {
        assert_eq!(entry.k, k);
        assert!(dir.path().join(&entry.path).is_file());
    }
    assert_eq!(RunManifest::load(dir.path()).unwrap(), manifest);
    let echo = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(RunConfig::from_toml(&echo).unwrap(), manifest.config);
}

#[test]
fn reruns_with_the_same_seed_match() {
    let (_a, first) = solved(TINY);
    let (_b, second) = solved(TINY);
    let losses = |m: &RunManifest| m.report.steps.iter().map(|s| (s.first_loss, s.final_loss)).collect::<Vec<_>>();
    assert_eq!(losses(&first), losses(&second));
    assert_eq!(first.report.init.final_loss, second.report.init.final_loss);
}

#[test]
fn surrogate_runs_store_their_surrogates() {
    let text = TINY.replace(
        "[training]",
        "[quadrature]\nmethod = \"ann\"\n\n[quadrature.surrogate]\nepochs = 8\nwarm_epochs = 2\nsamples = 64\njump_draws = 2\nwidth = 8\nlayers = 1\n\n[training]",
    );
    let (dir, manifest) = solved(&text);
    let ks: Vec<usize> = manifest.surrogates.iter().map(|s| s.k).collect();
    assert_eq!(ks, vec![0, 1, 2]);
    assert!(manifest.surrogates.iter().all(|s| dir.path().join(&s.path).is_file()));
}

#[test]
fn price_curves_resolve_the_nearest_checkpoint() {
    let (dir, _) = solved(TINY);
    let run = LoadedRun::open(dir.path()).unwrap();
    let grid: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();

    let at_zero = run.price_curve(0.0, &grid).unwrap();
    for row in &at_zero {
        assert_eq!(row.resolved_t, 0.0);
        assert_eq!(row.price, row.intrinsic);
        assert_eq!(row.time_value, 0.0);
    }

    let rows = run.price_curve(0.26, &grid).unwrap();
    assert!(rows.iter().all(|r| (r.resolved_t - 0.3).abs() < 1e-12));
    assert!(rows.windows(2).all(|w| w[1].moneyness > w[0].moneyness));
    // The network part is a Softplus, so the time value is never negative.
    assert!(rows.iter().all(|r| r.time_value >= 0.0));

    assert!(matches!(run.price_curve(0.31, &grid), Err(Error::Config { .. })));
    assert!(matches!(run.price_curve(-0.1, &grid), Err(Error::Config { .. })));
}

#[test]
fn self_comparison_has_no_error() {
    let (dir, _) = solved(TINY);
    let run = LoadedRun::open(dir.path()).unwrap();
    let grid = [0.5, 1.0, 1.5];
    let cmp = run.compare(0.3, &grid, Oracle::Model, &QmcConfig::default()).unwrap();
    assert!(cmp.rows.iter().all(|r| r.abs_err == 0.0));
    assert!(cmp.within_tolerance());
}

#[test]
fn one_asset_oracles_reject_baskets() {
    let (dir, _) = solved(TINY);
    let run = LoadedRun::open(dir.path()).unwrap();
    for oracle in [Oracle::MertonSeries, Oracle::BlackScholes] {
        match run.compare(0.3, &[1.0], oracle, &QmcConfig::default()) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "oracle"),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn qmc_comparison_reports_its_error_proxy() {
    let (dir, manifest) = solved(TINY);
    let run = LoadedRun::open(dir.path()).unwrap();
    let cmp = run.compare(0.3, &[1.0], Oracle::Qmc, &manifest.config.oracle.qmc()).unwrap();
    assert_eq!(cmp.rows.len(), 1);
    assert!(cmp.oracle_error > 0.0 && cmp.oracle_error < 1e-2);
    assert!(cmp.rows[0].oracle > 0.1 && cmp.rows[0].oracle < 0.2);
}

#[test]
fn double_precision_runs_load_too() {
    let text = TINY.replace("seed = 5", "seed = 5\nprecision = \"f64\"");
    let (dir, manifest) = solved(&text);
    let run = LoadedRun::open(dir.path()).unwrap();
    let cp = run.checkpoint(0.3).unwrap();
    assert_eq!(cp.k, manifest.checkpoints.len() - 1);
}
