use std::path::Path;
use std::process::Command;

use rare_abc::harness::{
    self, synthesize_data, Algorithm, ModelSpec, ReplicateManifest, RunConfig,
};
use rare_abc::models::GaussianModelConfig;
use rare_abc::outer::StopReason;

fn small_config(dir: &Path, algorithm: Algorithm) -> RunConfig {
    let model = ModelSpec::Gaussian(GaussianModelConfig::with_dim(2));
    let data = dir.join("y.csv");
    if !data.exists() {
        synthesize_data(&model, 11, &data).unwrap();
    }
    let mut cfg = RunConfig::new(algorithm, model, data);
    cfg.n_theta = 60;
    cfg.inner.n_u = 20;
    cfg.stop.eps_target = 1.0;
    cfg.mcmc.epsilon = 2.0;
    cfg.mcmc.iterations = 500;
    cfg.mcmc.burn_in = 100;
    cfg.replicates = 3;
    cfg.seed = 5;
    cfg.out = dir.join(algorithm.as_str());
    cfg
}

fn read_manifest(path: &Path) -> ReplicateManifest {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn replicates_are_distinct_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for alg in [Algorithm::AbcSmc, Algorithm::ReAbcSmc2, Algorithm::AbcMcmc] {
        let cfg = small_config(dir.path(), alg);
        let a = harness::run_experiment(&cfg).unwrap();
        assert!(a.all_succeeded(), "{alg}: {:?}", a.replicates.iter().map(|m| &m.error).collect::<Vec<_>>());
        assert_eq!(a.replicates.len(), 3);
        let files: Vec<Vec<u8>> = (0..3)
            .map(|r| std::fs::read(cfg.out.join(format!("rep-{r:03}/particles.csv"))).unwrap())
            .collect();
        assert_ne!(files[0], files[1]);
        assert_ne!(files[1], files[2]);

        let mut again = cfg.clone();
        again.out = dir.path().join(format!("{alg}-again"));
        harness::run_experiment(&again).unwrap();
        for r in 0..3 {
            let name = format!("rep-{r:03}/particles.csv");
            assert_eq!(std::fs::read(again.out.join(&name)).unwrap(), files[r], "{alg} replicate {r}");
        }
        let summary = std::fs::read_to_string(cfg.out.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 4);
    }
}

#[test]
fn budget_match_bounds_elapsed_time_and_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut reference = small_config(dir.path(), Algorithm::ReAbcSmc2);
    reference.replicates = 1;
    reference.n_theta = 400;
    reference.inner.n_u = 50;
    reference.stop.eps_target = 1e-6;
    reference.stop.min_acceptance = 0.0;
    reference.stop.budget_secs = Some(0.2);
    let r = harness::run_experiment(&reference).unwrap();
    let rm = &r.replicates[0];
    assert_eq!(rm.stop_reason, StopReason::Budget, "reference should hit its budget");

    let mut matched = small_config(dir.path(), Algorithm::AbcSmc);
    matched.n_theta = 2000;
    matched.replicates = 2;
    matched.stop.eps_target = 0.0;
    matched.budget_match = Some(reference.out.join("experiment.json"));
    let m = harness::run_experiment(&matched).unwrap();
    for rep in &m.replicates {
        assert_eq!(rep.budget_secs, Some(rm.elapsed_secs));
        // Stops within one step of the budget.
        let schedule = std::fs::read_to_string(matched.out.join(format!("rep-{:03}/schedule.csv", rep.replicate))).unwrap();
        let times: Vec<f64> = schedule
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        let before_last = if times.len() >= 2 { times[times.len() - 2] } else { 0.0 };
        assert!(rep.stop_reason != StopReason::Budget || before_last < rm.elapsed_secs);
    }

    // Regenerating from the manifest reproduces the particles without the clock.
    let manifest = reference.out.join("rep-000/manifest.json");
    let replay_dir = dir.path().join("replay");
    let replayed = harness::replay(&manifest, &replay_dir).unwrap();
    assert_eq!(replayed.steps, rm.steps);
    assert_eq!(
        std::fs::read(replay_dir.join("particles.csv")).unwrap(),
        std::fs::read(reference.out.join("rep-000/particles.csv")).unwrap()
    );
    let strip_time = |s: String| -> Vec<String> {
        s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    assert_eq!(
        strip_time(std::fs::read_to_string(replay_dir.join("schedule.csv")).unwrap()),
        strip_time(std::fs::read_to_string(reference.out.join("rep-000/schedule.csv")).unwrap())
    );
    assert_eq!(read_manifest(&replay_dir.join("manifest.json")).posterior_mean, rm.posterior_mean);
}

#[test]
fn summarize_orders_rows_and_rejects_mixed_models() {
    let dir = tempfile::tempdir().unwrap();
    let smc = small_config(dir.path(), Algorithm::AbcSmc);
    let re = small_config(dir.path(), Algorithm::ReAbcSmc2);
    harness::run_experiment(&smc).unwrap();
    harness::run_experiment(&re).unwrap();
    let paths = vec![re.out.clone(), smc.out.join("experiment.json")];
    let s = harness::summarize(&paths).unwrap();
    // sigma mean, final eps, evidence, elapsed, steps: 5 statistics x 6 replicates.
    assert_eq!(s.long.len(), 30);
    assert_eq!(s.long[0][..3], ["abc-smc", "0", "posterior_mean_sigma"]);
    assert_eq!(s.long[29][..3], ["re-abc-smc2", "2", "steps"]);
    let means = s.long.iter().filter(|r| r[2] == "posterior_mean_sigma").count();
    assert_eq!(means, 6);
    assert!(s.schedule.iter().all(|r| r.len() == 4));
    let again = harness::summarize(&paths).unwrap();
    assert_eq!(again, s);
    let (long, _) = harness::write_summary_files(&s, dir.path()).unwrap();
    assert!(std::fs::read_to_string(long).unwrap().starts_with("algorithm,replicate,statistic,value\n"));

    let other = dir.path().join("other");
    std::fs::create_dir_all(&other).unwrap();
    let mut mixed = small_config(&other, Algorithm::AbcSmc);
    mixed.model = ModelSpec::Gaussian(GaussianModelConfig {
        prior_upper: 20.0,
        ..GaussianModelConfig::with_dim(2)
    });
    mixed.replicates = 1;
    mixed.data = other.join("y2.csv");
    synthesize_data(&mixed.model, 12, &mixed.data).unwrap();
    harness::run_experiment(&mixed).unwrap();
    let err = harness::summarize(&[smc.out.clone(), mixed.out.clone()]).unwrap_err().to_string();
    assert!(err.contains("model"), "{err}");
    assert!(err.contains("data_sha256"), "{err}");
}

#[test]
fn cli_round_trip_and_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_rare-abc");
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Algorithm::AbcSmc);
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let data = dir.path().join("g.txt");
    let status = Command::new(bin)
        .args(["synthesize", "--preset", "graph-small", "--seed", "3", "--out"])
        .arg(&data)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(std::fs::read_to_string(&data).unwrap().starts_with("nodes 40\n"));

    let out = dir.path().join("cli-run");
    let status = Command::new(bin)
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--replicates", "2", "--seed", "9", "--workers", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("rep-001/manifest.json").exists());

    let status = Command::new(bin)
        .args(["summarize", "--out"])
        .arg(dir.path())
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("schedule_long.csv").exists());

    // A replicate that cannot start (no prior draw within tolerance) fails the run.
    let mut failing = cfg.clone();
    failing.algorithm = Algorithm::AbcMcmc;
    failing.mcmc.epsilon = 0.0;
    failing.mcmc.max_init = 10;
    failing.replicates = 1;
    failing.out = dir.path().join("failing");
    let fail_path = dir.path().join("fail.json");
    std::fs::write(&fail_path, serde_json::to_string(&failing).unwrap()).unwrap();
    let status = Command::new(bin).args(["run", "--config"]).arg(&fail_path).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let summary = std::fs::read_to_string(failing.out.join("summary.csv")).unwrap();
    assert!(summary.contains("failed"));

    let status = Command::new(bin).args(["run", "--preset", "no-such-preset"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}
