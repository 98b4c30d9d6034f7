use std::collections::BTreeMap;
use std::path::Path;

use mpdp_experiments::harness::config::{EnvSpec, PlannerSpec};
use mpdp_experiments::harness::{
    emit_csv, read_csv, run_sweep_with, run_trial, summary_path, ExperimentConfig, RegretReport, TrialRow,
};
use mpdp_experiments::Error;
use proptest::prelude::*;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

const RANDOM_ENV: &str = r#"
[env]
type = "random"
num_states = 3
num_actions = 2
horizon = 12
mixing_floor = 0.3
"#;

fn random_with(planner: &str, extra: &str, trials: usize) -> ExperimentConfig {
    config(&format!("name = \"t\"\nseed = 7\ntrials = {trials}\n{RANDOM_ENV}\n[planner]\n{planner}\n{extra}"))
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 9);
}

#[test]
fn optimal_planner_has_zero_regret() {
    let report = run_sweep_with(&random_with("kind = \"optimal\"", "", 10), 2).unwrap();
    assert!(report.rows.iter().all(|r| r.regret.abs() <= 1e-9));
}

#[test]
fn full_look_ahead_has_zero_regret() {
    let report = run_sweep_with(&random_with("kind = \"mpdp\"\nk = 12", "", 10), 2).unwrap();
    assert!(report.rows.iter().all(|r| r.regret.abs() <= 1e-9));
}

#[test]
fn counterexample_regret_is_half_the_gap() {
    let cfg = config(
        "name = \"c\"\nseed = 3\ntrials = 400\n[env]\ntype = \"counterexample\"\nhorizon = 30\n[planner]\nkind = \"mpdp\"\nk = 5\n",
    );
    let report = run_sweep_with(&cfg, 2).unwrap();
    let s = &report.summaries[0];
    let want = (30.0 - 5.0 - 1.0) / 2.0;
    assert!(s.ci95_low <= want && want <= s.ci95_high, "{s:?}");
    assert!(report.rows.iter().all(|r| r.regret == 0.0 || r.regret == 24.0));
}

#[test]
fn certified_bound_dominates_exact_regret() {
    let cfg = random_with(
        "kind = \"mpdp\"\nk = 0",
        "[sweep]\nparameter = \"k\"\nvalues = [0, 1, 2, 3, 5, 8, 12]\n[analysis]\nj = 1\n",
        8,
    );
    let report = run_sweep_with(&cfg, 2).unwrap();
    for r in &report.rows {
        let bound = r.bound.expect("certified instance has a bound");
        assert!(r.regret <= bound + 1e-9, "{r:?}");
    }
}

#[test]
fn monte_carlo_agrees_with_exact_evaluation() {
    let base = |mode: &str, trials: usize| {
        config(&format!(
            "name = \"m\"\nseed = 5\ntrials = {trials}\n[env]\ntype = \"random\"\nnum_states = 4\nnum_actions = 2\n\
             horizon = 15\nmixing_floor = 0.2\ninstance_seed = 99\n[planner]\nkind = \"random\"\nseed = 1\n\
             [evaluation]\nmode = \"{mode}\"\n"
        ))
    };
    let exact = run_sweep_with(&base("exact", 1), 1).unwrap().summaries[0].mean;
    let mc = run_sweep_with(&base("monte_carlo", 3000), 2).unwrap();
    let s = &mc.summaries[0];
    let se = s.std / (s.trials as f64).sqrt();
    assert!((s.mean - exact).abs() <= 3.0 * se, "mc {} exact {exact} se {se}", s.mean);
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let cfg = random_with(
        "kind = \"mpdp\"\nk = 2",
        "[forecast]\nmode = \"perturbed\"\neps_const = 0.05\ndelta_const = 0.1\n\
         [sweep]\nparameter = \"k\"\nvalues = [1, 2, 4]\n",
        12,
    );
    let dir = tempfile::tempdir().unwrap();
    let mut texts = vec![];
    for (i, workers) in [1, 3, 1].into_iter().enumerate() {
        let path = dir.path().join(format!("r{i}.csv"));
        emit_csv(&run_sweep_with(&cfg, workers).unwrap(), &path).unwrap();
        texts.push((std::fs::read(&path).unwrap(), std::fs::read(summary_path(&path)).unwrap()));
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[0], texts[2]);
}

#[test]
fn run_trial_matches_the_sweep_row() {
    let cfg = random_with(
        "kind = \"mpdp\"\nk = 2",
        "[forecast]\nmode = \"perturbed\"\neps_const = 0.05\n[sweep]\nparameter = \"k\"\nvalues = [1, 3]\n",
        4,
    );
    let report = run_sweep_with(&cfg, 1).unwrap();
    let row = run_trial(&cfg, 1, 2).unwrap();
    let want = &report.rows[4 + 2];
    assert_eq!((row.trial, row.sweep_value, row.seed), (want.trial, want.sweep_value, want.seed));
    assert_eq!(row.achieved_value.to_bits(), want.achieved_value.to_bits());
}

fn row(trial: usize, value: Option<f64>, regret: f64, bound: Option<f64>) -> TrialRow {
    TrialRow {
        trial,
        sweep_value: value,
        regret,
        optimal_value: 10.0 + regret,
        achieved_value: 10.0,
        bound,
        seed: 1234567890123 + trial as u64,
        wall_time: 0.0,
        metrics: BTreeMap::new(),
    }
}

#[test]
fn empty_report_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/empty.csv");
    emit_csv(&RegretReport::default(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "trial,sweep_value,regret,optimal_value,achieved_value,bound,seed\n");
    assert!(summary_path(&path).ends_with("nested/empty.summary.csv"));
}

#[test]
fn two_trials_give_three_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("two.csv");
    let report = RegretReport::from_rows(vec![row(0, Some(2.0), 0.5, None), row(1, Some(2.0), 1.5, Some(3.0))]);
    emit_csv(&report, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.lines().nth(1).unwrap(), "0,2,0.5,10.5,10,,1234567890123");
    let s = &report.summaries[0];
    assert_eq!(s.mean, 1.0);
    assert!((s.std - 0.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(s.bound, Some(3.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn csv_round_trip(
        rows in proptest::collection::vec(
            (0usize..3, -1e3f64..1e3, proptest::option::of(0.0f64..1e6), any::<u64>(), -1e-3f64..50.0),
            0..20,
        )
    ) {
        let rows: Vec<TrialRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (p, regret, bound, seed, achieved))| TrialRow {
                trial: i,
                sweep_value: if p == 0 { None } else { Some(p as f64 * 0.1) },
                regret,
                optimal_value: achieved + regret,
                achieved_value: achieved,
                bound,
                seed,
                wall_time: 0.0,
                metrics: BTreeMap::new(),
            })
            .collect();
        let report = RegretReport::from_rows(rows);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_csv(&report, &path).unwrap();
        let back = read_csv(&path).unwrap();
        prop_assert_eq!(back.rows.len(), report.rows.len());
        for (a, b) in back.rows.iter().zip(&report.rows) {
            prop_assert_eq!(a.seed, b.seed);
            prop_assert_eq!(a.sweep_value, b.sweep_value);
            prop_assert_eq!(a.bound, b.bound);
            prop_assert!((a.regret - b.regret).abs() <= 1e-12);
            prop_assert!((a.achieved_value - b.achieved_value).abs() <= 1e-12);
        }
        prop_assert_eq!(back.summaries.len(), report.summaries.len());
    }

    #[test]
    fn exact_regret_is_never_negative(seed in 0u64..1000, policy in 0u64..50, k in 0usize..4) {
        let planner = if policy % 2 == 0 { format!("kind = \"random\"\nseed = {policy}") } else { format!("kind = \"mpdp\"\nk = {k}") };
        let cfg = config(&format!(
            "name = \"p\"\nseed = {seed}\ntrials = 2\n{RANDOM_ENV}\n[forecast]\nmode = \"perturbed\"\neps_const = 0.1\ndelta_const = 0.2\n[planner]\n{planner}\n"
        ));
        for r in run_sweep_with(&cfg, 1).unwrap().rows {
            prop_assert!(r.regret >= -1e-9);
        }
    }
}

#[test]
fn config_errors_are_reported() {
    let bad = |text: &str| matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_)));
    let planner = "[planner]\nkind = \"mpdp\"\nk = 1\n";
    assert!(bad(&format!("name = \"x\"\ntrials = 0\n{RANDOM_ENV}{planner}")));
    assert!(bad(&format!("name = \"x\"\n{RANDOM_ENV}{planner}[sweep]\nparameter = \"k\"\nvalues = []\n")));
    assert!(bad(&format!("name = \"x\"\n{RANDOM_ENV}{planner}[sweep]\nparameter = \"threshold\"\nvalues = [1]\n")));
    assert!(bad(&format!("name = \"x\"\n{RANDOM_ENV}{planner}[sweep]\nparameter = \"k\"\nvalues = [1.5]\n")));
    assert!(bad(&format!("name = \"x\"\nbogus = 1\n{RANDOM_ENV}{planner}")));
    assert!(bad(&format!("name = \"x\"\n{RANDOM_ENV}{planner}[forecast]\nmode = \"parametric\"\nsigma = 1.0\n")));
    let ok = config(&format!("name = \"x\"\n{RANDOM_ENV}{planner}"));
    assert!(matches!(ok.env, EnvSpec::Random(_)));
    assert_eq!(ok.planner, PlannerSpec::Mpdp { k: 1 });
    assert_eq!(ok.trials, 1);
}

#[test]
fn baselines_on_the_wrong_environment_fail_the_run() {
    let cfg = random_with("kind = \"sllf\"", "", 1);
    assert!(matches!(run_sweep_with(&cfg, 1), Err(Error::TypeMismatch(_))));
}

#[test]
fn ev_runs_report_the_low_price_share() {
    let cfg = config(
        "name = \"e\"\nseed = 1\ntrials = 3\n[env]\ntype = \"ev\"\nhorizon = 24\n\
         arrival_process = { arrival_prob = 0.3, max_slack = 6 }\n[planner]\nkind = \"sllf\"\n",
    );
    let report = run_sweep_with(&cfg, 1).unwrap();
    for r in &report.rows {
        let f = r.metrics["low_price_fraction"];
        assert!((0.0..=1.0).contains(&f));
        assert!(r.regret >= -1e-9);
    }
    assert!(report.summaries[0].metrics.contains_key("energy"));
}
