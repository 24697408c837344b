//! Experiment harness: seeded training runs, sweeps, policy evaluation,
//! automaton cross-checks and PRISM export, with CSV outputs.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{default_sweep, Algorithm, ConfigError, ExperimentConfig, SweepAxis, SweepKey};

use crate::automata::{bundled, load_bundled, load_ldba, AutomatonError, Ldba};
use crate::envs::{builtin, load_grid, EnvError, LabeledMdp};
use crate::learn::{train, Hyperparams, LearnError};
use crate::ltl::{lasso_satisfies, parse_ltl, random_lasso, LassoWord, LtlFormula, ParseError};
use crate::mc::{
    buchi_probability, expected_discounted_reward, export_prism, induce_dtmc, Dtmc, McError,
    PolicyEvaluator,
};
use crate::product::{
    state_cap, CollapsedPolicy, PolicyFileError, Product, ProductError, RewardStructure,
};

/// Longest stem and loop of the lassos drawn by the oracle check.
pub const ORACLE_MAX_STEM: usize = 6;
pub const ORACLE_MAX_LOOP: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("formula: {0}")]
    Formula(#[from] ParseError),
    #[error(transparent)]
    Policy(#[from] PolicyFileError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A built-in environment name, or else a grid file.
pub fn load_env(spec: &str) -> Result<LabeledMdp, CliError> {
    match builtin(spec) {
        Ok(m) => Ok(m),
        Err(EnvError::UnknownBuiltin(_)) if Path::new(spec).exists() => {
            Ok(load_grid(&read(Path::new(spec))?)?)
        }
        Err(e) => Err(e.into()),
    }
}

/// A bundled automaton name, or else an automaton file.
pub fn load_automaton(spec: &str) -> Result<Ldba, CliError> {
    if bundled(spec).is_ok() {
        return Ok(load_bundled(spec)?);
    }
    if Path::new(spec).exists() {
        return Ok(load_ldba(&read(Path::new(spec))?)?);
    }
    Ok(load_bundled(spec)?)
}

/// Rewards implied by the configuration; `CF` has no counter.
pub fn reward_structure(cfg: &ExperimentConfig) -> Result<RewardStructure, CliError> {
    Ok(match cfg.algorithm {
        Algorithm::Cf => RewardStructure::constant(cfg.u, cfg.gamma)?,
        _ => RewardStructure::from_schedule(cfg.reward_schedule, cfg.k, cfg.u, cfg.gamma)?,
    })
}

pub fn build_product(cfg: &ExperimentConfig) -> Result<Product, CliError> {
    Ok(Product::new(
        load_env(&cfg.env)?,
        load_automaton(&cfg.automaton)?,
        reward_structure(cfg)?,
    ))
}

pub fn hyperparams(cfg: &ExperimentConfig) -> Hyperparams {
    Hyperparams {
        alpha: cfg.alpha,
        epsilon: cfg.epsilon,
        episodes: cfg.episodes,
        max_steps: cfg.max_steps,
        eval_interval: cfg.eval_interval,
        counterfactual: cfg.algorithm.counterfactual(),
        verify_transitions: false,
    }
}

/// Outcome of one seeded training run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config_hash: u64,
    pub seed: u64,
    pub curve: Vec<(u64, f64)>,
    pub final_satisfaction: f64,
    pub optimal: f64,
    pub steps: u64,
    pub wallclock_secs: f64,
    /// Greedy policy at the end of training.
    pub policy: CollapsedPolicy,
}

impl RunRecord {
    /// First evaluated step at which satisfaction reached `threshold`.
    pub fn steps_to_reach(&self, threshold: f64) -> Option<u64> {
        self.curve
            .iter()
            .find(|&&(_, p)| p >= threshold)
            .map(|&(s, _)| s)
    }

    /// Satisfaction at `step`: the latest evaluation at or before it, or the
    /// final value once the run has ended.
    pub fn satisfaction_at(&self, step: u64) -> f64 {
        if step > self.steps {
            return self.final_satisfaction;
        }
        match self.curve.partition_point(|&(s, _)| s <= step) {
            0 => 0.0,
            i => self.curve[i - 1].1,
        }
    }
}

/// Trains one run per seed in parallel; records come back in seed-list order.
pub fn train_runs(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, CliError> {
    cfg.validate()?;
    let product = build_product(cfg)?;
    check_cap(&product)?;
    let evaluator = PolicyEvaluator::new(&product)?;
    let optimal = evaluator.optimal()?;
    let hp = hyperparams(cfg);
    let hash = cfg.hash();
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let r = train(&product, &hp, seed, Some(&evaluator))?;
            Ok(RunRecord {
                config_hash: hash,
                seed,
                curve: r.curve,
                final_satisfaction: r.final_satisfaction.unwrap_or(0.0),
                optimal,
                steps: r.steps,
                wallclock_secs: r.wallclock_secs,
                policy: r.policy,
            })
        })
        .collect()
}

fn check_cap(product: &Product) -> Result<(), CliError> {
    product.enumerate_with_cap(state_cap())?;
    Ok(())
}

/// Shortest text that parses back to the same `f64`.
fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn curve_csv(r: &RunRecord) -> String {
    let mut out = String::from("step,satisfaction_probability\n");
    for &(step, p) in &r.curve {
        writeln!(out, "{step},{}", fmt_f64(p)).unwrap();
    }
    out
}

pub fn summary_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("seed,final_satisfaction,optimal,steps,config_hash\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{:016x}",
            r.seed,
            fmt_f64(r.final_satisfaction),
            fmt_f64(r.optimal),
            r.steps,
            r.config_hash
        )
        .unwrap();
    }
    out
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Per-step statistics across runs: median, quartiles, mean and half the
/// standard deviation. Runs that stopped early contribute their final value.
pub fn aggregate_csv(records: &[RunRecord]) -> String {
    let mut steps: Vec<u64> = records
        .iter()
        .flat_map(|r| r.curve.iter().map(|&(s, _)| s))
        .collect();
    steps.sort_unstable();
    steps.dedup();
    let mut out = String::from("step,median,q1,q3,mean,half_std\n");
    for step in steps {
        let mut v: Vec<f64> = records.iter().map(|r| r.satisfaction_at(step)).collect();
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        writeln!(
            out,
            "{step},{},{},{},{},{}",
            fmt_f64(quantile(&v, 0.5)),
            fmt_f64(quantile(&v, 0.25)),
            fmt_f64(quantile(&v, 0.75)),
            fmt_f64(mean),
            fmt_f64(var.sqrt() / 2.0)
        )
        .unwrap();
    }
    out
}

/// Runs every seed and writes `curve_<seed>.csv`, `policy_<seed>.txt`,
/// `summary.csv`, `aggregate.csv` and the resolved `config.txt` into `out`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunRecord>, CliError> {
    let records = train_runs(cfg)?;
    let product = build_product(cfg)?;
    for r in &records {
        write(&out.join(format!("curve_{}.csv", r.seed)), &curve_csv(r))?;
        write(
            &out.join(format!("policy_{}.txt", r.seed)),
            &r.policy.to_text(&product),
        )?;
    }
    write(&out.join("summary.csv"), &summary_csv(&records))?;
    write(&out.join("aggregate.csv"), &aggregate_csv(&records))?;
    write(&out.join("config.txt"), &cfg.to_text())?;
    Ok(records)
}

/// Aggregate of one sweep point.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub name: String,
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
}

impl SweepPoint {
    pub fn final_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.final_satisfaction).collect()
    }

    pub fn median_final(&self) -> f64 {
        median(&self.final_values())
    }

    pub fn iqr(&self) -> f64 {
        let mut v = self.final_values();
        v.sort_by(f64::total_cmp);
        quantile(&v, 0.75) - quantile(&v, 0.25)
    }
}

/// The configured point followed by every axis value that differs from it.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let axes = if cfg.sweep.is_empty() {
        default_sweep()
    } else {
        cfg.sweep.clone()
    };
    let mut base = cfg.clone();
    base.sweep.clear();
    let mut points = vec![("default".to_string(), base.clone())];
    for axis in axes {
        for v in axis.values {
            let mut c = base.clone();
            c.apply(axis.key, v);
            if c != base {
                points.push((format!("{}={v}", axis.key.name()), c));
            }
        }
    }
    points
}

pub fn sweep_runs(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, CliError> {
    sweep_points(cfg)
        .into_par_iter()
        .map(|(name, config)| {
            let records = train_runs(&config)?;
            Ok(SweepPoint {
                name,
                config,
                records,
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("point,median_final_satisfaction,iqr\n");
    for p in points {
        writeln!(
            out,
            "{},{},{}",
            p.name,
            fmt_f64(p.median_final()),
            fmt_f64(p.iqr())
        )
        .unwrap();
    }
    out
}

/// Runs the sweep grid and writes `sweep.csv` into `out`.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SweepPoint>, CliError> {
    let points = sweep_runs(cfg)?;
    write(&out.join("sweep.csv"), &sweep_csv(&points))?;
    Ok(points)
}

/// The three numbers reported for a fixed policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub satisfaction: f64,
    pub discounted_reward: f64,
    pub optimal: f64,
}

/// The policy's induced chain on the configured (counter-graded) product.
pub fn policy_dtmc(product: &Product, policy: &CollapsedPolicy) -> Result<Dtmc, CliError> {
    let explicit = product.enumerate_with_cap(state_cap())?;
    Ok(induce_dtmc(&explicit, product, |st| policy.action(st))?)
}

pub fn evaluate_policy(
    product: &Product,
    policy: &CollapsedPolicy,
) -> Result<EvalReport, CliError> {
    let d = policy_dtmc(product, policy)?;
    Ok(EvalReport {
        satisfaction: buchi_probability(&d)?.init,
        discounted_reward: expected_discounted_reward(&d)?.init,
        optimal: PolicyEvaluator::new(product)?.optimal()?,
    })
}

fn load_policy(cfg: &ExperimentConfig, product: &Product) -> Result<CollapsedPolicy, CliError> {
    let path = cfg
        .policy
        .as_ref()
        .ok_or_else(|| CliError::Usage("the config sets no `policy` file".into()))?;
    Ok(CollapsedPolicy::parse(&read(path)?, product)?)
}

pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<EvalReport, CliError> {
    let product = build_product(cfg)?;
    let policy = load_policy(cfg, &product)?;
    evaluate_policy(&product, &policy)
}

/// Exports the policy's induced chain to `out/model.prism` and returns the path.
pub fn cmd_export_prism(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let product = build_product(cfg)?;
    let policy = load_policy(cfg, &product)?;
    let path = out.join("model.prism");
    write(&path, &export_prism(&policy_dtmc(&product, &policy)?))?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub samples: usize,
    pub agreements: usize,
    /// Lassos on which the automaton and the formula disagree.
    pub disagreements: Vec<LassoWord>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Compares automaton acceptance with formula satisfaction on random lassos
/// over the automaton's alphabet.
pub fn oracle_check(ldba: &Ldba, formula: &LtlFormula, samples: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        samples,
        agreements: 0,
        disagreements: Vec::new(),
    };
    for _ in 0..samples {
        let w = random_lasso(ldba.alphabet(), ORACLE_MAX_STEM, ORACLE_MAX_LOOP, &mut rng);
        if ldba.accepts_lasso(&w) == lasso_satisfies(formula, ldba.alphabet(), &w) {
            report.agreements += 1;
        } else {
            report.disagreements.push(w);
        }
    }
    report
}

pub fn cmd_oracle_check(cfg: &ExperimentConfig) -> Result<OracleReport, CliError> {
    let ldba = load_automaton(&cfg.automaton)?;
    let text = match &cfg.formula {
        Some(f) => f.clone(),
        None => bundled(&cfg.automaton)
            .map(|b| b.formula.to_string())
            .map_err(|_| {
                CliError::Usage("the config sets no `formula` for this automaton".into())
            })?,
    };
    let formula = parse_ltl(&text)?;
    Ok(oracle_check(&ldba, &formula, cfg.samples, cfg.oracle_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::Letter;

    fn record(curve: Vec<(u64, f64)>, steps: u64, fin: f64) -> RunRecord {
        RunRecord {
            config_hash: 0,
            seed: 0,
            curve,
            final_satisfaction: fin,
            optimal: 1.0,
            steps,
            wallclock_secs: 0.0,
            policy: CollapsedPolicy::new(1, 1),
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn aggregate_carries_final_values() {
        let a = record(vec![(10, 0.5), (20, 0.7)], 25, 0.8);
        let b = record(vec![(10, 0.1)], 15, 0.3);
        let csv = aggregate_csv(&[a.clone(), b]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,median,q1,q3,mean,half_std");
        let row: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
        for (got, want) in row.iter().zip([10.0, 0.3, 0.2, 0.4, 0.3, 0.1]) {
            assert!((got - want).abs() < 1e-12, "{}", lines[1]);
        }
        // `b` ended at step 15 with 0.3.
        assert!(lines[2].starts_with("20,0.5,"), "{}", lines[2]);
        assert_eq!(a.steps_to_reach(0.6), Some(20));
        assert_eq!(a.steps_to_reach(0.9), None);
        assert_eq!(a.satisfaction_at(5), 0.0);
        assert_eq!(
            curve_csv(&a),
            "step,satisfaction_probability\n10,0.5\n20,0.7\n"
        );
    }

    #[test]
    fn sweep_points_skip_duplicates_of_default() {
        let cfg = ExperimentConfig::default();
        let names: Vec<String> = sweep_points(&cfg).into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "default",
                "U=0.01",
                "U=0.5",
                "gamma=0.9",
                "gamma=0.995",
                "K=5",
                "K=20"
            ]
        );
    }

    #[test]
    fn oracle_check_flags_corruption() {
        let ldba = load_bundled("fga_gnc").unwrap();
        let f = parse_ltl(bundled("fga_gnc").unwrap().formula).unwrap();
        let ok = oracle_check(&ldba, &f, 300, 1);
        assert!(ok.passed());
        assert_eq!(ok.agreements, 300);
        let empty = oracle_check(&ldba, &f, 0, 1);
        assert!(empty.passed() && empty.samples == 0);
        // Send the accepting state's `{a}` self-loop to the initial state.
        let acc = ldba.accepting_states()[0];
        let a = Letter(1);
        let target = ldba.step(acc, a).unwrap();
        let broken = ldba.with_edge_redirected(acc, a, Some(if target == 0 { 1 } else { 0 }));
        assert!(!oracle_check(&broken, &f, 500, 1).passed());
    }

    #[test]
    fn eval_rejects_missing_policy() {
        let cfg = ExperimentConfig::default();
        assert!(matches!(cmd_eval(&cfg), Err(CliError::Usage(_))));
    }

    #[test]
    fn file_inputs_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let grid = dir.path().join("g.grid");
        fs::write(&grid, crate::envs::PROB_GATE_GRID).unwrap();
        let m = load_env(grid.to_str().unwrap()).unwrap();
        assert_eq!(m.num_states(), 40);
        let aut = dir.path().join("a.ldba");
        fs::write(&aut, load_bundled("fga_gnc").unwrap().to_text()).unwrap();
        assert_eq!(
            load_automaton(aut.to_str().unwrap()).unwrap(),
            load_bundled("fga_gnc").unwrap()
        );
        assert!(load_env("nowhere").is_err());
        assert!(load_automaton("nowhere").is_err());
    }
}
