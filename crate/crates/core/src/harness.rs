//! Experiment harness: policy x environment simulation with repetitions,
//! checkpointed pseudo-regret traces, aggregation, and growth-shape fits.
//!
//! Every (policy, repetition) cell owns an RNG stream derived from the
//! master seed, so traces are bit-identical regardless of how the cells
//! are scheduled across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{
    import_replay, make_phased_adversarial, make_stochastic, EnvironmentModel,
};
use crate::error::{Error, Result};
use crate::policy::{build_policy, PolicySpec};
use crate::rng::{stream_rng, NS_ENVIRONMENT, NS_POLICY, NS_REPLAY};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

fn default_growth() -> f64 {
    1.6
}

fn default_true() -> bool {
    true
}

fn default_checkpoints() -> usize {
    200
}

/// Environment description as written in experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvSpec {
    /// One of: stochastic, phased_adversarial, replay.
    pub kind: String,
    #[serde(default)]
    pub d: Option<usize>,
    pub m: usize,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_growth")]
    pub growth: f64,
    /// Phased instance: fix one realized loss sequence and replay it for
    /// every repetition (the experiment protocol's default).
    #[serde(default = "default_true")]
    pub replay: bool,
    /// Seed for fixing the replay sequence; derived from the master seed
    /// when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Replay kind: path of the binary loss-matrix file.
    #[serde(default)]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSpec {
    pub horizon: u64,
    pub repetitions: u32,
    pub master_seed: u64,
    /// Number of log-spaced checkpoints (deduplicated).
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvSpec,
    pub policies: Vec<PolicySpec>,
    pub run: RunSpec,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run.horizon < 1 {
            return Err(Error::config("horizon must be at least 1".to_string()));
        }
        if self.run.repetitions < 1 {
            return Err(Error::config("need at least one repetition".to_string()));
        }
        if self.run.checkpoints < 1 {
            return Err(Error::config("need at least one checkpoint".to_string()));
        }
        if self.policies.is_empty() {
            return Err(Error::config("need at least one policy".to_string()));
        }
        match self.environment.kind.as_str() {
            "stochastic" | "phased_adversarial" => {
                if self.environment.d.is_none() || self.environment.delta.is_none() {
                    return Err(Error::config(format!(
                        "environment kind '{}' needs d and delta",
                        self.environment.kind
                    )));
                }
            }
            "replay" => {
                if self.environment.path.is_none() {
                    return Err(Error::config("replay environment needs a path".to_string()));
                }
            }
            other => {
                return Err(Error::config(format!("unknown environment kind '{other}'")));
            }
        }
        Ok(())
    }
}

/// Builds (and for phased replay, realizes) the environment of a config.
pub fn build_environment(config: &ExperimentConfig) -> Result<EnvironmentModel> {
    let spec = &config.environment;
    let horizon = config.run.horizon;
    match spec.kind.as_str() {
        "stochastic" => make_stochastic(
            spec.d.ok_or_else(|| Error::config("missing d".into()))?,
            spec.m,
            spec.delta.ok_or_else(|| Error::config("missing delta".into()))?,
        ),
        "phased_adversarial" => {
            let mut env = make_phased_adversarial(
                spec.d.ok_or_else(|| Error::config("missing d".into()))?,
                spec.m,
                spec.delta.ok_or_else(|| Error::config("missing delta".into()))?,
                spec.growth,
                horizon,
            )?;
            if spec.replay {
                let seed = spec.seed.unwrap_or(config.run.master_seed);
                env.realize_replay(&mut stream_rng(seed, NS_REPLAY, 0, 0))?;
            }
            Ok(env)
        }
        "replay" => {
            let path = spec.path.as_ref().unwrap();
            let env = import_replay(std::path::Path::new(path), spec.m)?;
            if horizon > env.horizon() {
                return Err(Error::config(format!(
                    "horizon {horizon} exceeds replay length {}",
                    env.horizon()
                )));
            }
            Ok(env)
        }
        other => Err(Error::config(format!("unknown environment kind '{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// Checkpointed cumulative pseudo-regret of one (policy, repetition) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub policy: String,
    pub rep: u32,
    /// (round, cumulative pseudo-regret), strictly increasing in round.
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone)]
pub struct TraceFailure {
    pub policy: String,
    pub rep: u32,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub traces: Vec<RegretTrace>,
    pub failures: Vec<TraceFailure>,
}

/// Log-spaced checkpoint grid: `count` points from 1 to `horizon`
/// (deduplicated, last one exactly the horizon).
pub fn checkpoint_grid(horizon: u64, count: usize) -> Vec<u64> {
    if horizon <= 1 || count <= 1 {
        return vec![horizon.max(1)];
    }
    let h = horizon as f64;
    let mut pts: Vec<u64> = (0..count)
        .map(|j| {
            let x = h.powf(j as f64 / (count - 1) as f64);
            (x.round() as u64).clamp(1, horizon)
        })
        .collect();
    pts.dedup();
    debug_assert_eq!(*pts.last().unwrap(), horizon);
    pts
}

/// Kahan-compensated accumulator; regret increments of order 0.1 summed
/// 10^7 times would otherwise lose digits in plain f64 accumulation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

fn simulate_cell(
    config: &ExperimentConfig,
    env: &EnvironmentModel,
    checkpoints: &[u64],
    a_star: &crate::ftpl::ActionSet,
    policy_idx: usize,
    rep: u32,
) -> Result<RegretTrace> {
    let spec = &config.policies[policy_idx];
    let d = env.d();
    let mut policy = build_policy(spec, d, env.m())?;
    let mut policy_rng = stream_rng(config.run.master_seed, NS_POLICY, policy_idx as u64, rep as u64);
    let mut env_rng =
        stream_rng(config.run.master_seed, NS_ENVIRONMENT, policy_idx as u64, rep as u64);

    let mut losses = vec![0.0f64; d];
    let mut means = vec![0.0f64; d];
    let mut regret = KahanSum::default();
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0usize;
    for t in 1..=config.run.horizon {
        env.sample_loss_into(t, &mut env_rng, &mut losses)?;
        let action = policy.round(&losses, &mut policy_rng)?;
        env.mean_loss_into(t, &mut means)?;
        regret.add(env.pseudo_regret_increment_with(&means, &action, a_star));
        if t == checkpoints[next_cp] {
            points.push((t, regret.value()));
            next_cp += 1;
        }
    }
    Ok(RegretTrace {
        policy: spec.name.clone(),
        rep,
        points,
    })
}

/// Runs every (policy, repetition) cell, in parallel when a rayon pool is
/// available. The output order and content are independent of the
/// parallelism degree.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let env = build_environment(config)?;
    let checkpoints = checkpoint_grid(config.run.horizon, config.run.checkpoints);
    let a_star = env.best_fixed_action(config.run.horizon)?;

    let reps = config.run.repetitions;
    let cells: Vec<(usize, u32)> = (0..config.policies.len())
        .flat_map(|p| (0..reps).map(move |r| (p, r)))
        .collect();
    let results: Vec<(usize, u32, Result<RegretTrace>)> = cells
        .par_iter()
        .map(|&(p, r)| (p, r, simulate_cell(config, &env, &checkpoints, &a_star, p, r)))
        .collect();

    let mut traces = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (p, r, res) in results {
        match res {
            Ok(trace) => traces.push(trace),
            Err(e) => failures.push(TraceFailure {
                policy: config.policies[p].name.clone(),
                rep: r,
                error: e.to_string(),
            }),
        }
    }
    Ok(ExperimentOutcome { traces, failures })
}

// ---------------------------------------------------------------------------
// Aggregation and growth fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryPoint {
    pub t: u64,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct PolicySummary {
    pub policy: String,
    pub points: Vec<SummaryPoint>,
}

/// Pointwise mean/SD/SE across repetitions, grouped by policy in first-seen
/// order. All traces of a policy must share the checkpoint grid.
pub fn aggregate(traces: &[RegretTrace]) -> Result<Vec<PolicySummary>> {
    let mut order: Vec<&str> = Vec::new();
    for tr in traces {
        if !order.contains(&tr.policy.as_str()) {
            order.push(&tr.policy);
        }
    }
    let mut out = Vec::with_capacity(order.len());
    for name in order {
        let group: Vec<&RegretTrace> = traces.iter().filter(|tr| tr.policy == name).collect();
        let grid: Vec<u64> = group[0].points.iter().map(|&(t, _)| t).collect();
        for tr in &group {
            let g: Vec<u64> = tr.points.iter().map(|&(t, _)| t).collect();
            if g != grid {
                return Err(Error::domain(format!(
                    "trace (policy {}, rep {}) has a mismatched checkpoint grid",
                    tr.policy, tr.rep
                )));
            }
        }
        let n = group.len() as f64;
        let mut points = Vec::with_capacity(grid.len());
        for (k, &t) in grid.iter().enumerate() {
            let vals: Vec<f64> = group.iter().map(|tr| tr.points[k].1).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let sd = if group.len() > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            points.push(SummaryPoint {
                t,
                mean,
                sd,
                se: sd / n.sqrt(),
            });
        }
        out.push(PolicySummary {
            policy: name.to_string(),
            points,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthModel {
    /// Regret against ln t.
    Log,
    /// Regret against sqrt t.
    Sqrt,
}

#[derive(Debug, Clone, Copy)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of regret against ln t or sqrt t over the last two
/// decades of checkpoints.
pub fn growth_fit(points: &[(u64, f64)], model: GrowthModel) -> Result<GrowthFit> {
    let last_t = points
        .last()
        .ok_or_else(|| Error::domain("empty trace".to_string()))?
        .0;
    let window_start = last_t / 100;
    let window: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(t, _)| t >= window_start.max(1))
        .map(|&(t, y)| {
            let x = match model {
                GrowthModel::Log => (t as f64).ln(),
                GrowthModel::Sqrt => (t as f64).sqrt(),
            };
            (x, y)
        })
        .collect();
    if window.len() < 5 {
        return Err(Error::domain(format!(
            "need at least 5 checkpoints in the fit window, got {}",
            window.len()
        )));
    }
    let n = window.len() as f64;
    let mx = window.iter().map(|p| p.0).sum::<f64>() / n;
    let my = window.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = window.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = window.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = window.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("degenerate fit window".to_string()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = window
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(GrowthFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(horizon: u64, reps: u32) -> ExperimentConfig {
        ExperimentConfig {
            environment: EnvSpec {
                kind: "stochastic".to_string(),
                d: Some(6),
                m: 2,
                delta: Some(0.1),
                growth: default_growth(),
                replay: true,
                seed: None,
                path: None,
            },
            policies: vec![PolicySpec::named("combucb")],
            run: RunSpec {
                horizon,
                repetitions: reps,
                master_seed: 11,
                checkpoints: 20,
            },
        }
    }

    #[test]
    fn config_validation_rejects_degenerate_runs() {
        let mut cfg = toy_config(0, 1);
        assert!(cfg.validate().is_err());
        cfg.run.horizon = 10;
        cfg.run.repetitions = 0;
        assert!(cfg.validate().is_err());
        cfg.run.repetitions = 1;
        cfg.policies.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn checkpoint_grid_is_strictly_increasing_and_ends_at_horizon() {
        for (h, c) in [(1u64, 5usize), (10, 5), (1_000_000, 200), (7, 200)] {
            let grid = checkpoint_grid(h, c);
            assert!(grid.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(*grid.last().unwrap(), h.max(1));
            assert!(*grid.first().unwrap() >= 1);
        }
    }

    #[test]
    fn kahan_sum_is_exact_for_adversarial_sequence() {
        let mut k = KahanSum::default();
        let mut plain = 0.0f64;
        for _ in 0..10_000_000u64 {
            k.add(0.1);
            plain += 0.1;
        }
        assert!((k.value() - 1e6).abs() < 1e-6, "kahan {}", k.value());
        // Plain accumulation drifts measurably at this scale.
        assert!((plain - 1e6).abs() > (k.value() - 1e6).abs());
    }

    #[test]
    fn traces_are_identical_across_thread_counts() {
        let cfg = toy_config(2_000, 3);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let out1 = pool1.install(|| run_experiment(&cfg)).unwrap();
        let out4 = pool4.install(|| run_experiment(&cfg)).unwrap();
        assert!(out1.failures.is_empty());
        assert_eq!(out1.traces, out4.traces);
    }

    #[test]
    fn repetitions_produce_distinct_action_streams() {
        // Different reps must not replay the same randomness: compare
        // early-trace regret paths of a randomized policy.
        let mut cfg = toy_config(500, 4);
        cfg.policies = vec![PolicySpec::named("thompson")];
        cfg.run.checkpoints = 100;
        let out = run_experiment(&cfg).unwrap();
        for i in 0..out.traces.len() {
            for j in (i + 1)..out.traces.len() {
                assert_ne!(
                    out.traces[i].points, out.traces[j].points,
                    "reps {i} and {j} collided"
                );
            }
        }
    }

    #[test]
    fn aggregate_handles_single_and_constant_traces() {
        let t1 = RegretTrace {
            policy: "x".into(),
            rep: 0,
            points: vec![(1, 1.0), (10, 3.0)],
        };
        let s = aggregate(&[t1.clone()]).unwrap();
        assert_eq!(s[0].points[1].sd, 0.0);
        let t2 = RegretTrace {
            policy: "x".into(),
            rep: 1,
            points: vec![(1, 3.0), (10, 5.0)],
        };
        let s = aggregate(&[t1.clone(), t2]).unwrap();
        assert_eq!(s[0].points[0].mean, 2.0);
        assert_eq!(s[0].points[1].mean, 4.0);
        let bad = RegretTrace {
            policy: "x".into(),
            rep: 2,
            points: vec![(2, 3.0), (10, 5.0)],
        };
        assert!(aggregate(&[t1, bad]).is_err());
    }

    #[test]
    fn growth_fit_recovers_exact_models() {
        let grid = checkpoint_grid(100_000, 60);
        let log_trace: Vec<(u64, f64)> =
            grid.iter().map(|&t| (t, 2.5 * (t as f64).ln())).collect();
        let fit = growth_fit(&log_trace, GrowthModel::Log).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let sqrt_trace: Vec<(u64, f64)> =
            grid.iter().map(|&t| (t, 0.7 * (t as f64).sqrt())).collect();
        let fit = growth_fit(&sqrt_trace, GrowthModel::Sqrt).unwrap();
        assert!((fit.slope - 0.7).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        // A sqrt-shaped trace must prefer the sqrt model.
        let log_fit = growth_fit(&sqrt_trace, GrowthModel::Log).unwrap();
        assert!(fit.r_squared > log_fit.r_squared);

        assert!(growth_fit(&sqrt_trace[..3], GrowthModel::Log).is_err());
    }

    #[test]
    fn checkpointed_regret_matches_serial_recomputation() {
        let cfg = toy_config(3_000, 1);
        let out = run_experiment(&cfg).unwrap();
        let trace = &out.traces[0];
        // Recompute the final cumulative regret directly (same streams).
        let env = build_environment(&cfg).unwrap();
        let a_star = env.best_fixed_action(cfg.run.horizon).unwrap();
        let mut policy = build_policy(&cfg.policies[0], 6, 2).unwrap();
        let mut prng = stream_rng(cfg.run.master_seed, NS_POLICY, 0, 0);
        let mut erng = stream_rng(cfg.run.master_seed, NS_ENVIRONMENT, 0, 0);
        let mut total = 0.0f64;
        for t in 1..=cfg.run.horizon {
            let losses = env.sample_loss(t, &mut erng).unwrap();
            let action = policy.round(&losses, &mut prng).unwrap();
            total += env.pseudo_regret_increment(t, &action, &a_star).unwrap();
        }
        let last = trace.points.last().unwrap().1;
        assert!((last - total).abs() < 1e-9, "checkpoint {last} vs serial {total}");
    }
}
