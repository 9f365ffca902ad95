//! Policy abstraction used by the experiment harness.
//!
//! A policy owns its state and consumes one RNG stream; the harness feeds
//! it the realized loss vector each round and receives the played action.
//! Policies must only use the losses of the arms they selected (semi-bandit
//! feedback), which each implementation honors internally.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    combucb_choose, ftrl_round, thompson_choose, FtrlState, Regularizer, StochasticStats,
};
use crate::error::{Error, Result};
use crate::ftpl::{ftpl_round, ActionSet, FtplState};

pub trait SemiBanditPolicy: Send {
    /// Plays one round against the full realized loss vector.
    fn round(&mut self, losses: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionSet>;
}

/// Policy selection plus tuning knobs, as written in experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySpec {
    /// One of: ftpl, combucb, thompson, exp2, logbarrier, hybrid.
    pub name: String,
    /// `c` in the learning-rate schedule `eta_t = c/sqrt(t)` (FTPL and the
    /// FTRL baselines).
    #[serde(default = "default_rate_scale")]
    pub rate_scale: f64,
    /// Optional cap on each geometric resampling loop (FTPL only).
    #[serde(default)]
    pub resample_cap: Option<u64>,
    /// Constraint tolerance of the capped-simplex solver (FTRL only).
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
}

fn default_rate_scale() -> f64 {
    1.0
}

fn default_solver_tol() -> f64 {
    1e-9
}

impl PolicySpec {
    pub fn named(name: &str) -> Self {
        PolicySpec {
            name: name.to_string(),
            rate_scale: default_rate_scale(),
            resample_cap: None,
            solver_tol: default_solver_tol(),
        }
    }
}

/// Instantiates the policy named in `spec` for a (d, m) instance.
pub fn build_policy(spec: &PolicySpec, d: usize, m: usize) -> Result<Box<dyn SemiBanditPolicy>> {
    match spec.name.as_str() {
        "ftpl" => Ok(Box::new(FtplPolicy::new(d, m, spec.rate_scale, spec.resample_cap)?)),
        "combucb" => Ok(Box::new(CombUcbPolicy::new(d, m)?)),
        "thompson" => Ok(Box::new(ThompsonPolicy::new(d, m)?)),
        "exp2" => Ok(Box::new(FtrlPolicy::new(
            d,
            m,
            Regularizer::Shannon,
            spec.rate_scale,
            spec.solver_tol,
        )?)),
        "logbarrier" => Ok(Box::new(FtrlPolicy::new(
            d,
            m,
            Regularizer::LogBarrier,
            spec.rate_scale,
            spec.solver_tol,
        )?)),
        "hybrid" => Ok(Box::new(FtrlPolicy::new(
            d,
            m,
            Regularizer::Hybrid,
            spec.rate_scale,
            spec.solver_tol,
        )?)),
        other => Err(Error::config(format!("unknown policy '{other}'"))),
    }
}

/// All policy names accepted by [`build_policy`].
pub const POLICY_NAMES: [&str; 6] = ["ftpl", "combucb", "thompson", "exp2", "logbarrier", "hybrid"];

// ---------------------------------------------------------------------------
// Adapters
// ---------------------------------------------------------------------------

pub struct FtplPolicy {
    state: FtplState,
    cap: Option<u64>,
    truncations: u64,
}

impl FtplPolicy {
    pub fn new(d: usize, m: usize, rate_scale: f64, cap: Option<u64>) -> Result<Self> {
        Ok(FtplPolicy {
            state: FtplState::new(d, m, rate_scale)?,
            cap,
            truncations: 0,
        })
    }

    /// Number of resampling loops truncated by the cap so far.
    pub fn truncations(&self) -> u64 {
        self.truncations
    }
}

impl SemiBanditPolicy for FtplPolicy {
    fn round(&mut self, losses: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionSet> {
        let out = ftpl_round(&mut self.state, losses, self.cap, rng)?;
        self.truncations += out.truncations;
        Ok(out.action)
    }
}

pub struct CombUcbPolicy {
    stats: StochasticStats,
    m: usize,
    t: u64,
}

impl CombUcbPolicy {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d < 2 || m < 1 || m > d {
            return Err(Error::domain(format!(
                "need d >= 2 and 1 <= m <= d, got d={d}, m={m}"
            )));
        }
        Ok(CombUcbPolicy {
            stats: StochasticStats::new(d),
            m,
            t: 1,
        })
    }
}

impl SemiBanditPolicy for CombUcbPolicy {
    fn round(&mut self, losses: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionSet> {
        let _ = rng; // deterministic index policy
        let action = combucb_choose(&self.stats, self.t, self.m)?;
        self.stats.update(&action, losses);
        self.t += 1;
        Ok(action)
    }
}

pub struct ThompsonPolicy {
    stats: StochasticStats,
    m: usize,
}

impl ThompsonPolicy {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d < 2 || m < 1 || m > d {
            return Err(Error::domain(format!(
                "need d >= 2 and 1 <= m <= d, got d={d}, m={m}"
            )));
        }
        Ok(ThompsonPolicy {
            stats: StochasticStats::new(d),
            m,
        })
    }
}

impl SemiBanditPolicy for ThompsonPolicy {
    fn round(&mut self, losses: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionSet> {
        let action = thompson_choose(&self.stats, self.m, rng)?;
        self.stats.update(&action, losses);
        Ok(action)
    }
}

pub struct FtrlPolicy {
    state: FtrlState,
    tol: f64,
}

impl FtrlPolicy {
    pub fn new(d: usize, m: usize, reg: Regularizer, rate_scale: f64, tol: f64) -> Result<Self> {
        Ok(FtrlPolicy {
            state: FtrlState::new(d, m, reg, rate_scale)?,
            tol,
        })
    }

    pub fn floor_clips(&self) -> u64 {
        self.state.floor_clips
    }
}

impl SemiBanditPolicy for FtrlPolicy {
    fn round(&mut self, losses: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionSet> {
        let (action, _) = ftrl_round(&mut self.state, losses, self.tol, rng)?;
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn factory_knows_every_policy_name() {
        for name in POLICY_NAMES {
            let spec = PolicySpec::named(name);
            let mut policy = build_policy(&spec, 6, 2).unwrap();
            let mut rng = seeded_rng(1);
            let a = policy.round(&[0.0, 1.0, 0.0, 1.0, 0.0, 1.0], &mut rng).unwrap();
            assert_eq!(a.m(), 2);
        }
        assert!(build_policy(&PolicySpec::named("nope"), 6, 2).is_err());
    }

    #[test]
    fn policy_spec_deserializes_with_defaults() {
        let spec: PolicySpec = serde_json::from_str(r#"{"name": "ftpl"}"#).unwrap();
        assert_eq!(spec.rate_scale, 1.0);
        assert_eq!(spec.resample_cap, None);
        let spec: PolicySpec =
            serde_json::from_str(r#"{"name": "exp2", "rate_scale": 0.5, "solver_tol": 1e-7}"#)
                .unwrap();
        assert_eq!(spec.rate_scale, 0.5);
        assert_eq!(spec.solver_tol, 1e-7);
    }
}
