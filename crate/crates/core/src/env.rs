//! Simulated loss environments.
//!
//! Three kinds: a stationary stochastic instance (first m arms better by a
//! margin of 2*delta), a phased adversarial instance whose means swing
//! between extremes on a geometrically growing phase schedule, and a
//! replay of an explicit loss matrix. Losses are Bernoulli; pseudo-regret
//! is computed against mean losses, which is exact for the simulator and
//! variance-free.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ftpl::ActionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Stochastic,
    PhasedAdversarial,
    Replay,
}

/// Per-arm suboptimality gaps: excess mean loss over the m-th smallest.
#[derive(Debug, Clone)]
pub struct GapVector {
    pub gaps: Vec<f64>,
    /// Smallest positive gap; `None` when all arms tie.
    pub min_gap: Option<f64>,
}

/// An immutable loss process over a horizon.
#[derive(Debug, Clone)]
pub struct EnvironmentModel {
    kind: EnvKind,
    d: usize,
    m: usize,
    delta: f64,
    growth: f64,
    horizon: u64,
    /// Phased instance: start round (1-based, inclusive) of each phase.
    phase_starts: Vec<u64>,
    /// Realized 0/1 losses, row-major horizon x d, when the sequence is
    /// fixed up front (phased replay or explicit replay).
    fixed_losses: Option<Vec<u8>>,
    /// Replay kind: mean matrix equals the fixed losses.
    replay_means: Option<Vec<f64>>,
}

impl EnvironmentModel {
    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn is_replay(&self) -> bool {
        self.fixed_losses.is_some()
    }
}

fn validate_params(d: usize, m: usize, delta: f64) -> Result<()> {
    if d < 2 || m < 1 || m >= d {
        return Err(Error::domain(format!(
            "need 2 <= d and 1 <= m < d, got d={d}, m={m}"
        )));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::domain(format!(
            "delta must lie in (0, 1/2), got {delta}"
        )));
    }
    Ok(())
}

/// Stationary instance: mean loss 1/2 - delta on the first m arms and
/// 1/2 + delta on the rest.
pub fn make_stochastic(d: usize, m: usize, delta: f64) -> Result<EnvironmentModel> {
    validate_params(d, m, delta)?;
    Ok(EnvironmentModel {
        kind: EnvKind::Stochastic,
        d,
        m,
        delta,
        growth: 1.0,
        horizon: u64::MAX,
        phase_starts: Vec::new(),
        fixed_losses: None,
        replay_means: None,
    })
}

/// Phased adversarial instance. Phase s lasts round(growth^s) rounds
/// (minimum 1) and flips the mean pattern by parity: odd phases put the
/// first m arms at 1 - delta/2 and the rest at 1; even phases put them at
/// 0 versus delta/2.
pub fn make_phased_adversarial(
    d: usize,
    m: usize,
    delta: f64,
    growth: f64,
    horizon: u64,
) -> Result<EnvironmentModel> {
    validate_params(d, m, delta)?;
    if !(growth > 1.0) {
        return Err(Error::domain(format!("growth must exceed 1, got {growth}")));
    }
    if horizon < 1 {
        return Err(Error::domain("horizon must be at least 1".to_string()));
    }
    let mut phase_starts = Vec::new();
    let mut start = 1u64;
    let mut s = 1u32;
    while start <= horizon {
        phase_starts.push(start);
        let dur = growth.powi(s as i32).round().max(1.0) as u64;
        start = start.saturating_add(dur);
        s += 1;
    }
    Ok(EnvironmentModel {
        kind: EnvKind::PhasedAdversarial,
        d,
        m,
        delta,
        growth,
        horizon,
        phase_starts,
        fixed_losses: None,
        replay_means: None,
    })
}

/// Replays an explicit 0/1 loss matrix; its rows double as the means.
pub fn make_replay(d: usize, m: usize, losses: Vec<u8>) -> Result<EnvironmentModel> {
    if d < 2 || m < 1 || m >= d {
        return Err(Error::domain(format!(
            "need 2 <= d and 1 <= m < d, got d={d}, m={m}"
        )));
    }
    if losses.is_empty() || losses.len() % d != 0 {
        return Err(Error::domain(format!(
            "loss matrix size {} is not a positive multiple of d={d}",
            losses.len()
        )));
    }
    if losses.iter().any(|&b| b > 1) {
        return Err(Error::domain("replay losses must be 0/1 bytes".to_string()));
    }
    let horizon = (losses.len() / d) as u64;
    let replay_means = Some(losses.iter().map(|&b| b as f64).collect());
    Ok(EnvironmentModel {
        kind: EnvKind::Replay,
        d,
        m,
        delta: 0.0,
        growth: 1.0,
        horizon,
        phase_starts: Vec::new(),
        fixed_losses: Some(losses),
        replay_means,
    })
}

impl EnvironmentModel {
    /// Fixes one realized Bernoulli sequence drawn from `rng` so that every
    /// repetition replays identical losses.
    pub fn realize_replay<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.kind == EnvKind::Replay {
            return Ok(()); // already fixed by construction
        }
        if self.horizon == u64::MAX {
            return Err(Error::domain(
                "cannot fix a replay sequence for an unbounded horizon".to_string(),
            ));
        }
        let mut buf = vec![0u8; self.horizon as usize * self.d];
        let mut means = vec![0.0f64; self.d];
        for t in 1..=self.horizon {
            self.mean_loss_into(t, &mut means)?;
            let row = &mut buf[((t - 1) as usize * self.d)..][..self.d];
            for (b, &p) in row.iter_mut().zip(&means) {
                *b = (rng.random::<f64>() < p) as u8;
            }
        }
        self.fixed_losses = Some(buf);
        Ok(())
    }

    /// 1-based phase number containing round t.
    pub fn phase_of(&self, t: u64) -> usize {
        debug_assert!(self.kind == EnvKind::PhasedAdversarial);
        self.phase_starts.partition_point(|&s| s <= t)
    }

    /// Mean loss vector at round t.
    pub fn mean_loss(&self, t: u64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d];
        self.mean_loss_into(t, &mut out)?;
        Ok(out)
    }

    pub fn mean_loss_into(&self, t: u64, out: &mut [f64]) -> Result<()> {
        if t < 1 || t > self.horizon {
            return Err(Error::domain(format!(
                "round {t} outside [1, {}]",
                self.horizon
            )));
        }
        debug_assert_eq!(out.len(), self.d);
        match self.kind {
            EnvKind::Stochastic => {
                let (lo, hi) = (0.5 - self.delta, 0.5 + self.delta);
                for (i, v) in out.iter_mut().enumerate() {
                    *v = if i < self.m { lo } else { hi };
                }
            }
            EnvKind::PhasedAdversarial => {
                let odd = self.phase_of(t) % 2 == 1;
                let (lo, hi) = if odd {
                    (1.0 - self.delta / 2.0, 1.0)
                } else {
                    (0.0, self.delta / 2.0)
                };
                for (i, v) in out.iter_mut().enumerate() {
                    *v = if i < self.m { lo } else { hi };
                }
            }
            EnvKind::Replay => {
                let row = &self.replay_means.as_ref().unwrap()[((t - 1) as usize * self.d)..][..self.d];
                out.copy_from_slice(row);
            }
        }
        Ok(())
    }

    /// Realized Bernoulli losses at round t. Reads the fixed sequence when
    /// one was realized, otherwise draws fresh from `rng`.
    pub fn sample_loss<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d];
        self.sample_loss_into(t, rng, &mut out)?;
        Ok(out)
    }

    pub fn sample_loss_into<R: Rng + ?Sized>(
        &self,
        t: u64,
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<()> {
        if t < 1 || t > self.horizon {
            return Err(Error::domain(format!(
                "round {t} outside [1, {}]",
                self.horizon
            )));
        }
        if let Some(fixed) = &self.fixed_losses {
            let row = &fixed[((t - 1) as usize * self.d)..][..self.d];
            for (v, &b) in out.iter_mut().zip(row) {
                *v = b as f64;
            }
            return Ok(());
        }
        self.mean_loss_into(t, out)?;
        for v in out.iter_mut() {
            *v = (rng.random::<f64>() < *v) as u64 as f64;
        }
        Ok(())
    }

    /// Per-arm cumulative mean loss over rounds 1..=n.
    fn cumulative_means(&self, n: u64) -> Result<Vec<f64>> {
        if n > self.horizon {
            return Err(Error::domain(format!(
                "n={n} exceeds horizon {}",
                self.horizon
            )));
        }
        let mut sums = vec![0.0f64; self.d];
        match self.kind {
            EnvKind::Stochastic => {
                let means = self.mean_loss(1.min(n).max(1))?;
                for (s, &v) in sums.iter_mut().zip(&means) {
                    *s = v * n as f64;
                }
            }
            EnvKind::PhasedAdversarial => {
                // Piecewise-constant means: weight each phase by its length.
                for (idx, &start) in self.phase_starts.iter().enumerate() {
                    if start > n {
                        break;
                    }
                    let end = self
                        .phase_starts
                        .get(idx + 1)
                        .map(|&next| next - 1)
                        .unwrap_or(self.horizon)
                        .min(n);
                    let len = (end - start + 1) as f64;
                    let means = self.mean_loss(start)?;
                    for (s, &v) in sums.iter_mut().zip(&means) {
                        *s += v * len;
                    }
                }
            }
            EnvKind::Replay => {
                let m = self.replay_means.as_ref().unwrap();
                for t in 0..n as usize {
                    for i in 0..self.d {
                        sums[i] += m[t * self.d + i];
                    }
                }
            }
        }
        Ok(sums)
    }

    /// The m arms minimizing cumulative mean loss over rounds 1..=n, ties
    /// to the smaller index.
    pub fn best_fixed_action(&self, n: u64) -> Result<ActionSet> {
        let sums = self.cumulative_means(n)?;
        let mut order: Vec<usize> = (0..self.d).collect();
        order.sort_by(|&a, &b| sums[a].partial_cmp(&sums[b]).unwrap().then(a.cmp(&b)));
        ActionSet::new(order[..self.m].to_vec(), self.d)
    }

    /// One-round pseudo-regret of `action` against `a_star`, in means.
    pub fn pseudo_regret_increment(
        &self,
        t: u64,
        action: &ActionSet,
        a_star: &ActionSet,
    ) -> Result<f64> {
        let mut means = vec![0.0; self.d];
        self.mean_loss_into(t, &mut means)?;
        Ok(self.pseudo_regret_increment_with(&means, action, a_star))
    }

    /// Same, with the caller supplying this round's means.
    pub fn pseudo_regret_increment_with(
        &self,
        means: &[f64],
        action: &ActionSet,
        a_star: &ActionSet,
    ) -> f64 {
        let chosen: f64 = action.arms().iter().map(|&i| means[i]).sum();
        let best: f64 = a_star.arms().iter().map(|&i| means[i]).sum();
        chosen - best
    }

    /// Suboptimality gaps of the average means over rounds 1..=n.
    pub fn gap_vector(&self, n: u64) -> Result<GapVector> {
        let sums = self.cumulative_means(n)?;
        let nu: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let mut sorted = nu.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let level = sorted[self.m - 1];
        let gaps: Vec<f64> = nu.iter().map(|&v| (v - level).max(0.0)).collect();
        let min_gap = gaps
            .iter()
            .copied()
            .filter(|&g| g > 0.0)
            .min_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(GapVector { gaps, min_gap })
    }

    /// Writes the fixed loss sequence as a binary matrix file:
    /// little-endian u32 d, u64 horizon, then row-major 0/1 bytes.
    pub fn export_replay(&self, path: &Path) -> Result<()> {
        let Some(losses) = &self.fixed_losses else {
            return Err(Error::domain(
                "environment has no fixed loss sequence to export".to_string(),
            ));
        };
        let mut file = std::fs::File::create(path)
            .map_err(|e| Error::internal(format!("create {}: {e}", path.display())))?;
        let mut header = Vec::with_capacity(12);
        header.extend_from_slice(&(self.d as u32).to_le_bytes());
        header.extend_from_slice(&self.horizon.to_le_bytes());
        file.write_all(&header)
            .and_then(|_| file.write_all(losses))
            .map_err(|e| Error::internal(format!("write {}: {e}", path.display())))
    }
}

/// Reads a binary replay matrix written by `export_replay`.
pub fn import_replay(path: &Path, m: usize) -> Result<EnvironmentModel> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::domain(format!("open {}: {e}", path.display())))?;
    let mut header = [0u8; 12];
    file.read_exact(&mut header)
        .map_err(|e| Error::domain(format!("read header of {}: {e}", path.display())))?;
    let d = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let horizon = u64::from_le_bytes(header[4..].try_into().unwrap());
    let mut losses = Vec::new();
    file.read_to_end(&mut losses)
        .map_err(|e| Error::domain(format!("read body of {}: {e}", path.display())))?;
    if losses.len() as u64 != horizon * d as u64 {
        return Err(Error::domain(format!(
            "replay body has {} bytes, expected {}",
            losses.len(),
            horizon * d as u64
        )));
    }
    make_replay(d, m, losses)
}
