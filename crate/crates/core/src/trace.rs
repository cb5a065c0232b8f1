//! Run traces: per-slot or per-frame records, aggregate statistics, and their
//! CSV / JSON encodings.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gnum,
    Cnum,
    ExactGradient,
    Loglinear,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Gnum => "gnum",
            Algorithm::Cnum => "cnum",
            Algorithm::ExactGradient => "exact-gradient",
            Algorithm::Loglinear => "loglinear",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gnum" => Ok(Algorithm::Gnum),
            "cnum" => Ok(Algorithm::Cnum),
            "exact-gradient" => Ok(Algorithm::ExactGradient),
            "loglinear" => Ok(Algorithm::Loglinear),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub num_nodes: usize,
    /// Engine configuration with defaults filled in.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub library_version: String,
    /// Excluded from equality checks between runs.
    pub wall_time_secs: f64,
}

impl TraceMeta {
    pub fn new(algorithm: Algorithm, seed: u64, num_nodes: usize, config: serde_json::Value) -> Self {
        let config_hash = config_hash(&config);
        Self {
            algorithm,
            seed,
            num_nodes,
            config,
            config_hash,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: 0.0,
        }
    }
}

/// SHA-256 of the compact JSON encoding.
pub fn config_hash(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("json values serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub actions: Vec<usize>,
    pub payoffs: Vec<f64>,
    pub content: Vec<bool>,
    /// Running time-average payoff up to and including this slot.
    pub mean_payoff: Vec<f64>,
    /// Normalized utility of the running mean payoff.
    pub utility: Vec<f64>,
    pub sum_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub step: f64,
    /// Weights in force during the frame.
    pub lambda: Vec<f64>,
    /// Frame-average service `s_i(l)`.
    pub service: Vec<f64>,
    /// Flow-control target `r̄_i(l)`.
    pub target: Vec<f64>,
    /// Normalized utility of the running-average service up to this frame.
    pub utility: Vec<f64>,
    pub sum_utility: f64,
    /// Step-weighted average of the targets up to this frame.
    pub cesaro_target: Vec<f64>,
    /// Σ normalized U_i of `cesaro_target`.
    pub cesaro_sum_utility: f64,
    /// Σ natural-scale U_i of `cesaro_target`.
    pub cesaro_sum_utility_natural: f64,
    /// `max_a Σ λ_i r_i(a) − Σ λ_i s_i(l)`; absent when the game is too
    /// large to enumerate.
    pub subgradient_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotStats {
    pub slots: u64,
    /// Slots per joint profile (empty when the action space is too large).
    pub profile_counts: Vec<u64>,
    /// Slots per ordered K-window of profiles after warm-up, indexed by
    /// `Σ_j h_j |A|^(K-1-j)` (empty when too large).
    pub window_counts: Vec<u64>,
    pub window_len: usize,
    /// Distinct chain states `(window, q)` seen after warm-up.
    pub distinct_states_visited: Option<usize>,
    pub all_content_slots: u64,
    pub experiments: u64,
    pub content_slots: Vec<u64>,
    pub content_repeats: Vec<u64>,
    pub final_mean_payoff: Vec<f64>,
    pub final_sum_utility: f64,
}

impl SlotStats {
    /// Fraction of post-warm-up slots whose window is one of `histories`.
    pub fn window_fraction(&self, histories: &[usize]) -> f64 {
        let total: u64 = self.window_counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        histories.iter().map(|&h| self.window_counts[h]).sum::<u64>() as f64 / total as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frames: usize,
    /// `b̄(L) = Σ b(l)`.
    pub step_sum: f64,
    /// Step-weighted average of targets `r̂̄(L)`.
    pub cesaro_target: Vec<f64>,
    /// Step-weighted average of the per-frame subgradient error.
    pub cesaro_subgradient_error: Option<f64>,
    pub final_lambda: Vec<f64>,
    pub max_lambda: f64,
    /// Common weight bound `λ_max = V + 1`.
    pub lambda_max: f64,
    pub cesaro_sum_utility: f64,
    pub cesaro_sum_utility_natural: f64,
    /// Time-average service over all slots.
    pub mean_service: Vec<f64>,
    pub sum_utility_of_mean_service: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub slots: Vec<SlotRecord>,
    pub frames: Vec<FrameRecord>,
    pub slot_stats: Option<SlotStats>,
    pub frame_stats: Option<FrameStats>,
}

impl RunTrace {
    /// Equality ignoring wall time.
    pub fn same_run(&self, other: &Self) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.meta.wall_time_secs = 0.0;
        b.meta.wall_time_secs = 0.0;
        a == b
    }

    /// Writes the per-slot or per-frame CSV. Rows are fully determined by
    /// the run, so identical runs produce identical bytes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.meta.num_nodes;
        let tag = self.meta.algorithm.tag();
        let mut w = csv::Writer::from_writer(out);
        let cols = |prefix: &'static str| (1..=n).map(move |i| format!("{prefix}_{i}"));
        if !self.frames.is_empty() || self.slots.is_empty() && self.frame_stats.is_some() {
            let mut header = vec!["algorithm".to_string(), "frame".into(), "step".into()];
            header.extend(cols("lambda"));
            header.extend(cols("s"));
            header.extend(cols("rbar"));
            header.extend(cols("utility"));
            header.extend(["sum_utility".into(), "cesaro_sum_utility".into(), "subgradient_error".into()]);
            w.write_record(&header)?;
            for f in &self.frames {
                let mut row = vec![tag.to_string(), f.frame.to_string(), f.step.to_string()];
                row.extend(f.lambda.iter().map(f64::to_string));
                row.extend(f.service.iter().map(f64::to_string));
                row.extend(f.target.iter().map(f64::to_string));
                row.extend(f.utility.iter().map(f64::to_string));
                row.push(f.sum_utility.to_string());
                row.push(f.cesaro_sum_utility.to_string());
                row.push(f.subgradient_error.map(|e| e.to_string()).unwrap_or_default());
                w.write_record(&row)?;
            }
        } else {
            let mut header = vec!["algorithm".to_string(), "slot".into()];
            header.extend(cols("action"));
            header.extend(cols("payoff"));
            header.extend(cols("q"));
            header.extend(cols("mean_payoff"));
            header.extend(cols("utility"));
            header.push("sum_utility".into());
            w.write_record(&header)?;
            for s in &self.slots {
                let mut row = vec![tag.to_string(), s.slot.to_string()];
                row.extend(s.actions.iter().map(usize::to_string));
                row.extend(s.payoffs.iter().map(f64::to_string));
                row.extend(s.content.iter().map(|&q| (q as u8).to_string()));
                row.extend(s.mean_payoff.iter().map(f64::to_string));
                row.extend(s.utility.iter().map(f64::to_string));
                row.push(s.sum_utility.to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            algorithm: self.meta.algorithm,
            seed: self.meta.seed,
            config_hash: self.meta.config_hash.clone(),
            config: self.meta.config.clone(),
            library_version: self.meta.library_version.clone(),
            wall_time_secs: self.meta.wall_time_secs,
            records: self.slots.len().max(self.frames.len()),
            final_lambda: self.frame_stats.as_ref().map(|f| f.final_lambda.clone()),
            final_cesaro_utility: self.frame_stats.as_ref().map(|f| f.cesaro_sum_utility),
            slot_stats: self.slot_stats.clone().map(|mut s| {
                s.window_counts.clear();
                s
            }),
            frame_stats: self.frame_stats.clone(),
        }
    }
}

/// JSON run summary written next to each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub library_version: String,
    pub wall_time_secs: f64,
    pub records: usize,
    pub final_lambda: Option<Vec<f64>>,
    pub final_cesaro_utility: Option<f64>,
    pub slot_stats: Option<SlotStats>,
    pub frame_stats: Option<FrameStats>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_for_equal_configs() {
        let a = serde_json::json!({"epsilon": 0.1, "k": 2});
        let b: serde_json::Value = serde_json::from_str(&a.to_string()).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&serde_json::json!({"epsilon": 0.2, "k": 2})));
    }

    #[test]
    fn algorithm_tags_round_trip() {
        for a in [Algorithm::Gnum, Algorithm::Cnum, Algorithm::ExactGradient, Algorithm::Loglinear] {
            assert_eq!(a.tag().parse::<Algorithm>().unwrap(), a);
        }
    }
}
