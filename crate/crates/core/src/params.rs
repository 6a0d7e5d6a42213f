//! Engine hyperparameters.
//!
//! Field names double as the keys of the TOML parameter file, so a sweep over
//! any setting is just a set of generated config files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Units of episode timestamps. The decay rate `rho` is per unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimestampUnit {
    /// Timestamps default to the turn index (0, 1, 2, ...).
    TurnIndex,
    /// Timestamps default to wall-clock seconds since the Unix epoch.
    EpochSeconds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Anchor energy scaling.
    pub alpha: f64,
    /// Retention decay; a node keeps `1 - delta` of its activation per step.
    pub delta: f64,
    /// Spreading factor.
    pub spreading: f64,
    /// Temporal decay rate per timestamp unit.
    pub rho: f64,
    /// Lateral inhibition strength.
    pub beta: f64,
    /// Size of the inhibitor set (highest-potential nodes).
    pub inhibit_m: usize,
    /// Sigmoid steepness.
    pub gamma: f64,
    /// Sigmoid threshold.
    pub theta: f64,
    /// Propagation cycles per query.
    pub steps: usize,
    /// Fusion weight of cosine similarity.
    pub lambda1: f64,
    /// Fusion weight of final activation.
    pub lambda2: f64,
    /// Fusion weight of the structural prior.
    pub lambda3: f64,
    pub top_k: usize,
    /// Anchors taken from each trigger stream (lexical and dense).
    pub anchor_k: usize,
    pub tau_dup: f64,
    pub tau_gate: f64,
    /// Consolidation window size in turns.
    pub consolidation_n: usize,
    /// Maximum incoming edges per node after pruning.
    pub prune_k: usize,
    pub epsilon_dormant: f64,
    /// Consecutive dormant windows before archival.
    pub dormancy_w: u32,
    pub max_active_nodes: usize,
    pub embed_dim: usize,
    /// Seed of the deterministic hashing embedder.
    pub embed_seed: u64,
    /// Weight of episode-concept edges created at consolidation.
    pub abstraction_weight: f64,
    /// How many most-similar neighbours a concept may link to.
    pub association_top: usize,
    /// Share of the old embedding kept when a duplicate concept is merged.
    pub ema_retention: f64,
    /// Divide outgoing energy by out-degree. Off reproduces the no-dilution ablation.
    pub fan_effect: bool,
    /// Nodes at or below `epsilon_dormant` potential fire exactly zero.
    pub sparse_firing: bool,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub pagerank_damping: f64,
    pub pagerank_iterations: usize,
    pub pagerank_tolerance: f64,
    pub timestamp_unit: TimestampUnit,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            delta: 0.5,
            spreading: 0.8,
            rho: 0.01,
            beta: 0.15,
            inhibit_m: 7,
            gamma: 5.0,
            theta: 0.5,
            steps: 3,
            lambda1: 0.5,
            lambda2: 0.3,
            lambda3: 0.2,
            top_k: 30,
            anchor_k: 10,
            tau_dup: 0.92,
            tau_gate: 0.12,
            consolidation_n: 5,
            prune_k: 15,
            epsilon_dormant: 0.01,
            dormancy_w: 10,
            max_active_nodes: 10_000,
            embed_dim: 384,
            embed_seed: 0x5eed_cafe,
            abstraction_weight: 0.8,
            association_top: 15,
            ema_retention: 0.9,
            fan_effect: true,
            sparse_firing: true,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            pagerank_damping: 0.85,
            pagerank_iterations: 100,
            pagerank_tolerance: 1e-8,
            timestamp_unit: TimestampUnit::TurnIndex,
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ParamError {
    ParamError::Invalid {
        name,
        reason: reason.into(),
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let unit = [
            ("delta", self.delta),
            ("beta", self.beta),
            ("theta", self.theta),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("tau_dup", self.tau_dup),
            ("epsilon_dormant", self.epsilon_dormant),
            ("abstraction_weight", self.abstraction_weight),
            ("ema_retention", self.ema_retention),
            ("bm25_b", self.bm25_b),
            ("pagerank_damping", self.pagerank_damping),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, format!("{v} is outside [0, 1]")));
            }
        }
        // tau_gate above 1 is allowed: it is how a caller forces every query to be rejected.
        if !(self.tau_gate >= 0.0 && self.tau_gate.is_finite()) {
            return Err(invalid("tau_gate", "must be a finite non-negative number"));
        }
        let sum = self.lambda1 + self.lambda2 + self.lambda3;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "lambda1",
                format!("fusion weights sum to {sum}, not 1"),
            ));
        }
        let nonneg = [
            ("alpha", self.alpha),
            ("spreading", self.spreading),
            ("rho", self.rho),
            ("gamma", self.gamma),
            ("bm25_k1", self.bm25_k1),
            ("pagerank_tolerance", self.pagerank_tolerance),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(
                    name,
                    format!("{v} must be finite and non-negative"),
                ));
            }
        }
        if self.steps < 1 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if self.inhibit_m < 1 {
            return Err(invalid("inhibit_m", "must be at least 1"));
        }
        if self.consolidation_n < 1 {
            return Err(invalid("consolidation_n", "must be at least 1"));
        }
        if self.embed_dim < 8 {
            return Err(invalid("embed_dim", "must be at least 8"));
        }
        if self.top_k < 1 || self.anchor_k < 1 {
            return Err(invalid("top_k", "top_k and anchor_k must be at least 1"));
        }
        Ok(())
    }

    /// Same parameters with `steps` overridden. `steps = 0` (seed only, no
    /// propagation) is accepted by the activation functions for ablations but
    /// fails [`validate`](Self::validate).
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    /// Replace the fusion weights, rescaling them to sum to one.
    pub fn with_fusion(mut self, l1: f64, l2: f64, l3: f64) -> Self {
        let s = l1 + l2 + l3;
        self.lambda1 = l1 / s;
        self.lambda2 = l2 / s;
        self.lambda3 = l3 / s;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ParamError> {
        let params: HyperParams =
            toml::from_str(text).map_err(|e| ParamError::Parse(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_file(path: &Path) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParamError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("hyperparameters always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = HyperParams::default();
        p.validate().unwrap();
        assert_eq!(p.inhibit_m, 7);
        assert_eq!(p.prune_k, 15);
        assert_eq!(p.dormancy_w, 10);
        assert!((p.lambda1 + p.lambda2 + p.lambda3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fusion_weights_must_sum_to_one() {
        let p = HyperParams {
            lambda1: 0.6,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = HyperParams::default().with_fusion(0.5, 0.0, 0.2);
        p.validate().unwrap();
        assert!((p.lambda1 - 0.5 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let p = HyperParams::default();
        let back = HyperParams::from_toml_str(&p.to_toml_string()).unwrap();
        assert_eq!(p, back);

        let partial = HyperParams::from_toml_str("tau_gate = 0.0\ntop_k = 5\n").unwrap();
        assert_eq!(partial.tau_gate, 0.0);
        assert_eq!(partial.top_k, 5);
        assert_eq!(partial.delta, 0.5);

        assert!(HyperParams::from_toml_str("tau_gat = 0.1\n").is_err());
        assert!(HyperParams::from_toml_str("beta = 1.5\n").is_err());
        assert!(HyperParams::from_toml_str("inhibit_m = 0\n").is_err());
    }
}
