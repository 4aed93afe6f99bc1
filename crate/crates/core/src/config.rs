//! Engine configuration and its plain `key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! engine.stride = 3
//! engine.mode = no-go-count
//! assoc.w_iou = 0.5
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anchor::PrefilterParams;
use crate::associate::{AssociationParams, ScoreMode};
use crate::edgeopt::EdgeOptParams;
use crate::error::{Error, Result};
use crate::hierarchy::HierarchyParams;

/// Switchable engine variants used for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    #[default]
    Full,
    /// Node association by 3D box IoU + semantic cosine.
    AssocBaseline,
    /// Edge choice by raw observation count instead of the decision score.
    NoGoCount,
    /// Carrier–unit pairing decided greedily per frame in 2D.
    Hierarchy2dOff,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::Full,
        AblationMode::AssocBaseline,
        AblationMode::NoGoCount,
        AblationMode::Hierarchy2dOff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::AssocBaseline => "assoc-baseline",
            AblationMode::NoGoCount => "no-go-count",
            AblationMode::Hierarchy2dOff => "hierarchy-2d-off",
        }
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation mode `{s}`")))
    }
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub prefilter: PrefilterParams,
    pub association: AssociationParams,
    pub edgeopt: EdgeOptParams,
    pub hierarchy: HierarchyParams,
    /// Process every `stride`-th packet.
    pub stride: usize,
    pub mode: AblationMode,
    /// Points an object node needs before it may enter a candidate set.
    pub min_object_points: usize,
    /// Frames a depthless detection waits in the pending buffer.
    pub pending_ttl: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            prefilter: PrefilterParams::default(),
            association: AssociationParams::default(),
            edgeopt: EdgeOptParams::default(),
            hierarchy: HierarchyParams::default(),
            stride: 1,
            mode: AblationMode::Full,
            min_object_points: 10,
            pending_ttl: 5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

impl EngineConfig {
    pub fn with_mode(mut self, mode: AblationMode) -> Self {
        self.mode = mode;
        self.association.mode = match mode {
            AblationMode::AssocBaseline => ScoreMode::Box3dBaseline,
            _ => ScoreMode::MultiCue,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride < 1 {
            return Err(Error::Config("engine.stride must be at least 1".into()));
        }
        self.association.weights.validate()?;
        self.association.gates.validate()?;
        self.edgeopt.validate()?;
        if !(0.0..=1.0).contains(&self.association.alpha) {
            return Err(Error::Config("assoc.alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "engine.stride" => self.stride = parse(key, v)?,
            "engine.mode" => *self = self.with_mode(v.parse()?),
            "engine.min_object_points" => self.min_object_points = parse(key, v)?,
            "engine.pending_ttl" => self.pending_ttl = parse(key, v)?,
            "anchor.tau_det" => self.prefilter.tau_det = parse(key, v)?,
            "anchor.tau_geo" => self.prefilter.tau_geo = parse(key, v)?,
            "anchor.delta" => {
                self.prefilter.delta = if v == "auto" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "assoc.w_iou" => self.association.weights.w_iou = parse(key, v)?,
            "assoc.w_geo" => self.association.weights.w_geo = parse(key, v)?,
            "assoc.w_app" => self.association.weights.w_app = parse(key, v)?,
            "assoc.w_sem" => self.association.weights.w_sem = parse(key, v)?,
            "assoc.sigma" => self.association.weights.sigma = parse(key, v)?,
            "assoc.alpha" => self.association.alpha = parse(key, v)?,
            "gate.tau_ass" => self.association.gates.tau_ass = parse(key, v)?,
            "gate.dist_cap" => self.association.gates.dist_cap = parse(key, v)?,
            "gate.dist_frac" => self.association.gates.dist_frac = parse(key, v)?,
            "edgeopt.lambda_h" => self.edgeopt.lambda_h = parse(key, v)?,
            "edgeopt.lambda_d" => self.edgeopt.lambda_d = parse(key, v)?,
            "edgeopt.eps_clamp" => self.edgeopt.eps_clamp = parse(key, v)?,
            "edgeopt.solver_iters" => self.edgeopt.solver_iters = parse(key, v)?,
            "edgeopt.solver_tol" => self.edgeopt.solver_tol = parse(key, v)?,
            "edgeopt.min_obs" => self.edgeopt.min_obs = parse(key, v)?,
            "hierarchy.pairing_floor" => self.hierarchy.pairing_floor = parse(key, v)?,
            "hierarchy.exhaustive_limit" => self.hierarchy.exhaustive_limit = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override as given on a command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k, v)
    }

    /// Parses a configuration file on top of the defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = EngineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let a = &self.association;
        let e = &self.edgeopt;
        let lines: [(&str, String); 24] = [
            ("engine.stride", self.stride.to_string()),
            ("engine.mode", self.mode.to_string()),
            (
                "engine.min_object_points",
                self.min_object_points.to_string(),
            ),
            ("engine.pending_ttl", self.pending_ttl.to_string()),
            ("anchor.tau_det", self.prefilter.tau_det.to_string()),
            ("anchor.tau_geo", self.prefilter.tau_geo.to_string()),
            (
                "anchor.delta",
                self.prefilter
                    .delta
                    .map_or("auto".into(), |d| d.to_string()),
            ),
            ("assoc.w_iou", a.weights.w_iou.to_string()),
            ("assoc.w_geo", a.weights.w_geo.to_string()),
            ("assoc.w_app", a.weights.w_app.to_string()),
            ("assoc.w_sem", a.weights.w_sem.to_string()),
            ("assoc.sigma", a.weights.sigma.to_string()),
            ("assoc.alpha", a.alpha.to_string()),
            ("gate.tau_ass", a.gates.tau_ass.to_string()),
            ("gate.dist_cap", a.gates.dist_cap.to_string()),
            ("gate.dist_frac", a.gates.dist_frac.to_string()),
            ("edgeopt.lambda_h", e.lambda_h.to_string()),
            ("edgeopt.lambda_d", e.lambda_d.to_string()),
            ("edgeopt.eps_clamp", e.eps_clamp.to_string()),
            ("edgeopt.solver_iters", e.solver_iters.to_string()),
            ("edgeopt.solver_tol", e.solver_tol.to_string()),
            ("edgeopt.min_obs", e.min_obs.to_string()),
            (
                "hierarchy.pairing_floor",
                self.hierarchy.pairing_floor.to_string(),
            ),
            (
                "hierarchy.exhaustive_limit",
                self.hierarchy.exhaustive_limit.to_string(),
            ),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_text() {
        let cfg = EngineConfig::default();
        assert_eq!(EngineConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = EngineConfig::from_kv(
            "# ablation run\nengine.stride = 3\nengine.mode = assoc-baseline # baseline\n",
        )
        .unwrap();
        assert_eq!(cfg.stride, 3);
        assert_eq!(cfg.mode, AblationMode::AssocBaseline);
        assert_eq!(cfg.association.mode, ScoreMode::Box3dBaseline);

        let mut cfg = EngineConfig::default();
        cfg.apply_override("edgeopt.min_obs=4").unwrap();
        assert_eq!(cfg.edgeopt.min_obs, 4);
        assert!(cfg.apply_override("nonsense").is_err());
        assert!(cfg.apply_override("engine.mode=sideways").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(EngineConfig::from_kv("engine.stride = 0").is_err());
        assert!(EngineConfig::from_kv("assoc.w_iou = 0.9").is_err());
        assert!(EngineConfig::from_kv("bogus.key = 1").is_err());
        assert!(EngineConfig::from_kv("engine.stride").is_err());
    }
}
