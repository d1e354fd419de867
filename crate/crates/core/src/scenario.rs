//! Scenario files: a small TOML format describing one experiment, plus the
//! built-in presets. Files parse into [`ScenarioFile`], which resolves (with
//! validation) into the fully-specified [`ScenarioConfig`] the builders use.

use crate::sim::SimTime;
use crate::switch::DropPolicy;
use crate::topology::{ScenarioConfig, TopologyKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a scenario file was rejected.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

/// One experiment description as written in a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub tcp: TcpSection,
    #[serde(default)]
    pub switch: SwitchSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub trace: TraceSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub name: String,
    /// "per-conn-vc" or "merged-vc".
    pub topology: String,
    pub connections: u32,
    #[serde(default = "d_one")]
    pub connections_per_vc: u32,
    pub duration_s: f64,
    #[serde(default = "d_warmup")]
    pub warmup_frac: f64,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_stagger_us")]
    pub start_stagger_us: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcpSection {
    pub mss: u64,
    /// Advertised window before scaling.
    pub advertised_window: u64,
    /// Window-scale shift count.
    pub window_scale: u8,
    pub delayed_ack: bool,
    pub rto_min_ms: u64,
    pub rto_granularity_ms: u64,
    pub initial_window_segments: u64,
    /// Sender-side dropper: suppress one segment each time the congestion
    /// window reaches this many bytes.
    pub cwnd_drop_threshold: Option<u64>,
}

impl Default for TcpSection {
    fn default() -> Self {
        TcpSection {
            mss: 1024,
            advertised_window: 37_500,
            window_scale: 4,
            delayed_ack: false,
            rto_min_ms: 500,
            rto_granularity_ms: 100,
            initial_window_segments: 1,
            cwnd_drop_threshold: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchSection {
    /// "off", "threshold-crossing", or "gfr-probabilistic".
    pub policy: String,
    pub capacity_cells: u64,
    /// Global congestion threshold as a fraction of capacity.
    pub congestion_threshold_frac: f64,
    /// Discard-band width multiplier (> 1 for the probabilistic policy).
    pub occupancy_scale: f64,
    pub tag_sensitive: bool,
    /// Per-circuit thresholds in cells, one per bottleneck account
    /// (connections for per-conn circuits, groups for merged ones).
    pub thresholds_cells: Vec<u64>,
    /// Alternative to explicit thresholds: relative guaranteed-rate shares,
    /// scaled so the thresholds sum to `share_pool_cells`.
    pub shares: Vec<f64>,
    pub share_pool_cells: Option<u64>,
    /// Per-circuit drop weights; defaults to 1.0 everywhere.
    pub weights: Vec<f64>,
}

impl Default for SwitchSection {
    fn default() -> Self {
        SwitchSection {
            policy: "off".into(),
            capacity_cells: 48_000,
            congestion_threshold_frac: 0.9,
            occupancy_scale: 1.5,
            tag_sensitive: false,
            thresholds_cells: Vec::new(),
            shares: Vec::new(),
            share_pool_cells: None,
            weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub rate_bps: u64,
    pub access_prop_us: f64,
    pub backbone_prop_ms: f64,
    pub max_frame_bytes: u64,
}

impl Default for LinkSection {
    fn default() -> Self {
        LinkSection {
            rate_bps: 155_520_000,
            access_prop_us: 1.0,
            backbone_prop_ms: 15.0,
            max_frame_bytes: 9_188,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    pub sample_interval_ms: f64,
}

impl Default for TraceSection {
    fn default() -> Self {
        TraceSection {
            sample_interval_ms: 10.0,
        }
    }
}

fn d_one() -> u32 {
    1
}
fn d_warmup() -> f64 {
    0.1
}
fn d_seed() -> u64 {
    42
}
fn d_stagger_us() -> f64 {
    100.0
}

impl ScenarioFile {
    pub fn from_toml_str(s: &str) -> Result<ScenarioFile, ScenarioError> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Validate and fill in everything the builders need.
    pub fn resolve(&self) -> Result<ScenarioConfig, ScenarioError> {
        let s = &self.scenario;
        let kind = match s.topology.as_str() {
            "per-conn-vc" => TopologyKind::PerConnVc,
            "merged-vc" => TopologyKind::MergedVc,
            other => return invalid(format!("unknown topology \"{other}\"")),
        };
        if s.connections == 0 {
            return invalid("connections must be positive");
        }
        let per = s.connections_per_vc;
        match kind {
            TopologyKind::PerConnVc if per != 1 => {
                return invalid("per-conn-vc requires connections_per_vc = 1")
            }
            TopologyKind::MergedVc if per < 2 => {
                return invalid("merged-vc requires connections_per_vc >= 2")
            }
            TopologyKind::MergedVc if !s.connections.is_multiple_of(per) => {
                return invalid("connections_per_vc must divide connections")
            }
            _ => {}
        }
        let accounts = (s.connections / per) as usize;

        if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
            return invalid("duration_s must be positive");
        }
        if !(0.0..=0.9).contains(&s.warmup_frac) {
            return invalid("warmup_frac must be in [0, 0.9]");
        }
        if s.start_stagger_us < 0.0 {
            return invalid("start_stagger_us must be non-negative");
        }

        let t = &self.tcp;
        if t.mss == 0 {
            return invalid("mss must be positive");
        }
        let rcv_wnd = t.advertised_window << t.window_scale;
        if rcv_wnd < t.mss {
            return invalid("scaled receive window is smaller than one segment");
        }
        if t.initial_window_segments == 0 {
            return invalid("initial_window_segments must be positive");
        }

        let l = &self.link;
        if l.rate_bps == 0 {
            return invalid("rate_bps must be positive");
        }
        if t.mss + crate::aal5::TCPIP_HEADER_BYTES > l.max_frame_bytes {
            return invalid("mss plus headers exceeds max_frame_bytes");
        }

        let w = &self.switch;
        let policy = match w.policy.as_str() {
            "off" => DropPolicy::Off,
            "threshold-crossing" => DropPolicy::ThresholdCrossing,
            "gfr-probabilistic" => DropPolicy::GfrProbabilistic,
            other => return invalid(format!("unknown policy \"{other}\"")),
        };
        if w.capacity_cells == 0 {
            return invalid("capacity_cells must be positive");
        }
        if !(0.0..=1.0).contains(&w.congestion_threshold_frac) {
            return invalid("congestion_threshold_frac must be in [0, 1]");
        }

        let thresholds: Vec<u64> = match (!w.thresholds_cells.is_empty(), !w.shares.is_empty()) {
            (true, true) => return invalid("thresholds_cells and shares are mutually exclusive"),
            (true, false) => w.thresholds_cells.clone(),
            (false, true) => {
                let Some(pool) = w.share_pool_cells else {
                    return invalid("shares requires share_pool_cells");
                };
                let total: f64 = w.shares.iter().sum();
                let shares_valid = w.shares.iter().all(|&x| x.is_finite() && x >= 0.0);
                if !shares_valid || !total.is_finite() || total <= 0.0 {
                    return invalid("shares must be non-negative with a positive sum");
                }
                w.shares
                    .iter()
                    .map(|&x| (pool as f64 * x / total).round() as u64)
                    .collect()
            }
            (false, false) => vec![0; accounts],
        };
        if thresholds.len() != accounts {
            return invalid(format!(
                "expected {accounts} per-circuit thresholds, got {}",
                thresholds.len()
            ));
        }
        let weights = if w.weights.is_empty() {
            vec![1.0; accounts]
        } else {
            w.weights.clone()
        };
        if weights.len() != accounts {
            return invalid(format!(
                "expected {accounts} per-circuit weights, got {}",
                weights.len()
            ));
        }
        if weights.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
            return invalid("weights must lie in (0, 1]");
        }
        if policy == DropPolicy::GfrProbabilistic {
            if w.occupancy_scale <= 1.0 {
                return invalid("occupancy_scale must exceed 1 for the probabilistic policy");
            }
            if thresholds.contains(&0) {
                return invalid("probabilistic policy requires positive per-circuit thresholds");
            }
        }

        Ok(ScenarioConfig {
            name: if s.name.is_empty() {
                "scenario".into()
            } else {
                s.name.clone()
            },
            kind,
            n_conns: s.connections,
            conns_per_vc: per,
            thresholds_cells: thresholds,
            weights,
            policy,
            capacity_cells: w.capacity_cells,
            congestion_threshold_cells: (w.capacity_cells as f64 * w.congestion_threshold_frac)
                as u64,
            occupancy_scale: w.occupancy_scale,
            tag_sensitive: w.tag_sensitive,
            mss: t.mss,
            rcv_wnd,
            delayed_ack: t.delayed_ack,
            max_frame_bytes: l.max_frame_bytes,
            cwnd_drop_threshold: t.cwnd_drop_threshold,
            link_rate_bps: l.rate_bps,
            access_prop: SimTime::from_secs_f64(l.access_prop_us * 1e-6),
            backbone_prop: SimTime::from_secs_f64(l.backbone_prop_ms * 1e-3),
            duration: SimTime::from_secs_f64(s.duration_s),
            warmup_frac: s.warmup_frac,
            seed: s.seed,
            sample_interval: SimTime::from_secs_f64(self.trace.sample_interval_ms * 1e-3),
            start_stagger: SimTime::from_secs_f64(s.start_stagger_us * 1e-6),
            rto_min: SimTime::from_millis(t.rto_min_ms),
            rto_granularity: SimTime::from_millis(t.rto_granularity_ms),
            initial_window_segments: t.initial_window_segments,
        })
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "single-drop125k",
            "single-drop250k",
            "single-drop500k",
            "single-capped",
            "crossing-a",
            "crossing-b",
            "crossing-c",
            "crossing-d",
            "merged-gfr-a",
            "merged-gfr-b",
            "merged-gfr-c",
        ]
    }

    /// Built-in experiment. `None` when the name is unknown.
    pub fn preset(name: &str) -> Option<ScenarioFile> {
        let single = |preset_name: &str, drop: Option<u64>| ScenarioFile {
            scenario: ScenarioSection {
                name: preset_name.into(),
                topology: "per-conn-vc".into(),
                connections: 1,
                connections_per_vc: 1,
                duration_s: 10.0,
                warmup_frac: d_warmup(),
                seed: d_seed(),
                start_stagger_us: d_stagger_us(),
            },
            tcp: TcpSection {
                cwnd_drop_threshold: drop,
                ..TcpSection::default()
            },
            switch: SwitchSection {
                policy: "off".into(),
                capacity_cells: 1_000_000,
                ..SwitchSection::default()
            },
            link: LinkSection::default(),
            trace: TraceSection::default(),
        };

        // Five distinct fair shares, three connections at each share level.
        let crossing = |preset_name: &str, base: &[u64]| ScenarioFile {
            scenario: ScenarioSection {
                name: preset_name.into(),
                topology: "per-conn-vc".into(),
                connections: 15,
                connections_per_vc: 1,
                duration_s: 10.0,
                warmup_frac: d_warmup(),
                seed: d_seed(),
                start_stagger_us: d_stagger_us(),
            },
            tcp: TcpSection::default(),
            switch: SwitchSection {
                policy: "threshold-crossing".into(),
                capacity_cells: 48_000,
                thresholds_cells: base.iter().flat_map(|&r| [r, r, r]).collect(),
                ..SwitchSection::default()
            },
            link: LinkSection::default(),
            trace: TraceSection::default(),
        };

        let merged = |preset_name: &str, thresholds: &[u64]| ScenarioFile {
            scenario: ScenarioSection {
                name: preset_name.into(),
                topology: "merged-vc".into(),
                connections: 15,
                connections_per_vc: 3,
                duration_s: 20.0,
                warmup_frac: d_warmup(),
                seed: d_seed(),
                start_stagger_us: d_stagger_us(),
            },
            tcp: TcpSection::default(),
            switch: SwitchSection {
                policy: "gfr-probabilistic".into(),
                capacity_cells: 48_000,
                thresholds_cells: thresholds.to_vec(),
                ..SwitchSection::default()
            },
            link: LinkSection::default(),
            trace: TraceSection::default(),
        };

        Some(match name {
            "single-drop125k" => single(name, Some(125_000)),
            "single-drop250k" => single(name, Some(250_000)),
            "single-drop500k" => single(name, Some(500_000)),
            "single-capped" => single(name, None),
            "crossing-a" => crossing(name, &[305, 611, 917, 1223, 1528]),
            "crossing-b" => crossing(name, &[458, 917, 1375, 1834, 2293]),
            "crossing-c" => crossing(name, &[611, 1223, 1834, 2446, 3057]),
            "crossing-d" => crossing(name, &[764, 1528, 2293, 3057, 3822]),
            "merged-gfr-a" => merged(name, &[152, 305, 458, 611, 764]),
            "merged-gfr-b" => merged(name, &[305, 611, 917, 1223, 1528]),
            "merged-gfr-c" => merged(name, &[611, 1223, 1834, 2446, 3057]),
            _ => return None,
        })
    }
}

impl ScenarioConfig {
    /// Non-fatal observations worth surfacing before a run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let sum: u64 = self.thresholds_cells.iter().sum();
        if sum > self.capacity_cells {
            out.push(format!(
                "per-circuit thresholds sum to {sum} cells, beyond the buffer capacity {}",
                self.capacity_cells
            ));
        }
        if self.policy == DropPolicy::GfrProbabilistic {
            let band: f64 = self.occupancy_scale * sum as f64;
            if band > self.capacity_cells as f64 {
                out.push(format!(
                    "discard bands allow up to {band:.0} buffered cells, beyond capacity {}",
                    self.capacity_cells
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [scenario]
        topology = "per-conn-vc"
        connections = 2
        duration_s = 1.0

        [switch]
        policy = "threshold-crossing"
        thresholds_cells = [100, 200]
    "#;

    #[test]
    fn minimal_file_resolves_with_defaults() {
        let cfg = ScenarioFile::from_toml_str(MINIMAL)
            .expect("parses")
            .resolve()
            .expect("resolves");
        assert_eq!(cfg.n_conns, 2);
        assert_eq!(cfg.mss, 1024);
        assert_eq!(cfg.rcv_wnd, 600_000);
        assert_eq!(cfg.link_rate_bps, 155_520_000);
        assert_eq!(cfg.thresholds_cells, vec![100, 200]);
        assert_eq!(cfg.weights, vec![1.0, 1.0]);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioFile::from_toml_str(
            &MINIMAL.replace("duration_s = 1.0", "duration_s = 1.0\nspeed = 99"),
        )
        .expect_err("unknown key");
        assert!(matches!(err, ScenarioError::Parse(_)));
    }

    #[test]
    fn threshold_count_must_match_circuits() {
        let err = ScenarioFile::from_toml_str(&MINIMAL.replace("[100, 200]", "[100]"))
            .expect("parses")
            .resolve()
            .expect_err("mismatched thresholds");
        assert!(err.to_string().contains("thresholds"));
    }

    #[test]
    fn probabilistic_policy_rejects_flat_band() {
        let text = MINIMAL
            .replace("threshold-crossing", "gfr-probabilistic")
            .replace(
                "thresholds_cells = [100, 200]",
                "thresholds_cells = [100, 200]\noccupancy_scale = 1.0",
            );
        let err = ScenarioFile::from_toml_str(&text)
            .expect("parses")
            .resolve()
            .expect_err("flat band");
        assert!(err.to_string().contains("occupancy_scale"));
    }

    #[test]
    fn shares_scale_to_the_pool() {
        let text = MINIMAL.replace(
            "thresholds_cells = [100, 200]",
            "shares = [1.0, 3.0]\nshare_pool_cells = 400",
        );
        let cfg = ScenarioFile::from_toml_str(&text)
            .expect("parses")
            .resolve()
            .expect("resolves");
        assert_eq!(cfg.thresholds_cells, vec![100, 300]);
    }

    #[test]
    fn merged_topology_requires_divisible_groups() {
        let text = r#"
            [scenario]
            topology = "merged-vc"
            connections = 10
            connections_per_vc = 3
            duration_s = 1.0
        "#;
        let err = ScenarioFile::from_toml_str(text)
            .expect("parses")
            .resolve()
            .expect_err("10 % 3 != 0");
        assert!(err.to_string().contains("divide"));
    }

    #[test]
    fn every_preset_resolves() {
        for name in ScenarioFile::preset_names() {
            let file = ScenarioFile::preset(name).expect("preset exists");
            let cfg = file.resolve().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, *name);
        }
        assert!(ScenarioFile::preset("no-such-preset").is_none());
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for name in ScenarioFile::preset_names() {
            let file = ScenarioFile::preset(name).expect("preset exists");
            let text = file.to_toml_string();
            let back = ScenarioFile::from_toml_str(&text)
                .unwrap_or_else(|e| panic!("{name} reparse: {e}"));
            let a = file.resolve().expect("original resolves");
            let b = back.resolve().expect("round trip resolves");
            assert_eq!(a.thresholds_cells, b.thresholds_cells);
            assert_eq!(a.policy, b.policy);
            assert_eq!(a.n_conns, b.n_conns);
            assert_eq!(a.cwnd_drop_threshold, b.cwnd_drop_threshold);
        }
    }

    #[test]
    fn oversubscribed_thresholds_warn_but_resolve() {
        let text = MINIMAL.replace("[100, 200]", "[40000, 30000]");
        let cfg = ScenarioFile::from_toml_str(&text)
            .expect("parses")
            .resolve()
            .expect("resolves");
        assert!(!cfg.warnings().is_empty());
    }
}
