//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 42
//!
//! [sequence]
//! profile = "loot"          # built-in synthetic profile
//! # rd_log = "points.csv"   # fit R-D models from a log instead of sweeping
//! # noise_sigma = 0.1
//!
//! [target]
//! source = "fixed_qp_anchor"   # or "explicit" with `bits = ...`
//! qp_g = 27
//! qp_c = 32
//!
//! [allocator]
//! w = 25.0
//! kappa = 0.3
//!
//! [twopass]
//! pre_encode_qps = [22, 27, 32, 37]
//! share_table = "average"   # or "per_sequence"
//!
//! [output]
//! dir = "out"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocator::{AllocationParams, LambdaSearchConfig, DEFAULT_WEIGHT};
use crate::codec_sim::{builtin_profiles, Drift, SequenceProfile, COLOR_QP_OFFSET};
use crate::error::{Error, Result};
use crate::models::{DEFAULT_KAPPA, QP_MAX};
use crate::twopass::{ControllerConfig, IframeShareTable, DEFAULT_DECAY, DEFAULT_PRE_ENCODE_QPS};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub sequence: SequenceSection,
    pub target: TargetSection,
    pub allocator: AllocatorSection,
    pub twopass: TwopassSection,
    pub report: ReportSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSection {
    pub profile: String,
    /// Full profile definition; replaces the built-in one named by `profile`.
    pub custom: Option<SequenceProfile>,
    pub rd_log: Option<PathBuf>,
    pub n_pc_frames: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub drift: Option<Drift>,
}

impl Default for SequenceSection {
    fn default() -> Self {
        SequenceSection {
            profile: "loot".into(),
            custom: None,
            rd_log: None,
            n_pc_frames: None,
            noise_sigma: None,
            drift: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    FixedQpAnchor,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub source: TargetSource,
    pub qp_g: u8,
    pub qp_c: u8,
    /// Total bits including occupancy and patch, for `source = "explicit"`.
    pub bits: Option<f64>,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection {
            source: TargetSource::FixedQpAnchor,
            qp_g: 27,
            qp_c: 27 + COLOR_QP_OFFSET,
            bits: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocatorSection {
    pub w: f64,
    pub kappa: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_init: f64,
    pub max_iter: u32,
    pub theta_g: Option<f64>,
    pub theta_c: Option<f64>,
    /// Bits per rate unit of the R-D models the allocator works with.
    pub rate_unit_bits: f64,
}

impl Default for AllocatorSection {
    fn default() -> Self {
        let s = LambdaSearchConfig::default();
        AllocatorSection {
            w: DEFAULT_WEIGHT,
            kappa: DEFAULT_KAPPA,
            lambda_min: s.lambda_min,
            lambda_max: s.lambda_max,
            lambda_init: s.lambda_init,
            max_iter: s.max_iter,
            theta_g: None,
            theta_c: None,
            rate_unit_bits: 1e6,
        }
    }
}

impl AllocatorSection {
    pub fn search(&self) -> LambdaSearchConfig {
        LambdaSearchConfig {
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            lambda_init: self.lambda_init,
            max_iter: self.max_iter,
        }
    }

    pub fn params(&self, theta_g: f64, theta_c: f64) -> AllocationParams {
        AllocationParams {
            theta_g,
            theta_c,
            w: self.w,
            kappa: self.kappa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareTableChoice {
    Average,
    PerSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwopassSection {
    pub pre_encode_qps: Vec<u8>,
    pub share_table: ShareTableChoice,
    pub decay: f64,
    pub p_floor_fraction: f64,
    pub gop_floor_fraction: f64,
}

impl Default for TwopassSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        TwopassSection {
            pre_encode_qps: DEFAULT_PRE_ENCODE_QPS.to_vec(),
            share_table: ShareTableChoice::Average,
            decay: DEFAULT_DECAY,
            p_floor_fraction: c.p_floor_fraction,
            gop_floor_fraction: c.gop_floor_fraction,
        }
    }
}

impl TwopassSection {
    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            decay: self.decay,
            p_floor_fraction: self.p_floor_fraction,
            gop_floor_fraction: self.gop_floor_fraction,
        }
    }

    pub fn table_for(&self, sequence: &str) -> IframeShareTable {
        match self.share_table {
            ShareTableChoice::Average => IframeShareTable::average(),
            ShareTableChoice::PerSequence => {
                IframeShareTable::for_sequence(sequence).unwrap_or_else(IframeShareTable::average)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Geometry QPs of the fixed-QP anchors used for BD-rate tables; color
    /// QP is offset by +5. Fewer than 4 disables the tables.
    pub bd_sweep_qp_g: Vec<u8>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            bd_sweep_qp_g: vec![22, 27, 32, 37],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
        }
    }
}

fn check_qp(name: &str, qp: u8) -> Result<()> {
    if (1..=QP_MAX).contains(&qp) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {qp} outside [1, {QP_MAX}]")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate_values()?;
        Ok(cfg)
    }

    /// Load, resolve relative paths against the file's directory, validate.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(log) = cfg.sequence.rd_log.as_mut() {
            if log.is_relative() {
                *log = base.join(&*log);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# config not representable as TOML: {e}\n"))
    }

    /// Checks that need no filesystem access.
    pub fn validate_values(&self) -> Result<()> {
        if self.sequence.custom.is_none() && SequenceProfile::builtin(&self.sequence.profile).is_none() {
            let known: Vec<_> = builtin_profiles().collect();
            return Err(Error::Config(format!(
                "unknown profile `{}` (built-in: {})",
                self.sequence.profile,
                known.join(", ")
            )));
        }
        if let Some(s) = self.sequence.noise_sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("noise_sigma = {s} must be >= 0")));
            }
        }
        if self.sequence.n_pc_frames == Some(0) {
            return Err(Error::Config("n_pc_frames must be >= 1".into()));
        }
        match self.target.source {
            TargetSource::FixedQpAnchor => {
                check_qp("target.qp_g", self.target.qp_g)?;
                check_qp("target.qp_c", self.target.qp_c)?;
            }
            TargetSource::Explicit => match self.target.bits {
                Some(b) if b.is_finite() && b > 0.0 => {}
                other => {
                    return Err(Error::Config(format!(
                        "explicit target needs positive `bits`, got {other:?}"
                    )))
                }
            },
        }
        let a = &self.allocator;
        if !(a.w.is_finite() && a.w > 0.0) {
            return Err(Error::Config(format!("allocator.w = {} must be positive", a.w)));
        }
        if !a.kappa.is_finite() {
            return Err(Error::Config("allocator.kappa must be finite".into()));
        }
        a.search().validate().map_err(|e| Error::Config(e.to_string()))?;
        for (name, v) in [("theta_g", a.theta_g), ("theta_c", a.theta_c)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Config(format!("allocator.{name} = {v} must be positive")));
                }
            }
        }
        if !(a.rate_unit_bits.is_finite() && a.rate_unit_bits > 0.0) {
            return Err(Error::Config("allocator.rate_unit_bits must be positive".into()));
        }
        let t = &self.twopass;
        if t.pre_encode_qps.len() != 4 {
            return Err(Error::Config("twopass.pre_encode_qps needs exactly 4 QPs".into()));
        }
        for (i, &qp) in t.pre_encode_qps.iter().enumerate() {
            check_qp("twopass.pre_encode_qps", qp)?;
            if t.pre_encode_qps[..i].contains(&qp) {
                return Err(Error::Config(format!("duplicate pre-encode QP {qp}")));
            }
        }
        if !(t.decay > 0.0 && t.decay <= 1.0) {
            return Err(Error::Config(format!("twopass.decay = {} must be in (0, 1]", t.decay)));
        }
        for (name, v) in [
            ("p_floor_fraction", t.p_floor_fraction),
            ("gop_floor_fraction", t.gop_floor_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("twopass.{name} = {v} must be in (0, 1]")));
            }
        }
        for &qp in &self.report.bd_sweep_qp_g {
            check_qp("report.bd_sweep_qp_g", qp)?;
            check_qp("report.bd_sweep_qp_g + 5", qp.saturating_add(COLOR_QP_OFFSET))?;
        }
        self.profile()?;
        Ok(())
    }

    /// All checks, including that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.validate_values()?;
        if let Some(log) = &self.sequence.rd_log {
            if !log.is_file() {
                return Err(Error::Config(format!("rd_log {} does not exist", log.display())));
            }
        }
        Ok(())
    }

    /// The simulator profile with this config's overrides applied.
    pub fn profile(&self) -> Result<SequenceProfile> {
        let mut p = match &self.sequence.custom {
            Some(p) => p.clone(),
            None => SequenceProfile::builtin(&self.sequence.profile)
                .ok_or_else(|| Error::Config(format!("unknown profile `{}`", self.sequence.profile)))?,
        };
        if let Some(n) = self.sequence.n_pc_frames {
            p.n_pc_frames = n;
        }
        if let Some(s) = self.sequence.noise_sigma {
            p.noise_sigma = s;
        }
        if let Some(d) = &self.sequence.drift {
            p.drift = d.clone();
        }
        p.seed = self.seed;
        p.validate().map_err(|e| Error::Config(format!("profile: {e}")))?;
        Ok(p)
    }
}
