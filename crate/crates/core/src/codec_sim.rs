//! Deterministic stand-in for the point cloud codec.
//!
//! A sequence of `n` point cloud frames becomes `2n` video frames per video
//! stream (near image as I, far image as P) plus occupancy and patch
//! substreams of constant size. I-frame bits follow a power law in QP; a
//! P-frame costs its GOP's I-frame mean times `(1 - s) / s`, with `s` the
//! I-frame share at that QP. Multiplicative log-normal noise is drawn from a
//! ChaCha stream positioned by `(seed, stream, frame_index, qp)`, so every
//! result is a pure function of the request.
//!
//! Quality comes from ground-truth R-D laws evaluated at the GOP-equivalent
//! rate of the frame (its bits divided by its expected share of the GOP),
//! measured in `rd_rate_unit` bits. Color quality adds the dependency term
//! `kappa * D_G + b` of the co-located geometry frame when it is known.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ColorRdModel, GeometryRdModel, QualityDependencyModel, RqModel, QP_MAX};
use crate::stream::{FrameType, VideoStream};
use crate::twopass::{FrameRecord, IframeShareTable};

/// One frame to encode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRequest {
    pub stream: VideoStream,
    pub frame_type: FrameType,
    pub frame_index: usize,
    pub qp: u8,
    /// Quality of the co-located geometry frame, used by color frames.
    pub geometry_psnr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodeResult {
    pub bits: f64,
    pub psnr: f64,
}

/// Anything that can code a single video frame at a fixed QP.
pub trait Encoder {
    fn encode(&self, req: &FrameRequest) -> Result<EncodeResult>;
}

/// Per-frame multiplier on the I-frame scale.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    #[default]
    None,
    /// Scale jumps by `factor` from video frame `from_frame` on.
    Step { from_frame: usize, factor: f64 },
    /// Explicit multiplier per video frame; frames past the end use 1.
    PerFrame { factors: Vec<f64> },
}

impl Drift {
    pub fn at(&self, frame_index: usize) -> f64 {
        match self {
            Drift::None => 1.0,
            Drift::Step { from_frame, factor } => {
                if frame_index >= *from_frame {
                    *factor
                } else {
                    1.0
                }
            }
            Drift::PerFrame { factors } => factors.get(frame_index).copied().unwrap_or(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = match self {
            Drift::None => false,
            Drift::Step { factor, .. } => !(factor.is_finite() && *factor > 0.0),
            Drift::PerFrame { factors } => factors.iter().any(|f| !(f.is_finite() && *f > 0.0)),
        };
        if bad {
            Err(Error::Invalid("drift factors must be positive".into()))
        } else {
            Ok(())
        }
    }
}

/// Ground truth of one synthetic sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceProfile {
    pub name: String,
    pub n_pc_frames: usize,
    pub occ_bits_per_frame: f64,
    pub patch_bits_per_frame: f64,
    /// I-frame bits of the geometry video versus QP.
    pub gv_law: RqModel,
    /// I-frame bits of the color video versus QP.
    pub cv_law: RqModel,
    pub share_table: IframeShareTable,
    pub noise_sigma: f64,
    pub drift: Drift,
    pub gv_rd: GeometryRdModel,
    pub cv_rd: ColorRdModel,
    pub dependency: QualityDependencyModel,
    /// Bits per rate unit of the ground-truth R-D laws.
    pub rd_rate_unit: f64,
    pub seed: u64,
}

/// Per-sequence knobs of the built-in profiles:
/// (name, geometry I bits at QP 27, color I bits at QP 32, geometry exponent,
/// color exponent, occupancy bits per frame).
const BUILTIN: [(&str, f64, f64, f64, f64, f64); 7] = [
    ("loot", 110e3, 130e3, -3.0, -2.6, 20e3),
    ("redandblack", 125e3, 150e3, -2.9, -2.5, 22e3),
    ("soldier", 140e3, 170e3, -3.1, -2.7, 24e3),
    ("queen", 95e3, 120e3, -2.8, -2.4, 18e3),
    ("longdress", 150e3, 200e3, -3.0, -2.5, 23e3),
    ("basketball", 105e3, 125e3, -3.2, -2.8, 26e3),
    ("dancer", 100e3, 120e3, -3.1, -2.7, 25e3),
];

/// Names of the built-in profiles.
pub fn builtin_profiles() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|b| b.0)
}

impl SequenceProfile {
    /// A built-in synthetic profile named after a test sequence. The numbers
    /// are plausible magnitudes, not measurements of that content.
    pub fn builtin(name: &str) -> Option<SequenceProfile> {
        let key = name.to_ascii_lowercase();
        let &(name, gv_i27, cv_i32, gv_b, cv_b, occ) = BUILTIN.iter().find(|b| b.0 == key)?;
        let gv_law = RqModel::new(gv_i27 / 27f64.powf(gv_b), gv_b).ok()?;
        let cv_law = RqModel::new(cv_i32 / 32f64.powf(cv_b), cv_b).ok()?;
        Some(SequenceProfile {
            name: name.to_string(),
            n_pc_frames: 32,
            occ_bits_per_frame: occ,
            patch_bits_per_frame: occ / 10.0,
            gv_law,
            cv_law,
            share_table: IframeShareTable::for_sequence(name).unwrap_or_else(IframeShareTable::average),
            noise_sigma: 0.0,
            drift: Drift::None,
            gv_rd: GeometryRdModel::new(-0.0685, 70.55).ok()?,
            cv_rd: ColorRdModel::new(138.6, -97.0).ok()?,
            dependency: QualityDependencyModel::default(),
            rd_rate_unit: 1e6,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pc_frames == 0 {
            return Err(Error::Invalid("profile needs at least one point cloud frame".into()));
        }
        if !(self.occ_bits_per_frame >= 0.0 && self.patch_bits_per_frame >= 0.0) {
            return Err(Error::Invalid("constant substream bits must be non-negative".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Invalid(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.rd_rate_unit.is_finite() && self.rd_rate_unit > 0.0) {
            return Err(Error::Invalid("rd_rate_unit must be positive".into()));
        }
        // Re-run the model constructors: deserialized values skip them.
        RqModel::new(self.gv_law.a(), self.gv_law.b())?;
        RqModel::new(self.cv_law.a(), self.cv_law.b())?;
        GeometryRdModel::new(self.gv_rd.a_g(), self.gv_rd.b_g())?;
        ColorRdModel::new(self.cv_rd.a_c(), self.cv_rd.b_c())?;
        IframeShareTable::new(self.share_table.rows().to_vec())?;
        self.drift.validate()
    }

    /// Video frames per stream.
    pub fn n_video_frames(&self) -> usize {
        2 * self.n_pc_frames
    }

    fn law(&self, stream: VideoStream) -> &RqModel {
        match stream {
            VideoStream::Geometry => &self.gv_law,
            VideoStream::Color => &self.cv_law,
        }
    }

    /// Noise-free bits of a frame.
    pub fn mean_bits(&self, stream: VideoStream, frame_type: FrameType, frame_index: usize, qp: u8) -> f64 {
        let i_mean = self.law(stream).eval_real(f64::from(qp)) * self.drift.at(frame_index);
        match frame_type {
            FrameType::I => i_mean,
            FrameType::P => i_mean * self.share_table.p_to_i_ratio(qp),
        }
    }

    /// Standard normal draw keyed by the request.
    fn unit_noise(&self, stream: VideoStream, frame_index: usize, qp: u8) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        let counter = (frame_index as u128) * u128::from(QP_MAX + 1) + u128::from(qp);
        rng.set_word_pos(counter * 16);
        StandardNormal.sample(&mut rng)
    }

    pub fn encode_frame(&self, req: &FrameRequest) -> Result<EncodeResult> {
        if !(1..=QP_MAX).contains(&req.qp) {
            return Err(Error::Domain(format!("qp {} outside [1, {QP_MAX}]", req.qp)));
        }
        if req.frame_index >= self.n_video_frames() {
            return Err(Error::Domain(format!(
                "frame {} past the end of a {}-frame stream",
                req.frame_index,
                self.n_video_frames()
            )));
        }
        let mut bits = self.mean_bits(req.stream, req.frame_type, req.frame_index, req.qp);
        if self.noise_sigma > 0.0 {
            bits *= (self.noise_sigma * self.unit_noise(req.stream, req.frame_index, req.qp)).exp();
        }

        let share = self.share_table.share(req.qp);
        let gop_share = match req.frame_type {
            FrameType::I => share,
            FrameType::P => 1.0 - share,
        };
        let rate = bits / gop_share / self.rd_rate_unit;
        let psnr = match req.stream {
            VideoStream::Geometry => self.gv_rd.eval(rate)?,
            VideoStream::Color => {
                let own = self.cv_rd.eval(rate)?;
                match req.geometry_psnr {
                    Some(d_g) => own + self.dependency.eval(d_g),
                    None => own,
                }
            }
        };
        Ok(EncodeResult { bits, psnr })
    }

    /// Total occupancy and patch bits of the sequence; independent of QP.
    pub fn constant_substream_bits(&self) -> (f64, f64) {
        let n = self.n_pc_frames as f64;
        (self.occ_bits_per_frame * n, self.patch_bits_per_frame * n)
    }
}

impl Encoder for SequenceProfile {
    fn encode(&self, req: &FrameRequest) -> Result<EncodeResult> {
        self.encode_frame(req)
    }
}

pub fn encode_frame(
    profile: &SequenceProfile,
    stream: VideoStream,
    frame_type: FrameType,
    frame_index: usize,
    qp: u8,
) -> Result<EncodeResult> {
    profile.encode_frame(&FrameRequest {
        stream,
        frame_type,
        frame_index,
        qp,
        geometry_psnr: None,
    })
}

pub fn constant_substream_bits(profile: &SequenceProfile) -> (f64, f64) {
    profile.constant_substream_bits()
}

/// Bits and mean quality of one run, split by substream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub gv_bits: f64,
    pub cv_bits: f64,
    pub occ_bits: f64,
    pub patch_bits: f64,
    pub total_bits: f64,
    pub d_g: f64,
    pub d_c: f64,
}

impl RunTotals {
    /// Sum the video ledger and add the constant substreams.
    pub fn from_ledger(profile: &SequenceProfile, ledger: &[FrameRecord]) -> RunTotals {
        let sum_bits = |s: VideoStream| {
            ledger
                .iter()
                .filter(|r| r.stream == s)
                .map(|r| r.actual_bits)
                .sum::<f64>()
        };
        let mean_psnr = |s: VideoStream| {
            let (sum, n) = ledger
                .iter()
                .filter(|r| r.stream == s)
                .fold((0.0, 0usize), |(sum, n), r| (sum + r.psnr, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        };
        let (occ_bits, patch_bits) = profile.constant_substream_bits();
        let gv_bits = sum_bits(VideoStream::Geometry);
        let cv_bits = sum_bits(VideoStream::Color);
        RunTotals {
            gv_bits,
            cv_bits,
            occ_bits,
            patch_bits,
            total_bits: gv_bits + cv_bits + occ_bits + patch_bits,
            d_g: mean_psnr(VideoStream::Geometry),
            d_c: mean_psnr(VideoStream::Color),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedQpRun {
    pub qp_g: u8,
    pub qp_c: u8,
    pub totals: RunTotals,
    pub ledger: Vec<FrameRecord>,
}

/// Usual color QP offset over geometry QP in common test conditions.
pub const COLOR_QP_OFFSET: u8 = 5;

/// Encode every frame at constant QPs. The totals serve as rate targets.
pub fn fixed_qp_reference_run(profile: &SequenceProfile, qp_g: u8, qp_c: u8) -> Result<FixedQpRun> {
    let mut ledger: Vec<FrameRecord> = Vec::with_capacity(2 * profile.n_video_frames());
    for (stream, qp) in [(VideoStream::Geometry, qp_g), (VideoStream::Color, qp_c)] {
        for frame_index in 0..profile.n_video_frames() {
            let frame_type = FrameType::of_video_frame(frame_index);
            let geometry_psnr = match stream {
                VideoStream::Color => Some(ledger[frame_index].psnr),
                VideoStream::Geometry => None,
            };
            let res = profile.encode_frame(&FrameRequest {
                stream,
                frame_type,
                frame_index,
                qp,
                geometry_psnr,
            })?;
            ledger.push(FrameRecord {
                frame_index,
                frame_type,
                stream,
                qp,
                target_bits: None,
                actual_bits: res.bits,
                psnr: res.psnr,
            });
        }
    }
    let totals = RunTotals::from_ledger(profile, &ledger);
    Ok(FixedQpRun {
        qp_g,
        qp_c,
        totals,
        ledger,
    })
}
