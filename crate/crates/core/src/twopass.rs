//! Two-pass rate control for the IP-structured geometry and color videos.
//!
//! The first pass encodes the first frame of a stream at four probe QPs and
//! fits the power-law R-Q model in the log domain. The probe rates also pick
//! the I/P split of every IP GOP: the probe closest to the GOP budget names a
//! QP, and the I-frame share of the GOP is read from a table indexed by QP.
//! The second pass walks the GOPs in order, turning frame budgets into QPs
//! through the current R-Q model and refitting the model after every frame.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::codec_sim::{Encoder, FrameRequest};
use crate::error::{Error, Result};
use crate::metrics::bitrate_error;
use crate::models::{fit_rq, fit_weighted_least_squares, FitReport, RdSample, RqModel, QP_MAX};
use crate::stream::{FrameType, VideoStream};

/// Default probe QPs of the first pass.
pub const DEFAULT_PRE_ENCODE_QPS: [u8; 4] = [22, 27, 32, 37];

/// Per-sample decay of the weighted R-Q refit.
pub const DEFAULT_DECAY: f64 = 0.9;

/// QPs at which I-frame shares were measured.
const SHARE_QPS: [u8; 5] = [12, 20, 28, 36, 44];

/// Measured I-frame share of an IP GOP, per sequence, at `SHARE_QPS`.
const SEQUENCE_SHARES: [(&str, [f64; 5]); 7] = [
    ("loot", [0.7229, 0.8223, 0.9049, 0.9570, 0.9745]),
    ("redandblack", [0.6939, 0.8189, 0.8945, 0.9226, 0.9697]),
    ("soldier", [0.7149, 0.8281, 0.9029, 0.9522, 0.9827]),
    ("queen", [0.6803, 0.7979, 0.8739, 0.9165, 0.9852]),
    ("longdress", [0.7140, 0.8243, 0.8893, 0.9308, 0.9730]),
    ("basketball", [0.7365, 0.8268, 0.8956, 0.9300, 0.9881]),
    ("dancer", [0.7381, 0.8337, 0.8887, 0.9352, 0.9745]),
];

/// Average over all sequences.
const AVERAGE_SHARES: [f64; 5] = [0.7144, 0.8217, 0.8928, 0.9349, 0.9782];

/// Sequence names with a measured share row.
pub fn known_sequences() -> impl Iterator<Item = &'static str> {
    SEQUENCE_SHARES.iter().map(|(name, _)| *name)
}

/// Fraction of an IP GOP's bits spent on its I-frame, as a function of QP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IframeShareTable {
    /// `(qp, share)` sorted by ascending QP.
    rows: Vec<(u8, f64)>,
}

impl IframeShareTable {
    pub fn new(mut rows: Vec<(u8, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Invalid("share table has no rows".into()));
        }
        rows.sort_by_key(|r| r.0);
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 || w[0].1 >= w[1].1 {
                return Err(Error::Invalid(format!(
                    "share table must strictly increase with QP: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(r) = rows.iter().find(|r| !(r.1 > 0.5 && r.1 < 1.0) || r.0 > QP_MAX) {
            return Err(Error::Invalid(format!("share table row {r:?} out of range")));
        }
        Ok(IframeShareTable { rows })
    }

    /// The cross-sequence average row.
    pub fn average() -> Self {
        IframeShareTable {
            rows: SHARE_QPS.into_iter().zip(AVERAGE_SHARES).collect(),
        }
    }

    /// The measured row of one named sequence (case-insensitive).
    pub fn for_sequence(name: &str) -> Option<Self> {
        let name = name.to_ascii_lowercase();
        SEQUENCE_SHARES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, shares)| IframeShareTable {
                rows: SHARE_QPS.into_iter().zip(*shares).collect(),
            })
    }

    pub fn rows(&self) -> &[(u8, f64)] {
        &self.rows
    }

    /// Exact at tabulated QPs, linear in between, clamped past the ends.
    pub fn share(&self, qp: u8) -> f64 {
        let first = self.rows[0];
        let last = self.rows[self.rows.len() - 1];
        if qp <= first.0 {
            return first.1;
        }
        if qp >= last.0 {
            return last.1;
        }
        let hi = self.rows.iter().position(|r| r.0 >= qp).unwrap_or(self.rows.len() - 1);
        let (q1, s1) = self.rows[hi];
        if q1 == qp {
            return s1;
        }
        let (q0, s0) = self.rows[hi - 1];
        s0 + (s1 - s0) * f64::from(qp - q0) / f64::from(q1 - q0)
    }

    /// Bits of a P-frame per bit of the I-frame of the same GOP.
    pub fn p_to_i_ratio(&self, qp: u8) -> f64 {
        let s = self.share(qp);
        (1.0 - s) / s
    }
}

pub fn iframe_share(table: &IframeShareTable, qp: u8) -> f64 {
    table.share(qp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreEncodeReport {
    pub stream: VideoStream,
    pub samples: Vec<RdSample>,
    pub model: RqModel,
    pub fit: FitReport,
}

impl PreEncodeReport {
    /// Total bits spent by the probes. These are not charged to the budget.
    pub fn probe_bits(&self) -> f64 {
        self.samples.iter().map(|s| s.bits).sum()
    }

    /// QP of the probe whose rate is closest to `target`; ties go to the
    /// larger QP.
    pub fn guiding_qp(&self, target: f64) -> u8 {
        let mut best = &self.samples[0];
        for s in &self.samples[1..] {
            let d = (s.bits - target).abs();
            let d_best = (best.bits - target).abs();
            if d < d_best || (d == d_best && s.qp > best.qp) {
                best = s;
            }
        }
        best.qp
    }
}

/// Encode the first frame of `stream` at each probe QP and fit the R-Q model.
pub fn pre_encode<E: Encoder + ?Sized>(encoder: &E, stream: VideoStream, qps: &[u8]) -> Result<PreEncodeReport> {
    if qps.len() != 4 {
        return Err(Error::Invalid(format!(
            "pre-encoding needs exactly 4 QPs, got {}",
            qps.len()
        )));
    }
    for (i, &qp) in qps.iter().enumerate() {
        if !(1..=QP_MAX).contains(&qp) {
            return Err(Error::Invalid(format!("pre-encode QP {qp} outside [1, {QP_MAX}]")));
        }
        if qps[..i].contains(&qp) {
            return Err(Error::Invalid(format!("duplicate pre-encode QP {qp}")));
        }
    }
    let mut samples = Vec::with_capacity(4);
    for &qp in qps {
        let res = encoder.encode(&FrameRequest {
            stream,
            frame_type: FrameType::I,
            frame_index: 0,
            qp,
            geometry_psnr: None,
        })?;
        samples.push(RdSample::new(qp, res.bits, Some(res.psnr).filter(|p| *p > 0.0))?);
    }
    if samples.iter().all(|s| s.bits == samples[0].bits) {
        return Err(Error::Fit(format!(
            "{stream} pre-encode produced identical bits at every QP"
        )));
    }
    let (model, fit) = fit_rq(&samples)?;
    Ok(PreEncodeReport {
        stream,
        samples,
        model,
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GopPlan {
    pub gop_index: usize,
    pub target_bits: f64,
    pub i_bits: f64,
    pub p_bits: f64,
    pub guiding_qp: u8,
}

/// Split one GOP budget between its I- and P-frame.
pub fn split_gop(gop_index: usize, target_bits: f64, report: &PreEncodeReport, table: &IframeShareTable) -> GopPlan {
    let guiding_qp = report.guiding_qp(target_bits);
    let i_bits = table.share(guiding_qp) * target_bits;
    GopPlan {
        gop_index,
        target_bits,
        i_bits,
        p_bits: target_bits - i_bits,
        guiding_qp,
    }
}

/// Budget of GOP `k` under the sliding window: its planned share plus an
/// even spread of whatever the earlier GOPs over- or under-spent.
/// `consumed` is the actual spend of GOPs `0..k`.
pub fn window_target(plans: &[GopPlan], k: usize, consumed: f64, floor_fraction: f64) -> f64 {
    let planned_total: f64 = plans.iter().map(|p| p.target_bits).sum();
    let planned_left: f64 = plans[k..].iter().map(|p| p.target_bits).sum();
    let remaining_gops = (plans.len() - k) as f64;
    let correction = ((planned_total - consumed) - planned_left) / remaining_gops;
    let base = plans[k].target_bits;
    (base + correction).max(floor_fraction * base)
}

/// Plan every GOP of a stream, assuming each GOP spends exactly its budget.
pub fn plan_gops(
    stream_target_bits: f64,
    n_gops: usize,
    report: &PreEncodeReport,
    table: &IframeShareTable,
) -> Result<Vec<GopPlan>> {
    if n_gops == 0 {
        return Err(Error::Invalid("need at least one GOP".into()));
    }
    if !(stream_target_bits.is_finite() && stream_target_bits > 0.0) {
        return Err(Error::Domain(format!(
            "stream target must be positive, got {stream_target_bits}"
        )));
    }
    let mut remaining = stream_target_bits;
    let mut plans = Vec::with_capacity(n_gops);
    for k in 0..n_gops {
        let target = if k + 1 == n_gops {
            remaining
        } else {
            remaining / (n_gops - k) as f64
        };
        remaining -= target;
        plans.push(split_gop(k, target, report, table));
    }
    Ok(plans)
}

/// Refit `ln R = ln a + b ln QP` over `history` (oldest first) with weights
/// `decay^age`. The previous model is kept when the history cannot identify
/// a slope or the refit is not a decreasing law.
pub fn update_rq_model(model: &RqModel, history: &[RdSample], decay: f64) -> RqModel {
    let Some(first) = history.first() else {
        return *model;
    };
    if history.iter().all(|s| s.qp == first.qp) || history.iter().any(|s| s.qp == 0) {
        return *model;
    }
    let n = history.len();
    let xs: Vec<f64> = history.iter().map(|s| f64::from(s.qp).ln()).collect();
    let ys: Vec<f64> = history.iter().map(|s| s.bits.ln()).collect();
    let ws: Vec<f64> = (0..n).map(|i| decay.powi((n - 1 - i) as i32)).collect();
    match fit_weighted_least_squares(&xs, &ys, &ws) {
        Ok(fit) if fit.slope < 0.0 => RqModel::new(fit.intercept.exp(), fit.slope).unwrap_or(*model),
        _ => *model,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub frame_type: FrameType,
    pub stream: VideoStream,
    pub qp: u8,
    /// `None` for frames encoded without a rate target.
    pub target_bits: Option<f64>,
    pub actual_bits: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub decay: f64,
    /// Lowest P-frame budget as a fraction of its planned budget.
    pub p_floor_fraction: f64,
    /// Lowest GOP budget as a fraction of its planned budget.
    pub gop_floor_fraction: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            decay: DEFAULT_DECAY,
            p_floor_fraction: 0.1,
            gop_floor_fraction: 0.1,
        }
    }
}

/// Everything the second pass needs for one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamPlan {
    pub stream: VideoStream,
    pub gops: Vec<GopPlan>,
    pub pre_encode: PreEncodeReport,
    /// Starting I-frame model, normally the pre-encode fit.
    pub model: RqModel,
}

impl StreamPlan {
    pub fn new(pre_encode: PreEncodeReport, gops: Vec<GopPlan>) -> Self {
        StreamPlan {
            stream: pre_encode.stream,
            model: pre_encode.model,
            gops,
            pre_encode,
        }
    }

    pub fn target_bits(&self) -> f64 {
        self.gops.iter().map(|g| g.target_bits).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub stream: VideoStream,
    pub target_bits: f64,
    pub actual_bits: f64,
    pub bitrate_error: f64,
    pub probe_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondPassOutcome {
    pub ledger: Vec<FrameRecord>,
    /// GOP plans as actually used, after window correction.
    pub gops: Vec<(VideoStream, GopPlan)>,
    pub streams: Vec<StreamSummary>,
    pub total_target: f64,
    pub total_actual: f64,
    pub total_error: f64,
}

fn error_or_zero(actual: f64, target: f64) -> f64 {
    if target > 0.0 {
        bitrate_error(actual, target).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// P-frame history seeded from the probes through the share table, so the
/// P model starts with the probes' QP spread.
fn p_seed_history(report: &PreEncodeReport, table: &IframeShareTable) -> Vec<RdSample> {
    report
        .samples
        .iter()
        .map(|s| RdSample {
            qp: s.qp,
            bits: s.bits * table.p_to_i_ratio(s.qp),
            psnr: None,
        })
        .collect()
}

fn code_frame<E: Encoder + ?Sized>(
    encoder: &E,
    stream: VideoStream,
    frame_index: usize,
    model: &RqModel,
    target: f64,
    geometry_psnr: &HashMap<usize, f64>,
) -> Result<FrameRecord> {
    let qp = model.invert(target)?;
    let frame_type = FrameType::of_video_frame(frame_index);
    let res = encoder.encode(&FrameRequest {
        stream,
        frame_type,
        frame_index,
        qp,
        geometry_psnr: geometry_psnr.get(&frame_index).copied(),
    })?;
    if !(res.bits > 0.0) {
        return Err(Error::Domain(format!("encoder returned {} bits", res.bits)));
    }
    Ok(FrameRecord {
        frame_index,
        frame_type,
        stream,
        qp,
        target_bits: Some(target),
        actual_bits: res.bits,
        psnr: res.psnr,
    })
}

/// Run the second pass. Geometry streams are coded before color streams so
/// color frames see the reconstructed geometry quality of the same frame.
pub fn run_second_pass<E: Encoder + ?Sized>(
    encoder: &E,
    streams: &[StreamPlan],
    table: &IframeShareTable,
    cfg: &ControllerConfig,
) -> Result<SecondPassOutcome> {
    let mut order: Vec<&StreamPlan> = streams.iter().collect();
    order.sort_by_key(|s| s.stream);

    let mut ledger = Vec::new();
    let mut used = Vec::new();
    let mut summaries = Vec::new();
    let mut geometry_psnr: HashMap<usize, f64> = HashMap::new();

    for sp in order {
        let mut i_model = sp.model;
        let mut i_hist = sp.pre_encode.samples.clone();
        let mut p_hist = p_seed_history(&sp.pre_encode, table);
        let p_start = i_model
            .scaled(table.p_to_i_ratio(sp.pre_encode.samples[0].qp))
            .unwrap_or(i_model);
        let mut p_model = update_rq_model(&p_start, &p_hist, cfg.decay);

        let mut consumed = 0.0;
        for k in 0..sp.gops.len() {
            let target = window_target(&sp.gops, k, consumed, cfg.gop_floor_fraction);
            let plan = split_gop(k, target, &sp.pre_encode, table);
            used.push((sp.stream, plan));

            let i_record = match code_frame(encoder, sp.stream, 2 * k, &i_model, plan.i_bits, &geometry_psnr) {
                Ok(r) => r,
                Err(e) => {
                    return Err(Error::SecondPass {
                        ledger,
                        source: Box::new(e),
                    })
                }
            };
            ledger.push(i_record);
            i_hist.push(RdSample {
                qp: i_record.qp,
                bits: i_record.actual_bits,
                psnr: None,
            });
            i_model = update_rq_model(&i_model, &i_hist, cfg.decay);

            let p_target = (plan.p_bits + (plan.i_bits - i_record.actual_bits)).max(cfg.p_floor_fraction * plan.p_bits);
            let p_record = match code_frame(encoder, sp.stream, 2 * k + 1, &p_model, p_target, &geometry_psnr) {
                Ok(r) => r,
                Err(e) => {
                    return Err(Error::SecondPass {
                        ledger,
                        source: Box::new(e),
                    })
                }
            };
            ledger.push(p_record);
            p_hist.push(RdSample {
                qp: p_record.qp,
                bits: p_record.actual_bits,
                psnr: None,
            });
            p_model = update_rq_model(&p_model, &p_hist, cfg.decay);

            consumed += i_record.actual_bits + p_record.actual_bits;
        }

        if sp.stream == VideoStream::Geometry {
            for r in ledger.iter().filter(|r| r.stream == VideoStream::Geometry) {
                geometry_psnr.insert(r.frame_index, r.psnr);
            }
        }
        let target = sp.target_bits();
        summaries.push(StreamSummary {
            stream: sp.stream,
            target_bits: target,
            actual_bits: consumed,
            bitrate_error: error_or_zero(consumed, target),
            probe_bits: sp.pre_encode.probe_bits(),
        });
    }

    let total_target: f64 = summaries.iter().map(|s| s.target_bits).sum();
    let total_actual: f64 = summaries.iter().map(|s| s.actual_bits).sum();
    Ok(SecondPassOutcome {
        ledger,
        gops: used,
        streams: summaries,
        total_target,
        total_actual,
        total_error: error_or_zero(total_actual, total_target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_from_law(a: f64, b: f64, qps: [u8; 4]) -> PreEncodeReport {
        let samples: Vec<RdSample> = qps
            .iter()
            .map(|&qp| RdSample::new(qp, a * f64::from(qp).powf(b), None).unwrap())
            .collect();
        let (model, fit) = fit_rq(&samples).unwrap();
        PreEncodeReport {
            stream: VideoStream::Geometry,
            samples,
            model,
            fit,
        }
    }

    #[test]
    fn share_table_exact_rows() {
        let t = IframeShareTable::average();
        assert_eq!(t.share(28), 0.8928);
        assert_eq!(t.share(44), 0.9782);
        assert_eq!(t.share(36), 0.9349);
        assert_eq!(t.share(20), 0.8217);
        assert_eq!(t.share(12), 0.7144);
    }

    #[test]
    fn share_table_interpolates_and_clamps() {
        let t = IframeShareTable::average();
        assert!((t.share(32) - 0.91385).abs() < 1e-12);
        assert_eq!(t.share(1), 0.7144);
        assert_eq!(t.share(51), 0.9782);
        assert!((t.p_to_i_ratio(28) - 0.120_071_684_587_813_6).abs() < 1e-12);
    }

    #[test]
    fn share_table_per_sequence_rows() {
        let t = IframeShareTable::for_sequence("Queen").unwrap();
        assert_eq!(t.share(44), 0.9852);
        assert_eq!(t.share(12), 0.6803);
        assert!(IframeShareTable::for_sequence("bunny").is_none());
        assert_eq!(known_sequences().count(), 7);
    }

    #[test]
    fn share_table_validation() {
        assert!(IframeShareTable::new(vec![]).is_err());
        assert!(IframeShareTable::new(vec![(10, 0.8), (20, 0.7)]).is_err());
        assert!(IframeShareTable::new(vec![(10, 0.4)]).is_err());
        assert!(IframeShareTable::new(vec![(20, 0.9), (10, 0.8)]).is_ok());
    }

    #[test]
    fn guiding_qp_ties_go_to_larger_qp() {
        let r = report_from_law(1000.0, -1.0, [10, 20, 25, 40]);
        // probes: 100, 50, 40, 25; 45 is equidistant from 50 and 40
        assert_eq!(r.guiding_qp(45.0), 25);
        assert_eq!(r.guiding_qp(1e9), 10);
        assert_eq!(r.guiding_qp(0.0), 40);
    }

    #[test]
    fn plan_gops_uniform_split_at_qp_28() {
        // probe at QP 28 is the closest to 200 bits per GOP
        let r = report_from_law(200.0 * 28f64.powf(1.2), -1.2, [20, 28, 36, 44]);
        let plans = plan_gops(3200.0, 16, &r, &IframeShareTable::average()).unwrap();
        assert_eq!(plans.len(), 16);
        for p in &plans {
            assert_eq!(p.guiding_qp, 28);
            assert!((p.target_bits - 200.0).abs() < 1e-9);
            assert!((p.i_bits - 178.56).abs() < 1e-9);
            assert!((p.p_bits - 21.44).abs() < 1e-9);
        }
        let total: f64 = plans.iter().map(|p| p.target_bits).sum();
        assert!((total - 3200.0).abs() <= 3200.0 * 1e-9);
    }

    #[test]
    fn plan_gops_single_gop() {
        let r = report_from_law(1000.0, -1.2, DEFAULT_PRE_ENCODE_QPS);
        let plans = plan_gops(500.0, 1, &r, &IframeShareTable::average()).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].target_bits, 500.0);
        assert!(plan_gops(500.0, 0, &r, &IframeShareTable::average()).is_err());
        assert!(plan_gops(0.0, 3, &r, &IframeShareTable::average()).is_err());
    }

    #[test]
    fn window_target_spreads_overspend() {
        let r = report_from_law(1000.0, -1.2, DEFAULT_PRE_ENCODE_QPS);
        let plans = plan_gops(400.0, 4, &r, &IframeShareTable::average()).unwrap();
        assert_eq!(window_target(&plans, 0, 0.0, 0.1), 100.0);
        // first GOP spent 130: 270 left over 3 GOPs
        assert!((window_target(&plans, 1, 130.0, 0.1) - 90.0).abs() < 1e-12);
        // runaway spend hits the floor
        assert_eq!(window_target(&plans, 1, 1000.0, 0.1), 10.0);
    }

    #[test]
    fn update_with_probe_history_reproduces_fit() {
        let r = report_from_law(1000.0, -1.2, DEFAULT_PRE_ENCODE_QPS);
        let m = update_rq_model(&RqModel::new(1.0, -0.5).unwrap(), &r.samples, DEFAULT_DECAY);
        assert!((m.a() / r.model.a() - 1.0).abs() < 1e-9);
        assert!((m.b() / r.model.b() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn update_recovers_exact_law_regardless_of_weights() {
        let hist: Vec<RdSample> = [30u8, 22, 41, 35, 28, 33]
            .iter()
            .map(|&qp| RdSample::new(qp, 5e6 * f64::from(qp).powf(-2.7), None).unwrap())
            .collect();
        for decay in [0.5, 0.9, 1.0] {
            let m = update_rq_model(&RqModel::new(1.0, -1.0).unwrap(), &hist, decay);
            assert!((m.a() / 5e6 - 1.0).abs() < 1e-9);
            assert!((m.b() / -2.7 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn update_keeps_model_on_identical_qps() {
        let prev = RqModel::new(123.0, -1.5).unwrap();
        let hist = vec![
            RdSample::new(30, 10.0, None).unwrap(),
            RdSample::new(30, 12.0, None).unwrap(),
        ];
        assert_eq!(update_rq_model(&prev, &hist, 0.9), prev);
        assert_eq!(update_rq_model(&prev, &[], 0.9), prev);
    }

    #[test]
    fn update_tracks_a_doubling_scale_monotonically() {
        let qps = [22u8, 27, 32, 37];
        let mut hist: Vec<RdSample> = qps
            .iter()
            .map(|&qp| RdSample::new(qp, 1e6 * f64::from(qp).powf(-2.0), None).unwrap())
            .collect();
        let mut model = update_rq_model(&RqModel::new(1.0, -1.0).unwrap(), &hist, 0.9);
        let at_30 = |m: &RqModel| m.eval_real(30.0) / (1e6 * 30f64.powf(-2.0));
        let mut last = at_30(&model);
        assert!((last - 1.0).abs() < 1e-9);
        for i in 0..40 {
            let qp = qps[i % 4];
            hist.push(RdSample::new(qp, 2e6 * f64::from(qp).powf(-2.0), None).unwrap());
            model = update_rq_model(&model, &hist, 0.9);
            let now = at_30(&model);
            assert!(now >= last * (1.0 - 1e-12), "step {i}: {now} < {last}");
            assert!(now <= 2.0 * (1.0 + 1e-9));
            last = now;
        }
        assert!(last > 1.99);
    }
}
