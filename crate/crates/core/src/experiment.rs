//! The full pipeline: fixed-QP anchor, R-D model fit, geometry/color
//! allocation, two-pass control on the simulator, and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocator::allocate;
use crate::codec_sim::{fixed_qp_reference_run, RunTotals, SequenceProfile, COLOR_QP_OFFSET};
use crate::config::{ExperimentConfig, TargetSource};
use crate::error::{Error, Result, Stage};
use crate::metrics::{bd_rate, bitrate_error, total_distortion, RateCurve};
use crate::models::{
    fit_color_rd, fit_geometry_rd, fit_quality_dependency, ColorRdModel, FitReport, GeometryRdModel,
    QualityDependencyModel,
};
use crate::rdlog::{parse_rd_log, write_rd_log, RdLog, RdLogRow};
use crate::stream::{Substream, VideoStream};
use crate::twopass::{
    plan_gops, pre_encode, run_second_pass, FrameRecord, PreEncodeReport, SecondPassOutcome, StreamPlan,
};

/// Normalized geometry weight used alongside `w` in the overall metrics.
pub const W_PRIME: f64 = 0.259;

/// Geometry QPs of the geometry R-D sweep; color runs at `qp_g + 5`.
const GEOMETRY_SWEEP: [u8; 10] = [8, 12, 16, 20, 24, 28, 32, 36, 40, 44];
/// Color QPs of the color R-D sweep, geometry fixed at `COLOR_SWEEP_QP_G`.
const COLOR_SWEEP: [u8; 10] = [14, 18, 22, 26, 30, 34, 38, 42, 46, 50];
const COLOR_SWEEP_QP_G: u8 = 24;
/// Geometry QPs of the dependency sweep, color fixed at `DEPENDENCY_QP_C`.
const DEPENDENCY_SWEEP: [u8; 7] = [12, 16, 20, 24, 28, 32, 36];
const DEPENDENCY_QP_C: u8 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Sweep,
    RdLog,
}

/// One point used by a model fit: `(rate units, psnr)` for the R-D laws,
/// `(d_g, d_c)` for the dependency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub kind: String,
    pub qp_g: u8,
    pub qp_c: u8,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub source: ModelSource,
    pub geometry: GeometryRdModel,
    pub geometry_fit: FitReport,
    pub color: ColorRdModel,
    pub color_fit: FitReport,
    /// Fitted for reporting only; the allocator uses the configured kappa.
    pub dependency: Option<(QualityDependencyModel, FitReport)>,
    /// Values handed to the allocator, after config overrides.
    pub theta_g: f64,
    pub theta_c: f64,
    pub points: Vec<RdPoint>,
}

fn point(kind: &str, qp_g: u8, qp_c: u8, x: f64, y: f64) -> RdPoint {
    RdPoint {
        kind: kind.into(),
        qp_g,
        qp_c,
        x,
        y,
    }
}

fn xy(points: &[RdPoint], kind: &str) -> Vec<(f64, f64)> {
    points.iter().filter(|p| p.kind == kind).map(|p| (p.x, p.y)).collect()
}

/// Fit the R-D models from fixed-QP sweeps of the simulator.
pub fn fit_models_from_sweep(profile: &SequenceProfile, rate_unit_bits: f64) -> Result<ModelSet> {
    let mut points = Vec::new();
    for qp_g in GEOMETRY_SWEEP {
        let qp_c = qp_g + COLOR_QP_OFFSET;
        let t = fixed_qp_reference_run(profile, qp_g, qp_c)?.totals;
        points.push(point("geometry", qp_g, qp_c, t.gv_bits / rate_unit_bits, t.d_g));
    }
    for qp_c in COLOR_SWEEP {
        let t = fixed_qp_reference_run(profile, COLOR_SWEEP_QP_G, qp_c)?.totals;
        points.push(point(
            "color",
            COLOR_SWEEP_QP_G,
            qp_c,
            t.cv_bits / rate_unit_bits,
            t.d_c,
        ));
    }
    for qp_g in DEPENDENCY_SWEEP {
        let t = fixed_qp_reference_run(profile, qp_g, DEPENDENCY_QP_C)?.totals;
        points.push(point("dependency", qp_g, DEPENDENCY_QP_C, t.d_g, t.d_c));
    }
    let (geometry, geometry_fit) = fit_geometry_rd(&xy(&points, "geometry"))?;
    let (color, color_fit) = fit_color_rd(&xy(&points, "color"))?;
    let dependency = Some(fit_quality_dependency(&xy(&points, "dependency"))?);
    Ok(ModelSet {
        source: ModelSource::Sweep,
        theta_g: geometry.theta(),
        theta_c: color.theta(),
        geometry,
        geometry_fit,
        color,
        color_fit,
        dependency,
        points,
    })
}

/// Pick the sequence to fit from a log: `preferred` if present, otherwise
/// the only sequence in the log.
pub fn select_sequence<'a>(log: &'a RdLog, preferred: Option<&str>) -> Result<&'a str> {
    let names: Vec<&str> = {
        let mut v: Vec<&str> = log.groups.keys().map(|(s, _)| s.as_str()).collect();
        v.dedup();
        v
    };
    if let Some(p) = preferred {
        if let Some(n) = names.iter().find(|n| **n == p) {
            return Ok(n);
        }
    }
    match names.as_slice() {
        [only] => Ok(only),
        [] => Err(Error::Fit("R-D log has no rows".into())),
        _ => Err(Error::Fit(format!(
            "R-D log holds several sequences ({}); choose one",
            names.join(", ")
        ))),
    }
}

/// One point per QP: summed bits of the rows at that QP (in rate units)
/// against their mean PSNR. Rows without PSNR only count toward bits.
pub fn rd_points_from_log(log: &RdLog, sequence: &str, stream: VideoStream, rate_unit_bits: f64) -> Vec<RdPoint> {
    let mut by_qp: BTreeMap<u8, (f64, f64, usize)> = BTreeMap::new();
    for s in log.group(sequence, Substream::from(stream)) {
        let e = by_qp.entry(s.sample.qp).or_insert((0.0, 0.0, 0));
        e.0 += s.sample.bits;
        if let Some(p) = s.sample.psnr {
            e.1 += p;
            e.2 += 1;
        }
    }
    by_qp
        .into_iter()
        .filter(|(_, (_, _, n))| *n > 0)
        .map(|(qp, (bits, psnr, n))| {
            let (qp_g, qp_c) = match stream {
                VideoStream::Geometry => (qp, 0),
                VideoStream::Color => (0, qp),
            };
            point(stream.as_str(), qp_g, qp_c, bits / rate_unit_bits, psnr / n as f64)
        })
        .collect()
}

/// Fit the geometry and color R-D models from a log of fixed-QP encodes.
pub fn fit_models_from_log(log: &RdLog, sequence: Option<&str>, rate_unit_bits: f64) -> Result<ModelSet> {
    let name = select_sequence(log, sequence)?;
    let mut points = rd_points_from_log(log, name, VideoStream::Geometry, rate_unit_bits);
    points.extend(rd_points_from_log(log, name, VideoStream::Color, rate_unit_bits));
    let (geometry, geometry_fit) = fit_geometry_rd(&xy(&points, "geometry"))?;
    let (color, color_fit) = fit_color_rd(&xy(&points, "color"))?;
    Ok(ModelSet {
        source: ModelSource::RdLog,
        theta_g: geometry.theta(),
        theta_c: color.theta(),
        geometry,
        geometry_fit,
        color,
        color_fit,
        dependency: None,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub source: TargetSource,
    pub qp_g: Option<u8>,
    pub qp_c: Option<u8>,
    pub total_bits: f64,
    pub anchor: Option<RunTotals>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationSummary {
    pub lambda: f64,
    pub iterations: u32,
    pub converged: bool,
    /// Set when lambda hit a range bound and the split was scaled to the
    /// budget.
    pub rescaled: bool,
    pub r_g_bits: f64,
    pub r_c_bits: f64,
}

/// Everything before rate control proper.
#[derive(Debug, Clone, PartialEq)]
pub struct Preparation {
    pub profile: SequenceProfile,
    pub target: TargetInfo,
    pub models: ModelSet,
}

pub fn resolve_target(cfg: &ExperimentConfig, profile: &SequenceProfile) -> Result<TargetInfo> {
    match cfg.target.source {
        TargetSource::Explicit => {
            let bits = cfg
                .target
                .bits
                .ok_or_else(|| Error::Config("explicit target needs `bits`".into()))?;
            Ok(TargetInfo {
                source: TargetSource::Explicit,
                qp_g: None,
                qp_c: None,
                total_bits: bits,
                anchor: None,
            })
        }
        TargetSource::FixedQpAnchor => {
            let run = fixed_qp_reference_run(profile, cfg.target.qp_g, cfg.target.qp_c)?;
            Ok(TargetInfo {
                source: TargetSource::FixedQpAnchor,
                qp_g: Some(cfg.target.qp_g),
                qp_c: Some(cfg.target.qp_c),
                total_bits: run.totals.total_bits,
                anchor: Some(run.totals),
            })
        }
    }
}

/// Model source per config, with theta overrides applied.
pub fn resolve_models(cfg: &ExperimentConfig, profile: &SequenceProfile) -> Result<ModelSet> {
    let unit = cfg.allocator.rate_unit_bits;
    let mut models = match &cfg.sequence.rd_log {
        Some(path) => fit_models_from_log(&parse_rd_log(path)?, Some(&profile.name), unit)?,
        None => fit_models_from_sweep(profile, unit)?,
    };
    if let Some(t) = cfg.allocator.theta_g {
        models.theta_g = t;
    }
    if let Some(t) = cfg.allocator.theta_c {
        models.theta_c = t;
    }
    Ok(models)
}

/// Anchor and model-fit stages.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Preparation> {
    let profile = cfg.profile()?;
    let target = resolve_target(cfg, &profile).map_err(Error::at(Stage::Anchor))?;
    let models = resolve_models(cfg, &profile).map_err(Error::at(Stage::ModelFit))?;
    Ok(Preparation {
        profile,
        target,
        models,
    })
}

/// Budget check and allocation, returning stream targets in bits.
pub fn allocate_streams(
    cfg: &ExperimentConfig,
    profile: &SequenceProfile,
    models: &ModelSet,
    total_bits: f64,
) -> Result<AllocationSummary> {
    let (occ, patch) = profile.constant_substream_bits();
    if !(total_bits - occ - patch > 0.0) {
        return Err(Error::at(Stage::Budget)(Error::Budget {
            total: total_bits,
            occ,
            patch,
        }));
    }
    let unit = cfg.allocator.rate_unit_bits;
    let params = cfg.allocator.params(models.theta_g, models.theta_c);
    let res = allocate(
        total_bits / unit,
        occ / unit,
        patch / unit,
        &params,
        &cfg.allocator.search(),
    )
    .map_err(Error::at(Stage::Allocate))?;
    let budget = total_bits - occ - patch;
    let (mut r_g, mut r_c) = (res.r_g * unit, res.r_c * unit);
    if !res.converged {
        let k = budget / (r_g + r_c);
        r_g *= k;
        r_c *= k;
    }
    Ok(AllocationSummary {
        lambda: res.lambda,
        iterations: res.iterations,
        converged: res.converged,
        rescaled: !res.converged,
        r_g_bits: r_g,
        r_c_bits: r_c,
    })
}

/// Result of one rate-controlled encode of the whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RcRun {
    pub allocation: AllocationSummary,
    pub pre_encode: Vec<PreEncodeReport>,
    pub second_pass: SecondPassOutcome,
    pub ledger: Vec<RdLogRow>,
    pub totals: RunTotals,
}

/// Allocate, pre-encode and run the second pass for one total target.
pub fn run_rate_control(
    cfg: &ExperimentConfig,
    profile: &SequenceProfile,
    models: &ModelSet,
    total_bits: f64,
) -> Result<RcRun> {
    let allocation = allocate_streams(cfg, profile, models, total_bits)?;
    let table = cfg.twopass.table_for(&profile.name);

    let mut plans = Vec::new();
    let mut reports = Vec::new();
    for (stream, bits) in [
        (VideoStream::Geometry, allocation.r_g_bits),
        (VideoStream::Color, allocation.r_c_bits),
    ] {
        let report = pre_encode(profile, stream, &cfg.twopass.pre_encode_qps).map_err(Error::at(Stage::PreEncode))?;
        let gops = plan_gops(bits, profile.n_pc_frames, &report, &table).map_err(Error::at(Stage::PreEncode))?;
        reports.push(report.clone());
        plans.push(StreamPlan::new(report, gops));
    }
    let second_pass =
        run_second_pass(profile, &plans, &table, &cfg.twopass.controller()).map_err(Error::at(Stage::SecondPass))?;
    let ledger = ledger_rows(profile, &second_pass.ledger);
    let totals = totals_from_rows(&ledger);
    Ok(RcRun {
        allocation,
        pre_encode: reports,
        second_pass,
        ledger,
        totals,
    })
}

/// Ledger in log order: geometry, color, then one row per point cloud frame
/// for occupancy and patch (skipped when they cost nothing).
pub fn ledger_rows(profile: &SequenceProfile, frames: &[FrameRecord]) -> Vec<RdLogRow> {
    let mut rows: Vec<RdLogRow> = Vec::with_capacity(frames.len() + 2 * profile.n_pc_frames);
    for stream in VideoStream::ALL {
        rows.extend(frames.iter().filter(|r| r.stream == stream).map(|r| RdLogRow {
            sequence: profile.name.clone(),
            stream: stream.into(),
            frame_index: r.frame_index,
            frame_type: Some(r.frame_type),
            qp: r.qp,
            bits: r.actual_bits,
            psnr: Some(r.psnr).filter(|p| *p > 0.0),
        }));
    }
    for (stream, bits) in [
        (Substream::Occ, profile.occ_bits_per_frame),
        (Substream::Patch, profile.patch_bits_per_frame),
    ] {
        if bits > 0.0 {
            rows.extend((0..profile.n_pc_frames).map(|frame_index| RdLogRow {
                sequence: profile.name.clone(),
                stream,
                frame_index,
                frame_type: None,
                qp: 0,
                bits,
                psnr: None,
            }));
        }
    }
    rows
}

/// Per-substream bit sums and mean video PSNR of a ledger. The total is
/// the sum of the four substream sums.
pub fn totals_from_rows(rows: &[RdLogRow]) -> RunTotals {
    let bits = |s: Substream| rows.iter().filter(|r| r.stream == s).map(|r| r.bits).sum::<f64>();
    let mean_psnr = |s: Substream| {
        let v: Vec<f64> = rows.iter().filter(|r| r.stream == s).filter_map(|r| r.psnr).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let (gv_bits, cv_bits) = (bits(Substream::Geometry), bits(Substream::Color));
    let (occ_bits, patch_bits) = (bits(Substream::Occ), bits(Substream::Patch));
    RunTotals {
        gv_bits,
        cv_bits,
        occ_bits,
        patch_bits,
        total_bits: gv_bits + cv_bits + occ_bits + patch_bits,
        d_g: mean_psnr(Substream::Geometry),
        d_c: mean_psnr(Substream::Color),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRow {
    /// `geometry`, `color`, `occ`, `patch` or `total`.
    pub name: String,
    pub target_bits: f64,
    pub actual_bits: f64,
    pub bitrate_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// `anchor` for fixed QP, `rc` for rate-controlled.
    pub curve: String,
    pub qp_g: u8,
    pub qp_c: u8,
    pub totals: RunTotals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdTable {
    pub geom_rate: f64,
    pub color_rate: f64,
    pub total_rate_w: f64,
    pub total_rate_w_prime: f64,
    pub mean_bitrate_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub sequence: String,
    pub n_pc_frames: usize,
    pub target: TargetInfo,
    pub models: ModelSet,
    pub allocation: AllocationSummary,
    pub pre_encode: Vec<PreEncodeReport>,
    pub rows: Vec<StreamRow>,
    pub d_g: f64,
    pub d_c: f64,
    pub w: f64,
    pub d_total_w: f64,
    pub d_total_w_prime: f64,
    pub ledger: Vec<RdLogRow>,
    pub curves: Vec<CurvePoint>,
    pub bd: Option<BdTable>,
    pub bd_note: Option<String>,
}

impl ReportBundle {
    pub fn row(&self, name: &str) -> Option<&StreamRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Total bitrate error of the run.
    pub fn total_error(&self) -> f64 {
        self.row("total").map(|r| r.bitrate_error).unwrap_or(f64::NAN)
    }
}

fn error_or_zero(actual: f64, target: f64) -> f64 {
    bitrate_error(actual, target).unwrap_or(0.0)
}

fn stream_rows(
    total_target: f64,
    alloc: &AllocationSummary,
    t: &RunTotals,
    profile: &SequenceProfile,
) -> Vec<StreamRow> {
    let (occ, patch) = profile.constant_substream_bits();
    [
        ("geometry", alloc.r_g_bits, t.gv_bits),
        ("color", alloc.r_c_bits, t.cv_bits),
        ("occ", occ, t.occ_bits),
        ("patch", patch, t.patch_bits),
        ("total", total_target, t.total_bits),
    ]
    .into_iter()
    .map(|(name, target, actual)| StreamRow {
        name: name.into(),
        target_bits: target,
        actual_bits: actual,
        bitrate_error: error_or_zero(actual, target),
    })
    .collect()
}

fn rate_curve(points: &[CurvePoint], f: impl Fn(&RunTotals) -> (f64, f64)) -> Result<RateCurve> {
    RateCurve::new(points.iter().map(|p| f(&p.totals)).collect())
}

fn bd_table(anchor: &[CurvePoint], rc: &[CurvePoint], errors: &[f64], w: f64) -> Result<BdTable> {
    let bd =
        |f: &dyn Fn(&RunTotals) -> (f64, f64)| -> Result<f64> { bd_rate(&rate_curve(anchor, f)?, &rate_curve(rc, f)?) };
    Ok(BdTable {
        geom_rate: bd(&|t| (t.gv_bits, t.d_g))?,
        color_rate: bd(&|t| (t.cv_bits, t.d_c))?,
        total_rate_w: bd(&|t| (t.total_bits, total_distortion(w, t.d_g, t.d_c)))?,
        total_rate_w_prime: bd(&|t| (t.total_bits, total_distortion(W_PRIME, t.d_g, t.d_c)))?,
        mean_bitrate_error: errors.iter().sum::<f64>() / errors.len() as f64,
    })
}

/// Fixed-QP and rate-controlled curves over the configured sweep, and the
/// BD-rate table when both curves are usable.
fn sweep(cfg: &ExperimentConfig, prep: &Preparation) -> (Vec<CurvePoint>, Option<BdTable>, Option<String>) {
    let qps = &cfg.report.bd_sweep_qp_g;
    if qps.len() < 4 {
        return (
            Vec::new(),
            None,
            Some(format!("BD-rate needs at least 4 sweep points, got {}", qps.len())),
        );
    }
    let mut anchor = Vec::new();
    let mut rc = Vec::new();
    let mut errors = Vec::new();
    for &qp_g in qps {
        let qp_c = qp_g + COLOR_QP_OFFSET;
        let run = match fixed_qp_reference_run(&prep.profile, qp_g, qp_c) {
            Ok(r) => r,
            Err(e) => {
                return (
                    Vec::new(),
                    None,
                    Some(format!("fixed-QP run at qp_g {qp_g} failed: {e}")),
                )
            }
        };
        let target = run.totals.total_bits;
        anchor.push(CurvePoint {
            curve: "anchor".into(),
            qp_g,
            qp_c,
            totals: run.totals,
        });
        match run_rate_control(cfg, &prep.profile, &prep.models, target) {
            Ok(r) => {
                errors.push(error_or_zero(r.totals.total_bits, target));
                rc.push(CurvePoint {
                    curve: "rc".into(),
                    qp_g,
                    qp_c,
                    totals: r.totals,
                });
            }
            Err(e) => {
                anchor.extend(rc);
                return (
                    anchor,
                    None,
                    Some(format!("rate-controlled run at qp_g {qp_g} failed: {e}")),
                );
            }
        }
    }
    let table = bd_table(&anchor, &rc, &errors, cfg.allocator.w);
    anchor.extend(rc);
    match table {
        Ok(t) => (anchor, Some(t), None),
        Err(e) => (anchor, None, Some(format!("BD-rate unavailable: {e}"))),
    }
}

/// Run every stage. Failures carry the name of the stage that failed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let run = run_rate_control(cfg, &prep.profile, &prep.models, prep.target.total_bits)?;
    let rows = stream_rows(prep.target.total_bits, &run.allocation, &run.totals, &prep.profile);
    let (curves, bd, bd_note) = sweep(cfg, &prep);
    let w = cfg.allocator.w;
    let t = &run.totals;
    Ok(ReportBundle {
        config: cfg.clone(),
        seed: cfg.seed,
        sequence: prep.profile.name.clone(),
        n_pc_frames: prep.profile.n_pc_frames,
        d_g: t.d_g,
        d_c: t.d_c,
        w,
        d_total_w: total_distortion(w, t.d_g, t.d_c),
        d_total_w_prime: total_distortion(W_PRIME, t.d_g, t.d_c),
        target: prep.target,
        models: prep.models,
        allocation: run.allocation,
        pre_encode: run.pre_encode,
        rows,
        ledger: run.ledger,
        curves,
        bd,
        bd_note,
    })
}

/// Four significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.3e}").parse().unwrap_or(x);
    let mag = rounded.abs().log10().floor() as i32;
    if (-3..6).contains(&mag) {
        let decimals = (3 - mag).max(0) as usize;
        format!("{rounded:.decimals$}")
    } else {
        format!("{x:.3e}")
    }
}

/// `+ x` or `- x` for the constant term of a formula.
pub fn signed_term(x: f64) -> String {
    if x < 0.0 {
        format!("- {}", sig4(-x))
    } else {
        format!("+ {}", sig4(x))
    }
}

fn pct(x: f64) -> String {
    format!("{}%", sig4(x * 100.0))
}

/// Human-readable summary, ending with the resolved config.
pub fn render_summary(b: &ReportBundle) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sequence: {} ({} point cloud frames)", b.sequence, b.n_pc_frames);
    let _ = writeln!(s, "seed: {}", b.seed);
    match (b.target.qp_g, b.target.qp_c) {
        (Some(g), Some(c)) => {
            let _ = writeln!(
                s,
                "target: fixed-QP anchor at qp_g {g}, qp_c {c}: {} bits",
                sig4(b.target.total_bits)
            );
        }
        _ => {
            let _ = writeln!(s, "target: explicit {} bits", sig4(b.target.total_bits));
        }
    }
    let m = &b.models;
    let _ = writeln!(
        s,
        "models ({}): D_G = {}/R {} (R2 {}), D_C = {}*R^0.1 {} (R2 {})",
        match m.source {
            ModelSource::Sweep => "simulator sweep",
            ModelSource::RdLog => "R-D log",
        },
        sig4(m.geometry.a_g()),
        signed_term(m.geometry.b_g()),
        sig4(m.geometry_fit.r_squared),
        sig4(m.color.a_c()),
        signed_term(m.color.b_c()),
        sig4(m.color_fit.r_squared),
    );
    if let Some((dep, fit)) = &m.dependency {
        let _ = writeln!(s, "dependency: kappa {} (R2 {})", sig4(dep.kappa), sig4(fit.r_squared));
    }
    let a = &b.allocation;
    let _ = writeln!(
        s,
        "allocation: theta_g {}, theta_c {}, lambda {} after {} iterations{}{}",
        sig4(m.theta_g),
        sig4(m.theta_c),
        sig4(a.lambda),
        a.iterations,
        if a.converged { "" } else { ", lambda at range bound" },
        if a.rescaled { ", scaled to budget" } else { "" },
    );
    for p in &b.pre_encode {
        let _ = writeln!(
            s,
            "pre-encode {}: R = {} * QP^{} (R2 {}), {} probe bits",
            p.stream,
            sig4(p.model.a()),
            sig4(p.model.b()),
            sig4(p.fit.r_squared),
            sig4(p.probe_bits())
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<10} {:>12} {:>12} {:>14}",
        "stream", "target_bits", "actual_bits", "bitrate_error"
    );
    for r in &b.rows {
        let _ = writeln!(
            s,
            "{:<10} {:>12} {:>12} {:>14}",
            r.name,
            sig4(r.target_bits),
            sig4(r.actual_bits),
            pct(r.bitrate_error)
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "D_G: {} dB", sig4(b.d_g));
    let _ = writeln!(s, "D_C: {} dB", sig4(b.d_c));
    let _ = writeln!(s, "D_total (w={}): {} dB", b.w, sig4(b.d_total_w));
    let _ = writeln!(s, "D_total (w'={W_PRIME}): {} dB", sig4(b.d_total_w_prime));
    let _ = writeln!(s);
    match (&b.bd, &b.bd_note) {
        (Some(t), _) => {
            let qps: Vec<String> = b.config.report.bd_sweep_qp_g.iter().map(u8::to_string).collect();
            let _ = writeln!(
                s,
                "BD-rate against fixed QP (qp_g {}; qp_c = qp_g + 5):",
                qps.join(", ")
            );
            let _ = writeln!(
                s,
                "{:>10} {:>10} {:>14} {:>16} {:>14}",
                "Geom",
                "Color",
                format!("Total w={}", b.w),
                format!("Total w'={W_PRIME}"),
                "bitrate_error"
            );
            let _ = writeln!(
                s,
                "{:>10} {:>10} {:>14} {:>16} {:>14}",
                format!("{}%", sig4(t.geom_rate)),
                format!("{}%", sig4(t.color_rate)),
                format!("{}%", sig4(t.total_rate_w)),
                format!("{}%", sig4(t.total_rate_w_prime)),
                pct(t.mean_bitrate_error)
            );
        }
        (None, Some(note)) => {
            let _ = writeln!(s, "BD-rate: {note}");
        }
        (None, None) => {}
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "# resolved config");
    s.push_str(&b.config.to_toml_string());
    s
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(Error::io(&tmp))?;
    fs::rename(&tmp, &path).map_err(Error::io(&path))?;
    Ok(path)
}

fn curves_csv(b: &ReportBundle) -> String {
    let mut s = String::from(
        "curve,qp_g,qp_c,gv_bits,cv_bits,occ_bits,patch_bits,total_bits,d_g,d_c,d_total_w,d_total_w_prime\n",
    );
    for p in &b.curves {
        let t = &p.totals;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            p.curve,
            p.qp_g,
            p.qp_c,
            t.gv_bits,
            t.cv_bits,
            t.occ_bits,
            t.patch_bits,
            t.total_bits,
            t.d_g,
            t.d_c,
            total_distortion(b.w, t.d_g, t.d_c),
            total_distortion(W_PRIME, t.d_g, t.d_c)
        );
    }
    s
}

fn rd_points_csv(points: &[RdPoint]) -> String {
    let mut s = String::from("kind,qp_g,qp_c,x,y\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{},{}", p.kind, p.qp_g, p.qp_c, p.x, p.y);
    }
    s
}

/// Write `ledger.csv`, `summary.txt`, `report.json`, `curves.csv` and
/// `rd_points.csv` into `dir`, each by write-then-rename.
pub fn write_reports(b: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut ledger = Vec::new();
    write_rd_log(&mut ledger, &b.ledger).map_err(Error::at(Stage::Report))?;
    let json = serde_json::to_string_pretty(b).map_err(|e| Error::at(Stage::Report)(Error::Invalid(e.to_string())))?;
    Ok(vec![
        write_atomic(dir, "ledger.csv", &ledger)?,
        write_atomic(dir, "summary.txt", render_summary(b).as_bytes())?,
        write_atomic(dir, "report.json", format!("{json}\n").as_bytes())?,
        write_atomic(dir, "curves.csv", curves_csv(b).as_bytes())?,
        write_atomic(dir, "rd_points.csv", rd_points_csv(&b.models.points).as_bytes())?,
    ])
}

pub fn read_report(dir: &Path) -> Result<ReportBundle> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

/// The frames coded before a second-pass failure, if `err` is one.
pub fn partial_ledger(err: &Error) -> Option<&[FrameRecord]> {
    match err {
        Error::SecondPass { ledger, .. } => Some(ledger),
        Error::Stage { source, .. } => partial_ledger(source),
        _ => None,
    }
}

/// Write `ledger.partial.csv` for a failed second pass.
pub fn write_partial_ledger(err: &Error, profile: &SequenceProfile, dir: &Path) -> Result<Option<PathBuf>> {
    let Some(frames) = partial_ledger(err) else {
        return Ok(None);
    };
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut out = Vec::new();
    write_rd_log(&mut out, &ledger_rows(profile, frames))?;
    write_atomic(dir, "ledger.partial.csv", &out).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig4_examples() {
        assert_eq!(sig4(70.004), "70.00");
        assert_eq!(sig4(0.0043), "0.004300");
        assert_eq!(sig4(3977600.0), "3.978e6");
        assert_eq!(sig4(1790.0), "1790");
        assert_eq!(sig4(-7.48), "-7.480");
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(9.999_999_9), "10.00");
        assert_eq!(sig4(99_999.9), "100000");
    }

    #[test]
    fn sweep_fit_recovers_profile_laws() {
        let p = SequenceProfile::builtin("loot").unwrap();
        let m = fit_models_from_sweep(&p, 1e6).unwrap();
        let n = p.n_pc_frames as f64;
        // sequence-total rate is n times the per-GOP rate of the simulator
        assert!((m.geometry.a_g() / (p.gv_rd.a_g() * n) - 1.0).abs() < 1e-9);
        assert!((m.color.a_c() / (p.cv_rd.a_c() * n.powf(-0.1)) - 1.0).abs() < 1e-9);
        assert!((m.geometry_fit.r_squared - 1.0).abs() < 1e-12);
        let (dep, _) = m.dependency.unwrap();
        assert!((dep.kappa - 0.3).abs() < 1e-9);
    }

    #[test]
    fn budget_error_names_the_stage() {
        let mut cfg = ExperimentConfig::default();
        cfg.target.source = TargetSource::Explicit;
        cfg.target.bits = Some(1000.0);
        let e = run_experiment(&cfg).unwrap_err();
        assert_eq!(e.stage(), Some(Stage::Budget));
        assert!(e.to_string().starts_with("budget stage failed"));
    }

    #[test]
    fn ledger_has_constant_substream_rows() {
        let p = SequenceProfile {
            n_pc_frames: 2,
            patch_bits_per_frame: 0.0,
            ..SequenceProfile::builtin("queen").unwrap()
        };
        let rows = ledger_rows(&p, &[]);
        assert_eq!(rows.len(), 2);
        assert!(rows
            .iter()
            .all(|r| r.stream == Substream::Occ && r.frame_type.is_none()));
    }
}
