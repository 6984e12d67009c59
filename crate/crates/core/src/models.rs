//! Rate-distortion, quality-dependency and rate-quantization model families.
//!
//! Every family here becomes a straight line after a fixed change of
//! variables, so all fitting goes through one ordinary least-squares core:
//!
//! | family             | law                     | x          | y      |
//! |--------------------|-------------------------|------------|--------|
//! | geometry R-D       | `D = a/R + b`           | `1/R`      | `D`    |
//! | color R-D          | `D = a*R^0.1 + b`       | `R^0.1`    | `D`    |
//! | quality dependency | `D_C = k*D_G + b`       | `D_G`      | `D_C`  |
//! | R-Q                | `R = a*QP^b`            | `ln QP`    | `ln R` |
//!
//! Rates are whatever unit the caller feeds in; the exponents are fixed
//! constants of the families and are never fitted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent of the color rate-distortion law.
pub const COLOR_RATE_EXPONENT: f64 = 0.1;

/// Highest quantization parameter of the video codec.
pub const QP_MAX: u8 = 51;

/// Range of the dependency slope observed across test content.
pub const KAPPA_RANGE: (f64, f64) = (0.1, 0.5);

/// Default dependency slope.
pub const DEFAULT_KAPPA: f64 = 0.3;

/// One (QP, bits, PSNR) observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdSample {
    pub qp: u8,
    pub bits: f64,
    pub psnr: Option<f64>,
}

impl RdSample {
    pub fn new(qp: u8, bits: f64, psnr: Option<f64>) -> Result<Self> {
        if qp > QP_MAX {
            return Err(Error::Domain(format!("qp {qp} outside [0, {QP_MAX}]")));
        }
        if !(bits.is_finite() && bits > 0.0) {
            return Err(Error::Domain(format!("bits must be positive, got {bits}")));
        }
        if let Some(p) = psnr {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Domain(format!("psnr must be positive, got {p}")));
            }
        }
        Ok(RdSample { qp, bits, psnr })
    }
}

fn check_rate(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("rate must be positive, got {r}")))
    }
}

/// `D_G = a_g / R_G + b_g` with `a_g < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryRdModel {
    a_g: f64,
    b_g: f64,
}

impl GeometryRdModel {
    pub fn new(a_g: f64, b_g: f64) -> Result<Self> {
        if !(a_g.is_finite() && a_g < 0.0) || !b_g.is_finite() {
            return Err(Error::Domain(format!("geometry model needs a_g < 0, got a_g={a_g}")));
        }
        Ok(GeometryRdModel { a_g, b_g })
    }

    pub fn a_g(&self) -> f64 {
        self.a_g
    }

    pub fn b_g(&self) -> f64 {
        self.b_g
    }

    /// Marginal-gain scale `theta_g = -a_g`.
    pub fn theta(&self) -> f64 {
        -self.a_g
    }

    pub fn eval(&self, r_g: f64) -> Result<f64> {
        check_rate(r_g)?;
        Ok(self.a_g / r_g + self.b_g)
    }

    /// `dD_G/dR_G = theta_g * R_G^-2`.
    pub fn deriv(&self, r_g: f64) -> Result<f64> {
        check_rate(r_g)?;
        Ok(self.theta() / (r_g * r_g))
    }
}

/// `D_C = a_c * R_C^0.1 + b_c` with `a_c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorRdModel {
    a_c: f64,
    b_c: f64,
}

impl ColorRdModel {
    pub fn new(a_c: f64, b_c: f64) -> Result<Self> {
        if !(a_c.is_finite() && a_c > 0.0) || !b_c.is_finite() {
            return Err(Error::Domain(format!("color model needs a_c > 0, got a_c={a_c}")));
        }
        Ok(ColorRdModel { a_c, b_c })
    }

    pub fn a_c(&self) -> f64 {
        self.a_c
    }

    pub fn b_c(&self) -> f64 {
        self.b_c
    }

    /// Marginal-gain scale `theta_c = 0.1 * a_c`.
    pub fn theta(&self) -> f64 {
        COLOR_RATE_EXPONENT * self.a_c
    }

    pub fn eval(&self, r_c: f64) -> Result<f64> {
        check_rate(r_c)?;
        Ok(self.a_c * r_c.powf(COLOR_RATE_EXPONENT) + self.b_c)
    }

    /// `dD_C/dR_C = theta_c * R_C^-0.9`.
    pub fn deriv(&self, r_c: f64) -> Result<f64> {
        check_rate(r_c)?;
        Ok(self.theta() * r_c.powf(COLOR_RATE_EXPONENT - 1.0))
    }
}

/// Linear coupling of color quality to geometry quality,
/// `D_C = kappa * D_G + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityDependencyModel {
    pub kappa: f64,
    pub b: f64,
}

impl Default for QualityDependencyModel {
    fn default() -> Self {
        QualityDependencyModel {
            kappa: DEFAULT_KAPPA,
            b: 0.0,
        }
    }
}

impl QualityDependencyModel {
    pub fn eval(&self, d_g: f64) -> f64 {
        self.kappa * d_g + self.b
    }

    /// `dD_C/dD_G`, constant.
    pub fn deriv(&self) -> f64 {
        self.kappa
    }

    pub fn kappa_in_observed_range(&self) -> bool {
        (KAPPA_RANGE.0..=KAPPA_RANGE.1).contains(&self.kappa)
    }
}

/// Power-law rate-quantization model `R = a * QP^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RqModel {
    a: f64,
    b: f64,
}

impl RqModel {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!("R-Q model needs a > 0, got a={a}, b={b}")));
        }
        Ok(RqModel { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Multiply the scale by `factor`, keeping the exponent.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        RqModel::new(self.a * factor, self.b)
    }

    pub fn eval(&self, qp: u8) -> Result<f64> {
        if qp < 1 {
            return Err(Error::Domain("R-Q model is defined for qp >= 1".into()));
        }
        Ok(self.eval_real(f64::from(qp)))
    }

    /// Evaluate at a real-valued QP.
    pub fn eval_real(&self, qp: f64) -> f64 {
        self.a * qp.powf(self.b)
    }

    /// Real-valued QP that reproduces `target_bits`, before rounding.
    pub fn invert_real(&self, target_bits: f64) -> Result<f64> {
        if !(target_bits.is_finite() && target_bits > 0.0) {
            return Err(Error::Domain(format!(
                "target bits must be positive, got {target_bits}"
            )));
        }
        if self.b == 0.0 {
            return Err(Error::NotInvertible);
        }
        Ok((target_bits / self.a).powf(1.0 / self.b))
    }

    /// Integer QP for `target_bits`: nearest integer (half away from zero),
    /// clamped to `[1, 51]`.
    pub fn invert(&self, target_bits: f64) -> Result<u8> {
        let qp = self.invert_real(target_bits)?;
        // NaN cannot come out of a positive base; inf clamps to the top.
        Ok(qp.round().clamp(1.0, f64::from(QP_MAX)) as u8)
    }
}

/// Result of a straight-line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
///
/// `R^2 = 1 - SS_res / SS_tot`; constant data that is fitted exactly reports
/// `R^2 = 1`.
pub fn fit_linear_least_squares(xs: &[f64], ys: &[f64]) -> Result<FitReport> {
    let weights = vec![1.0; xs.len()];
    fit_weighted_least_squares(xs, ys, &weights)
}

/// Weighted least squares; R^2 uses the same weights.
pub fn fit_weighted_least_squares(xs: &[f64], ys: &[f64], weights: &[f64]) -> Result<FitReport> {
    if xs.len() != ys.len() || xs.len() != weights.len() {
        return Err(Error::Fit(format!(
            "length mismatch: {} x, {} y, {} weights",
            xs.len(),
            ys.len(),
            weights.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {}", xs.len())));
    }
    if let Some(i) =
        (0..xs.len()).find(|&i| !(xs[i].is_finite() && ys[i].is_finite() && weights[i].is_finite() && weights[i] > 0.0))
    {
        return Err(Error::Fit(format!("non-finite point or weight at index {i}")));
    }

    let w_sum: f64 = weights.iter().sum();
    let x_mean = xs.iter().zip(weights).map(|(x, w)| w * x).sum::<f64>() / w_sum;
    let y_mean = ys.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / w_sum;

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut ss_tot = 0.0;
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(weights) {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        ss_tot += w * dy * dy;
    }
    let x_scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    if sxx <= (x_scale * 1e-12).powi(2) * w_sum {
        return Err(Error::Fit("x values are all equal".into()));
    }

    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .zip(weights)
        .map(|((&x, &y), &w)| {
            let r = y - (slope * x + intercept);
            w * r * r
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(FitReport {
        slope,
        intercept,
        r_squared: r_squared.min(1.0),
    })
}

/// The four model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GeometryRd,
    ColorRd,
    QualityDependency,
    Rq,
}

/// A fitted model of any family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Geometry(GeometryRdModel),
    Color(ColorRdModel),
    Dependency(QualityDependencyModel),
    Rq(RqModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: FittedModel,
    pub report: FitReport,
    /// Set when a fitted dependency slope falls outside the observed range.
    pub warning: bool,
}

/// Fit a family from `(x, y)` pairs in natural units:
/// `(rate, psnr)` for the R-D families, `(d_g, d_c)` for the dependency and
/// `(qp, bits)` for R-Q.
pub fn fit_model(kind: ModelKind, points: &[(f64, f64)]) -> Result<ModelFit> {
    match kind {
        ModelKind::GeometryRd => fit_geometry_rd(points).map(|(m, report)| ModelFit {
            model: FittedModel::Geometry(m),
            report,
            warning: false,
        }),
        ModelKind::ColorRd => fit_color_rd(points).map(|(m, report)| ModelFit {
            model: FittedModel::Color(m),
            report,
            warning: false,
        }),
        ModelKind::QualityDependency => fit_quality_dependency(points).map(|(m, report)| ModelFit {
            model: FittedModel::Dependency(m),
            report,
            warning: !m.kappa_in_observed_range(),
        }),
        ModelKind::Rq => fit_rq_points(points).map(|(m, report)| ModelFit {
            model: FittedModel::Rq(m),
            report,
            warning: false,
        }),
    }
}

fn reject_offenders(points: &[(f64, f64)], bad: impl Fn(&(f64, f64)) -> bool, what: &str) -> Result<()> {
    let offenders: Vec<String> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| bad(p))
        .map(|(i, p)| format!("#{i} ({}, {})", p.0, p.1))
        .collect();
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(Error::Fit(format!("{what}: {}", offenders.join(", "))))
    }
}

pub fn fit_geometry_rd(points: &[(f64, f64)]) -> Result<(GeometryRdModel, FitReport)> {
    reject_offenders(points, |p| !(p.0.is_finite() && p.0 > 0.0), "rate must be positive")?;
    let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let report = fit_linear_least_squares(&xs, &ys)?;
    let model = GeometryRdModel::new(report.slope, report.intercept)
        .map_err(|_| Error::Fit(format!("fitted a_g = {} is not negative", report.slope)))?;
    Ok((model, report))
}

pub fn fit_color_rd(points: &[(f64, f64)]) -> Result<(ColorRdModel, FitReport)> {
    reject_offenders(points, |p| !(p.0.is_finite() && p.0 > 0.0), "rate must be positive")?;
    let xs: Vec<f64> = points.iter().map(|p| p.0.powf(COLOR_RATE_EXPONENT)).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let report = fit_linear_least_squares(&xs, &ys)?;
    let model = ColorRdModel::new(report.slope, report.intercept)
        .map_err(|_| Error::Fit(format!("fitted a_c = {} is not positive", report.slope)))?;
    Ok((model, report))
}

pub fn fit_quality_dependency(points: &[(f64, f64)]) -> Result<(QualityDependencyModel, FitReport)> {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let report = fit_linear_least_squares(&xs, &ys)?;
    Ok((
        QualityDependencyModel {
            kappa: report.slope,
            b: report.intercept,
        },
        report,
    ))
}

fn fit_rq_points(points: &[(f64, f64)]) -> Result<(RqModel, FitReport)> {
    reject_offenders(
        points,
        |p| !(p.0.is_finite() && p.0 >= 1.0 && p.1.is_finite() && p.1 > 0.0),
        "R-Q fit needs qp >= 1 and bits > 0",
    )?;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let report = fit_linear_least_squares(&xs, &ys)?;
    Ok((RqModel::new(report.intercept.exp(), report.slope)?, report))
}

/// Fit `ln R = ln a + b ln QP` to (QP, bits) samples.
pub fn fit_rq(samples: &[RdSample]) -> Result<(RqModel, FitReport)> {
    let points: Vec<(f64, f64)> = samples.iter().map(|s| (f64::from(s.qp), s.bits)).collect();
    fit_rq_points(&points)
}
