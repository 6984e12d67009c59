//! Rate-control accuracy and R-D comparison metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|actual - target| / target`.
pub fn bitrate_error(actual: f64, target: f64) -> Result<f64> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::Domain(format!("target must be positive, got {target}")));
    }
    Ok((actual - target).abs() / target)
}

/// Weighted overall quality `w * d_g + d_c`.
pub fn total_distortion(w: f64, d_g: f64, d_c: f64) -> f64 {
    w * d_g + d_c
}

/// An R-D curve: at least four points, strictly increasing in both rate and
/// PSNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    points: Vec<(f64, f64)>,
}

impl RateCurve {
    /// Validate and sort `(rate, psnr)` points by rate.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Invalid(format!(
                "R-D curve needs at least 4 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p.0.is_finite() && p.0 > 0.0 && p.1.is_finite()))
        {
            return Err(Error::Invalid(format!("bad R-D point {p:?}")));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::Invalid(format!(
                    "R-D curve must be strictly increasing in rate and PSNR: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(RateCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn psnr_range(&self) -> (f64, f64) {
        (self.points[0].1, self.points[self.points.len() - 1].1)
    }
}

/// Least-squares cubic `log10(rate) = c0 + c1*t + c2*t^2 + c3*t^3` in the
/// normalized variable `t = (psnr - center) / scale`.
struct LogRateCubic {
    coeffs: [f64; 4],
    center: f64,
    scale: f64,
}

impl LogRateCubic {
    fn fit(curve: &RateCurve, center: f64, scale: f64) -> Result<Self> {
        let n = curve.points.len();
        let a = DMatrix::from_fn(n, 4, |i, j| ((curve.points[i].1 - center) / scale).powi(j as i32));
        let b = DVector::from_iterator(n, curve.points.iter().map(|p| p.0.log10()));
        let c = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::Metric(format!("cubic fit failed: {e}")))?;
        Ok(LogRateCubic {
            coeffs: [c[0], c[1], c[2], c[3]],
            center,
            scale,
        })
    }

    /// Integral over `[lo, hi]` in PSNR.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let antideriv = |psnr: f64| {
            let t = (psnr - self.center) / self.scale;
            let [c0, c1, c2, c3] = self.coeffs;
            self.scale * t * (c0 + t * (c1 / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)))
        };
        antideriv(hi) - antideriv(lo)
    }
}

/// Bjontegaard delta rate of `test` against `anchor`, in percent.
///
/// Fits a cubic of log10 rate against PSNR to each curve, averages the gap
/// over the shared PSNR interval and converts it back to a rate ratio.
/// Negative values mean `test` needs fewer bits for the same quality.
pub fn bd_rate(anchor: &RateCurve, test: &RateCurve) -> Result<f64> {
    let (a_lo, a_hi) = anchor.psnr_range();
    let (t_lo, t_hi) = test.psnr_range();
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    if !(hi > lo) {
        return Err(Error::Metric(format!(
            "PSNR ranges do not overlap: [{a_lo}, {a_hi}] vs [{t_lo}, {t_hi}]"
        )));
    }
    let all_lo = a_lo.min(t_lo);
    let all_hi = a_hi.max(t_hi);
    let center = (all_lo + all_hi) / 2.0;
    let scale = ((all_hi - all_lo) / 2.0).max(f64::MIN_POSITIVE);

    let fa = LogRateCubic::fit(anchor, center, scale)?;
    let ft = LogRateCubic::fit(test, center, scale)?;
    let avg_diff = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg_diff) - 1.0) * 100.0)
}
