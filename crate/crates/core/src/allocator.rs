//! Geometry/color bit allocation.
//!
//! Maximizing `w*D_G + D_C` subject to `R_G + R_C <= R_tar`, with color
//! quality coupled to geometry quality through the dependency slope `kappa`,
//! gives the stationarity conditions
//!
//! ```text
//! R_G(lambda) = sqrt((w + kappa) * theta_g / lambda)
//! R_C(lambda) = (theta_c / lambda)^(10/9)
//! ```
//!
//! Both are strictly decreasing in `lambda`, so the multiplier that spends
//! exactly the budget is found by a bracketing search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ColorRdModel, GeometryRdModel, QualityDependencyModel, COLOR_RATE_EXPONENT};

pub const DEFAULT_WEIGHT: f64 = 25.0;

/// Relative budget slack at which the search stops before `max_iter`.
pub const EARLY_EXIT_SLACK: f64 = 1e-4;

/// Allocation parameters that do not depend on the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationParams {
    pub theta_g: f64,
    pub theta_c: f64,
    pub w: f64,
    pub kappa: f64,
}

impl AllocationParams {
    pub fn new(theta_g: f64, theta_c: f64) -> Self {
        AllocationParams {
            theta_g,
            theta_c,
            w: DEFAULT_WEIGHT,
            kappa: crate::models::DEFAULT_KAPPA,
        }
    }

    pub fn from_models(g: &GeometryRdModel, c: &ColorRdModel) -> Self {
        AllocationParams::new(g.theta(), c.theta())
    }

    pub fn with_target(self, r_tar: f64) -> AllocationProblem {
        AllocationProblem {
            theta_g: self.theta_g,
            theta_c: self.theta_c,
            w: self.w,
            kappa: self.kappa,
            r_tar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub theta_g: f64,
    pub theta_c: f64,
    pub w: f64,
    pub kappa: f64,
    /// Budget for the geometry and color videos together.
    pub r_tar: f64,
}

impl AllocationProblem {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.theta_g) || !positive(self.theta_c) {
            return Err(Error::Domain(format!(
                "theta_g and theta_c must be positive, got {} and {}",
                self.theta_g, self.theta_c
            )));
        }
        if !positive(self.w) {
            return Err(Error::Domain(format!("weight must be positive, got {}", self.w)));
        }
        if !self.kappa.is_finite() || self.w + self.kappa <= 0.0 {
            return Err(Error::Domain(format!("invalid kappa {}", self.kappa)));
        }
        if !positive(self.r_tar) {
            return Err(Error::Domain(format!(
                "target bits must be positive, got {}",
                self.r_tar
            )));
        }
        Ok(())
    }

    pub fn geometry_bits(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        Ok(((self.w + self.kappa) * self.theta_g / lambda).sqrt())
    }

    pub fn color_bits(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        Ok((self.theta_c / lambda).powf(1.0 / (1.0 - COLOR_RATE_EXPONENT)))
    }

    /// Total spend `R_G(lambda) + R_C(lambda)`.
    pub fn total_bits(&self, lambda: f64) -> Result<f64> {
        Ok(self.geometry_bits(lambda)? + self.color_bits(lambda)?)
    }

    fn result_at(&self, lambda: f64, iterations: u32, converged: bool) -> AllocationResult {
        AllocationResult {
            lambda,
            // lambda is known valid here
            r_g: ((self.w + self.kappa) * self.theta_g / lambda).sqrt(),
            r_c: (self.theta_c / lambda).powf(1.0 / (1.0 - COLOR_RATE_EXPONENT)),
            iterations,
            converged,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda must be positive, got {lambda}")))
    }
}

pub fn geometry_bits_for_lambda(p: &AllocationProblem, lambda: f64) -> Result<f64> {
    p.geometry_bits(lambda)
}

pub fn color_bits_for_lambda(p: &AllocationProblem, lambda: f64) -> Result<f64> {
    p.color_bits(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearchConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_init: f64,
    pub max_iter: u32,
}

impl Default for LambdaSearchConfig {
    fn default() -> Self {
        LambdaSearchConfig {
            lambda_min: 0.01,
            lambda_max: 100.0,
            lambda_init: 4.0,
            max_iter: 20,
        }
    }
}

impl LambdaSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_min > 0.0
            && self.lambda_min < self.lambda_init
            && self.lambda_init < self.lambda_max
            && self.lambda_max.is_finite()
            && self.max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "lambda search needs 0 < min < init < max and max_iter >= 1, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub lambda: f64,
    pub r_g: f64,
    pub r_c: f64,
    pub iterations: u32,
    /// False when the budget cannot be met inside the lambda range and the
    /// result was clamped to a boundary.
    pub converged: bool,
}

impl AllocationResult {
    pub fn total(&self) -> f64 {
        self.r_g + self.r_c
    }
}

/// Bracketing search for the multiplier that spends the budget.
///
/// Each step evaluates `R(lambda)`; overspending raises the lower bracket and
/// moves halfway toward the upper one, underspending lowers the upper bracket
/// and moves halfway toward the lower one. The search stops after
/// `max_iter` steps or once a feasible spend is within `EARLY_EXIT_SLACK` of
/// the budget, and returns the last multiplier whose spend fit the budget.
pub fn search_lambda(p: &AllocationProblem, cfg: &LambdaSearchConfig) -> Result<AllocationResult> {
    p.validate()?;
    cfg.validate()?;

    if p.total_bits(cfg.lambda_max)? > p.r_tar {
        return Ok(p.result_at(cfg.lambda_max, 0, false));
    }
    if p.total_bits(cfg.lambda_min)? < p.r_tar {
        return Ok(p.result_at(cfg.lambda_min, 0, false));
    }

    let mut lo = cfg.lambda_min;
    let mut hi = cfg.lambda_max;
    let mut lambda = cfg.lambda_init;
    // lambda_max is feasible by the check above.
    let mut feasible = cfg.lambda_max;
    let mut iterations = 0;
    for iter in 1..=cfg.max_iter {
        iterations = iter;
        let spent = p.total_bits(lambda)?;
        if spent > p.r_tar {
            lo = lambda;
            lambda = (lambda + hi) / 2.0;
        } else {
            feasible = lambda;
            if (p.r_tar - spent) / p.r_tar < EARLY_EXIT_SLACK {
                break;
            }
            hi = lambda;
            lambda = (lambda + lo) / 2.0;
        }
    }
    Ok(p.result_at(feasible, iterations, true))
}

/// Subtract the constant occupancy and patch costs from the total budget and
/// split the remainder between geometry and color.
pub fn allocate(
    total_target: f64,
    occ_bits: f64,
    patch_bits: f64,
    params: &AllocationParams,
    cfg: &LambdaSearchConfig,
) -> Result<AllocationResult> {
    if !(occ_bits >= 0.0 && patch_bits >= 0.0) {
        return Err(Error::Domain("constant substream bits must be non-negative".into()));
    }
    let r_tar = total_target - occ_bits - patch_bits;
    if !(r_tar > 0.0) {
        return Err(Error::Budget {
            total: total_target,
            occ: occ_bits,
            patch: patch_bits,
        });
    }
    search_lambda(&params.with_target(r_tar), cfg)
}

/// Weighted quality `w*D_G + D_C` with `D_C` coupled to `D_G`, i.e.
/// `(w + kappa) * D_G(r_g) + D_C_own(r_c) + b`. Larger is better.
pub fn objective_value(
    w: f64,
    geometry: &GeometryRdModel,
    color: &ColorRdModel,
    dependency: &QualityDependencyModel,
    r_g: f64,
    r_c: f64,
) -> Result<f64> {
    let d_g = geometry.eval(r_g)?;
    let d_c_own = color.eval(r_c)?;
    Ok(w * d_g + (dependency.eval(d_g) + d_c_own))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_problem(r_tar: f64) -> AllocationProblem {
        AllocationParams::new(1.0, 1.0).with_target(r_tar)
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn geometry_bits_examples() {
        let p = unit_problem(1.0);
        assert!(close(p.geometry_bits(25.3).unwrap(), 1.0, 1e-15));
        // mpmath: sqrt(25.3/4)
        assert!(close(p.geometry_bits(4.0).unwrap(), 2.514_955_267_991_858, 1e-14));
        let p4 = AllocationParams {
            theta_g: 4.0,
            ..AllocationParams::new(1.0, 1.0)
        }
        .with_target(1.0);
        assert!(close(p4.geometry_bits(25.3).unwrap(), 2.0, 1e-15));
        assert!(p.geometry_bits(0.0).is_err());
        assert!(p.geometry_bits(-1.0).is_err());
    }

    #[test]
    fn color_bits_examples() {
        let p = unit_problem(1.0);
        assert_eq!(p.color_bits(1.0).unwrap(), 1.0);
        let p4 = AllocationParams {
            theta_c: 4.0,
            ..AllocationParams::new(1.0, 1.0)
        }
        .with_target(1.0);
        assert_eq!(p4.color_bits(4.0).unwrap(), 1.0);
        // mpmath: 4^(-10/9)
        assert!(close(p.color_bits(4.0).unwrap(), 0.214_310_995_713_268_2, 1e-13));
        assert!(p.color_bits(0.0).is_err());
    }

    #[test]
    fn search_recovers_constructed_lambda() {
        let r = search_lambda(&unit_problem(2.72922), &LambdaSearchConfig::default()).unwrap();
        assert!(r.converged);
        assert!(close(r.lambda, 4.0, 1e-3), "{r:?}");
        assert!(r.iterations <= 20);
        assert!(r.total() <= 2.72922);
    }

    #[test]
    fn search_clamps_when_budget_is_huge() {
        let r = search_lambda(&unit_problem(1e12), &LambdaSearchConfig::default()).unwrap();
        assert!(!r.converged);
        assert_eq!(r.lambda, 0.01);
    }

    #[test]
    fn search_clamps_when_budget_is_tiny() {
        let r = search_lambda(&unit_problem(1e-6), &LambdaSearchConfig::default()).unwrap();
        assert!(!r.converged);
        assert_eq!(r.lambda, 100.0);
    }

    #[test]
    fn search_follows_bracketing_updates() {
        // r_tar = 1: R(4) = 2.73 overspends, lambda -> (4 + 100) / 2 = 52;
        // R(52) = 0.71 fits, lambda -> (52 + 4) / 2 = 28; R(28) = 0.975 fits.
        let cfg = LambdaSearchConfig {
            max_iter: 3,
            ..Default::default()
        };
        let r = search_lambda(&unit_problem(1.0), &cfg).unwrap();
        assert_eq!(r.iterations, 3);
        assert!(r.converged);
        assert_eq!(r.lambda, 28.0);
        assert!(r.total() <= 1.0);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let cfg = LambdaSearchConfig::default();
        let mut p = unit_problem(1.0);
        p.theta_g = 0.0;
        assert!(search_lambda(&p, &cfg).is_err());
        let bad = LambdaSearchConfig {
            lambda_init: 200.0,
            ..cfg
        };
        assert!(search_lambda(&unit_problem(1.0), &bad).is_err());
        let bad = LambdaSearchConfig { max_iter: 0, ..cfg };
        assert!(search_lambda(&unit_problem(1.0), &bad).is_err());
    }

    #[test]
    fn allocate_subtracts_constant_substreams() {
        let params = AllocationParams::new(1.0, 1.0);
        let cfg = LambdaSearchConfig::default();
        let direct = search_lambda(&params.with_target(850.0), &cfg).unwrap();
        let via = allocate(1000.0, 100.0, 50.0, &params, &cfg).unwrap();
        assert_eq!(direct, via);

        let r = allocate(2.87922, 0.1, 0.05, &params, &cfg).unwrap();
        assert!(close(r.lambda, 4.0, 1e-3));

        match allocate(100.0, 80.0, 30.0, &params, &cfg) {
            Err(Error::Budget { occ, patch, .. }) => assert_eq!((occ, patch), (80.0, 30.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn objective_examples() {
        let g = GeometryRdModel::new(-1.0, 0.0).unwrap();
        let c = ColorRdModel::new(10.0, 0.0).unwrap();
        let dep = QualityDependencyModel { kappa: 0.3, b: 0.0 };
        let v = objective_value(25.0, &g, &c, &dep, 1.0, 1.0).unwrap();
        assert!(close(v, -15.3, 1e-14));
        assert!(objective_value(25.0, &g, &c, &dep, 0.0, 1.0).is_err());
    }

    #[test]
    fn objective_constants_do_not_move_the_argmax() {
        let g0 = GeometryRdModel::new(-1.0, 0.0).unwrap();
        let g1 = GeometryRdModel::new(-1.0, 70.0).unwrap();
        let c0 = ColorRdModel::new(10.0, 0.0).unwrap();
        let c1 = ColorRdModel::new(10.0, -5.0).unwrap();
        let d0 = QualityDependencyModel { kappa: 0.3, b: 0.0 };
        let d1 = QualityDependencyModel { kappa: 0.3, b: 12.0 };
        let argmax = |g, c, d| {
            (1..1000)
                .map(|i| {
                    let rg = 10.0 * i as f64 / 1000.0;
                    (rg, objective_value(25.0, g, c, d, rg, 10.0 - rg).unwrap())
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&g0, &c0, &d0), argmax(&g1, &c1, &d1));
    }

    #[test]
    fn grid_argmax_matches_closed_form() {
        // Step 1e-4 along r_g + r_c = 10.
        let params = AllocationParams::new(1.0, 1.0);
        let r = search_lambda(&params.with_target(10.0), &LambdaSearchConfig::default()).unwrap();
        let total = r.total();
        let g = GeometryRdModel::new(-1.0, 0.0).unwrap();
        let c = ColorRdModel::new(10.0, 0.0).unwrap();
        let d = QualityDependencyModel::default();
        let step = 1e-4;
        let n = (total / step) as usize;
        let best = (1..n)
            .map(|i| {
                let rg = i as f64 * step;
                (rg, objective_value(25.0, &g, &c, &d, rg, total - rg).unwrap())
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((best.0 - r.r_g).abs() <= step, "{} vs {}", best.0, r.r_g);
    }
}
