//! Model parameters and the contract's function family: consortium utility
//! `U`, effort impact `φ`, effort cost `h`, and the diffusion shape
//! `ψ = ½(h'/φ')²`, together with the analytic scalar quantities derived from
//! them (state-domain endpoint, maximum admissible effort, boundary values,
//! incentive-compatible effort map) and a structural-assumption validator.

use std::sync::Arc;

use thiserror::Error;

use crate::numeric::{invert_increasing, scan_then_refine_max};

/// Absolute tolerance for the bisection behind function inverses.
pub const INVERSION_TOL: f64 = 1e-12;
/// Iteration cap for the bisection behind function inverses.
pub const INVERSION_MAX_ITER: usize = 200;
/// Uniform sample count for supremum scans.
pub const SCAN_POINTS: usize = 4096;
/// Golden-section refinement tolerance for supremum scans.
pub const SCAN_REFINE_TOL: f64 = 1e-10;

/// Errors from parameter validation and the analytic scalar computations.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: requires {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("marginal-utility inverse is undefined at ratio h'(0)/phi'(0) = {ratio}")]
    MarginalUtilityInverse { ratio: f64 },
    #[error("failed to invert {what} at target {target}")]
    InversionFailure { what: &'static str, target: f64 },
}

/// Scalar model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Discount rate per unit time.
    pub delta: f64,
    /// Drift of the operational cost per unit time.
    pub k: f64,
    /// Volatility of the operational cost per √time.
    pub sigma: f64,
    /// Maximum rent the public is willing to pay per unit time.
    pub r_bar: f64,
    /// Initial cost of the project (simulation display only).
    pub c0: f64,
    /// Initial social value of the project (simulation display only).
    pub x0_welfare: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |name, value: f64, ok: bool, constraint| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    name,
                    value,
                    constraint,
                })
            }
        };
        check("delta", self.delta, self.delta > 0.0, "> 0")?;
        check("k", self.k, self.k > 0.0, "> 0")?;
        check("sigma", self.sigma, self.sigma > 0.0, "> 0")?;
        check("r_bar", self.r_bar, self.r_bar > self.k, "> k")?;
        check("c0", self.c0, self.c0 >= 0.0, ">= 0")?;
        check("x0_welfare", self.x0_welfare, true, "finite")?;
        Ok(())
    }

    /// Largest admissible rent in excess of the cost drift, r̄ − k.
    pub fn max_rent_spread(&self) -> f64 {
        self.r_bar - self.k
    }
}

/// A scalar map of the model's function family.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The model's function family with derivatives and inverses.
///
/// All maps act on non-negative reals. The short accessor methods follow the
/// conventional symbols: `u`/`du`/`inv_u`/`inv_du` for utility, `phi`/`dphi`
/// for effort impact, `h`/`dh`/`inv_h` for effort cost, and
/// `psi`/`inv_psi` for the diffusion shape `½(h'/φ')²`.
#[derive(Clone)]
pub struct FunctionBundle {
    pub utility: ScalarFn,
    pub utility_deriv: ScalarFn,
    pub utility_inv: ScalarFn,
    pub utility_deriv_inv: ScalarFn,
    pub impact: ScalarFn,
    pub impact_deriv: ScalarFn,
    pub cost: ScalarFn,
    pub cost_deriv: ScalarFn,
    pub cost_inv: ScalarFn,
    pub diffusion_shape: ScalarFn,
    pub diffusion_shape_inv: ScalarFn,
}

impl std::fmt::Debug for FunctionBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FunctionBundle {{ .. }}")
    }
}

impl FunctionBundle {
    #[inline]
    pub fn u(&self, x: f64) -> f64 {
        (self.utility)(x)
    }
    #[inline]
    pub fn du(&self, x: f64) -> f64 {
        (self.utility_deriv)(x)
    }
    #[inline]
    pub fn inv_u(&self, y: f64) -> f64 {
        (self.utility_inv)(y)
    }
    #[inline]
    pub fn inv_du(&self, z: f64) -> f64 {
        (self.utility_deriv_inv)(z)
    }
    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        (self.impact)(x)
    }
    #[inline]
    pub fn dphi(&self, x: f64) -> f64 {
        (self.impact_deriv)(x)
    }
    #[inline]
    pub fn h(&self, x: f64) -> f64 {
        (self.cost)(x)
    }
    #[inline]
    pub fn dh(&self, x: f64) -> f64 {
        (self.cost_deriv)(x)
    }
    #[inline]
    pub fn inv_h(&self, y: f64) -> f64 {
        (self.cost_inv)(y)
    }
    #[inline]
    pub fn psi(&self, a: f64) -> f64 {
        (self.diffusion_shape)(a)
    }
    #[inline]
    pub fn inv_psi(&self, q: f64) -> f64 {
        (self.diffusion_shape_inv)(q)
    }

    /// σ·h'(a)/φ'(a), the volatility loading of the continuation value.
    #[inline]
    pub fn vol_loading(&self, sigma: f64, a: f64) -> f64 {
        sigma * self.dh(a) / self.dphi(a)
    }
}

/// The worked function family: `U(x) = √x`, `φ(x) = x + ln(1+x)`,
/// `h(x) = ⅔√(1+x)(x+4) − 8/3`, so that `ψ(a) = (1+a)/2` and
/// `ψ⁻¹(q) = 2q − 1`. The cost inverse has no closed form and is computed
/// by bisection with bracket doubling.
pub fn example_bundle() -> FunctionBundle {
    let h = |x: f64| 2.0 / 3.0 * (1.0 + x).sqrt() * (x + 4.0) - 8.0 / 3.0;
    FunctionBundle {
        utility: Arc::new(|x| x.sqrt()),
        utility_deriv: Arc::new(|x| 0.5 / x.sqrt()),
        utility_inv: Arc::new(|y| y * y),
        utility_deriv_inv: Arc::new(|z| 0.25 / (z * z)),
        impact: Arc::new(|x| x + x.ln_1p()),
        impact_deriv: Arc::new(|x| (2.0 + x) / (1.0 + x)),
        cost: Arc::new(h),
        cost_deriv: Arc::new(|x| (2.0 + x) / (1.0 + x).sqrt()),
        cost_inv: Arc::new(move |y| {
            invert_increasing(h, y, 1.0, 1e12, INVERSION_TOL, INVERSION_MAX_ITER)
                .unwrap_or(f64::NAN)
        }),
        diffusion_shape: Arc::new(|a| 0.5 * (1.0 + a)),
        diffusion_shape_inv: Arc::new(|q| 2.0 * q - 1.0),
    }
}

/// Upper end of the state domain, x̄ = (1/δ)·U((U')⁻¹(h'(0)/φ'(0))).
pub fn compute_xbar(params: &ModelParams, bundle: &FunctionBundle) -> Result<f64, ModelError> {
    let ratio = bundle.dh(0.0) / bundle.dphi(0.0);
    let arg = bundle.inv_du(ratio);
    let value = bundle.u(arg);
    if !ratio.is_finite() || !arg.is_finite() || !value.is_finite() || arg < 0.0 {
        return Err(ModelError::MarginalUtilityInverse { ratio });
    }
    Ok(value / params.delta)
}

/// Global upper bound on admissible effort, ā = h⁻¹(U(r̄ − k)).
pub fn compute_abar(params: &ModelParams, bundle: &FunctionBundle) -> Result<f64, ModelError> {
    let target = bundle.u(params.max_rent_spread());
    let a = bundle.inv_h(target);
    if !a.is_finite() {
        return Err(ModelError::InversionFailure {
            what: "effort cost h",
            target,
        });
    }
    Ok(a)
}

/// Left boundary value of the public value function,
/// v(0) = (1/δ)·sup over x ∈ [0, r̄−k] of (φ(h⁻¹(U(x))) − x).
///
/// The supremum is taken by a dense scan with golden-section refinement; the
/// objective vanishes at x = 0 so the result is non-negative.
pub fn boundary_v0(params: &ModelParams, bundle: &FunctionBundle) -> f64 {
    let objective = |x: f64| bundle.phi(bundle.inv_h(bundle.u(x))) - x;
    let hi = params.max_rent_spread().max(0.0);
    let (_, sup) = scan_then_refine_max(objective, 0.0, hi, SCAN_POINTS, SCAN_REFINE_TOL);
    sup.max(0.0) / params.delta
}

/// A scanned supremum together with a flag marking that the scan hit its
/// domain cap before the objective started to decrease.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEstimate {
    pub value: f64,
    pub capped: bool,
}

/// Ceiling on the public value function over the whole half-line:
/// sup over x ≥ 0 of (φ'(0)·h⁻¹(U(x)) − x).
///
/// The bracket widens by doubling until the scanned maximum falls strictly
/// inside it; if the cap is reached first the cap's maximum is reported with
/// `capped` set.
pub fn upper_bound_v(bundle: &FunctionBundle) -> BoundEstimate {
    const DOMAIN_CAP: f64 = 1e9;
    let slope = bundle.dphi(0.0);
    let objective = |x: f64| slope * bundle.inv_h(bundle.u(x)) - x;
    let mut hi = 1.0;
    loop {
        let (argmax, sup) = scan_then_refine_max(&objective, 0.0, hi, SCAN_POINTS, SCAN_REFINE_TOL);
        if argmax < 0.9 * hi {
            return BoundEstimate {
                value: sup.max(0.0),
                capped: false,
            };
        }
        hi *= 2.0;
        if hi > DOMAIN_CAP {
            let (_, sup) = scan_then_refine_max(
                &objective,
                0.0,
                DOMAIN_CAP,
                SCAN_POINTS,
                SCAN_REFINE_TOL,
            );
            return BoundEstimate {
                value: sup.max(0.0),
                capped: true,
            };
        }
    }
}

/// Effort with a flag marking that the volatility loading fell below the
/// incentive-compatible floor and the effort was clamped to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedEffort {
    pub value: f64,
    pub clamped: bool,
}

/// Incentive-compatible effort for a volatility loading `y`:
/// a = (h'/φ')⁻¹(y/σ), computed as ψ⁻¹((y/σ)²/2).
///
/// Loadings below σ·h'(0)/φ'(0) are outside the range of the map; the
/// economic floor of zero effort is returned with the clamp flag set.
pub fn incentive_effort(y: f64, params: &ModelParams, bundle: &FunctionBundle) -> ClampedEffort {
    let floor = bundle.dh(0.0) / bundle.dphi(0.0);
    let z = y / params.sigma;
    if z < floor {
        return ClampedEffort {
            value: 0.0,
            clamped: true,
        };
    }
    ClampedEffort {
        value: bundle.inv_psi(0.5 * z * z).max(0.0),
        clamped: false,
    }
}

/// Outcome of one named structural check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Asymptotic limits (Inada conditions, derivative limits at infinity)
    /// can only be probed at finite points; those checks are reported but do
    /// not gate the overall verdict.
    pub enforced: bool,
    pub worst_violation: f64,
    pub detail: Option<String>,
}

/// Report of all structural checks on a function bundle.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "pass" } else { "FAIL" };
            let kind = if c.enforced { "" } else { " (advisory)" };
            out.push_str(&format!(
                "{:<34} {}{}  worst violation {:.3e}",
                c.name, status, kind, c.worst_violation
            ));
            if let Some(d) = &c.detail {
                out.push_str(&format!("  [{d}]"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "overall: {}\n",
            if self.passed { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Threshold below which U'(domain_max) is accepted as "vanishing at ∞".
pub const INADA_FAR_DERIV_MAX: f64 = 0.05;
/// Threshold above which U' near zero is accepted as "exploding at 0".
pub const INADA_NEAR_DERIV_MIN: f64 = 100.0;

/// Validates the structural assumptions on a function bundle by sampling
/// `n_samples` intervals of `[0, domain_max]`.
///
/// One entry is produced per invariant; non-finite samples fail the
/// affected check with the offending point recorded, never abort. Inada-type
/// limit checks are necessarily finite-point proxies and are reported
/// without gating `passed`.
pub fn validate_assumptions(
    bundle: &FunctionBundle,
    domain_max: f64,
    n_samples: usize,
) -> ValidationReport {
    assert!(n_samples >= 10, "n_samples must be at least 10");
    assert!(
        domain_max > 0.0 && domain_max.is_finite(),
        "domain_max must be positive"
    );

    let n = n_samples;
    let step = domain_max / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();

    let mut checks: Vec<CheckResult> = Vec::new();

    point_check(&mut checks, "u_zero", bundle.u(0.0), 1e-12);
    monotone_check(&mut checks, "u_strictly_increasing", bundle, |b, x| b.u(x), &grid, Strict::Increasing);
    curvature_check(&mut checks, "u_strictly_concave", bundle, |b, x| b.u(x), &grid, Strict::Concave);

    point_check(&mut checks, "phi_zero", bundle.phi(0.0), 1e-12);
    monotone_check(&mut checks, "phi_increasing", bundle, |b, x| b.phi(x), &grid, Strict::Increasing);
    curvature_check(&mut checks, "phi_concave", bundle, |b, x| b.phi(x), &grid, Strict::WeaklyConcave);
    {
        let d0 = bundle.dphi(0.0);
        checks.push(CheckResult {
            name: "phi_deriv_finite_at_zero",
            passed: d0.is_finite(),
            enforced: true,
            worst_violation: if d0.is_finite() { 0.0 } else { f64::INFINITY },
            detail: (!d0.is_finite()).then(|| format!("phi'(0) = {d0}")),
        });
    }
    lower_envelope_check(&mut checks, "phi_dominates_identity", bundle, &grid);

    point_check(&mut checks, "h_zero", bundle.h(0.0), 1e-12);
    curvature_check(&mut checks, "h_convex", bundle, |b, x| b.h(x), &grid, Strict::WeaklyConvex);
    {
        let d0 = bundle.dh(0.0);
        let passed = d0.is_finite() && d0 > 0.0;
        checks.push(CheckResult {
            name: "h_deriv_positive_at_zero",
            passed,
            enforced: true,
            worst_violation: if passed { 0.0 } else { (-d0).max(0.0) },
            detail: (!passed).then(|| format!("h'(0) = {d0}")),
        });
    }

    psi_floor_check(&mut checks, bundle, &grid);
    cost_of_diffusion_convexity_check(&mut checks, bundle, domain_max, n);

    roundtrip_check(&mut checks, "roundtrip_u", bundle, |b, x| b.inv_u(b.u(x)), &grid);
    roundtrip_check(&mut checks, "roundtrip_h", bundle, |b, x| b.inv_h(b.h(x)), &grid);
    roundtrip_check(&mut checks, "roundtrip_psi", bundle, |b, x| b.inv_psi(b.psi(x)), &grid);

    derivative_check(&mut checks, "du_matches_fd", bundle, |b, x| b.u(x), |b, x| b.du(x), &grid);
    derivative_check(&mut checks, "dphi_matches_fd", bundle, |b, x| b.phi(x), |b, x| b.dphi(x), &grid);
    derivative_check(&mut checks, "dh_matches_fd", bundle, |b, x| b.h(x), |b, x| b.dh(x), &grid);

    // Asymptotic proxies, reported but not enforced.
    {
        let far = bundle.du(domain_max);
        let passed = far.is_finite() && far < INADA_FAR_DERIV_MAX;
        checks.push(CheckResult {
            name: "inada_marginal_utility_vanishes",
            passed,
            enforced: false,
            worst_violation: if passed { 0.0 } else { (far - INADA_FAR_DERIV_MAX).max(0.0) },
            detail: Some(format!("U'({domain_max}) = {far:.6}")),
        });
        let near = bundle.du(1e-8);
        let passed = near > INADA_NEAR_DERIV_MIN;
        checks.push(CheckResult {
            name: "inada_marginal_utility_explodes",
            passed,
            enforced: false,
            worst_violation: if passed { 0.0 } else { (INADA_NEAR_DERIV_MIN - near).max(0.0) },
            detail: Some(format!("U'(1e-8) = {near:.6}")),
        });
        let dh_far = bundle.dh(domain_max);
        let threshold = 2.0 * bundle.dh(0.0);
        let passed = dh_far.is_finite() && dh_far >= threshold;
        checks.push(CheckResult {
            name: "h_deriv_unbounded",
            passed,
            enforced: false,
            worst_violation: if passed { 0.0 } else { (threshold - dh_far).max(0.0) },
            detail: Some(format!("h'({domain_max}) = {dh_far:.6}, threshold {threshold:.6}")),
        });
        let dphi_far = bundle.dphi(domain_max);
        let passed = dphi_far.is_finite() && (dphi_far - 1.0).abs() <= 0.1;
        checks.push(CheckResult {
            name: "phi_deriv_tends_to_one",
            passed,
            enforced: false,
            worst_violation: if passed { 0.0 } else { (dphi_far - 1.0).abs() - 0.1 },
            detail: Some(format!("phi'({domain_max}) = {dphi_far:.6}")),
        });
    }

    let passed = checks.iter().all(|c| c.passed || !c.enforced);
    ValidationReport { checks, passed }
}

enum Strict {
    Increasing,
    Concave,
    WeaklyConcave,
    WeaklyConvex,
}

fn sample(
    bundle: &FunctionBundle,
    f: impl Fn(&FunctionBundle, f64) -> f64,
    grid: &[f64],
) -> Result<Vec<f64>, (f64, f64)> {
    let mut out = Vec::with_capacity(grid.len());
    for &x in grid {
        let v = f(bundle, x);
        if !v.is_finite() {
            return Err((x, v));
        }
        out.push(v);
    }
    Ok(out)
}

fn non_finite_fail(checks: &mut Vec<CheckResult>, name: &'static str, x: f64, v: f64) {
    checks.push(CheckResult {
        name,
        passed: false,
        enforced: true,
        worst_violation: f64::INFINITY,
        detail: Some(format!("non-finite value {v} at sample x = {x}")),
    });
}

fn point_check(checks: &mut Vec<CheckResult>, name: &'static str, value: f64, tol: f64) {
    let violation = value.abs();
    let passed = value.is_finite() && violation <= tol;
    checks.push(CheckResult {
        name,
        passed,
        enforced: true,
        worst_violation: if passed { 0.0 } else { violation },
        detail: (!passed).then(|| format!("value at 0 is {value}")),
    });
}

fn monotone_check(
    checks: &mut Vec<CheckResult>,
    name: &'static str,
    bundle: &FunctionBundle,
    f: impl Fn(&FunctionBundle, f64) -> f64,
    grid: &[f64],
    _kind: Strict,
) {
    let values = match sample(bundle, f, grid) {
        Ok(v) => v,
        Err((x, v)) => return non_finite_fail(checks, name, x, v),
    };
    let mut worst = f64::INFINITY;
    let mut worst_x = grid[0];
    for (i, w) in values.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d < worst {
            worst = d;
            worst_x = grid[i];
        }
    }
    let passed = worst > 0.0;
    checks.push(CheckResult {
        name,
        passed,
        enforced: true,
        worst_violation: if passed { 0.0 } else { (-worst).max(0.0) },
        detail: (!passed).then(|| format!("first difference {worst:.3e} at x = {worst_x:.6}")),
    });
}

fn curvature_check(
    checks: &mut Vec<CheckResult>,
    name: &'static str,
    bundle: &FunctionBundle,
    f: impl Fn(&FunctionBundle, f64) -> f64,
    grid: &[f64],
    kind: Strict,
) {
    let values = match sample(bundle, f, grid) {
        Ok(v) => v,
        Err((x, v)) => return non_finite_fail(checks, name, x, v),
    };
    // Second differences, oriented so that a positive `worst` is a violation.
    let mut worst = f64::NEG_INFINITY;
    let mut worst_x = grid[0];
    for (i, w) in values.windows(3).enumerate() {
        let d2 = w[2] - 2.0 * w[1] + w[0];
        let signed = match kind {
            Strict::Concave | Strict::WeaklyConcave => d2,
            Strict::WeaklyConvex => -d2,
            Strict::Increasing => unreachable!(),
        };
        if signed > worst {
            worst = signed;
            worst_x = grid[i + 1];
        }
    }
    let passed = match kind {
        Strict::Concave => worst < 0.0,
        _ => worst <= 1e-12,
    };
    checks.push(CheckResult {
        name,
        passed,
        enforced: true,
        worst_violation: if passed { 0.0 } else { worst.max(0.0) },
        detail: (!passed).then(|| format!("second difference {worst:.3e} at x = {worst_x:.6}")),
    });
}

fn lower_envelope_check(
    checks: &mut Vec<CheckResult>,
    name: &'static str,
    bundle: &FunctionBundle,
    grid: &[f64],
) {
    let values = match sample(bundle, |b, x| b.phi(x) - x, grid) {
        Ok(v) => v,
        Err((x, v)) => return non_finite_fail(checks, name, x, v),
    };
    let mut worst = f64::INFINITY;
    let mut worst_x = grid[0];
    for (&x, &v) in grid.iter().zip(&values) {
        let slack = v + 1e-9 * (1.0 + x.abs());
        if slack < worst {
            worst = slack;
            worst_x = x;
        }
    }
    let passed = worst >= 0.0;
    checks.push(CheckResult {
        name,
        passed,
        enforced: true,
        worst_violation: if passed { 0.0 } else { -worst },
        detail: (!passed).then(|| format!("phi(x) - x = {worst:.3e} at x = {worst_x:.6}")),
    });
}

fn psi_floor_check(checks: &mut Vec<CheckResult>, bundle: &FunctionBundle, grid: &[f64]) {
    let name = "psi_floor_positive";
    let ratio0 = bundle.dh(0.0) / bundle.dphi(0.0);
    let floor = 0.5 * ratio0 * ratio0;
    let values = match sample(bundle, |b, a| b.psi(a), grid) {
        Ok(v) => v,
        Err((x, v)) => return non_finite_fail(checks, name, x, v),
    };
    let mut worst = f64::INFINITY;
    let mut worst_x = grid[0];
    for (&a, &v) in grid.iter().zip(&values) {
        let slack = v - floor;
        if slack < worst {
            worst = slack;
            worst_x = a;
        }
    }
    let passed = floor.is_finite() && floor > 0.0 && worst >= -1e-9;
    checks.push(CheckResult {
        name,
        passed,
        enforced: true,
        worst_violation: if passed { 0.0 } else { (-worst).max(0.0) },
        detail: Some(format!(
            "floor ½(h'(0)/phi'(0))² = {floor:.6e}, worst slack {worst:.3e} at a = {worst_x:.6}"
        )),
    });
}

fn cost_of_diffusion_convexity_check(
    checks: &mut Vec<CheckResult>,
    bundle: &FunctionBundle,
    domain_max: f64,
    n: usize,
) {
    let name = "h_compose_inv_psi_convex";
    let q_lo = bundle.psi(0.0);
    let q_hi = bundle.psi(domain_max);
    if !q_lo.is_finite() || !q_hi.is_finite() || q_hi <= q_lo {
        return non_finite_fail(checks, name, domain_max, q_hi);
    }
    let step = (q_hi - q_lo) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| q_lo + i as f64 * step).collect();
    let values = match sample(bundle, |b, q| b.h(b.inv_psi(q)), &grid) {
        Ok(v) => v,
        Err((x, v)) => return non_finite_fail(checks, name, x, v),
    };
    let mut worst = f64::NEG_INFINITY;
    let mut worst_q = grid[0];
    for (i, w) in values.windows(3).enumerate() {
        let d2 = w[2] - 2.0 * w[1] + w[0];
        if -d2 > worst {
            worst = -d2;
            worst_q = grid[i + 1];
        }
    }
    let passed = worst <= 1e-9;
    checks.push(CheckResult {
        name,
        passed,
        enforced: true,
        worst_violation: if passed { 0.0 } else { worst },
        detail: (!passed).then(|| format!("concave kink {worst:.3e} at q = {worst_q:.6}")),
    });
}

fn roundtrip_check(
    checks: &mut Vec<CheckResult>,
    name: &'static str,
    bundle: &FunctionBundle,
    f: impl Fn(&FunctionBundle, f64) -> f64,
    grid: &[f64],
) {
    let values = match sample(bundle, f, grid) {
        Ok(v) => v,
        Err((x, v)) => return non_finite_fail(checks, name, x, v),
    };
    let mut worst = 0.0f64;
    let mut worst_x = grid[0];
    for (&x, &v) in grid.iter().zip(&values) {
        let err = (v - x).abs() / (1.0 + x.abs());
        if err > worst {
            worst = err;
            worst_x = x;
        }
    }
    let passed = worst <= 1e-8;
    checks.push(CheckResult {
        name,
        passed,
        enforced: true,
        worst_violation: if passed { 0.0 } else { worst },
        detail: (!passed).then(|| format!("relative error {worst:.3e} at x = {worst_x:.6}")),
    });
}

fn derivative_check(
    checks: &mut Vec<CheckResult>,
    name: &'static str,
    bundle: &FunctionBundle,
    f: impl Fn(&FunctionBundle, f64) -> f64,
    df: impl Fn(&FunctionBundle, f64) -> f64,
    grid: &[f64],
) {
    const EPS: f64 = 1e-5;
    let mut worst = 0.0f64;
    let mut worst_x = 0.0f64;
    for &x in grid.iter().filter(|&&x| x >= 2.0 * EPS) {
        let fd = (f(bundle, x + EPS) - f(bundle, x - EPS)) / (2.0 * EPS);
        let d = df(bundle, x);
        if !fd.is_finite() || !d.is_finite() {
            return non_finite_fail(checks, name, x, if fd.is_finite() { d } else { fd });
        }
        let err = (d - fd).abs() / (1.0 + d.abs());
        if err > worst {
            worst = err;
            worst_x = x;
        }
    }
    let passed = worst <= 1e-6;
    checks.push(CheckResult {
        name,
        passed,
        enforced: true,
        worst_violation: if passed { 0.0 } else { worst },
        detail: (!passed).then(|| format!("relative mismatch {worst:.3e} at x = {worst_x:.6}")),
    });
}
