//! Scalar numerics shared across the solver: root bracketing and bisection,
//! one-dimensional maximization (dense scan plus golden-section refinement),
//! adaptive quadrature, and the standard normal distribution function.

/// Inverse golden ratio, (√5 − 1)/2.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Finds `x` with `f(x) = target` for a function increasing on `[0, ∞)`.
///
/// Doubles the bracket from `initial_bracket` until `f` exceeds the target,
/// then bisects to absolute tolerance `tol`. Returns `None` when no bracket
/// is found below `max_bracket` or the inputs are non-finite.
pub fn invert_increasing(
    f: impl Fn(f64) -> f64,
    target: f64,
    initial_bracket: f64,
    max_bracket: f64,
    tol: f64,
    max_iter: usize,
) -> Option<f64> {
    if !target.is_finite() {
        return None;
    }
    let f0 = f(0.0);
    if !f0.is_finite() || f0 > target {
        return None;
    }
    if f0 == target {
        return Some(0.0);
    }

    let mut hi = initial_bracket.max(tol);
    while f(hi) < target {
        hi *= 2.0;
        if hi > max_bracket || !hi.is_finite() {
            return None;
        }
    }

    let mut lo = 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            break;
        }
        let fm = f(mid);
        if !fm.is_finite() {
            return None;
        }
        if fm < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
///
/// Assumes `f` is unimodal on the interval; on a non-unimodal stretch it
/// still converges to a local maximum, which is why callers scan first.
/// Returns `(argmax, max)`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    debug_assert!(lo <= hi);
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut budget = 200usize;
    // The interval cannot shrink below a few ulps of its endpoints.
    while b - a > tol.max(4.0 * f64::EPSILON * (a.abs().max(b.abs()) + 1.0)) {
        if budget == 0 {
            break;
        }
        budget -= 1;
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Maximizes `f` on `[lo, hi]` by a dense uniform scan followed by
/// golden-section refinement around the best sample. Non-finite samples are
/// skipped. Returns `(argmax, max)`.
pub fn scan_then_refine_max(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    scan_points: usize,
    refine_tol: f64,
) -> (f64, f64) {
    debug_assert!(scan_points >= 2);
    if hi <= lo {
        return (lo, f(lo));
    }
    let step = (hi - lo) / (scan_points - 1) as f64;
    let mut best_x = lo;
    let mut best_f = f64::NEG_INFINITY;
    for i in 0..scan_points {
        let x = lo + i as f64 * step;
        let fx = f(x);
        if fx.is_finite() && fx > best_f {
            best_f = fx;
            best_x = x;
        }
    }
    if !best_f.is_finite() {
        return (lo, f(lo));
    }
    let (rx, rf) = golden_section_max(
        &f,
        (best_x - step).max(lo),
        (best_x + step).min(hi),
        refine_tol,
    );
    if rf > best_f {
        (rx, rf)
    } else {
        (best_x, best_f)
    }
}

/// Adaptive Simpson quadrature of `f` on `[lo, hi]` to absolute tolerance
/// `tol`. Returns `Err` with the achieved error estimate when the recursion
/// depth is exhausted before the tolerance is met.
pub fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, f64> {
    let mid = 0.5 * (lo + hi);
    let flo = f(lo);
    let fmid = f(mid);
    let fhi = f(hi);
    let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    let mut worst = 0.0f64;
    let value = simpson_recurse(
        f, lo, hi, flo, fmid, fhi, whole, tol, 48, &mut worst,
    );
    if worst > tol {
        Err(worst)
    } else {
        Ok(value)
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse(
    f: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    flo: f64,
    fmid: f64,
    fhi: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    worst: &mut f64,
) -> f64 {
    let mid = 0.5 * (lo + hi);
    let lmid = 0.5 * (lo + mid);
    let rmid = 0.5 * (mid + hi);
    let flmid = f(lmid);
    let frmid = f(rmid);
    let left = (mid - lo) / 6.0 * (flo + 4.0 * flmid + fmid);
    let right = (hi - mid) / 6.0 * (fmid + 4.0 * frmid + fhi);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return left + right + err / 15.0;
    }
    if depth == 0 {
        *worst = worst.max(err.abs() / 15.0);
        return left + right + err / 15.0;
    }
    let half_tol = 0.5 * tol;
    simpson_recurse(f, lo, mid, flo, flmid, fmid, left, half_tol, depth - 1, worst)
        + simpson_recurse(f, mid, hi, fmid, frmid, fhi, right, half_tol, depth - 1, worst)
}

/// Error-free sum: returns `(s, e)` with `s = fl(a + b)` and `a + b = s + e`
/// exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Standard normal distribution function Φ.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Upper tail of the standard normal, 1 − Φ(x), computed without
/// cancellation for large `x`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Linear interpolation of tabulated `values` on the uniform grid
/// `x_j = j·step`, with constant extension outside the table.
pub fn lerp_uniform(values: &[f64], step: f64, x: f64) -> f64 {
    debug_assert!(values.len() >= 2);
    let u = x / step;
    if u <= 0.0 {
        return values[0];
    }
    let last = values.len() - 1;
    if u >= last as f64 {
        return values[last];
    }
    let i = u as usize;
    let t = u - i as f64;
    values[i] + t * (values[i + 1] - values[i])
}
