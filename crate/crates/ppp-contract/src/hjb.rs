//! Upwind finite-difference discretization of the stationary HJB equation on
//! `[0, x̄]` and its solution by Howard policy iteration.
//!
//! The state is the consortium continuation value. Interior node `x_i`
//! carries the degenerate-elliptic operator with drift
//! `b = δx + h(a) − U(r−k)`, diffusion `d = ½(σ h'(a)/φ'(a))²`, discount
//! `−δ`, and running reward `φ(a) − (r−k)`; first derivatives are
//! one-sided in the direction of the drift, which keeps the assembled
//! tridiagonal matrix diagonally dominant with margin δ.
//!
//! Controls are carried as `(rent − k, effort)`: the equation depends on the
//! rent only through the spread `r − k`, and storing the spread keeps
//! solutions bit-identical across cost-drift shifts.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{boundary_v0, FunctionBundle, ModelError, ModelParams};
use crate::numeric::{golden_section_max, two_sum};

/// Errors from grid construction, assembly, and the linear solver.
#[derive(Debug, Error)]
pub enum HjbError {
    #[error("invalid grid: x_bar = {x_bar}, cells = {cells}")]
    InvalidGrid { x_bar: f64, cells: usize },
    #[error("invalid Howard configuration: {what}")]
    InvalidConfig { what: &'static str },
    #[error("non-finite operator coefficient at node {node} (x = {x})")]
    NonFiniteCoefficient { node: usize, x: f64 },
    #[error("zero pivot in tridiagonal elimination at row {row}")]
    ZeroPivot { row: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Uniform mesh on `[0, x̄]` with `N` cells and nodes `x_i = i·Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    step: f64,
    x_bar: f64,
}

impl Grid {
    pub fn new(x_bar: f64, cells: usize) -> Result<Self, HjbError> {
        if !(x_bar.is_finite() && x_bar > 0.0) || cells < 2 {
            return Err(HjbError::InvalidGrid { x_bar, cells });
        }
        let step = x_bar / cells as f64;
        let nodes = (0..=cells).map(|i| i as f64 * step).collect();
        Ok(Self {
            nodes,
            step,
            x_bar,
        })
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.step
    }
    #[inline]
    pub fn x_bar(&self) -> f64 {
        self.x_bar
    }
    /// Number of cells N; there are N+1 nodes and N−1 interior nodes.
    #[inline]
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }
    #[inline]
    pub fn n_interior(&self) -> usize {
        self.nodes.len() - 2
    }
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }
    #[inline]
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// Markovian control on the interior nodes.
///
/// `rent_spread[i]` is `r − k` at node `x_{i+1}`, in `[0, r̄−k]`; `effort[i]`
/// satisfies `h(effort) ≤ U(rent_spread)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub rent_spread: Vec<f64>,
    pub effort: Vec<f64>,
}

impl Policy {
    /// The zero-effort minimum-rent contract, admissible for every model.
    pub fn minimum(n_interior: usize) -> Self {
        Self {
            rent_spread: vec![0.0; n_interior],
            effort: vec![0.0; n_interior],
        }
    }

    pub fn len(&self) -> usize {
        self.rent_spread.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rent_spread.is_empty()
    }

    /// Absolute rent at interior node index `i`.
    #[inline]
    pub fn rent(&self, i: usize, params: &ModelParams) -> f64 {
        params.k + self.rent_spread[i]
    }

    /// Worst admissibility slack, max over nodes of `h(a) − U(r−k)`.
    pub fn admissibility_gap(&self, bundle: &FunctionBundle) -> f64 {
        self.rent_spread
            .iter()
            .zip(&self.effort)
            .map(|(&s, &a)| bundle.h(a) - bundle.u(s))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Nodal values of the public value function, boundaries included.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            values: vec![0.0; n_nodes],
        }
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn left_boundary(&self) -> f64 {
        self.values[0]
    }

    pub fn right_boundary(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn sup_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Coefficients of the discrete operator at one state/control pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorCoefficients {
    /// b = δx + h(a) − U(r−k)
    pub drift: f64,
    /// d = ½(σ h'(a)/φ'(a))²
    pub diffusion: f64,
    /// c = −δ
    pub discount: f64,
    /// f = −r + φ(a) + k = φ(a) − (r−k)
    pub reward: f64,
}

/// Evaluates the HJB operator coefficients at state `x` under the control
/// `(k + rent_spread, effort)`.
pub fn coefficients(
    x: f64,
    rent_spread: f64,
    effort: f64,
    params: &ModelParams,
    bundle: &FunctionBundle,
) -> OperatorCoefficients {
    let loading = bundle.vol_loading(params.sigma, effort);
    OperatorCoefficients {
        drift: params.delta * x + bundle.h(effort) - bundle.u(rent_spread),
        diffusion: 0.5 * loading * loading,
        discount: -params.delta,
        reward: bundle.phi(effort) - rent_spread,
    }
}

/// The interior linear system `A·w + B = 0` at a frozen policy.
///
/// Row `i` (0-based) corresponds to interior node `x_{i+1}`. Boundary
/// contributions are folded into `rhs`, so `sub[0]` and `sup[n−1]` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Rows of `A·w + B`.
    pub fn residual(&self, w: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut r = self.diag[i] * w[i] + self.rhs[i];
                if i > 0 {
                    r += self.sub[i] * w[i - 1];
                }
                if i + 1 < n {
                    r += self.sup[i] * w[i + 1];
                }
                r
            })
            .collect()
    }
}

/// Assembles the upwind system for a policy and Dirichlet boundary values.
///
/// Row stencil: `sub = b⁻/Δ + d/Δ²`, `sup = b⁺/Δ + d/Δ²`,
/// `diag = −(δ + sub + sup)` (the diagonal is formed from the stored
/// off-diagonal entries, making the dominance margin δ to one rounding),
/// `rhs = reward`, with the first row augmented by `sub·v(0)` and the last
/// by `sup·v(x̄)`.
pub fn assemble_system(
    policy: &Policy,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    left_value: f64,
    right_value: f64,
) -> Result<TridiagonalSystem, HjbError> {
    let n = grid.n_interior();
    assert_eq!(policy.len(), n, "policy size must match interior node count");
    let step = grid.step();
    let inv_step = 1.0 / step;
    let inv_step2 = inv_step * inv_step;

    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    for i in 0..n {
        let x = grid.node(i + 1);
        let c = coefficients(x, policy.rent_spread[i], policy.effort[i], params, bundle);
        if !(c.drift.is_finite() && c.diffusion.is_finite() && c.reward.is_finite()) {
            return Err(HjbError::NonFiniteCoefficient { node: i + 1, x });
        }
        let dd = c.diffusion * inv_step2;
        let lower = (-c.drift).max(0.0) * inv_step + dd;
        let upper = c.drift.max(0.0) * inv_step + dd;
        let (s, e) = two_sum(lower, upper);
        diag[i] = -(s + (e + params.delta));
        rhs[i] = c.reward;
        if i == 0 {
            rhs[i] += lower * left_value;
        } else {
            sub[i] = lower;
        }
        if i == n - 1 {
            rhs[i] += upper * right_value;
        } else {
            sup[i] = upper;
        }
    }

    Ok(TridiagonalSystem {
        sub,
        diag,
        sup,
        rhs,
    })
}

/// Thomas elimination for `A·w + B = 0`, i.e. `A·w = −B`.
///
/// The residual satisfies `‖A·w + B‖∞ ≤ 1e−10·(1 + max|B|)` for diagonally
/// dominant systems. A vanishing pivot cannot occur under dominance with a
/// negative diagonal and is reported as an internal error.
pub fn solve_tridiagonal(system: &TridiagonalSystem) -> Result<Vec<f64>, HjbError> {
    let n = system.len();
    let mut w = vec![0.0; n];
    if n == 0 {
        return Ok(w);
    }
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    if system.diag[0] == 0.0 {
        return Err(HjbError::ZeroPivot { row: 0 });
    }
    upper[0] = system.sup[0] / system.diag[0];
    rhs[0] = -system.rhs[0] / system.diag[0];
    for i in 1..n {
        let pivot = system.diag[i] - system.sub[i] * upper[i - 1];
        if pivot == 0.0 {
            return Err(HjbError::ZeroPivot { row: i });
        }
        upper[i] = system.sup[i] / pivot;
        rhs[i] = (-system.rhs[i] - system.sub[i] * rhs[i - 1]) / pivot;
    }
    w[n - 1] = rhs[n - 1];
    for i in (0..n - 1).rev() {
        w[i] = rhs[i] - upper[i] * w[i + 1];
    }
    Ok(w)
}

/// Evaluates a frozen policy: solves the interior system and attaches the
/// Dirichlet boundaries `v(0) = v0_boundary`, `v(x̄) = 0`.
pub fn policy_evaluation(
    policy: &Policy,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    v0_boundary: f64,
) -> Result<ValueFunction, HjbError> {
    let system = assemble_system(policy, grid, params, bundle, v0_boundary, 0.0)?;
    let interior = solve_tridiagonal(&system)?;
    let mut values = Vec::with_capacity(grid.cells() + 1);
    values.push(v0_boundary);
    values.extend_from_slice(&interior);
    values.push(0.0);
    Ok(ValueFunction { values })
}

/// Closed-form optimal rent for a value-function slope `dv`:
/// `k` when `dv ≥ 0`, otherwise `min(k + (U')⁻¹(−1/dv), r̄)`.
pub fn optimal_rent_closed_form(dv: f64, params: &ModelParams, bundle: &FunctionBundle) -> f64 {
    if dv >= 0.0 {
        return params.k;
    }
    (params.k + bundle.inv_du(-1.0 / dv)).min(params.r_bar)
}

/// Howard iteration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HowardConfig {
    /// Sup-norm threshold on successive value iterates.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Number of rent samples on `[k, r̄]`.
    pub rent_grid: usize,
    /// Number of effort samples on `[0, h⁻¹(U(r−k))]` per rent.
    pub effort_grid: usize,
    /// Golden-section refinement of the effort at the best rent.
    pub refine: bool,
}

impl Default for HowardConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            rent_grid: 201,
            effort_grid: 201,
            refine: true,
        }
    }
}

impl HowardConfig {
    pub fn validate(&self) -> Result<(), HjbError> {
        if !(self.tol > 0.0) {
            return Err(HjbError::InvalidConfig { what: "tol must be positive" });
        }
        if self.max_iter < 1 {
            return Err(HjbError::InvalidConfig { what: "max_iter must be at least 1" });
        }
        if self.rent_grid < 2 || self.effort_grid < 2 {
            return Err(HjbError::InvalidConfig { what: "control grids need at least 2 points" });
        }
        Ok(())
    }
}

/// One precomputed admissible control candidate.
struct Candidate {
    spread: f64,
    effort: f64,
    /// h(a) − U(s) ≤ 0; the drift at node x is δx + cost_gap.
    cost_gap: f64,
    diffusion: f64,
    reward: f64,
}

struct ControlTable {
    candidates: Vec<Candidate>,
    /// Per rent index: (spread, U(spread), max admissible effort).
    rents: Vec<(f64, f64, f64)>,
    effort_grid: usize,
}

fn build_control_table(
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &HowardConfig,
) -> ControlTable {
    let spread_max = params.max_rent_spread().max(0.0);
    let sigma = params.sigma;
    let mut rents = Vec::with_capacity(config.rent_grid);
    let mut candidates = Vec::with_capacity(config.rent_grid * config.effort_grid);
    for j in 0..config.rent_grid {
        let spread = spread_max * j as f64 / (config.rent_grid - 1) as f64;
        let u_spread = bundle.u(spread);
        let a_max = if u_spread > 0.0 {
            bundle.inv_h(u_spread).max(0.0)
        } else {
            0.0
        };
        rents.push((spread, u_spread, a_max));
        for l in 0..config.effort_grid {
            let effort = a_max * l as f64 / (config.effort_grid - 1) as f64;
            let loading = bundle.vol_loading(sigma, effort);
            candidates.push(Candidate {
                spread,
                effort,
                cost_gap: bundle.h(effort) - u_spread,
                diffusion: 0.5 * loading * loading,
                reward: bundle.phi(effort) - spread,
            });
        }
    }
    ControlTable {
        candidates,
        rents,
        effort_grid: config.effort_grid,
    }
}

/// Discrete HJB row value at node `x` for a candidate control, given the
/// neighbouring values. The upwind direction is chosen per candidate from
/// the sign of the drift, forward on ties.
#[inline]
fn row_value(
    x: f64,
    delta: f64,
    inv_step: f64,
    inv_step2: f64,
    v_prev: f64,
    v_here: f64,
    v_next: f64,
    cost_gap: f64,
    diffusion: f64,
    reward: f64,
) -> f64 {
    let b = delta * x + cost_gap;
    let advection = if b >= 0.0 {
        b * (v_next - v_here) * inv_step
    } else {
        b * (v_here - v_prev) * inv_step
    };
    advection + diffusion * (v_next - 2.0 * v_here + v_prev) * inv_step2 - delta * v_here + reward
}

fn improve_node(
    x: f64,
    v_prev: f64,
    v_here: f64,
    v_next: f64,
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &HowardConfig,
    table: &ControlTable,
    grid: &Grid,
) -> (f64, f64, f64) {
    let delta = params.delta;
    let inv_step = 1.0 / grid.step();
    let inv_step2 = inv_step * inv_step;
    let q_of = |cand: &Candidate| {
        row_value(
            x,
            delta,
            inv_step,
            inv_step2,
            v_prev,
            v_here,
            v_next,
            cand.cost_gap,
            cand.diffusion,
            cand.reward,
        )
    };

    let mut best_q = f64::NEG_INFINITY;
    let mut best_spread = 0.0;
    let mut best_effort = 0.0;
    let mut best_rent_idx = 0;
    for (idx, cand) in table.candidates.iter().enumerate() {
        let q = q_of(cand);
        let better = q > best_q
            || (q == best_q
                && (cand.effort < best_effort
                    || (cand.effort == best_effort && cand.spread < best_spread)));
        if better {
            best_q = q;
            best_spread = cand.spread;
            best_effort = cand.effort;
            best_rent_idx = idx / table.effort_grid;
        }
    }

    if config.refine {
        let (spread, u_spread, a_max) = table.rents[best_rent_idx];
        if a_max > 0.0 {
            let cell = a_max / (config.effort_grid - 1) as f64;
            let lo = (best_effort - cell).max(0.0);
            let hi = (best_effort + cell).min(a_max);
            let q_effort = |a: f64| {
                let loading = bundle.vol_loading(params.sigma, a);
                row_value(
                    x,
                    delta,
                    inv_step,
                    inv_step2,
                    v_prev,
                    v_here,
                    v_next,
                    bundle.h(a) - u_spread,
                    0.5 * loading * loading,
                    bundle.phi(a) - spread,
                )
            };
            let (a_ref, q_ref) = golden_section_max(q_effort, lo, hi, 1e-10);
            if q_ref > best_q {
                best_q = q_ref;
                best_effort = a_ref.clamp(0.0, a_max);
            }
        }
    }

    (best_spread, best_effort, best_q)
}

/// One policy-improvement step: the per-node argmax of the discrete row
/// expression over the sampled admissible control set.
///
/// Ties prefer the smallest effort, then the smallest rent, independent of
/// evaluation order. Nodes are independent given the frozen value vector.
pub fn improve_policy(
    value: &ValueFunction,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &HowardConfig,
) -> Policy {
    let (policy, _) = improve_policy_with_residual(value, grid, params, bundle, config);
    policy
}

/// Policy improvement returning, per node, the attained maximum of the
/// discrete row expression (the nonlinear HJB residual at `value`).
pub fn improve_policy_with_residual(
    value: &ValueFunction,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &HowardConfig,
) -> (Policy, Vec<f64>) {
    let n = grid.n_interior();
    assert_eq!(value.values.len(), grid.cells() + 1);
    let table = build_control_table(params, bundle, config);

    let results: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            improve_node(
                grid.node(i + 1),
                value.values[i],
                value.values[i + 1],
                value.values[i + 2],
                params,
                bundle,
                config,
                &table,
                grid,
            )
        })
        .collect();

    let mut policy = Policy {
        rent_spread: Vec::with_capacity(n),
        effort: Vec::with_capacity(n),
    };
    let mut residual = Vec::with_capacity(n);
    for (s, a, q) in results {
        policy.rent_spread.push(s);
        policy.effort.push(a);
        residual.push(q);
    }
    (policy, residual)
}

/// Per-iteration convergence record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    /// Sup-norm change of the value iterate.
    pub sup_change: f64,
    /// Minimum signed node-wise change; non-negative up to rounding for a
    /// monotone scheme.
    pub min_rise: f64,
}

/// Output of [`howard_solve`].
#[derive(Debug, Clone)]
pub struct HowardResult {
    pub value: ValueFunction,
    pub policy: Policy,
    pub iterations: usize,
    pub history: Vec<IterationStats>,
    pub converged: bool,
    /// Left Dirichlet value v(0) used for the solve.
    pub v0_boundary: f64,
}

/// Solves the discrete HJB by alternating policy evaluation and policy
/// improvement from the minimum contract `(k, 0)`.
///
/// Terminates when the value sup-change falls below `config.tol` or the
/// improved policy repeats exactly; hitting `max_iter` first returns the
/// last iterate flagged as non-converged.
pub fn howard_solve(
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &HowardConfig,
) -> Result<HowardResult, HjbError> {
    config.validate()?;
    params.validate()?;
    let v0 = boundary_v0(params, bundle);

    let mut policy = Policy::minimum(grid.n_interior());
    let mut previous = ValueFunction::zeros(grid.cells() + 1);
    let mut history = Vec::new();
    let mut converged = false;

    loop {
        let value = policy_evaluation(&policy, grid, params, bundle, v0)?;
        let sup_change = value.sup_diff(&previous);
        let min_rise = value
            .values
            .iter()
            .zip(&previous.values)
            .map(|(n, p)| n - p)
            .fold(f64::INFINITY, f64::min);
        history.push(IterationStats {
            sup_change,
            min_rise,
        });
        previous = value;

        if sup_change < config.tol {
            converged = true;
            break;
        }
        if history.len() >= config.max_iter {
            break;
        }

        let improved = improve_policy(&previous, grid, params, bundle, config);
        if improved == policy {
            converged = true;
            break;
        }
        policy = improved;
    }

    Ok(HowardResult {
        iterations: history.len(),
        value: previous,
        policy,
        history,
        converged,
        v0_boundary: v0,
    })
}

/// Nonlinear residual of the discrete HJB at `value`: the largest absolute
/// row maximum over the sampled control set.
pub fn discrete_hjb_residual(
    value: &ValueFunction,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &HowardConfig,
) -> f64 {
    let (_, residual) = improve_policy_with_residual(value, grid, params, bundle, config);
    residual.iter().fold(0.0, |acc, q| acc.max(q.abs()))
}

/// Diagonal-dominance verdict for an assembled system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceReport {
    pub dominant: bool,
    /// min over rows of |diag| − |sub| − |sup|, computed with error-free
    /// sums so the scheme's exact margin δ is visible.
    pub worst_margin: f64,
}

pub fn check_diagonal_dominance(system: &TridiagonalSystem) -> DominanceReport {
    let mut dominant = true;
    let mut worst = f64::INFINITY;
    for i in 0..system.len() {
        if system.diag[i] >= 0.0 {
            dominant = false;
        }
        let (s, e) = two_sum(system.sub[i].abs(), system.sup[i].abs());
        let margin = (system.diag[i].abs() - s) - e;
        if margin < 0.0 {
            dominant = false;
        }
        worst = worst.min(margin);
    }
    DominanceReport {
        dominant,
        worst_margin: worst,
    }
}

/// One row of the solved-contract table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub x: f64,
    pub value: f64,
    pub rent: f64,
    pub effort: f64,
}

/// Nodal solution table plus the paired rent-versus-effort curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCurves {
    /// One row per grid node; boundary nodes carry the controls of the
    /// nearest interior node.
    pub rows: Vec<CurveRow>,
    /// `(effort, rent)` sorted by effort, deduplicated on equal effort
    /// keeping the smallest rent.
    pub rent_by_effort: Vec<(f64, f64)>,
}

pub fn policy_curves(
    value: &ValueFunction,
    policy: &Policy,
    grid: &Grid,
    params: &ModelParams,
) -> PolicyCurves {
    let n = grid.n_interior();
    assert!(n >= 1);
    let control_at = |node: usize| {
        let i = node.clamp(1, n) - 1;
        (params.k + policy.rent_spread[i], policy.effort[i])
    };
    let rows: Vec<CurveRow> = (0..=grid.cells())
        .map(|node| {
            let (rent, effort) = control_at(node);
            CurveRow {
                x: grid.node(node),
                value: value.values[node],
                rent,
                effort,
            }
        })
        .collect();

    let mut pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.effort, r.rent)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pairs.dedup_by(|next, kept| next.0 == kept.0);

    PolicyCurves {
        rows,
        rent_by_effort: pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_bundle;
    use std::sync::Arc;

    fn paper_params() -> ModelParams {
        ModelParams {
            delta: 0.1,
            k: 2.0,
            sigma: 0.8,
            r_bar: 6.0,
            c0: 10.0,
            x0_welfare: 0.0,
        }
    }

    /// U(x)=x, h(a)=2a, phi(a)=a: every coefficient is hand-computable.
    fn affine_bundle() -> FunctionBundle {
        FunctionBundle {
            utility: Arc::new(|x| x),
            utility_deriv: Arc::new(|_| 1.0),
            utility_inv: Arc::new(|y| y),
            utility_deriv_inv: Arc::new(|_| f64::NAN),
            impact: Arc::new(|x| x),
            impact_deriv: Arc::new(|_| 1.0),
            cost: Arc::new(|a| 2.0 * a),
            cost_deriv: Arc::new(|_| 2.0),
            cost_inv: Arc::new(|y| 0.5 * y),
            diffusion_shape: Arc::new(|_| 2.0),
            diffusion_shape_inv: Arc::new(|q| q),
        }
    }

    /// Dense Gaussian elimination with partial pivoting; solves A·w = −B.
    fn dense_solve(system: &TridiagonalSystem) -> Vec<f64> {
        let n = system.len();
        let mut a = vec![vec![0.0f64; n + 1]; n];
        for i in 0..n {
            a[i][i] = system.diag[i];
            if i > 0 {
                a[i][i - 1] = system.sub[i];
            }
            if i + 1 < n {
                a[i][i + 1] = system.sup[i];
            }
            a[i][n] = -system.rhs[i];
        }
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
                .unwrap();
            a.swap(col, pivot_row);
            let pivot = a[col][col];
            assert!(pivot != 0.0);
            for row in col + 1..n {
                let factor = a[row][col] / pivot;
                for j in col..=n {
                    a[row][j] -= factor * a[col][j];
                }
            }
        }
        let mut w = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = a[i][n];
            for j in i + 1..n {
                acc -= a[i][j] * w[j];
            }
            w[i] = acc / a[i][i];
        }
        w
    }

    #[test]
    fn coefficients_examples() {
        let params = paper_params();
        let b = example_bundle();

        let c = coefficients(3.7, 0.0, 0.0, &params, &b);
        assert!((c.drift - params.delta * 3.7).abs() < 1e-15);
        let floor = 0.5 * (params.sigma * b.dh(0.0) / b.dphi(0.0)).powi(2);
        assert!((c.diffusion - floor).abs() < 1e-15);
        assert_eq!(c.reward, 0.0);
        assert_eq!(c.discount, -params.delta);

        // h'/phi' at a = 1 is √2, so d = ½(0.8·√2)² = 0.64.
        let c = coefficients(0.0, 1.0, 1.0, &params, &b);
        assert!((c.diffusion - 0.64).abs() < 1e-14, "got {}", c.diffusion);

        let c = coefficients(5.0, 0.0, 0.0, &params, &b);
        assert!((c.drift - 0.5).abs() < 1e-15);
    }

    #[test]
    fn assemble_hand_computed_entries() {
        // delta = 0.5, sigma = 1, affine family, x̄ = 3 with N = 3 cells.
        let params = ModelParams {
            delta: 0.5,
            k: 1.0,
            sigma: 1.0,
            r_bar: 3.0,
            c0: 1.0,
            x0_welfare: 0.0,
        };
        let b = affine_bundle();
        let grid = Grid::new(3.0, 3).unwrap();
        let policy = Policy {
            rent_spread: vec![1.0, 1.0],
            effort: vec![0.5, 0.5],
        };
        // b_i = 0.5·x_i + h(0.5) − U(1) = 0.5·x_i; d = ½(1·2/1)² = 2;
        // f = phi(0.5) − 1 = −0.5; Δ = 1.
        let sys = assemble_system(&policy, &grid, &params, &b, 2.0, 0.0).unwrap();
        assert_eq!(sys.len(), 2);
        // Row 0 at x = 1: b = 0.5 ≥ 0: sub = 2 (folded), diag = −5, sup = 2.5.
        assert_eq!(sys.sub[0], 0.0);
        assert!((sys.diag[0] + 5.0).abs() < 1e-12);
        assert!((sys.sup[0] - 2.5).abs() < 1e-15);
        assert!((sys.rhs[0] - (-0.5 + 2.0 * 2.0)).abs() < 1e-15);
        // Row 1 at x = 2: b = 1.0: sub = 2, diag = −5.5, sup = 3 folded into rhs.
        assert!((sys.sub[1] - 2.0).abs() < 1e-15);
        assert!((sys.diag[1] + 5.5).abs() < 1e-12);
        assert_eq!(sys.sup[1], 0.0);
        assert!((sys.rhs[1] - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn assemble_selects_forward_difference_for_positive_drift() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 10).unwrap();
        let policy = Policy::minimum(grid.n_interior());
        let sys = assemble_system(&policy, &grid, &params, &b, 0.0, 0.0).unwrap();
        let dd = coefficients(grid.node(2), 0.0, 0.0, &params, &b).diffusion
            / (grid.step() * grid.step());
        // Drift δx ≥ 0 at every interior node: sub carries only diffusion.
        assert_eq!(sys.sub[1], dd);
    }

    #[test]
    fn assemble_zero_reward_zero_boundaries_gives_zero_rhs() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 8).unwrap();
        let policy = Policy::minimum(grid.n_interior());
        let sys = assemble_system(&policy, &grid, &params, &b, 0.0, 0.0).unwrap();
        assert!(sys.rhs.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn assemble_rejects_non_finite_controls() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 4).unwrap();
        let mut policy = Policy::minimum(grid.n_interior());
        policy.effort[1] = f64::NAN;
        let err = assemble_system(&policy, &grid, &params, &b, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, HjbError::NonFiniteCoefficient { node: 2, .. }));
    }

    #[test]
    fn thomas_identity_up_to_sign() {
        let sys = TridiagonalSystem {
            sub: vec![0.0; 3],
            diag: vec![-1.0; 3],
            sup: vec![0.0; 3],
            rhs: vec![1.0, 2.0, 3.0],
        };
        let w = solve_tridiagonal(&sys).unwrap();
        assert_eq!(w, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn thomas_two_by_two() {
        let sys = TridiagonalSystem {
            sub: vec![0.0, 1.0],
            diag: vec![-2.0, -2.0],
            sup: vec![1.0, 0.0],
            rhs: vec![1.0, 1.0],
        };
        let w = solve_tridiagonal(&sys).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14);
        assert!((w[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn thomas_matches_dense_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let mut sys = TridiagonalSystem {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
            rhs: vec![0.0; n],
        };
        for i in 0..n {
            let lo: f64 = if i > 0 { rng.gen_range(0.0..1.0) } else { 0.0 };
            let hi: f64 = if i + 1 < n { rng.gen_range(0.0..1.0) } else { 0.0 };
            sys.sub[i] = lo;
            sys.sup[i] = hi;
            sys.diag[i] = -(lo + hi + rng.gen_range(0.1..2.0));
            sys.rhs[i] = rng.gen_range(-3.0..3.0);
        }
        let w = solve_tridiagonal(&sys).unwrap();
        let dense = dense_solve(&sys);
        let max_b = sys.rhs.iter().fold(0.0f64, |m, &r| m.max(r.abs()));
        for (a, b) in w.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10);
        }
        let worst = sys
            .residual(&w)
            .iter()
            .fold(0.0f64, |m, &r| m.max(r.abs()));
        assert!(worst <= 1e-10 * (1.0 + max_b), "residual {worst}");
    }

    #[test]
    fn thomas_reports_zero_pivot() {
        let sys = TridiagonalSystem {
            sub: vec![0.0, 0.0],
            diag: vec![0.0, -1.0],
            sup: vec![0.0, 0.0],
            rhs: vec![1.0, 1.0],
        };
        assert!(matches!(
            solve_tridiagonal(&sys),
            Err(HjbError::ZeroPivot { row: 0 })
        ));
    }

    #[test]
    fn evaluation_of_minimum_policy_with_zero_boundaries_is_zero() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 40).unwrap();
        let policy = Policy::minimum(grid.n_interior());
        let v = policy_evaluation(&policy, &grid, &params, &b, 0.0).unwrap();
        assert!(v.values.iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn evaluation_with_true_boundary_is_decreasing_and_matches_dense() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 60).unwrap();
        let policy = Policy::minimum(grid.n_interior());
        let v0 = boundary_v0(&params, &b);
        let v = policy_evaluation(&policy, &grid, &params, &b, v0).unwrap();
        for w in v.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(v.values.iter().all(|&x| x >= -1e-12));

        let sys = assemble_system(&policy, &grid, &params, &b, v0, 0.0).unwrap();
        let dense = dense_solve(&sys);
        for (a, b) in v.values[1..grid.cells()].iter().zip(&dense) {
            assert!((a - b).abs() < 1e-9);
        }
        let max_b = sys.rhs.iter().fold(0.0f64, |m, &r| m.max(r.abs()));
        let worst = sys
            .residual(&v.values[1..grid.cells()])
            .iter()
            .fold(0.0f64, |m, &r| m.max(r.abs()));
        assert!(worst <= 1e-9 * (1.0 + max_b));
    }

    #[test]
    fn closed_form_rent_examples() {
        let params = paper_params();
        let b = example_bundle();
        assert_eq!(optimal_rent_closed_form(0.0, &params, &b), params.k);
        assert_eq!(optimal_rent_closed_form(0.3, &params, &b), params.k);
        // (U')⁻¹(1/2) = 1 for square-root utility.
        let r = optimal_rent_closed_form(-2.0, &params, &b);
        assert!((r - (params.k + 1.0)).abs() < 1e-14);
        // Near-zero slope: rent collapses to k continuously.
        let r = optimal_rent_closed_form(-1e-9, &params, &b);
        assert!((r - params.k).abs() < 1e-18 + 2.5e-19 * 2.0);
        // Steep slope capped at r̄.
        let r = optimal_rent_closed_form(-1e9, &params, &b);
        assert_eq!(r, params.r_bar);
    }

    #[test]
    fn improvement_at_zero_value_matches_brute_force() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 6).unwrap();
        let config = HowardConfig {
            rent_grid: 41,
            effort_grid: 41,
            refine: false,
            ..HowardConfig::default()
        };
        let zero = ValueFunction::zeros(grid.cells() + 1);
        let policy = improve_policy(&zero, &grid, &params, &b, &config);

        // With v ≡ 0 every stencil term vanishes: the argmax maximizes the
        // reward phi(a) − s over the admissible grid. Brute-force the same
        // candidate set directly.
        let spread_max = params.max_rent_spread();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for j in 0..41 {
            let s = spread_max * j as f64 / 40.0;
            let a_max = if s > 0.0 { b.inv_h(b.u(s)) } else { 0.0 };
            for l in 0..41 {
                let a = a_max * l as f64 / 40.0;
                let q = b.phi(a) - s;
                if q > best.0 {
                    best = (q, s, a);
                }
            }
        }
        for i in 0..policy.len() {
            assert!((policy.rent_spread[i] - best.1).abs() < 1e-15);
            assert!((policy.effort[i] - best.2).abs() < 1e-15);
        }
        assert!(best.0 > 0.0);
    }

    #[test]
    fn refinement_stays_within_one_effort_cell() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 50).unwrap();
        let coarse = HowardConfig {
            rent_grid: 51,
            effort_grid: 51,
            refine: false,
            tol: 1e-8,
            ..HowardConfig::default()
        };
        let solved = howard_solve(&grid, &params, &b, &coarse).unwrap();

        let refined_cfg = HowardConfig {
            refine: true,
            ..coarse
        };
        let plain = improve_policy(&solved.value, &grid, &params, &b, &coarse);
        let refined = improve_policy(&solved.value, &grid, &params, &b, &refined_cfg);
        for i in 0..plain.len() {
            assert_eq!(plain.rent_spread[i], refined.rent_spread[i]);
            let s = plain.rent_spread[i];
            let a_max = if s > 0.0 { b.inv_h(b.u(s)) } else { 0.0 };
            let cell = a_max / 50.0;
            assert!(
                (plain.effort[i] - refined.effort[i]).abs() <= cell + 1e-12,
                "node {i}: plain {} refined {} cell {cell}",
                plain.effort[i],
                refined.effort[i]
            );
        }
    }

    #[test]
    fn howard_solves_paper_model_on_coarse_grid() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 60).unwrap();
        let config = HowardConfig {
            rent_grid: 81,
            effort_grid: 81,
            ..HowardConfig::default()
        };
        let result = howard_solve(&grid, &params, &b, &config).unwrap();
        assert!(result.converged, "history: {:?}", result.history);

        let v0 = boundary_v0(&params, &b);
        assert_eq!(result.value.left_boundary(), v0);
        assert_eq!(result.value.right_boundary(), 0.0);

        // Bounds and monotonicity.
        for &v in &result.value.values {
            assert!(v >= -1e-9 && v <= v0 + 1e-9);
        }
        for w in result.value.values.windows(2) {
            assert!(w[1] - w[0] <= 1e-8);
        }
        for it in &result.history {
            assert!(it.min_rise >= -1e-10, "history: {:?}", result.history);
        }

        // Admissibility with machine slack, and the diffusion never
        // degenerates below its zero-effort floor.
        assert!(result.policy.admissibility_gap(&b) <= 1e-12);
        let floor = 0.5 * (params.sigma * b.dh(0.0) / b.dphi(0.0)).powi(2);
        for i in 0..result.policy.len() {
            let c = coefficients(
                grid.node(i + 1),
                result.policy.rent_spread[i],
                result.policy.effort[i],
                &params,
                &b,
            );
            assert!(c.diffusion >= floor - 1e-15);
        }

        // Discrete-HJB consistency at the converged pair.
        let residual = discrete_hjb_residual(&result.value, &grid, &params, &b, &config);
        assert!(
            residual <= config.tol * (1.0 + params.delta),
            "residual {residual}"
        );
    }

    #[test]
    fn howard_with_huge_tolerance_stops_after_one_evaluation() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 20).unwrap();
        let config = HowardConfig {
            tol: 1e6,
            ..HowardConfig::default()
        };
        let result = howard_solve(&grid, &params, &b, &config).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 1);
    }

    #[test]
    fn howard_flags_iteration_cap() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 30).unwrap();
        let config = HowardConfig {
            max_iter: 2,
            tol: 1e-300,
            rent_grid: 21,
            effort_grid: 21,
            refine: false,
            ..HowardConfig::default()
        };
        let result = howard_solve(&grid, &params, &b, &config).unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, 2);
    }

    #[test]
    fn dominance_margin_equals_discount_rate() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 100).unwrap();
        let config = HowardConfig {
            rent_grid: 41,
            effort_grid: 41,
            tol: 1e-7,
            ..HowardConfig::default()
        };
        let result = howard_solve(&grid, &params, &b, &config).unwrap();
        let sys =
            assemble_system(&result.policy, &grid, &params, &b, result.v0_boundary, 0.0).unwrap();
        let report = check_diagonal_dominance(&sys);
        assert!(report.dominant);
        assert!(
            (report.worst_margin - params.delta).abs() <= 1e-12,
            "margin {}",
            report.worst_margin
        );
    }

    #[test]
    fn dominance_rejects_weak_row() {
        let sys = TridiagonalSystem {
            sub: vec![0.0, 1.0],
            diag: vec![-1.0, -1.0],
            sup: vec![1.0, 0.0],
            rhs: vec![0.0, 0.0],
        };
        let report = check_diagonal_dominance(&sys);
        assert!(!report.dominant);
        assert!(report.worst_margin <= 0.0);
    }

    #[test]
    fn curves_have_one_row_per_node_and_sorted_pairs() {
        let params = paper_params();
        let b = example_bundle();
        let grid = Grid::new(5.0, 40).unwrap();
        let config = HowardConfig {
            rent_grid: 41,
            effort_grid: 41,
            ..HowardConfig::default()
        };
        let result = howard_solve(&grid, &params, &b, &config).unwrap();
        let curves = policy_curves(&result.value, &result.policy, &grid, &params);
        assert_eq!(curves.rows.len(), grid.cells() + 1);
        for pair in curves.rent_by_effort.windows(2) {
            assert!(pair[0].0 < pair[1].0);
        }
        for row in &curves.rows {
            assert!(row.rent >= params.k - 1e-12 && row.rent <= params.r_bar + 1e-12);
        }
    }

    #[test]
    fn cost_drift_shift_leaves_solution_invariant() {
        let b = example_bundle();
        let grid = Grid::new(5.0, 50).unwrap();
        let config = HowardConfig {
            rent_grid: 61,
            effort_grid: 61,
            ..HowardConfig::default()
        };
        let p1 = paper_params();
        let mut p2 = paper_params();
        p2.k = 3.0;
        p2.r_bar = 7.0;
        let r1 = howard_solve(&grid, &p1, &b, &config).unwrap();
        let r2 = howard_solve(&grid, &p2, &b, &config).unwrap();
        assert!(r1.value.sup_diff(&r2.value) <= 1e-12);
        for i in 0..r1.policy.len() {
            assert!((r1.policy.effort[i] - r2.policy.effort[i]).abs() <= 1e-12);
            let shift = r2.policy.rent(i, &p2) - r1.policy.rent(i, &p1);
            assert!((shift - 1.0).abs() <= 1e-12);
        }
    }
}
