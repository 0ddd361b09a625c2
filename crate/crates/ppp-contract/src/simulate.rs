//! Forward simulation of the solved contract: Euler-Maruyama paths of the
//! consortium continuation value, the cost and welfare processes driven by
//! the same Brownian increments, and Monte Carlo estimates of both parties'
//! objectives used to cross-validate the HJB solution.
//!
//! Paths are independent; each draws from its own counter-derived RNG
//! stream, and aggregation reduces per-path results in path order, so
//! estimates are identical no matter how many worker threads execute them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::hjb::{Grid, Policy};
use crate::model::{boundary_v0, FunctionBundle, ModelParams};

/// Monte Carlo controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Initial continuation value, in `[0, x̄]`.
    pub x0: f64,
    /// Euler time step.
    pub dt: f64,
    /// Truncation horizon T.
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self, x_bar: f64) -> Result<(), String> {
        if !(self.x0 >= 0.0 && self.x0 <= x_bar) {
            return Err(format!("x0 = {} outside [0, {x_bar}]", self.x0));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("dt = {} must be positive", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(format!("horizon = {} must be positive", self.horizon));
        }
        if self.n_paths < 1 {
            return Err("n_paths must be at least 1".into());
        }
        Ok(())
    }

    /// Number of Euler steps; the effective horizon is `n_steps·dt`.
    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }
}

/// A Monte Carlo estimate with its sampling error and the discounting tail
/// dropped by truncating the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStats {
    pub mean: f64,
    /// Standard error of the mean; undefined for a single path.
    pub std_error: Option<f64>,
    pub n_paths: usize,
    pub truncation_bound: f64,
}

impl PathStats {
    pub(crate) fn from_samples(samples: &[f64], truncation_bound: f64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n >= 2 {
            let var =
                samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n as f64 - 1.0);
            Some((var / n as f64).sqrt())
        } else {
            None
        };
        Self {
            mean,
            std_error,
            n_paths: n,
            truncation_bound,
        }
    }
}

/// Nodal controls extended to the boundary nodes for piecewise-linear
/// evaluation at arbitrary states.
struct ControlTable {
    spread: Vec<f64>,
    effort: Vec<f64>,
    inv_step: f64,
    x_bar: f64,
}

impl ControlTable {
    fn new(policy: &Policy, grid: &Grid) -> Self {
        let n = grid.n_interior();
        assert_eq!(policy.len(), n);
        assert!(n >= 1);
        let mut spread = Vec::with_capacity(n + 2);
        let mut effort = Vec::with_capacity(n + 2);
        spread.push(policy.rent_spread[0]);
        effort.push(policy.effort[0]);
        spread.extend_from_slice(&policy.rent_spread);
        effort.extend_from_slice(&policy.effort);
        spread.push(policy.rent_spread[n - 1]);
        effort.push(policy.effort[n - 1]);
        Self {
            spread,
            effort,
            inv_step: 1.0 / grid.step(),
            x_bar: grid.x_bar(),
        }
    }

    /// Linear interpolation of `(rent spread, effort)` at state `x`, clamped
    /// to the domain.
    #[inline]
    fn sample(&self, x: f64) -> (f64, f64) {
        let u = x.clamp(0.0, self.x_bar) * self.inv_step;
        let last = self.spread.len() - 1;
        let i = (u as usize).min(last - 1);
        let t = u - i as f64;
        (
            self.spread[i] + t * (self.spread[i + 1] - self.spread[i]),
            self.effort[i] + t * (self.effort[i + 1] - self.effort[i]),
        )
    }
}

/// Evaluates the solved policy at an arbitrary state: piecewise-linear in
/// `x` (clamped to `[0, x̄]`, constant beyond the outermost interior nodes),
/// with the effort projected onto the admissible interval
/// `[0, h⁻¹(U(r−k))]`. Returns `(rent, effort)`.
pub fn interpolate_policy(
    policy: &Policy,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    x: f64,
) -> (f64, f64) {
    let table = ControlTable::new(policy, grid);
    let (spread, mut effort) = table.sample(x);
    if bundle.h(effort) > bundle.u(spread) {
        effort = bundle.inv_h(bundle.u(spread)).max(0.0);
    }
    (params.k + spread, effort)
}

/// Per-path aggregate produced by the walker.
#[derive(Debug, Clone, Copy, Default)]
struct PathTotals {
    /// Left-point quadrature of e^{−δs}(U(R−k) − h(A)) ds.
    consortium: f64,
    /// Left-point quadrature of e^{−δs}(φ(A) − R + k) ds.
    public: f64,
    clamped_steps: usize,
    hit_floor: bool,
    hit_ceiling: bool,
    final_state: f64,
}

/// Walks one Euler-Maruyama path of the continuation value, accumulating
/// both discounted objective integrals. `draw` supplies the Brownian
/// increments; `visit` observes `(step, state, rent spread, effort, dW)`
/// before each update.
fn walk_path(
    table: &ControlTable,
    params: &ModelParams,
    bundle: &FunctionBundle,
    x0: f64,
    dt: f64,
    n_steps: usize,
    mut draw: impl FnMut() -> f64,
    mut visit: impl FnMut(usize, f64, f64, f64, f64),
) -> PathTotals {
    let delta = params.delta;
    let sigma = params.sigma;
    let decay = (-delta * dt).exp();
    let mut discount = 1.0;
    let mut state = x0;
    let mut totals = PathTotals::default();

    for step in 0..n_steps {
        let (spread, mut effort) = table.sample(state);
        let u_spread = bundle.u(spread);
        let mut cost = bundle.h(effort);
        if cost > u_spread {
            // Interpolation can leave the admissible set only by rounding;
            // project back onto its boundary.
            effort = bundle.inv_h(u_spread).max(0.0);
            cost = u_spread;
        }
        let net_flow = u_spread - cost;
        let vol = sigma * bundle.dh(effort) / bundle.dphi(effort);
        let dw = draw();
        visit(step, state, spread, effort, dw);

        totals.consortium += discount * net_flow;
        totals.public += discount * (bundle.phi(effort) - spread);

        let mut next = state + (delta * state - net_flow) * dt + vol * dw;
        if next < 0.0 {
            next = 0.0;
            totals.clamped_steps += 1;
            totals.hit_floor = true;
        } else if next > table.x_bar {
            next = table.x_bar;
            totals.clamped_steps += 1;
            totals.hit_ceiling = true;
        }
        state = next;
        discount *= decay;
    }

    totals.consortium *= dt;
    totals.public *= dt;
    totals.final_state = state;
    totals
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Discrete sample paths of the continuation value with the applied efforts
/// and the Brownian increments that drove them.
#[derive(Debug, Clone)]
pub struct SimulatedPaths {
    pub dt: f64,
    pub n_steps: usize,
    /// Per path: states at steps `0..=n_steps`.
    pub states: Vec<Vec<f64>>,
    /// Per path: effort applied on each step.
    pub efforts: Vec<Vec<f64>>,
    /// Per path: Brownian increments dW of each step.
    pub increments: Vec<Vec<f64>>,
    /// Steps whose post-update state was clamped back into `[0, x̄]`.
    pub clamped_steps: usize,
}

/// Simulates paths of the continuation value under the solved policy.
///
/// `dV = [δV − U(r−k) + h(a)]dt + σ(h'(a)/φ'(a))dW` with the controls
/// interpolated at the current state; post-step states are clamped to
/// `[0, x̄]`. Identical seeds give identical paths.
pub fn simulate_vc(
    policy: &Policy,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &SimConfig,
) -> SimulatedPaths {
    let table = ControlTable::new(policy, grid);
    let n_steps = config.n_steps();

    let per_path: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, usize)> = (0..config.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(config.seed, p as u64);
            let sqrt_dt = config.dt.sqrt();
            let mut states = Vec::with_capacity(n_steps + 1);
            let mut efforts = Vec::with_capacity(n_steps);
            let mut increments = Vec::with_capacity(n_steps);
            let totals = walk_path(
                &table,
                params,
                bundle,
                config.x0,
                config.dt,
                n_steps,
                || {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * sqrt_dt
                },
                |_, state, _, effort, dw| {
                    states.push(state);
                    efforts.push(effort);
                    increments.push(dw);
                },
            );
            states.push(totals.final_state);
            (states, efforts, increments, totals.clamped_steps)
        })
        .collect();

    let mut paths = SimulatedPaths {
        dt: config.dt,
        n_steps,
        states: Vec::with_capacity(config.n_paths),
        efforts: Vec::with_capacity(config.n_paths),
        increments: Vec::with_capacity(config.n_paths),
        clamped_steps: 0,
    };
    for (states, efforts, increments, clamped) in per_path {
        paths.states.push(states);
        paths.efforts.push(efforts);
        paths.increments.push(increments);
        paths.clamped_steps += clamped;
    }
    paths
}

/// Joint Monte Carlo estimates of both discounted objectives along a common
/// set of paths, with clamping diagnostics.
#[derive(Debug, Clone)]
pub struct ObjectiveEstimates {
    /// E[∫ e^{−δs}(U(R−k) − h(A)) ds]; the martingale target is x0.
    pub consortium: PathStats,
    /// E[∫ e^{−δs}(φ(A) − R + k) ds]; the HJB target is v(x0).
    pub public: PathStats,
    /// Fraction of all simulated steps that were clamped back into domain.
    pub clamp_fraction: f64,
    /// Paths that touched the x = 0 boundary at least once.
    pub paths_at_floor: usize,
    /// Paths that touched the x = x̄ boundary at least once.
    pub paths_at_ceiling: usize,
}

/// Runs the Monte Carlo once and reports both objective estimates.
pub fn mc_objectives(
    policy: &Policy,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &SimConfig,
) -> ObjectiveEstimates {
    let table = ControlTable::new(policy, grid);
    let n_steps = config.n_steps();

    let per_path: Vec<PathTotals> = (0..config.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(config.seed, p as u64);
            let sqrt_dt = config.dt.sqrt();
            walk_path(
                &table,
                params,
                bundle,
                config.x0,
                config.dt,
                n_steps,
                || {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * sqrt_dt
                },
                |_, _, _, _, _| {},
            )
        })
        .collect();

    let horizon = n_steps as f64 * config.dt;
    let tail = (-params.delta * horizon).exp();
    let consortium_samples: Vec<f64> = per_path.iter().map(|t| t.consortium).collect();
    let public_samples: Vec<f64> = per_path.iter().map(|t| t.public).collect();
    let consortium_bound = tail * bundle.u(params.max_rent_spread()) / params.delta;
    let public_bound = tail * boundary_v0(params, bundle);

    let total_steps = (config.n_paths * n_steps).max(1);
    ObjectiveEstimates {
        consortium: PathStats::from_samples(&consortium_samples, consortium_bound),
        public: PathStats::from_samples(&public_samples, public_bound),
        clamp_fraction: per_path.iter().map(|t| t.clamped_steps).sum::<usize>() as f64
            / total_steps as f64,
        paths_at_floor: per_path.iter().filter(|t| t.hit_floor).count(),
        paths_at_ceiling: per_path.iter().filter(|t| t.hit_ceiling).count(),
    }
}

/// Estimate of the consortium objective E[∫₀^T e^{−δs}(U(R−k) − h(A)) ds].
pub fn mc_consortium_value(
    policy: &Policy,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &SimConfig,
) -> PathStats {
    mc_objectives(policy, grid, params, bundle, config).consortium
}

/// Estimate of the public objective E[∫₀^T e^{−δs}(φ(A) − R + k) ds].
pub fn mc_public_value(
    policy: &Policy,
    grid: &Grid,
    params: &ModelParams,
    bundle: &FunctionBundle,
    config: &SimConfig,
) -> PathStats {
    mc_objectives(policy, grid, params, bundle, config).public
}

/// Cost and welfare paths sharing the continuation value's Brownian noise.
#[derive(Debug, Clone)]
pub struct CostWelfarePaths {
    /// C_t = C₀ + kt + σW_t.
    pub cost: Vec<Vec<f64>>,
    /// X_t = X₀ + ∫(φ(A_s) + k)ds + σW_t.
    pub welfare: Vec<Vec<f64>>,
}

/// Rebuilds the cost and social-welfare processes from simulated effort
/// paths, reusing their Brownian increments (the model has a single noise
/// source).
pub fn simulate_cost_welfare(
    params: &ModelParams,
    bundle: &FunctionBundle,
    paths: &SimulatedPaths,
) -> CostWelfarePaths {
    let dt = paths.dt;
    let mut cost = Vec::with_capacity(paths.efforts.len());
    let mut welfare = Vec::with_capacity(paths.efforts.len());
    for (efforts, increments) in paths.efforts.iter().zip(&paths.increments) {
        let mut c = Vec::with_capacity(efforts.len() + 1);
        let mut x = Vec::with_capacity(efforts.len() + 1);
        c.push(params.c0);
        x.push(params.x0_welfare);
        let mut c_cur = params.c0;
        let mut x_cur = params.x0_welfare;
        for (&a, &dw) in efforts.iter().zip(increments) {
            let noise = params.sigma * dw;
            c_cur += params.k * dt + noise;
            x_cur += (bundle.phi(a) + params.k) * dt + noise;
            c.push(c_cur);
            x.push(x_cur);
        }
        cost.push(c);
        welfare.push(x);
    }
    CostWelfarePaths { cost, welfare }
}
