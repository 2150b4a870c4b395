use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CoreSolution, Evaluation, FitProblem};
use crate::error::{arg, Result};
use crate::lorentzian::{LorentzianBasisSpec, BOUNDARY_MASS_LIMIT};
use crate::tensor::{Axis, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub max_iter: usize,
    /// Stop once `‖P(∇F)‖_∞` falls below this.
    pub grad_tol: f64,
    /// Stop once an accepted step improves `F` by less than this.
    pub f_tol: f64,
    pub width_bounds: (f64, f64),
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub initial_step: f64,
    pub max_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            grad_tol: 1e-7,
            f_tol: 1e-12,
            width_bounds: (1e-3, 50.0),
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            initial_step: 1.0,
            max_step: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitFlag {
    /// Iteration limit hit; the best iterate is returned.
    Unconverged,
    /// No step length satisfied the sufficient-increase condition.
    LineSearchStalled,
    /// `T` had no component in the retained overlap subspace.
    Degenerate,
    /// Overlap eigendirections were dropped by the conditioning cutoff.
    Regularized { discarded: usize },
    /// A fitted function keeps too much weight next to the periodic boundary.
    BoundaryMass { axis: Axis, index: usize, mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_norm: f64,
    /// `F` after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
    /// `max_ℓ |Σ_ℓ' T_ℓ' d_ℓ' · T_ℓ − κ_max (S d)_ℓ|`
    pub eigen_residual: f64,
    pub flags: Vec<FitFlag>,
}

/// A fitted Tucker-form expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerState {
    pub n_qe: u32,
    pub spec: LorentzianBasisSpec,
    pub core: Tensor3,
    pub fidelity: f64,
    pub squared_overlap: f64,
    pub penalty: f64,
    pub kappa_max: f64,
    pub norm_factor: f64,
    pub diagnostics: FitDiagnostics,
}

fn project(widths: &[f64], grad: &[f64], (lo, hi): (f64, f64)) -> Vec<f64> {
    widths
        .iter()
        .zip(grad)
        .map(|(&a, &g)| {
            if (a <= lo && g < 0.0) || (a >= hi && g > 0.0) {
                0.0
            } else {
                g
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn eigen_residual(eval: &Evaluation) -> f64 {
    let sol = &eval.solution;
    let sd = eval.overlap.apply(&sol.core);
    eval.t
        .as_slice()
        .iter()
        .zip(sd.as_slice())
        .map(|(&t, &s)| (sol.overlap * t - sol.kappa_max * s).abs())
        .fold(0.0, f64::max)
}

fn check_options(o: &OptimizeOptions) -> Result<()> {
    let (lo, hi) = o.width_bounds;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return arg(format!("width bounds must satisfy 0 < lo < hi, got ({lo}, {hi})"));
    }
    if !(o.backtrack > 0.0 && o.backtrack < 1.0) {
        return arg("backtracking factor must lie in (0, 1)");
    }
    if !(o.armijo_c > 0.0 && o.armijo_c < 1.0) {
        return arg("sufficient-increase constant must lie in (0, 1)");
    }
    if !(o.initial_step > 0.0) {
        return arg("initial step must be positive");
    }
    Ok(())
}

/// Projected gradient ascent on `F(a)` with Armijo backtracking, starting
/// from the widths in `problem.spec`.
pub fn optimize_widths(problem: &FitProblem, options: &OptimizeOptions) -> Result<TuckerState> {
    check_options(options)?;
    let bounds = options.width_bounds;
    let start: Vec<f64> = problem
        .spec
        .flat_widths()
        .iter()
        .map(|a| a.clamp(bounds.0, bounds.1))
        .collect();
    let mut widths = start;
    let mut eval = problem.evaluate_with_derivatives(&problem.spec.with_flat_widths(&widths))?;
    let mut grad = eval.gradient(problem);
    let mut history = vec![eval.fidelity()];
    let mut flags = Vec::new();
    let mut step = options.initial_step;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        let pg = project(&widths, &grad, bounds);
        if inf_norm(&pg) < options.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let f0 = eval.fidelity();
        let mut t = step;
        let mut accepted = None;
        for _ in 0..=options.max_backtracks {
            let trial: Vec<f64> = widths
                .iter()
                .zip(&grad)
                .map(|(&a, &g)| (a + t * g).clamp(bounds.0, bounds.1))
                .collect();
            let gain: f64 = trial
                .iter()
                .zip(&widths)
                .zip(&grad)
                .map(|((&n, &o), &g)| g * (n - o))
                .sum();
            let cand = problem.evaluate(&problem.spec.with_flat_widths(&trial))?;
            if cand.fidelity() >= f0 + options.armijo_c * gain {
                accepted = Some((trial, t));
                break;
            }
            t *= options.backtrack;
        }
        let Some((trial, t)) = accepted else {
            flags.push(FitFlag::LineSearchStalled);
            break;
        };
        widths = trial;
        eval = problem.evaluate_with_derivatives(&problem.spec.with_flat_widths(&widths))?;
        grad = eval.gradient(problem);
        history.push(eval.fidelity());
        step = (2.0 * t).min(options.max_step);
        if eval.fidelity() - f0 < options.f_tol {
            converged = true;
            break;
        }
    }
    if !converged && !flags.contains(&FitFlag::LineSearchStalled) {
        flags.push(FitFlag::Unconverged);
    }
    let final_grad_norm = inf_norm(&project(&widths, &grad, bounds));
    Ok(finish(problem, eval, history, iterations, converged, final_grad_norm, flags))
}

fn finish(
    problem: &FitProblem,
    eval: Evaluation,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    final_grad_norm: f64,
    mut flags: Vec<FitFlag>,
) -> TuckerState {
    let eigen_residual = eigen_residual(&eval);
    let Evaluation { spec, solution, .. } = eval;
    let CoreSolution {
        core,
        kappa_max,
        fidelity,
        penalty,
        discarded,
        degenerate,
        ..
    } = solution.clone();
    if degenerate {
        flags.push(FitFlag::Degenerate);
    }
    if discarded > 0 {
        flags.push(FitFlag::Regularized { discarded });
    }
    for axis in Axis::ALL {
        if let Ok(states) = spec.states(axis, problem.n_qe()) {
            for (index, s) in states.iter().enumerate() {
                let mass = s.boundary_mass();
                if mass > BOUNDARY_MASS_LIMIT {
                    flags.push(FitFlag::BoundaryMass { axis, index, mass });
                }
            }
        }
    }
    TuckerState {
        n_qe: problem.n_qe(),
        spec,
        core,
        fidelity,
        squared_overlap: solution.squared_overlap(),
        penalty,
        kappa_max,
        norm_factor: problem.norm_factor,
        diagnostics: FitDiagnostics {
            iterations,
            converged,
            final_grad_norm,
            history,
            eigen_residual,
            flags,
        },
    }
}

/// Final fidelity of each restart; restart 0 starts from the given widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub fidelities: Vec<f64>,
    pub best: usize,
}

/// Runs [`optimize_widths`] from the given widths and from `restarts − 1`
/// seeded multiplicative perturbations of them; keeps the best fidelity.
pub fn optimize_with_restarts(
    problem: &FitProblem,
    options: &OptimizeOptions,
    restarts: usize,
    seed: u64,
) -> Result<(TuckerState, RestartSummary)> {
    if restarts == 0 {
        return arg("restarts must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = problem.spec.flat_widths();
    let mut best: Option<(TuckerState, usize)> = None;
    let mut fidelities = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let widths: Vec<f64> = if r == 0 {
            base.clone()
        } else {
            base.iter()
                .map(|a| a * rng.random_range(-0.5f64..0.5).exp())
                .collect()
        };
        let mut p = problem.clone();
        p.spec = problem.spec.with_flat_widths(&widths);
        let state = optimize_widths(&p, options)?;
        fidelities.push(state.fidelity);
        if best.as_ref().is_none_or(|(b, _)| state.fidelity > b.fidelity) {
            best = Some((state, r));
        }
    }
    let (state, best) = best.expect("restarts ≥ 1");
    Ok((state, RestartSummary { fidelities, best }))
}
