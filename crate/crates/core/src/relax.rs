//! Constrained energy minimization: projected descent with backtracking.
//!
//! Every iterate is `n <- P(n + tau d)` where `P` maps each node back onto its
//! constraint set (unit sphere, tangent plane, pinned value) and `d` is a
//! descent direction in the tangent space. The step `tau` is halved until the
//! energy strictly decreases and grows after each accepted step.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::director::DirectorField;
use crate::energy::{
    constraint_residual, project_node_gradient, project_node_value, ElasticConstants,
    EnergyBreakdown, FrankEnergy, Quadrature, NORM_TOL,
};
use crate::vec3::{angle_between, Vec3};
use crate::Error;

const STATIONARY_GRADIENT: f64 = 1e-10;

/// How the search direction is built from the projected gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentMethod {
    /// `d = -grad`.
    Steepest,
    /// Polak-Ribiere+ conjugate directions with tangent-space transport by
    /// projection; falls back to `-grad` whenever the direction is not a
    /// descent direction.
    ConjugateGradient,
    /// Limited-memory BFGS two-loop recursion on tangent-projected step and
    /// gradient differences; unit trial step.
    #[default]
    Lbfgs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxOptions {
    pub max_iters: usize,
    /// Relative energy decrease over `energy_window` iterations below which
    /// the run counts as converged.
    pub tol_energy: f64,
    pub energy_window: usize,
    /// Largest nodal rotation (radians) of an accepted step below which the run
    /// counts as converged.
    pub tol_step: f64,
    /// First trial step. `None` means `1e-2 delta^2 / K_max`.
    pub step0: Option<f64>,
    pub backtrack: f64,
    pub grow: f64,
    /// Smallest step tried before giving up on a line search.
    pub min_step: f64,
    pub method: DescentMethod,
    pub quadrature: Quadrature,
    /// Progress line on stderr every this many iterations; 0 disables it.
    pub progress_every: usize,
    /// Keep every this many accepted energies in the trace.
    pub trace_stride: usize,
    /// Correction pairs kept by [`DescentMethod::Lbfgs`].
    pub memory: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            max_iters: 50_000,
            tol_energy: 1e-9,
            energy_window: 10,
            tol_step: 1e-7,
            step0: None,
            backtrack: 0.5,
            grow: 1.1,
            min_step: 1e-16,
            method: DescentMethod::default(),
            quadrature: Quadrature::default(),
            progress_every: 0,
            trace_stride: 10,
            memory: 8,
        }
    }
}

impl RelaxOptions {
    /// Returns the offending option name on failure.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.max_iters == 0 {
            return Err(("max_iters", "must be positive".into()));
        }
        for (name, v) in [
            ("tol_energy", self.tol_energy),
            ("tol_step", self.tol_step),
            ("min_step", self.min_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err((name, "must be positive".into()));
            }
        }
        if let Some(s) = self.step0 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(("step0", "must be positive".into()));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(("backtrack", "must lie in (0, 1)".into()));
        }
        if !(self.grow >= 1.0 && self.grow.is_finite()) {
            return Err(("grow", "must be at least 1".into()));
        }
        if self.energy_window == 0 {
            return Err(("energy_window", "must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    EnergyFlat,
    StepSmall,
    MaxIters,
    /// No decreasing step above `min_step`; the best field is returned.
    LineSearchStall,
}

impl StopReason {
    pub fn is_converged(self) -> bool {
        matches!(self, StopReason::EnergyFlat | StopReason::StepSmall)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxReport {
    pub iterations: usize,
    pub initial_energy: EnergyBreakdown,
    pub final_energy: EnergyBreakdown,
    pub converged: bool,
    pub reason: StopReason,
    /// `(iteration, total energy)` samples; non-increasing.
    pub energy_trace: Vec<(usize, f64)>,
}

/// State handed to an observer after each accepted step.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub iteration: usize,
    pub energy: f64,
    pub previous_energy: f64,
    pub step: f64,
    pub max_rotation: f64,
}

/// Minimizes the energy from `field`, which must already satisfy its constraints.
pub fn relax(
    field: &DirectorField,
    k: &ElasticConstants,
    opts: &RelaxOptions,
) -> Result<(DirectorField, RelaxReport), Error> {
    relax_with_observer(field, k, opts, |_, _| {})
}

/// [`relax`] with a callback invoked after every accepted step.
pub fn relax_with_observer(
    field: &DirectorField,
    k: &ElasticConstants,
    opts: &RelaxOptions,
    mut observer: impl FnMut(&StepInfo, &DirectorField),
) -> Result<(DirectorField, RelaxReport), Error> {
    opts.validate().map_err(|(key, reason)| Error::Parse {
        key: key.into(),
        reason,
    })?;
    for n in field.active_nodes() {
        let dev = (field.get(n).norm() - 1.0).abs();
        if !(dev <= NORM_TOL) {
            return Err(Error::NotNormalized {
                node: n,
                deviation: dev,
            });
        }
    }
    let geom = field.geometry().clone();
    let classes = geom.classes();
    let free: Vec<usize> = (0..geom.node_count())
        .filter(|&n| !classes[n].is_fixed())
        .collect();
    let energy = FrankEnergy::with_quadrature(&geom, *k, opts.quadrature);
    let project = |vals: &[Vec3], raw: &[Vec3]| -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); vals.len()];
        for &n in &free {
            out[n] = project_node_gradient(classes[n], &vals[n], &raw[n]);
        }
        out
    };
    let dot = |a: &[Vec3], b: &[Vec3]| -> f64 { free.iter().map(|&n| a[n].dot(&b[n])).sum() };

    let mut current = field.clone();
    let (mut e, raw) = energy.breakdown_and_gradient_unchecked(current.values());
    let initial_energy = e;
    let mut grad = project(current.values(), &raw);
    let mut dir: Vec<Vec3> = grad.iter().map(|g| -g).collect();
    let mut memory: VecDeque<CorrectionPair> = VecDeque::with_capacity(opts.memory);
    let first_step = opts
        .step0
        .unwrap_or(1e-2 * geom.spacing().powi(2) / k.max_modulus());
    let mut tau = first_step;
    let mut history = vec![e.total];
    let mut small_steps = 0;
    let mut trace = vec![(0, e.total)];
    let mut trial = current.values().to_vec();

    // nodal gradients scale like K delta; below this they are roundoff
    let grad_floor = STATIONARY_GRADIENT * k.max_modulus() * geom.spacing();
    let mut iterations = 0;
    let reason = loop {
        let gnorm2 = dot(&grad, &grad);
        if gnorm2.sqrt() <= grad_floor {
            break StopReason::EnergyFlat;
        }
        if iterations >= opts.max_iters {
            break StopReason::MaxIters;
        }
        if opts.method == DescentMethod::Lbfgs {
            if memory.is_empty() {
                tau = tau.max(first_step);
            } else {
                lbfgs_direction(&grad, &memory, &free, &mut dir);
                let vals = current.values();
                for &n in &free {
                    dir[n] = project_node_gradient(classes[n], &vals[n], &dir[n]);
                }
                tau = 1.0;
            }
        }
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            for &n in &free {
                dir[n] = -grad[n];
            }
            slope = -gnorm2;
            memory.clear();
            tau = tau.min(first_step.max(tau * opts.backtrack));
        }

        // backtracking search for a strict decrease, shortened by a quadratic fit
        let accepted = loop {
            for &n in &free {
                let v = current.values()[n] + dir[n] * tau;
                trial[n] = project_node_value(classes[n], &v, n)?;
            }
            let e_trial = energy.breakdown_unchecked(&trial).total;
            if e_trial < e.total {
                break true;
            }
            let curvature = e_trial - e.total - slope * tau;
            let fit = if curvature > 0.0 {
                -slope * tau * tau / (2.0 * curvature)
            } else {
                tau * opts.backtrack
            };
            tau = fit.clamp(0.1 * tau, opts.backtrack * tau);
            if tau < opts.min_step {
                break false;
            }
        };
        if !accepted {
            break StopReason::LineSearchStall;
        }
        iterations += 1;

        let max_rotation = free
            .iter()
            .map(|&n| angle_between(&current.values()[n], &trial[n]))
            .fold(0.0, f64::max);
        let previous_energy = e.total;
        let (e_new, raw) = energy.breakdown_and_gradient_unchecked(&trial);
        let new_grad = project(&trial, &raw);

        match opts.method {
            DescentMethod::Steepest => {
                for &n in &free {
                    dir[n] = -new_grad[n];
                }
            }
            DescentMethod::ConjugateGradient => {
                let mut num = 0.0;
                for &n in &free {
                    num += new_grad[n].dot(&(new_grad[n] - grad[n]));
                }
                let beta = (num / gnorm2).max(0.0);
                for &n in &free {
                    let transported = project_node_gradient(classes[n], &trial[n], &dir[n]);
                    dir[n] = -new_grad[n] + transported * beta;
                }
            }
            DescentMethod::Lbfgs => {
                let mut pair = if memory.len() >= opts.memory.max(1) {
                    memory.pop_front().expect("memory is full")
                } else {
                    CorrectionPair::new(free.len())
                };
                let old = current.values();
                let mut sy = 0.0;
                let mut yy = 0.0;
                for (slot, &n) in free.iter().enumerate() {
                    let s = project_node_gradient(classes[n], &trial[n], &(trial[n] - old[n]));
                    let y = new_grad[n] - project_node_gradient(classes[n], &trial[n], &grad[n]);
                    sy += s.dot(&y);
                    yy += y.dot(&y);
                    pair.s[slot] = s;
                    pair.y[slot] = y;
                }
                if sy > 1e-12 * yy.sqrt() * yy.sqrt().max(1.0) && sy > 0.0 {
                    pair.rho = 1.0 / sy;
                    pair.gamma = sy / yy;
                    memory.push_back(pair);
                } else {
                    memory.clear();
                }
                for &n in &free {
                    dir[n] = -new_grad[n];
                }
            }
        }
        current.values_mut().copy_from_slice(&trial);
        e = e_new;
        grad = new_grad;
        let step = tau;
        tau *= opts.grow;

        let info = StepInfo {
            iteration: iterations,
            energy: e.total,
            previous_energy,
            step,
            max_rotation,
        };
        observer(&info, &current);
        if opts.progress_every > 0 && iterations % opts.progress_every == 0 {
            eprintln!(
                "iter {:>7}  energy {:.12e}  step {:.3e}  rotation {:.3e}",
                iterations, e.total, step, max_rotation
            );
        }
        history.push(e.total);
        if opts.trace_stride > 0 && iterations % opts.trace_stride == 0 {
            trace.push((iterations, e.total));
        }
        if history.len() > opts.energy_window {
            let old = history[history.len() - 1 - opts.energy_window];
            if (old - e.total) / e.total.abs().max(f64::MIN_POSITIVE) < opts.tol_energy {
                break StopReason::EnergyFlat;
            }
        }
        small_steps = if max_rotation < opts.tol_step {
            small_steps + 1
        } else {
            0
        };
        if small_steps >= opts.energy_window {
            break StopReason::StepSmall;
        }
    };
    if trace.last().map(|t| t.0) != Some(iterations) {
        trace.push((iterations, e.total));
    }
    debug_assert!(constraint_residual(&current) < 1e-9);
    let report = RelaxReport {
        iterations,
        initial_energy,
        final_energy: e,
        converged: reason.is_converged(),
        reason,
        energy_trace: trace,
    };
    Ok((current, report))
}

/// One L-BFGS correction pair, stored over the free nodes only.
struct CorrectionPair {
    s: Vec<Vec3>,
    y: Vec<Vec3>,
    rho: f64,
    gamma: f64,
}

impl CorrectionPair {
    fn new(len: usize) -> Self {
        CorrectionPair {
            s: vec![Vec3::zeros(); len],
            y: vec![Vec3::zeros(); len],
            rho: 0.0,
            gamma: 1.0,
        }
    }
}

/// Two-loop recursion; writes `-H grad` into `dir` on the free nodes.
fn lbfgs_direction(
    grad: &[Vec3],
    memory: &VecDeque<CorrectionPair>,
    free: &[usize],
    dir: &mut [Vec3],
) {
    let mut q: Vec<Vec3> = free.iter().map(|&n| grad[n]).collect();
    let dot = |a: &[Vec3], b: &[Vec3]| -> f64 { a.iter().zip(b).map(|(x, y)| x.dot(y)).sum() };
    let mut alpha = vec![0.0; memory.len()];
    for (i, p) in memory.iter().enumerate().rev() {
        let a = p.rho * dot(&p.s, &q);
        alpha[i] = a;
        for (qv, yv) in q.iter_mut().zip(&p.y) {
            *qv -= yv * a;
        }
    }
    let gamma = memory.back().map_or(1.0, |p| p.gamma);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for (i, p) in memory.iter().enumerate() {
        let b = p.rho * dot(&p.y, &q);
        for (qv, sv) in q.iter_mut().zip(&p.s) {
            *qv += sv * (alpha[i] - b);
        }
    }
    for (slot, &n) in free.iter().enumerate() {
        dir[n] = -q[slot];
    }
}
