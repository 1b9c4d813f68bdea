//! The e-projection solvers.
//!
//! Both solvers start at θ ≡ 0 and drive the exact gradient η − η̂ of the
//! KL objective to zero; since the objective is convex in θ and the optimum
//! is the unique point with η = η̂, either route reaches the same global
//! minimizer.
//!
//! - Gradient descent: θ ← θ − ε(η − η̂), all coordinates updated
//!   simultaneously per sweep with one Q/η refresh. The classic formulation
//!   refreshes inside the per-coordinate loop; the simultaneous sweep is the
//!   standard gradient step, a factor |B| cheaper, and converges to the same
//!   unique optimum by convexity.
//! - Natural gradient: θ ← θ − G⁻¹(η − η̂) with G the Fisher matrix, which
//!   here equals the Hessian, so this is Newton's method. The linear system
//!   is solved by Cholesky with a pivoted-LU fallback and an escalating
//!   ridge on ill-conditioned G; a KL backtracking line search guards
//!   against overshoot. Neither safeguard moves the fixed point.
//!
//! Convergence is declared when max_v |η_v − η̂_v| ≤ tolerance, the
//! sup-norm of the exact gradient.

use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    compute_eta_hat, fisher_matrix, kl_divergence, same_basis, EtaVector, ModelState, ThetaVector,
};
use crate::poset::{Basis, ZetaIncidence};
use crate::tensor::NormalizedTensor;

/// Which solver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Plain gradient descent with a fixed learning rate.
    Gd,
    /// Natural gradient (Newton) steps through the Fisher matrix.
    Ng,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Algorithm::Gd),
            "ng" => Ok(Algorithm::Ng),
            other => Err(Error::InvalidInput(format!(
                "unknown algorithm '{other}' (expected gd or ng)"
            ))),
        }
    }
}

/// Solver settings. Defaults: ε = 0.1, tolerance = 1e-5 on max|η − η̂|,
/// 10⁶ iterations for gd and 100 for ng, no ridge damping.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Learning rate ε (gradient descent only).
    pub learning_rate: f64,
    /// Convergence threshold on the gradient sup-norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial ridge added to the Fisher matrix; escalates on failure.
    pub damping: f64,
    /// Record a per-iteration (kl, max-residual, time) series.
    pub record_trace: bool,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        let max_iterations = match algorithm {
            Algorithm::Gd => 1_000_000,
            Algorithm::Ng => 100,
        };
        SolverConfig {
            algorithm,
            learning_rate: 0.1,
            tolerance: 1e-5,
            max_iterations,
            damping: 0.0,
            record_trace: false,
        }
    }

    pub fn gd() -> Self {
        Self::new(Algorithm::Gd)
    }

    pub fn ng() -> Self {
        Self::new(Algorithm::Ng)
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_trace(mut self, record_trace: bool) -> Self {
        self.record_trace = record_trace;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidInput("damping must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One row of the optional convergence trace.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub iteration: usize,
    pub kl: f64,
    pub max_residual: f64,
    /// Time spent on this iteration (setup for row 0).
    pub wall_time_ms: f64,
}

/// A converged (or stopped) e-projection.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub q: NormalizedTensor,
    pub theta: ThetaVector,
    pub eta: EtaVector,
    pub kl: f64,
    /// Final max_v |η_v − η̂_v|.
    pub residual: f64,
    /// Final log-partition ψ(θ).
    pub psi: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    pub converged: bool,
    pub trace: Option<Vec<TracePoint>>,
}

/// ∂KL/∂θ_w = η_w − η̂_w, exactly. Errors when the vectors belong to
/// different bases.
pub fn gradient(eta: &EtaVector, eta_hat: &EtaVector) -> Result<Vec<f64>> {
    if !same_basis(eta.basis(), eta_hat.basis()) {
        return Err(Error::BasisMismatch(
            "η and η̂ belong to different bases".into(),
        ));
    }
    Ok(eta
        .values()
        .iter()
        .zip(eta_hat.values())
        .map(|(a, b)| a - b)
        .collect())
}

fn max_residual(eta: &EtaVector, eta_hat: &EtaVector) -> f64 {
    eta.values()
        .iter()
        .zip(eta_hat.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Incidence + η̂, with unidentifiable basis members pruned.
fn prepare(
    p: &NormalizedTensor,
    basis: &Arc<Basis>,
) -> Result<(Arc<ZetaIncidence>, EtaVector)> {
    if !(Arc::ptr_eq(p.space(), basis.space()) || p.space() == basis.space()) {
        return Err(Error::BasisMismatch(
            "input tensor and basis live on different sample spaces".into(),
        ));
    }
    let mut incidence = ZetaIncidence::new(basis.clone());
    let empty = incidence.empty_rows();
    if !empty.is_empty() {
        // θ for a member whose up-set misses Ω entirely is unidentifiable:
        // η and η̂ are both identically zero there.
        log::warn!(
            "dropping {} basis member(s) with an empty up-set within the sample space",
            empty.len()
        );
        let retained: Vec<usize> = basis
            .codes()
            .iter()
            .enumerate()
            .filter(|(i, _)| !empty.contains(i))
            .map(|(_, &c)| c)
            .collect();
        let pruned = Arc::new(Basis::from_codes(basis.space().clone(), retained));
        incidence = ZetaIncidence::new(pruned);
    }
    let incidence = Arc::new(incidence);
    let eta_hat = compute_eta_hat(&incidence, p);
    Ok((incidence, eta_hat))
}

struct TraceRecorder {
    points: Option<Vec<TracePoint>>,
    last: Instant,
}

impl TraceRecorder {
    fn new(enabled: bool, start: Instant) -> Self {
        TraceRecorder {
            points: enabled.then(Vec::new),
            last: start,
        }
    }

    fn record(&mut self, iteration: usize, p: &NormalizedTensor, state: &ModelState, residual: f64) {
        if let Some(points) = &mut self.points {
            let now = Instant::now();
            points.push(TracePoint {
                iteration,
                kl: kl_divergence(p, state.q()),
                max_residual: residual,
                wall_time_ms: now.duration_since(self.last).as_secs_f64() * 1e3,
            });
            self.last = now;
        }
    }
}

fn package(
    p: &NormalizedTensor,
    state: ModelState,
    residual: f64,
    iterations: usize,
    start: Instant,
    tolerance: f64,
    trace: TraceRecorder,
) -> DecompositionResult {
    let kl = kl_divergence(p, state.q());
    let (theta, psi, q, eta) = state.into_parts();
    DecompositionResult {
        q,
        theta,
        eta,
        kl,
        residual,
        psi,
        iterations,
        wall_time: start.elapsed(),
        converged: residual <= tolerance,
        trace: trace.points,
    }
}

/// Gradient descent from θ ≡ 0 until max|η − η̂| ≤ tolerance or the
/// iteration budget runs out (returned with `converged = false`).
pub fn solve_gd(
    p: &NormalizedTensor,
    basis: &Arc<Basis>,
    cfg: &SolverConfig,
) -> Result<DecompositionResult> {
    if cfg.algorithm != Algorithm::Gd {
        return Err(Error::InvalidInput("configuration is not for gradient descent".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let (incidence, eta_hat) = prepare(p, basis)?;
    let basis_used = incidence.basis().clone();
    let mut state = ModelState::from_theta(
        incidence.clone(),
        ThetaVector::zeros(basis_used.clone()),
        p.total_mass(),
    )?;
    let mut recorder = TraceRecorder::new(cfg.record_trace, start);
    let mut residual = max_residual(state.eta(), &eta_hat);
    recorder.record(0, p, &state, residual);

    let mut iterations = 0;
    while residual > cfg.tolerance && iterations < cfg.max_iterations {
        let g = gradient(state.eta(), &eta_hat)?;
        let next: Vec<f64> = state
            .theta()
            .values()
            .iter()
            .zip(&g)
            .map(|(t, d)| t - cfg.learning_rate * d)
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(
                "parameters became non-finite; use a smaller learning rate".into(),
            ));
        }
        let theta = ThetaVector::new(basis_used.clone(), next)?;
        state.set_theta(theta).map_err(|e| match e {
            Error::Numerical(msg) => {
                Error::Diverged(format!("{msg}; use a smaller learning rate"))
            }
            other => other,
        })?;
        iterations += 1;
        residual = max_residual(state.eta(), &eta_hat);
        recorder.record(iterations, p, &state, residual);
    }
    Ok(package(p, state, residual, iterations, start, cfg.tolerance, recorder))
}

/// Solve (G + λI)x = rhs, preferring Cholesky and falling back to pivoted
/// LU, escalating λ through the ridge ladder until a finite solution
/// appears.
fn solve_newton_system(
    g: &DMatrix<f64>,
    rhs: &DVector<f64>,
    base_damping: f64,
) -> Result<DVector<f64>> {
    const LADDER: [f64; 5] = [1e-10, 1e-8, 1e-6, 1e-4, 1e-2];
    let lambdas = std::iter::once(base_damping).chain(LADDER.iter().copied().filter(move |&l| l > base_damping));
    for lambda in lambdas {
        let mut a = g.clone();
        if lambda > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += lambda;
            }
        }
        if let Some(chol) = a.clone().cholesky() {
            let x = chol.solve(rhs);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
        if let Some(x) = a.lu().solve(rhs) {
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
    }
    Err(Error::Numerical(
        "Fisher system remained unsolvable after ridge escalation".into(),
    ))
}

/// Natural-gradient (Newton) iteration from θ ≡ 0; same convergence
/// criterion and same unique optimum as [`solve_gd`].
pub fn solve_ng(
    p: &NormalizedTensor,
    basis: &Arc<Basis>,
    cfg: &SolverConfig,
) -> Result<DecompositionResult> {
    if cfg.algorithm != Algorithm::Ng {
        return Err(Error::InvalidInput("configuration is not for the natural gradient".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let (incidence, eta_hat) = prepare(p, basis)?;
    let basis_used = incidence.basis().clone();
    let mut state = ModelState::from_theta(
        incidence.clone(),
        ThetaVector::zeros(basis_used.clone()),
        p.total_mass(),
    )?;
    let mut recorder = TraceRecorder::new(cfg.record_trace, start);
    let mut residual = max_residual(state.eta(), &eta_hat);
    recorder.record(0, p, &state, residual);
    let mut kl_current = kl_divergence(p, state.q());

    let mut iterations = 0;
    while residual > cfg.tolerance && iterations < cfg.max_iterations {
        let delta = DVector::from_iterator(basis_used.len(), gradient(state.eta(), &eta_hat)?);
        let g = fisher_matrix(&state);
        let step = solve_newton_system(&g, &delta, cfg.damping)?;

        // Full Newton step, halving on any KL increase (or numerical
        // breakdown) up to 20 times.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=20 {
            let next: Vec<f64> = state
                .theta()
                .values()
                .iter()
                .zip(step.iter())
                .map(|(t, d)| t - scale * d)
                .collect();
            if next.iter().all(|v| v.is_finite()) {
                let theta = ThetaVector::new(basis_used.clone(), next)?;
                if let Ok(candidate) =
                    ModelState::from_theta(incidence.clone(), theta, p.total_mass())
                {
                    let kl_next = kl_divergence(p, candidate.q());
                    if kl_next <= kl_current + 1e-14 * (1.0 + kl_current.abs()) {
                        state = candidate;
                        kl_current = kl_next;
                        accepted = true;
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::Numerical(
                "backtracking line search failed to reduce the KL divergence".into(),
            ));
        }
        iterations += 1;
        residual = max_residual(state.eta(), &eta_hat);
        recorder.record(iterations, p, &state, residual);
    }
    Ok(package(p, state, residual, iterations, start, cfg.tolerance, recorder))
}

/// Dispatch on the configured algorithm.
pub fn decompose(
    p: &NormalizedTensor,
    basis: &Arc<Basis>,
    cfg: &SolverConfig,
) -> Result<DecompositionResult> {
    match cfg.algorithm {
        Algorithm::Gd => solve_gd(p, basis, cfg),
        Algorithm::Ng => solve_ng(p, basis, cfg),
    }
}
