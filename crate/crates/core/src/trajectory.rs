//! Hopping trajectories in the extended phase space.
//!
//! Between hops, a trajectory follows the Hamiltonian flow of the active
//! surface together with the classical action and the Jacobian blocks
//! (dqQ, dqP, dpQ, dpP); a hop flips the surface index and leaves every
//! continuous quantity untouched. The FGA amplitude is carried as
//! A_t = A_0 sqrt(2^-d det Z) with Z = dqQ + dpP + i (dqP - dpQ) and a
//! branch-continuous complex square root.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::model::{DiabaticModel, Surface};
use crate::Complex;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("caustic proximity at t = {t:.6}: |det Z| = {det_abs:.3e} < {threshold:.3e}")]
    Caustic {
        t: f64,
        det_abs: f64,
        threshold: f64,
    },
    #[error("hop schedule returned {hop:.9} which does not follow t = {t:.9}")]
    BadHopTime { t: f64, hop: f64 },
    #[error("final time {t_final:.9} precedes current time {t:.9}")]
    BadTimeRange { t: f64, t_final: f64 },
}

/// Point z = (q, p) of phase space R^{2d}.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpacePoint {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl PhaseSpacePoint {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Self {
        assert_eq!(q.len(), p.len());
        Self { q, p }
    }

    pub fn from_slices(q: &[f64], p: &[f64]) -> Self {
        Self::new(DVector::from_row_slice(q), DVector::from_row_slice(p))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn dist_squared(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.dim() {
            let dq = self.q[k] - other.q[k];
            let dp = self.p[k] - other.p[k];
            acc += dq * dq + dp * dp;
        }
        acc
    }
}

/// Stepping policy of one deterministic segment (between consecutive hops).
#[derive(Debug, Clone, Copy)]
pub enum StepMode {
    /// Uniform steps no longer than the given dt.
    MaxStep(f64),
    /// Exactly this many uniform steps regardless of segment length. Keeps
    /// trajectory endpoints smooth in the hop times, which matters when they
    /// are finite-differenced.
    FixedCount(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub mode: StepMode,
    /// Trajectories with |det Z| below this are reported as caustic failures.
    pub caustic_threshold: f64,
}

impl IntegratorOptions {
    pub fn with_max_step(dt: f64) -> Self {
        Self {
            mode: StepMode::MaxStep(dt),
            caustic_threshold: 1e-12,
        }
    }

    pub fn with_fixed_count(n: usize) -> Self {
        Self {
            mode: StepMode::FixedCount(n),
            caustic_threshold: 1e-12,
        }
    }
}

/// Default integrator step min(1e-3, eps / (10 delta)), several steps per
/// expected inter-hop interval.
pub fn default_time_step(model: &DiabaticModel) -> f64 {
    let base: f64 = 1e-3;
    if model.delta() > 0.0 {
        base.min(model.epsilon() / (10.0 * model.delta()))
    } else {
        base
    }
}

/// The deterministic part of the extended state advanced by the integrator.
#[derive(Debug, Clone)]
pub(crate) struct Core {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub action: f64,
    pub jqq: DMatrix<f64>,
    pub jqp: DMatrix<f64>,
    pub jpq: DMatrix<f64>,
    pub jpp: DMatrix<f64>,
}

impl Core {
    fn initial(z: &PhaseSpacePoint) -> Self {
        let d = z.dim();
        Self {
            q: z.q.clone(),
            p: z.p.clone(),
            action: 0.0,
            jqq: DMatrix::identity(d, d),
            jqp: DMatrix::zeros(d, d),
            jpq: DMatrix::zeros(d, d),
            jpp: DMatrix::identity(d, d),
        }
    }

    fn zeros(d: usize) -> Self {
        Self {
            q: DVector::zeros(d),
            p: DVector::zeros(d),
            action: 0.0,
            jqq: DMatrix::zeros(d, d),
            jqp: DMatrix::zeros(d, d),
            jpq: DMatrix::zeros(d, d),
            jpp: DMatrix::zeros(d, d),
        }
    }

    fn copy_from(&mut self, other: &Core) {
        self.q.copy_from(&other.q);
        self.p.copy_from(&other.p);
        self.action = other.action;
        self.jqq.copy_from(&other.jqq);
        self.jqp.copy_from(&other.jqp);
        self.jpq.copy_from(&other.jpq);
        self.jpp.copy_from(&other.jpp);
    }

    /// self += a * other
    fn axpy(&mut self, a: f64, other: &Core) {
        self.q.axpy(a, &other.q, 1.0);
        self.p.axpy(a, &other.p, 1.0);
        self.action += a * other.action;
        self.jqq.axpy(a, &other.jqq, 1.0);
        self.jqp.axpy(a, &other.jqp, 1.0);
        self.jpq.axpy(a, &other.jpq, 1.0);
        self.jpp.axpy(a, &other.jpp, 1.0);
    }
}

struct Workspace {
    k1: Core,
    k2: Core,
    k3: Core,
    k4: Core,
    stage: Core,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        Self {
            k1: Core::zeros(d),
            k2: Core::zeros(d),
            k3: Core::zeros(d),
            k4: Core::zeros(d),
            stage: Core::zeros(d),
            grad: DVector::zeros(d),
            hess: DMatrix::zeros(d, d),
        }
    }
}

/// dQ = P, dP = -grad V, dS = |P|^2/2 - V, and the Jacobian system
/// d[jqq jqp; jpq jpp] = [jqq jqp; jpq jpp] [[0, -hess V], [I, 0]].
fn rhs_into(
    core: &Core,
    model: &DiabaticModel,
    surface: Surface,
    grad: &mut DVector<f64>,
    hess: &mut DMatrix<f64>,
    out: &mut Core,
) {
    model.gradient_into(surface, &core.q, grad);
    model.hessian_into(surface, &core.q, hess);
    let v = model.value(surface, &core.q);

    out.q.copy_from(&core.p);
    out.p.copy_from(grad);
    out.p.neg_mut();
    out.action = 0.5 * core.p.norm_squared() - v;
    out.jqq.copy_from(&core.jqp);
    out.jqp.gemm(-1.0, &core.jqq, hess, 0.0);
    out.jpq.copy_from(&core.jpp);
    out.jpp.gemm(-1.0, &core.jpq, hess, 0.0);
}

fn rk4_step(core: &mut Core, model: &DiabaticModel, surface: Surface, h: f64, ws: &mut Workspace) {
    rhs_into(core, model, surface, &mut ws.grad, &mut ws.hess, &mut ws.k1);

    ws.stage.copy_from(core);
    ws.stage.axpy(0.5 * h, &ws.k1);
    rhs_into(
        &ws.stage,
        model,
        surface,
        &mut ws.grad,
        &mut ws.hess,
        &mut ws.k2,
    );

    ws.stage.copy_from(core);
    ws.stage.axpy(0.5 * h, &ws.k2);
    rhs_into(
        &ws.stage,
        model,
        surface,
        &mut ws.grad,
        &mut ws.hess,
        &mut ws.k3,
    );

    ws.stage.copy_from(core);
    ws.stage.axpy(h, &ws.k3);
    rhs_into(
        &ws.stage,
        model,
        surface,
        &mut ws.grad,
        &mut ws.hess,
        &mut ws.k4,
    );

    core.axpy(h / 6.0, &ws.k1);
    core.axpy(h / 3.0, &ws.k2);
    core.axpy(h / 3.0, &ws.k3);
    core.axpy(h / 6.0, &ws.k4);
}

/// One hopping trajectory of the extended phase space.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub t: f64,
    pub surface: Surface,
    pub hop_times: Vec<f64>,
    pub(crate) core: Core,
    initial_amplitude: Complex,
    amplitude: Complex,
    det_arg_raw: f64,
    det_arg_unwrapped: f64,
}

impl TrajectoryState {
    /// Fresh trajectory at t = 0 on surface 0: S = 0, dqQ = dpP = I,
    /// dqP = dpQ = 0 (so det Z = 2^d and the amplitude factor is 1), with
    /// the supplied initial amplitude A_0.
    pub fn new(z: &PhaseSpacePoint, initial_amplitude: Complex) -> Self {
        Self {
            t: 0.0,
            surface: Surface::Zero,
            hop_times: Vec::new(),
            core: Core::initial(z),
            initial_amplitude,
            amplitude: initial_amplitude,
            det_arg_raw: 0.0,
            det_arg_unwrapped: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.core.q.len()
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.core.q
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.core.p
    }

    pub fn action(&self) -> f64 {
        self.core.action
    }

    /// dqQ in the row-vector convention (row index differentiates).
    pub fn jac_qq(&self) -> &DMatrix<f64> {
        &self.core.jqq
    }

    /// dqP
    pub fn jac_qp(&self) -> &DMatrix<f64> {
        &self.core.jqp
    }

    /// dpQ
    pub fn jac_pq(&self) -> &DMatrix<f64> {
        &self.core.jpq
    }

    /// dpP
    pub fn jac_pp(&self) -> &DMatrix<f64> {
        &self.core.jpp
    }

    pub fn hop_count(&self) -> usize {
        self.hop_times.len()
    }

    pub fn amplitude(&self) -> Complex {
        self.amplitude
    }

    pub fn initial_amplitude(&self) -> Complex {
        self.initial_amplitude
    }

    /// Branch-tracked sqrt(2^-d det Z), i.e. A_t / A_0.
    pub fn amplitude_factor(&self) -> Complex {
        if self.initial_amplitude.norm() > 0.0 {
            self.amplitude / self.initial_amplitude
        } else {
            self.amplitude
        }
    }

    pub fn det_z(&self) -> Complex {
        let d = self.dim();
        let mut z = DMatrix::<Complex>::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                z[(i, j)] = Complex::new(
                    self.core.jqq[(i, j)] + self.core.jpp[(i, j)],
                    self.core.jqp[(i, j)] - self.core.jpq[(i, j)],
                );
            }
        }
        z.determinant()
    }

    /// Max-norm defect of the symplectic identity dqQ dpP^T - dqP dpQ^T = I.
    pub fn symplectic_defect(&self) -> f64 {
        let d = self.dim();
        let mut m = &self.core.jqq * self.core.jpp.transpose();
        m -= &self.core.jqp * self.core.jpq.transpose();
        let mut defect: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((m[(i, j)] - want).abs());
            }
        }
        defect
    }

    /// Classical energy |P|^2/2 + V_l(Q) on the active surface.
    pub fn energy(&self, model: &DiabaticModel) -> f64 {
        0.5 * self.core.p.norm_squared() + model.value(self.surface, &self.core.q)
    }

    pub fn phase_point(&self) -> PhaseSpacePoint {
        PhaseSpacePoint::new(self.core.q.clone(), self.core.p.clone())
    }

    /// Recomputes the amplitude from det Z, continuing the branch of the
    /// square root so that consecutive samples of arg(det Z) differ by < pi.
    pub(crate) fn refresh_amplitude(&mut self, threshold: f64) -> Result<(), TrajectoryError> {
        let det = self.det_z();
        let det_abs = det.norm();
        if det_abs < threshold {
            return Err(TrajectoryError::Caustic {
                t: self.t,
                det_abs,
                threshold,
            });
        }
        let w_abs = det_abs * 2f64.powi(-(self.dim() as i32));
        let raw = det.arg();
        let mut step = raw - self.det_arg_raw;
        while step > std::f64::consts::PI {
            step -= 2.0 * std::f64::consts::PI;
        }
        while step < -std::f64::consts::PI {
            step += 2.0 * std::f64::consts::PI;
        }
        self.det_arg_raw = raw;
        self.det_arg_unwrapped += step;
        let factor = Complex::from_polar(w_abs.sqrt(), 0.5 * self.det_arg_unwrapped);
        self.amplitude = self.initial_amplitude * factor;
        Ok(())
    }
}

/// Source of hop times for [`evolve`].
pub trait HopSchedule {
    /// Next hop strictly after time `t`, or None when no further hop occurs.
    fn next_hop(&mut self, t: f64) -> Option<f64>;
}

/// Markov jump process with the constant rate delta / epsilon: waiting times
/// are i.i.d. exponentials.
pub struct ExponentialHops<R: Rng> {
    rate: f64,
    rng: R,
}

impl<R: Rng> ExponentialHops<R> {
    pub fn new(rate: f64, rng: R) -> Self {
        assert!(rate >= 0.0);
        Self { rate, rng }
    }

    pub fn for_model(model: &DiabaticModel, rng: R) -> Self {
        Self::new(model.hop_rate(), rng)
    }
}

impl<R: Rng> HopSchedule for ExponentialHops<R> {
    fn next_hop(&mut self, t: f64) -> Option<f64> {
        if self.rate <= 0.0 {
            return None;
        }
        let waiting = Exp::new(self.rate).unwrap().sample(&mut self.rng);
        Some(t + waiting)
    }
}

/// Preset hop times, used by the deterministic single-hop quadrature and by
/// finite-difference probes of the flow.
pub struct FixedHops {
    times: Vec<f64>,
    cursor: usize,
}

impl FixedHops {
    pub fn new(times: &[f64]) -> Self {
        let times = times.to_vec();
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Self { times, cursor: 0 }
    }
}

impl HopSchedule for FixedHops {
    fn next_hop(&mut self, t: f64) -> Option<f64> {
        while self.cursor < self.times.len() && self.times[self.cursor] <= t {
            self.cursor += 1;
        }
        self.times.get(self.cursor).copied()
    }
}

/// Exponential waiting time until the next hop at rate delta / epsilon.
pub fn sample_hop_time<R: Rng>(rng: &mut R, delta: f64, epsilon: f64) -> f64 {
    assert!(delta > 0.0 && epsilon > 0.0);
    Exp::new(delta / epsilon).unwrap().sample(rng)
}

/// Flips the surface index and records the hop time; Q, P, S, the Jacobian
/// blocks, and the amplitude are continuous across the hop.
pub fn apply_hop(state: &mut TrajectoryState) {
    state.surface = state.surface.other();
    state.hop_times.push(state.t);
}

fn integrate_segment(
    state: &mut TrajectoryState,
    model: &DiabaticModel,
    target: f64,
    opts: &IntegratorOptions,
    ws: &mut Workspace,
    record: &mut impl FnMut(&TrajectoryState),
) -> Result<(), TrajectoryError> {
    let start = state.t;
    let len = target - start;
    if len <= 0.0 {
        return Ok(());
    }
    let n = match opts.mode {
        StepMode::MaxStep(dt) => ((len / dt).ceil() as usize).max(1),
        StepMode::FixedCount(n) => n.max(1),
    };
    let h = len / n as f64;
    for i in 1..=n {
        rk4_step(&mut state.core, model, state.surface, h, ws);
        state.t = if i == n {
            target
        } else {
            start + h * i as f64
        };
        state.refresh_amplitude(opts.caustic_threshold)?;
        record(state);
    }
    Ok(())
}

fn evolve_impl<S: HopSchedule>(
    mut state: TrajectoryState,
    model: &DiabaticModel,
    t_final: f64,
    schedule: &mut S,
    opts: &IntegratorOptions,
    record: &mut impl FnMut(&TrajectoryState),
) -> Result<TrajectoryState, TrajectoryError> {
    if t_final < state.t {
        return Err(TrajectoryError::BadTimeRange {
            t: state.t,
            t_final,
        });
    }
    let mut ws = Workspace::new(state.dim());
    let mut pending = schedule.next_hop(state.t);
    loop {
        if let Some(hop) = pending {
            if hop <= state.t {
                return Err(TrajectoryError::BadHopTime { t: state.t, hop });
            }
            if hop <= t_final {
                integrate_segment(&mut state, model, hop, opts, &mut ws, record)?;
                apply_hop(&mut state);
                record(&state);
                pending = schedule.next_hop(state.t);
                continue;
            }
        }
        integrate_segment(&mut state, model, t_final, opts, &mut ws, record)?;
        return Ok(state);
    }
}

/// Alternates deterministic flow and hops up to `t_final`. The integration
/// lands exactly on every hop time; results are a deterministic function of
/// (initial state, schedule, model, options).
pub fn evolve<S: HopSchedule>(
    state: TrajectoryState,
    model: &DiabaticModel,
    t_final: f64,
    schedule: &mut S,
    opts: &IntegratorOptions,
) -> Result<TrajectoryState, TrajectoryError> {
    evolve_impl(state, model, t_final, schedule, opts, &mut |_| {})
}

/// Like [`evolve`] but records the state after every accepted step and hop
/// (hops appear as a second entry at the same time with the surface flipped).
pub fn evolve_dense<S: HopSchedule>(
    state: TrajectoryState,
    model: &DiabaticModel,
    t_final: f64,
    schedule: &mut S,
    opts: &IntegratorOptions,
) -> Result<Vec<TrajectoryState>, TrajectoryError> {
    let mut history = vec![state.clone()];
    let final_state = evolve_impl(state, model, t_final, schedule, opts, &mut |s| {
        history.push(s.clone())
    })?;
    let _ = &final_state;
    Ok(history)
}

/// Endpoint of the reduced flow (Q, P, S) without Jacobian blocks.
#[derive(Debug, Clone)]
pub struct FlowPoint {
    pub t: f64,
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub action: f64,
    pub surface: Surface,
}

struct LeanWorkspace {
    k: [(DVector<f64>, DVector<f64>, f64); 4],
    stage_q: DVector<f64>,
    stage_p: DVector<f64>,
    grad: DVector<f64>,
}

fn lean_rhs(
    q: &DVector<f64>,
    p: &DVector<f64>,
    model: &DiabaticModel,
    surface: Surface,
    grad: &mut DVector<f64>,
) -> f64 {
    model.gradient_into(surface, q, grad);
    0.5 * p.norm_squared() - model.value(surface, q)
}

/// Integrates (Q, P, S) through the given hop times with a fixed number of
/// RK4 steps per segment, so the endpoint is a smooth function of the hop
/// times and of z0. Used by the stationary-phase finite differences.
pub fn classical_flow(
    model: &DiabaticModel,
    z0: &PhaseSpacePoint,
    hop_times: &[f64],
    t_final: f64,
    steps_per_segment: usize,
) -> FlowPoint {
    let mut on_node = |_: &FlowPoint| {};
    classical_flow_recorded(model, z0, hop_times, t_final, steps_per_segment, &mut on_node)
}

/// Same as [`classical_flow`], invoking the callback at every step endpoint.
pub fn classical_flow_recorded(
    model: &DiabaticModel,
    z0: &PhaseSpacePoint,
    hop_times: &[f64],
    t_final: f64,
    steps_per_segment: usize,
    on_node: &mut impl FnMut(&FlowPoint),
) -> FlowPoint {
    debug_assert!(hop_times.windows(2).all(|w| w[0] < w[1]));
    debug_assert!(hop_times.iter().all(|&h| h > 0.0 && h <= t_final));
    let d = z0.dim();
    let mut ws = LeanWorkspace {
        k: std::array::from_fn(|_| (DVector::zeros(d), DVector::zeros(d), 0.0)),
        stage_q: DVector::zeros(d),
        stage_p: DVector::zeros(d),
        grad: DVector::zeros(d),
    };
    let mut point = FlowPoint {
        t: 0.0,
        q: z0.q.clone(),
        p: z0.p.clone(),
        action: 0.0,
        surface: Surface::Zero,
    };
    on_node(&point);

    let n = steps_per_segment.max(1);
    let mut boundaries: Vec<f64> = hop_times.to_vec();
    boundaries.push(t_final);
    for (seg, &target) in boundaries.iter().enumerate() {
        let start = point.t;
        let len = target - start;
        if len > 0.0 {
            let h = len / n as f64;
            for i in 1..=n {
                // RK4 on (q, p, s)
                for stage in 0..4 {
                    let (coef, prev) = match stage {
                        0 => (0.0, 0),
                        1 => (0.5 * h, 0),
                        2 => (0.5 * h, 1),
                        _ => (h, 2),
                    };
                    ws.stage_q.copy_from(&point.q);
                    ws.stage_p.copy_from(&point.p);
                    if stage > 0 {
                        ws.stage_q.axpy(coef, &ws.k[prev].0, 1.0);
                        ws.stage_p.axpy(coef, &ws.k[prev].1, 1.0);
                    }
                    let ds = lean_rhs(&ws.stage_q, &ws.stage_p, model, point.surface, &mut ws.grad);
                    // dq = p_stage, dp = -grad
                    let (kq, kp, ks) = &mut ws.k[stage];
                    kq.copy_from(&ws.stage_p);
                    kp.copy_from(&ws.grad);
                    kp.neg_mut();
                    *ks = ds;
                }
                for (stage, weight) in [(0, h / 6.0), (1, h / 3.0), (2, h / 3.0), (3, h / 6.0)] {
                    point.q.axpy(weight, &ws.k[stage].0, 1.0);
                    point.p.axpy(weight, &ws.k[stage].1, 1.0);
                    point.action += weight * ws.k[stage].2;
                }
                point.t = if i == n {
                    target
                } else {
                    start + h * i as f64
                };
                on_node(&point);
            }
        }
        if seg < hop_times.len() {
            point.surface = point.surface.other();
            on_node(&point);
        }
    }
    point
}

/// Integrates the direct amplitude ODE
/// dA/dt = A/2 tr(Z^-1 (dqP - i dpP - i dqQ hessV - dpQ hessV))
/// along a dense history and returns the maximum relative deviation from the
/// Jacobian-determinant amplitude stored in the history. Cross-validation
/// diagnostic, not a production path.
pub fn amplitude_ode_check(history: &[TrajectoryState], model: &DiabaticModel) -> f64 {
    assert!(!history.is_empty());
    let d = history[0].dim();
    let mut hess = DMatrix::zeros(d, d);

    let mu = |state: &TrajectoryState, hess: &mut DMatrix<f64>| -> Complex {
        model.hessian_into(state.surface, &state.core.q, hess);
        let jqq_h = &state.core.jqq * &*hess;
        let jpq_h = &state.core.jpq * &*hess;
        let mut z = DMatrix::<Complex>::zeros(d, d);
        let mut m = DMatrix::<Complex>::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                z[(i, j)] = Complex::new(
                    state.core.jqq[(i, j)] + state.core.jpp[(i, j)],
                    state.core.jqp[(i, j)] - state.core.jpq[(i, j)],
                );
                m[(i, j)] = Complex::new(
                    state.core.jqp[(i, j)] - jpq_h[(i, j)],
                    -(state.core.jpp[(i, j)] + jqq_h[(i, j)]),
                );
            }
        }
        let z_inv = z.try_inverse().expect("det Z must stay non-singular");
        0.5 * (z_inv * m).diagonal().sum()
    };

    let a0 = history[0].amplitude();
    let mut log_factor = Complex::new(0.0, 0.0);
    let mut max_dev: f64 = 0.0;

    // segments are maximal runs of strictly increasing time; hops duplicate t
    let mut seg_start = 0;
    while seg_start < history.len() {
        let mut seg_end = seg_start;
        while seg_end + 1 < history.len() && history[seg_end + 1].t > history[seg_end].t {
            seg_end += 1;
        }
        let n = seg_end - seg_start;
        if n >= 1 {
            let h = (history[seg_end].t - history[seg_start].t) / n as f64;
            let values: Vec<Complex> = history[seg_start..=seg_end]
                .iter()
                .map(|s| mu(s, &mut hess))
                .collect();
            for k in 0..n {
                // cumulative quadratic (three-point) rule, O(h^4) per interval
                let inc = if n == 1 {
                    0.5 * h * (values[0] + values[1])
                } else if k + 2 <= n {
                    h / 12.0 * (5.0 * values[k] + 8.0 * values[k + 1] - values[k + 2])
                } else {
                    h / 12.0 * (-values[k - 1] + 8.0 * values[k] + 5.0 * values[k + 1])
                };
                log_factor += inc;
                let a_ode = a0 * log_factor.exp();
                let a_jac = history[seg_start + k + 1].amplitude();
                if a_jac.norm() > 0.0 {
                    max_dev = max_dev.max((a_ode - a_jac).norm() / a_jac.norm());
                }
            }
        }
        // skip the duplicated post-hop entry, continuing the accumulated log
        seg_start = seg_end + 1;
        while seg_start < history.len() && history[seg_start].t == history[seg_start - 1].t {
            seg_start += 1;
        }
    }
    max_dev
}
