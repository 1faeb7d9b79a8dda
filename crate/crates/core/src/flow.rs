//! Explicit time integration of the graphical mean curvature flow.
//!
//! Only the periodic part of the map is advanced; the winding has zero second
//! derivatives and is carried through every step unchanged.

use std::fmt;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geometry::{
    induced_metric, jacobian2, jet, max_speed, projection_jacobian, two_dilation, velocity,
    JetField, MetricField,
};
use crate::grid::{GridSpec, ScalarField, StencilOrder};
use crate::maps::MapField;
use crate::verification::{record_from, DiagnosticsRecord};

/// Name of the environment variable capping the data-parallel width.
pub const THREADS_ENV: &str = "GMCF_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Euler,
    Rk4,
}

impl Scheme {
    pub const NAMES: &'static [&'static str] = &["euler", "rk4"];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euler" => Some(Scheme::Euler),
            "rk4" => Some(Scheme::Rk4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtMode {
    Cfl { safety: f64 },
    Fixed { dt: f64 },
}

impl Default for DtMode {
    fn default() -> Self {
        DtMode::Cfl { safety: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GuardKind {
    #[default]
    None,
    /// `|det df - 1| <= preserve_tol` at every node.
    AreaPreserving { preserve_tol: f64 },
    /// `max two_dilation <= 1 - margin_floor`.
    AreaDecreasing { margin_floor: f64 },
}

impl GuardKind {
    pub const NAMES: &'static [&'static str] = &["none", "area_preserving", "area_decreasing"];

    pub fn name(&self) -> &'static str {
        match self {
            GuardKind::None => "none",
            GuardKind::AreaPreserving { .. } => "area_preserving",
            GuardKind::AreaDecreasing { .. } => "area_decreasing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardPolicy {
    pub kind: GuardKind,
    /// Smallest admissible projection Jacobian; the graph degenerates at 0.
    pub j_floor: f64,
}

impl Default for GuardPolicy {
    fn default() -> Self {
        Self {
            kind: GuardKind::None,
            j_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopKind {
    Converged,
    MaxTimeReached,
    InvariantBreach,
    NonFinite,
}

impl StopKind {
    pub fn name(self) -> &'static str {
        match self {
            StopKind::Converged => "Converged",
            StopKind::MaxTimeReached => "MaxTimeReached",
            StopKind::InvariantBreach => "InvariantBreach",
            StopKind::NonFinite => "NonFinite",
        }
    }

    /// Process exit code of the CLI for this outcome.
    pub fn exit_code(self) -> i32 {
        match self {
            StopKind::Converged => 0,
            StopKind::MaxTimeReached => 2,
            StopKind::InvariantBreach => 3,
            StopKind::NonFinite => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopStatus {
    pub kind: StopKind,
    pub step: u64,
    pub t: f64,
    pub detail: String,
}

impl fmt::Display for StopStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at step {} (t = {}): {}",
            self.kind.name(),
            self.step,
            self.t,
            self.detail
        )
    }
}

/// A failed guard check.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardFailure {
    pub kind: StopKind,
    pub node: Option<usize>,
    pub detail: String,
}

/// Evolving map with its current velocity.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub step: u64,
    pub map: MapField,
    /// Velocity of `map`, one field per target component.
    pub last_velocity: Vec<ScalarField>,
    /// Step size chosen for the next step (0 before the first choice).
    pub dt: f64,
}

impl FlowState {
    pub fn new(map: MapField, order: StencilOrder) -> Result<Self> {
        let eval = Evaluation::of(&map, order)?;
        Ok(Self::with_evaluation(map, &eval))
    }

    fn with_evaluation(map: MapField, eval: &Evaluation) -> Self {
        Self {
            t: 0.0,
            step: 0,
            map,
            last_velocity: eval.velocity.clone(),
            dt: 0.0,
        }
    }
}

/// Jet, metric and velocity of one map.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub jet: JetField,
    pub metric: MetricField,
    pub velocity: Vec<ScalarField>,
}

impl Evaluation {
    pub fn of(map: &MapField, order: StencilOrder) -> Result<Self> {
        let jet = jet(map, order)?;
        let metric = induced_metric(&jet);
        let velocity = velocity(&jet, &metric);
        Ok(Self {
            jet,
            metric,
            velocity,
        })
    }
}

/// Explicit stability limit `safety * min h^2 / (2 n max eig(g^-1))`.
pub fn cfl_dt(metric: &MetricField, grid: &GridSpec, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "CFL safety must lie in (0, 0.5], got {safety}"
        )));
    }
    let h = grid.min_spacing();
    let lambda = metric.max_ginv_eigenvalue();
    Ok(safety * h * h / (2.0 * grid.dim() as f64 * lambda))
}

fn axpy(base: &[ScalarField], dt: f64, dir: &[ScalarField]) -> Vec<Vec<f64>> {
    base.iter()
        .zip(dir)
        .map(|(u, v)| {
            u.values()
                .iter()
                .zip(v.values())
                .map(|(a, b)| a + dt * b)
                .collect()
        })
        .collect()
}

fn check_finite(map: &MapField) -> Result<()> {
    match map.first_non_finite() {
        Some((_, node)) => Err(Error::NonFiniteValue { node }),
        None => Ok(()),
    }
}

fn advance(
    state: &FlowState,
    k1: &[ScalarField],
    dt: f64,
    scheme: Scheme,
    order: StencilOrder,
) -> Result<(FlowState, Evaluation)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let u = state.map.periodic_part();
    let next = match scheme {
        Scheme::Euler => state.map.with_periodic_values(axpy(u, dt, k1)),
        Scheme::Rk4 => {
            let stage = |vals: Vec<Vec<f64>>| -> Result<Vec<ScalarField>> {
                let m = state.map.with_periodic_values(vals);
                check_finite(&m)?;
                Ok(Evaluation::of(&m, order)?.velocity)
            };
            let k2 = stage(axpy(u, 0.5 * dt, k1))?;
            let k3 = stage(axpy(u, 0.5 * dt, &k2))?;
            let k4 = stage(axpy(u, dt, &k3))?;
            let vals = (0..u.len())
                .map(|a| {
                    let (u, k1, k2, k3, k4) = (
                        u[a].values(),
                        k1[a].values(),
                        k2[a].values(),
                        k3[a].values(),
                        k4[a].values(),
                    );
                    (0..u.len())
                        .map(|k| u[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]))
                        .collect()
                })
                .collect();
            state.map.with_periodic_values(vals)
        }
    };
    check_finite(&next)?;
    let eval = Evaluation::of(&next, order)?;
    if let Some(node) = eval
        .jet
        .first_non_finite()
        .or_else(|| first_non_finite(&eval.velocity))
    {
        return Err(Error::NonFiniteValue { node });
    }
    let state = FlowState {
        t: state.t + dt,
        step: state.step + 1,
        map: next,
        last_velocity: eval.velocity.clone(),
        dt,
    };
    Ok((state, eval))
}

/// Advances the periodic part by one step of size `dt`.
pub fn step(state: &FlowState, dt: f64, scheme: Scheme, order: StencilOrder) -> Result<FlowState> {
    advance(state, &state.last_velocity, dt, scheme, order).map(|(s, _)| s)
}

/// Checks the policy against an already evaluated state.
// negated comparisons so that NaN fails the check
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn guard_with(
    state: &FlowState,
    eval: &Evaluation,
    policy: &GuardPolicy,
) -> std::result::Result<(), GuardFailure> {
    let non_finite = |node: usize, what: &str| GuardFailure {
        kind: StopKind::NonFinite,
        node: Some(node),
        detail: format!("non-finite {what} at node {node}"),
    };
    if let Some((alpha, node)) = state.map.first_non_finite() {
        return Err(non_finite(node, &format!("value of component {alpha}")));
    }
    if let Some(node) = eval.jet.first_non_finite() {
        return Err(non_finite(node, "derivative"));
    }
    if let Some(node) = first_non_finite(&eval.velocity) {
        return Err(non_finite(node, "velocity"));
    }

    let breach = |node: usize, detail: String| GuardFailure {
        kind: StopKind::InvariantBreach,
        node: Some(node),
        detail,
    };
    let j = projection_jacobian(&eval.metric);
    let (node, jmin) = arg_min(j.values());
    if !(jmin > policy.j_floor) {
        return Err(breach(
            node,
            format!(
                "projection Jacobian {jmin:e} <= floor {:e} at node {node}",
                policy.j_floor
            ),
        ));
    }
    match policy.kind {
        GuardKind::None => {}
        GuardKind::AreaPreserving { preserve_tol } => {
            let det = jacobian2(&eval.jet).map_err(|e| GuardFailure {
                kind: StopKind::InvariantBreach,
                node: None,
                detail: e.to_string(),
            })?;
            let dev: Vec<f64> = det.values().iter().map(|d| (d - 1.0).abs()).collect();
            let (node, worst) = arg_max(&dev);
            if worst > preserve_tol {
                return Err(breach(
                    node,
                    format!("|det df - 1| = {worst:e} > {preserve_tol:e} at node {node}"),
                ));
            }
        }
        GuardKind::AreaDecreasing { margin_floor } => {
            let dil = two_dilation(&eval.metric);
            let (node, worst) = arg_max(dil.values());
            if worst > 1.0 - margin_floor {
                return Err(breach(
                    node,
                    format!("two-dilation {worst} > 1 - {margin_floor:e} at node {node}"),
                ));
            }
        }
    }
    Ok(())
}

/// Evaluates `state` and checks it against `policy`.
pub fn guard(
    state: &FlowState,
    policy: &GuardPolicy,
    order: StencilOrder,
) -> std::result::Result<(), GuardFailure> {
    if let Some((alpha, node)) = state.map.first_non_finite() {
        return Err(GuardFailure {
            kind: StopKind::NonFinite,
            node: Some(node),
            detail: format!("non-finite value of component {alpha} at node {node}"),
        });
    }
    let eval = Evaluation::of(&state.map, order).map_err(|e| GuardFailure {
        kind: StopKind::NonFinite,
        node: None,
        detail: e.to_string(),
    })?;
    guard_with(state, &eval, policy)
}

fn first_non_finite(fields: &[ScalarField]) -> Option<usize> {
    fields
        .iter()
        .find_map(|v| v.values().iter().position(|x| !x.is_finite()))
}

fn arg_min(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold(
        (0, f64::INFINITY),
        |best, (k, x)| if x < best.1 { (k, x) } else { best },
    )
}

fn arg_max(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, x)| {
            if x > best.1 {
                (k, x)
            } else {
                best
            }
        })
}

/// Loop parameters of a run, independent of how the initial map was made.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub scheme: Scheme,
    pub stencil_order: StencilOrder,
    pub dt_mode: DtMode,
    pub t_max: f64,
    pub tol_converged: f64,
    pub guard: GuardPolicy,
    pub sample_every: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            scheme: Scheme::Euler,
            stencil_order: StencilOrder::Second,
            dt_mode: DtMode::default(),
            t_max: 100.0,
            tol_converged: 1e-8,
            guard: GuardPolicy::default(),
            sample_every: 10,
        }
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: FlowState,
    pub records: Vec<DiagnosticsRecord>,
    pub status: StopStatus,
}

/// Builds the initial map from `config` and integrates until a stop
/// condition, honouring `GMCF_THREADS`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let map = config.build_map()?;
    let settings = config.settings();
    with_thread_limit(|| {
        let mut records = Vec::new();
        let (state, status) = run_map(map, &settings, |r| records.push(r.clone()))?;
        Ok(RunOutcome {
            state,
            records,
            status,
        })
    })
}

/// Runs `f` on a pool sized by `GMCF_THREADS` when the variable is set.
pub fn with_thread_limit<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    match threads.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Integrates `map`, handing each sampled record to `sink` in step order.
///
/// Setup errors (bad settings, an initial map whose derivatives cannot be
/// formed) are returned as `Err`; everything that happens during the flow is
/// reported through the [`StopStatus`].
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn run_map(
    map: MapField,
    settings: &RunSettings,
    mut sink: impl FnMut(&DiagnosticsRecord),
) -> Result<(FlowState, StopStatus)> {
    if !(settings.t_max > 0.0) || !(settings.tol_converged > 0.0) || settings.sample_every == 0 {
        return Err(Error::InvalidConfig(
            "t_max, tol_converged and sample_every must be positive".into(),
        ));
    }
    if let DtMode::Fixed { dt } = settings.dt_mode {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "fixed dt must be positive, got {dt}"
            )));
        }
    }
    let order = settings.stencil_order;
    let grid = *map.grid();
    let mut eval = Evaluation::of(&map, order)?;
    let mut state = FlowState::with_evaluation(map, &eval);

    loop {
        state.dt = match settings.dt_mode {
            DtMode::Cfl { safety } => cfl_dt(&eval.metric, &grid, safety)?,
            DtMode::Fixed { dt } => dt,
        };
        let stop = |kind, detail: String, state: &FlowState| StopStatus {
            kind,
            step: state.step,
            t: state.t,
            detail,
        };

        if let Err(fail) = guard_with(&state, &eval, &settings.guard) {
            if fail.kind != StopKind::NonFinite {
                sink(&record_from(&state, &eval));
            }
            let status = stop(fail.kind, fail.detail, &state);
            return Ok((state, status));
        }

        let speed = max_speed(&eval.velocity);
        let converged = state.step > 0 && speed < settings.tol_converged;
        let time_up = state.t >= settings.t_max;
        if state.step.is_multiple_of(settings.sample_every) || converged || time_up {
            sink(&record_from(&state, &eval));
        }
        if converged {
            let detail = format!("max speed {speed:e} < {:e}", settings.tol_converged);
            let status = stop(StopKind::Converged, detail, &state);
            return Ok((state, status));
        }
        if time_up {
            let detail = format!(
                "t = {} >= t_max = {}; max speed {speed:e}",
                state.t, settings.t_max
            );
            let status = stop(StopKind::MaxTimeReached, detail, &state);
            return Ok((state, status));
        }

        match advance(&state, &eval.velocity, state.dt, settings.scheme, order) {
            Ok((next, next_eval)) => {
                state = next;
                eval = next_eval;
            }
            Err(Error::NonFiniteValue { node }) => {
                let detail = format!(
                    "non-finite value at node {node} while advancing from step {}",
                    state.step
                );
                let status = StopStatus {
                    kind: StopKind::NonFinite,
                    step: state.step + 1,
                    t: state.t + state.dt,
                    detail,
                };
                return Ok((state, status));
            }
            Err(e) => return Err(e),
        }
    }
}
