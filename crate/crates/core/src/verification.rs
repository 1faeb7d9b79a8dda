//! Closed-form oracle for the named map families, per-step diagnostics,
//! convergence-order estimation and run summaries.
//!
//! The oracle differentiates each family by hand (chain rule) and inverts the
//! metric with its own cofactor routine, so nothing here goes through the
//! finite-difference or linear-algebra code it is used to check.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{Evaluation, FlowState};
use crate::geometry::{area, jacobian2, max_speed, projection_jacobian, two_dilation};
use crate::grid::StencilOrder;
use crate::maps::MapFamily;

/// Per-step scalar invariants of a flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: u64,
    pub dt: f64,
    pub area: f64,
    pub min_j: f64,
    pub max_speed: f64,
    /// Extremes of `det df`, present only when `n = m = 2`.
    pub min_det2: Option<f64>,
    pub max_det2: Option<f64>,
    pub max_two_dilation: f64,
    pub max_grad: f64,
}

pub(crate) fn record_from(state: &FlowState, eval: &Evaluation) -> DiagnosticsRecord {
    let (min_det2, max_det2) = match jacobian2(&eval.jet) {
        Ok(d) => (Some(d.min()), Some(d.max())),
        Err(_) => (None, None),
    };
    DiagnosticsRecord {
        t: state.t,
        step: state.step,
        dt: state.dt,
        area: area(&eval.metric),
        min_j: projection_jacobian(&eval.metric).min(),
        max_speed: max_speed(&state.last_velocity),
        min_det2,
        max_det2,
        max_two_dilation: two_dilation(&eval.metric).max(),
        max_grad: eval.metric.max_gradient(),
    }
}

/// Diagnostics of `state` from a single jet and metric evaluation.
pub fn record(state: &FlowState, order: StencilOrder) -> Result<DiagnosticsRecord> {
    let eval = Evaluation::of(&state.map, order)?;
    Ok(record_from(state, &eval))
}

/// Exact value and derivatives of a map at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticJet {
    pub n: usize,
    pub m: usize,
    pub value: Vec<f64>,
    /// Row-major `m x n`.
    pub d: Vec<f64>,
    /// `d2[(a * n + i) * n + j]`.
    pub d2: Vec<f64>,
}

impl AnalyticJet {
    fn zeros(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            value: vec![0.0; m],
            d: vec![0.0; m * n],
            d2: vec![0.0; m * n * n],
        }
    }

    pub fn d(&self, a: usize, i: usize) -> f64 {
        self.d[a * self.n + i]
    }

    pub fn d2(&self, a: usize, i: usize, j: usize) -> f64 {
        self.d2[(a * self.n + i) * self.n + j]
    }

    fn set_d2(&mut self, a: usize, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.d2[(a * n + i) * n + j] = v;
        self.d2[(a * n + j) * n + i] = v;
    }
}

/// A closed-form map family evaluated off the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticMap {
    pub family: MapFamily,
}

impl AnalyticMap {
    pub fn new(family: MapFamily) -> Self {
        Self { family }
    }
}

/// Exact jet of `map` at `point` by hand-derived chain rule.
pub fn analytic_jet(map: &AnalyticMap, point: &[f64]) -> Result<AnalyticJet> {
    let n = point.len();
    if n == 0 || n > 3 {
        return Err(Error::DimensionMismatch(format!("point of length {n}")));
    }
    match &map.family {
        MapFamily::Identity => {
            let mut j = AnalyticJet::zeros(n, n);
            for (i, &x) in point.iter().enumerate() {
                j.value[i] = x;
                j.d[i * n + i] = 1.0;
            }
            Ok(j)
        }
        MapFamily::Linear { winding } => {
            let m = map.family.target_dim(n)?;
            let mut j = AnalyticJet::zeros(n, m);
            j.d.copy_from_slice(winding);
            for a in 0..m {
                j.value[a] = (0..n).map(|i| winding[a * n + i] * point[i]).sum();
            }
            Ok(j)
        }
        &MapFamily::ShearComposition { eps, delta, k1, k2 } => {
            if n != 2 {
                return Err(Error::DimensionMismatch(
                    "shear composition needs n = 2".into(),
                ));
            }
            let (x, y) = (point[0], point[1]);
            let (k1, k2) = (k1 as f64, k2 as f64);
            let mut j = AnalyticJet::zeros(2, 2);
            // first shear: f1 = x + eps sin(k2 y) = s
            let s = x + eps * (k2 * y).sin();
            let s_y = eps * k2 * (k2 * y).cos();
            let s_yy = -eps * k2 * k2 * (k2 * y).sin();
            j.value[0] = s;
            j.d[0] = 1.0;
            j.d[1] = s_y;
            j.set_d2(0, 1, 1, s_yy);
            // second shear: f2 = y + delta sin(k1 s)
            let (sn, cs) = (k1 * s).sin_cos();
            j.value[1] = y + delta * sn;
            j.d[2] = delta * k1 * cs;
            j.d[3] = 1.0 + delta * k1 * cs * s_y;
            j.set_d2(1, 0, 0, -delta * k1 * k1 * sn);
            j.set_d2(1, 0, 1, -delta * k1 * k1 * sn * s_y);
            j.set_d2(
                1,
                1,
                1,
                -delta * k1 * k1 * sn * s_y * s_y + delta * k1 * cs * s_yy,
            );
            Ok(j)
        }
        MapFamily::ProductSine {
            amplitudes,
            wavevectors,
            phases,
        } => {
            let m = amplitudes.len();
            let mut j = AnalyticJet::zeros(n, m);
            for a in 0..m {
                let k = &wavevectors[a];
                if k.len() != n {
                    return Err(Error::DimensionMismatch("wavevector length".into()));
                }
                let arg: f64 = k
                    .iter()
                    .zip(point)
                    .map(|(&ki, xi)| ki as f64 * xi)
                    .sum::<f64>()
                    + phases[a];
                let (sn, cs) = arg.sin_cos();
                let amp = amplitudes[a];
                j.value[a] = amp * sn;
                for i in 0..n {
                    j.d[a * n + i] = amp * k[i] as f64 * cs;
                    for l in i..n {
                        j.set_d2(a, i, l, -amp * (k[i] * k[l]) as f64 * sn);
                    }
                }
            }
            Ok(j)
        }
        MapFamily::ScalarBump {
            amplitude,
            wavenumbers,
        } => {
            if wavenumbers.len() != n {
                return Err(Error::DimensionMismatch("wavenumber length".into()));
            }
            let k: Vec<f64> = wavenumbers.iter().map(|&v| v as f64).collect();
            let sines: Vec<f64> = (0..n).map(|i| (k[i] * point[i]).sin()).collect();
            let cosines: Vec<f64> = (0..n).map(|i| k[i] * (k[i] * point[i]).cos()).collect();
            // product of factor_i(l) over l, where factor_i picks a derivative per axis
            let prod = |pick: &dyn Fn(usize) -> f64| (0..n).map(pick).product::<f64>();
            let mut j = AnalyticJet::zeros(n, 1);
            j.value[0] = amplitude * prod(&|l| sines[l]);
            for (i, &ki) in k.iter().enumerate() {
                j.d[i] = amplitude * prod(&|l| if l == i { cosines[l] } else { sines[l] });
                for q in i..n {
                    let v = if q == i {
                        -amplitude * ki * ki * prod(&|l| sines[l])
                    } else {
                        amplitude
                            * prod(&|l| {
                                if l == i || l == q {
                                    cosines[l]
                                } else {
                                    sines[l]
                                }
                            })
                    };
                    j.set_d2(0, i, q, v);
                }
            }
            Ok(j)
        }
    }
}

fn oracle_det(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0],
        _ => (0..n)
            .map(|c| {
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[c] * oracle_det(&minor(a, n, 0, c), n - 1)
            })
            .sum(),
    }
}

fn minor(a: &[f64], n: usize, row: usize, col: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((n - 1) * (n - 1));
    for i in (0..n).filter(|&i| i != row) {
        for j in (0..n).filter(|&j| j != col) {
            out.push(a[i * n + j]);
        }
    }
    out
}

/// Cofactor inverse of the exact metric.
fn oracle_inverse(a: &[f64], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0 / a[0]];
    }
    let det = oracle_det(a, n);
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            inv[j * n + i] = sign * oracle_det(&minor(a, n, i, j), n - 1) / det;
        }
    }
    inv
}

/// Exact metric `I + D^T D` of an analytic jet, row-major.
pub fn reference_metric(jet: &AnalyticJet) -> Vec<f64> {
    let n = jet.n;
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = if i == j { 1.0 } else { 0.0 }
                + (0..jet.m).map(|a| jet.d(a, i) * jet.d(a, j)).sum::<f64>();
        }
    }
    g
}

/// Exact flow velocity `g^{ij} d_i d_j f^a` at `point`.
pub fn reference_velocity(map: &AnalyticMap, point: &[f64]) -> Result<Vec<f64>> {
    let jet = analytic_jet(map, point)?;
    let n = jet.n;
    let ginv = oracle_inverse(&reference_metric(&jet), n);
    Ok((0..jet.m)
        .map(|a| {
            (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| ginv[i * n + j] * jet.d2(a, i, j))
                .sum()
        })
        .collect())
}

/// Exact `div(grad f / W)`, `W = sqrt(1 + |grad f|^2)`, expanded by the
/// product rule as `lap f / W - f_i f_j f_ij / W^3`.
pub fn reference_div_form(map: &AnalyticMap, point: &[f64]) -> Result<f64> {
    let jet = analytic_jet(map, point)?;
    if jet.m != 1 {
        return Err(Error::DimensionMismatch(
            "divergence form needs m = 1".into(),
        ));
    }
    let n = jet.n;
    let grad2: f64 = (0..n).map(|i| jet.d(0, i).powi(2)).sum();
    let w = (1.0 + grad2).sqrt();
    let lap: f64 = (0..n).map(|i| jet.d2(0, i, i)).sum();
    let hess_grad: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| jet.d(0, i) * jet.d(0, j) * jet.d2(0, i, j))
        .sum();
    Ok(lap / w - hess_grad / (w * w * w))
}

/// Exact `1 / sqrt(1 + |grad f|^2)` for a scalar map.
pub fn reference_j1(map: &AnalyticMap, point: &[f64]) -> Result<f64> {
    let jet = analytic_jet(map, point)?;
    if jet.m != 1 {
        return Err(Error::DimensionMismatch("J1 needs m = 1".into()));
    }
    let grad2: f64 = (0..jet.n).map(|i| jet.d(0, i).powi(2)).sum();
    Ok(1.0 / (1.0 + grad2).sqrt())
}

/// Errors below this are treated as exact zeros.
pub const EXACT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum OrderEstimate {
    /// Zero error at every level.
    Exact,
    Observed {
        order: f64,
        /// `(N, error)` per level.
        errors: Vec<(usize, f64)>,
    },
}

impl OrderEstimate {
    pub fn order(&self) -> Option<f64> {
        match self {
            OrderEstimate::Exact => None,
            OrderEstimate::Observed { order, .. } => Some(*order),
        }
    }
}

/// Mean of `log2(e_N / e_2N)` over consecutive resolutions.
pub fn observed_order(
    mut error_at: impl FnMut(usize) -> Result<f64>,
    resolutions: &[usize],
) -> Result<OrderEstimate> {
    if resolutions.len() < 3 {
        return Err(Error::InvalidParameter(
            "order estimation needs at least 3 resolutions".into(),
        ));
    }
    if resolutions.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidParameter(format!(
            "resolutions must double: {resolutions:?}"
        )));
    }
    let errors: Vec<(usize, f64)> = resolutions
        .iter()
        .map(|&n| error_at(n).map(|e| (n, e)))
        .collect::<Result<_>>()?;
    if errors.iter().all(|&(_, e)| e <= EXACT_FLOOR) {
        return Ok(OrderEstimate::Exact);
    }
    if let Some(&(n, e)) = errors[..errors.len() - 1]
        .iter()
        .find(|&&(_, e)| e <= EXACT_FLOOR)
    {
        return Err(Error::OrderUndefined(format!(
            "error {e:e} at N = {n} is zero but finer levels are not"
        )));
    }
    let logs: Vec<f64> = errors
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).log2())
        .collect();
    let order = logs.iter().sum::<f64>() / logs.len() as f64;
    Ok(OrderEstimate::Observed { order, errors })
}

/// Count and worst size of one kind of monotonicity violation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Violations {
    pub count: usize,
    pub worst: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportTolerances {
    /// Allowed area increase between recorded steps.
    pub area: f64,
    /// Allowed decrease of min J between recorded steps.
    pub min_j: f64,
    /// Width of the `det df = 1` corridor.
    pub det: f64,
}

impl Default for ReportTolerances {
    fn default() -> Self {
        Self {
            area: 1e-10,
            min_j: 1e-8,
            det: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub records: usize,
    pub area_monotonicity: Violations,
    pub min_j_monotonicity: Violations,
    pub final_record: DiagnosticsRecord,
    /// Largest `|det df - 1|` over all records, when `n = m = 2`.
    pub max_det_deviation: Option<f64>,
    pub det_corridor_held: Option<bool>,
    pub max_two_dilation: f64,
    pub dilation_corridor_held: bool,
}

pub fn convergence_report(
    records: &[DiagnosticsRecord],
    tol: &ReportTolerances,
) -> Result<ConvergenceReport> {
    let last = records
        .last()
        .ok_or_else(|| Error::InvalidParameter("empty record list".into()))?;
    let mut area = Violations::default();
    let mut min_j = Violations::default();
    for w in records.windows(2) {
        let rise = w[1].area - w[0].area;
        if rise > tol.area {
            area.count += 1;
            area.worst = area.worst.max(rise);
        }
        let drop = w[0].min_j - w[1].min_j;
        if drop > tol.min_j {
            min_j.count += 1;
            min_j.worst = min_j.worst.max(drop);
        }
    }
    let max_det_deviation = records
        .iter()
        .map(|r| match (r.min_det2, r.max_det2) {
            (Some(lo), Some(hi)) => Some((lo - 1.0).abs().max((hi - 1.0).abs())),
            _ => None,
        })
        .collect::<Option<Vec<f64>>>()
        .map(|devs| devs.into_iter().fold(0.0, f64::max));
    let max_two_dilation = records
        .iter()
        .map(|r| r.max_two_dilation)
        .fold(0.0, f64::max);
    Ok(ConvergenceReport {
        records: records.len(),
        area_monotonicity: area,
        min_j_monotonicity: min_j,
        final_record: last.clone(),
        max_det_deviation,
        det_corridor_held: max_det_deviation.map(|d| d <= tol.det),
        max_two_dilation,
        dilation_corridor_held: records.iter().all(|r| r.max_two_dilation < 1.0),
    })
}
