//! Pointwise geometry of the graph of a map: induced metric, area, projection
//! Jacobian, singular values of `df`, 2-dilation, flow velocity and the two
//! forms of the minimal surface residual.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{diff1, diff2, integrate, GridSpec, ScalarField, StencilOrder, PAR_MIN_LEN};
use crate::linalg::{self, Mat3};
use crate::maps::MapField;

/// First and second derivatives of a map at every node.
///
/// `first[a * n + i]` holds `df^a/dx^i`, `second[(a * n + i) * n + j]` holds
/// `d2 f^a / dx^i dx^j`; the `(i, j)` and `(j, i)` entries are identical.
#[derive(Debug, Clone)]
pub struct JetField {
    grid: GridSpec,
    target_dim: usize,
    first: Vec<ScalarField>,
    second: Vec<ScalarField>,
}

impl JetField {
    /// Assembles a jet from component fields, checking layout and symmetry.
    pub fn from_parts(
        grid: GridSpec,
        target_dim: usize,
        first: Vec<ScalarField>,
        second: Vec<ScalarField>,
    ) -> Result<Self> {
        let n = grid.dim();
        if first.len() != target_dim * n || second.len() != target_dim * n * n {
            return Err(Error::DimensionMismatch(format!(
                "jet for m = {target_dim}, n = {n} needs {} first and {} second derivative fields",
                target_dim * n,
                target_dim * n * n
            )));
        }
        for f in first.iter().chain(&second) {
            if f.grid() != &grid {
                return Err(Error::DimensionMismatch(
                    "jet fields on different grids".into(),
                ));
            }
            if let Some(node) = f.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue { node });
            }
        }
        for a in 0..target_dim {
            for i in 0..n {
                for j in 0..i {
                    let ij = &second[(a * n + i) * n + j];
                    let ji = &second[(a * n + j) * n + i];
                    if ij.values() != ji.values() {
                        return Err(Error::InvalidParameter(format!(
                            "second derivative of component {a} not symmetric in ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            grid,
            target_dim,
            first,
            second,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn domain_dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    #[inline]
    pub fn d(&self, node: usize, alpha: usize, i: usize) -> f64 {
        self.first[alpha * self.grid.dim() + i].values()[node]
    }

    #[inline]
    pub fn d2(&self, node: usize, alpha: usize, i: usize, j: usize) -> f64 {
        let n = self.grid.dim();
        self.second[(alpha * n + i) * n + j].values()[node]
    }

    pub fn first(&self, alpha: usize, i: usize) -> &ScalarField {
        &self.first[alpha * self.grid.dim() + i]
    }

    /// Row-major `m x n` differential at a node.
    pub fn differential(&self, node: usize) -> Vec<f64> {
        let n = self.grid.dim();
        (0..self.target_dim * n)
            .map(|k| self.first[k].values()[node])
            .collect()
    }

    /// First non-finite entry as a node index.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.first
            .iter()
            .chain(&self.second)
            .find_map(|f| f.values().iter().position(|v| !v.is_finite()))
    }
}

/// Derivatives of `map`: winding plus periodic-part differences.
pub fn jet(map: &MapField, order: StencilOrder) -> Result<JetField> {
    let grid = *map.grid();
    let n = grid.dim();
    let m = map.target_dim();
    let mut first = Vec::with_capacity(m * n);
    let mut second = vec![None; m * n * n];
    for (alpha, u) in map.periodic_part().iter().enumerate() {
        let du: Vec<ScalarField> = (0..n).map(|i| diff1(u, i, order)).collect::<Result<_>>()?;
        for i in 0..n {
            second[(alpha * n + i) * n + i] = Some(diff2(u, i, i, order)?);
            for j in i + 1..n {
                // same composition diff2 uses: larger axis innermost
                let mixed = diff1(&du[j], i, order)?;
                second[(alpha * n + j) * n + i] = Some(mixed.clone());
                second[(alpha * n + i) * n + j] = Some(mixed);
            }
        }
        for (i, mut d) in du.into_iter().enumerate() {
            let w = map.winding().get(alpha, i);
            if w != 0.0 {
                d.values_mut().iter_mut().for_each(|v| *v += w);
            }
            first.push(d);
        }
    }
    Ok(JetField {
        grid,
        target_dim: m,
        first,
        second: second.into_iter().map(|s| s.expect("filled")).collect(),
    })
}

/// Induced metric and derived quantities at one node.
#[derive(Debug, Clone, Copy)]
pub struct NodeMetric {
    pub g: Mat3,
    pub ginv: Mat3,
    pub det: f64,
    pub sqrt_det: f64,
    /// Singular values of `df`, non-increasing; first `min(n, m)` are used.
    pub sigma: [f64; 3],
    /// Largest eigenvalue of `ginv`.
    pub ginv_max_eig: f64,
}

/// Induced metric `g = I + D^T D` of the graph at every node.
#[derive(Debug, Clone)]
pub struct MetricField {
    grid: GridSpec,
    target_dim: usize,
    nodes: Vec<NodeMetric>,
}

impl MetricField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn domain_dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    /// Number of singular values stored per node, `min(n, m)`.
    pub fn rank_bound(&self) -> usize {
        self.grid.dim().min(self.target_dim)
    }

    pub fn node(&self, node: usize) -> &NodeMetric {
        &self.nodes[node]
    }

    pub fn nodes(&self) -> &[NodeMetric] {
        &self.nodes
    }

    pub fn g(&self, node: usize, i: usize, j: usize) -> f64 {
        linalg::at(&self.nodes[node].g, self.grid.dim(), i, j)
    }

    pub fn ginv(&self, node: usize, i: usize, j: usize) -> f64 {
        linalg::at(&self.nodes[node].ginv, self.grid.dim(), i, j)
    }

    pub fn sigma(&self, node: usize) -> &[f64] {
        &self.nodes[node].sigma[..self.rank_bound()]
    }

    pub fn sqrt_det(&self) -> ScalarField {
        self.scalar(|m| m.sqrt_det)
    }

    fn scalar(&self, f: impl Fn(&NodeMetric) -> f64) -> ScalarField {
        ScalarField::from_raw(self.grid, self.nodes.iter().map(f).collect())
    }

    /// Largest eigenvalue of `ginv` over all nodes; at most 1.
    pub fn max_ginv_eigenvalue(&self) -> f64 {
        self.nodes.iter().fold(0.0, |m, p| m.max(p.ginv_max_eig))
    }

    /// Largest singular value of `df` over all nodes.
    pub fn max_gradient(&self) -> f64 {
        self.nodes.iter().fold(0.0, |m, p| m.max(p.sigma[0]))
    }
}

fn node_metric(jet: &JetField, node: usize) -> NodeMetric {
    let n = jet.domain_dim();
    let m = jet.target_dim();
    let mut dtd: Mat3 = [0.0; 9];
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..m).map(|a| jet.d(node, a, i) * jet.d(node, a, j)).sum();
            dtd[i * n + j] = s;
            dtd[j * n + i] = s;
        }
    }
    let mut g = dtd;
    for i in 0..n {
        g[i * n + i] += 1.0;
    }
    let ginv = linalg::inverse(&g, n);
    let det = linalg::det(&g, n);
    let mu = linalg::psd_eigenvalues(&dtd, n);
    let rank = n.min(m);
    let mut sigma = [0.0; 3];
    for k in 0..rank {
        sigma[k] = mu[k].sqrt();
    }
    let mu_min = if m < n { 0.0 } else { mu[n - 1] };
    NodeMetric {
        g,
        ginv,
        det,
        sqrt_det: det.sqrt(),
        sigma,
        ginv_max_eig: 1.0 / (1.0 + mu_min),
    }
}

pub fn induced_metric(jet: &JetField) -> MetricField {
    let nodes = (0..jet.grid.len())
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|k| node_metric(jet, k))
        .collect();
    MetricField {
        grid: jet.grid,
        target_dim: jet.target_dim,
        nodes,
    }
}

/// Volume of the graph, `integral of sqrt(det g)`.
pub fn area(metric: &MetricField) -> f64 {
    integrate(&metric.sqrt_det())
}

/// `(det g)^(-1/2)`, the Jacobian of projecting the graph onto the domain.
pub fn projection_jacobian(metric: &MetricField) -> ScalarField {
    metric.scalar(|m| 1.0 / m.sqrt_det)
}

/// `f_x g_y - f_y g_x` for maps of the 2-torus into a 2-dimensional target.
pub fn jacobian2(jet: &JetField) -> Result<ScalarField> {
    if jet.domain_dim() != 2 || jet.target_dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "jacobian2 needs n = m = 2, got n = {}, m = {}",
            jet.domain_dim(),
            jet.target_dim()
        )));
    }
    let v = (0..jet.grid.len())
        .map(|k| jet.d(k, 0, 0) * jet.d(k, 1, 1) - jet.d(k, 0, 1) * jet.d(k, 1, 0))
        .collect();
    Ok(ScalarField::from_raw(jet.grid, v))
}

/// Product of the two largest singular values; zero when `min(n, m) < 2`.
pub fn two_dilation(metric: &MetricField) -> ScalarField {
    if metric.rank_bound() < 2 {
        return ScalarField::constant(metric.grid, 0.0);
    }
    metric.scalar(|m| m.sigma[0] * m.sigma[1])
}

/// Flow velocity `v^a = g^{ij} d_i d_j f^a`, one field per component.
pub fn velocity(jet: &JetField, metric: &MetricField) -> Vec<ScalarField> {
    let n = jet.domain_dim();
    (0..jet.target_dim())
        .map(|a| {
            let d2: Vec<&[f64]> = (0..n * n)
                .map(|ij| jet.second[a * n * n + ij].values())
                .collect();
            let v = metric
                .nodes
                .par_iter()
                .enumerate()
                .with_min_len(PAR_MIN_LEN)
                .map(|(k, node)| {
                    let mut s = 0.0;
                    for (ij, f) in d2.iter().enumerate() {
                        s += node.ginv[ij] * f[k];
                    }
                    s
                })
                .collect();
            ScalarField::from_raw(jet.grid, v)
        })
        .collect()
}

/// Sup norm of the velocity over nodes and components.
pub fn max_speed(velocity: &[ScalarField]) -> f64 {
    velocity
        .iter()
        .map(ScalarField::max_abs)
        .fold(0.0, f64::max)
}

/// Sup-norm residual of the minimal surface system.
pub fn mss_residual(map: &MapField, order: StencilOrder) -> Result<f64> {
    let jet = jet(map, order)?;
    let metric = induced_metric(&jet);
    Ok(max_speed(&velocity(&jet, &metric)))
}

fn require_scalar(m: usize, what: &str) -> Result<()> {
    if m == 1 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} is defined for scalar maps, got m = {m}"
        )))
    }
}

/// `1 / sqrt(1 + |grad f|^2)` for scalar maps.
pub fn j1_field(jet: &JetField) -> Result<ScalarField> {
    require_scalar(jet.target_dim(), "j1_field")?;
    let n = jet.domain_dim();
    let v = (0..jet.grid.len())
        .map(|k| {
            let g2: f64 = (0..n).map(|i| jet.d(k, 0, i).powi(2)).sum();
            1.0 / (1.0 + g2).sqrt()
        })
        .collect();
    Ok(ScalarField::from_raw(jet.grid, v))
}

/// Discrete `div(grad f / sqrt(1 + |grad f|^2))` for scalar maps.
pub fn div_form_residual(map: &MapField, order: StencilOrder) -> Result<ScalarField> {
    require_scalar(map.target_dim(), "div_form_residual")?;
    let jet = jet(map, order)?;
    let j1 = j1_field(&jet)?;
    let grid = *map.grid();
    let mut total = vec![0.0; grid.len()];
    for i in 0..grid.dim() {
        let flux: Vec<f64> = jet
            .first(0, i)
            .values()
            .iter()
            .zip(j1.values())
            .map(|(d, j)| d * j)
            .collect();
        let div = diff1(&ScalarField::from_raw(grid, flux), i, order)?;
        total
            .iter_mut()
            .zip(div.values())
            .for_each(|(t, d)| *t += d);
    }
    Ok(ScalarField::from_raw(grid, total))
}
