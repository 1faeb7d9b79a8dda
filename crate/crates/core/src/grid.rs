//! Uniform periodic grids, centered finite differences and quadrature.
//!
//! Nodes are stored row-major: the last axis varies fastest. Every field in
//! the crate uses this ordering, so fields built by different modules can be
//! compared element by element.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest supported domain dimension.
pub const MAX_DIM: usize = 3;

/// Smallest admissible per-axis node count.
pub const MIN_RESOLUTION: usize = 8;

/// Minimum number of nodes handed to one rayon task.
pub(crate) const PAR_MIN_LEN: usize = 1024;

/// Order of accuracy of the centered stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StencilOrder {
    #[default]
    Second,
    Fourth,
}

impl StencilOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            2 => Ok(Self::Second),
            4 => Ok(Self::Fourth),
            other => Err(Error::InvalidStencilOrder(other)),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Self::Second => 2,
            Self::Fourth => 4,
        }
    }
}

/// Uniform periodic tensor grid over `[0, L_1) x ... x [0, L_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    resolution: [usize; MAX_DIM],
    period: [f64; MAX_DIM],
}

impl GridSpec {
    pub fn new(resolution: &[usize], period: &[f64]) -> Result<Self> {
        let dim = resolution.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "domain dimension must be 1..={MAX_DIM}, got {dim}"
            )));
        }
        if period.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} periods given for a {dim}-dimensional grid",
                period.len()
            )));
        }
        let mut res = [1; MAX_DIM];
        let mut per = [1.0; MAX_DIM];
        let mut total: usize = 1;
        for axis in 0..dim {
            let n = resolution[axis];
            if n < MIN_RESOLUTION || !n.is_multiple_of(2) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: resolution must be even and >= {MIN_RESOLUTION}, got {n}"
                )));
            }
            let l = period[axis];
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: period must be positive and finite, got {l}"
                )));
            }
            total = total
                .checked_mul(n)
                .filter(|&t| t <= isize::MAX as usize / std::mem::size_of::<f64>())
                .ok_or_else(|| Error::InvalidGrid("total node count overflows".into()))?;
            res[axis] = n;
            per[axis] = l;
        }
        Ok(Self {
            dim,
            resolution: res,
            period: per,
        })
    }

    /// Grid with every period equal to 2π.
    pub fn standard(resolution: &[usize]) -> Result<Self> {
        Self::new(resolution, &vec![TAU; resolution.len()])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution[..self.dim]
    }

    pub fn period(&self) -> &[f64] {
        &self.period[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.period[axis] / self.resolution[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.resolution().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Product of the periods, the measure of the torus.
    pub fn volume(&self) -> f64 {
        self.period().iter().product()
    }

    /// Product of the spacings, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Flat-index distance between neighbours along `axis`.
    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.resolution[axis + 1..self.dim].iter().product()
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.dim {
            Ok(())
        } else {
            Err(Error::InvalidAxis {
                axis,
                dim: self.dim,
            })
        }
    }

    pub fn multi_index(&self, flat_index: usize) -> Result<[usize; MAX_DIM]> {
        if flat_index >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: flat_index,
                len: self.len(),
            });
        }
        let mut out = [0; MAX_DIM];
        let mut rest = flat_index;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.resolution[axis];
            rest /= self.resolution[axis];
        }
        Ok(out)
    }

    pub fn flat_index(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "multi-index of length {} on a {}-dimensional grid",
                multi.len(),
                self.dim
            )));
        }
        let mut flat = 0;
        for (axis, &i) in multi.iter().enumerate() {
            if i >= self.resolution[axis] {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.resolution[axis],
                });
            }
            flat = flat * self.resolution[axis] + i;
        }
        Ok(flat)
    }

    /// Coordinates `(i_1 h_1, ..., i_n h_n)` of a node.
    pub fn node_coordinates(&self, flat_index: usize) -> Result<[f64; MAX_DIM]> {
        let multi = self.multi_index(flat_index)?;
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = multi[axis] as f64 * self.spacing(axis);
        }
        Ok(x)
    }

    /// Flat index of the node closest to `point`, with periodic wraparound.
    pub fn nearest_index(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "point of length {} on a {}-dimensional grid",
                point.len(),
                self.dim
            )));
        }
        let mut multi = [0; MAX_DIM];
        for axis in 0..self.dim {
            let n = self.resolution[axis] as i64;
            let k = (point[axis] / self.spacing(axis)).round() as i64;
            multi[axis] = k.rem_euclid(n) as usize;
        }
        self.flat_index(&multi[..self.dim])
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { node });
        }
        Ok(Self { grid, values })
    }

    /// Wraps `values` without the finiteness check. Used internally where the
    /// caller reports non-finite values through a different channel.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64 + Sync + Send) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|k| {
                let x = grid.node_coordinates(k).expect("index in range");
                f(&x[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `sup |u - mean(u)|`.
    pub fn oscillation(&self) -> f64 {
        let mean = self.mean();
        self.values.iter().fold(0.0, |m, v| m.max((v - mean).abs()))
    }
}

/// Centered stencil along `axis` built from paired differences, so constants
/// map to exactly zero:
/// odd: `scale * sum_k w_k (u[i+k] - u[i-k])`,
/// even: `scale * sum_k w_k ((u[i+k] - u[i]) + (u[i-k] - u[i]))`, `k = 1, 2, ...`.
///
/// The field is swept in blocks of `N_axis * stride` contiguous values, each
/// holding every line along `axis` for one choice of the slower indices.
fn apply_stencil(
    field: &ScalarField,
    axis: usize,
    odd: bool,
    weights: &[f64],
    scale: f64,
) -> ScalarField {
    let grid = field.grid;
    let n = grid.resolution[axis];
    let stride = grid.stride(axis);
    let block = n * stride;
    let wrap = |i: usize, k: isize| (i as isize + k).rem_euclid(n as isize) as usize;
    let pair = |c: f64, p: f64, m: f64| if odd { p - m } else { (p - c) + (m - c) };
    let mut out = vec![0.0; field.values.len()];
    out.par_chunks_mut(block)
        .zip(field.values.par_chunks(block))
        .with_min_len((PAR_MIN_LEN / block).max(1))
        .for_each(|(dst, src)| {
            if stride == 1 {
                for (i, o) in dst.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, &w) in (1..).zip(weights) {
                        acc += w * pair(src[i], src[wrap(i, k)], src[wrap(i, -k)]);
                    }
                    *o = acc * scale;
                }
                return;
            }
            for i in 0..n {
                let row = |j: usize| &src[j * stride..(j + 1) * stride];
                let center = row(i);
                let dst = &mut dst[i * stride..(i + 1) * stride];
                for (k, &w) in (1..).zip(weights) {
                    let (plus, minus) = (row(wrap(i, k)), row(wrap(i, -k)));
                    for r in 0..stride {
                        dst[r] += w * pair(center[r], plus[r], minus[r]);
                    }
                }
                for o in dst.iter_mut() {
                    *o *= scale;
                }
            }
        });
    ScalarField::from_raw(grid, out)
}

/// Centered first derivative along `axis` with periodic wraparound.
pub fn diff1(field: &ScalarField, axis: usize, order: StencilOrder) -> Result<ScalarField> {
    field.grid.check_axis(axis)?;
    let h = field.grid.spacing(axis);
    Ok(match order {
        StencilOrder::Second => apply_stencil(field, axis, true, &[1.0], 1.0 / (2.0 * h)),
        StencilOrder::Fourth => apply_stencil(field, axis, true, &[8.0, -1.0], 1.0 / (12.0 * h)),
    })
}

/// Second derivative along `(axis_i, axis_j)`.
///
/// Mixed derivatives are composed first differences, always applied with the
/// larger axis innermost, so `diff2(f, i, j)` and `diff2(f, j, i)` are the
/// same computation.
pub fn diff2(
    field: &ScalarField,
    axis_i: usize,
    axis_j: usize,
    order: StencilOrder,
) -> Result<ScalarField> {
    let grid = field.grid;
    grid.check_axis(axis_i)?;
    grid.check_axis(axis_j)?;
    if axis_i != axis_j {
        let (lo, hi) = (axis_i.min(axis_j), axis_i.max(axis_j));
        return diff1(&diff1(field, hi, order)?, lo, order);
    }
    let h = grid.spacing(axis_i);
    Ok(match order {
        StencilOrder::Second => apply_stencil(field, axis_i, false, &[1.0], 1.0 / (h * h)),
        StencilOrder::Fourth => {
            apply_stencil(field, axis_i, false, &[16.0, -1.0], 1.0 / (12.0 * h * h))
        }
    })
}

/// Rectangle-rule quadrature over the torus.
pub fn integrate(field: &ScalarField) -> f64 {
    field.values.iter().sum::<f64>() * field.grid.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid2(n: usize) -> GridSpec {
        GridSpec::standard(&[n, n]).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::standard(&[6, 8]).is_err());
        assert!(GridSpec::standard(&[9, 8]).is_err());
        assert!(GridSpec::standard(&[]).is_err());
        assert!(GridSpec::standard(&[8, 8, 8, 8]).is_err());
        assert!(GridSpec::new(&[8], &[0.0]).is_err());
        assert!(GridSpec::new(&[8, 8], &[1.0]).is_err());
    }

    #[test]
    fn node_coordinate_examples() {
        let g = grid2(16);
        assert_eq!(g.node_coordinates(0).unwrap()[..2], [0.0, 0.0]);

        let g = GridSpec::new(&[8, 8], &[TAU, TAU]).unwrap();
        // 8 x 8 is the smallest legal grid; index 9 = (1, 1)
        let x = g.node_coordinates(9).unwrap();
        assert!((x[0] - PI / 4.0).abs() < 1e-15 && (x[1] - PI / 4.0).abs() < 1e-15);

        let g = GridSpec::standard(&[8]).unwrap();
        let x = g.node_coordinates(7).unwrap();
        assert!((x[0] - 7.0 * PI / 4.0).abs() < 1e-15);

        assert!(matches!(
            g.node_coordinates(8),
            Err(Error::IndexOutOfRange { index: 8, len: 8 })
        ));
    }

    #[test]
    fn row_major_unrolling() {
        // The 4 x 4 layout from the storage contract, checked on the index
        // arithmetic directly since 4 is below the minimum resolution.
        let g = GridSpec::standard(&[8, 8]).unwrap();
        assert_eq!(g.multi_index(5).unwrap()[..2], [0, 5]);
        assert_eq!(g.multi_index(13).unwrap()[..2], [1, 5]);
        assert_eq!(g.stride(0), 8);
        assert_eq!(g.stride(1), 1);
        let x = g.node_coordinates(g.flat_index(&[2, 2]).unwrap()).unwrap();
        assert!((x[0] - PI / 2.0).abs() < 1e-15 && (x[1] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip_every_node() {
        let g = GridSpec::new(&[8, 10, 12], &[1.0, 2.0, 3.0]).unwrap();
        for k in 0..g.len() {
            let x = g.node_coordinates(k).unwrap();
            assert_eq!(g.nearest_index(&x[..3]).unwrap(), k);
        }
    }

    #[test]
    fn derivatives_of_constants_vanish() {
        let g = grid2(16);
        let c = ScalarField::constant(g, 3.25);
        for order in [StencilOrder::Second, StencilOrder::Fourth] {
            assert_eq!(diff1(&c, 0, order).unwrap().max_abs(), 0.0);
            assert_eq!(diff2(&c, 1, 1, order).unwrap().max_abs(), 0.0);
            assert_eq!(diff2(&c, 0, 1, order).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn invalid_axis() {
        let c = ScalarField::constant(grid2(8), 1.0);
        assert!(matches!(
            diff1(&c, 2, StencilOrder::Second),
            Err(Error::InvalidAxis { axis: 2, dim: 2 })
        ));
        assert!(diff2(&c, 0, 3, StencilOrder::Second).is_err());
    }

    #[test]
    fn mixed_derivative_is_bitwise_symmetric() {
        let g = grid2(32);
        let f = ScalarField::from_fn(g, |x| (x[0] + 0.3 * x[1].sin()).sin() * x[1].cos());
        for order in [StencilOrder::Second, StencilOrder::Fourth] {
            let a = diff2(&f, 0, 1, order).unwrap();
            let b = diff2(&f, 1, 0, order).unwrap();
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn mixed_derivative_at_saddle() {
        let g = grid2(64);
        let f = ScalarField::from_fn(g, |x| x[0].sin() * x[1].sin());
        let fxy = diff2(&f, 0, 1, StencilOrder::Second).unwrap();
        let k = g.flat_index(&[16, 16]).unwrap();
        let h = g.spacing(0);
        assert!(fxy.values()[k].abs() <= h * h);
    }

    #[test]
    fn fourth_order_beats_second() {
        let g = GridSpec::standard(&[64]).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0].sin());
        let exact = ScalarField::from_fn(g, |x| x[0].cos());
        let err = |o| {
            let d = diff1(&f, 0, o).unwrap();
            d.values()
                .iter()
                .zip(exact.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        assert!(err(StencilOrder::Second) >= 10.0 * err(StencilOrder::Fourth));
    }

    #[test]
    fn quadrature_examples() {
        let g = grid2(16);
        assert!((integrate(&ScalarField::constant(g, 1.0)) - 4.0 * PI * PI).abs() < 1e-12);
        let s = ScalarField::from_fn(g, |x| x[0].sin());
        assert!(integrate(&s).abs() < 1e-13);
        let s2 = ScalarField::from_fn(g, |x| x[0].sin().powi(2));
        assert!((integrate(&s2) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((2.0 * PI * PI - 19.7392).abs() < 1e-4);
    }

    #[test]
    fn discrete_divergence_theorem() {
        let g = GridSpec::new(&[16, 24], &[3.0, 5.0]).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] * x[1]).sin() + x[1].cos().exp());
        for axis in 0..2 {
            let d = diff1(&f, axis, StencilOrder::Second).unwrap();
            assert!(integrate(&d).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = GridSpec::standard(&[8]).unwrap();
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(
            ScalarField::new(g, v),
            Err(Error::NonFiniteValue { node: 3 })
        ));
    }
}
