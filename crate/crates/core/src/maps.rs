//! Maps `T^n -> R^m` or `T^n -> T^m` stored as `f(x) = W x + u(x)`.
//!
//! The winding matrix `W` carries the homotopy class and never changes under
//! the flow; only the periodic part `u` evolves.

use std::f64::consts::TAU;
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

/// Tolerance used when deciding whether a real number is an integer.
const INTEGRALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    Euclidean,
    Torus { periods: Vec<f64> },
}

impl TargetKind {
    pub fn name(&self) -> &'static str {
        match self {
            TargetKind::Euclidean => "euclidean",
            TargetKind::Torus { .. } => "torus",
        }
    }
}

/// Dense `m x n` matrix, row-major; row `alpha` is the gradient of `f^alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Winding {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl Winding {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "winding needs {} entries for {rows}x{cols}, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "winding entries must be finite".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut w = Self::zeros(n, n);
        for i in 0..n {
            w.entries[i * n + i] = 1.0;
        }
        w
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, alpha: usize, i: usize) -> f64 {
        self.entries[alpha * self.cols + i]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Named families of initial maps, each with closed-form derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum MapFamily {
    Identity,
    /// `f(x) = W x`; `winding` is row-major `m x n`.
    Linear {
        winding: Vec<f64>,
    },
    /// `(x + eps sin(k2 y), y + delta sin(k1 (x + eps sin(k2 y))))`.
    ShearComposition {
        eps: f64,
        delta: f64,
        k1: i64,
        k2: i64,
    },
    /// `u^a = amplitudes[a] sin(wavevectors[a] . x + phases[a])`, `W = 0`.
    ProductSine {
        amplitudes: Vec<f64>,
        wavevectors: Vec<Vec<i64>>,
        phases: Vec<f64>,
    },
    /// Scalar `u = amplitude * prod_i sin(wavenumbers[i] x_i)`, `W = 0`.
    ScalarBump {
        amplitude: f64,
        wavenumbers: Vec<i64>,
    },
}

impl MapFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MapFamily::Identity => "identity",
            MapFamily::Linear { .. } => "linear",
            MapFamily::ShearComposition { .. } => "shear_composition",
            MapFamily::ProductSine { .. } => "product_sine",
            MapFamily::ScalarBump { .. } => "scalar_bump",
        }
    }

    /// Target dimension implied by the parameters, with `n` the domain
    /// dimension.
    pub fn target_dim(&self, n: usize) -> Result<usize> {
        match self {
            MapFamily::Identity => Ok(n),
            MapFamily::Linear { winding } => {
                if n == 0 || winding.len() % n != 0 || winding.is_empty() {
                    Err(Error::DimensionMismatch(format!(
                        "winding with {} entries is not m x {n}",
                        winding.len()
                    )))
                } else {
                    Ok(winding.len() / n)
                }
            }
            MapFamily::ShearComposition { .. } => Ok(2),
            MapFamily::ProductSine { amplitudes, .. } => Ok(amplitudes.len()),
            MapFamily::ScalarBump { .. } => Ok(1),
        }
    }

    /// Samples the family on `grid`.
    pub fn build(&self, grid: GridSpec, target: TargetKind) -> Result<MapField> {
        match self {
            MapFamily::Identity => {
                let periods = match &target {
                    TargetKind::Torus { periods } => periods.clone(),
                    TargetKind::Euclidean => {
                        return Err(Error::InvalidParameter(
                            "identity map needs a torus target".into(),
                        ))
                    }
                };
                if periods.as_slice() != grid.period() {
                    return Err(Error::IncompatibleWinding(format!(
                        "identity needs target periods {:?}, got {periods:?}",
                        grid.period()
                    )));
                }
                make_identity(grid)
            }
            MapFamily::Linear { winding } => {
                let m = self.target_dim(grid.dim())?;
                make_linear(grid, Winding::new(m, grid.dim(), winding.clone())?, target)
            }
            MapFamily::ShearComposition { eps, delta, k1, k2 } => {
                if let TargetKind::Torus { periods } = &target {
                    if periods.as_slice() != grid.period() {
                        return Err(Error::IncompatibleWinding(
                            "shear composition needs target periods equal to domain periods".into(),
                        ));
                    }
                }
                let map = make_shear_composition(grid, *eps, *delta, *k1, *k2)?;
                Ok(MapField { target, ..map })
            }
            MapFamily::ProductSine {
                amplitudes,
                wavevectors,
                phases,
            } => make_product_sine(grid, target, amplitudes, wavevectors, phases),
            MapFamily::ScalarBump {
                amplitude,
                wavenumbers,
            } => {
                let map = make_scalar_bump(grid, *amplitude, wavenumbers)?;
                if target != TargetKind::Euclidean {
                    check_winding(&grid, &map.winding, &target)?;
                }
                Ok(MapField { target, ..map })
            }
        }
    }
}

/// One parameter of a family, for `list-families`.
#[derive(Debug, Clone, Copy)]
pub struct ParamSchema {
    pub key: &'static str,
    pub kind: &'static str,
    pub about: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct FamilySchema {
    pub name: &'static str,
    pub about: &'static str,
    pub params: &'static [ParamSchema],
}

impl fmt::Display for FamilySchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {}", self.name, self.about)?;
        for p in self.params {
            writeln!(f, "    map.{} ({}): {}", p.key, p.kind, p.about)?;
        }
        Ok(())
    }
}

pub const FAMILIES: &[FamilySchema] = &[
    FamilySchema {
        name: "identity",
        about: "identity map of T^n onto a torus with the same periods",
        params: &[],
    },
    FamilySchema {
        name: "linear",
        about: "f(x) = W x with zero periodic part",
        params: &[ParamSchema {
            key: "winding",
            kind: "real list, m*n entries row-major",
            about: "winding matrix W",
        }],
    },
    FamilySchema {
        name: "shear_composition",
        about: "(x + eps sin(k2 y), y + delta sin(k1 (x + eps sin(k2 y)))), det df = 1",
        params: &[
            ParamSchema {
                key: "eps",
                kind: "real",
                about: "first shear amplitude",
            },
            ParamSchema {
                key: "delta",
                kind: "real",
                about: "second shear amplitude",
            },
            ParamSchema {
                key: "k1",
                kind: "integer >= 1",
                about: "second shear wavenumber",
            },
            ParamSchema {
                key: "k2",
                kind: "integer >= 1",
                about: "first shear wavenumber",
            },
        ],
    },
    FamilySchema {
        name: "product_sine",
        about: "u^a = A_a sin(k_a . x + phi_a), null-homotopic",
        params: &[
            ParamSchema {
                key: "amplitudes",
                kind: "real list, m entries",
                about: "A_a",
            },
            ParamSchema {
                key: "wavevectors",
                kind: "integer list, m*n entries row-major",
                about: "k_a",
            },
            ParamSchema {
                key: "phases",
                kind: "real list, m entries (default 0)",
                about: "phi_a",
            },
        ],
    },
    FamilySchema {
        name: "scalar_bump",
        about: "scalar u = A prod_i sin(k_i x_i)",
        params: &[
            ParamSchema {
                key: "amplitude",
                kind: "real",
                about: "A",
            },
            ParamSchema {
                key: "wavenumbers",
                kind: "integer list, n entries (default all 1)",
                about: "k_i",
            },
        ],
    },
];

pub fn family_schema(name: &str) -> Option<&'static FamilySchema> {
    FAMILIES.iter().find(|f| f.name == name)
}

/// A sampled map `f = W x + u` on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MapField {
    grid: GridSpec,
    target: TargetKind,
    winding: Winding,
    periodic: Vec<ScalarField>,
}

impl MapField {
    pub fn new(
        grid: GridSpec,
        target: TargetKind,
        winding: Winding,
        periodic: Vec<ScalarField>,
    ) -> Result<Self> {
        let m = periodic.len();
        if m == 0 {
            return Err(Error::DimensionMismatch(
                "target dimension must be >= 1".into(),
            ));
        }
        if winding.rows() != m || winding.cols() != grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "winding is {}x{}, expected {m}x{}",
                winding.rows(),
                winding.cols(),
                grid.dim()
            )));
        }
        for (alpha, u) in periodic.iter().enumerate() {
            if u.grid() != &grid {
                return Err(Error::DimensionMismatch(format!(
                    "component {alpha} lives on a different grid"
                )));
            }
            if let Some(node) = u.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue { node });
            }
        }
        check_winding(&grid, &winding, &target)?;
        Ok(Self {
            grid,
            target,
            winding,
            periodic,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn domain_dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn target_dim(&self) -> usize {
        self.periodic.len()
    }

    pub fn target(&self) -> &TargetKind {
        &self.target
    }

    pub fn winding(&self) -> &Winding {
        &self.winding
    }

    pub fn periodic_part(&self) -> &[ScalarField] {
        &self.periodic
    }

    #[cfg(test)]
    pub(crate) fn periodic_part_mut(&mut self) -> &mut [ScalarField] {
        &mut self.periodic
    }

    /// Replaces the periodic part, keeping the winding. Values are not
    /// checked for finiteness; the flow guard reports those.
    pub(crate) fn with_periodic_values(&self, values: Vec<Vec<f64>>) -> Self {
        let periodic = values
            .into_iter()
            .map(|v| ScalarField::from_raw(self.grid, v))
            .collect();
        Self {
            grid: self.grid,
            target: self.target.clone(),
            winding: self.winding.clone(),
            periodic,
        }
    }

    /// Full value `W x + u(x)` at a node.
    pub fn value_at(&self, node: usize) -> Result<Vec<f64>> {
        let x = self.grid.node_coordinates(node)?;
        Ok((0..self.target_dim())
            .map(|a| {
                let lin: f64 = (0..self.domain_dim())
                    .map(|i| self.winding.get(a, i) * x[i])
                    .sum();
                lin + self.periodic[a].values()[node]
            })
            .collect())
    }

    /// Largest `sup |u^a - mean(u^a)|` over components.
    pub fn periodic_oscillation(&self) -> f64 {
        self.periodic
            .iter()
            .map(ScalarField::oscillation)
            .fold(0.0, f64::max)
    }

    /// First non-finite periodic value as `(component, node)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.periodic.iter().enumerate().find_map(|(a, u)| {
            u.values()
                .iter()
                .position(|v| !v.is_finite())
                .map(|node| (a, node))
        })
    }
}

fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() <= INTEGRALITY_TOL * x.abs().max(1.0)
}

fn check_winding(grid: &GridSpec, winding: &Winding, target: &TargetKind) -> Result<()> {
    let TargetKind::Torus { periods } = target else {
        return Ok(());
    };
    if periods.len() != winding.rows() {
        return Err(Error::DimensionMismatch(format!(
            "torus target has {} periods, map has {} components",
            periods.len(),
            winding.rows()
        )));
    }
    if periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::InvalidParameter(
            "target periods must be positive".into(),
        ));
    }
    for (alpha, &p) in periods.iter().enumerate() {
        for (j, &l) in grid.period().iter().enumerate() {
            let turns = winding.get(alpha, j) * l / p;
            if !is_integer(turns) {
                return Err(Error::IncompatibleWinding(format!(
                    "W[{alpha}][{j}] * L_{j} / P_{alpha} = {turns} is not an integer"
                )));
            }
        }
    }
    Ok(())
}

fn check_wavenumber(grid: &GridSpec, axis: usize, k: i64) -> Result<()> {
    let turns = k as f64 * grid.period()[axis] / TAU;
    if is_integer(turns) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "wavenumber {k} is not periodic on axis {axis} with period {}",
            grid.period()[axis]
        )))
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite")))
    }
}

/// Identity map of `T^n` onto the torus with the same periods.
pub fn make_identity(grid: GridSpec) -> Result<MapField> {
    let n = grid.dim();
    MapField::new(
        grid,
        TargetKind::Torus {
            periods: grid.period().to_vec(),
        },
        Winding::identity(n),
        vec![ScalarField::constant(grid, 0.0); n],
    )
}

/// Linear map `f(x) = W x`.
pub fn make_linear(grid: GridSpec, winding: Winding, target: TargetKind) -> Result<MapField> {
    let m = winding.rows();
    MapField::new(
        grid,
        target,
        winding,
        vec![ScalarField::constant(grid, 0.0); m],
    )
}

/// Composition of two shears of the 2-torus; `det df = 1` identically.
pub fn make_shear_composition(
    grid: GridSpec,
    eps: f64,
    delta: f64,
    k1: i64,
    k2: i64,
) -> Result<MapField> {
    if grid.dim() != 2 {
        return Err(Error::DimensionMismatch(
            "shear composition is defined on 2-dimensional grids".into(),
        ));
    }
    check_finite("eps", eps)?;
    check_finite("delta", delta)?;
    if k1 < 1 || k2 < 1 {
        return Err(Error::InvalidParameter("k1 and k2 must be >= 1".into()));
    }
    check_wavenumber(&grid, 0, k1)?;
    check_wavenumber(&grid, 1, k2)?;
    let (k1, k2) = (k1 as f64, k2 as f64);
    let u1 = ScalarField::from_fn(grid, |x| eps * (k2 * x[1]).sin());
    let u2 = ScalarField::from_fn(grid, |x| {
        delta * (k1 * (x[0] + eps * (k2 * x[1]).sin())).sin()
    });
    MapField::new(
        grid,
        TargetKind::Torus {
            periods: grid.period().to_vec(),
        },
        Winding::identity(2),
        vec![u1, u2],
    )
}

/// `u^a = amplitudes[a] sin(wavevectors[a] . x + phases[a])` with `W = 0`.
pub fn make_product_sine(
    grid: GridSpec,
    target: TargetKind,
    amplitudes: &[f64],
    wavevectors: &[Vec<i64>],
    phases: &[f64],
) -> Result<MapField> {
    let m = amplitudes.len();
    let n = grid.dim();
    if wavevectors.len() != m || phases.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{m} amplitudes, {} wavevectors, {} phases",
            wavevectors.len(),
            phases.len()
        )));
    }
    let mut periodic = Vec::with_capacity(m);
    for alpha in 0..m {
        let k = &wavevectors[alpha];
        if k.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "wavevector {alpha} has {} entries, domain dimension is {n}",
                k.len()
            )));
        }
        for (axis, &ki) in k.iter().enumerate() {
            check_wavenumber(&grid, axis, ki)?;
        }
        let (a, phi) = (amplitudes[alpha], phases[alpha]);
        check_finite("amplitude", a)?;
        check_finite("phase", phi)?;
        let k: Vec<f64> = k.iter().map(|&v| v as f64).collect();
        periodic.push(ScalarField::from_fn(grid, |x| {
            let arg: f64 = k.iter().zip(x).map(|(ki, xi)| ki * xi).sum();
            a * (arg + phi).sin()
        }));
    }
    MapField::new(grid, target, Winding::zeros(m, n), periodic)
}

/// Scalar bump `u = amplitude * prod_i sin(wavenumbers[i] x_i)`.
pub fn make_scalar_bump(grid: GridSpec, amplitude: f64, wavenumbers: &[i64]) -> Result<MapField> {
    let n = grid.dim();
    if wavenumbers.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} wavenumbers for a {n}-dimensional grid",
            wavenumbers.len()
        )));
    }
    check_finite("amplitude", amplitude)?;
    for (axis, &k) in wavenumbers.iter().enumerate() {
        check_wavenumber(&grid, axis, k)?;
    }
    let k: Vec<f64> = wavenumbers.iter().map(|&v| v as f64).collect();
    let u = ScalarField::from_fn(grid, |x| {
        amplitude
            * k.iter()
                .zip(x)
                .map(|(ki, xi)| (ki * xi).sin())
                .product::<f64>()
    });
    MapField::new(grid, TargetKind::Euclidean, Winding::zeros(1, n), vec![u])
}
