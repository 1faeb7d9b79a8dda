//! Experiment configuration in a line-based `key = value` format, plus the
//! CSV and JSON writers for run results.
//!
//! ```text
//! # comments start with '#'
//! resolution = 64,64
//! family = shear_composition
//! map.eps = 0.4
//! map.delta = 0.4
//! guard = area_preserving
//! ```
//!
//! Command-line overrides `--key=value` take precedence over the file. Every
//! key not listed in [`KEYS`] is rejected, as is any `map.*` key the chosen
//! family does not take.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::flow::{DtMode, GuardKind, GuardPolicy, RunOutcome, RunSettings, Scheme, StopKind};
use crate::grid::{GridSpec, StencilOrder};
use crate::maps::{MapFamily, MapField, TargetKind, FAMILIES};
use crate::verification::{convergence_report, DiagnosticsRecord, ReportTolerances};

/// Every accepted key, in the order the resolved config lists them.
pub const KEYS: &[&str] = &[
    "resolution",
    "period",
    "target_dim",
    "target_kind",
    "target_period",
    "family",
    "map.winding",
    "map.eps",
    "map.delta",
    "map.k1",
    "map.k2",
    "map.amplitudes",
    "map.wavevectors",
    "map.phases",
    "map.amplitude",
    "map.wavenumbers",
    "scheme",
    "stencil_order",
    "dt_mode",
    "safety",
    "dt",
    "t_max",
    "tol_converged",
    "guard",
    "preserve_tol",
    "margin_floor",
    "j_floor",
    "sample_every",
    "csv",
    "json",
];

const TARGET_KINDS: &[&str] = &["euclidean", "torus"];
const DT_MODES: &[&str] = &["cfl", "fixed"];
const STENCIL_ORDERS: &[&str] = &["2", "4"];

pub const DEFAULT_PRESERVE_TOL: f64 = 1e-2;
pub const DEFAULT_MARGIN_FLOOR: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub resolution: Vec<usize>,
    pub period: Vec<f64>,
    pub target_dim: usize,
    pub target: TargetKind,
    pub family: MapFamily,
    pub scheme: Scheme,
    pub stencil_order: StencilOrder,
    pub dt_mode: DtMode,
    pub t_max: f64,
    pub tol_converged: f64,
    pub guard: GuardPolicy,
    pub sample_every: u64,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(&self.resolution, &self.period)
    }

    pub fn build_map(&self) -> Result<MapField> {
        self.family.build(self.grid()?, self.target.clone())
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            scheme: self.scheme,
            stencil_order: self.stencil_order,
            dt_mode: self.dt_mode,
            t_max: self.t_max,
            tol_converged: self.tol_converged,
            guard: self.guard,
            sample_every: self.sample_every,
        }
    }

    /// Fully resolved `(key, value)` pairs; parsing them back yields `self`.
    pub fn resolved_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = vec![
            ("resolution", join(&self.resolution)),
            ("period", join(&self.period)),
            ("target_dim", self.target_dim.to_string()),
            ("target_kind", self.target.name().to_string()),
        ];
        if let TargetKind::Torus { periods } = &self.target {
            out.push(("target_period", join(periods)));
        }
        out.push(("family", self.family.name().to_string()));
        match &self.family {
            MapFamily::Identity => {}
            MapFamily::Linear { winding } => out.push(("map.winding", join(winding))),
            MapFamily::ShearComposition { eps, delta, k1, k2 } => {
                out.push(("map.eps", eps.to_string()));
                out.push(("map.delta", delta.to_string()));
                out.push(("map.k1", k1.to_string()));
                out.push(("map.k2", k2.to_string()));
            }
            MapFamily::ProductSine {
                amplitudes,
                wavevectors,
                phases,
            } => {
                out.push(("map.amplitudes", join(amplitudes)));
                out.push(("map.wavevectors", join(&wavevectors.concat())));
                out.push(("map.phases", join(phases)));
            }
            MapFamily::ScalarBump {
                amplitude,
                wavenumbers,
            } => {
                out.push(("map.amplitude", amplitude.to_string()));
                out.push(("map.wavenumbers", join(wavenumbers)));
            }
        }
        out.push(("scheme", self.scheme.name().to_string()));
        out.push(("stencil_order", self.stencil_order.as_int().to_string()));
        match self.dt_mode {
            DtMode::Cfl { safety } => {
                out.push(("dt_mode", "cfl".into()));
                out.push(("safety", safety.to_string()));
            }
            DtMode::Fixed { dt } => {
                out.push(("dt_mode", "fixed".into()));
                out.push(("dt", dt.to_string()));
            }
        }
        out.push(("t_max", self.t_max.to_string()));
        out.push(("tol_converged", self.tol_converged.to_string()));
        out.push(("guard", self.guard.kind.name().to_string()));
        match self.guard.kind {
            GuardKind::None => {}
            GuardKind::AreaPreserving { preserve_tol } => {
                out.push(("preserve_tol", preserve_tol.to_string()))
            }
            GuardKind::AreaDecreasing { margin_floor } => {
                out.push(("margin_floor", margin_floor.to_string()))
            }
        }
        out.push(("j_floor", self.guard.j_floor.to_string()));
        out.push(("sample_every", self.sample_every.to_string()));
        if let Some(p) = &self.csv {
            out.push(("csv", p.display().to_string()));
        }
        if let Some(p) = &self.json {
            out.push(("json", p.display().to_string()));
        }
        out
    }

    /// Resolved config in the `key = value` text format.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.resolved_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn resolved_json(&self) -> Value {
        let mut obj = Map::new();
        for (k, v) in self.resolved_pairs() {
            obj.insert(k.to_string(), Value::String(v));
        }
        Value::Object(obj)
    }

    /// Rebuilds a config from the `resolved_config` object of a summary.
    pub fn from_resolved_json(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidConfig("resolved_config must be an object".into()))?;
        let mut text = String::new();
        for (k, v) in obj {
            let v = v.as_str().ok_or_else(|| {
                Error::InvalidConfig(format!("resolved_config.{k} must be a string"))
            })?;
            let _ = writeln!(text, "{k} = {v}");
        }
        parse_config(&text, &[])
    }

    /// Reads the config embedded in a JSON run summary.
    pub fn from_summary_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("summary is not valid JSON: {e}")))?;
        let resolved = v
            .get("resolved_config")
            .ok_or_else(|| Error::InvalidConfig("summary has no resolved_config".into()))?;
        Self::from_resolved_json(resolved)
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Raw entries after merging file lines and overrides.
struct Entries {
    values: BTreeMap<&'static str, String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("cannot parse `{v}` as the value of `{key}`"))
            }),
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.trim().parse::<T>().map_err(|_| {
                        Error::InvalidConfig(format!(
                            "cannot parse list item `{}` of `{key}`",
                            item.trim()
                        ))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn required<T>(
        &mut self,
        key: &str,
        f: impl FnOnce(&mut Self, &str) -> Result<Option<T>>,
    ) -> Result<T> {
        f(self, key)?.ok_or_else(|| Error::InvalidConfig(format!("missing required key `{key}`")))
    }

    fn choice(&mut self, key: &str, valid: &[&str]) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) if valid.contains(&v.as_str()) => Ok(Some(v)),
            Some(v) => Err(Error::InvalidEnum {
                key: key.to_string(),
                value: v,
                expected: valid.join(", "),
            }),
        }
    }
}

fn canonical_key(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|k| *k == key)
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidConfig(format!(
            "`{key}` must be positive, got {v}"
        )))
    }
}

/// Parses config `text` and applies `--key=value` overrides on top.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut values = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| Error::MalformedLine {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::MalformedLine {
                line,
                message: "empty key or value".into(),
            });
        }
        let key = canonical_key(k).ok_or_else(|| Error::UnknownKey(k.to_string()))?;
        if values.insert(key, v.to_string()).is_some() {
            return Err(Error::MalformedLine {
                line,
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    for flag in overrides {
        let body = flag.strip_prefix("--").ok_or_else(|| {
            Error::InvalidConfig(format!("override `{flag}` must look like --key=value"))
        })?;
        let (k, v) = body.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("override `{flag}` must look like --key=value"))
        })?;
        let key = canonical_key(k.trim()).ok_or_else(|| Error::UnknownKey(k.trim().to_string()))?;
        values.insert(key, v.trim().to_string());
    }
    resolve(Entries { values })
}

fn resolve(mut e: Entries) -> Result<ExperimentConfig> {
    let resolution: Vec<usize> = e.list("resolution")?.unwrap_or_else(|| vec![64, 64]);
    let n = resolution.len();
    let period: Vec<f64> = e.list("period")?.unwrap_or_else(|| vec![TAU; n]);
    let grid = GridSpec::new(&resolution, &period)?;

    let family_name = e.required("family", |e, k| {
        e.choice(k, &FAMILIES.iter().map(|f| f.name).collect::<Vec<_>>())
    })?;
    let family = match family_name.as_str() {
        "identity" => MapFamily::Identity,
        "linear" => MapFamily::Linear {
            winding: e.required("map.winding", Entries::list)?,
        },
        "shear_composition" => MapFamily::ShearComposition {
            eps: e.required("map.eps", Entries::parsed)?,
            delta: e.required("map.delta", Entries::parsed)?,
            k1: e.parsed("map.k1")?.unwrap_or(1),
            k2: e.parsed("map.k2")?.unwrap_or(1),
        },
        "product_sine" => {
            let amplitudes: Vec<f64> = e.required("map.amplitudes", Entries::list)?;
            let m = amplitudes.len();
            let flat: Vec<i64> = e.required("map.wavevectors", Entries::list)?;
            if flat.len() != m * n {
                return Err(Error::InvalidConfig(format!(
                    "map.wavevectors needs {} entries ({m} x {n}), got {}",
                    m * n,
                    flat.len()
                )));
            }
            let phases = e.list("map.phases")?.unwrap_or_else(|| vec![0.0; m]);
            MapFamily::ProductSine {
                amplitudes,
                wavevectors: flat.chunks(n).map(<[i64]>::to_vec).collect(),
                phases,
            }
        }
        "scalar_bump" => MapFamily::ScalarBump {
            amplitude: e.required("map.amplitude", Entries::parsed)?,
            wavenumbers: e.list("map.wavenumbers")?.unwrap_or_else(|| vec![1; n]),
        },
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    let implied_m = family.target_dim(n)?;
    let target_dim = e.parsed("target_dim")?.unwrap_or(implied_m);
    if target_dim != implied_m {
        return Err(Error::InvalidConfig(format!(
            "target_dim = {target_dim} but family `{family_name}` produces {implied_m} components"
        )));
    }
    let default_kind = match family {
        MapFamily::Identity | MapFamily::ShearComposition { .. } => "torus",
        _ => "euclidean",
    };
    let kind = e
        .choice("target_kind", TARGET_KINDS)?
        .unwrap_or_else(|| default_kind.to_string());
    let target = if kind == "torus" {
        let periods = e.list("target_period")?.unwrap_or_else(|| {
            if target_dim == n {
                period.clone()
            } else {
                vec![TAU; target_dim]
            }
        });
        TargetKind::Torus { periods }
    } else {
        if e.take("target_period").is_some() {
            return Err(Error::InvalidConfig(
                "target_period is only valid with target_kind = torus".into(),
            ));
        }
        TargetKind::Euclidean
    };

    let scheme = match e.choice("scheme", Scheme::NAMES)? {
        Some(s) => Scheme::parse(&s).expect("validated"),
        None => Scheme::Euler,
    };
    let stencil_order = match e.choice("stencil_order", STENCIL_ORDERS)? {
        Some(s) => StencilOrder::from_int(s.parse().expect("validated"))?,
        None => StencilOrder::Second,
    };
    let dt_mode = match e.choice("dt_mode", DT_MODES)?.as_deref() {
        Some("fixed") => {
            if e.take("safety").is_some() {
                return Err(Error::InvalidConfig(
                    "safety is only valid with dt_mode = cfl".into(),
                ));
            }
            DtMode::Fixed {
                dt: positive("dt", e.required("dt", Entries::parsed)?)?,
            }
        }
        _ => {
            if e.take("dt").is_some() {
                return Err(Error::InvalidConfig(
                    "dt is only valid with dt_mode = fixed".into(),
                ));
            }
            let safety: f64 = e.parsed("safety")?.unwrap_or(0.2);
            if !(safety > 0.0 && safety <= 0.5) {
                return Err(Error::InvalidConfig(format!(
                    "safety must lie in (0, 0.5], got {safety}"
                )));
            }
            DtMode::Cfl { safety }
        }
    };
    let t_max = positive("t_max", e.parsed("t_max")?.unwrap_or(100.0))?;
    let tol_converged = positive("tol_converged", e.parsed("tol_converged")?.unwrap_or(1e-8))?;

    let guard_kind = match e.choice("guard", GuardKind::NAMES)?.as_deref() {
        Some("area_preserving") => {
            if e.take("margin_floor").is_some() {
                return Err(Error::InvalidConfig(
                    "margin_floor is only valid with guard = area_decreasing".into(),
                ));
            }
            GuardKind::AreaPreserving {
                preserve_tol: positive(
                    "preserve_tol",
                    e.parsed("preserve_tol")?.unwrap_or(DEFAULT_PRESERVE_TOL),
                )?,
            }
        }
        Some("area_decreasing") => {
            if e.take("preserve_tol").is_some() {
                return Err(Error::InvalidConfig(
                    "preserve_tol is only valid with guard = area_preserving".into(),
                ));
            }
            let margin_floor: f64 = e.parsed("margin_floor")?.unwrap_or(DEFAULT_MARGIN_FLOOR);
            if !(0.0..1.0).contains(&margin_floor) {
                return Err(Error::InvalidConfig(format!(
                    "margin_floor must lie in [0, 1), got {margin_floor}"
                )));
            }
            GuardKind::AreaDecreasing { margin_floor }
        }
        _ => {
            if e.take("preserve_tol").is_some() || e.take("margin_floor").is_some() {
                return Err(Error::InvalidConfig(
                    "preserve_tol / margin_floor need a matching guard policy".into(),
                ));
            }
            GuardKind::None
        }
    };
    let j_floor = positive("j_floor", e.parsed("j_floor")?.unwrap_or(1e-3))?;
    let sample_every: u64 = e.parsed("sample_every")?.unwrap_or(10);
    if sample_every == 0 {
        return Err(Error::InvalidConfig("sample_every must be >= 1".into()));
    }
    let csv = e.take("csv").map(PathBuf::from);
    let json = e.take("json").map(PathBuf::from);

    if let Some(key) = e.values.keys().next() {
        return Err(Error::InvalidConfig(format!(
            "key `{key}` is not used by family `{family_name}` with these settings"
        )));
    }

    let config = ExperimentConfig {
        resolution,
        period,
        target_dim,
        target,
        family,
        scheme,
        stencil_order,
        dt_mode,
        t_max,
        tol_converged,
        guard: GuardPolicy {
            kind: guard_kind,
            j_floor,
        },
        sample_every,
        csv,
        json,
    };
    // catches winding/period incompatibilities at parse time
    config.family.build(grid, config.target.clone())?;
    Ok(config)
}

/// CSV column order.
pub const CSV_HEADER: &str =
    "t,step,dt,area,min_J,max_speed,min_det2,max_det2,max_two_dilation,max_grad";

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV time series with 17 significant digits per float.
pub fn records_to_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::with_capacity(64 + records.len() * 220);
    s.push_str(CSV_HEADER);
    s.push('\n');
    let opt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_float(r.t),
            r.step,
            fmt_float(r.dt),
            fmt_float(r.area),
            fmt_float(r.min_j),
            fmt_float(r.max_speed),
            opt(r.min_det2),
            opt(r.max_det2),
            fmt_float(r.max_two_dilation),
            fmt_float(r.max_grad),
        );
    }
    s
}

/// JSON run summary with the resolved config embedded.
pub fn summary_json(config: &ExperimentConfig, outcome: &RunOutcome) -> Value {
    let report = convergence_report(&outcome.records, &ReportTolerances::default()).ok();
    let last = outcome.records.last();
    let guard = usize::from(outcome.status.kind == StopKind::InvariantBreach);
    json!({
        "status": outcome.status.kind.name(),
        "detail": outcome.status.detail,
        "steps": outcome.status.step,
        "final_time": outcome.status.t,
        "final_area": last.map(|r| r.area),
        "final_max_speed": last.map(|r| r.max_speed),
        "final_min_J": last.map(|r| r.min_j),
        "invariant_violations": {
            "area_monotonicity": report.as_ref().map_or(0, |r| r.area_monotonicity.count),
            "min_J_monotonicity": report.as_ref().map_or(0, |r| r.min_j_monotonicity.count),
            "guard": guard,
        },
        "resolved_config": config.resolved_json(),
    })
}
