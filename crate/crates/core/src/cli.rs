//! `gmcf` command-line entry point.
//!
//! ```text
//! gmcf run <config | summary.json> [--key=value ...]
//! gmcf order-check [--stencil_order=2|4]
//! gmcf list-families
//! ```
//!
//! Exit codes: 0 converged, 2 max time reached, 3 invariant breach,
//! 4 non-finite, 1 usage or config error. Errors go to stderr as a single
//! line `gmcf: error[<kind>]: <message>`.

use std::io::Write;

use crate::config::{parse_config, records_to_csv, summary_json, ExperimentConfig};
use crate::error::{Error, Result};
use crate::flow::{run, with_thread_limit};
use crate::geometry::{div_form_residual, induced_metric, j1_field, jacobian2, jet, velocity};
use crate::grid::{diff1, diff2, GridSpec, ScalarField, StencilOrder};
use crate::maps::{MapFamily, TargetKind, FAMILIES};
use crate::verification::{observed_order, reference_velocity, AnalyticMap, OrderEstimate};

pub const USAGE: &str = "usage: gmcf run <config | summary.json> [--key=value ...]\n       \
gmcf order-check [--stencil_order=2|4]\n       gmcf list-families";

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io(_) => "io",
        Error::MalformedLine { .. }
        | Error::UnknownKey(_)
        | Error::InvalidEnum { .. }
        | Error::InvalidConfig(_)
        | Error::UnknownFamily(_) => "config",
        _ => "numeric",
    }
}

fn report_error(err: &mut dyn Write, kind: &str, msg: &str) {
    let msg = msg.replace('\n', " ");
    let _ = writeln!(err, "gmcf: error[{kind}]: {msg}");
}

/// Runs the CLI with `args` (excluding the program name) and returns the
/// process exit code.
pub fn main_with_args(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some((cmd, rest)) = args.split_first() else {
        report_error(err, "usage", "missing subcommand");
        let _ = writeln!(err, "{USAGE}");
        return 1;
    };
    let result = match cmd.as_str() {
        "run" => cmd_run(rest, out, err),
        "order-check" => cmd_order_check(rest, out),
        "list-families" => {
            for f in FAMILIES {
                let _ = write!(out, "{f}");
            }
            Ok(0)
        }
        "-h" | "--help" | "help" => {
            let _ = writeln!(out, "{USAGE}");
            Ok(0)
        }
        other => {
            report_error(err, "usage", &format!("unknown subcommand `{other}`"));
            let _ = writeln!(err, "{USAGE}");
            return 1;
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            report_error(err, error_kind(&e), &e.to_string());
            1
        }
    }
}

/// Loads a config file, or the config embedded in a JSON run summary.
pub fn load_config(path: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
    if text.trim_start().starts_with('{') {
        let base = ExperimentConfig::from_summary_json(&text)?;
        parse_config(&base.to_config_text(), overrides)
    } else {
        parse_config(&text, overrides)
    }
}

fn cmd_run(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (path, overrides) = args
        .split_first()
        .filter(|(p, _)| !p.starts_with("--"))
        .ok_or_else(|| Error::InvalidConfig("run needs a config path".into()))?;
    let config = load_config(path, overrides)?;
    let outcome = run(&config)?;
    let csv = records_to_csv(&outcome.records);
    match &config.csv {
        Some(p) => {
            std::fs::write(p, &csv).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?
        }
        None => out.write_all(csv.as_bytes())?,
    }
    let summary = summary_json(&config, &outcome);
    if let Some(p) = &config.json {
        let text = serde_json::to_string_pretty(&summary).expect("serializable");
        std::fs::write(p, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    }
    let _ = writeln!(err, "gmcf: {}", outcome.status);
    Ok(outcome.status.kind.exit_code())
}

fn sup_diff(a: &ScalarField, exact: impl Fn(&[f64]) -> f64) -> f64 {
    let g = a.grid();
    (0..g.len())
        .map(|k| {
            let x = g.node_coordinates(k).expect("in range");
            (a.values()[k] - exact(&x[..g.dim()])).abs()
        })
        .fold(0.0, f64::max)
}

fn print_order(out: &mut dyn Write, name: &str, est: Result<OrderEstimate>) {
    let _ = match est {
        Ok(OrderEstimate::Exact) => writeln!(out, "{name}: exact"),
        Ok(OrderEstimate::Observed { order, errors }) => {
            let errs: Vec<String> = errors
                .iter()
                .map(|(n, e)| format!("N={n}:{e:.3e}"))
                .collect();
            writeln!(out, "{name}: order={order:.4} {}", errs.join(" "))
        }
        Err(e) => writeln!(out, "{name}: undefined ({e})"),
    };
}

fn cmd_order_check(args: &[String], out: &mut dyn Write) -> Result<i32> {
    let mut order = StencilOrder::Second;
    for a in args {
        match a.strip_prefix("--stencil_order=") {
            Some(v) => {
                order = StencilOrder::from_int(
                    v.parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad order `{v}`")))?,
                )?
            }
            None => return Err(Error::InvalidConfig(format!("unknown flag `{a}`"))),
        }
    }
    let levels = [32, 64, 128];
    let text = with_thread_limit(|| {
        let mut buf: Vec<u8> = Vec::new();
        let out: &mut dyn Write = &mut buf;
        let t1 = |n: usize| GridSpec::standard(&[n]);
        let sin =
            |n: usize| -> Result<ScalarField> { Ok(ScalarField::from_fn(t1(n)?, |x| x[0].sin())) };

        print_order(
            out,
            "diff1 sin(x)",
            observed_order(
                |n| Ok(sup_diff(&diff1(&sin(n)?, 0, order)?, |x| x[0].cos())),
                &levels,
            ),
        );
        print_order(
            out,
            "diff2 sin(x)",
            observed_order(
                |n| Ok(sup_diff(&diff2(&sin(n)?, 0, 0, order)?, |x| -x[0].sin())),
                &levels,
            ),
        );

        let shear = AnalyticMap::new(MapFamily::ShearComposition {
            eps: 0.3,
            delta: 0.3,
            k1: 1,
            k2: 1,
        });
        let torus = |g: &GridSpec| TargetKind::Torus {
            periods: g.period().to_vec(),
        };
        print_order(
            out,
            "velocity shear_composition(0.3, 0.3)",
            observed_order(
                |n| {
                    let g = GridSpec::standard(&[n, n])?;
                    let map = shear.family.build(g, torus(&g))?;
                    let j = jet(&map, order)?;
                    let v = velocity(&j, &induced_metric(&j));
                    let mut e = 0.0f64;
                    for k in 0..g.len() {
                        let x = g.node_coordinates(k)?;
                        let exact = reference_velocity(&shear, &x[..2])?;
                        for a in 0..2 {
                            e = e.max((v[a].values()[k] - exact[a]).abs());
                        }
                    }
                    Ok(e)
                },
                &levels,
            ),
        );
        print_order(
            out,
            "jacobian2 shear_composition(0.4, 0.4)",
            observed_order(
                |n| {
                    let g = GridSpec::standard(&[n, n])?;
                    let family = MapFamily::ShearComposition {
                        eps: 0.4,
                        delta: 0.4,
                        k1: 1,
                        k2: 1,
                    };
                    let map = family.build(g, torus(&g))?;
                    Ok(sup_diff(&jacobian2(&jet(&map, order)?)?, |_| 1.0))
                },
                &levels,
            ),
        );
        print_order(
            out,
            "div form - J1 * velocity, sin(x)",
            observed_order(
                |n| {
                    let g = GridSpec::standard(&[n, n])?;
                    let family = MapFamily::ProductSine {
                        amplitudes: vec![1.0],
                        wavevectors: vec![vec![1, 0]],
                        phases: vec![0.0],
                    };
                    let map = family.build(g, TargetKind::Euclidean)?;
                    let div = div_form_residual(&map, order)?;
                    let j = jet(&map, order)?;
                    let v = velocity(&j, &induced_metric(&j));
                    let j1 = j1_field(&j)?;
                    Ok((0..g.len())
                        .map(|k| (div.values()[k] - j1.values()[k] * v[0].values()[k]).abs())
                        .fold(0.0, f64::max))
                },
                &levels,
            ),
        );
        print_order(
            out,
            "velocity linear [[2,1],[1,1]]",
            observed_order(
                |n| {
                    let g = GridSpec::standard(&[n, n])?;
                    let family = MapFamily::Linear {
                        winding: vec![2.0, 1.0, 1.0, 1.0],
                    };
                    let map = family.build(g, torus(&g))?;
                    let j = jet(&map, order)?;
                    Ok(velocity(&j, &induced_metric(&j))
                        .iter()
                        .map(ScalarField::max_abs)
                        .fold(0.0, f64::max))
                },
                &levels,
            ),
        );
        buf
    });
    out.write_all(&text)?;
    Ok(0)
}
