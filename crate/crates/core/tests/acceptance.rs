//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs with `cargo test --test acceptance`; use `--release` for
//! realistic timings.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gmcf::cli::main_with_args;
use gmcf::config::{parse_config, records_to_csv, summary_json, ExperimentConfig};
use gmcf::flow::{cfl_dt, run, step, Evaluation, FlowState, RunOutcome, Scheme, StopKind};
use gmcf::geometry::{div_form_residual, induced_metric, j1_field, jet, mss_residual, velocity};
use gmcf::grid::{GridSpec, StencilOrder};
use gmcf::maps::{make_linear, MapFamily, TargetKind, Winding};
use gmcf::verification::{
    convergence_report, observed_order, reference_div_form, reference_j1, reference_velocity,
    AnalyticMap, ConvergenceReport, ReportTolerances,
};

const ORDER: StencilOrder = StencilOrder::Second;
const LEVELS: [usize; 3] = [32, 64, 128];

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn torus(g: &GridSpec) -> TargetKind {
    TargetKind::Torus {
        periods: g.period().to_vec(),
    }
}

fn stationary_linear_map(limit: Duration) -> Outcome {
    let start = Instant::now();
    let g = GridSpec::standard(&[64, 64]).map_err(fail)?;
    let w = Winding::new(2, 2, vec![2.0, 1.0, 1.0, 1.0]).map_err(fail)?;
    let map = make_linear(g, w, torus(&g)).map_err(fail)?;
    let residual = mss_residual(&map, ORDER).map_err(fail)?;

    let initial = map.periodic_part().to_vec();
    let mut state = FlowState::new(map, ORDER).map_err(fail)?;
    let dt = cfl_dt(
        &Evaluation::of(&state.map, ORDER).map_err(fail)?.metric,
        &g,
        0.2,
    )
    .map_err(fail)?;
    for _ in 0..1000 {
        state = step(&state, dt, Scheme::Euler, ORDER).map_err(fail)?;
    }
    let change = state
        .map
        .periodic_part()
        .iter()
        .zip(&initial)
        .flat_map(|(a, b)| {
            a.values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y).abs())
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    check(
        residual <= 1e-12 && change <= 1e-12 && elapsed < limit,
        format!(
            "mss_residual {residual:.3e}, sup change after 1000 steps {change:.3e}, {elapsed:.2?}"
        ),
    )
}

fn velocity_order(limit: Duration) -> Outcome {
    let start = Instant::now();
    let family = MapFamily::ShearComposition {
        eps: 0.3,
        delta: 0.3,
        k1: 1,
        k2: 1,
    };
    let oracle = AnalyticMap::new(family.clone());
    let est = observed_order(
        |n| {
            let g = GridSpec::standard(&[n, n])?;
            let map = family.build(g, torus(&g))?;
            let j = jet(&map, ORDER)?;
            let v = velocity(&j, &induced_metric(&j));
            let mut e = 0.0f64;
            for k in 0..g.len() {
                let x = g.node_coordinates(k)?;
                let exact = reference_velocity(&oracle, &x[..2])?;
                for a in 0..2 {
                    e = e.max((v[a].values()[k] - exact[a]).abs());
                }
            }
            Ok(e)
        },
        &LEVELS,
    )
    .map_err(fail)?;
    let order = est.order().unwrap_or(f64::NAN);
    let elapsed = start.elapsed();
    check(
        order >= 1.9 && elapsed < limit,
        format!("observed order {order:.4} over N = {LEVELS:?}, {elapsed:.2?}"),
    )
}

fn run_cli(args: &[String]) -> Result<i32, String> {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with_args(args, &mut out, &mut err);
    if code == 1 {
        return Err(String::from_utf8_lossy(&err).trim().to_string());
    }
    Ok(code)
}

const BUMP: &str = "\
resolution = 64,64
family = scalar_bump
map.amplitude = 0.5
scheme = euler
safety = 0.2
sample_every = 1
";

fn gradient_flow_monotonicity(dir: &Path, limit: Duration) -> Outcome {
    let start = Instant::now();
    let overrides = [
        format!("--csv={}", dir.join("bump.csv").display()),
        format!("--json={}", dir.join("bump.json").display()),
    ];
    let config = parse_config(BUMP, &overrides).map_err(fail)?;
    let outcome = run(&config).map_err(fail)?;
    let elapsed = start.elapsed();
    write_outputs(&config, &outcome)?;
    let report = report(&outcome, 1e-8)?;
    let osc = outcome.state.map.periodic_oscillation();
    let converged = outcome.status.kind == StopKind::Converged;
    check(
        converged
            && report.area_monotonicity.count == 0
            && report.min_j_monotonicity.count == 0
            && osc <= 1e-6
            && elapsed < limit,
        format!(
            "{} at step {}, area rises > 1e-10: {} (worst {:.1e}), min J drops > 1e-8: {}, \
             final oscillation {osc:.3e}, {elapsed:.2?}",
            outcome.status.kind.name(),
            outcome.status.step,
            report.area_monotonicity.count,
            report.area_monotonicity.worst,
            report.min_j_monotonicity.count,
        ),
    )
}

fn write_outputs(config: &ExperimentConfig, outcome: &RunOutcome) -> Result<(), String> {
    let (Some(csv), Some(json)) = (&config.csv, &config.json) else {
        return Err("no output paths".into());
    };
    std::fs::write(csv, records_to_csv(&outcome.records)).map_err(fail)?;
    let summary = serde_json::to_string_pretty(&summary_json(config, outcome)).map_err(fail)?;
    std::fs::write(json, summary + "\n").map_err(fail)
}

fn report(outcome: &RunOutcome, min_j_tol: f64) -> Result<ConvergenceReport, String> {
    let tol = ReportTolerances {
        min_j: min_j_tol,
        ..ReportTolerances::default()
    };
    convergence_report(&outcome.records, &tol).map_err(fail)
}

fn worst_min_j_drop(outcome: &RunOutcome) -> f64 {
    outcome
        .records
        .windows(2)
        .map(|w| w[0].min_j - w[1].min_j)
        .fold(0.0, f64::max)
}

fn shear_run(n: usize) -> Result<(RunOutcome, Duration), String> {
    let text = format!(
        "resolution = {n},{n}\nfamily = shear_composition\nmap.eps = 0.4\nmap.delta = 0.4\n\
         target_kind = torus\nguard = area_preserving\nsample_every = 1\n"
    );
    let start = Instant::now();
    let outcome = run(&parse_config(&text, &[]).map_err(fail)?).map_err(fail)?;
    Ok((outcome, start.elapsed()))
}

fn area_preserving(limit: Duration) -> Outcome {
    let (coarse, elapsed) = shear_run(64)?;
    let (fine, _) = shear_run(128)?;
    let rc = report(&coarse, 1e-6)?;
    let rf = report(&fine, 1e-6)?;
    let dc = rc.max_det_deviation.unwrap_or(f64::INFINITY);
    let df = rf.max_det_deviation.unwrap_or(f64::INFINITY);
    let osc = coarse.state.map.periodic_oscillation();
    check(
        coarse.status.kind == StopKind::Converged
            && dc <= 5e-3
            && dc / df >= 3.0
            && osc <= 1e-4
            && rc.min_j_monotonicity.count == 0
            && elapsed < limit,
        format!(
            "{} at step {}, max |det - 1| {dc:.3e} (64^2) vs {df:.3e} (128^2, ratio {:.2}), \
             final oscillation {osc:.3e}, min J drops > 1e-6: {} (worst {:.1e}; 128^2 worst {:.1e}), \
             {elapsed:.2?} at 64^2",
            coarse.status.kind.name(),
            coarse.status.step,
            dc / df,
            rc.min_j_monotonicity.count,
            worst_min_j_drop(&coarse),
            worst_min_j_drop(&fine),
        ),
    )
}

fn area_decreasing(limit: Duration) -> Outcome {
    let text = "resolution = 64,64\nfamily = product_sine\nmap.amplitudes = 0.9,0.9\n\
                map.wavevectors = 1,0,0,1\nguard = area_decreasing\nsample_every = 1\n";
    let start = Instant::now();
    let outcome = run(&parse_config(text, &[]).map_err(fail)?).map_err(fail)?;
    let elapsed = start.elapsed();
    let rep = report(&outcome, 1e-6)?;
    let initial = outcome
        .records
        .first()
        .map_or(f64::NAN, |r| r.max_two_dilation);
    let grad = outcome.records.last().map_or(f64::NAN, |r| r.max_grad);
    check(
        outcome.status.kind == StopKind::Converged
            && rep.dilation_corridor_held
            && grad <= 1e-6
            && elapsed < limit,
        format!(
            "{} at step {}, two-dilation initially {initial:.4}, max over run {:.4}, \
             final max_grad {grad:.3e}, {elapsed:.2?}",
            outcome.status.kind.name(),
            outcome.status.step,
            rep.max_two_dilation,
        ),
    )
}

fn formulation_equivalence() -> Outcome {
    let family = MapFamily::ProductSine {
        amplitudes: vec![1.0],
        wavevectors: vec![vec![1, 0]],
        phases: vec![0.0],
    };
    let oracle = AnalyticMap::new(family.clone());
    let g = GridSpec::standard(&[32, 32]).map_err(fail)?;
    let mut exact_gap = 0.0f64;
    for k in 0..g.len() {
        let x = g.node_coordinates(k).map_err(fail)?;
        let p = &x[..2];
        let div = reference_div_form(&oracle, p).map_err(fail)?;
        let v = reference_velocity(&oracle, p).map_err(fail)?[0];
        let j1 = reference_j1(&oracle, p).map_err(fail)?;
        exact_gap = exact_gap.max((div - j1 * v).abs());
    }
    let est = observed_order(
        |n| {
            let g = GridSpec::standard(&[n, n])?;
            let map = family.build(g, TargetKind::Euclidean)?;
            let div = div_form_residual(&map, ORDER)?;
            let j = jet(&map, ORDER)?;
            let v = velocity(&j, &induced_metric(&j));
            let j1 = j1_field(&j)?;
            Ok((0..g.len())
                .map(|k| (div.values()[k] - j1.values()[k] * v[0].values()[k]).abs())
                .fold(0.0, f64::max))
        },
        &LEVELS,
    )
    .map_err(fail)?;
    let order = est.order().unwrap_or(f64::NAN);
    check(
        exact_gap <= 1e-12 && order >= 1.9,
        format!("exact-jet gap {exact_gap:.3e}, discrete gap order {order:.4}"),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let first = dir.join("bump.csv");
    let summary = dir.join("bump.json");
    if !first.exists() || !summary.exists() {
        return Err("criterion 3 produced no CSV/JSON to rerun".into());
    }
    let again = dir.join("rerun.csv");
    run_cli(&[
        "run".into(),
        summary.display().to_string(),
        format!("--csv={}", again.display()),
        format!("--json={}", dir.join("rerun.json").display()),
    ])?;
    let a = std::fs::read(&first).map_err(fail)?;
    let b = std::fs::read(&again).map_err(fail)?;
    check(
        a == b,
        format!(
            "{} CSV bytes, rerun {}",
            a.len(),
            if a == b { "identical" } else { "differs" }
        ),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let min = |m: u64| Duration::from_secs(60 * m);
    let criteria: Vec<Criterion> = vec![
        (
            "stationarity of minimal graphs",
            Box::new(|| stationary_linear_map(Duration::from_secs(10))),
        ),
        (
            "discretization order",
            Box::new(|| velocity_order(Duration::from_secs(30))),
        ),
        (
            "gradient-flow monotonicity",
            Box::new(|| gradient_flow_monotonicity(dir.path(), min(2))),
        ),
        (
            "area-preserving preservation",
            Box::new(|| area_preserving(min(10))),
        ),
        (
            "area-decreasing preservation",
            Box::new(|| area_decreasing(min(10))),
        ),
        ("formulation equivalence", Box::new(formulation_equivalence)),
        ("determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
