//! Worked examples checked against closed forms and independent quadrature.

use std::f64::consts::TAU;

use gmcf::flow::FlowState;
use gmcf::geometry::{area, induced_metric, jacobian2, jet};
use gmcf::grid::{diff1, GridSpec, ScalarField, StencilOrder};
use gmcf::maps::{MapFamily, TargetKind};
use gmcf::verification::{analytic_jet, observed_order, record, AnalyticMap, OrderEstimate};

fn torus(g: &GridSpec) -> TargetKind {
    TargetKind::Torus {
        periods: g.period().to_vec(),
    }
}

fn shear(eps: f64, delta: f64) -> MapFamily {
    MapFamily::ShearComposition {
        eps,
        delta,
        k1: 1,
        k2: 1,
    }
}

fn families() -> Vec<(MapFamily, TargetKind)> {
    let t = TargetKind::Torus {
        periods: vec![TAU, TAU],
    };
    vec![
        (MapFamily::Identity, t.clone()),
        (
            MapFamily::Linear {
                winding: vec![2.0, 1.0, 1.0, 1.0],
            },
            t.clone(),
        ),
        (shear(0.4, 0.3), t),
        (
            MapFamily::ProductSine {
                amplitudes: vec![0.9, 0.7],
                wavevectors: vec![vec![1, 0], vec![1, 2]],
                phases: vec![0.3, -1.1],
            },
            TargetKind::Euclidean,
        ),
        (
            MapFamily::ScalarBump {
                amplitude: 0.5,
                wavenumbers: vec![1, 2],
            },
            TargetKind::Euclidean,
        ),
    ]
}

#[test]
fn oracle_values_agree_with_constructors() {
    let g = GridSpec::standard(&[16, 16]).unwrap();
    for (family, target) in families() {
        let map = family.build(g, target).unwrap();
        let oracle = AnalyticMap::new(family.clone());
        for k in 0..g.len() {
            let x = g.node_coordinates(k).unwrap();
            let exact = analytic_jet(&oracle, &x[..2]).unwrap().value;
            for (a, v) in map.value_at(k).unwrap().iter().enumerate() {
                assert!((v - exact[a]).abs() <= 1e-12, "{} node {k}", family.name());
            }
        }
    }
}

#[test]
fn discrete_jets_converge_to_the_oracle() {
    for (family, target) in families() {
        let oracle = AnalyticMap::new(family.clone());
        let est = observed_order(
            |n| {
                let g = GridSpec::standard(&[n, n])?;
                let j = jet(&family.build(g, target.clone())?, StencilOrder::Second)?;
                let mut e = 0.0f64;
                for k in 0..g.len() {
                    let x = g.node_coordinates(k)?;
                    let exact = analytic_jet(&oracle, &x[..2])?;
                    for a in 0..exact.m {
                        for i in 0..2 {
                            e = e.max((j.d(k, a, i) - exact.d(a, i)).abs());
                            for jj in 0..2 {
                                e = e.max((j.d2(k, a, i, jj) - exact.d2(a, i, jj)).abs());
                            }
                        }
                    }
                }
                Ok(e)
            },
            &[16, 32, 64],
        )
        .unwrap();
        match est {
            OrderEstimate::Exact => assert!(matches!(
                family,
                MapFamily::Identity | MapFamily::Linear { .. }
            )),
            OrderEstimate::Observed { order, .. } => {
                assert!(order >= 1.9, "{}: order {order}", family.name())
            }
        }
    }
}

#[test]
fn diff1_of_sine_is_second_order() {
    let est = observed_order(
        |n| {
            let g = GridSpec::standard(&[n])?;
            let d = diff1(
                &ScalarField::from_fn(g, |x| x[0].sin()),
                0,
                StencilOrder::Second,
            )?;
            Ok((0..n)
                .map(|k| (d.values()[k] - (k as f64 * g.spacing(0)).cos()).abs())
                .fold(0.0, f64::max))
        },
        &[32, 64, 128],
    )
    .unwrap();
    let order = est.order().unwrap();
    assert!((1.9..=2.1).contains(&order), "{order}");
}

/// `integral of sqrt(4 + 0.25 cos^2 y)` over the torus: the rectangle rule on
/// the exact integrand at N = 128, 256, 512 combined by Richardson
/// extrapolation.
fn shear_area_oracle() -> f64 {
    let q = |n: usize| {
        let h = TAU / n as f64;
        let s: f64 = (0..n)
            .map(|j| {
                let c = (j as f64 * h).cos();
                (4.0 + 0.25 * c * c).sqrt()
            })
            .sum();
        TAU * s * h
    };
    let (a, b, c) = (q(128), q(256), q(512));
    let r1 = (4.0 * b - a) / 3.0;
    let r2 = (4.0 * c - b) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

#[test]
fn shear_area_matches_quadrature_oracle() {
    let exact = shear_area_oracle();
    let g = GridSpec::standard(&[64, 64]).unwrap();
    let map = shear(0.5, 0.0).build(g, torus(&g)).unwrap();
    let fourth = area(&induced_metric(&jet(&map, StencilOrder::Fourth).unwrap()));
    assert!(
        ((fourth - exact) / exact).abs() <= 1e-6,
        "{fourth} vs {exact}"
    );
    // second-order differences carry an O(h^2) area error
    let second = area(&induced_metric(&jet(&map, StencilOrder::Second).unwrap()));
    let h = g.spacing(0);
    assert!(((second - exact) / exact).abs() <= h * h);
}

#[test]
fn shear_composition_determinant_at_start() {
    let g = GridSpec::standard(&[64, 64]).unwrap();
    let map = shear(0.4, 0.4).build(g, torus(&g)).unwrap();
    let h2 = g.spacing(0).powi(2);
    let r = record(
        &FlowState::new(map.clone(), StencilOrder::Second).unwrap(),
        StencilOrder::Second,
    )
    .unwrap();
    let (lo, hi) = (r.min_det2.unwrap(), r.max_det2.unwrap());
    assert!(
        (lo - 1.0).abs() <= h2 && (hi - 1.0).abs() <= h2,
        "{lo} {hi}"
    );

    let est = observed_order(
        |n| {
            let g = GridSpec::standard(&[n, n])?;
            let d = jacobian2(&jet(
                &shear(0.4, 0.4).build(g, torus(&g))?,
                StencilOrder::Second,
            )?)?;
            Ok(d.values()
                .iter()
                .map(|v| (v - 1.0).abs())
                .fold(0.0, f64::max))
        },
        &[32, 64, 128],
    )
    .unwrap();
    assert!(est.order().unwrap() >= 1.9);
}
