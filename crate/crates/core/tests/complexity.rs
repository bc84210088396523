//! Scaling sanity: measured solve-time exponents must not exceed the polynomial
//! worst-case bounds `Nc^4 F^3 N^3 (3F + N)` (J-PAD) and `... (2F + N)` (C-PAD).

use std::time::Instant;

use mec_offload::algorithms::{cpad, jpad, SolverOptions};
use mec_offload::scenario::{build_scenario, draw_channels, ScenarioConfig, UsersPerCell};

fn time_solver(users: usize, channels: usize, joint: bool) -> f64 {
    let s = build_scenario(&ScenarioConfig {
        users_per_cell: Some(UsersPerCell::Uniform(users)),
        num_channels: Some(channels),
        bit_stream_size_bits: Some(8000.0),
        ..Default::default()
    })
    .unwrap();
    let drops: Vec<_> = (0..4).map(|seed| draw_channels(&s, seed)).collect();
    (0..3)
        .map(|_| {
            let t = Instant::now();
            for r in &drops {
                if joint {
                    jpad(&s, r, &SolverOptions::default()).unwrap();
                } else {
                    cpad(&s, r, &SolverOptions::default()).unwrap();
                }
            }
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Local log-log slope of `F^3 N^3 (cF + N)` over the same range.
fn bound_slope_in_users(c: f64, fs: &[f64], n: f64) -> f64 {
    let ys: Vec<f64> = fs
        .iter()
        .map(|f| f.powi(3) * n.powi(3) * (c * f + n))
        .collect();
    loglog_slope(fs, &ys)
}

fn bound_slope_in_channels(c: f64, f: f64, ns: &[f64]) -> f64 {
    let ys: Vec<f64> = ns
        .iter()
        .map(|n| f.powi(3) * n.powi(3) * (c * f + n))
        .collect();
    loglog_slope(ns, &ys)
}

#[test]
fn solve_time_grows_no_faster_than_the_bounds() {
    let fs = [2.0, 4.0, 8.0];
    let ns = [10.0, 20.0, 40.0];
    for (joint, c) in [(true, 3.0), (false, 2.0)] {
        let tf: Vec<f64> = fs
            .iter()
            .map(|&f| time_solver(f as usize, 25, joint))
            .collect();
        let tn: Vec<f64> = ns
            .iter()
            .map(|&n| time_solver(5, n as usize, joint))
            .collect();
        let sf = loglog_slope(&fs, &tf);
        let sn = loglog_slope(&ns, &tn);
        let bf = bound_slope_in_users(c, &fs, 25.0);
        let bn = bound_slope_in_channels(c, 5.0, &ns);
        eprintln!("joint={joint}: users exponent {sf:.2} (bound {bf:.2}), channels exponent {sn:.2} (bound {bn:.2})");
        assert!(
            sf > 0.0 && sf <= bf + 0.5,
            "users exponent {sf:.2} vs bound {bf:.2}"
        );
        assert!(sn <= bn + 0.5, "channels exponent {sn:.2} vs bound {bn:.2}");
    }
}
