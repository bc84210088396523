//! Comparison schemes and an exhaustive oracle for tiny instances.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    assemble, fixed_point_power_control, Algorithm, PowerControl, SolveResult, UserOutcome,
};
use crate::assignment::{assign_channels, compute_ei};
use crate::error::SolverError;
use crate::model::{local_power, r_min, required_power, Assignment, PowerDecisionState};
use crate::scenario::{noise_power, ChannelRealization, NetworkScenario};

/// Every user processes locally.
pub fn local_only(scenario: &NetworkScenario) -> SolveResult {
    let started = Instant::now();
    let nu = scenario.num_users();
    let per_user: Vec<UserOutcome> = (0..nu)
        .map(|u| {
            let (cell, user) = scenario.locate(u);
            let task = scenario.task(u);
            let lp = local_power(task, scenario.cpu_exponent);
            UserOutcome {
                cell,
                user,
                offload: false,
                forced_local: false,
                channel: None,
                transmit_power: 0.0,
                tx_power: 0.0,
                local_power: lp,
                rate: 0.0,
                delay: task.delay_threshold,
                power: lp,
            }
        })
        .collect();
    let state = PowerDecisionState::zeros(nu, scenario.num_channels);
    SolveResult {
        algorithm: Algorithm::LocalOnly,
        total_power: crate::model::total_power(&state, scenario),
        offload: vec![false; nu],
        state,
        assignment: Assignment::empty(nu, scenario.num_channels),
        per_user,
        trace: Vec::new(),
        phases: Vec::new(),
        converged: true,
        iterations: 0,
        wall_time: started.elapsed().as_secs_f64(),
        final_fractionality: 0.0,
        final_lambda: 0.0,
        max_violation: 0.0,
        max_kkt_residual: 0.0,
    }
}

pub const DEFAULT_EQUAL_POWER_STEP_W: f64 = 1e-3;

/// Single common transmit level, raised in `step` increments until every offloader
/// meets its rate; users that cannot make it at `p_max` go local, then each remaining
/// user keeps offloading only if that beats local processing at the found level.
pub fn equal_power(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    step: f64,
) -> SolveResult {
    let started = Instant::now();
    let nu = scenario.num_users();
    let noise = noise_power(scenario);
    let eta = scenario.amplifier_efficiency;
    let assignment = assign_channels(&compute_ei(scenario, realization, None), scenario);
    let channel: Vec<usize> = (0..nu)
        .map(|u| assignment.channel_of(u).expect("one channel each"))
        .collect();
    let targets: Vec<f64> = scenario
        .tasks_flat()
        .map(|t| r_min(t, scenario.channel_bandwidth))
        .collect();
    let locals: Vec<f64> = scenario
        .tasks_flat()
        .map(|t| local_power(t, scenario.cpu_exponent))
        .collect();
    let mut active: Vec<bool> = scenario
        .tasks_flat()
        .map(|t| t.bit_stream_size > 0.0)
        .collect();
    let mut forced = vec![false; nu];
    let max_level = (scenario.p_max / step).floor() * step;

    let level = loop {
        // Smallest common level meeting user u's rate, given all active users at that level:
        // ℓ h / (σ² + ℓ X) ≥ c  ⇔  ℓ ≥ c σ² / (h - c X).
        let mut needed = vec![0.0; nu];
        for u in (0..nu).filter(|&u| active[u]) {
            let (k, _) = scenario.locate(u);
            let n = channel[u];
            let x: f64 = (0..nu)
                .filter(|&v| active[v] && channel[v] == n && scenario.locate(v).0 != k)
                .map(|v| realization.gain(v, n, k))
                .sum();
            let c = (targets[u] * std::f64::consts::LN_2).exp_m1();
            let h = realization.gain(u, n, k);
            let exact = if h > c * x {
                c * noise / (h - c * x)
            } else {
                f64::INFINITY
            };
            needed[u] = ((exact / step) * (1.0 - 1e-12)).ceil().max(1.0) * step;
        }
        let unreachable: Vec<usize> = (0..nu)
            .filter(|&u| active[u] && needed[u] > max_level)
            .collect();
        if !unreachable.is_empty() {
            for u in unreachable {
                active[u] = false;
                forced[u] = true;
            }
            continue;
        }
        let level = (0..nu)
            .filter(|&u| active[u])
            .map(|u| needed[u])
            .fold(0.0, f64::max);
        let losers: Vec<usize> = (0..nu)
            .filter(|&u| active[u] && locals[u] <= level / eta + scenario.circuit_power)
            .collect();
        if losers.is_empty() {
            break level;
        }
        for u in losers {
            active[u] = false;
        }
    };

    let mut state = PowerDecisionState::zeros(nu, scenario.num_channels);
    for u in (0..nu).filter(|&u| active[u]) {
        state.s[u] = 1.0;
        state.set_power(u, channel[u], level);
    }
    assemble(
        Algorithm::EqualPower,
        scenario,
        realization,
        assignment,
        state,
        active,
        forced,
        started,
    )
}

/// Minimum-cost assignment of rows to distinct columns (`rows <= cols`).
/// Returns the column of every row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // Potentials-based shortest augmenting path, 1-indexed with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Decoupled optimum with all inter-cell interference removed. Per cell, users are
/// matched to channels (or to local processing) at minimum interference-free cost,
/// so the bound holds against any one-channel-per-user solution.
pub fn interference_free_lower_bound(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
) -> SolveResult {
    let started = Instant::now();
    let nu = scenario.num_users();
    let nn = scenario.num_channels;
    let noise = noise_power(scenario);
    let eta = scenario.amplifier_efficiency;
    let mut channels = vec![Vec::new(); nu];
    let mut offload = vec![false; nu];
    let mut state = PowerDecisionState::zeros(nu, nn);
    for cell in 0..scenario.num_cells {
        let users: Vec<usize> = scenario.users_in_cell(cell).collect();
        let f = users.len();
        // Columns: N channels, then one private "local" column per user.
        let big = 1e30;
        let cost: Vec<Vec<f64>> = users
            .iter()
            .map(|&u| {
                let task = scenario.task(u);
                let lp = local_power(task, scenario.cpu_exponent);
                let r = r_min(task, scenario.channel_bandwidth);
                let mut row: Vec<f64> = (0..nn)
                    .map(|n| {
                        let p = required_power(r, realization.gain(u, n, cell) / noise);
                        if task.bit_stream_size > 0.0 && p < scenario.p_max {
                            p / eta + scenario.circuit_power
                        } else {
                            big
                        }
                    })
                    .collect();
                row.extend(std::iter::repeat_n(lp, f));
                row
            })
            .collect();
        let cols = hungarian(&cost);
        for (k, &u) in users.iter().enumerate() {
            let c = cols[k];
            if c < nn && cost[k][c] < cost[k][nn] {
                let task = scenario.task(u);
                let p = required_power(
                    r_min(task, scenario.channel_bandwidth),
                    realization.gain(u, c, cell) / noise,
                );
                channels[u] = vec![c];
                offload[u] = true;
                state.s[u] = 1.0;
                state.set_power(u, c, p);
            }
        }
    }
    let assignment = Assignment {
        num_channels: nn,
        channels,
    };
    let mut result = assemble(
        Algorithm::LowerBound,
        scenario,
        realization,
        assignment,
        state,
        offload,
        vec![false; nu],
        started,
    );
    // Rates and delays are reported interference-free, as the bound assumes.
    for o in result.per_user.iter_mut().filter(|o| o.offload) {
        let task = &scenario.tasks[o.cell][o.user];
        o.rate = r_min(task, scenario.channel_bandwidth);
        o.delay = task.delay_threshold;
    }
    result
}

/// Size limits under which the exhaustive oracle runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_total_users: usize,
    pub max_channels: usize,
    pub max_rounds: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_total_users: 6,
            max_channels: 4,
            max_rounds: 10_000,
        }
    }
}

/// Injective maps of `k` items into `n` slots, in lexicographic order.
fn injections(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    let mut used = vec![false; n];
    fn rec(k: usize, n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in 0..n {
            if !used[c] {
                used[c] = true;
                cur.push(c);
                rec(k, n, cur, used, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    rec(k, n, &mut cur, &mut used, &mut out);
    out
}

/// Exhaustive minimum over binary decisions and one-channel-per-user assignments,
/// with minimum powers from fixed-point power control.
pub fn brute_force_oracle(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    limits: &OracleLimits,
) -> Result<SolveResult, SolverError> {
    let started = Instant::now();
    let nu = scenario.num_users();
    let nn = scenario.num_channels;
    let max_f = scenario.users_per_cell.iter().copied().max().unwrap_or(0);
    if nu > limits.max_total_users || nn > limits.max_channels || max_f > nn {
        return Err(SolverError::TooLarge(format!(
            "{nu} users and {nn} channels (limits: {} users, {} channels)",
            limits.max_total_users, limits.max_channels
        )));
    }
    let eta = scenario.amplifier_efficiency;
    let targets: Vec<f64> = scenario
        .tasks_flat()
        .map(|t| r_min(t, scenario.channel_bandwidth))
        .collect();
    let locals: Vec<f64> = scenario
        .tasks_flat()
        .map(|t| local_power(t, scenario.cpu_exponent))
        .collect();
    let eligible: Vec<usize> = (0..nu)
        .filter(|&u| scenario.task(u).bit_stream_size > 0.0)
        .collect();

    let mut best: Option<(f64, Vec<Option<usize>>, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << eligible.len()) {
        let offload: Vec<bool> = {
            let mut o = vec![false; nu];
            for (b, &u) in eligible.iter().enumerate() {
                o[u] = mask & (1 << b) != 0;
            }
            o
        };
        // Processing capacity holds with equality rates, so it depends on s only.
        let over = (0..scenario.num_cells).any(|cell| {
            scenario
                .users_in_cell(cell)
                .filter(|&u| offload[u])
                .map(|u| targets[u])
                .sum::<f64>()
                > scenario.proc_capacity[cell] * (1.0 + 1e-12)
        });
        if over {
            continue;
        }
        let per_cell: Vec<(Vec<usize>, Vec<Vec<usize>>)> = (0..scenario.num_cells)
            .map(|cell| {
                let offs: Vec<usize> = scenario
                    .users_in_cell(cell)
                    .filter(|&u| offload[u])
                    .collect();
                let maps = injections(offs.len(), nn);
                (offs, maps)
            })
            .collect();
        let local_sum: f64 = (0..nu).filter(|&u| !offload[u]).map(|u| locals[u]).sum();
        let mut idx = vec![0usize; per_cell.len()];
        loop {
            let mut channel = vec![None; nu];
            for (c, (offs, maps)) in per_cell.iter().enumerate() {
                for (k, &u) in offs.iter().enumerate() {
                    channel[u] = Some(maps[idx[c]][k]);
                }
            }
            if let PowerControl::Converged { powers, .. } = fixed_point_power_control(
                scenario,
                realization,
                &channel,
                &targets,
                limits.max_rounds,
            ) {
                let cost = local_sum
                    + (0..nu)
                        .filter(|&u| offload[u])
                        .map(|u| powers[u] / eta + scenario.circuit_power)
                        .sum::<f64>();
                if best.as_ref().is_none_or(|(b, _, _)| cost < *b) {
                    best = Some((cost, channel, powers));
                }
            }
            // Odometer over the per-cell assignment lists.
            let mut c = 0;
            loop {
                if c == idx.len() {
                    break;
                }
                idx[c] += 1;
                if idx[c] < per_cell[c].1.len() {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
            if c == idx.len() {
                break;
            }
        }
    }
    let (_, channel, powers) = best.expect("all-local configuration is always feasible");
    let mut state = PowerDecisionState::zeros(nu, nn);
    let mut offload = vec![false; nu];
    let mut channels = vec![Vec::new(); nu];
    for u in 0..nu {
        if let Some(n) = channel[u] {
            offload[u] = true;
            state.s[u] = 1.0;
            state.set_power(u, n, powers[u]);
            channels[u] = vec![n];
        }
    }
    let assignment = Assignment {
        num_channels: nn,
        channels,
    };
    Ok(assemble(
        Algorithm::Oracle,
        scenario,
        realization,
        assignment,
        state,
        offload,
        vec![false; nu],
        started,
    ))
}
