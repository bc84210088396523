//! J-PAD and C-PAD outer drivers, shared finalization and result types.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assignment::{assign_channels, compute_ei};
use crate::dc::{cell_subproblem, run_dc_loop, DcOptions, DcStep, SubproblemMode};
use crate::error::SolverError;
use crate::model::{
    interference_matrix, local_power, offload_delay, r_min, total_power, Assignment,
    PowerDecisionState,
};
use crate::scenario::{noise_power, ChannelRealization, NetworkScenario};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Jpad,
    Cpad,
    LocalOnly,
    EqualPower,
    LowerBound,
    Oracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Jpad => "jpad",
            Algorithm::Cpad => "cpad",
            Algorithm::LocalOnly => "local_only",
            Algorithm::EqualPower => "equal_power",
            Algorithm::LowerBound => "lower_bound",
            Algorithm::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "jpad" => Algorithm::Jpad,
            "cpad" => Algorithm::Cpad,
            "local_only" => Algorithm::LocalOnly,
            "equal_power" => Algorithm::EqualPower,
            "lower_bound" => Algorithm::LowerBound,
            "oracle" => Algorithm::Oracle,
            _ => return None,
        })
    }
}

/// Geometric penalty ramp `λ_t = min(initial * factor^t, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSchedule {
    pub initial: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self {
            initial: 10.0,
            factor: 10.0,
            max: 1e5,
        }
    }
}

impl LambdaSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        (self.initial * self.factor.powi(iteration.min(i32::MAX as usize) as i32)).min(self.max)
    }
}

pub fn lambda_schedule(iteration: usize) -> f64 {
    LambdaSchedule::default().at(iteration)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_outer_iterations: usize,
    /// Converged once the largest per-entry power change drops below this (W).
    pub power_tol: f64,
    /// Outer iterations the rounded decisions must stay unchanged.
    pub stable_iterations: usize,
    pub lambda: LambdaSchedule,
    pub dc: DcOptions,
    /// Starting composite power as a fraction of `p_max`.
    pub initial_power_frac: f64,
    pub initial_s: f64,
    /// Keep the full per-phase D.C. trace in the result.
    pub record_phases: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 30,
            power_tol: 1e-6,
            stable_iterations: 2,
            lambda: LambdaSchedule::default(),
            dc: DcOptions::default(),
            initial_power_frac: 0.1,
            initial_s: 0.5,
            record_phases: false,
        }
    }
}

/// Final per-user figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub cell: usize,
    pub user: usize,
    pub offload: bool,
    /// Local because the rate target was unreachable or offloading became infeasible.
    pub forced_local: bool,
    pub channel: Option<usize>,
    /// Transmit power on the channel (W).
    pub transmit_power: f64,
    /// Radio power `p/η + p_c` while offloading, zero otherwise (W).
    pub tx_power: f64,
    pub local_power: f64,
    /// Normalized uplink rate (bits/s/Hz).
    pub rate: f64,
    pub delay: f64,
    /// Power this user contributes to the total (W).
    pub power: f64,
}

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lambda: f64,
    /// Penalized network objective after the iteration's state update.
    pub objective: f64,
    pub total_power: f64,
    pub max_power_change: f64,
    pub max_kkt_residual: f64,
    pub max_fractionality: f64,
}

/// Trace of one per-cell D.C. loop at fixed λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub outer: usize,
    pub cell: usize,
    pub lambda: f64,
    pub steps: Vec<DcStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub algorithm: Algorithm,
    /// Binary offloading decision per global user.
    pub offload: Vec<bool>,
    pub state: PowerDecisionState,
    pub assignment: Assignment,
    pub total_power: f64,
    pub per_user: Vec<UserOutcome>,
    pub trace: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<PhaseTrace>,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time: f64,
    /// `max |s - round(s)|` before snapping.
    pub final_fractionality: f64,
    pub final_lambda: f64,
    /// Largest accepted-iterate constraint violation seen during the solve.
    pub max_violation: f64,
    pub max_kkt_residual: f64,
}

impl SolveResult {
    pub fn local_fraction(&self) -> f64 {
        if self.offload.is_empty() {
            return 0.0;
        }
        self.offload.iter().filter(|o| !**o).count() as f64 / self.offload.len() as f64
    }

    /// `s[i][j]` as 0/1.
    pub fn decisions(&self, scenario: &NetworkScenario) -> Vec<Vec<u8>> {
        (0..scenario.num_cells)
            .map(|i| {
                scenario
                    .users_in_cell(i)
                    .map(|u| self.offload[u] as u8)
                    .collect()
            })
            .collect()
    }
}

/// Minimum-power fixed point `p_u = (2^{R_u} - 1)(σ² + I_u(p)) / h_u` for users with a
/// channel, iterated from zero.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerControl {
    Converged {
        powers: Vec<f64>,
        rounds: usize,
    },
    /// `user` exceeded `p_max`; the minimal fixed point (if any) is infeasible.
    ExceedsCap {
        user: usize,
        powers: Vec<f64>,
    },
    Diverged,
}

pub fn fixed_point_power_control(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    channel: &[Option<usize>],
    targets: &[f64],
    max_rounds: usize,
) -> PowerControl {
    let nu = channel.len();
    let noise = noise_power(scenario);
    // Co-channel interferers of every active user: (other user, cross gain).
    let mut links: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nu];
    let mut own = vec![0.0; nu];
    let mut factor = vec![0.0; nu];
    for u in 0..nu {
        let Some(n) = channel[u] else { continue };
        let (k, _) = scenario.locate(u);
        own[u] = realization.gain(u, n, k);
        factor[u] = (targets[u] * LN2).exp_m1();
        for v in 0..nu {
            let (kv, _) = scenario.locate(v);
            if kv != k && channel[v] == Some(n) {
                links[u].push((v, realization.gain(v, n, k)));
            }
        }
    }
    let mut p = vec![0.0; nu];
    let mut next = vec![0.0; nu];
    for round in 0..max_rounds {
        let mut change = 0.0f64;
        let mut worst: Option<(usize, f64)> = None;
        for u in 0..nu {
            if channel[u].is_none() {
                continue;
            }
            let i: f64 = links[u].iter().map(|&(v, g)| p[v] * g).sum();
            next[u] = factor[u] * (noise + i) / own[u];
            change = change.max((next[u] - p[u]).abs() / next[u].max(1e-300));
            let ratio = next[u] / scenario.p_max;
            if ratio > 1.0 && worst.is_none_or(|(_, r)| ratio > r) {
                worst = Some((u, ratio));
            }
        }
        std::mem::swap(&mut p, &mut next);
        if let Some((u, _)) = worst {
            return PowerControl::ExceedsCap { user: u, powers: p };
        }
        if change < 1e-14 {
            return PowerControl::Converged {
                powers: p,
                rounds: round + 1,
            };
        }
    }
    PowerControl::Diverged
}

/// Turns binary decisions and an assignment into a feasible final state: minimum
/// powers by fixed-point power control, users that cannot be served dropped to
/// local, offloaders whose radio power exceeds their local power flipped to local,
/// and cells over their processing capacity trimmed.
pub fn finalize(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    assignment: &Assignment,
    mut offload: Vec<bool>,
    mut forced: Vec<bool>,
) -> (PowerDecisionState, Vec<bool>, Vec<bool>) {
    let nu = scenario.num_users();
    let targets: Vec<f64> = scenario
        .tasks_flat()
        .map(|t| r_min(t, scenario.channel_bandwidth))
        .collect();
    let locals: Vec<f64> = scenario
        .tasks_flat()
        .map(|t| local_power(t, scenario.cpu_exponent))
        .collect();
    for u in 0..nu {
        if scenario.task(u).bit_stream_size == 0.0 || assignment.channel_of(u).is_none() {
            offload[u] = false;
        }
    }
    let eta = scenario.amplifier_efficiency;
    loop {
        let channel: Vec<Option<usize>> = (0..nu)
            .map(|u| {
                if offload[u] {
                    assignment.channel_of(u)
                } else {
                    None
                }
            })
            .collect();
        let powers =
            match fixed_point_power_control(scenario, realization, &channel, &targets, 10_000) {
                PowerControl::Converged { powers, .. } => powers,
                PowerControl::ExceedsCap { user, .. } => {
                    offload[user] = false;
                    forced[user] = true;
                    continue;
                }
                PowerControl::Diverged => {
                    // Drop the most expensive offloader and retry.
                    let u = (0..nu)
                        .filter(|&u| offload[u])
                        .max_by(|&a, &b| targets[a].total_cmp(&targets[b]).then(b.cmp(&a)))
                        .expect("divergence needs offloaders");
                    offload[u] = false;
                    forced[u] = true;
                    continue;
                }
            };
        let mut changed = false;
        for u in 0..nu {
            if offload[u] && powers[u] / eta + scenario.circuit_power > locals[u] {
                offload[u] = false;
                changed = true;
            }
        }
        if !changed {
            for cell in 0..scenario.num_cells {
                let load: f64 = scenario
                    .users_in_cell(cell)
                    .filter(|&u| offload[u])
                    .map(|u| targets[u])
                    .sum();
                if load > scenario.proc_capacity[cell] * (1.0 + 1e-12) {
                    let u = scenario
                        .users_in_cell(cell)
                        .filter(|&u| offload[u])
                        .min_by(|&a, &b| {
                            let sa = locals[a] - powers[a] / eta;
                            let sb = locals[b] - powers[b] / eta;
                            sa.total_cmp(&sb)
                        })
                        .expect("overloaded cell has offloaders");
                    offload[u] = false;
                    changed = true;
                }
            }
        }
        if changed {
            continue;
        }
        let mut state = PowerDecisionState::zeros(nu, scenario.num_channels);
        for u in 0..nu {
            if offload[u] {
                state.s[u] = 1.0;
                state.set_power(
                    u,
                    assignment.channel_of(u).expect("offloader has a channel"),
                    powers[u],
                );
            }
        }
        return (state, offload, forced);
    }
}

/// Per-user outcomes and the total power of a binary final state.
pub fn outcomes(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    assignment: &Assignment,
    state: &PowerDecisionState,
    offload: &[bool],
    forced: &[bool],
) -> Vec<UserOutcome> {
    let noise = noise_power(scenario);
    let interf = interference_matrix(scenario, realization, assignment, state);
    let nn = scenario.num_channels;
    (0..scenario.num_users())
        .map(|u| {
            let (cell, user) = scenario.locate(u);
            let task = scenario.task(u);
            let lp = local_power(task, scenario.cpu_exponent);
            let channel = assignment.channel_of(u);
            if offload[u] {
                let n = channel.expect("offloader has a channel");
                let p = state.power(u, n);
                let rate = (p * realization.gain(u, n, cell) / (noise + interf[cell * nn + n]))
                    .ln_1p()
                    / LN2;
                let tx = p / scenario.amplifier_efficiency + scenario.circuit_power;
                UserOutcome {
                    cell,
                    user,
                    offload: true,
                    forced_local: false,
                    channel,
                    transmit_power: p,
                    tx_power: tx,
                    local_power: lp,
                    rate,
                    delay: offload_delay(
                        task.bit_stream_size,
                        rate * scenario.channel_bandwidth,
                        scenario.edge_rate,
                    ),
                    power: tx,
                }
            } else {
                UserOutcome {
                    cell,
                    user,
                    offload: false,
                    forced_local: forced[u],
                    channel,
                    transmit_power: 0.0,
                    tx_power: 0.0,
                    local_power: lp,
                    rate: 0.0,
                    delay: task.delay_threshold,
                    power: lp,
                }
            }
        })
        .collect()
}

/// Builds a [`SolveResult`] from binary decisions.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble(
    algorithm: Algorithm,
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    assignment: Assignment,
    state: PowerDecisionState,
    offload: Vec<bool>,
    forced: Vec<bool>,
    started: Instant,
) -> SolveResult {
    let per_user = outcomes(
        scenario,
        realization,
        &assignment,
        &state,
        &offload,
        &forced,
    );
    SolveResult {
        algorithm,
        total_power: total_power(&state, scenario),
        offload,
        state,
        assignment,
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

fn initial_state(
    scenario: &NetworkScenario,
    assignment: &Assignment,
    options: &SolverOptions,
) -> PowerDecisionState {
    let nu = scenario.num_users();
    let mut state = PowerDecisionState::zeros(nu, scenario.num_channels);
    for u in 0..nu {
        if scenario.task(u).bit_stream_size == 0.0 {
            continue;
        }
        state.s[u] = options.initial_s;
        let chans = &assignment.channels[u];
        for &n in chans {
            state.set_power(
                u,
                n,
                options.initial_power_frac * scenario.p_max / chans.len() as f64,
            );
        }
    }
    state
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn fractionality(s: &[f64]) -> f64 {
    s.iter().map(|s| (s - s.round()).abs()).fold(0.0, f64::max)
}

/// Joint power allocation and decision making.
pub fn jpad(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    options: &SolverOptions,
) -> Result<SolveResult, SolverError> {
    let started = Instant::now();
    let nu = scenario.num_users();
    let noise = noise_power(scenario);
    let mut assignment = assign_channels(&compute_ei(scenario, realization, None), scenario);
    let mut state = initial_state(scenario, &assignment, options);
    let mut forced = vec![false; nu];
    let mut trace = Vec::new();
    let mut phases = Vec::new();
    let mut prev_rounded: Option<Vec<bool>> = None;
    let mut stable = 0;
    let mut converged = false;
    let mut lambda = options.lambda.at(0);
    let mut max_violation = 0.0f64;
    let mut max_kkt = 0.0f64;
    let mut iterations = 0;

    for t in 0..options.max_outer_iterations {
        iterations = t + 1;
        lambda = options.lambda.at(t);
        if t > 0 {
            let ei = compute_ei(scenario, realization, Some((&assignment, &state)));
            assignment = assign_channels(&ei, scenario);
            state.remap_to(&assignment);
        }
        let interf = interference_matrix(scenario, realization, &assignment, &state);
        let mut iter_kkt = 0.0f64;
        let mut next = state.clone();
        forced.iter_mut().for_each(|f| *f = false);
        for cell in 0..scenario.num_cells {
            let mut excluded: Vec<usize> = Vec::new();
            let (outcome, globals) = loop {
                let (sub, globals) = cell_subproblem(
                    scenario,
                    realization,
                    &assignment,
                    &state,
                    &interf,
                    noise,
                    cell,
                    lambda,
                    SubproblemMode::Joint,
                    |u| !excluded.contains(&u),
                );
                match run_dc_loop(sub, &options.dc) {
                    Ok(out) => break (out, globals),
                    Err(SolverError::RateUnreachable { user, .. }) => {
                        excluded.push(scenario.user_index(cell, user));
                    }
                    Err(e) => return Err(e),
                }
            };
            for u in scenario.users_in_cell(cell) {
                let row = u * scenario.num_channels..(u + 1) * scenario.num_channels;
                next.p[row].iter_mut().for_each(|x| *x = 0.0);
                next.s[u] = 0.0;
            }
            for &u in &excluded {
                forced[u] = true;
            }
            for (k, &u) in globals.iter().enumerate() {
                next.s[u] = outcome.s[k];
                let n = assignment
                    .channel_of(u)
                    .expect("subproblem users hold a channel");
                next.set_power(u, n, outcome.p[k]);
            }
            for step in &outcome.steps {
                max_violation = max_violation.max(step.violation);
                max_kkt = max_kkt.max(step.kkt_residual);
                iter_kkt = iter_kkt.max(step.kkt_residual);
            }
            if options.record_phases {
                phases.push(PhaseTrace {
                    outer: t,
                    cell,
                    lambda,
                    steps: outcome.steps,
                });
            }
        }
        let change = max_abs_diff(&next.p, &state.p);
        state = next;
        state.lambda = lambda;
        let rounded: Vec<bool> = state.s.iter().map(|&s| s >= 0.5).collect();
        if prev_rounded.as_ref() == Some(&rounded) {
            stable += 1;
        } else {
            stable = 0;
        }
        prev_rounded = Some(rounded);
        trace.push(IterationRecord {
            iteration: t,
            lambda,
            objective: crate::dc::penalized_objective(&state, scenario, lambda),
            total_power: total_power(&state, scenario),
            max_power_change: change,
            max_fractionality: fractionality(&state.s),
            max_kkt_residual: iter_kkt,
        });
        if lambda >= options.lambda.max
            && change < options.power_tol
            && stable >= options.stable_iterations
        {
            converged = true;
            break;
        }
    }

    let final_fractionality = fractionality(&state.s);
    let offload: Vec<bool> = state.s.iter().map(|&s| s >= 0.5).collect();
    let (final_state, offload, forced) =
        finalize(scenario, realization, &assignment, offload, forced);
    let mut result = assemble(
        Algorithm::Jpad,
        scenario,
        realization,
        assignment,
        final_state,
        offload,
        forced,
        started,
    );
    result.trace = trace;
    result.phases = phases;
    result.converged = converged;
    result.iterations = iterations;
    result.final_fractionality = final_fractionality;
    result.final_lambda = lambda;
    result.max_violation = max_violation;
    result.max_kkt_residual = max_kkt;
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Offloading decision by direct power comparison: offload iff local power exceeds
/// the radio power needed at the current interference.
pub fn offload_decision(local_power: f64, tx_power: f64) -> bool {
    local_power > tx_power
}

/// Channel assignment, per-user decision by power comparison, then power-only solves.
pub fn cpad(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    options: &SolverOptions,
) -> Result<SolveResult, SolverError> {
    let started = Instant::now();
    let nu = scenario.num_users();
    let nn = scenario.num_channels;
    let noise = noise_power(scenario);
    let eta = scenario.amplifier_efficiency;
    let mut assignment = assign_channels(&compute_ei(scenario, realization, None), scenario);
    let mut state = PowerDecisionState::zeros(nu, nn);
    let mut forced = vec![false; nu];
    let mut offload = vec![false; nu];
    let mut trace = Vec::new();
    let mut phases = Vec::new();
    let mut prev: Option<Vec<bool>> = None;
    let mut stable = 0;
    let mut converged = false;
    let mut max_violation = 0.0f64;
    let mut max_kkt = 0.0f64;
    let mut iterations = 0;

    for t in 0..options.max_outer_iterations {
        iterations = t + 1;
        if t > 0 {
            let ei = compute_ei(scenario, realization, Some((&assignment, &state)));
            assignment = assign_channels(&ei, scenario);
            state.remap_to(&assignment);
        }
        let interf = interference_matrix(scenario, realization, &assignment, &state);
        let mut iter_kkt = 0.0f64;
        for u in 0..nu {
            let (cell, _) = scenario.locate(u);
            let task = scenario.task(u);
            forced[u] = false;
            offload[u] = false;
            if task.bit_stream_size == 0.0 {
                continue;
            }
            let n = assignment
                .channel_of(u)
                .expect("every user holds a channel");
            let ei = realization.gain(u, n, cell) / (noise + interf[cell * nn + n]);
            let p = crate::model::required_power(r_min(task, scenario.channel_bandwidth), ei);
            if !(p < scenario.p_max * (1.0 - 1e-9)) {
                forced[u] = true;
                continue;
            }
            offload[u] = offload_decision(
                local_power(task, scenario.cpu_exponent),
                p / eta + scenario.circuit_power,
            );
        }
        let mut next = PowerDecisionState::zeros(nu, nn);
        for cell in 0..scenario.num_cells {
            let (sub, globals) = cell_subproblem(
                scenario,
                realization,
                &assignment,
                &state,
                &interf,
                noise,
                cell,
                1.0,
                SubproblemMode::PowerOnly,
                |u| offload[u],
            );
            let outcome = match run_dc_loop(sub, &options.dc) {
                Ok(out) => out,
                Err(SolverError::InfeasibleStart { .. }) => {
                    // Capacity cannot host every offloader; the finalizer trims the cell.
                    continue;
                }
                Err(e) => return Err(e),
            };
            for (k, &u) in globals.iter().enumerate() {
                next.s[u] = 1.0;
                next.set_power(
                    u,
                    assignment.channel_of(u).expect("offloader holds a channel"),
                    outcome.p[k],
                );
            }
            for step in &outcome.steps {
                max_violation = max_violation.max(step.violation);
                max_kkt = max_kkt.max(step.kkt_residual);
                iter_kkt = iter_kkt.max(step.kkt_residual);
            }
            if options.record_phases {
                phases.push(PhaseTrace {
                    outer: t,
                    cell,
                    lambda: 0.0,
                    steps: outcome.steps,
                });
            }
        }
        let change = max_abs_diff(&next.p, &state.p);
        state = next;
        if prev.as_ref() == Some(&offload) {
            stable += 1;
        } else {
            stable = 0;
        }
        prev = Some(offload.clone());
        let tp = total_power(&state, scenario);
        trace.push(IterationRecord {
            iteration: t,
            lambda: 0.0,
            objective: tp,
            total_power: tp,
            max_power_change: change,
            max_fractionality: 0.0,
            max_kkt_residual: iter_kkt,
        });
        if change < options.power_tol && stable >= options.stable_iterations {
            converged = true;
            break;
        }
    }

    let (final_state, offload, forced) =
        finalize(scenario, realization, &assignment, offload, forced);
    let mut result = assemble(
        Algorithm::Cpad,
        scenario,
        realization,
        assignment,
        final_state,
        offload,
        forced,
        started,
    );
    result.trace = trace;
    result.phases = phases;
    result.converged = converged;
    result.iterations = iterations;
    result.max_violation = max_violation;
    result.max_kkt_residual = max_kkt;
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Largest violation of the binary problem's constraints by a result: power cap,
/// rate target of offloaders, processing capacity and OFDMA exclusivity.
pub fn constraint_violation(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    result: &SolveResult,
) -> f64 {
    let noise = noise_power(scenario);
    let mut worst = 0.0f64;
    if !result.assignment.is_exclusive(scenario) {
        return f64::INFINITY;
    }
    let mut load = vec![0.0; scenario.num_cells];
    for u in 0..scenario.num_users() {
        let (cell, _) = scenario.locate(u);
        let sum = result.state.user_sum_power(u);
        worst = worst.max(-result.state.row(u).iter().fold(0.0f64, |m, &p| m.min(p)));
        let s = result.state.s[u];
        worst = worst.max(sum - s * scenario.p_max);
        if s != 0.0 && s != 1.0 {
            return f64::INFINITY;
        }
        if result.offload[u] {
            let rate = crate::model::user_rate(
                scenario,
                realization,
                &result.assignment,
                &result.state,
                u,
                noise,
            );
            let target = r_min(scenario.task(u), scenario.channel_bandwidth);
            worst = worst.max(target - rate);
            load[cell] += rate;
        }
    }
    for cell in 0..scenario.num_cells {
        worst = worst.max(load[cell] - scenario.proc_capacity[cell] * (1.0 + 1e-12));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, draw_channels, ScenarioConfig, UsersPerCell};

    fn single_user(l: f64, t: f64, gain: f64) -> (NetworkScenario, ChannelRealization) {
        let s = build_scenario(&ScenarioConfig {
            num_cells: Some(1),
            users_per_cell: Some(UsersPerCell::Uniform(1)),
            num_channels: Some(1),
            bit_stream_size_bits: Some(l),
            delay_threshold_s: Some(t),
            ..Default::default()
        })
        .unwrap();
        let r = ChannelRealization::from_fn(&s, |_, _, _, _| gain).unwrap();
        (s, r)
    }

    #[test]
    fn lambda_schedule_examples() {
        assert_eq!(lambda_schedule(0), 10.0);
        assert_eq!(lambda_schedule(4), 1e5);
        assert_eq!(lambda_schedule(10), 1e5);
    }

    #[test]
    fn decision_rule_examples() {
        assert!(offload_decision(0.5, 0.35));
        assert!(!offload_decision(0.2, 0.35));
    }

    #[test]
    fn huge_task_offloads() {
        let noise = noise_power(&NetworkScenario::default());
        let (s, r) = single_user(50_000.0, 0.1, 1e4 * noise);
        let res = jpad(&s, &r, &SolverOptions::default()).unwrap();
        assert!(res.offload[0]);
        let res = cpad(&s, &r, &SolverOptions::default()).unwrap();
        assert!(res.offload[0]);
    }

    #[test]
    fn relaxed_deadline_stays_local() {
        let noise = noise_power(&NetworkScenario::default());
        let (s, r) = single_user(2000.0, 100.0, 1e4 * noise);
        let res = jpad(&s, &r, &SolverOptions::default()).unwrap();
        assert!(!res.offload[0]);
        assert_eq!(res.local_fraction(), 1.0);
    }

    #[test]
    fn power_control_meets_targets_with_equality() {
        let s = build_scenario(&ScenarioConfig {
            users_per_cell: Some(UsersPerCell::Uniform(3)),
            path_loss: Some(crate::scenario::PathLossModel {
                extra_loss_db: 0.0,
                ..Default::default()
            }),
            ..Default::default()
        })
        .unwrap();
        let r = draw_channels(&s, 4);
        let a = assign_channels(&compute_ei(&s, &r, None), &s);
        let targets: Vec<f64> = s
            .tasks_flat()
            .map(|t| r_min(t, s.channel_bandwidth))
            .collect();
        let channel: Vec<Option<usize>> = (0..s.num_users()).map(|u| a.channel_of(u)).collect();
        if let PowerControl::Converged { powers, .. } =
            fixed_point_power_control(&s, &r, &channel, &targets, 10_000)
        {
            let mut st = PowerDecisionState::zeros(s.num_users(), s.num_channels);
            for u in 0..s.num_users() {
                st.set_power(u, channel[u].unwrap(), powers[u]);
            }
            let noise = noise_power(&s);
            for u in 0..s.num_users() {
                let rate = crate::model::user_rate(&s, &r, &a, &st, u, noise);
                assert!(
                    (rate - targets[u]).abs() <= 1e-10 * targets[u],
                    "{rate} vs {}",
                    targets[u]
                );
            }
        } else {
            panic!("power control failed on a light-load drop");
        }
    }

    #[test]
    fn default_drop_is_feasible_and_deterministic() {
        let s = NetworkScenario::default();
        let r = draw_channels(&s, 17);
        let a = jpad(&s, &r, &SolverOptions::default()).unwrap();
        let b = jpad(&s, &r, &SolverOptions::default()).unwrap();
        assert_eq!(a.offload, b.offload);
        assert_eq!(a.state, b.state);
        assert_eq!(a.total_power, b.total_power);
        assert!(constraint_violation(&s, &r, &a) <= 1e-9);
        let recomputed: f64 = a.per_user.iter().map(|o| o.power).sum();
        assert!((recomputed - a.total_power).abs() <= 1e-9 * a.total_power);
        let c = cpad(&s, &r, &SolverOptions::default()).unwrap();
        assert!(constraint_violation(&s, &r, &c) <= 1e-9);
    }
}
