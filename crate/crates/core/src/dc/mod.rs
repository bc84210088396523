//! Difference-of-convex machinery: concave rate pieces, first-order surrogates,
//! the penalized objective and the per-cell convex subproblem.
//!
//! Network-level functions operate on a flat variable vector laid out as
//! `[p̃ (user-major, N entries per user) | s (one entry per user)]`.

pub mod barrier;

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::model::{local_power, Assignment, PowerDecisionState};
use crate::scenario::{ChannelRealization, NetworkScenario};
use barrier::{BarrierOptions, BarrierProblem, ConcaveConstraint, LogTerm};

const LN2: f64 = std::f64::consts::LN_2;

/// Read-only view of the quantities the rate functions depend on.
#[derive(Debug, Clone, Copy)]
pub struct NetworkView<'a> {
    pub scenario: &'a NetworkScenario,
    pub realization: &'a ChannelRealization,
    pub assignment: &'a Assignment,
    pub noise: f64,
}

impl NetworkView<'_> {
    pub fn num_vars(&self) -> usize {
        self.scenario.num_users() * (self.scenario.num_channels + 1)
    }

    fn p_index(&self, u: usize, n: usize) -> usize {
        u * self.scenario.num_channels + n
    }

    /// Flattens a state into the variable layout.
    pub fn pack(&self, state: &PowerDecisionState) -> Vec<f64> {
        let mut x = state.p.clone();
        x.extend_from_slice(&state.s);
        x
    }

    /// Interference-plus-noise `σ² + Σ_{k≠i} Σ_m p̃ h` at `cell` on channel `n`, with gradient terms.
    fn interference_terms(&self, x: &[f64], cell: usize, n: usize) -> (f64, Vec<(usize, f64)>) {
        let mut total = self.noise;
        let mut terms = Vec::new();
        for v in 0..self.scenario.num_users() {
            let (k, _) = self.scenario.locate(v);
            if k == cell || !self.assignment.owns(v, n) {
                continue;
            }
            let h = self.realization.gain(v, n, cell);
            total += x[self.p_index(v, n)] * h;
            terms.push((self.p_index(v, n), h));
        }
        (total, terms)
    }
}

/// A smooth scalar function of the flat variable vector.
pub trait SmoothFn {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// `z_{i,j,n} = log2(p̃_{u,n} h_{u,n} + I_{i,n} + σ²)` for global user `u` of cell `i`.
pub struct ZFn<'a> {
    pub view: NetworkView<'a>,
    pub user: usize,
    pub channel: usize,
}

/// `q_{i,n} = log2(I_{i,n} + σ²)`.
pub struct QFn<'a> {
    pub view: NetworkView<'a>,
    pub cell: usize,
    pub channel: usize,
}

/// `f₂ = λ Σ s²`.
pub struct F2Fn {
    pub num_p: usize,
    pub lambda: f64,
}

/// `Q_{i,j} = Σ_n q_{i,n}` over the channels owned by user `u`.
pub struct QUserFn<'a> {
    pub view: NetworkView<'a>,
    pub user: usize,
}

/// `Z_i = Σ_j Σ_n z_{i,j,n}` over the users of `cell` and their owned channels.
pub struct ZCellFn<'a> {
    pub view: NetworkView<'a>,
    pub cell: usize,
}

impl SmoothFn for ZFn<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let (cell, _) = self.view.scenario.locate(self.user);
        let (base, _) = self.view.interference_terms(x, cell, self.channel);
        let own = x[self.view.p_index(self.user, self.channel)]
            * self.view.realization.gain(self.user, self.channel, cell);
        (own + base).log2()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (cell, _) = self.view.scenario.locate(self.user);
        let (base, terms) = self.view.interference_terms(x, cell, self.channel);
        let h = self.view.realization.gain(self.user, self.channel, cell);
        let total = x[self.view.p_index(self.user, self.channel)] * h + base;
        let mut g = vec![0.0; x.len()];
        g[self.view.p_index(self.user, self.channel)] = h / (LN2 * total);
        for (k, hk) in terms {
            g[k] = hk / (LN2 * total);
        }
        g
    }
}

impl SmoothFn for QFn<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.view
            .interference_terms(x, self.cell, self.channel)
            .0
            .log2()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (total, terms) = self.view.interference_terms(x, self.cell, self.channel);
        let mut g = vec![0.0; x.len()];
        for (k, hk) in terms {
            g[k] = hk / (LN2 * total);
        }
        g
    }
}

impl SmoothFn for F2Fn {
    fn value(&self, x: &[f64]) -> f64 {
        self.lambda * x[self.num_p..].iter().map(|s| s * s).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for k in self.num_p..x.len() {
            g[k] = 2.0 * self.lambda * x[k];
        }
        g
    }
}

impl SmoothFn for QUserFn<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let (cell, _) = self.view.scenario.locate(self.user);
        self.view.assignment.channels[self.user]
            .iter()
            .map(|&n| {
                QFn {
                    view: self.view,
                    cell,
                    channel: n,
                }
                .value(x)
            })
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (cell, _) = self.view.scenario.locate(self.user);
        let mut g = vec![0.0; x.len()];
        for &n in &self.view.assignment.channels[self.user] {
            for (a, b) in g.iter_mut().zip(
                QFn {
                    view: self.view,
                    cell,
                    channel: n,
                }
                .gradient(x),
            ) {
                *a += b;
            }
        }
        g
    }
}

impl SmoothFn for ZCellFn<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.view
            .scenario
            .users_in_cell(self.cell)
            .flat_map(|u| {
                self.view.assignment.channels[u]
                    .iter()
                    .map(move |&n| (u, n))
            })
            .map(|(u, n)| {
                ZFn {
                    view: self.view,
                    user: u,
                    channel: n,
                }
                .value(x)
            })
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for u in self.view.scenario.users_in_cell(self.cell) {
            for &n in &self.view.assignment.channels[u] {
                for (a, b) in g.iter_mut().zip(
                    ZFn {
                        view: self.view,
                        user: u,
                        channel: n,
                    }
                    .gradient(x),
                ) {
                    *a += b;
                }
            }
        }
        g
    }
}

/// First-order Taylor surrogate `g(x⁰) + ∇g(x⁰)·(x - x⁰)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSurrogate {
    pub point: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl AffineSurrogate {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.value
            + self
                .gradient
                .iter()
                .zip(x.iter().zip(&self.point))
                .map(|(g, (x, x0))| g * (x - x0))
                .sum::<f64>()
    }
}

/// Linearizes `f` at `point`.
pub fn linearize(f: &dyn SmoothFn, point: &[f64]) -> Result<AffineSurrogate, SolverError> {
    let gradient = f.gradient(point);
    if let Some(k) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(SolverError::NonFiniteGradient { coordinate: k });
    }
    Ok(AffineSurrogate {
        point: point.to_vec(),
        value: f.value(point),
        gradient,
    })
}

/// `f₁ = P_total + λ Σ s` (convex, linear here).
pub fn f1(state: &PowerDecisionState, scenario: &NetworkScenario, lambda: f64) -> f64 {
    crate::model::total_power(state, scenario) + lambda * state.s.iter().sum::<f64>()
}

/// `f₂ = λ Σ s²`.
pub fn f2(state: &PowerDecisionState, lambda: f64) -> f64 {
    lambda * state.s.iter().map(|s| s * s).sum::<f64>()
}

/// `P_total + λ Σ (s - s²)`.
pub fn penalized_objective(
    state: &PowerDecisionState,
    scenario: &NetworkScenario,
    lambda: f64,
) -> f64 {
    crate::model::total_power(state, scenario)
        + lambda * state.s.iter().map(|s| s * (1.0 - s)).sum::<f64>()
}

/// One user inside a per-cell subproblem. Interference from other cells is frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubUser {
    /// Index of the user within its cell.
    pub user: usize,
    pub channel: usize,
    /// Unit-power SINR `h / (σ² + I)` on the assigned channel.
    pub ei: f64,
    pub r_min: f64,
    pub local_power: f64,
    /// Linearization point.
    pub p0: f64,
    pub s0: f64,
}

impl SubUser {
    pub fn rate(&self, p: f64) -> f64 {
        (p * self.ei).ln_1p() / LN2
    }

    /// Minimum power reaching `s · R_min`.
    pub fn min_power(&self, s: f64) -> f64 {
        (s * self.r_min * LN2).exp_m1() / self.ei
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubproblemMode {
    /// Powers and relaxed decisions jointly.
    Joint,
    /// Powers only, every listed user offloads (`s = 1`).
    PowerOnly,
}

/// Convexified per-cell problem around a linearization point.
#[derive(Debug, Clone, PartialEq)]
pub struct DcSubproblem {
    pub cell: usize,
    pub users: Vec<SubUser>,
    pub lambda: f64,
    pub p_max: f64,
    pub eta: f64,
    pub p_c: f64,
    pub r_max_proc: f64,
    pub mode: SubproblemMode,
}

/// Solution of one convexified subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSolution {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    /// Surrogate objective at the solution (linearized penalty).
    pub surrogate: f64,
    pub kkt_residual: f64,
    pub gap: f64,
    pub newton_steps: usize,
}

impl DcSubproblem {
    /// True penalized objective of this cell: `Σ p/η + s p_c + (1 - s) P_loc + λ s (1 - s)`.
    pub fn objective(&self, p: &[f64], s: &[f64]) -> f64 {
        self.users
            .iter()
            .zip(p.iter().zip(s))
            .map(|(u, (&p, &s))| {
                p / self.eta
                    + s * self.p_c
                    + (1.0 - s) * u.local_power
                    + self.lambda * s * (1.0 - s)
            })
            .sum()
    }

    /// Objective with `f₂` replaced by its tangent at `s0`.
    pub fn surrogate_objective(&self, p: &[f64], s: &[f64]) -> f64 {
        self.users
            .iter()
            .zip(p.iter().zip(s))
            .map(|(u, (&p, &s))| {
                p / self.eta + s * self.p_c + (1.0 - s) * u.local_power + self.lambda * s
                    - self.lambda * (2.0 * u.s0 * s - u.s0 * u.s0)
            })
            .sum()
    }

    /// Linearized processing-capacity slack `R_max - Σ [r(p0) + r'(p0)(p - p0)]`.
    pub fn capacity_slack(&self, p: &[f64]) -> f64 {
        self.r_max_proc
            - self
                .users
                .iter()
                .zip(p)
                .map(|(u, &p)| u.rate(u.p0) + u.ei / (LN2 * (1.0 + u.ei * u.p0)) * (p - u.p0))
                .sum::<f64>()
    }

    /// Largest violation of the power cap, rate, capacity and box constraints (true
    /// functions, frozen interference). Zero when everything holds.
    pub fn violation(&self, p: &[f64], s: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        let mut rate_sum = 0.0;
        for (u, (&p, &s)) in self.users.iter().zip(p.iter().zip(s)) {
            let r = u.rate(p);
            rate_sum += r;
            worst = worst
                .max(-p)
                .max(p - s * self.p_max)
                .max(s * u.r_min - r)
                .max(-s)
                .max(s - 1.0);
        }
        worst.max(rate_sum - self.r_max_proc)
    }

    /// Checks every user can reach its rate at `p_max`.
    pub fn check_reachable(&self) -> Result<(), SolverError> {
        for u in &self.users {
            if !(u.min_power(1.0) < self.p_max * (1.0 - 1e-9)) {
                return Err(SolverError::RateUnreachable {
                    cell: self.cell,
                    user: u.user,
                });
            }
        }
        Ok(())
    }

    fn objective_scale(&self) -> f64 {
        self.users
            .iter()
            .map(|u| u.local_power + self.p_c + self.p_max / self.eta)
            .sum::<f64>()
            .max(1e-12)
    }
}

/// Maps the solver's reflected decision variable `w` back to `s`.
#[derive(Debug, Clone, Copy)]
struct Reflect {
    flipped: bool,
}

impl Reflect {
    fn offset(self) -> f64 {
        if self.flipped {
            1.0
        } else {
            0.0
        }
    }

    fn sign(self) -> f64 {
        if self.flipped {
            -1.0
        } else {
            1.0
        }
    }

    fn s(self, w: f64) -> f64 {
        self.offset() + self.sign() * w
    }
}

fn build_joint(sub: &DcSubproblem, p0_override: Option<&[f64]>) -> (BarrierProblem, Vec<Reflect>) {
    let f = sub.users.len();
    let mut objective = vec![0.0; 2 * f];
    let mut constraints = Vec::with_capacity(5 * f + 1);
    let mut reflect = Vec::with_capacity(f);
    let mut cap = ConcaveConstraint::affine(sub.r_max_proc, Vec::with_capacity(f));
    for (j, u) in sub.users.iter().enumerate() {
        let (xp, xw) = (2 * j, 2 * j + 1);
        let r = Reflect {
            flipped: u.s0 >= 0.5,
        };
        reflect.push(r);
        let s_coef = sub.p_c - u.local_power + sub.lambda * (1.0 - 2.0 * u.s0);
        objective[xp] = sub.p_max / sub.eta;
        objective[xw] = r.sign() * s_coef;
        constraints.push(ConcaveConstraint::positive(xp));
        constraints.push(ConcaveConstraint::positive(xw));
        constraints.push(ConcaveConstraint::affine(1.0, vec![(xw, -1.0)]));
        constraints.push(ConcaveConstraint::affine(
            r.offset(),
            vec![(xw, r.sign()), (xp, -1.0)],
        ));
        constraints.push(ConcaveConstraint {
            offset: -u.r_min * r.offset(),
            linear: vec![(xw, -u.r_min * r.sign())],
            logs: vec![LogTerm {
                var: xp,
                gain: u.ei * sub.p_max,
                weight: 1.0,
            }],
        });
        let p0 = p0_override.map_or(u.p0, |o| o[j]);
        let slope = u.ei / (LN2 * (1.0 + u.ei * p0));
        cap.offset -= u.rate(p0) - slope * p0;
        cap.linear.push((xp, -slope * sub.p_max));
    }
    constraints.push(cap);
    (
        BarrierProblem {
            objective,
            constraints,
        },
        reflect,
    )
}

fn build_power_only(sub: &DcSubproblem, p0_override: Option<&[f64]>) -> BarrierProblem {
    let f = sub.users.len();
    let mut objective = vec![0.0; f];
    let mut constraints = Vec::with_capacity(3 * f + 1);
    let mut cap = ConcaveConstraint::affine(sub.r_max_proc, Vec::with_capacity(f));
    for (j, u) in sub.users.iter().enumerate() {
        objective[j] = sub.p_max / sub.eta;
        constraints.push(ConcaveConstraint::positive(j));
        constraints.push(ConcaveConstraint::affine(1.0, vec![(j, -1.0)]));
        constraints.push(ConcaveConstraint {
            offset: -u.r_min,
            linear: vec![],
            logs: vec![LogTerm {
                var: j,
                gain: u.ei * sub.p_max,
                weight: 1.0,
            }],
        });
        let p0 = p0_override.map_or(u.p0, |o| o[j]);
        let slope = u.ei / (LN2 * (1.0 + u.ei * p0));
        cap.offset -= u.rate(p0) - slope * p0;
        cap.linear.push((j, -slope * sub.p_max));
    }
    constraints.push(cap);
    BarrierProblem {
        objective,
        constraints,
    }
}

/// Strictly feasible start for the joint problem: `s` halves from 0.5 until the
/// capacity constraint holds, with `p` midway between its rate floor and `s p_max`.
fn joint_start(
    sub: &DcSubproblem,
    problem: &BarrierProblem,
    reflect: &[Reflect],
) -> Option<Vec<f64>> {
    let mut s = 0.5;
    for _ in 0..40 {
        let mut x = Vec::with_capacity(2 * sub.users.len());
        for (u, r) in sub.users.iter().zip(reflect) {
            let lo = u.min_power(s);
            let p = 0.5 * (lo + s * sub.p_max);
            x.push(p / sub.p_max);
            x.push(if r.flipped { 1.0 - s } else { s });
        }
        if problem.is_strictly_feasible(&x) {
            return Some(x);
        }
        s *= 0.5;
    }
    None
}

fn power_only_start(sub: &DcSubproblem, problem: &BarrierProblem) -> Option<Vec<f64>> {
    let mut frac = 0.5;
    for _ in 0..40 {
        let x: Vec<f64> = sub
            .users
            .iter()
            .map(|u| {
                let lo = u.min_power(1.0);
                (lo + frac * (sub.p_max - lo)) / sub.p_max
            })
            .collect();
        if problem.is_strictly_feasible(&x) {
            return Some(x);
        }
        frac *= 0.5;
    }
    None
}

/// Relative duality-gap target used for the inner solves.
pub const DEFAULT_GAP_REL: f64 = 1e-11;

/// Solves the convexified subproblem with the barrier method.
pub fn solve_convex_subproblem(
    sub: &DcSubproblem,
    gap_rel: f64,
) -> Result<SubSolution, SolverError> {
    sub.check_reachable()?;
    let f = sub.users.len();
    if f == 0 {
        return Ok(SubSolution {
            p: vec![],
            s: vec![],
            surrogate: 0.0,
            kkt_residual: 0.0,
            gap: 0.0,
            newton_steps: 0,
        });
    }
    let options = BarrierOptions {
        gap_tol: gap_rel * sub.objective_scale(),
        ..Default::default()
    };
    let zeros = vec![0.0; f];
    match sub.mode {
        SubproblemMode::Joint => {
            let mut built = build_joint(sub, None);
            let mut start = joint_start(sub, &built.0, &built.1);
            if start.is_none() {
                // Tangent at zero has no intercept, so small powers become feasible.
                built = build_joint(sub, Some(&zeros));
                start = joint_start(sub, &built.0, &built.1);
            }
            let (problem, reflect) = built;
            let x0 = start.ok_or(SolverError::InfeasibleStart { cell: sub.cell })?;
            let sol = barrier::solve(&problem, &x0, &options)?;
            let p: Vec<f64> = (0..f).map(|j| sol.x[2 * j] * sub.p_max).collect();
            let s: Vec<f64> = (0..f)
                .map(|j| reflect[j].s(sol.x[2 * j + 1]).clamp(0.0, 1.0))
                .collect();
            Ok(SubSolution {
                surrogate: sub.surrogate_objective(&p, &s),
                p,
                s,
                kkt_residual: sol.kkt_residual,
                gap: sol.gap,
                newton_steps: sol.newton_steps,
            })
        }
        SubproblemMode::PowerOnly => {
            let mut problem = build_power_only(sub, None);
            let mut start = power_only_start(sub, &problem);
            if start.is_none() {
                problem = build_power_only(sub, Some(&zeros));
                start = power_only_start(sub, &problem);
            }
            let x0 = start.ok_or(SolverError::InfeasibleStart { cell: sub.cell })?;
            let sol = barrier::solve(&problem, &x0, &options)?;
            let p: Vec<f64> = sol.x.iter().map(|x| x * sub.p_max).collect();
            let s = vec![1.0; f];
            Ok(SubSolution {
                surrogate: sub.surrogate_objective(&p, &s),
                p,
                s,
                kkt_residual: sol.kkt_residual,
                gap: sol.gap,
                newton_steps: sol.newton_steps,
            })
        }
    }
}

/// One record of the D.C. loop trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcStep {
    pub iteration: usize,
    /// True penalized objective at the accepted iterate.
    pub objective: f64,
    pub kkt_residual: f64,
    pub max_fractionality: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcOutcome {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    pub steps: Vec<DcStep>,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcOptions {
    /// Stop when the objective changes by less than `rel_tol` times the first objective.
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub gap_rel: f64,
}

impl Default for DcOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_iterations: 50,
            gap_rel: DEFAULT_GAP_REL,
        }
    }
}

/// Iterates convexified solves, re-linearizing at each accepted iterate.
/// An iterate is rejected (and the loop ends) if it does not improve the surrogate
/// over the current feasible point.
pub fn run_dc_loop(mut sub: DcSubproblem, options: &DcOptions) -> Result<DcOutcome, SolverError> {
    let mut steps = Vec::new();
    let mut newton = 0;
    let mut cur_p: Vec<f64> = sub.users.iter().map(|u| u.p0).collect();
    let mut cur_s: Vec<f64> = sub.users.iter().map(|u| u.s0).collect();
    let mut first: Option<f64> = None;
    let mut prev: Option<f64> = None;
    for it in 0..options.max_iterations {
        let sol = solve_convex_subproblem(&sub, options.gap_rel)?;
        newton += sol.newton_steps;
        let current_feasible = it > 0 && sub.violation(&cur_p, &cur_s) <= 0.0;
        let (p, s) = if current_feasible && sol.surrogate > sub.surrogate_objective(&cur_p, &cur_s)
        {
            (cur_p.clone(), cur_s.clone())
        } else {
            (sol.p, sol.s)
        };
        let objective = sub.objective(&p, &s);
        steps.push(DcStep {
            iteration: it,
            objective,
            kkt_residual: sol.kkt_residual,
            max_fractionality: s.iter().map(|s| (s - s.round()).abs()).fold(0.0, f64::max),
            violation: sub.violation(&p, &s),
        });
        cur_p = p;
        cur_s = s;
        for (u, (&p, &s)) in sub.users.iter_mut().zip(cur_p.iter().zip(&cur_s)) {
            u.p0 = p;
            u.s0 = s;
        }
        let base = *first.get_or_insert(objective);
        if let Some(prev) = prev {
            if (prev - objective).abs() < options.rel_tol * base.abs().max(1e-12) {
                break;
            }
        }
        prev = Some(objective);
    }
    Ok(DcOutcome {
        p: cur_p,
        s: cur_s,
        steps,
        newton_steps: newton,
    })
}

/// Builds the per-cell subproblem of `cell` from the network state, with
/// interference frozen at `interference[cell * N + n]`. Users listed in `exclude`
/// (global indices) and users with empty tasks are left out.
#[allow(clippy::too_many_arguments)]
pub fn cell_subproblem(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    assignment: &Assignment,
    state: &PowerDecisionState,
    interference: &[f64],
    noise: f64,
    cell: usize,
    lambda: f64,
    mode: SubproblemMode,
    include: impl Fn(usize) -> bool,
) -> (DcSubproblem, Vec<usize>) {
    let nn = scenario.num_channels;
    let mut users = Vec::new();
    let mut globals = Vec::new();
    for u in scenario.users_in_cell(cell) {
        let task = scenario.task(u);
        let Some(n) = assignment.channel_of(u) else {
            continue;
        };
        if task.bit_stream_size == 0.0 || !include(u) {
            continue;
        }
        let h = realization.gain(u, n, cell);
        users.push(SubUser {
            user: u - scenario.users_in_cell(cell).start,
            channel: n,
            ei: h / (noise + interference[cell * nn + n]),
            r_min: crate::model::r_min(task, scenario.channel_bandwidth),
            local_power: local_power(task, scenario.cpu_exponent),
            p0: state.user_sum_power(u),
            s0: state.s[u],
        });
        globals.push(u);
    }
    let sub = DcSubproblem {
        cell,
        users,
        lambda,
        p_max: scenario.p_max,
        eta: scenario.amplifier_efficiency,
        p_c: scenario.circuit_power,
        r_max_proc: scenario.proc_capacity[cell],
        mode,
    };
    (sub, globals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        build_scenario, draw_channels, noise_power, ScenarioConfig, UsersPerCell,
    };
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> (NetworkScenario, ChannelRealization, Assignment) {
        let s = build_scenario(&ScenarioConfig {
            num_cells: Some(2),
            users_per_cell: Some(UsersPerCell::Uniform(2)),
            num_channels: Some(2),
            ..Default::default()
        })
        .unwrap();
        let r = draw_channels(&s, 9);
        let a = Assignment::from_single(2, &[0, 1, 1, 0]);
        (s, r, a)
    }

    /// Five-point central difference.
    fn central_diff(f: &dyn SmoothFn, x: &[f64], k: usize) -> f64 {
        let h = 1e-3 * x[k].abs().max(1e-9);
        let at = |d: f64| {
            let mut y = x.to_vec();
            y[k] += d;
            f.value(&y)
        };
        (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn z_and_q_identities() {
        let (s, r, a) = tiny();
        let noise = noise_power(&s);
        let view = NetworkView {
            scenario: &s,
            realization: &r,
            assignment: &a,
            noise,
        };
        let zero = vec![0.0; view.num_vars()];
        let z = ZFn {
            view,
            user: 0,
            channel: 0,
        };
        let q = QFn {
            view,
            cell: 0,
            channel: 0,
        };
        assert_relative_eq!(z.value(&zero), noise.log2(), max_relative = 1e-12);
        assert_relative_eq!(q.value(&zero), noise.log2(), max_relative = 1e-12);

        // Own power only: z - q is the single-channel rate.
        let mut x = zero.clone();
        x[0] = 1e-3;
        let g = 1e-3 * r.gain(0, 0, 0) / noise;
        assert_relative_eq!(
            z.value(&x) - q.value(&x),
            (1.0 + g).log2(),
            max_relative = 1e-10
        );

        // q ignores the user's own power.
        assert_eq!(q.value(&x), q.value(&zero));

        // Doubling all powers and the noise shifts z by exactly one.
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let view2 = NetworkView {
            noise: 2.0 * noise,
            ..view
        };
        let z2 = ZFn {
            view: view2,
            user: 0,
            channel: 0,
        };
        assert_relative_eq!(z2.value(&y) - z.value(&x), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn q_monotone_in_cross_gain() {
        let (s, r, a) = tiny();
        let noise = noise_power(&s);
        let mut x = vec![0.0; 12];
        // User 2 sits in cell 1 and owns channel 1.
        x[2 * 2 + 1] = 0.1;
        let base = QFn {
            view: NetworkView {
                scenario: &s,
                realization: &r,
                assignment: &a,
                noise,
            },
            cell: 0,
            channel: 1,
        }
        .value(&x);
        let boosted = r.with_cross_gains_scaled(&s, 10.0);
        let more = QFn {
            view: NetworkView {
                scenario: &s,
                realization: &boosted,
                assignment: &a,
                noise,
            },
            cell: 0,
            channel: 1,
        }
        .value(&x);
        assert!(more > base);
    }

    #[test]
    fn surrogate_bounds() {
        let (s, r, a) = tiny();
        let noise = noise_power(&s);
        let view = NetworkView {
            scenario: &s,
            realization: &r,
            assignment: &a,
            noise,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let point: Vec<f64> = (0..view.num_vars())
            .map(|_| rng.random_range(1e-4..0.2))
            .collect();
        let q = QUserFn { view, user: 0 };
        let z = ZCellFn { view, cell: 0 };
        let f2 = F2Fn {
            num_p: 8,
            lambda: 100.0,
        };
        let lq = linearize(&q, &point).unwrap();
        let lz = linearize(&z, &point).unwrap();
        let lf = linearize(&f2, &point).unwrap();
        assert_relative_eq!(lq.eval(&point), q.value(&point), max_relative = 1e-14);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..view.num_vars())
                .map(|_| rng.random_range(0.0..0.2))
                .collect();
            assert!(lq.eval(&x) >= q.value(&x) - 1e-12);
            assert!(lz.eval(&x) >= z.value(&x) - 1e-12);
            assert!(lf.eval(&x) <= f2.value(&x) + 1e-12);
        }
    }

    #[test]
    fn affine_function_is_reproduced_exactly() {
        struct Affine;
        impl SmoothFn for Affine {
            fn value(&self, x: &[f64]) -> f64 {
                3.0 + 2.0 * x[0] - x[1]
            }
            fn gradient(&self, _: &[f64]) -> Vec<f64> {
                vec![2.0, -1.0]
            }
        }
        let l = linearize(&Affine, &[0.3, 0.7]).unwrap();
        for x in [[0.0, 0.0], [5.0, -2.0], [1e3, 1e-3]] {
            assert_relative_eq!(l.eval(&x), Affine.value(&x), max_relative = 1e-14);
        }
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        struct Bad;
        impl SmoothFn for Bad {
            fn value(&self, _: &[f64]) -> f64 {
                0.0
            }
            fn gradient(&self, _: &[f64]) -> Vec<f64> {
                vec![0.0, f64::INFINITY]
            }
        }
        assert_eq!(
            linearize(&Bad, &[0.0, 0.0]).unwrap_err(),
            SolverError::NonFiniteGradient { coordinate: 1 }
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (s, r, a) = tiny();
        let noise = noise_power(&s);
        let view = NetworkView {
            scenario: &s,
            realization: &r,
            assignment: &a,
            noise,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x: Vec<f64> = (0..view.num_vars())
                .map(|_| rng.random_range(1e-3..0.2))
                .collect();
            let fns: Vec<Box<dyn SmoothFn>> = vec![
                Box::new(ZFn {
                    view,
                    user: 1,
                    channel: 1,
                }),
                Box::new(QFn {
                    view,
                    cell: 1,
                    channel: 0,
                }),
                Box::new(F2Fn {
                    num_p: 8,
                    lambda: 1e3,
                }),
            ];
            for f in &fns {
                let g = f.gradient(&x);
                for k in 0..x.len() {
                    let fd = central_diff(f.as_ref(), &x, k);
                    let scale = g[k]
                        .abs()
                        .max(1e-3 * g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                    // Cancellation error of the difference quotient itself.
                    let rounding = 100.0 * f64::EPSILON * f.value(&x).abs() / (1e-3 * x[k]);
                    assert!(
                        (g[k] - fd).abs() <= 1e-5 * scale + rounding,
                        "coord {k}: {} vs {fd}",
                        g[k]
                    );
                }
            }
        }
    }

    #[test]
    fn penalty_examples() {
        let s = build_scenario(&ScenarioConfig {
            num_cells: Some(1),
            users_per_cell: Some(UsersPerCell::Uniform(1)),
            num_channels: Some(1),
            ..Default::default()
        })
        .unwrap();
        let mut st = PowerDecisionState::zeros(1, 1);
        st.s[0] = 0.5;
        let p_total = crate::model::total_power(&st, &s);
        assert_relative_eq!(
            penalized_objective(&st, &s, 100.0) - p_total,
            25.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            penalized_objective(&st, &s, 0.0),
            p_total,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            f1(&st, &s, 100.0) - f2(&st, 100.0),
            penalized_objective(&st, &s, 100.0)
        );
        for bit in [0.0, 1.0] {
            st.s[0] = bit;
            assert_eq!(
                penalized_objective(&st, &s, 1e5),
                crate::model::total_power(&st, &s)
            );
        }
    }

    fn single(ei: f64, r_min: f64, local: f64, mode: SubproblemMode) -> DcSubproblem {
        DcSubproblem {
            cell: 0,
            users: vec![SubUser {
                user: 0,
                channel: 0,
                ei,
                r_min,
                local_power: local,
                p0: 0.01,
                s0: 0.5,
            }],
            lambda: 10.0,
            p_max: 0.2,
            eta: 0.4,
            p_c: 0.1,
            r_max_proc: 100.0,
            mode,
        }
    }

    #[test]
    fn single_user_closed_form_power() {
        let ei = 1e3;
        let sub = single(ei, 0.5, 2.0, SubproblemMode::Joint);
        let out = run_dc_loop(sub.clone(), &DcOptions::default()).unwrap();
        assert!(out.s[0] > 1.0 - 1e-6, "{:?}", out.s);
        let expected = (2f64.powf(0.5) - 1.0) / ei;
        assert_relative_eq!(out.p[0], expected, max_relative = 1e-6);

        let po = solve_convex_subproblem(&single(ei, 0.5, 2.0, SubproblemMode::PowerOnly), 1e-12)
            .unwrap();
        assert_relative_eq!(po.p[0], expected, max_relative = 1e-6);
    }

    #[test]
    fn zero_rate_targets_pick_cheaper_branch() {
        // Circuit power 0.1 W < local 0.3 W: offload with no transmit power.
        let out = run_dc_loop(
            single(1e3, 0.0, 0.3, SubproblemMode::Joint),
            &DcOptions::default(),
        )
        .unwrap();
        assert!(out.s[0] > 0.999 && out.p[0] < 1e-6, "{out:?}");
        // Local 0.05 W < circuit power: stay local.
        let out = run_dc_loop(
            single(1e3, 0.0, 0.05, SubproblemMode::Joint),
            &DcOptions::default(),
        )
        .unwrap();
        assert!(out.s[0] < 1e-3 && out.p[0] < 1e-6, "{out:?}");
    }

    #[test]
    fn unreachable_rate_is_reported() {
        let sub = single(1.0, 1.0, 1.0, SubproblemMode::Joint);
        assert_eq!(
            solve_convex_subproblem(&sub, 1e-11).unwrap_err(),
            SolverError::RateUnreachable { cell: 0, user: 0 }
        );
    }

    #[test]
    fn dc_loop_is_monotone_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let users: Vec<SubUser> = (0..5)
                .map(|j| SubUser {
                    user: j,
                    channel: j,
                    ei: 10f64.powf(rng.random_range(2.0..6.0)),
                    r_min: rng.random_range(0.05..1.0),
                    local_power: rng.random_range(0.05..2.0),
                    p0: rng.random_range(0.0..0.1),
                    s0: rng.random_range(0.0..1.0),
                })
                .collect();
            let sub = DcSubproblem {
                cell: 0,
                users,
                lambda: 10f64.powi(rng.random_range(1..6)),
                p_max: 0.2,
                eta: 0.4,
                p_c: 0.1,
                r_max_proc: rng.random_range(1.0..10.0),
                mode: SubproblemMode::Joint,
            };
            let Ok(out) = run_dc_loop(sub, &DcOptions::default()) else {
                continue;
            };
            for w in out.steps.windows(2) {
                assert!(
                    w[1].objective <= w[0].objective + 1e-8 * w[0].objective.abs(),
                    "{w:?}"
                );
            }
            assert!(
                out.steps.iter().all(|s| s.violation <= 1e-9),
                "{:?}",
                out.steps
            );
        }
    }
}
