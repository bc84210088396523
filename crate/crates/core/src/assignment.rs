//! Effective-interference based sub-channel assignment.

use crate::model::{interference_matrix, Assignment, PowerDecisionState};
use crate::scenario::{noise_power, ChannelRealization, NetworkScenario};

/// Unit-power SINR of every (user, channel) pair, `ei[u * N + n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveInterferenceMatrix {
    pub num_channels: usize,
    pub ei: Vec<f64>,
}

impl EffectiveInterferenceMatrix {
    pub fn get(&self, u: usize, n: usize) -> f64 {
        self.ei[u * self.num_channels + n]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.ei[u * self.num_channels..(u + 1) * self.num_channels]
    }
}

/// `EI = h / (σ² + I)` with interference taken from `prior` (zero powers on the first pass).
pub fn compute_ei(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    prior: Option<(&Assignment, &PowerDecisionState)>,
) -> EffectiveInterferenceMatrix {
    let nn = scenario.num_channels;
    let noise = noise_power(scenario);
    let interf = match prior {
        Some((a, st)) => interference_matrix(scenario, realization, a, st),
        None => vec![0.0; scenario.num_cells * nn],
    };
    compute_ei_with(scenario, realization, &interf, noise)
}

/// EI from an explicit interference matrix `I[cell * N + n]`.
pub fn compute_ei_with(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    interference: &[f64],
    noise: f64,
) -> EffectiveInterferenceMatrix {
    let nn = scenario.num_channels;
    let mut ei = Vec::with_capacity(scenario.num_users() * nn);
    for u in 0..scenario.num_users() {
        let (cell, _) = scenario.locate(u);
        for n in 0..nn {
            ei.push(realization.gain(u, n, cell) / (noise + interference[cell * nn + n]));
        }
    }
    EffectiveInterferenceMatrix {
        num_channels: nn,
        ei,
    }
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (n, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((n, v));
        }
    }
    best
}

/// Greedy per-cell assignment: users in descending order of their best EI (lower
/// index first on ties) each take their highest-EI free channel (lowest index on ties).
/// Every user receives exactly one channel.
pub fn assign_channels(ei: &EffectiveInterferenceMatrix, scenario: &NetworkScenario) -> Assignment {
    let nn = scenario.num_channels;
    let mut single = vec![0usize; scenario.num_users()];
    for cell in 0..scenario.num_cells {
        let mut order: Vec<(usize, f64)> = scenario
            .users_in_cell(cell)
            .map(|u| (u, argmax(ei.row(u).iter().copied()).map_or(0.0, |(_, v)| v)))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut taken = vec![false; nn];
        for (u, _) in order {
            let row = ei.row(u);
            let (n, _) = argmax((0..nn).map(|n| if taken[n] { f64::NEG_INFINITY } else { row[n] }))
                .expect("users_per_cell <= num_channels");
            taken[n] = true;
            single[u] = n;
        }
    }
    Assignment::from_single(nn, &single)
}
