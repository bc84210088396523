//! Closed-form power, rate, SINR, interference and delay computations.

use serde::{Deserialize, Serialize};

use crate::scenario::{ChannelRealization, NetworkScenario, TaskSpec};

/// Sub-channel ownership. `channels[u]` lists the channels held by global user `u`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub num_channels: usize,
    pub channels: Vec<Vec<usize>>,
}

impl Assignment {
    pub fn empty(num_users: usize, num_channels: usize) -> Self {
        Self {
            num_channels,
            channels: vec![Vec::new(); num_users],
        }
    }

    /// One channel per user.
    pub fn from_single(num_channels: usize, single: &[usize]) -> Self {
        Self {
            num_channels,
            channels: single.iter().map(|&n| vec![n]).collect(),
        }
    }

    pub fn owns(&self, u: usize, n: usize) -> bool {
        self.channels[u].contains(&n)
    }

    /// The (first) channel of user `u`, if any.
    pub fn channel_of(&self, u: usize) -> Option<usize> {
        self.channels[u].first().copied()
    }

    /// Binary tensor `a[i][j][n]`.
    pub fn to_tensor(&self, scenario: &NetworkScenario) -> Vec<Vec<Vec<u8>>> {
        (0..scenario.num_cells)
            .map(|i| {
                scenario
                    .users_in_cell(i)
                    .map(|u| {
                        (0..self.num_channels)
                            .map(|n| self.owns(u, n) as u8)
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Checks OFDMA exclusivity inside every cell.
    pub fn is_exclusive(&self, scenario: &NetworkScenario) -> bool {
        (0..scenario.num_cells).all(|i| {
            let mut taken = vec![false; self.num_channels];
            for u in scenario.users_in_cell(i) {
                for &n in &self.channels[u] {
                    if n >= self.num_channels || taken[n] {
                        return false;
                    }
                    taken[n] = true;
                }
            }
            true
        })
    }
}

/// Continuous optimization state: composite powers `p̃ = s·p`, relaxed decisions and penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDecisionState {
    pub num_channels: usize,
    /// `p[u * num_channels + n]`, watts.
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    pub lambda: f64,
}

impl PowerDecisionState {
    pub fn zeros(num_users: usize, num_channels: usize) -> Self {
        Self {
            num_channels,
            p: vec![0.0; num_users * num_channels],
            s: vec![0.0; num_users],
            lambda: 0.0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.s.len()
    }

    #[inline]
    pub fn power(&self, u: usize, n: usize) -> f64 {
        self.p[u * self.num_channels + n]
    }

    #[inline]
    pub fn set_power(&mut self, u: usize, n: usize, value: f64) {
        self.p[u * self.num_channels + n] = value;
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.p[u * self.num_channels..(u + 1) * self.num_channels]
    }

    pub fn user_sum_power(&self, u: usize) -> f64 {
        self.row(u).iter().sum()
    }

    /// Moves each user's total power onto its (new) first channel.
    pub fn remap_to(&mut self, assignment: &Assignment) {
        for u in 0..self.num_users() {
            let total = self.user_sum_power(u);
            let row = &mut self.p[u * self.num_channels..(u + 1) * self.num_channels];
            row.iter_mut().for_each(|x| *x = 0.0);
            if let Some(n) = assignment.channel_of(u) {
                row[n] = total;
            }
        }
    }
}

/// Local processing power `M (L/T)^m`.
pub fn local_power(task: &TaskSpec, m: f64) -> f64 {
    if task.bit_stream_size == 0.0 {
        return 0.0;
    }
    task.local_power_const * (task.bit_stream_size / task.delay_threshold).powf(m)
}

/// Radio power of one user: amplifier-scaled transmit power plus circuit power while offloading.
pub fn transmit_power_total(p_row: &[f64], s: f64, eta: f64, p_c: f64) -> f64 {
    p_row.iter().sum::<f64>() / eta + s * p_c
}

/// Bandwidth-normalized rate target `L / (T B)`.
pub fn r_min(task: &TaskSpec, bandwidth: f64) -> f64 {
    task.bit_stream_size / (task.delay_threshold * bandwidth)
}

pub fn sinr(p: f64, h: f64, noise: f64, interference: f64) -> f64 {
    p * h / (noise + interference)
}

/// Inter-cell interference `I_{i,n}` at base station `cell` on channel `n`.
pub fn interference(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    assignment: &Assignment,
    state: &PowerDecisionState,
    cell: usize,
    n: usize,
) -> f64 {
    let mut total = 0.0;
    for k in (0..scenario.num_cells).filter(|&k| k != cell) {
        for u in scenario.users_in_cell(k) {
            if assignment.owns(u, n) {
                total += state.power(u, n) * realization.gain(u, n, cell);
            }
        }
    }
    total
}

/// Interference seen by every base station on every channel, `I[cell * N + n]`.
pub fn interference_matrix(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    assignment: &Assignment,
    state: &PowerDecisionState,
) -> Vec<f64> {
    let (nc, nn) = (scenario.num_cells, scenario.num_channels);
    let mut out = vec![0.0; nc * nn];
    for u in 0..scenario.num_users() {
        let (k, _) = scenario.locate(u);
        for &n in &assignment.channels[u] {
            let p = state.power(u, n);
            if p == 0.0 {
                continue;
            }
            for i in (0..nc).filter(|&i| i != k) {
                out[i * nn + n] += p * realization.gain(u, n, i);
            }
        }
    }
    out
}

/// Normalized rate `Σ_n log2(1 + γ)` of global user `u` over its owned channels.
pub fn user_rate(
    scenario: &NetworkScenario,
    realization: &ChannelRealization,
    assignment: &Assignment,
    state: &PowerDecisionState,
    u: usize,
    noise: f64,
) -> f64 {
    let (cell, _) = scenario.locate(u);
    assignment.channels[u]
        .iter()
        .map(|&n| {
            let i = interference(scenario, realization, assignment, state, cell, n);
            let g = sinr(state.power(u, n), realization.gain(u, n, cell), noise, i);
            g.ln_1p() / std::f64::consts::LN_2
        })
        .sum()
}

/// Offloading delay: uplink transmission plus edge processing (downlink neglected).
/// `edge_rate = None` means infinitely fast edge processing.
pub fn offload_delay(bits: f64, uplink_rate_bps: f64, edge_rate: Option<f64>) -> f64 {
    bits / uplink_rate_bps + edge_rate.map_or(0.0, |f| bits / f)
}

/// Total power `Σ p̃/η + Σ s p_c + Σ (1 - s) M (L/T)^m`.
pub fn total_power(state: &PowerDecisionState, scenario: &NetworkScenario) -> f64 {
    let eta = scenario.amplifier_efficiency;
    let radio: f64 = state.p.iter().sum::<f64>() / eta;
    let decisions: f64 = state
        .s
        .iter()
        .zip(scenario.tasks_flat())
        .map(|(&s, t)| {
            s * scenario.circuit_power + (1.0 - s) * local_power(t, scenario.cpu_exponent)
        })
        .sum();
    radio + decisions
}

/// Power of one user under a binary decision: local power if `offload` is false,
/// otherwise transmit plus circuit power.
pub fn user_power(
    task: &TaskSpec,
    p_row: &[f64],
    offload: bool,
    scenario: &NetworkScenario,
) -> f64 {
    if offload {
        transmit_power_total(
            p_row,
            1.0,
            scenario.amplifier_efficiency,
            scenario.circuit_power,
        )
    } else {
        local_power(task, scenario.cpu_exponent)
    }
}

/// Minimum transmit power reaching rate `r` on a channel with unit-power SINR `ei`.
pub fn required_power(r: f64, ei: f64) -> f64 {
    (r * std::f64::consts::LN_2).exp_m1() / ei
}
