//! Network scenarios, geometry and stochastic channel realizations.
//!
//! A [`NetworkScenario`] is an immutable, validated description of the
//! network: cells, users, sub-channels, radio constants and per-user tasks.
//! [`draw_channels`] turns a scenario and a seed into a [`ChannelRealization`]
//! holding the linear power gain of every (source user, channel, receiving
//! base station) triple.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version of the scenario config file format.
pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_NUM_CELLS: usize = 7;
pub const DEFAULT_USERS_PER_CELL: usize = 5;
pub const DEFAULT_NUM_CHANNELS: usize = 25;
pub const DEFAULT_CHANNEL_BANDWIDTH_HZ: f64 = 200e3;
pub const DEFAULT_CELL_RADIUS_M: f64 = 500.0;
pub const DEFAULT_CARRIER_FREQUENCY_HZ: f64 = 2e9;
pub const DEFAULT_NOISE_PSD_DBM_HZ: f64 = -174.0;
pub const DEFAULT_P_MAX_DBM: f64 = 23.0;
pub const DEFAULT_CIRCUIT_POWER_W: f64 = 0.1;
pub const DEFAULT_AMPLIFIER_EFFICIENCY: f64 = 0.4;
pub const DEFAULT_CPU_EXPONENT: f64 = 3.0;
pub const DEFAULT_BIT_STREAM_SIZE_BITS: f64 = 2000.0;
pub const DEFAULT_DELAY_THRESHOLD_S: f64 = 0.1;
pub const DEFAULT_SHADOWING_STD_DB: f64 = 8.0;
pub const DEFAULT_MIN_DISTANCE_M: f64 = 10.0;

/// Local processing power (W) of the reference task `L = 2000 bits`, `T = 100 ms`.
/// The per-user constant `M` is derived from this anchor.
pub const DEFAULT_LOCAL_POWER_ANCHOR_W: f64 = 0.25;
pub const LOCAL_POWER_ANCHOR_BITS: f64 = 2000.0;
pub const LOCAL_POWER_ANCHOR_DELAY_S: f64 = 0.1;

/// Macro-cell path loss `PL(dB) = intercept + slope * log10(d / km) + extra_loss`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossModel {
    pub intercept_db: f64,
    pub slope_db: f64,
    /// Distance-independent link loss added on every link (penetration,
    /// receiver noise figure and implementation margins lumped together).
    pub extra_loss_db: f64,
}

impl PathLossModel {
    pub const DEFAULT_EXTRA_LOSS_DB: f64 = 39.0;

    pub fn loss_db(&self, distance_m: f64) -> f64 {
        self.intercept_db + self.slope_db * (distance_m / 1000.0).log10() + self.extra_loss_db
    }

    /// Linear gain `10^(-PL/10)` at the given distance.
    pub fn gain(&self, distance_m: f64) -> f64 {
        db_to_linear(-self.loss_db(distance_m))
    }
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            intercept_db: 128.1,
            slope_db: 37.6,
            extra_loss_db: Self::DEFAULT_EXTRA_LOSS_DB,
        }
    }
}

/// Computation task of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Bit stream size `L` in bits.
    pub bit_stream_size: f64,
    /// Maximum acceptable delay `T` in seconds.
    pub delay_threshold: f64,
    /// Local power constant `M` in W·(s/bit)^m.
    pub local_power_const: f64,
}

/// Validated, immutable description of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub num_cells: usize,
    pub users_per_cell: Vec<usize>,
    pub num_channels: usize,
    pub channel_bandwidth: f64,
    pub cell_radius: f64,
    pub carrier_frequency: f64,
    pub noise_psd_dbm_hz: f64,
    pub p_max: f64,
    pub circuit_power: f64,
    pub amplifier_efficiency: f64,
    pub cpu_exponent: f64,
    /// Per-cell processing capacity, normalized rate (bits/s/Hz).
    pub proc_capacity: Vec<f64>,
    /// Edge processing throughput (bits/s); `None` means unlimited.
    pub edge_rate: Option<f64>,
    pub path_loss: PathLossModel,
    pub shadowing_std_db: f64,
    pub min_distance: f64,
    /// `tasks[i][j]` for user `j` of cell `i`.
    pub tasks: Vec<Vec<TaskSpec>>,
    cell_offsets: Vec<usize>,
}

/// Users per cell, either one count for all cells or one count per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UsersPerCell {
    Uniform(usize),
    PerCell(Vec<usize>),
}

/// Per-cell scalar that may be given once for all cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCellValue {
    Uniform(f64),
    PerCell(Vec<f64>),
}

/// Optional per-user task override inside a scenario config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskOverride {
    pub bit_stream_size_bits: Option<f64>,
    pub delay_threshold_s: Option<f64>,
    pub local_power_const: Option<f64>,
}

/// Structured scenario description as read from a config file. Every field is
/// optional; missing fields take the default simulation values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: Option<u32>,
    pub num_cells: Option<usize>,
    pub users_per_cell: Option<UsersPerCell>,
    pub num_channels: Option<usize>,
    pub channel_bandwidth_hz: Option<f64>,
    pub cell_radius_m: Option<f64>,
    pub carrier_frequency_hz: Option<f64>,
    pub noise_psd_dbm_hz: Option<f64>,
    pub p_max_dbm: Option<f64>,
    pub circuit_power_w: Option<f64>,
    pub amplifier_efficiency: Option<f64>,
    pub cpu_exponent: Option<f64>,
    pub proc_capacity: Option<PerCellValue>,
    pub edge_rate_bps: Option<f64>,
    pub bit_stream_size_bits: Option<f64>,
    pub delay_threshold_s: Option<f64>,
    /// Explicit `M`; takes precedence over `local_power_anchor_w`.
    pub local_power_const: Option<f64>,
    /// Local power (W) of the 2000 bit / 100 ms reference task, used to derive `M`.
    pub local_power_anchor_w: Option<f64>,
    pub path_loss: Option<PathLossModel>,
    pub shadowing_std_db: Option<f64>,
    pub min_distance_m: Option<f64>,
    /// `tasks[i][j]` overrides for individual users.
    pub tasks: Option<Vec<Vec<TaskOverride>>>,
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Local power constant `M` that makes the reference task draw `anchor_w` watts.
pub fn calibrate_local_power_const(anchor_w: f64, cpu_exponent: f64) -> f64 {
    anchor_w / (LOCAL_POWER_ANCHOR_BITS / LOCAL_POWER_ANCHOR_DELAY_S).powf(cpu_exponent)
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidScenario(msg.into())
}

/// Builds a validated scenario; unspecified fields take the default values.
pub fn build_scenario(config: &ScenarioConfig) -> Result<NetworkScenario> {
    if let Some(v) = config.schema_version {
        if v != SCENARIO_SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {v} (expected {SCENARIO_SCHEMA_VERSION})"
            )));
        }
    }
    let num_cells = config.num_cells.unwrap_or(DEFAULT_NUM_CELLS);
    if num_cells == 0 {
        return Err(invalid("num_cells must be at least 1"));
    }
    let users_per_cell = match &config.users_per_cell {
        None => vec![DEFAULT_USERS_PER_CELL; num_cells],
        Some(UsersPerCell::Uniform(f)) => vec![*f; num_cells],
        Some(UsersPerCell::PerCell(v)) => {
            if v.len() != num_cells {
                return Err(invalid(format!(
                    "users_per_cell has {} entries but num_cells is {num_cells}",
                    v.len()
                )));
            }
            v.clone()
        }
    };
    let num_channels = config.num_channels.unwrap_or(DEFAULT_NUM_CHANNELS);
    if num_channels == 0 {
        return Err(invalid("num_channels must be at least 1"));
    }
    if users_per_cell.contains(&0) {
        return Err(invalid("users_per_cell must be at least 1"));
    }
    if users_per_cell.iter().any(|&f| f > num_channels) {
        return Err(invalid("users_per_cell exceeds channels"));
    }

    let amplifier_efficiency = config
        .amplifier_efficiency
        .unwrap_or(DEFAULT_AMPLIFIER_EFFICIENCY);
    if !(amplifier_efficiency > 0.0 && amplifier_efficiency <= 1.0) {
        return Err(invalid("amplifier_efficiency must be in (0,1]"));
    }
    let p_max = dbm_to_watts(config.p_max_dbm.unwrap_or(DEFAULT_P_MAX_DBM));
    if !(p_max > 0.0 && p_max.is_finite()) {
        return Err(invalid("p_max must be positive"));
    }
    let channel_bandwidth = config
        .channel_bandwidth_hz
        .unwrap_or(DEFAULT_CHANNEL_BANDWIDTH_HZ);
    if !(channel_bandwidth > 0.0 && channel_bandwidth.is_finite()) {
        return Err(invalid("channel_bandwidth must be positive"));
    }
    let cell_radius = config.cell_radius_m.unwrap_or(DEFAULT_CELL_RADIUS_M);
    if !(cell_radius > 0.0 && cell_radius.is_finite()) {
        return Err(invalid("cell_radius must be positive"));
    }
    let circuit_power = config.circuit_power_w.unwrap_or(DEFAULT_CIRCUIT_POWER_W);
    if !(circuit_power >= 0.0 && circuit_power.is_finite()) {
        return Err(invalid("circuit_power must be non-negative"));
    }
    let cpu_exponent = config.cpu_exponent.unwrap_or(DEFAULT_CPU_EXPONENT);
    if !(cpu_exponent >= 1.0 && cpu_exponent.is_finite()) {
        return Err(invalid("cpu_exponent must be at least 1"));
    }
    let noise_psd_dbm_hz = config.noise_psd_dbm_hz.unwrap_or(DEFAULT_NOISE_PSD_DBM_HZ);
    if !noise_psd_dbm_hz.is_finite() {
        return Err(invalid("noise_psd must be finite"));
    }
    let shadowing_std_db = config.shadowing_std_db.unwrap_or(DEFAULT_SHADOWING_STD_DB);
    if !(shadowing_std_db >= 0.0 && shadowing_std_db.is_finite()) {
        return Err(invalid("shadowing_std_db must be non-negative"));
    }
    let min_distance = config.min_distance_m.unwrap_or(DEFAULT_MIN_DISTANCE_M);
    if !(min_distance > 0.0 && min_distance < cell_radius) {
        return Err(invalid("min_distance must be in (0, cell_radius)"));
    }
    let edge_rate = config.edge_rate_bps;
    if let Some(f) = edge_rate {
        if !(f > 0.0) {
            return Err(invalid("edge_rate_bps must be positive"));
        }
    }
    let path_loss = config.path_loss.unwrap_or_default();

    let default_l = config
        .bit_stream_size_bits
        .unwrap_or(DEFAULT_BIT_STREAM_SIZE_BITS);
    let default_t = config
        .delay_threshold_s
        .unwrap_or(DEFAULT_DELAY_THRESHOLD_S);
    let default_m = match config.local_power_const {
        Some(m) => m,
        None => calibrate_local_power_const(
            config
                .local_power_anchor_w
                .unwrap_or(DEFAULT_LOCAL_POWER_ANCHOR_W),
            cpu_exponent,
        ),
    };

    let mut tasks = Vec::with_capacity(num_cells);
    for (i, &f) in users_per_cell.iter().enumerate() {
        let mut row = Vec::with_capacity(f);
        for j in 0..f {
            let ov = config
                .tasks
                .as_ref()
                .and_then(|t| t.get(i))
                .and_then(|r| r.get(j))
                .cloned()
                .unwrap_or_default();
            let task = TaskSpec {
                bit_stream_size: ov.bit_stream_size_bits.unwrap_or(default_l),
                delay_threshold: ov.delay_threshold_s.unwrap_or(default_t),
                local_power_const: ov.local_power_const.unwrap_or(default_m),
            };
            // L = 0 is accepted as a degenerate always-local task.
            if !(task.bit_stream_size >= 0.0 && task.bit_stream_size.is_finite()) {
                return Err(invalid("bit_stream_size must be non-negative"));
            }
            if !(task.delay_threshold > 0.0 && task.delay_threshold.is_finite()) {
                return Err(invalid("delay_threshold must be positive"));
            }
            if !(task.local_power_const > 0.0 && task.local_power_const.is_finite()) {
                return Err(invalid("local_power_const must be positive"));
            }
            row.push(task);
        }
        tasks.push(row);
    }

    let proc_capacity = match &config.proc_capacity {
        Some(PerCellValue::Uniform(c)) => vec![*c; num_cells],
        Some(PerCellValue::PerCell(v)) => {
            if v.len() != num_cells {
                return Err(invalid("proc_capacity must have one entry per cell"));
            }
            v.clone()
        }
        None => {
            // Non-binding: ten times the aggregate rate demand of the network.
            let total: f64 = tasks
                .iter()
                .flatten()
                .map(|t| t.bit_stream_size / (t.delay_threshold * channel_bandwidth))
                .sum();
            vec![10.0 * total.max(1.0); num_cells]
        }
    };
    if proc_capacity.iter().any(|&c| !(c > 0.0)) {
        return Err(invalid("proc_capacity must be positive"));
    }

    let mut cell_offsets = Vec::with_capacity(num_cells + 1);
    let mut acc = 0;
    cell_offsets.push(0);
    for &f in &users_per_cell {
        acc += f;
        cell_offsets.push(acc);
    }

    Ok(NetworkScenario {
        num_cells,
        users_per_cell,
        num_channels,
        channel_bandwidth,
        cell_radius,
        carrier_frequency: config
            .carrier_frequency_hz
            .unwrap_or(DEFAULT_CARRIER_FREQUENCY_HZ),
        noise_psd_dbm_hz,
        p_max,
        circuit_power,
        amplifier_efficiency,
        cpu_exponent,
        proc_capacity,
        edge_rate,
        path_loss,
        shadowing_std_db,
        min_distance,
        tasks,
        cell_offsets,
    })
}

impl Default for NetworkScenario {
    fn default() -> Self {
        build_scenario(&ScenarioConfig::default()).expect("default scenario is valid")
    }
}

impl NetworkScenario {
    /// Total number of users across all cells.
    pub fn num_users(&self) -> usize {
        *self.cell_offsets.last().unwrap_or(&0)
    }

    /// Global index of user `j` in cell `i`.
    pub fn user_index(&self, cell: usize, user: usize) -> usize {
        debug_assert!(user < self.users_per_cell[cell]);
        self.cell_offsets[cell] + user
    }

    pub fn users_in_cell(&self, cell: usize) -> std::ops::Range<usize> {
        self.cell_offsets[cell]..self.cell_offsets[cell + 1]
    }

    /// `(cell, user-in-cell)` of a global user index.
    pub fn locate(&self, u: usize) -> (usize, usize) {
        let cell = self.cell_offsets.partition_point(|&o| o <= u) - 1;
        (cell, u - self.cell_offsets[cell])
    }

    pub fn task(&self, u: usize) -> &TaskSpec {
        let (i, j) = self.locate(u);
        &self.tasks[i][j]
    }

    pub fn tasks_flat(&self) -> impl Iterator<Item = &TaskSpec> {
        self.tasks.iter().flatten()
    }

    /// Sets `L` for every user (sweep helper).
    pub fn with_bit_stream_size(mut self, bits: f64) -> Self {
        self.tasks
            .iter_mut()
            .flatten()
            .for_each(|t| t.bit_stream_size = bits);
        self
    }

    /// Sets `T` for every user (sweep helper).
    pub fn with_delay_threshold(mut self, seconds: f64) -> Self {
        self.tasks
            .iter_mut()
            .flatten()
            .for_each(|t| t.delay_threshold = seconds);
        self
    }

    /// Base-station coordinates of every cell.
    pub fn cell_centers(&self) -> Vec<(f64, f64)> {
        hex_cell_centers(self.num_cells, 3f64.sqrt() * self.cell_radius)
    }
}

/// Noise power over one sub-channel in watts: `B * 10^((N0 - 30) / 10)`.
pub fn noise_power(scenario: &NetworkScenario) -> f64 {
    scenario.channel_bandwidth * dbm_to_watts(scenario.noise_psd_dbm_hz)
}

/// Centers of a hexagonal layout filled ring by ring around the origin.
pub fn hex_cell_centers(count: usize, inter_site_distance: f64) -> Vec<(f64, f64)> {
    // Axial directions of a hexagonal ring walk.
    const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let mut axial = vec![(0i64, 0i64)];
    let mut ring = 1i64;
    while axial.len() < count {
        // Start `ring` steps along the fifth direction, then walk the six sides.
        let (mut q, mut r) = (ring * DIRS[4].0, ring * DIRS[4].1);
        for dir in [DIRS[0], DIRS[1], DIRS[2], DIRS[3], DIRS[4], DIRS[5]] {
            for _ in 0..ring {
                axial.push((q, r));
                q += dir.0;
                r += dir.1;
            }
        }
        ring += 1;
    }
    axial.truncate(count);
    axial
        .into_iter()
        .map(|(q, r)| {
            let (q, r) = (q as f64, r as f64);
            (
                inter_site_distance * (q + r / 2.0),
                inter_site_distance * (3f64.sqrt() / 2.0) * r,
            )
        })
        .collect()
}

/// Radial placement band, as fractions of the cell radius, for one tagged user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedUser {
    pub cell: usize,
    pub user: usize,
    pub radius_frac: (f64, f64),
}

/// Controls where users are dropped. Untagged users are area-uniform in their cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserPlacement {
    pub tagged: Option<TaggedUser>,
}

/// Linear power gains of one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    num_channels: usize,
    num_cells: usize,
    /// `[user][channel][receiving cell]`, user in global index order.
    gains: Vec<f64>,
    /// Position of every user (global index order).
    pub user_positions: Vec<(f64, f64)>,
    pub seed: u64,
}

impl ChannelRealization {
    /// Builds a realization from an explicit gain function
    /// `gain(src_cell, user, channel, dst_cell)`.
    pub fn from_fn(
        scenario: &NetworkScenario,
        mut gain: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let (nu, nn, nc) = (
            scenario.num_users(),
            scenario.num_channels,
            scenario.num_cells,
        );
        let mut gains = Vec::with_capacity(nu * nn * nc);
        for u in 0..nu {
            let (k, m) = scenario.locate(u);
            for n in 0..nn {
                for i in 0..nc {
                    let g = gain(k, m, n, i);
                    if !(g > 0.0 && g.is_finite()) {
                        return Err(invalid(format!(
                            "gain ({k},{m},{n},{i}) must be positive and finite, got {g}"
                        )));
                    }
                    gains.push(g);
                }
            }
        }
        Ok(Self {
            num_channels: nn,
            num_cells: nc,
            gains,
            user_positions: vec![(0.0, 0.0); nu],
            seed: 0,
        })
    }

    /// Gain `h^dst_{u,n}` from global user `u` on channel `n` to base station `dst`.
    #[inline]
    pub fn gain(&self, u: usize, n: usize, dst: usize) -> f64 {
        self.gains[(u * self.num_channels + n) * self.num_cells + dst]
    }

    /// Own-cell gain `h_{i,j,n}` of global user `u` located in `cell`.
    #[inline]
    pub fn own_gain(&self, u: usize, cell: usize, n: usize) -> f64 {
        self.gain(u, n, cell)
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn num_users(&self) -> usize {
        self.gains.len() / (self.num_channels * self.num_cells).max(1)
    }

    pub fn gains_raw(&self) -> &[f64] {
        &self.gains
    }

    /// Same realization with every cross-cell gain scaled by `factor`.
    pub fn with_cross_gains_scaled(&self, scenario: &NetworkScenario, factor: f64) -> Self {
        let mut out = self.clone();
        for u in 0..scenario.num_users() {
            let (k, _) = scenario.locate(u);
            for n in 0..self.num_channels {
                for i in 0..self.num_cells {
                    if i != k {
                        out.gains[(u * self.num_channels + n) * self.num_cells + i] *= factor;
                    }
                }
            }
        }
        out
    }

    /// Writes `src_cell,user,channel,dst_cell,gain` rows.
    pub fn write_csv<W: Write>(&self, scenario: &NetworkScenario, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["src_cell", "user", "channel", "dst_cell", "gain"])?;
        for u in 0..scenario.num_users() {
            let (k, m) = scenario.locate(u);
            for n in 0..self.num_channels {
                for i in 0..self.num_cells {
                    w.write_record([
                        k.to_string(),
                        m.to_string(),
                        n.to_string(),
                        i.to_string(),
                        format!("{:e}", self.gain(u, n, i)),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws one realization with every user area-uniform in its cell.
pub fn draw_channels(scenario: &NetworkScenario, seed: u64) -> ChannelRealization {
    draw_channels_with(scenario, seed, &UserPlacement::default())
}

/// Draws one realization. Gain = path loss x log-normal shadowing x unit-mean
/// exponential fast fading. Shadowing is drawn once per (user, base station)
/// link and shared by all sub-channels; fast fading is independent per channel.
pub fn draw_channels_with(
    scenario: &NetworkScenario,
    seed: u64,
    placement: &UserPlacement,
) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = scenario.cell_centers();
    let (nn, nc) = (scenario.num_channels, scenario.num_cells);
    let nu = scenario.num_users();
    let mut gains = Vec::with_capacity(nu * nn * nc);
    let mut positions = Vec::with_capacity(nu);
    let mut shadow_db = vec![0.0; nc];

    for u in 0..nu {
        let (k, m) = scenario.locate(u);
        let band = match placement.tagged {
            Some(t) if t.cell == k && t.user == m => t.radius_frac,
            _ => (0.0, 1.0),
        };
        let (dx, dy) = sample_annulus(&mut rng, scenario.cell_radius, band);
        let pos = (centers[k].0 + dx, centers[k].1 + dy);
        positions.push(pos);

        let mut path_gain = vec![0.0; nc];
        for i in 0..nc {
            let d = distance(pos, centers[i]).max(scenario.min_distance);
            path_gain[i] = scenario.path_loss.gain(d);
            let z: f64 = StandardNormal.sample(&mut rng);
            shadow_db[i] = scenario.shadowing_std_db * z;
        }
        for _n in 0..nn {
            for i in 0..nc {
                let fading: f64 = Exp1.sample(&mut rng);
                gains.push(path_gain[i] * db_to_linear(shadow_db[i]) * fading);
            }
        }
    }
    ChannelRealization {
        num_channels: nn,
        num_cells: nc,
        gains,
        user_positions: positions,
        seed,
    }
}

/// Area-uniform point in the annulus `[a, b] * radius` around the origin.
pub fn sample_annulus<R: Rng>(rng: &mut R, radius: f64, band: (f64, f64)) -> (f64, f64) {
    let (a, b) = band;
    let u: f64 = rng.random();
    let r = radius * (a * a + u * (b * b - a * a)).sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    (r * theta.cos(), r * theta.sin())
}

/// One random link gain at the given distance (path loss, shadowing and fading).
pub fn sample_link_gain<R: Rng>(scenario: &NetworkScenario, distance_m: f64, rng: &mut R) -> f64 {
    let d = distance_m.max(scenario.min_distance);
    let z: f64 = StandardNormal.sample(rng);
    let fading: f64 = Exp1.sample(rng);
    scenario.path_loss.gain(d) * db_to_linear(scenario.shadowing_std_db * z) * fading
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_config_takes_table_defaults() {
        let s = build_scenario(&ScenarioConfig::default()).unwrap();
        assert_eq!(s.num_cells, 7);
        assert_eq!(s.users_per_cell, vec![5; 7]);
        assert_eq!(s.num_channels, 25);
        assert_eq!(s.channel_bandwidth, 200e3);
        assert_eq!(s.circuit_power, 0.1);
        assert_eq!(s.amplifier_efficiency, 0.4);
        assert_eq!(s.cpu_exponent, 3.0);
        assert_relative_eq!(s.p_max, 0.199_526_231_496_888, max_relative = 1e-12);
        for t in s.tasks_flat() {
            assert_eq!(t.delay_threshold, 0.1);
            assert_eq!(t.bit_stream_size, 2000.0);
        }
        assert_eq!(s.num_users(), 35);
    }

    #[test]
    fn rejects_zero_efficiency() {
        let cfg = ScenarioConfig {
            amplifier_efficiency: Some(0.0),
            ..Default::default()
        };
        let err = build_scenario(&cfg).unwrap_err();
        assert!(
            err.to_string()
                .contains("amplifier_efficiency must be in (0,1]"),
            "{err}"
        );
    }

    #[test]
    fn rejects_more_users_than_channels() {
        let cfg = ScenarioConfig {
            users_per_cell: Some(UsersPerCell::Uniform(30)),
            num_channels: Some(25),
            ..Default::default()
        };
        let err = build_scenario(&cfg).unwrap_err();
        assert!(
            err.to_string().contains("users_per_cell exceeds channels"),
            "{err}"
        );
    }

    #[test]
    fn rejects_unknown_config_keys() {
        assert!(ScenarioConfig::from_json_str(r#"{"num_cels": 3}"#).is_err());
        let cfg = ScenarioConfig::from_json_str(r#"{"num_cells": 3, "users_per_cell": [1,2,3]}"#)
            .unwrap();
        let s = build_scenario(&cfg).unwrap();
        assert_eq!(s.num_users(), 6);
        assert_eq!(s.locate(3), (2, 0));
        assert_eq!(s.user_index(1, 1), 2);
    }

    #[test]
    fn noise_power_matches_hand_value() {
        let s = NetworkScenario::default();
        // 10^-17.4 mW/Hz = 3.981e-21 W/Hz over 200 kHz.
        assert_relative_eq!(
            noise_power(&s),
            7.962_143_411_069_94e-16,
            max_relative = 1e-9
        );

        let wide = build_scenario(&ScenarioConfig {
            channel_bandwidth_hz: Some(400e3),
            ..Default::default()
        })
        .unwrap();
        assert_relative_eq!(
            noise_power(&wide),
            2.0 * noise_power(&s),
            max_relative = 1e-12
        );

        let hot = build_scenario(&ScenarioConfig {
            noise_psd_dbm_hz: Some(-171.0),
            ..Default::default()
        })
        .unwrap();
        assert_relative_eq!(
            noise_power(&hot),
            noise_power(&s) * 10f64.powf(0.3),
            max_relative = 1e-12
        );
    }

    #[test]
    fn path_loss_slope_between_100_and_500_m() {
        let pl = PathLossModel::default();
        // (100/500)^3.76 evaluated independently.
        let expected = (0.2f64).powf(3.76);
        assert_relative_eq!(
            pl.gain(500.0) / pl.gain(100.0),
            expected,
            max_relative = 1e-12
        );
        assert_relative_eq!(expected, 2.37e-3, max_relative = 1e-2);
    }

    #[test]
    fn hexagonal_layout_has_six_equidistant_neighbours() {
        let c = hex_cell_centers(7, 1.0);
        assert_eq!(c[0], (0.0, 0.0));
        for p in &c[1..] {
            assert_relative_eq!(distance(*p, (0.0, 0.0)), 1.0, epsilon = 1e-12);
        }
        for a in 0..7 {
            for b in (a + 1)..7 {
                assert!(distance(c[a], c[b]) > 0.99);
            }
        }
        let c19 = hex_cell_centers(19, 1.0);
        assert_eq!(c19.len(), 19);
        for p in &c19[7..] {
            let d = distance(*p, (0.0, 0.0));
            assert!(d > 1.7 && d < 2.01, "{d}");
        }
    }

    #[test]
    fn same_seed_same_tensor() {
        let s = NetworkScenario::default();
        let a = draw_channels(&s, 42);
        let b = draw_channels(&s, 42);
        assert_eq!(a.gains_raw(), b.gains_raw());
        assert_eq!(a.user_positions, b.user_positions);
        let c = draw_channels(&s, 43);
        assert_ne!(a.gains_raw(), c.gains_raw());
    }

    #[test]
    fn users_stay_inside_their_cell() {
        let s = NetworkScenario::default();
        let centers = s.cell_centers();
        for seed in 0..20 {
            let r = draw_channels(&s, seed);
            for u in 0..s.num_users() {
                let (k, _) = s.locate(u);
                assert!(distance(r.user_positions[u], centers[k]) <= s.cell_radius + 1e-9);
            }
            assert!(r.gains_raw().iter().all(|g| *g > 0.0 && g.is_finite()));
        }
    }

    #[test]
    fn tagged_user_lands_in_band() {
        let s = NetworkScenario::default();
        let centers = s.cell_centers();
        let placement = UserPlacement {
            tagged: Some(TaggedUser {
                cell: 0,
                user: 0,
                radius_frac: (0.9, 1.0),
            }),
        };
        for seed in 0..50 {
            let r = draw_channels_with(&s, seed, &placement);
            let d = distance(r.user_positions[0], centers[0]);
            assert!((450.0 - 1e-9..=500.0 + 1e-9).contains(&d), "{d}");
        }
    }

    #[test]
    fn csv_export_has_one_row_per_gain() {
        let s = build_scenario(&ScenarioConfig {
            num_cells: Some(2),
            users_per_cell: Some(UsersPerCell::Uniform(1)),
            num_channels: Some(2),
            ..Default::default()
        })
        .unwrap();
        let r = draw_channels(&s, 1);
        let mut buf = Vec::new();
        r.write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "src_cell,user,channel,dst_cell,gain");
        assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    }
}
