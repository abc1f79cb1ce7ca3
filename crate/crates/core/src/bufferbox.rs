//! Zero-dimensional two-layer buffer model for suspended sediment.
//!
//! Three sediment fractions exchange mass between the water column, a thin
//! fluffy layer (S1) and a sandy buffer layer (S2). Deposition splits the
//! settling flux between the layers; S1 erodes above a per-fraction critical
//! stress and S2 releases fines through a pick-up function above the Shields
//! stress. The box is closed, so total mass is conserved.
//!
//! Units: time in days, concentrations in g/m³, areal masses in g/m², depth
//! in m. The pick-up factor is given per second and converted internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Parameter names in the order of the built-in North Sea configuration.
pub const PARAMETER_NAMES: [&str; 14] = [
    "V_sed_IM1",
    "V_sed_IM2",
    "V_sed_IM3",
    "Fr_IM1_sed_S2",
    "Fr_IM2_sed_S2",
    "Fr_IM3_sed_S2",
    "V_res_IM1",
    "V_res_IM2",
    "V_res_IM3",
    "Fact_res_Pup",
    "tau_cr_S1_IM1",
    "tau_cr_S1_IM2",
    "tau_cr_S1_IM3",
    "tau_Shields",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionParams {
    /// m/day
    pub settling_velocity: f64,
    /// Share of the settling flux that goes to S2.
    pub s2_fraction: f64,
    /// 1/day
    pub resuspension_rate: f64,
    /// Pa
    pub critical_stress: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferParams {
    pub fractions: [FractionParams; 3],
    /// Pick-up factor in kg/m²/s as conventionally quoted.
    pub pickup_factor: f64,
    /// Pa
    pub shields_stress: f64,
}

impl BufferParams {
    pub fn baseline() -> Self {
        let fraction = |settling_velocity, resuspension_rate| FractionParams {
            settling_velocity,
            s2_fraction: 0.15,
            resuspension_rate,
            critical_stress: 0.1,
        };
        BufferParams {
            fractions: [fraction(10.8, 0.2), fraction(86.4, 1.0), fraction(0.1, 1.0)],
            pickup_factor: 3e-8,
            shields_stress: 0.8,
        }
    }

    /// Baseline values overridden by the named entries.
    pub fn from_named<'a>(values: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let mut params = Self::baseline();
        for (name, value) in values {
            params.set(name, value)?;
        }
        params.validate()?;
        Ok(params)
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        let mut copy = *self;
        copy.slot(name)
            .map(|v| *v)
            .ok_or_else(|| Error::Bufferbox(format!("unknown parameter `{name}`")))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = self
            .slot(name)
            .ok_or_else(|| Error::Bufferbox(format!("unknown parameter `{name}`")))?;
        *slot = value;
        Ok(())
    }

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        match name {
            "Fact_res_Pup" => return Some(&mut self.pickup_factor),
            "tau_Shields" => return Some(&mut self.shields_stress),
            _ => {}
        }
        let i = PARAMETER_NAMES.iter().position(|&n| n == name)?;
        let f = match i {
            0..=8 => &mut self.fractions[i % 3],
            10..=12 => &mut self.fractions[i - 10],
            _ => return None,
        };
        Some(match i {
            0..=2 => &mut f.settling_velocity,
            3..=5 => &mut f.s2_fraction,
            6..=8 => &mut f.resuspension_rate,
            _ => &mut f.critical_stress,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.fractions.iter().enumerate() {
            let positive = [
                ("settling velocity", f.settling_velocity),
                ("resuspension rate", f.resuspension_rate),
                ("critical stress", f.critical_stress),
            ];
            for (what, v) in positive {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Bufferbox(format!("fraction {}: {what} must be positive, got {v}", i + 1)));
                }
            }
            if !(f.s2_fraction > 0.0 && f.s2_fraction < 1.0) {
                return Err(Error::Bufferbox(format!(
                    "fraction {}: S2 share must lie in (0, 1), got {}",
                    i + 1,
                    f.s2_fraction
                )));
            }
        }
        for (what, v) in [("pick-up factor", self.pickup_factor), ("Shields stress", self.shields_stress)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Bufferbox(format!("{what} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Pick-up factor per day.
    pub fn pickup_per_day(&self) -> f64 {
        self.pickup_factor * SECONDS_PER_DAY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxState {
    /// Water-column concentration per fraction, g/m³.
    pub concentration: [f64; 3],
    /// Areal mass in S1, g/m².
    pub fluff: [f64; 3],
    /// Areal mass in S2, g/m².
    pub buffer: [f64; 3],
    pub time: f64,
    pub depth: f64,
}

impl BoxState {
    /// Total sediment per unit area, g/m².
    pub fn total_mass(&self) -> f64 {
        self.depth * self.concentration.iter().sum::<f64>()
            + self.fluff.iter().sum::<f64>()
            + self.buffer.iter().sum::<f64>()
    }

    pub fn total_concentration(&self) -> f64 {
        self.concentration.iter().sum()
    }

    fn components(&self) -> impl Iterator<Item = f64> + '_ {
        self.concentration.iter().chain(&self.fluff).chain(&self.buffer).copied()
    }
}

/// Bed shear stress in Pa as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forcing {
    /// `amplitude |sin(2 pi t / period)|` plus a constant surplus during one storm.
    Tidal {
        amplitude: f64,
        period: f64,
        storm_start: f64,
        storm_duration: f64,
        storm_stress: f64,
    },
    /// Piecewise-constant values, one per `interval` days; the last value holds afterwards.
    Series { interval: f64, values: Vec<f64> },
}

impl Default for Forcing {
    fn default() -> Self {
        Forcing::Tidal {
            amplitude: 0.4,
            period: 0.5175,
            storm_start: 12.0,
            storm_duration: 2.0,
            storm_stress: 1.0,
        }
    }
}

impl Forcing {
    pub fn stress(&self, t: f64) -> f64 {
        match self {
            Forcing::Tidal {
                amplitude,
                period,
                storm_start,
                storm_duration,
                storm_stress,
            } => {
                let tide = amplitude * (std::f64::consts::TAU * t / period).sin().abs();
                let storm = if t >= *storm_start && t < storm_start + storm_duration {
                    *storm_stress
                } else {
                    0.0
                };
                tide + storm
            }
            Forcing::Series { interval, values } => {
                let k = ((t / interval).floor().max(0.0) as usize).min(values.len().saturating_sub(1));
                values.get(k).copied().unwrap_or(0.0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Forcing::Tidal {
                amplitude,
                period,
                storm_duration,
                storm_stress,
                ..
            } => {
                if *amplitude < 0.0 || *period <= 0.0 || *storm_duration < 0.0 || *storm_stress < 0.0 {
                    return Err(Error::Bufferbox("tidal forcing needs nonnegative stresses and a positive period".into()));
                }
            }
            Forcing::Series { interval, values } => {
                if *interval <= 0.0 || values.is_empty() || values.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Bufferbox("stress series needs a positive interval and nonnegative values".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub depth: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Spacing of the output series, days.
    pub output_interval: f64,
    pub initial_concentration: [f64; 3],
    pub initial_fluff: [f64; 3],
    pub initial_buffer: [f64; 3],
    pub forcing: Forcing,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            depth: 20.0,
            dt: 0.002,
            horizon: 30.0,
            output_interval: 1.0 / 24.0,
            initial_concentration: [5.0, 5.0, 5.0],
            initial_fluff: [10.0, 10.0, 10.0],
            initial_buffer: [5.0e4, 5.0e4, 5.0e4],
            forcing: Forcing::default(),
        }
    }
}

impl Scenario {
    pub fn initial_state(&self) -> BoxState {
        BoxState {
            concentration: self.initial_concentration,
            fluff: self.initial_fluff,
            buffer: self.initial_buffer,
            time: 0.0,
            depth: self.depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Bufferbox(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.depth > 0.0 && self.horizon > 0.0 && self.output_interval > 0.0) {
            return Err(Error::Bufferbox("depth, horizon and output interval must be positive".into()));
        }
        if self.initial_state().components().any(|v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Bufferbox("initial state must be finite and nonnegative".into()));
        }
        self.forcing.validate()
    }
}

/// Settling into S1 and S2 per fraction, g/m²/day.
pub fn deposition_fluxes(params: &BufferParams, state: &BoxState) -> [(f64, f64); 3] {
    std::array::from_fn(|i| {
        let f = &params.fractions[i];
        let settling = f.settling_velocity * state.concentration[i];
        ((1.0 - f.s2_fraction) * settling, f.s2_fraction * settling)
    })
}

/// S1 resuspension per fraction, g/m²/day; zero at or below the critical stress.
pub fn erosion_flux_s1(params: &BufferParams, state: &BoxState, tau: f64) -> [f64; 3] {
    std::array::from_fn(|i| {
        let f = &params.fractions[i];
        f.resuspension_rate * state.fluff[i] * (tau / f.critical_stress - 1.0).max(0.0)
    })
}

/// S2 pick-up per fraction, g/m²/day; zero at or below the Shields stress.
pub fn erosion_flux_s2(params: &BufferParams, state: &BoxState, tau: f64) -> [f64; 3] {
    let excess = (tau / params.shields_stress - 1.0).max(0.0).powf(1.5);
    std::array::from_fn(|i| params.pickup_per_day() * state.buffer[i] * excess)
}

/// One explicit Euler step under constant stress `tau`.
///
/// Each flux is capped so it cannot drain more than its source holds within
/// the step, which keeps every component nonnegative.
pub fn step(params: &BufferParams, state: &BoxState, tau: f64, dt: f64) -> Result<BoxState> {
    if !(dt > 0.0) {
        return Err(Error::Bufferbox(format!("time step must be positive, got {dt}")));
    }
    let h = state.depth;
    let deposition = deposition_fluxes(params, state);
    let e1 = erosion_flux_s1(params, state, tau);
    let e2 = erosion_flux_s2(params, state, tau);
    let mut next = *state;
    next.time = state.time + dt;
    for i in 0..3 {
        let (d1, d2) = deposition[i];
        let d_limit = limiter(d1 + d2, h * state.concentration[i], dt);
        let (d1, d2) = (d1 * d_limit, d2 * d_limit);
        let e1 = e1[i] * limiter(e1[i], state.fluff[i], dt);
        let e2 = e2[i] * limiter(e2[i], state.buffer[i], dt);

        next.concentration[i] = state.concentration[i] + dt * (e1 + e2 - d1 - d2) / h;
        next.fluff[i] = state.fluff[i] + dt * (d1 - e1);
        next.buffer[i] = state.buffer[i] + dt * (d2 - e2);
    }
    let scale = state.total_mass().max(f64::MIN_POSITIVE);
    for v in next
        .concentration
        .iter_mut()
        .chain(next.fluff.iter_mut())
        .chain(next.buffer.iter_mut())
    {
        if *v < 0.0 {
            // rounding residue from a fully drained compartment
            if *v < -1e-12 * scale {
                return Err(Error::Bufferbox(format!("negative state component {v} after limiting")));
            }
            *v = 0.0;
        }
    }
    Ok(next)
}

fn limiter(rate: f64, content: f64, dt: f64) -> f64 {
    if rate * dt > content {
        content / (rate * dt)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub times: Vec<f64>,
    /// Total concentration sampled every output interval, g/m³.
    pub concentration: Vec<f64>,
    pub final_state: BoxState,
    /// Largest relative change of total mass over a single step.
    pub max_step_drift: f64,
}

impl RunOutput {
    /// Time mean of the sampled total concentration.
    pub fn mean_concentration(&self) -> f64 {
        self.concentration.iter().sum::<f64>() / self.concentration.len() as f64
    }
}

/// Integrate `scenario` to its horizon. Stress is sampled at each step's midpoint
/// and outputs are linearly interpolated between steps.
pub fn run(params: &BufferParams, scenario: &Scenario) -> Result<RunOutput> {
    params.validate()?;
    scenario.validate()?;
    let n_steps = ((scenario.horizon / scenario.dt) - 1e-9).ceil() as usize;
    let n_out = (scenario.horizon / scenario.output_interval + 1e-9).floor() as usize + 1;
    let mut times = Vec::with_capacity(n_out);
    let mut concentration = Vec::with_capacity(n_out);
    let out_time = |k: usize| k as f64 * scenario.output_interval;

    let mut state = scenario.initial_state();
    let mut max_step_drift = 0.0f64;
    let mut next_out = 0usize;
    for k in 0..n_steps {
        let t0 = k as f64 * scenario.dt;
        let t1 = ((k + 1) as f64 * scenario.dt).min(scenario.horizon);
        let dt = t1 - t0;
        let tau = scenario.forcing.stress(t0 + 0.5 * dt);
        let mut next = step(params, &state, tau, dt)?;
        next.time = t1;
        let before = state.total_mass();
        if before > 0.0 {
            max_step_drift = max_step_drift.max((next.total_mass() - before).abs() / before);
        }
        while next_out < n_out && out_time(next_out) <= t1 + 1e-12 {
            let w = ((out_time(next_out) - t0) / dt).clamp(0.0, 1.0);
            times.push(out_time(next_out));
            concentration.push((1.0 - w) * state.total_concentration() + w * next.total_concentration());
            next_out += 1;
        }
        state = next;
    }
    Ok(RunOutput {
        times,
        concentration,
        final_state: state,
        max_step_drift,
    })
}
