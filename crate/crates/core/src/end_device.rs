//! Energy-neutral device: buffer sizing, MCU load, the buffer-voltage
//! recurrence and the wake -> pilot -> brown-out state machine.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harvester::HarvestTrace;

/// Minimum buffer capacitance that carries `e_mcu` joules from `v_th` down to `v_bod`.
pub fn size_buffer(e_mcu: f64, v_th: f64, v_bod: f64) -> Result<f64> {
    if !(e_mcu >= 0.0) || !e_mcu.is_finite() {
        return Err(Error::invalid("MCU energy must be finite and >= 0"));
    }
    if !(v_bod > 0.0) || !(v_th > v_bod) || !v_th.is_finite() {
        return Err(Error::invalid(format!(
            "need v_th > v_bod > 0, got v_th = {v_th}, v_bod = {v_bod}"
        )));
    }
    Ok(2.0 * e_mcu / (v_th * v_th - v_bod * v_bod))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McuMode {
    Realistic,
    Ideal,
}

impl McuMode {
    pub fn as_str(self) -> &'static str {
        match self {
            McuMode::Realistic => "realistic",
            McuMode::Ideal => "ideal",
        }
    }
}

impl std::str::FromStr for McuMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "realistic" => Ok(McuMode::Realistic),
            "ideal" => Ok(McuMode::Ideal),
            other => Err(Error::invalid(format!("unknown MCU mode {other:?} (realistic|ideal)"))),
        }
    }
}

/// Sub-threshold MCU draw. Above the wake threshold the MCU always draws the
/// configured active power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum McuLoadCurve {
    Ideal,
    /// (voltage, power) knots, linearly interpolated and held flat past the ends.
    Realistic { points: Vec<(f64, f64)> },
}

impl McuLoadCurve {
    /// Placeholder leakage profile of a few microwatts below threshold.
    /// Not measured data; override from configuration when available.
    pub fn default_realistic() -> Self {
        McuLoadCurve::Realistic {
            points: vec![(0.0, 0.0), (0.5, 1e-6), (1.0, 3e-6), (1.55, 6e-6), (1.75, 8e-6)],
        }
    }

    pub fn for_mode(mode: McuMode) -> Self {
        match mode {
            McuMode::Ideal => McuLoadCurve::Ideal,
            McuMode::Realistic => Self::default_realistic(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let McuLoadCurve::Realistic { points } = self {
            if points.is_empty() {
                return Err(Error::invalid("realistic MCU curve needs at least one point"));
            }
            if points.iter().any(|&(v, p)| !v.is_finite() || !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid("MCU curve points must be finite with p >= 0"));
            }
            if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::invalid("MCU curve voltages must be strictly increasing"));
            }
        }
        Ok(())
    }
}

pub fn mcu_power(curve: &McuLoadCurve, v: f64, v_th: f64, p_active: f64) -> f64 {
    if v >= v_th {
        return p_active;
    }
    match curve {
        McuLoadCurve::Ideal => 0.0,
        McuLoadCurve::Realistic { points } => {
            let i = points.partition_point(|&(pv, _)| pv < v);
            if i == 0 {
                points[0].1
            } else if i == points.len() {
                points[points.len() - 1].1
            } else {
                let (v0, p0) = points[i - 1];
                let (v1, p1) = points[i];
                p0 + (p1 - p0) * (v - v0) / (v1 - v0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndDeviceConfig {
    pub c_b: f64,
    pub v_mcu_th: f64,
    pub v_bod: f64,
    pub pilot_bytes: u32,
    pub baud: f64,
    pub p_active: f64,
    pub v_supply_nominal: f64,
    /// Backscatter subcarrier offset; informational only.
    pub lo_offset: f64,
    pub mcu_load: McuLoadCurve,
}

impl Default for EndDeviceConfig {
    fn default() -> Self {
        EndDeviceConfig {
            c_b: 100e-6,
            v_mcu_th: 1.75,
            v_bod: 1.55,
            pilot_bytes: 10,
            baud: 1000.0,
            p_active: 380e-6,
            v_supply_nominal: 1.8,
            lo_offset: 512e3,
            mcu_load: McuLoadCurve::default_realistic(),
        }
    }
}

impl EndDeviceConfig {
    pub fn with_mcu(mut self, mode: McuMode) -> Self {
        self.mcu_load = McuLoadCurve::for_mode(mode);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_b > 0.0) || !self.c_b.is_finite() {
            return Err(Error::invalid("c_b must be positive"));
        }
        if !(self.v_bod > 0.0 && self.v_bod < self.v_mcu_th && self.v_mcu_th <= 2.0) {
            return Err(Error::invalid("need 0 < v_bod < v_mcu_th <= 2 V"));
        }
        if !(self.baud > 0.0) || !self.baud.is_finite() {
            return Err(Error::invalid("baud must be positive"));
        }
        if !(self.p_active >= 0.0) || !self.p_active.is_finite() {
            return Err(Error::invalid("p_active must be >= 0"));
        }
        self.mcu_load.validate()
    }
}

/// Backscatter pilot airtime and the MCU energy it costs.
pub fn pilot_energy(cfg: &EndDeviceConfig) -> (f64, f64) {
    let duration = 8.0 * cfg.pilot_bytes as f64 / cfg.baud;
    (duration, duration * cfg.p_active)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferState {
    pub v_b: f64,
    pub t: f64,
    pub mcu_active: bool,
    pub pilot_progress: f64,
}

impl BufferState {
    pub fn at_voltage(v_b: f64) -> Self {
        BufferState {
            v_b,
            t: 0.0,
            mcu_active: false,
            pilot_progress: 0.0,
        }
    }
}

/// Which branch of the buffer-voltage recurrence a step took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCase {
    /// More energy drawn than stored; buffer emptied.
    Depleted,
    /// Net inflow, but the harvester voltage cannot raise the buffer.
    Hold,
    /// ½C(v_n² − v_{n−1}²) = p_b·Δt.
    Energy,
    /// Energy update would overshoot the harvester voltage; capped at it.
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub v_b: f64,
    pub p_b: f64,
    pub case: StepCase,
}

/// One step of the buffer recurrence for net buffer power `p_b`.
pub fn buffer_voltage_update(v_prev: f64, p_b: f64, v_eh: f64, dt: f64, c_b: f64) -> StepOutcome {
    let arg = v_prev * v_prev + 2.0 * p_b * dt / c_b;
    let (v_b, case) = if arg < 0.0 {
        (0.0, StepCase::Depleted)
    } else if p_b > 0.0 && v_eh <= v_prev {
        (v_prev, StepCase::Hold)
    } else if p_b == 0.0 {
        (v_prev, StepCase::Energy)
    } else {
        let v = arg.sqrt();
        if p_b > 0.0 && v > v_eh {
            (v_eh, StepCase::Capped)
        } else {
            (v, StepCase::Energy)
        }
    };
    StepOutcome { v_b, p_b, case }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceEvents {
    pub woke_at: Option<f64>,
    pub pilot_sent_at: Option<f64>,
    pub brownouts: Vec<f64>,
}

impl DeviceEvents {
    pub fn response_time(&self) -> Option<f64> {
        self.pilot_sent_at
    }
}

/// Sequential device simulator driven one harvester sample at a time.
#[derive(Debug, Clone)]
pub struct Device<'c> {
    cfg: &'c EndDeviceConfig,
    dt: f64,
    pilot_steps: u64,
    steps_active: u64,
    n: u64,
    state: BufferState,
    events: DeviceEvents,
}

impl<'c> Device<'c> {
    pub fn new(cfg: &'c EndDeviceConfig, dt: f64, start_v: f64) -> Result<Self> {
        cfg.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("time step must be positive"));
        }
        if !(start_v >= 0.0 && start_v <= cfg.v_mcu_th) {
            return Err(Error::invalid(format!(
                "start voltage {start_v} V outside [0, {}] V",
                cfg.v_mcu_th
            )));
        }
        let (pilot_duration, _) = pilot_energy(cfg);
        Ok(Device {
            cfg,
            dt,
            pilot_steps: ((pilot_duration / dt) * (1.0 - 1e-12)).ceil() as u64,
            steps_active: 0,
            n: 0,
            state: BufferState::at_voltage(start_v),
            events: DeviceEvents::default(),
        })
    }

    pub fn state(&self) -> &BufferState {
        &self.state
    }

    pub fn events(&self) -> &DeviceEvents {
        &self.events
    }

    pub fn into_events(self) -> DeviceEvents {
        self.events
    }

    /// Advances one sample period with harvester output (`p_eh`, `v_eh`).
    pub fn step(&mut self, p_eh: f64, v_eh: f64) -> StepOutcome {
        let cfg = self.cfg;
        let s = &mut self.state;
        let p_load = if s.mcu_active {
            cfg.p_active
        } else {
            mcu_power(&cfg.mcu_load, s.v_b, cfg.v_mcu_th, cfg.p_active)
        };
        let out = buffer_voltage_update(s.v_b, p_eh - p_load, v_eh, self.dt, cfg.c_b);
        self.n += 1;
        s.v_b = out.v_b;
        s.t = self.n as f64 * self.dt;

        if s.mcu_active {
            self.steps_active += 1;
            if s.v_b < cfg.v_bod {
                s.mcu_active = false;
                self.steps_active = 0;
                self.events.brownouts.push(s.t);
            } else if self.steps_active >= self.pilot_steps && self.events.pilot_sent_at.is_none() {
                self.events.pilot_sent_at = Some(s.t);
            }
        } else if s.v_b >= cfg.v_mcu_th {
            s.mcu_active = true;
            self.steps_active = 0;
            self.events.woke_at.get_or_insert(s.t);
            if self.pilot_steps == 0 && self.events.pilot_sent_at.is_none() {
                self.events.pilot_sent_at = Some(s.t);
            }
        }
        let pilot_len = self.pilot_steps as f64 * self.dt;
        s.pilot_progress = match (s.mcu_active, self.events.pilot_sent_at) {
            (false, _) => 0.0,
            (true, None) => (self.steps_active as f64 * self.dt).min(pilot_len),
            (true, Some(_)) => pilot_len,
        };
        out
    }
}

/// Runs the device over a whole harvest trace from `start_v`, returning the
/// state after every step.
pub fn simulate_device(
    harvest: &HarvestTrace,
    cfg: &EndDeviceConfig,
    start_v: f64,
) -> Result<(Vec<BufferState>, DeviceEvents)> {
    if harvest.is_empty() {
        return Err(Error::invalid("harvest trace is empty"));
    }
    let mut dev = Device::new(cfg, harvest.dt(), start_v)?;
    let mut trajectory = Vec::with_capacity(harvest.len());
    for (&p, &v) in harvest.p_eh.iter().zip(&harvest.v_eh) {
        dev.step(p, v);
        trajectory.push(*dev.state());
    }
    Ok((trajectory, dev.into_events()))
}

/// Writes a `t_s,v_b_v,mcu_active` CSV.
pub fn write_trajectory_csv<W: Write>(trajectory: &[BufferState], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_s", "v_b_v", "mcu_active"])?;
    for s in trajectory {
        w.write_record([s.t.to_string(), s.v_b.to_string(), (s.mcu_active as u8).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn buffer_sizing() {
        let c = size_buffer(30.4e-6, 1.75, 1.55).unwrap();
        assert_relative_eq!(c * 1e6, 92.12, epsilon = 0.01);
        assert_eq!(size_buffer(0.0, 1.75, 1.55).unwrap(), 0.0);
        assert!(size_buffer(30.4e-6, 1.75, 1.75).is_err());
        assert!(size_buffer(30.4e-6, 1.5, 1.55).is_err());
        assert!(size_buffer(-1.0, 1.75, 1.55).is_err());
    }

    #[test]
    fn pilot_budget() {
        let cfg = EndDeviceConfig::default();
        let (d, e) = pilot_energy(&cfg);
        assert_relative_eq!(d, 0.08, epsilon = 1e-15);
        assert_relative_eq!(e, 30.4e-6, epsilon = 1e-18);
        let zero = EndDeviceConfig { pilot_bytes: 0, ..cfg.clone() };
        assert_eq!(pilot_energy(&zero), (0.0, 0.0));
        let long = EndDeviceConfig { pilot_bytes: 20, ..cfg };
        let (d, e) = pilot_energy(&long);
        assert_relative_eq!(d, 0.16, epsilon = 1e-15);
        assert_relative_eq!(e, 60.8e-6, epsilon = 1e-18);
    }

    #[test]
    fn mcu_load_curves() {
        let real = McuLoadCurve::default_realistic();
        assert_eq!(mcu_power(&McuLoadCurve::Ideal, 1.0, 1.75, 380e-6), 0.0);
        assert_eq!(mcu_power(&McuLoadCurve::Ideal, 1.8, 1.75, 380e-6), 380e-6);
        assert_eq!(mcu_power(&real, 1.0, 1.75, 380e-6), 3e-6);
        assert_relative_eq!(mcu_power(&real, 0.75, 1.75, 380e-6), 2e-6, epsilon = 1e-18);
        assert_eq!(mcu_power(&real, 1.75, 1.75, 380e-6), 380e-6);
        assert!(mcu_power(&real, 1.7499, 1.75, 380e-6) <= 8e-6);
        assert!(McuLoadCurve::Realistic { points: vec![(1.0, 0.0), (0.5, 0.0)] }.validate().is_err());
    }

    #[test]
    fn recurrence_cases() {
        let up = buffer_voltage_update(1.0, 10e-6, 2.0, 4e-3, 100e-6);
        assert_eq!(up.case, StepCase::Energy);
        assert_relative_eq!(up.v_b, (1.0f64 + 8e-4).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(up.v_b, 1.00040, epsilon = 1e-5);

        let hold = buffer_voltage_update(0.5, 10e-6, 0.4, 4e-3, 100e-6);
        assert_eq!((hold.v_b, hold.case), (0.5, StepCase::Hold));

        let empty = buffer_voltage_update(0.01, -10e-6, 0.0, 4e-3, 100e-6);
        assert_eq!((empty.v_b, empty.case), (0.0, StepCase::Depleted));

        let capped = buffer_voltage_update(1.0, 1.0, 1.2, 4e-3, 100e-6);
        assert_eq!((capped.v_b, capped.case), (1.2, StepCase::Capped));

        // discharge does not depend on the harvester voltage
        let down = buffer_voltage_update(1.0, -10e-6, 0.0, 4e-3, 100e-6);
        assert_eq!(down.case, StepCase::Energy);
        assert!(down.v_b < 1.0);
    }

    #[test]
    fn constant_power_wake_time_closed_form() {
        let cfg = EndDeviceConfig::default().with_mcu(McuMode::Ideal);
        let h = HarvestTrace::constant(250.0, 10e-6, 2.0, 5000).unwrap();
        let (_, ev) = simulate_device(&h, &cfg, 0.0).unwrap();
        let expected = 100e-6 * 1.75f64.powi(2) / (2.0 * 10e-6);
        assert_relative_eq!(expected, 15.3125, epsilon = 1e-12);
        let woke = ev.woke_at.unwrap();
        assert!(woke >= expected && woke - expected <= 1.0 / 250.0);
    }

    #[test]
    fn no_input_no_events() {
        let h = HarvestTrace::constant(250.0, 0.0, 0.0, 1000).unwrap();
        let ideal = EndDeviceConfig::default().with_mcu(McuMode::Ideal);
        let (traj, ev) = simulate_device(&h, &ideal, 1.2).unwrap();
        assert_eq!(ev, DeviceEvents::default());
        assert!(traj.iter().all(|s| s.v_b == 1.2));

        let real = EndDeviceConfig::default();
        let (traj, ev) = simulate_device(&h, &real, 1.2).unwrap();
        assert_eq!(ev, DeviceEvents::default());
        assert!(traj.windows(2).all(|w| w[1].v_b <= w[0].v_b));
        assert!(traj.last().unwrap().v_b < 1.2);
        let long = HarvestTrace::constant(250.0, 0.0, 0.0, 250 * 600).unwrap();
        let (traj, _) = simulate_device(&long, &real, 1.2).unwrap();
        assert_eq!(traj.last().unwrap().v_b, 0.0);
    }

    #[test]
    fn pilot_completes_within_sizing_window() {
        // Charged to threshold with 10 µW still arriving: net -370 µW leaves
        // 89.2 ms before brown-out, longer than the 80 ms pilot.
        let window = 100e-6 * (1.75f64.powi(2) - 1.55f64.powi(2)) / (2.0 * 370e-6);
        assert_relative_eq!(window, 0.0892, epsilon = 1e-4);
        let cfg = EndDeviceConfig::default().with_mcu(McuMode::Ideal);
        let h = HarvestTrace::constant(250.0, 10e-6, 2.0, 250 * 20).unwrap();
        let (_, ev) = simulate_device(&h, &cfg, 0.0).unwrap();
        let woke = ev.woke_at.unwrap();
        let sent = ev.pilot_sent_at.unwrap();
        assert_relative_eq!(sent - woke, 0.08, epsilon = 1e-9);
        assert!(ev.brownouts.is_empty() || ev.brownouts[0] > sent);
    }

    #[test]
    fn brownout_resets_pilot() {
        // 50 µF holds only 16.5 µJ between the thresholds, short of the pilot.
        let cfg = EndDeviceConfig { c_b: 50e-6, ..EndDeviceConfig::default().with_mcu(McuMode::Ideal) };
        let mut p = vec![0.0; 2000];
        p[..1200].iter_mut().for_each(|x| *x = 20e-6);
        let h = HarvestTrace::new(250.0, p, vec![2.0; 2000]).unwrap();
        let (traj, ev) = simulate_device(&h, &cfg, 0.0).unwrap();
        assert!(ev.woke_at.is_some());
        assert_eq!(ev.pilot_sent_at, None);
        assert!(!ev.brownouts.is_empty());
        assert!(traj.iter().all(|s| s.pilot_progress <= 0.08 + 1e-12));
        assert!(traj.iter().any(|s| s.pilot_progress > 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = EndDeviceConfig::default();
        let empty = HarvestTrace::new(250.0, vec![], vec![]).unwrap();
        assert!(simulate_device(&empty, &cfg, 0.0).is_err());
        let h = HarvestTrace::constant(250.0, 0.0, 0.0, 3).unwrap();
        assert!(simulate_device(&h, &cfg, 1.9).is_err());
        let bad = EndDeviceConfig { v_bod: 1.8, ..cfg };
        assert!(simulate_device(&h, &bad, 0.0).is_err());
    }

    #[test]
    fn trajectory_csv() {
        let cfg = EndDeviceConfig::default().with_mcu(McuMode::Ideal);
        let h = HarvestTrace::constant(2.0, 0.0, 0.0, 2).unwrap();
        let (traj, _) = simulate_device(&h, &cfg, 0.5).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t_s,v_b_v,mcu_active\n0.5,0.5,0\n1,0.5,0\n");
    }
}
