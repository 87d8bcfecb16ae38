#![allow(dead_code)]

use wptsim_core::end_device::EndDeviceConfig;
use wptsim_core::harvester::HarvestTrace;
use wptsim_core::trace_replay::EpTrace;

pub const ONOFF_RATE_HZ: f64 = 250.0;
pub const ONOFF_ON_W: f64 = 20e-6;
pub const ONOFF_ON_V: f64 = 2.0;
pub const ONOFF_HALF_PERIOD: usize = 1250;

/// 5 s at 20 µW / 2 V alternating with 5 s of nothing, sampled at 250 Hz.
pub fn onoff_trace(duration_s: f64) -> EpTrace {
    let n = (duration_s * ONOFF_RATE_HZ).round() as usize;
    let on = |i: usize| (i / ONOFF_HALF_PERIOD).is_multiple_of(2);
    let p = (0..n).map(|i| if on(i) { ONOFF_ON_W } else { 0.0 }).collect();
    let v = (0..n).map(|i| if on(i) { ONOFF_ON_V } else { 0.0 }).collect();
    EpTrace::from_harvest(&HarvestTrace::new(ONOFF_RATE_HZ, p, v).unwrap(), None, None)
}

/// Closed-form response oracle for the on/off trace with an ideal MCU:
/// the device wakes on the on-sample that completes ½·C·V_th² of stored
/// energy and answers one pilot airtime later. Works on sample counts only.
pub struct OnOffOracle {
    prefix_on: Vec<usize>,
    on_samples_needed: usize,
    pilot_samples: usize,
}

impl OnOffOracle {
    pub fn new(trace: &EpTrace, cfg: &EndDeviceConfig) -> Self {
        let mut prefix_on = vec![0];
        for &p in &trace.p_dc {
            let last = *prefix_on.last().unwrap();
            prefix_on.push(last + usize::from(p > 0.0));
        }
        let dt = 1.0 / trace.sample_rate;
        let e_th = 0.5 * cfg.c_b * cfg.v_mcu_th * cfg.v_mcu_th;
        let pilot_s = 8.0 * cfg.pilot_bytes as f64 / cfg.baud;
        OnOffOracle {
            prefix_on,
            on_samples_needed: (e_th / (ONOFF_ON_W * dt)).ceil() as usize,
            pilot_samples: (pilot_s / dt).round() as usize,
        }
    }

    pub fn len(&self) -> usize {
        self.prefix_on.len() - 1
    }

    /// Samples from `start` until the pilot completes, or `None` past the end.
    pub fn response_samples(&self, start: usize) -> Option<usize> {
        let target = self.prefix_on[start] + self.on_samples_needed;
        let j = self.prefix_on.partition_point(|&c| c < target);
        if j > self.len() {
            return None;
        }
        let total = j - start + self.pilot_samples;
        (start + total <= self.len()).then_some(total)
    }
}

/// Nearest-rank percentile, censored values (`None`) ranking last.
pub fn nearest_rank(values: &[Option<usize>], pct: f64) -> Option<usize> {
    let mut v: Vec<usize> = values.iter().map(|x| x.unwrap_or(usize::MAX)).collect();
    v.sort_unstable();
    let k = ((pct / 100.0) * v.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    let x = v[k - 1];
    (x != usize::MAX).then_some(x)
}
