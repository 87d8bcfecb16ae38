//! Nonlinear RF-to-DC conversion: measured efficiency curves or a parametric
//! threshold/saturation model, plus the quasi-static output voltage.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::{PowerEnvelope, Strategy};

pub const DEFAULT_V_MAX: f64 = 2.0;
pub const DEFAULT_AVERAGING_WINDOW_S: f64 = 1e-3;
/// Equivalent load that holds 10 µW at the 1.8 V regulation target.
pub const DEFAULT_LOAD_RESISTANCE_OHM: f64 = 324e3;

/// Mean RF input / DC output (µW) of the harvester over 30-minute runs with
/// adaptive single-tone excitation, one point per transmit gain 75..85 dB.
const SINGLE_TONE_UW: [(f64, f64); 11] = [
    (3.3811171551552, 0.563309137141809),
    (3.832819324565, 0.617264728440383),
    (5.17649837949025, 1.19676419772738),
    (6.48721963079147, 1.62401733676224),
    (7.85706322014636, 2.42358335144312),
    (10.5238226401887, 3.41778224120492),
    (12.4856654643546, 4.62544215112466),
    (15.1302972269924, 6.1594953739722),
    (16.5619840572225, 6.88141549103359),
    (21.0765063168423, 10.2900477634388),
    (24.6765328148914, 12.5641747503154),
];

/// Same as [`SINGLE_TONE_UW`] for the 100 Hz-spaced multi-tone excitation.
const MULTI_TONE_UW: [(f64, f64); 11] = [
    (3.1382763220479, 0.456691991671377),
    (3.84886589919538, 0.63950951171412),
    (4.81378016660812, 0.921566281708466),
    (6.04560337368143, 1.26602254753809),
    (7.3304940846566, 1.66476190894102),
    (9.38295576066426, 2.14176685947878),
    (11.3880508544913, 2.63355270233796),
    (13.9698884109967, 3.10860562078332),
    (17.0795044737649, 3.8525379597825),
    (21.0162069983013, 6.26595860409853),
    (25.0036933829554, 8.04211120327822),
];

/// Knots of (p_rf, p_dc) in watts, strictly increasing in p_rf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    points: Vec<(f64, f64)>,
}

impl EfficiencyCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("efficiency curve has no points".into()));
        }
        for &(rf, dc) in &points {
            if !(rf > 0.0) || !rf.is_finite() || !(dc >= 0.0) || dc > rf {
                return Err(Error::Validation(format!(
                    "curve point ({rf}, {dc}) must satisfy 0 <= p_dc <= p_rf, p_rf > 0"
                )));
            }
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0) || w[1].1 < w[0].1) {
            return Err(Error::Validation(
                "curve must be strictly increasing in p_rf and non-decreasing in p_dc".into(),
            ));
        }
        Ok(EfficiencyCurve { points })
    }

    fn from_microwatts(points: &[(f64, f64)]) -> Self {
        Self::new(points.iter().map(|&(rf, dc)| (rf * 1e-6, dc * 1e-6)).collect())
            .expect("embedded curve is valid")
    }

    pub fn measured_single_tone() -> Self {
        Self::from_microwatts(&SINGLE_TONE_UW)
    }

    pub fn measured_multi_tone() -> Self {
        Self::from_microwatts(&MULTI_TONE_UW)
    }

    pub fn measured(strategy: Strategy) -> Self {
        match strategy {
            Strategy::Single => Self::measured_single_tone(),
            Strategy::Multi => Self::measured_multi_tone(),
        }
    }

    /// Reads a `p_rf_w,p_dc_w` CSV.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            p_rf_w: f64,
            p_dc_w: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut points = Vec::new();
        for rec in rdr.deserialize::<Row>() {
            let r = rec?;
            points.push((r.p_rf_w, r.p_dc_w));
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Log-log interpolation between knots; zero below the first knot and
    /// constant efficiency above the last.
    pub fn dc_power(&self, p_rf: f64) -> f64 {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if !(p_rf >= first.0) {
            return 0.0;
        }
        if p_rf >= last.0 {
            return if p_rf == last.0 { last.1 } else { p_rf * (last.1 / last.0) };
        }
        let i = self.points.partition_point(|&(rf, _)| rf < p_rf);
        let (x1, y1) = self.points[i];
        if x1 == p_rf {
            return y1;
        }
        let (x0, y0) = self.points[i - 1];
        if y0 == 0.0 || y1 == 0.0 {
            return y0 + (y1 - y0) * (p_rf - x0) / (x1 - x0);
        }
        let frac = (p_rf / x0).ln() / (x1 / x0).ln();
        // Clamp guards against last-ulp overshoot past the bracketing knots.
        (y0 * (y1 / y0).powf(frac)).clamp(y0, y1)
    }
}

/// Memoryless threshold/saturation rectifier: no output below
/// `sensitivity`, efficiency rising smoothly (cubic in log-power) to
/// `peak_efficiency` at `saturation`, constant DC output above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricHarvester {
    pub sensitivity: f64,
    pub peak_efficiency: f64,
    pub saturation: f64,
}

impl ParametricHarvester {
    pub fn new(sensitivity: f64, peak_efficiency: f64, saturation: f64) -> Result<Self> {
        if !(sensitivity > 0.0) || !(saturation > sensitivity) || !saturation.is_finite() {
            return Err(Error::invalid("need 0 < sensitivity < saturation"));
        }
        if !(peak_efficiency > 0.0 && peak_efficiency <= 1.0) {
            return Err(Error::invalid("peak efficiency must be in (0, 1]"));
        }
        Ok(ParametricHarvester {
            sensitivity,
            peak_efficiency,
            saturation,
        })
    }

    pub fn efficiency(&self, p_rf: f64) -> f64 {
        if !(p_rf >= self.sensitivity) {
            return 0.0;
        }
        let x = ((p_rf / self.sensitivity).ln() / (self.saturation / self.sensitivity).ln()).min(1.0);
        self.peak_efficiency * x * x * (3.0 - 2.0 * x)
    }

    pub fn dc_power(&self, p_rf: f64) -> f64 {
        if p_rf >= self.saturation {
            self.peak_efficiency * self.saturation
        } else {
            p_rf * self.efficiency(p_rf)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HarvesterMode {
    MeasuredCurve { curve: EfficiencyCurve },
    Parametric(ParametricHarvester),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvesterModel {
    pub mode: HarvesterMode,
    pub v_max: f64,
    pub averaging_window: f64,
    pub load_resistance: f64,
}

impl HarvesterModel {
    pub fn new(mode: HarvesterMode) -> Self {
        HarvesterModel {
            mode,
            v_max: DEFAULT_V_MAX,
            averaging_window: DEFAULT_AVERAGING_WINDOW_S,
            load_resistance: DEFAULT_LOAD_RESISTANCE_OHM,
        }
    }

    pub fn measured(curve: EfficiencyCurve) -> Self {
        Self::new(HarvesterMode::MeasuredCurve { curve })
    }

    pub fn parametric(p: ParametricHarvester) -> Self {
        Self::new(HarvesterMode::Parametric(p))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0) || !self.v_max.is_finite() {
            return Err(Error::invalid("v_max must be positive"));
        }
        if !(self.averaging_window > 0.0) || !self.averaging_window.is_finite() {
            return Err(Error::invalid("averaging window must be positive"));
        }
        if !(self.load_resistance > 0.0) || !self.load_resistance.is_finite() {
            return Err(Error::invalid("load resistance must be positive"));
        }
        if let HarvesterMode::Parametric(p) = &self.mode {
            ParametricHarvester::new(p.sensitivity, p.peak_efficiency, p.saturation)?;
        }
        Ok(())
    }
}

pub fn rf_to_dc(model: &HarvesterModel, p_rf: f64) -> f64 {
    match &model.mode {
        HarvesterMode::MeasuredCurve { curve } => curve.dc_power(p_rf),
        HarvesterMode::Parametric(p) => p.dc_power(p_rf),
    }
}

/// Quasi-static output voltage √(P·R), clamped to the harvester maximum.
pub fn harvester_voltage(model: &HarvesterModel, p_dc: f64, load_resistance: f64) -> f64 {
    (p_dc.max(0.0) * load_resistance).sqrt().min(model.v_max)
}

/// Harvested DC power and output voltage on the averaging-window time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestTrace {
    pub sample_rate: f64,
    pub p_eh: Vec<f64>,
    pub v_eh: Vec<f64>,
}

impl HarvestTrace {
    pub fn new(sample_rate: f64, p_eh: Vec<f64>, v_eh: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if p_eh.len() != v_eh.len() {
            return Err(Error::invalid("p_eh and v_eh lengths differ"));
        }
        if p_eh.iter().chain(&v_eh).any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("harvest samples must be finite and >= 0"));
        }
        Ok(HarvestTrace {
            sample_rate,
            p_eh,
            v_eh,
        })
    }

    /// Constant harvester output for `n` samples.
    pub fn constant(sample_rate: f64, p_eh: f64, v_eh: f64, n: usize) -> Result<Self> {
        Self::new(sample_rate, vec![p_eh; n], vec![v_eh; n])
    }

    pub fn len(&self) -> usize {
        self.p_eh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_eh.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn mean_power(&self) -> f64 {
        if self.p_eh.is_empty() {
            0.0
        } else {
            self.p_eh.iter().sum::<f64>() / self.p_eh.len() as f64
        }
    }
}

/// Streaming harvester: consumes envelope chunks of any size, applies the
/// RF-to-DC map sample by sample and averages whole windows. The optional
/// `rf_scale` multiplies incoming envelope samples, which lets one
/// unit-power envelope drive several transmit power levels.
#[derive(Debug, Clone)]
pub struct HarvestAccumulator<'m> {
    model: &'m HarvesterModel,
    rf_scale: f64,
    window_len: usize,
    input_rate: f64,
    acc: f64,
    filled: usize,
    rf_sum: f64,
    rf_count: u64,
    p_eh: Vec<f64>,
    v_eh: Vec<f64>,
}

impl<'m> HarvestAccumulator<'m> {
    pub fn new(model: &'m HarvesterModel, input_rate: f64, rf_scale: f64) -> Result<Self> {
        model.validate()?;
        if !(input_rate > 0.0) || !input_rate.is_finite() {
            return Err(Error::invalid("envelope sample rate must be positive"));
        }
        let window_len = (model.averaging_window * input_rate).round() as usize;
        if window_len == 0 {
            return Err(Error::invalid("averaging window shorter than one envelope sample"));
        }
        Ok(HarvestAccumulator {
            model,
            rf_scale,
            window_len,
            input_rate,
            acc: 0.0,
            filled: 0,
            rf_sum: 0.0,
            rf_count: 0,
            p_eh: Vec::new(),
            v_eh: Vec::new(),
        })
    }

    pub fn output_rate(&self) -> f64 {
        self.input_rate / self.window_len as f64
    }

    pub fn push(&mut self, envelope: &[f64]) {
        for &p in envelope {
            let p_rf = p * self.rf_scale;
            self.rf_sum += p_rf;
            self.acc += rf_to_dc(self.model, p_rf);
            self.filled += 1;
            if self.filled == self.window_len {
                let p_dc = self.acc / self.window_len as f64;
                self.p_eh.push(p_dc);
                self.v_eh
                    .push(harvester_voltage(self.model, p_dc, self.model.load_resistance));
                self.acc = 0.0;
                self.filled = 0;
            }
        }
        self.rf_count += envelope.len() as u64;
    }

    /// Mean RF input power over every sample pushed so far.
    pub fn mean_rf(&self) -> f64 {
        if self.rf_count == 0 {
            0.0
        } else {
            self.rf_sum / self.rf_count as f64
        }
    }

    /// Completes the trace; a trailing partial window is dropped.
    pub fn finish(self) -> Result<HarvestTrace> {
        let rate = self.output_rate();
        HarvestTrace::new(rate, self.p_eh, self.v_eh)
    }
}

/// Applies the harvester to an envelope and averages onto the device time base.
pub fn harvest_envelope(model: &HarvesterModel, env: &PowerEnvelope) -> Result<HarvestTrace> {
    let mut acc = HarvestAccumulator::new(model, env.sample_rate, 1.0)?;
    acc.push(&env.samples);
    acc.finish()
}
