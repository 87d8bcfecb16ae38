//! Excitation plans for the two initial-access strategies and synthesis of
//! the received RF power envelope at the device.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array_channel::ChannelRealization;
use crate::error::{Error, Result};

pub const DEFAULT_DWELL_S: f64 = 5.0;
pub const DEFAULT_TONE_SPACING_HZ: f64 = 100.0;
pub const DEFAULT_ENVELOPE_RATE_HZ: f64 = 100e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// All antennas on one frequency, phases re-drawn every dwell.
    Single,
    /// One distinct frequency offset per antenna, fixed phases.
    Multi,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Single => "single",
            Strategy::Multi => "multi",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Strategy::Single),
            "multi" => Ok(Strategy::Multi),
            other => Err(Error::invalid(format!("unknown strategy {other:?} (single|multi)"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaExcitation {
    /// Transmit voltage scale in √W.
    pub amplitude: f64,
    pub frequency_offset: f64,
    /// One phase per epoch of the plan, in [0, 2π).
    pub phases: Vec<f64>,
}

/// Per-antenna excitation with a piecewise-constant phase schedule. All
/// antennas share the epoch boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationPlan {
    epoch_starts: Vec<f64>,
    antennas: Vec<AntennaExcitation>,
}

impl ExcitationPlan {
    pub fn new(epoch_starts: Vec<f64>, antennas: Vec<AntennaExcitation>) -> Result<Self> {
        if antennas.is_empty() {
            return Err(Error::invalid("plan needs at least one antenna"));
        }
        if epoch_starts.first() != Some(&0.0) {
            return Err(Error::invalid("first epoch must start at t = 0"));
        }
        if epoch_starts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("epoch boundaries must be strictly increasing"));
        }
        for (k, a) in antennas.iter().enumerate() {
            if !(a.amplitude >= 0.0) || !a.amplitude.is_finite() {
                return Err(Error::invalid(format!("antenna {k}: amplitude must be >= 0")));
            }
            if !a.frequency_offset.is_finite() {
                return Err(Error::invalid(format!("antenna {k}: frequency offset must be finite")));
            }
            if a.phases.len() != epoch_starts.len() {
                return Err(Error::invalid(format!(
                    "antenna {k}: {} phases for {} epochs",
                    a.phases.len(),
                    epoch_starts.len()
                )));
            }
            if a.phases.iter().any(|p| !(0.0..TAU).contains(p)) {
                return Err(Error::invalid(format!("antenna {k}: phases must lie in [0, 2π)")));
            }
        }
        Ok(ExcitationPlan {
            epoch_starts,
            antennas,
        })
    }

    pub fn antennas(&self) -> &[AntennaExcitation] {
        &self.antennas
    }

    pub fn len(&self) -> usize {
        self.antennas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.antennas.is_empty()
    }

    pub fn epoch_starts(&self) -> &[f64] {
        &self.epoch_starts
    }

    pub fn n_epochs(&self) -> usize {
        self.epoch_starts.len()
    }

    pub fn epoch_at(&self, t: f64) -> usize {
        self.epoch_starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn max_frequency_offset(&self) -> f64 {
        self.antennas
            .iter()
            .map(|a| a.frequency_offset.abs())
            .fold(0.0, f64::max)
    }

    /// Copy of the plan with every amplitude set to `amplitude`.
    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        let mut plan = self.clone();
        for a in &mut plan.antennas {
            a.amplitude = amplitude;
        }
        Self::new(plan.epoch_starts, plan.antennas)
    }
}

fn check_count_and_amplitude(n_antennas: usize, amplitude: f64) -> Result<()> {
    if n_antennas == 0 {
        return Err(Error::invalid("antenna count must be at least 1"));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::invalid("amplitude must be finite and >= 0"));
    }
    Ok(())
}

/// Same-frequency excitation whose phases are re-drawn uniformly on [0, 2π)
/// for every antenna at each dwell boundary.
pub fn adaptive_single_tone_plan(
    n_antennas: usize,
    amplitude: f64,
    dwell: f64,
    duration: f64,
    seed: u64,
) -> Result<ExcitationPlan> {
    check_count_and_amplitude(n_antennas, amplitude)?;
    if !(dwell > 0.0) || !dwell.is_finite() {
        return Err(Error::invalid("dwell must be positive"));
    }
    if !(duration >= dwell) || !duration.is_finite() {
        return Err(Error::invalid("duration must be at least one dwell"));
    }
    // Tolerate duration/dwell landing a hair above an integer.
    let n_epochs = ((duration / dwell) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases = vec![Vec::with_capacity(n_epochs); n_antennas];
    for _ in 0..n_epochs {
        for p in phases.iter_mut() {
            p.push(rng.random_range(0.0..TAU));
        }
    }
    let epoch_starts = (0..n_epochs).map(|e| e as f64 * dwell).collect();
    let antennas = phases
        .into_iter()
        .map(|phases| AntennaExcitation {
            amplitude,
            frequency_offset: 0.0,
            phases,
        })
        .collect();
    ExcitationPlan::new(epoch_starts, antennas)
}

/// Equally spaced multi-tone excitation: antenna k transmits at offset
/// k·spacing with one fixed random phase.
pub fn multi_tone_plan(n_antennas: usize, amplitude: f64, spacing: f64, seed: u64) -> Result<ExcitationPlan> {
    check_count_and_amplitude(n_antennas, amplitude)?;
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::invalid("tone spacing must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let antennas = (0..n_antennas)
        .map(|k| AntennaExcitation {
            amplitude,
            frequency_offset: k as f64 * spacing,
            phases: vec![rng.random_range(0.0..TAU)],
        })
        .collect();
    ExcitationPlan::new(vec![0.0], antennas)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEnvelope {
    pub sample_rate: f64,
    pub start_time: f64,
    /// Instantaneous received RF power in W.
    pub samples: Vec<f64>,
}

impl PowerEnvelope {
    pub fn new(sample_rate: f64, start_time: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("envelope samples must be finite and >= 0"));
        }
        Ok(PowerEnvelope {
            sample_rate,
            start_time,
            samples,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.samples.iter().sum::<f64>() / self.samples.len() as f64
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate
    }

    /// Writes `t_s,p_rf_w` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_s", "p_rf_w"])?;
        for (i, p) in self.samples.iter().enumerate() {
            w.write_record([self.time_at(i).to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Precomputed envelope evaluator. Antennas sharing a frequency offset are
/// folded into one phasor per epoch, so a single-tone plan costs one complex
/// magnitude per sample and a multi-tone plan one rotation per tone.
#[derive(Debug, Clone)]
pub struct EnvelopeSynthesizer {
    sample_rate: f64,
    epoch_starts: Vec<f64>,
    offsets: Vec<f64>,
    /// `coefficients[epoch][group]`
    coefficients: Vec<Vec<Complex64>>,
    /// One period of samples when the plan is a single epoch whose tones
    /// all fit an integer number of cycles into `period.len()` samples.
    period: Option<Vec<f64>>,
}

/// Longest envelope period (in samples) worth tabulating.
const MAX_PERIOD_SAMPLES: usize = 1 << 22;

impl EnvelopeSynthesizer {
    pub fn new(plan: &ExcitationPlan, channel: &ChannelRealization, sample_rate: f64) -> Result<Self> {
        if plan.len() != channel.len() {
            return Err(Error::invalid(format!(
                "plan has {} antennas but channel has {}",
                plan.len(),
                channel.len()
            )));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let max_offset = plan.max_frequency_offset();
        if sample_rate < 4.0 * max_offset {
            return Err(Error::invalid(format!(
                "sample rate {sample_rate} Hz below 4x the largest tone offset ({max_offset} Hz)"
            )));
        }
        let mut offsets: Vec<f64> = Vec::new();
        let mut group_of = Vec::with_capacity(plan.len());
        for a in plan.antennas() {
            let g = match offsets.iter().position(|&f| f == a.frequency_offset) {
                Some(g) => g,
                None => {
                    offsets.push(a.frequency_offset);
                    offsets.len() - 1
                }
            };
            group_of.push(g);
        }
        let coefficients = (0..plan.n_epochs())
            .map(|e| {
                let mut c = vec![Complex64::new(0.0, 0.0); offsets.len()];
                for ((a, g), &group) in plan.antennas().iter().zip(channel.gains()).zip(&group_of) {
                    c[group] += a.amplitude * g * Complex64::from_polar(1.0, a.phases[e]);
                }
                c
            })
            .collect();
        let mut synth = EnvelopeSynthesizer {
            sample_rate,
            epoch_starts: plan.epoch_starts().to_vec(),
            offsets,
            coefficients,
            period: None,
        };
        synth.period = synth.tabulate_period();
        Ok(synth)
    }

    /// Tone index k_g and period P such that offset_g = k_g · fs / P.
    fn harmonic_grid(&self) -> Option<(Vec<i64>, usize)> {
        if self.coefficients.len() != 1 {
            return None;
        }
        let base = self
            .offsets
            .iter()
            .map(|f| f.abs())
            .filter(|&f| f > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !base.is_finite() {
            return None;
        }
        let near_int = |x: f64| (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0);
        let period = self.sample_rate / base;
        if !near_int(period) || period.round() as usize > MAX_PERIOD_SAMPLES {
            return None;
        }
        let mut harmonics = Vec::with_capacity(self.offsets.len());
        for &f in &self.offsets {
            let k = f / base;
            if !near_int(k) {
                return None;
            }
            harmonics.push(k.round() as i64);
        }
        Some((harmonics, period.round() as usize))
    }

    fn tabulate_period(&self) -> Option<Vec<f64>> {
        let (harmonics, p) = self.harmonic_grid()?;
        let coeffs = &self.coefficients[0];
        let table = (0..p as i64)
            .map(|j| {
                let mut sum = Complex64::new(0.0, 0.0);
                for (c, &k) in coeffs.iter().zip(&harmonics) {
                    let cycles = (k * j).rem_euclid(p as i64) as f64 / p as f64;
                    sum += c * Complex64::from_polar(1.0, TAU * cycles);
                }
                sum.norm_sqr()
            })
            .collect();
        Some(table)
    }

    /// Period of the envelope in samples, when it is exactly periodic.
    pub fn period_samples(&self) -> Option<usize> {
        self.period.as_ref().map(Vec::len)
    }

    /// Evaluates the phasor sum at sample `i` without the period table.
    pub fn sample_direct(&self, i: u64) -> f64 {
        let t = i as f64 / self.sample_rate;
        let epoch = self.epoch_starts.partition_point(|&s| s <= t).saturating_sub(1);
        let coeffs = &self.coefficients[epoch];
        let mut sum = Complex64::new(0.0, 0.0);
        for (c, &f) in coeffs.iter().zip(&self.offsets) {
            if f == 0.0 {
                sum += c;
            } else {
                let cycles = (f * t).fract();
                sum += c * Complex64::from_polar(1.0, TAU * cycles);
            }
        }
        sum.norm_sqr()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Power at global sample index `i` (t = i / sample_rate).
    pub fn sample(&self, i: u64) -> f64 {
        match &self.period {
            Some(table) => table[(i % table.len() as u64) as usize],
            None => self.sample_direct(i),
        }
    }

    /// Fills `out` with samples `first..first + out.len()`. Values depend
    /// only on the global index, so chunked synthesis is bit-identical to a
    /// single pass.
    pub fn fill(&self, first: u64, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.sample(first + k as u64);
        }
    }
}

pub(crate) fn sample_count(duration: f64, sample_rate: f64) -> usize {
    (duration * sample_rate * (1.0 + 1e-12)).floor() as usize
}

/// Received power |Σ a_k g_k exp(j(2πΔf_k t + φ_k(t)))|² sampled on
/// [0, duration).
pub fn synthesize_envelope(
    plan: &ExcitationPlan,
    channel: &ChannelRealization,
    duration: f64,
    sample_rate: f64,
) -> Result<PowerEnvelope> {
    let synth = EnvelopeSynthesizer::new(plan, channel, sample_rate)?;
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::invalid("duration must be positive"));
    }
    let n = sample_count(duration, sample_rate);
    if n == 0 {
        return Err(Error::invalid("duration shorter than one envelope sample"));
    }
    let mut samples = vec![0.0; n];
    synth.fill(0, &mut samples);
    PowerEnvelope::new(sample_rate, 0.0, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_channel(n: usize, g: f64) -> ChannelRealization {
        ChannelRealization::new(vec![Complex64::new(g, 0.0); n]).unwrap()
    }

    #[test]
    fn single_tone_epoch_count() {
        let plan = adaptive_single_tone_plan(84, 1.0, 5.0, 1800.0, 1).unwrap();
        assert_eq!(plan.n_epochs(), 360);
        assert!(plan.antennas().iter().all(|a| a.phases.len() == 360 && a.frequency_offset == 0.0));
        assert_eq!(plan.epoch_starts()[1], 5.0);
        assert_eq!(plan.epoch_at(4.999), 0);
        assert_eq!(plan.epoch_at(5.0), 1);
    }

    #[test]
    fn plans_are_deterministic() {
        let a = adaptive_single_tone_plan(84, 1.0, 5.0, 60.0, 42).unwrap();
        let b = adaptive_single_tone_plan(84, 1.0, 5.0, 60.0, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, adaptive_single_tone_plan(84, 1.0, 5.0, 60.0, 43).unwrap());
        assert_eq!(multi_tone_plan(84, 1.0, 100.0, 9).unwrap(), multi_tone_plan(84, 1.0, 100.0, 9).unwrap());
    }

    #[test]
    fn plan_argument_errors() {
        assert!(adaptive_single_tone_plan(0, 1.0, 5.0, 10.0, 0).is_err());
        assert!(adaptive_single_tone_plan(4, 1.0, 0.0, 10.0, 0).is_err());
        assert!(adaptive_single_tone_plan(4, 1.0, 5.0, 4.0, 0).is_err());
        assert!(multi_tone_plan(0, 1.0, 100.0, 0).is_err());
        assert!(multi_tone_plan(3, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn multi_tone_offsets() {
        let plan = multi_tone_plan(84, 1.0, 100.0, 3).unwrap();
        let offsets: Vec<f64> = plan.antennas().iter().map(|a| a.frequency_offset).collect();
        assert_eq!(offsets[0], 0.0);
        assert_eq!(offsets[83], 8300.0);
        assert!(offsets.windows(2).all(|w| w[1] - w[0] == 100.0));
        // 84 carriers on a 100 Hz grid occupy 8.4 kHz
        assert_eq!(offsets.len() as f64 * 100.0, 8400.0);
    }

    #[test]
    fn single_antenna_envelopes_are_constant() {
        let ch = flat_channel(1, 0.01);
        for plan in [
            adaptive_single_tone_plan(1, 0.5, 5.0, 10.0, 11).unwrap(),
            multi_tone_plan(1, 0.5, 100.0, 11).unwrap(),
        ] {
            let env = synthesize_envelope(&plan, &ch, 10.0, 1000.0).unwrap();
            let expected = 0.25 * 1e-4;
            for p in &env.samples {
                assert_relative_eq!(*p, expected, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn two_tone_beat_closed_form() {
        let (a, g) = (0.3, 0.02);
        let ch = flat_channel(2, g);
        let plan = ExcitationPlan::new(
            vec![0.0],
            vec![
                AntennaExcitation { amplitude: a, frequency_offset: 0.0, phases: vec![0.0] },
                AntennaExcitation { amplitude: a, frequency_offset: 100.0, phases: vec![0.0] },
            ],
        )
        .unwrap();
        let env = synthesize_envelope(&plan, &ch, 0.02, 100e3).unwrap();
        let base = a * a * g * g;
        for (i, p) in env.samples.iter().enumerate() {
            let t = env.time_at(i);
            let expected = 2.0 * base * (1.0 + (TAU * 100.0 * t).cos());
            assert!((p - expected).abs() <= 1e-12 * 4.0 * base, "t={t}");
        }
        assert_relative_eq!(env.mean(), 2.0 * base, max_relative = 1e-9);
        assert_relative_eq!(env.peak(), 4.0 * base, max_relative = 1e-9);
    }

    #[test]
    fn two_tone_random_phases_period_is_10ms() {
        let plan = multi_tone_plan(2, 1.0, 100.0, 5).unwrap();
        let env = synthesize_envelope(&plan, &flat_channel(2, 0.1), 0.05, 100e3).unwrap();
        for i in 0..env.samples.len() - 1000 {
            assert_relative_eq!(env.samples[i], env.samples[i + 1000], max_relative = 1e-9, epsilon = 1e-15);
        }
    }

    #[test]
    fn aligned_phases_sum_coherently() {
        let n = 12;
        let plan = ExcitationPlan::new(
            vec![0.0],
            (0..n)
                .map(|_| AntennaExcitation { amplitude: 0.2, frequency_offset: 0.0, phases: vec![1.0] })
                .collect(),
        )
        .unwrap();
        let env = synthesize_envelope(&plan, &flat_channel(n, 0.05), 1.0, 100.0).unwrap();
        let expected = (n * n) as f64 * 0.04 * 0.0025;
        assert!(env.samples.iter().all(|p| (p - expected).abs() < 1e-15));
    }

    #[test]
    fn single_tone_changes_only_at_dwell_boundaries() {
        let plan = adaptive_single_tone_plan(8, 1.0, 0.5, 3.0, 2).unwrap();
        let ch = crate::array_channel::sample_channel(
            &crate::array_channel::ArrayGeometry::ceiling_grid(2, 4, 1.0, 2.0, 2.0, 920e6).unwrap(),
            [0.1, 0.2, 0.0],
            &Default::default(),
        )
        .unwrap();
        let env = synthesize_envelope(&plan, &ch, 3.0, 100.0).unwrap();
        for (i, w) in env.samples.windows(2).enumerate() {
            if (i + 1) % 50 != 0 {
                assert_eq!(w[0], w[1], "change inside dwell at sample {}", i + 1);
            }
        }
    }

    #[test]
    fn synthesis_errors() {
        let plan = multi_tone_plan(84, 1.0, 100.0, 0).unwrap();
        assert!(synthesize_envelope(&plan, &flat_channel(83, 0.1), 1.0, 100e3).is_err());
        // 4 x 8300 Hz = 33.2 kHz minimum
        assert!(synthesize_envelope(&plan, &flat_channel(84, 0.1), 1.0, 33e3).is_err());
        assert!(synthesize_envelope(&plan, &flat_channel(84, 0.1), 1e-6, 100e3).is_err());
    }

    #[test]
    fn chunked_synthesis_is_identical() {
        let plan = multi_tone_plan(20, 1.0, 100.0, 4).unwrap();
        let ch = flat_channel(20, 0.03);
        let synth = EnvelopeSynthesizer::new(&plan, &ch, 100e3).unwrap();
        let mut whole = vec![0.0; 3000];
        synth.fill(0, &mut whole);
        let mut parts = vec![0.0; 3000];
        let (a, b) = parts.split_at_mut(1234);
        synth.fill(0, a);
        synth.fill(1234, b);
        assert_eq!(whole, parts);
    }

    #[test]
    fn period_table_matches_direct_evaluation() {
        let plan = multi_tone_plan(84, 1.0, 100.0, 21).unwrap();
        let ch = crate::array_channel::sample_channel(
            &crate::array_channel::ArrayGeometry::default(),
            [0.35, 0.9, 0.0],
            &Default::default(),
        )
        .unwrap();
        let synth = EnvelopeSynthesizer::new(&plan, &ch, 100e3).unwrap();
        assert_eq!(synth.period_samples(), Some(1000));
        let scale: f64 = ch.gains().iter().map(|g| g.norm()).sum::<f64>().powi(2);
        for i in (0..3000u64).chain(179_900_000..179_903_000) {
            let (a, b) = (synth.sample(i), synth.sample_direct(i));
            assert!((a - b).abs() <= 1e-9 * scale, "i={i}: {a} vs {b}");
        }
        let single = adaptive_single_tone_plan(84, 1.0, 5.0, 20.0, 1).unwrap();
        assert_eq!(EnvelopeSynthesizer::new(&single, &ch, 100e3).unwrap().period_samples(), None);
    }

    #[test]
    fn envelope_csv_header() {
        let env = PowerEnvelope::new(10.0, 0.0, vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        env.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t_s,p_rf_w\n0,1\n0.1,2\n");
    }

    proptest::proptest! {
        #[test]
        fn peak_never_exceeds_triangle_bound(seed in 0u64..1000, n in 1usize..16) {
            let gains: Vec<Complex64> = (0..n)
                .map(|k| Complex64::from_polar(0.01 * (1.0 + k as f64 / 3.0), k as f64))
                .collect();
            let ch = ChannelRealization::new(gains.clone()).unwrap();
            let bound: f64 = gains.iter().map(|g| 0.7 * g.norm()).sum::<f64>().powi(2);
            for plan in [
                multi_tone_plan(n, 0.7, 100.0, seed).unwrap(),
                adaptive_single_tone_plan(n, 0.7, 0.01, 0.05, seed).unwrap(),
            ] {
                let env = synthesize_envelope(&plan, &ch, 0.05, 20e3).unwrap();
                proptest::prop_assert!(env.peak() <= bound * (1.0 + 1e-12));
            }
        }
    }
}
