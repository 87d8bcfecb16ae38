//! Energy-profiler trace ingestion, buffer-voltage reconstruction from
//! measured DC power, and Monte-Carlo response-time estimation.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::campaign::cdf_points;
use crate::end_device::{BufferState, Device, DeviceEvents, EndDeviceConfig};
use crate::error::{Error, Result};
use crate::excitation::Strategy;
use crate::harvester::HarvestTrace;

pub const DEFAULT_EP_RATE_HZ: f64 = 250.0;
pub const DEFAULT_TRIALS: usize = 50;
const HEADER: [&str; 3] = ["t_s", "p_dc_w", "v_dc_v"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub strategy: Option<Strategy>,
    pub gain_db: Option<f64>,
    pub duration: f64,
}

/// Uniformly sampled harvester DC power and voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpTrace {
    pub sample_rate: f64,
    pub t: Vec<f64>,
    pub p_dc: Vec<f64>,
    pub v_dc: Vec<f64>,
    pub meta: TraceMeta,
}

impl EpTrace {
    /// Wraps simulated harvester output as a trace starting at t = 0.
    pub fn from_harvest(h: &HarvestTrace, strategy: Option<Strategy>, gain_db: Option<f64>) -> Self {
        let n = h.len();
        EpTrace {
            sample_rate: h.sample_rate,
            t: (0..n).map(|i| i as f64 / h.sample_rate).collect(),
            p_dc: h.p_eh.clone(),
            v_dc: h.v_eh.clone(),
            meta: TraceMeta {
                strategy,
                gain_db,
                duration: n as f64 / h.sample_rate,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn mean_dc_power(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.p_dc.iter().sum::<f64>() / self.len() as f64
        }
    }

    /// Fraction of samples with harvester voltage above `v_th`.
    pub fn fraction_above(&self, v_th: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.v_dc.iter().filter(|&&v| v > v_th).count() as f64 / self.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        if let Some(s) = self.meta.strategy {
            writeln!(writer, "# strategy={s}")?;
        }
        if let Some(g) = self.meta.gain_db {
            writeln!(writer, "# gain_db={g}")?;
        }
        writeln!(writer, "# sample_rate_hz={}", self.sample_rate)?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for i in 0..self.len() {
            w.write_record([self.t[i].to_string(), self.p_dc[i].to_string(), self.v_dc[i].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_meta(text: &str) -> Result<(Option<Strategy>, Option<f64>, Option<f64>)> {
    let (mut strategy, mut gain, mut rate) = (None, None, None);
    for (i, line) in text.lines().enumerate() {
        let Some(body) = line.strip_prefix('#') else { continue };
        let Some((key, value)) = body.split_once('=') else { continue };
        let (key, value) = (key.trim(), value.trim());
        let bad = |msg: String| Error::Parse { line: i as u64 + 1, msg };
        match key {
            "strategy" => strategy = Some(value.parse().map_err(|e: Error| bad(e.to_string()))?),
            "gain_db" => gain = Some(value.parse().map_err(|_| bad(format!("bad gain_db {value:?}")))?),
            "sample_rate_hz" => {
                let r: f64 = value.parse().map_err(|_| bad(format!("bad sample_rate_hz {value:?}")))?;
                if !(r > 0.0) || !r.is_finite() {
                    return Err(bad("sample_rate_hz must be positive".into()));
                }
                rate = Some(r);
            }
            _ => {}
        }
    }
    Ok((strategy, gain, rate))
}

fn csv_error_line(e: &csv::Error) -> u64 {
    e.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses a `t_s,p_dc_w,v_dc_v` trace with optional `# key=value` header
/// comments (`strategy`, `gain_db`, `sample_rate_hz`). Without an explicit
/// rate, the rate is inferred from the time column.
pub fn parse_ep_trace<R: Read>(mut source: R) -> Result<EpTrace> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    let (strategy, gain_db, declared_rate) = parse_meta(&text)?;

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: csv_error_line(&e), msg: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            line: headers.position().map(|p| p.line()).unwrap_or(1),
            msg: format!("expected header {:?}, found {:?}", HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let (mut t, mut p_dc, mut v_dc) = (Vec::new(), Vec::new(), Vec::new());
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse { line: csv_error_line(&e), msg: e.to_string() })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut vals = [0.0; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            let field = rec.get(k).unwrap_or("");
            *v = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("{}: not a finite number: {field:?}", HEADER[k]),
                })?;
        }
        if vals[1] < 0.0 || vals[2] < 0.0 {
            return Err(Error::Validation(format!("line {line}: negative power or voltage")));
        }
        t.push(vals[0]);
        p_dc.push(vals[1]);
        v_dc.push(vals[2]);
        lines.push(line);
    }
    if t.is_empty() {
        return Err(Error::Validation("trace has no samples".into()));
    }
    if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(format!("line {}: time is not strictly increasing", lines[i + 1])));
    }
    let sample_rate = match declared_rate {
        Some(r) => r,
        None if t.len() >= 2 => (t.len() - 1) as f64 / (t[t.len() - 1] - t[0]),
        None => return Err(Error::Validation("cannot infer sample rate from a single sample".into())),
    };
    let max_gap = 2.0 / sample_rate;
    if let Some(i) = t.windows(2).position(|w| w[1] - w[0] > max_gap * (1.0 + 1e-9)) {
        return Err(Error::Validation(format!(
            "line {}: gap of {} s exceeds two sample periods",
            lines[i + 1],
            t[i + 1] - t[i]
        )));
    }
    let n = t.len();
    Ok(EpTrace {
        sample_rate,
        t,
        p_dc,
        v_dc,
        meta: TraceMeta {
            strategy,
            gain_db,
            duration: n as f64 / sample_rate,
        },
    })
}

fn check_start(trace: &EpTrace, start_index: usize) -> Result<()> {
    if start_index >= trace.len() {
        return Err(Error::invalid(format!(
            "start index {start_index} beyond trace of {} samples",
            trace.len()
        )));
    }
    Ok(())
}

/// Replays the trace from `start_index` into a depleted device. Times in the
/// result are relative to the start sample.
pub fn reconstruct_buffer(
    trace: &EpTrace,
    cfg: &EndDeviceConfig,
    start_index: usize,
) -> Result<(Vec<BufferState>, DeviceEvents)> {
    check_start(trace, start_index)?;
    let mut dev = Device::new(cfg, trace.dt(), 0.0)?;
    let mut traj = Vec::with_capacity(trace.len() - start_index);
    for (&p, &v) in trace.p_dc[start_index..].iter().zip(&trace.v_dc[start_index..]) {
        dev.step(p, v);
        traj.push(*dev.state());
    }
    Ok((traj, dev.into_events()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum TrialOutcome {
    Responded { time: f64 },
    /// No pilot before the trace ran out; `limit` is the remaining duration.
    Censored { limit: f64 },
}

impl TrialOutcome {
    pub fn time(&self) -> Option<f64> {
        match *self {
            TrialOutcome::Responded { time } => Some(time),
            TrialOutcome::Censored { .. } => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, TrialOutcome::Censored { .. })
    }
}

/// Response time of a depleted device started at `start_index`, stopping at
/// the first completed pilot.
pub fn trial_response(trace: &EpTrace, cfg: &EndDeviceConfig, start_index: usize) -> Result<TrialOutcome> {
    check_start(trace, start_index)?;
    let mut dev = Device::new(cfg, trace.dt(), 0.0)?;
    for (&p, &v) in trace.p_dc[start_index..].iter().zip(&trace.v_dc[start_index..]) {
        dev.step(p, v);
        if let Some(time) = dev.events().pilot_sent_at {
            return Ok(TrialOutcome::Responded { time });
        }
    }
    Ok(TrialOutcome::Censored {
        limit: (trace.len() - start_index) as f64 * trace.dt(),
    })
}

/// Nearest-rank percentile with censored values ranked last. `None` when
/// the selected rank is censored.
pub fn nearest_rank_percentile(outcomes: &[TrialOutcome], pct: f64) -> Option<f64> {
    if outcomes.is_empty() {
        return None;
    }
    let mut times: Vec<f64> = outcomes.iter().filter_map(TrialOutcome::time).collect();
    times.sort_by(f64::total_cmp);
    let n = outcomes.len();
    let rank = ((pct / 100.0 * n as f64) * (1.0 - 1e-12)).ceil().clamp(1.0, n as f64) as usize;
    times.get(rank - 1).copied()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseStats {
    pub n_trials: usize,
    pub start_indices: Vec<usize>,
    pub outcomes: Vec<TrialOutcome>,
    pub p50: Option<f64>,
    pub p95: Option<f64>,
    pub p98: Option<f64>,
    pub cdf: Vec<(f64, f64)>,
}

impl ResponseStats {
    pub fn from_outcomes(start_indices: Vec<usize>, outcomes: Vec<TrialOutcome>, censor_limit: f64) -> Self {
        let times: Vec<Option<f64>> = outcomes.iter().map(TrialOutcome::time).collect();
        ResponseStats {
            n_trials: outcomes.len(),
            p50: nearest_rank_percentile(&outcomes, 50.0),
            p95: nearest_rank_percentile(&outcomes, 95.0),
            p98: nearest_rank_percentile(&outcomes, 98.0),
            cdf: if times.is_empty() { Vec::new() } else { cdf_points(&times, censor_limit) },
            start_indices,
            outcomes,
        }
    }

    pub fn n_uncensored(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.is_censored()).count()
    }

    pub fn uncensored_fraction(&self) -> f64 {
        if self.n_trials == 0 {
            0.0
        } else {
            self.n_uncensored() as f64 / self.n_trials as f64
        }
    }
}

/// Seeded uniform start indices over the whole trace.
pub fn draw_start_indices(len: usize, n_trials: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_trials).map(|_| rng.random_range(0..len)).collect()
}

#[cfg(feature = "parallel")]
fn run_trials(trace: &EpTrace, cfg: &EndDeviceConfig, starts: &[usize]) -> Result<Vec<TrialOutcome>> {
    use rayon::prelude::*;
    starts.par_iter().map(|&s| trial_response(trace, cfg, s)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_trials(trace: &EpTrace, cfg: &EndDeviceConfig, starts: &[usize]) -> Result<Vec<TrialOutcome>> {
    starts.iter().map(|&s| trial_response(trace, cfg, s)).collect()
}

/// Monte-Carlo response-time distribution over random start instants.
pub fn monte_carlo_response(
    trace: &EpTrace,
    cfg: &EndDeviceConfig,
    n_trials: usize,
    seed: u64,
) -> Result<ResponseStats> {
    if n_trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if trace.is_empty() {
        return Err(Error::invalid("trace is empty"));
    }
    cfg.validate()?;
    let starts = draw_start_indices(trace.len(), n_trials, seed);
    let outcomes = run_trials(trace, cfg, &starts)?;
    Ok(ResponseStats::from_outcomes(starts, outcomes, trace.duration()))
}
