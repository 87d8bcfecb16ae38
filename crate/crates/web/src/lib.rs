//! Browser bindings: received-power envelopes, buffer trajectories and
//! response-time CDFs for a campaign configuration given as TOML text.
//! Every export returns a flat `Float64Array`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use wasm_bindgen::prelude::*;

use wptsim_core::campaign::{simulate_strategy, CampaignConfig, SimulatedPoint};
use wptsim_core::end_device::McuMode;
use wptsim_core::excitation::EnvelopeSynthesizer;
use wptsim_core::quantities::dbm_to_watt;
use wptsim_core::trace_replay::{monte_carlo_response, reconstruct_buffer};
use wptsim_core::{Error, Result, Strategy};

const MAX_ENVELOPE_SAMPLES: usize = 1 << 20;

fn parse_config(toml: &str) -> Result<CampaignConfig> {
    CampaignConfig::from_toml_str(toml, "")
}

fn mode(ideal: bool) -> McuMode {
    if ideal {
        McuMode::Ideal
    } else {
        McuMode::Realistic
    }
}

fn point(cfg: &CampaignConfig, strategy: Strategy, gain_db: f64) -> Result<SimulatedPoint> {
    simulate_strategy(cfg, strategy, &[gain_db])?
        .pop()
        .ok_or_else(|| Error::Validation("no simulated point".into()))
}

/// Received RF power [W] over `window_ms` starting at `start_s`, sampled at
/// the configured envelope rate.
pub fn envelope_window(toml: &str, strategy: &str, gain_db: f64, start_s: f64, window_ms: f64) -> Result<Vec<f64>> {
    let cfg = parse_config(toml)?;
    let strategy: Strategy = strategy.parse()?;
    if !(start_s >= 0.0) || !(window_ms > 0.0) {
        return Err(Error::InvalidArgument("need start >= 0 and a positive window".into()));
    }
    let rate = cfg.envelope_rate_hz;
    let n = (window_ms * 1e-3 * rate).round() as usize;
    if n == 0 || n > MAX_ENVELOPE_SAMPLES {
        return Err(Error::InvalidArgument(format!("window gives {n} samples")));
    }
    let channel = cfg.channel()?;
    let plan = cfg.unit_plan(strategy, channel.len())?;
    let synth = EnvelopeSynthesizer::new(&plan, &channel, rate)?;
    let scale = dbm_to_watt(cfg.calibration()?.gain_to_power(gain_db)?);
    let mut out = vec![0.0; n];
    synth.fill((start_s * rate).round() as u64, &mut out);
    out.iter_mut().for_each(|p| *p *= scale);
    Ok(out)
}

/// Depleted-start replay of one simulated point as `(t, v_eh, v_b)` triples.
pub fn buffer_trajectory(toml: &str, strategy: &str, gain_db: f64, ideal: bool) -> Result<Vec<f64>> {
    let cfg = parse_config(toml)?;
    let p = point(&cfg, strategy.parse()?, gain_db)?;
    let (traj, _) = reconstruct_buffer(&p.trace, &cfg.device_config(mode(ideal)), 0)?;
    Ok(traj
        .iter()
        .zip(&p.trace.v_dc)
        .flat_map(|(s, &v_eh)| [s.t, v_eh, s.v_b])
        .collect())
}

/// Monte-Carlo response-time CDF as `(t, F)` pairs; the last pair is the
/// plateau out to the simulated duration.
pub fn response_cdf(toml: &str, strategy: &str, gain_db: f64, ideal: bool) -> Result<Vec<f64>> {
    let cfg = parse_config(toml)?;
    let p = point(&cfg, strategy.parse()?, gain_db)?;
    let stats = monte_carlo_response(&p.trace, &cfg.device_config(mode(ideal)), cfg.n_trials, cfg.monte_carlo_seed())?;
    Ok(stats.cdf.iter().flat_map(|&(t, f)| [t, f]).collect())
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = envelopeWindow)]
pub fn envelope_window_js(toml: &str, strategy: &str, gain_db: f64, start_s: f64, window_ms: f64) -> Result<Vec<f64>, JsError> {
    envelope_window(toml, strategy, gain_db, start_s, window_ms).map_err(js)
}

#[wasm_bindgen(js_name = bufferTrajectory)]
pub fn buffer_trajectory_js(toml: &str, strategy: &str, gain_db: f64, ideal: bool) -> Result<Vec<f64>, JsError> {
    buffer_trajectory(toml, strategy, gain_db, ideal).map_err(js)
}

#[wasm_bindgen(js_name = responseCdf)]
pub fn response_cdf_js(toml: &str, strategy: &str, gain_db: f64, ideal: bool) -> Result<Vec<f64>, JsError> {
    response_cdf(toml, strategy, gain_db, ideal).map_err(js)
}
