//! Campaign configuration, gain sweeps over both strategies, report
//! emission and empirical CDFs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array_channel::{
    sample_channel, ArrayGeometry, ChannelRealization, FadingConfig, FadingKind, Position,
};
use crate::end_device::{EndDeviceConfig, McuLoadCurve, McuMode};
use crate::error::{Error, Result};
use crate::excitation::{
    adaptive_single_tone_plan, multi_tone_plan, sample_count, EnvelopeSynthesizer, ExcitationPlan,
    Strategy, DEFAULT_DWELL_S, DEFAULT_ENVELOPE_RATE_HZ, DEFAULT_TONE_SPACING_HZ,
};
use crate::harvester::{
    EfficiencyCurve, HarvestAccumulator, HarvesterMode, HarvesterModel, ParametricHarvester,
    DEFAULT_AVERAGING_WINDOW_S, DEFAULT_LOAD_RESISTANCE_OHM, DEFAULT_V_MAX,
};
use crate::quantities::{combine_equal_sources, dbm_to_watt, GainCalibration};
use crate::trace_replay::{monte_carlo_response, EpTrace, ResponseStats, DEFAULT_TRIALS};

/// Empirical CDF over uncensored times (`None` = censored): one step per
/// sorted value, starting at (0, 0) and holding the final fraction out to
/// `censor_limit`.
pub fn cdf_points(times: &[Option<f64>], censor_limit: f64) -> Vec<(f64, f64)> {
    let n = times.len().max(1) as f64;
    let mut sorted: Vec<f64> = times.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let mut pts = Vec::with_capacity(sorted.len() + 2);
    pts.push((0.0, 0.0));
    for (i, &t) in sorted.iter().enumerate() {
        pts.push((t, (i + 1) as f64 / n));
    }
    let last = sorted.last().copied().unwrap_or(0.0);
    pts.push((censor_limit.max(last), sorted.len() as f64 / n));
    pts
}

/// Right-continuous evaluation of a step CDF produced by [`cdf_points`].
pub fn cdf_eval(points: &[(f64, f64)], t: f64) -> f64 {
    points
        .iter()
        .take_while(|(x, _)| *x <= t)
        .map(|&(_, f)| f)
        .fold(0.0, f64::max)
}

fn default_gains() -> Vec<f64> {
    (75..=85).map(f64::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub rows: usize,
    pub cols: usize,
    pub width_m: f64,
    pub length_m: f64,
    pub height_m: f64,
    pub carrier_hz: f64,
    /// `antenna_id,x_m,y_m,z_m` file; overrides the grid when set.
    pub csv: Option<PathBuf>,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec {
            rows: 7,
            cols: 12,
            width_m: 4.0,
            length_m: 8.0,
            height_m: 2.4,
            carrier_hz: crate::array_channel::DEFAULT_CARRIER_HZ,
            csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSpec {
    pub position_m: Position,
    /// Extra receive-side loss applied on top of free-space gain.
    pub rx_loss_db: f64,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        DeviceSpec {
            position_m: [0.35, 0.9, 0.0],
            rx_loss_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HarvesterSelect {
    /// Per-strategy measured average efficiency curves.
    #[default]
    Measured,
    Parametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvesterSpec {
    pub mode: HarvesterSelect,
    pub single_curve_csv: Option<PathBuf>,
    pub multi_curve_csv: Option<PathBuf>,
    pub sensitivity_w: f64,
    pub peak_efficiency: f64,
    pub saturation_w: f64,
    pub v_max_v: f64,
    pub averaging_window_s: f64,
    pub load_resistance_ohm: f64,
}

impl Default for HarvesterSpec {
    fn default() -> Self {
        HarvesterSpec {
            mode: HarvesterSelect::Measured,
            single_curve_csv: None,
            multi_curve_csv: None,
            sensitivity_w: 5e-6,
            peak_efficiency: 0.5,
            saturation_w: 1e-3,
            v_max_v: DEFAULT_V_MAX,
            averaging_window_s: DEFAULT_AVERAGING_WINDOW_S,
            load_resistance_ohm: DEFAULT_LOAD_RESISTANCE_OHM,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    /// `gain_db,p_dbm` file; the built-in table is used when unset.
    pub csv: Option<PathBuf>,
}

/// Campaign configuration, read from TOML. Relative file paths resolve
/// against the configuration file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub gains_db: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub mcu_modes: Vec<McuMode>,
    pub n_trials: usize,
    pub envelope_rate_hz: f64,
    pub dwell_s: f64,
    pub tone_spacing_hz: f64,
    pub geometry: GeometrySpec,
    pub device: DeviceSpec,
    pub fading: FadingKind,
    pub harvester: HarvesterSpec,
    pub end_device: EndDeviceConfig,
    pub calibration: CalibrationSpec,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 0,
            duration_s: 1800.0,
            gains_db: default_gains(),
            strategies: vec![Strategy::Single, Strategy::Multi],
            mcu_modes: vec![McuMode::Realistic, McuMode::Ideal],
            n_trials: DEFAULT_TRIALS,
            envelope_rate_hz: DEFAULT_ENVELOPE_RATE_HZ,
            dwell_s: DEFAULT_DWELL_S,
            tone_spacing_hz: DEFAULT_TONE_SPACING_HZ,
            geometry: GeometrySpec::default(),
            device: DeviceSpec::default(),
            fading: FadingKind::None,
            harvester: HarvesterSpec::default(),
            end_device: EndDeviceConfig::default(),
            calibration: CalibrationSpec::default(),
            base_dir: PathBuf::new(),
        }
    }
}

fn open(base: &Path, rel: &Path) -> Result<File> {
    let path = base.join(rel);
    File::open(&path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
}

/// Distinct stream seeds derived from the campaign seed (SplitMix64).
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: CampaignConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field and referenced file. All failures surface as
    /// [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    fn check(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(Error::Config(m.to_string()));
        if self.gains_db.is_empty() {
            return cfg_err("gain sweep is empty");
        }
        if self.strategies.is_empty() {
            return cfg_err("no strategies selected");
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return cfg_err("duration_s must be positive");
        }
        if self.n_trials == 0 {
            return cfg_err("n_trials must be at least 1");
        }
        if !(self.envelope_rate_hz > 0.0) || !(self.dwell_s > 0.0) || !(self.tone_spacing_hz > 0.0) {
            return cfg_err("envelope_rate_hz, dwell_s and tone_spacing_hz must be positive");
        }
        let cal = self.calibration()?;
        for &g in &self.gains_db {
            cal.gain_to_power(g)?;
        }
        self.geometry()?;
        self.end_device.validate()?;
        for s in &self.strategies {
            self.harvester_model(*s)?.validate()?;
        }
        Ok(())
    }

    pub fn calibration(&self) -> Result<GainCalibration> {
        match &self.calibration.csv {
            Some(p) => GainCalibration::from_csv(open(&self.base_dir, p)?),
            None => Ok(GainCalibration::default()),
        }
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        let g = &self.geometry;
        match &g.csv {
            Some(p) => ArrayGeometry::from_csv(open(&self.base_dir, p)?, g.carrier_hz),
            None => ArrayGeometry::ceiling_grid(g.rows, g.cols, g.width_m, g.length_m, g.height_m, g.carrier_hz)
                .map_err(|e| Error::Config(e.to_string())),
        }
    }

    pub fn harvester_model(&self, strategy: Strategy) -> Result<HarvesterModel> {
        let h = &self.harvester;
        let mode = match h.mode {
            HarvesterSelect::Measured => {
                let file = match strategy {
                    Strategy::Single => &h.single_curve_csv,
                    Strategy::Multi => &h.multi_curve_csv,
                };
                let curve = match file {
                    Some(p) => EfficiencyCurve::from_csv(open(&self.base_dir, p)?)?,
                    None => EfficiencyCurve::measured(strategy),
                };
                HarvesterMode::MeasuredCurve { curve }
            }
            HarvesterSelect::Parametric => HarvesterMode::Parametric(
                ParametricHarvester::new(h.sensitivity_w, h.peak_efficiency, h.saturation_w)
                    .map_err(|e| Error::Config(e.to_string()))?,
            ),
        };
        Ok(HarvesterModel {
            mode,
            v_max: h.v_max_v,
            averaging_window: h.averaging_window_s,
            load_resistance: h.load_resistance_ohm,
        })
    }

    /// Device configuration with the MCU load for `mode`.
    pub fn device_config(&self, mode: McuMode) -> EndDeviceConfig {
        let mut cfg = self.end_device.clone();
        cfg.mcu_load = match (mode, &cfg.mcu_load) {
            (McuMode::Ideal, _) => McuLoadCurve::Ideal,
            (McuMode::Realistic, McuLoadCurve::Realistic { .. }) => cfg.mcu_load.clone(),
            (McuMode::Realistic, McuLoadCurve::Ideal) => McuLoadCurve::default_realistic(),
        };
        cfg
    }

    pub fn channel(&self) -> Result<ChannelRealization> {
        let fading = FadingConfig {
            kind: self.fading,
            seed: derive_seed(self.seed, 1),
        };
        let ch = sample_channel(&self.geometry()?, self.device.position_m, &fading)?;
        Ok(ch.attenuated(self.device.rx_loss_db))
    }

    /// Unit-amplitude (1 W per antenna) plan for `strategy`.
    pub fn unit_plan(&self, strategy: Strategy, n_antennas: usize) -> Result<ExcitationPlan> {
        match strategy {
            Strategy::Single => adaptive_single_tone_plan(
                n_antennas,
                1.0,
                self.dwell_s,
                self.duration_s.max(self.dwell_s),
                derive_seed(self.seed, 2),
            ),
            Strategy::Multi => multi_tone_plan(n_antennas, 1.0, self.tone_spacing_hz, derive_seed(self.seed, 3)),
        }
    }

    pub fn monte_carlo_seed(&self) -> u64 {
        derive_seed(self.seed, 4)
    }
}

/// Harvester output of one (strategy, gain) point.
#[derive(Debug, Clone)]
pub struct SimulatedPoint {
    pub strategy: Strategy,
    pub gain_db: f64,
    pub per_antenna_dbm: f64,
    pub mean_rf_w: f64,
    pub trace: EpTrace,
}

const CHUNK_SAMPLES: usize = 100_000;

/// Synthesizes one unit-power envelope for `strategy` and drives every gain
/// from it. All gains share the phase realization, so points differ only by
/// transmit power.
pub fn simulate_strategy(cfg: &CampaignConfig, strategy: Strategy, gains_db: &[f64]) -> Result<Vec<SimulatedPoint>> {
    let cal = cfg.calibration()?;
    let channel = cfg.channel()?;
    let plan = cfg.unit_plan(strategy, channel.len())?;
    let synth = EnvelopeSynthesizer::new(&plan, &channel, cfg.envelope_rate_hz)?;
    let model = cfg.harvester_model(strategy)?;
    let n = sample_count(cfg.duration_s, cfg.envelope_rate_hz);
    if n == 0 {
        return Err(Error::invalid("duration shorter than one envelope sample"));
    }
    let per_antenna: Vec<f64> = gains_db.iter().map(|&g| cal.gain_to_power(g)).collect::<Result<_>>()?;
    let mut accs: Vec<HarvestAccumulator<'_>> = per_antenna
        .iter()
        .map(|&dbm| HarvestAccumulator::new(&model, cfg.envelope_rate_hz, dbm_to_watt(dbm)))
        .collect::<Result<_>>()?;

    let mut buf = vec![0.0; CHUNK_SAMPLES];
    let mut first = 0usize;
    while first < n {
        let len = CHUNK_SAMPLES.min(n - first);
        synth.fill(first as u64, &mut buf[..len]);
        for acc in &mut accs {
            acc.push(&buf[..len]);
        }
        first += len;
    }

    let mut points = Vec::with_capacity(gains_db.len());
    for ((acc, &gain_db), &per_antenna_dbm) in accs.into_iter().zip(gains_db).zip(&per_antenna) {
        let mean_rf_w = acc.mean_rf();
        let harvest = acc.finish()?;
        if harvest.is_empty() {
            return Err(Error::invalid("duration shorter than one harvester averaging window"));
        }
        points.push(SimulatedPoint {
            strategy,
            gain_db,
            per_antenna_dbm,
            mean_rf_w,
            trace: EpTrace::from_harvest(&harvest, Some(strategy), Some(gain_db)),
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSummary {
    pub n_trials: usize,
    pub n_uncensored: usize,
    pub p50_s: Option<f64>,
    pub p95_s: Option<f64>,
    pub p98_s: Option<f64>,
}

impl From<&ResponseStats> for ResponseSummary {
    fn from(s: &ResponseStats) -> Self {
        ResponseSummary {
            n_trials: s.n_trials,
            n_uncensored: s.n_uncensored(),
            p50_s: s.p50,
            p95_s: s.p95,
            p98_s: s.p98,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub gain_db: f64,
    pub n_antennas: usize,
    pub per_antenna_dbm: f64,
    pub total_dbm: f64,
    pub mean_rf_w: f64,
    pub mean_dc_w: f64,
    pub harvester_efficiency: f64,
    pub overall_efficiency_ppm: f64,
    /// Percentage of time the harvester voltage exceeds the MCU threshold.
    pub feasibility_pct: f64,
    pub realistic: Option<ResponseSummary>,
    pub ideal: Option<ResponseSummary>,
}

impl SweepRow {
    pub fn response(&self, mode: McuMode) -> Option<&ResponseSummary> {
        match mode {
            McuMode::Realistic => self.realistic.as_ref(),
            McuMode::Ideal => self.ideal.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone)]
pub struct CdfExport {
    pub strategy: Strategy,
    pub gain_db: f64,
    pub mode: McuMode,
    pub stats: ResponseStats,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub report: SweepReport,
    pub responses: Vec<CdfExport>,
}

/// Builds a report row and response statistics from a trace. `mean_rf_w` is
/// NaN-free only for simulated points; replayed traces pass the measured
/// value if known, else 0.
pub fn evaluate_point(
    cfg: &CampaignConfig,
    strategy: Strategy,
    gain_db: f64,
    per_antenna_dbm: f64,
    n_antennas: usize,
    mean_rf_w: f64,
    trace: &EpTrace,
) -> Result<(SweepRow, Vec<CdfExport>)> {
    let total_dbm = combine_equal_sources(per_antenna_dbm, n_antennas)?;
    let mean_dc_w = trace.mean_dc_power();
    let mut row = SweepRow {
        strategy,
        gain_db,
        n_antennas,
        per_antenna_dbm,
        total_dbm,
        mean_rf_w,
        mean_dc_w,
        harvester_efficiency: if mean_rf_w > 0.0 { mean_dc_w / mean_rf_w } else { 0.0 },
        overall_efficiency_ppm: mean_dc_w / dbm_to_watt(total_dbm) * 1e6,
        feasibility_pct: trace.fraction_above(cfg.end_device.v_mcu_th) * 100.0,
        realistic: None,
        ideal: None,
    };
    let mut exports = Vec::new();
    for &mode in &cfg.mcu_modes {
        let stats = monte_carlo_response(trace, &cfg.device_config(mode), cfg.n_trials, cfg.monte_carlo_seed())?;
        let summary = Some(ResponseSummary::from(&stats));
        match mode {
            McuMode::Realistic => row.realistic = summary,
            McuMode::Ideal => row.ideal = summary,
        }
        exports.push(CdfExport {
            strategy,
            gain_db,
            mode,
            stats,
        });
    }
    Ok((row, exports))
}

#[cfg(feature = "parallel")]
fn map_points<R, F>(points: &[SimulatedPoint], f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&SimulatedPoint) -> Result<R> + Sync + Send,
{
    use rayon::prelude::*;
    points.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_points<R, F>(points: &[SimulatedPoint], f: F) -> Result<Vec<R>>
where
    F: Fn(&SimulatedPoint) -> Result<R>,
{
    points.iter().map(f).collect()
}

/// Full sweep: every configured strategy x gain, with Monte-Carlo response
/// statistics for each MCU mode. Rows are ordered by strategy, then gain.
pub fn run_sweep(cfg: &CampaignConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let n_antennas = cfg.geometry()?.len();
    let mut keyed: BTreeMap<(Strategy, usize), (SweepRow, Vec<CdfExport>)> = BTreeMap::new();
    for &strategy in &cfg.strategies {
        let points = simulate_strategy(cfg, strategy, &cfg.gains_db)?;
        let evaluated = map_points(&points, |p| {
            evaluate_point(cfg, strategy, p.gain_db, p.per_antenna_dbm, n_antennas, p.mean_rf_w, &p.trace)
        })?;
        for (i, e) in evaluated.into_iter().enumerate() {
            keyed.insert((strategy, i), e);
        }
    }
    let mut report = SweepReport::default();
    let mut responses = Vec::new();
    for (_, (row, exports)) in keyed {
        report.rows.push(row);
        responses.extend(exports);
    }
    Ok(SweepOutput { report, responses })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "table" | "table-text" => Ok(ReportFormat::Table),
            other => Err(Error::invalid(format!("unknown report format {other:?} (csv|json|table)"))),
        }
    }
}

const MODES: [McuMode; 2] = [McuMode::Realistic, McuMode::Ideal];

fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "strategy",
        "gain_db",
        "n_antennas",
        "per_antenna_dbm",
        "total_dbm",
        "mean_rf_w",
        "mean_dc_w",
        "harvester_efficiency",
        "overall_efficiency_ppm",
        "feasibility_pct",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for m in MODES {
        for col in ["n_trials", "n_uncensored", "p50_s", "p95_s", "p98_s"] {
            h.push(format!("{}_{col}", m.as_str()));
        }
    }
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_report(report: &SweepReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(csv_header())?;
            for r in &report.rows {
                let mut rec = vec![
                    r.strategy.to_string(),
                    r.gain_db.to_string(),
                    r.n_antennas.to_string(),
                    r.per_antenna_dbm.to_string(),
                    r.total_dbm.to_string(),
                    r.mean_rf_w.to_string(),
                    r.mean_dc_w.to_string(),
                    r.harvester_efficiency.to_string(),
                    r.overall_efficiency_ppm.to_string(),
                    r.feasibility_pct.to_string(),
                ];
                for m in MODES {
                    match r.response(m) {
                        Some(s) => rec.extend([
                            s.n_trials.to_string(),
                            s.n_uncensored.to_string(),
                            opt(s.p50_s),
                            opt(s.p95_s),
                            opt(s.p98_s),
                        ]),
                        None => rec.extend(std::iter::repeat_n(String::new(), 5)),
                    }
                }
                w.write_record(rec)?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        ReportFormat::Table => Ok(render_table(report).into_bytes()),
    }
}

fn dash(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into())
}

fn render_table(report: &SweepReport) -> String {
    let strategies: Vec<Strategy> = {
        let mut s: Vec<Strategy> = report.rows.iter().map(|r| r.strategy).collect();
        s.dedup();
        s
    };
    let mut gains: Vec<(f64, f64, f64)> = Vec::new();
    for r in &report.rows {
        if !gains.iter().any(|g| g.0 == r.gain_db) {
            gains.push((r.gain_db, r.per_antenna_dbm, r.total_dbm));
        }
    }
    let find = |s: Strategy, g: f64| report.rows.iter().find(|r| r.strategy == s && r.gain_db == g);

    let mut out = String::new();
    out.push_str("Overall efficiency and feasibility of the target voltage\n");
    let _ = write!(out, "{:>8} {:>8} {:>8}", "gain", "power", "total");
    for s in &strategies {
        let _ = write!(out, " | {:>8} {:>8}", format!("{s} ppm"), "Veh>Vth%");
    }
    out.push('\n');
    let _ = write!(out, "{:>8} {:>8} {:>8}", "[dB]", "[dBm]", "[dBm]");
    for _ in &strategies {
        let _ = write!(out, " | {:>8} {:>8}", "[ppm]", "[%]");
    }
    out.push('\n');
    for &(g, p, t) in &gains {
        let _ = write!(out, "{g:>8.0} {p:>8.2} {t:>8.2}");
        for &s in &strategies {
            match find(s, g) {
                Some(r) => {
                    let _ = write!(out, " | {:>8.1} {:>8.2}", r.overall_efficiency_ppm, r.feasibility_pct);
                }
                None => {
                    let _ = write!(out, " | {:>8} {:>8}", "-", "-");
                }
            }
        }
        out.push('\n');
    }

    out.push_str("\nResponse time percentiles [s] (- = beyond the available duration)\n");
    let _ = write!(out, "{:>8}", "total");
    for s in &strategies {
        for m in MODES {
            let _ = write!(out, " | {:^20}", format!("{s}/{}", m.as_str()));
        }
    }
    out.push('\n');
    let _ = write!(out, "{:>8}", "[dBm]");
    for _ in &strategies {
        for _ in MODES {
            let _ = write!(out, " | {:>6} {:>6} {:>6}", "P50", "P95", "P98");
        }
    }
    out.push('\n');
    for &(g, _, t) in &gains {
        let _ = write!(out, "{t:>8.2}");
        for &s in &strategies {
            for m in MODES {
                match find(s, g).and_then(|r| r.response(m)) {
                    Some(rs) => {
                        let _ = write!(out, " | {:>6} {:>6} {:>6}", dash(rs.p50_s), dash(rs.p95_s), dash(rs.p98_s));
                    }
                    None => {
                        let _ = write!(out, " | {:>6} {:>6} {:>6}", "-", "-", "-");
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV produced by [`emit_report`].
pub fn parse_report_csv<R: Read>(reader: R) -> Result<SweepReport> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != csv_header() {
        return Err(Error::Parse {
            line: 1,
            msg: "unexpected report CSV header".into(),
        });
    }
    let mut report = SweepReport::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |msg: String| Error::Parse { line, msg };
        let f = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| err(format!("column {}: bad number {:?}", i + 1, &rec[i])))
        };
        let u = |i: usize| -> Result<usize> {
            rec[i].parse::<usize>().map_err(|_| err(format!("column {}: bad count {:?}", i + 1, &rec[i])))
        };
        let of = |i: usize| -> Result<Option<f64>> { if rec[i].is_empty() { Ok(None) } else { f(i).map(Some) } };
        let summary = |base: usize| -> Result<Option<ResponseSummary>> {
            if rec[base].is_empty() {
                return Ok(None);
            }
            Ok(Some(ResponseSummary {
                n_trials: u(base)?,
                n_uncensored: u(base + 1)?,
                p50_s: of(base + 2)?,
                p95_s: of(base + 3)?,
                p98_s: of(base + 4)?,
            }))
        };
        report.rows.push(SweepRow {
            strategy: rec[0].parse().map_err(|e: Error| err(e.to_string()))?,
            gain_db: f(1)?,
            n_antennas: u(2)?,
            per_antenna_dbm: f(3)?,
            total_dbm: f(4)?,
            mean_rf_w: f(5)?,
            mean_dc_w: f(6)?,
            harvester_efficiency: f(7)?,
            overall_efficiency_ppm: f(8)?,
            feasibility_pct: f(9)?,
            realistic: summary(10)?,
            ideal: summary(15)?,
        });
    }
    Ok(report)
}

/// Writes a `t_s,cdf` step-point file.
pub fn write_cdf_csv<W: std::io::Write>(points: &[(f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_s", "cdf"])?;
    for (t, f) in points {
        w.write_record([t.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// File stem for one CDF export, e.g. `single_80_ideal`.
pub fn cdf_file_stem(strategy: Strategy, gain_db: f64, mode: McuMode) -> String {
    format!("{strategy}_{gain_db}_{}", mode.as_str())
}

/// Writes `report.csv`, `report.json`, `report.txt` and one
/// `cdf/<strategy>_<gain>_<mode>.csv` per response distribution.
pub fn write_sweep_dir(output: &SweepOutput, dir: &Path) -> Result<()> {
    let cdf_dir = dir.join("cdf");
    std::fs::create_dir_all(&cdf_dir)?;
    for (name, format) in [
        ("report.csv", ReportFormat::Csv),
        ("report.json", ReportFormat::Json),
        ("report.txt", ReportFormat::Table),
    ] {
        std::fs::write(dir.join(name), emit_report(&output.report, format)?)?;
    }
    for c in &output.responses {
        let file = File::create(cdf_dir.join(format!("{}.csv", cdf_file_stem(c.strategy, c.gain_db, c.mode))))?;
        write_cdf_csv(&c.stats.cdf, std::io::BufWriter::new(file))?;
    }
    Ok(())
}

/// Loads a report from a sweep directory or a single report file
/// (`.csv` or `.json`).
pub fn load_report(path: &Path) -> Result<SweepReport> {
    let file = if path.is_dir() {
        let csv = path.join("report.csv");
        if csv.exists() { csv } else { path.join("report.json") }
    } else {
        path.to_path_buf()
    };
    let f = File::open(&file)?;
    if file.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    } else {
        parse_report_csv(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_examples() {
        let pts = cdf_points(&[Some(1.0), Some(2.0), Some(3.0), Some(4.0)], 10.0);
        assert_eq!(cdf_eval(&pts, 2.5), 0.5);
        assert_eq!(cdf_eval(&pts, 0.5), 0.0);
        assert_eq!(cdf_eval(&pts, 4.0), 1.0);
        assert_eq!(pts.last(), Some(&(10.0, 1.0)));

        let none = cdf_points(&[None, None, None], 60.0);
        assert!(none.iter().all(|&(_, f)| f == 0.0));
        assert_eq!(none.last().unwrap().0, 60.0);

        let mut times: Vec<Option<f64>> = (0..49).map(|i| Some(i as f64 + 1.0)).collect();
        times.push(None);
        let pts = cdf_points(&times, 100.0);
        assert_relative_eq!(pts.last().unwrap().1, 0.98, epsilon = 1e-15);
    }

    #[test]
    fn ppm_from_paper_point() {
        let total = combine_equal_sources(17.4, 84).unwrap();
        let ppm = 12.5641747503154e-6 / dbm_to_watt(total) * 1e6;
        assert_relative_eq!(ppm, 2.7, epsilon = 0.05);
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("xml".parse::<ReportFormat>(), Err(Error::InvalidArgument(_))));
        assert_eq!("table".parse::<ReportFormat>().unwrap(), ReportFormat::Table);
    }

    #[test]
    fn empty_report_is_header_only() {
        let out = emit_report(&SweepReport::default(), ReportFormat::Csv).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("strategy,gain_db,"));
        assert_eq!(parse_report_csv(text.as_bytes()).unwrap(), SweepReport::default());
    }

    fn sample_row(strategy: Strategy, gain: f64, p50: Option<f64>) -> SweepRow {
        SweepRow {
            strategy,
            gain_db: gain,
            n_antennas: 84,
            per_antenna_dbm: 13.4,
            total_dbm: combine_equal_sources(13.4, 84).unwrap(),
            mean_rf_w: 1.0 / 3.0 * 1e-5,
            mean_dc_w: 3.417e-6,
            harvester_efficiency: 0.1 + 0.2,
            overall_efficiency_ppm: 1.9,
            feasibility_pct: 27.59,
            realistic: Some(ResponseSummary { n_trials: 50, n_uncensored: 20, p50_s: None, p95_s: None, p98_s: None }),
            ideal: Some(ResponseSummary { n_trials: 50, n_uncensored: 50, p50_s: p50, p95_s: Some(127.004), p98_s: Some(130.0) }),
        }
    }

    #[test]
    fn csv_and_json_round_trip() {
        let report = SweepReport {
            rows: vec![
                sample_row(Strategy::Single, 80.0, Some(53.0)),
                SweepRow { ideal: None, ..sample_row(Strategy::Multi, 80.0, None) },
            ],
        };
        let csv_bytes = emit_report(&report, ReportFormat::Csv).unwrap();
        assert_eq!(parse_report_csv(csv_bytes.as_slice()).unwrap(), report);
        let json = emit_report(&report, ReportFormat::Json).unwrap();
        let back: SweepReport = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn table_marks_censored_percentiles() {
        let report = SweepReport { rows: vec![sample_row(Strategy::Single, 80.0, Some(53.0))] };
        let text = String::from_utf8(emit_report(&report, ReportFormat::Table).unwrap()).unwrap();
        assert!(text.contains("   53.0  127.0  130.0"), "{text}");
        assert!(text.contains("     -      -      -"), "{text}");
        assert!(text.contains("27.59"));
    }

    #[test]
    fn config_defaults_and_errors() {
        let cfg = CampaignConfig::from_toml_str("", ".").unwrap();
        assert_eq!(cfg.gains_db.len(), 11);
        assert_eq!(cfg.n_trials, 50);
        assert_eq!(cfg.geometry().unwrap().len(), 84);
        let back = CampaignConfig::from_toml_str(&cfg.to_toml(), ".").unwrap();
        assert_eq!(back, cfg);

        for bad in [
            "gains_db = []",
            "duration_s = 0.0",
            "gains_db = [90.0]",
            "n_trials = 0",
            "unknown_key = 1",
            "[harvester]\nmode = \"parametric\"\nsensitivity_w = 1.0\nsaturation_w = 0.5",
            "[calibration]\ncsv = \"does-not-exist.csv\"",
        ] {
            assert!(
                matches!(CampaignConfig::from_toml_str(bad, "."), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn config_parses_nested_sections() {
        let text = r#"
seed = 9
duration_s = 10.0
gains_db = [80.0]
strategies = ["multi"]
mcu_modes = ["ideal"]
fading = { kind = "rician", k_db = 6.0 }

[device]
position_m = [0.0, 0.5, 0.0]
rx_loss_db = 3.0

[harvester]
mode = "parametric"
sensitivity_w = 2e-6

[end_device]
c_b = 47e-6
"#;
        let cfg = CampaignConfig::from_toml_str(text, ".").unwrap();
        assert_eq!(cfg.fading, FadingKind::Rician { k_db: 6.0 });
        assert_eq!(cfg.end_device.c_b, 47e-6);
        assert_eq!(cfg.end_device.v_mcu_th, 1.75);
        assert!(matches!(cfg.harvester_model(Strategy::Multi).unwrap().mode, HarvesterMode::Parametric(_)));
        assert_eq!(cfg.device_config(McuMode::Ideal).mcu_load, McuLoadCurve::Ideal);
        assert_eq!(cfg.device_config(McuMode::Realistic).mcu_load, McuLoadCurve::default_realistic());
    }

    #[test]
    fn feasibility_non_decreasing_in_gain() {
        let text = "duration_s = 20.0\nmcu_modes = []\nn_trials = 1\n[harvester]\nmode = \"parametric\"\nsensitivity_w = 1e-5\n";
        let cfg = CampaignConfig::from_toml_str(text, ".").unwrap();
        for strategy in [Strategy::Single, Strategy::Multi] {
            let pts = simulate_strategy(&cfg, strategy, &cfg.gains_db).unwrap();
            let feas: Vec<f64> = pts.iter().map(|p| p.trace.fraction_above(1.75)).collect();
            assert!(feas.windows(2).all(|w| w[1] >= w[0]), "{strategy}: {feas:?}");
            let dc: Vec<f64> = pts.iter().map(|p| p.trace.mean_dc_power()).collect();
            assert!(dc.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn ppm_recomputes_exactly_from_raw_fields() {
        let text = "duration_s = 5.0\ngains_db = [75.0, 85.0]\nn_trials = 3\n";
        let out = run_sweep(&CampaignConfig::from_toml_str(text, ".").unwrap()).unwrap();
        for r in &out.report.rows {
            let total = combine_equal_sources(r.per_antenna_dbm, r.n_antennas).unwrap();
            assert_eq!(r.overall_efficiency_ppm, r.mean_dc_w / dbm_to_watt(total) * 1e6);
            assert!((0.0..=1.0).contains(&r.harvester_efficiency));
        }
    }

    #[test]
    fn zero_duration_guard() {
        let mut cfg = CampaignConfig { duration_s: 1e-6, ..Default::default() };
        cfg.gains_db = vec![80.0];
        assert!(run_sweep(&cfg).is_err());
    }
}
