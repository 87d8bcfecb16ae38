//! Power and voltage carriers, dBm conversion, equal-source link budget and
//! the transmitter gain calibration table.

use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dbm_to_watt(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * (watt / 1e-3).log10()
}

/// Total power of `n` equal, incoherently combined sources.
pub fn combine_equal_sources(p_per_source_dbm: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("source count must be at least 1"));
    }
    Ok(p_per_source_dbm + 10.0 * (n as f64).log10())
}

/// Non-negative power, stored in watts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Power(f64);

impl Power {
    pub const ZERO: Power = Power(0.0);

    pub fn from_watts(w: f64) -> Result<Self> {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::invalid(format!("power must be finite and >= 0 W, got {w}")));
        }
        Ok(Power(w))
    }

    pub fn from_dbm(dbm: f64) -> Result<Self> {
        if !dbm.is_finite() {
            return Err(Error::invalid(format!("power level must be finite, got {dbm} dBm")));
        }
        Ok(Power(dbm_to_watt(dbm)))
    }

    pub fn from_microwatts(uw: f64) -> Result<Self> {
        Self::from_watts(uw * 1e-6)
    }

    pub fn watts(self) -> f64 {
        self.0
    }

    pub fn dbm(self) -> f64 {
        watt_to_dbm(self.0)
    }

    pub fn microwatts(self) -> f64 {
        self.0 * 1e6
    }
}

impl std::ops::Add for Power {
    type Output = Power;
    fn add(self, rhs: Power) -> Power {
        Power(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Power {
    fn sum<I: Iterator<Item = Power>>(iter: I) -> Power {
        Power(iter.map(|p| p.0).sum())
    }
}

impl fmt::Display for Power {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} dBm", self.dbm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Voltage(f64);

impl Voltage {
    pub fn from_volts(v: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::invalid(format!("voltage must be finite, got {v}")));
        }
        Ok(Voltage(v))
    }

    pub fn volts(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Voltage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} V", self.0)
    }
}

/// Transmitter gain setting to calibrated per-antenna output power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCalibration {
    entries: Vec<(f64, f64)>,
}

/// Measured gain [dB] / per-antenna output [dBm] pairs of the 84-antenna
/// ceiling array.
const DEFAULT_CALIBRATION: [(f64, f64); 11] = [
    (75.0, 9.1),
    (76.0, 9.96),
    (77.0, 10.82),
    (78.0, 11.68),
    (79.0, 12.54),
    (80.0, 13.4),
    (81.0, 14.2),
    (82.0, 15.0),
    (83.0, 15.8),
    (84.0, 16.6),
    (85.0, 17.4),
];

impl Default for GainCalibration {
    fn default() -> Self {
        GainCalibration {
            entries: DEFAULT_CALIBRATION.to_vec(),
        }
    }
}

impl GainCalibration {
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("calibration table is empty".into()));
        }
        if entries.iter().any(|(g, p)| !g.is_finite() || !p.is_finite()) {
            return Err(Error::Validation("calibration entries must be finite".into()));
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Validation("calibration gains must be strictly increasing".into()));
        }
        Ok(GainCalibration { entries })
    }

    /// Reads a `gain_db,p_dbm` CSV table.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            gain_db: f64,
            p_dbm: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for rec in rdr.deserialize::<Row>() {
            let row = rec?;
            entries.push((row.gain_db, row.p_dbm));
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn gain_range(&self) -> (f64, f64) {
        (self.entries[0].0, self.entries[self.entries.len() - 1].0)
    }

    /// Per-antenna output power in dBm; exact at table gains, linear in dB between.
    pub fn gain_to_power(&self, gain_db: f64) -> Result<f64> {
        let (min, max) = self.gain_range();
        if !(gain_db >= min && gain_db <= max) {
            return Err(Error::OutOfRange {
                what: "gain_db",
                value: gain_db,
                min,
                max,
            });
        }
        let i = self.entries.partition_point(|(g, _)| *g < gain_db);
        let (g1, p1) = self.entries[i];
        if g1 == gain_db || i == 0 {
            return Ok(p1);
        }
        let (g0, p0) = self.entries[i - 1];
        Ok(p0 + (p1 - p0) * (gain_db - g0) / (g1 - g0))
    }
}
