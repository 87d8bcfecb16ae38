//! Array geometry and per-antenna narrowband channel gains at the device.

use std::f64::consts::PI;
use std::io::Read;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const DEFAULT_CARRIER_HZ: f64 = 920e6;

pub type Position = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    antenna_positions: Vec<Position>,
    carrier_frequency: f64,
}

impl ArrayGeometry {
    pub fn new(antenna_positions: Vec<Position>, carrier_frequency: f64) -> Result<Self> {
        if antenna_positions.is_empty() {
            return Err(Error::invalid("array needs at least one antenna"));
        }
        if antenna_positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("antenna coordinates must be finite"));
        }
        if !(carrier_frequency > 0.0 && carrier_frequency.is_finite()) {
            return Err(Error::invalid("carrier frequency must be positive"));
        }
        Ok(ArrayGeometry {
            antenna_positions,
            carrier_frequency,
        })
    }

    /// Rectangular ceiling grid of `rows x cols` antennas spanning
    /// `width x length` metres at height `height`, centred on the origin.
    pub fn ceiling_grid(
        rows: usize,
        cols: usize,
        width: f64,
        length: f64,
        height: f64,
        carrier_frequency: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("grid must have at least one row and column"));
        }
        let step = |n: usize, span: f64| if n > 1 { span / (n - 1) as f64 } else { 0.0 };
        let (dx, dy) = (step(rows, width), step(cols, length));
        let mut positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                positions.push([
                    r as f64 * dx - width / 2.0,
                    c as f64 * dy - length / 2.0,
                    height,
                ]);
            }
        }
        Self::new(positions, carrier_frequency)
    }

    /// Reads an `antenna_id,x_m,y_m,z_m` CSV; rows are ordered by antenna id.
    pub fn from_csv<R: Read>(reader: R, carrier_frequency: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            antenna_id: u32,
            x_m: f64,
            y_m: f64,
            z_m: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<Row>() {
            rows.push(rec?);
        }
        rows.sort_by_key(|r| r.antenna_id);
        if rows.windows(2).any(|w| w[0].antenna_id == w[1].antenna_id) {
            return Err(Error::Validation("duplicate antenna_id in geometry".into()));
        }
        Self::new(rows.iter().map(|r| [r.x_m, r.y_m, r.z_m]).collect(), carrier_frequency)
    }

    pub fn antenna_positions(&self) -> &[Position] {
        &self.antenna_positions
    }

    pub fn len(&self) -> usize {
        self.antenna_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.antenna_positions.is_empty()
    }

    pub fn carrier_frequency(&self) -> f64 {
        self.carrier_frequency
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }
}

impl Default for ArrayGeometry {
    /// 84 ceiling antennas (7 x 12) over 4 m x 8 m, 2.4 m above the device plane.
    fn default() -> Self {
        Self::ceiling_grid(7, 12, 4.0, 8.0, 2.4, DEFAULT_CARRIER_HZ).expect("valid default grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FadingKind {
    #[default]
    None,
    Rician {
        k_db: f64,
    },
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FadingConfig {
    #[serde(flatten)]
    pub kind: FadingKind,
    #[serde(default)]
    pub seed: u64,
}

impl FadingConfig {
    pub fn none() -> Self {
        FadingConfig::default()
    }

    pub fn rayleigh(seed: u64) -> Self {
        FadingConfig {
            kind: FadingKind::Rayleigh,
            seed,
        }
    }

    pub fn rician(k_db: f64, seed: u64) -> Self {
        FadingConfig {
            kind: FadingKind::Rician { k_db },
            seed,
        }
    }
}

/// Complex voltage gain per antenna, carrier removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    gains: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(gains: Vec<Complex64>) -> Result<Self> {
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::invalid("channel gains must be finite"));
        }
        Ok(ChannelRealization { gains })
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Applies a common power loss (dB) to every antenna.
    pub fn attenuated(&self, loss_db: f64) -> ChannelRealization {
        let scale = 10f64.powf(-loss_db / 20.0);
        ChannelRealization {
            gains: self.gains.iter().map(|g| g * scale).collect(),
        }
    }
}

/// Friis free-space voltage gain: magnitude λ/(4πd), phase −2πd/λ.
pub fn free_space_gain(distance: f64, frequency: f64) -> Result<Complex64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::invalid(format!("distance must be positive, got {distance}")));
    }
    if !(frequency > 0.0) || !frequency.is_finite() {
        return Err(Error::invalid(format!("frequency must be positive, got {frequency}")));
    }
    let lambda = SPEED_OF_LIGHT / frequency;
    let magnitude = lambda / (4.0 * PI * distance);
    let phase = (-2.0 * PI * distance / lambda).rem_euclid(2.0 * PI);
    Ok(Complex64::from_polar(magnitude, phase))
}

fn distance(a: &Position, b: &Position) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn unit_complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Per-antenna gains at `device`: free-space gain times a unit-mean-power
/// fading coefficient. Deterministic for a given fading seed.
pub fn sample_channel(
    geometry: &ArrayGeometry,
    device: Position,
    fading: &FadingConfig,
) -> Result<ChannelRealization> {
    if device.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("device position must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fading.seed);
    let rician_weights = match fading.kind {
        FadingKind::Rician { k_db } => {
            if !k_db.is_finite() {
                return Err(Error::invalid("Rician K-factor must be finite"));
            }
            let k = 10f64.powf(k_db / 10.0);
            Some(((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt()))
        }
        _ => None,
    };
    let mut gains = Vec::with_capacity(geometry.len());
    for (i, pos) in geometry.antenna_positions().iter().enumerate() {
        let d = distance(pos, &device);
        if d == 0.0 {
            return Err(Error::invalid(format!("device coincides with antenna {i}")));
        }
        let los = free_space_gain(d, geometry.carrier_frequency())?;
        let g = match fading.kind {
            FadingKind::None => los,
            FadingKind::Rayleigh => los * unit_complex_normal(&mut rng),
            FadingKind::Rician { .. } => {
                let (w_los, w_scatter) = rician_weights.unwrap();
                los * (w_los + w_scatter * unit_complex_normal(&mut rng))
            }
        };
        gains.push(g);
    }
    ChannelRealization::new(gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn friis_reference_values() {
        let g = free_space_gain(1.0, 920e6).unwrap();
        // 20 log10(4π / λ) with λ = c / 920 MHz
        assert_relative_eq!(10.0 * g.norm_sqr().log10(), -31.72, epsilon = 0.01);

        let lambda = SPEED_OF_LIGHT / 920e6;
        let unity = free_space_gain(lambda / (4.0 * PI), 920e6).unwrap();
        assert_relative_eq!(unity.norm(), 1.0, epsilon = 1e-12);

        let near = free_space_gain(2.0, 920e6).unwrap();
        let far = free_space_gain(4.0, 920e6).unwrap();
        assert_relative_eq!(far.norm(), near.norm() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(10.0 * (far.norm_sqr() / near.norm_sqr()).log10(), -6.02, epsilon = 0.01);

        assert!(free_space_gain(0.0, 920e6).is_err());
        assert!(free_space_gain(-1.0, 920e6).is_err());
        assert!(free_space_gain(1.0, 0.0).is_err());
    }

    #[test]
    fn phase_follows_path_length() {
        let lambda = SPEED_OF_LIGHT / 920e6;
        let g = free_space_gain(lambda * 1.25, 920e6).unwrap();
        let unit = g / g.norm();
        assert_relative_eq!(unit.re, 0.0, epsilon = 1e-9);
        assert_relative_eq!(unit.im, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn default_geometry_is_84_ceiling_antennas() {
        let geo = ArrayGeometry::default();
        assert_eq!(geo.len(), 84);
        assert!(geo.antenna_positions().iter().all(|p| p[2] == 2.4));
    }

    #[test]
    fn symmetric_pair_gives_equal_magnitudes() {
        let geo = ArrayGeometry::new(vec![[-1.0, 0.0, 2.0], [1.0, 0.0, 2.0]], 920e6).unwrap();
        let ch = sample_channel(&geo, [0.0, 0.0, 0.0], &FadingConfig::none()).unwrap();
        assert_eq!(ch.gains()[0].norm(), ch.gains()[1].norm());
    }

    #[test]
    fn coincident_device_is_rejected() {
        let geo = ArrayGeometry::new(vec![[1.0, 1.0, 1.0]], 920e6).unwrap();
        assert!(matches!(
            sample_channel(&geo, [1.0, 1.0, 1.0], &FadingConfig::none()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn seeded_fading_is_reproducible() {
        let geo = ArrayGeometry::default();
        let a = sample_channel(&geo, [0.3, 0.2, 0.0], &FadingConfig::rayleigh(7)).unwrap();
        let b = sample_channel(&geo, [0.3, 0.2, 0.0], &FadingConfig::rayleigh(7)).unwrap();
        let c = sample_channel(&geo, [0.3, 0.2, 0.0], &FadingConfig::rayleigh(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rayleigh_mean_power_matches_free_space() {
        let geo = ArrayGeometry::new(vec![[0.0, 0.0, 2.0]], 920e6).unwrap();
        let fs = free_space_gain(2.0, 920e6).unwrap().norm_sqr();
        let n = 100_000u64;
        let mean = (0..n)
            .map(|seed| {
                sample_channel(&geo, [0.0, 0.0, 0.0], &FadingConfig::rayleigh(seed)).unwrap().gains()[0]
                    .norm_sqr()
            })
            .sum::<f64>()
            / n as f64;
        assert_relative_eq!(mean, fs, max_relative = 0.02);
    }

    #[test]
    fn rician_high_k_converges_to_los() {
        let geo = ArrayGeometry::default();
        let los = sample_channel(&geo, [0.1, -0.4, 0.0], &FadingConfig::none()).unwrap();
        let ric = sample_channel(&geo, [0.1, -0.4, 0.0], &FadingConfig::rician(60.0, 3)).unwrap();
        for (a, b) in los.gains().iter().zip(ric.gains()) {
            assert_relative_eq!(a.norm(), b.norm(), max_relative = 0.01);
        }
    }

    #[test]
    fn received_power_invariant_under_relabeling() {
        let geo = ArrayGeometry::default();
        let dev = [0.7, 1.1, 0.0];
        let ch = sample_channel(&geo, dev, &FadingConfig::none()).unwrap();
        let mut reversed: Vec<Position> = geo.antenna_positions().to_vec();
        reversed.reverse();
        let geo_r = ArrayGeometry::new(reversed, geo.carrier_frequency()).unwrap();
        let ch_r = sample_channel(&geo_r, dev, &FadingConfig::none()).unwrap();
        let ptx: Vec<f64> = (0..geo.len()).map(|i| 1e-3 * (1 + i % 3) as f64).collect();
        let total: f64 = ch.gains().iter().zip(&ptx).map(|(g, p)| g.norm_sqr() * p).sum();
        let total_r: f64 =
            ch_r.gains().iter().rev().zip(&ptx).map(|(g, p)| g.norm_sqr() * p).sum();
        assert_relative_eq!(total, total_r, max_relative = 1e-12);
    }

    #[test]
    fn free_space_gain_bounded_beyond_reference_distance() {
        let geo = ArrayGeometry::default();
        let ch = sample_channel(&geo, [0.0, 0.0, 0.0], &FadingConfig::none()).unwrap();
        assert!(ch.gains().iter().all(|g| g.norm() <= 1.0));
    }

    #[test]
    fn geometry_csv() {
        let text = "antenna_id,x_m,y_m,z_m\n1,1.0,0,2.4\n0,0.0,0,2.4\n";
        let geo = ArrayGeometry::from_csv(text.as_bytes(), 920e6).unwrap();
        assert_eq!(geo.antenna_positions()[0], [0.0, 0.0, 2.4]);
        assert!(ArrayGeometry::from_csv("antenna_id,x_m,y_m,z_m\n".as_bytes(), 920e6).is_err());
    }
}
