//! Discrepancy metrics between a target and a simulated series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgps::{simulate, PgpsParams, SimConfig};
use crate::series::MidPriceSeries;

/// Returned by MSM when the simulated series is constant.
pub const MSM_DEGENERATE_PENALTY: f64 = 1e6;

fn sorted_finite(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(i) = xs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the two
/// empirical CDFs over the pooled sample points.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_finite(a)?;
    let b = sorted_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    // after one sample is exhausted the gap only shrinks, so the last point checked bounds it
    Ok(sup)
}

/// Critical value of the two-sample K-S test at significance `alpha`.
pub fn ks_critical_value(n1: usize, n2: usize, alpha: f64) -> Result<f64> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidParameter("sample sizes must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (n1, n2) = (n1 as f64, n2 as f64);
    Ok((-(n1 + n2) * (alpha / 2.0).ln() / (2.0 * n1 * n2)).sqrt())
}

/// Mean, standard deviation, skewness and kurtosis. Skewness and kurtosis
/// use the `1/(T-1)` normalization and are `None` for a constant series.
/// Kurtosis is the raw fourth standardized moment, not excess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub mean: f64,
    pub std: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

impl MomentVector {
    pub fn excess_kurtosis(&self) -> Option<f64> {
        self.kurtosis.map(|k| k - 3.0)
    }

    fn components(&self) -> Result<[f64; 4]> {
        match (self.skewness, self.kurtosis) {
            (Some(s), Some(k)) => Ok([self.mean, self.std, s, k]),
            _ => Err(Error::UndefinedMoment),
        }
    }
}

pub fn moments(series: &[f64]) -> Result<MomentVector> {
    if series.len() < 2 {
        return Err(Error::SeriesTooShort { need: 2, got: series.len() });
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let t = series.len() as f64;
    let mean = series.iter().sum::<f64>() / t;
    let ss: f64 = series.iter().map(|s| (s - mean) * (s - mean)).sum();
    let std = (ss / (t - 1.0)).sqrt();
    if std == 0.0 {
        return Ok(MomentVector { mean, std, skewness: None, kurtosis: None });
    }
    let (mut m3, mut m4) = (0.0, 0.0);
    for s in series {
        let z = (s - mean) / std;
        let z2 = z * z;
        m3 += z2 * z;
        m4 += z2 * z2;
    }
    Ok(MomentVector { mean, std, skewness: Some(m3 / (t - 1.0)), kurtosis: Some(m4 / (t - 1.0)) })
}

/// Unweighted mean of the squared differences of the four moments.
pub fn msm_distance(target: &MomentVector, sim: &MomentVector) -> Result<f64> {
    let a = target.components()?;
    let b = sim.components()?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 4.0)
}

pub fn log_returns(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::SeriesTooShort { need: 2, got: series.len() });
    }
    if let Some(i) = series.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::NonPositive { index: i, value: series[i] });
    }
    Ok(series.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Ks,
    Msm,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ks" | "k-s" => Ok(ObjectiveKind::Ks),
            "msm" => Ok(ObjectiveKind::Msm),
            other => Err(Error::InvalidConfig(format!("unknown objective `{other}`"))),
        }
    }
}

/// A black-box objective over a parameter vector. `seed` drives any
/// stochasticity; equal inputs must give equal outputs.
pub trait Objective: Sync {
    fn evaluate(&self, x: &[f64], seed: u64) -> Result<f64>;
}

impl<F> Objective for F
where
    F: Fn(&[f64], u64) -> Result<f64> + Sync,
{
    fn evaluate(&self, x: &[f64], seed: u64) -> Result<f64> {
        self(x, seed)
    }
}

/// Discrepancy between a target series and the simulator's output.
#[derive(Debug, Clone)]
pub struct SimulationObjective {
    pub kind: ObjectiveKind,
    pub sim: SimConfig,
    /// Both series are compared at every `stride`-th step.
    pub stride: usize,
    target: Vec<f64>,
    target_moments: Option<MomentVector>,
}

impl SimulationObjective {
    pub fn new(kind: ObjectiveKind, target: &MidPriceSeries, sim: SimConfig) -> Result<Self> {
        Self::with_stride(kind, target, sim, 1)
    }

    pub fn with_stride(kind: ObjectiveKind, target: &MidPriceSeries, sim: SimConfig, stride: usize) -> Result<Self> {
        if target.len() != sim.horizon {
            return Err(Error::LengthMismatch { target: target.len(), horizon: sim.horizon });
        }
        let stride = stride.max(1);
        let target: Vec<f64> = target.values.iter().step_by(stride).copied().collect();
        let target_moments = match kind {
            ObjectiveKind::Ks => None,
            ObjectiveKind::Msm => {
                let m = moments(&target)?;
                m.components()?;
                Some(m)
            }
        };
        Ok(SimulationObjective { kind, sim, stride, target, target_moments })
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Scores an already simulated series.
    pub fn score(&self, simulated: &[f64]) -> Result<f64> {
        let sim: Vec<f64> = simulated.iter().step_by(self.stride).copied().collect();
        match self.kind {
            ObjectiveKind::Ks => ks_statistic(&self.target, &sim),
            ObjectiveKind::Msm => {
                let target = self.target_moments.as_ref().expect("set for MSM");
                let m = moments(&sim)?;
                if m.skewness.is_none() {
                    return Ok(MSM_DEGENERATE_PENALTY);
                }
                msm_distance(target, &m)
            }
        }
    }

    pub fn simulate_and_score(&self, params: &PgpsParams, seed: u64) -> Result<(MidPriceSeries, f64)> {
        let series = simulate(params, &self.sim, seed)?;
        let value = self.score(&series.values)?;
        Ok((series, value))
    }
}

impl Objective for SimulationObjective {
    fn evaluate(&self, x: &[f64], seed: u64) -> Result<f64> {
        let params = PgpsParams::from_slice(x)?;
        Ok(self.simulate_and_score(&params, seed)?.1)
    }
}
