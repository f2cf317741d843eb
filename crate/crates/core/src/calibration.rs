//! Maximum-likelihood fitting of `(gamma, tau, R_C, sigma^2)` from observed
//! returns, using the replay residuals as Gaussian local news.
//!
//! For fixed `(gamma, tau, R_C)` the variance is profiled out in closed form:
//! with residuals `eta_1..eta_E`, `sigma^2 = mean(eta^2)` and the maximized
//! log-likelihood is `-E/2 * (ln(2 pi sigma^2) + 1)`. The remaining three
//! coordinates are searched on a log-spaced grid, then refined one axis at a
//! time around the incumbent.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::engine::{CouplingWeights, Engine, ModelParams};
use crate::market::{EventCalendar, ExchangeSpec, ZoneDistance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchAxis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl SearchAxis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Self {
        Self { lower, upper, points }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::EmptySearchSpace);
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower > 0.0 && self.lower <= self.upper) {
            return Err(Error::InvalidConfig("search axis needs 0 < lower <= upper"));
        }
        Ok(())
    }

    /// `points` values spaced evenly in log between `lower` and `upper`.
    pub fn values(&self) -> Vec<f64> {
        log_space(self.lower, self.upper, self.points)
    }

    /// Ratio between neighbouring grid values.
    fn step_ratio(&self) -> f64 {
        if self.points < 2 {
            1.0
        } else {
            libm::pow(self.upper / self.lower, 1.0 / (self.points - 1) as f64)
        }
    }
}

fn log_space(lower: f64, upper: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return alloc::vec![libm::sqrt(lower * upper)];
    }
    let (a, b) = (libm::log(lower), libm::log(upper));
    (0..points)
        .map(|k| {
            if k == 0 {
                lower
            } else if k == points - 1 {
                upper
            } else {
                libm::exp(a + (b - a) * k as f64 / (points - 1) as f64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchSpace {
    pub cap_scale: SearchAxis,
    pub zone_scale: SearchAxis,
    pub threshold: SearchAxis,
    pub refinement_passes: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            cap_scale: SearchAxis::new(0.1, 3.0, 20),
            zone_scale: SearchAxis::new(1.0, 50.0, 20),
            threshold: SearchAxis::new(0.005, 0.10, 20),
            refinement_passes: 2,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.cap_scale.validate()?;
        self.zone_scale.validate()?;
        self.threshold.validate()
    }

    fn axes(&self) -> [&SearchAxis; 3] {
        [&self.cap_scale, &self.zone_scale, &self.threshold]
    }
}

/// Observed returns aligned with a calendar, plus the registry that fixes
/// capitalizations and time zones.
#[derive(Debug, Clone, Copy)]
pub struct ReplayData<'a> {
    pub calendar: &'a EventCalendar,
    /// One entry per calendar event, `None` for a missing session.
    pub observed: &'a [Option<f64>],
    pub exchanges: &'a [ExchangeSpec],
    pub zone_distance: ZoneDistance,
}

impl<'a> ReplayData<'a> {
    pub fn new(calendar: &'a EventCalendar, observed: &'a [Option<f64>], exchanges: &'a [ExchangeSpec]) -> Self {
        Self {
            calendar,
            observed,
            exchanges,
            zone_distance: ZoneDistance::Absolute,
        }
    }

    /// `(coupling, residual)` for every replayed event under `params`.
    pub fn residuals(&self, params: &ModelParams) -> Result<Vec<(f64, f64)>> {
        let engine = Engine::with_zone_distance(self.exchanges, *params, self.zone_distance)?;
        let mut out = Vec::with_capacity(self.observed.len());
        engine.replay_residuals(self.calendar, self.observed, &mut out)?;
        Ok(out)
    }

    pub fn observed_values(&self) -> Vec<f64> {
        self.observed.iter().flatten().copied().collect()
    }
}

/// Sum of `N(0, sigma^2)` log-densities.
///
/// `sigma = 0` gives `-inf` if any residual is nonzero and `+inf` otherwise.
pub fn gaussian_log_likelihood(residuals: impl IntoIterator<Item = f64>, sigma: f64) -> f64 {
    let (mut count, mut sum_sq) = (0usize, 0.0);
    for r in residuals {
        count += 1;
        sum_sq += r * r;
    }
    if count == 0 {
        return 0.0;
    }
    if sigma == 0.0 {
        return if sum_sq == 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    let var = sigma * sigma;
    -0.5 * count as f64 * libm::log(2.0 * PI * var) - sum_sq / (2.0 * var)
}

/// Log-likelihood of the replay residuals with `sigma` taken from `candidate`.
pub fn log_likelihood(data: &ReplayData<'_>, candidate: &ModelParams) -> Result<f64> {
    let pairs = data.residuals(candidate)?;
    Ok(gaussian_log_likelihood(pairs.iter().map(|p| p.1), candidate.noise_sd))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Profile {
    /// `mean(eta^2)`, the maximizing variance.
    pub noise_variance: f64,
    pub log_likelihood: f64,
    pub events: usize,
}

/// Profiles `sigma^2` out of the likelihood for the other coordinates of `candidate`.
pub fn profile(data: &ReplayData<'_>, candidate: &ModelParams) -> Result<Profile> {
    let pairs = data.residuals(candidate)?;
    Ok(profile_residuals(pairs.iter().map(|p| p.1)))
}

pub fn profile_residuals(residuals: impl IntoIterator<Item = f64>) -> Profile {
    let (mut events, mut sum_sq) = (0usize, 0.0);
    for r in residuals {
        events += 1;
        sum_sq += r * r;
    }
    if events == 0 {
        return Profile {
            noise_variance: 0.0,
            log_likelihood: 0.0,
            events,
        };
    }
    let var = sum_sq / events as f64;
    let log_likelihood = if var == 0.0 {
        f64::INFINITY
    } else {
        -0.5 * events as f64 * (libm::log(2.0 * PI * var) + 1.0)
    };
    Profile {
        noise_variance: var,
        log_likelihood,
        events,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceEntry {
    /// Candidate with its profiled `sigma`.
    pub params: ModelParams,
    pub log_likelihood: f64,
    /// Which stage produced it: 0 for the grid, `p` for refinement pass `p`.
    pub stage: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Population variance (divides by `count`).
    pub variance: f64,
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                count,
                mean: 0.0,
                variance: 0.0,
                excess_kurtosis: 0.0,
            };
        }
        let n = count as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m4) = (0.0, 0.0);
        for v in values {
            let d = (v - mean) * (v - mean);
            m2 += d;
            m4 += d * d;
        }
        m2 /= n;
        m4 /= n;
        let excess_kurtosis = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
        Self {
            count,
            mean,
            variance: m2,
            excess_kurtosis,
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            libm::sqrt(self.variance / self.count as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count_returns: usize,
    pub count_coupling: usize,
    pub count_residual: usize,
}

impl HistogramBin {
    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResidualDiagnostic {
    pub returns: Moments,
    pub coupling: Moments,
    pub residuals: Moments,
    pub histogram: Vec<HistogramBin>,
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 41;

/// Moments of returns, coupling terms and residuals, and their counts on a
/// shared set of equal-width bins symmetric around zero.
pub fn residual_diagnostic(returns: &[f64], coupling: &[f64], residuals: &[f64], bins: usize) -> ResidualDiagnostic {
    let bins = bins.max(1);
    let extent = returns
        .iter()
        .chain(coupling)
        .chain(residuals)
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let extent = if extent > 0.0 { extent } else { 1.0 };
    let width = 2.0 * extent / bins as f64;
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lower: -extent + width * b as f64,
            upper: if b + 1 == bins { extent } else { -extent + width * (b + 1) as f64 },
            count_returns: 0,
            count_coupling: 0,
            count_residual: 0,
        })
        .collect();
    let bin_of = |v: f64| (((v + extent) / width) as usize).min(bins - 1);
    for &v in returns.iter().filter(|v| v.is_finite()) {
        histogram[bin_of(v)].count_returns += 1;
    }
    for &v in coupling.iter().filter(|v| v.is_finite()) {
        histogram[bin_of(v)].count_coupling += 1;
    }
    for &v in residuals.iter().filter(|v| v.is_finite()) {
        histogram[bin_of(v)].count_residual += 1;
    }
    ResidualDiagnostic {
        returns: Moments::of(returns),
        coupling: Moments::of(coupling),
        residuals: Moments::of(residuals),
        histogram,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationResult {
    /// Best candidate with `sigma = sqrt(profiled variance)`.
    pub params: ModelParams,
    pub log_likelihood: f64,
    pub residual_summary: ResidualDiagnostic,
    pub search_trace: Vec<TraceEntry>,
}

type Coords = [f64; 3];

fn candidate(coords: Coords, seed: u64) -> ModelParams {
    ModelParams {
        cap_scale: coords[0],
        zone_scale: coords[1],
        threshold: coords[2],
        noise_sd: 1.0,
        seed,
    }
}

/// Profiles every candidate. Candidates sharing a threshold share one replay
/// (see [`crate::engine::ActiveTrace`]), so only the weighted averages are redone per
/// `(gamma, tau)`.
fn evaluate(data: &ReplayData<'_>, coords: &[Coords], seed: u64) -> Result<Vec<Profile>> {
    let mut thresholds: Vec<u64> = coords.iter().map(|c| c[2].to_bits()).collect();
    thresholds.sort_unstable();
    thresholds.dedup();

    let at_threshold = |bits: &u64| -> Result<Vec<(usize, Profile)>> {
        let members: Vec<usize> = (0..coords.len()).filter(|&k| coords[k][2].to_bits() == *bits).collect();
        let first = candidate(coords[members[0]], seed);
        let trace = Engine::with_zone_distance(data.exchanges, first, data.zone_distance)?
            .replay_active(data.calendar, data.observed)?;
        members
            .into_iter()
            .map(|k| {
                let weights = CouplingWeights::new(data.exchanges, &candidate(coords[k], seed), data.zone_distance)?;
                Ok((k, profile_residuals(trace.residuals(&weights).map(|p| p.1))))
            })
            .collect()
    };
    #[cfg(feature = "std")]
    let groups: Vec<Result<Vec<(usize, Profile)>>> = {
        use rayon::prelude::*;
        thresholds.par_iter().map(at_threshold).collect()
    };
    #[cfg(not(feature = "std"))]
    let groups: Vec<Result<Vec<(usize, Profile)>>> = thresholds.iter().map(at_threshold).collect();

    let mut out = alloc::vec![Profile { noise_variance: 0.0, log_likelihood: 0.0, events: 0 }; coords.len()];
    for group in groups {
        for (k, p) in group? {
            out[k] = p;
        }
    }
    Ok(out)
}

/// Index of the first maximum.
fn best_index(profiles: &[Profile]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, p) in profiles.iter().enumerate() {
        if best.is_none_or(|b| p.log_likelihood > profiles[b].log_likelihood) {
            best = Some(k);
        }
    }
    best
}

/// Grid search over `space` followed by coordinate-wise refinement.
///
/// The seed of the result is taken from `seed`; it plays no role in the fit.
pub fn fit(data: &ReplayData<'_>, space: &SearchSpace, seed: u64) -> Result<CalibrationResult> {
    space.validate()?;
    let axes = space.axes();
    let values: [Vec<f64>; 3] = core::array::from_fn(|a| axes[a].values());
    let mut grid = Vec::with_capacity(values.iter().map(Vec::len).product());
    for &g in &values[0] {
        for &t in &values[1] {
            for &r in &values[2] {
                grid.push([g, t, r]);
            }
        }
    }

    let mut trace = Vec::new();
    let record = |trace: &mut Vec<TraceEntry>, coords: &[Coords], profiles: &[Profile], stage: usize| {
        for (c, p) in coords.iter().zip(profiles) {
            let mut params = candidate(*c, seed);
            params.noise_sd = libm::sqrt(p.noise_variance);
            trace.push(TraceEntry {
                params,
                log_likelihood: p.log_likelihood,
                stage,
            });
        }
    };

    let profiles = evaluate(data, &grid, seed)?;
    record(&mut trace, &grid, &profiles, 0);
    let k = best_index(&profiles).ok_or(Error::EmptySearchSpace)?;
    let (mut best, mut best_profile) = (grid[k], profiles[k]);

    let mut ratios: [f64; 3] = core::array::from_fn(|a| axes[a].step_ratio());
    for pass in 1..=space.refinement_passes {
        for a in 0..3 {
            let points = axes[a].points;
            if points < 2 || ratios[a] <= 1.0 {
                continue;
            }
            let lo = (best[a] / ratios[a]).max(axes[a].lower);
            let hi = (best[a] * ratios[a]).min(axes[a].upper);
            let line: Vec<Coords> = log_space(lo, hi, points)
                .into_iter()
                .map(|v| {
                    let mut c = best;
                    c[a] = v;
                    c
                })
                .collect();
            let profiles = evaluate(data, &line, seed)?;
            record(&mut trace, &line, &profiles, pass);
            if let Some(k) = best_index(&profiles) {
                if profiles[k].log_likelihood > best_profile.log_likelihood {
                    best = line[k];
                    best_profile = profiles[k];
                }
            }
        }
        for (a, r) in ratios.iter_mut().enumerate() {
            *r = libm::pow(*r, 2.0 / (axes[a].points.max(2) - 1) as f64);
        }
    }

    let mut params = candidate(best, seed);
    params.noise_sd = libm::sqrt(best_profile.noise_variance);
    let pairs = data.residuals(&params)?;
    let coupling: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let residuals: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let residual_summary = residual_diagnostic(&data.observed_values(), &coupling, &residuals, DEFAULT_HISTOGRAM_BINS);
    Ok(CalibrationResult {
        params,
        log_likelihood: best_profile.log_likelihood,
        residual_summary,
        search_trace: trace,
    })
}
