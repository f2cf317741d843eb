//! Stress tensor dynamics.
//!
//! At an event of exchange `i` the engine
//! 1. collects the active set `{ j != i : |R_ij| > R_C }` from the pre-event tensor,
//! 2. prices `coupling = (1/N*) * sum_j alpha_ij * beta_ij * R_ij` over that set
//!    (zero when the set is empty),
//! 3. forms the return `ret = coupling + news`,
//! 4. resets the priced-in row entries `R_ij` of the active set to zero,
//! 5. pushes `ret` into column `i`: every `R_ki` first drops to zero if its
//!    magnitude already exceeded `R_C`, then gains `ret`.
//!
//! Events of one simultaneous group are all priced against the same
//! pre-group tensor; their writes are merged afterwards (row resets, then
//! column pushes), which is independent of the order inside the group.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::market::{
    validate_registry, EventCalendar, ExchangeId, ExchangeSpec, MarketEvent, ZoneDistance,
};
use crate::{Error, Result};

/// Default number of leading trading days excluded from statistics.
pub const DEFAULT_WARMUP_DAYS: u32 = 250;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    /// Pricing threshold `R_C`.
    pub threshold: f64,
    /// Time-zone scale `tau`, in hours.
    pub zone_scale: f64,
    /// Capitalization scale `gamma`.
    pub cap_scale: f64,
    /// Standard deviation `sigma` of the local news term.
    pub noise_sd: f64,
    pub seed: u64,
}

impl ModelParams {
    /// The published maximum-likelihood values: `gamma = 0.8`, `tau = 20`,
    /// `R_C = 0.03`, `sigma^2 = 0.0006`.
    pub fn reference() -> Self {
        Self {
            threshold: 0.03,
            zone_scale: 20.0,
            cap_scale: 0.8,
            noise_sd: libm::sqrt(0.0006),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.threshold) {
            return Err(Error::InvalidParams("threshold must be positive"));
        }
        if !positive(self.zone_scale) {
            return Err(Error::InvalidParams("zone scale must be positive"));
        }
        if !positive(self.cap_scale) {
            return Err(Error::InvalidParams("capitalization scale must be positive"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::InvalidParams("noise sd must be non-negative"));
        }
        Ok(())
    }
}

/// Capitalization weight `1 - exp(-K_j / (K_i * gamma))`.
pub fn alpha_weight(i: &ExchangeSpec, j: &ExchangeSpec, params: &ModelParams) -> f64 {
    alpha_from_caps(i.capitalization, j.capitalization, params.cap_scale)
}

/// Time-zone weight `exp(-|z_i - z_j| / tau)`.
pub fn beta_weight(i: &ExchangeSpec, j: &ExchangeSpec, params: &ModelParams) -> f64 {
    beta_from_gap(ZoneDistance::Absolute.gap(i, j), params.zone_scale)
}

fn alpha_from_caps(k_i: f64, k_j: f64, cap_scale: f64) -> f64 {
    -libm::expm1(-k_j / (k_i * cap_scale))
}

fn beta_from_gap(gap: f64, zone_scale: f64) -> f64 {
    libm::exp(-gap / zone_scale)
}

/// Precomputed `alpha_ij * beta_ij` for every ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingWeights {
    n: usize,
    product: Vec<f64>,
}

impl CouplingWeights {
    pub fn new(
        exchanges: &[ExchangeSpec],
        params: &ModelParams,
        zone_distance: ZoneDistance,
    ) -> Result<Self> {
        validate_registry(exchanges)?;
        let n = exchanges.len();
        let mut product = vec![0.0; n * n];
        for a in exchanges {
            for b in exchanges {
                if a.id != b.id {
                    let alpha = alpha_from_caps(a.capitalization, b.capitalization, params.cap_scale);
                    let beta = beta_from_gap(zone_distance.gap(a, b), params.zone_scale);
                    product[a.id * n + b.id] = alpha * beta;
                }
            }
        }
        Ok(Self { n, product })
    }

    /// Builds weights directly from an `n x n` row-major matrix; the diagonal is ignored.
    pub fn from_matrix(n: usize, product: Vec<f64>) -> Result<Self> {
        if product.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                found: product.len(),
            });
        }
        if product.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParams("weights must be finite and non-negative"));
        }
        Ok(Self { n, product })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: ExchangeId, j: ExchangeId) -> f64 {
        self.product[i * self.n + j]
    }
}

/// The `N x N` cumulative stress field. Entry `(i, j)` is the stress exchange
/// `j` imposes on exchange `i`; the diagonal is always zero.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StressTensor {
    n: usize,
    cum: Vec<f64>,
}

impl StressTensor {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            cum: vec![0.0; n * n],
        }
    }

    /// Builds a tensor from `f(i, j)` for `i != j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(ExchangeId, ExchangeId) -> f64) -> Result<Self> {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = f(i, j);
                    if !v.is_finite() {
                        return Err(Error::InvalidParams("stress entries must be finite"));
                    }
                    t.cum[i * n + j] = v;
                }
            }
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: ExchangeId, j: ExchangeId) -> f64 {
        self.cum[i * self.n + j]
    }

    pub fn row(&self, i: ExchangeId) -> &[f64] {
        &self.cum[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.cum
    }

    pub fn negated(&self) -> Self {
        Self {
            n: self.n,
            cum: self.cum.iter().map(|v| -v).collect(),
        }
    }

    #[inline]
    fn set(&mut self, i: ExchangeId, j: ExchangeId, v: f64) {
        self.cum[i * self.n + j] = v;
    }
}

/// One counterpart whose gate was open when the event was priced.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActiveEntry {
    pub counterpart: ExchangeId,
    /// Pre-event `R_ij`.
    pub stress: f64,
    /// `alpha_ij * beta_ij`.
    pub weight: f64,
}

impl ActiveEntry {
    /// Gated contribution `alpha_ij * beta_ij * R_ij` before the `1/N*` average.
    pub fn contribution(&self) -> f64 {
        self.weight * self.stress
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EventOutcome {
    pub event: MarketEvent,
    pub ret: f64,
    pub noise: f64,
    pub coupling_term: f64,
    pub active: Vec<ActiveEntry>,
    /// Tensor entries `(row, col)` reset to zero by this event.
    pub resets: Vec<(ExchangeId, ExchangeId)>,
}

impl EventOutcome {
    /// `N*_i`, the number of open gates.
    pub fn active_count(&self) -> usize {
        self.active.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PricePoint {
    pub event: MarketEvent,
    pub price: f64,
    pub ret: f64,
}

/// Per-exchange price paths, `P(t) = P(t-1) * exp(R(t))` from `P = 1` before the first event.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriceSeries {
    pub series: Vec<Vec<PricePoint>>,
}

impl PriceSeries {
    pub fn from_outcomes(n: usize, outcomes: &[EventOutcome]) -> Self {
        let mut series: Vec<Vec<PricePoint>> = vec![Vec::new(); n];
        let mut last = vec![1.0f64; n];
        for o in outcomes {
            let i = o.event.exchange;
            last[i] *= libm::exp(o.ret);
            series[i].push(PricePoint {
                event: o.event,
                price: last[i],
                ret: o.ret,
            });
        }
        Self { series }
    }
}

/// Seeded Gaussian news. Each exchange draws from its own ChaCha stream
/// (stream number = exchange id), so the sequence an exchange sees does not
/// depend on how many events other exchanges have.
#[derive(Debug, Clone)]
pub struct NewsSource {
    streams: Vec<ChaCha8Rng>,
    sds: Vec<f64>,
}

impl NewsSource {
    pub fn homogeneous(seed: u64, n: usize, sd: f64) -> Self {
        Self::heterogeneous(seed, vec![sd; n])
    }

    pub fn heterogeneous(seed: u64, sds: Vec<f64>) -> Self {
        let streams = (0..sds.len())
            .map(|id| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(id as u64);
                rng
            })
            .collect();
        Self { streams, sds }
    }

    pub fn draw(&mut self, exchange: ExchangeId) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.streams[exchange]);
        self.sds[exchange] * z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    pub warmup_days: u32,
    /// Per-exchange `sigma_i`; `None` uses the homogeneous `noise_sd`.
    pub noise_sds: Option<Vec<f64>>,
    /// Starting tensor; `None` starts from zeros.
    pub initial: Option<StressTensor>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            warmup_days: DEFAULT_WARMUP_DAYS,
            noise_sds: None,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub outcomes: Vec<EventOutcome>,
    pub prices: PriceSeries,
    /// Number of leading outcomes that belong to warm-up days.
    pub warmup_events: usize,
    /// First group index that counts toward statistics.
    pub measure_from_group: usize,
    pub final_tensor: StressTensor,
}

impl SimulationRun {
    pub fn measured(&self) -> &[EventOutcome] {
        &self.outcomes[self.warmup_events..]
    }

    pub fn returns(&self) -> Vec<Option<f64>> {
        self.outcomes.iter().map(|o| Some(o.ret)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRun {
    /// One outcome per replayed (non-missing) event; `noise` holds the residual.
    pub outcomes: Vec<EventOutcome>,
    pub residuals: Vec<f64>,
    pub final_tensor: StressTensor,
}

enum Drive<'a> {
    News(&'a mut dyn FnMut(&MarketEvent) -> f64),
    Observed(&'a [Option<f64>]),
}

struct Priced {
    event: MarketEvent,
    ret: f64,
    noise: f64,
    coupling: f64,
    active: core::ops::Range<usize>,
}

#[derive(Default)]
struct Scratch {
    priced: Vec<Priced>,
    active: Vec<ActiveEntry>,
}

/// Receives each evaluated event once its group has been applied.
trait Sink {
    const DETAIL: bool;
    fn accept(&mut self, priced: &Priced, active: &[ActiveEntry], resets: Vec<(ExchangeId, ExchangeId)>);
}

struct OutcomeSink<'a>(&'a mut Vec<EventOutcome>);

impl Sink for OutcomeSink<'_> {
    const DETAIL: bool = true;
    fn accept(&mut self, p: &Priced, active: &[ActiveEntry], resets: Vec<(ExchangeId, ExchangeId)>) {
        self.0.push(EventOutcome {
            event: p.event,
            ret: p.ret,
            noise: p.noise,
            coupling_term: p.coupling,
            active: active.to_vec(),
            resets,
        });
    }
}

/// Records `(coupling, residual)` pairs only.
struct ResidualSink<'a>(&'a mut Vec<(f64, f64)>);

impl Sink for ResidualSink<'_> {
    const DETAIL: bool = false;
    fn accept(&mut self, p: &Priced, _: &[ActiveEntry], _: Vec<(ExchangeId, ExchangeId)>) {
        self.0.push((p.coupling, p.noise));
    }
}

/// Records each replayed event's active counterparts without weighting them.
struct ActiveSink<'a>(&'a mut ActiveTrace);

impl Sink for ActiveSink<'_> {
    const DETAIL: bool = false;
    fn accept(&mut self, p: &Priced, active: &[ActiveEntry], _: Vec<(ExchangeId, ExchangeId)>) {
        let start = self.0.entries.len();
        self.0.entries.extend(active.iter().map(|a| (a.counterpart, a.stress)));
        self.0.events.push(TracedEvent {
            exchange: p.event.exchange,
            ret: p.ret,
            entries: start..self.0.entries.len(),
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
struct TracedEvent {
    exchange: ExchangeId,
    ret: f64,
    entries: core::ops::Range<usize>,
}

/// Active sets of a replay.
///
/// When returns are observed, which stresses cross the threshold and get
/// reset depends only on the threshold, never on the coupling weights. One
/// trace therefore serves every `(gamma, tau)` at that threshold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActiveTrace {
    events: Vec<TracedEvent>,
    /// `(counterpart, stress)` in ascending counterpart order per event.
    entries: Vec<(ExchangeId, f64)>,
}

impl ActiveTrace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `(coupling, residual)` per replayed event under `weights`; bit-identical
    /// to a full replay with those weights.
    pub fn residuals<'a>(&'a self, weights: &'a CouplingWeights) -> impl Iterator<Item = (f64, f64)> + 'a {
        self.events.iter().map(move |e| {
            let active = &self.entries[e.entries.clone()];
            let coupling = if active.is_empty() {
                0.0
            } else {
                let mut sum = 0.0;
                for &(j, stress) in active {
                    sum += weights.get(e.exchange, j) * stress;
                }
                sum / active.len() as f64
            };
            (coupling, e.ret - coupling)
        })
    }
}

/// The price-quake dynamics for a fixed exchange registry and parameter set.
#[derive(Debug, Clone)]
pub struct Engine {
    params: ModelParams,
    weights: CouplingWeights,
}

impl Engine {
    pub fn new(exchanges: &[ExchangeSpec], params: ModelParams) -> Result<Self> {
        Self::with_zone_distance(exchanges, params, ZoneDistance::Absolute)
    }

    pub fn with_zone_distance(
        exchanges: &[ExchangeSpec],
        params: ModelParams,
        zone_distance: ZoneDistance,
    ) -> Result<Self> {
        params.validate()?;
        let weights = CouplingWeights::new(exchanges, &params, zone_distance)?;
        Ok(Self { params, weights })
    }

    pub fn from_weights(weights: CouplingWeights, params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, weights })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn weights(&self) -> &CouplingWeights {
        &self.weights
    }

    pub fn num_exchanges(&self) -> usize {
        self.weights.len()
    }

    /// Evaluates a single event against `tensor` and returns the updated copy.
    pub fn evaluate_event(
        &self,
        tensor: &StressTensor,
        event: &MarketEvent,
        news: f64,
    ) -> Result<(EventOutcome, StressTensor)> {
        self.check_tensor(tensor)?;
        let mut next = tensor.clone();
        let mut out = Vec::with_capacity(1);
        let mut news_fn = |_: &MarketEvent| news;
        let mut drive = Drive::News(&mut news_fn);
        let mut scratch = Scratch::default();
        self.step_group(&mut next, core::slice::from_ref(event), &mut drive, 0, &mut scratch, &mut OutcomeSink(&mut out))?;
        Ok((out.pop().expect("one event evaluated"), next))
    }

    /// Runs the model forward with seeded Gaussian news.
    pub fn simulate(&self, calendar: &EventCalendar, options: &SimulationOptions) -> Result<SimulationRun> {
        let n = self.num_exchanges();
        let mut news = match &options.noise_sds {
            Some(sds) => {
                if sds.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        found: sds.len(),
                    });
                }
                if sds.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return Err(Error::InvalidParams("noise sd must be non-negative"));
                }
                NewsSource::heterogeneous(self.params.seed, sds.clone())
            }
            None => NewsSource::homogeneous(self.params.seed, n, self.params.noise_sd),
        };
        let initial = options.initial.clone().unwrap_or_else(|| StressTensor::zeros(n));
        self.simulate_with_news(calendar, initial, options.warmup_days, |e| news.draw(e.exchange))
    }

    /// Runs the model forward with caller-supplied news, called once per event in calendar order.
    pub fn simulate_with_news(
        &self,
        calendar: &EventCalendar,
        initial: StressTensor,
        warmup_days: u32,
        mut news: impl FnMut(&MarketEvent) -> f64,
    ) -> Result<SimulationRun> {
        self.check_calendar(calendar)?;
        self.check_tensor(&initial)?;
        let mut tensor = initial;
        let mut outcomes = Vec::with_capacity(calendar.event_count());
        let mut drive = Drive::News(&mut news);
        self.run(calendar, &mut tensor, &mut drive, &mut OutcomeSink(&mut outcomes))?;

        let warmup_events = calendar.events_before_day(warmup_days);
        let measure_from_group = outcomes
            .get(warmup_events)
            .map_or(calendar.group_count(), |o| o.event.group);
        let prices = PriceSeries::from_outcomes(self.num_exchanges(), &outcomes);
        Ok(SimulationRun {
            outcomes,
            prices,
            warmup_events,
            measure_from_group,
            final_tensor: tensor,
        })
    }

    /// Drives the tensor with observed returns, one entry per calendar event
    /// (`None` skips the event). The residual is `observed - coupling`.
    pub fn replay(&self, calendar: &EventCalendar, observed: &[Option<f64>]) -> Result<ReplayRun> {
        self.check_calendar(calendar)?;
        self.check_observed(calendar, observed)?;
        let mut tensor = StressTensor::zeros(self.num_exchanges());
        let mut outcomes = Vec::with_capacity(observed.len());
        let mut drive = Drive::Observed(observed);
        self.run(calendar, &mut tensor, &mut drive, &mut OutcomeSink(&mut outcomes))?;
        let residuals = outcomes.iter().map(|o| o.noise).collect();
        Ok(ReplayRun {
            outcomes,
            residuals,
            final_tensor: tensor,
        })
    }

    /// Replay that only records `(coupling, residual)` per replayed event,
    /// appending to `out`. Used by the likelihood.
    pub fn replay_residuals(
        &self,
        calendar: &EventCalendar,
        observed: &[Option<f64>],
        out: &mut Vec<(f64, f64)>,
    ) -> Result<()> {
        self.check_calendar(calendar)?;
        self.check_observed(calendar, observed)?;
        let mut tensor = StressTensor::zeros(self.num_exchanges());
        let mut drive = Drive::Observed(observed);
        self.run(calendar, &mut tensor, &mut drive, &mut ResidualSink(out))
    }

    /// Replays observed returns and keeps only the active sets; see [`ActiveTrace`].
    pub fn replay_active(&self, calendar: &EventCalendar, observed: &[Option<f64>]) -> Result<ActiveTrace> {
        self.check_calendar(calendar)?;
        self.check_observed(calendar, observed)?;
        let mut tensor = StressTensor::zeros(self.num_exchanges());
        let mut trace = ActiveTrace::default();
        let mut drive = Drive::Observed(observed);
        self.run(calendar, &mut tensor, &mut drive, &mut ActiveSink(&mut trace))?;
        Ok(trace)
    }

    fn check_calendar(&self, calendar: &EventCalendar) -> Result<()> {
        if calendar.num_exchanges() != self.num_exchanges() {
            return Err(Error::LengthMismatch {
                expected: self.num_exchanges(),
                found: calendar.num_exchanges(),
            });
        }
        Ok(())
    }

    fn check_tensor(&self, tensor: &StressTensor) -> Result<()> {
        if tensor.len() != self.num_exchanges() {
            return Err(Error::LengthMismatch {
                expected: self.num_exchanges(),
                found: tensor.len(),
            });
        }
        Ok(())
    }

    fn check_observed(&self, calendar: &EventCalendar, observed: &[Option<f64>]) -> Result<()> {
        let expected = calendar.event_count();
        if observed.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: observed.len(),
            });
        }
        Ok(())
    }

    fn run<S: Sink>(
        &self,
        calendar: &EventCalendar,
        tensor: &mut StressTensor,
        drive: &mut Drive<'_>,
        sink: &mut S,
    ) -> Result<()> {
        let mut scratch = Scratch::default();
        let mut index = 0usize;
        for group in calendar.groups() {
            self.step_group(tensor, &group.events, drive, index, &mut scratch, sink)?;
            index += group.events.len();
        }
        Ok(())
    }

    /// Prices every event of one simultaneous group against the current
    /// tensor, then applies all row resets followed by all column pushes.
    /// `index` is the calendar position of the group's first event.
    fn step_group<S: Sink>(
        &self,
        tensor: &mut StressTensor,
        events: &[MarketEvent],
        drive: &mut Drive<'_>,
        index: usize,
        scratch: &mut Scratch,
        sink: &mut S,
    ) -> Result<()> {
        let n = tensor.n;
        let threshold = self.params.threshold;
        scratch.priced.clear();
        scratch.active.clear();

        for (offset, event) in events.iter().enumerate() {
            let position = index + offset;
            let i = event.exchange;
            let observed = match drive {
                Drive::Observed(obs) => match obs[position] {
                    Some(r) => Some(r),
                    None => continue,
                },
                Drive::News(_) => None,
            };

            let start = scratch.active.len();
            let mut sum = 0.0;
            let row = tensor.row(i);
            for (j, &stress) in row.iter().enumerate() {
                if j != i && stress.abs() > threshold {
                    let weight = self.weights.get(i, j);
                    sum += weight * stress;
                    scratch.active.push(ActiveEntry {
                        counterpart: j,
                        stress,
                        weight,
                    });
                }
            }
            let active_count = scratch.active.len() - start;
            let coupling = if active_count == 0 {
                0.0
            } else {
                sum / active_count as f64
            };

            let (ret, noise) = match (observed, &mut *drive) {
                (Some(r), _) => {
                    if !r.is_finite() {
                        return Err(Error::NonFiniteInput(position));
                    }
                    (r, r - coupling)
                }
                (None, Drive::News(f)) => {
                    let news = f(event);
                    if !news.is_finite() {
                        return Err(Error::NonFiniteInput(position));
                    }
                    (coupling + news, news)
                }
                (None, Drive::Observed(_)) => unreachable!("missing observations are skipped"),
            };
            if !ret.is_finite() {
                return Err(Error::NonFiniteReturn(position));
            }
            scratch.priced.push(Priced {
                event: *event,
                ret,
                noise,
                coupling,
                active: start..scratch.active.len(),
            });
        }

        for p in &scratch.priced {
            let i = p.event.exchange;
            for a in &scratch.active[p.active.clone()] {
                tensor.set(i, a.counterpart, 0.0);
            }
        }

        let mut column_resets: Vec<(ExchangeId, ExchangeId)> = Vec::new();
        for p in &scratch.priced {
            let i = p.event.exchange;
            column_resets.clear();
            for k in 0..n {
                if k == i {
                    continue;
                }
                let current = tensor.get(k, i);
                let base = if current.abs() > threshold {
                    if S::DETAIL {
                        column_resets.push((k, i));
                    }
                    0.0
                } else {
                    current
                };
                tensor.set(k, i, base + p.ret);
            }
            let resets = if S::DETAIL {
                let active = &scratch.active[p.active.clone()];
                let mut resets: Vec<_> = active.iter().map(|a| (i, a.counterpart)).collect();
                resets.extend_from_slice(&column_resets);
                resets
            } else {
                Vec::new()
            };
            sink.accept(p, &scratch.active[p.active.clone()], resets);
        }
        Ok(())
    }
}

/// Simulates `calendar` with default options.
pub fn simulate(
    calendar: &EventCalendar,
    params: ModelParams,
    exchanges: &[ExchangeSpec],
) -> Result<SimulationRun> {
    Engine::new(exchanges, params)?.simulate(calendar, &SimulationOptions::default())
}

/// Replays observed returns through the dynamics.
pub fn replay(
    calendar: &EventCalendar,
    observed: &[Option<f64>],
    params: ModelParams,
    exchanges: &[ExchangeSpec],
) -> Result<ReplayRun> {
    Engine::new(exchanges, params)?.replay(calendar, observed)
}
