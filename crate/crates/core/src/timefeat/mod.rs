//! Time-feature functions: total maps from timestamps to a finite set of
//! clusters, their co-membership indicator, marginal probabilities under a
//! time distribution, and product features.
//!
//! Timestamps are integer seconds since [`EPOCH_UNIX`] (2021-01-01 UTC, the
//! first day of the logging year). Calendar features use proleptic Gregorian
//! UTC.

mod calendar;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use calendar::{CalendarKind, HolidayTable};

use crate::error::{Error, Result};

/// Seconds since [`EPOCH_UNIX`].
pub type Timestamp = i64;

/// Unix time of `t = 0`: 2021-01-01T00:00:00Z. Both 2021 and 2022 are
/// 365-day years.
pub const EPOCH_UNIX: i64 = 1_609_459_200;
pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;
pub const SECONDS_PER_YEAR: i64 = 365 * SECONDS_PER_DAY;

/// Grid used to integrate features that expose no change points.
pub const DEFAULT_RESOLUTION: i64 = SECONDS_PER_HOUR;

type CustomMap = Arc<dyn Fn(Timestamp) -> usize + Send + Sync>;

#[derive(Clone)]
enum FeatureKind {
    Calendar(CalendarKind),
    Product(Box<TimeFeatureFn>, Box<TimeFeatureFn>),
    Custom { map: CustomMap, resolution: i64 },
}

/// A time-feature function `phi`: a deterministic clustering of timestamps
/// in `[0, domain_end]` into `cardinality` groups.
#[derive(Clone)]
pub struct TimeFeatureFn {
    id: String,
    cardinality: usize,
    domain_end: Timestamp,
    kind: FeatureKind,
}

impl fmt::Debug for TimeFeatureFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeFeatureFn")
            .field("id", &self.id)
            .field("cardinality", &self.cardinality)
            .field("domain_end", &self.domain_end)
            .finish()
    }
}

impl TimeFeatureFn {
    pub fn calendar(kind: CalendarKind, domain_end: Timestamp) -> Result<Self> {
        if domain_end < 0 {
            return Err(Error::config("domain_end must be non-negative"));
        }
        Ok(Self {
            id: kind.name(),
            cardinality: kind.cardinality(),
            domain_end,
            kind: FeatureKind::Calendar(kind),
        })
    }

    pub fn constant(domain_end: Timestamp) -> Self {
        Self::calendar(CalendarKind::Constant, domain_end).expect("valid constant feature")
    }

    pub fn seasons(k: u32, domain_end: Timestamp) -> Result<Self> {
        Self::calendar(CalendarKind::n_equal_seasons(k)?, domain_end)
    }

    pub fn day_of_week(domain_end: Timestamp) -> Self {
        Self::calendar(CalendarKind::DayOfWeek, domain_end).expect("valid weekday feature")
    }

    /// A user-supplied map. `map` must return indices below `cardinality`;
    /// marginal probabilities are integrated on a grid of `resolution` seconds.
    pub fn custom(
        id: impl Into<String>,
        cardinality: usize,
        domain_end: Timestamp,
        resolution: i64,
        map: impl Fn(Timestamp) -> usize + Send + Sync + 'static,
    ) -> Result<Self> {
        if cardinality == 0 {
            return Err(Error::config("feature cardinality must be positive"));
        }
        if resolution < 1 {
            return Err(Error::config("integration resolution must be >= 1 second"));
        }
        Ok(Self {
            id: id.into(),
            cardinality,
            domain_end,
            kind: FeatureKind::Custom {
                map: Arc::new(map),
                resolution,
            },
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn domain_end(&self) -> Timestamp {
        self.domain_end
    }

    /// Same map with a different domain end (used when a feature defined in a
    /// config is attached to a concrete horizon).
    pub fn with_domain_end(&self, domain_end: Timestamp) -> Self {
        let mut out = self.clone();
        out.domain_end = domain_end;
        if let FeatureKind::Product(a, b) = &mut out.kind {
            **a = a.with_domain_end(domain_end);
            **b = b.with_domain_end(domain_end);
        }
        out
    }

    fn check(&self, t: Timestamp) -> Result<()> {
        if t < 0 || t > self.domain_end {
            return Err(Error::Domain {
                phi: self.id.clone(),
                t,
                domain_end: self.domain_end,
            });
        }
        Ok(())
    }

    fn raw_index(&self, t: Timestamp) -> usize {
        match &self.kind {
            FeatureKind::Calendar(kind) => kind.index(t),
            FeatureKind::Product(a, b) => a.raw_index(t) * b.cardinality + b.raw_index(t),
            FeatureKind::Custom { map, .. } => map(t),
        }
    }

    /// Feature index of `t`, in `[0, cardinality)`.
    pub fn feature_of(&self, t: Timestamp) -> Result<usize> {
        self.check(t)?;
        let idx = self.raw_index(t);
        if idx >= self.cardinality {
            return Err(Error::Numeric(format!(
                "feature `{}` returned index {idx} >= cardinality {}",
                self.id, self.cardinality
            )));
        }
        Ok(idx)
    }

    /// Whether `t` and `t_prime` fall in the same cluster.
    pub fn indicator(&self, t: Timestamp, t_prime: Timestamp) -> Result<bool> {
        Ok(self.feature_of(t)? == self.feature_of(t_prime)?)
    }

    /// First timestamp after `t` at which the feature value may change.
    fn next_boundary(&self, t: Timestamp) -> Timestamp {
        match &self.kind {
            FeatureKind::Calendar(kind) => kind.next_boundary(t),
            FeatureKind::Product(a, b) => a.next_boundary(t).min(b.next_boundary(t)),
            FeatureKind::Custom { resolution, .. } => (t.div_euclid(*resolution) + 1) * resolution,
        }
    }

    /// `p(phi(t'))`: probability that a draw from `pt` shares `t_prime`'s
    /// cluster. A zero result is reported as
    /// [`Error::NoTimeFeatureSupport`].
    pub fn marginal_prob(&self, t_prime: Timestamp, pt: &TimeDistribution) -> Result<f64> {
        let target = self.feature_of(t_prime)?;
        let p = match pt {
            TimeDistribution::Uniform { start, end } => {
                self.check(*start)?;
                self.check(*end)?;
                let mut matched: i64 = 0;
                let mut s = *start;
                while s <= *end {
                    let next = self.next_boundary(s).min(end + 1);
                    if self.raw_index(s) == target {
                        matched += next - s;
                    }
                    s = next;
                }
                matched as f64 / (end - start + 1) as f64
            }
            TimeDistribution::Empirical(sample) => {
                let mut hits = 0usize;
                for &s in sample {
                    if self.feature_of(s)? == target {
                        hits += 1;
                    }
                }
                hits as f64 / sample.len() as f64
            }
        };
        if p <= 0.0 {
            return Err(Error::NoTimeFeatureSupport {
                phi: self.id.clone(),
                t_prime,
            });
        }
        Ok(p)
    }

    /// The product feature `self ⊗ other` with index `i_self * |C_other| + i_other`.
    pub fn product(&self, other: &TimeFeatureFn) -> Result<TimeFeatureFn> {
        if self.domain_end != other.domain_end {
            return Err(Error::config(format!(
                "cannot combine `{}` (domain_end {}) with `{}` (domain_end {})",
                self.id, self.domain_end, other.id, other.domain_end
            )));
        }
        Ok(TimeFeatureFn {
            id: format!("{}*{}", self.id, other.id),
            cardinality: self.cardinality * other.cardinality,
            domain_end: self.domain_end,
            kind: FeatureKind::Product(Box::new(self.clone()), Box::new(other.clone())),
        })
    }

    /// Build from a config description.
    pub fn from_spec(spec: &FeatureSpec, domain_end: Timestamp) -> Result<Self> {
        if spec.kind == "product" {
            let mut factors = spec.factors.iter();
            let first = factors
                .next()
                .ok_or_else(|| Error::config("product feature needs at least one factor"))?;
            let mut acc = Self::from_spec(first, domain_end)?;
            for f in factors {
                acc = acc.product(&Self::from_spec(f, domain_end)?)?;
            }
            return Ok(acc);
        }
        Self::calendar(spec.calendar_kind()?, domain_end)
    }

    /// Config description of this feature, if it is not a custom map.
    pub fn spec(&self) -> Option<FeatureSpec> {
        match &self.kind {
            FeatureKind::Calendar(kind) => Some(FeatureSpec::from_calendar(kind)),
            FeatureKind::Product(a, b) => {
                let mut factors = Vec::new();
                for f in [a, b] {
                    let s = f.spec()?;
                    if s.kind == "product" {
                        factors.extend(s.factors);
                    } else {
                        factors.push(s);
                    }
                }
                Some(FeatureSpec {
                    kind: "product".into(),
                    params: Value::Null,
                    factors,
                })
            }
            FeatureKind::Custom { .. } => None,
        }
    }
}

/// Distribution of logging timestamps `p(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeDistribution {
    /// Uniform over the integer seconds `start..=end`.
    Uniform { start: Timestamp, end: Timestamp },
    /// Uniform over a finite sample of timestamps.
    Empirical(Vec<Timestamp>),
}

impl TimeDistribution {
    pub fn uniform(start: Timestamp, end: Timestamp) -> Result<Self> {
        if start >= end {
            return Err(Error::config(format!(
                "uniform time window needs start < end, got [{start}, {end}]"
            )));
        }
        Ok(TimeDistribution::Uniform { start, end })
    }

    /// Largest timestamp with positive probability.
    pub fn upper(&self) -> Timestamp {
        match self {
            TimeDistribution::Uniform { end, .. } => *end,
            TimeDistribution::Empirical(s) => s.iter().copied().max().unwrap_or(0),
        }
    }

    pub fn empirical(sample: Vec<Timestamp>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::config(
                "empirical time distribution needs a non-empty sample",
            ));
        }
        Ok(TimeDistribution::Empirical(sample))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Timestamp {
        match self {
            TimeDistribution::Uniform { start, end } => rng.random_range(*start..=*end),
            TimeDistribution::Empirical(s) => s[rng.random_range(0..s.len())],
        }
    }
}

/// JSON form of a feature: `{"kind": "...", "params": {...}}`, or
/// `{"kind": "product", "factors": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<FeatureSpec>,
}

impl FeatureSpec {
    pub fn simple(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            params: Value::Null,
            factors: Vec::new(),
        }
    }

    pub fn seasons(k: u32) -> Self {
        Self {
            kind: "n_equal_seasons".into(),
            params: serde_json::json!({ "k": k }),
            factors: Vec::new(),
        }
    }

    pub fn product(factors: Vec<FeatureSpec>) -> Self {
        Self {
            kind: "product".into(),
            params: Value::Null,
            factors,
        }
    }

    fn calendar_kind(&self) -> Result<CalendarKind> {
        Ok(match self.kind.as_str() {
            "n_equal_seasons" => {
                let k = self
                    .params
                    .get("k")
                    .and_then(Value::as_i64)
                    .ok_or_else(|| Error::config("n_equal_seasons needs integer params.k"))?;
                if k < 1 || k > u32::MAX as i64 {
                    return Err(Error::config(format!(
                        "n_equal_seasons k must be >= 1, got {k}"
                    )));
                }
                CalendarKind::n_equal_seasons(k as u32)?
            }
            "month" => CalendarKind::Month,
            "week_of_month" => CalendarKind::WeekOfMonth,
            "date" => CalendarKind::Date,
            "day_of_week" => CalendarKind::DayOfWeek,
            "holiday" => {
                if self.params.is_null() {
                    return Err(Error::config(
                        "holiday feature requires a calendar table in params",
                    ));
                }
                let table: HolidayTable = serde_json::from_value(self.params.clone())
                    .map_err(|e| Error::config(format!("bad holiday table: {e}")))?;
                CalendarKind::holiday(table)?
            }
            "hour" => CalendarKind::Hour,
            "four_per_day" => CalendarKind::FourPerDay,
            "am_pm" => CalendarKind::AmPm,
            "weekday_weekend" => CalendarKind::WeekdayWeekend,
            "constant" => CalendarKind::Constant,
            other => {
                return Err(Error::config(format!(
                    "unknown time feature kind `{other}`"
                )))
            }
        })
    }

    fn from_calendar(kind: &CalendarKind) -> Self {
        match kind {
            CalendarKind::NEqualSeasons(k) => Self::seasons(*k),
            CalendarKind::Holiday(table) => Self {
                kind: "holiday".into(),
                params: serde_json::to_value(table).expect("holiday table serializes"),
                factors: Vec::new(),
            },
            other => Self::simple(
                &match other {
                    CalendarKind::Month => "month",
                    CalendarKind::WeekOfMonth => "week_of_month",
                    CalendarKind::Date => "date",
                    CalendarKind::DayOfWeek => "day_of_week",
                    CalendarKind::Hour => "hour",
                    CalendarKind::FourPerDay => "four_per_day",
                    CalendarKind::AmPm => "am_pm",
                    CalendarKind::WeekdayWeekend => "weekday_weekend",
                    _ => "constant",
                }
                .to_string(),
            ),
        }
    }
}

/// `n_equal_seasons(k)` for each `k` in `ks`.
pub fn season_ladder(ks: &[u32], domain_end: Timestamp) -> Result<Vec<TimeFeatureFn>> {
    ks.iter()
        .map(|&k| TimeFeatureFn::seasons(k, domain_end))
        .collect()
}

/// Start of calendar day `day` (0-based) of year `year` (0 = logging year).
pub fn day_start(year: i64, day: i64) -> Timestamp {
    year * SECONDS_PER_YEAR + day * SECONDS_PER_DAY
}
