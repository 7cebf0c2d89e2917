//! Tract-level EV equity scoring, affordability and adoption diagnostics.
//!
//! The equity index is a priority map: higher values mean greater barriers to
//! EV adoption. Each raw indicator column is min-max normalized across the
//! tract set, barrier-decreasing indicators are inverted, and the normalized
//! values are combined by weighted means into an internal (socio-economic)
//! and an external (infrastructure and cost) subscore.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::scenario::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquityError {
    #[error("no tracts supplied")]
    EmptyTractSet,
    #[error("indicator values are empty")]
    EmptyIndicator,
    #[error("indicator values must be finite")]
    NonFinite,
    #[error("weight {0} is negative or non-finite")]
    NegativeWeight(&'static str),
    #[error("weights sum to zero")]
    ZeroWeights,
    #[error("invalid loan terms: {0}")]
    InvalidTerms(String),
    #[error("invalid price: {0}")]
    InvalidPrice(String),
    #[error("public charger count must be positive")]
    ZeroChargers,
    #[error("at least two adoption anchors are required, got {0}")]
    InsufficientAnchors(usize),
    #[error("adoption share {0} is outside [0, 1]")]
    ShareOutOfRange(f64),
    #[error("invalid tract {tract}: {reason}")]
    InvalidTract { tract: String, reason: String },
    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for EquityError {
    fn from(err: csv::Error) -> Self {
        EquityError::Csv(err.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractProfile {
    pub tract_id: String,
    /// USD per year.
    pub median_income: f64,
    /// Fraction of adults with a degree.
    #[serde(rename = "edu")]
    pub educational_attainment: f64,
    #[serde(rename = "poverty")]
    pub poverty_rate: f64,
    #[serde(rename = "renter")]
    pub renter_rate: f64,
    /// Fraction of households with fewer than two cars.
    #[serde(rename = "sub_two_car")]
    pub sub_two_car_rate: f64,
    /// Public charging ports per 1,000 households.
    pub charger_access: f64,
    /// Local average EV price, USD.
    #[serde(rename = "ev_cost")]
    pub ev_cost_index: f64,
    /// Available incentives, USD.
    #[serde(rename = "incentive")]
    pub incentive_usd: f64,
}

impl TractProfile {
    pub fn validate(&self) -> Result<(), EquityError> {
        let bad = |reason: &str| EquityError::InvalidTract {
            tract: self.tract_id.clone(),
            reason: reason.to_string(),
        };
        if !(self.median_income.is_finite() && self.median_income > 0.0) {
            return Err(bad("median income must be positive"));
        }
        for (name, v) in [
            ("edu", self.educational_attainment),
            ("poverty", self.poverty_rate),
            ("renter", self.renter_rate),
            ("sub_two_car", self.sub_two_car_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(&format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.charger_access.is_finite() && self.charger_access >= 0.0) {
            return Err(bad("charger access must be non-negative"));
        }
        if !(self.ev_cost_index.is_finite() && self.ev_cost_index >= 0.0) {
            return Err(bad("ev cost must be non-negative"));
        }
        if !(self.incentive_usd.is_finite() && self.incentive_usd >= 0.0) {
            return Err(bad("incentive must be non-negative"));
        }
        Ok(())
    }
}

pub fn read_tracts_csv<R: io::Read>(reader: R) -> Result<Vec<TractProfile>, EquityError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let tracts: Vec<TractProfile> = rdr.deserialize().collect::<Result<_, _>>()?;
    for t in &tracts {
        t.validate()?;
    }
    Ok(tracts)
}

pub fn write_tracts_csv<W: io::Write>(writer: W, tracts: &[TractProfile]) -> Result<(), EquityError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for t in tracts {
        wtr.serialize(t)?;
    }
    wtr.flush().map_err(|e| EquityError::Csv(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    BarrierIncreasing,
    BarrierDecreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    /// All inputs were equal; every output was forced to 0.5.
    pub degenerate: bool,
}

pub fn normalize_indicator(values: &[f64], direction: Direction) -> Result<Normalized, EquityError> {
    if values.is_empty() {
        return Err(EquityError::EmptyIndicator);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EquityError::NonFinite);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(Normalized {
            values: vec![0.5; values.len()],
            degenerate: true,
        });
    }
    let span = max - min;
    let values = values
        .iter()
        .map(|v| {
            let n = (v - min) / span;
            match direction {
                Direction::BarrierIncreasing => n,
                Direction::BarrierDecreasing => 1.0 - n,
            }
        })
        .collect();
    Ok(Normalized {
        values,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    EducationalAttainment,
    Poverty,
    Renter,
    SubTwoCar,
    ChargerAccess,
    EvCost,
    Incentive,
}

impl Indicator {
    pub const INTERNAL: [Indicator; 4] = [
        Indicator::EducationalAttainment,
        Indicator::Poverty,
        Indicator::Renter,
        Indicator::SubTwoCar,
    ];
    pub const EXTERNAL: [Indicator; 3] = [
        Indicator::ChargerAccess,
        Indicator::EvCost,
        Indicator::Incentive,
    ];

    pub fn direction(self) -> Direction {
        match self {
            Indicator::EducationalAttainment | Indicator::ChargerAccess | Indicator::Incentive => {
                Direction::BarrierDecreasing
            }
            _ => Direction::BarrierIncreasing,
        }
    }

    pub fn raw(self, tract: &TractProfile) -> f64 {
        match self {
            Indicator::EducationalAttainment => tract.educational_attainment,
            Indicator::Poverty => tract.poverty_rate,
            Indicator::Renter => tract.renter_rate,
            Indicator::SubTwoCar => tract.sub_two_car_rate,
            Indicator::ChargerAccess => tract.charger_access,
            Indicator::EvCost => tract.ev_cost_index,
            Indicator::Incentive => tract.incentive_usd,
        }
    }
}

/// Indicator weights. Within each group the subscore is the weighted mean of
/// its indicators; the index blends the groups by `internal_share`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquityWeights {
    pub educational_attainment: f64,
    pub poverty: f64,
    pub renter: f64,
    pub sub_two_car: f64,
    pub charger_access: f64,
    pub ev_cost: f64,
    pub incentive: f64,
    pub internal_share: f64,
}

impl Default for EquityWeights {
    fn default() -> Self {
        Self {
            educational_attainment: 1.0,
            poverty: 1.0,
            renter: 1.0,
            sub_two_car: 1.0,
            charger_access: 1.0,
            ev_cost: 1.0,
            incentive: 1.0,
            internal_share: 0.5,
        }
    }
}

impl EquityWeights {
    pub fn weight(&self, indicator: Indicator) -> f64 {
        match indicator {
            Indicator::EducationalAttainment => self.educational_attainment,
            Indicator::Poverty => self.poverty,
            Indicator::Renter => self.renter,
            Indicator::SubTwoCar => self.sub_two_car,
            Indicator::ChargerAccess => self.charger_access,
            Indicator::EvCost => self.ev_cost,
            Indicator::Incentive => self.incentive,
        }
    }

    fn validate(&self) -> Result<(), EquityError> {
        let named = [
            ("educational_attainment", self.educational_attainment),
            ("poverty", self.poverty),
            ("renter", self.renter),
            ("sub_two_car", self.sub_two_car),
            ("charger_access", self.charger_access),
            ("ev_cost", self.ev_cost),
            ("incentive", self.incentive),
        ];
        if let Some((name, _)) = named.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(EquityError::NegativeWeight(name));
        }
        if !(0.0..=1.0).contains(&self.internal_share) {
            return Err(EquityError::NegativeWeight("internal_share"));
        }
        if named.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return Err(EquityError::ZeroWeights);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityScore {
    pub tract_id: String,
    pub internal: f64,
    pub external: f64,
    pub index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityIndex {
    pub scores: Vec<EquityScore>,
    /// Indicators whose column was constant across tracts.
    pub degenerate_indicators: Vec<Indicator>,
}

fn weighted_mean(columns: &BTreeMap<Indicator, Vec<f64>>, group: &[Indicator], weights: &EquityWeights, row: usize) -> Option<f64> {
    let total: f64 = group.iter().map(|i| weights.weight(*i)).sum();
    if total <= 0.0 {
        return None;
    }
    let acc: f64 = group
        .iter()
        .map(|i| weights.weight(*i) * columns[i][row])
        .sum();
    Some(acc / total)
}

pub fn compute_equity_index(
    tracts: &[TractProfile],
    weights: &EquityWeights,
) -> Result<EquityIndex, EquityError> {
    if tracts.is_empty() {
        return Err(EquityError::EmptyTractSet);
    }
    weights.validate()?;

    let mut columns = BTreeMap::new();
    let mut degenerate_indicators = Vec::new();
    for indicator in Indicator::INTERNAL.iter().chain(&Indicator::EXTERNAL) {
        let raw: Vec<f64> = tracts.iter().map(|t| indicator.raw(t)).collect();
        let norm = normalize_indicator(&raw, indicator.direction())?;
        if norm.degenerate {
            degenerate_indicators.push(*indicator);
        }
        columns.insert(*indicator, norm.values);
    }

    let scores = tracts
        .iter()
        .enumerate()
        .map(|(row, tract)| {
            let internal = weighted_mean(&columns, &Indicator::INTERNAL, weights, row);
            let external = weighted_mean(&columns, &Indicator::EXTERNAL, weights, row);
            let index = match (internal, external) {
                (Some(i), Some(e)) => {
                    weights.internal_share * i + (1.0 - weights.internal_share) * e
                }
                (Some(i), None) => i,
                (None, Some(e)) => e,
                (None, None) => unreachable!("validated weights sum to a positive value"),
            };
            EquityScore {
                tract_id: tract.tract_id.clone(),
                internal: internal.unwrap_or(0.0),
                external: external.unwrap_or(0.0),
                index,
            }
        })
        .collect();

    Ok(EquityIndex {
        scores,
        degenerate_indicators,
    })
}

impl EquityIndex {
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), EquityError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for s in &self.scores {
            wtr.serialize(s)?;
        }
        wtr.flush().map_err(|e| EquityError::Csv(e.to_string()))
    }

    /// Choropleth-ready FeatureCollection, one feature per tract.
    pub fn to_geojson(&self, geometries: &BTreeMap<String, Value>) -> Value {
        let features: Vec<Value> = self
            .scores
            .iter()
            .map(|s| {
                json!({
                    "type": "Feature",
                    "id": s.tract_id,
                    "geometry": geometries.get(&s.tract_id).cloned().unwrap_or(Value::Null),
                    "properties": {
                        "tract_id": s.tract_id,
                        "index": s.index,
                        "internal": s.internal,
                        "external": s.external,
                    }
                })
            })
            .collect();
        json!({ "type": "FeatureCollection", "features": features })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoanTerms {
    pub apr: f64,
    pub term_months: u32,
    pub down_payment_fraction: f64,
    /// Share of household income available for the annual loan payment.
    pub budget_fraction: f64,
}

impl Default for LoanTerms {
    fn default() -> Self {
        Self {
            apr: 0.07,
            term_months: 60,
            down_payment_fraction: 0.0,
            budget_fraction: 0.10,
        }
    }
}

impl LoanTerms {
    pub fn validate(&self) -> Result<(), EquityError> {
        if !(self.apr.is_finite() && self.apr >= 0.0) {
            return Err(EquityError::InvalidTerms("apr must be non-negative".into()));
        }
        if self.term_months < 1 {
            return Err(EquityError::InvalidTerms("term must be at least one month".into()));
        }
        if !(0.0..1.0).contains(&self.down_payment_fraction) {
            return Err(EquityError::InvalidTerms(
                "down payment fraction must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.budget_fraction) {
            return Err(EquityError::InvalidTerms(
                "budget fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Standard amortized monthly payment `P·r / (1 − (1 + r)^−n)`.
    pub fn monthly_payment(&self, principal: f64) -> f64 {
        let n = self.term_months as f64;
        let r = self.apr / 12.0;
        if r == 0.0 {
            principal / n
        } else {
            principal * r / (1.0 - (1.0 + r).powf(-n))
        }
    }

    pub fn annual_payment(&self, price: f64, incentive: f64) -> f64 {
        let principal = (price - incentive) * (1.0 - self.down_payment_fraction);
        12.0 * self.monthly_payment(principal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affordability {
    pub annual_payment: f64,
    pub fraction_affording: f64,
    pub affords: Vec<(String, bool)>,
}

/// Which tracts' median household can carry the annual loan payment on
/// `ev_price − incentive_usd` within the budget share of income.
pub fn affordability_gap(
    tracts: &[TractProfile],
    ev_price: f64,
    terms: &LoanTerms,
    incentive_usd: f64,
) -> Result<Affordability, EquityError> {
    terms.validate()?;
    if tracts.is_empty() {
        return Err(EquityError::EmptyTractSet);
    }
    if !(incentive_usd.is_finite() && incentive_usd >= 0.0) {
        return Err(EquityError::InvalidPrice("incentive must be non-negative".into()));
    }
    if !(ev_price.is_finite() && ev_price >= incentive_usd) {
        return Err(EquityError::InvalidPrice(
            "price must be at least the incentive".into(),
        ));
    }
    let annual_payment = terms.annual_payment(ev_price, incentive_usd);
    let affords: Vec<(String, bool)> = tracts
        .iter()
        .map(|t| {
            (
                t.tract_id.clone(),
                annual_payment <= terms.budget_fraction * t.median_income,
            )
        })
        .collect();
    let n_ok = affords.iter().filter(|(_, ok)| *ok).count();
    Ok(Affordability {
        annual_payment,
        fraction_affording: n_ok as f64 / tracts.len() as f64,
        affords,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargerRatio {
    pub ev_count: f64,
    pub public_chargers: f64,
    /// EVs per public charger.
    pub per_charger: f64,
}

impl ChargerRatio {
    pub fn label(&self) -> String {
        format!("1:{:.1}", self.per_charger)
    }
}

pub fn charger_ratio(ev_count: f64, public_chargers: f64) -> Result<ChargerRatio, EquityError> {
    if !(public_chargers.is_finite() && public_chargers > 0.0) {
        return Err(EquityError::ZeroChargers);
    }
    Ok(ChargerRatio {
        ev_count,
        public_chargers,
        per_charger: ev_count / public_chargers,
    })
}

/// `saturation / (1 + exp(−growth_rate · (t − midpoint)))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub saturation: f64,
    pub growth_rate: f64,
    pub midpoint: f64,
    pub rmse: f64,
}

impl LogisticFit {
    pub fn at(&self, t: f64) -> f64 {
        self.saturation / (1.0 + (-self.growth_rate * (t - self.midpoint)).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum AdoptionModel {
    Logistic(LogisticFit),
    /// Fallback when no logistic can be fitted; clamped to [0, 1].
    LinearClamp { slope: f64, intercept: f64 },
}

impl AdoptionModel {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            AdoptionModel::Logistic(fit) => fit.at(t),
            AdoptionModel::LinearClamp { slope, intercept } => {
                (intercept + slope * t).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdoptionProjection {
    pub model: AdoptionModel,
    pub degenerate_fit: bool,
    /// Yearly values from the first anchor year through the horizon.
    pub trajectory: Trajectory,
}

fn linear_least_squares(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    Some((slope, mean_y - slope * mean_t))
}

fn sse(anchors: &[(f64, f64)], fit: &LogisticFit) -> f64 {
    anchors.iter().map(|(t, s)| (s - fit.at(*t)).powi(2)).sum()
}

/// Gauss-Newton refinement of growth rate and midpoint in share space.
fn refine(anchors: &[(f64, f64)], mut fit: LogisticFit) -> LogisticFit {
    let mut best = sse(anchors, &fit);
    for _ in 0..50 {
        if best < 1e-30 {
            break;
        }
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, s) in anchors {
            let f = fit.at(*t);
            let g = f * (1.0 - f / fit.saturation);
            let dk = g * (t - fit.midpoint);
            let dm = -g * fit.growth_rate;
            let r = s - f;
            a11 += dk * dk;
            a12 += dk * dm;
            a22 += dm * dm;
            b1 += dk * r;
            b2 += dm * r;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-300 {
            break;
        }
        let step_k = (a22 * b1 - a12 * b2) / det;
        let step_m = (a11 * b2 - a12 * b1) / det;
        let candidate = LogisticFit {
            growth_rate: fit.growth_rate + step_k,
            midpoint: fit.midpoint + step_m,
            ..fit
        };
        let cand_sse = sse(anchors, &candidate);
        if !(cand_sse < best) {
            break;
        }
        fit = candidate;
        best = cand_sse;
    }
    fit
}

/// Least-squares logistic fit with the given saturation level.
///
/// Returns `None` when the anchors cannot identify a logistic (shares at the
/// bounds, a single distinct time, or zero growth).
pub fn fit_logistic(anchors: &[(f64, f64)], saturation: f64) -> Option<LogisticFit> {
    if anchors
        .iter()
        .any(|(_, s)| *s <= 0.0 || *s >= saturation)
    {
        return None;
    }
    let logits: Vec<(f64, f64)> = anchors
        .iter()
        .map(|(t, s)| (*t, (s / (saturation - s)).ln()))
        .collect();
    let (slope, intercept) = linear_least_squares(&logits)?;
    if !slope.is_finite() || slope.abs() < 1e-12 {
        return None;
    }
    let mut fit = LogisticFit {
        saturation,
        growth_rate: slope,
        midpoint: -intercept / slope,
        rmse: 0.0,
    };
    fit = refine(anchors, fit);
    fit.rmse = (sse(anchors, &fit) / anchors.len() as f64).sqrt();
    Some(fit)
}

/// Fit an adoption curve through `(period, share)` anchors and tabulate it
/// yearly through `horizon`. Saturation is fixed at full adoption.
pub fn project_adoption(
    anchors: &[(f64, f64)],
    horizon: i32,
) -> Result<AdoptionProjection, EquityError> {
    if anchors.len() < 2 {
        return Err(EquityError::InsufficientAnchors(anchors.len()));
    }
    if let Some((_, s)) = anchors
        .iter()
        .find(|(t, s)| !t.is_finite() || !(0.0..=1.0).contains(s))
    {
        return Err(EquityError::ShareOutOfRange(*s));
    }
    let (model, degenerate_fit) = match fit_logistic(anchors, 1.0) {
        Some(fit) => (AdoptionModel::Logistic(fit), false),
        None => {
            let (slope, intercept) = linear_least_squares(anchors).unwrap_or_else(|| {
                let mean = anchors.iter().map(|a| a.1).sum::<f64>() / anchors.len() as f64;
                (0.0, mean)
            });
            (AdoptionModel::LinearClamp { slope, intercept }, true)
        }
    };
    let start = anchors
        .iter()
        .map(|a| a.0)
        .fold(f64::INFINITY, f64::min)
        .floor() as i32;
    let points: Vec<(f64, f64)> = (start..=horizon.max(start))
        .map(|y| (y as f64, model.at(y as f64)))
        .collect();
    let trajectory = Trajectory::new(points).expect("yearly points are increasing and finite");
    Ok(AdoptionProjection {
        model,
        degenerate_fit,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tract(id: &str, poverty: f64) -> TractProfile {
        TractProfile {
            tract_id: id.into(),
            median_income: 60_000.0,
            educational_attainment: 0.3,
            poverty_rate: poverty,
            renter_rate: 0.5,
            sub_two_car_rate: 0.4,
            charger_access: 1.0,
            ev_cost_index: 45_000.0,
            incentive_usd: 0.0,
        }
    }

    #[test]
    fn normalize_examples() {
        let up = normalize_indicator(&[0.0, 5.0, 10.0], Direction::BarrierIncreasing).unwrap();
        assert_eq!(up.values, vec![0.0, 0.5, 1.0]);
        assert!(!up.degenerate);
        let down = normalize_indicator(&[0.0, 5.0, 10.0], Direction::BarrierDecreasing).unwrap();
        assert_eq!(down.values, vec![1.0, 0.5, 0.0]);
        let flat = normalize_indicator(&[3.0, 3.0, 3.0], Direction::BarrierIncreasing).unwrap();
        assert_eq!(flat.values, vec![0.5; 3]);
        assert!(flat.degenerate);
        assert_eq!(
            normalize_indicator(&[], Direction::BarrierIncreasing).unwrap_err(),
            EquityError::EmptyIndicator
        );
        assert_eq!(
            normalize_indicator(&[1.0, f64::NAN], Direction::BarrierIncreasing).unwrap_err(),
            EquityError::NonFinite
        );
    }

    #[test]
    fn identical_tracts_score_identically() {
        let tracts = vec![tract("a", 0.2), tract("b", 0.2)];
        let out = compute_equity_index(&tracts, &EquityWeights::default()).unwrap();
        assert_eq!(out.scores[0].index, out.scores[1].index);
        assert_eq!(out.degenerate_indicators.len(), 7);
    }

    #[test]
    fn dominating_tract_scores_higher() {
        let mut a = tract("a", 0.4);
        a.renter_rate = 0.8;
        a.educational_attainment = 0.1;
        a.charger_access = 0.2;
        let b = tract("b", 0.1);
        let out = compute_equity_index(&[a, b], &EquityWeights::default()).unwrap();
        assert!(out.scores[0].index >= out.scores[1].index);
        assert!(out.scores.iter().all(|s| (0.0..=1.0).contains(&s.index)));
    }

    #[test]
    fn weight_errors() {
        let tracts = vec![tract("a", 0.1), tract("b", 0.3)];
        let neg = EquityWeights {
            poverty: -1.0,
            ..Default::default()
        };
        assert_eq!(
            compute_equity_index(&tracts, &neg).unwrap_err(),
            EquityError::NegativeWeight("poverty")
        );
        let zero = EquityWeights {
            educational_attainment: 0.0,
            poverty: 0.0,
            renter: 0.0,
            sub_two_car: 0.0,
            charger_access: 0.0,
            ev_cost: 0.0,
            incentive: 0.0,
            internal_share: 0.5,
        };
        assert_eq!(compute_equity_index(&tracts, &zero).unwrap_err(), EquityError::ZeroWeights);
        assert_eq!(
            compute_equity_index(&[], &EquityWeights::default()).unwrap_err(),
            EquityError::EmptyTractSet
        );
    }

    #[test]
    fn single_group_weights() {
        let tracts = vec![tract("a", 0.1), tract("b", 0.3)];
        let internal_only = EquityWeights {
            charger_access: 0.0,
            ev_cost: 0.0,
            incentive: 0.0,
            ..Default::default()
        };
        let out = compute_equity_index(&tracts, &internal_only).unwrap();
        for s in &out.scores {
            assert_eq!(s.index, s.internal);
        }
    }

    #[test]
    fn amortization_example() {
        // Spreadsheet-style PMT(0.07/12, 60, -48000) = 950.46
        let terms = LoanTerms::default();
        let monthly = terms.monthly_payment(48_000.0);
        assert!((monthly - 950.4578).abs() < 1e-3, "{monthly}");
        let annual = terms.annual_payment(48_000.0, 0.0);
        assert!((annual - 11_405.49).abs() < 0.01, "{annual}");

        let mut t = tract("a", 0.1);
        t.median_income = 50_000.0;
        let out = affordability_gap(&[t], 48_000.0, &terms, 0.0).unwrap();
        assert_eq!(out.affords, vec![("a".to_string(), false)]);
        assert_eq!(out.fraction_affording, 0.0);
    }

    #[test]
    fn zero_principal_everyone_affords() {
        let tracts = vec![tract("a", 0.1), tract("b", 0.2)];
        let out = affordability_gap(&tracts, 4_000.0, &LoanTerms::default(), 4_000.0).unwrap();
        assert_eq!(out.fraction_affording, 1.0);
        assert_eq!(out.annual_payment, 0.0);
    }

    #[test]
    fn zero_apr_is_straight_line() {
        let terms = LoanTerms {
            apr: 0.0,
            ..Default::default()
        };
        assert_eq!(terms.monthly_payment(6_000.0), 100.0);
    }

    #[test]
    fn invalid_terms_and_prices() {
        let tracts = vec![tract("a", 0.1)];
        let bad = LoanTerms {
            term_months: 0,
            ..Default::default()
        };
        assert!(matches!(
            affordability_gap(&tracts, 30_000.0, &bad, 0.0).unwrap_err(),
            EquityError::InvalidTerms(_)
        ));
        let bad = LoanTerms {
            down_payment_fraction: 1.0,
            ..Default::default()
        };
        assert!(affordability_gap(&tracts, 30_000.0, &bad, 0.0).is_err());
        assert!(matches!(
            affordability_gap(&tracts, 3_000.0, &LoanTerms::default(), 4_000.0).unwrap_err(),
            EquityError::InvalidPrice(_)
        ));
    }

    #[test]
    fn charger_ratio_examples() {
        assert_eq!(charger_ratio(22_000.0, 1_000.0).unwrap().per_charger, 22.0);
        assert_eq!(charger_ratio(25_800.0, 1_000.0).unwrap().per_charger, 25.8);
        assert_eq!(charger_ratio(500.0, 500.0).unwrap().per_charger, 1.0);
        assert_eq!(charger_ratio(25_800.0, 1_000.0).unwrap().label(), "1:25.8");
        assert_eq!(charger_ratio(1.0, 0.0).unwrap_err(), EquityError::ZeroChargers);
    }

    #[test]
    fn logistic_round_trip() {
        let truth = LogisticFit {
            saturation: 1.0,
            growth_rate: 0.3,
            midpoint: 2030.0,
            rmse: 0.0,
        };
        let anchors: Vec<(f64, f64)> = [2020.0, 2025.0, 2035.0].iter().map(|&t| (t, truth.at(t))).collect();
        let proj = project_adoption(&anchors, 2050).unwrap();
        assert!(!proj.degenerate_fit);
        let AdoptionModel::Logistic(fit) = proj.model else {
            panic!("expected logistic fit");
        };
        assert!((fit.growth_rate - 0.3).abs() < 1e-6);
        assert!((fit.midpoint - 2030.0).abs() < 1e-6);
        assert!((fit.saturation - 1.0).abs() < 1e-6);
        for (t, s) in &anchors {
            assert!((fit.at(*t) - s).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_anchors_fall_back_to_flat() {
        let proj = project_adoption(&[(2024.0, 0.2), (2025.0, 0.2)], 2030).unwrap();
        assert!(proj.degenerate_fit);
        for (_, v) in proj.trajectory.anchors() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn adoption_errors() {
        assert_eq!(
            project_adoption(&[(2024.0, 0.1)], 2030).unwrap_err(),
            EquityError::InsufficientAnchors(1)
        );
        assert_eq!(
            project_adoption(&[(2024.0, 0.1), (2025.0, 1.2)], 2030).unwrap_err(),
            EquityError::ShareOutOfRange(1.2)
        );
    }

    #[test]
    fn regional_anchors_increase() {
        let proj = project_adoption(&[(2024.25, 0.1453), (2024.875, 0.16)], 2035).unwrap();
        assert!(!proj.degenerate_fit);
        let values: Vec<f64> = proj.trajectory.anchors().iter().map(|a| a.1).collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
        assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn tracts_csv_columns() {
        let text = "tract_id,median_income,edu,poverty,renter,sub_two_car,charger_access,ev_cost,incentive\nT1,55000,0.3,0.1,0.5,0.4,1.2,48000,0\n";
        let tracts = read_tracts_csv(text.as_bytes()).unwrap();
        assert_eq!(tracts[0].tract_id, "T1");
        assert_eq!(tracts[0].sub_two_car_rate, 0.4);
        let bad = "tract_id,median_income,edu,poverty,renter,sub_two_car,charger_access,ev_cost,incentive\nT1,55000,1.3,0.1,0.5,0.4,1.2,48000,0\n";
        assert!(matches!(read_tracts_csv(bad.as_bytes()).unwrap_err(), EquityError::InvalidTract { .. }));
    }
}
