//! Business-as-usual and policy-scenario projections, milestone checks and
//! renewable offset sizing.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inventory::{EmissionInventory, VehicleClass};

/// Milestones pass when achieved ≥ required − this tolerance.
pub const MILESTONE_TOLERANCE: f64 = 0.002;

pub const ACRES_PER_SQUARE_MILE: f64 = 640.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("population must be positive, got {0}")]
    NonPositivePopulation(f64),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("milestone year {0} is outside the projected series")]
    MilestoneOutsideSeries(i32),
    #[error("offset plan parameter {0} must be positive")]
    NonPositivePlanParameter(&'static str),
    #[error("residual emissions must be finite and non-negative, got {0}")]
    NegativeResidual(f64),
    #[error("invalid goal set: {0}")]
    InvalidGoals(String),
}

/// Piecewise-linear time series through anchor points, flat beyond the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Trajectory {
    anchors: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn new(anchors: Vec<(f64, f64)>) -> Result<Self, ScenarioError> {
        if anchors.is_empty() {
            return Err(ScenarioError::InvalidTrajectory(
                "at least one anchor is required".into(),
            ));
        }
        if anchors.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(ScenarioError::InvalidTrajectory(
                "anchors must be finite".into(),
            ));
        }
        if anchors.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ScenarioError::InvalidTrajectory(
                "anchor years must be strictly increasing".into(),
            ));
        }
        Ok(Self { anchors })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            anchors: vec![(0.0, value)],
        }
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    pub fn at(&self, year: f64) -> f64 {
        let first = self.anchors[0];
        let last = self.anchors[self.anchors.len() - 1];
        if year <= first.0 {
            return first.1;
        }
        if year >= last.0 {
            return last.1;
        }
        // first index whose year is > `year`; guaranteed in 1..len
        let hi = self.anchors.partition_point(|(t, _)| *t <= year);
        let (t0, v0) = self.anchors[hi - 1];
        let (t1, v1) = self.anchors[hi];
        if year == t0 {
            return v0;
        }
        v0 + (v1 - v0) * (year - t0) / (t1 - t0)
    }

    pub fn min_value(&self) -> f64 {
        self.anchors.iter().map(|a| a.1).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.anchors
            .iter()
            .map(|a| a.1)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TryFrom<Vec<(f64, f64)>> for Trajectory {
    type Error = ScenarioError;

    fn try_from(anchors: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Trajectory::new(anchors)
    }
}

impl From<Trajectory> for Vec<(f64, f64)> {
    fn from(t: Trajectory) -> Self {
        t.anchors
    }
}

fn default_horizon() -> i32 {
    2050
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub population: Trajectory,
    pub vmt_per_capita_multiplier: Trajectory,
    /// Emission-rate multipliers; classes not listed stay at 1.
    #[serde(default)]
    pub efficiency_multiplier: BTreeMap<VehicleClass, Trajectory>,
    pub ev_fleet_share: Trajectory,
    #[serde(default = "default_horizon")]
    pub horizon: i32,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.population.min_value() <= 0.0 {
            return Err(ScenarioError::InvalidTrajectory(
                "population must be positive".into(),
            ));
        }
        if self.vmt_per_capita_multiplier.min_value() < 0.0 {
            return Err(ScenarioError::InvalidTrajectory(
                "vmt multiplier must be non-negative".into(),
            ));
        }
        if let Some((class, _)) = self
            .efficiency_multiplier
            .iter()
            .find(|(_, t)| t.min_value() < 0.0)
        {
            return Err(ScenarioError::InvalidTrajectory(format!(
                "efficiency multiplier for {class} must be non-negative"
            )));
        }
        if self.ev_fleet_share.min_value() < 0.0 || self.ev_fleet_share.max_value() > 1.0 {
            return Err(ScenarioError::InvalidTrajectory(
                "ev fleet share must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn efficiency_at(&self, class: VehicleClass, year: f64) -> f64 {
        self.efficiency_multiplier
            .get(&class)
            .map(|t| t.at(year))
            .unwrap_or(1.0)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec = serde_json::from_str(text)
            .map_err(|e| ScenarioError::InvalidTrajectory(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub year: i32,
    pub emissions_mtco2e: f64,
    pub vmt: f64,
    pub population: f64,
    pub vmt_per_capita: f64,
    pub ev_fleet_share: f64,
    /// 1 − emissions / baseline; negative under growth.
    pub reduction: f64,
    /// 1 − per-capita VMT / baseline per-capita VMT.
    pub vmt_per_capita_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionSeries {
    pub name: String,
    pub baseline_year: i32,
    pub baseline_mtco2e: f64,
    pub points: Vec<SeriesPoint>,
}

impl EmissionSeries {
    pub fn point(&self, year: i32) -> Option<&SeriesPoint> {
        let first = self.points.first()?.year;
        let idx = usize::try_from(year.checked_sub(first)?).ok()?;
        self.points.get(idx)
    }

    pub fn first_year(&self) -> Option<i32> {
        self.points.first().map(|p| p.year)
    }

    pub fn last_year(&self) -> Option<i32> {
        self.points.last().map(|p| p.year)
    }
}

fn check_base_population(base_population: f64) -> Result<(), ScenarioError> {
    if base_population.is_finite() && base_population > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::NonPositivePopulation(base_population))
    }
}

/// Business-as-usual: emissions and VMT scale with population, rates frozen.
pub fn project_bau(
    baseline: &EmissionInventory,
    population: &Trajectory,
    base_population: f64,
    horizon: i32,
) -> Result<EmissionSeries, ScenarioError> {
    check_base_population(base_population)?;
    if population.min_value() <= 0.0 {
        return Err(ScenarioError::NonPositivePopulation(population.min_value()));
    }
    let base_total = baseline.on_road_total();
    let base_vmt = baseline.total_vmt();
    let base_vpc = base_vmt / base_population;
    let ev = baseline.light_duty_electric_share();
    let points = (baseline.baseline_year()..=horizon)
        .map(|year| {
            let pop = population.at(year as f64);
            let growth = pop / base_population;
            let emissions = base_total * growth;
            let vmt = base_vmt * growth;
            let vpc = vmt / pop;
            SeriesPoint {
                year,
                emissions_mtco2e: emissions,
                vmt,
                population: pop,
                vmt_per_capita: vpc,
                ev_fleet_share: ev,
                reduction: reduction(emissions, base_total),
                vmt_per_capita_reduction: reduction(vpc, base_vpc),
            }
        })
        .collect();
    Ok(EmissionSeries {
        name: "bau".into(),
        baseline_year: baseline.baseline_year(),
        baseline_mtco2e: base_total,
        points,
    })
}

fn reduction(value: f64, base: f64) -> f64 {
    if base > 0.0 {
        1.0 - value / base
    } else {
        0.0
    }
}

/// Project a policy scenario.
///
/// Per class, emissions scale with VMT growth (population × per-capita
/// multiplier) and the class efficiency multiplier. For light-duty classes the
/// combustion share of VMT is `1 − ev_fleet_share`, relative to the baseline
/// electric share of that class.
pub fn apply_scenario(
    baseline: &EmissionInventory,
    spec: &ScenarioSpec,
    base_population: f64,
) -> Result<EmissionSeries, ScenarioError> {
    check_base_population(base_population)?;
    spec.validate()?;
    let base_total = baseline.on_road_total();
    let base_vmt = baseline.total_vmt();
    let base_vpc = base_vmt / base_population;

    // emissions per unit of (growth × efficiency × combustion share)
    let class_terms: Vec<(VehicleClass, f64, bool)> = VehicleClass::ALL
        .iter()
        .filter_map(|&class| {
            let total = baseline.class_total(class);
            if total <= 0.0 && baseline.class_vmt(class) <= 0.0 {
                return None;
            }
            if class.is_light_duty() {
                let combustion = 1.0 - baseline.electric_share(class);
                let per_share = if combustion > 0.0 { total / combustion } else { 0.0 };
                Some((class, per_share, true))
            } else {
                Some((class, total, false))
            }
        })
        .collect();

    let points = (baseline.baseline_year()..=spec.horizon)
        .map(|year| {
            let t = year as f64;
            let pop = spec.population.at(t);
            let growth = pop / base_population * spec.vmt_per_capita_multiplier.at(t);
            let ev = spec.ev_fleet_share.at(t);
            let emissions: f64 = class_terms
                .iter()
                .map(|&(class, base, light_duty)| {
                    let combustion = if light_duty { 1.0 - ev } else { 1.0 };
                    base * growth * spec.efficiency_at(class, t) * combustion
                })
                .sum();
            let vmt = base_vmt * growth;
            let vpc = vmt / pop;
            SeriesPoint {
                year,
                emissions_mtco2e: emissions,
                vmt,
                population: pop,
                vmt_per_capita: vpc,
                ev_fleet_share: ev,
                reduction: reduction(emissions, base_total),
                vmt_per_capita_reduction: reduction(vpc, base_vpc),
            }
        })
        .collect();

    Ok(EmissionSeries {
        name: spec.name.clone(),
        baseline_year: baseline.baseline_year(),
        baseline_mtco2e: base_total,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilestoneKind {
    Reduction,
    ZevShare,
    VmtPerCapitaReduction,
}

/// Milestone targets keyed by year, as fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GoalSet {
    #[serde(default)]
    pub reduction: BTreeMap<i32, f64>,
    #[serde(default)]
    pub zev_share: BTreeMap<i32, f64>,
    #[serde(default)]
    pub vmt_per_capita_reduction: BTreeMap<i32, f64>,
}

impl GoalSet {
    /// 33/58/70% below baseline at 2030/2040/2050, 30% ZEV share by 2035 and a
    /// 20% per-capita VMT cut by 2050.
    pub fn default_milestones() -> Self {
        GoalSet {
            reduction: BTreeMap::from([(2030, 0.33), (2040, 0.58), (2050, 0.70)]),
            zev_share: BTreeMap::from([(2035, 0.30)]),
            vmt_per_capita_reduction: BTreeMap::from([(2050, 0.20)]),
        }
    }

    pub fn reduction_only(&self) -> Self {
        GoalSet {
            reduction: self.reduction.clone(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (kind, map) in self.groups() {
            if let Some((year, v)) = map.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(ScenarioError::InvalidGoals(format!(
                    "{kind:?} milestone {year} = {v} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    fn groups(&self) -> [(MilestoneKind, &BTreeMap<i32, f64>); 3] {
        [
            (MilestoneKind::Reduction, &self.reduction),
            (MilestoneKind::ZevShare, &self.zev_share),
            (MilestoneKind::VmtPerCapitaReduction, &self.vmt_per_capita_reduction),
        ]
    }

    /// Interpolated reduction target between milestones (flat outside).
    pub fn reduction_target_at(&self, year: f64) -> Option<f64> {
        let anchors: Vec<(f64, f64)> = self.reduction.iter().map(|(y, v)| (*y as f64, *v)).collect();
        Trajectory::new(anchors).ok().map(|t| t.at(year))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilestoneCheck {
    pub kind: MilestoneKind,
    pub milestone_year: i32,
    pub required: f64,
    pub achieved: f64,
    pub pass: bool,
    /// achieved − required
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub series: String,
    pub checks: Vec<MilestoneCheck>,
    pub all_pass: bool,
}

impl ComplianceReport {
    pub fn check(&self, kind: MilestoneKind, year: i32) -> Option<&MilestoneCheck> {
        self.checks
            .iter()
            .find(|c| c.kind == kind && c.milestone_year == year)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["kind", "milestone_year", "required", "achieved", "pass"])?;
        for c in &self.checks {
            let kind = serde_json::to_value(c.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            wtr.write_record([
                kind,
                c.milestone_year.to_string(),
                format!("{:.4}", c.required),
                format!("{:.4}", c.achieved),
                c.pass.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn check_goals(
    series: &EmissionSeries,
    goals: &GoalSet,
) -> Result<ComplianceReport, ScenarioError> {
    goals.validate()?;
    let mut checks = Vec::new();
    for (kind, milestones) in goals.groups() {
        for (&year, &required) in milestones {
            let point = series
                .point(year)
                .ok_or(ScenarioError::MilestoneOutsideSeries(year))?;
            let achieved = match kind {
                MilestoneKind::Reduction => point.reduction,
                MilestoneKind::ZevShare => point.ev_fleet_share,
                MilestoneKind::VmtPerCapitaReduction => point.vmt_per_capita_reduction,
            };
            checks.push(MilestoneCheck {
                kind,
                milestone_year: year,
                required,
                achieved,
                pass: achieved >= required - MILESTONE_TOLERANCE,
                gap: achieved - required,
            });
        }
    }
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(ComplianceReport {
        series: series.name.clone(),
        checks,
        all_pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetPlan {
    /// MTCO2e avoided per gWh of renewable generation.
    pub grid_intensity_mt_per_gwh: f64,
    /// Annual gWh generated per acre of solar.
    pub solar_yield_gwh_per_acre: f64,
}

impl OffsetPlan {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.grid_intensity_mt_per_gwh.is_finite() && self.grid_intensity_mt_per_gwh > 0.0) {
            return Err(ScenarioError::NonPositivePlanParameter("grid_intensity_mt_per_gwh"));
        }
        if !(self.solar_yield_gwh_per_acre.is_finite() && self.solar_yield_gwh_per_acre > 0.0) {
            return Err(ScenarioError::NonPositivePlanParameter("solar_yield_gwh_per_acre"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetSizing {
    pub gwh_per_year: f64,
    pub acres: f64,
    pub square_miles: f64,
}

pub fn size_offsets(residual_mtco2e: f64, plan: &OffsetPlan) -> Result<OffsetSizing, ScenarioError> {
    plan.validate()?;
    if !residual_mtco2e.is_finite() || residual_mtco2e < 0.0 {
        return Err(ScenarioError::NegativeResidual(residual_mtco2e));
    }
    let gwh_per_year = residual_mtco2e / plan.grid_intensity_mt_per_gwh;
    let acres = gwh_per_year / plan.solar_yield_gwh_per_acre;
    Ok(OffsetSizing {
        gwh_per_year,
        acres,
        square_miles: acres / ACRES_PER_SQUARE_MILE,
    })
}
