//! Baseline on-road emissions inventory.
//!
//! Activity (vehicle-miles) is joined against per-class/fuel emission factors
//! (grams CO2e per vehicle-mile) and accumulated into a ledger keyed by
//! vehicle class, fuel, zone and hour of day. Output quantities are metric
//! tons of CO2e.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Grams to metric tons.
pub const GRAMS_TO_TONNES: f64 = 1e-6;

pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VehicleClass {
    PassengerCar,
    LightTruck,
    ShortHaulTruck,
    LongHaulTruck,
    FleetVehicle,
    MotorcycleRV,
    TransitBus,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 7] = [
        VehicleClass::PassengerCar,
        VehicleClass::LightTruck,
        VehicleClass::ShortHaulTruck,
        VehicleClass::LongHaulTruck,
        VehicleClass::FleetVehicle,
        VehicleClass::MotorcycleRV,
        VehicleClass::TransitBus,
    ];

    /// Classes whose VMT can be displaced by electric vehicles in scenario
    /// projections.
    pub fn is_light_duty(self) -> bool {
        matches!(
            self,
            VehicleClass::PassengerCar | VehicleClass::LightTruck | VehicleClass::FleetVehicle
        )
    }

    pub fn group(self) -> ClassGroup {
        match self {
            VehicleClass::PassengerCar | VehicleClass::LightTruck | VehicleClass::MotorcycleRV => {
                ClassGroup::Personal
            }
            VehicleClass::ShortHaulTruck => ClassGroup::ShortHaulCommercial,
            VehicleClass::LongHaulTruck => ClassGroup::LongHaul,
            VehicleClass::FleetVehicle | VehicleClass::TransitBus => ClassGroup::Fleet,
        }
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Reporting groups used for the fleet-share breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassGroup {
    Personal,
    ShortHaulCommercial,
    LongHaul,
    Fleet,
}

impl ClassGroup {
    pub const ALL: [ClassGroup; 4] = [
        ClassGroup::Personal,
        ClassGroup::ShortHaulCommercial,
        ClassGroup::LongHaul,
        ClassGroup::Fleet,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FuelType {
    Gasoline,
    Diesel,
    Electric,
}

impl fmt::Display for FuelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionFactor {
    pub class: VehicleClass,
    pub fuel: FuelType,
    pub year: i32,
    pub g_per_mile: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm25_proxy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub class: VehicleClass,
    pub fuel: FuelType,
    pub zone: String,
    pub hour: u8,
    pub vmt: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InventoryError {
    #[error("no emission factor for {class}/{fuel} in {year}")]
    MissingFactor {
        class: VehicleClass,
        fuel: FuelType,
        year: i32,
    },
    #[error("negative or non-finite vmt {vmt} for {class}/{fuel} in zone {zone}")]
    NegativeVmt {
        class: VehicleClass,
        fuel: FuelType,
        zone: String,
        vmt: f64,
    },
    #[error("hour {0} is outside 0..24")]
    InvalidHour(u8),
    #[error("zone {0} is not in the zone registry")]
    UnknownZone(String),
    #[error("duplicate emission factor for {class}/{fuel} in {year}")]
    DuplicateFactor {
        class: VehicleClass,
        fuel: FuelType,
        year: i32,
    },
    #[error("invalid emission factor for {class}/{fuel} in {year}: {reason}")]
    InvalidFactor {
        class: VehicleClass,
        fuel: FuelType,
        year: i32,
        reason: &'static str,
    },
    #[error("sector totals are empty or sum to zero")]
    EmptyOrZeroTotal,
    #[error("sector {0} has a negative or non-finite value")]
    NegativeSector(String),
    #[error("inventory has no on-road emissions")]
    EmptyInventory,
    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for InventoryError {
    fn from(err: csv::Error) -> Self {
        InventoryError::Csv(err.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub class: VehicleClass,
    pub fuel: FuelType,
    pub zone: String,
    pub hour: u8,
}

/// Immutable emissions ledger produced by [`build_baseline`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionInventory {
    baseline_year: i32,
    cells: BTreeMap<CellKey, f64>,
    vmt: BTreeMap<(VehicleClass, FuelType), f64>,
    class_totals: BTreeMap<VehicleClass, f64>,
    on_road_total: f64,
    off_road_remainder: f64,
}

impl EmissionInventory {
    pub fn baseline_year(&self) -> i32 {
        self.baseline_year
    }

    pub fn cells(&self) -> &BTreeMap<CellKey, f64> {
        &self.cells
    }

    pub fn on_road_total(&self) -> f64 {
        self.on_road_total
    }

    pub fn class_totals(&self) -> &BTreeMap<VehicleClass, f64> {
        &self.class_totals
    }

    pub fn class_total(&self, class: VehicleClass) -> f64 {
        self.class_totals.get(&class).copied().unwrap_or(0.0)
    }

    /// Vehicle-miles by class and fuel.
    pub fn vmt_by_class_fuel(&self) -> &BTreeMap<(VehicleClass, FuelType), f64> {
        &self.vmt
    }

    pub fn class_vmt(&self, class: VehicleClass) -> f64 {
        self.vmt
            .iter()
            .filter(|((c, _), _)| *c == class)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn total_vmt(&self) -> f64 {
        self.vmt.values().sum()
    }

    /// Fraction of a class's VMT driven on electricity.
    pub fn electric_share(&self, class: VehicleClass) -> f64 {
        let total = self.class_vmt(class);
        if total <= 0.0 {
            return 0.0;
        }
        self.vmt
            .get(&(class, FuelType::Electric))
            .copied()
            .unwrap_or(0.0)
            / total
    }

    /// Electric fraction of light-duty VMT.
    pub fn light_duty_electric_share(&self) -> f64 {
        let mut electric = 0.0;
        let mut total = 0.0;
        for ((class, fuel), vmt) in &self.vmt {
            if class.is_light_duty() {
                total += vmt;
                if *fuel == FuelType::Electric {
                    electric += vmt;
                }
            }
        }
        if total > 0.0 {
            electric / total
        } else {
            0.0
        }
    }

    /// Off-road and rail emissions carried as an opaque constant.
    pub fn off_road_remainder(&self) -> f64 {
        self.off_road_remainder
    }

    pub fn with_off_road_remainder(mut self, remainder: f64) -> Self {
        self.off_road_remainder = remainder.max(0.0);
        self
    }

    /// Transportation sector total: on-road plus off-road remainder.
    pub fn transportation_total(&self) -> f64 {
        self.on_road_total + self.off_road_remainder
    }

    pub fn zones(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|k| k.zone.as_str()).collect()
    }

    /// Totals by sector: on-road and the off-road remainder.
    pub fn sector_totals(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("on_road".to_string(), self.on_road_total),
            ("off_road".to_string(), self.off_road_remainder),
        ])
    }
}

fn factor_index(
    factors: &[EmissionFactor],
) -> Result<BTreeMap<(VehicleClass, FuelType, i32), f64>, InventoryError> {
    let mut index = BTreeMap::new();
    for f in factors {
        if !f.g_per_mile.is_finite() || f.g_per_mile < 0.0 {
            return Err(InventoryError::InvalidFactor {
                class: f.class,
                fuel: f.fuel,
                year: f.year,
                reason: "rate must be finite and non-negative",
            });
        }
        if f.fuel == FuelType::Electric && f.g_per_mile != 0.0 {
            return Err(InventoryError::InvalidFactor {
                class: f.class,
                fuel: f.fuel,
                year: f.year,
                reason: "electric tailpipe rate must be zero",
            });
        }
        if index.insert((f.class, f.fuel, f.year), f.g_per_mile).is_some() {
            return Err(InventoryError::DuplicateFactor {
                class: f.class,
                fuel: f.fuel,
                year: f.year,
            });
        }
    }
    Ok(index)
}

/// Build an inventory from activity records and factor rows for `year`.
///
/// Each cell accumulates `vmt * g_per_mile * 1e-6` metric tons. A record whose
/// class/fuel has no factor for `year` is an error rather than a silent zero.
pub fn build_baseline(
    activity: &[ActivityRecord],
    factors: &[EmissionFactor],
    year: i32,
) -> Result<EmissionInventory, InventoryError> {
    let index = factor_index(factors)?;
    let mut cells: BTreeMap<CellKey, f64> = BTreeMap::new();
    let mut vmt: BTreeMap<(VehicleClass, FuelType), f64> = BTreeMap::new();

    for rec in activity {
        if !rec.vmt.is_finite() || rec.vmt < 0.0 {
            return Err(InventoryError::NegativeVmt {
                class: rec.class,
                fuel: rec.fuel,
                zone: rec.zone.clone(),
                vmt: rec.vmt,
            });
        }
        if rec.hour as usize >= HOURS_PER_DAY {
            return Err(InventoryError::InvalidHour(rec.hour));
        }
        let rate = *index
            .get(&(rec.class, rec.fuel, year))
            .ok_or(InventoryError::MissingFactor {
                class: rec.class,
                fuel: rec.fuel,
                year,
            })?;
        let key = CellKey {
            class: rec.class,
            fuel: rec.fuel,
            zone: rec.zone.clone(),
            hour: rec.hour,
        };
        *cells.entry(key).or_insert(0.0) += rec.vmt * rate * GRAMS_TO_TONNES;
        *vmt.entry((rec.class, rec.fuel)).or_insert(0.0) += rec.vmt;
    }

    let mut class_totals: BTreeMap<VehicleClass, f64> = BTreeMap::new();
    for (key, mt) in &cells {
        *class_totals.entry(key.class).or_insert(0.0) += mt;
    }
    let on_road_total = cells.values().sum();

    Ok(EmissionInventory {
        baseline_year: year,
        cells,
        vmt,
        class_totals,
        on_road_total,
        off_road_remainder: 0.0,
    })
}

/// Reject activity that references zones outside `registry`.
pub fn validate_zones<'a>(
    activity: &[ActivityRecord],
    registry: impl IntoIterator<Item = &'a str>,
) -> Result<(), InventoryError> {
    let registry: BTreeSet<&str> = registry.into_iter().collect();
    match activity.iter().find(|r| !registry.contains(r.zone.as_str())) {
        Some(rec) => Err(InventoryError::UnknownZone(rec.zone.clone())),
        None => Ok(()),
    }
}

/// Fraction of the community total attributable to each sector.
pub fn sector_shares(
    sectors: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, InventoryError> {
    if let Some((name, _)) = sectors.iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(InventoryError::NegativeSector(name.clone()));
    }
    let total: f64 = sectors.values().sum();
    if total <= 0.0 {
        return Err(InventoryError::EmptyOrZeroTotal);
    }
    Ok(sectors
        .iter()
        .map(|(name, v)| (name.clone(), v / total))
        .collect())
}

/// Zone × hour emissions grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionsGrid {
    pub zones: BTreeMap<String, [f64; HOURS_PER_DAY]>,
}

impl EmissionsGrid {
    pub fn zone_total(&self, zone: &str) -> f64 {
        self.zones.get(zone).map(|h| h.iter().sum()).unwrap_or(0.0)
    }

    pub fn hour_totals(&self) -> [f64; HOURS_PER_DAY] {
        let mut out = [0.0; HOURS_PER_DAY];
        for hours in self.zones.values() {
            for (acc, v) in out.iter_mut().zip(hours) {
                *acc += v;
            }
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.zones.values().flat_map(|h| h.iter()).sum()
    }

    /// GeoJSON FeatureCollection with one feature per zone.
    ///
    /// `geometries` maps zone id to a GeoJSON geometry object; zones without
    /// one are exported with a null geometry.
    pub fn to_geojson(&self, geometries: &BTreeMap<String, Value>) -> Value {
        let features: Vec<Value> = self
            .zones
            .iter()
            .map(|(zone, hours)| {
                let mut props = serde_json::Map::new();
                props.insert("zone_id".into(), json!(zone));
                for (h, v) in hours.iter().enumerate() {
                    props.insert(format!("hour_{h:02}"), json!(v));
                }
                props.insert("total_mtco2e".into(), json!(hours.iter().sum::<f64>()));
                json!({
                    "type": "Feature",
                    "id": zone,
                    "geometry": geometries.get(zone).cloned().unwrap_or(Value::Null),
                    "properties": Value::Object(props),
                })
            })
            .collect();
        json!({ "type": "FeatureCollection", "features": features })
    }
}

pub fn emissions_map(inventory: &EmissionInventory) -> EmissionsGrid {
    let mut zones: BTreeMap<String, [f64; HOURS_PER_DAY]> = BTreeMap::new();
    for (key, mt) in inventory.cells() {
        zones.entry(key.zone.clone()).or_insert([0.0; HOURS_PER_DAY])[key.hour as usize] += mt;
    }
    EmissionsGrid { zones }
}

/// Share of on-road emissions per reporting group.
///
/// Every group is present in the output, with zero for groups that have no
/// emissions.
pub fn class_share_report(
    inventory: &EmissionInventory,
) -> Result<BTreeMap<ClassGroup, f64>, InventoryError> {
    let total = inventory.on_road_total();
    if total <= 0.0 {
        return Err(InventoryError::EmptyInventory);
    }
    let mut out: BTreeMap<ClassGroup, f64> = ClassGroup::ALL.iter().map(|g| (*g, 0.0)).collect();
    for (class, mt) in inventory.class_totals() {
        *out.entry(class.group()).or_insert(0.0) += mt / total;
    }
    Ok(out)
}

pub fn read_activity_csv<R: io::Read>(reader: R) -> Result<Vec<ActivityRecord>, InventoryError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(InventoryError::from))
        .collect()
}

pub fn read_factors_csv<R: io::Read>(reader: R) -> Result<Vec<EmissionFactor>, InventoryError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(InventoryError::from))
        .collect()
}

pub fn write_activity_csv<W: io::Write>(
    writer: W,
    activity: &[ActivityRecord],
) -> Result<(), InventoryError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for rec in activity {
        wtr.serialize(rec)?;
    }
    wtr.flush().map_err(|e| InventoryError::Csv(e.to_string()))
}
