//! Collection-layer records and the acquisition stage that validates,
//! filters by consent and pseudonymizes them.

use std::collections::{BTreeMap, HashMap};

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    BusFleet,
    ChargerPort,
    RiderApp,
    ParkingSensor,
}

/// Consent is granted or denied per category, never per field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldCategory {
    Location,
    Occupancy,
    Energy,
    Media,
    Activity,
}

impl FieldCategory {
    pub const ALL: [FieldCategory; 5] = [
        FieldCategory::Location,
        FieldCategory::Occupancy,
        FieldCategory::Energy,
        FieldCategory::Media,
        FieldCategory::Activity,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub lat: f64,
    pub lon: f64,
}

/// Reported use of one charger port over `interval_min` minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortUsage {
    pub port_id: String,
    pub interval_min: u32,
    pub occupied_min: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiderEventKind {
    ChargeStart,
    TransitBoarding,
}

/// A rider action reported by the app, used for incentives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiderEvent {
    pub kind: RiderEventKind,
    pub user_id: String,
}

/// One message as it arrives from a device. Every field is optional so that
/// a missing field is a validation verdict rather than a parse error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub source: Option<Source>,
    pub device_id: Option<String>,
    /// Seconds since the epoch.
    pub timestamp: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hub_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gps: Option<GpsFix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<PortUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<RiderEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consent: Option<BTreeMap<FieldCategory, bool>>,
}

impl TelemetryRecord {
    /// Categories for which the record carries at least one field.
    pub fn carried(&self) -> Vec<FieldCategory> {
        let mut out = Vec::new();
        if self.gps.is_some() {
            out.push(FieldCategory::Location);
        }
        if self.occupancy.is_some() {
            out.push(FieldCategory::Occupancy);
        }
        if self.kwh.is_some() || self.port.is_some() {
            out.push(FieldCategory::Energy);
        }
        if self.image_ref.is_some() {
            out.push(FieldCategory::Media);
        }
        if self.event.is_some() {
            out.push(FieldCategory::Activity);
        }
        out
    }

    /// Consent for a category. Infrastructure devices without a consent map
    /// are treated as consenting to everything except media.
    pub fn consents_to(&self, category: FieldCategory) -> bool {
        match &self.consent {
            Some(map) => map.get(&category).copied().unwrap_or(false),
            None => category != FieldCategory::Media,
        }
    }
}

/// Payload that survived consent filtering. Location is kept only at zone
/// granularity; the precise fix stays in `operator_gps`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<PortUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<TokenEvent>,
}

/// A rider event with the user id replaced by its token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEvent {
    pub kind: RiderEventKind,
    pub user_token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    /// Categories removed because consent was denied.
    pub dropped: Vec<FieldCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedRecord {
    pub source: Source,
    pub device_token: String,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hub_id: Option<String>,
    pub payload: Payload,
    /// Sub-zone position, visible to Operators only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_gps: Option<GpsFix>,
    /// Consent as declared, needed downstream for incentives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consent: Option<BTreeMap<FieldCategory, bool>>,
    pub verdict: Verdict,
}

impl ValidatedRecord {
    /// The record with operator-only fields removed.
    pub fn redacted(&self) -> ValidatedRecord {
        ValidatedRecord {
            operator_gps: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
pub enum Rejection {
    #[error("missing field {0}")]
    MissingField(String),
    #[error("timestamp regressed for this source stream")]
    TimestampRegression,
    #[error("consent denied for every carried field category")]
    AllFieldsDenied,
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("storage full")]
    StorageFull,
}

impl Rejection {
    /// Stable short code written to the rejection log.
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::MissingField(_) => "MissingField",
            Rejection::TimestampRegression => "TimestampRegression",
            Rejection::AllFieldsDenied => "AllFieldsDenied",
            Rejection::InvalidValue(_) => "InvalidValue",
            Rejection::Malformed(_) => "Malformed",
            Rejection::StorageFull => "StorageFull",
        }
    }
}

/// HMAC-SHA256 of `id` under `key`, hex encoded.
pub fn token(key: &[u8], id: &str) -> String {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(id.as_bytes());
    hex::encode(mac.finalize().into_bytes())
}

/// Regular lat/lon grid used to coarsen fixes to zone ids `Z00`, `Z01`, ...
/// in row-major order from the south-west corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneGrid {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub rows: u32,
    pub cols: u32,
}

impl Default for ZoneGrid {
    /// The 5 × 5 demo world.
    fn default() -> Self {
        ZoneGrid {
            lat_min: 29.50,
            lat_max: 30.10,
            lon_min: -95.80,
            lon_max: -95.00,
            rows: 5,
            cols: 5,
        }
    }
}

impl ZoneGrid {
    pub fn snap(&self, fix: GpsFix) -> String {
        let inside = fix.lat >= self.lat_min && fix.lat <= self.lat_max && fix.lon >= self.lon_min && fix.lon <= self.lon_max;
        if !inside || self.rows == 0 || self.cols == 0 {
            return "OUTSIDE".to_string();
        }
        let r = (((fix.lat - self.lat_min) / (self.lat_max - self.lat_min)) * self.rows as f64) as u32;
        let c = (((fix.lon - self.lon_min) / (self.lon_max - self.lon_min)) * self.cols as f64) as u32;
        let (r, c) = (r.min(self.rows - 1), c.min(self.cols - 1));
        format!("Z{:02}", r * self.cols + c)
    }
}

/// Acquisition stage. Holds the tokenization key and the last accepted
/// timestamp per `(source, device)` stream.
#[derive(Debug, Clone)]
pub struct Acquirer {
    key: Vec<u8>,
    grid: ZoneGrid,
    last_seen: HashMap<(Source, String), i64>,
}

impl Acquirer {
    pub fn new(key: impl Into<Vec<u8>>, grid: ZoneGrid) -> Self {
        let key = key.into();
        assert!(!key.is_empty(), "tokenization key must be configured");
        Acquirer {
            key,
            grid,
            last_seen: HashMap::new(),
        }
    }

    pub fn token(&self, id: &str) -> String {
        token(&self.key, id)
    }

    pub fn acquire(&mut self, record: &TelemetryRecord) -> Result<ValidatedRecord, Rejection> {
        let missing = |f: &str| Rejection::MissingField(f.to_string());
        let source = record.source.ok_or_else(|| missing("source"))?;
        let device = record.device_id.as_deref().filter(|d| !d.is_empty()).ok_or_else(|| missing("device_id"))?;
        let timestamp = record.timestamp.ok_or_else(|| missing("timestamp"))?;
        match source {
            Source::RiderApp if record.consent.is_none() => return Err(missing("consent")),
            Source::ChargerPort | Source::ParkingSensor if record.hub_id.is_none() => return Err(missing("hub_id")),
            _ => {}
        }
        if let Some(p) = &record.port {
            if p.interval_min == 0 || p.occupied_min > p.interval_min {
                return Err(Rejection::InvalidValue(format!("port {} occupied {} of {} minutes", p.port_id, p.occupied_min, p.interval_min)));
            }
        }
        if let Some(k) = record.kwh {
            if !k.is_finite() || k < 0.0 {
                return Err(Rejection::InvalidValue("kwh".into()));
            }
        }
        let stream = (source, device.to_string());
        if let Some(last) = self.last_seen.get(&stream) {
            if timestamp < *last {
                return Err(Rejection::TimestampRegression);
            }
        }

        let carried = record.carried();
        let dropped: Vec<FieldCategory> = carried.iter().copied().filter(|c| !record.consents_to(*c)).collect();
        if carried.len() == dropped.len() {
            return Err(Rejection::AllFieldsDenied);
        }
        let keep = |c: FieldCategory| !dropped.contains(&c);

        let gps = record.gps.filter(|_| keep(FieldCategory::Location));
        let payload = Payload {
            zone_id: gps.map(|g| self.grid.snap(g)),
            occupancy: record.occupancy.filter(|_| keep(FieldCategory::Occupancy)),
            kwh: record.kwh.filter(|_| keep(FieldCategory::Energy)),
            port: record.port.clone().filter(|_| keep(FieldCategory::Energy)),
            image_ref: record.image_ref.clone().filter(|_| keep(FieldCategory::Media)),
            event: record.event.as_ref().filter(|_| keep(FieldCategory::Activity)).map(|e| TokenEvent {
                kind: e.kind,
                user_token: self.token(&e.user_id),
            }),
        };
        self.last_seen.insert(stream, timestamp);
        Ok(ValidatedRecord {
            source,
            device_token: self.token(device),
            timestamp,
            hub_id: record.hub_id.clone(),
            payload,
            operator_gps: gps,
            consent: record.consent.clone(),
            verdict: Verdict { accepted: true, dropped },
        })
    }
}
