//! Park-and-ride hubs: the intermodal pairing table, parking allocation with
//! pairing priority, and the per-hub charger queue.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charger::{ChargeRequest, ChargerQueue, QueueStats};

/// How a traveller reaches the hub (table columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccessMode {
    EvBrt,
    EvBus,
    EvShuttle,
    EvAutoOwnership,
    EvCarShare,
    EvRideshare,
    EBike,
    EScooter,
    Other,
}

impl AccessMode {
    pub const ALL: [AccessMode; 9] = [
        AccessMode::EvBrt,
        AccessMode::EvBus,
        AccessMode::EvShuttle,
        AccessMode::EvAutoOwnership,
        AccessMode::EvCarShare,
        AccessMode::EvRideshare,
        AccessMode::EBike,
        AccessMode::EScooter,
        AccessMode::Other,
    ];
}

/// Services a hub offers (table rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HubService {
    InterCityBus,
    MetroXpress,
    MetroLocal,
    PassengerDropOff,
    RideshareServices,
    ParkNRide,
    RideshareShortTerm,
    PrivateBike,
    RentalBikeScooter,
    OnSitePedestrian,
    OffSitePedestrian,
}

impl HubService {
    pub const ALL: [HubService; 11] = [
        HubService::InterCityBus,
        HubService::MetroXpress,
        HubService::MetroLocal,
        HubService::PassengerDropOff,
        HubService::RideshareServices,
        HubService::ParkNRide,
        HubService::RideshareShortTerm,
        HubService::PrivateBike,
        HubService::RentalBikeScooter,
        HubService::OnSitePedestrian,
        HubService::OffSitePedestrian,
    ];

    fn as_str(self) -> &'static str {
        match self {
            HubService::InterCityBus => "inter_city_bus",
            HubService::MetroXpress => "metro_xpress",
            HubService::MetroLocal => "metro_local",
            HubService::PassengerDropOff => "passenger_drop_off",
            HubService::RideshareServices => "rideshare_services",
            HubService::ParkNRide => "park_n_ride",
            HubService::RideshareShortTerm => "rideshare_short_term",
            HubService::PrivateBike => "private_bike",
            HubService::RentalBikeScooter => "rental_bike_scooter",
            HubService::OnSitePedestrian => "on_site_pedestrian",
            HubService::OffSitePedestrian => "off_site_pedestrian",
        }
    }
}

impl fmt::Display for HubService {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HubService {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HubService::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| format!("unknown hub service {s:?}"))
    }
}

/// Primary pairings are served before supporting ones within a tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pairing {
    Primary,
    Supporting,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HubError {
    #[error("no pairing for {mode:?} at {service}")]
    UnknownPairing { mode: AccessMode, service: HubService },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermodalMatrix {
    entries: BTreeMap<HubService, BTreeMap<AccessMode, Pairing>>,
}

impl IntermodalMatrix {
    /// The committed pairing table. Each row lists the access modes marked
    /// primary; every other access mode is supporting.
    pub fn standard() -> Self {
        use AccessMode::*;
        use HubService::*;
        let primary: [(HubService, &[AccessMode]); 11] = [
            (InterCityBus, &[EvBrt, EvBus]),
            (MetroXpress, &[EvBrt, EvBus]),
            (MetroLocal, &[EvBus, EvShuttle]),
            (PassengerDropOff, &[EvAutoOwnership, EvCarShare, EvRideshare]),
            (RideshareServices, &[EvAutoOwnership, EvCarShare, EvRideshare]),
            (ParkNRide, &[EvAutoOwnership, EvCarShare]),
            (RideshareShortTerm, &[EvRideshare]),
            (PrivateBike, &[EBike]),
            (RentalBikeScooter, &[EScooter]),
            (OnSitePedestrian, &[Other]),
            (OffSitePedestrian, &[Other]),
        ];
        let entries = primary
            .iter()
            .map(|(service, modes)| {
                let row = AccessMode::ALL
                    .iter()
                    .map(|m| {
                        let p = if modes.contains(m) {
                            Pairing::Primary
                        } else {
                            Pairing::Supporting
                        };
                        (*m, p)
                    })
                    .collect();
                (*service, row)
            })
            .collect();
        Self { entries }
    }

    pub fn from_entries(entries: BTreeMap<HubService, BTreeMap<AccessMode, Pairing>>) -> Self {
        Self { entries }
    }

    pub fn pairing(&self, mode: AccessMode, service: HubService) -> Result<Pairing, HubError> {
        self.entries
            .get(&service)
            .and_then(|row| row.get(&mode))
            .copied()
            .ok_or(HubError::UnknownPairing { mode, service })
    }

    pub fn entries(&self) -> impl Iterator<Item = (HubService, AccessMode, Pairing)> + '_ {
        self.entries
            .iter()
            .flat_map(|(s, row)| row.iter().map(move |(m, p)| (*s, *m, *p)))
    }
}

/// A vehicle reaching a hub's park-and-ride lot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubArrival {
    pub trip_id: u64,
    pub access: AccessMode,
    pub arrival_min: f64,
    /// Charging requested on arrival, with its pre-drawn duration.
    pub charge_minutes: Option<f64>,
    /// Route and wait the traveller will board if parked.
    pub boarding: Option<Boarding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boarding {
    pub route_id: String,
    pub wait_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub pairing: Pairing,
    pub parked: bool,
    pub charging: bool,
    pub boarded_route: Option<String>,
    pub wait_minutes: f64,
}

/// Mutable per-hub lot and charger state.
#[derive(Debug, Clone, PartialEq)]
pub struct HubState {
    pub capacity: u32,
    pub occupied: u32,
    pub peak_occupancy: u32,
    pub parked_in: u64,
    pub parked_out: u64,
    pub overflow_in: u64,
    pub transfers: u64,
    pub reroutes: u64,
    pub primary_arrivals: u64,
    pub supporting_arrivals: u64,
    pub chargers: ChargerQueue,
}

impl HubState {
    pub fn new(capacity: u32, ports: usize) -> Self {
        Self {
            capacity,
            occupied: 0,
            peak_occupancy: 0,
            parked_in: 0,
            parked_out: 0,
            overflow_in: 0,
            transfers: 0,
            reroutes: 0,
            primary_arrivals: 0,
            supporting_arrivals: 0,
            chargers: ChargerQueue::new(ports),
        }
    }

    pub fn free_spaces(&self) -> u32 {
        self.capacity - self.occupied
    }

    /// Vehicle leaves the lot.
    pub fn release(&mut self) {
        debug_assert!(self.occupied > 0);
        self.occupied -= 1;
        self.parked_out += 1;
    }

    pub fn charger_stats(&self) -> QueueStats {
        self.chargers.stats()
    }
}

/// Admit one arrival to the park-and-ride lot.
pub fn hub_transfer(
    hub: &mut HubState,
    arrival: &HubArrival,
    matrix: &IntermodalMatrix,
) -> Result<TransferOutcome, HubError> {
    let pairing = matrix.pairing(arrival.access, HubService::ParkNRide)?;
    match pairing {
        Pairing::Primary => hub.primary_arrivals += 1,
        Pairing::Supporting => hub.supporting_arrivals += 1,
    }
    if hub.occupied >= hub.capacity {
        return Ok(TransferOutcome {
            pairing,
            parked: false,
            charging: false,
            boarded_route: None,
            wait_minutes: 0.0,
        });
    }
    hub.occupied += 1;
    hub.parked_in += 1;
    hub.peak_occupancy = hub.peak_occupancy.max(hub.occupied);
    let charging = match arrival.charge_minutes {
        Some(minutes) if hub.chargers.ports() > 0 => {
            hub.chargers.arrive(ChargeRequest {
                id: arrival.trip_id,
                arrival_min: arrival.arrival_min,
                service_min: minutes,
            });
            true
        }
        _ => false,
    };
    if arrival.boarding.is_some() {
        hub.transfers += 1;
    }
    Ok(TransferOutcome {
        pairing,
        parked: true,
        charging,
        boarded_route: arrival.boarding.as_ref().map(|b| b.route_id.clone()),
        wait_minutes: arrival.boarding.as_ref().map_or(0.0, |b| b.wait_minutes),
    })
}

/// Admit a tick's simultaneous arrivals: primary pairings first, then by
/// arrival time, then trip id.
pub fn allocate_arrivals(
    hub: &mut HubState,
    mut arrivals: Vec<HubArrival>,
    matrix: &IntermodalMatrix,
) -> Result<Vec<(HubArrival, TransferOutcome)>, HubError> {
    let mut keyed = Vec::with_capacity(arrivals.len());
    for a in arrivals.drain(..) {
        let p = matrix.pairing(a.access, HubService::ParkNRide)?;
        keyed.push((p, a));
    }
    keyed.sort_by(|(pa, a), (pb, b)| {
        pa.cmp(pb)
            .then(a.arrival_min.total_cmp(&b.arrival_min))
            .then(a.trip_id.cmp(&b.trip_id))
    });
    keyed
        .into_iter()
        .map(|(_, a)| hub_transfer(hub, &a, matrix).map(|o| (a, o)))
        .collect()
}
