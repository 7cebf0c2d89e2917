use std::collections::BTreeMap;

use decarb_mobsim::hub::{allocate_arrivals, HubArrival, HubState};
use decarb_mobsim::{AccessMode, HubService, IntermodalMatrix, Pairing};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The published pairing table as printed, columns in access-mode order.
const FIGURE: &str = "\
Inter-City Bus	Orange	Orange	Blue	Blue	Blue	Blue	Blue	Blue	Blue
METRO X-press	Orange	Orange	Blue	Blue	Blue	Blue	Blue	Blue	Blue
METRO Local	Blue	Orange	Orange	Blue	Blue	Blue	Blue	Blue	Blue
Passenger Drop-Off	Blue	Blue	Blue	Orange	Orange	Orange	Blue	Blue	Blue
Rideshare Services	Blue	Blue	Blue	Orange	Orange	Orange	Blue	Blue	Blue
Park n Ride	Blue	Blue	Blue	Orange	Orange	Blue	Blue	Blue	Blue
Rideshare (short term)	Blue	Blue	Blue	Blue	Blue	Orange	Blue	Blue	Blue
Private Bike	Blue	Blue	Blue	Blue	Blue	Blue	Orange	Blue	Blue
Rental Bike/Scooter	Blue	Blue	Blue	Blue	Blue	Blue	Blue	Orange	Blue
On-site Pedestrian	Blue	Blue	Blue	Blue	Blue	Blue	Blue	Blue	Orange
Off-site Pedestrian	Blue	Blue	Blue	Blue	Blue	Blue	Blue	Blue	Orange";

#[test]
fn standard_matrix_matches_published_table() {
    let matrix = IntermodalMatrix::standard();
    let rows: Vec<&str> = FIGURE.lines().collect();
    assert_eq!(rows.len(), HubService::ALL.len());
    let mut orange = 0;
    for (line, service) in rows.iter().zip(HubService::ALL) {
        let cells: Vec<&str> = line.split('\t').skip(1).collect();
        assert_eq!(cells.len(), AccessMode::ALL.len());
        for (cell, mode) in cells.iter().zip(AccessMode::ALL) {
            let expected = match *cell {
                "Orange" => Pairing::Primary,
                "Blue" => Pairing::Supporting,
                other => panic!("unexpected cell {other}"),
            };
            orange += usize::from(expected == Pairing::Primary);
            assert_eq!(matrix.pairing(mode, service).unwrap(), expected, "{service} / {mode:?}");
        }
    }
    assert_eq!(orange, 19);
    assert_eq!(matrix.entries().count(), 99);
}

#[test]
fn ev_auto_at_park_and_ride_parks_and_charges() {
    let matrix = IntermodalMatrix::standard();
    let mut hub = HubState::new(10, 2);
    let out = decarb_mobsim::hub_transfer(
        &mut hub,
        &HubArrival {
            trip_id: 1,
            access: AccessMode::EvAutoOwnership,
            arrival_min: 480.0,
            charge_minutes: Some(90.0),
            boarding: None,
        },
        &matrix,
    )
    .unwrap();
    assert_eq!(out.pairing, Pairing::Primary);
    assert!(out.parked && out.charging);
}

/// Sorting oracle: admitted set is the first `spaces` arrivals under
/// (primary first, arrival time, trip id).
#[test]
fn simultaneous_arrivals_respect_priority() {
    let matrix = IntermodalMatrix::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut arrivals: Vec<HubArrival> = (0..100u64)
            .map(|id| HubArrival {
                trip_id: id,
                access: *AccessMode::ALL.choose(&mut rng).unwrap(),
                arrival_min: 420.0 + rng.random_range(0..60) as f64 / 60.0,
                charge_minutes: None,
                boarding: None,
            })
            .collect();
        arrivals.shuffle(&mut rng);
        let mut hub = HubState::new(40, 0);
        let outcomes = allocate_arrivals(&mut hub, arrivals.clone(), &matrix).unwrap();

        let mut oracle: Vec<(u8, f64, u64)> = arrivals
            .iter()
            .map(|a| {
                let primary = matches!(a.access, AccessMode::EvAutoOwnership | AccessMode::EvCarShare);
                (u8::from(!primary), a.arrival_min, a.trip_id)
            })
            .collect();
        oracle.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let expected: Vec<u64> = oracle[..40].iter().map(|o| o.2).collect();
        let mut parked: Vec<u64> = outcomes.iter().filter(|(_, o)| o.parked).map(|(a, _)| a.trip_id).collect();
        assert_eq!(parked.len(), 40);
        assert_eq!(hub.occupied, 40);
        assert_eq!(parked, expected, "admission order");
        parked.sort_unstable();
        let turned_away = outcomes.iter().filter(|(_, o)| !o.parked).count();
        assert_eq!(turned_away, 60);
    }
}

#[test]
fn custom_matrix_without_entry_is_rejected() {
    let mut row = BTreeMap::new();
    row.insert(AccessMode::EvBus, Pairing::Primary);
    let matrix = IntermodalMatrix::from_entries(BTreeMap::from([(HubService::ParkNRide, row)]));
    let mut hub = HubState::new(1, 0);
    let err = allocate_arrivals(
        &mut hub,
        vec![HubArrival {
            trip_id: 0,
            access: AccessMode::EScooter,
            arrival_min: 0.0,
            charge_minutes: None,
            boarding: None,
        }],
        &matrix,
    );
    assert!(err.is_err());
}
