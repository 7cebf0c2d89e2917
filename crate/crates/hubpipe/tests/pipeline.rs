use std::collections::{BTreeMap, BTreeSet};
use std::io::Cursor;
use std::thread;

use decarb_hubpipe::synth::{device_id, random_records, user_id, SynthConfig};
use decarb_hubpipe::*;

fn config() -> PipelineConfig {
    PipelineConfig {
        key: "test-key".into(),
        ..PipelineConfig::default()
    }
}

fn ten_thousand() -> Vec<TelemetryRecord> {
    random_records(10_000, 42, &SynthConfig::default())
}

#[test]
fn every_input_is_stored_or_rejected() {
    let input = ten_thousand();
    let state = run(config(), input.iter().cloned().map(Ok));
    let c = state.counts;
    assert_eq!(c.input, 10_000);
    assert!(c.balanced(), "{c:?}");
    assert_eq!(c.stored as usize, state.log.len());
    assert_eq!(c.rejected as usize, state.rejections.len());
    let offsets: BTreeSet<u64> = state.rejections.iter().map(|r| r.offset).collect();
    assert_eq!(offsets.len(), state.rejections.len());

    // independent check of the field rule: anything lacking source, device
    // or timestamp must be among the rejections with that reason
    let reasons: BTreeMap<u64, &str> = state.rejections.iter().map(|r| (r.offset, r.reason.as_str())).collect();
    let mut missing = 0;
    for (i, r) in input.iter().enumerate() {
        if r.source.is_none() || r.device_id.is_none() || r.timestamp.is_none() {
            missing += 1;
            assert_eq!(reasons.get(&(i as u64)), Some(&"MissingField"), "input {i}");
        }
    }
    assert!(missing > 100, "generator planted {missing} missing fields");
    for reason in ["TimestampRegression", "AllFieldsDenied"] {
        assert!(state.rejections.iter().any(|r| r.reason == reason), "no {reason} rejections");
    }
}

#[test]
fn many_producers_reconcile() {
    let input = ten_thousand();
    let (collector, handle) = spawn(config());
    thread::scope(|s| {
        for chunk in input.chunks(2_500) {
            let c = collector.clone();
            s.spawn(move || {
                for r in chunk {
                    assert!(c.send(Ok(r.clone())));
                }
            });
        }
    });
    drop(collector);
    let state = handle.join().unwrap();
    assert_eq!(state.counts.input, 10_000);
    assert!(state.counts.balanced());
}

#[test]
fn storage_full_is_a_rejection() {
    let input = ten_thousand();
    let cfg = PipelineConfig {
        storage_capacity: 100,
        ..config()
    };
    let state = run(cfg, input.into_iter().map(Ok));
    assert_eq!(state.log.len(), 100);
    assert!(state.counts.balanced());
    assert!(state.rejections.iter().any(|r| r.reason == "StorageFull"));
}

#[test]
fn malformed_lines_are_rejected_not_lost() {
    let mut buf = Vec::new();
    write_ndjson(&mut buf, &random_records(20, 1, &SynthConfig::default())).unwrap();
    buf.extend_from_slice(b"{not json\n\n{\"source\": \"Teleporter\", \"device_id\": \"bus-0001\"}\n");
    let items = read_ndjson(Cursor::new(buf)).unwrap();
    assert_eq!(items.len(), 22);
    let state = run(config(), items);
    assert_eq!(state.counts.input, 22);
    assert!(state.counts.balanced());
    let tail: Vec<&str> = state.rejections.iter().rev().take(2).map(|r| r.reason.as_str()).collect();
    assert_eq!(tail, vec!["Malformed", "Malformed"]);
    let mut csv = Vec::new();
    state.write_rejections(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next(), Some("offset,reason"));
    assert!(csv.contains("20,Malformed") && csv.contains("21,Malformed"));
    assert!(!csv.contains("bus-0001"));
}

/// Serialized outputs reachable by a non-Operator principal.
fn non_operator_outputs(state: &PipelineState) -> Vec<(String, String)> {
    let mut auth = Authorizer::default();
    let mut outs = Vec::new();
    let analyst = state.view("Analyst", None, &mut auth).unwrap();
    outs.push(("analyst view".into(), serde_json::to_string(&analyst).unwrap()));
    let rider_token = token(b"test-key", &user_id(3));
    let rider = state.view("Rider", Some(&rider_token), &mut auth).unwrap();
    assert!(!rider.is_empty());
    outs.push(("rider view".into(), serde_json::to_string(&rider).unwrap()));
    let denied = state.view("Visitor", None, &mut auth).unwrap_err();
    assert_eq!(denied, Decision::Deny(DenyReason::UnknownPrincipal));
    outs.push(("aggregates".into(), serde_json::to_string(&state.windowed_aggregates(3_600)).unwrap()));
    outs.push(("ledger".into(), serde_json::to_string(state.ledger.log()).unwrap()));
    let mut csv = Vec::new();
    state.write_rejections(&mut csv).unwrap();
    outs.push(("rejections".into(), String::from_utf8(csv).unwrap()));
    let mut audit = Vec::new();
    auth.write_audit(&mut audit).unwrap();
    outs.push(("audit".into(), String::from_utf8(audit).unwrap()));
    outs
}

#[test]
fn no_raw_identifiers_or_fine_positions_leak() {
    let input = ten_thousand();
    let state = run(config(), input.iter().cloned().map(Ok));
    let cfg = SynthConfig::default();
    let mut tainted: BTreeSet<String> = BTreeSet::new();
    for s in [Source::BusFleet, Source::ChargerPort, Source::RiderApp, Source::ParkingSensor] {
        for i in 0..cfg.devices_per_source {
            tainted.insert(device_id(s, i));
        }
    }
    for i in 0..cfg.riders {
        tainted.insert(user_id(i));
    }
    let mut fixes = BTreeSet::new();
    for r in &input {
        if let Some(g) = r.gps {
            // whole degrees carry no sub-zone position and collide with integers
            for v in [g.lat.to_string(), g.lon.to_string()] {
                if v.contains('.') {
                    fixes.insert(v);
                }
            }
        }
    }
    assert!(fixes.len() > 1_000);
    let prefixes = ["bus-", "charger-", "phone-", "lotsensor-", "rider-"];
    assert!(tainted.iter().all(|t| prefixes.iter().any(|p| t.starts_with(p))));
    for (name, text) in non_operator_outputs(&state) {
        for p in prefixes {
            assert!(!text.contains(p), "{name} leaks a raw identifier with prefix {p}");
        }
        let leaked: Vec<&str> = numeric_tokens(&text).filter(|n| fixes.contains(*n)).collect();
        assert!(leaked.is_empty(), "{name} leaks coordinates {:?}", &leaked[..leaked.len().min(5)]);
        assert!(!text.contains("operator_gps"), "{name} carries operator fields");
    }

    // the Operator does see the precise fixes
    let mut auth = Authorizer::default();
    let op = serde_json::to_string(&state.view("Operator", None, &mut auth).unwrap()).unwrap();
    assert!(numeric_tokens(&op).any(|n| fixes.contains(n)));
}

fn numeric_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-')).filter(|t| !t.is_empty())
}

#[test]
fn replay_reproduces_processing_output() {
    let input = ten_thousand();
    let state = run(config(), input.iter().cloned().map(Ok));
    let live = serde_json::to_vec(&state.windowed_aggregates(3_600)).unwrap();
    let live_all = serde_json::to_vec(&state.aggregates(BatchWindow::all()).unwrap()).unwrap();

    let fresh = RecordLog::new(20_000);
    for (i, r) in state.log.replay(0).into_iter().enumerate() {
        assert_eq!(fresh.store(r), Ok(i as u64));
    }
    let replayed = fresh.replay(0);
    let again = serde_json::to_vec(&decarb_hubpipe::pipeline::windowed(&replayed, 3_600)).unwrap();
    assert_eq!(live, again);
    assert_eq!(live_all, serde_json::to_vec(&process(&replayed, BatchWindow::all()).unwrap()).unwrap());

    let rerun = run(config(), input.into_iter().map(Ok));
    assert_eq!(live, serde_json::to_vec(&rerun.windowed_aggregates(3_600)).unwrap());
}

#[test]
fn dedup_matches_sorted_comparison_oracle() {
    let state = run(config(), ten_thousand().into_iter().map(Ok));
    let mut records = state.log.replay(0);
    let agg = process(&records, BatchWindow::all()).unwrap();

    // sort by identity, then count runs of equal (token, timestamp, payload)
    records.sort_by(|a, b| {
        (a.device_token.as_str(), a.timestamp)
            .cmp(&(b.device_token.as_str(), b.timestamp))
            .then_with(|| format!("{:?}", a.payload).cmp(&format!("{:?}", b.payload)))
    });
    let mut distinct = 0u64;
    for (i, r) in records.iter().enumerate() {
        let same = i > 0 && {
            let p = &records[i - 1];
            p.device_token == r.device_token && p.timestamp == r.timestamp && p.payload == r.payload
        };
        if !same {
            distinct += 1;
        }
    }
    assert_eq!(agg.deduplicated_records, distinct);
    assert!(agg.duplicates_removed > 100, "{} duplicates", agg.duplicates_removed);
    assert_eq!(agg.records_in_window, records.len() as u64);
    for h in agg.charger.values() {
        assert!((0.0..=1.0).contains(&h.utilization));
    }
}

#[test]
fn rider_consent_example() {
    let r = TelemetryRecord {
        source: Some(Source::RiderApp),
        device_id: Some("phone-7".into()),
        timestamp: Some(10),
        gps: Some(GpsFix { lat: 29.81234, lon: -95.41234 }),
        occupancy: Some(2),
        consent: Some(BTreeMap::from([(FieldCategory::Location, false), (FieldCategory::Occupancy, true)])),
        ..Default::default()
    };
    let state = run(config(), [Ok(r)]);
    let stored = state.log.replay(0);
    assert_eq!(stored.len(), 1);
    assert_eq!(stored[0].payload, Payload { occupancy: Some(2), ..Default::default() });
    assert_eq!(stored[0].operator_gps, None);
}

#[test]
fn pipeline_awards_synced_trip() {
    let consent: BTreeMap<FieldCategory, bool> = FieldCategory::ALL.iter().map(|c| (*c, true)).collect();
    let ev = |kind, ts: i64| TelemetryRecord {
        source: Some(Source::RiderApp),
        device_id: Some("phone-1".into()),
        timestamp: Some(ts),
        hub_id: Some("H-NORTH".into()),
        event: Some(RiderEvent { kind, user_id: "alex".into() }),
        consent: Some(consent.clone()),
        ..Default::default()
    };
    let state = run(
        config(),
        [Ok(ev(RiderEventKind::ChargeStart, 0)), Ok(ev(RiderEventKind::TransitBoarding, 90 * 60))],
    );
    assert_eq!(state.ledger.balance(&token(b"test-key", "alex")), Some(15));
}
