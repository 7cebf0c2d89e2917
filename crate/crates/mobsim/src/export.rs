//! Result files: full JSON, CSV summaries and the emissions GeoJSON.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::sim::SimResult;
use crate::world::SimWorld;

/// Files written by [`export_result`], relative to the output directory.
pub const EXPORT_FILES: [&str; 5] = [
    "result.json",
    "mode_summary.csv",
    "hubs.csv",
    "trips.csv",
    "emissions.geojson",
];

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_mode_summary<W: Write>(w: W, result: &SimResult) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mode", "trips", "share", "vmt"]).map_err(csv_err)?;
    for (mode, n) in &result.mode_counts {
        out.write_record([
            mode.as_str().to_string(),
            n.to_string(),
            result.mode_shares[mode].to_string(),
            result.mode_vmt[mode].to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_hubs<W: Write>(w: W, result: &SimResult) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "hub_id",
        "zone",
        "capacity",
        "peak_occupancy",
        "occupied_end",
        "parked_in",
        "parked_out",
        "transfers",
        "reroutes",
        "overflow",
        "charger_ports",
        "charge_sessions",
        "charger_mean_wait_min",
        "charger_max_wait_min",
    ])
    .map_err(csv_err)?;
    for h in &result.hubs {
        out.write_record([
            h.hub_id.clone(),
            h.zone.clone(),
            h.capacity.to_string(),
            h.peak_occupancy.to_string(),
            h.occupied_end.to_string(),
            h.parked_in.to_string(),
            h.parked_out.to_string(),
            h.transfers.to_string(),
            h.reroutes.to_string(),
            h.overflow.to_string(),
            h.charger.ports.to_string(),
            h.charger.started.to_string(),
            h.charger.mean_wait_min.to_string(),
            h.charger.max_wait_min.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_trips<W: Write>(w: W, result: &SimResult) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for t in &result.trips {
        out.serialize(t).map_err(csv_err)?;
    }
    out.flush()
}

/// Write every export file into `dir`, creating it if needed.
pub fn export_result(dir: &Path, result: &SimResult, world: &SimWorld) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let open = |name: &str| File::create(dir.join(name)).map(BufWriter::new);

    let mut f = open("result.json")?;
    serde_json::to_writer_pretty(&mut f, result)?;
    f.write_all(b"\n")?;
    f.flush()?;
    write_mode_summary(open("mode_summary.csv")?, result)?;
    write_hubs(open("hubs.csv")?, result)?;
    write_trips(open("trips.csv")?, result)?;
    let mut f = open("emissions.geojson")?;
    serde_json::to_writer_pretty(&mut f, &result.emissions_grid.to_geojson(&world.zone_geometries))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(EXPORT_FILES.iter().map(|n| dir.join(n)).collect())
}
