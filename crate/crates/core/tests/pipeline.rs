mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use common::*;
use stacc::accessibility::read_surfaces;
use stacc::calibration::{DecayFamily, DecaySpec};
use stacc::dasymetric::CellCounts;
use stacc::geometry::Grid;
use stacc::network::CostMatrix;
use stacc::pipeline::{self, artifacts, bind_server, run_pipeline, PipelineError, RunConfig, ServeError};
use stacc::temporal::{read_hourly_table, HOURS};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini_city")
}

/// The committed mini-city configuration, writing into `out`.
fn mini_city(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&fixture_dir().join("config.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// A writable copy of the mini-city inputs, for tests that break them.
fn mini_city_copy(dir: &Path) -> PathBuf {
    for entry in std::fs::read_dir(fixture_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            std::fs::copy(&p, dir.join(p.file_name().unwrap())).unwrap();
        }
    }
    dir.join("config.toml")
}

fn json_close(a: &Value, b: &Value, path: &str) -> Result<(), String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0) {
                Ok(())
            } else {
                Err(format!("{path}: {x} vs {y}"))
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Err(format!("{path}: lengths {} vs {}", x.len(), y.len()));
            }
            x.iter()
                .zip(y)
                .enumerate()
                .try_for_each(|(i, (p, q))| json_close(p, q, &format!("{path}[{i}]")))
        }
        (Value::Object(x), Value::Object(y)) => {
            let kx: Vec<_> = x.keys().collect();
            let ky: Vec<_> = y.keys().collect();
            if kx != ky {
                return Err(format!("{path}: keys {kx:?} vs {ky:?}"));
            }
            x.iter()
                .try_for_each(|(k, v)| json_close(v, &y[k], &format!("{path}.{k}")))
        }
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} vs {b}")),
    }
}

#[test]
fn report_matches_golden() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(&mini_city(out.path())).unwrap();
    let report: Value = serde_json::from_slice(&std::fs::read(out.path().join(artifacts::REPORT)).unwrap()).unwrap();
    let golden: Value =
        serde_json::from_slice(&std::fs::read(fixture_dir().join("golden_report.json")).unwrap()).unwrap();
    json_close(&report, &golden, "report").unwrap();

    let timings: Value =
        serde_json::from_slice(&std::fs::read(out.path().join(artifacts::TIMINGS)).unwrap()).unwrap();
    assert!(timings.as_array().is_some_and(|t| t.len() == 8));
    for name in [
        artifacts::CUBE,
        artifacts::MESH,
        artifacts::OD_STATIC,
        "slice_h06.csv",
        "surfaces_s4.csv",
    ] {
        assert!(out.path().join(name).is_file(), "{name} missing");
    }
}

#[test]
fn surfaces_agree_with_direct_evaluation() {
    let out = tempfile::tempdir().unwrap();
    let cfg = mini_city(out.path());
    let report = run_pipeline(&cfg).unwrap();

    let grid: Grid = serde_json::from_slice(&std::fs::read(cfg.out(artifacts::GRID)).unwrap()).unwrap();
    let cc = CellCounts::read_csv(&cfg.out(artifacts::CELL_COUNTS), grid).unwrap();
    let costs = CostMatrix::read(&cfg.out(artifacts::OD_STATIC)).unwrap();
    let spec = DecaySpec::new(DecayFamily::Power, report.calibration.beta, cfg.floor()).unwrap();
    let res = cc.residential_cells();
    let emp = cc.employment_cells();

    let s1 = read_surfaces(&cfg.out(&artifacts::surfaces(1)), grid).unwrap();
    let oracle = oracle_two_step(
        &res,
        &emp,
        &|j| cc.jobs_at(j).daily_total(),
        &|i| cc.workers_at(i).daily_total(),
        &costs,
        &spec,
    );
    assert!(max_relative_error(&oracle, &s1[0].cells, &s1[0].values) <= 1e-9);

    let s4 = read_surfaces(&cfg.out(&artifacts::surfaces(4)), grid).unwrap();
    assert_eq!(s4.len(), HOURS);
    for t in [0, 6, 7, 12, 23] {
        let oracle = oracle_spacetime(&cc, &costs, &spec, t);
        let surface = s4.iter().find(|s| s.hour == Some(t as u8)).unwrap();
        assert!(max_relative_error(&oracle, &surface.cells, &surface.values) <= 1e-9, "hour {t}");
    }

    // every hourly worker and job is placed on the grid
    for (name, kind) in [(artifacts::HOURLY_WORKERS, 0), (artifacts::HOURLY_JOBS, 1)] {
        let zones = read_hourly_table(&cfg.out(name)).unwrap();
        let cells = if kind == 0 { &cc.workers } else { &cc.jobs };
        for t in 0..HOURS {
            let z: f64 = zones.values().map(|h| h.0[t]).sum();
            let c: f64 = cells.values().map(|h| h.0[t]).sum();
            assert!((z - c).abs() <= 1e-6 * z.max(1.0), "{name} hour {t}: {z} vs {c}");
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&mini_city(a.path())).unwrap();
    run_pipeline(&mini_city(b.path())).unwrap();
    for name in [
        artifacts::CUBE,
        artifacts::REPORT,
        artifacts::MESH,
        artifacts::OD_STATIC,
        artifacts::CELL_COUNTS,
        artifacts::SCENARIO_REPORT,
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn stages_resume_from_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let cfg = mini_city(out.path());
    run_pipeline(&cfg).unwrap();
    let cube = std::fs::read(cfg.out(artifacts::CUBE)).unwrap();
    let scenarios = std::fs::read(cfg.out(artifacts::SCENARIO_REPORT)).unwrap();

    std::fs::remove_file(cfg.out(artifacts::CUBE)).unwrap();
    std::fs::remove_file(cfg.out(artifacts::SCENARIO_REPORT)).unwrap();
    pipeline::stage_access(&cfg).unwrap();
    pipeline::stage_cube(&cfg).unwrap();
    assert_eq!(std::fs::read(cfg.out(artifacts::CUBE)).unwrap(), cube);
    assert_eq!(std::fs::read(cfg.out(artifacts::SCENARIO_REPORT)).unwrap(), scenarios);

    std::fs::remove_file(cfg.out(artifacts::CELL_COUNTS)).unwrap();
    let err = pipeline::stage_access(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(matches!(err, PipelineError::Stage { .. }));
}

#[test]
fn missing_parcel_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_city_copy(dir.path());
    std::fs::remove_file(dir.path().join("parcels.geojson")).unwrap();
    let cfg = RunConfig::load(&config).unwrap();
    let report = pipeline::validate(&cfg);
    assert!(report.has_code("file_not_found"));
    assert!(report.issues.iter().any(|i| i.message.contains("'parcels'")));
    assert!(report.issues.iter().all(|i| !i.message.contains(dir.path().to_str().unwrap())));
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(!cfg.out(artifacts::CUBE).exists());
}

#[test]
fn calibrate_without_flows_is_rejected() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = mini_city(out.path());
    cfg.flows = None;
    let report = pipeline::validate(&cfg);
    assert!(report.has_code("flows_required"));
    assert_eq!(run_pipeline(&cfg).unwrap_err().exit_code(), 1);
}

#[test]
fn unknown_zone_in_counts_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_city_copy(dir.path());
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(dir.path().join("workers.csv"))
        .unwrap();
    writeln!(f, "Z99,420,480,12").unwrap();
    let report = pipeline::validate(&RunConfig::load(&config).unwrap());
    assert!(report.has_code("unknown_zone_in_counts"));
    assert!(report.issues.iter().any(|i| i.message.contains("Z99")));
}

#[test]
fn missing_residential_parcels_warn_and_fall_back() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_city_copy(dir.path());
    let path = dir.path().join("parcels.geojson");
    let mut doc: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let features = doc["features"].as_array_mut().unwrap();
    features.retain(|f| f["properties"]["land_use"] != "residential");
    std::fs::write(&path, serde_json::to_vec(&doc).unwrap()).unwrap();

    let cfg = RunConfig::load(&config).unwrap();
    let report = pipeline::validate(&cfg);
    assert!(report.is_ok());
    assert!(report.has_code("no_residential_parcels"));
    let run = run_pipeline(&cfg).unwrap();
    assert!(run.warnings.iter().any(|w| w.code == "no_residential_parcels"));
    let fallbacks = run
        .dasymetric
        .diagnostics
        .iter()
        .filter(|d| matches!(d, stacc::dasymetric::Diagnostic::FallbackToZoneArea { kind: stacc::dasymetric::CountKind::Workers, .. }))
        .count();
    assert_eq!(fallbacks, 12);
}

#[test]
fn network_hourly_mode_runs() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = mini_city(out.path());
    cfg.network_hourly = true;
    assert!(pipeline::validate(&cfg).has_code("calibrate_time_varying"));
    cfg.beta = pipeline::BetaSetting::Fixed(0.6);
    cfg.distance_floor = Some(30.0);
    let run = run_pipeline(&cfg).unwrap();
    assert_eq!(run.od.hourly_matrices, HOURS);
    assert!(cfg.out("od_hour_08.stm").is_file());
    assert!(run.scenarios.means.iter().all(|m| m.is_finite() && *m > 0.0));
}

fn http(addr: std::net::SocketAddr, path: &str, range: Option<&str>) -> (String, Vec<u8>) {
    let mut s = TcpStream::connect(addr).unwrap();
    let range = range.map(|r| format!("Range: {r}\r\n")).unwrap_or_default();
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\n{range}Connection: close\r\n\r\n").unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).unwrap();
    let split = buf.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8_lossy(&buf[..split]).into_owned();
    (head, buf[split + 4..].to_vec())
}

#[test]
fn server_answers_full_and_range_requests() {
    let out = tempfile::tempdir().unwrap();
    run_pipeline(&mini_city(out.path())).unwrap();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let server = rt.block_on(bind_server(out.path(), 0)).unwrap();
    let addr = server.local_addr().unwrap();
    assert!(addr.ip().is_loopback());

    let taken = rt.block_on(bind_server(out.path(), addr.port()));
    assert!(matches!(taken, Err(ServeError::PortInUse(p)) if p == addr.port()));
    let missing = rt.block_on(bind_server(&out.path().join("nope"), 0));
    assert!(matches!(missing, Err(ServeError::MissingDirectory(_))));

    rt.spawn(server.run());
    let (head, body) = http(addr, "/report.json", None);
    assert!(head.starts_with("HTTP/1.1 200"), "{head}");
    assert_eq!(body, std::fs::read(out.path().join(artifacts::REPORT)).unwrap());

    let (head, body) = http(addr, "/cube.stc", Some("bytes=0-7"));
    assert!(head.starts_with("HTTP/1.1 206"), "{head}");
    assert_eq!(body, b"STCUBE01");

    let (head, _) = http(addr, "/absent.stc", None);
    assert!(head.starts_with("HTTP/1.1 404"), "{head}");
    rt.shutdown_background();
}

#[test]
fn cli_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_stacc");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(exe)
        .args(["fixture", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success());
    let config = dir.path().join("config.toml");

    let run = Command::new(exe)
        .args(["run", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(report["cube"]["nt"], 24);

    let bad = Command::new(exe)
        .args(["validate", "--config", config.to_str().unwrap(), "--cell-size=-5"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));

    std::fs::remove_file(dir.path().join("out").join(artifacts::CALIBRATION)).unwrap();
    let access = Command::new(exe)
        .args(["access", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(access.status.code(), Some(2));
}
