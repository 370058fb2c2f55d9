use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::calibration::{read_flows, DecayFamily};
use crate::dasymetric::LandUse;
use crate::geojson::read_features;
use crate::network::{load_network, Weight};
use crate::temporal::{read_count_table, HourlyCounts, HOURS};

use super::{read_parcels, BetaSetting, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn error(&mut self, code: &str, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Error,
            code: code.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, code: &str, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            code: code.into(),
            message: message.into(),
        });
    }

    pub fn error_count(&self) -> usize {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Error)
            .count()
    }

    pub fn warning_count(&self) -> usize {
        self.issues.len() - self.error_count()
    }

    pub fn is_ok(&self) -> bool {
        self.error_count() == 0
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }
}

/// Checks parameters, file presence, schemas and cross-file id references.
/// Messages name inputs by role, never by path, so reports stay comparable
/// across machines.
pub fn validate(cfg: &RunConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    check_parameters(cfg, &mut r);

    let present = |name: &str, p: &Option<PathBuf>, r: &mut ValidationReport| -> Option<PathBuf> {
        match p {
            None => {
                r.error("missing_input", format!("input '{name}' is not configured"));
                None
            }
            Some(p) if !p.is_file() => {
                r.error("file_not_found", format!("input '{name}' does not exist"));
                None
            }
            Some(p) => Some(p.clone()),
        }
    };
    let zones = present("zones", &cfg.zones, &mut r);
    let parcels = present("parcels", &cfg.parcels, &mut r);
    let workers = present("workers", &cfg.workers, &mut r);
    let jobs = present("jobs", &cfg.jobs, &mut r);
    let nodes = present("nodes", &cfg.nodes, &mut r);
    let edges = present("edges", &cfg.edges, &mut r);
    let flows = match (cfg.beta, &cfg.flows) {
        (BetaSetting::Calibrate, None) => {
            r.error(
                "flows_required",
                "beta = \"calibrate\" needs a flow file (input 'flows')",
            );
            None
        }
        (_, Some(_)) => present("flows", &cfg.flows, &mut r),
        _ => None,
    };
    if let Some(pattern) = &cfg.hourly_costs {
        let missing: Vec<usize> = (0..HOURS)
            .filter(|h| !PathBuf::from(pattern.replace("{hour}", &format!("{h:02}"))).is_file())
            .collect();
        if !missing.is_empty() {
            r.error(
                "hourly_costs_missing",
                format!("hourly cost matrices missing for hours {missing:?}"),
            );
        }
    }

    let zone_ids: Option<BTreeSet<String>> = zones.and_then(|p| {
        match read_features(&p, &cfg.zone_id_property) {
            Ok(f) => {
                let mut ids = BTreeSet::new();
                for z in &f {
                    if !ids.insert(z.id.clone()) {
                        r.error("duplicate_zone_id", format!("zone id '{}' appears twice", z.id));
                    }
                }
                if f.is_empty() {
                    r.error("empty_zones", "zone layer has no features");
                }
                Some(ids)
            }
            Err(e) => {
                r.error("zones_invalid", format!("zones: {}", strip_path(&e.to_string(), &p)));
                None
            }
        }
    });

    if let Some(p) = parcels {
        match read_parcels(&p, cfg) {
            Ok((aux, skipped)) => {
                if skipped > 0 {
                    r.warning(
                        "unknown_land_use",
                        format!("{skipped} parcel(s) have no recognised '{}' value and will be ignored", cfg.land_use_property),
                    );
                }
                for (lu, code, what) in [
                    (LandUse::Residential, "no_residential_parcels", "workers"),
                    (LandUse::Employment, "no_employment_parcels", "jobs"),
                ] {
                    if !aux.iter().any(|a| a.land_use == lu) {
                        r.warning(
                            code,
                            format!("parcel layer has no {lu:?} polygons; {what} will be spread by zone area"),
                        );
                    }
                }
            }
            Err(e) => r.error("parcels_invalid", format!("parcels: {}", strip_path(&e.to_string(), &p))),
        }
    }

    let mut tables: BTreeMap<&str, BTreeMap<String, HourlyCounts>> = BTreeMap::new();
    for (name, p) in [("workers", workers), ("jobs", jobs)] {
        let Some(p) = p else { continue };
        match read_count_table(&p) {
            Ok(t) => {
                tables.insert(name, t);
            }
            Err(e) => r.error("count_table_invalid", format!("{name}: {}", strip_path(&e.to_string(), &p))),
        }
    }
    if let Some(ids) = &zone_ids {
        for (name, t) in &tables {
            for id in t.keys().filter(|id| !ids.contains(*id)) {
                r.error(
                    "unknown_zone_in_counts",
                    format!("zone id '{id}' appears in {name} counts but not in zone geometry"),
                );
            }
        }
        if tables.len() == 2 {
            for id in ids {
                if tables.values().all(|t| !t.contains_key(id)) {
                    r.warning("zone_without_counts", format!("zone '{id}' has no worker or job counts"));
                }
            }
        }
    }

    if let (Some(n), Some(e)) = (nodes, edges) {
        match load_network(&n, &e, cfg.directed) {
            Ok((graph, report)) => {
                if report.components.len() > 1 {
                    r.warning(
                        "disconnected_network",
                        format!(
                            "road network has {} components (sizes {:?}); some pairs will be unreachable",
                            report.components.len(),
                            report.components
                        ),
                    );
                }
                if cfg.network_hourly && graph.check_weight(Weight::Hour(0)).is_err() {
                    r.error(
                        "network_no_hourly_times",
                        "network_hourly needs t00..t23 columns on every edge",
                    );
                }
            }
            Err(err) => r.error("network_invalid", format!("network: {}", strip_path(&err.to_string(), &n))),
        }
    }

    if let Some(p) = flows {
        match read_flows(&p) {
            Ok(flows) => {
                if let Some(ids) = &zone_ids {
                    let unknown: BTreeSet<&str> = flows
                        .iter()
                        .flat_map(|f| [f.origin_id.as_str(), f.destination_id.as_str()])
                        .filter(|id| !ids.contains(*id))
                        .collect();
                    for id in unknown {
                        r.error(
                            "unknown_zone_in_flows",
                            format!("zone id '{id}' appears in flows but not in zone geometry"),
                        );
                    }
                }
            }
            Err(e) => r.error("flows_invalid", format!("flows: {}", strip_path(&e.to_string(), &p))),
        }
    }
    r
}

fn check_parameters(cfg: &RunConfig, r: &mut ValidationReport) {
    if !(cfg.cell_size > 0.0 && cfg.cell_size.is_finite()) {
        r.error("invalid_parameter", format!("cell_size must be positive, got {}", cfg.cell_size));
    }
    if let BetaSetting::Fixed(b) = cfg.beta {
        if !(b > 0.0 && b.is_finite()) {
            r.error("invalid_parameter", format!("beta must be positive, got {b}"));
        }
    }
    if let Some(betas) = &cfg.hourly_beta {
        if betas.len() != HOURS || betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            r.error("invalid_parameter", "hourly_beta must list 24 positive values");
        }
    }
    let floor = cfg.floor();
    let floor_ok = floor.is_finite()
        && if cfg.decay == DecayFamily::Power {
            floor > 0.0
        } else {
            floor >= 0.0
        };
    if !floor_ok {
        r.error("invalid_parameter", format!("distance_floor {floor} is not valid for {} decay", cfg.decay));
    }
    if !(cfg.tolerance() > 0.0) {
        r.error("invalid_parameter", format!("snap_tolerance must be positive, got {}", cfg.tolerance()));
    }
    if !(0.0..=100.0).contains(&cfg.iso_percentile) {
        r.error("invalid_parameter", format!("iso_percentile must lie in [0, 100], got {}", cfg.iso_percentile));
    }
    if let Some(h) = cfg.slice_hours.iter().find(|&&h| h as usize >= HOURS) {
        r.error("invalid_parameter", format!("slice hour {h} out of range 0..=23"));
    }
    if cfg.beta == BetaSetting::Calibrate && cfg.decay != DecayFamily::Power {
        r.error("calibrate_family", "beta = \"calibrate\" fits a power decay only");
    }
    if cfg.network_hourly && cfg.hourly_costs.is_some() {
        r.error("conflicting_costs", "set either network_hourly or hourly_costs, not both");
    }
    if cfg.time_varying() {
        if cfg.beta == BetaSetting::Calibrate {
            r.error(
                "calibrate_time_varying",
                "calibration uses network distances; give beta explicitly with travel-time costs",
            );
        }
        if cfg.distance_floor.is_none() {
            r.error(
                "floor_required",
                "travel-time costs are in seconds; set distance_floor explicitly",
            );
        }
    }
}

/// Error texts from readers start with the file path; drop it.
fn strip_path(message: &str, path: &std::path::Path) -> String {
    let prefix = format!("{}: ", path.display());
    message.strip_prefix(&prefix).unwrap_or(message).to_string()
}
