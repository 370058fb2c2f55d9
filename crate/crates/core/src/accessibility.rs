//! Gravity-type job accessibility kernels.
//!
//! The two-step evaluation first computes, at every job location `j`, the
//! ratio of jobs to decay-weighted competing workers
//!
//! ```text
//! R_j = S_j / Σ_k D_k f(d_kj)
//! ```
//!
//! and then gathers those ratios at every residential location,
//! `A_i = Σ_j R_j f(d_ij)`. The hourly variant uses the jobs starting in the
//! two-hour window `[t, t+2)` as supply and the workers leaving in hour `t`
//! as demand. Job sites with no reachable demand get `R_j = 0` and are
//! counted in the diagnostics.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::Decay;
use crate::dasymetric::CellCounts;
use crate::geometry::{CellId, Grid};
use crate::network::CostMatrix;
use crate::numeric::CompensatedSum;
use crate::temporal::HOURS;

#[derive(Debug, Error)]
pub enum AccessError {
    #[error("cost matrix has no row for residential cell {0}")]
    MissingOrigin(CellId),
    #[error("cost matrix has no column for employment cell {0}")]
    MissingDestination(CellId),
    #[error("time-varying mode selected but no cost matrix for hour {0}")]
    MissingHourlyMatrix(usize),
    #[error("hour {0} out of range 0..=23")]
    HourOutOfRange(usize),
    #[error("sample lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("correlation undefined: a sample has zero variance")]
    ZeroVariance,
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Accessibility per active residential cell for one hour, or static.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessibilitySurface {
    pub grid: Grid,
    pub hour: Option<u8>,
    pub cells: Vec<CellId>,
    pub values: Vec<f64>,
}

impl AccessibilitySurface {
    pub fn get(&self, cell: CellId) -> Option<f64> {
        self.cells
            .binary_search(&cell)
            .ok()
            .map(|i| self.values[i])
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let mut s = CompensatedSum::default();
        self.values.iter().for_each(|&v| s.add(v));
        s.value() / self.values.len() as f64
    }
}

/// Supply-to-demand ratio per employment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSurface {
    pub hour: Option<u8>,
    pub cells: Vec<CellId>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceDiagnostics {
    /// Job sites whose demand potential is zero.
    pub zero_demand_sites: usize,
    /// Jobs at those sites, which no worker can claim.
    pub unclaimed_supply: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub access: AccessibilitySurface,
    pub ratios: RatioSurface,
    pub diagnostics: SliceDiagnostics,
}

/// Decay weights between residential (rows) and employment (columns) cells.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    residential: Vec<CellId>,
    employment: Vec<CellId>,
    w: Vec<f64>,
}

impl WeightMatrix {
    pub fn build(
        residential: &[CellId],
        employment: &[CellId],
        costs: &CostMatrix,
        decay: &dyn Decay,
    ) -> Result<Self, AccessError> {
        let rows: Vec<usize> = residential
            .iter()
            .map(|&c| costs.origin_position(c).ok_or(AccessError::MissingOrigin(c)))
            .collect::<Result<_, _>>()?;
        let cols: Vec<usize> = employment
            .iter()
            .map(|&c| {
                costs
                    .destination_position(c)
                    .ok_or(AccessError::MissingDestination(c))
            })
            .collect::<Result<_, _>>()?;
        let n = employment.len();
        let mut w = vec![0.0; residential.len() * n];
        w.par_chunks_mut(n.max(1))
            .zip(rows.par_iter())
            .for_each(|(slot, &r)| {
                let row = costs.row(r);
                for (k, &c) in cols.iter().enumerate() {
                    let v = row[c];
                    slot[k] = decay.weight((!v.is_nan()).then_some(v as f64));
                }
            });
        Ok(Self {
            residential: residential.to_vec(),
            employment: employment.to_vec(),
            w,
        })
    }

    pub fn residential(&self) -> &[CellId] {
        &self.residential
    }

    pub fn employment(&self) -> &[CellId] {
        &self.employment
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.employment.len() + j]
    }

    /// `Σ_j supply_j · w_ij` for every residential row.
    pub fn gather(&self, per_site: &[f64]) -> Vec<f64> {
        let n = self.employment.len();
        if n == 0 {
            return vec![0.0; self.residential.len()];
        }
        self.w
            .par_chunks(n)
            .map(|row| {
                let mut s = CompensatedSum::default();
                for (w, v) in row.iter().zip(per_site) {
                    s.add(w * v);
                }
                s.value()
            })
            .collect()
    }

    /// `Σ_k demand_k · w_kj` for every employment column.
    pub fn demand_potential(&self, demand: &[f64]) -> Vec<f64> {
        let n = self.employment.len();
        (0..n)
            .into_par_iter()
            .map(|j| {
                let mut s = CompensatedSum::default();
                for (k, d) in demand.iter().enumerate() {
                    if *d != 0.0 {
                        s.add(d * self.w[k * n + j]);
                    }
                }
                s.value()
            })
            .collect()
    }

    /// Two-step evaluation: ratios at job sites, then gathered at residences.
    pub fn two_step(&self, supply: &[f64], demand: &[f64]) -> (Vec<f64>, Vec<f64>, SliceDiagnostics) {
        let potential = self.demand_potential(demand);
        let mut diag = SliceDiagnostics::default();
        let ratios: Vec<f64> = potential
            .iter()
            .zip(supply)
            .map(|(&p, &s)| {
                if p > 0.0 {
                    s / p
                } else {
                    diag.zero_demand_sites += 1;
                    diag.unclaimed_supply += s;
                    0.0
                }
            })
            .collect();
        let access = self.gather(&ratios);
        (ratios, access, diag)
    }
}

fn split_pairs(pairs: &[(CellId, f64)]) -> (Vec<CellId>, Vec<f64>) {
    let mut sorted = pairs.to_vec();
    sorted.sort_by_key(|p| p.0);
    sorted.into_iter().unzip()
}

/// Potential accessibility `A_i = Σ_j S_j f(d_ij)` at each residential cell.
pub fn hansen(
    grid: &Grid,
    supply: &[(CellId, f64)],
    residential: &[CellId],
    costs: &CostMatrix,
    decay: &dyn Decay,
) -> Result<AccessibilitySurface, AccessError> {
    let (emp, s) = split_pairs(supply);
    let mut res = residential.to_vec();
    res.sort_unstable();
    let w = WeightMatrix::build(&res, &emp, costs, decay)?;
    Ok(AccessibilitySurface {
        grid: *grid,
        hour: None,
        values: w.gather(&s),
        cells: res,
    })
}

/// Competition-adjusted accessibility with daily (or any fixed) counts.
pub fn shen_static(
    grid: &Grid,
    supply: &[(CellId, f64)],
    demand: &[(CellId, f64)],
    costs: &CostMatrix,
    decay: &dyn Decay,
) -> Result<Evaluation, AccessError> {
    let (emp, s) = split_pairs(supply);
    let (res, d) = split_pairs(demand);
    let w = WeightMatrix::build(&res, &emp, costs, decay)?;
    let (ratios, access, diagnostics) = w.two_step(&s, &d);
    Ok(Evaluation {
        access: AccessibilitySurface {
            grid: *grid,
            hour: None,
            cells: res,
            values: access,
        },
        ratios: RatioSurface {
            hour: None,
            cells: emp,
            values: ratios,
        },
        diagnostics,
    })
}

/// Impedances for the hourly model.
#[derive(Debug, Clone, Copy)]
pub enum Costs<'a> {
    Static(&'a CostMatrix),
    Hourly(&'a [CostMatrix]),
}

impl<'a> Costs<'a> {
    fn for_hour(&self, hour: usize) -> Result<&'a CostMatrix, AccessError> {
        match *self {
            Costs::Static(m) => Ok(m),
            Costs::Hourly(ms) => ms.get(hour).ok_or(AccessError::MissingHourlyMatrix(hour)),
        }
    }
}

/// Hour-`t` accessibility: jobs in the `[t, t+2)` window against workers
/// leaving in hour `t`.
pub fn spacetime_access(
    cc: &CellCounts,
    costs: Costs<'_>,
    decay: &dyn Decay,
    hour: usize,
) -> Result<Evaluation, AccessError> {
    if hour >= HOURS {
        return Err(AccessError::HourOutOfRange(hour));
    }
    let res = cc.residential_cells();
    let emp = cc.employment_cells();
    let w = WeightMatrix::build(&res, &emp, costs.for_hour(hour)?, decay)?;
    let model = Counts::new(cc);
    Ok(evaluate(&w, cc.grid, Some(hour as u8), &model.window_supply(hour), &model.hourly_demand(hour)))
}

fn evaluate(
    w: &WeightMatrix,
    grid: Grid,
    hour: Option<u8>,
    supply: &[f64],
    demand: &[f64],
) -> Evaluation {
    let (ratios, access, diagnostics) = w.two_step(supply, demand);
    Evaluation {
        access: AccessibilitySurface {
            grid,
            hour,
            cells: w.residential.clone(),
            values: access,
        },
        ratios: RatioSurface {
            hour,
            cells: w.employment.clone(),
            values: ratios,
        },
        diagnostics,
    }
}

/// Supply and demand vectors aligned with the active cell lists.
struct Counts<'a> {
    cc: &'a CellCounts,
    res: Vec<CellId>,
    emp: Vec<CellId>,
}

impl<'a> Counts<'a> {
    fn new(cc: &'a CellCounts) -> Self {
        Self {
            cc,
            res: cc.residential_cells(),
            emp: cc.employment_cells(),
        }
    }

    fn window_supply(&self, hour: usize) -> Vec<f64> {
        self.emp
            .iter()
            .map(|&c| {
                self.cc
                    .jobs_at(c)
                    .supply_window(hour)
                    .expect("hour checked by caller")
            })
            .collect()
    }

    fn daily_supply(&self) -> Vec<f64> {
        self.emp.iter().map(|&c| self.cc.jobs_at(c).daily_total()).collect()
    }

    fn hourly_demand(&self, hour: usize) -> Vec<f64> {
        self.res.iter().map(|&c| self.cc.workers_at(c).0[hour]).collect()
    }

    fn daily_demand(&self) -> Vec<f64> {
        self.res
            .iter()
            .map(|&c| self.cc.workers_at(c).daily_total())
            .collect()
    }
}

/// Static base matrix plus optional per-hour matrices.
#[derive(Debug, Clone)]
pub struct CostSet {
    pub base: CostMatrix,
    pub hourly: Option<Vec<CostMatrix>>,
}

/// Per-hour decay override; `None` entries fall back to the base decay.
pub type HourlyDecay<'a> = Option<&'a [&'a dyn Decay]>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Daily jobs and daily workers.
    StaticBoth,
    /// Windowed hourly jobs against daily workers.
    DynamicJobs,
    /// Daily jobs against hourly workers.
    DynamicWorkers,
    /// Windowed hourly jobs against hourly workers.
    SpaceTime,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::StaticBoth,
        Scenario::DynamicJobs,
        Scenario::DynamicWorkers,
        Scenario::SpaceTime,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDiagnostics {
    /// Hours at which no worker departs anywhere.
    pub zero_worker_hours: Vec<usize>,
    /// Zero-demand job sites summed over hours, per scenario.
    pub zero_demand_sites: [usize; 4],
    pub unclaimed_supply: [f64; 4],
    /// Scenario pairs whose correlation is undefined, as (row, col).
    pub undefined_correlations: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub residential_cells: usize,
    pub employment_cells: usize,
    pub means: [f64; 4],
    /// Lower triangle including the diagonal: row `i` has `i + 1` entries.
    pub correlations: Vec<Vec<Option<f64>>>,
    pub diagnostics: ScenarioDiagnostics,
}

#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub static_both: AccessibilitySurface,
    pub dynamic_jobs: Vec<AccessibilitySurface>,
    pub dynamic_workers: Vec<AccessibilitySurface>,
    pub space_time: Vec<AccessibilitySurface>,
    pub report: ScenarioReport,
}

impl ScenarioSet {
    /// Samples paired by (hour, cell); the static scenario is repeated for
    /// every hour.
    pub fn samples(&self, scenario: Scenario) -> Vec<f64> {
        let hourly = |s: &[AccessibilitySurface]| -> Vec<f64> {
            s.iter().flat_map(|x| x.values.iter().copied()).collect()
        };
        match scenario {
            Scenario::StaticBoth => (0..HOURS)
                .flat_map(|_| self.static_both.values.iter().copied())
                .collect(),
            Scenario::DynamicJobs => hourly(&self.dynamic_jobs),
            Scenario::DynamicWorkers => hourly(&self.dynamic_workers),
            Scenario::SpaceTime => hourly(&self.space_time),
        }
    }
}

/// Evaluates the four supply/demand timing scenarios and their summary table.
pub fn run_scenarios(
    cc: &CellCounts,
    costs: &CostSet,
    decay: &dyn Decay,
    hourly_decay: HourlyDecay<'_>,
) -> Result<ScenarioSet, AccessError> {
    let counts = Counts::new(cc);
    let base_w = WeightMatrix::build(&counts.res, &counts.emp, &costs.base, decay)?;
    if let Some(h) = &costs.hourly {
        if h.len() < HOURS {
            return Err(AccessError::MissingHourlyMatrix(h.len()));
        }
    }
    let daily_supply = counts.daily_supply();
    let daily_demand = counts.daily_demand();
    let s1 = evaluate(&base_w, cc.grid, None, &daily_supply, &daily_demand);

    let mut per_hour = Vec::with_capacity(HOURS);
    for hour in 0..HOURS {
        let hour_decay = hourly_decay.map_or(decay, |d| d[hour]);
        let w: Cow<'_, WeightMatrix> = match (&costs.hourly, hourly_decay) {
            (None, None) => Cow::Borrowed(&base_w),
            (Some(h), _) => Cow::Owned(WeightMatrix::build(
                &counts.res,
                &counts.emp,
                &h[hour],
                hour_decay,
            )?),
            (None, Some(_)) => Cow::Owned(WeightMatrix::build(
                &counts.res,
                &counts.emp,
                &costs.base,
                hour_decay,
            )?),
        };
        let window = counts.window_supply(hour);
        let demand = counts.hourly_demand(hour);
        let t = Some(hour as u8);
        per_hour.push((
            evaluate(&w, cc.grid, t, &window, &daily_demand),
            evaluate(&w, cc.grid, t, &daily_supply, &demand),
            evaluate(&w, cc.grid, t, &window, &demand),
            demand.iter().all(|&d| d == 0.0),
        ));
    }

    let mut diagnostics = ScenarioDiagnostics {
        zero_worker_hours: Vec::new(),
        zero_demand_sites: [s1.diagnostics.zero_demand_sites, 0, 0, 0],
        unclaimed_supply: [s1.diagnostics.unclaimed_supply, 0.0, 0.0, 0.0],
        undefined_correlations: Vec::new(),
    };
    let mut dynamic_jobs = Vec::with_capacity(HOURS);
    let mut dynamic_workers = Vec::with_capacity(HOURS);
    let mut space_time = Vec::with_capacity(HOURS);
    for (hour, (s2, s3, s4, no_workers)) in per_hour.into_iter().enumerate() {
        if no_workers {
            log::warn!("no workers depart at hour {hour}; hourly accessibility is zero");
            diagnostics.zero_worker_hours.push(hour);
        }
        for (k, e) in [(1, &s2), (2, &s3), (3, &s4)] {
            diagnostics.zero_demand_sites[k] += e.diagnostics.zero_demand_sites;
            diagnostics.unclaimed_supply[k] += e.diagnostics.unclaimed_supply;
        }
        dynamic_jobs.push(s2.access);
        dynamic_workers.push(s3.access);
        space_time.push(s4.access);
    }

    let mut set = ScenarioSet {
        static_both: s1.access,
        dynamic_jobs,
        dynamic_workers,
        space_time,
        report: ScenarioReport {
            residential_cells: counts.res.len(),
            employment_cells: counts.emp.len(),
            means: [0.0; 4],
            correlations: Vec::new(),
            diagnostics,
        },
    };
    let samples: Vec<Vec<f64>> = Scenario::ALL.iter().map(|&s| set.samples(s)).collect();
    set.report.means[0] = set.static_both.mean();
    for k in 1..4 {
        set.report.means[k] = mean(&samples[k]);
    }
    for i in 0..4 {
        let mut row = Vec::with_capacity(i + 1);
        for j in 0..=i {
            let r = pearson_correlation(&samples[i], &samples[j]).ok();
            if r.is_none() {
                set.report.diagnostics.undefined_correlations.push((i, j));
            }
            row.push(r);
        }
        set.report.correlations.push(row);
    }
    Ok(set)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = CompensatedSum::default();
    v.iter().for_each(|&x| s.add(x));
    s.value() / v.len() as f64
}

/// Pearson product-moment correlation of paired samples.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64, AccessError> {
    if a.len() != b.len() {
        return Err(AccessError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(AccessError::TooFewSamples(a.len()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (
        CompensatedSum::default(),
        CompensatedSum::default(),
        CompensatedSum::default(),
    );
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab.add(dx * dy);
        saa.add(dx * dx);
        sbb.add(dy * dy);
    }
    let (saa, sbb) = (saa.value(), sbb.value());
    // relative to the magnitudes involved, anything this small is roundoff
    let tiny = |ss: f64, m: f64| ss <= 1e-24 * a.len() as f64 * (m * m).max(f64::MIN_POSITIVE);
    if saa == 0.0 || sbb == 0.0 || tiny(saa, ma) || tiny(sbb, mb) {
        return Err(AccessError::ZeroVariance);
    }
    Ok((sab.value() / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Writes `cell_col,cell_row,hour,value`; static surfaces use hour `static`.
pub fn write_surfaces(path: &Path, surfaces: &[&AccessibilitySurface]) -> Result<(), AccessError> {
    let csv_err = |source| AccessError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["cell_col", "cell_row", "hour", "value"])
        .map_err(csv_err)?;
    for s in surfaces {
        let hour = s.hour.map_or_else(|| "static".to_string(), |h| h.to_string());
        for (&cell, v) in s.cells.iter().zip(&s.values) {
            let (col, row) = (cell % s.grid.nx, cell / s.grid.nx);
            w.write_record([col.to_string(), row.to_string(), hour.clone(), v.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads surfaces written by [`write_surfaces`], one per distinct hour tag.
pub fn read_surfaces(path: &Path, grid: Grid) -> Result<Vec<AccessibilitySurface>, AccessError> {
    #[derive(Deserialize)]
    struct Row {
        cell_col: u32,
        cell_row: u32,
        hour: String,
        value: f64,
    }
    let p = path.display().to_string();
    let fmt = |message: String| AccessError::Format {
        path: p.clone(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|source| AccessError::Csv {
        path: p.clone(),
        source,
    })?;
    let mut by_hour: BTreeMap<Option<u8>, BTreeMap<CellId, f64>> = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|source| AccessError::Csv {
            path: p.clone(),
            source,
        })?;
        let hour = match row.hour.as_str() {
            "static" => None,
            h => Some(
                h.parse::<u8>()
                    .ok()
                    .filter(|&h| (h as usize) < HOURS)
                    .ok_or_else(|| fmt(format!("bad hour '{h}'")))?,
            ),
        };
        let cell = grid
            .cell_id(row.cell_col, row.cell_row)
            .map_err(|e| fmt(e.to_string()))?;
        by_hour.entry(hour).or_default().insert(cell, row.value);
    }
    Ok(by_hour
        .into_iter()
        .map(|(hour, cells)| {
            let (cells, values) = cells.into_iter().unzip();
            AccessibilitySurface {
                grid,
                hour,
                cells,
                values,
            }
        })
        .collect())
}
