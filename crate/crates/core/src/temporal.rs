//! Interval-coded counts to 24 hourly bins.
//!
//! Each interval's count is spread over the hours it overlaps in proportion
//! to the overlap length. Fifteen-minute records inside one hour therefore
//! sum into that hour, and a multi-hour record is divided evenly across it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS: usize = 24;
pub const MINUTES_PER_DAY: u32 = 1440;

#[derive(Debug, Error)]
pub enum TemporalError {
    #[error("interval {start}-{end} is not within 0..=1440 minutes with start < end")]
    InvalidInterval { start: u32, end: u32 },
    #[error("interval bound {0} is not a whole minute")]
    Unaligned(f64),
    #[error("negative or non-finite count {count} for interval {start}-{end}")]
    NegativeCount { start: u32, end: u32, count: f64 },
    #[error("intervals {a_start}-{a_end} and {b_start}-{b_end} overlap")]
    Overlap {
        a_start: u32,
        a_end: u32,
        b_start: u32,
        b_end: u32,
    },
    #[error("hour {0} out of range 0..=23")]
    HourOutOfRange(usize),
    #[error("zone {zone}: {source}")]
    Zone {
        zone: String,
        #[source]
        source: Box<TemporalError>,
    },
    #[error("count table {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Count observed over `[start_minute, end_minute)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalCount {
    start_minute: u32,
    end_minute: u32,
    count: f64,
}

impl IntervalCount {
    pub fn new(start_minute: u32, end_minute: u32, count: f64) -> Result<Self, TemporalError> {
        if start_minute >= end_minute || end_minute > MINUTES_PER_DAY {
            return Err(TemporalError::InvalidInterval {
                start: start_minute,
                end: end_minute,
            });
        }
        if !(count >= 0.0) || !count.is_finite() {
            return Err(TemporalError::NegativeCount {
                start: start_minute,
                end: end_minute,
                count,
            });
        }
        Ok(Self {
            start_minute,
            end_minute,
            count,
        })
    }

    /// Accepts real-valued bounds as read from text, rejecting fractional minutes.
    pub fn from_minutes(start: f64, end: f64, count: f64) -> Result<Self, TemporalError> {
        let whole = |v: f64| -> Result<u32, TemporalError> {
            if v.fract() != 0.0 || !(0.0..=MINUTES_PER_DAY as f64).contains(&v) {
                Err(TemporalError::Unaligned(v))
            } else {
                Ok(v as u32)
            }
        };
        Self::new(whole(start)?, whole(end)?, count)
    }

    pub fn start_minute(&self) -> u32 {
        self.start_minute
    }

    pub fn end_minute(&self) -> u32 {
        self.end_minute
    }

    pub fn count(&self) -> f64 {
        self.count
    }
}

/// 24 non-negative bins; bin `t` covers `[t:00, t+1:00)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HourlyCounts(pub [f64; HOURS]);

impl HourlyCounts {
    pub fn zero() -> Self {
        Self([0.0; HOURS])
    }

    pub fn uniform(value: f64) -> Self {
        Self([value; HOURS])
    }

    pub fn get(&self, hour: usize) -> Result<f64, TemporalError> {
        self.0
            .get(hour)
            .copied()
            .ok_or(TemporalError::HourOutOfRange(hour))
    }

    /// Jobs reachable by workers leaving at `hour`: bins `hour` and `hour+1`,
    /// wrapping 23 to 0.
    pub fn supply_window(&self, hour: usize) -> Result<f64, TemporalError> {
        if hour >= HOURS {
            return Err(TemporalError::HourOutOfRange(hour));
        }
        Ok(self.0[hour] + self.0[(hour + 1) % HOURS])
    }

    pub fn daily_total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.map(|v| v * factor))
    }

    pub fn add_assign(&mut self, other: &HourlyCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += b;
        }
    }
}

/// Spreads interval counts over hourly bins by temporal overlap.
pub fn disaggregate_to_hourly(table: &[IntervalCount]) -> Result<HourlyCounts, TemporalError> {
    let mut sorted: Vec<&IntervalCount> = table.iter().collect();
    sorted.sort_by_key(|iv| (iv.start_minute, iv.end_minute));
    for pair in sorted.windows(2) {
        if pair[1].start_minute < pair[0].end_minute {
            return Err(TemporalError::Overlap {
                a_start: pair[0].start_minute,
                a_end: pair[0].end_minute,
                b_start: pair[1].start_minute,
                b_end: pair[1].end_minute,
            });
        }
    }
    let mut bins = [0.0; HOURS];
    for iv in table {
        let len = (iv.end_minute - iv.start_minute) as f64;
        let first = (iv.start_minute / 60) as usize;
        let last = ((iv.end_minute - 1) / 60) as usize;
        if first == last {
            bins[first] += iv.count;
            continue;
        }
        for (h, bin) in bins.iter_mut().enumerate().take(last + 1).skip(first) {
            let lo = iv.start_minute.max(h as u32 * 60);
            let hi = iv.end_minute.min((h as u32 + 1) * 60);
            *bin += iv.count * (hi - lo) as f64 / len;
        }
    }
    Ok(HourlyCounts(bins))
}

#[derive(Debug, Deserialize)]
struct CountRow {
    zone_id: String,
    start_minute: f64,
    end_minute: f64,
    count: f64,
}

/// Reads a `zone_id,start_minute,end_minute,count` table and disaggregates
/// each zone's records.
pub fn read_count_table(path: &Path) -> Result<BTreeMap<String, HourlyCounts>, TemporalError> {
    let csv_err = |source| TemporalError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut by_zone: BTreeMap<String, Vec<IntervalCount>> = BTreeMap::new();
    for row in reader.deserialize::<CountRow>() {
        let row = row.map_err(csv_err)?;
        let iv = IntervalCount::from_minutes(row.start_minute, row.end_minute, row.count).map_err(
            |e| TemporalError::Zone {
                zone: row.zone_id.clone(),
                source: Box::new(e),
            },
        )?;
        by_zone.entry(row.zone_id).or_default().push(iv);
    }
    by_zone
        .into_iter()
        .map(|(zone, ivs)| match disaggregate_to_hourly(&ivs) {
            Ok(h) => Ok((zone, h)),
            Err(e) => Err(TemporalError::Zone {
                zone,
                source: Box::new(e),
            }),
        })
        .collect()
}

/// Writes `zone_id,hour,count` rows.
pub fn write_hourly_table(
    path: &Path,
    table: &BTreeMap<String, HourlyCounts>,
) -> Result<(), TemporalError> {
    let csv_err = |source| TemporalError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["zone_id", "hour", "count"]).map_err(csv_err)?;
    for (zone, h) in table {
        for (hour, v) in h.0.iter().enumerate() {
            w.write_record([zone.as_str(), &hour.to_string(), &v.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads back a table produced by [`write_hourly_table`].
pub fn read_hourly_table(path: &Path) -> Result<BTreeMap<String, HourlyCounts>, TemporalError> {
    #[derive(Deserialize)]
    struct Row {
        zone_id: String,
        hour: usize,
        count: f64,
    }
    let csv_err = |source| TemporalError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out: BTreeMap<String, HourlyCounts> = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(csv_err)?;
        if row.hour >= HOURS {
            return Err(TemporalError::HourOutOfRange(row.hour));
        }
        out.entry(row.zone_id).or_default().0[row.hour] = row.count;
    }
    Ok(out)
}
