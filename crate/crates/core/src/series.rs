//! Daily event-count series, window statistics and inter-arrival sequences.

use std::collections::BTreeMap;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};

/// Events attributed to one calendar day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub count: u64,
}

impl EventRecord {
    pub fn new(date: NaiveDate, count: u64) -> Self {
        Self { date, count }
    }
}

/// Zero-filled daily count series `M_1..M_N` starting at `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSeries {
    start: NaiveDate,
    counts: Vec<u64>,
}

impl EventSeries {
    pub fn new(start: NaiveDate, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(invalid_input("event series must cover at least one day"));
        }
        if start.checked_add_days(Days::new(counts.len() as u64 - 1)).is_none() {
            return Err(invalid_input("series extends past the supported calendar range"));
        }
        Ok(Self { start, counts })
    }

    /// Series anchored at an arbitrary fixed epoch; convenient for synthetic data.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        Self::new(default_epoch(), counts)
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.date_of(self.counts.len() - 1)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Calendar date of the zero-based day index.
    pub fn date_of(&self, index: usize) -> NaiveDate {
        self.start + Days::new(index as u64)
    }

    /// Zero-based day index of `date`, if it lies inside the series.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start).num_days();
        (off >= 0 && (off as usize) < self.counts.len()).then_some(off as usize)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of days with at least one event.
    pub fn active_days(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Non-zero days as records, in date order.
    pub fn to_records(&self) -> Vec<EventRecord> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| EventRecord::new(self.date_of(i), c))
            .collect()
    }

    /// Sub-series covering day indices `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.counts.len() || range.is_empty() {
            return Err(invalid_input("slice outside series"));
        }
        Self::new(self.date_of(range.start), self.counts[range].to_vec())
    }
}

pub(crate) fn default_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid epoch")
}

/// Reduces records to a daily series over `span` (inclusive), summing same-day records.
///
/// Without a span the series runs from the first to the last record date.
/// Records outside an explicit span are dropped; it is an error if that drops all of them.
pub fn ingest(records: &[EventRecord], span: Option<(NaiveDate, NaiveDate)>) -> Result<EventSeries> {
    let (first, last) = match span {
        Some((a, b)) => {
            if b < a {
                return Err(invalid_input(format!("span end {b} precedes start {a}")));
            }
            (a, b)
        }
        None => {
            let first = records.iter().map(|r| r.date).min();
            let last = records.iter().map(|r| r.date).max();
            match (first, last) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(invalid_input("no records and no span given")),
            }
        }
    };
    let len = (last - first).num_days() as usize + 1;
    let mut counts = vec![0u64; len];
    let mut kept = 0usize;
    for r in records {
        let off = (r.date - first).num_days();
        if off < 0 || off as usize >= len {
            continue;
        }
        counts[off as usize] += r.count;
        kept += 1;
    }
    if !records.is_empty() && kept == 0 {
        return Err(invalid_input("span excludes every record"));
    }
    EventSeries::new(first, counts)
}

/// Statistics of one δ-day window: `x` active days, `y` total events over `len` days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowStat {
    pub x: u64,
    pub y: u64,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSeries {
    delta: usize,
    windows: Vec<WindowStat>,
    /// True when the last window is shorter than `delta`.
    partial_last: bool,
    days: usize,
}

impl WindowSeries {
    pub fn delta(&self) -> usize {
        self.delta
    }

    /// All `K = ⌈N/δ⌉` windows, including a trailing partial one.
    pub fn windows(&self) -> &[WindowStat] {
        &self.windows
    }

    pub fn has_partial(&self) -> bool {
        self.partial_last
    }

    /// Number of days the windows cover.
    pub fn days(&self) -> usize {
        self.days
    }

    /// Windows of full length δ.
    pub fn complete(&self) -> &[WindowStat] {
        if self.partial_last {
            &self.windows[..self.windows.len() - 1]
        } else {
            &self.windows
        }
    }

    /// Windows used as model observations.
    pub fn observations(&self, include_partial: bool) -> &[WindowStat] {
        if include_partial {
            &self.windows
        } else {
            self.complete()
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Splits the series into consecutive δ-day windows and computes `(X_n, Y_n)`.
pub fn windowize(series: &EventSeries, delta: usize) -> Result<WindowSeries> {
    if delta == 0 {
        return Err(invalid_param("window length must be at least one day"));
    }
    let windows: Vec<WindowStat> = series
        .counts()
        .chunks(delta)
        .map(|c| WindowStat {
            x: c.iter().filter(|&&m| m > 0).count() as u64,
            y: c.iter().sum(),
            len: c.len(),
        })
        .collect();
    Ok(WindowSeries {
        delta,
        partial_last: !series.len().is_multiple_of(delta),
        windows,
        days: series.len(),
    })
}

/// Activity days `t_1..t_N` (1-based) and durations `ΔT_k = t_k - t_{k-1}` with `t_0 = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterArrivalSeries {
    t_list: Vec<u64>,
    durations: Vec<u64>,
}

impl InterArrivalSeries {
    /// Builds from 1-based, strictly increasing activity days.
    pub fn from_days(t_list: Vec<u64>) -> Result<Self> {
        if t_list.is_empty() {
            return Err(Error::Degenerate("no activity days".into()));
        }
        let mut prev = 0u64;
        let mut durations = Vec::with_capacity(t_list.len());
        for &t in &t_list {
            if t <= prev {
                return Err(invalid_input("activity days must be positive and strictly increasing"));
            }
            durations.push(t - prev);
            prev = t;
        }
        Ok(Self { t_list, durations })
    }

    /// Builds from positive durations, starting at `t_0 = 0`.
    pub fn from_durations(durations: Vec<u64>) -> Result<Self> {
        if durations.is_empty() {
            return Err(Error::Degenerate("no durations".into()));
        }
        if durations.contains(&0) {
            return Err(invalid_input("durations must be positive"));
        }
        let t_list = durations
            .iter()
            .scan(0u64, |acc, &d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        Ok(Self { t_list, durations })
    }

    pub fn t_list(&self) -> &[u64] {
        &self.t_list
    }

    pub fn durations(&self) -> &[u64] {
        &self.durations
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }
}

pub fn interarrivals(series: &EventSeries) -> Result<InterArrivalSeries> {
    let days: Vec<u64> = series
        .counts()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0)
        .map(|(i, _)| i as u64 + 1)
        .collect();
    if days.is_empty() {
        return Err(Error::Degenerate("series has no day with activity".into()));
    }
    InterArrivalSeries::from_days(days)
}

/// Progressively augments `base` with `extra` records, one activity day per calendar year per step.
///
/// Extra records are summed per date and sorted; step `j` adds the `j`-th day of each year.
/// At most `steps` augmented series are returned; with nothing to add the result is `[base]`.
pub fn merge_missing(base: &EventSeries, extra: &[EventRecord], steps: usize) -> Result<Vec<EventSeries>> {
    let mut by_day: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for r in extra {
        if base.index_of(r.date).is_none() {
            return Err(invalid_input(format!("record {} lies outside the base span", r.date)));
        }
        *by_day.entry(r.date).or_default() += r.count;
    }
    let mut by_year: BTreeMap<i32, Vec<(NaiveDate, u64)>> = BTreeMap::new();
    for (d, c) in by_day {
        if c > 0 {
            by_year.entry(d.year()).or_default().push((d, c));
        }
    }
    let n_batches = by_year.values().map(Vec::len).max().unwrap_or(0).min(steps);
    if n_batches == 0 {
        return Ok(vec![base.clone()]);
    }
    let mut out = Vec::with_capacity(n_batches);
    let mut counts = base.counts().to_vec();
    for j in 0..n_batches {
        for days in by_year.values() {
            if let Some(&(d, c)) = days.get(j) {
                let idx = base.index_of(d).expect("checked above");
                counts[idx] += c;
            }
        }
        out.push(EventSeries::new(base.start(), counts.clone())?);
    }
    Ok(out)
}
