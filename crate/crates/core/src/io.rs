//! CSV and JSON readers/writers for series, state paths and AIC tables.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::emissions::{StateFits, HISTOGRAM_BUCKETS};
use crate::error::{invalid_input, Result};
use crate::hmm::{Observations, StatePath};
use crate::scalar::Real;
use crate::series::{ingest, EventRecord, EventSeries};

const DATE_FORMAT: &str = "%Y-%m-%d";

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| invalid_input(format!("line {line}: bad date `{s}`: {e}")))
}

/// Reads either a `date,count` table or an incident list with a `date` column (one row per event).
pub fn read_records<R: Read>(r: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = col("date").ok_or_else(|| invalid_input("input needs a `date` column"))?;
    let count_col = col("count");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let date = parse_date(rec.get(date_col).unwrap_or(""), line)?;
        let count = match count_col {
            Some(c) => {
                let raw = rec.get(c).unwrap_or("");
                raw.parse::<u64>().map_err(|_| invalid_input(format!("line {line}: count `{raw}` is not a non-negative integer")))?
            }
            None => 1,
        };
        out.push(EventRecord::new(date, count));
    }
    Ok(out)
}

pub fn read_series<R: Read>(r: R, span: Option<(NaiveDate, NaiveDate)>) -> Result<EventSeries> {
    ingest(&read_records(r)?, span)
}

pub fn read_series_file(path: &Path, span: Option<(NaiveDate, NaiveDate)>) -> Result<EventSeries> {
    read_series(std::fs::File::open(path)?, span)
}

/// One `date,count` row per day, zeros included.
pub fn write_series<W: Write>(series: &EventSeries, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "count"])?;
    for (i, &c) in series.counts().iter().enumerate() {
        wtr.write_record([series.date_of(i).format(DATE_FORMAT).to_string(), c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Window path: `window,start_day,start_date,x,y,state,p_active`; duration path:
/// `step,day,date,duration,state,p_active`. `p_active` is the posterior of the highest state.
pub fn write_state_path<T: Real, W: Write>(series: &EventSeries, obs: &Observations, delta: usize, path: &StatePath<T>, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let active = |k: usize| path.posteriors[k].last().copied().unwrap_or(T::zero()).to_string();
    match obs {
        Observations::Windows(win) => {
            wtr.write_record(["window", "start_day", "start_date", "x", "y", "state", "p_active"])?;
            for (k, o) in win.iter().enumerate() {
                let start = k * delta;
                wtr.write_record([
                    (k + 1).to_string(),
                    (start + 1).to_string(),
                    series.date_of(start).format(DATE_FORMAT).to_string(),
                    o.x.to_string(),
                    o.y.to_string(),
                    path.states[k].to_string(),
                    active(k),
                ])?;
            }
        }
        Observations::Durations(d) => {
            wtr.write_record(["step", "day", "date", "duration", "state", "p_active"])?;
            let mut day = 0u64;
            for (k, &dt) in d.iter().enumerate() {
                day += dt;
                wtr.write_record([
                    (k + 1).to_string(),
                    day.to_string(),
                    series.date_of(day as usize - 1).format(DATE_FORMAT).to_string(),
                    dt.to_string(),
                    path.states[k].to_string(),
                    active(k),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Long-form AIC table: one observed row per state, then one row per family with its
/// parameters and expected bucket counts.
pub fn write_aic_table<T: Real, W: Write>(table: &[StateFits<T>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["state".to_string(), "row".to_string()];
    header.extend((0..HISTOGRAM_BUCKETS - 1).map(|k| format!("n{k}")));
    header.push(format!("n_gt{}", HISTOGRAM_BUCKETS - 2));
    header.extend(["params".into(), "log_likelihood".into(), "aic".into(), "boundary".into()]);
    wtr.write_record(&header)?;
    for s in table {
        let mut row = vec![s.state.to_string(), "observed".to_string()];
        row.extend(s.observed.iter().map(|c| c.to_string()));
        row.extend([String::new(), String::new(), String::new(), String::new()]);
        wtr.write_record(&row)?;
        for f in &s.fits {
            let mut row = vec![s.state.to_string(), f.fit.model.family().short_name().to_string()];
            row.extend(f.expected.iter().map(|c| c.to_string()));
            let params: Vec<String> = f.fit.model.params().iter().map(|p| p.to_string()).collect();
            row.extend([params.join(";"), f.fit.log_likelihood.to_string(), f.fit.aic.to_string(), f.fit.boundary.to_string()]);
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize, W: Write>(value: &S, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<S: DeserializeOwned, R: Read>(r: R) -> Result<S> {
    Ok(serde_json::from_reader(r)?)
}
