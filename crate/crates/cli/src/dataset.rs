//! Per-exchange daily open/close price files and their conversion to
//! per-event log returns.
//!
//! Each exchange has one `<stem>.csv` with a `date,open,close` header and ISO
//! dates, where `<stem>` is [`file_stem`] of the exchange name.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use pricequake_core::market::{build_calendar_with_sessions, EventCalendar};
use pricequake_core::{ExchangeSpec, SessionKind};

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRow {
    pub date: NaiveDate,
    pub open: f64,
    pub close: f64,
}

/// Rows of one exchange, dates strictly increasing, prices positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub exchange: ExchangeSpec,
    pub rows: Vec<PriceRow>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriceDataset {
    pub series: Vec<PriceSeries>,
}

/// A rejected row. `line` counts the header as line 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub file: PathBuf,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file.display(), self.line, self.message)
    }
}

/// Lowercase name with every non-alphanumeric character replaced by `_`.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn series_path(dir: &Path, exchange: &ExchangeSpec) -> PathBuf {
    dir.join(format!("{}.csv", file_stem(&exchange.name)))
}

/// Parses one price file, collecting every bad row instead of stopping at the first.
pub fn parse_series(reader: impl Read, file: &Path) -> Result<Vec<PriceRow>, Vec<RowError>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let err = |line: usize, message: String| RowError {
        file: file.to_path_buf(),
        line,
        message,
    };
    let mut errors = Vec::new();
    match rdr.headers() {
        Ok(h) if h.is_empty() => return Ok(Vec::new()),
        Ok(h) => {
            let cols: Vec<&str> = h.iter().collect();
            if cols != ["date", "open", "close"] {
                return Err(vec![err(1, format!("expected header date,open,close, found {}", cols.join(",")))]);
            }
        }
        Err(e) => return Err(vec![err(1, e.to_string())]),
    }
    let mut rows: Vec<PriceRow> = Vec::new();
    let mut last_date: Option<NaiveDate> = None;
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                errors.push(err(line, e.to_string()));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line() as usize);
        let date = match NaiveDate::parse_from_str(&record[0], DATE_FORMAT) {
            Ok(d) => d,
            Err(_) => {
                errors.push(err(line, format!("unparseable date {:?}", &record[0])));
                continue;
            }
        };
        let mut prices = [0.0; 2];
        let mut ok = true;
        for (k, col) in ["open", "close"].iter().enumerate() {
            match record[k + 1].parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => prices[k] = v,
                Ok(v) => {
                    errors.push(err(line, format!("{col} price must be positive, found {v}")));
                    ok = false;
                }
                Err(_) => {
                    errors.push(err(line, format!("unparseable {col} price {:?}", &record[k + 1])));
                    ok = false;
                }
            }
        }
        if let Some(prev) = last_date {
            if date == prev {
                errors.push(err(line, format!("duplicate date {date}")));
                continue;
            }
            if date < prev {
                errors.push(err(line, format!("date {date} is earlier than the previous row {prev}")));
                continue;
            }
        }
        last_date = Some(date);
        if ok {
            rows.push(PriceRow {
                date,
                open: prices[0],
                close: prices[1],
            });
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(errors)
    }
}

pub struct Ingested {
    pub dataset: PriceDataset,
    pub warnings: Vec<String>,
}

/// Reads one file per exchange in parallel. Exchanges with an empty file are
/// dropped with a warning and the survivors are renumbered in registry order.
/// Any bad row anywhere aborts with all diagnostics listed.
pub fn ingest(dir: &Path, exchanges: &[ExchangeSpec]) -> Result<Ingested> {
    let results: Vec<Result<Result<Vec<PriceRow>, Vec<RowError>>>> = thread::scope(|s| {
        let handles: Vec<_> = exchanges
            .iter()
            .map(|ex| {
                s.spawn(move || {
                    let path = series_path(dir, ex);
                    let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                    Ok(parse_series(file, &path))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("reader thread panicked"))))
            .collect()
    });

    let mut series = Vec::new();
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    for (ex, result) in exchanges.iter().zip(results) {
        match result? {
            Ok(rows) if rows.is_empty() => {
                warnings.push(format!("{}: no price rows, exchange excluded", ex.name));
            }
            Ok(rows) => {
                let mut exchange = ex.clone();
                exchange.id = series.len();
                series.push(PriceSeries { exchange, rows });
            }
            Err(e) => errors.extend(e),
        }
    }
    if !errors.is_empty() {
        let list: Vec<String> = errors.iter().map(ToString::to_string).collect();
        bail!("{} malformed price row(s):\n{}", errors.len(), list.join("\n"));
    }
    if series.is_empty() {
        bail!("no exchange has price data");
    }
    Ok(Ingested {
        dataset: PriceDataset { series },
        warnings,
    })
}

pub fn write_series(writer: impl Write, rows: &[PriceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "open", "close"])?;
    for r in rows {
        w.write_record([r.date.format(DATE_FORMAT).to_string(), r.open.to_string(), r.close.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `exchanges.csv` plus one price file per exchange.
pub fn write_dataset(dir: &Path, dataset: &PriceDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let exchanges: Vec<ExchangeSpec> = dataset.series.iter().map(|s| s.exchange.clone()).collect();
    crate::config::write_registry(fs::File::create(dir.join("exchanges.csv"))?, &exchanges)?;
    for s in &dataset.series {
        write_series(fs::File::create(series_path(dir, &s.exchange))?, &s.rows)?;
    }
    Ok(())
}

/// Calendar and observed returns aligned event by event.
pub struct EventReturns {
    pub exchanges: Vec<ExchangeSpec>,
    /// Trading dates, one calendar day each.
    pub dates: Vec<NaiveDate>,
    pub calendar: EventCalendar,
    /// One entry per calendar event; `None` where no return is defined.
    pub observed: Vec<Option<f64>>,
}

/// Builds the calendar over the union of all trading dates. An exchange
/// without a row on a date has no events that day. Close events carry
/// `ln(close/open)`, open events `ln(open/previous close)`; the very first
/// open of each exchange has no return.
pub fn to_event_returns(dataset: &PriceDataset) -> Result<EventReturns> {
    let exchanges: Vec<ExchangeSpec> = dataset.series.iter().map(|s| s.exchange.clone()).collect();
    let mut day_of: BTreeMap<NaiveDate, u32> = BTreeMap::new();
    for s in &dataset.series {
        for r in &s.rows {
            day_of.insert(r.date, 0);
        }
    }
    for (k, v) in day_of.values_mut().enumerate() {
        *v = u32::try_from(k).context("too many trading days")?;
    }
    let dates: Vec<NaiveDate> = day_of.keys().copied().collect();
    // rows_by_day[id][day] = index into that exchange's rows
    let mut rows_by_day: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); exchanges.len()];
    for (id, s) in dataset.series.iter().enumerate() {
        for (k, r) in s.rows.iter().enumerate() {
            rows_by_day[id].insert(day_of[&r.date], k);
        }
    }
    let num_days = u32::try_from(dates.len()).context("too many trading days")?;
    let calendar = build_calendar_with_sessions(&exchanges, num_days, |day, id| rows_by_day[id].contains_key(&day))?;

    let observed = calendar
        .events()
        .map(|e| {
            let rows = &dataset.series[e.exchange].rows;
            let k = rows_by_day[e.exchange][&e.day];
            match e.kind {
                SessionKind::Close => Some((rows[k].close / rows[k].open).ln()),
                SessionKind::Open if k == 0 => None,
                SessionKind::Open => Some((rows[k].open / rows[k - 1].close).ln()),
            }
        })
        .collect();
    Ok(EventReturns {
        exchanges,
        dates,
        calendar,
        observed,
    })
}
