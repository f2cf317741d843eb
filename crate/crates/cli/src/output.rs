//! On-disk formats.
//!
//! Line-delimited JSON files start with a `header` line followed by tagged
//! body lines. Tables are CSV with a header row. Floats are written in their
//! shortest round-trip form, so identical runs give identical bytes.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pricequake_core::detector::{raster, AvalancheRecord, CriticalNode, QuakeKind, RasterCell, Role, Sign};
use pricequake_core::engine::{EventOutcome, PriceSeries};
use pricequake_core::stats::{
    degree_stats, distribution, role_counts, source_ranking, spread_by_source, summarize, Measure, QuakeSummary,
    ROLE_ORDER,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomesHeader {
    /// Exchange names in id order.
    pub exchanges: Vec<String>,
    pub threshold: f64,
    /// First event group outside the warm-up.
    pub measure_from_group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum OutcomeLine {
    Header(OutcomesHeader),
    Outcome(EventOutcome),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordsHeader {
    pub kind: QuakeKind,
    pub exchanges: Vec<String>,
    pub threshold: f64,
    pub measure_from_group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RecordLine {
    Header(RecordsHeader),
    Quake(AvalancheRecord),
    Critical(CriticalNode),
}

pub fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_jsonl<T: Serialize>(path: &Path, lines: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for line in lines {
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), k + 1))?);
    }
    Ok(out)
}

pub fn write_outcomes(path: &Path, header: &OutcomesHeader, outcomes: &[EventOutcome]) -> Result<()> {
    let lines = std::iter::once(OutcomeLine::Header(header.clone()))
        .chain(outcomes.iter().cloned().map(OutcomeLine::Outcome));
    write_jsonl(path, lines)
}

pub fn read_outcomes(path: &Path) -> Result<(OutcomesHeader, Vec<EventOutcome>)> {
    let mut lines = read_jsonl::<OutcomeLine>(path)?.into_iter();
    let Some(OutcomeLine::Header(header)) = lines.next() else {
        bail!("{}: first line must be the header", path.display());
    };
    let mut outcomes = Vec::new();
    for line in lines {
        match line {
            OutcomeLine::Outcome(o) => {
                if o.event.exchange >= header.exchanges.len() {
                    bail!("{}: outcome for unknown exchange {}", path.display(), o.event.exchange);
                }
                outcomes.push(o);
            }
            OutcomeLine::Header(_) => bail!("{}: second header line", path.display()),
        }
    }
    Ok((header, outcomes))
}

/// What the reports are computed from: one kind's measured quakes and critical nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    pub header: RecordsHeader,
    pub quakes: Vec<AvalancheRecord>,
    pub nodes: Vec<CriticalNode>,
}

pub fn write_records(path: &Path, set: &RecordSet) -> Result<()> {
    let lines = std::iter::once(RecordLine::Header(set.header.clone()))
        .chain(set.quakes.iter().cloned().map(RecordLine::Quake))
        .chain(set.nodes.iter().copied().map(RecordLine::Critical));
    write_jsonl(path, lines)
}

pub fn read_records(path: &Path) -> Result<RecordSet> {
    let mut lines = read_jsonl::<RecordLine>(path)?.into_iter();
    let Some(RecordLine::Header(header)) = lines.next() else {
        bail!("{}: first line must be the header", path.display());
    };
    let n = header.exchanges.len();
    let mut set = RecordSet {
        header,
        quakes: Vec::new(),
        nodes: Vec::new(),
    };
    for line in lines {
        match line {
            RecordLine::Quake(q) => {
                if q.kind != set.header.kind || q.members.iter().any(|&m| m >= n) {
                    bail!("{}: quake does not match the header", path.display());
                }
                set.quakes.push(q);
            }
            RecordLine::Critical(c) if c.event.exchange < n => set.nodes.push(c),
            RecordLine::Critical(_) => bail!("{}: critical node for unknown exchange", path.display()),
            RecordLine::Header(_) => bail!("{}: second header line", path.display()),
        }
    }
    Ok(set)
}

fn sign_code(s: Sign) -> char {
    match s {
        Sign::Positive => '+',
        Sign::Negative => '-',
    }
}

fn role_code(r: Role) -> char {
    match r {
        Role::Influenced => 'I',
        Role::Source => 'S',
        Role::Excluded => 'X',
    }
}

/// Group-by-exchange picture: `.` no event, `0` not critical, otherwise sign
/// and role such as `+I`, `-S` or `+X`.
pub fn write_raster(path: &Path, exchanges: &[String], outcomes: &[EventOutcome], nodes: &[CriticalNode]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut head = vec!["group".to_string(), "day".into(), "slot".into(), "utc_hour".into()];
    head.extend(exchanges.iter().cloned());
    w.write_record(&head)?;
    for row in raster(outcomes, nodes, exchanges.len()) {
        let mut rec = vec![row.group.to_string(), row.day.to_string(), row.slot.to_string(), row.utc_hour.to_string()];
        rec.extend(row.cells.iter().map(|c| match c {
            RasterCell::Idle => ".".to_string(),
            RasterCell::NotCritical => "0".to_string(),
            RasterCell::Critical { sign, role } => format!("{}{}", sign_code(*sign), role_code(*role)),
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_prices(path: &Path, exchanges: &[String], prices: &PriceSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["exchange", "group", "day", "session", "utc_hour", "price", "return"])?;
    for (id, series) in prices.series.iter().enumerate() {
        for p in series {
            let session = match p.event.kind {
                pricequake_core::SessionKind::Open => "open",
                pricequake_core::SessionKind::Close => "close",
            };
            w.write_record([
                exchanges[id].clone(),
                p.event.group.to_string(),
                p.event.day.to_string(),
                session.to_string(),
                p.event.utc_hour.to_string(),
                p.price.to_string(),
                p.ret.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn kind_name(k: QuakeKind) -> &'static str {
    match k {
        QuakeKind::Sipq => "SIPQ",
        QuakeKind::Cipq => "CIPQ",
    }
}

fn sign_name(s: Option<Sign>) -> &'static str {
    match s {
        Some(Sign::Negative) => "negative",
        Some(Sign::Positive) => "positive",
        None => "total",
    }
}

/// Summary rows (count, mean size, mean duration in days) for the given kinds.
pub fn write_summary(path: &Path, summary: &QuakeSummary, kinds: &[QuakeKind]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["kind", "sign", "count", "mean_members", "mean_duration_days"])?;
    for r in summary.rows.iter().filter(|r| kinds.contains(&r.kind)) {
        w.write_record([
            kind_name(r.kind).to_string(),
            sign_name(r.sign).to_string(),
            r.count.to_string(),
            r.mean_members.to_string(),
            r.mean_duration_days.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Excluded => "excluded",
        Role::Source => "source",
        Role::Influenced => "influenced",
    }
}

const SIGN_COLUMNS: [(Sign, &str); 2] = [(Sign::Positive, "pos"), (Sign::Negative, "neg")];

/// Every table and PDF for one record set, written into `dir`.
pub fn write_reports(dir: &Path, set: &RecordSet) -> Result<()> {
    let names = &set.header.exchanges;
    let n = names.len();
    write_summary(&dir.join("summary.csv"), &summarize(&set.quakes), &[set.header.kind])?;

    let roles = role_counts(&set.nodes, n);
    let mut head = vec!["exchange".to_string()];
    for (_, s) in SIGN_COLUMNS {
        head.extend(ROLE_ORDER.iter().map(|r| format!("{s}_{}", role_name(*r))));
        head.push(format!("{s}_total"));
    }
    let mut counts = csv::Writer::from_writer(create(&dir.join("roles.csv"))?);
    let mut pct = csv::Writer::from_writer(create(&dir.join("roles_pct.csv"))?);
    counts.write_record(&head)?;
    pct.write_record(&head)?;
    for (x, row) in roles.rows.iter().enumerate() {
        let mut c = vec![names[x].clone()];
        let mut p = vec![names[x].clone()];
        for (sign, _) in SIGN_COLUMNS {
            c.extend(ROLE_ORDER.iter().map(|r| row.get(sign, *r).to_string()));
            c.push(row.total(sign).to_string());
            p.extend(row.percentages(sign).iter().map(ToString::to_string));
            p.push(row.total(sign).to_string());
        }
        counts.write_record(&c)?;
        pct.write_record(&p)?;
    }
    counts.flush()?;
    pct.flush()?;

    // Degree columns follow the stats layout: positive, negative, both.
    let degrees = degree_stats(&set.quakes, n);
    let mut w = csv::Writer::from_writer(create(&dir.join("degrees.csv"))?);
    let mut head = vec!["exchange".to_string()];
    for s in ["pos", "neg", "all"] {
        head.extend([format!("{s}_in"), format!("{s}_out"), format!("{s}_delta")]);
    }
    w.write_record(&head)?;
    let label = names.iter().map(String::as_str).chain(std::iter::once("average"));
    for (name, row) in label.zip(degrees.rows.iter().chain(std::iter::once(&degrees.network))) {
        let mut rec = vec![name.to_string()];
        for d in row {
            rec.extend([d.mean_in.to_string(), d.mean_out.to_string(), d.delta().to_string()]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&dir.join("sources.csv"))?);
    w.write_record(["exchange", "percent_of_quakes"])?;
    for (x, p) in source_ranking(&set.quakes, n) {
        w.write_record([names[x].clone(), p.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&dir.join("spread.csv"))?);
    w.write_record(["exchange", "positive", "negative", "all"])?;
    for (x, row) in spread_by_source(&set.quakes, n).iter().enumerate() {
        w.write_record([names[x].clone(), row[0].to_string(), row[1].to_string(), row[2].to_string()])?;
    }
    w.flush()?;

    for (file, measure) in [("size_pdf.csv", Measure::Size), ("duration_pdf.csv", Measure::DurationEvents)] {
        let mut w = csv::Writer::from_writer(create(&dir.join(file))?);
        w.write_record(["bin", "probability"])?;
        // No quakes means no distribution; the file keeps only its header.
        if !set.quakes.is_empty() {
            for b in distribution(&set.quakes, measure)? {
                w.write_record([b.lower.to_string(), b.probability.to_string()])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}
