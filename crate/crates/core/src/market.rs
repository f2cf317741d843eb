//! Exchange registry and the global open/close event calendar.
//!
//! Each trading day every participating exchange contributes one `Open` and
//! one `Close` event. Events at the same UTC hour form a simultaneous group:
//! the engine evaluates all of them against the same tensor snapshot, so no
//! event in a group can feed another.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Result};

pub type ExchangeId = usize;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExchangeSpec {
    pub id: ExchangeId,
    pub name: String,
    /// Relative capitalization `K_i`.
    pub capitalization: f64,
    /// Hours offset from UTC, `z_i`.
    pub time_zone: f64,
    /// UTC hour of the open, in `[0, 24)`.
    pub open_hour: f64,
    /// UTC hour of the close, in `[0, 24)`.
    pub close_hour: f64,
}

impl ExchangeSpec {
    pub fn new(
        id: ExchangeId,
        name: impl Into<String>,
        capitalization: f64,
        time_zone: f64,
        open_hour: f64,
        close_hour: f64,
    ) -> Self {
        Self {
            id,
            name: name.into(),
            capitalization,
            time_zone,
            open_hour,
            close_hour,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason| Error::InvalidExchange { id: self.id, reason };
        if !(self.capitalization.is_finite() && self.capitalization > 0.0) {
            return Err(invalid("capitalization must be positive"));
        }
        if !self.time_zone.is_finite() {
            return Err(invalid("time zone must be finite"));
        }
        let in_day = |h: f64| (0.0..24.0).contains(&h);
        if !in_day(self.open_hour) || !in_day(self.close_hour) {
            return Err(invalid("open and close hours must lie in [0, 24)"));
        }
        if self.open_hour == self.close_hour {
            return Err(invalid("open and close hours must differ"));
        }
        Ok(())
    }

    pub fn session_hour(&self, kind: SessionKind) -> f64 {
        match kind {
            SessionKind::Open => self.open_hour,
            SessionKind::Close => self.close_hour,
        }
    }
}

/// Checks a registry: non-empty, every spec valid, ids unique and covering `0..N`.
///
/// Returns the position of each id in the slice.
pub fn validate_registry(exchanges: &[ExchangeSpec]) -> Result<Vec<usize>> {
    if exchanges.is_empty() {
        return Err(Error::NoExchanges);
    }
    let n = exchanges.len();
    let mut position = vec![usize::MAX; n];
    for (pos, ex) in exchanges.iter().enumerate() {
        ex.validate()?;
        if ex.id >= n {
            return Err(Error::NonContiguousExchangeId(ex.id));
        }
        if position[ex.id] != usize::MAX {
            return Err(Error::DuplicateExchangeId(ex.id));
        }
        position[ex.id] = pos;
    }
    Ok(position)
}

/// How the hour gap between two time zones is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ZoneDistance {
    /// `|z_a - z_b|`.
    #[default]
    Absolute,
    /// Shortest way around the 24 hour clock, at most 12.
    Circular,
}

impl ZoneDistance {
    pub fn gap(self, a: &ExchangeSpec, b: &ExchangeSpec) -> f64 {
        match self {
            ZoneDistance::Absolute => time_zone_gap(a, b),
            ZoneDistance::Circular => {
                let d = libm::fmod(time_zone_gap(a, b), 24.0);
                d.min(24.0 - d)
            }
        }
    }
}

/// Plain absolute time-zone difference in hours.
pub fn time_zone_gap(a: &ExchangeSpec, b: &ExchangeSpec) -> f64 {
    (a.time_zone - b.time_zone).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SessionKind {
    Open,
    Close,
}

/// One open or close of one exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarketEvent {
    pub exchange: ExchangeId,
    pub kind: SessionKind,
    pub day: u32,
    /// Position of this event's hour among the day's distinct hours.
    pub slot: u32,
    /// Index of the simultaneous group across the whole calendar.
    pub group: usize,
    pub utc_hour: f64,
}

impl MarketEvent {
    /// Calendar time in days, `day + utc_hour / 24`.
    pub fn day_time(&self) -> f64 {
        f64::from(self.day) + self.utc_hour / 24.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventGroup {
    pub utc_hour: f64,
    /// Events sharing `utc_hour`, in ascending exchange id.
    pub events: Vec<MarketEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalendarDay {
    pub day: u32,
    pub groups: Vec<EventGroup>,
}

/// Immutable, ordered sequence of simultaneous event groups.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCalendar {
    num_exchanges: usize,
    days: Vec<CalendarDay>,
}

impl EventCalendar {
    pub fn num_exchanges(&self) -> usize {
        self.num_exchanges
    }

    pub fn days(&self) -> &[CalendarDay] {
        &self.days
    }

    pub fn groups(&self) -> impl Iterator<Item = &EventGroup> + '_ {
        self.days.iter().flat_map(|d| d.groups.iter())
    }

    pub fn events(&self) -> impl Iterator<Item = &MarketEvent> + '_ {
        self.groups().flat_map(|g| g.events.iter())
    }

    pub fn event_count(&self) -> usize {
        self.groups().map(|g| g.events.len()).sum()
    }

    pub fn group_count(&self) -> usize {
        self.days.iter().map(|d| d.groups.len()).sum()
    }

    /// Number of events that fall on days before `day`.
    pub fn events_before_day(&self, day: u32) -> usize {
        self.days
            .iter()
            .take_while(|d| d.day < day)
            .flat_map(|d| d.groups.iter())
            .map(|g| g.events.len())
            .sum()
    }
}

/// Calendar in which every exchange trades on every day.
pub fn build_calendar(exchanges: &[ExchangeSpec], num_days: u32) -> Result<EventCalendar> {
    build_calendar_with_sessions(exchanges, num_days, |_, _| true)
}

/// Calendar where `present(day, id)` decides whether exchange `id` trades on
/// `day`. Absent sessions simply produce no events.
pub fn build_calendar_with_sessions(
    exchanges: &[ExchangeSpec],
    num_days: u32,
    mut present: impl FnMut(u32, ExchangeId) -> bool,
) -> Result<EventCalendar> {
    validate_registry(exchanges)?;
    if num_days == 0 {
        return Err(Error::NoDays);
    }
    let mut by_id: Vec<&ExchangeSpec> = exchanges.iter().collect();
    by_id.sort_by_key(|e| e.id);

    let mut days = Vec::with_capacity(num_days as usize);
    let mut group_index = 0usize;
    let mut raw: Vec<(f64, ExchangeId, SessionKind)> = Vec::with_capacity(2 * by_id.len());
    for day in 0..num_days {
        raw.clear();
        for ex in &by_id {
            if present(day, ex.id) {
                raw.push((ex.open_hour, ex.id, SessionKind::Open));
                raw.push((ex.close_hour, ex.id, SessionKind::Close));
            }
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut groups: Vec<EventGroup> = Vec::new();
        for &(hour, exchange, kind) in &raw {
            let starts_new = groups
                .last()
                .is_none_or(|g| g.utc_hour.total_cmp(&hour) != Ordering::Equal);
            if starts_new {
                groups.push(EventGroup {
                    utc_hour: hour,
                    events: Vec::new(),
                });
            }
            let slot = (groups.len() - 1) as u32;
            let group = group_index + groups.len() - 1;
            groups.last_mut().expect("pushed above").events.push(MarketEvent {
                exchange,
                kind,
                day,
                slot,
                group,
                utc_hour: hour,
            });
        }
        group_index += groups.len();
        days.push(CalendarDay { day, groups });
    }
    Ok(EventCalendar {
        num_exchanges: by_id.len(),
        days,
    })
}

/// `(name, capitalization, time_zone, open_hour, close_hour)` for 24 major
/// stock indices. Hours are approximate UTC session times; capitalizations
/// are synthetic relative sizes, not market data.
pub const SAMPLE_REGISTRY: [(&str, f64, f64, f64, f64); 24] = [
    ("AUSTRALIA", 1.0, 10.0, 0.0, 6.0),
    ("JAPAN", 3.1, 9.0, 0.0, 6.0),
    ("SOUTH KOREA", 0.5, 9.0, 0.0, 6.0),
    ("CHINA", 2.8, 8.0, 1.5, 7.0),
    ("HONG KONG", 1.3, 8.0, 1.5, 8.0),
    ("TAIWAN", 0.4, 8.0, 1.0, 5.5),
    ("SINGAPORE", 0.3, 8.0, 1.0, 9.0),
    ("MALAYSIA", 0.2, 8.0, 1.0, 9.0),
    ("INDONESIA", 0.1, 7.0, 2.5, 9.0),
    ("INDIA", 0.6, 5.5, 3.75, 10.0),
    ("ISRAEL", 0.13, 2.0, 7.5, 14.5),
    ("EGYPT", 0.08, 2.0, 8.5, 12.5),
    ("U.K.", 1.9, 0.0, 8.0, 16.5),
    ("FRANCE", 1.5, 1.0, 8.0, 16.5),
    ("GERMANY", 1.1, 1.0, 8.0, 16.5),
    ("SWITZERLAND", 0.9, 1.0, 8.0, 16.5),
    ("ITALY", 0.5, 1.0, 8.0, 16.5),
    ("NETHERLANDS", 0.4, 1.0, 8.0, 16.5),
    ("AUSTRIA", 0.08, 1.0, 8.0, 16.5),
    ("ARGENTINE", 0.05, -3.0, 14.0, 20.0),
    ("BRASIL", 0.6, -3.0, 13.0, 20.0),
    ("U.S.", 11.0, -5.0, 14.5, 21.0),
    ("CANADA", 1.0, -5.0, 14.5, 21.0),
    ("MEXICO", 0.2, -6.0, 14.5, 21.0),
];

/// [`SAMPLE_REGISTRY`] as exchange specs with ids in table order.
pub fn sample_registry() -> Vec<ExchangeSpec> {
    SAMPLE_REGISTRY
        .iter()
        .enumerate()
        .map(|(id, &(name, cap, tz, open, close))| ExchangeSpec::new(id, name, cap, tz, open, close))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn ex(id: usize, tz: f64, open: f64, close: f64) -> ExchangeSpec {
        ExchangeSpec::new(id, format!("X{id}"), 1.0, tz, open, close)
    }

    #[test]
    fn twenty_four_exchanges_give_48_events_per_day() {
        let exchanges: Vec<_> = (0..24)
            .map(|i| ex(i, 0.0, (i % 8) as f64, 12.0 + (i % 5) as f64))
            .collect();
        let cal = build_calendar(&exchanges, 1).unwrap();
        assert_eq!(cal.event_count(), 48);
        assert_eq!(cal.group_count(), 8 + 5);
    }

    #[test]
    fn single_exchange_has_two_singleton_groups() {
        let cal = build_calendar(&[ex(0, 1.0, 8.0, 16.5)], 1).unwrap();
        let day = &cal.days()[0];
        assert_eq!(day.groups.len(), 2);
        assert!(day.groups.iter().all(|g| g.events.len() == 1));
        assert_eq!(day.groups[0].events[0].kind, SessionKind::Open);
        assert_eq!(day.groups[1].events[0].kind, SessionKind::Close);
    }

    #[test]
    fn identical_hours_are_simultaneous() {
        let exchanges = [ex(0, 0.0, 9.0, 17.0), ex(1, 1.0, 9.0, 17.0), ex(2, 2.0, 9.0, 17.0)];
        let cal = build_calendar(&exchanges, 1).unwrap();
        let groups = &cal.days()[0].groups;
        assert_eq!(groups.len(), 2);
        for g in groups {
            assert_eq!(g.events.len(), 3);
            let ids: Vec<_> = g.events.iter().map(|e| e.exchange).collect();
            assert_eq!(ids, [0, 1, 2]);
        }
    }

    #[test]
    fn group_indices_run_across_days() {
        let cal = build_calendar(&[ex(0, 0.0, 1.0, 2.0), ex(1, 0.0, 3.0, 4.0)], 3).unwrap();
        let groups: Vec<_> = cal.events().map(|e| e.group).collect();
        assert_eq!(groups, [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11]);
        assert_eq!(cal.events_before_day(2), 8);
    }

    #[test]
    fn registry_errors() {
        assert_eq!(build_calendar(&[], 1), Err(Error::NoExchanges));
        let dup = [ex(0, 0.0, 1.0, 2.0), ex(0, 0.0, 3.0, 4.0)];
        assert_eq!(build_calendar(&dup, 1), Err(Error::DuplicateExchangeId(0)));
        let gap = [ex(0, 0.0, 1.0, 2.0), ex(2, 0.0, 3.0, 4.0)];
        assert_eq!(build_calendar(&gap, 1), Err(Error::NonContiguousExchangeId(2)));
        assert_eq!(build_calendar(&[ex(0, 0.0, 1.0, 2.0)], 0), Err(Error::NoDays));
        let same = [ex(0, 0.0, 5.0, 5.0)];
        assert!(matches!(build_calendar(&same, 1), Err(Error::InvalidExchange { .. })));
        let mut neg = ex(0, 0.0, 1.0, 2.0);
        neg.capitalization = 0.0;
        assert!(matches!(build_calendar(&[neg], 1), Err(Error::InvalidExchange { .. })));
    }

    #[test]
    fn ids_may_arrive_out_of_order() {
        let cal = build_calendar(&[ex(1, 0.0, 1.0, 2.0), ex(0, 0.0, 1.0, 2.0)], 1).unwrap();
        let ids: Vec<_> = cal.days()[0].groups[0].events.iter().map(|e| e.exchange).collect();
        assert_eq!(ids, [0, 1]);
    }

    #[test]
    fn missing_sessions_are_omitted() {
        let exchanges = [ex(0, 0.0, 1.0, 2.0), ex(1, 0.0, 3.0, 4.0)];
        let cal = build_calendar_with_sessions(&exchanges, 4, |day, id| !(id == 1 && day % 2 == 0))
            .unwrap();
        assert_eq!(cal.event_count(), 2 * (4 + 2));
    }

    #[test]
    fn zone_gaps() {
        let japan = ex(0, 9.0, 0.0, 6.0);
        let us = ex(1, -5.0, 14.5, 21.0);
        assert_eq!(time_zone_gap(&japan, &japan), 0.0);
        assert_eq!(time_zone_gap(&japan, &us), 14.0);
        assert_eq!(time_zone_gap(&ex(0, 1.0, 0.0, 1.0), &ex(1, 2.0, 0.0, 1.0)), 1.0);
        assert_eq!(ZoneDistance::Circular.gap(&japan, &us), 10.0);
        assert_eq!(ZoneDistance::Absolute.gap(&japan, &us), 14.0);
    }
}
