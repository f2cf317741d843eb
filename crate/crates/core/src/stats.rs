//! Aggregate tables and distributions over detected quakes.

use alloc::vec;
use alloc::vec::Vec;

use crate::detector::{AvalancheRecord, CriticalNode, QuakeKind, Role, Sign};
use crate::market::ExchangeId;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryRow {
    pub kind: QuakeKind,
    /// `None` is the total over both signs.
    pub sign: Option<Sign>,
    pub count: usize,
    pub mean_members: f64,
    pub mean_duration_days: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuakeSummary {
    /// For each kind: negative, positive, total.
    pub rows: Vec<SummaryRow>,
}

impl QuakeSummary {
    pub fn row(&self, kind: QuakeKind, sign: Option<Sign>) -> &SummaryRow {
        self.rows
            .iter()
            .find(|r| r.kind == kind && r.sign == sign)
            .expect("summary has every kind and sign")
    }
}

fn mean(sum: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn summarize(records: &[AvalancheRecord]) -> QuakeSummary {
    let mut rows = Vec::with_capacity(6);
    for kind in [QuakeKind::Sipq, QuakeKind::Cipq] {
        for sign in [Some(Sign::Negative), Some(Sign::Positive), None] {
            let picked = records
                .iter()
                .filter(|r| r.kind == kind && sign.is_none_or(|s| r.sign == s));
            let (mut count, mut members, mut days) = (0usize, 0usize, 0.0);
            for r in picked {
                count += 1;
                members += r.size();
                days += r.duration_days;
            }
            rows.push(SummaryRow {
                kind,
                sign,
                count,
                mean_members: mean(members as f64, count),
                mean_duration_days: mean(days, count),
            });
        }
    }
    QuakeSummary { rows }
}

/// Column order of [`RoleTable`] counts.
pub const ROLE_ORDER: [Role; 3] = [Role::Excluded, Role::Source, Role::Influenced];

fn role_index(role: Role) -> usize {
    match role {
        Role::Excluded => 0,
        Role::Source => 1,
        Role::Influenced => 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoleRow {
    /// Indexed by [`Sign::index`], then by [`ROLE_ORDER`].
    pub counts: [[usize; 3]; 2],
}

impl RoleRow {
    pub fn total(&self, sign: Sign) -> usize {
        self.counts[sign.index()].iter().sum()
    }

    pub fn get(&self, sign: Sign, role: Role) -> usize {
        self.counts[sign.index()][role_index(role)]
    }

    /// Role shares in percent; all zeros when the exchange was never critical with `sign`.
    pub fn percentages(&self, sign: Sign) -> [f64; 3] {
        let total = self.total(sign);
        let c = self.counts[sign.index()];
        if total == 0 {
            return [0.0; 3];
        }
        c.map(|x| 100.0 * x as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoleTable {
    pub rows: Vec<RoleRow>,
}

/// Tallies the critical nodes of one run by exchange, sign and role.
pub fn role_counts(nodes: &[CriticalNode], num_exchanges: usize) -> RoleTable {
    let mut rows = vec![RoleRow::default(); num_exchanges];
    for n in nodes {
        rows[n.event.exchange].counts[n.sign.index()][role_index(n.role)] += 1;
    }
    RoleTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DegreeRow {
    pub mean_in: f64,
    pub mean_out: f64,
}

impl DegreeRow {
    pub fn delta(&self) -> f64 {
        self.mean_in - self.mean_out
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DegreeTable {
    /// Per exchange: positive, negative, both signs.
    pub rows: Vec<[DegreeRow; 3]>,
    /// Average over exchanges, same column layout.
    pub network: [DegreeRow; 3],
    /// Quakes averaged over in each column.
    pub quake_counts: [usize; 3],
}

/// Mean per-quake in/out-degree of each exchange, averaged over all quakes
/// of the sign (absent exchanges count as zero).
pub fn degree_stats(records: &[AvalancheRecord], num_exchanges: usize) -> DegreeTable {
    let mut totals = vec![[[0usize; 2]; 3]; num_exchanges];
    let mut quake_counts = [0usize; 3];
    for r in records {
        let col = r.sign.index();
        quake_counts[col] += 1;
        quake_counts[2] += 1;
        for e in &r.edges {
            for c in [col, 2] {
                totals[e.to][c][0] += 1;
                totals[e.from][c][1] += 1;
            }
        }
    }
    let rows: Vec<[DegreeRow; 3]> = totals
        .iter()
        .map(|t| {
            core::array::from_fn(|c| DegreeRow {
                mean_in: mean(t[c][0] as f64, quake_counts[c]),
                mean_out: mean(t[c][1] as f64, quake_counts[c]),
            })
        })
        .collect();
    // Integer totals keep the network row exactly balanced.
    let network = core::array::from_fn(|c| {
        let sum_in: usize = totals.iter().map(|t| t[c][0]).sum();
        let sum_out: usize = totals.iter().map(|t| t[c][1]).sum();
        let denom = quake_counts[c] * num_exchanges;
        DegreeRow {
            mean_in: mean(sum_in as f64, denom),
            mean_out: mean(sum_out as f64, denom),
        }
    });
    DegreeTable {
        rows,
        network,
        quake_counts,
    }
}

/// Percentage of quakes each exchange seeds, descending (ties by id).
///
/// Every zero in-degree exchange of a quake counts as one of its seeds, so
/// the percentages can add up to more than 100.
pub fn source_ranking(records: &[AvalancheRecord], num_exchanges: usize) -> Vec<(ExchangeId, f64)> {
    let mut counts = vec![0usize; num_exchanges];
    for r in records {
        for &s in &r.sources_without_influence {
            counts[s] += 1;
        }
    }
    let mut ranking: Vec<(ExchangeId, f64)> = counts
        .iter()
        .enumerate()
        .map(|(x, &c)| (x, 100.0 * mean(c as f64, records.len())))
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranking
}

/// Mean member count of the quakes each exchange seeds: positive, negative, both.
pub fn spread_by_source(records: &[AvalancheRecord], num_exchanges: usize) -> Vec<[f64; 3]> {
    let mut sums = vec![[(0usize, 0usize); 3]; num_exchanges];
    for r in records {
        for &s in &r.sources_without_influence {
            for c in [r.sign.index(), 2] {
                sums[s][c].0 += r.size();
                sums[s][c].1 += 1;
            }
        }
    }
    sums.iter()
        .map(|row| row.map(|(total, n)| mean(total as f64, n)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Measure {
    /// Number of distinct member exchanges.
    Size,
    /// Event groups between the start and the last impact.
    DurationEvents,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PdfBin {
    /// Inclusive lower edge.
    pub lower: u64,
    /// Exclusive upper edge.
    pub upper: u64,
    pub probability: f64,
    /// `probability / (upper - lower)`.
    pub density: f64,
}

/// Base-2 log-binned PDF: bins `[0, 1)`, `[1, 2)`, `[2, 4)`, `[4, 8)`, ...
/// Only bins from the smallest to the largest occupied one are emitted.
pub fn log2_pdf(values: &[u64]) -> Result<Vec<PdfBin>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let bin_of = |v: u64| if v == 0 { 0 } else { 64 - v.leading_zeros() as usize };
    let mut counts = vec![0usize; 65];
    for &v in values {
        counts[bin_of(v)] += 1;
    }
    let first = counts.iter().position(|&c| c > 0).expect("non-empty");
    let last = counts.iter().rposition(|&c| c > 0).expect("non-empty");
    let total = values.len() as f64;
    Ok((first..=last)
        .map(|b| {
            let (lower, upper) = if b == 0 {
                (0, 1)
            } else {
                (1u64 << (b - 1), 1u64.checked_shl(b as u32).unwrap_or(u64::MAX))
            };
            let probability = counts[b] as f64 / total;
            PdfBin {
                lower,
                upper,
                probability,
                density: probability / (upper - lower) as f64,
            }
        })
        .collect())
}

pub fn distribution(records: &[AvalancheRecord], measure: Measure) -> Result<Vec<PdfBin>> {
    let values: Vec<u64> = records
        .iter()
        .map(|r| match measure {
            Measure::Size => r.size() as u64,
            Measure::DurationEvents => r.duration_events as u64,
        })
        .collect();
    log2_pdf(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{ImpactEdge, InfluenceKind};
    use crate::market::{MarketEvent, SessionKind};

    fn ev(exchange: usize, group: usize) -> MarketEvent {
        MarketEvent {
            exchange,
            kind: SessionKind::Open,
            day: 0,
            slot: group as u32,
            group,
            utc_hour: group as f64,
        }
    }

    fn edge(from: usize, to: usize, g: usize, sign: Sign) -> ImpactEdge {
        ImpactEdge {
            from,
            to,
            from_event: ev(from, g - 1),
            at: ev(to, g),
            kind: InfluenceKind::Single,
            sign,
            contribution: 0.04,
            contributing_set: vec![from],
        }
    }

    fn record(sign: Sign, members: Vec<usize>, edges: Vec<ImpactEdge>, days: f64) -> AvalancheRecord {
        AvalancheRecord {
            kind: QuakeKind::Sipq,
            sign,
            source: members[0],
            start: ev(members[0], 0),
            duration_events: 1,
            duration_days: days,
            sources_without_influence: vec![members[0]],
            members,
            edges,
        }
    }

    #[test]
    fn empty_summary_is_zero() {
        let s = summarize(&[]);
        assert_eq!(s.rows.len(), 6);
        assert!(s.rows.iter().all(|r| r.count == 0 && r.mean_members == 0.0 && r.mean_duration_days == 0.0));
    }

    #[test]
    fn summary_means() {
        let rs = [
            record(Sign::Positive, vec![0, 1, 2], vec![], 1.0),
            record(Sign::Positive, vec![1, 2, 3, 4, 5], vec![], 2.0),
            record(Sign::Negative, vec![0, 1], vec![], 0.5),
        ];
        let s = summarize(&rs);
        let pos = s.row(QuakeKind::Sipq, Some(Sign::Positive));
        assert_eq!((pos.count, pos.mean_members, pos.mean_duration_days), (2, 4.0, 1.5));
        let all = s.row(QuakeKind::Sipq, None);
        assert_eq!(all.count, 3);
        assert!((all.mean_members - 10.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.row(QuakeKind::Cipq, None).count, 0);
    }

    #[test]
    fn two_exchange_degrees() {
        let rs = [record(Sign::Positive, vec![0, 1], vec![edge(0, 1, 1, Sign::Positive)], 0.1)];
        let t = degree_stats(&rs, 3);
        assert_eq!(t.rows[0][0], DegreeRow { mean_in: 0.0, mean_out: 1.0 });
        assert_eq!(t.rows[1][0], DegreeRow { mean_in: 1.0, mean_out: 0.0 });
        assert_eq!(t.rows[2][0], DegreeRow::default());
        assert_eq!(t.network[0].delta(), 0.0);
        assert_eq!(t.quake_counts, [1, 0, 1]);
    }

    #[test]
    fn single_source_ranking() {
        let rs = [record(Sign::Negative, vec![3, 1], vec![edge(3, 1, 1, Sign::Negative)], 0.1)];
        let ranking = source_ranking(&rs, 5);
        assert_eq!(ranking[0], (3, 100.0));
        assert!(ranking[1..].iter().all(|&(_, p)| p == 0.0));
    }

    #[test]
    fn spread_of_one_seed() {
        let rs = [record(Sign::Positive, (0..8).collect(), vec![], 1.0)];
        let spread = spread_by_source(&rs, 9);
        assert_eq!(spread[0], [8.0, 0.0, 8.0]);
        assert_eq!(spread[8], [0.0; 3]);
    }

    #[test]
    fn never_critical_row_is_zero() {
        let t = role_counts(&[], 2);
        assert_eq!(t.rows[1], RoleRow::default());
        assert_eq!(t.rows[1].percentages(Sign::Positive), [0.0; 3]);
    }

    #[test]
    fn pdf_bins() {
        let pdf = log2_pdf(&[2, 2, 2]).unwrap();
        assert_eq!(pdf, [PdfBin { lower: 2, upper: 4, probability: 1.0, density: 0.5 }]);
        let pdf = log2_pdf(&[0, 1, 3, 9]).unwrap();
        let edges: Vec<_> = pdf.iter().map(|b| (b.lower, b.upper)).collect();
        assert_eq!(edges, [(0, 1), (1, 2), (2, 4), (4, 8), (8, 16)]);
        assert_eq!(pdf[3].probability, 0.0);
        assert_eq!(log2_pdf(&[u64::MAX]).unwrap()[0].lower, 1 << 63);
        assert_eq!(log2_pdf(&[]), Err(Error::EmptyInput));
    }
}
