//! Norm intensity, crystallization, temporal change and user adaptation.

mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Period, TimeBin};
use crate::normness::NormDimension;
use crate::rpm::CurveConfig;
use crate::seed;

pub use stats::{ols_fit, paired_ttest, t_two_sided_p, RegressionFit, TTest};

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("design matrix is rank deficient")]
    Singular,
    #[error("bin {0} has no comments")]
    EmptyBin(String),
    #[error("records do not share a key: {0}")]
    KeyMismatch(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A labelled half-open time range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub label: String,
    pub start: i64,
    pub end: i64,
}

impl From<&TimeBin> for Span {
    fn from(b: &TimeBin) -> Self {
        Span {
            label: format!("{:.2}", b.label),
            start: b.start,
            end: b.end,
        }
    }
}

impl From<&Period> for Span {
    fn from(p: &Period) -> Self {
        Span {
            label: p.label(),
            start: p.start(),
            end: p.end(),
        }
    }
}

impl Span {
    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }
}

/// A comment with both of its scores for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub community: String,
    pub dimension: NormDimension,
    pub author: String,
    pub created_at: i64,
    /// Normness in `[0, 1]`.
    pub phi: f64,
    /// Community preference.
    pub psi: f64,
}

/// Community, dimension, normness bin and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub community: String,
    pub dimension: NormDimension,
    pub bin: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub period: Span,
}

impl Cell {
    fn tag(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.community, self.dimension, self.period.label, self.bin
        )
    }

    fn same_bin(&self, other: &Cell) -> bool {
        self.community == other.community
            && self.dimension == other.dimension
            && self.bin == other.bin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormIntensityRecord {
    pub cell: Cell,
    pub ni: f64,
    pub n: usize,
    pub low_n: bool,
}

pub fn norm_intensity(
    cell: Cell,
    preferences: &[f64],
) -> Result<NormIntensityRecord, DynamicsError> {
    if preferences.is_empty() {
        return Err(DynamicsError::EmptyBin(cell.tag()));
    }
    let n = preferences.len();
    Ok(NormIntensityRecord {
        ni: preferences.iter().sum::<f64>() / n as f64,
        n,
        low_n: n < 2,
        cell,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystallizationRecord {
    pub cell: Cell,
    /// Absent when the subsample has no spread around the bin mean.
    pub cr: Option<f64>,
    pub subsample_n: usize,
    pub seed: u64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crystallized {
    pub records: Vec<CrystallizationRecord>,
    /// Bins with fewer than two comments, left out of the minimum.
    pub excluded: Vec<Cell>,
}

/// Inverse spread of preference per bin, on equal-size subsamples.
///
/// Every bin is subsampled without replacement to the size of the smallest
/// bin. Deviations are taken from the mean of the full bin and divided by
/// `m - 1`.
pub fn crystallization(
    bins: &[(Cell, Vec<f64>)],
    seed: u64,
) -> Result<Crystallized, DynamicsError> {
    let (usable, small): (Vec<_>, Vec<_>) = bins.iter().partition(|(_, v)| v.len() >= 2);
    let excluded: Vec<Cell> = small.into_iter().map(|(c, _)| c.clone()).collect();
    let Some(m) = usable.iter().map(|(_, v)| v.len()).min() else {
        return Err(DynamicsError::InsufficientData(
            "no bin has two or more comments".into(),
        ));
    };
    let records = usable
        .iter()
        .map(|(cell, values)| {
            let full_mean = values.iter().sum::<f64>() / values.len() as f64;
            let mut picks = if values.len() == m {
                (0..m).collect::<Vec<_>>()
            } else {
                let mut rng = seed::rng(seed, &format!("cr/{}", cell.tag()), 0);
                rand::seq::index::sample(&mut rng, values.len(), m).into_vec()
            };
            picks.sort_unstable();
            let ss: f64 = picks.iter().map(|&i| (values[i] - full_mean).powi(2)).sum();
            let degenerate = ss == 0.0;
            CrystallizationRecord {
                cell: cell.clone(),
                cr: (!degenerate).then(|| (m - 1) as f64 / ss),
                subsample_n: m,
                seed,
                degenerate,
            }
        })
        .collect();
    Ok(Crystallized { records, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalChangeRecord {
    pub community: String,
    pub dimension: NormDimension,
    pub bin: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub s1: String,
    pub s2: String,
    pub ni_s1: f64,
    pub ni_s2: f64,
    pub tc: f64,
}

pub fn temporal_change(
    s1: &NormIntensityRecord,
    s2: &NormIntensityRecord,
) -> Result<TemporalChangeRecord, DynamicsError> {
    if !s1.cell.same_bin(&s2.cell) {
        return Err(DynamicsError::KeyMismatch(format!(
            "{} vs {}",
            s1.cell.tag(),
            s2.cell.tag()
        )));
    }
    Ok(TemporalChangeRecord {
        community: s1.cell.community.clone(),
        dimension: s1.cell.dimension,
        bin: s1.cell.bin,
        bin_lo: s1.cell.bin_lo,
        bin_hi: s1.cell.bin_hi,
        s1: s1.cell.period.label.clone(),
        s2: s2.cell.period.label.clone(),
        ni_s1: s1.ni,
        ni_s2: s2.ni,
        tc: s1.ni - s2.ni,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Significance {
    Neg,
    Pos,
    Ns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserShiftRecord {
    pub from: String,
    pub to: String,
    pub dimension: NormDimension,
    pub shared_users: usize,
    pub mean_delta: f64,
    pub t: Option<f64>,
    pub df: usize,
    pub p: Option<f64>,
    pub significance: Significance,
    pub degenerate: bool,
}

pub const DELETED_AUTHOR: &str = "[deleted]";

fn user_means(items: &[ScoredItem], min_comments: usize) -> BTreeMap<&str, f64> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for it in items
        .iter()
        .filter(|it| it.author != DELETED_AUTHOR && !it.author.is_empty())
    {
        let e = acc.entry(&it.author).or_default();
        e.0 += it.phi;
        e.1 += 1;
    }
    acc.into_iter()
        .filter(|(_, (_, n))| *n >= min_comments)
        .map(|(u, (s, n))| (u, s / n as f64))
        .collect()
}

/// Change in mean normness of users active in both communities, B minus A.
pub fn user_shift(
    from: &str,
    to: &str,
    a: &[ScoredItem],
    b: &[ScoredItem],
    min_comments: usize,
    alpha: f64,
) -> Result<UserShiftRecord, DynamicsError> {
    let dims: BTreeSet<NormDimension> = a.iter().chain(b).map(|it| it.dimension).collect();
    if dims.len() != 1 {
        return Err(DynamicsError::InvalidInput(format!(
            "expected one dimension, found {}",
            dims.len()
        )));
    }
    let dimension = *dims.iter().next().expect("one dimension");
    let ma = user_means(a, min_comments);
    let mb = user_means(b, min_comments);
    let deltas: Vec<f64> = ma
        .iter()
        .filter_map(|(u, va)| mb.get(u).map(|vb| vb - va))
        .collect();
    if deltas.len() < 2 {
        return Err(DynamicsError::InsufficientData(format!(
            "{from}->{to}: {} users with {min_comments}+ comments in both",
            deltas.len()
        )));
    }
    let tt = paired_ttest(&deltas)?;
    let significance = match tt.p {
        Some(p) if p < alpha && tt.mean < 0.0 => Significance::Neg,
        Some(p) if p < alpha && tt.mean > 0.0 => Significance::Pos,
        _ => Significance::Ns,
    };
    Ok(UserShiftRecord {
        from: from.to_owned(),
        to: to.to_owned(),
        dimension,
        shared_users: deltas.len(),
        mean_delta: tt.mean,
        t: tt.t,
        df: tt.df,
        p: tt.p,
        significance,
        degenerate: tt.degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub n_bins: usize,
    pub s1: Period,
    pub s2: Period,
    pub seed: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            n_bins: 10,
            s1: Period {
                first_year: 2019,
                last_year: 2020,
            },
            s2: Period {
                first_year: 2021,
                last_year: 2023,
            },
            seed: 0,
        }
    }
}

impl DynamicsConfig {
    fn bins(&self) -> Result<CurveConfig, DynamicsError> {
        if self.n_bins < 2 {
            return Err(DynamicsError::InvalidInput(format!(
                "need at least 2 bins, got {}",
                self.n_bins
            )));
        }
        Ok(CurveConfig {
            n_bins: self.n_bins,
            lo: 0.0,
            hi: 1.0,
            min_count: 0,
        })
    }
}

/// Groups items of one community and dimension into normness bins within `span`.
/// Empty bins are returned with no values.
pub fn bin_cells(items: &[&ScoredItem], span: &Span, bins: &CurveConfig) -> Vec<(Cell, Vec<f64>)> {
    let Some(first) = items.first() else {
        return Vec::new();
    };
    let mut values = vec![Vec::new(); bins.n_bins];
    for it in items.iter().filter(|it| span.contains(it.created_at)) {
        if let Some(b) = bins.bin_of(it.phi) {
            values[b].push(it.psi);
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let cell = Cell {
                community: first.community.clone(),
                dimension: first.dimension,
                bin: i,
                bin_lo: bins.edge(i),
                bin_hi: bins.edge(i + 1),
                period: span.clone(),
            };
            (cell, v)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub intensity: Vec<NormIntensityRecord>,
    pub crystallization: Vec<CrystallizationRecord>,
    pub temporal: Vec<TemporalChangeRecord>,
    pub regression: Vec<RegressionRow>,
    /// Bins with no comments in a period.
    pub empty: Vec<Cell>,
    /// Bins skipped by crystallization for having fewer than two comments.
    pub cr_excluded: Vec<Cell>,
    pub notes: Vec<String>,
}

/// NI and CR per period, TC between periods, and the two regressions per dimension.
pub fn analyze(
    items: &[ScoredItem],
    cfg: &DynamicsConfig,
) -> Result<DynamicsReport, DynamicsError> {
    let bins = cfg.bins()?;
    let mut groups: BTreeMap<(&str, NormDimension), Vec<&ScoredItem>> = BTreeMap::new();
    for it in items {
        if !(0.0..=1.0).contains(&it.phi) || !it.psi.is_finite() {
            return Err(DynamicsError::InvalidInput(format!(
                "{}: phi {} psi {}",
                it.id, it.phi, it.psi
            )));
        }
        groups
            .entry((&it.community, it.dimension))
            .or_default()
            .push(it);
    }
    let spans = [Span::from(&cfg.s1), Span::from(&cfg.s2)];
    let parts: Vec<DynamicsReport> = groups
        .par_iter()
        .map(|(_, group)| analyze_group(group, &spans, &bins, cfg.seed))
        .collect();
    let mut out = DynamicsReport::default();
    for p in parts {
        out.intensity.extend(p.intensity);
        out.crystallization.extend(p.crystallization);
        out.temporal.extend(p.temporal);
        out.empty.extend(p.empty);
        out.cr_excluded.extend(p.cr_excluded);
        out.notes.extend(p.notes);
    }
    let dims: BTreeSet<NormDimension> = groups.keys().map(|(_, d)| *d).collect();
    for d in dims {
        out.regression.push(regression_row(
            d,
            &out.temporal,
            &out.crystallization,
            &spans[0],
        ));
    }
    Ok(out)
}

fn analyze_group(
    group: &[&ScoredItem],
    spans: &[Span; 2],
    bins: &CurveConfig,
    seed: u64,
) -> DynamicsReport {
    let mut out = DynamicsReport::default();
    let mut ni: [BTreeMap<usize, NormIntensityRecord>; 2] = Default::default();
    for (k, span) in spans.iter().enumerate() {
        let cells = bin_cells(group, span, bins);
        for (cell, v) in &cells {
            match norm_intensity(cell.clone(), v) {
                Ok(r) => {
                    ni[k].insert(cell.bin, r.clone());
                    out.intensity.push(r);
                }
                Err(_) => out.empty.push(cell.clone()),
            }
        }
        match crystallization(&cells, seed) {
            Ok(c) => {
                out.crystallization.extend(c.records);
                out.cr_excluded.extend(c.excluded);
            }
            Err(e) => {
                let first = &cells[0].0;
                out.notes.push(format!(
                    "{}/{}/{}: {e}",
                    first.community, first.dimension, span.label
                ));
                out.cr_excluded.extend(
                    cells
                        .into_iter()
                        .filter(|(_, v)| !v.is_empty())
                        .map(|(c, _)| c),
                );
            }
        }
    }
    for (bin, a) in &ni[0] {
        if let Some(b) = ni[1].get(bin) {
            out.temporal.push(temporal_change(a, b).expect("same key"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub dimension: NormDimension,
    pub n: usize,
    pub ni_only: Option<RegressionFit>,
    pub ni_cr: Option<RegressionFit>,
    pub note: String,
}

/// Both models are fit on the same rows: bins with a TC value and a defined CR in s1.
fn regression_row(
    dimension: NormDimension,
    temporal: &[TemporalChangeRecord],
    cr: &[CrystallizationRecord],
    s1: &Span,
) -> RegressionRow {
    let cr_of: BTreeMap<(&str, usize), f64> = cr
        .iter()
        .filter(|r| r.cell.dimension == dimension && r.cell.period == *s1)
        .filter_map(|r| r.cr.map(|v| ((r.cell.community.as_str(), r.cell.bin), v)))
        .collect();
    let rows: Vec<(f64, f64, f64)> = temporal
        .iter()
        .filter(|t| t.dimension == dimension)
        .filter_map(|t| {
            cr_of
                .get(&(t.community.as_str(), t.bin))
                .map(|c| (t.ni_s1, *c, t.tc))
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let x1: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0]).collect();
    let x2: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
    let mut notes = Vec::new();
    let ni_only = ols_fit(&x1, &y)
        .map_err(|e| notes.push(format!("NI-only: {e}")))
        .ok();
    let ni_cr = ols_fit(&x2, &y)
        .map_err(|e| notes.push(format!("NI+CR: {e}")))
        .ok();
    RegressionRow {
        dimension,
        n: rows.len(),
        ni_only,
        ni_cr,
        note: notes.join("; "),
    }
}

#[derive(Serialize)]
struct RegressionCsv<'a> {
    dimension: NormDimension,
    n: usize,
    ni_c_ni: Option<f64>,
    ni_r2: Option<f64>,
    ni_p_ni: Option<f64>,
    nicr_c_ni: Option<f64>,
    nicr_c_cr: Option<f64>,
    nicr_r2: Option<f64>,
    nicr_p_ni: Option<f64>,
    nicr_p_cr: Option<f64>,
    note: &'a str,
}

pub fn write_regression_csv<W: Write>(w: W, rows: &[RegressionRow]) -> Result<(), DynamicsError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        let a = r.ni_only.as_ref();
        let b = r.ni_cr.as_ref();
        out.serialize(RegressionCsv {
            dimension: r.dimension,
            n: r.n,
            ni_c_ni: a.map(|f| f.coefficients[1]),
            ni_r2: a.and_then(|f| f.r2),
            ni_p_ni: a.and_then(|f| f.p_values[1]),
            nicr_c_ni: b.map(|f| f.coefficients[1]),
            nicr_c_cr: b.map(|f| f.coefficients[2]),
            nicr_r2: b.and_then(|f| f.r2),
            nicr_p_ni: b.and_then(|f| f.p_values[1]),
            nicr_p_cr: b.and_then(|f| f.p_values[2]),
            note: &r.note,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct UserShiftCsv<'a> {
    from: &'a str,
    to: &'a str,
    dimension: NormDimension,
    shared_users: usize,
    mean_delta: f64,
    t: Option<f64>,
    df: usize,
    p: Option<f64>,
    significance: Significance,
}

pub fn write_user_shift_csv<W: Write>(w: W, rows: &[UserShiftRecord]) -> Result<(), DynamicsError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(UserShiftCsv {
            from: &r.from,
            to: &r.to,
            dimension: r.dimension,
            shared_users: r.shared_users,
            mean_delta: r.mean_delta,
            t: r.t,
            df: r.df,
            p: r.p,
            significance: r.significance,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CellCsv<'a> {
    community: &'a str,
    dimension: NormDimension,
    period: &'a str,
    bin: usize,
    bin_lo: f64,
    bin_hi: f64,
    value: Option<f64>,
    n: usize,
    flag: &'a str,
}

/// NI and CR as one long table; `measure` is `ni` or `cr`.
pub fn write_cells_csv<W: Write>(
    w: W,
    intensity: &[NormIntensityRecord],
    crystallization: &[CrystallizationRecord],
) -> Result<(), DynamicsError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record([
        "measure",
        "community",
        "dimension",
        "period",
        "bin",
        "bin_lo",
        "bin_hi",
        "value",
        "n",
        "flag",
    ])?;
    let mut row = |measure: &str,
                   c: &Cell,
                   value: Option<f64>,
                   n: usize,
                   flag: &str|
     -> Result<(), DynamicsError> {
        let r = CellCsv {
            community: &c.community,
            dimension: c.dimension,
            period: &c.period.label,
            bin: c.bin,
            bin_lo: c.bin_lo,
            bin_hi: c.bin_hi,
            value,
            n,
            flag,
        };
        out.write_field(measure)?;
        out.serialize(r)?;
        Ok(())
    };
    for r in intensity {
        row(
            "ni",
            &r.cell,
            Some(r.ni),
            r.n,
            if r.low_n { "low_n" } else { "" },
        )?;
    }
    for r in crystallization {
        row(
            "cr",
            &r.cell,
            r.cr,
            r.subsample_n,
            if r.degenerate { "degenerate" } else { "" },
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_temporal_csv<W: Write>(
    w: W,
    rows: &[TemporalChangeRecord],
) -> Result<(), DynamicsError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// NI per normness bin and time bin, for plotting intensity over time.
pub fn intensity_series(
    items: &[ScoredItem],
    time_bins: &[TimeBin],
    n_bins: usize,
) -> Result<Vec<NormIntensityRecord>, DynamicsError> {
    let bins = DynamicsConfig {
        n_bins,
        ..Default::default()
    }
    .bins()?;
    let mut groups: BTreeMap<(&str, NormDimension), Vec<&ScoredItem>> = BTreeMap::new();
    for it in items {
        groups
            .entry((&it.community, it.dimension))
            .or_default()
            .push(it);
    }
    let mut out = Vec::new();
    for group in groups.values() {
        for tb in time_bins {
            for (cell, v) in bin_cells(group, &Span::from(tb), &bins) {
                if let Ok(r) = norm_intensity(cell, &v) {
                    out.push(r);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cell(bin: usize, period: &str) -> Cell {
        let p = Period::parse(period).unwrap();
        Cell {
            community: "c".into(),
            dimension: NormDimension::Humor,
            bin,
            bin_lo: bin as f64 / 10.0,
            bin_hi: (bin + 1) as f64 / 10.0,
            period: Span::from(&p),
        }
    }

    fn ni(v: f64, period: &str) -> NormIntensityRecord {
        norm_intensity(cell(3, period), &[v]).unwrap()
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(
            norm_intensity(cell(0, "2019-2020"), &[2.0, 2.0, 2.0])
                .unwrap()
                .ni,
            2.0
        );
        let r = norm_intensity(cell(0, "2019-2020"), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.ni, r.n, r.low_n), (2.0, 3, false));
        let single = norm_intensity(cell(0, "2019-2020"), &[-0.7]).unwrap();
        assert!(single.low_n && single.ni == -0.7);
        assert!(matches!(
            norm_intensity(cell(0, "2019-2020"), &[]),
            Err(DynamicsError::EmptyBin(_))
        ));
    }

    #[test]
    fn crystallization_examples() {
        let bins = vec![
            (cell(0, "2019-2020"), vec![1.0, 2.0, 3.0, 4.0, 5.0]),
            (cell(1, "2019-2020"), vec![1.0, 2.0, 3.0]),
            (cell(2, "2019-2020"), (0..8).map(f64::from).collect()),
            (cell(3, "2019-2020"), vec![4.0, 4.0, 4.0]),
            (cell(4, "2019-2020"), vec![9.0]),
        ];
        let c = crystallization(&bins, 7).unwrap();
        assert!(c.records.iter().all(|r| r.subsample_n == 3 && r.seed == 7));
        assert_eq!(c.excluded.len(), 1);
        assert_eq!(c.excluded[0].bin, 4);
        let by_bin = |b: usize| c.records.iter().find(|r| r.cell.bin == b).unwrap();
        assert_eq!(by_bin(1).cr, Some(1.0));
        assert!(by_bin(3).degenerate && by_bin(3).cr.is_none());
        assert_eq!(crystallization(&bins, 7).unwrap(), c);
        assert!(crystallization(&bins[4..], 7).is_err());
    }

    #[test]
    fn crystallization_uses_full_bin_mean() {
        // Full-bin mean 2; any 2-subsample of {0, 2, 4}: (m-1)/sum of squares.
        let bins = vec![
            (cell(0, "2019-2020"), vec![0.0, 2.0, 4.0]),
            (cell(1, "2019-2020"), vec![1.0, 1.5]),
        ];
        let r = &crystallization(&bins, 1).unwrap().records[0];
        assert_eq!(r.subsample_n, 2);
        let cr = r.cr.unwrap();
        assert!(
            [1.0 / 4.0, 1.0 / 8.0]
                .iter()
                .any(|v| (cr - v).abs() < 1e-12),
            "{cr}"
        );
    }

    #[test]
    fn temporal_examples() {
        assert_eq!(
            temporal_change(&ni(2.0, "2019-2020"), &ni(2.0, "2021-2023"))
                .unwrap()
                .tc,
            0.0
        );
        assert_eq!(
            temporal_change(&ni(1.5, "2019-2020"), &ni(2.0, "2021-2023"))
                .unwrap()
                .tc,
            -0.5
        );
        assert_eq!(
            temporal_change(&ni(0.0, "2019-2020"), &ni(0.8, "2021-2023"))
                .unwrap()
                .tc,
            -0.8
        );
        let other = norm_intensity(cell(4, "2021-2023"), &[1.0]).unwrap();
        assert!(matches!(
            temporal_change(&ni(1.0, "2019-2020"), &other),
            Err(DynamicsError::KeyMismatch(_))
        ));
    }

    fn item(id: &str, community: &str, author: &str, phi: f64) -> ScoredItem {
        ScoredItem {
            id: id.into(),
            community: community.into(),
            dimension: NormDimension::Formality,
            author: author.into(),
            created_at: 1_600_000_000,
            phi,
            psi: 0.0,
        }
    }

    #[test]
    fn user_shift_examples() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (u, d) in [("u1", 0.1), ("u2", 0.2), ("u3", 0.3)] {
            a.push(item("x", "A", u, 0.4));
            a.push(item("x", "A", u, 0.2));
            b.push(item("y", "B", u, 0.3 + d));
            b.push(item("y", "B", u, 0.3 + d));
        }
        // Only one comment in B: excluded.
        a.push(item("x", "A", "u4", 0.1));
        a.push(item("x", "A", "u4", 0.1));
        b.push(item("y", "B", "u4", 0.9));
        a.push(item("x", "A", DELETED_AUTHOR, 0.1));
        a.push(item("x", "A", DELETED_AUTHOR, 0.1));
        b.push(item("y", "B", DELETED_AUTHOR, 0.9));
        b.push(item("y", "B", DELETED_AUTHOR, 0.9));

        let r = user_shift("A", "B", &a, &b, 2, 0.05).unwrap();
        assert_eq!(r.shared_users, 3);
        assert!((r.mean_delta - 0.2).abs() < 1e-12);
        assert!((r.t.unwrap() - 3.4641016).abs() < 1e-5);
        assert!((r.p.unwrap() - 0.0742).abs() < 1e-4);
        assert_eq!(r.significance, Significance::Ns);

        let same = user_shift("A", "A", &a, &a, 2, 0.05).unwrap();
        assert_eq!(same.mean_delta, 0.0);
        assert!(same.degenerate && same.t.is_none());

        assert!(matches!(
            user_shift("A", "B", &a[..2], &b, 2, 0.05),
            Err(DynamicsError::InsufficientData(_))
        ));
    }

    #[test]
    fn significance_sign() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..20 {
            let u = format!("u{i}");
            let base = 0.5 + (i % 5) as f64 * 0.01;
            a.extend([item("a", "A", &u, base), item("a", "A", &u, base)]);
            b.extend([
                item("b", "B", &u, base - 0.2 - i as f64 * 0.001),
                item("b", "B", &u, base - 0.2),
            ]);
        }
        assert_eq!(
            user_shift("A", "B", &a, &b, 2, 0.05).unwrap().significance,
            Significance::Neg
        );
        assert_eq!(
            user_shift("B", "A", &b, &a, 2, 0.05).unwrap().significance,
            Significance::Pos
        );
    }

    fn world(seed: u64) -> Vec<ScoredItem> {
        use rand::Rng;
        let mut rng = seed::rng(seed, "dyn-test", 0);
        let mut out = Vec::new();
        for c in ["a", "b", "c", "d"] {
            for i in 0..400 {
                let phi: f64 = rng.random();
                let late = i % 2 == 1;
                let t = if late { 1_650_000_000 } else { 1_590_000_000 };
                let shift = if late { 0.0 } else { 0.5 * phi };
                out.push(ScoredItem {
                    id: format!("{c}{i}"),
                    community: c.into(),
                    dimension: NormDimension::Politeness,
                    author: format!("u{}", i % 30),
                    created_at: t,
                    phi,
                    psi: phi + shift + rng.random::<f64>() * 0.2,
                });
            }
        }
        out
    }

    #[test]
    fn analyze_end_to_end() {
        let items = world(3);
        let cfg = DynamicsConfig {
            n_bins: 5,
            seed: 11,
            ..Default::default()
        };
        let rep = analyze(&items, &cfg).unwrap();
        assert_eq!(rep.intensity.len(), 4 * 5 * 2);
        assert_eq!(rep.temporal.len(), 4 * 5);
        assert_eq!(rep.regression.len(), 1);
        let row = &rep.regression[0];
        assert_eq!(row.n, 20);
        assert!(row.ni_only.as_ref().unwrap().coefficients[1] > 0.0);
        assert!(row.ni_cr.is_some());
        assert_eq!(analyze(&items, &cfg).unwrap(), rep);

        let mut buf = Vec::new();
        write_regression_csv(&mut buf, &rep.regression).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dimension,n,ni_c_ni,ni_r2,ni_p_ni,nicr_c_ni,nicr_c_cr,nicr_r2,nicr_p_ni,nicr_p_cr,note\n"));
        let mut buf = Vec::new();
        write_cells_csv(&mut buf, &rep.intensity, &rep.crystallization).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().lines().count(),
            1 + 40 + rep.crystallization.len()
        );
    }

    #[test]
    fn series_over_time_bins() {
        let items = world(5);
        let tb = TimeBin {
            start: 1_577_836_800,
            end: 1_593_561_600,
            label: 2020.25,
            start_label: 2020.0,
        };
        let s = intensity_series(&items, &[tb], 4).unwrap();
        assert!(!s.is_empty() && s.iter().all(|r| r.cell.period.label == "2020.25"));
    }

    proptest! {
        #[test]
        fn tc_antisymmetric(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let x = ni(a, "2019-2020");
            let y = ni(b, "2021-2023");
            prop_assert_eq!(temporal_change(&x, &y).unwrap().tc, -temporal_change(&y, &x).unwrap().tc);
        }

        #[test]
        fn cr_identity_at_equal_sizes(vals in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 4), 2..6), s in any::<u64>()) {
            let bins: Vec<(Cell, Vec<f64>)> = vals.iter().enumerate().map(|(i, v)| (cell(i, "2019-2020"), v.clone())).collect();
            let c = crystallization(&bins, s).unwrap();
            for (r, (_, v)) in c.records.iter().zip(&bins) {
                let mean = v.iter().sum::<f64>() / 4.0;
                let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
                prop_assert_eq!(r.subsample_n, 4);
                if ss > 0.0 {
                    prop_assert!((r.cr.unwrap() - 3.0 / ss).abs() < 1e-9 * (1.0 + 3.0 / ss));
                }
            }
        }
    }
}
