//! Return Potential curves over normness deltas.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::normness::NormDimension;
use crate::preference::PreferenceDelta;

#[derive(Debug, thiserror::Error)]
pub enum RpmError {
    #[error("invalid curve parameters: {0}")]
    InvalidConfig(String),
    #[error("no deltas to bin")]
    NoDeltas,
    #[error("deltas mix communities or dimensions")]
    MixedKeys,
    #[error("no bin reached {min_count} deltas")]
    EmptyCurve { min_count: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub n_bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub min_count: usize,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            n_bins: 10,
            lo: -1.0,
            hi: 1.0,
            min_count: 50,
        }
    }
}

impl CurveConfig {
    fn validate(&self) -> Result<(), RpmError> {
        if self.n_bins < 2 {
            return Err(RpmError::InvalidConfig(format!(
                "need at least 2 bins, got {}",
                self.n_bins
            )));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(RpmError::InvalidConfig(format!(
                "range [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == self.n_bins {
            self.hi
        } else {
            (self.lo * (self.n_bins - i) as f64 + self.hi * i as f64) / self.n_bins as f64
        }
    }

    /// Bin of `x`: `[edge(i), edge(i+1))`, with the top edge in the last bin.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !(self.lo..=self.hi).contains(&x) {
            return None;
        }
        let mut i = (((x - self.lo) / (self.hi - self.lo) * self.n_bins as f64).floor() as usize)
            .min(self.n_bins - 1);
        while i > 0 && x < self.edge(i) {
            i -= 1;
        }
        while i + 1 < self.n_bins && x >= self.edge(i + 1) {
            i += 1;
        }
        Some(i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpmBin {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub mean: Option<f64>,
    pub count: usize,
    pub stderr: Option<f64>,
    pub reliable: bool,
}

impl RpmBin {
    pub fn center(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpmCurve {
    pub community: String,
    pub dimension: NormDimension,
    pub bins: Vec<RpmBin>,
    pub bin_width: f64,
    pub delta_mode: bool,
    pub min_count: usize,
    pub out_of_range: usize,
}

impl RpmCurve {
    pub fn reliable(&self) -> impl Iterator<Item = &RpmBin> {
        self.bins.iter().filter(|b| b.reliable)
    }
}

/// Bins `(x, y)` points into equal-width bins and averages `y` per bin.
pub fn build_curve_points(
    community: &str,
    dimension: NormDimension,
    points: &[(f64, f64)],
    delta_mode: bool,
    config: &CurveConfig,
) -> Result<RpmCurve, RpmError> {
    config.validate()?;
    if points.is_empty() {
        return Err(RpmError::NoDeltas);
    }
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); config.n_bins];
    let mut out_of_range = 0;
    for &(x, y) in points {
        match config.bin_of(x) {
            Some(i) => members[i].push(y),
            None => out_of_range += 1,
        }
    }
    let bins: Vec<RpmBin> = members
        .iter()
        .enumerate()
        .map(|(i, ys)| {
            let n = ys.len();
            let mean = (n > 0).then(|| ys.iter().sum::<f64>() / n as f64);
            let stderr = mean.filter(|_| n >= 2).map(|m| {
                let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                (var / n as f64).sqrt()
            });
            RpmBin {
                index: i,
                lo: config.edge(i),
                hi: config.edge(i + 1),
                mean,
                count: n,
                stderr,
                reliable: n > 0 && n >= config.min_count,
            }
        })
        .collect();
    if !bins.iter().any(|b| b.reliable) {
        return Err(RpmError::EmptyCurve {
            min_count: config.min_count,
        });
    }
    Ok(RpmCurve {
        community: community.to_owned(),
        dimension,
        bins,
        bin_width: (config.hi - config.lo) / config.n_bins as f64,
        delta_mode,
        min_count: config.min_count,
        out_of_range,
    })
}

/// A delta-space curve. All deltas must share community and dimension.
pub fn build_curve(deltas: &[PreferenceDelta], config: &CurveConfig) -> Result<RpmCurve, RpmError> {
    let first = deltas.first().ok_or(RpmError::NoDeltas)?;
    if deltas
        .iter()
        .any(|d| d.community != first.community || d.dimension != first.dimension)
    {
        return Err(RpmError::MixedKeys);
    }
    let points: Vec<(f64, f64)> = deltas.iter().map(|d| (d.d_phi, d.d_psi)).collect();
    build_curve_points(&first.community, first.dimension, &points, true, config)
}

/// Reliable bin with the highest mean. Ties go to the bin whose center is
/// nearest zero, then to the lower bin.
pub fn pmr(curve: &RpmCurve) -> Result<&RpmBin, RpmError> {
    curve
        .reliable()
        .max_by(|a, b| {
            let (ma, mb) = (
                a.mean.unwrap_or(f64::NEG_INFINITY),
                b.mean.unwrap_or(f64::NEG_INFINITY),
            );
            ma.total_cmp(&mb)
                .then_with(|| b.center().abs().total_cmp(&a.center().abs()))
                .then_with(|| b.index.cmp(&a.index))
        })
        .ok_or(RpmError::EmptyCurve {
            min_count: curve.min_count,
        })
}

/// Sum of reliable bin means.
pub fn prd(curve: &RpmCurve) -> Result<f64, RpmError> {
    let mut any = false;
    let mut total = 0.0;
    for b in curve.reliable() {
        any = true;
        total += b.mean.unwrap_or(0.0);
    }
    if any {
        Ok(total)
    } else {
        Err(RpmError::EmptyCurve {
            min_count: curve.min_count,
        })
    }
}

#[derive(Serialize)]
struct CurveRow {
    bin_lo: f64,
    bin_hi: f64,
    mean: Option<f64>,
    count: usize,
    stderr: Option<f64>,
    reliable: bool,
}

/// One row per bin, unreliable bins included.
pub fn write_curve_csv<W: Write>(w: W, curve: &RpmCurve) -> Result<(), RpmError> {
    let mut wtr = csv::Writer::from_writer(w);
    for b in &curve.bins {
        wtr.serialize(CurveRow {
            bin_lo: b.lo,
            bin_hi: b.hi,
            mean: b.mean,
            count: b.count,
            stderr: b.stderr,
            reliable: b.reliable,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub community: String,
    pub dimension: NormDimension,
    pub n_bins: usize,
    pub bin_width: f64,
    /// False for curves over original comments rather than rewrite deltas.
    pub delta_mode: bool,
    pub min_count: usize,
    pub reliable_bins: usize,
    pub total: usize,
    pub out_of_range: usize,
    pub pmr_bin: usize,
    pub pmr_lo: f64,
    pub pmr_hi: f64,
    pub pmr_mean: f64,
    pub prd: f64,
}

pub fn summarize(curve: &RpmCurve) -> Result<CurveSummary, RpmError> {
    let peak = pmr(curve)?;
    Ok(CurveSummary {
        community: curve.community.clone(),
        dimension: curve.dimension,
        n_bins: curve.bins.len(),
        bin_width: curve.bin_width,
        delta_mode: curve.delta_mode,
        min_count: curve.min_count,
        reliable_bins: curve.reliable().count(),
        total: curve.bins.iter().map(|b| b.count).sum::<usize>() + curve.out_of_range,
        out_of_range: curve.out_of_range,
        pmr_bin: peak.index,
        pmr_lo: peak.lo,
        pmr_hi: peak.hi,
        pmr_mean: peak.mean.unwrap_or(f64::NAN),
        prd: prd(curve)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const D: NormDimension = NormDimension::Formality;

    fn cfg(n_bins: usize, min_count: usize) -> CurveConfig {
        CurveConfig {
            n_bins,
            min_count,
            ..Default::default()
        }
    }

    fn curve(points: &[(f64, f64)], c: &CurveConfig) -> RpmCurve {
        build_curve_points("r/x", D, points, true, c).unwrap()
    }

    /// A curve whose reliable bins carry the given means.
    fn with_means(means: &[(usize, f64)], n_bins: usize) -> RpmCurve {
        let c = cfg(n_bins, 1);
        let pts: Vec<(f64, f64)> = means
            .iter()
            .map(|&(i, m)| ((c.edge(i) + c.edge(i + 1)) / 2.0, m))
            .collect();
        curve(&pts, &c)
    }

    #[test]
    fn single_populated_bin() {
        let c = curve(&vec![(0.05, 2.0); 60], &cfg(10, 50));
        let populated: Vec<_> = c.bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(populated.len(), 1);
        assert_eq!(populated[0].mean, Some(2.0));
        assert_eq!(populated[0].index, 5);
        assert_eq!(populated[0].stderr, Some(0.0));
    }

    #[test]
    fn two_bin_means() {
        let c = curve(&[(-0.5, -1.0), (-0.5, -3.0), (0.5, 2.0)], &cfg(2, 1));
        assert_eq!(c.bins[0].mean, Some(-2.0));
        assert_eq!(c.bins[1].mean, Some(2.0));
        assert_eq!(c.bins[0].stderr, Some((2.0f64 / 2.0).sqrt()));
        assert_eq!(c.bins[1].stderr, None);
    }

    #[test]
    fn edges_and_range() {
        let c = cfg(10, 1);
        assert_eq!(c.bin_of(1.0), Some(9));
        assert_eq!(c.bin_of(-1.0), Some(0));
        assert_eq!(c.bin_of(0.0), Some(5));
        assert_eq!(c.bin_of(0.6), Some(8));
        assert_eq!(c.bin_of(-0.2), Some(4));
        assert_eq!(c.bin_of(1.0001), None);
        assert_eq!(c.bin_of(f64::NAN), None);
        let cu = curve(&[(1.5, 1.0), (0.1, 1.0)], &c);
        assert_eq!(cu.out_of_range, 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            build_curve_points("c", D, &[], true, &cfg(10, 1)),
            Err(RpmError::NoDeltas)
        ));
        assert!(matches!(
            build_curve_points("c", D, &[(0.0, 1.0)], true, &cfg(1, 1)),
            Err(RpmError::InvalidConfig(_))
        ));
        assert!(matches!(
            build_curve_points("c", D, &[(0.0, 1.0)], true, &cfg(10, 5)),
            Err(RpmError::EmptyCurve { .. })
        ));
    }

    #[test]
    fn pmr_examples() {
        let inc = with_means(&[(0, 1.0), (3, 2.0), (7, 3.0), (9, 4.0)], 10);
        assert_eq!(pmr(&inc).unwrap().index, 9);
        // Bins centered at -0.1 and +0.5 in a 10-bin curve are 4 and 7.
        let tie = with_means(&[(4, 1.0), (7, 1.0)], 10);
        assert!((pmr(&tie).unwrap().center() + 0.1).abs() < 1e-12);
        assert_eq!(pmr(&tie).unwrap().index, 4);
    }

    #[test]
    fn prd_examples() {
        assert_eq!(
            prd(&with_means(&[(0, -2.0), (1, -1.0), (2, 1.0), (3, 2.0)], 4)).unwrap(),
            0.0
        );
        assert_eq!(prd(&with_means(&[(0, -1.0), (1, 3.0)], 2)).unwrap(), 2.0);
        assert!(prd(&with_means(&[(0, 0.5), (1, 3.0), (5, 0.1)], 10)).unwrap() > 0.0);
    }

    #[test]
    fn unreliable_bins_do_not_count() {
        let mut pts = vec![(0.5, 1.0); 5];
        pts.push((-0.5, 100.0));
        let c = curve(&pts, &cfg(2, 5));
        assert_eq!(pmr(&c).unwrap().index, 1);
        assert_eq!(prd(&c).unwrap(), 1.0);
    }

    #[test]
    fn csv_shape() {
        let c = curve(&[(-0.5, -1.0), (-0.5, -3.0), (0.5, 2.0)], &cfg(2, 1));
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &c).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "bin_lo,bin_hi,mean,count,stderr,reliable");
        assert_eq!(lines[1], "-1.0,0.0,-2.0,2,1.0,true");
        assert_eq!(lines[2], "0.0,1.0,2.0,1,,true");
    }

    fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((-1.5f64..1.5, -5.0f64..5.0), 1..200)
    }

    proptest! {
        #[test]
        fn count_conservation(pts in points()) {
            if let Ok(c) = build_curve_points("c", D, &pts, true, &cfg(10, 1)) {
                let binned: usize = c.bins.iter().map(|b| b.count).sum();
                let in_range = pts.iter().filter(|(x, _)| (-1.0..=1.0).contains(x)).count();
                prop_assert_eq!(binned, in_range);
                prop_assert_eq!(c.out_of_range, pts.len() - in_range);
            }
        }

        #[test]
        fn negation_negates_prd(pts in points()) {
            let neg: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, -y)).collect();
            if let (Ok(a), Ok(b)) = (build_curve_points("c", D, &pts, true, &cfg(10, 1)), build_curve_points("c", D, &neg, true, &cfg(10, 1))) {
                prop_assert_eq!(prd(&a).unwrap(), -prd(&b).unwrap());
            }
        }

        #[test]
        fn pmr_is_invariant_under_increasing_maps(pts in points()) {
            if let Ok(c) = build_curve_points("c", D, &pts, true, &cfg(10, 1)) {
                let mut mapped = c.clone();
                for b in &mut mapped.bins {
                    b.mean = b.mean.map(|m| (m * 0.5).exp() + 3.0 * m);
                }
                prop_assert_eq!(pmr(&c).unwrap().index, pmr(&mapped).unwrap().index);
            }
        }

        #[test]
        fn bins_are_contiguous(n in 2usize..40) {
            let c = cfg(n, 1);
            for i in 0..n {
                prop_assert!(c.edge(i) < c.edge(i + 1));
                prop_assert_eq!(c.bin_of(c.edge(i)), Some(i));
            }
        }
    }
}
