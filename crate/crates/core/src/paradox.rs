//! Classification of estimator pairs: does the effect estimate survive a
//! switch of model, shrink, or reverse?
//!
//! The rules operate on a (post, gain) pair of standardized estimates:
//!
//! * divergence = |g_post − g_gain|; below the divergence threshold the pair
//!   is `Consistent`.
//! * a divergent pair where either estimate sits within the near-zero band is
//!   `BorderlineReversal` — with one estimate at the zero line, calling a
//!   sign flip is not meaningful.
//! * otherwise strictly opposite signs make a `Reversal`, equal signs a
//!   `MagnitudeDivergent` pair.
//!
//! Baseline imbalance is flagged separately from |pre-test g|: above the
//! substantial threshold (default 0.2) it is `Substantial`, above the notable
//! threshold (default 0.1) `Notable`, else `Balanced`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::estimators::EffectEstimate;
use crate::stats;

/// Decision thresholds. All overridable; the defaults mirror common effect
/// size judgment calls rather than anything fundamental.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Thresholds {
    /// Minimum |g_post − g_gain| worth noting.
    pub divergence: f64,
    /// |pret_imb| above this is a substantial baseline imbalance.
    pub imb_substantial: f64,
    /// |pret_imb| above this (and at most substantial) is notable.
    pub imb_notable: f64,
    /// Estimates with |g| below this count as "at the zero line".
    pub near_zero: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            divergence: 0.1,
            imb_substantial: 0.2,
            imb_notable: 0.1,
            near_zero: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ParadoxCategory {
    /// Estimates agree within the divergence threshold.
    Consistent,
    /// Same sign but materially different magnitude.
    MagnitudeDivergent,
    /// Divergent with one estimate at the zero line; a sign flip here is a
    /// judgment call, not a clean reversal.
    BorderlineReversal,
    /// Opposite signs and material divergence.
    Reversal,
}

impl fmt::Display for ParadoxCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParadoxCategory::Consistent => "consistent",
            ParadoxCategory::MagnitudeDivergent => "magnitude-divergent",
            ParadoxCategory::BorderlineReversal => "borderline-reversal",
            ParadoxCategory::Reversal => "reversal",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ImbalanceFlag {
    Balanced,
    Notable,
    Substantial,
}

impl fmt::Display for ImbalanceFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ImbalanceFlag::Balanced => "balanced",
            ImbalanceFlag::Notable => "notable",
            ImbalanceFlag::Substantial => "substantial",
        };
        write!(f, "{s}")
    }
}

/// Verdict for one estimator pair of one outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParadoxVerdict {
    pub category: ParadoxCategory,
    /// |g_post − g_gain| for the classified pair.
    pub divergence: f64,
    /// Baseline-imbalance severity; `None` when pre-test imbalance was
    /// undefined for the record.
    pub imbalance_flag: Option<ImbalanceFlag>,
    /// Whether min(|g_post|, |g_gain|) fell inside the near-zero band.
    pub near_zero: bool,
}

/// One outcome's estimates joined with its summary statistics.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonRecord {
    pub label: String,
    pub g_post: Option<EffectEstimate>,
    pub g_gain: Option<EffectEstimate>,
    pub tt_post: Option<EffectEstimate>,
    pub tt_gain: Option<EffectEstimate>,
    pub pret_imb: Option<f64>,
    pub icc: Option<f64>,
    pub n_schools: Option<usize>,
}

impl ComparisonRecord {
    /// Whether any of the four estimates is missing.
    pub fn is_partial(&self) -> bool {
        self.g_post.is_none()
            || self.g_gain.is_none()
            || self.tt_post.is_none()
            || self.tt_gain.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParadoxError {
    /// The pair to classify is not fully present.
    MissingEstimate,
}

impl fmt::Display for ParadoxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParadoxError::MissingEstimate => write!(f, "estimate pair incomplete"),
        }
    }
}

/// Severity of a baseline imbalance value under the given thresholds.
pub fn imbalance_severity(pret_imb: f64, t: &Thresholds) -> ImbalanceFlag {
    let a = libm::fabs(pret_imb);
    if a > t.imb_substantial {
        ImbalanceFlag::Substantial
    } else if a > t.imb_notable {
        ImbalanceFlag::Notable
    } else {
        ImbalanceFlag::Balanced
    }
}

fn classify_pair(
    g_post: f64,
    g_gain: f64,
    pret_imb: Option<f64>,
    t: &Thresholds,
) -> ParadoxVerdict {
    let divergence = libm::fabs(g_post - g_gain);
    let min_abs = libm::fabs(g_post).min(libm::fabs(g_gain));
    let near_zero = min_abs < t.near_zero;
    let category = if divergence < t.divergence {
        ParadoxCategory::Consistent
    } else if near_zero {
        ParadoxCategory::BorderlineReversal
    } else if g_post * g_gain < 0.0 {
        // strictly opposite signs; an exact zero never counts as a partner
        ParadoxCategory::Reversal
    } else {
        ParadoxCategory::MagnitudeDivergent
    };
    ParadoxVerdict {
        category,
        divergence,
        imbalance_flag: pret_imb.map(|imb| imbalance_severity(imb, t)),
        near_zero,
    }
}

/// Classifies the simple (difference-in-means) pair gP/gG.
pub fn classify(record: &ComparisonRecord, t: &Thresholds) -> Result<ParadoxVerdict, ParadoxError> {
    match (&record.g_post, &record.g_gain) {
        (Some(p), Some(g)) => Ok(classify_pair(p.g, g.g, record.pret_imb, t)),
        _ => Err(ParadoxError::MissingEstimate),
    }
}

/// Classifies the multilevel pair ttP/ttG under the same rules.
pub fn classify_mlm(
    record: &ComparisonRecord,
    t: &Thresholds,
) -> Result<ParadoxVerdict, ParadoxError> {
    match (&record.tt_post, &record.tt_gain) {
        (Some(p), Some(g)) => Ok(classify_pair(p.g, g.g, record.pret_imb, t)),
        _ => Err(ParadoxError::MissingEstimate),
    }
}

/// Verdict counts by category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CategoryCounts {
    pub consistent: usize,
    pub magnitude_divergent: usize,
    pub borderline_reversal: usize,
    pub reversal: usize,
}

impl CategoryCounts {
    fn bump(&mut self, c: ParadoxCategory) {
        match c {
            ParadoxCategory::Consistent => self.consistent += 1,
            ParadoxCategory::MagnitudeDivergent => self.magnitude_divergent += 1,
            ParadoxCategory::BorderlineReversal => self.borderline_reversal += 1,
            ParadoxCategory::Reversal => self.reversal += 1,
        }
    }
}

/// Record counts by baseline-imbalance flag.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImbalanceCounts {
    pub balanced: usize,
    pub notable: usize,
    pub substantial: usize,
    pub undefined: usize,
}

/// One classified row of a batch.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BatchRow {
    pub label: String,
    /// Verdict on the gP/gG pair; `None` when either estimate is missing.
    pub simple: Option<ParadoxVerdict>,
    /// Verdict on the ttP/ttG pair; `None` when either estimate is missing.
    pub mlm: Option<ParadoxVerdict>,
}

/// Batch verdicts plus aggregates, input order preserved.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BatchReport {
    pub rows: Vec<BatchRow>,
    pub simple_counts: CategoryCounts,
    pub mlm_counts: CategoryCounts,
    pub imbalance_counts: ImbalanceCounts,
    pub median_divergence_simple: Option<f64>,
    pub median_divergence_mlm: Option<f64>,
}

/// Classifies every record on both pairs. Partial records yield partial rows
/// rather than errors.
pub fn batch_classify(records: &[ComparisonRecord], t: &Thresholds) -> BatchReport {
    let mut rows = Vec::with_capacity(records.len());
    let mut simple_counts = CategoryCounts::default();
    let mut mlm_counts = CategoryCounts::default();
    let mut imbalance_counts = ImbalanceCounts::default();
    let mut div_simple = Vec::new();
    let mut div_mlm = Vec::new();

    for rec in records {
        let simple = classify(rec, t).ok();
        let mlm = classify_mlm(rec, t).ok();
        if let Some(v) = &simple {
            simple_counts.bump(v.category);
            div_simple.push(v.divergence);
        }
        if let Some(v) = &mlm {
            mlm_counts.bump(v.category);
            div_mlm.push(v.divergence);
        }
        match rec.pret_imb.map(|imb| imbalance_severity(imb, t)) {
            Some(ImbalanceFlag::Balanced) => imbalance_counts.balanced += 1,
            Some(ImbalanceFlag::Notable) => imbalance_counts.notable += 1,
            Some(ImbalanceFlag::Substantial) => imbalance_counts.substantial += 1,
            None => imbalance_counts.undefined += 1,
        }
        rows.push(BatchRow {
            label: rec.label.clone(),
            simple,
            mlm,
        });
    }

    BatchReport {
        rows,
        simple_counts,
        mlm_counts,
        imbalance_counts,
        median_divergence_simple: stats::median(&div_simple),
        median_divergence_mlm: stats::median(&div_mlm),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimateKind;
    use alloc::vec;

    fn est(g: f64) -> EffectEstimate {
        EffectEstimate::from_bounds(EstimateKind::PostDim, g, g - 0.1, g + 0.1)
    }

    fn record(g_post: f64, g_gain: f64, imb: f64) -> ComparisonRecord {
        ComparisonRecord {
            label: "x".into(),
            g_post: Some(est(g_post)),
            g_gain: Some(est(g_gain)),
            tt_post: None,
            tt_gain: None,
            pret_imb: Some(imb),
            icc: None,
            n_schools: None,
        }
    }

    fn mlm_record(tt_post: f64, tt_gain: f64, imb: f64) -> ComparisonRecord {
        ComparisonRecord {
            label: "x".into(),
            g_post: None,
            g_gain: None,
            tt_post: Some(est(tt_post)),
            tt_gain: Some(est(tt_gain)),
            pret_imb: Some(imb),
            icc: None,
            n_schools: None,
        }
    }

    #[test]
    fn published_simple_pairs() {
        let t = Thresholds::default();
        // opposite signs, both away from zero, heavily imbalanced baseline
        let v = classify(&record(-0.23, 0.27, -0.41), &t).unwrap();
        assert_eq!(v.category, ParadoxCategory::Reversal);
        assert_eq!(v.imbalance_flag, Some(ImbalanceFlag::Substantial));

        // near-identical estimates on a balanced baseline
        let v = classify(&record(0.12, 0.11, 0.00), &t).unwrap();
        assert_eq!(v.category, ParadoxCategory::Consistent);
        assert_eq!(v.imbalance_flag, Some(ImbalanceFlag::Balanced));

        // huge divergence but the gain estimate sits on the zero line
        let v = classify(&record(-1.66, -0.02, -2.64), &t).unwrap();
        assert_eq!(v.category, ParadoxCategory::BorderlineReversal);
        assert!(v.near_zero);
        assert!((v.divergence - 1.64).abs() < 1e-12);
        assert_eq!(v.imbalance_flag, Some(ImbalanceFlag::Substantial));

        // same sign, divergent magnitude
        let v = classify(&record(0.35, 0.11, 0.25), &t).unwrap();
        assert_eq!(v.category, ParadoxCategory::MagnitudeDivergent);
        assert_eq!(v.imbalance_flag, Some(ImbalanceFlag::Substantial));
    }

    #[test]
    fn published_mlm_pairs() {
        let t = Thresholds::default();
        let v = classify_mlm(&mlm_record(0.08, 0.15, -0.41), &t).unwrap();
        assert_eq!(v.category, ParadoxCategory::Consistent);
        assert!((v.divergence - 0.07).abs() < 1e-12);

        let v = classify_mlm(&mlm_record(0.14, -0.02, -2.64), &t).unwrap();
        assert_eq!(v.category, ParadoxCategory::BorderlineReversal);

        let v = classify_mlm(&mlm_record(0.07, 0.24, -0.36), &t).unwrap();
        assert_eq!(v.category, ParadoxCategory::MagnitudeDivergent);
    }

    #[test]
    fn zero_never_partners_a_reversal() {
        let mut t = Thresholds::default();
        t.near_zero = 0.0; // even with the band switched off
        let v = classify(&record(0.0, 0.5, 0.0), &t).unwrap();
        assert_ne!(v.category, ParadoxCategory::Reversal);
    }

    #[test]
    fn missing_estimate_errors() {
        let t = Thresholds::default();
        let rec = mlm_record(0.1, 0.2, 0.0);
        assert_eq!(classify(&rec, &t).unwrap_err(), ParadoxError::MissingEstimate);
        assert!(rec.is_partial());
    }

    #[test]
    fn notable_band_is_half_open() {
        let t = Thresholds::default();
        let v = classify(&record(0.0, 0.0, 0.10), &t).unwrap();
        assert_eq!(v.imbalance_flag, Some(ImbalanceFlag::Balanced));
        let v = classify(&record(0.0, 0.0, 0.11), &t).unwrap();
        assert_eq!(v.imbalance_flag, Some(ImbalanceFlag::Notable));
        let v = classify(&record(0.0, 0.0, 0.20), &t).unwrap();
        assert_eq!(v.imbalance_flag, Some(ImbalanceFlag::Notable));
        let v = classify(&record(0.0, 0.0, -0.21), &t).unwrap();
        assert_eq!(v.imbalance_flag, Some(ImbalanceFlag::Substantial));
    }

    #[test]
    fn negation_symmetry() {
        let t = Thresholds::default();
        let cases = [
            (-0.23, 0.27, -0.41),
            (0.35, 0.11, 0.25),
            (-1.66, -0.02, -2.64),
            (0.12, 0.11, 0.0),
        ];
        for (p, g, imb) in cases {
            let v1 = classify(&record(p, g, imb), &t).unwrap();
            let v2 = classify(&record(-p, -g, -imb), &t).unwrap();
            assert_eq!(v1, v2);
        }
    }

    #[test]
    fn batch_handles_partial_records() {
        let t = Thresholds::default();
        let mut partial = record(0.1, 0.1, 0.0);
        partial.g_gain = None;
        let records = vec![record(-0.23, 0.27, -0.41), partial];
        let report = batch_classify(&records, &t);
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[0].simple.is_some());
        assert!(report.rows[1].simple.is_none());
        assert_eq!(report.simple_counts.reversal, 1);
        assert_eq!(report.imbalance_counts.substantial, 1);
        assert_eq!(report.imbalance_counts.balanced, 1);
        assert_eq!(report.imbalance_counts.undefined, 0);
    }
}
