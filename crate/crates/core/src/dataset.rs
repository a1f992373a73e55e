//! Per-pupil trial data: validation, z-scoring, and descriptive summaries.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::estimators;
use crate::stats;

/// Treatment arm of a pupil.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Group {
    Control,
    Intervention,
}

impl Group {
    /// 0/1 coding with intervention = 1.
    pub fn indicator(self) -> f64 {
        match self {
            Group::Control => 0.0,
            Group::Intervention => 1.0,
        }
    }

    /// Parses the 0/1 coding; anything else is rejected.
    pub fn from_indicator(x: f64) -> Option<Group> {
        if x == 0.0 {
            Some(Group::Control)
        } else if x == 1.0 {
            Some(Group::Intervention)
        } else {
            None
        }
    }
}

/// One pupil's complete record for a single outcome.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PupilRecord {
    pub pupil_id: String,
    pub school_id: String,
    pub group: Group,
    pub pretest: f64,
    pub posttest: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetError {
    /// No complete-case records remain.
    Empty,
    /// One of the two arms has no pupils.
    SingleArm,
    /// A score is constant where variation is required.
    ZeroVariance,
    /// Fewer records than the operation needs.
    TooFewRecords,
    /// A record carries a non-finite score.
    NonFiniteScore,
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Empty => write!(f, "no complete-case records"),
            DatasetError::SingleArm => write!(f, "one treatment arm is empty"),
            DatasetError::ZeroVariance => write!(f, "score has zero variance"),
            DatasetError::TooFewRecords => write!(f, "too few records"),
            DatasetError::NonFiniteScore => write!(f, "non-finite score in record"),
        }
    }
}

/// Complete-case dataset for one outcome. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialDataset {
    records: Vec<PupilRecord>,
    label: String,
    standardized: bool,
}

impl TrialDataset {
    /// Validates and wraps complete-case records. Input order is preserved.
    ///
    /// Rows with missing or unparseable fields must be dropped (and counted)
    /// by the caller before construction; records here must already be
    /// complete, which is re-checked for finiteness.
    pub fn new(records: Vec<PupilRecord>, label: impl Into<String>) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::Empty);
        }
        if records
            .iter()
            .any(|r| !r.pretest.is_finite() || !r.posttest.is_finite())
        {
            return Err(DatasetError::NonFiniteScore);
        }
        let n_t = records
            .iter()
            .filter(|r| r.group == Group::Intervention)
            .count();
        if n_t == 0 || n_t == records.len() {
            return Err(DatasetError::SingleArm);
        }
        Ok(TrialDataset {
            records,
            label: label.into(),
            standardized: false,
        })
    }

    pub fn records(&self) -> &[PupilRecord] {
        &self.records
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Whether `standardize_z` has been applied.
    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn n_arm(&self, group: Group) -> usize {
        self.records.iter().filter(|r| r.group == group).count()
    }

    /// Number of distinct schools.
    pub fn n_schools(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.school_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Distinct school ids in sorted order.
    pub fn school_ids(&self) -> Vec<&str> {
        self.records
            .iter()
            .map(|r| r.school_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn pretests(&self, group: Group) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.pretest)
            .collect()
    }

    pub fn posttests(&self, group: Group) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.posttest)
            .collect()
    }

    /// Gain scores (post − pre) for one arm, in record order.
    pub fn gains(&self, group: Group) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.posttest - r.pretest)
            .collect()
    }

    fn all_pretests(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.pretest).collect()
    }

    fn all_posttests(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.posttest).collect()
    }

    /// Z-scores both tests over the pooled complete-case sample (both arms
    /// together; per-arm scaling would erase the group difference under
    /// study). Sample SD uses the n−1 denominator.
    pub fn standardize_z(&self) -> Result<TrialDataset, DatasetError> {
        if self.n() < 2 {
            return Err(DatasetError::TooFewRecords);
        }
        let pre = self.all_pretests();
        let post = self.all_posttests();
        let (pre_m, pre_sd) = (stats::mean(&pre), stats::sample_sd(&pre));
        let (post_m, post_sd) = (stats::mean(&post), stats::sample_sd(&post));
        if !(pre_sd > 0.0) || !(post_sd > 0.0) {
            return Err(DatasetError::ZeroVariance);
        }
        let records = self
            .records
            .iter()
            .map(|r| PupilRecord {
                pupil_id: r.pupil_id.clone(),
                school_id: r.school_id.clone(),
                group: r.group,
                pretest: (r.pretest - pre_m) / pre_sd,
                posttest: (r.posttest - post_m) / post_sd,
            })
            .collect();
        Ok(TrialDataset {
            records,
            label: self.label.clone(),
            standardized: true,
        })
    }

    /// Descriptive summary: counts, pre-test/treatment and pre/post
    /// correlations, and the standardized pre-test imbalance.
    pub fn summarize(&self) -> DatasetSummary {
        let pre = self.all_pretests();
        let post = self.all_posttests();
        let group: Vec<f64> = self.records.iter().map(|r| r.group.indicator()).collect();
        let pret_imb = estimators::pretest_imbalance(self).ok().map(|e| e.g);
        DatasetSummary {
            n: self.n(),
            n_t: self.n_arm(Group::Intervention),
            n_c: self.n_arm(Group::Control),
            n_sch: self.n_schools(),
            pt_corr: stats::pearson(&pre, &group),
            pp_corr: stats::pearson(&pre, &post),
            pret_imb,
        }
    }
}

/// Descriptive statistics for one outcome's dataset.
///
/// Correlations are `None` (never silently 0) when a denominator is zero.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetSummary {
    pub n: usize,
    pub n_t: usize,
    pub n_c: usize,
    pub n_sch: usize,
    /// Point-biserial correlation of pre-test with the 0/1 treatment vector.
    pub pt_corr: Option<f64>,
    /// Pearson correlation of pre-test with post-test.
    pub pp_corr: Option<f64>,
    /// Hedges' g of pre-test, intervention minus control.
    pub pret_imb: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    pub(crate) fn record(
        id: usize,
        school: &str,
        group: Group,
        pre: f64,
        post: f64,
    ) -> PupilRecord {
        PupilRecord {
            pupil_id: format!("p{id}"),
            school_id: school.into(),
            group,
            pretest: pre,
            posttest: post,
        }
    }

    fn small_dataset() -> TrialDataset {
        TrialDataset::new(
            vec![
                record(1, "a", Group::Intervention, 1.0, 2.0),
                record(2, "a", Group::Control, 2.0, 4.0),
                record(3, "b", Group::Intervention, 3.0, 6.0),
            ],
            "demo",
        )
        .unwrap()
    }

    #[test]
    fn rejects_empty_and_single_arm() {
        assert_eq!(
            TrialDataset::new(vec![], "x").unwrap_err(),
            DatasetError::Empty
        );
        let all_control = vec![
            record(1, "a", Group::Control, 1.0, 2.0),
            record(2, "a", Group::Control, 2.0, 3.0),
        ];
        assert_eq!(
            TrialDataset::new(all_control, "x").unwrap_err(),
            DatasetError::SingleArm
        );
    }

    #[test]
    fn rejects_non_finite_scores() {
        let recs = vec![
            record(1, "a", Group::Intervention, f64::NAN, 2.0),
            record(2, "a", Group::Control, 2.0, 3.0),
        ];
        assert_eq!(
            TrialDataset::new(recs, "x").unwrap_err(),
            DatasetError::NonFiniteScore
        );
    }

    #[test]
    fn standardize_z_forces_unit_moments() {
        let data = small_dataset();
        let z = data.standardize_z().unwrap();
        // pretests {1,2,3} -> {-1,0,1}; posttests {2,4,6} -> {-1,0,1}
        let pre: Vec<f64> = z.records().iter().map(|r| r.pretest).collect();
        let post: Vec<f64> = z.records().iter().map(|r| r.posttest).collect();
        assert!((pre[0] + 1.0).abs() < 1e-12 && (pre[1]).abs() < 1e-12 && (pre[2] - 1.0).abs() < 1e-12);
        assert!((post[0] + 1.0).abs() < 1e-12 && (post[2] - 1.0).abs() < 1e-12);
        assert!(z.is_standardized());
    }

    #[test]
    fn standardize_z_is_idempotent() {
        let z1 = small_dataset().standardize_z().unwrap();
        let z2 = z1.standardize_z().unwrap();
        for (a, b) in z1.records().iter().zip(z2.records()) {
            assert!((a.pretest - b.pretest).abs() < 1e-12);
            assert!((a.posttest - b.posttest).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_z_rejects_constant_score() {
        let recs = vec![
            record(1, "a", Group::Intervention, 1.0, 5.0),
            record(2, "a", Group::Control, 2.0, 5.0),
            record(3, "b", Group::Control, 3.0, 5.0),
        ];
        let data = TrialDataset::new(recs, "flat").unwrap();
        assert_eq!(data.standardize_z().unwrap_err(), DatasetError::ZeroVariance);
    }

    #[test]
    fn summary_counts_always_add_up() {
        let data = small_dataset();
        let s = data.summarize();
        assert_eq!(s.n, 3);
        assert_eq!(s.n_t + s.n_c, s.n);
        assert_eq!(s.n_sch, 2);
    }

    #[test]
    fn pp_corr_is_one_when_post_equals_pre() {
        let recs = vec![
            record(1, "a", Group::Intervention, 1.0, 1.0),
            record(2, "a", Group::Control, 2.0, 2.0),
            record(3, "b", Group::Intervention, 3.0, 3.0),
            record(4, "b", Group::Control, 4.0, 4.0),
        ];
        let data = TrialDataset::new(recs, "copy").unwrap();
        let s = data.summarize();
        assert!((s.pp_corr.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_pretest_reports_undefined_correlation() {
        let recs = vec![
            record(1, "a", Group::Intervention, 5.0, 1.0),
            record(2, "a", Group::Control, 5.0, 2.0),
            record(3, "b", Group::Intervention, 5.0, 3.0),
        ];
        let data = TrialDataset::new(recs, "flatpre").unwrap();
        let s = data.summarize();
        assert_eq!(s.pt_corr, None);
        assert_eq!(s.pp_corr, None);
        assert_eq!(s.pret_imb, None);
    }
}
