//! Simple (no-pooling) effect-size estimators: difference-in-means of
//! post-test and of gain scores as Hedges' g, plus the baseline-imbalance
//! metric on pre-test.

use core::fmt;

use crate::dataset::{Group, TrialDataset};
use crate::math;
use crate::stats;
use crate::Z_95;

/// Which model an estimate came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EstimateKind {
    /// Difference-in-means of post-test (`gP`).
    PostDim,
    /// Difference-in-means of gain scores (`gG`).
    GainDim,
    /// Multilevel post-test ANCOVA, total-variance scaled (`ttP`).
    MlmPostAncova,
    /// Multilevel gain ANOVA, total-variance scaled (`ttG`).
    MlmGainAnova,
    /// Hedges' g of pre-test between arms (baseline imbalance).
    PretestImbalance,
}

impl EstimateKind {
    /// Short column code used in tabular output.
    pub fn code(self) -> &'static str {
        match self {
            EstimateKind::PostDim => "gP",
            EstimateKind::GainDim => "gG",
            EstimateKind::MlmPostAncova => "ttP",
            EstimateKind::MlmGainAnova => "ttG",
            EstimateKind::PretestImbalance => "pret.imb",
        }
    }
}

/// Standardized mean difference with a symmetric Wald 95% interval.
///
/// `se`/`lb`/`ub` are `None` only for the degenerate-gains case (all gains
/// identical), where the point estimate is defined as 0 and the uncertainty
/// is undefined.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EffectEstimate {
    pub kind: EstimateKind,
    pub g: f64,
    pub se: Option<f64>,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
}

impl EffectEstimate {
    /// Point estimate with a Wald interval `g ± 1.96·se`.
    pub fn wald(kind: EstimateKind, g: f64, se: f64) -> Self {
        EffectEstimate {
            kind,
            g,
            se: Some(se),
            lb: Some(g - Z_95 * se),
            ub: Some(g + Z_95 * se),
        }
    }

    /// Zero estimate with undefined uncertainty (degenerate gains).
    pub fn degenerate(kind: EstimateKind) -> Self {
        EffectEstimate {
            kind,
            g: 0.0,
            se: None,
            lb: None,
            ub: None,
        }
    }

    /// Reconstructs an estimate from published point and interval bounds,
    /// backing out the implied standard error.
    pub fn from_bounds(kind: EstimateKind, g: f64, lb: f64, ub: f64) -> Self {
        EffectEstimate {
            kind,
            g,
            se: Some((ub - lb) / (2.0 * Z_95)),
            lb: Some(lb),
            ub: Some(ub),
        }
    }

    /// Confidence-interval width, if defined.
    pub fn width(&self) -> Option<f64> {
        match (self.lb, self.ub) {
            (Some(lb), Some(ub)) => Some(ub - lb),
            _ => None,
        }
    }

    /// Whether the interval covers `value`.
    pub fn covers(&self, value: f64) -> Option<bool> {
        match (self.lb, self.ub) {
            (Some(lb), Some(ub)) => Some(lb <= value && value <= ub),
            _ => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.se.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorError {
    /// An arm has fewer than 2 observations.
    TooFewObservations,
    /// Pooled variance is zero, so the standardized difference is undefined.
    ZeroPooledVariance,
}

impl fmt::Display for EstimatorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorError::TooFewObservations => write!(f, "each arm needs at least 2 values"),
            EstimatorError::ZeroPooledVariance => write!(f, "pooled variance is zero"),
        }
    }
}

/// Hedges' g for treatment vs control values.
///
/// g = J · (mean_t − mean_c) / s_p with the pooled n−1 variance
/// s_p² = ((n_t−1)s_t² + (n_c−1)s_c²)/(n_t+n_c−2) and small-sample correction
/// J = 1 − 3/(4·df − 1). The standard error is
/// sqrt((n_t+n_c)/(n_t·n_c) + g²/(2(n_t+n_c))).
pub fn hedges_g(
    values_t: &[f64],
    values_c: &[f64],
    kind: EstimateKind,
) -> Result<EffectEstimate, EstimatorError> {
    let n_t = values_t.len();
    let n_c = values_c.len();
    if n_t < 2 || n_c < 2 {
        return Err(EstimatorError::TooFewObservations);
    }
    let df = (n_t + n_c - 2) as f64;
    let pooled_var = ((n_t - 1) as f64 * stats::sample_var(values_t)
        + (n_c - 1) as f64 * stats::sample_var(values_c))
        / df;
    if !(pooled_var > 0.0) {
        return Err(EstimatorError::ZeroPooledVariance);
    }
    let j = 1.0 - 3.0 / (4.0 * df - 1.0);
    let g = j * (stats::mean(values_t) - stats::mean(values_c)) / math::sqrt(pooled_var);
    let n = (n_t + n_c) as f64;
    let se = math::sqrt(n / (n_t as f64 * n_c as f64) + g * g / (2.0 * n));
    Ok(EffectEstimate::wald(kind, g, se))
}

/// Difference-in-means of post-test as Hedges' g (`gP`).
pub fn dim_post(data: &TrialDataset) -> Result<EffectEstimate, EstimatorError> {
    hedges_g(
        &data.posttests(Group::Intervention),
        &data.posttests(Group::Control),
        EstimateKind::PostDim,
    )
}

/// Difference-in-means of gain scores as Hedges' g (`gG`).
///
/// When every gain in the dataset is identical the estimate is defined as 0
/// with undefined uncertainty instead of an error; archival data does contain
/// such degenerate outcomes.
pub fn dim_gain(data: &TrialDataset) -> Result<EffectEstimate, EstimatorError> {
    let gains_t = data.gains(Group::Intervention);
    let gains_c = data.gains(Group::Control);
    let first = gains_t.first().or(gains_c.first()).copied();
    if let Some(v) = first {
        if gains_t.iter().chain(gains_c.iter()).all(|&x| x == v) {
            return Ok(EffectEstimate::degenerate(EstimateKind::GainDim));
        }
    }
    hedges_g(&gains_t, &gains_c, EstimateKind::GainDim)
}

/// Hedges' g of pre-test between arms, intervention mean minus control mean.
pub fn pretest_imbalance(data: &TrialDataset) -> Result<EffectEstimate, EstimatorError> {
    hedges_g(
        &data.pretests(Group::Intervention),
        &data.pretests(Group::Control),
        EstimateKind::PretestImbalance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{PupilRecord, TrialDataset};
    use alloc::format;
    use alloc::vec::Vec;

    fn dataset_from_scores(rows: &[(&str, Group, f64, f64)]) -> TrialDataset {
        let records: Vec<PupilRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (school, group, pre, post))| PupilRecord {
                pupil_id: format!("p{i}"),
                school_id: (*school).into(),
                group: *group,
                pretest: *pre,
                posttest: *post,
            })
            .collect();
        TrialDataset::new(records, "t").unwrap()
    }

    #[test]
    fn hand_computed_example() {
        // t = {1,2,3}, c = {0,1,2}: mean diff 1, s_p = 1, df = 4,
        // J = 1 - 3/15 = 0.8 -> g = 0.8.
        let est = hedges_g(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0], EstimateKind::PostDim).unwrap();
        assert!((est.g - 0.8).abs() < 1e-12);
        let se = est.se.unwrap();
        let expected_se = (6.0 / 9.0 + 0.64 / 12.0f64).sqrt();
        assert!((se - expected_se).abs() < 1e-12);
        assert!((est.ub.unwrap() - (0.8 + 1.96 * expected_se)).abs() < 1e-12);
    }

    #[test]
    fn zero_when_means_equal() {
        let est = hedges_g(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], EstimateKind::PostDim).unwrap();
        assert_eq!(est.g, 0.0);
        assert!((est.ub.unwrap() + est.lb.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn antisymmetric_under_arm_swap() {
        let t = [1.3, 2.7, 0.4, 3.3];
        let c = [0.1, 1.9, 2.2];
        let a = hedges_g(&t, &c, EstimateKind::PostDim).unwrap();
        let b = hedges_g(&c, &t, EstimateKind::PostDim).unwrap();
        assert!((a.g + b.g).abs() < 1e-12);
        assert!((a.se.unwrap() - b.se.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            hedges_g(&[1.0], &[1.0, 2.0], EstimateKind::PostDim).unwrap_err(),
            EstimatorError::TooFewObservations
        );
        assert_eq!(
            hedges_g(&[1.0, 1.0], &[2.0, 2.0], EstimateKind::PostDim).unwrap_err(),
            EstimatorError::ZeroPooledVariance
        );
    }

    #[test]
    fn degenerate_gains_report_zero_with_undefined_se() {
        // post == pre for everyone: all gains are exactly 0
        let data = dataset_from_scores(&[
            ("a", Group::Intervention, 1.0, 1.0),
            ("a", Group::Intervention, 2.0, 2.0),
            ("b", Group::Control, 3.0, 3.0),
            ("b", Group::Control, 4.0, 4.0),
        ]);
        let est = dim_gain(&data).unwrap();
        assert_eq!(est.g, 0.0);
        assert!(est.is_degenerate());
    }

    #[test]
    fn constant_but_unequal_gains_error_out() {
        let data = dataset_from_scores(&[
            ("a", Group::Intervention, 1.0, 4.0),
            ("a", Group::Intervention, 2.0, 5.0),
            ("b", Group::Control, 3.0, 3.0),
            ("b", Group::Control, 4.0, 4.0),
        ]);
        assert_eq!(
            dim_gain(&data).unwrap_err(),
            EstimatorError::ZeroPooledVariance
        );
    }

    #[test]
    fn dim_post_zero_for_identical_arms() {
        let data = dataset_from_scores(&[
            ("a", Group::Intervention, 1.0, 5.0),
            ("a", Group::Intervention, 2.0, 7.0),
            ("b", Group::Control, 3.0, 5.0),
            ("b", Group::Control, 4.0, 7.0),
        ]);
        assert_eq!(dim_post(&data).unwrap().g, 0.0);
    }

    #[test]
    fn pretest_imbalance_sign_is_intervention_minus_control() {
        let data = dataset_from_scores(&[
            ("a", Group::Intervention, 1.0, 0.0),
            ("a", Group::Intervention, 2.0, 1.0),
            ("b", Group::Control, 3.0, 0.0),
            ("b", Group::Control, 4.0, 1.0),
        ]);
        let est = pretest_imbalance(&data).unwrap();
        assert!(est.g < 0.0);
    }

    #[test]
    fn gains_identity_with_ols_slope() {
        // dim_gain equals the OLS coefficient of gain on the 0/1 treatment
        // indicator, scaled by the pooled gain SD and bias-corrected.
        let data = dataset_from_scores(&[
            ("a", Group::Intervention, 1.0, 4.0),
            ("a", Group::Intervention, 2.0, 4.5),
            ("a", Group::Control, 3.0, 3.2),
            ("b", Group::Intervention, 0.5, 2.9),
            ("b", Group::Control, 4.0, 4.8),
            ("b", Group::Control, 2.0, 2.1),
        ]);
        let est = dim_gain(&data).unwrap();

        // OLS of gain on [1, T]: slope = mean gain difference.
        let gains_t = data.gains(Group::Intervention);
        let gains_c = data.gains(Group::Control);
        let slope = stats::mean(&gains_t) - stats::mean(&gains_c);
        let df = (gains_t.len() + gains_c.len() - 2) as f64;
        let pooled = ((gains_t.len() - 1) as f64 * stats::sample_var(&gains_t)
            + (gains_c.len() - 1) as f64 * stats::sample_var(&gains_c))
            / df;
        let j = 1.0 - 3.0 / (4.0 * df - 1.0);
        let expected = j * slope / pooled.sqrt();
        assert!((est.g - expected).abs() < 1e-10);
    }
}
