//! Random-intercept linear mixed model fitted by profiled REML.
//!
//! Model: y_ij = x_ij'β + u_j + ε_ij with u_j ~ N(0, σ²_u) per school and
//! ε_ij ~ N(0, σ²_e). Writing λ = σ²_u/σ²_e, the scaled covariance of a
//! school of size n_j is W_j = I + λ·11' with the closed-form inverse
//! W_j⁻¹ = I − (λ/(1+λ·n_j))·11', so GLS and the REML criterion reduce to
//! per-school sufficient statistics and each λ evaluation costs
//! O(#schools · p²).
//!
//! The profiled criterion
//!
//! ```text
//! crit(λ) = Σ_j log(1+λ·n_j) + (n−p)·log(r'W⁻¹r) + log|X'W⁻¹X|
//! ```
//!
//! is minimized by golden-section search over log10 λ ∈ [−12, 12] to an
//! absolute tolerance of 1e−8. λ below 1e−10, or a criterion no better than
//! the λ = 0 boundary, reports σ²_u = 0 and icc = 0 exactly. Fitting is
//! deterministic: identical input produces bit-identical output.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::dataset::TrialDataset;
use crate::estimators::{EffectEstimate, EstimateKind};
use crate::linalg;
use crate::math;
use crate::Z_95;

/// Outcome variable of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Outcome {
    /// Post-test score.
    Post,
    /// Gain score (post − pre).
    Gain,
}

/// Fixed-effect structure. Treatment is always included; the pre-test
/// covariate is optional. Post + pretest is the post-ANCOVA model; Gain
/// without pretest is the gain-ANOVA ("ANOVA of change") model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LmmSpec {
    pub outcome: Outcome,
    pub with_pretest: bool,
}

impl LmmSpec {
    pub fn post_ancova() -> Self {
        LmmSpec {
            outcome: Outcome::Post,
            with_pretest: true,
        }
    }

    pub fn gain_anova() -> Self {
        LmmSpec {
            outcome: Outcome::Gain,
            with_pretest: false,
        }
    }

    /// Number of fixed effects: intercept, treatment, optional pretest slope.
    pub fn n_fixed(&self) -> usize {
        if self.with_pretest {
            3
        } else {
            2
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmmError {
    /// Fewer than 2 distinct schools.
    TooFewSchools,
    /// Design matrix is not full rank (e.g. a constant covariate).
    RankDeficientDesign,
    /// REML criterion was non-finite somewhere on the search bracket.
    NonConvergence,
    /// Operation requires a converged fit.
    NotConverged,
}

impl fmt::Display for LmmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LmmError::TooFewSchools => write!(f, "need at least 2 schools"),
            LmmError::RankDeficientDesign => write!(f, "design matrix is rank deficient"),
            LmmError::NonConvergence => write!(f, "REML criterion not finite on bracket"),
            LmmError::NotConverged => write!(f, "fit did not converge"),
        }
    }
}

/// Fitted random-intercept model.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LmmFit {
    pub spec: LmmSpec,
    /// Fixed effects: [intercept, treatment, pretest slope?].
    pub beta: Vec<f64>,
    /// Wald standard errors of `beta`.
    pub se_beta: Vec<f64>,
    /// Between-school variance σ²_u.
    pub sigma2_u: f64,
    /// Residual variance σ²_e.
    pub sigma2_e: f64,
    /// Variance ratio σ²_u/σ²_e at the optimum (0 when clamped).
    pub lambda: f64,
    /// Intra-cluster correlation σ²_u/(σ²_u+σ²_e).
    pub icc: f64,
    /// Profiled REML criterion value at the optimum.
    pub reml_value: f64,
    pub converged: bool,
    pub n: usize,
    pub n_schools: usize,
    /// Distinct school ids in sorted order, aligned with `blups`.
    pub schools: Vec<String>,
    /// Best linear unbiased predictors of the school intercepts (diagnostic).
    pub blups: Vec<f64>,
}

impl LmmFit {
    /// Treatment coefficient β₁ and its standard error.
    pub fn treatment_effect(&self) -> (f64, f64) {
        (self.beta[1], self.se_beta[1])
    }

    /// BLUPs keyed by school id.
    pub fn blups_by_school(&self) -> impl Iterator<Item = (&str, f64)> {
        self.schools
            .iter()
            .map(String::as_str)
            .zip(self.blups.iter().copied())
    }
}

/// Fits the random-intercept model chosen by `spec`.
pub fn fit_lmm(data: &TrialDataset, spec: LmmSpec) -> Result<LmmFit, LmmError> {
    let schools: Vec<String> = data
        .school_ids()
        .into_iter()
        .map(String::from)
        .collect();
    if schools.len() < 2 {
        return Err(LmmError::TooFewSchools);
    }
    let index_of = |id: &str| schools.binary_search_by(|s| s.as_str().cmp(id)).unwrap();

    let p = spec.n_fixed();
    let n = data.n();
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * p);
    let mut school_of = Vec::with_capacity(n);
    for r in data.records() {
        y.push(match spec.outcome {
            Outcome::Post => r.posttest,
            Outcome::Gain => r.posttest - r.pretest,
        });
        x.push(1.0);
        x.push(r.group.indicator());
        if spec.with_pretest {
            x.push(r.pretest);
        }
        school_of.push(index_of(&r.school_id));
    }

    let profiler = Profiler::new(&y, &x, p, &school_of)?;
    let fit = profiler.fit()?;
    Ok(LmmFit {
        spec,
        beta: fit.beta,
        se_beta: fit.se_beta,
        sigma2_u: fit.sigma2_u,
        sigma2_e: fit.sigma2_e,
        lambda: fit.lambda,
        icc: fit.icc,
        reml_value: fit.reml_value,
        converged: fit.converged,
        n,
        n_schools: schools.len(),
        schools,
        blups: fit.blups,
    })
}

/// Treatment effect scaled by the model's total variance:
/// g = β̂₁ / sqrt(σ̂²_u + σ̂²_e), with the Wald interval of β̂₁ scaled the
/// same way. No small-sample correction is applied; the denominator is a
/// model-based variance, not a pooled sample SD.
pub fn effect_size_total_variance(fit: &LmmFit) -> Result<EffectEstimate, LmmError> {
    if !fit.converged {
        return Err(LmmError::NotConverged);
    }
    let total_sd = math::sqrt(fit.sigma2_u + fit.sigma2_e);
    let (beta1, se1) = fit.treatment_effect();
    let kind = match fit.spec.outcome {
        Outcome::Post => EstimateKind::MlmPostAncova,
        Outcome::Gain => EstimateKind::MlmGainAnova,
    };
    Ok(EffectEstimate {
        kind,
        g: beta1 / total_sd,
        se: Some(se1 / total_sd),
        lb: Some((beta1 - Z_95 * se1) / total_sd),
        ub: Some((beta1 + Z_95 * se1) / total_sd),
    })
}

/// Intra-cluster correlation of a converged fit.
pub fn icc_of(fit: &LmmFit) -> Result<f64, LmmError> {
    if !fit.converged {
        return Err(LmmError::NotConverged);
    }
    Ok(fit.icc)
}

/// Result of a low-level profiled fit (no dataset/spec attached).
#[derive(Clone, Debug, PartialEq)]
pub struct EngineFit {
    pub beta: Vec<f64>,
    pub se_beta: Vec<f64>,
    pub sigma2_u: f64,
    pub sigma2_e: f64,
    pub lambda: f64,
    pub icc: f64,
    pub reml_value: f64,
    pub converged: bool,
    pub blups: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub n_schools: usize,
}

/// Per-school sufficient statistics in centered form. Centering keeps the
/// GLS assembly free of cancellation at extreme λ: every λ-dependent term is
/// a non-negative weight `d = 1/(1+λ·n)` times a between-school product, and
/// the within-school products carry no λ at all.
struct SchoolStats {
    n: f64,
    /// School means of the design columns.
    mean_x: Vec<f64>,
    /// School mean of the outcome.
    mean_y: f64,
    /// Σ (x−x̄)(x−x̄)', row-major p×p.
    cxx: Vec<f64>,
    /// Σ (x−x̄)(y−ȳ).
    cxy: Vec<f64>,
    /// Σ (y−ȳ)².
    cyy: f64,
}

/// Per-school sufficient statistics for one (y, X, grouping) triple, with the
/// REML profile criterion evaluable at any λ ≥ 0.
pub struct Profiler {
    schools: Vec<SchoolStats>,
    n: usize,
    p: usize,
}

/// λ values below this bound are reported as exactly σ²_u = 0, icc = 0.
pub const LAMBDA_ZERO: f64 = 1e-10;

/// log10 λ search bracket.
pub const LOG10_LAMBDA_RANGE: (f64, f64) = (-12.0, 12.0);

/// Absolute golden-section tolerance in log10 λ.
pub const LOG10_LAMBDA_TOL: f64 = 1e-8;

// A criterion within this of the λ = 0 boundary value is treated as the
// boundary: with one pupil per school the profile is exactly flat in λ and
// float noise must not push the fit to an arbitrary interior point.
const BOUNDARY_SLACK: f64 = 1e-9;

impl Profiler {
    /// `x` is the design matrix in row-major order (`n` rows of `p` values);
    /// `school_of[i]` is the 0-based school index of row `i`, with every
    /// school index in `0..max+1` occupied.
    pub fn new(y: &[f64], x: &[f64], p: usize, school_of: &[usize]) -> Result<Self, LmmError> {
        let n = y.len();
        assert_eq!(x.len(), n * p, "design matrix shape mismatch");
        assert_eq!(school_of.len(), n, "school index length mismatch");
        let n_schools = school_of.iter().copied().max().map_or(0, |m| m + 1);
        if n <= p {
            return Err(LmmError::RankDeficientDesign);
        }

        let mut schools: Vec<SchoolStats> = (0..n_schools)
            .map(|_| SchoolStats {
                n: 0.0,
                mean_x: vec![0.0; p],
                mean_y: 0.0,
                cxx: vec![0.0; p * p],
                cxy: vec![0.0; p],
                cyy: 0.0,
            })
            .collect();
        // First pass: school means.
        for (i, &j) in school_of.iter().enumerate() {
            let row = &x[i * p..(i + 1) * p];
            let s = &mut schools[j];
            s.n += 1.0;
            for a in 0..p {
                s.mean_x[a] += row[a];
            }
            s.mean_y += y[i];
        }
        for s in &mut schools {
            if s.n == 0.0 {
                return Err(LmmError::RankDeficientDesign);
            }
            for a in 0..p {
                s.mean_x[a] /= s.n;
            }
            s.mean_y /= s.n;
        }
        // Second pass: centered cross-products.
        for (i, &j) in school_of.iter().enumerate() {
            let row = &x[i * p..(i + 1) * p];
            let s = &mut schools[j];
            let dy = y[i] - s.mean_y;
            for a in 0..p {
                let da = row[a] - s.mean_x[a];
                s.cxy[a] += da * dy;
                for b in 0..p {
                    s.cxx[a * p + b] += da * (row[b] - s.mean_x[b]);
                }
            }
            s.cyy += dy * dy;
        }
        let profiler = Profiler { schools, n, p };

        // Rank check at λ = 0 (plain X'X) with a relative pivot tolerance;
        // exact-arithmetic singularity can round to a tiny positive pivot.
        let (a0, _) = profiler.gls_matrices(0.0);
        if !full_rank(&a0, p) {
            return Err(LmmError::RankDeficientDesign);
        }
        Ok(profiler)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_schools(&self) -> usize {
        self.schools.len()
    }

    /// X'W⁻¹X and X'W⁻¹y at the given λ, assembled as
    /// Σ_j [C_j + d_j·n_j·(school-mean products)] with d_j = 1/(1+λ·n_j).
    fn gls_matrices(&self, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let p = self.p;
        let mut a = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        for s in &self.schools {
            let w = s.n / (1.0 + lambda * s.n);
            for i in 0..p {
                b[i] += s.cxy[i] + w * s.mean_x[i] * s.mean_y;
                for j in 0..p {
                    a[i * p + j] += s.cxx[i * p + j] + w * s.mean_x[i] * s.mean_x[j];
                }
            }
        }
        (a, b)
    }

    /// Weighted residual sum of squares r'W⁻¹r for the GLS coefficients:
    /// per school, the within-school (centered) residual quadratic plus the
    /// shrunken between-school part d_j·n_j·(ȳ_j − β'x̄_j)².
    fn weighted_rss(&self, lambda: f64, beta: &[f64]) -> f64 {
        let p = self.p;
        let mut rss = 0.0;
        for s in &self.schools {
            let w = s.n / (1.0 + lambda * s.n);
            let mut within = s.cyy;
            let mut mean_resid = s.mean_y;
            for i in 0..p {
                within -= 2.0 * beta[i] * s.cxy[i];
                mean_resid -= beta[i] * s.mean_x[i];
                for j in 0..p {
                    within += beta[i] * beta[j] * s.cxx[i * p + j];
                }
            }
            rss += within + w * mean_resid * mean_resid;
        }
        rss
    }

    /// Profiled REML criterion at λ. Returns NaN where undefined (rank
    /// collapse at extreme λ, or a perfect fit).
    pub fn criterion(&self, lambda: f64) -> f64 {
        let p = self.p;
        let (a, b) = self.gls_matrices(lambda);
        let Some(l) = linalg::cholesky(&a, p) else {
            return f64::NAN;
        };
        let beta = linalg::chol_solve(&l, &b, p);
        let rss = self.weighted_rss(lambda, &beta);
        if !(rss > 0.0) {
            return f64::NAN;
        }
        let mut log_det_w = 0.0;
        for s in &self.schools {
            log_det_w += math::ln(1.0 + lambda * s.n);
        }
        log_det_w + (self.n - p) as f64 * math::ln(rss) + linalg::chol_logdet(&l, p)
    }

    /// Golden-section minimization over log10 λ, with boundary clamping.
    pub fn fit(&self) -> Result<EngineFit, LmmError> {
        let (lo, hi) = LOG10_LAMBDA_RANGE;
        let f = |x: f64| self.criterion(math::exp10(x));

        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut a = lo;
        let mut b = hi;
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        if !f1.is_finite() || !f2.is_finite() {
            return Err(LmmError::NonConvergence);
        }
        while b - a > LOG10_LAMBDA_TOL {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = f(x2);
            }
            if !f1.is_finite() || !f2.is_finite() {
                return Err(LmmError::NonConvergence);
            }
        }
        let (mut x_star, mut crit_star) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };

        // Parabolic refinement. At the bottom of the basin the criterion is
        // flat to second order, so golden-section comparisons there resolve
        // float noise and the located minimum wanders by ~1e-8 in log10 λ;
        // a vertex fit at a wider spacing reads the curvature well above the
        // noise and pins the optimum to ~1e-11. Fits of algebraically
        // identical models (gain-with-pretest vs post-ANCOVA) then agree in
        // their coefficients to well below 1e-9.
        for h in [1e-3, 1e-5] {
            if x_star - h < lo || x_star + h > hi {
                continue;
            }
            let f_mid = f(x_star);
            let f_plus = f(x_star + h);
            let f_minus = f(x_star - h);
            if !(f_mid.is_finite() && f_plus.is_finite() && f_minus.is_finite()) {
                return Err(LmmError::NonConvergence);
            }
            let curvature = f_plus - 2.0 * f_mid + f_minus;
            if curvature <= 0.0 {
                continue;
            }
            let step = -0.5 * h * (f_plus - f_minus) / curvature;
            let x_new = (x_star + step.clamp(-h, h)).clamp(lo, hi);
            let crit_new = f(x_new);
            if crit_new.is_finite() {
                x_star = x_new;
                crit_star = crit_new;
            }
        }
        let lambda_star = math::exp10(x_star);

        let crit_zero = self.criterion(0.0);
        if !crit_zero.is_finite() {
            return Err(LmmError::NonConvergence);
        }
        let lambda = if lambda_star < LAMBDA_ZERO || crit_zero <= crit_star + BOUNDARY_SLACK {
            0.0
        } else {
            lambda_star
        };
        Ok(self.extract(lambda))
    }

    /// Assembles estimates at a fixed λ (0 means the clamped boundary).
    pub fn extract(&self, lambda: f64) -> EngineFit {
        let p = self.p;
        let (a, b) = self.gls_matrices(lambda);
        let l = linalg::cholesky(&a, p).expect("GLS matrix not positive definite at optimum");
        let beta = linalg::chol_solve(&l, &b, p);
        let rss = self.weighted_rss(lambda, &beta);
        let sigma2_e = rss / (self.n - p) as f64;
        let sigma2_u = lambda * sigma2_e;
        let inv_diag = linalg::chol_inverse_diag(&l, p);
        let se_beta = inv_diag
            .iter()
            .map(|&d| math::sqrt(d * sigma2_e))
            .collect();
        let blups = self
            .schools
            .iter()
            .map(|s| {
                let mut mean_resid = s.mean_y;
                for i in 0..p {
                    mean_resid -= beta[i] * s.mean_x[i];
                }
                lambda * s.n * mean_resid / (1.0 + lambda * s.n)
            })
            .collect();
        EngineFit {
            beta,
            se_beta,
            sigma2_u,
            sigma2_e,
            lambda,
            icc: lambda / (1.0 + lambda),
            reml_value: self.criterion(lambda),
            converged: true,
            blups,
            n: self.n,
            p,
            n_schools: self.schools.len(),
        }
    }
}

fn full_rank(a: &[f64], p: usize) -> bool {
    let Some(l) = linalg::cholesky(a, p) else {
        return false;
    };
    for i in 0..p {
        let pivot = l[i * p + i];
        if pivot * pivot <= 1e-10 * a[i * p + i] {
            return false;
        }
    }
    true
}
