//! Synthetic two-arm pre/post datasets with school clustering, built to
//! reproduce the regression-to-the-mean reversal mechanism.
//!
//! Generator, for school j and pupil i (all draws standard normal):
//!
//! ```text
//! u_j    ~ N(0, σ²_u),   σ²_u = icc/(1−icc)         (unit residual variance)
//! a_ij   = ã_ij + δ·s·T_ij                           (latent ability; ã ~ N(0,1))
//! pre_ij  = u_j + a_ij
//! post_ij = u_j + ρ·a_ij + sqrt(1−ρ²)·e_ij + effect·s·T_ij
//! ```
//!
//! where s = sqrt(1 + σ²_u) is the marginal SD of either test, so `delta_pre`
//! and `effect` are expressed in marginal-SD units at any icc. Baseline
//! imbalance enters through the latent ability (confounded selection), not
//! the pre-test measurement error: that is what biases gain scores. Under
//! this generator the large-sample standardized expectations are
//!
//! ```text
//! pre imbalance  → δ
//! post difference → ρ·δ + effect
//! gain difference → ((ρ−1)·δ + effect) · s / sqrt(2(1−ρ))
//! ```
//!
//! Draw order is fixed (school intercepts, then assignment, then per-pupil
//! ability and noise) and the stream is the crate's own xoshiro256++, so a
//! seed identifies a dataset byte for byte across releases.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::dataset::{Group, PupilRecord, TrialDataset};
use crate::estimators::{self, EffectEstimate, EstimateKind};
use crate::lmm::{self, LmmSpec};
use crate::math;
use crate::paradox::{self, ComparisonRecord, ParadoxCategory, Thresholds};
use crate::rng::{derive_seed, Rng};
use crate::stats;

/// Unit of random assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Randomization {
    /// Whole schools are assigned to one arm (crt-style).
    Cluster,
    /// Pupils are assigned individually across all schools (srt/mst-style).
    Pupil,
}

impl fmt::Display for Randomization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Randomization::Cluster => write!(f, "cluster"),
            Randomization::Pupil => write!(f, "pupil"),
        }
    }
}

/// School sizes: one common size or an explicit per-school list.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SchoolSizes {
    Uniform(usize),
    PerSchool(Vec<usize>),
}

impl SchoolSizes {
    fn resolve(&self, n_schools: usize) -> Result<Vec<usize>, SimError> {
        match self {
            SchoolSizes::Uniform(m) => {
                if *m == 0 {
                    return Err(SimError::invalid("pupils_per_school must be positive"));
                }
                Ok(alloc::vec![*m; n_schools])
            }
            SchoolSizes::PerSchool(sizes) => {
                if sizes.len() != n_schools {
                    return Err(SimError::invalid(
                        "per-school size list must have one entry per school",
                    ));
                }
                if sizes.iter().any(|&m| m == 0) {
                    return Err(SimError::invalid("school sizes must be positive"));
                }
                Ok(sizes.clone())
            }
        }
    }
}

/// Parameters of one simulated trial.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSpec {
    pub n_schools: usize,
    pub pupils_per_school: SchoolSizes,
    /// Fraction assigned to the intervention arm, strictly inside (0, 1).
    pub alloc: f64,
    pub randomization: Randomization,
    /// Baseline imbalance in marginal-SD units, intervention minus control.
    pub delta_pre: f64,
    /// Latent pre/post correlation, |rho| < 1.
    pub rho: f64,
    /// Target intra-cluster correlation in [0, 1).
    pub icc_target: f64,
    /// True treatment effect on post-test in marginal-SD units.
    pub effect: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    fn validate(&self) -> Result<(), SimError> {
        if self.n_schools == 0 {
            return Err(SimError::invalid("need at least one school"));
        }
        if !(self.alloc > 0.0 && self.alloc < 1.0) {
            return Err(SimError::invalid("alloc must be strictly inside (0, 1)"));
        }
        if !(self.rho.is_finite() && math::abs(self.rho) < 1.0) {
            return Err(SimError::invalid("rho must satisfy |rho| < 1"));
        }
        if !(self.icc_target >= 0.0 && self.icc_target < 1.0) {
            return Err(SimError::invalid("icc_target must lie in [0, 1)"));
        }
        if !self.delta_pre.is_finite() || !self.effect.is_finite() {
            return Err(SimError::invalid("delta_pre and effect must be finite"));
        }
        if self.randomization == Randomization::Cluster && self.n_schools < 2 {
            return Err(SimError::invalid(
                "cluster randomization needs at least 2 schools",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimError {
    InvalidSpec(String),
}

impl SimError {
    fn invalid(msg: &str) -> Self {
        SimError::InvalidSpec(String::from(msg))
    }
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidSpec(msg) => write!(f, "invalid scenario: {msg}"),
        }
    }
}

/// Number of units assigned to treatment: round(alloc·total), clamped so
/// both arms stay non-empty.
fn treated_count(alloc: f64, total: usize) -> usize {
    let k = math::round(alloc * total as f64) as usize;
    k.clamp(1, total - 1)
}

/// Draws one dataset. Identical specs (including seed) produce identical
/// datasets.
pub fn generate(spec: &ScenarioSpec) -> Result<TrialDataset, SimError> {
    spec.validate()?;
    let sizes = spec.pupils_per_school.resolve(spec.n_schools)?;
    let n_total: usize = sizes.iter().sum();
    if n_total < 2 {
        return Err(SimError::invalid("need at least 2 pupils"));
    }

    let sigma2_u = spec.icc_target / (1.0 - spec.icc_target);
    let sigma_u = math::sqrt(sigma2_u);
    let marginal_sd = math::sqrt(1.0 + sigma2_u);
    let noise_sd = math::sqrt(1.0 - spec.rho * spec.rho);

    let mut rng = Rng::seeded(spec.seed);

    let intercepts: Vec<f64> = (0..spec.n_schools)
        .map(|_| sigma_u * rng.next_normal())
        .collect();

    // Assignment: exact arm sizes, membership drawn by shuffle.
    let treated_school: Vec<bool>;
    let treated_pupil: Vec<bool>;
    match spec.randomization {
        Randomization::Cluster => {
            let k = treated_count(spec.alloc, spec.n_schools);
            let mut order: Vec<usize> = (0..spec.n_schools).collect();
            rng.shuffle(&mut order);
            let mut flags = alloc::vec![false; spec.n_schools];
            for &j in order.iter().take(k) {
                flags[j] = true;
            }
            treated_school = flags;
            treated_pupil = Vec::new();
        }
        Randomization::Pupil => {
            let k = treated_count(spec.alloc, n_total);
            let mut order: Vec<usize> = (0..n_total).collect();
            rng.shuffle(&mut order);
            let mut flags = alloc::vec![false; n_total];
            for &i in order.iter().take(k) {
                flags[i] = true;
            }
            treated_school = Vec::new();
            treated_pupil = flags;
        }
    }

    let school_width = digits(spec.n_schools);
    let pupil_width = digits(n_total);
    let mut records = Vec::with_capacity(n_total);
    let mut pupil_idx = 0usize;
    for (j, &m) in sizes.iter().enumerate() {
        for _ in 0..m {
            let treated = match spec.randomization {
                Randomization::Cluster => treated_school[j],
                Randomization::Pupil => treated_pupil[pupil_idx],
            };
            let group = if treated {
                Group::Intervention
            } else {
                Group::Control
            };
            let t = group.indicator();
            let ability = rng.next_normal() + spec.delta_pre * marginal_sd * t;
            let noise = rng.next_normal();
            let pre = intercepts[j] + ability;
            let post = intercepts[j]
                + spec.rho * ability
                + noise_sd * noise
                + spec.effect * marginal_sd * t;
            records.push(PupilRecord {
                pupil_id: format!("p{:0width$}", pupil_idx + 1, width = pupil_width),
                school_id: format!("s{:0width$}", j + 1, width = school_width),
                group,
                pretest: pre,
                posttest: post,
            });
            pupil_idx += 1;
        }
    }

    TrialDataset::new(records, "sim").map_err(|e| {
        // Both arms are non-empty by construction; anything else is a bug.
        SimError::InvalidSpec(format!("generated dataset invalid: {e}"))
    })
}

fn digits(n: usize) -> usize {
    let mut d = 1;
    let mut x = n;
    while x >= 10 {
        d += 1;
        x /= 10;
    }
    d
}

/// Replicate summary of one estimator within one grid cell.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimatorCellStats {
    pub kind: EstimateKind,
    /// Mean point estimate over replicates where the estimator was defined.
    pub mean_g: Option<f64>,
    /// Sample SD of the point estimate (needs ≥ 2 defined replicates).
    pub sd_g: Option<f64>,
    /// Mean CI width over replicates with a defined interval.
    pub mean_ci_width: Option<f64>,
    /// Fraction of defined intervals covering the cell's true effect.
    pub coverage: Option<f64>,
    /// Replicates where the estimator was unavailable.
    pub failures: usize,
}

/// One grid cell of a sweep.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepCell {
    pub spec: ScenarioSpec,
    pub replicates: usize,
    /// Per-estimator summaries in gP, gG, ttP, ttG order.
    pub estimators: Vec<EstimatorCellStats>,
    /// Fraction of classifiable replicates where the simple pair reversed.
    pub reversal_freq_simple: Option<f64>,
    /// Fraction of classifiable replicates where the MLM pair reversed.
    pub reversal_freq_mlm: Option<f64>,
    /// Replicates where a multilevel fit was unavailable.
    pub fit_failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

struct Accumulator {
    kind: EstimateKind,
    gs: Vec<f64>,
    widths: Vec<f64>,
    covered: usize,
    with_interval: usize,
    failures: usize,
}

impl Accumulator {
    fn new(kind: EstimateKind) -> Self {
        Accumulator {
            kind,
            gs: Vec::new(),
            widths: Vec::new(),
            covered: 0,
            with_interval: 0,
            failures: 0,
        }
    }

    fn push(&mut self, est: Option<&EffectEstimate>, truth: f64) {
        match est {
            None => self.failures += 1,
            Some(e) => {
                self.gs.push(e.g);
                if let (Some(w), Some(c)) = (e.width(), e.covers(truth)) {
                    self.widths.push(w);
                    self.with_interval += 1;
                    if c {
                        self.covered += 1;
                    }
                }
            }
        }
    }

    fn finish(self) -> EstimatorCellStats {
        let mean_g = (!self.gs.is_empty()).then(|| stats::mean(&self.gs));
        let sd_g = (self.gs.len() >= 2).then(|| stats::sample_sd(&self.gs));
        let mean_ci_width = (!self.widths.is_empty()).then(|| stats::mean(&self.widths));
        let coverage =
            (self.with_interval > 0).then(|| self.covered as f64 / self.with_interval as f64);
        EstimatorCellStats {
            kind: self.kind,
            mean_g,
            sd_g,
            mean_ci_width,
            coverage,
            failures: self.failures,
        }
    }
}

/// Runs `replicates` draws per grid cell and summarizes every estimator.
///
/// Replicate r of a cell uses the seed `derive_seed(spec.seed, &[r])`, so
/// each replicate owns an independent stream and results do not depend on
/// evaluation order.
pub fn sweep(
    grid: &[ScenarioSpec],
    replicates: usize,
    thresholds: &Thresholds,
) -> Result<SweepTable, SimError> {
    if grid.is_empty() {
        return Err(SimError::invalid("empty grid"));
    }
    if replicates == 0 {
        return Err(SimError::invalid("need at least one replicate"));
    }
    let mut cells = Vec::with_capacity(grid.len());
    for spec in grid {
        spec.validate()?;
        let truth = spec.effect;
        let mut acc_gp = Accumulator::new(EstimateKind::PostDim);
        let mut acc_gg = Accumulator::new(EstimateKind::GainDim);
        let mut acc_ttp = Accumulator::new(EstimateKind::MlmPostAncova);
        let mut acc_ttg = Accumulator::new(EstimateKind::MlmGainAnova);
        let mut simple_reversals = 0usize;
        let mut simple_classified = 0usize;
        let mut mlm_reversals = 0usize;
        let mut mlm_classified = 0usize;
        let mut fit_failures = 0usize;

        for rep in 0..replicates {
            let mut rep_spec = spec.clone();
            rep_spec.seed = derive_seed(spec.seed, &[rep as u64]);
            let data = generate(&rep_spec)?;

            let g_post = estimators::dim_post(&data).ok();
            let g_gain = estimators::dim_gain(&data).ok();
            let pret_imb = estimators::pretest_imbalance(&data).ok().map(|e| e.g);
            let mut tt_post = None;
            let mut tt_gain = None;
            if data.n_schools() >= 2 {
                let post_fit = lmm::fit_lmm(&data, LmmSpec::post_ancova());
                let gain_fit = lmm::fit_lmm(&data, LmmSpec::gain_anova());
                match (post_fit, gain_fit) {
                    (Ok(pf), Ok(gf)) => {
                        tt_post = lmm::effect_size_total_variance(&pf).ok();
                        tt_gain = lmm::effect_size_total_variance(&gf).ok();
                    }
                    _ => fit_failures += 1,
                }
            } else {
                fit_failures += 1;
            }

            acc_gp.push(g_post.as_ref(), truth);
            acc_gg.push(g_gain.as_ref(), truth);
            acc_ttp.push(tt_post.as_ref(), truth);
            acc_ttg.push(tt_gain.as_ref(), truth);

            let record = ComparisonRecord {
                label: String::from("sweep"),
                g_post,
                g_gain,
                tt_post,
                tt_gain,
                pret_imb,
                icc: None,
                n_schools: Some(data.n_schools()),
            };
            if let Ok(v) = paradox::classify(&record, thresholds) {
                simple_classified += 1;
                if v.category == ParadoxCategory::Reversal {
                    simple_reversals += 1;
                }
            }
            if let Ok(v) = paradox::classify_mlm(&record, thresholds) {
                mlm_classified += 1;
                if v.category == ParadoxCategory::Reversal {
                    mlm_reversals += 1;
                }
            }
        }

        cells.push(SweepCell {
            spec: spec.clone(),
            replicates,
            estimators: alloc::vec![
                acc_gp.finish(),
                acc_gg.finish(),
                acc_ttp.finish(),
                acc_ttg.finish(),
            ],
            reversal_freq_simple: (simple_classified > 0)
                .then(|| simple_reversals as f64 / simple_classified as f64),
            reversal_freq_mlm: (mlm_classified > 0)
                .then(|| mlm_reversals as f64 / mlm_classified as f64),
            fit_failures,
        });
    }
    Ok(SweepTable { cells })
}
