//! Replication engine: simulate at θ*, fit, compare both information
//! inverses against the Monte Carlo covariance of the estimates.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, initial_point, Flag, SolverOptions};
use crate::interval::confidence_level;
use crate::linalg::invert_spd;
use crate::models::{GaussMix, LikelihoodModel, SignalPlusNoise, StateSpace};
use crate::rng::{derive_seed, stream_rng, streams};
use crate::types::{FimKind, FimMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "GAUSSMIX")]
    GaussMix,
    #[serde(rename = "SPN1D")]
    Spn1d,
    #[serde(rename = "SPN4D")]
    Spn4d,
    #[serde(rename = "SSM")]
    Ssm,
}

impl ModelId {
    pub fn label(self) -> &'static str {
        match self {
            ModelId::GaussMix => "GAUSSMIX",
            ModelId::Spn1d => "SPN1D",
            ModelId::Spn4d => "SPN4D",
            ModelId::Ssm => "SSM",
        }
    }

    /// Default solver settings for the model family.
    pub fn default_solver(self) -> SolverOptions {
        match self {
            ModelId::Ssm => SolverOptions::for_kind(crate::models::SolverKind::Search),
            _ => SolverOptions::for_kind(crate::models::SolverKind::Newton),
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GAUSSMIX" => Ok(ModelId::GaussMix),
            "SPN1D" => Ok(ModelId::Spn1d),
            "SPN4D" => Ok(ModelId::Spn4d),
            "SSM" => Ok(ModelId::Ssm),
            other => Err(Error::Domain(format!("unknown model id `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model_id: ModelId,
    pub theta_star: Vec<f64>,
    pub n: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub alpha: f64,
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    /// Config with the model's default solver settings.
    pub fn new(model_id: ModelId, theta_star: Vec<f64>, n: usize, replications: usize, master_seed: u64, alpha: f64) -> Self {
        Self { model_id, theta_star, n, replications, master_seed, alpha, solver: model_id.default_solver() }
    }

    /// Checks every field; the error message starts with the field name.
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::Domain(format!("replications: need at least 2, got {}", self.replications)));
        }
        if self.n < 1 {
            return Err(Error::Domain("n: must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha: must lie in (0, 1), got {}", self.alpha)));
        }
        self.solver.validate().map_err(|e| Error::Domain(format!("solver: {e}")))?;
        let model = build_model(self.model_id, self.n, self.master_seed);
        if self.theta_star.len() != model.dim() {
            return Err(Error::Domain(format!(
                "theta_star: {} expects {} components, got {}",
                self.model_id.label(),
                model.dim(),
                self.theta_star.len()
            )));
        }
        model
            .parameter_vector(self.theta_star.clone())
            .map_err(|e| Error::Domain(format!("theta_star: {e}")))?;
        if let Some(start) = &self.solver.user_start {
            if start.len() != model.dim() {
                return Err(Error::Domain("solver.user_start: wrong number of components".into()));
            }
        }
        Ok(())
    }
}

fn build_model(id: ModelId, n: usize, master_seed: u64) -> Box<dyn LikelihoodModel> {
    match id {
        ModelId::GaussMix => Box::new(GaussMix::new(1.0).expect("unit sigma is valid")),
        ModelId::Spn1d => Box::new(SignalPlusNoise::one_d(n)),
        ModelId::Spn4d => {
            Box::new(SignalPlusNoise::four_d(n, &mut stream_rng(master_seed, streams::NOISE_SCHEDULE)))
        }
        ModelId::Ssm => Box::new(StateSpace::ar3()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExclusionReason {
    None,
    NotConverged,
    NonPd,
    /// The model could not be evaluated (filter divergence, quadrature
    /// failure, non-PD noise covariance).
    EvaluationError,
}

impl ExclusionReason {
    pub fn label(self) -> &'static str {
        match self {
            ExclusionReason::None => "NONE",
            ExclusionReason::NotConverged => "NOT_CONVERGED",
            ExclusionReason::NonPd => "NON_PD",
            ExclusionReason::EvaluationError => "EVALUATION_ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep_index: usize,
    pub theta_hat: Vec<f64>,
    pub hinv_diag: Vec<f64>,
    pub finv_diag: Vec<f64>,
    pub hinv_full: DMatrix<f64>,
    pub finv_full: DMatrix<f64>,
    pub excluded: bool,
    pub exclusion_reason: ExclusionReason,
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub flags: BTreeSet<Flag>,
}

impl ReplicationRecord {
    fn failed(rep_index: usize, p: usize, reason: ExclusionReason) -> Self {
        Self {
            rep_index,
            theta_hat: vec![f64::NAN; p],
            hinv_diag: vec![f64::NAN; p],
            finv_diag: vec![f64::NAN; p],
            hinv_full: DMatrix::from_element(p, p, f64::NAN),
            finv_full: DMatrix::from_element(p, p, f64::NAN),
            excluded: true,
            exclusion_reason: reason,
            converged: false,
            iterations: 0,
            final_grad_norm: f64::NAN,
            flags: BTreeSet::new(),
        }
    }
}

/// Model built from a config plus the replication driver.
pub struct Experiment {
    config: ExperimentConfig,
    model: Box<dyn LikelihoodModel>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = build_model(config.model_id, config.n, config.master_seed);
        Ok(Self { config, model })
    }

    /// Runs `config` against a caller-supplied model instead of the one
    /// named by `config.model_id`.
    pub fn with_model(config: ExperimentConfig, model: Box<dyn LikelihoodModel>) -> Result<Self> {
        config.validate()?;
        if config.theta_star.len() != model.dim() {
            return Err(Error::Domain(format!("theta_star: model expects {} components", model.dim())));
        }
        Ok(Self { config, model })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &dyn LikelihoodModel {
        self.model.as_ref()
    }

    /// The frozen `U` of the four-dimensional noise schedule.
    pub fn frozen_u(&self) -> Option<DMatrix<f64>> {
        if self.config.model_id != ModelId::Spn4d {
            return None;
        }
        let mut rng = stream_rng(self.config.master_seed, streams::NOISE_SCHEDULE);
        Some(crate::models::spn::noise_schedule_4d(1, &mut rng).0)
    }

    fn replicate(&self, master: u64, rep_index: usize) -> ReplicationRecord {
        let cfg = &self.config;
        let model = self.model.as_ref();
        let p = model.dim();
        let mut rng = stream_rng(master, rep_index as u64);
        let Ok(data) = model.sample(cfg.n, &cfg.theta_star, &mut rng) else {
            return ReplicationRecord::failed(rep_index, p, ExclusionReason::EvaluationError);
        };
        let fitted = initial_point(model, &data, &cfg.theta_star, &cfg.solver, &mut rng)
            .and_then(|start| fit(model, &data, &start, &cfg.solver));
        let est = match fitted {
            Ok(e) => e,
            Err(_) => return ReplicationRecord::failed(rep_index, p, ExclusionReason::EvaluationError),
        };
        let theta_hat = est.theta_hat.values().to_vec();
        let mut rec = ReplicationRecord::failed(rep_index, p, ExclusionReason::None);
        rec.theta_hat = theta_hat.clone();
        rec.converged = est.converged;
        rec.iterations = est.iterations;
        rec.final_grad_norm = est.final_grad_norm;
        rec.flags = est.flags.clone();

        let observed = FimMatrix::from_total_hessian(&est.hessian_at_mle, FimKind::Observed, theta_hat.clone(), cfg.n);
        let expected = model.expected_fim(&theta_hat, cfg.n);
        let (observed, expected) = match (observed, expected) {
            (Ok(o), Ok(e)) => (o, e),
            _ => {
                rec.exclusion_reason = ExclusionReason::EvaluationError;
                return rec;
            }
        };
        let hinv = invert_spd(observed.entries());
        let finv = invert_spd(expected.entries());
        if let Ok(h) = &hinv {
            rec.hinv_diag = h.inverse.diagonal().iter().copied().collect();
            rec.hinv_full = h.inverse.clone();
        }
        if let Ok(f) = &finv {
            rec.finv_diag = f.inverse.diagonal().iter().copied().collect();
            rec.finv_full = f.inverse.clone();
        }
        let positive = |d: &[f64]| d.iter().all(|v| *v > 0.0 && v.is_finite());
        rec.exclusion_reason = if !est.converged {
            ExclusionReason::NotConverged
        } else if hinv.is_err() || finv.is_err() || !positive(&rec.hinv_diag) || !positive(&rec.finv_diag) {
            ExclusionReason::NonPd
        } else {
            rec.excluded = false;
            ExclusionReason::None
        };
        rec
    }

    /// Replications `0..R` seeded from `master`, in `rep_index` order. The
    /// records do not depend on the thread count.
    pub fn run_with_seed(&self, master: u64, threads: Option<usize>) -> Result<Vec<ReplicationRecord>> {
        let run = || (0..self.config.replications).into_par_iter().map(|r| self.replicate(master, r)).collect();
        match threads {
            Some(t) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t.max(1))
                    .build()
                    .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
                Ok(pool.install(run))
            }
            None => Ok(run()),
        }
    }

    pub fn run(&self, threads: Option<usize>) -> Result<Vec<ReplicationRecord>> {
        self.run_with_seed(self.config.master_seed, threads)
    }

    /// Aggregates records into a report.
    pub fn report(&self, records: &[ReplicationRecord]) -> Result<ExperimentReport> {
        let cfg = &self.config;
        let included: Vec<&ReplicationRecord> = records.iter().filter(|r| !r.excluded).collect();
        let estimates: Vec<Vec<f64>> = included.iter().map(|r| r.theta_hat.clone()).collect();
        let v_n = sample_covariance(&estimates, cfg.n)?;
        let typical_hinv = typical_matrix(records, &v_n, Which::Hinv)?;
        let typical_finv = typical_matrix(records, &v_n, Which::Finv)?;
        let mse = mse_ratio(records, &v_n, cfg.alpha)?;
        let mut exclusions = BTreeMap::new();
        for r in records.iter().filter(|r| r.excluded) {
            *exclusions.entry(r.exclusion_reason.label().to_string()).or_insert(0) += 1;
        }
        let boundary = included.iter().filter(|r| r.flags.contains(&Flag::Boundary)).count();
        Ok(ExperimentReport {
            model_id: cfg.model_id,
            names: self.model.names(),
            theta_star: cfg.theta_star.clone(),
            n: cfg.n,
            replications: cfg.replications,
            master_seed: cfg.master_seed,
            alpha: cfg.alpha,
            v_n,
            typical_hinv,
            typical_finv,
            mse_h: mse.mse_h,
            mse_f: mse.mse_f,
            ratio: mse.ratio,
            mse_h_se: mse.mse_h_se,
            mse_f_se: mse.mse_f_se,
            zero_mse_f: mse.zero_mse_f,
            included_count: included.len(),
            excluded_count: records.len() - included.len(),
            exclusions,
            boundary_count: boundary,
            reliability: None,
            noise_u: self.frozen_u(),
        })
    }

    /// Runs `outer_repeats` independent batches of replications and returns
    /// the mean relative deviation of each diagonal entry of `V_n` from the
    /// first batch's. Batch 0 uses the master seed, so it coincides with
    /// [`Experiment::run`].
    pub fn covariance_reliability(&self, outer_repeats: usize, threads: Option<usize>) -> Result<Vec<f64>> {
        if outer_repeats < 2 {
            return Err(Error::Domain("outer_repeats must be at least 2".into()));
        }
        let mut covs = Vec::with_capacity(outer_repeats);
        for k in 0..outer_repeats {
            let seed = if k == 0 {
                self.config.master_seed
            } else {
                derive_seed(self.config.master_seed, streams::RELIABILITY_BASE + k as u64)
            };
            let records = self.run_with_seed(seed, threads)?;
            let estimates: Vec<Vec<f64>> =
                records.iter().filter(|r| !r.excluded).map(|r| r.theta_hat.clone()).collect();
            covs.push(sample_covariance(&estimates, self.config.n)?);
        }
        relative_errors(&covs)
    }
}

/// `n` times the unbiased sample covariance of the estimates.
pub fn sample_covariance(estimates: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    let r = estimates.len();
    if r < 2 {
        return Err(Error::InsufficientReplications(r));
    }
    let p = estimates[0].len();
    if estimates.iter().any(|e| e.len() != p) {
        return Err(Error::DimensionMismatch("estimates differ in length".into()));
    }
    let mut mean = vec![0.0; p];
    for e in estimates {
        for j in 0..p {
            mean[j] += e[j];
        }
    }
    for m in &mut mean {
        *m /= r as f64;
    }
    let mut cov = DMatrix::zeros(p, p);
    for e in estimates {
        for i in 0..p {
            for j in 0..=i {
                cov[(i, j)] += (e[i] - mean[i]) * (e[j] - mean[j]);
            }
        }
    }
    for i in 0..p {
        for j in 0..=i {
            let v = cov[(i, j)] * n as f64 / (r - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Hinv,
    Finv,
}

/// The included record whose inverse has the median Frobenius distance to
/// `v_n`; an even count takes the lower median, ties go to the smaller
/// `rep_index`.
pub fn typical_matrix(records: &[ReplicationRecord], v_n: &DMatrix<f64>, which: Which) -> Result<DMatrix<f64>> {
    let mut ranked: Vec<(f64, usize, &DMatrix<f64>)> = records
        .iter()
        .filter(|r| !r.excluded)
        .map(|r| {
            let m = match which {
                Which::Hinv => &r.hinv_full,
                Which::Finv => &r.finv_full,
            };
            ((m - v_n).norm(), r.rep_index, m)
        })
        .collect();
    if ranked.is_empty() {
        return Err(Error::NoIncludedReplications);
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ranked[(ranked.len() - 1) / 2].2.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseSummary {
    pub mse_h: Vec<f64>,
    pub mse_f: Vec<f64>,
    /// `mse_h / mse_f`; `+inf` when only `mse_f` vanishes, NaN when both do.
    pub ratio: Vec<f64>,
    pub mse_h_se: Vec<f64>,
    pub mse_f_se: Vec<f64>,
    /// Components where `mse_f = 0 < mse_h`.
    pub zero_mse_f: Vec<bool>,
}

/// Mean squared deviation of the implied confidence levels from `1 − α`,
/// per component, over the included records.
pub fn mse_ratio(records: &[ReplicationRecord], v_n: &DMatrix<f64>, alpha: f64) -> Result<MseSummary> {
    let included: Vec<&ReplicationRecord> = records.iter().filter(|r| !r.excluded).collect();
    if included.is_empty() {
        return Err(Error::NoIncludedReplications);
    }
    let p = v_n.nrows();
    let k = included.len() as f64;
    let target = 1.0 - alpha;
    let mut out = MseSummary {
        mse_h: vec![0.0; p],
        mse_f: vec![0.0; p],
        ratio: vec![0.0; p],
        mse_h_se: vec![0.0; p],
        mse_f_se: vec![0.0; p],
        zero_mse_f: vec![false; p],
    };
    for j in 0..p {
        let v = v_n[(j, j)];
        let mut sq_h = Vec::with_capacity(included.len());
        let mut sq_f = Vec::with_capacity(included.len());
        for r in &included {
            sq_h.push((target - confidence_level(r.hinv_diag[j], v, alpha)?).powi(2));
            sq_f.push((target - confidence_level(r.finv_diag[j], v, alpha)?).powi(2));
        }
        let (mh, sh) = mean_se(&sq_h, k);
        let (mf, sf) = mean_se(&sq_f, k);
        out.mse_h[j] = mh;
        out.mse_f[j] = mf;
        out.mse_h_se[j] = sh;
        out.mse_f_se[j] = sf;
        out.ratio[j] = if mf > 0.0 {
            mh / mf
        } else if mh > 0.0 {
            out.zero_mse_f[j] = true;
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    Ok(out)
}

fn mean_se(values: &[f64], k: f64) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Mean of `|Σ_A(i,i) − Σ_0(i,i)| / |Σ_0(i,i)|` over `Σ_A` in `covs[1..]`,
/// with `Σ_0 = covs[0]`.
pub fn relative_errors(covs: &[DMatrix<f64>]) -> Result<Vec<f64>> {
    if covs.len() < 2 {
        return Err(Error::InsufficientReplications(covs.len()));
    }
    let base = &covs[0];
    let p = base.nrows();
    let m = (covs.len() - 1) as f64;
    Ok((0..p)
        .map(|i| covs[1..].iter().map(|c| (c[(i, i)] - base[(i, i)]).abs() / base[(i, i)].abs()).sum::<f64>() / m)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub model_id: ModelId,
    pub names: Vec<String>,
    pub theta_star: Vec<f64>,
    pub n: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub alpha: f64,
    #[serde(with = "row_matrix")]
    pub v_n: DMatrix<f64>,
    #[serde(with = "row_matrix")]
    pub typical_hinv: DMatrix<f64>,
    #[serde(with = "row_matrix")]
    pub typical_finv: DMatrix<f64>,
    pub mse_h: Vec<f64>,
    pub mse_f: Vec<f64>,
    pub ratio: Vec<f64>,
    pub mse_h_se: Vec<f64>,
    pub mse_f_se: Vec<f64>,
    pub zero_mse_f: Vec<bool>,
    pub included_count: usize,
    pub excluded_count: usize,
    pub exclusions: BTreeMap<String, usize>,
    /// Included replications whose estimate sits on a projection limit.
    pub boundary_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "row_matrix::option")]
    pub noise_u: Option<DMatrix<f64>>,
}

impl ExperimentReport {
    pub fn exclusion_rate(&self) -> f64 {
        self.excluded_count as f64 / self.replications as f64
    }
}

/// Serde adapter storing a matrix as a list of rows.
pub mod row_matrix {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
            match Option::<Vec<Vec<f64>>>::deserialize(d)? {
                Some(rows) => from_rows(&rows).map(Some).map_err(D::Error::custom),
                None => Ok(None),
            }
        }
    }
}
