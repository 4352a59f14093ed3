//! The ε-sweep: one solve on `Ω_0`, one solve per schedule entry on the nested
//! `Ω_ε` meshes, cluster tracking, rate fitting and report output.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{preset, CoefficientTensor, Regime, PRESET_NAMES};
use crate::eigensolve::{smallest_eigenpairs_with, EigenPair, SolverOptions, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, SparseSymMatrix};
use crate::geometry::{build_base, build_dumbbell, cutoff_eta, DomainSpec, Mesh};
use crate::inequalities::{
    check_caccioppoli, check_garding, check_gradient_lp, check_korn_ball, check_monotonicity,
    check_near_orthonormality, check_reverse_holder, check_sobolev_poincare, cutoff_product,
    projector_distance, restrict, sample_balls, verify_nested, InequalityRecord, QuasimodeOperator, Spectrum,
    TrialBasis, CHECK_NAMES, DEFAULT_C3, DEFAULT_P_TILDE, DEFAULT_Q, P_TILDE_RANGE,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_REL_GAP: f64 = 1e-6;
/// Allowed relative increase per schedule step for sequences expected to decay.
pub const DECAY_JITTER: f64 = 0.05;
/// Values at or below this level count as zero in decay checks.
pub const DECAY_FLOOR: f64 = 1e-12;
/// Extra eigenpairs beyond `k_max`, used for the gap flag.
pub const EXTRA_PAIRS: usize = 2;
const CACCIOPPOLI_BALLS: usize = 50;
const KORN_BALLS: usize = 20;
const SP_BALLS: usize = 20;
const GARDING_TRIALS: usize = 100;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_p_tilde() -> f64 {
    DEFAULT_P_TILDE
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_rel_gap() -> f64 {
    DEFAULT_REL_GAP
}
fn default_q() -> f64 {
    DEFAULT_Q
}
fn default_c3() -> f64 {
    DEFAULT_C3
}
fn default_params() -> serde_json::Value {
    serde_json::Value::Object(serde_json::Map::new())
}
fn default_checks() -> BTreeSet<String> {
    CHECK_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Sweep configuration, read from JSON with `"schema": 1`.
///
/// The component count of the problem comes from the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub domain: DomainSpec,
    pub preset: String,
    #[serde(default = "default_params")]
    pub params: serde_json::Value,
    pub h: f64,
    pub epsilon_schedule: Vec<f64>,
    #[serde(rename = "J")]
    pub j: usize,
    pub k_max: usize,
    #[serde(default = "default_p_tilde")]
    pub p_tilde: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_checks")]
    pub checks: BTreeSet<String>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_rel_gap")]
    pub rel_gap: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_c3")]
    pub c3: f64,
    /// Output directory; not part of the report.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

fn is_multiple(x: f64, unit: f64) -> bool {
    let r = x / unit;
    (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0)
}

impl StudyConfig {
    /// Symmetric dumbbell with the halving schedule `{1/4, 1/8, 1/16}`.
    pub fn symmetric(preset: &str, h: f64) -> StudyConfig {
        StudyConfig {
            schema: SCHEMA_VERSION,
            domain: DomainSpec::symmetric_dumbbell(0.25),
            preset: preset.to_string(),
            params: default_params(),
            h,
            epsilon_schedule: vec![0.25, 0.125, 0.0625],
            j: 1,
            k_max: 6,
            p_tilde: DEFAULT_P_TILDE,
            seed: 0,
            checks: default_checks(),
            tol: DEFAULT_TOL,
            rel_gap: DEFAULT_REL_GAP,
            q: DEFAULT_Q,
            c3: DEFAULT_C3,
            out: None,
        }
    }

    pub fn from_json(s: &str) -> Result<StudyConfig> {
        let config: StudyConfig = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<StudyConfig> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        self.domain.validate()?;
        if !PRESET_NAMES.contains(&self.preset.as_str()) {
            return Err(Error::UnknownPreset(self.preset.clone()));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("h = {} must be positive", self.h));
        }
        if self.epsilon_schedule.is_empty() {
            return bad("epsilon_schedule is empty".into());
        }
        if self.epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilon_schedule must be strictly decreasing".into());
        }
        for &eps in &self.epsilon_schedule {
            if !is_multiple(eps, 2.0 * self.h) {
                return Err(Error::GridMisaligned(format!("epsilon = {eps} is not a multiple of 2h = {}", 2.0 * self.h)));
            }
            if eps < 4.0 * self.h * (1.0 - 1e-12) {
                return Err(Error::GridMisaligned(format!("epsilon = {eps} is below 4h = {}", 4.0 * self.h)));
            }
        }
        if self.k_max == 0 || self.j == 0 || self.j > self.k_max {
            return bad(format!("need 1 <= J <= k_max, got J = {}, k_max = {}", self.j, self.k_max));
        }
        if !(P_TILDE_RANGE.0..=P_TILDE_RANGE.1).contains(&self.p_tilde) {
            return bad(format!("p_tilde = {} outside [{}, {}]", self.p_tilde, P_TILDE_RANGE.0, P_TILDE_RANGE.1));
        }
        if let Some(unknown) = self.checks.iter().find(|c| !CHECK_NAMES.contains(&c.as_str())) {
            return bad(format!("unknown check {unknown:?}"));
        }
        if !(self.tol > 0.0) || !(self.rel_gap > 0.0) {
            return bad("tol and rel_gap must be positive".into());
        }
        if !(self.q > 1.0 && self.q < 2.0) {
            return bad(format!("q = {} not in (1, 2)", self.q));
        }
        if !(0.0..1.0).contains(&self.c3) {
            return bad(format!("c3 = {} not in [0, 1)", self.c3));
        }
        Ok(())
    }

    fn enabled(&self, name: &str) -> bool {
        self.checks.contains(name)
    }
}

/// A run of numerically equal eigenvalues; `start` is the 1-based index of its first member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub start: usize,
    pub size: usize,
    pub gap_below: Option<f64>,
    pub gap_above: Option<f64>,
}

impl Cluster {
    pub fn contains(&self, index: usize) -> bool {
        (self.start..self.start + self.size).contains(&index)
    }

    /// 0-based index range.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start - 1..self.start - 1 + self.size
    }
}

/// Groups an ascending spectrum into runs whose consecutive relative gaps are below `rel_gap`.
pub fn detect_clusters(sigma: &[f64], rel_gap: f64) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = Vec::new();
    for (i, &s) in sigma.iter().enumerate() {
        let joins = i > 0 && {
            let prev = sigma[i - 1];
            (s - prev).abs() < rel_gap * s.abs().max(prev.abs())
        };
        if joins {
            clusters.last_mut().expect("non-empty").size += 1;
        } else {
            clusters.push(Cluster {
                start: i + 1,
                size: 1,
                gap_below: (i > 0).then(|| s - sigma[i - 1]),
                gap_above: None,
            });
        }
    }
    for c in clusters.iter_mut() {
        let next = c.start - 1 + c.size;
        if next < sigma.len() {
            c.gap_above = Some(sigma[next] - sigma[next - 1]);
        }
    }
    clusters
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub a: f64,
    pub log_c: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares line through `(log ε, log diff)`; non-positive diffs are dropped.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(e, d)| {
            let ok = d > 0.0 && e > 0.0;
            if !ok {
                warn!("dropping point (epsilon = {e}, diff = {d:e}) from the rate fit");
            }
            ok
        })
        .map(|&(e, d)| (e.ln(), d.ln()))
        .collect();
    if kept.len() < 2 {
        return Err(Error::InsufficientPoints(kept.len()));
    }
    let n = kept.len() as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / n;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = kept.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = kept.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = kept.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints(1));
    }
    let a = sxy / sxx;
    let log_c = my - a * mx;
    let ss_res: f64 = kept.iter().map(|p| (p.1 - log_c - a * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit {
        a,
        log_c,
        r2,
        points: kept.len(),
    })
}

/// Rate exponent `d(p̃ − 2)/(4p̃)` delivered by the cutoff argument.
pub fn theoretical_rate(p_tilde: f64, d: f64) -> f64 {
    d * (p_tilde - 2.0) / (4.0 * p_tilde)
}

/// Decay of a sequence along the schedule: monotone within `jitter` (values at round-off
/// level excepted), plus fitted log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub name: String,
    pub values: Vec<f64>,
    pub monotone: bool,
    pub strictly_decreasing: bool,
    pub max_step_ratio: f64,
    pub slope: Option<f64>,
}

pub fn check_decay(name: &str, epsilons: &[f64], values: &[f64], jitter: f64) -> DecayCheck {
    let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    let max_step_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let monotone = values
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + jitter) || w[1].abs() <= DECAY_FLOOR);
    let strictly_decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let points: Vec<(f64, f64)> = epsilons.iter().cloned().zip(values.iter().cloned()).collect();
    DecayCheck {
        name: name.to_string(),
        values: values.to_vec(),
        monotone,
        strictly_decreasing,
        max_step_ratio,
        slope: fit_rate(&points).ok().map(|f| f.a),
    }
}

impl DecayCheck {
    pub fn record(&self) -> InequalityRecord {
        let mut r = InequalityRecord::ratio(&format!("{}_decay", self.name), self.max_step_ratio, &[("one", 1.0)], 1.0 + DECAY_JITTER);
        r.pass = self.monotone;
        if let Some(s) = self.slope {
            r = r.with_param("slope", s);
        }
        r.with_param("strictly_decreasing", if self.strictly_decreasing { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub k: usize,
    pub sigma_eps: f64,
    pub sigma_0: f64,
    pub diff: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSummary {
    pub epsilon: f64,
    pub degrees_of_freedom: usize,
    pub sigma_eps: Vec<f64>,
    /// Mean of `σ⁰` minus mean of `σ^ε` over the cluster containing `J`.
    pub cluster_diff: f64,
    /// Some eigenvalue above the cluster dropped into the lower half of the gap.
    pub gap_flag: bool,
    pub max_residual: f64,
    pub shift: f64,
    pub diag_deficiency: Option<f64>,
    pub offdiag: Option<f64>,
    pub diag_dominant: Option<bool>,
    pub quasimode_residual: Option<f64>,
    pub projector_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: StudyConfig,
    pub components: usize,
    pub regime: Regime,
    pub sigma_0: Vec<f64>,
    pub clusters: Vec<Cluster>,
    pub cluster: Cluster,
    pub epsilons: Vec<EpsilonSummary>,
    pub rows: Vec<SweepRow>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub theoretical_rate: f64,
    pub decay: Vec<DecayCheck>,
    pub records: Vec<InequalityRecord>,
    pub verification_passed: bool,
}

impl ConvergenceReport {
    pub fn cluster_diffs(&self) -> Vec<f64> {
        self.epsilons.iter().map(|e| e.cluster_diff).collect()
    }

    pub fn decay(&self, name: &str) -> Option<&DecayCheck> {
        self.decay.iter().find(|d| d.name == name)
    }

    pub fn failed_records(&self) -> Vec<&InequalityRecord> {
        self.records.iter().filter(|r| !r.pass).collect()
    }
}

/// The assembled and solved `Ω_0` problem, shared read-only by all schedule entries.
pub struct BaseProblem {
    pub mesh: Mesh,
    pub stiff: SparseSymMatrix,
    pub mass: SparseSymMatrix,
    pub pairs: Vec<EigenPair>,
}

pub fn solver_options(config: &StudyConfig) -> SolverOptions {
    SolverOptions {
        tol: config.tol,
        seed: config.seed,
        ..SolverOptions::default()
    }
}

/// Assembles and solves `B u = σ M u` on `mesh` for the lowest `k` pairs.
pub fn solve_on(
    mesh: &Mesh,
    tensor: &CoefficientTensor,
    k: usize,
    opts: &SolverOptions,
) -> Result<(SparseSymMatrix, SparseSymMatrix, Vec<EigenPair>, f64)> {
    let stiff = assemble_stiffness(mesh, tensor)?;
    let mass = assemble_mass(mesh, tensor.m)?;
    let k = k.min(stiff.dim());
    let (pairs, info) = smallest_eigenpairs_with(&stiff, &mass, k, opts)?;
    Ok((stiff, mass, pairs, info.shift))
}

struct EpsilonOutcome {
    summary: EpsilonSummary,
    rows: Vec<SweepRow>,
    records: Vec<InequalityRecord>,
}

/// Runs the full sweep described by `config`.
pub fn run_sweep(config: &StudyConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let tensor = preset(&config.preset, &config.params)?;
    let k_solve = config.k_max + EXTRA_PAIRS;
    let opts = solver_options(config);

    let mesh0 = build_base(&config.domain, config.h)?;
    let (stiff0, mass0, pairs0, _) = solve_on(&mesh0, &tensor, k_solve, &opts)?;
    if pairs0.len() < config.k_max {
        return Err(Error::InvalidConfig(format!(
            "k_max = {} exceeds the {} degrees of freedom of the base mesh",
            config.k_max,
            pairs0.len()
        )));
    }
    let sigma_0: Vec<f64> = pairs0.iter().map(|p| p.sigma).collect();
    let clusters = detect_clusters(&sigma_0, config.rel_gap);
    let cluster = clusters.iter().find(|c| c.contains(config.j)).cloned().expect("J within spectrum");
    if cluster.gap_above.is_none() {
        return Err(Error::InvalidConfig(format!(
            "the cluster containing J = {} reaches the end of the computed spectrum; raise k_max",
            config.j
        )));
    }
    let base = BaseProblem {
        mesh: mesh0,
        stiff: stiff0,
        mass: mass0,
        pairs: pairs0,
    };

    let outcomes: Vec<Result<EpsilonOutcome>> = config
        .epsilon_schedule
        .par_iter()
        .enumerate()
        .map(|(index, &eps)| {
            run_epsilon(config, &tensor, &base, &cluster, index, eps).map_err(|e| Error::AtEpsilon {
                epsilon: eps,
                source: Box::new(e),
            })
        })
        .collect();
    let mut epsilons = Vec::new();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for outcome in outcomes {
        let outcome = outcome?;
        epsilons.push(outcome.summary);
        rows.extend(outcome.rows);
        records.extend(outcome.records);
    }

    let schedule = &config.epsilon_schedule;
    let diffs: Vec<f64> = epsilons.iter().map(|e| e.cluster_diff).collect();
    let points: Vec<(f64, f64)> = schedule.iter().cloned().zip(diffs.iter().cloned()).collect();
    let (fit, fit_error) = match fit_rate(&points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let mut decay = vec![check_decay("cluster_diff", schedule, &diffs, DECAY_JITTER)];
    let mut series = |name: &str, f: &dyn Fn(&EpsilonSummary) -> Option<f64>| {
        let values: Option<Vec<f64>> = epsilons.iter().map(f).collect();
        if let Some(values) = values {
            decay.push(check_decay(name, schedule, &values, DECAY_JITTER));
        }
    };
    if config.enabled("near_orthonormality") {
        series("diag_deficiency", &|e| e.diag_deficiency);
        series("offdiag", &|e| e.offdiag);
    }
    if config.enabled("quasimode_residual") {
        series("quasimode_residual", &|e| e.quasimode_residual);
    }
    if config.enabled("projector_distance") {
        series("projector_distance", &|e| e.projector_distance);
    }
    if schedule.len() > 1 {
        records.extend(decay.iter().map(DecayCheck::record));
    }

    let verification_passed = records.iter().all(|r| r.pass);
    Ok(ConvergenceReport {
        config: config.clone(),
        components: tensor.m,
        regime: tensor.regime,
        sigma_0,
        clusters,
        cluster,
        epsilons,
        rows,
        fit,
        fit_error,
        theoretical_rate: theoretical_rate(config.p_tilde, config.domain.d_exponent),
        decay,
        records,
        verification_passed,
    })
}

fn run_epsilon(
    config: &StudyConfig,
    tensor: &CoefficientTensor,
    base: &BaseProblem,
    cluster: &Cluster,
    index: usize,
    eps: f64,
) -> Result<EpsilonOutcome> {
    let m = tensor.m;
    let h = config.h;
    let seed = config.seed.wrapping_add(1000 * (index as u64 + 1));
    let mesh = build_dumbbell(&config.domain, eps, h)?;
    verify_nested(&base.mesh, &mesh)?;
    let (stiff, _mass, pairs, shift) = solve_on(&mesh, tensor, config.k_max + EXTRA_PAIRS, &solver_options(config))?;
    let sigma_eps: Vec<f64> = pairs.iter().map(|p| p.sigma).collect();
    let sigma_0: Vec<f64> = base.pairs.iter().map(|p| p.sigma).collect();

    let rows: Vec<SweepRow> = (0..config.k_max)
        .map(|k| SweepRow {
            epsilon: eps,
            k: k + 1,
            sigma_eps: sigma_eps[k],
            sigma_0: sigma_0[k],
            diff: sigma_0[k] - sigma_eps[k],
            h,
        })
        .collect();

    let range = cluster.range();
    let mean = |s: &[f64]| s[range.clone()].iter().sum::<f64>() / cluster.size as f64;
    let cluster_diff = mean(&sigma_0) - mean(&sigma_eps);
    let above = cluster.start - 1 + cluster.size;
    let threshold = 0.5 * (sigma_0[cluster.start - 1] + sigma_0[above]);
    let gap_flag = sigma_eps.iter().skip(above).any(|&s| s < threshold);

    let tag = |r: InequalityRecord| r.with_epsilon(eps);
    let mut records = Vec::new();
    if config.enabled("monotonicity") {
        let rec = check_monotonicity(&Spectrum { h, sigma: &sigma_eps }, &Spectrum { h, sigma: &sigma_0 }, config.k_max)?;
        records.push(tag(rec));
    }

    let ground = &pairs[0];
    let radii = [2.0 * h, 4.0 * h, 8.0 * h];
    if config.enabled("korn_ball") && m == 2 {
        let u = crate::coefficients::DiscreteField::from_dofs(&mesh, m, &ground.vector)?;
        let worst = sample_balls(&mesh, KORN_BALLS, &radii, seed)
            .iter()
            .map(|b| check_korn_ball(&mesh, &u, b))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max_by(|a, b| a.empirical_constant.total_cmp(&b.empirical_constant));
        records.extend(worst.map(tag));
    }
    if config.enabled("sobolev_poincare") {
        let u = crate::coefficients::DiscreteField::from_dofs(&mesh, m, &ground.vector)?;
        let mut worst: Option<InequalityRecord> = None;
        for b in sample_balls(&mesh, SP_BALLS, &[8.0 * h], seed + 1) {
            match check_sobolev_poincare(&mesh, &u, &b, 1.0) {
                Ok(r) => {
                    if worst.as_ref().map_or(true, |w| r.empirical_constant > w.empirical_constant) {
                        worst = Some(r);
                    }
                }
                Err(Error::BadSubset { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        records.extend(worst.map(tag));
    }
    if config.enabled("caccioppoli") {
        let balls = sample_balls(&mesh, CACCIOPPOLI_BALLS, &radii, seed + 2);
        records.push(tag(check_caccioppoli(&mesh, m, ground, &balls, config.c3)?));
    }
    if config.enabled("reverse_holder") {
        records.push(tag(check_reverse_holder(&mesh, m, ground, config.p_tilde)?));
    }
    if config.enabled("gradient_lp") {
        for (k, pair) in pairs.iter().take(config.k_max).enumerate() {
            let r = check_gradient_lp(&mesh, m, pair, config.p_tilde, sigma_0[k], config.q)?;
            records.push(tag(r.with_param("k", (k + 1) as f64)));
        }
    }
    if config.enabled("garding") {
        if let Some(delta) = tensor.delta.filter(|_| tensor.regime != Regime::LegendreHadamard) {
            let r = check_garding(&mesh, &stiff, m, delta, GARDING_TRIALS, seed + 3)?;
            records.push(tag(r));
        }
    }

    let mut summary = EpsilonSummary {
        epsilon: eps,
        degrees_of_freedom: stiff.dim(),
        max_residual: pairs.iter().map(|p| p.residual).fold(0.0, f64::max),
        sigma_eps: sigma_eps[..config.k_max].to_vec(),
        cluster_diff,
        gap_flag,
        shift,
        diag_deficiency: None,
        offdiag: None,
        diag_dominant: None,
        quasimode_residual: None,
        projector_distance: None,
    };

    let needs_cutoff = ["near_orthonormality", "quasimode_residual", "projector_distance"]
        .iter()
        .any(|c| config.enabled(c));
    if needs_cutoff {
        let eta = cutoff_eta(&config.domain, eps, &mesh)?;
        let cluster_pairs = &pairs[range.clone()];
        if config.enabled("near_orthonormality") {
            let (rec, gram) = check_near_orthonormality(&mesh, &eta, m, cluster_pairs, config.p_tilde, config.domain.d_exponent)?;
            summary.diag_deficiency = Some(rec.rhs_components["diag_deficiency"]);
            summary.offdiag = Some(rec.rhs_components["offdiag"]);
            summary.diag_dominant = Some(crate::inequalities::check_diag_dominance(&gram));
            records.push(rec);
        }
        let transferred = cluster_pairs
            .iter()
            .map(|p| restrict(&mesh, &base.mesh, m, &cutoff_product(&mesh, &eta, m, &p.vector)?))
            .collect::<Result<Vec<_>>>()?;
        if config.enabled("quasimode_residual") {
            let op = QuasimodeOperator::new(&base.stiff, &base.mass)?;
            let mut worst: f64 = 0.0;
            for (p, field) in cluster_pairs.iter().zip(&transferred) {
                worst = worst.max(op.residual(field, p.sigma, &TrialBasis::Full)?);
            }
            let scale = eps.powf(2.0 * (config.p_tilde - 2.0) / (2.0 * config.p_tilde));
            let mut rec = InequalityRecord::ratio("quasimode_residual", worst, &[("epsilon_power", scale)], f64::INFINITY)
                .with_param("cluster_size", cluster.size as f64);
            rec.budget = None;
            rec.pass = worst.is_finite();
            records.push(tag(rec));
            summary.quasimode_residual = Some(worst);
        }
        if config.enabled("projector_distance") {
            let basis0: Vec<Vec<f64>> = base.pairs[range.clone()].iter().map(|p| p.vector.clone()).collect();
            let d = projector_distance(&basis0, &transferred, &base.mass)?;
            let mut rec = InequalityRecord::ratio("projector_distance", d, &[("one", 1.0)], 1.0)
                .with_param("cluster_size", cluster.size as f64);
            rec.budget = None;
            records.push(tag(rec));
            summary.projector_distance = Some(d);
        }
    }

    Ok(EpsilonOutcome { summary, rows, records })
}

/// `epsilon,k,sigma_eps,sigma_0,diff,h`.
pub fn sweep_csv(report: &ConvergenceReport) -> String {
    let mut s = String::from("epsilon,k,sigma_eps,sigma_0,diff,h\n");
    for r in &report.rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.epsilon, r.k, r.sigma_eps, r.sigma_0, r.diff, r.h);
    }
    s
}

pub fn report_json(report: &ConvergenceReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Gnuplot script: log-log cluster diff against ε with the fitted line and the theoretical slope.
pub fn plot_script(report: &ConvergenceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 800,600");
    let _ = writeln!(s, "set output 'convergence.png'");
    let _ = writeln!(s, "set logscale xy");
    let _ = writeln!(s, "set xlabel 'epsilon'");
    let _ = writeln!(s, "set ylabel 'cluster diff (J = {})'", report.config.j);
    let _ = writeln!(s, "set key left top");
    let _ = writeln!(s, "$data << EOD");
    for e in &report.epsilons {
        let _ = writeln!(s, "{} {}", e.epsilon, e.cluster_diff);
    }
    let _ = writeln!(s, "EOD");
    let theory = report.theoretical_rate;
    let anchor = report
        .epsilons
        .first()
        .filter(|e| e.cluster_diff > 0.0)
        .map(|e| (e.epsilon, e.cluster_diff));
    let mut plots = vec!["$data using 1:2 with linespoints title 'sigma_0 - sigma_eps'".to_string()];
    if let Some(f) = report.fit {
        let _ = writeln!(s, "fit_a = {}", f.a);
        let _ = writeln!(s, "fit_c = {}", f.log_c.exp());
        plots.push(format!("fit_c*x**fit_a title sprintf('fit a = %.3f, R^2 = %.3f', fit_a, {})", f.r2));
    }
    if let Some((e0, d0)) = anchor {
        let _ = writeln!(s, "theory_a = {theory}");
        let _ = writeln!(s, "theory_c = {}", d0 / e0.powf(theory));
        plots.push("theory_c*x**theory_a dashtype 2 title sprintf('theory a = %.4f', theory_a)".to_string());
    }
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

/// Paths of the files written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub plot: PathBuf,
    pub records: PathBuf,
    pub summary: PathBuf,
}

pub fn write_outputs(report: &ConvergenceReport, dir: &Path) -> Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let files = OutputFiles {
        csv: dir.join("sweep.csv"),
        json: dir.join("report.json"),
        plot: dir.join("plot.gp"),
        records: dir.join("records.jsonl"),
        summary: dir.join("records_summary.csv"),
    };
    fs::write(&files.csv, sweep_csv(report))?;
    fs::write(&files.json, report_json(report)?)?;
    fs::write(&files.plot, plot_script(report))?;
    fs::write(&files.records, crate::inequalities::records_jsonl(&report.records)?)?;
    fs::write(&files.summary, crate::inequalities::records_summary_csv(&report.records))?;
    Ok(files)
}
