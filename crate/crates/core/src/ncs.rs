//! Improved Negatively Correlated Search.
//!
//! `λ` Gaussian search processes evolve in parallel. Each iteration every
//! process proposes an offspring distribution whose mean is drawn from the
//! parent. Parent and offspring are compared on two scores: the expected
//! objective `F` (minimized) and the isolation `D` from the other processes
//! (maximized). The adaptive stochastic ranking rule decides which survives:
//!
//! | offspring vs parent   | accept with probability |
//! |-----------------------|-------------------------|
//! | better F, better D    | 1                       |
//! | worse F, better D     | β = 0.7 − 0.4·G/G_max   |
//! | better F, worse D     | 1 if φ > ε, else 0      |
//! | worse F, worse D      | 0                       |
//!
//! `φ` is the fraction of processes replaced in the previous iteration and
//! `ε` shrinks geometrically while `φ` stays above it, resetting otherwise.
//! Step sizes follow a global 1/5 success rule every `sigma_epoch` iterations.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::pgps::PgpsParams;
use crate::seed::{rng_from, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseMapping {
    /// β for (worse F, better D); adaptive gate for (better F, worse D).
    Pseudocode,
    /// β for (better F, worse D); adaptive gate for (worse F, worse D).
    Prose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityMode {
    /// Minimum closed-form Bhattacharyya distance to any other process.
    ClosedFormMin,
    /// `-Σ_j ln Σ_k sqrt(p(w_k|θ_i) p(w_k|θ_j))` over the process's own samples.
    SampleDensity,
}

/// How the initial `interval / λ` scale is applied to the covariance diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScale {
    StdDev,
    Variance,
}

/// What counts as a success for the step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSuccess {
    /// The offspring improved on the best score its process has seen.
    ProcessBest,
    /// The offspring replaced its parent.
    Replacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NcsConfig {
    pub num_processes: usize,
    pub samples_per_process: usize,
    pub budget_evals: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epsilon0: f64,
    pub rho: f64,
    pub sigma_epoch: usize,
    /// Step-size multiplier applied on success (its inverse on failure).
    pub sigma_factor: f64,
    /// Success rate above which step sizes grow.
    pub success_rate: f64,
    pub sigma_success: SigmaSuccess,
    /// With one sample per process, evaluate the process mean itself
    /// instead of a further draw around it.
    pub single_sample_at_mean: bool,
    pub init_scale: InitScale,
    pub case_mapping: CaseMapping,
    pub diversity: DiversityMode,
    pub bounds: Bounds,
}

impl Default for NcsConfig {
    fn default() -> Self {
        NcsConfig {
            num_processes: 10,
            samples_per_process: 1,
            budget_evals: 10_000,
            beta_start: 0.7,
            beta_end: 0.3,
            epsilon0: 0.2,
            rho: 0.9,
            sigma_epoch: 10,
            sigma_factor: 1.05,
            success_rate: 0.2,
            sigma_success: SigmaSuccess::ProcessBest,
            single_sample_at_mean: true,
            init_scale: InitScale::StdDev,
            case_mapping: CaseMapping::Pseudocode,
            diversity: DiversityMode::ClosedFormMin,
            bounds: PgpsParams::synthetic_bounds(),
        }
    }
}

impl NcsConfig {
    pub fn evals_per_iteration(&self) -> usize {
        self.num_processes * self.samples_per_process
    }

    /// Number of iterations after initialization that fit in the budget.
    pub fn max_iterations(&self) -> usize {
        (self.budget_evals / self.evals_per_iteration()).saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_processes < 2 {
            return Err(Error::InvalidConfig("num_processes must be >= 2".into()));
        }
        if self.samples_per_process < 1 {
            return Err(Error::InvalidConfig("samples_per_process must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidConfig(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0 < 1.0) {
            return Err(Error::InvalidConfig(format!("epsilon0 must lie in (0, 1), got {}", self.epsilon0)));
        }
        if self.sigma_epoch < 1 || !(self.sigma_factor >= 1.0) {
            return Err(Error::InvalidConfig("sigma_epoch must be >= 1 and sigma_factor >= 1".into()));
        }
        let need = 2 * self.evals_per_iteration();
        if self.budget_evals < need {
            return Err(Error::BudgetTooSmall { need, got: self.budget_evals });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub f: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchProcess {
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
    pub score_f: f64,
    pub score_d: f64,
    pub last_samples: Vec<Sample>,
}

impl SearchProcess {
    pub fn new(mean: Vec<f64>, cov_diag: Vec<f64>) -> Self {
        SearchProcess { mean, cov_diag, score_f: f64::INFINITY, score_d: 0.0, last_samples: Vec::new() }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        const LN_2PI: f64 = 1.837_877_066_409_345_5;
        -0.5 * x
            .iter()
            .zip(&self.mean)
            .zip(&self.cov_diag)
            .map(|((xi, mi), vi)| (xi - mi) * (xi - mi) / vi + vi.ln() + LN_2PI)
            .sum::<f64>()
    }

    fn draw<R: Rng + ?Sized>(&self, bounds: &Bounds, rng: &mut R) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.cov_diag)
            .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        bounds.reflect(&mut x);
        x
    }
}

/// Closed-form Bhattacharyya distance between two diagonal Gaussians.
pub fn bhattacharyya(a: &SearchProcess, b: &SearchProcess) -> f64 {
    let mut quad = 0.0;
    let mut logdet = 0.0;
    for d in 0..a.mean.len() {
        let (va, vb) = (a.cov_diag[d], b.cov_diag[d]);
        let avg = 0.5 * (va + vb);
        let dm = a.mean[d] - b.mean[d];
        quad += dm * dm / avg;
        logdet += avg.ln() - 0.5 * (va.ln() + vb.ln());
    }
    (quad / 8.0 + 0.5 * logdet).max(0.0)
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Isolation of `candidate` (standing in for process `i`) from every other process.
pub fn diversity_against(i: usize, candidate: &SearchProcess, processes: &[SearchProcess], mode: DiversityMode) -> f64 {
    let others = processes.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p);
    match mode {
        DiversityMode::ClosedFormMin => others.map(|p| bhattacharyya(candidate, p)).fold(f64::INFINITY, f64::min),
        DiversityMode::SampleDensity => others
            .map(|p| {
                let overlap = log_sum_exp(
                    candidate
                        .last_samples
                        .iter()
                        .map(|s| 0.5 * (candidate.log_density(&s.x) + p.log_density(&s.x))),
                );
                -overlap
            })
            .sum(),
    }
}

pub fn diversity(i: usize, processes: &[SearchProcess], mode: DiversityMode) -> f64 {
    diversity_against(i, &processes[i], processes, mode)
}

/// Density-weighted mean objective of a process's samples; reduces to `f`
/// for a single sample and to the arithmetic mean if all densities vanish.
pub fn expected_objective(samples: &[Sample], process: &SearchProcess) -> f64 {
    let logs: Vec<f64> = samples.iter().map(|s| process.log_density(&s.x)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return samples.iter().map(|s| s.f).sum::<f64>() / samples.len() as f64;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (s, l) in samples.iter().zip(&logs) {
        let w = (l - max).exp();
        num += s.f * w;
        den += w;
    }
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    KeepParent,
    ReplaceWithOffspring,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub f: f64,
    pub d: f64,
}

/// Everything besides the two score pairs that the selection rule reads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionContext {
    pub generation: usize,
    pub max_generation: usize,
    pub phi: f64,
    pub epsilon: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub mapping: CaseMapping,
}

impl SelectionContext {
    pub fn beta(&self) -> f64 {
        beta_schedule(self.beta_start, self.beta_end, self.generation, self.max_generation)
    }
}

pub fn beta_schedule(start: f64, end: f64, generation: usize, max_generation: usize) -> f64 {
    if max_generation == 0 {
        return start;
    }
    start - (start - end) * generation as f64 / max_generation as f64
}

/// Probability that the offspring replaces the parent.
pub fn acceptance_probability(parent: Scores, offspring: Scores, ctx: &SelectionContext) -> f64 {
    let better_f = offspring.f < parent.f;
    let worse_f = offspring.f > parent.f;
    let better_d = offspring.d > parent.d;
    let worse_d = offspring.d < parent.d;
    let gate = if ctx.phi > ctx.epsilon { 1.0 } else { 0.0 };
    match ctx.mapping {
        CaseMapping::Pseudocode => {
            if better_f && better_d {
                1.0
            } else if worse_f && better_d {
                ctx.beta()
            } else if better_f && worse_d {
                gate
            } else {
                0.0
            }
        }
        CaseMapping::Prose => {
            if better_f && better_d {
                1.0
            } else if better_f && worse_d {
                ctx.beta()
            } else if worse_f && worse_d {
                gate
            } else {
                0.0
            }
        }
    }
}

/// Selection given an explicit uniform draw `u` in `[0, 1)`.
pub fn select_with_draw(parent: Scores, offspring: Scores, ctx: &SelectionContext, u: f64) -> Decision {
    if u < acceptance_probability(parent, offspring, ctx) {
        Decision::ReplaceWithOffspring
    } else {
        Decision::KeepParent
    }
}

pub fn select<R: Rng + ?Sized>(parent: Scores, offspring: Scores, ctx: &SelectionContext, rng: &mut R) -> Decision {
    select_with_draw(parent, offspring, ctx, rng.gen::<f64>())
}

/// Threshold update: shrink by `rho` while the update rate beats it, else reset.
pub fn update_epsilon(epsilon_prev: f64, phi_prev: f64, epsilon0: f64, rho: f64) -> f64 {
    if phi_prev > epsilon_prev {
        epsilon_prev * rho
    } else {
        epsilon0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub evals: usize,
    pub best_f: f64,
    pub mean_f: f64,
    pub epsilon_t: Option<f64>,
    pub phi_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    /// Evaluation seed of the best candidate, so its output can be regenerated.
    pub best_seed: u64,
    pub trace: Vec<TraceRow>,
    pub evals_used: usize,
    pub seed: u64,
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("iteration,evals,best_f,mean_f,epsilon_t,phi_t\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration,
            r.evals,
            r.best_f,
            r.mean_f,
            opt(r.epsilon_t),
            opt(r.phi_t)
        ));
    }
    out
}

struct Candidate {
    process: usize,
    x: Vec<f64>,
    seed: u64,
}

fn evaluate_all<O: Objective + ?Sized>(objective: &O, candidates: Vec<Candidate>) -> Result<Vec<(usize, Sample)>> {
    let values: Vec<Result<f64>> = candidates.par_iter().map(|c| objective.evaluate(&c.x, c.seed)).collect();
    candidates
        .into_iter()
        .zip(values)
        .map(|(c, f)| Ok((c.process, Sample { x: c.x, f: f?, seed: c.seed })))
        .collect()
}

#[derive(Default)]
struct Best {
    value: f64,
    x: Vec<f64>,
    seed: u64,
}

impl Best {
    fn new() -> Self {
        Best { value: f64::INFINITY, ..Default::default() }
    }

    fn offer(&mut self, s: &Sample) {
        if s.f < self.value || self.x.is_empty() {
            self.value = s.f;
            self.x = s.x.clone();
            self.seed = s.seed;
        }
    }
}

fn sample_candidates(
    processes: &[SearchProcess],
    n: usize,
    at_mean: bool,
    bounds: &Bounds,
    rng: &mut SimRng,
) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(processes.len() * n);
    for (i, p) in processes.iter().enumerate() {
        for _ in 0..n {
            let x = if n == 1 && at_mean { p.mean.clone() } else { p.draw(bounds, rng) };
            let seed = rng.gen::<u64>();
            out.push(Candidate { process: i, x, seed });
        }
    }
    out
}

fn group(samples: Vec<(usize, Sample)>, count: usize) -> Vec<Vec<Sample>> {
    let mut grouped = vec![Vec::new(); count];
    for (i, s) in samples {
        grouped[i].push(s);
    }
    grouped
}

/// Initial processes: means uniform in the box, covariance from `interval / λ`.
pub fn init_processes<R: Rng + ?Sized>(config: &NcsConfig, rng: &mut R) -> Vec<SearchProcess> {
    let lambda = config.num_processes as f64;
    let bounds = &config.bounds;
    (0..config.num_processes)
        .map(|_| {
            let mean = bounds.sample_uniform(rng);
            let cov = (0..bounds.dim())
                .map(|d| {
                    let s = bounds.width(d) / lambda;
                    match config.init_scale {
                        InitScale::StdDev => s * s,
                        InitScale::Variance => s,
                    }
                })
                .collect();
            SearchProcess::new(mean, cov)
        })
        .collect()
}

pub fn calibrate<O: Objective + ?Sized>(objective: &O, config: &NcsConfig, seed: u64) -> Result<CalibrationResult> {
    config.validate()?;
    let bounds = &config.bounds;
    let lambda = config.num_processes;
    let n = config.samples_per_process;
    let g_max = config.max_iterations();
    let mut rng = rng_from(seed);

    let mut processes = init_processes(config, &mut rng);
    let evaluated = evaluate_all(objective, sample_candidates(&processes, n, config.single_sample_at_mean, bounds, &mut rng))?;
    let mut best = Best::new();
    let mut iter_sum = 0.0;
    for (_, s) in &evaluated {
        best.offer(s);
        iter_sum += s.f;
    }
    for (p, samples) in processes.iter_mut().zip(group(evaluated, lambda)) {
        p.score_f = expected_objective(&samples, p);
        p.last_samples = samples;
    }
    for i in 0..lambda {
        processes[i].score_d = diversity(i, &processes, config.diversity);
    }
    let mut evals = lambda * n;
    let mut trace = vec![TraceRow {
        iteration: 0,
        evals,
        best_f: best.value,
        mean_f: iter_sum / evals as f64,
        epsilon_t: Some(config.epsilon0),
        phi_t: None,
    }];

    let mut phi = 1.0;
    let mut epsilon = update_epsilon(config.epsilon0, phi, config.epsilon0, config.rho);
    let mut epoch_successes = 0usize;
    let mut process_best: Vec<f64> = processes.iter().map(|p| p.score_f).collect();

    for g in 1..=g_max {
        let mut offspring: Vec<SearchProcess> = processes
            .iter()
            .map(|p| SearchProcess::new(p.draw(bounds, &mut rng), p.cov_diag.clone()))
            .collect();
        let evaluated = evaluate_all(objective, sample_candidates(&offspring, n, config.single_sample_at_mean, bounds, &mut rng))?;
        let mut iter_sum = 0.0;
        for (_, s) in &evaluated {
            best.offer(s);
            iter_sum += s.f;
        }
        for (o, samples) in offspring.iter_mut().zip(group(evaluated, lambda)) {
            o.score_f = expected_objective(&samples, o);
            o.last_samples = samples;
        }

        let ctx = SelectionContext {
            generation: g,
            max_generation: g_max,
            phi,
            epsilon,
            beta_start: config.beta_start,
            beta_end: config.beta_end,
            mapping: config.case_mapping,
        };
        let mut replaced = 0usize;
        for (i, mut child) in offspring.into_iter().enumerate() {
            processes[i].score_d = diversity(i, &processes, config.diversity);
            child.score_d = diversity_against(i, &child, &processes, config.diversity);
            let parent = Scores { f: processes[i].score_f, d: processes[i].score_d };
            let off = Scores { f: child.score_f, d: child.score_d };
            let beat_best = off.f < process_best[i];
            process_best[i] = process_best[i].min(off.f);
            let accepted = select(parent, off, &ctx, &mut rng) == Decision::ReplaceWithOffspring;
            if accepted {
                processes[i] = child;
                replaced += 1;
            }
            let success = match config.sigma_success {
                SigmaSuccess::ProcessBest => beat_best,
                SigmaSuccess::Replacement => accepted,
            };
            epoch_successes += usize::from(success);
        }
        evals += lambda * n;

        let used_epsilon = epsilon;
        phi = replaced as f64 / lambda as f64;
        epsilon = update_epsilon(epsilon, phi, config.epsilon0, config.rho);

        if g % config.sigma_epoch == 0 {
            let rate = epoch_successes as f64 / (lambda * config.sigma_epoch) as f64;
            let factor = if rate > config.success_rate { config.sigma_factor } else { 1.0 / config.sigma_factor };
            for p in processes.iter_mut() {
                for (d, v) in p.cov_diag.iter_mut().enumerate() {
                    let w = bounds.width(d);
                    *v = (*v * factor * factor).min(w * w);
                }
            }
            epoch_successes = 0;
        }

        trace.push(TraceRow {
            iteration: g,
            evals,
            best_f: best.value,
            mean_f: iter_sum / (lambda * n) as f64,
            epsilon_t: Some(used_epsilon),
            phi_t: Some(phi),
        });
    }

    Ok(CalibrationResult { best_x: best.x, best_value: best.value, best_seed: best.seed, trace, evals_used: evals, seed })
}

/// Uniform i.i.d. sampling in the box; one trace row per evaluation.
pub fn random_search<O: Objective + ?Sized>(objective: &O, bounds: &Bounds, budget: usize, seed: u64) -> Result<CalibrationResult> {
    if budget < 1 {
        return Err(Error::BudgetTooSmall { need: 1, got: 0 });
    }
    let mut rng = rng_from(seed);
    let candidates: Vec<Candidate> = (0..budget)
        .map(|k| {
            let x = bounds.sample_uniform(&mut rng);
            Candidate { process: k, x, seed: rng.gen() }
        })
        .collect();
    let evaluated = evaluate_all(objective, candidates)?;
    let mut best = Best::new();
    let mut trace = Vec::with_capacity(budget);
    for (k, s) in &evaluated {
        best.offer(s);
        trace.push(TraceRow { iteration: *k, evals: k + 1, best_f: best.value, mean_f: s.f, epsilon_t: None, phi_t: None });
    }
    Ok(CalibrationResult { best_x: best.x, best_value: best.value, best_seed: best.seed, trace, evals_used: budget, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn ctx(mapping: CaseMapping, g: usize, phi: f64, eps: f64) -> SelectionContext {
        SelectionContext { generation: g, max_generation: 100, phi, epsilon: eps, beta_start: 0.7, beta_end: 0.3, mapping }
    }

    fn proc1(mean: f64, var: f64) -> SearchProcess {
        SearchProcess::new(vec![mean], vec![var])
    }

    fn sample(x: Vec<f64>, f: f64) -> Sample {
        Sample { x, f, seed: 0 }
    }

    #[test]
    fn init_scale_and_count() {
        let cfg = NcsConfig { bounds: Bounds::new(vec![(50.0, 300.0), (0.0, 1.0)]).unwrap(), ..Default::default() };
        let mut rng = rng_from(1);
        let ps = init_processes(&cfg, &mut rng);
        assert_eq!(ps.len(), 10);
        assert_relative_eq!(ps[0].cov_diag[0].sqrt(), 25.0, max_relative = 1e-12);
        assert!(ps.iter().all(|p| cfg.bounds.contains(&p.mean)));
        let two = NcsConfig { num_processes: 2, ..cfg };
        assert_eq!(init_processes(&two, &mut rng).len(), 2);
    }

    #[test]
    fn expected_objective_cases() {
        let p = proc1(0.0, 1.0);
        assert_eq!(expected_objective(&[sample(vec![0.3], 0.04)], &p), 0.04);
        let eq = expected_objective(&[sample(vec![1.0], 0.2), sample(vec![-1.0], 0.4)], &p);
        assert_relative_eq!(eq, 0.3, max_relative = 1e-12);
        // density ratio 3:1
        let x2 = (2.0 * 3f64.ln()).sqrt();
        let w = expected_objective(&[sample(vec![0.0], 0.2), sample(vec![x2], 0.4)], &p);
        assert_relative_eq!(w, 0.25, max_relative = 1e-12);
        let far = proc1(0.0, 1e-300);
        let v = expected_objective(&[sample(vec![1e200], 0.2), sample(vec![-1e200], 0.4)], &far);
        assert_relative_eq!(v, 0.3, max_relative = 1e-12);
    }

    #[test]
    fn bhattacharyya_cases() {
        assert_eq!(bhattacharyya(&proc1(1.0, 2.0), &proc1(1.0, 2.0)), 0.0);
        assert_relative_eq!(bhattacharyya(&proc1(0.0, 1.0), &proc1(2.0, 1.0)), 0.5, max_relative = 1e-12);
        let ps = vec![proc1(0.0, 1.0), proc1(2.0, 1.0), proc1(-4.0, 1.0)];
        assert_relative_eq!(bhattacharyya(&ps[0], &ps[2]), 2.0, max_relative = 1e-12);
        assert_relative_eq!(diversity(0, &ps, DiversityMode::ClosedFormMin), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn sampled_diversity_is_finite_and_orders_isolation() {
        let mut a = proc1(0.0, 1.0);
        a.last_samples = vec![sample(vec![0.1], 0.0)];
        let near = vec![a.clone(), proc1(0.5, 1.0)];
        let far = vec![a, proc1(5.0, 1.0)];
        let dn = diversity(0, &near, DiversityMode::SampleDensity);
        let df = diversity(0, &far, DiversityMode::SampleDensity);
        assert!(dn.is_finite() && df > dn);
    }

    #[test]
    fn selection_truth_table() {
        let parent = Scores { f: 0.5, d: 1.0 };
        let c = ctx(CaseMapping::Pseudocode, 25, 0.5, 0.2);
        let beta = 0.7 - 0.4 * 25.0 / 100.0;
        let cases = [
            (Scores { f: 0.4, d: 2.0 }, 1.0),
            (Scores { f: 0.6, d: 2.0 }, beta),
            (Scores { f: 0.4, d: 0.5 }, 1.0),
            (Scores { f: 0.6, d: 0.5 }, 0.0),
        ];
        for (off, p) in cases {
            assert_relative_eq!(acceptance_probability(parent, off, &c), p, max_relative = 1e-12);
        }
        let closed = ctx(CaseMapping::Pseudocode, 25, 0.1, 0.2);
        assert_eq!(acceptance_probability(parent, Scores { f: 0.4, d: 0.5 }, &closed), 0.0);
        // ties keep the parent
        assert_eq!(acceptance_probability(parent, Scores { f: 0.5, d: 2.0 }, &c), 0.0);
        assert_eq!(acceptance_probability(parent, Scores { f: 0.4, d: 1.0 }, &c), 0.0);
    }

    #[test]
    fn prose_mapping() {
        let parent = Scores { f: 0.5, d: 1.0 };
        let c = ctx(CaseMapping::Prose, 0, 0.5, 0.2);
        assert_eq!(acceptance_probability(parent, Scores { f: 0.4, d: 2.0 }, &c), 1.0);
        assert_eq!(acceptance_probability(parent, Scores { f: 0.6, d: 2.0 }, &c), 0.0);
        assert_relative_eq!(acceptance_probability(parent, Scores { f: 0.4, d: 0.5 }, &c), 0.7);
        assert_eq!(acceptance_probability(parent, Scores { f: 0.6, d: 0.5 }, &c), 1.0);
    }

    #[test]
    fn forced_draws() {
        let parent = Scores { f: 0.5, d: 1.0 };
        let off = Scores { f: 0.6, d: 2.0 };
        let c = ctx(CaseMapping::Pseudocode, 0, 0.5, 0.2);
        assert_eq!(select_with_draw(parent, off, &c, 0.69), Decision::ReplaceWithOffspring);
        assert_eq!(select_with_draw(parent, off, &c, 0.70), Decision::KeepParent);
        assert_eq!(select_with_draw(parent, Scores { f: 0.4, d: 2.0 }, &c, 0.999), Decision::ReplaceWithOffspring);
        assert_eq!(select_with_draw(parent, Scores { f: 0.6, d: 0.1 }, &c, 0.0), Decision::KeepParent);
    }

    #[test]
    fn beta_endpoints() {
        assert_relative_eq!(beta_schedule(0.7, 0.3, 0, 50), 0.7);
        assert_relative_eq!(beta_schedule(0.7, 0.3, 50, 50), 0.3);
    }

    #[test]
    fn epsilon_updates() {
        assert_relative_eq!(update_epsilon(0.2, 0.5, 0.2, 0.9), 0.18);
        assert_eq!(update_epsilon(0.2, 0.1, 0.2, 0.9), 0.2);
        assert_eq!(update_epsilon(0.15, 0.1, 0.2, 0.9), 0.2);
        assert_eq!(update_epsilon(0.2, 0.5, 0.2, 1.0), 0.2);
        let mut e = 0.2;
        for k in 1..=5 {
            e = update_epsilon(e, 0.9, 0.2, 0.9);
            assert_relative_eq!(e, 0.2 * 0.9f64.powi(k), max_relative = 1e-12);
        }
    }

    fn sphere(center: Vec<f64>) -> impl Fn(&[f64], u64) -> Result<f64> + Sync {
        move |x, _| Ok(x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    fn box6() -> Bounds {
        Bounds::new(vec![(-5.0, 5.0); 6]).unwrap()
    }

    #[test]
    fn sphere_converges() {
        let f = sphere(vec![1.2, -3.0, 0.5, 4.0, -2.2, 0.0]);
        let cfg = NcsConfig { budget_evals: 5000, bounds: box6(), ..Default::default() };
        let r = calibrate(&f, &cfg, 3).unwrap();
        let diag = (6.0f64 * 100.0).sqrt();
        assert!(r.best_value < 1e-2 * diag, "best {}", r.best_value);
        assert_eq!(r.evals_used, 5000);
        assert!(r.trace.windows(2).all(|w| w[1].best_f <= w[0].best_f));
        assert_eq!(r.trace.len(), 500);
        assert_eq!(r, calibrate(&f, &cfg, 3).unwrap());
    }

    #[test]
    fn ncs_beats_random_search_on_sphere() {
        let f = sphere(vec![1.2, -3.0, 0.5, 4.0, -2.2, 0.0]);
        let cfg = NcsConfig { budget_evals: 2000, bounds: box6(), ..Default::default() };
        let mut ncs: Vec<f64> = (0..10).map(|s| calibrate(&f, &cfg, s).unwrap().best_value).collect();
        let mut rs: Vec<f64> = (0..10).map(|s| random_search(&f, &cfg.bounds, 2000, s).unwrap().best_value).collect();
        ncs.sort_by(f64::total_cmp);
        rs.sort_by(f64::total_cmp);
        assert!(ncs[5] < rs[5], "{ncs:?} vs {rs:?}");
    }

    #[test]
    fn budget_accounting() {
        let f = sphere(vec![0.0; 6]);
        let small = NcsConfig { budget_evals: 19, bounds: box6(), ..Default::default() };
        assert!(matches!(calibrate(&f, &small, 0), Err(Error::BudgetTooSmall { need: 20, .. })));
        let cfg = NcsConfig { budget_evals: 125, samples_per_process: 2, bounds: box6(), ..Default::default() };
        let r = calibrate(&f, &cfg, 0).unwrap();
        assert_eq!(r.evals_used, 120);
        assert_eq!(r.evals_used, cfg.evals_per_iteration() * (cfg.max_iterations() + 1));
    }

    #[test]
    fn random_search_cases() {
        let f = sphere(vec![0.0; 6]);
        let r = random_search(&f, &box6(), 1, 9).unwrap();
        assert_eq!(r.evals_used, 1);
        assert_eq!(r.best_value, f(&r.best_x, 0).unwrap());
        assert_eq!(random_search(&f, &box6(), 50, 9).unwrap(), random_search(&f, &box6(), 50, 9).unwrap());
    }

    #[test]
    fn sampled_diversity_mode_runs() {
        let f = sphere(vec![0.0; 6]);
        let cfg = NcsConfig { budget_evals: 400, samples_per_process: 2, diversity: DiversityMode::SampleDensity, bounds: box6(), ..Default::default() };
        let r = calibrate(&f, &cfg, 4).unwrap();
        assert!(r.best_value.is_finite());
    }

    #[test]
    fn trace_csv_layout() {
        let f = sphere(vec![0.0; 6]);
        let cfg = NcsConfig { budget_evals: 30, bounds: box6(), ..Default::default() };
        let csv = trace_csv(&calibrate(&f, &cfg, 0).unwrap().trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iteration,evals,best_f,mean_f,epsilon_t,phi_t");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(','));
    }

    proptest! {
        #[test]
        fn bhattacharyya_symmetric_nonnegative(
            m1 in prop::collection::vec(-5f64..5.0, 3),
            m2 in prop::collection::vec(-5f64..5.0, 3),
            v1 in prop::collection::vec(0.01f64..4.0, 3),
            v2 in prop::collection::vec(0.01f64..4.0, 3),
        ) {
            let a = SearchProcess::new(m1, v1);
            let b = SearchProcess::new(m2, v2);
            let ab = bhattacharyya(&a, &b);
            prop_assert!((ab - bhattacharyya(&b, &a)).abs() < 1e-12);
            prop_assert!(ab >= 0.0);
            prop_assert!(ab > 0.0 || (a.mean == b.mean && a.cov_diag == b.cov_diag) || ab < 1e-12);
            prop_assert_eq!(bhattacharyya(&a, &a), 0.0);
        }

        #[test]
        fn beta_affine_and_bounded(g_max in 1usize..5000, frac in 0.0f64..=1.0) {
            let g = ((g_max as f64) * frac) as usize;
            let b = beta_schedule(0.7, 0.3, g, g_max);
            prop_assert!((0.3 - 1e-12..=0.7 + 1e-12).contains(&b));
            prop_assert!((b - (0.7 - 0.4 * g as f64 / g_max as f64)).abs() < 1e-12);
        }

        #[test]
        fn candidates_stay_in_bounds(seed in any::<u64>()) {
            let bounds = PgpsParams::synthetic_bounds();
            let seen = std::sync::Mutex::new(Vec::new());
            let f = |x: &[f64], _s: u64| -> Result<f64> {
                seen.lock().unwrap().push(x.to_vec());
                Ok(x[0])
            };
            let cfg = NcsConfig { budget_evals: 200, bounds: bounds.clone(), ..Default::default() };
            calibrate(&f, &cfg, seed).unwrap();
            prop_assert!(seen.into_inner().unwrap().iter().all(|x| bounds.contains(x)));
        }

        #[test]
        fn forced_rng_matches_probability(u in 0.0f64..1.0, g in 0usize..=100) {
            let parent = Scores { f: 0.5, d: 1.0 };
            let off = Scores { f: 0.6, d: 2.0 };
            let c = ctx(CaseMapping::Pseudocode, g, 0.5, 0.2);
            let expect = if u < c.beta() { Decision::ReplaceWithOffspring } else { Decision::KeepParent };
            prop_assert_eq!(select_with_draw(parent, off, &c, u), expect);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(g as u64);
            let _ = select(parent, off, &c, &mut rng);
        }
    }
}
