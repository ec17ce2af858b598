//! The outer synthesis loop: seed demonstrations, learn a positive
//! compatible candidate, falsify the switching controller, grow the
//! demonstration database from counterexamples, and accept after a
//! configurable streak of failure-free samples.
//!
//! The loop is deterministic given the configuration seed: decrease
//! samples are indexed by a global counter with per-sample generators,
//! and the positivity falsifier derives its seed from a dedicated
//! counterexample counter, so an interrupted run resumed from a
//! checkpoint reproduces the uninterrupted result exactly.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clf_learner::{
    chebyshev_center, is_discretely_compatible, CandidateCLF, ChebyshevOutcome, Inequality,
    InequalityStore, PolynomialBasis,
};
use crate::demonstrator::{demonstrate, DemonstratorConfig, DiscreteDemonstration};
use crate::dynamics::{benchmarks, ControlSystem, CostSpec, Region};
use crate::error::Error;
use crate::falsifier::{falsify_decrease, falsify_positivity, DEConfig, DecreaseOutcome,
    SampleRecord, SamplingBudget};
use crate::lqr_tracking::{equilibrium_lqr, TrackingCostMatrices};
use crate::switching::{AssignmentRule, DemoDatabase, SwitchingController, SwitchingPolicy};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Learn the candidate alongside the controller.
    LearnClf,
    /// A compatible CLF is supplied up front; only the controller loop runs.
    KnownClf,
}

/// Candidate-family specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: u32,
    pub even_powers_only: bool,
    pub include_linear: bool,
    pub p_bound: f64,
}

impl BasisSpec {
    pub fn build(&self, n: usize) -> PolynomialBasis {
        PolynomialBasis::new(n, self.degree, self.even_powers_only, self.include_linear)
    }
}

/// Demonstrator tuning knobs (the horizon comes from `t_horizon/h`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstratorTuning {
    pub max_outer_iterations: usize,
    pub regularization_init: f64,
    pub convergence_tol: f64,
    pub terminal_weight: f64,
    pub constraint_penalty_weight: f64,
}

impl Default for DemonstratorTuning {
    fn default() -> Self {
        let d = DemonstratorConfig::for_horizon(1);
        Self {
            max_outer_iterations: d.max_outer_iterations,
            regularization_init: d.regularization_init,
            convergence_tol: d.convergence_tol,
            terminal_weight: d.terminal_weight,
            constraint_penalty_weight: d.constraint_penalty_weight,
        }
    }
}

/// Differential-evolution tuning (the seed is derived from the run seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DETuning {
    pub population: usize,
    pub f_weight: f64,
    pub crossover: f64,
    pub generations: usize,
    pub restarts: usize,
}

impl Default for DETuning {
    fn default() -> Self {
        let d = DEConfig::default();
        Self {
            population: d.population,
            f_weight: d.f_weight,
            crossover: d.crossover,
            generations: d.generations,
            restarts: d.restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub benchmark: String,
    pub h: f64,
    pub t_horizon: f64,
    pub t_min: f64,
    pub gamma: f64,
    pub eps0: f64,
    pub basis: BasisSpec,
    pub accept_n: u64,
    pub max_total_samples: u64,
    pub max_demonstrations: usize,
    pub rng_seed: u64,
    pub mode: Mode,
    /// Supplied Lyapunov function for `Mode::KnownClf`.
    pub known_clf: Option<CandidateCLF>,
    /// Keep demonstrating from this many further samples after acceptance.
    pub performance_oversampling: Option<u64>,
    pub relearn_cap: u64,
    pub suffix_expansion: bool,
    /// Seed the database from 2n axis-aligned points at half the box radius.
    pub seed_demos: bool,
    pub prefilter_k: usize,
    pub workers: usize,
    pub handoff_step_cap: usize,
    pub demonstrator: DemonstratorTuning,
    pub de: DETuning,
}

impl SynthesisConfig {
    /// Defaults mirroring the chosen benchmark's experiment.
    pub fn for_benchmark(name: &str) -> Result<Self> {
        let b = benchmarks::benchmark(name)?;
        Ok(Self {
            benchmark: name.to_string(),
            h: b.h,
            t_horizon: b.t_horizon,
            t_min: b.t_min,
            gamma: b.gamma,
            eps0: b.region.eps0,
            basis: BasisSpec {
                degree: b.basis_degree,
                even_powers_only: b.even_only,
                include_linear: !b.even_only,
                p_bound: b.p_bound,
            },
            accept_n: b.accept_n,
            max_total_samples: b.accept_n.saturating_mul(50),
            max_demonstrations: 500,
            rng_seed: 0,
            mode: Mode::LearnClf,
            known_clf: None,
            performance_oversampling: None,
            relearn_cap: 500,
            suffix_expansion: true,
            seed_demos: true,
            prefilter_k: 100,
            workers: 1,
            handoff_step_cap: 100_000,
            demonstrator: DemonstratorTuning::default(),
            de: DETuning::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig("gamma must lie in (0, 1)".into()));
        }
        if self.h <= 0.0 || self.t_horizon <= 0.0 || self.t_min <= 0.0 || self.eps0 <= 0.0 {
            return Err(Error::InvalidConfig(
                "h, t_horizon, t_min and eps0 must be positive".into(),
            ));
        }
        let steps = self.t_min / self.h;
        if (steps - steps.round()).abs() > 1e-9 * (1.0 + steps) {
            return Err(Error::InvalidConfig(
                "t_min must be a multiple of h".into(),
            ));
        }
        if self.accept_n == 0 {
            return Err(Error::InvalidConfig("accept_n must be positive".into()));
        }
        if self.mode == Mode::KnownClf && self.known_clf.is_none() {
            return Err(Error::InvalidConfig(
                "known_clf mode requires a supplied Lyapunov function".into(),
            ));
        }
        Ok(())
    }

    pub fn horizon_steps(&self) -> usize {
        (self.t_horizon / self.h).round() as usize
    }

    pub fn demonstrator_config(&self) -> DemonstratorConfig {
        DemonstratorConfig {
            horizon_steps: self.horizon_steps(),
            max_outer_iterations: self.demonstrator.max_outer_iterations,
            regularization_init: self.demonstrator.regularization_init,
            convergence_tol: self.demonstrator.convergence_tol,
            terminal_weight: self.demonstrator.terminal_weight,
            constraint_penalty_weight: self.demonstrator.constraint_penalty_weight,
        }
    }

    /// Stable hash of the canonical JSON form, used to pair checkpoints
    /// with their configuration.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    LearnerInfeasible,
    DemonstrationFailed,
    BudgetExhausted,
}

/// Wall-clock phase breakdown. Kept out of the serialized report so that
/// report files are byte-identical across reruns; the CLI writes these to
/// a sidecar file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub demonstrator_s: f64,
    pub learner_s: f64,
    pub falsifier_positivity_s: f64,
    pub falsifier_decrease_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub outcome: Outcome,
    pub benchmark: String,
    pub rng_seed: u64,
    pub mode: Mode,
    pub accept_n: u64,
    pub candidate_coefficients: Option<Vec<f64>>,
    pub basis_dimension: usize,
    pub demonstrations: usize,
    pub demonstration_states: usize,
    pub inequalities: usize,
    pub positivity_counterexamples: u64,
    pub decrease_counterexamples: u64,
    pub relearns: u64,
    pub decrease_falsifier_samples: u64,
    pub final_streak: u64,
    pub failure_detail: Option<String>,
    #[serde(skip)]
    pub timings: TimingBreakdown,
}

impl SynthesisReport {
    /// Deterministic JSON (timings excluded).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything a finished run hands back. The controller and candidate are
/// present only when the outcome permits them.
pub struct SynthesisRun {
    pub report: SynthesisReport,
    pub controller: Option<SwitchingController>,
    pub candidate: Option<CandidateCLF>,
}

/// Serializable mid-run state sufficient for bit-identical continuation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: SynthesisConfig,
    pub demos: Vec<DiscreteDemonstration>,
    pub rows: Vec<Inequality>,
    pub candidate_p: Option<Vec<f64>>,
    pub sample_index: u64,
    pub streak: u64,
    pub positivity_counterexamples: u64,
    pub decrease_counterexamples: u64,
    pub relearns: u64,
    pub decrease_falsifier_samples: u64,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(s)?;
        if cp.version != 1 {
            return Err(Error::ConfigMismatch(format!(
                "unsupported checkpoint version {}",
                cp.version
            )));
        }
        if cp.config.config_hash() != cp.config_hash {
            return Err(Error::ConfigMismatch(
                "checkpoint config hash does not match its config".into(),
            ));
        }
        Ok(cp)
    }
}

/// Runs synthesis for a registered benchmark.
pub fn synthesize(cfg: &SynthesisConfig) -> Result<SynthesisRun> {
    synthesize_with(cfg, None, |_| {}, |_| {})
}

/// Rebuilds a runnable switching controller from a saved library
/// (checkpoint) of a benchmark run. Gain schedules and the equilibrium
/// LQR are recomputed from the stored demonstrations.
pub fn controller_from_checkpoint(cp: &Checkpoint) -> Result<SwitchingController> {
    let cfg = &cp.config;
    cfg.validate()?;
    let b = benchmarks::benchmark(&cfg.benchmark)?;
    let mut region = b.region.clone();
    region.eps0 = cfg.eps0;
    region.validate()?;
    let tracking = TrackingCostMatrices::new(b.q_lqr.clone(), b.r_lqr.clone())?;
    let candidate_p = cp
        .candidate_p
        .clone()
        .ok_or_else(|| Error::ConfigMismatch("checkpoint holds no candidate".into()))?;
    let basis = cfg.basis.build(b.system.state_dim());
    let candidate = CandidateCLF::new(basis, candidate_p, -cfg.basis.p_bound, cfg.basis.p_bound)?;
    let policy = SwitchingPolicy {
        t_min: cfg.t_min,
        gamma: cfg.gamma,
        eps0: cfg.eps0,
        first_admissible_only: true,
    };
    policy.validate(cfg.h)?;
    let mut db = DemoDatabase::new(b.system.clone(), tracking.clone(), 2, cfg.suffix_expansion);
    for demo in &cp.demos {
        db.add_demonstration(demo.clone())?;
    }
    let eq_lqr = equilibrium_lqr(&b.system, &tracking, cfg.h)?;
    Ok(SwitchingController {
        db,
        rule: AssignmentRule {
            prefilter_k: cfg.prefilter_k,
        },
        policy,
        candidate,
        eq_lqr,
        region,
        h: cfg.h,
        handoff_step_cap: cfg.handoff_step_cap,
    })
}

/// Continues a checkpointed run to completion.
pub fn resume(checkpoint: Checkpoint) -> Result<SynthesisRun> {
    let cfg = checkpoint.config.clone();
    synthesize_with(&cfg, Some(checkpoint), |_| {}, |_| {})
}

/// Full-control entry point: optional resume state, a checkpoint observer
/// (called at batch boundaries) and a falsifier record sink.
pub fn synthesize_with(
    cfg: &SynthesisConfig,
    resume_from: Option<Checkpoint>,
    on_checkpoint: impl FnMut(&Checkpoint),
    on_record: impl FnMut(&SampleRecord),
) -> Result<SynthesisRun> {
    cfg.validate()?;
    let b = benchmarks::benchmark(&cfg.benchmark)?;
    let mut region = b.region.clone();
    region.eps0 = cfg.eps0;
    region.validate()?;
    let tracking = TrackingCostMatrices::new(b.q_lqr.clone(), b.r_lqr.clone())?;
    Synthesizer::new(cfg, b.system, b.cost, region, tracking)?
        .run(resume_from, on_checkpoint, on_record)
}

/// Same loop on a caller-supplied system (used by tests and custom setups).
pub fn synthesize_system(
    cfg: &SynthesisConfig,
    sys: ControlSystem,
    cost: CostSpec,
    region: Region,
    tracking: TrackingCostMatrices,
) -> Result<SynthesisRun> {
    cfg.validate()?;
    Synthesizer::new(cfg, sys, cost, region, tracking)?.run(None, |_| {}, |_| {})
}

struct Synthesizer<'a> {
    cfg: &'a SynthesisConfig,
    sys: ControlSystem,
    cost: CostSpec,
    region: Region,
    basis: PolynomialBasis,
    controller: SwitchingController,
    store: InequalityStore,
    candidate: Option<CandidateCLF>,
    sample_index: u64,
    streak: u64,
    pos_cex: u64,
    dec_cex: u64,
    relearns: u64,
    dec_samples: u64,
    timings: TimingBreakdown,
}

enum Stop {
    Outcome(Outcome, Option<String>),
}

impl<'a> Synthesizer<'a> {
    fn new(
        cfg: &'a SynthesisConfig,
        sys: ControlSystem,
        cost: CostSpec,
        region: Region,
        tracking: TrackingCostMatrices,
    ) -> Result<Self> {
        let basis = cfg.basis.build(sys.state_dim());
        let policy = SwitchingPolicy {
            t_min: cfg.t_min,
            gamma: cfg.gamma,
            eps0: cfg.eps0,
            first_admissible_only: true,
        };
        policy.validate(cfg.h)?;
        let db = DemoDatabase::new(sys.clone(), tracking.clone(), 2, cfg.suffix_expansion);
        let eq_lqr = equilibrium_lqr(&sys, &tracking, cfg.h)?;
        // Placeholder candidate; replaced before any probe runs.
        let zero = CandidateCLF::new(
            basis.clone(),
            vec![0.0; basis.dim()],
            -cfg.basis.p_bound,
            cfg.basis.p_bound,
        )?;
        let controller = SwitchingController {
            db,
            rule: AssignmentRule {
                prefilter_k: cfg.prefilter_k,
            },
            policy,
            candidate: zero,
            eq_lqr,
            region: region.clone(),
            h: cfg.h,
            handoff_step_cap: cfg.handoff_step_cap,
        };
        Ok(Self {
            cfg,
            sys,
            cost,
            region,
            basis,
            controller,
            store: InequalityStore::new(),
            candidate: None,
            sample_index: 0,
            streak: 0,
            pos_cex: 0,
            dec_cex: 0,
            relearns: 0,
            dec_samples: 0,
            timings: TimingBreakdown::default(),
        })
    }

    fn run(
        mut self,
        resume_from: Option<Checkpoint>,
        mut on_checkpoint: impl FnMut(&Checkpoint),
        mut on_record: impl FnMut(&SampleRecord),
    ) -> Result<SynthesisRun> {
        let t_total = Instant::now();

        if let Some(cp) = resume_from {
            if cp.config_hash != self.cfg.config_hash() {
                return Err(Error::ConfigMismatch(
                    "checkpoint was produced by a different configuration".into(),
                ));
            }
            for demo in cp.demos {
                self.controller.db.add_demonstration(demo)?;
            }
            self.store.restore_rows(cp.rows);
            if let Some(p) = cp.candidate_p {
                let cand = CandidateCLF::new(
                    self.basis.clone(),
                    p,
                    -self.cfg.basis.p_bound,
                    self.cfg.basis.p_bound,
                )?;
                self.controller.candidate = cand.clone();
                self.candidate = Some(cand);
            }
            self.sample_index = cp.sample_index;
            self.streak = cp.streak;
            self.pos_cex = cp.positivity_counterexamples;
            self.dec_cex = cp.decrease_counterexamples;
            self.relearns = cp.relearns;
            self.dec_samples = cp.decrease_falsifier_samples;
        } else {
            if let Some(stop) = self.bootstrap()? {
                return self.finish(stop, t_total);
            }
        }

        // Main loop: decrease falsification, demonstration growth, relearn.
        let budget = SamplingBudget {
            acceptance_threshold: self.cfg.accept_n,
            max_total: self.cfg.max_total_samples,
            rng_seed: self.cfg.rng_seed,
        };
        loop {
            let t0 = Instant::now();
            let outcome = falsify_decrease(
                &self.controller,
                &budget,
                self.sample_index,
                self.streak,
                self.cfg.workers,
                &mut on_record,
            )?;
            self.timings.falsifier_decrease_s += t0.elapsed().as_secs_f64();
            match outcome {
                DecreaseOutcome::Accepted {
                    samples_consumed,
                    last_streak,
                } => {
                    self.dec_samples += samples_consumed;
                    self.sample_index += samples_consumed;
                    self.streak = last_streak;
                    log::info!(
                        "accepted after {} failure-free samples ({} total)",
                        last_streak,
                        self.dec_samples
                    );
                    if let Some(stop) = self.oversample()? {
                        return self.finish(stop, t_total);
                    }
                    return self.finish(Stop::Outcome(Outcome::Accepted, None), t_total);
                }
                DecreaseOutcome::BudgetExhausted {
                    samples_consumed,
                    streak,
                } => {
                    self.dec_samples += samples_consumed;
                    self.sample_index += samples_consumed;
                    self.streak = streak;
                    return self.finish(
                        Stop::Outcome(
                            Outcome::BudgetExhausted,
                            Some("decrease-falsifier sample budget exhausted".into()),
                        ),
                        t_total,
                    );
                }
                DecreaseOutcome::Counterexample {
                    x0,
                    sample_index,
                    samples_consumed,
                } => {
                    self.dec_samples += samples_consumed;
                    self.sample_index = sample_index + 1;
                    self.streak = 0;
                    self.dec_cex += 1;
                    log::info!(
                        "decrease counterexample #{} at sample {} ({:?})",
                        self.dec_cex,
                        sample_index,
                        x0.as_slice()
                    );
                    if self.controller.db.len() >= self.cfg.max_demonstrations {
                        return self.finish(
                            Stop::Outcome(
                                Outcome::BudgetExhausted,
                                Some("demonstration budget exhausted".into()),
                            ),
                            t_total,
                        );
                    }
                    match self.add_demo_from(&x0)? {
                        Some(stop) => return self.finish(stop, t_total),
                        None => {}
                    }
                    on_checkpoint(&self.checkpoint());
                }
            }
        }
    }

    /// Seeds the database and produces the first positive compatible
    /// candidate (or installs the supplied one).
    fn bootstrap(&mut self) -> Result<Option<Stop>> {
        if self.cfg.seed_demos {
            let n = self.sys.state_dim();
            let lo = self.region.d.lo().to_vec();
            let hi = self.region.d.hi().to_vec();
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut x0 = DVector::zeros(n);
                    let half = 0.5 * if sign > 0.0 { hi[i] } else { -lo[i] };
                    x0[i] = sign * half;
                    if self.region.in_h0(&x0) {
                        continue;
                    }
                    match self.demonstrate_at(&x0)? {
                        Ok(demo) => {
                            self.controller.db.add_demonstration(demo)?;
                        }
                        Err(reason) => {
                            return Ok(Some(Stop::Outcome(
                                Outcome::DemonstrationFailed,
                                Some(reason),
                            )))
                        }
                    }
                }
            }
        }
        match self.cfg.mode {
            Mode::KnownClf => {
                let cand = self.cfg.known_clf.clone().expect("validated");
                if cand.basis.state_dim() != self.sys.state_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.sys.state_dim(),
                        got: cand.basis.state_dim(),
                    });
                }
                for entry in self.controller.db.entries() {
                    if !is_discretely_compatible(&cand, &entry.demo) {
                        return Err(Error::NotCompatible);
                    }
                }
                self.controller.candidate = cand.clone();
                self.candidate = Some(cand);
                Ok(None)
            }
            Mode::LearnClf => self.learn_phase(),
        }
    }

    fn demonstrate_at(
        &mut self,
        x0: &DVector<f64>,
    ) -> Result<std::result::Result<DiscreteDemonstration, String>> {
        let t0 = Instant::now();
        let result = demonstrate(
            &self.sys,
            &self.cost,
            &self.region,
            x0,
            &self.cfg.demonstrator_config(),
            self.cfg.h,
        );
        self.timings.demonstrator_s += t0.elapsed().as_secs_f64();
        match result {
            Ok(demo) => Ok(Ok(demo)),
            Err(Error::DemonstrationFailed { x0, reason }) => {
                Ok(Err(format!("demonstration from {x0:?} failed: {reason}")))
            }
            Err(e) => Err(e),
        }
    }

    /// Demonstrates from a counterexample and restores candidate
    /// compatibility (learning mode) or checks it (known-CLF mode).
    fn add_demo_from(&mut self, x0: &DVector<f64>) -> Result<Option<Stop>> {
        let demo = match self.demonstrate_at(x0)? {
            Ok(d) => d,
            Err(reason) => {
                return Ok(Some(Stop::Outcome(
                    Outcome::DemonstrationFailed,
                    Some(reason),
                )))
            }
        };
        match self.cfg.mode {
            Mode::KnownClf => {
                let cand = self.candidate.as_ref().expect("candidate installed");
                if !is_discretely_compatible(cand, &demo) {
                    return Err(Error::NotCompatible);
                }
                self.controller.db.add_demonstration(demo)?;
                Ok(None)
            }
            Mode::LearnClf => {
                self.controller.db.add_demonstration(demo)?;
                self.learn_phase()
            }
        }
    }

    /// Loop (A) of the synthesis algorithm: make the candidate compatible
    /// with every stored demonstration, then positive on `D \ H^ε0`,
    /// relearning from the Chebyshev center after every added constraint.
    fn learn_phase(&mut self) -> Result<Option<Stop>> {
        if self.candidate.is_none() {
            if let Some(stop) = self.relearn()? {
                return Ok(Some(stop));
            }
        }
        loop {
            if let Some(stop) = self.ensure_compatible()? {
                return Ok(Some(stop));
            }
            let t0 = Instant::now();
            let de = DEConfig {
                population: self.cfg.de.population,
                f_weight: self.cfg.de.f_weight,
                crossover: self.cfg.de.crossover,
                generations: self.cfg.de.generations,
                restarts: self.cfg.de.restarts,
                rng_seed: self.cfg.rng_seed ^ 0xD1FF_0000 ^ self.pos_cex,
            };
            let found = falsify_positivity(
                self.candidate.as_ref().expect("candidate exists"),
                &self.region,
                &de,
            );
            self.timings.falsifier_positivity_s += t0.elapsed().as_secs_f64();
            match found {
                None => return Ok(None),
                Some(x_c) => {
                    self.pos_cex += 1;
                    log::info!(
                        "positivity counterexample #{} at {:?}",
                        self.pos_cex,
                        x_c.as_slice()
                    );
                    self.store
                        .add_positivity_counterexample(&self.basis, &x_c, &self.region)?;
                    if let Some(stop) = self.relearn()? {
                        return Ok(Some(stop));
                    }
                }
            }
        }
    }

    /// Adds every stored-demonstration row the current candidate violates
    /// (or satisfies only thinly) and relearns until a pass adds nothing.
    fn ensure_compatible(&mut self) -> Result<Option<Stop>> {
        loop {
            let mut added = 0;
            {
                let cand = self.candidate.as_ref();
                for entry in self.controller.db.entries() {
                    added += self.store.add_compatibility_constraints(
                        &self.basis,
                        &entry.demo,
                        cand.map(|c| c as _),
                    );
                }
            }
            if added == 0 {
                return Ok(None);
            }
            if let Some(stop) = self.relearn()? {
                return Ok(Some(stop));
            }
        }
    }

    fn relearn(&mut self) -> Result<Option<Stop>> {
        if self.relearns >= self.cfg.relearn_cap {
            return Ok(Some(Stop::Outcome(
                Outcome::LearnerInfeasible,
                Some("relearn cap reached".into()),
            )));
        }
        self.relearns += 1;
        let t0 = Instant::now();
        let outcome = chebyshev_center(
            &self.store,
            &self.basis,
            -self.cfg.basis.p_bound,
            self.cfg.basis.p_bound,
        )?;
        self.timings.learner_s += t0.elapsed().as_secs_f64();
        match outcome {
            ChebyshevOutcome::Center(cand, _radius) => {
                self.controller.candidate = cand.clone();
                self.candidate = Some(cand);
                Ok(None)
            }
            ChebyshevOutcome::Infeasible => Ok(Some(Stop::Outcome(
                Outcome::LearnerInfeasible,
                Some("empty candidate polyhedron".into()),
            ))),
        }
    }

    /// Optional post-acceptance densification: keep demonstrating from the
    /// sample stream for a fixed number of extra samples.
    fn oversample(&mut self) -> Result<Option<Stop>> {
        let Some(extra) = self.cfg.performance_oversampling else {
            return Ok(None);
        };
        use rand::SeedableRng;
        for _ in 0..extra {
            if self.controller.db.len() >= self.cfg.max_demonstrations {
                break;
            }
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(self.cfg.rng_seed ^ self.sample_index);
            let x0 = crate::falsifier::sample_outside_h0(&self.region, &mut rng);
            self.sample_index += 1;
            if let Some(stop) = self.add_demo_from(&x0)? {
                return Ok(Some(stop));
            }
        }
        Ok(None)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: 1,
            config_hash: self.cfg.config_hash(),
            config: self.cfg.clone(),
            demos: self
                .controller
                .db
                .entries()
                .iter()
                .map(|e| (*e.demo).clone())
                .collect(),
            rows: self.store.rows().to_vec(),
            candidate_p: self.candidate.as_ref().map(|c| c.p.clone()),
            sample_index: self.sample_index,
            streak: self.streak,
            positivity_counterexamples: self.pos_cex,
            decrease_counterexamples: self.dec_cex,
            relearns: self.relearns,
            decrease_falsifier_samples: self.dec_samples,
        }
    }

    fn finish(mut self, stop: Stop, t_total: Instant) -> Result<SynthesisRun> {
        let Stop::Outcome(outcome, detail) = stop;
        self.timings.total_s = t_total.elapsed().as_secs_f64();
        let demonstration_states = self
            .controller
            .db
            .entries()
            .iter()
            .map(|e| e.demo.len())
            .sum();
        let report = SynthesisReport {
            outcome,
            benchmark: self.cfg.benchmark.clone(),
            rng_seed: self.cfg.rng_seed,
            mode: self.cfg.mode,
            accept_n: self.cfg.accept_n,
            candidate_coefficients: self.candidate.as_ref().map(|c| c.p.clone()),
            basis_dimension: self.basis.dim(),
            demonstrations: self.controller.db.len(),
            demonstration_states,
            inequalities: self.store.len(),
            positivity_counterexamples: self.pos_cex,
            decrease_counterexamples: self.dec_cex,
            relearns: self.relearns,
            decrease_falsifier_samples: self.dec_samples,
            final_streak: self.streak,
            failure_detail: detail,
            timings: self.timings,
        };
        let ok = outcome == Outcome::Accepted;
        Ok(SynthesisRun {
            report,
            candidate: if ok { self.candidate.clone() } else { self.candidate.take() },
            controller: if ok || self.candidate.is_some() {
                Some(self.controller)
            } else {
                None
            },
        })
    }
}

/// Learner-only loop used for baseline Lyapunov functions: seed
/// demonstrations on the given region, then alternate compatibility
/// relearning with positivity falsification until no counterexample is
/// found.
pub fn learn_clf_only(
    sys: &ControlSystem,
    cost: &CostSpec,
    region: &Region,
    basis: &PolynomialBasis,
    p_bound: f64,
    demonstrator_cfg: &DemonstratorConfig,
    h: f64,
    de: &DEConfig,
    relearn_cap: u64,
) -> Result<CandidateCLF> {
    let mut store = InequalityStore::new();
    let mut demos: Vec<Arc<DiscreteDemonstration>> = Vec::new();
    let n = sys.state_dim();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut x0 = DVector::zeros(n);
            let half = 0.5
                * if sign > 0.0 {
                    region.d.hi()[i]
                } else {
                    -region.d.lo()[i]
                };
            x0[i] = sign * half;
            if region.in_h0(&x0) {
                continue;
            }
            demos.push(Arc::new(demonstrate(sys, cost, region, &x0, demonstrator_cfg, h)?));
        }
    }
    let mut candidate: Option<CandidateCLF> = None;
    let mut relearns = 0u64;
    let mut pos_counter = 0u64;
    loop {
        let mut added = 0;
        for demo in &demos {
            added += store.add_compatibility_constraints(basis, demo, candidate.as_ref());
        }
        let need_relearn = added > 0 || candidate.is_none();
        if need_relearn {
            relearns += 1;
            if relearns > relearn_cap {
                return Err(Error::LpSolverFailure("relearn cap reached".into()));
            }
            match chebyshev_center(&store, basis, -p_bound, p_bound)? {
                ChebyshevOutcome::Center(c, _) => candidate = Some(c),
                ChebyshevOutcome::Infeasible => {
                    return Err(Error::NotCompatible);
                }
            }
            continue;
        }
        let cand = candidate.as_ref().expect("candidate learned");
        let de_seeded = DEConfig {
            rng_seed: de.rng_seed ^ 0xBA5E ^ pos_counter,
            ..*de
        };
        match falsify_positivity(cand, region, &de_seeded) {
            None => return Ok(cand.clone()),
            Some(x_c) => {
                pos_counter += 1;
                store.add_positivity_counterexample(basis, &x_c, region)?;
                relearns += 1;
                if relearns > relearn_cap {
                    return Err(Error::LpSolverFailure("relearn cap reached".into()));
                }
                match chebyshev_center(&store, basis, -p_bound, p_bound)? {
                    ChebyshevOutcome::Center(c, _) => candidate = Some(c),
                    ChebyshevOutcome::Infeasible => return Err(Error::NotCompatible),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AxisBox;
    use nalgebra::DMatrix;

    fn integrator2() -> (ControlSystem, CostSpec, Region) {
        let sys = ControlSystem::new(
            "integrator2",
            2,
            2,
            |_x, u| DVector::from_row_slice(&[u[0], u[1]]),
            |_x, _u| DMatrix::zeros(2, 2),
            |_x, _u| DMatrix::identity(2, 2),
        );
        let region = Region::new(
            AxisBox::symmetric(2, 2.0),
            AxisBox::symmetric(2, 4.0),
            AxisBox::symmetric(2, 100.0),
            0.05,
        )
        .unwrap();
        (sys, CostSpec::identity(2, 2), region)
    }

    fn integrator_config(accept_n: u64, seed: u64) -> SynthesisConfig {
        SynthesisConfig {
            benchmark: "custom_integrator2".into(),
            h: 0.1,
            t_horizon: 6.0,
            t_min: 0.3,
            gamma: 0.01,
            eps0: 0.05,
            basis: BasisSpec {
                degree: 2,
                even_powers_only: true,
                include_linear: false,
                p_bound: 10.0,
            },
            accept_n,
            max_total_samples: accept_n * 50,
            max_demonstrations: 60,
            rng_seed: seed,
            mode: Mode::LearnClf,
            known_clf: None,
            performance_oversampling: None,
            relearn_cap: 500,
            suffix_expansion: true,
            seed_demos: true,
            prefilter_k: 100,
            workers: 1,
            handoff_step_cap: 20_000,
            demonstrator: DemonstratorTuning::default(),
            de: DETuning {
                generations: 60,
                ..DETuning::default()
            },
        }
    }

    fn run_integrator(cfg: &SynthesisConfig) -> SynthesisRun {
        let (sys, cost, region) = integrator2();
        synthesize_system(
            cfg,
            sys,
            cost,
            region,
            TrackingCostMatrices::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn integrator_synthesis_accepts() {
        let cfg = integrator_config(300, 7);
        let run = run_integrator(&cfg);
        assert_eq!(run.report.outcome, Outcome::Accepted);
        assert!(run.report.demonstrations >= 1);
        assert!(run.controller.is_some());
        let cand = run.candidate.unwrap();
        // The accepted candidate is compatible with every stored demo.
        let ctrl = run.controller.unwrap();
        for entry in ctrl.db.entries() {
            assert!(is_discretely_compatible(&cand, &entry.demo));
        }
        assert!(run.report.relearns <= cfg.relearn_cap);
    }

    #[test]
    fn known_clf_mode_accepts_with_zero_relearns() {
        let mut cfg = integrator_config(200, 3);
        cfg.mode = Mode::KnownClf;
        let basis = cfg.basis.build(2);
        let mut p = vec![0.0; basis.dim()];
        for (k, e) in basis.exponents().iter().enumerate() {
            if *e == vec![2, 0] || *e == vec![0, 2] {
                p[k] = 1.0;
            }
        }
        cfg.known_clf = Some(CandidateCLF::new(basis, p, -10.0, 10.0).unwrap());
        let run = run_integrator(&cfg);
        assert_eq!(run.report.outcome, Outcome::Accepted);
        assert_eq!(run.report.relearns, 0);
        assert_eq!(run.report.inequalities, 0);
    }

    #[test]
    fn identical_seeds_give_identical_reports() {
        let cfg = integrator_config(250, 11);
        let a = run_integrator(&cfg).report.to_json();
        let b = run_integrator(&cfg).report.to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut cfg = integrator_config(1_000, 5);
        cfg.max_total_samples = 3;
        let run = run_integrator(&cfg);
        assert_eq!(run.report.outcome, Outcome::BudgetExhausted);
    }

    #[test]
    fn checkpoint_roundtrip_and_mismatch() {
        let cfg = integrator_config(300, 7);
        let (sys, cost, region) = integrator2();
        let mut checkpoints: Vec<Checkpoint> = Vec::new();
        let baseline = {
            let (sys, cost, region) = integrator2();
            Synthesizer::new(
                &cfg,
                sys,
                cost,
                region,
                TrackingCostMatrices::identity(2, 2),
            )
            .unwrap()
            .run(None, |cp| checkpoints.push(cp.clone()), |_| {})
            .unwrap()
            .report
            .to_json()
        };
        if let Some(cp) = checkpoints.first() {
            // JSON round trip preserves the state bit-for-bit.
            let cp = Checkpoint::from_json(&cp.to_json()).unwrap();
            let resumed = Synthesizer::new(
                &cfg,
                sys,
                cost,
                region,
                TrackingCostMatrices::identity(2, 2),
            )
            .unwrap()
            .run(Some(cp), |_| {}, |_| {})
            .unwrap();
            assert_eq!(resumed.report.to_json(), baseline);
        }

        // A checkpoint from a different gamma is rejected.
        let mut other = cfg.clone();
        other.gamma = 0.02;
        let cp = checkpoints.pop().expect("run produced checkpoints");
        let (sys, cost, region) = integrator2();
        let err = Synthesizer::new(
            &other,
            sys,
            cost,
            region,
            TrackingCostMatrices::identity(2, 2),
        )
        .unwrap()
        .run(Some(cp), |_| {}, |_| {});
        assert!(matches!(err, Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn corrupted_checkpoint_is_rejected() {
        assert!(Checkpoint::from_json("{not json").is_err());
        let cfg = integrator_config(10, 1);
        let bogus = Checkpoint {
            version: 1,
            config_hash: "deadbeef".into(),
            config: cfg,
            demos: vec![],
            rows: vec![],
            candidate_p: None,
            sample_index: 0,
            streak: 0,
            positivity_counterexamples: 0,
            decrease_counterexamples: 0,
            relearns: 0,
            decrease_falsifier_samples: 0,
        };
        assert!(matches!(
            Checkpoint::from_json(&bogus.to_json()),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn config_validation_errors() {
        let mut cfg = integrator_config(10, 1);
        cfg.gamma = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = integrator_config(10, 1);
        cfg.t_min = 0.25; // not a multiple of h = 0.1
        assert!(cfg.validate().is_err());
        let mut cfg = integrator_config(10, 1);
        cfg.mode = Mode::KnownClf;
        assert!(cfg.validate().is_err());
    }
}
