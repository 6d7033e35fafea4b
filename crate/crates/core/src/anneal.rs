//! Simulated annealing over quantized deductron parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder::{Emission, WindowSeq};
use crate::error::{Error, Result};
use crate::network::{
    forward, Activation, DeductronParams, Evaluator, Mode, Shape, QUANTIZED_BIASES, QUANTIZED_WEIGHTS,
};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AcceptRule {
    /// Worse states pass with probability `exp(-max(beta, 1) * delta)`.
    #[default]
    Metropolis,
    Greedy,
}

impl AcceptRule {
    pub fn name(self) -> &'static str {
        match self {
            AcceptRule::Metropolis => "metropolis",
            AcceptRule::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealSchedule {
    pub beta_start: f64,
    pub beta_end: f64,
    pub beta_step: f64,
    /// Iterations without a new best before jumping back to the best state.
    pub stuck_limit: u64,
    pub gamma: u32,
    pub seed: u64,
    pub rule: AcceptRule,
    /// Pin every bias to the number of -1 weights in its row.
    pub tie_biases: bool,
    /// Upper bound on recorded history points.
    pub history_points: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            beta_start: 0.0,
            beta_end: 10.0,
            beta_step: 1e-5,
            stuck_limit: 20_000,
            gamma: 1,
            seed: 0,
            rule: AcceptRule::Metropolis,
            tie_biases: false,
            history_points: 1000,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.beta_start, self.beta_end, self.beta_step]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.beta_step <= 0.0 || self.beta_start < 0.0 || self.beta_start > self.beta_end {
            return Err(Error::Range(format!(
                "beta schedule {} -> {} step {}",
                self.beta_start, self.beta_end, self.beta_step
            )));
        }
        if self.gamma == 0 {
            return Err(Error::Range("gamma must be positive".into()));
        }
        Ok(())
    }

    pub fn iterations(&self) -> u64 {
        ((self.beta_end - self.beta_start) / self.beta_step).round() as u64
    }

    pub fn beta_at(&self, iteration: u64) -> f64 {
        (self.beta_start + iteration as f64 * self.beta_step).min(self.beta_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryPoint {
    pub iteration: u64,
    pub beta: f64,
    pub current_loss: f64,
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealResult {
    pub best_params: DeductronParams,
    /// Hard-threshold loss of `best_params`.
    pub best_loss: f64,
    pub iterations: u64,
    pub restarts: u64,
    pub accepted: u64,
    pub seed: u64,
    pub loss_history: Vec<HistoryPoint>,
}

pub fn random_quantized<R: Rng + ?Sized>(shape: Shape, tie_biases: bool, rng: &mut R) -> DeductronParams {
    let mut p = DeductronParams::zeros(shape.n_in, shape.n_memory, shape.n_out, Mode::Quantized);
    for i in 0..p.param_count() {
        let v = if p.slot(i).is_weight() {
            QUANTIZED_WEIGHTS[rng.gen_range(0..QUANTIZED_WEIGHTS.len())]
        } else {
            QUANTIZED_BIASES[rng.gen_range(0..QUANTIZED_BIASES.len())]
        };
        p.set(i, v);
    }
    if tie_biases {
        tie_all_biases(&mut p);
    }
    p
}

fn tied_bias(row: &[f64]) -> f64 {
    let negatives = row.iter().filter(|&&w| w == -1.0).count();
    negatives.min(QUANTIZED_BIASES.len() - 1) as f64
}

fn tie_all_biases(p: &mut DeductronParams) {
    for r in 0..p.w1.rows() {
        p.b1[r] = tied_bias(p.w1.row(r));
    }
    for r in 0..p.w2.rows() {
        p.b2[r] = tied_bias(p.w2.row(r));
    }
}

/// Changes exactly one weight or bias to a different admissible value.
pub fn propose<R: Rng + ?Sized>(params: &DeductronParams, rng: &mut R) -> DeductronParams {
    propose_with(params, false, rng)
}

/// As [`propose`]; with `tie_biases` only weights are drawn and the bias of
/// the touched row follows its count of -1 entries.
pub fn propose_with<R: Rng + ?Sized>(params: &DeductronParams, tie_biases: bool, rng: &mut R) -> DeductronParams {
    let mut next = params.clone();
    let n = params.param_count();
    let i = loop {
        let i = rng.gen_range(0..n);
        if !tie_biases || params.slot(i).is_weight() {
            break i;
        }
    };
    let domain: &[f64] = if params.slot(i).is_weight() {
        &QUANTIZED_WEIGHTS
    } else {
        &QUANTIZED_BIASES
    };
    let old = params.get(i);
    let v = loop {
        let v = domain[rng.gen_range(0..domain.len())];
        if v != old {
            break v;
        }
    };
    next.set(i, v);
    if tie_biases {
        match next.slot(i) {
            crate::network::Slot::W1(r, _) => next.b1[r] = tied_bias(next.w1.row(r)),
            crate::network::Slot::W2(r, _) => next.b2[r] = tied_bias(next.w2.row(r)),
            _ => unreachable!("only weights are proposed"),
        }
    }
    next
}

pub fn accept<R: Rng + ?Sized>(delta: f64, beta: f64, rule: AcceptRule, rng: &mut R) -> bool {
    if delta <= 0.0 {
        return true;
    }
    match rule {
        AcceptRule::Greedy => false,
        AcceptRule::Metropolis => rng.gen::<f64>() < (-beta.max(1.0) * delta).exp(),
    }
}

fn check_train(train: &WindowSeq, shape: Shape) -> Result<()> {
    if train.is_empty() {
        return Err(Error::EmptyData);
    }
    if train.n_in != shape.n_in || train.n_out != shape.n_out {
        return Err(Error::Dimension(format!(
            "data is {}->{}, network is {}->{}",
            train.n_in, train.n_out, shape.n_in, shape.n_out
        )));
    }
    Ok(())
}

/// Anneals from a seeded uniform random start.
pub fn anneal(train: &WindowSeq, shape: Shape, sched: &AnnealSchedule) -> Result<AnnealResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let init = random_quantized(shape, sched.tie_biases, &mut rng);
    anneal_with_rng(train, init, sched, &mut rng)
}

/// Anneals from `init`, which must be quantized.
pub fn anneal_from(train: &WindowSeq, init: DeductronParams, sched: &AnnealSchedule) -> Result<AnnealResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    anneal_with_rng(train, init, sched, &mut rng)
}

fn anneal_with_rng(
    train: &WindowSeq,
    init: DeductronParams,
    sched: &AnnealSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<AnnealResult> {
    sched.validate()?;
    check_train(train, init.shape())?;
    if init.mode != Mode::Quantized {
        return Err(Error::Mode {
            expected: Mode::Quantized.name(),
            got: init.mode.name(),
        });
    }
    init.check_quantized()?;

    let x = &train.inputs;
    let t = &train.targets;
    let gamma = sched.gamma;
    let mut ev = Evaluator::new();
    let iterations = sched.iterations();
    let record_every = (iterations / sched.history_points.max(1) as u64).max(1);

    let mut current = init;
    let mut best = current.clone();
    let mut best_loss = ev.loss(&best, Activation::Hard, x, t, gamma)?;
    let mut history = Vec::new();
    let mut stuck = 0u64;
    let mut restarts = 0u64;
    let mut accepted = 0u64;
    let mut current_loss: f64;

    for it in 0..iterations {
        let beta = sched.beta_at(it);
        let act = Activation::Falling { beta };
        current_loss = ev.loss(&current, act, x, t, gamma)?;
        let candidate = propose_with(&current, sched.tie_biases, rng);
        let candidate_loss = ev.loss(&candidate, act, x, t, gamma)?;
        let candidate_hard = ev.loss(&candidate, Activation::Hard, x, t, gamma)?;

        if candidate_hard < best_loss {
            best_loss = candidate_hard;
            best = candidate.clone();
            stuck = 0;
        } else {
            stuck += 1;
        }
        if accept(candidate_loss - current_loss, beta, sched.rule, rng) {
            current = candidate;
            current_loss = candidate_loss;
            accepted += 1;
        }
        if stuck >= sched.stuck_limit {
            best.check_quantized()?;
            current = best.clone();
            current_loss = ev.loss(&current, act, x, t, gamma)?;
            stuck = 0;
            restarts += 1;
        }
        if it % record_every == 0 || it + 1 == iterations {
            history.push(HistoryPoint {
                iteration: it,
                beta,
                current_loss,
                best_loss,
            });
        }
    }
    if iterations == 0 {
        current_loss = ev.loss(&current, Activation::Falling { beta: sched.beta_start }, x, t, gamma)?;
        history.push(HistoryPoint {
            iteration: 0,
            beta: sched.beta_start,
            current_loss,
            best_loss,
        });
    }

    Ok(AnnealResult {
        best_params: best,
        best_loss,
        iterations,
        restarts,
        accepted,
        seed: sched.seed,
        loss_history: history,
    })
}

/// Independent runs with seeds `sched.seed + k`, spread over worker threads.
pub fn anneal_runs(train: &WindowSeq, shape: Shape, sched: &AnnealSchedule, runs: usize) -> Vec<Result<AnnealResult>> {
    par::run_indexed(runs, par::worker_threads(), |k| {
        let s = AnnealSchedule {
            seed: sched.seed.wrapping_add(k as u64),
            ..sched.clone()
        };
        anneal(train, shape, &s)
    })
}

/// The run with the lowest best loss; ties go to the earliest.
pub fn best_run(results: &[AnnealResult]) -> Option<&AnnealResult> {
    results
        .iter()
        .reduce(|a, b| if b.best_loss < a.best_loss { b } else { a })
}

/// Output-bit confusion counts for one output unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accuracy {
    pub correct_bits: usize,
    pub total_bits: usize,
    pub correct_frames: usize,
    pub total_frames: usize,
    pub confusion: Vec<Confusion>,
    pub emitted: String,
    pub expected: String,
}

impl Accuracy {
    pub fn bit_accuracy(&self) -> f64 {
        self.correct_bits as f64 / self.total_bits as f64
    }

    pub fn frame_accuracy(&self) -> f64 {
        self.correct_frames as f64 / self.total_frames as f64
    }

    pub fn strings_match(&self) -> bool {
        self.emitted == self.expected
    }
}

/// Thresholds outputs at 0.5 and compares them with the targets.
pub fn evaluate_accuracy(params: &DeductronParams, act: Activation, data: &WindowSeq) -> Result<Accuracy> {
    let trace = forward(params, act, &data.inputs)?;
    if data.n_out != params.n_out {
        return Err(Error::Dimension(format!(
            "data has {} outputs, network has {}",
            data.n_out, params.n_out
        )));
    }
    let mut acc = Accuracy {
        correct_bits: 0,
        total_bits: 0,
        correct_frames: 0,
        total_frames: data.len(),
        confusion: vec![Confusion::default(); params.n_out],
        emitted: String::new(),
        expected: data.target_string(),
    };
    for (out, target) in trace.binary_outputs().iter().zip(&data.targets) {
        let mut frame_ok = true;
        for (k, (&o, &t)) in out.iter().zip(target).enumerate() {
            let t = t >= 0.5;
            let c = &mut acc.confusion[k];
            match (o, t) {
                (true, true) => c.true_pos += 1,
                (true, false) => c.false_pos += 1,
                (false, false) => c.true_neg += 1,
                (false, true) => c.false_neg += 1,
            }
            acc.total_bits += 1;
            if o == t {
                acc.correct_bits += 1;
            } else {
                frame_ok = false;
            }
        }
        if frame_ok {
            acc.correct_frames += 1;
        }
        let emission = Emission {
            x: out.first().copied().unwrap_or(false),
            o: out.get(1).copied().unwrap_or(false),
        };
        acc.emitted.extend(emission.symbol());
    }
    Ok(acc)
}
