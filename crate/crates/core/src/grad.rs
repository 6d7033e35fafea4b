//! Backpropagation through time for continuous deductrons, and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anneal::{evaluate_accuracy, Accuracy};
use crate::decoder::WindowSeq;
use crate::error::{Error, Result};
use crate::network::{forward, Activation, DeductronParams, Matrix, Mode, Shape};

/// Partial derivatives of the squared-error loss, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub dw1: Matrix,
    pub db1: Vec<f64>,
    pub dw2: Matrix,
    pub db2: Vec<f64>,
    pub loss: f64,
}

impl GradientSet {
    fn zeros(p: &DeductronParams) -> Self {
        GradientSet {
            dw1: Matrix::zeros(2 * p.n_memory, p.n_in),
            db1: vec![0.0; 2 * p.n_memory],
            dw2: Matrix::zeros(p.n_out, p.n_memory),
            db2: vec![0.0; p.n_out],
            loss: 0.0,
        }
    }

    /// Same order as [`DeductronParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v =
            Vec::with_capacity(self.dw1.as_slice().len() + self.db1.len() + self.dw2.as_slice().len() + self.db2.len());
        v.extend_from_slice(self.dw1.as_slice());
        v.extend_from_slice(&self.db1);
        v.extend_from_slice(self.dw2.as_slice());
        v.extend_from_slice(&self.db2);
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn require_continuous(p: &DeductronParams) -> Result<()> {
    if p.mode != Mode::Continuous {
        return Err(Error::Mode {
            expected: Mode::Continuous.name(),
            got: p.mode.name(),
        });
    }
    Ok(())
}

/// Gradient of `sum_t sum_i (t - o)^2` with the rising-sigmoid forward pass.
pub fn backward<X: AsRef<[f64]>, T: AsRef<[f64]>>(
    params: &DeductronParams,
    x: &[X],
    targets: &[T],
) -> Result<GradientSet> {
    backward_weighted(params, x, targets, None)
}

/// As [`backward`], with frame `t` contributing `weights[t] * sum_i (t - o)^2`.
pub fn backward_weighted<X: AsRef<[f64]>, T: AsRef<[f64]>>(
    params: &DeductronParams,
    x: &[X],
    targets: &[T],
    weights: Option<&[f64]>,
) -> Result<GradientSet> {
    require_continuous(params)?;
    let trace = forward(params, Activation::Rising, x)?;
    let n = trace.n_frames();
    if targets.len() != n {
        return Err(Error::Dimension(format!("{} targets for {n} frames", targets.len())));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Dimension(format!("{} frame weights for {n} frames", w.len())));
        }
    }
    let m = params.n_memory;
    let n_in = params.n_in;
    let mut g = GradientSet::zeros(params);

    // Output layer, and the direct loss gradient on each z_t.
    let mut dz_direct = vec![vec![0.0; m]; n];
    for t in 0..n {
        let tt = targets[t].as_ref();
        if tt.len() != params.n_out {
            return Err(Error::Dimension(format!("target length {}", tt.len())));
        }
        let w = weights.map_or(1.0, |w| w[t]);
        let z = &trace.z[t];
        for (i, (&o, &target)) in trace.o[t].iter().zip(tt).enumerate() {
            g.loss += w * (o - target) * (o - target);
            let da = -2.0 * w * (o - target) * o * (1.0 - o);
            g.db2[i] += da;
            let row = &mut g.dw2.as_mut_slice()[i * m..(i + 1) * m];
            for k in 0..m {
                row[k] += da * z[k];
                dz_direct[t][k] += da * params.w2.get(i, k);
            }
        }
    }

    // Memory recurrence, newest frame first.
    let mut carry = vec![0.0; m];
    let mut da1 = vec![0.0; 2 * m];
    let zero = vec![0.0; m];
    for t in (0..n).rev() {
        if !params.memory_start.gates(t) {
            continue;
        }
        let z_prev = if t == 0 { &zero } else { &trace.z[t - 1] };
        let u = trace.u(t);
        let v = trace.v(t);
        let h = &trace.h[t];
        for k in 0..m {
            let dz = dz_direct[t][k] + carry[k];
            let du = dz * (1.0 - (1.0 - v[k]) * z_prev[k]);
            let dv = -dz * (1.0 - u[k]) * z_prev[k];
            carry[k] = dz * (1.0 - u[k]) * (1.0 - v[k]);
            da1[k] = du * h[k] * (1.0 - h[k]);
            da1[m + k] = dv * h[m + k] * (1.0 - h[m + k]);
        }
        let xt = x[t].as_ref();
        let dw1 = g.dw1.as_mut_slice();
        for (r, &d) in da1.iter().enumerate() {
            g.db1[r] += d;
            let row = &mut dw1[r * n_in..(r + 1) * n_in];
            for (w, &xv) in row.iter_mut().zip(xt) {
                *w += d * xv;
            }
        }
    }
    Ok(g)
}

/// Central differences of the squared-error loss, in flat parameter order.
pub fn numeric_gradient<X: AsRef<[f64]>, T: AsRef<[f64]>>(
    params: &DeductronParams,
    x: &[X],
    targets: &[T],
    step: f64,
) -> Result<Vec<f64>> {
    require_continuous(params)?;
    let mut p = params.clone();
    let mut out = Vec::with_capacity(p.param_count());
    let eval =
        |p: &DeductronParams| -> Result<f64> { crate::network::loss(&forward(p, Activation::Rising, x)?, targets, 2) };
    for i in 0..p.param_count() {
        let orig = p.get(i);
        p.set(i, orig + step);
        let plus = eval(&p)?;
        p.set(i, orig - step);
        let minus = eval(&p)?;
        p.set(i, orig);
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize, alpha: f64) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` along `grads`.
pub fn adam_step(state: &mut AdamState, params: &mut DeductronParams, grads: &[f64]) -> Result<()> {
    let n = params.param_count();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Dimension(format!(
            "{} parameters, {} gradients, {} moments",
            n,
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let mut flat = params.to_flat();
    for (i, (&g, w)) in grads.iter().zip(flat.iter_mut()).enumerate() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        *w -= state.alpha * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    params.set_flat(&flat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Initial parameters are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Rescale the gradient to at most this Euclidean norm.
    pub clip: Option<f64>,
    /// Stop once every thresholded output matches its target.
    pub stop_when_perfect: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 1000,
            seed: 0,
            init_scale: 1.0,
            clip: None,
            stop_when_perfect: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdResult {
    pub params: DeductronParams,
    /// Loss before the update of each epoch, then the final loss.
    pub losses: Vec<f64>,
    pub epochs_run: usize,
    pub accuracy: Accuracy,
}

pub fn random_continuous<R: Rng + ?Sized>(shape: Shape, scale: f64, rng: &mut R) -> DeductronParams {
    let mut p = DeductronParams::zeros(shape.n_in, shape.n_memory, shape.n_out, Mode::Continuous);
    for i in 0..p.param_count() {
        p.set(
            i,
            if scale > 0.0 {
                rng.gen_range(-scale..=scale)
            } else {
                0.0
            },
        );
    }
    p
}

/// Full-batch Adam from a seeded random start.
pub fn train_sgd(train: &WindowSeq, shape: Shape, cfg: &SgdConfig) -> Result<SgdResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = random_continuous(shape, cfg.init_scale, &mut rng);
    train_sgd_from(train, init, cfg)
}

/// Full-batch Adam from `init`, which must be continuous.
pub fn train_sgd_from(train: &WindowSeq, init: DeductronParams, cfg: &SgdConfig) -> Result<SgdResult> {
    require_continuous(&init)?;
    if train.is_empty() {
        return Err(Error::EmptyData);
    }
    if train.n_in != init.n_in || train.n_out != init.n_out {
        return Err(Error::Dimension(format!(
            "data is {}->{}, network is {}->{}",
            train.n_in, train.n_out, init.n_in, init.n_out
        )));
    }
    let mut params = init;
    let mut adam = AdamState {
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        epsilon: cfg.epsilon,
        ..AdamState::new(params.param_count(), cfg.alpha)
    };
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        let g = backward(&params, &train.inputs, &train.targets)?;
        if !g.loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: g.loss });
        }
        losses.push(g.loss);
        if cfg.stop_when_perfect && evaluate_accuracy(&params, Activation::Rising, train)?.frame_accuracy() == 1.0 {
            break;
        }
        let mut flat = g.to_flat();
        if let Some(limit) = cfg.clip {
            let norm = g.norm();
            if norm > limit && norm > 0.0 {
                flat.iter_mut().for_each(|v| *v *= limit / norm);
            }
        }
        adam_step(&mut adam, &mut params, &flat)?;
        if params.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
        epochs_run = epoch + 1;
    }
    let final_loss = crate::network::loss(&forward(&params, Activation::Rising, &train.inputs)?, &train.targets, 2)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: epochs_run,
            loss: final_loss,
        });
    }
    losses.push(final_loss);
    let accuracy = evaluate_accuracy(&params, Activation::Rising, train)?;
    Ok(SgdResult {
        params,
        losses,
        epochs_run,
        accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::decode;
    use crate::network::{handcrafted_params, quantized_to_continuous, MemoryStart};
    use crate::wlang::Image;

    fn xooxxo() -> WindowSeq {
        decode(&Image::xooxxo()).unwrap().to_window_seq()
    }

    fn max_rel_error(p: &DeductronParams, data: &WindowSeq, n: usize) -> f64 {
        let x = &data.inputs[..n];
        let t = &data.targets[..n];
        let a = backward(p, x, t).unwrap().to_flat();
        let b = numeric_gradient(p, x, t, 1e-5).unwrap();
        a.iter()
            .zip(&b)
            .map(|(a, b)| relative_error(*a, *b))
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let data = xooxxo();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for start in [MemoryStart::FirstWindow, MemoryStart::SecondWindow] {
            for _ in 0..3 {
                let mut p = random_continuous(Shape::new(6, 4, 2), 1.0, &mut rng);
                p.memory_start = start;
                for n in [1, 2, 29] {
                    let e = max_rel_error(&p, &data, n);
                    assert!(e <= 1e-4, "{start:?} n={n}: {e}");
                }
            }
        }
    }

    #[test]
    fn loss_matches_forward() {
        let data = xooxxo();
        let p = random_continuous(Shape::new(6, 3, 2), 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        let g = backward(&p, &data.inputs, &data.targets).unwrap();
        let l = crate::network::loss(
            &forward(&p, Activation::Rising, &data.inputs).unwrap(),
            &data.targets,
            2,
        )
        .unwrap();
        assert!((g.loss - l).abs() < 1e-12);
    }

    #[test]
    fn zero_readout_gives_no_input_gradient() {
        let data = xooxxo();
        let mut p = random_continuous(Shape::new(6, 4, 2), 1.0, &mut ChaCha8Rng::seed_from_u64(4));
        p.w2 = Matrix::zeros(2, 4);
        let g = backward(&p, &data.inputs[..1], &data.targets[..1]).unwrap();
        assert!(g.dw1.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.db1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raising_output_bias_lowers_output() {
        let data = xooxxo();
        let p = random_continuous(Shape::new(6, 4, 2), 1.0, &mut ChaCha8Rng::seed_from_u64(5));
        let trace = forward(&p, Activation::Rising, &data.inputs[..3]).unwrap();
        // Targets above every output: the loss falls as outputs rise, and
        // outputs rise as b2 falls.
        let targets = vec![vec![2.0, 2.0]; 3];
        let g = backward(&p, &data.inputs[..3], &targets).unwrap();
        assert!(g.db2.iter().all(|&d| d > 0.0));
        let mut q = p.clone();
        q.b2[0] += 0.1;
        let t2 = forward(&q, Activation::Rising, &data.inputs[..3]).unwrap();
        assert!((0..3).all(|t| t2.o[t][0] < trace.o[t][0]));
    }

    #[test]
    fn quantized_params_rejected() {
        let data = xooxxo();
        assert!(matches!(
            backward(&handcrafted_params(), &data.inputs, &data.targets),
            Err(Error::Mode { .. })
        ));
    }

    #[test]
    fn truncation_leaves_early_frames_unchanged() {
        let data = xooxxo();
        let p = random_continuous(Shape::new(6, 4, 2), 1.0, &mut ChaCha8Rng::seed_from_u64(6));
        let cut = 12;
        let mut weights = vec![1.0; data.len()];
        weights[cut..].iter_mut().for_each(|w| *w = 0.0);
        let masked = backward_weighted(&p, &data.inputs, &data.targets, Some(&weights)).unwrap();
        let truncated = backward(&p, &data.inputs[..cut], &data.targets[..cut]).unwrap();
        for (a, b) in masked.to_flat().iter().zip(truncated.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = handcrafted_params();
        p.mode = Mode::Continuous;
        let before = p.clone();
        let mut s = AdamState::new(p.param_count(), 1e-3);
        adam_step(&mut s, &mut p, &vec![0.0; before.param_count()]).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn adam_first_step_is_alpha_times_sign() {
        let mut p = DeductronParams::zeros(1, 1, 1, Mode::Continuous);
        let mut s = AdamState::new(p.param_count(), 0.01);
        let g = [3.0, -0.5, 1e-3, -20.0, 7.0, 0.25];
        adam_step(&mut s, &mut p, &g).unwrap();
        for (w, g) in p.to_flat().iter().zip(g) {
            assert!((w + 0.01 * g.signum()).abs() < 1e-6, "{w} {g}");
        }
    }

    #[test]
    fn adam_constant_gradient_step_tends_to_alpha() {
        for scale in [1e-3, 1.0, 1e3] {
            let mut p = DeductronParams::zeros(1, 1, 1, Mode::Continuous);
            let mut s = AdamState::new(p.param_count(), 1e-3);
            let g = vec![scale; p.param_count()];
            let mut prev = p.get(0);
            let mut last = 0.0;
            for _ in 0..1000 {
                adam_step(&mut s, &mut p, &g).unwrap();
                last = prev - p.get(0);
                prev = p.get(0);
            }
            assert!((last - 1e-3).abs() < 1e-5, "{scale}: {last}");
            assert!(s.v.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn warm_start_is_near_optimal() {
        let data = xooxxo();
        let cfg = SgdConfig {
            epochs: 100,
            ..Default::default()
        };
        // Squared error of the beta-sigmoid network computed outside this crate.
        let at_10 = 0.0018705574987005619;
        for (beta, bound) in [(10.0, None), (12.0, Some(1e-3))] {
            let init = quantized_to_continuous(&handcrafted_params(), beta).unwrap();
            let r = train_sgd_from(&data, init, &cfg).unwrap();
            match bound {
                None => assert!((r.losses[0] - at_10).abs() < 1e-12, "{}", r.losses[0]),
                Some(b) => assert!(r.losses[0] < b, "{}", r.losses[0]),
            }
            assert!(r.losses.windows(2).all(|w| w[1] <= w[0]), "{beta}");
            assert_eq!(r.accuracy.frame_accuracy(), 1.0);
        }
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let data = xooxxo();
        let cfg = SgdConfig {
            epochs: 50,
            seed: 9,
            alpha: 1e-2,
            ..Default::default()
        };
        let a = train_sgd(&data, Shape::new(6, 4, 2), &cfg).unwrap();
        let b = train_sgd(&data, Shape::new(6, 4, 2), &cfg).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.losses.len(), 51);
        assert!(a.losses.iter().all(|l| l.is_finite()));
        assert!(a.losses[50] < a.losses[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let data = xooxxo();
        let mut init = random_continuous(Shape::new(6, 4, 2), 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        init.b2[0] = f64::NAN;
        let r = train_sgd_from(&data, init, &SgdConfig::default());
        assert!(matches!(r, Err(Error::Diverged { epoch: 0, .. })));
    }
}
