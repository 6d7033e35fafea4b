//! The deductron: a perceptron layer feeding V-gate memory cells, read out by
//! a second perceptron layer.

use num_bigint::BigUint;

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `out = self * x + bias`
    pub fn affine_into(&self, x: &[f64], bias: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = bias[i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Weights in {-1, 0, 1}, biases in {0, ..., 5}.
    Quantized,
    Continuous,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Quantized => "quantized",
            Mode::Continuous => "continuous",
        }
    }
}

pub const QUANTIZED_WEIGHTS: [f64; 3] = [-1.0, 0.0, 1.0];
pub const QUANTIZED_BIASES: [f64; 6] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];

/// The first window whose gate updates memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemoryStart {
    /// `z_0 = V(0, u_0, v_0)`: every window updates memory, as when the
    /// per-window decoder is run on each window in turn.
    #[default]
    FirstWindow,
    /// `z_0 = 0` and updates begin at `t = 1`; `u_0`, `v_0` are unused.
    SecondWindow,
}

impl MemoryStart {
    pub fn name(self) -> &'static str {
        match self {
            MemoryStart::FirstWindow => "first_window",
            MemoryStart::SecondWindow => "second_window",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "first_window" => Some(MemoryStart::FirstWindow),
            "second_window" => Some(MemoryStart::SecondWindow),
            _ => None,
        }
    }

    /// Whether the gate at frame `t` writes memory.
    pub fn gates(self, t: usize) -> bool {
        t > 0 || self == MemoryStart::FirstWindow
    }
}

/// Which tensor a flat parameter index falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    W1(usize, usize),
    B1(usize),
    W2(usize, usize),
    B2(usize),
}

impl Slot {
    pub fn is_weight(self) -> bool {
        matches!(self, Slot::W1(..) | Slot::W2(..))
    }
}

/// Layer sizes of a deductron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n_in: usize,
    pub n_memory: usize,
    pub n_out: usize,
}

impl Shape {
    pub fn new(n_in: usize, n_memory: usize, n_out: usize) -> Self {
        Shape { n_in, n_memory, n_out }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeductronParams {
    pub n_in: usize,
    pub n_memory: usize,
    pub n_out: usize,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub mode: Mode,
    pub memory_start: MemoryStart,
}

impl DeductronParams {
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>, mode: Mode) -> Result<Self> {
        let n_in = w1.cols();
        let n_memory = w2.cols();
        let n_out = w2.rows();
        if w1.rows() != 2 * n_memory {
            return Err(Error::Dimension(format!(
                "W1 has {} rows, W2 implies {} memory cells",
                w1.rows(),
                n_memory
            )));
        }
        if b1.len() != w1.rows() || b2.len() != n_out {
            return Err(Error::Dimension("bias lengths do not match weights".into()));
        }
        if n_in == 0 || n_memory == 0 || n_out == 0 {
            return Err(Error::Dimension("all layer sizes must be positive".into()));
        }
        let p = DeductronParams {
            n_in,
            n_memory,
            n_out,
            w1,
            b1,
            w2,
            b2,
            mode,
            memory_start: MemoryStart::default(),
        };
        if mode == Mode::Quantized {
            p.check_quantized()?;
        }
        Ok(p)
    }

    pub fn zeros(n_in: usize, n_memory: usize, n_out: usize, mode: Mode) -> Self {
        DeductronParams {
            n_in,
            n_memory,
            n_out,
            w1: Matrix::zeros(2 * n_memory, n_in),
            b1: vec![0.0; 2 * n_memory],
            w2: Matrix::zeros(n_out, n_memory),
            b2: vec![0.0; n_out],
            mode,
            memory_start: MemoryStart::default(),
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.n_in, self.n_memory, self.n_out)
    }

    pub fn check_quantized(&self) -> Result<()> {
        for i in 0..self.param_count() {
            let slot = self.slot(i);
            let v = self.get(i);
            let domain: &[f64] = if slot.is_weight() {
                &QUANTIZED_WEIGHTS
            } else {
                &QUANTIZED_BIASES
            };
            if !domain.contains(&v) {
                return Err(Error::Quantization(format!("{slot:?} = {v}")));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.w1.data.len() + self.b1.len() + self.w2.data.len() + self.b2.len()
    }

    /// Flat order: W1 (row-major), b1, W2 (row-major), b2.
    pub fn slot(&self, mut i: usize) -> Slot {
        let n1 = self.w1.data.len();
        if i < n1 {
            return Slot::W1(i / self.n_in, i % self.n_in);
        }
        i -= n1;
        if i < self.b1.len() {
            return Slot::B1(i);
        }
        i -= self.b1.len();
        let n2 = self.w2.data.len();
        if i < n2 {
            return Slot::W2(i / self.n_memory, i % self.n_memory);
        }
        i -= n2;
        assert!(i < self.b2.len(), "parameter index out of range");
        Slot::B2(i)
    }

    fn cell(&mut self, slot: Slot) -> &mut f64 {
        match slot {
            Slot::W1(r, c) => &mut self.w1.data[r * self.n_in + c],
            Slot::B1(r) => &mut self.b1[r],
            Slot::W2(r, c) => &mut self.w2.data[r * self.n_memory + c],
            Slot::B2(r) => &mut self.b2[r],
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        match self.slot(i) {
            Slot::W1(r, c) => self.w1.get(r, c),
            Slot::B1(r) => self.b1[r],
            Slot::W2(r, c) => self.w2.get(r, c),
            Slot::B2(r) => self.b2[r],
        }
    }

    pub fn set(&mut self, i: usize, v: f64) {
        let slot = self.slot(i);
        *self.cell(slot) = v;
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1.data);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2.data);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let (a, rest) = flat.split_at(self.w1.data.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.data.len());
        self.w1.data.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.data.copy_from_slice(c);
        self.b2.copy_from_slice(d);
        Ok(())
    }

    /// Number of -1 entries in each row of W1, then of W2.
    pub fn negative_counts(&self) -> (Vec<usize>, Vec<usize>) {
        let count = |m: &Matrix| {
            (0..m.rows())
                .map(|r| m.row(r).iter().filter(|&&w| w == -1.0).count())
                .collect()
        };
        (count(&self.w1), count(&self.w2))
    }
}

/// The four-cell decoder read off the arithmetized algorithm.
pub fn handcrafted_params() -> DeductronParams {
    #[rustfmt::skip]
    let w1 = Matrix::from_rows(&[
        &[0.0, 1.0, 1.0, 0.0, 0.0, -1.0],  // u1: start of 'X'
        &[1.0, 1.0, 0.0, -1.0, 0.0, 0.0],  // u2: start of 'O'
        &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0],  // u3: arrived at bottom
        &[0.0, 0.0, 1.0, 0.0, 0.0, -1.0],  // u4: arrived at top
        &[1.0, 1.0, 0.0, -1.0, 0.0, 0.0],  // v1 = u2
        &[0.0, 1.0, 1.0, 0.0, 0.0, -1.0],  // v2 = u1
        &[0.0; 6],                          // v3 = 1
        &[0.0; 6],                          // v4 = 1
    ])
    .expect("fixed shape");
    let b1 = vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
    let w2 = Matrix::from_rows(&[&[-1.0, 0.0, -1.0, 0.0], &[0.0, -1.0, 0.0, -1.0]]).expect("fixed shape");
    let b2 = vec![2.0, 2.0];
    DeductronParams::new(w1, b1, w2, b2, Mode::Quantized).expect("handcrafted params are quantized")
}

/// Activation convention of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// 1 below 0.5, 0 above; exactly 0.5 is an error.
    Hard,
    /// `1 / (1 + exp(beta * (a - 0.5)))`.
    Falling { beta: f64 },
    /// Standard logistic on the hidden layer; outputs are `1 - sigmoid`.
    Rising,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn falling_sigmoid(a: f64, beta: f64) -> f64 {
    1.0 / (1.0 + (beta * (a - 0.5)).exp())
}

impl Activation {
    fn hidden(self, a: f64, frame: usize, unit: usize) -> Result<f64> {
        match self {
            Activation::Hard => hard(a, frame, unit),
            Activation::Falling { beta } => Ok(falling_sigmoid(a, beta)),
            Activation::Rising => Ok(sigmoid(a)),
        }
    }

    fn output(self, a: f64, frame: usize, unit: usize) -> Result<f64> {
        match self {
            Activation::Rising => Ok(1.0 - sigmoid(a)),
            other => other.hidden(a, frame, unit),
        }
    }
}

fn hard(a: f64, frame: usize, unit: usize) -> Result<f64> {
    if a < 0.5 {
        Ok(1.0)
    } else if a > 0.5 {
        Ok(0.0)
    } else {
        Err(Error::AmbiguousThreshold { frame, unit })
    }
}

/// Elementwise `(1 - u)(1 - v) z + u`.
pub fn v_gate(z: &[f64], u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if z.len() != u.len() || z.len() != v.len() {
        return Err(Error::Dimension(format!(
            "v_gate lengths {}/{}/{}",
            z.len(),
            u.len(),
            v.len()
        )));
    }
    Ok(z.iter()
        .zip(u)
        .zip(v)
        .map(|((z, u), v)| v_gate_scalar(*z, *u, *v))
        .collect())
}

#[inline]
pub fn v_gate_scalar(z: f64, u: f64, v: f64) -> f64 {
    (1.0 - u) * (1.0 - v) * z + u
}

/// Per-frame activations of one forward pass. `h[t]` holds `u_t` followed
/// by `v_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub n_memory: usize,
    pub h: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub o: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn n_frames(&self) -> usize {
        self.o.len()
    }

    pub fn u(&self, t: usize) -> &[f64] {
        &self.h[t][..self.n_memory]
    }

    pub fn v(&self, t: usize) -> &[f64] {
        &self.h[t][self.n_memory..]
    }

    /// Outputs thresholded at 0.5.
    pub fn binary_outputs(&self) -> Vec<Vec<bool>> {
        self.o.iter().map(|o| o.iter().map(|&v| v >= 0.5).collect()).collect()
    }
}

fn check_inputs<X: AsRef<[f64]>>(params: &DeductronParams, x: &[X]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyData);
    }
    if let Some(bad) = x.iter().find(|w| w.as_ref().len() != params.n_in) {
        return Err(Error::Dimension(format!(
            "window of length {}, network expects {}",
            bad.as_ref().len(),
            params.n_in
        )));
    }
    Ok(())
}

/// Runs the network over a window sequence. Memory starts at zero; see
/// [`MemoryStart`] for when the first update happens.
pub fn forward<X: AsRef<[f64]>>(params: &DeductronParams, act: Activation, x: &[X]) -> Result<ForwardTrace> {
    check_inputs(params, x)?;
    let m = params.n_memory;
    let mut h = Vec::with_capacity(x.len());
    let mut zs = Vec::with_capacity(x.len());
    let mut o = Vec::with_capacity(x.len());
    let mut pre1 = vec![0.0; 2 * m];
    let mut pre2 = vec![0.0; params.n_out];
    let mut z = vec![0.0; m];
    for (t, xt) in x.iter().enumerate() {
        params.w1.affine_into(xt.as_ref(), &params.b1, &mut pre1);
        let ht = pre1
            .iter()
            .enumerate()
            .map(|(k, &a)| act.hidden(a, t, k))
            .collect::<Result<Vec<_>>>()?;
        if params.memory_start.gates(t) {
            z = v_gate(&z, &ht[..m], &ht[m..])?;
        }
        params.w2.affine_into(&z, &params.b2, &mut pre2);
        let ot = pre2
            .iter()
            .enumerate()
            .map(|(k, &a)| act.output(a, t, k))
            .collect::<Result<Vec<_>>>()?;
        h.push(ht);
        zs.push(z.clone());
        o.push(ot);
    }
    Ok(ForwardTrace {
        n_memory: m,
        h,
        z: zs,
        o,
    })
}

/// `sum_f sum_i |t - o|^gamma`
pub fn loss<T: AsRef<[f64]>>(trace: &ForwardTrace, targets: &[T], gamma: u32) -> Result<f64> {
    if targets.len() != trace.o.len() {
        return Err(Error::Dimension(format!(
            "{} targets for {} frames",
            targets.len(),
            trace.o.len()
        )));
    }
    let mut total = 0.0;
    for (o, t) in trace.o.iter().zip(targets) {
        let t = t.as_ref();
        if t.len() != o.len() {
            return Err(Error::Dimension(format!(
                "target length {}, output length {}",
                t.len(),
                o.len()
            )));
        }
        total += o.iter().zip(t).map(|(o, t)| error_term(*o, *t, gamma)).sum::<f64>();
    }
    Ok(total)
}

#[inline]
fn error_term(o: f64, t: f64, gamma: u32) -> f64 {
    let d = (t - o).abs();
    match gamma {
        1 => d,
        2 => d * d,
        g => d.powi(g as i32),
    }
}

/// Scratch buffers for repeated loss evaluation without building a trace.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    pre1: Vec<f64>,
    h: Vec<f64>,
    z: Vec<f64>,
    pre2: Vec<f64>,
}

impl Evaluator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Same value as `loss(&forward(..), targets, gamma)`.
    pub fn loss<X: AsRef<[f64]>, T: AsRef<[f64]>>(
        &mut self,
        params: &DeductronParams,
        act: Activation,
        x: &[X],
        targets: &[T],
        gamma: u32,
    ) -> Result<f64> {
        check_inputs(params, x)?;
        if targets.len() != x.len() {
            return Err(Error::Dimension(format!(
                "{} targets for {} frames",
                targets.len(),
                x.len()
            )));
        }
        let m = params.n_memory;
        self.pre1.resize(2 * m, 0.0);
        self.h.resize(2 * m, 0.0);
        self.pre2.resize(params.n_out, 0.0);
        self.z.clear();
        self.z.resize(m, 0.0);
        let mut total = 0.0;
        for (t, (xt, tt)) in x.iter().zip(targets).enumerate() {
            if params.memory_start.gates(t) {
                params.w1.affine_into(xt.as_ref(), &params.b1, &mut self.pre1);
                for k in 0..2 * m {
                    self.h[k] = act.hidden(self.pre1[k], t, k)?;
                }
                for k in 0..m {
                    self.z[k] = v_gate_scalar(self.z[k], self.h[k], self.h[m + k]);
                }
            }
            params.w2.affine_into(&self.z, &params.b2, &mut self.pre2);
            let tt = tt.as_ref();
            if tt.len() != params.n_out {
                return Err(Error::Dimension(format!("target length {}", tt.len())));
            }
            for (k, &target) in tt.iter().enumerate() {
                total += error_term(act.output(self.pre2[k], t, k)?, target, gamma);
            }
        }
        Ok(total)
    }
}

/// Absorbs `beta` and the 0.5 shift into the weights so that the rising
/// sigmoid reproduces the falling one: `sigmoid(W'x + b') = S_beta(Wx + b)` on
/// the hidden layer and `1 - sigmoid(W'z + b') = S_beta(Wz + b)` on the
/// complemented output layer.
pub fn quantized_to_continuous(params: &DeductronParams, beta: f64) -> Result<DeductronParams> {
    if params.mode != Mode::Quantized {
        return Err(Error::Mode {
            expected: Mode::Quantized.name(),
            got: params.mode.name(),
        });
    }
    let scale = |m: &Matrix, k: f64| Matrix {
        rows: m.rows,
        cols: m.cols,
        data: m.data.iter().map(|w| k * w).collect(),
    };
    let shift = |b: &[f64], k: f64| b.iter().map(|b| k * (b - 0.5)).collect::<Vec<_>>();
    Ok(DeductronParams {
        w1: scale(&params.w1, -beta),
        b1: shift(&params.b1, -beta),
        w2: scale(&params.w2, beta),
        b2: shift(&params.b2, beta),
        mode: Mode::Continuous,
        ..params.clone()
    })
}

/// Rounds continuous weights to the nearest admissible quantized values.
pub fn round_to_quantized(params: &DeductronParams) -> DeductronParams {
    let mut q = params.clone();
    q.mode = Mode::Quantized;
    for i in 0..q.param_count() {
        let v = q.get(i);
        let r = if q.slot(i).is_weight() {
            v.round().clamp(-1.0, 1.0)
        } else {
            v.round().clamp(0.0, 5.0)
        };
        q.set(i, r);
    }
    q
}

/// Size of the quantized search space, `3^#weights * 6^#biases`.
pub fn search_space_size(n_in: usize, n_memory: usize, n_out: usize) -> BigUint {
    let weights = 2 * n_memory * n_in + n_out * n_memory;
    let biases = 2 * n_memory + n_out;
    num_traits::pow(BigUint::from(3u32), weights) * num_traits::pow(BigUint::from(6u32), biases)
}
