//! The W-language: 3-pixel frames, images, the topological Markov chains that
//! generate valid images, and the expanding interval map that produces the
//! same symbolic sequences deterministically.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};

/// One image column, stored as (bottom, middle, top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frame([bool; 3]);

impl Frame {
    pub const ZERO: Frame = Frame([false, false, false]);
    pub const E1: Frame = Frame([true, false, false]);
    pub const E2: Frame = Frame([false, true, false]);
    pub const E3: Frame = Frame([false, false, true]);

    pub fn new(bottom: bool, middle: bool, top: bool) -> Self {
        Frame([bottom, middle, top])
    }

    pub fn bits(self) -> [bool; 3] {
        self.0
    }

    pub fn bottom(self) -> bool {
        self.0[0]
    }

    pub fn middle(self) -> bool {
        self.0[1]
    }

    pub fn top(self) -> bool {
        self.0[2]
    }

    /// True for the four frames a well-formed image may contain.
    pub fn is_pure(self) -> bool {
        self.0.iter().filter(|&&b| b).count() <= 1
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Frame::ZERO => f.write_str("0"),
            Frame::E1 => f.write_str("e1"),
            Frame::E2 => f.write_str("e2"),
            Frame::E3 => f.write_str("e3"),
            Frame([b, m, t]) => write!(f, "({},{},{})", b as u8, m as u8, t as u8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Image {
    columns: Vec<Frame>,
}

impl Image {
    pub fn new(columns: Vec<Frame>) -> Self {
        Image { columns }
    }

    /// Builds an image from pixel rows in printed order (top row first).
    pub fn from_rows(top: &[bool], middle: &[bool], bottom: &[bool]) -> Result<Self> {
        if top.len() != middle.len() || top.len() != bottom.len() {
            return Err(Error::Dimension(format!(
                "row lengths differ: {}/{}/{}",
                top.len(),
                middle.len(),
                bottom.len()
            )));
        }
        let columns = (0..top.len())
            .map(|i| Frame::new(bottom[i], middle[i], top[i]))
            .collect();
        Ok(Image { columns })
    }

    /// Pixel rows in printed order: `[top, middle, bottom]`.
    pub fn rows(&self) -> [Vec<bool>; 3] {
        [
            self.columns.iter().map(|c| c.top()).collect(),
            self.columns.iter().map(|c| c.middle()).collect(),
            self.columns.iter().map(|c| c.bottom()).collect(),
        ]
    }

    pub fn columns(&self) -> &[Frame] {
        &self.columns
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// The 30-column rendering of the message "XOOXXO".
    pub fn xooxxo() -> Self {
        const TOP: [u8; 30] = [
            0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0,
        ];
        const MIDDLE: [u8; 30] = [
            0, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 0,
        ];
        const BOTTOM: [u8; 30] = [
            0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0,
        ];
        let b = |row: &[u8; 30]| row.iter().map(|&v| v == 1).collect::<Vec<_>>();
        Image::from_rows(&b(&TOP), &b(&MIDDLE), &b(&BOTTOM)).expect("rows have equal length")
    }
}

/// A node of a topological Markov chain. Each state emits exactly one frame.
pub trait ChainState: Copy + Eq + std::hash::Hash + fmt::Debug + 'static {
    const ALL: &'static [Self];

    fn frame(self) -> Frame;

    /// Out-edges, including the self-loop.
    fn successors(self) -> &'static [Self];

    fn start_states() -> &'static [Self];

    fn is_accept(self) -> bool;

    fn token(self) -> &'static str;

    fn from_token(token: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|s| s.token() == token)
    }
}

/// The 5-state chain. `E2P`/`E2M` are the middle frame on a rising/falling span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasicState {
    Z,
    E1,
    E2P,
    E2M,
    E3,
}

impl ChainState for BasicState {
    const ALL: &'static [Self] = &[
        BasicState::Z,
        BasicState::E1,
        BasicState::E2P,
        BasicState::E2M,
        BasicState::E3,
    ];

    fn frame(self) -> Frame {
        match self {
            BasicState::Z => Frame::ZERO,
            BasicState::E1 => Frame::E1,
            BasicState::E2P | BasicState::E2M => Frame::E2,
            BasicState::E3 => Frame::E3,
        }
    }

    fn successors(self) -> &'static [Self] {
        use BasicState::*;
        match self {
            Z => &[Z, E1, E3],
            E1 => &[E1, Z, E2P, E3],
            E2P => &[E2P, E3],
            E2M => &[E2M, E1],
            E3 => &[E3, E1, Z, E2M],
        }
    }

    fn start_states() -> &'static [Self] {
        &[BasicState::Z, BasicState::E1, BasicState::E3]
    }

    fn is_accept(self) -> bool {
        matches!(self, BasicState::Z | BasicState::E1 | BasicState::E3)
    }

    fn token(self) -> &'static str {
        match self {
            BasicState::Z => "Z",
            BasicState::E1 => "E1",
            BasicState::E2P => "E2P",
            BasicState::E2M => "E2M",
            BasicState::E3 => "E3",
        }
    }
}

/// The 11-state chain that forces every character to be completed.
///
/// Declaration order is the interval order of the chaotic map: state `k`
/// labels `[k, k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreciseState {
    E3XS,
    E2XM,
    E1X,
    E2XP,
    E3XF,
    Z,
    E1OS,
    E2OP,
    E3O,
    E2OM,
    E1OF,
}

impl PreciseState {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl ChainState for PreciseState {
    const ALL: &'static [Self] = &[
        PreciseState::E3XS,
        PreciseState::E2XM,
        PreciseState::E1X,
        PreciseState::E2XP,
        PreciseState::E3XF,
        PreciseState::Z,
        PreciseState::E1OS,
        PreciseState::E2OP,
        PreciseState::E3O,
        PreciseState::E2OM,
        PreciseState::E1OF,
    ];

    fn frame(self) -> Frame {
        use PreciseState::*;
        match self {
            E1X | E1OS | E1OF => Frame::E1,
            E2XM | E2XP | E2OP | E2OM => Frame::E2,
            E3XS | E3XF | E3O => Frame::E3,
            Z => Frame::ZERO,
        }
    }

    fn successors(self) -> &'static [Self] {
        use PreciseState::*;
        match self {
            E1X => &[E1X, E2XP],
            E2XP => &[E2XP, E3XS, E3XF],
            E3XS => &[E3XS, E2XM],
            E2XM => &[E2XM, E1X],
            E3XF => &[E3XF, Z],
            Z => &[Z, E3XS, E1OS],
            E1OS => &[E1OS, E2OP],
            E2OP => &[E2OP, E3O],
            E3O => &[E3O, E2OM],
            E2OM => &[E2OM, E1OS, E1OF],
            E1OF => &[E1OF, Z],
        }
    }

    fn start_states() -> &'static [Self] {
        &[PreciseState::Z]
    }

    fn is_accept(self) -> bool {
        matches!(self, PreciseState::Z | PreciseState::E3XF | PreciseState::E1OF)
    }

    fn token(self) -> &'static str {
        use PreciseState::*;
        match self {
            E3XS => "E3XS",
            E2XM => "E2XM",
            E1X => "E1X",
            E2XP => "E2XP",
            E3XF => "E3XF",
            Z => "Z",
            E1OS => "E1OS",
            E2OP => "E2OP",
            E3O => "E3O",
            E2OM => "E2OM",
            E1OF => "E1OF",
        }
    }
}

/// A chain with optional per-edge weights; edges without an override weigh 1.
#[derive(Debug, Clone)]
pub struct MarkovChain<S: ChainState> {
    weights: HashMap<(S, S), f64>,
}

impl<S: ChainState> Default for MarkovChain<S> {
    fn default() -> Self {
        MarkovChain {
            weights: HashMap::new(),
        }
    }
}

// Number of trailing steps regenerated when a walk ends outside the accept set.
const TAIL_RESAMPLE: usize = 8;

impl<S: ChainState> MarkovChain<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Overrides the weight of an existing edge.
    pub fn with_weight(mut self, from: S, to: S, weight: f64) -> Result<Self> {
        if !from.successors().contains(&to) {
            return Err(Error::Range(format!("{from:?} -> {to:?} is not an edge")));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Range(format!("edge weight {weight}")));
        }
        self.weights.insert((from, to), weight);
        Ok(self)
    }

    fn weight(&self, from: S, to: S) -> f64 {
        self.weights.get(&(from, to)).copied().unwrap_or(1.0)
    }

    pub fn step<R: Rng + ?Sized>(&self, state: S, rng: &mut R) -> S {
        let succ = state.successors();
        let total: f64 = succ.iter().map(|&s| self.weight(state, s)).sum();
        if total <= 0.0 {
            return state;
        }
        let mut pick = rng.gen::<f64>() * total;
        for &s in succ {
            pick -= self.weight(state, s);
            if pick < 0.0 {
                return s;
            }
        }
        *succ.last().expect("every state has a self-loop")
    }

    /// A walk of exactly `n` states that starts in a start state and ends in
    /// an accept state. A walk ending elsewhere has its tail regenerated.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<S> {
        if n == 0 {
            return Vec::new();
        }
        let starts = S::start_states();
        let mut seq = vec![starts[rng.gen_range(0..starts.len())]];
        loop {
            while seq.len() < n {
                let next = self.step(*seq.last().unwrap(), rng);
                seq.push(next);
            }
            if seq.last().unwrap().is_accept() {
                return seq;
            }
            let keep = seq.len().saturating_sub(TAIL_RESAMPLE).max(1);
            seq.truncate(keep);
        }
    }
}

pub fn basic_chain_step<R: Rng + ?Sized>(state: BasicState, rng: &mut R) -> BasicState {
    MarkovChain::new().step(state, rng)
}

pub fn generate_basic<R: Rng + ?Sized>(n_frames: usize, rng: &mut R) -> Vec<BasicState> {
    MarkovChain::new().generate(n_frames, rng)
}

pub fn precise_chain_step<R: Rng + ?Sized>(state: PreciseState, rng: &mut R) -> PreciseState {
    MarkovChain::new().step(state, rng)
}

pub fn generate_precise<R: Rng + ?Sized>(n_frames: usize, rng: &mut R) -> Vec<PreciseState> {
    MarkovChain::new().generate(n_frames, rng)
}

pub fn states_to_image<S: ChainState>(states: &[S]) -> Image {
    Image::new(states.iter().map(|s| s.frame()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Empty,
    MixedFrame,
    BadStart,
    BadTransition,
    BadEnd,
}

/// Where and why an image fails to be a word of the language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::Empty => "image is empty",
            ViolationKind::MixedFrame => "frame has more than one pixel set",
            ViolationKind::BadStart => "image must start with 0, e1 or e3",
            ViolationKind::BadTransition => "transition not allowed by the chain",
            ViolationKind::BadEnd => "image must end with 0, e1 or e3",
        };
        write!(f, "{what} at column {}", self.index)
    }
}

/// Recovers the basic-chain path of an image. The path is unique when it
/// exists: the previous state fixes whether an `e2` is rising or falling.
pub fn parse_basic(img: &Image) -> std::result::Result<Vec<BasicState>, Violation> {
    let cols = img.columns();
    let first = *cols.first().ok_or(Violation {
        index: 0,
        kind: ViolationKind::Empty,
    })?;
    let mut path = Vec::with_capacity(cols.len());
    for (i, &frame) in cols.iter().enumerate() {
        if !frame.is_pure() {
            return Err(Violation {
                index: i,
                kind: ViolationKind::MixedFrame,
            });
        }
        let candidates: &[BasicState] = match path.last() {
            None => BasicState::start_states(),
            Some(&prev) => BasicState::successors(prev),
        };
        match candidates.iter().copied().find(|s| s.frame() == frame) {
            Some(s) => path.push(s),
            None => {
                let kind = if i == 0 {
                    ViolationKind::BadStart
                } else {
                    ViolationKind::BadTransition
                };
                return Err(Violation { index: i, kind });
            }
        }
    }
    debug_assert_eq!(path[0].frame(), first);
    if !path.last().unwrap().is_accept() {
        return Err(Violation {
            index: cols.len() - 1,
            kind: ViolationKind::BadEnd,
        });
    }
    Ok(path)
}

pub fn validate_image(img: &Image) -> std::result::Result<(), Violation> {
    parse_basic(img).map(|_| ())
}

/// One affine piece `x -> offset + slope * (x - lo)` on `[lo, hi)`.
/// Endpoints are stored in half units so the partition is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Branch {
    pub lo_half: i64,
    pub hi_half: i64,
    pub offset_half: i64,
    pub slope: i64,
}

impl Branch {
    const fn new(lo_half: i64, hi_half: i64, offset_half: i64, slope: i64) -> Self {
        Branch {
            lo_half,
            hi_half,
            offset_half,
            slope,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo_half as f64 / 2.0
    }

    pub fn hi(&self) -> f64 {
        self.hi_half as f64 / 2.0
    }

    /// Image interval `[lo, hi)` in half units.
    pub fn image_half(&self) -> (i64, i64) {
        (
            self.offset_half,
            self.offset_half + self.slope * (self.hi_half - self.lo_half),
        )
    }
}

pub const N_INTERVALS: i64 = 11;

const STANDARD_BRANCHES: [Branch; 14] = [
    Branch::new(0, 2, 0, 2),
    Branch::new(2, 4, 2, 2),
    Branch::new(4, 6, 4, 2),
    Branch::new(6, 7, 6, 4),
    Branch::new(7, 8, 0, 2),
    Branch::new(8, 10, 8, 2),
    Branch::new(10, 11, 0, 2),
    Branch::new(11, 12, 10, 4),
    Branch::new(12, 14, 12, 2),
    Branch::new(14, 16, 14, 2),
    Branch::new(16, 18, 16, 2),
    Branch::new(18, 20, 18, 2),
    Branch::new(20, 21, 20, 2),
    Branch::new(21, 22, 10, 2),
];

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMapConfig {
    pub branches: Vec<Branch>,
    /// Decimal digits carried by the extended-precision orbit.
    pub digits: u32,
    /// Added to every branch output, then wrapped back into the branch image.
    pub perturbation: f64,
}

impl Default for IntervalMapConfig {
    fn default() -> Self {
        IntervalMapConfig {
            branches: STANDARD_BRANCHES.to_vec(),
            digits: 200,
            perturbation: 0.0,
        }
    }
}

impl IntervalMapConfig {
    pub fn with_digits(digits: u32) -> Self {
        IntervalMapConfig {
            digits,
            ..Default::default()
        }
    }

    /// Digits needed so that `n_frames` symbols are determined by `x0`.
    pub fn required_digits(n_frames: usize) -> u32 {
        (n_frames as f64 * 4f64.log10()).ceil() as u32 + 16
    }

    fn branch_for_half_floor(&self, x_times_2_floor: i64) -> Option<&Branch> {
        self.branches
            .iter()
            .find(|b| b.lo_half <= x_times_2_floor && x_times_2_floor < b.hi_half)
    }
}

fn wrap_into(y: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if y >= hi {
        y - width
    } else if y < lo {
        y + width
    } else {
        y
    }
}

pub fn interval_map_apply(x: f64, cfg: &IntervalMapConfig) -> Result<f64> {
    if !(0.0..N_INTERVALS as f64).contains(&x) {
        return Err(Error::Range(format!("x = {x} is outside [0, 11)")));
    }
    let branch = cfg
        .branch_for_half_floor((2.0 * x).floor() as i64)
        .ok_or_else(|| Error::Range(format!("no branch covers x = {x}")))?;
    let y = branch.offset_half as f64 / 2.0 + branch.slope as f64 * (x - branch.lo());
    if cfg.perturbation == 0.0 {
        return Ok(y);
    }
    let (lo, hi) = branch.image_half();
    Ok(wrap_into(y + cfg.perturbation, lo as f64 / 2.0, hi as f64 / 2.0))
}

/// Orbit in plain binary floating point.
pub fn orbit_f64(x0: f64, n_frames: usize, cfg: &IntervalMapConfig) -> Result<Vec<f64>> {
    let mut xs = Vec::with_capacity(n_frames);
    let mut x = x0;
    for i in 0..n_frames {
        if i > 0 {
            x = interval_map_apply(x, cfg)?;
        } else if !(0.0..N_INTERVALS as f64).contains(&x) {
            return Err(Error::Range(format!("x0 = {x} is outside [0, 11)")));
        }
        xs.push(x);
    }
    Ok(xs)
}

/// A decimal fixed-point number `scaled / 10^digits`. Doubling and adding
/// half-integers are exact, so orbits of the interval map never lose bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decimal {
    scaled: BigInt,
    digits: u32,
}

impl Decimal {
    pub fn digits(&self) -> u32 {
        self.digits
    }

    fn unit(digits: u32) -> BigInt {
        num_traits::pow(BigInt::from(10), digits as usize)
    }

    fn half_units(half: i64, digits: u32) -> BigInt {
        // half/2 * 10^digits; digits >= 1 keeps this integral.
        BigInt::from(half) * Self::unit(digits) / 2
    }

    /// Parses a plain decimal literal such as `5.2`, padded to `digits`.
    pub fn parse(text: &str, digits: u32) -> Result<Self> {
        if digits == 0 {
            return Err(Error::Range("decimal needs at least one digit".into()));
        }
        let text = text.trim();
        let (neg, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        let ok = |s: &str| s.chars().all(|c| c.is_ascii_digit());
        if int_part.is_empty() || !ok(int_part) || !ok(frac_part) {
            return Err(Error::Range(format!("not a decimal literal: {text:?}")));
        }
        if frac_part.len() > digits as usize {
            return Err(Error::Range(format!("{text} has more than {digits} fractional digits")));
        }
        let mut all = String::with_capacity(int_part.len() + digits as usize);
        all.push_str(int_part);
        all.push_str(frac_part);
        all.extend(std::iter::repeat_n('0', digits as usize - frac_part.len()));
        let mut scaled: BigInt = all.parse().expect("validated digits");
        if neg {
            scaled = -scaled;
        }
        Ok(Decimal { scaled, digits })
    }

    /// A random point of `[k, k+1)` with every digit drawn uniformly. The
    /// last digit is taken from {1,3,7,9}, so the orbit never lands on a
    /// dyadic fixed point.
    pub fn random_in_unit<R: Rng + ?Sized>(k: i64, digits: u32, rng: &mut R) -> Result<Self> {
        if digits == 0 {
            return Err(Error::Range("decimal needs at least one digit".into()));
        }
        let mut s = k.to_string();
        s.push('.');
        for _ in 1..digits {
            s.push(char::from(b'0' + rng.gen_range(0..10u8)));
        }
        s.push(char::from(b"1379"[rng.gen_range(0..4)]));
        Self::parse(&s, digits)
    }

    pub fn rescale(&self, digits: u32) -> Result<Self> {
        if digits < self.digits {
            let factor = Self::unit(self.digits - digits);
            if !(&self.scaled % &factor).is_zero() {
                return Err(Error::Range(format!("cannot represent {self} with {digits} digits")));
            }
            return Ok(Decimal {
                scaled: &self.scaled / factor,
                digits,
            });
        }
        Ok(Decimal {
            scaled: &self.scaled * Self::unit(digits - self.digits),
            digits,
        })
    }

    /// `floor(2x)`, used to locate the branch.
    fn floor_twice(&self) -> i64 {
        let twice: BigInt = &self.scaled * 2;
        let unit = Self::unit(self.digits);
        let q = &twice / &unit;
        let q = if twice.is_negative() && !(&twice % &unit).is_zero() {
            q - 1
        } else {
            q
        };
        q.to_i64().unwrap_or(i64::MAX)
    }

    pub fn floor(&self) -> i64 {
        self.floor_twice().div_euclid(2)
    }

    pub fn to_f64(&self) -> f64 {
        self.to_string().parse().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let neg = self.scaled.is_negative();
        let mut digits = self.scaled.abs().to_string();
        let d = self.digits as usize;
        if digits.len() <= d {
            let pad = d + 1 - digits.len();
            digits.insert_str(0, &"0".repeat(pad));
        }
        let split = digits.len() - d;
        if neg {
            f.write_str("-")?;
        }
        write!(f, "{}.{}", &digits[..split], &digits[split..])
    }
}

fn apply_decimal(x: &Decimal, cfg: &IntervalMapConfig, perturbation: &Decimal) -> Result<Decimal> {
    let h = x.floor_twice();
    if !(0..2 * N_INTERVALS).contains(&h) {
        return Err(Error::Range(format!("x = {x} is outside [0, 11)")));
    }
    let branch = cfg
        .branch_for_half_floor(h)
        .ok_or_else(|| Error::Range(format!("no branch covers x = {x}")))?;
    let d = x.digits;
    let lo = Decimal::half_units(branch.lo_half, d);
    let mut y = Decimal::half_units(branch.offset_half, d) + (&x.scaled - lo) * branch.slope;
    if !perturbation.scaled.is_zero() {
        y += &perturbation.scaled;
        let (ilo, ihi) = branch.image_half();
        let (ilo, ihi) = (Decimal::half_units(ilo, d), Decimal::half_units(ihi, d));
        if y >= ihi {
            y -= &ihi - &ilo;
        } else if y < ilo {
            y += &ihi - &ilo;
        }
    }
    Ok(Decimal { scaled: y, digits: d })
}

/// Orbit in exact decimal arithmetic at `cfg.digits` digits.
pub fn orbit_decimal(x0: &Decimal, n_frames: usize, cfg: &IntervalMapConfig) -> Result<Vec<Decimal>> {
    let needed = IntervalMapConfig::required_digits(n_frames);
    if cfg.digits < needed {
        return Err(Error::Precision {
            needed,
            frames: n_frames,
            got: cfg.digits,
        });
    }
    let x0 = x0.rescale(cfg.digits)?;
    let h = x0.floor_twice();
    if !(0..2 * N_INTERVALS).contains(&h) {
        return Err(Error::Range(format!("x0 = {x0} is outside [0, 11)")));
    }
    let eps = Decimal::parse(&format!("{:.*}", cfg.digits as usize, cfg.perturbation), cfg.digits)?;
    let mut xs = Vec::with_capacity(n_frames);
    let mut x = x0;
    for i in 0..n_frames {
        if i > 0 {
            x = apply_decimal(&x, cfg, &eps)?;
        }
        xs.push(x.clone());
    }
    Ok(xs)
}

fn label(k: i64) -> PreciseState {
    PreciseState::ALL[k as usize]
}

/// Symbolic sequence of the orbit of `x0`: state `k` whenever `x_n` lies in
/// `[k, k+1)`.
pub fn generate_chaotic(x0: &Decimal, n_frames: usize, cfg: &IntervalMapConfig) -> Result<Vec<PreciseState>> {
    Ok(orbit_decimal(x0, n_frames, cfg)?
        .iter()
        .map(|x| label(x.floor()))
        .collect())
}

/// Same symbolic sequence computed in binary floating point. Orbits collapse
/// onto a fixed point after roughly 50 steps unless perturbed.
pub fn generate_chaotic_f64(x0: f64, n_frames: usize, cfg: &IntervalMapConfig) -> Result<Vec<PreciseState>> {
    Ok(orbit_f64(x0, n_frames, cfg)?
        .iter()
        .map(|x| label(x.floor() as i64))
        .collect())
}

/// A chaotic sample usable as an image: `x0` is drawn in the blank interval
/// and orbits that do not end in an accept state are redrawn.
pub fn chaotic_sample<R: Rng + ?Sized>(
    n_frames: usize,
    cfg: &IntervalMapConfig,
    rng: &mut R,
) -> Result<(Decimal, Vec<PreciseState>)> {
    let blank = PreciseState::Z.index() as i64;
    loop {
        let x0 = Decimal::random_in_unit(blank, cfg.digits, rng)?;
        let states = generate_chaotic(&x0, n_frames, cfg)?;
        if states.last().is_none_or(|s| s.is_accept()) {
            return Ok((x0, states));
        }
    }
}
