//! Hand-written W-language decoder over sliding windows of two columns.
//!
//! Windows are linearized column by column, bottom to top:
//! `(x11, x21, x31, x12, x22, x32)` where `x_ij` is row `i` (1 = bottom) of
//! column `j`.

use std::fmt;

use crate::error::{Error, Result};
use crate::wlang::{Frame, Image};

pub const WINDOW_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window(pub [bool; WINDOW_LEN]);

impl Window {
    pub fn from_columns(first: Frame, second: Frame) -> Self {
        let [a, b, c] = first.bits();
        let [d, e, f] = second.bits();
        Window([a, b, c, d, e, f])
    }

    /// All 64 windows, indexed by their bits read as a little-endian integer.
    pub fn all() -> impl Iterator<Item = Window> {
        (0u8..64).map(|k| {
            let mut bits = [false; WINDOW_LEN];
            for (i, b) in bits.iter_mut().enumerate() {
                *b = k >> i & 1 == 1;
            }
            Window(bits)
        })
    }

    /// Pixel `x_{row, col}`, both 1-based.
    pub fn x(&self, row: usize, col: usize) -> bool {
        self.0[(col - 1) * 3 + (row - 1)]
    }

    pub fn to_input(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(u8::from(b))).collect()
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &b) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", u8::from(b))?;
        }
        Ok(())
    }
}

pub fn windows_from_image(img: &Image) -> Result<Vec<Window>> {
    if img.n_cols() < 2 {
        return Err(Error::TooFewColumns(img.n_cols()));
    }
    Ok(img
        .columns()
        .windows(2)
        .map(|c| Window::from_columns(c[0], c[1]))
        .collect())
}

/// Memory of the decoder: inside an 'X' (`z1`) or inside an 'O' (`z2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct DecoderState {
    pub z1: bool,
    pub z2: bool,
}

impl DecoderState {
    pub fn new(z1: bool, z2: bool) -> Self {
        DecoderState { z1, z2 }
    }

    pub fn all() -> [DecoderState; 4] {
        [
            DecoderState::new(false, false),
            DecoderState::new(true, false),
            DecoderState::new(false, true),
            DecoderState::new(true, true),
        ]
    }
}

/// When an extremum emits its symbol.
///
/// `OnArrival` emits once, on the window that enters the extremum; this is
/// what the four-cell deductron computes. `EveryFrame` emits on every window
/// whose second column is the extremum, so a stalled minimum such as
/// `e2, e1, e1` emits twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmitRule {
    #[default]
    OnArrival,
    EveryFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Emission {
    pub x: bool,
    pub o: bool,
}

impl Emission {
    pub fn symbol(&self) -> Option<char> {
        match (self.x, self.o) {
            (true, false) => Some('X'),
            (false, true) => Some('O'),
            (true, true) => Some('?'),
            (false, false) => None,
        }
    }
}

pub fn step(state: DecoderState, w: &Window) -> (DecoderState, Emission) {
    step_with(EmitRule::default(), state, w)
}

pub fn step_with(rule: EmitRule, state: DecoderState, w: &Window) -> (DecoderState, Emission) {
    let x = |i, j| w.x(i, j);
    let start_x = !x(2, 1) && !x(3, 1) && x(3, 2);
    let start_o = !x(2, 1) && !x(1, 1) && x(1, 2);

    let mut next = state;
    if start_x {
        next = DecoderState::new(true, false);
    } else if start_o {
        next = DecoderState::new(false, true);
    }

    let (at_min, at_max) = match rule {
        EmitRule::EveryFrame => (x(1, 2), x(3, 2)),
        EmitRule::OnArrival => (x(1, 2) && !x(1, 1), x(3, 2) && !x(3, 1)),
    };
    let emit = Emission {
        x: at_min && next.z1,
        o: at_max && next.z2,
    };
    (next, emit)
}

/// Hard threshold on integers: 1 iff `a <= 0`.
fn s(a: i32) -> i32 {
    i32::from(a <= 0)
}

pub fn step_arith(state: DecoderState, w: &Window) -> (DecoderState, Emission) {
    step_arith_with(EmitRule::default(), state, w)
}

/// The same step with every conditional replaced by arithmetic.
pub fn step_arith_with(rule: EmitRule, state: DecoderState, w: &Window) -> (DecoderState, Emission) {
    let x = |i, j| i32::from(w.x(i, j));
    let y1 = s(x(2, 1) + x(3, 1) + (1 - x(3, 2)));
    let y2 = s(x(2, 1) + x(1, 1) + (1 - x(1, 2)));

    let mut z1 = i32::from(state.z1);
    let mut z2 = i32::from(state.z2);
    z1 = (1 - y1) * z1 + y1;
    z2 *= 1 - y1;
    z2 = (1 - y2) * z2 + y2;
    z1 *= 1 - y2;

    let (hold_min, hold_max) = match rule {
        EmitRule::EveryFrame => (0, 0),
        EmitRule::OnArrival => (x(1, 1), x(3, 1)),
    };
    let emit_x = s((1 - x(1, 2)) + hold_min + (1 - z1));
    let emit_o = s((1 - x(3, 2)) + hold_max + (1 - z2));
    (
        DecoderState::new(z1 == 1, z2 == 1),
        Emission {
            x: emit_x == 1,
            o: emit_o == 1,
        },
    )
}

/// Input windows with per-window target bits.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSeq {
    pub n_in: usize,
    pub n_out: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl WindowSeq {
    pub fn new(n_in: usize, n_out: usize, inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} windows but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(bad) = inputs.iter().find(|x| x.len() != n_in) {
            return Err(Error::Dimension(format!(
                "window of length {}, expected {n_in}",
                bad.len()
            )));
        }
        if let Some(bad) = targets.iter().find(|t| t.len() != n_out) {
            return Err(Error::Dimension(format!(
                "target of length {}, expected {n_out}",
                bad.len()
            )));
        }
        Ok(WindowSeq {
            n_in,
            n_out,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Reads emitted symbols off the target bits.
    pub fn target_string(&self) -> String {
        self.targets
            .iter()
            .filter_map(|t| {
                Emission {
                    x: t.first().copied().unwrap_or(0.0) >= 0.5,
                    o: t.get(1).copied().unwrap_or(0.0) >= 0.5,
                }
                .symbol()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub windows: Vec<Window>,
    pub states: Vec<DecoderState>,
    pub emissions: Vec<Emission>,
    pub text: String,
}

impl Decoded {
    pub fn to_window_seq(&self) -> WindowSeq {
        let inputs = self.windows.iter().map(Window::to_input).collect();
        let targets = self
            .emissions
            .iter()
            .map(|e| vec![f64::from(u8::from(e.x)), f64::from(u8::from(e.o))])
            .collect();
        WindowSeq::new(WINDOW_LEN, 2, inputs, targets).expect("shapes are fixed")
    }
}

pub fn decode(img: &Image) -> Result<Decoded> {
    decode_with(EmitRule::default(), img)
}

pub fn decode_with(rule: EmitRule, img: &Image) -> Result<Decoded> {
    let windows = windows_from_image(img)?;
    let mut state = DecoderState::default();
    let mut states = Vec::with_capacity(windows.len());
    let mut emissions = Vec::with_capacity(windows.len());
    let mut text = String::new();
    for w in &windows {
        let (next, emit) = step_with(rule, state, w);
        state = next;
        states.push(state);
        emissions.push(emit);
        text.extend(emit.symbol());
    }
    Ok(Decoded {
        windows,
        states,
        emissions,
        text,
    })
}
