//! Text and JSON file formats.
//!
//! Every file opens with a format line naming its version. Lines starting
//! with `#` after that line are comments and hold the producing command.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::decoder::WindowSeq;
use crate::error::{Error, Result};
use crate::lstm::LstmParams;
use crate::network::{DeductronParams, Matrix, MemoryStart, Mode};
use crate::wlang::{states_to_image, BasicState, ChainState, Frame, Image, PreciseState};

pub const IMAGE_TAG: &str = "wimg";
pub const DATASET_TAG: &str = "wset";
pub const CHAIN_TAG: &str = "wchain";
pub const PARAMS_FORMAT: &str = "deductron-params/1";
pub const LSTM_FORMAT: &str = "lstm-params/1";

/// Non-blank, non-comment lines after the header, with 1-based line numbers.
fn body(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn header<'a>(text: &'a str, tag: &str, path: &Path) -> Result<Vec<&'a str>> {
    let first = text.lines().next().unwrap_or("").trim();
    let mut words = first.split_whitespace();
    match words.next() {
        Some(t) if t == tag => Ok(words.collect()),
        Some(t) => Err(Error::parse(path, 1, format!("unknown format '{t}', expected '{tag}'"))),
        None => Err(Error::parse(path, 1, format!("missing '{tag}' header"))),
    }
}

fn count(word: Option<&&str>, what: &str, path: &Path) -> Result<usize> {
    word.ok_or_else(|| Error::parse(path, 1, format!("header lacks {what}")))?
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad {what} '{}'", word.unwrap_or(&""))))
}

fn comment_lines(comments: &[String]) -> String {
    comments.iter().map(|c| format!("# {c}\n")).collect()
}

fn bits(text: &str, line: usize, path: &Path) -> Result<Vec<bool>> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::parse(path, line, format!("expected 0 or 1, found '{other}'"))),
        })
        .collect()
}

fn bit_row(row: impl Iterator<Item = bool>) -> String {
    row.map(|b| if b { "1" } else { "0" }).collect::<Vec<_>>().join(" ")
}

pub fn format_image(img: &Image, comments: &[String]) -> String {
    let [top, middle, bottom] = img.rows();
    format!(
        "{IMAGE_TAG} {}\n{}{}\n{}\n{}\n",
        img.n_cols(),
        comment_lines(comments),
        bit_row(top.into_iter()),
        bit_row(middle.into_iter()),
        bit_row(bottom.into_iter())
    )
}

pub fn parse_image(text: &str, path: &Path) -> Result<Image> {
    let head = header(text, IMAGE_TAG, path)?;
    let n = count(head.first(), "column count", path)?;
    let rows: Vec<(usize, &str)> = body(text).collect();
    if rows.len() != 3 {
        let line = rows.get(3).map_or(text.lines().count(), |r| r.0);
        return Err(Error::parse(
            path,
            line,
            format!("expected 3 pixel rows, found {}", rows.len()),
        ));
    }
    let mut parsed = Vec::with_capacity(3);
    for (line, row) in rows {
        let b = bits(row, line, path)?;
        if b.len() != n {
            return Err(Error::parse(
                path,
                line,
                format!("row has {} pixels, header says {n}", b.len()),
            ));
        }
        parsed.push(b);
    }
    Image::from_rows(&parsed[0], &parsed[1], &parsed[2])
}

pub fn format_dataset(data: &WindowSeq, comments: &[String]) -> String {
    let mut out = format!("{DATASET_TAG} {} {} {}\n", data.len(), data.n_in, data.n_out);
    out.push_str(&comment_lines(comments));
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        out.push_str(&format!(
            "{} | {}\n",
            bit_row(x.iter().map(|&v| v >= 0.5)),
            bit_row(t.iter().map(|&v| v >= 0.5))
        ));
    }
    out
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<WindowSeq> {
    let head = header(text, DATASET_TAG, path)?;
    let n = count(head.first(), "window count", path)?;
    let n_in = count(head.get(1), "input width", path)?;
    let n_out = count(head.get(2), "output width", path)?;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for (line, row) in body(text) {
        let (x, t) = row
            .split_once('|')
            .ok_or_else(|| Error::parse(path, line, "missing '|' between inputs and targets"))?;
        let x = bits(x, line, path)?;
        let t = bits(t, line, path)?;
        if x.len() != n_in || t.len() != n_out {
            return Err(Error::parse(
                path,
                line,
                format!("{}|{} bits, header says {n_in}|{n_out}", x.len(), t.len()),
            ));
        }
        let to_f = |v: Vec<bool>| v.into_iter().map(|b| f64::from(u8::from(b))).collect::<Vec<f64>>();
        inputs.push(to_f(x));
        targets.push(to_f(t));
    }
    if inputs.len() != n {
        return Err(Error::parse(
            path,
            text.lines().count(),
            format!("found {} windows, header says {n}", inputs.len()),
        ));
    }
    WindowSeq::new(n_in, n_out, inputs, targets)
}

/// A state sequence of either chain.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainSeq {
    Basic(Vec<BasicState>),
    Precise(Vec<PreciseState>),
}

impl ChainSeq {
    pub fn variant(&self) -> &'static str {
        match self {
            ChainSeq::Basic(_) => "basic",
            ChainSeq::Precise(_) => "precise",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ChainSeq::Basic(s) => s.len(),
            ChainSeq::Precise(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_image(&self) -> Image {
        match self {
            ChainSeq::Basic(s) => states_to_image(s),
            ChainSeq::Precise(s) => states_to_image(s),
        }
    }

    pub fn frames(&self) -> Vec<Frame> {
        self.to_image().columns().to_vec()
    }
}

fn tokens<S: ChainState>(states: &[S]) -> String {
    states.iter().map(|s| format!("{}\n", s.token())).collect()
}

pub fn format_chain(seq: &ChainSeq, comments: &[String]) -> String {
    let body = match seq {
        ChainSeq::Basic(s) => tokens(s),
        ChainSeq::Precise(s) => tokens(s),
    };
    format!(
        "{CHAIN_TAG} {} {}\n{}{body}",
        seq.variant(),
        seq.len(),
        comment_lines(comments)
    )
}

fn parse_states<S: ChainState>(text: &str, path: &Path) -> Result<Vec<S>> {
    body(text)
        .map(|(line, tok)| S::from_token(tok).ok_or_else(|| Error::parse(path, line, format!("unknown state '{tok}'"))))
        .collect()
}

pub fn parse_chain(text: &str, path: &Path) -> Result<ChainSeq> {
    let head = header(text, CHAIN_TAG, path)?;
    let n = count(head.get(1), "state count", path)?;
    let seq = match head.first().copied() {
        Some("basic") => ChainSeq::Basic(parse_states(text, path)?),
        Some("precise") => ChainSeq::Precise(parse_states(text, path)?),
        Some(v) => return Err(Error::parse(path, 1, format!("unknown chain variant '{v}'"))),
        None => return Err(Error::parse(path, 1, "header lacks chain variant")),
    };
    if seq.len() != n {
        return Err(Error::parse(
            path,
            text.lines().count(),
            format!("found {} states, header says {n}", seq.len()),
        ));
    }
    Ok(seq)
}

/// Integer for quantized values so files read naturally; shortest round-trip
/// decimal otherwise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum Num {
    Int(i64),
    Real(f64),
}

impl Num {
    fn value(self) -> f64 {
        match self {
            Num::Int(i) => i as f64,
            Num::Real(r) => r,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsFile {
    format: String,
    n_in: usize,
    n_memory: usize,
    n_out: usize,
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    memory_start: Option<String>,
    #[serde(rename = "W1")]
    w1: Vec<Vec<Num>>,
    b1: Vec<Num>,
    #[serde(rename = "W2")]
    w2: Vec<Vec<Num>>,
    b2: Vec<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<Value>,
}

/// Pretty JSON with scalar arrays kept on one line, so matrices read row by row.
fn to_json_text<T: Serialize>(value: &T) -> String {
    fn scalar(v: &Value) -> bool {
        !matches!(v, Value::Array(_) | Value::Object(_))
    }
    fn write(v: &Value, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent + 1);
        match v {
            Value::Array(items) if items.iter().all(scalar) => {
                let cells: Vec<String> = items.iter().map(Value::to_string).collect();
                out.push('[');
                out.push_str(&cells.join(", "));
                out.push(']');
            }
            Value::Array(items) => {
                out.push_str("[\n");
                for (k, item) in items.iter().enumerate() {
                    out.push_str(&pad);
                    write(item, indent + 1, out);
                    out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
                }
                out.push_str(&"  ".repeat(indent));
                out.push(']');
            }
            Value::Object(map) if !map.is_empty() => {
                out.push_str("{\n");
                for (k, (key, item)) in map.iter().enumerate() {
                    out.push_str(&pad);
                    out.push_str(&Value::String(key.clone()).to_string());
                    out.push_str(": ");
                    write(item, indent + 1, out);
                    out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
                }
                out.push_str(&"  ".repeat(indent));
                out.push('}');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let value = serde_json::to_value(value).expect("plain data serializes");
    let mut out = String::new();
    write(&value, 0, &mut out);
    out.push('\n');
    out
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::parse(path, e.line(), e.to_string())
}

pub fn params_to_json(params: &DeductronParams, config: Option<Value>) -> String {
    let quantized = params.mode == Mode::Quantized;
    let num = |v: f64| if quantized { Num::Int(v as i64) } else { Num::Real(v) };
    let rows = |m: &Matrix| {
        (0..m.rows())
            .map(|r| m.row(r).iter().map(|&v| num(v)).collect())
            .collect()
    };
    let file = ParamsFile {
        format: PARAMS_FORMAT.into(),
        n_in: params.n_in,
        n_memory: params.n_memory,
        n_out: params.n_out,
        mode: params.mode.name().into(),
        memory_start: Some(params.memory_start.name().into()),
        w1: rows(&params.w1),
        b1: params.b1.iter().map(|&v| num(v)).collect(),
        w2: rows(&params.w2),
        b2: params.b2.iter().map(|&v| num(v)).collect(),
        config,
    };
    to_json_text(&file)
}

/// Parameters and the optional stored run configuration.
pub fn params_from_json(text: &str, path: &Path) -> Result<(DeductronParams, Option<Value>)> {
    let file: ParamsFile = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    if file.format != PARAMS_FORMAT {
        return Err(Error::parse(
            path,
            1,
            format!("unknown format '{}', expected '{PARAMS_FORMAT}'", file.format),
        ));
    }
    let mode = match file.mode.as_str() {
        "quantized" => Mode::Quantized,
        "continuous" => Mode::Continuous,
        m => return Err(Error::parse(path, 1, format!("unknown mode '{m}'"))),
    };
    let memory_start = match file.memory_start.as_deref() {
        None => MemoryStart::default(),
        Some(name) => MemoryStart::from_name(name)
            .ok_or_else(|| Error::parse(path, 1, format!("unknown memory_start '{name}'")))?,
    };
    let matrix = |rows: &[Vec<Num>], n_rows: usize, n_cols: usize, name: &str| -> Result<Matrix> {
        if rows.len() != n_rows || rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::parse(path, 1, format!("{name} must be {n_rows}x{n_cols}")));
        }
        Matrix::from_row_major(n_rows, n_cols, rows.iter().flatten().map(|n| n.value()).collect())
    };
    let w1 = matrix(&file.w1, 2 * file.n_memory, file.n_in, "W1")?;
    let w2 = matrix(&file.w2, file.n_out, file.n_memory, "W2")?;
    let b1 = file.b1.iter().map(|n| n.value()).collect();
    let b2 = file.b2.iter().map(|n| n.value()).collect();
    let mut params = DeductronParams::new(w1, b1, w2, b2, mode).map_err(|e| Error::parse(path, 1, e.to_string()))?;
    params.memory_start = memory_start;
    Ok((params, file.config))
}

#[derive(Serialize, Deserialize)]
struct LstmFile {
    format: String,
    #[serde(flatten)]
    params: LstmParams,
}

pub fn lstm_to_json(params: &LstmParams) -> String {
    let file = LstmFile {
        format: LSTM_FORMAT.into(),
        params: params.clone(),
    };
    to_json_text(&file)
}

pub fn lstm_from_json(text: &str, path: &Path) -> Result<LstmParams> {
    let file: LstmFile = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    if file.format != LSTM_FORMAT {
        return Err(Error::parse(
            path,
            1,
            format!("unknown format '{}', expected '{LSTM_FORMAT}'", file.format),
        ));
    }
    file.params
        .validate()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    Ok(file.params)
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

pub fn read_image(path: &Path) -> Result<Image> {
    parse_image(&read(path)?, path)
}

pub fn read_dataset(path: &Path) -> Result<WindowSeq> {
    parse_dataset(&read(path)?, path)
}

pub fn read_chain(path: &Path) -> Result<ChainSeq> {
    parse_chain(&read(path)?, path)
}

pub fn read_params(path: &Path) -> Result<(DeductronParams, Option<Value>)> {
    params_from_json(&read(path)?, path)
}

pub fn read_lstm(path: &Path) -> Result<LstmParams> {
    lstm_from_json(&read(path)?, path)
}

/// Reads an image, or renders a chain file if the file holds one.
pub fn read_image_or_chain(path: &Path) -> Result<Image> {
    let text = read(path)?;
    if text.starts_with(CHAIN_TAG) {
        Ok(parse_chain(&text, path)?.to_image())
    } else {
        parse_image(&text, path)
    }
}
