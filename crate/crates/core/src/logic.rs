//! Reading quantized perceptron rows as propositional formulas.
//!
//! With inputs in {0, 1}, a row `w` with bias `b` fires when
//! `sum_j w_j x_j + b <= 0`. If `b` equals the number of -1 weights the row
//! fires exactly when every -1 input is on and every +1 input is off.

use std::fmt;

use crate::error::{Error, Result};
use crate::network::{DeductronParams, Mode};

/// Largest input count for exhaustive constant checks.
pub const TRUTH_TABLE_LIMIT: usize = 20;
/// Largest input count for which minterms are listed.
pub const DNF_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Literal {
    pub index: usize,
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Conjunction,
    ConstantTrue,
    ConstantFalse,
    NonConjunctive,
}

impl UnitKind {
    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Conjunction => "conjunction",
            UnitKind::ConstantTrue => "constant_true",
            UnitKind::ConstantFalse => "constant_false",
            UnitKind::NonConjunctive => "non_conjunctive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitFormula {
    pub kind: UnitKind,
    pub weights: Vec<i32>,
    pub bias: i32,
    /// Set for conjunctions.
    pub literals: Vec<Literal>,
    /// Satisfying assignments as full conjunctions, for small non-conjunctive rows.
    pub dnf: Option<Vec<Vec<Literal>>>,
}

impl UnitFormula {
    /// Hard-threshold value of the row on a binary input.
    pub fn fires(&self, x: &[bool]) -> bool {
        fires(&self.weights, self.bias, x)
    }

    pub fn render(&self, names: &[String]) -> String {
        match self.kind {
            UnitKind::Conjunction => render_and(&self.literals, names),
            UnitKind::ConstantTrue => "TRUE".into(),
            UnitKind::ConstantFalse => "FALSE".into(),
            UnitKind::NonConjunctive => format!("S({})", render_affine(&self.weights, self.bias, names)),
        }
    }

    pub fn render_dnf(&self, names: &[String]) -> Option<String> {
        let dnf = self.dnf.as_ref()?;
        let terms: Vec<String> = dnf.iter().map(|c| render_and(c, names)).collect();
        Some(format!("OR({})", terms.join(", ")))
    }
}

fn render_literal(l: &Literal, names: &[String]) -> String {
    let name = &names[l.index];
    if l.positive {
        name.clone()
    } else {
        format!("!{name}")
    }
}

fn render_and(literals: &[Literal], names: &[String]) -> String {
    let parts: Vec<String> = literals.iter().map(|l| render_literal(l, names)).collect();
    format!("AND({})", parts.join(", "))
}

fn render_affine(weights: &[i32], bias: i32, names: &[String]) -> String {
    let mut out = String::new();
    for (w, name) in weights.iter().zip(names).filter(|(w, _)| **w != 0) {
        match (*w, out.is_empty()) {
            (1, true) => out.push_str(name),
            (-1, true) => out.push_str(&format!("-{name}")),
            (1, false) => out.push_str(&format!(" + {name}")),
            (-1, false) => out.push_str(&format!(" - {name}")),
            (w, _) => out.push_str(&format!(" {w:+}*{name}")),
        }
    }
    if out.is_empty() {
        return bias.to_string();
    }
    if bias != 0 {
        out.push_str(&format!(" + {bias}"));
    }
    out
}

fn fires(weights: &[i32], bias: i32, x: &[bool]) -> bool {
    let a: i32 = weights.iter().zip(x).filter(|(_, &on)| on).map(|(w, _)| w).sum::<i32>() + bias;
    a <= 0
}

/// `g(w) = w(w - 1)/2` summed over the row: the count of -1 entries.
pub fn bias_from_weights(row: &[i32]) -> i32 {
    row.iter().map(|w| w * (w - 1) / 2).sum()
}

fn assignments(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..1 << n).map(move |bits| (0..n).map(|j| bits >> j & 1 == 1).collect())
}

/// Classifies one quantized row.
pub fn row_to_formula(weights: &[f64], bias: f64) -> Result<UnitFormula> {
    let w = weights
        .iter()
        .map(|&v| {
            if v == -1.0 || v == 0.0 || v == 1.0 {
                Ok(v as i32)
            } else {
                Err(Error::Quantization(format!("weight {v}")))
            }
        })
        .collect::<Result<Vec<i32>>>()?;
    if bias.fract() != 0.0 || !(0.0..=5.0).contains(&bias) {
        return Err(Error::Quantization(format!("bias {bias}")));
    }
    let b = bias as i32;
    let n = w.len();
    let negatives = bias_from_weights(&w);

    let literals: Vec<Literal> = w
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(index, &v)| Literal {
            index,
            positive: v == -1,
        })
        .collect();

    let (always, never) = if n <= TRUTH_TABLE_LIMIT {
        let mut any_on = false;
        let mut any_off = false;
        for x in assignments(n) {
            if fires(&w, b, &x) {
                any_on = true;
            } else {
                any_off = true;
            }
            if any_on && any_off {
                break;
            }
        }
        (!any_off, !any_on)
    } else {
        let positives = w.iter().filter(|&&v| v == 1).count() as i32;
        (positives + b <= 0, b - negatives > 0)
    };

    let mut unit = UnitFormula {
        kind: UnitKind::NonConjunctive,
        weights: w,
        bias: b,
        literals: Vec::new(),
        dnf: None,
    };
    if always {
        unit.kind = UnitKind::ConstantTrue;
    } else if never {
        unit.kind = UnitKind::ConstantFalse;
    } else if b == negatives {
        unit.kind = UnitKind::Conjunction;
        unit.literals = literals;
    } else if n <= DNF_LIMIT {
        let minterms = assignments(n)
            .filter(|x| fires(&unit.weights, b, x))
            .map(|x| {
                x.iter()
                    .enumerate()
                    .map(|(index, &positive)| Literal { index, positive })
                    .collect()
            })
            .collect();
        unit.dnf = Some(minterms);
    }
    Ok(unit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogicReport {
    pub input_names: Vec<String>,
    pub memory_names: Vec<String>,
    pub hidden: Vec<UnitFormula>,
    pub outputs: Vec<UnitFormula>,
}

/// `x11, x21, x31, x12, x22, x32` for two-column windows, `x1..xn` otherwise.
pub fn input_names(n_in: usize) -> Vec<String> {
    if n_in == crate::decoder::WINDOW_LEN {
        (0..n_in).map(|j| format!("x{}{}", j % 3 + 1, j / 3 + 1)).collect()
    } else {
        (1..=n_in).map(|j| format!("x{j}")).collect()
    }
}

pub fn report(params: &DeductronParams) -> Result<LogicReport> {
    if params.mode != Mode::Quantized {
        return Err(Error::Mode {
            expected: Mode::Quantized.name(),
            got: params.mode.name(),
        });
    }
    let hidden = (0..params.w1.rows())
        .map(|r| row_to_formula(params.w1.row(r), params.b1[r]))
        .collect::<Result<_>>()?;
    let outputs = (0..params.w2.rows())
        .map(|r| row_to_formula(params.w2.row(r), params.b2[r]))
        .collect::<Result<_>>()?;
    Ok(LogicReport {
        input_names: input_names(params.n_in),
        memory_names: (1..=params.n_memory).map(|k| format!("z{k}")).collect(),
        hidden,
        outputs,
    })
}

impl LogicReport {
    pub fn render(&self, with_dnf: bool) -> String {
        let mut out = String::new();
        let m = self.hidden.len() / 2;
        let mut line = |name: String, unit: &UnitFormula, names: &[String]| {
            out.push_str(&format!("{name} = {}\n", unit.render(names)));
            if with_dnf {
                if let Some(d) = unit.render_dnf(names) {
                    out.push_str(&format!("    {d}\n"));
                }
            }
        };
        for (i, unit) in self.hidden.iter().enumerate() {
            let role = if i < m {
                format!("u{}", i + 1)
            } else {
                format!("v{}", i - m + 1)
            };
            line(format!("h{} ({role})", i + 1), unit, &self.input_names);
        }
        for (i, unit) in self.outputs.iter().enumerate() {
            line(format!("o{}", i + 1), unit, &self.memory_names);
        }
        out
    }
}

impl fmt::Display for LogicReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::handcrafted_params;

    fn lit(index: usize, positive: bool) -> Literal {
        Literal { index, positive }
    }

    #[test]
    fn start_of_x_row() {
        let u = row_to_formula(&[0.0, 1.0, 1.0, 0.0, 0.0, -1.0], 1.0).unwrap();
        assert_eq!(u.kind, UnitKind::Conjunction);
        assert_eq!(u.literals, vec![lit(1, false), lit(2, false), lit(5, true)]);
        assert_eq!(u.render(&input_names(6)), "AND(!x21, !x31, x32)");
    }

    #[test]
    fn obfuscated_false_row() {
        let u = row_to_formula(&[1.0, 1.0, 0.0, -1.0, 0.0, 1.0], 3.0).unwrap();
        assert_eq!(u.kind, UnitKind::ConstantFalse);
    }

    #[test]
    fn non_conjunctive_row_has_complete_dnf() {
        let w = [0.0, 1.0, -1.0, 1.0, 1.0, -1.0];
        let u = row_to_formula(&w, 1.0).unwrap();
        assert_eq!(u.kind, UnitKind::NonConjunctive);
        let dnf = u.dnf.as_ref().unwrap();
        assert_eq!(dnf.len(), 12);
        for x in assignments(6) {
            let a: f64 = w.iter().zip(&x).map(|(w, &b)| if b { *w } else { 0.0 }).sum::<f64>() + 1.0;
            let in_dnf = dnf.iter().any(|c| c.iter().all(|l| x[l.index] == l.positive));
            assert_eq!(in_dnf, a <= 0.0);
        }
    }

    #[test]
    fn bias_formula() {
        assert_eq!(bias_from_weights(&[-1, -1, 0, 1]), 2);
        assert_eq!(bias_from_weights(&[-1]), 1);
        assert_eq!(bias_from_weights(&[0; 6]), 0);
        assert_eq!(bias_from_weights(&[1, 1]), 0);
    }

    #[test]
    fn zero_row_is_constant_true() {
        let u = row_to_formula(&[0.0; 6], 0.0).unwrap();
        assert_eq!(u.kind, UnitKind::ConstantTrue);
        assert_eq!(row_to_formula(&[0.0; 6], 1.0).unwrap().kind, UnitKind::ConstantFalse);
    }

    #[test]
    fn rejects_non_quantized() {
        assert!(row_to_formula(&[0.5], 0.0).is_err());
        assert!(row_to_formula(&[1.0], 6.0).is_err());
        assert!(row_to_formula(&[1.0], 1.5).is_err());
    }

    #[test]
    fn conjunctions_are_sound_for_every_small_row() {
        // Every row over three inputs with every admissible bias.
        for code in 0..27 {
            let w: Vec<f64> = (0..3).map(|j| f64::from((code / 3i32.pow(j)) % 3 - 1)).collect();
            for b in 0..=5 {
                let u = row_to_formula(&w, f64::from(b)).unwrap();
                for x in assignments(3) {
                    let expected = match u.kind {
                        UnitKind::Conjunction => u.literals.iter().all(|l| x[l.index] == l.positive),
                        UnitKind::ConstantTrue => true,
                        UnitKind::ConstantFalse => false,
                        UnitKind::NonConjunctive => u
                            .dnf
                            .as_ref()
                            .unwrap()
                            .iter()
                            .any(|c| c.iter().all(|l| x[l.index] == l.positive)),
                    };
                    assert_eq!(u.fires(&x), expected, "{w:?} {b} {x:?}");
                }
                let negatives = w.iter().filter(|&&v| v == -1.0).count() as i32;
                if u.kind == UnitKind::Conjunction {
                    assert_eq!(b, negatives);
                }
            }
        }
    }

    #[test]
    fn wide_rows_use_bounds() {
        let mut w = vec![0.0; 24];
        w[3] = -1.0;
        w[7] = 1.0;
        assert_eq!(row_to_formula(&w, 1.0).unwrap().kind, UnitKind::Conjunction);
        assert_eq!(row_to_formula(&w, 2.0).unwrap().kind, UnitKind::ConstantFalse);
        let u = row_to_formula(&w, 0.0).unwrap();
        assert_eq!(u.kind, UnitKind::NonConjunctive);
        assert!(u.dnf.is_none());
    }

    #[test]
    fn handcrafted_report() {
        let r = report(&handcrafted_params()).unwrap();
        let text = r.render(false);
        assert_eq!(
            text,
            "h1 (u1) = AND(!x21, !x31, x32)\n\
             h2 (u2) = AND(!x11, !x21, x12)\n\
             h3 (u3) = AND(!x11, x12)\n\
             h4 (u4) = AND(!x31, x32)\n\
             h5 (v1) = AND(!x11, !x21, x12)\n\
             h6 (v2) = AND(!x21, !x31, x32)\n\
             h7 (v3) = TRUE\n\
             h8 (v4) = TRUE\n\
             o1 = AND(z1, z3)\n\
             o2 = AND(z2, z4)\n"
        );
        assert_eq!(text, report(&handcrafted_params()).unwrap().to_string());
    }

    #[test]
    fn mismatched_bias_is_flagged() {
        let mut p = handcrafted_params();
        p.b1[0] = 2.0;
        let r = report(&p).unwrap();
        assert_ne!(r.hidden[0].kind, UnitKind::Conjunction);
        let c = crate::network::quantized_to_continuous(&p, 1.0).unwrap();
        assert!(report(&c).is_err());
    }
}
