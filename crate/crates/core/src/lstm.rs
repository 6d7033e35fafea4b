//! Peephole LSTM forward pass, kept as a baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{sigmoid, Matrix};

/// Gate weights. `w_*` act on the input, `u_*` on the previous cell state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub n_in: usize,
    pub n_cell: usize,
    #[serde(rename = "W_f")]
    pub w_f: Vec<Vec<f64>>,
    #[serde(rename = "W_i")]
    pub w_i: Vec<Vec<f64>>,
    #[serde(rename = "W_o")]
    pub w_o: Vec<Vec<f64>>,
    #[serde(rename = "W_c")]
    pub w_c: Vec<Vec<f64>>,
    #[serde(rename = "U_f")]
    pub u_f: Vec<Vec<f64>>,
    #[serde(rename = "U_i")]
    pub u_i: Vec<Vec<f64>>,
    #[serde(rename = "U_o")]
    pub u_o: Vec<Vec<f64>>,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_c: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(n_in: usize, n_cell: usize) -> Self {
        let w = vec![vec![0.0; n_in]; n_cell];
        let u = vec![vec![0.0; n_cell]; n_cell];
        let b = vec![0.0; n_cell];
        LstmParams {
            n_in,
            n_cell,
            w_f: w.clone(),
            w_i: w.clone(),
            w_o: w.clone(),
            w_c: w,
            u_f: u.clone(),
            u_i: u.clone(),
            u_o: u,
            b_f: b.clone(),
            b_i: b.clone(),
            b_o: b.clone(),
            b_c: b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, m: &[Vec<f64>], cols: usize| -> Result<()> {
            if m.len() != self.n_cell || m.iter().any(|r| r.len() != cols) {
                return Err(Error::Dimension(format!("{name} must be {}x{cols}", self.n_cell)));
            }
            Ok(())
        };
        check("W_f", &self.w_f, self.n_in)?;
        check("W_i", &self.w_i, self.n_in)?;
        check("W_o", &self.w_o, self.n_in)?;
        check("W_c", &self.w_c, self.n_in)?;
        check("U_f", &self.u_f, self.n_cell)?;
        check("U_i", &self.u_i, self.n_cell)?;
        check("U_o", &self.u_o, self.n_cell)?;
        for (name, b) in [
            ("b_f", &self.b_f),
            ("b_i", &self.b_i),
            ("b_o", &self.b_o),
            ("b_c", &self.b_c),
        ] {
            if b.len() != self.n_cell {
                return Err(Error::Dimension(format!("{name} must have length {}", self.n_cell)));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        4 * self.n_cell * self.n_in + 3 * self.n_cell * self.n_cell + 4 * self.n_cell
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub c: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let cols = rows.first().map_or(0, Vec::len);
    Matrix::from_row_major(rows.len(), cols, rows.concat()).expect("validated shape")
}

/// Runs the cell over `x` from `c_0 = 0`.
pub fn lstm_forward<X: AsRef<[f64]>>(params: &LstmParams, x: &[X]) -> Result<LstmTrace> {
    params.validate()?;
    if let Some(bad) = x.iter().find(|v| v.as_ref().len() != params.n_in) {
        return Err(Error::Dimension(format!(
            "input of length {}, expected {}",
            bad.as_ref().len(),
            params.n_in
        )));
    }
    let n = params.n_cell;
    let (wf, wi, wo, wc) = (
        to_matrix(&params.w_f),
        to_matrix(&params.w_i),
        to_matrix(&params.w_o),
        to_matrix(&params.w_c),
    );
    let (uf, ui, uo) = (to_matrix(&params.u_f), to_matrix(&params.u_i), to_matrix(&params.u_o));
    let zero = vec![0.0; n];
    let gate = |w: &Matrix, u: &Matrix, b: &[f64], xt: &[f64], c: &[f64]| -> Vec<f64> {
        let mut a = vec![0.0; n];
        let mut pc = vec![0.0; n];
        w.affine_into(xt, b, &mut a);
        u.affine_into(c, &zero, &mut pc);
        a.iter().zip(&pc).map(|(a, p)| sigmoid(a + p)).collect()
    };
    let mut c = vec![0.0; n];
    let mut trace = LstmTrace {
        c: Vec::with_capacity(x.len()),
        h: Vec::with_capacity(x.len()),
    };
    let mut cand = vec![0.0; n];
    for xt in x {
        let xt = xt.as_ref();
        let f = gate(&wf, &uf, &params.b_f, xt, &c);
        let i = gate(&wi, &ui, &params.b_i, xt, &c);
        let o = gate(&wo, &uo, &params.b_o, xt, &c);
        wc.affine_into(xt, &params.b_c, &mut cand);
        for k in 0..n {
            c[k] = f[k] * c[k] + i[k] * cand[k].tanh();
        }
        let h = (0..n).map(|k| o[k] * c[k].tanh()).collect();
        trace.c.push(c.clone());
        trace.h.push(h);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_params_stay_at_zero() {
        let p = LstmParams::zeros(6, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let tr = lstm_forward(&p, &x).unwrap();
        assert!(tr.h.iter().flatten().all(|&v| v == 0.0));
        assert!(tr.c.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_by_hand() {
        let mut p = LstmParams::zeros(1, 1);
        p.w_i = vec![vec![1.0]];
        p.w_c = vec![vec![1.0]];
        let tr = lstm_forward(&p, &[vec![1.0]]).unwrap();
        // i = sigmoid(1), candidate = tanh(1), o = sigmoid(0).
        let c1 = 0.7310585786300049 * 0.7615941559557649;
        assert!((tr.c[0][0] - c1).abs() < 1e-12);
        assert!((tr.c[0][0] - 0.5567699411459397).abs() < 1e-12);
        assert!((tr.h[0][0] - 0.252788465753554).abs() < 1e-12);
    }

    #[test]
    fn peephole_reads_previous_cell() {
        let mut p = LstmParams::zeros(1, 1);
        p.w_i = vec![vec![1.0]];
        p.w_c = vec![vec![1.0]];
        let plain = lstm_forward(&p, &[vec![1.0], vec![1.0]]).unwrap();
        p.u_f = vec![vec![5.0]];
        let peep = lstm_forward(&p, &[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(plain.c[0], peep.c[0]);
        assert!(peep.c[1][0] > plain.c[1][0]);
    }

    #[test]
    fn cell_growth_is_bounded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut p = LstmParams::zeros(3, 4);
        for m in [
            &mut p.w_f, &mut p.w_i, &mut p.w_o, &mut p.w_c, &mut p.u_f, &mut p.u_i, &mut p.u_o,
        ] {
            m.iter_mut().flatten().for_each(|v| *v = rng.gen_range(-3.0..3.0));
        }
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let tr = lstm_forward(&p, &x).unwrap();
        let mut prev = vec![0.0f64; 4];
        for c in &tr.c {
            for (c, p) in c.iter().zip(&prev) {
                assert!(c.abs() <= p.abs() + 1.0);
            }
            prev = c.clone();
        }
        assert!(tr.h.iter().flatten().all(|h| h.abs() < 1.0));
    }

    #[test]
    fn shape_errors() {
        let mut p = LstmParams::zeros(2, 2);
        assert!(lstm_forward(&p, &[vec![0.0; 3]]).is_err());
        p.u_o = vec![vec![0.0; 1]; 2];
        assert!(lstm_forward(&p, &[vec![0.0; 2]]).is_err());
    }

    #[test]
    fn json_uses_gate_names() {
        let p = LstmParams::zeros(1, 1);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"W_f\"") && s.contains("\"U_o\"") && s.contains("\"b_c\""));
        let back: LstmParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
