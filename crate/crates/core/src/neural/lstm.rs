//! LSTM classifier reading the ordered factor vector as a length-f
//! sequence of scalar steps.
//!
//! Standard gating: sigmoid input/forget/output gates, a configurable
//! candidate nonlinearity which is also applied to the cell state on the
//! way out (mirroring the usual `activation` hyperparameter), and a dense
//! sigmoid head on the final hidden state. Dropout acts on that final
//! hidden state during training only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FactorTable;
use crate::error::{Error, Result};
use crate::learners::logistic::sigmoid;
use crate::neural::{
    glorot, head_loss_and_delta, sgd_train, Activation, ActivationTrace, NeuralNet,
    OutputActivation,
};

/// LSTM architecture and training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub units: usize,
    pub dropout: f64,
    /// Candidate / cell-output nonlinearity (gates are always sigmoid).
    pub activation: Activation,
    pub output: OutputActivation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            units: 100,
            dropout: 0.2,
            activation: Activation::Tanh,
            output: OutputActivation::Sigmoid,
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.02,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Trained LSTM. Parameter vector layout (for [`LstmModel::params`] /
/// [`LstmModel::set_params`]): per gate in input/forget/candidate/output
/// order — input weights (units), recurrent weights (units×units,
/// row-major by target unit), biases (units) — then dense weights (units)
/// and the dense bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    n_factors: usize,
    pub units: usize,
    pub activation: Activation,
    pub output: OutputActivation,
    wx_i: Vec<f64>,
    wh_i: Vec<f64>,
    b_i: Vec<f64>,
    wx_f: Vec<f64>,
    wh_f: Vec<f64>,
    b_f: Vec<f64>,
    wx_g: Vec<f64>,
    wh_g: Vec<f64>,
    b_g: Vec<f64>,
    wx_o: Vec<f64>,
    wh_o: Vec<f64>,
    b_o: Vec<f64>,
    dense_weights: Vec<f64>,
    dense_bias: f64,
    /// Mean training loss after each epoch.
    pub train_loss: Vec<f64>,
}

/// Per-step record of one forward pass; every vector is `[step][unit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub input: Vec<f64>,
    pub gate_i_pre: Vec<Vec<f64>>,
    pub gate_i: Vec<Vec<f64>>,
    pub gate_f_pre: Vec<Vec<f64>>,
    pub gate_f: Vec<Vec<f64>>,
    pub cand_pre: Vec<Vec<f64>>,
    pub cand: Vec<Vec<f64>>,
    pub gate_o_pre: Vec<Vec<f64>>,
    pub gate_o: Vec<Vec<f64>>,
    pub cell: Vec<Vec<f64>>,
    /// Cell state after the output nonlinearity (pre-value is `cell`).
    pub cell_out: Vec<Vec<f64>>,
    pub hidden: Vec<Vec<f64>>,
    pub dense_pre: f64,
    pub score: f64,
}

impl LstmModel {
    /// Zero-initialized model (weights set later via
    /// [`LstmModel::set_params`] or training).
    pub fn zeroed(
        n_factors: usize,
        units: usize,
        activation: Activation,
        output: OutputActivation,
    ) -> Result<Self> {
        if units == 0 || n_factors == 0 {
            return Err(Error::InvalidArgument(
                "units and factor count must be ≥ 1".into(),
            ));
        }
        let z = |len: usize| vec![0.0; len];
        Ok(LstmModel {
            n_factors,
            units,
            activation,
            output,
            wx_i: z(units),
            wh_i: z(units * units),
            b_i: z(units),
            wx_f: z(units),
            wh_f: z(units * units),
            b_f: z(units),
            wx_g: z(units),
            wh_g: z(units * units),
            b_g: z(units),
            wx_o: z(units),
            wh_o: z(units * units),
            b_o: z(units),
            dense_weights: z(units),
            dense_bias: 0.0,
            train_loss: Vec::new(),
        })
    }

    fn seeded(base: Self, rng: &mut ChaCha8Rng) -> Self {
        let mut m = base;
        let u = m.units;
        m.wx_i = glorot(rng, 1, u, u);
        m.wh_i = glorot(rng, u, u, u * u);
        m.wx_f = glorot(rng, 1, u, u);
        m.wh_f = glorot(rng, u, u, u * u);
        m.wx_g = glorot(rng, 1, u, u);
        m.wh_g = glorot(rng, u, u, u * u);
        m.wx_o = glorot(rng, 1, u, u);
        m.wh_o = glorot(rng, u, u, u * u);
        m.dense_weights = glorot(rng, u, 1, u);
        m
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn dense_weights(&self) -> &[f64] {
        &self.dense_weights
    }

    pub fn dense_bias(&self) -> f64 {
        self.dense_bias
    }

    /// Input and recurrent weights per gate, in (input, forget, candidate,
    /// output) order — each entry is (wx of length `units`, wh of length
    /// `units²`). Used by attribution back-propagation.
    pub(crate) fn gate_weights(&self) -> [(&[f64], &[f64]); 4] {
        [
            (&self.wx_i, &self.wh_i),
            (&self.wx_f, &self.wh_f),
            (&self.wx_g, &self.wh_g),
            (&self.wx_o, &self.wh_o),
        ]
    }

    fn forward(&self, x: &[f64], mask: Option<&[f64]>) -> LstmTrace {
        let u = self.units;
        let steps = x.len();
        let mut trace = LstmTrace {
            input: x.to_vec(),
            gate_i_pre: Vec::with_capacity(steps),
            gate_i: Vec::with_capacity(steps),
            gate_f_pre: Vec::with_capacity(steps),
            gate_f: Vec::with_capacity(steps),
            cand_pre: Vec::with_capacity(steps),
            cand: Vec::with_capacity(steps),
            gate_o_pre: Vec::with_capacity(steps),
            gate_o: Vec::with_capacity(steps),
            cell: Vec::with_capacity(steps),
            cell_out: Vec::with_capacity(steps),
            hidden: Vec::with_capacity(steps),
            dense_pre: 0.0,
            score: 0.0,
        };
        let mut h = vec![0.0; u];
        let mut c = vec![0.0; u];
        for &xt in x {
            let pre = |wx: &[f64], wh: &[f64], b: &[f64]| -> Vec<f64> {
                (0..u)
                    .map(|k| {
                        let mut z = wx[k] * xt + b[k];
                        for (v, &hv) in h.iter().enumerate() {
                            z += wh[k * u + v] * hv;
                        }
                        z
                    })
                    .collect()
            };
            let zi = pre(&self.wx_i, &self.wh_i, &self.b_i);
            let zf = pre(&self.wx_f, &self.wh_f, &self.b_f);
            let zg = pre(&self.wx_g, &self.wh_g, &self.b_g);
            let zo = pre(&self.wx_o, &self.wh_o, &self.b_o);
            let gi: Vec<f64> = zi.iter().map(|&z| sigmoid(z)).collect();
            let gf: Vec<f64> = zf.iter().map(|&z| sigmoid(z)).collect();
            let gg: Vec<f64> = zg.iter().map(|&z| self.activation.apply(z)).collect();
            let go: Vec<f64> = zo.iter().map(|&z| sigmoid(z)).collect();
            let cell: Vec<f64> = (0..u).map(|k| gf[k] * c[k] + gi[k] * gg[k]).collect();
            let cell_out: Vec<f64> = cell.iter().map(|&v| self.activation.apply(v)).collect();
            let hidden: Vec<f64> = (0..u).map(|k| go[k] * cell_out[k]).collect();
            c = cell.clone();
            h = hidden.clone();
            trace.gate_i_pre.push(zi);
            trace.gate_i.push(gi);
            trace.gate_f_pre.push(zf);
            trace.gate_f.push(gf);
            trace.cand_pre.push(zg);
            trace.cand.push(gg);
            trace.gate_o_pre.push(zo);
            trace.gate_o.push(go);
            trace.cell.push(cell);
            trace.cell_out.push(cell_out);
            trace.hidden.push(hidden);
        }
        let mut dense_pre = self.dense_bias;
        for k in 0..u {
            let m = mask.map_or(1.0, |m| m[k]);
            dense_pre += self.dense_weights[k] * h[k] * m;
        }
        trace.dense_pre = dense_pre;
        trace.score = match self.output {
            OutputActivation::Sigmoid => sigmoid(dense_pre),
            OutputActivation::Identity => dense_pre,
        };
        trace
    }

    pub fn predict(&self, sample: &[f64]) -> f64 {
        assert_eq!(
            sample.len(),
            self.n_factors,
            "sample length does not match the model's factor count"
        );
        self.forward(sample, None).score
    }

    /// Forward pass with the full per-step record.
    pub fn forward_with_trace(&self, sample: &[f64]) -> Result<(f64, ActivationTrace)> {
        if sample.len() != self.n_factors {
            return Err(Error::DimensionMismatch {
                expected: self.n_factors,
                actual: sample.len(),
            });
        }
        let trace = self.forward(sample, None);
        let score = trace.score;
        Ok((score, ActivationTrace::Lstm(trace)))
    }
}

impl NeuralNet for LstmModel {
    fn params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for part in [
            &self.wx_i, &self.wh_i, &self.b_i, &self.wx_f, &self.wh_f, &self.b_f, &self.wx_g,
            &self.wh_g, &self.b_g, &self.wx_o, &self.wh_o, &self.b_o, &self.dense_weights,
        ] {
            p.extend_from_slice(part);
        }
        p.push(self.dense_bias);
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let u = self.units;
        let expected = 4 * (u + u * u + u) + u + 1;
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: params.len(),
            });
        }
        let mut off = 0;
        for field in [
            &mut self.wx_i,
            &mut self.wh_i,
            &mut self.b_i,
            &mut self.wx_f,
            &mut self.wh_f,
            &mut self.b_f,
            &mut self.wx_g,
            &mut self.wh_g,
            &mut self.b_g,
            &mut self.wx_o,
            &mut self.wh_o,
            &mut self.b_o,
            &mut self.dense_weights,
        ] {
            let len = field.len();
            field.copy_from_slice(&params[off..off + len]);
            off += len;
        }
        self.dense_bias = params[off];
        Ok(())
    }

    fn mask_len(&self) -> usize {
        self.units
    }

    fn loss_and_grad(
        &self,
        xs: &[&[f64]],
        ys: &[f64],
        masks: Option<&[Vec<f64>]>,
    ) -> (f64, Vec<f64>) {
        let u = self.units;
        let mut loss = 0.0;
        let mut g = vec![0.0; 4 * (u + u * u + u) + u + 1];
        // Gradient slice offsets mirror the params() layout.
        let block = u + u * u + u;
        let off_dense = 4 * block;
        for (s, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            let mask = masks.map(|m| m[s].as_slice());
            let trace = self.forward(x, mask);
            let (_, l, delta) = head_loss_and_delta(self.output, trace.dense_pre, y);
            loss += l;
            let steps = x.len();
            let h_last = &trace.hidden[steps - 1];
            g[off_dense + u] += delta; // dense bias
            let mut dh = vec![0.0; u];
            for k in 0..u {
                let m = mask.map_or(1.0, |m| m[k]);
                g[off_dense + k] += delta * h_last[k] * m;
                dh[k] = delta * self.dense_weights[k] * m;
            }
            let mut dc = vec![0.0; u];
            for t in (0..steps).rev() {
                let xt = x[t];
                let gi = &trace.gate_i[t];
                let gf = &trace.gate_f[t];
                let gg = &trace.cand[t];
                let go = &trace.gate_o[t];
                let mut dzi = vec![0.0; u];
                let mut dzf = vec![0.0; u];
                let mut dzg = vec![0.0; u];
                let mut dzo = vec![0.0; u];
                for k in 0..u {
                    let dzo_k = dh[k] * trace.cell_out[t][k] * go[k] * (1.0 - go[k]);
                    dc[k] += dh[k]
                        * go[k]
                        * self
                            .activation
                            .derivative(trace.cell[t][k], trace.cell_out[t][k]);
                    let c_prev = if t > 0 { trace.cell[t - 1][k] } else { 0.0 };
                    dzi[k] = dc[k] * gg[k] * gi[k] * (1.0 - gi[k]);
                    dzg[k] = dc[k]
                        * gi[k]
                        * self.activation.derivative(trace.cand_pre[t][k], gg[k]);
                    dzf[k] = dc[k] * c_prev * gf[k] * (1.0 - gf[k]);
                    dzo[k] = dzo_k;
                }
                let h_prev: Option<&Vec<f64>> = if t > 0 { Some(&trace.hidden[t - 1]) } else { None };
                for (gate, dz) in [(0, &dzi), (1, &dzf), (2, &dzg), (3, &dzo)] {
                    let base = gate * block;
                    for k in 0..u {
                        g[base + k] += dz[k] * xt;
                        g[base + u + u * u + k] += dz[k];
                        if let Some(hp) = h_prev {
                            for v in 0..u {
                                g[base + u + k * u + v] += dz[k] * hp[v];
                            }
                        }
                    }
                }
                let mut dh_prev = vec![0.0; u];
                for k in 0..u {
                    for v in 0..u {
                        dh_prev[v] += self.wh_i[k * u + v] * dzi[k]
                            + self.wh_f[k * u + v] * dzf[k]
                            + self.wh_g[k * u + v] * dzg[k]
                            + self.wh_o[k * u + v] * dzo[k];
                    }
                }
                for k in 0..u {
                    dc[k] *= gf[k];
                }
                dh = dh_prev;
            }
        }
        let scale = 1.0 / xs.len() as f64;
        for gk in &mut g {
            *gk *= scale;
        }
        (loss * scale, g)
    }
}

/// Trains an LSTM classifier on a labeled (typically standardized) table.
/// Deterministic for a given seed.
pub fn train_lstm(table: &FactorTable, config: &LstmConfig) -> Result<LstmModel> {
    let (xs, ys) = crate::learners::design_from_table(table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base = LstmModel::zeroed(xs[0].len(), config.units, config.activation, config.output)?;
    let mut model = LstmModel::seeded(base, &mut rng);
    let losses = sgd_train(
        &mut model,
        &xs,
        &ys,
        config.epochs,
        config.batch_size,
        config.learning_rate,
        config.momentum,
        config.dropout,
        &mut rng,
    )?;
    model.train_loss = losses;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FactorMeta;
    use rand::Rng;

    fn table(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> FactorTable {
        let names: Vec<String> = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
        let metas: Vec<FactorMeta> = names
            .iter()
            .map(|n| FactorMeta::continuous(n, false, ""))
            .collect();
        FactorTable::from_rows(metas, &rows, Some(labels)).unwrap()
    }

    /// All-zero weights and biases freeze the cell at zero, so the sigmoid
    /// head emits exactly 0.5 whatever the input.
    #[test]
    fn zero_parameters_give_half_everywhere() {
        let model =
            LstmModel::zeroed(5, 3, Activation::Tanh, OutputActivation::Sigmoid).unwrap();
        for x in [
            vec![0.0; 5],
            vec![1.0, -2.0, 3.0, -4.0, 5.0],
            vec![100.0; 5],
        ] {
            assert_eq!(model.predict(&x), 0.5);
        }
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let ys = vec![1.0, 0.0, 1.0];
        for activation in [Activation::Tanh, Activation::Elu] {
            for output in [OutputActivation::Sigmoid, OutputActivation::Identity] {
                let base = LstmModel::zeroed(4, 3, activation, output).unwrap();
                let mut model = LstmModel::seeded(base, &mut rng);
                let start = model.params();
                let (_, analytic) = model.loss_and_grad(&refs, &ys, None);
                let h = 1e-5;
                for j in 0..start.len() {
                    let mut plus = start.clone();
                    plus[j] += h;
                    model.set_params(&plus).unwrap();
                    let (lp, _) = model.loss_and_grad(&refs, &ys, None);
                    let mut minus = start.clone();
                    minus[j] -= h;
                    model.set_params(&minus).unwrap();
                    let (lm, _) = model.loss_and_grad(&refs, &ys, None);
                    let fd = (lp - lm) / (2.0 * h);
                    let denom = analytic[j].abs().max(fd.abs()).max(1e-4);
                    assert!(
                        (fd - analytic[j]).abs() / denom < 1e-4,
                        "{activation:?}/{output:?} param {j}: fd {fd} vs {}",
                        analytic[j]
                    );
                }
                model.set_params(&start).unwrap();
            }
        }
    }

    #[test]
    fn trace_replays_bit_exactly_and_gates_stay_in_unit_interval() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let base = LstmModel::zeroed(6, 4, Activation::Tanh, OutputActivation::Sigmoid).unwrap();
        let model = LstmModel::seeded(base, &mut rng);
        let x: Vec<f64> = (0..6).map(|i| ((i * i) as f64 * 0.21).cos()).collect();
        let (score, trace) = model.forward_with_trace(&x).unwrap();
        assert_eq!(score, model.predict(&x));
        let ActivationTrace::Lstm(t) = &trace else {
            panic!("expected an LSTM trace")
        };
        assert_eq!(t.hidden.len(), 6);
        assert_eq!(t.hidden[0].len(), 4);
        for gate in [&t.gate_i, &t.gate_f, &t.gate_o] {
            for v in gate.iter().flatten() {
                assert!(*v > 0.0 && *v < 1.0, "gate value {v} not in (0,1)");
            }
        }
        assert!(t.cell.iter().flatten().all(|v| v.is_finite()));
        let (score2, trace2) = model.forward_with_trace(t.input.as_slice()).unwrap();
        assert_eq!(score.to_bits(), score2.to_bits());
        assert_eq!(trace, trace2);
        assert!(model.forward_with_trace(&x[..3]).is_err());
    }

    #[test]
    fn separable_data_reaches_ninety_percent() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        while rows.len() < 120 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.73..1.73)).collect();
            let margin: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            if margin.abs() < 0.8 {
                continue;
            }
            labels.push(u8::from(margin > 0.0));
            rows.push(x);
        }
        let t = table(rows.clone(), labels.clone());
        let model = train_lstm(
            &t,
            &LstmConfig {
                units: 12,
                dropout: 0.0,
                epochs: 150,
                batch_size: 16,
                learning_rate: 0.03,
                seed: 2,
                ..LstmConfig::default()
            },
        )
        .unwrap();
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(x, &y)| (model.predict(x) >= 0.5) == (y == 1))
            .count();
        let accuracy = correct as f64 / rows.len() as f64;
        assert!(accuracy >= 0.9, "training accuracy {accuracy}");
    }

    #[test]
    fn first_epoch_loss_does_not_increase_at_small_rate() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[1] - r[5] > 0.0)).collect();
        let t = table(rows, labels);
        let model = train_lstm(
            &t,
            &LstmConfig {
                units: 4,
                dropout: 0.0,
                epochs: 2,
                learning_rate: 1e-3,
                seed: 1,
                ..LstmConfig::default()
            },
        )
        .unwrap();
        assert!(model.train_loss[0].is_finite());
        assert!(model.train_loss[1] <= model.train_loss[0] + 1e-12);
    }

    #[test]
    fn training_is_deterministic_even_with_dropout() {
        let rows: Vec<Vec<f64>> = (0..24)
            .map(|i| (0..5).map(|j| ((i * 5 + j * 11) % 17) as f64 / 17.0).collect())
            .collect();
        let labels: Vec<u8> = (0..24).map(|i| u8::from(i % 4 == 0)).collect();
        let t = table(rows, labels);
        let config = LstmConfig {
            units: 3,
            dropout: 0.3,
            epochs: 3,
            seed: 12,
            ..LstmConfig::default()
        };
        let a = train_lstm(&t, &config).unwrap();
        let b = train_lstm(&t, &config).unwrap();
        assert_eq!(a, b);
    }
}
