//! Reference-difference attribution for the traced neural models.
//!
//! Contributions are propagated backwards through the network as
//! multipliers on activation differences Δ = activation(x) −
//! activation(reference):
//!
//! * nonlinearities carry the rescale multiplier Δoutput/Δinput, falling
//!   back to the exact derivative at the reference when |Δinput| < 1e-9;
//! * linear layers compose multipliers with their weights (biases cancel
//!   in the difference);
//! * elementwise products u·v (the LSTM gate couplings) split as
//!   m_u = v̄·m, m_v = ū·m with x̄ = (x + x_ref)/2, which satisfies
//!   Δu·v̄ + ū·Δv = Δ(uv) identically;
//! * max-pool windows distribute their Δoutput over window inputs
//!   proportionally to Δinput² (routing everything to the reference
//!   maximum when the window is unchanged).
//!
//! Every rule conserves the propagated total, so the factor contributions
//! sum to score(x) − score(reference) up to float error.

use crate::attribution::{Attribution, AttributionMethod};
use crate::error::{Error, Result};
use crate::learners::TrainedModel;
use crate::neural::{ActivationTrace, CnnModel, CnnTrace, LstmModel, LstmTrace, OutputActivation};

/// Below this activation difference the rescale ratio is numerically
/// meaningless and the reference derivative is used instead.
const DELTA_EPS: f64 = 1e-9;

#[inline]
fn rescale(delta_out: f64, delta_in: f64, grad_at_reference: f64) -> f64 {
    if delta_in.abs() < DELTA_EPS {
        grad_at_reference
    } else {
        delta_out / delta_in
    }
}

fn sigmoid_grad(post: f64) -> f64 {
    post * (1.0 - post)
}

fn output_multiplier(
    output: OutputActivation,
    score_x: f64,
    score_ref: f64,
    pre_x: f64,
    pre_ref: f64,
) -> f64 {
    let grad = match output {
        OutputActivation::Sigmoid => sigmoid_grad(score_ref),
        OutputActivation::Identity => 1.0,
    };
    rescale(score_x - score_ref, pre_x - pre_ref, grad)
}

fn check_reference(x: &[f64], reference: &[f64], n_factors: usize) -> Result<()> {
    for (len, what) in [(x.len(), "sample"), (reference.len(), "reference")] {
        if len != n_factors {
            let _ = what;
            return Err(Error::DimensionMismatch {
                expected: n_factors,
                actual: len,
            });
        }
    }
    Ok(())
}

/// Dispatches to the matching network-specific propagation; statistical
/// and tree models have no activation trace to propagate through.
pub fn deeplift(model: &TrainedModel, x: &[f64], reference: &[f64]) -> Result<Attribution> {
    match model {
        TrainedModel::Cnn(m) => deeplift_cnn(m, x, reference),
        TrainedModel::Lstm(m) => deeplift_lstm(m, x, reference),
        other => Err(Error::InvalidArgument(format!(
            "reference-difference attribution needs a traced neural model (cnn or lstm), \
             got {}",
            other.kind().as_str()
        ))),
    }
}

fn cnn_trace(model: &CnnModel, sample: &[f64]) -> Result<CnnTrace> {
    let (_, trace) = model.forward_with_trace(sample)?;
    match trace {
        ActivationTrace::Cnn(t) => Ok(t),
        ActivationTrace::Lstm(_) => unreachable!("cnn forward produced an lstm trace"),
    }
}

/// Propagates reference differences through dense → max-pool →
/// activation → convolution and returns per-factor contributions.
/// The baseline is the model score at the reference.
pub fn deeplift_cnn(model: &CnnModel, x: &[f64], reference: &[f64]) -> Result<Attribution> {
    check_reference(x, reference, model.n_factors())?;
    let tx = cnn_trace(model, x)?;
    let tr = cnn_trace(model, reference)?;

    let m_out = output_multiplier(model.output, tx.score, tr.score, tx.dense_pre, tr.dense_pre);

    let conv_len = model.conv_len();
    let pooled_len = model.pooled_len();
    let dense = model.dense_weights();

    // Dense layer is linear; the pool rule then spreads each window's
    // share over the window inputs in proportion to Δinput².
    let mut m_conv_post = vec![vec![0.0; conv_len]; model.filters];
    for fi in 0..model.filters {
        for pt in 0..pooled_len {
            let m_pool = m_out * dense[fi * pooled_len + pt];
            let d_out = tx.pooled[fi][pt] - tr.pooled[fi][pt];
            let start = pt * model.pool_width;
            let end = (start + model.pool_width).min(conv_len);
            let sum_sq: f64 = (start..end)
                .map(|t| {
                    let d = tx.conv_post[fi][t] - tr.conv_post[fi][t];
                    d * d
                })
                .sum();
            if sum_sq < 1e-18 {
                // Unchanged window: route through the reference maximum,
                // mirroring the gradient of max-pool at the reference.
                m_conv_post[fi][tr.pool_argmax[fi][pt]] += m_pool;
            } else {
                for t in start..end {
                    let d_in = tx.conv_post[fi][t] - tr.conv_post[fi][t];
                    m_conv_post[fi][t] += m_pool * d_in * d_out / sum_sq;
                }
            }
        }
    }

    let weights = model.conv_weights();
    let mut m_input = vec![0.0; model.n_factors()];
    for fi in 0..model.filters {
        for t in 0..conv_len {
            let grad = model
                .activation
                .derivative(tr.conv_pre[fi][t], tr.conv_post[fi][t]);
            let m_pre = m_conv_post[fi][t]
                * rescale(
                    tx.conv_post[fi][t] - tr.conv_post[fi][t],
                    tx.conv_pre[fi][t] - tr.conv_pre[fi][t],
                    grad,
                );
            for tap in 0..model.kernel_width {
                m_input[t + tap] += m_pre * weights[fi * model.kernel_width + tap];
            }
        }
    }

    let phi: Vec<f64> = m_input
        .iter()
        .zip(x.iter().zip(reference))
        .map(|(m, (xi, ri))| m * (xi - ri))
        .collect();
    Ok(Attribution {
        method: AttributionMethod::DeepLift,
        phi,
        baseline: tr.score,
        seed: None,
    })
}

fn lstm_trace(model: &LstmModel, sample: &[f64]) -> Result<LstmTrace> {
    let (_, trace) = model.forward_with_trace(sample)?;
    match trace {
        ActivationTrace::Lstm(t) => Ok(t),
        ActivationTrace::Cnn(_) => unreachable!("lstm forward produced a cnn trace"),
    }
}

/// Propagates reference differences backwards through the recurrence.
/// Gate products use the split-in-half product rule; the cell and hidden
/// multipliers are carried from step to step. At step 0 both states are
/// zero for any input, so their differences vanish and the recursion
/// closes exactly.
pub fn deeplift_lstm(model: &LstmModel, x: &[f64], reference: &[f64]) -> Result<Attribution> {
    check_reference(x, reference, model.n_factors())?;
    let tx = lstm_trace(model, x)?;
    let tr = lstm_trace(model, reference)?;

    let u = model.units;
    let steps = model.n_factors();
    let m_out = output_multiplier(model.output, tx.score, tr.score, tx.dense_pre, tr.dense_pre);

    // Multipliers on Δhidden and Δcell of the step currently being undone.
    let mut m_h: Vec<f64> = model.dense_weights().iter().map(|w| m_out * w).collect();
    let mut m_c = vec![0.0; u];
    let gates = model.gate_weights();
    let mut phi = vec![0.0; steps];

    for t in (0..steps).rev() {
        // Pre-activation multipliers per gate: input, forget, candidate,
        // output — in the order gate_weights() returns them.
        let mut m_z = [vec![0.0; u], vec![0.0; u], vec![0.0; u], vec![0.0; u]];
        let mut m_c_prev = vec![0.0; u];
        for k in 0..u {
            // hidden = gate_o · cell_out
            let (o_x, o_r) = (tx.gate_o[t][k], tr.gate_o[t][k]);
            let (co_x, co_r) = (tx.cell_out[t][k], tr.cell_out[t][k]);
            let m_o = 0.5 * (co_x + co_r) * m_h[k];
            let m_cell_out = 0.5 * (o_x + o_r) * m_h[k];

            // cell_out = activation(cell)
            let grad_co = model.activation.derivative(tr.cell[t][k], co_r);
            let m_cell = m_c[k]
                + m_cell_out * rescale(co_x - co_r, tx.cell[t][k] - tr.cell[t][k], grad_co);

            // cell = gate_f · cell_prev + gate_i · candidate
            let (cp_x, cp_r) = if t == 0 {
                (0.0, 0.0)
            } else {
                (tx.cell[t - 1][k], tr.cell[t - 1][k])
            };
            let (f_x, f_r) = (tx.gate_f[t][k], tr.gate_f[t][k]);
            let (i_x, i_r) = (tx.gate_i[t][k], tr.gate_i[t][k]);
            let (g_x, g_r) = (tx.cand[t][k], tr.cand[t][k]);
            let m_f = 0.5 * (cp_x + cp_r) * m_cell;
            m_c_prev[k] = 0.5 * (f_x + f_r) * m_cell;
            let m_i = 0.5 * (g_x + g_r) * m_cell;
            let m_g = 0.5 * (i_x + i_r) * m_cell;

            m_z[0][k] = m_i
                * rescale(
                    i_x - i_r,
                    tx.gate_i_pre[t][k] - tr.gate_i_pre[t][k],
                    sigmoid_grad(i_r),
                );
            m_z[1][k] = m_f
                * rescale(
                    f_x - f_r,
                    tx.gate_f_pre[t][k] - tr.gate_f_pre[t][k],
                    sigmoid_grad(f_r),
                );
            m_z[2][k] = m_g
                * rescale(
                    g_x - g_r,
                    tx.cand_pre[t][k] - tr.cand_pre[t][k],
                    model.activation.derivative(tr.cand_pre[t][k], g_r),
                );
            m_z[3][k] = m_o
                * rescale(
                    o_x - o_r,
                    tx.gate_o_pre[t][k] - tr.gate_o_pre[t][k],
                    sigmoid_grad(o_r),
                );
        }

        // Every gate pre-activation is linear in the step input and the
        // previous hidden state.
        let mut m_x_t = 0.0;
        let mut m_h_prev = vec![0.0; u];
        for (m_zg, (wx, wh)) in m_z.iter().zip(gates.iter()) {
            for k in 0..u {
                m_x_t += m_zg[k] * wx[k];
                for j in 0..u {
                    m_h_prev[j] += m_zg[k] * wh[k * u + j];
                }
            }
        }
        phi[t] = m_x_t * (x[t] - reference[t]);
        m_h = m_h_prev;
        m_c = m_c_prev;
    }

    Ok(Attribution {
        method: AttributionMethod::DeepLift,
        phi,
        baseline: tr.score,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, NeuralNet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randomized<M: NeuralNet>(mut model: M, seed: u64) -> M {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<f64> = (0..model.params().len())
            .map(|_| rng.gen_range(-0.9..0.9))
            .collect();
        model.set_params(&params).unwrap();
        model
    }

    fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    /// With identity activations and width-1 pooling the network is affine,
    /// so contributions must equal gradient × input difference.
    #[test]
    fn linear_network_matches_gradient_times_difference() {
        let model = randomized(
            CnnModel::zeroed(5, 2, 3, 1, Activation::Identity, OutputActivation::Identity)
                .unwrap(),
            3,
        );
        let x = [0.7, -1.2, 0.4, 2.0, -0.3];
        let reference = [0.1, 0.0, -0.5, 1.0, 0.2];
        let attribution = deeplift_cnn(&model, &x, &reference).unwrap();

        let conv_len = model.conv_len();
        let dense = model.dense_weights();
        let weights = model.conv_weights();
        for j in 0..5 {
            let mut grad = 0.0;
            for fi in 0..model.filters {
                for t in 0..conv_len {
                    if j >= t && j < t + model.kernel_width {
                        grad += dense[fi * conv_len + t] * weights[fi * model.kernel_width + j - t];
                    }
                }
            }
            let expected = grad * (x[j] - reference[j]);
            assert!(
                (attribution.phi[j] - expected).abs() < 1e-12,
                "factor {j}: {} vs {expected}",
                attribution.phi[j]
            );
        }
        let delta: f64 = attribution.phi.iter().sum();
        let expected = model.predict(&x) - model.predict(&reference);
        assert!((delta - expected).abs() < 1e-12);
    }

    #[test]
    fn instance_equal_to_reference_contributes_nothing() {
        let cnn = randomized(
            CnnModel::zeroed(6, 3, 3, 2, Activation::Relu, OutputActivation::Sigmoid).unwrap(),
            5,
        );
        let x = [0.3, -0.8, 1.4, 0.0, -2.0, 0.6];
        let a = deeplift_cnn(&cnn, &x, &x).unwrap();
        assert_eq!(a.phi, vec![0.0; 6]);
        assert!((a.baseline - cnn.predict(&x)).abs() < 1e-15);

        let lstm = randomized(
            LstmModel::zeroed(4, 3, Activation::Tanh, OutputActivation::Sigmoid).unwrap(),
            6,
        );
        let y = [1.0, -0.5, 0.25, 0.75];
        let b = deeplift_lstm(&lstm, &y, &y).unwrap();
        assert_eq!(b.phi, vec![0.0; 4]);
    }

    #[test]
    fn cnn_contributions_sum_to_score_difference() {
        for (seed, activation) in [(11, Activation::Relu), (12, Activation::Tanh), (13, Activation::Elu)] {
            let model = randomized(
                CnnModel::zeroed(7, 3, 3, 2, activation, OutputActivation::Sigmoid).unwrap(),
                seed,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..8 {
                let x = random_vec(&mut rng, 7);
                let reference = random_vec(&mut rng, 7);
                let a = deeplift_cnn(&model, &x, &reference).unwrap();
                let total: f64 = a.phi.iter().sum();
                let delta = model.predict(&x) - model.predict(&reference);
                assert!(
                    (total - delta).abs() < 1e-6,
                    "{activation:?}: Σφ = {total} vs Δscore = {delta}"
                );
                assert!((a.baseline - model.predict(&reference)).abs() < 1e-15);
            }
        }
    }

    /// A filter whose bias pushes every pre-activation deep into the relu
    /// dead zone leaves its windows unchanged; the routing fallback must
    /// not break conservation or produce non-finite values.
    #[test]
    fn dead_windows_fall_back_cleanly() {
        let mut model =
            CnnModel::zeroed(6, 2, 3, 2, Activation::Relu, OutputActivation::Sigmoid).unwrap();
        let mut params = {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            (0..model.params().len())
                .map(|_| rng.gen_range(-0.5..0.5))
                .collect::<Vec<f64>>()
        };
        // Second filter's bias: conv_weights take the first
        // filters·kernel_width slots, biases follow.
        params[2 * 3 + 1] = -50.0;
        model.set_params(&params).unwrap();

        let x = [0.5, -0.25, 1.0, 0.75, -1.5, 0.2];
        let reference = [0.0, 0.1, -0.3, 0.4, 0.6, -0.8];
        let a = deeplift_cnn(&model, &x, &reference).unwrap();
        assert!(a.phi.iter().all(|p| p.is_finite()));
        let total: f64 = a.phi.iter().sum();
        let delta = model.predict(&x) - model.predict(&reference);
        assert!((total - delta).abs() < 1e-6);
    }

    #[test]
    fn lstm_contributions_sum_to_score_difference() {
        for (seed, activation) in [(31, Activation::Tanh), (32, Activation::Elu)] {
            let model = randomized(
                LstmModel::zeroed(6, 4, activation, OutputActivation::Sigmoid).unwrap(),
                seed,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..8 {
                let x = random_vec(&mut rng, 6);
                let reference = random_vec(&mut rng, 6);
                let a = deeplift_lstm(&model, &x, &reference).unwrap();
                let total: f64 = a.phi.iter().sum();
                let delta = model.predict(&x) - model.predict(&reference);
                assert!(
                    (total - delta).abs() < 1e-6,
                    "{activation:?}: Σφ = {total} vs Δscore = {delta}"
                );
            }
        }
    }

    #[test]
    fn dispatcher_covers_neural_models_only() {
        let cnn = randomized(
            CnnModel::zeroed(4, 2, 2, 2, Activation::Tanh, OutputActivation::Sigmoid).unwrap(),
            41,
        );
        let x = [0.2, -0.4, 0.6, -0.8];
        let reference = [0.0; 4];
        let direct = deeplift_cnn(&cnn, &x, &reference).unwrap();
        let via_enum = deeplift(&TrainedModel::Cnn(cnn), &x, &reference).unwrap();
        assert_eq!(direct, via_enum);

        let rows = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let metas = vec![
            crate::data::FactorMeta::continuous("a", false, ""),
            crate::data::FactorMeta::continuous("b", false, ""),
        ];
        let table =
            crate::data::FactorTable::from_rows(metas, &rows, Some(vec![0, 0, 1, 1])).unwrap();
        let gbt = crate::learners::gbt::train_gbt(
            &table,
            &crate::learners::GbtConfig {
                n_estimators: 1,
                learning_rate: 0.1,
                max_depth: 1,
                gamma: 0.0,
                lambda: 1.0,
            },
        )
        .unwrap();
        let err = deeplift(&TrainedModel::Gbt(gbt), &[0.0, 0.0], &[1.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("cnn or lstm"), "{err}");
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let model = randomized(
            CnnModel::zeroed(4, 1, 2, 2, Activation::Relu, OutputActivation::Sigmoid).unwrap(),
            51,
        );
        assert!(deeplift_cnn(&model, &[0.0; 3], &[0.0; 4]).is_err());
        assert!(deeplift_cnn(&model, &[0.0; 4], &[0.0; 5]).is_err());
        let lstm = randomized(
            LstmModel::zeroed(4, 2, Activation::Tanh, OutputActivation::Sigmoid).unwrap(),
            52,
        );
        assert!(deeplift_lstm(&lstm, &[0.0; 4], &[0.0; 2]).is_err());
    }
}
