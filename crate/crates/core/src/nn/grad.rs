use super::{Loss, Matrix, MlpModel};
use crate::error::{Error, Result};

pub(crate) fn check_data(model: &MlpModel, x: &Matrix, y: &Matrix) -> Result<()> {
    if x.cols() != model.n_inputs() || y.cols() != model.n_outputs() {
        return Err(Error::Shape(format!(
            "data with {} features and {} targets does not fit the {:?} architecture",
            x.cols(),
            y.cols(),
            model.layer_sizes()
        )));
    }
    if x.rows() != y.rows() {
        return Err(Error::Shape(format!("{} feature rows but {} target rows", x.rows(), y.rows())));
    }
    Ok(())
}

/// Mean loss and its gradient over the rows `idx` of normalized data, added into `grad`.
///
/// Rows are visited in ascending index order, so the floating-point result does not
/// depend on how `idx` is ordered.
pub(crate) fn accumulate(model: &MlpModel, x: &Matrix, y: &Matrix, idx: &[usize], loss: Loss, grad: &mut [f64]) -> f64 {
    let mut order = idx.to_vec();
    order.sort_unstable();
    let n_out = model.n_outputs();
    let scale = 1.0 / (order.len() * n_out) as f64;
    let targets = &model.scaling().targets;
    let mut total = 0.0;
    for &i in &order {
        let trace = model.trace(x.row(i));
        let out = &trace.acts[trace.acts.len() - 1];
        let mut delta: Vec<f64> = (0..n_out)
            .map(|o| {
                let (v, d) = loss.term(out[o], y.row(i)[o], &targets[o]);
                total += v;
                d * scale
            })
            .collect();
        for l in (0..model.n_layers()).rev() {
            let input = &trace.acts[l];
            let n_in = input.len();
            let off = model.offset(l);
            let (w, _) = model.layer(l);
            for (o, &d) in delta.iter().enumerate() {
                let gw = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, a) in gw.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[off + delta.len() * n_in + o] += d;
            }
            if l > 0 {
                delta = (0..n_in)
                    .map(|j| {
                        if input[j] > 0.0 {
                            delta.iter().enumerate().map(|(o, d)| w[o * n_in + j] * d).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
    }
    total * scale
}

/// Mean training loss over all rows of normalized data and its exact gradient.
///
/// The output activation is treated as linear, matching what the optimizer sees.
pub fn gradient(model: &MlpModel, x: &Matrix, y: &Matrix, loss: Loss) -> Result<(f64, Vec<f64>)> {
    check_data(model, x, y)?;
    if x.rows() == 0 {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    let mut grad = vec![0.0; model.params().len()];
    let idx: Vec<usize> = (0..x.rows()).collect();
    let value = accumulate(model, x, y, &idx, loss, &mut grad);
    Ok((value, grad))
}

/// Mean loss of the inference-mode predictions over the rows `idx`.
pub(crate) fn evaluate(model: &MlpModel, x: &Matrix, y: &Matrix, idx: &[usize], loss: Loss) -> f64 {
    let targets = &model.scaling().targets;
    let mut total = 0.0;
    let mut order = idx.to_vec();
    order.sort_unstable();
    for &i in &order {
        let out = model.forward(x.row(i)).expect("shape checked by caller");
        for (o, z_hat) in out.iter().enumerate() {
            total += loss.term(*z_hat, y.row(i)[o], &targets[o]).0;
        }
    }
    total / (order.len() * model.n_outputs()) as f64
}
