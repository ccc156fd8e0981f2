//! Central-difference gradient checks for the toy autoencoder.

use pivq::toy::{Cache, ToyModel};

pub const STEP: f64 = 1e-5;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every entry of `block`.
pub fn numeric_gradient<F>(model: &ToyModel, block: &str, f: F) -> Vec<f64>
where
    F: Fn(&ToyModel) -> f64,
{
    let mut probe = model.clone();
    let n = model.params.block(block).expect("known block").len();
    (0..n)
        .map(|i| {
            let orig = probe.params.block(block).unwrap()[i];
            probe.params.block_mut(block).unwrap()[i] = orig + STEP;
            let up = f(&probe);
            probe.params.block_mut(block).unwrap()[i] = orig - STEP;
            let down = f(&probe);
            probe.params.block_mut(block).unwrap()[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn l1(out: &[f64], target: &[f64]) -> f64 {
    out.iter().zip(target).map(|(o, x)| (o - x).abs()).sum::<f64>() / out.len() as f64
}

/// Reconstruction loss with the codes of `cache` held fixed.
pub fn decoder_loss(model: &ToyModel, cache: &Cache) -> f64 {
    let codes = cache.indices.as_ref().expect("quantized cache");
    l1(&model.decode_codes(codes).unwrap(), &cache.input)
}

/// Straight-through surrogate: the decoder sees `z_e(θ) + (e − z_e(θ₀))`
/// summed in ascending code order, plus `β · mean ‖z_e(θ) − e‖²`.
pub fn encoder_surrogate(model: &ToyModel, frozen: &Cache, beta: f64) -> f64 {
    let codes = frozen.indices.as_ref().expect("quantized cache");
    let dim = model.shape.dim;
    let (_, z) = model.encode(&frozen.input).unwrap();
    let mut order: Vec<usize> = (0..codes.len()).collect();
    order.sort_by_key(|&j| codes[j]);
    let mut pooled = vec![0.0; dim];
    for &j in &order {
        let e = &model.params.codebook[codes[j] * dim..(codes[j] + 1) * dim];
        for d in 0..dim {
            let offset = e[d] - frozen.z_e[j * dim + d];
            pooled[d] += z[j * dim + d] + offset;
        }
    }
    let (_, out) = model.decode_pooled(&pooled).unwrap();
    l1(&out, &frozen.input) + beta * model.vq_squared_error(&z, codes)
}

/// `mean ‖sg(z_e) − e‖²` as a function of the codebook.
pub fn codebook_loss(model: &ToyModel, frozen: &Cache) -> f64 {
    model.vq_squared_error(&frozen.z_e, frozen.indices.as_ref().expect("quantized cache"))
}

/// Smallest `|out − x|` over pixels; central differences of L1 are exact
/// only while this stays well above the step.
pub fn l1_margin(cache: &Cache) -> f64 {
    cache
        .output
        .iter()
        .zip(&cache.input)
        .map(|(o, x)| (o - x).abs())
        .fold(f64::INFINITY, f64::min)
}

pub const DECODER_BLOCKS: [&str; 4] = ["dec_w1", "dec_b1", "dec_w2", "dec_b2"];
pub const ENCODER_BLOCKS: [&str; 4] = ["enc_w1", "enc_b1", "enc_w2", "enc_b2"];

/// Relative error of the analytic gradient for every parameter block.
pub fn check_all(model: &ToyModel, cache: &Cache, beta: f64) -> Vec<(&'static str, f64)> {
    let full = model
        .backward(cache, &ToyModel::l1_grad(cache), 1.0, beta)
        .unwrap();
    let vq_only = model
        .backward(cache, &vec![0.0; cache.output.len()], 1.0, beta)
        .unwrap();
    let mut out = Vec::new();
    for block in DECODER_BLOCKS {
        let num = numeric_gradient(model, block, |m| decoder_loss(m, cache));
        out.push((block, relative_error(full.block(block).unwrap(), &num)));
    }
    for block in ENCODER_BLOCKS {
        let num = numeric_gradient(model, block, |m| encoder_surrogate(m, cache, beta));
        out.push((block, relative_error(full.block(block).unwrap(), &num)));
    }
    let num = numeric_gradient(model, "codebook", |m| codebook_loss(m, cache));
    out.push(("codebook", relative_error(vq_only.block("codebook").unwrap(), &num)));
    out
}

