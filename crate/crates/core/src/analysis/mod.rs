//! Attribution and ablation analysis: Grad-CAM heatmaps for the steering
//! regression, input-space saliency, heatmap overlays, channel-ablation
//! sensitivity scans, and report export (JSON/CSV/SVG).

mod report;
mod sensitivity;

pub use report::export_report;
pub use sensitivity::{sensitivity_scan, AblationMode, SensitivityEntry, SensitivityReport};

use thiserror::Error;

use crate::autodiff::{Tape, Tensor};
use crate::models::{ModelError, SteerNet};
use crate::semantics::RgbImage;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("layer {0} is not a conv layer (conv layers are 1, 4 and 7)")]
    NotAConvLayer(usize),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("alpha must be in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A nonnegative attribution map, max-normalized to [0,1] (an all-zero map
/// stays all-zero), same spatial size as the model input.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Heatmap {
    fn from_raw(height: usize, width: usize, mut values: Vec<f64>) -> Heatmap {
        let max = values.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut values {
                *v /= max;
            }
        }
        Heatmap { height, width, values }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Rectified, gradient-weighted combination of feature maps: with A_k the
/// maps and dy/dA_k their gradients, the weights are the spatial means of
/// the gradients and the raw map is relu(sum_k alpha_k A_k), bilinearly
/// upsampled to the input size and max-normalized.
///
/// The activations tensor must carry gradients from a prior backward pass.
pub fn cam_from_activations(
    activations: &Tensor,
    input_h: usize,
    input_w: usize,
) -> Result<Heatmap, AnalysisError> {
    let shape = activations.shape().to_vec();
    let [k, h, w] = shape.as_slice() else {
        return Err(AnalysisError::BadInput(format!("activations must be [K,h,w], got {shape:?}")));
    };
    let (k, h, w) = (*k, *h, *w);
    let grads = activations.grad().ok_or_else(|| {
        AnalysisError::BadInput("activations carry no gradients; run backward first".into())
    })?;
    let data = activations.data();
    let plane = h * w;
    let mut raw = vec![0.0; plane];
    for ch in 0..k {
        let gchan = &grads[ch * plane..(ch + 1) * plane];
        let weight = gchan.iter().sum::<f64>() / plane as f64;
        let achan = &data[ch * plane..(ch + 1) * plane];
        for (r, &a) in raw.iter_mut().zip(achan) {
            *r += weight * a;
        }
    }
    for r in &mut raw {
        *r = r.max(0.0);
    }
    let upsampled = bilinear_upsample(&raw, h, w, input_h, input_w);
    Ok(Heatmap::from_raw(input_h, input_w, upsampled))
}

/// Grad-CAM for the steering output at a conv layer (1, 4 or 7; the
/// pipeline default is 7). Gradients are taken with respect to the raw
/// steering output; pass `negate` to attribute the opposite steering
/// direction instead.
pub fn grad_cam(
    net: &SteerNet,
    x: &Tensor,
    target_layer: usize,
    negate: bool,
) -> Result<Heatmap, AnalysisError> {
    if ![1, 4, 7].contains(&target_layer) {
        return Err(AnalysisError::NotAConvLayer(target_layer));
    }
    let mut tape = Tape::new();
    let trace = net.forward_trace(&mut tape, x)?;
    let objective = if negate { tape.scale(&trace.output, -1.0) } else { trace.output.clone() };
    tape.backward(&objective)?;
    let activations = trace.conv_layer(target_layer).expect("validated layer index");
    cam_from_activations(activations, net.config.height, net.config.width)
}

/// Input-space saliency: per-pixel channel maximum of |dy/dx|,
/// max-normalized.
pub fn saliency_signed(net: &SteerNet, x: &Tensor) -> Result<Heatmap, AnalysisError> {
    // Work on a private copy so the caller's tensor is untouched.
    let input = Tensor::param(x.shape(), x.to_vec())?;
    let mut tape = Tape::new();
    let out = net.forward(&mut tape, &input)?;
    tape.backward(&out)?;
    let grads = input.grad().expect("input requires grad");
    let shape = input.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let plane = h * w;
    let mut values = vec![0.0; plane];
    for (px, value) in values.iter_mut().enumerate() {
        let mut best = 0.0f64;
        for ch in 0..c {
            best = best.max(grads[ch * plane + px].abs());
        }
        *value = best;
    }
    Ok(Heatmap::from_raw(h, w, values))
}

/// Bilinear resize of a single-channel map (half-pixel-center convention).
fn bilinear_upsample(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    if sh == dh && sw == dw {
        return src.to_vec();
    }
    let mut out = vec![0.0; dh * dw];
    let sy = sh as f64 / dh as f64;
    let sx = sw as f64 / dw as f64;
    for dy in 0..dh {
        let fy = ((dy as f64 + 0.5) * sy - 0.5).clamp(0.0, sh as f64 - 1.0);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for dx in 0..dw {
            let fx = ((dx as f64 + 0.5) * sx - 0.5).clamp(0.0, sw as f64 - 1.0);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let top = src[y0 * sw + x0] * (1.0 - wx) + src[y0 * sw + x1] * wx;
            let bottom = src[y1 * sw + x0] * (1.0 - wx) + src[y1 * sw + x1] * wx;
            out[dy * dw + dx] = top * (1.0 - wy) + bottom * wy;
        }
    }
    out
}

/// Map a heatmap value in [0,1] onto the blue-to-red overlay colormap:
/// 0 is pure blue, 1 is pure red.
pub fn colormap(value: f64) -> [u8; 3] {
    let v = value.clamp(0.0, 1.0);
    let r = (255.0 * v).round() as u8;
    let b = (255.0 * (1.0 - v)).round() as u8;
    [r, 0, b]
}

/// Blend `alpha` of the heatmap colormap over a base image. `alpha = 0`
/// returns the base image unchanged.
pub fn overlay(heatmap: &Heatmap, base: &RgbImage, alpha: f64) -> Result<RgbImage, AnalysisError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AnalysisError::BadAlpha(alpha));
    }
    if heatmap.height() != base.height() || heatmap.width() != base.width() {
        return Err(AnalysisError::SizeMismatch(format!(
            "heatmap {}x{} vs image {}x{}",
            heatmap.height(),
            heatmap.width(),
            base.height(),
            base.width()
        )));
    }
    let mut out = RgbImage::new(base.height(), base.width());
    for y in 0..base.height() {
        for x in 0..base.width() {
            let bg = base.get(y, x);
            let fg = colormap(heatmap.get(y, x));
            let mut px = [0u8; 3];
            for c in 0..3 {
                let blended = (1.0 - alpha) * bg[c] as f64 + alpha * fg[c] as f64;
                px[c] = blended.round().clamp(0.0, 255.0) as u8;
            }
            out.set(y, x, px);
        }
    }
    Ok(out)
}
