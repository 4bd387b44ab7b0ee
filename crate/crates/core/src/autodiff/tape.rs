use super::{AutodiffError, Tensor};

/// Records executed operations so their adjoints can be replayed in reverse.
///
/// Ops are methods on the tape: they compute the forward value eagerly and,
/// when recording is enabled and any input participates in gradient flow,
/// push a closure that propagates the output gradient back to the inputs.
/// Dropping or clearing the tape frees every retained intermediate.
pub struct Tape {
    records: Vec<Box<dyn Fn()>>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { records: Vec::new(), recording: true }
    }

    /// A tape that never records: forward-only evaluation.
    pub fn inference() -> Self {
        Tape { records: Vec::new(), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Drop all records and the intermediates they retain.
    pub fn clear(&mut self) {
        self.records.clear();
    }

    fn push(&mut self, out: &Tensor, backward: impl Fn() + 'static) {
        out.mark_tracked();
        self.records.push(Box::new(backward));
    }

    fn should_record(&self, inputs: &[&Tensor]) -> bool {
        self.recording && inputs.iter().any(|t| t.tracked())
    }

    /// Run the adjoint sweep from a scalar loss. Populates `grad` on every
    /// tensor the loss depends on; gradients accumulate additively across
    /// repeated uses of a tensor and across repeated backward calls.
    pub fn backward(&self, loss: &Tensor) -> Result<(), AutodiffError> {
        if loss.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(loss.shape().to_vec()));
        }
        if !loss.tracked() {
            return Err(AutodiffError::LossNotOnTape);
        }
        loss.accumulate_grad(&[1.0]);
        for record in self.records.iter().rev() {
            record();
        }
        Ok(())
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, AutodiffError> {
        if a.shape() != b.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
            });
        }
        let data = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(a.shape(), data)?;
        if self.should_record(&[a, b]) {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            let (na, nb) = (a.tracked(), b.tracked());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                if na {
                    a.accumulate_grad(og);
                }
                if nb {
                    b.accumulate_grad(og);
                }
            });
        }
        Ok(out)
    }

    pub fn scale(&mut self, x: &Tensor, factor: f64) -> Tensor {
        let data = x.data().iter().map(|v| v * factor).collect();
        let out = Tensor::new(x.shape(), data).expect("scale preserves shape");
        if self.should_record(&[x]) {
            let (x, o) = (x.clone(), out.clone());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                let mut gx = x.grad_mut();
                for (g, ov) in gx.iter_mut().zip(og) {
                    *g += factor * ov;
                }
            });
        }
        out
    }

    /// Elementwise max(0, x). The subgradient at exactly 0 is 0.
    pub fn relu(&mut self, x: &Tensor) -> Tensor {
        let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = Tensor::new(x.shape(), data).expect("relu preserves shape");
        if self.should_record(&[x]) {
            let (x, o) = (x.clone(), out.clone());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                let xd = x.data();
                let mask: Vec<f64> =
                    xd.iter().zip(og).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
                drop(xd);
                x.accumulate_grad(&mask);
            });
        }
        out
    }

    pub fn tanh(&mut self, x: &Tensor) -> Tensor {
        let data = x.data().iter().map(|v| v.tanh()).collect();
        let out = Tensor::new(x.shape(), data).expect("tanh preserves shape");
        if self.should_record(&[x]) {
            let (x, o) = (x.clone(), out.clone());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                let od = o.data();
                let delta: Vec<f64> = od.iter().zip(og).map(|(&y, &g)| g * (1.0 - y * y)).collect();
                drop(od);
                x.accumulate_grad(&delta);
            });
        }
        out
    }

    // ---- shape plumbing ----

    pub fn reshape(&mut self, x: &Tensor, shape: &[usize]) -> Result<Tensor, AutodiffError> {
        let numel: usize = shape.iter().product();
        if numel != x.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} ({} values) cannot become {:?}", x.shape(), x.len(), shape),
            });
        }
        let out = Tensor::new(shape, x.to_vec())?;
        if self.should_record(&[x]) {
            let (x, o) = (x.clone(), out.clone());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                x.accumulate_grad(og);
            });
        }
        Ok(out)
    }

    /// Concatenate flattened tensors into one rank-1 tensor.
    pub fn concat(&mut self, parts: &[Tensor]) -> Result<Tensor, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::EmptyInput { op: "concat" });
        }
        let mut data = Vec::with_capacity(parts.iter().map(Tensor::len).sum());
        for p in parts {
            data.extend_from_slice(&p.data());
        }
        let out = Tensor::new(&[data.len()], data)?;
        let refs: Vec<&Tensor> = parts.iter().collect();
        if self.should_record(&refs) {
            let parts: Vec<Tensor> = parts.to_vec();
            let o = out.clone();
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                let mut offset = 0;
                for p in &parts {
                    let n = p.len();
                    if p.tracked() {
                        p.accumulate_grad(&og[offset..offset + n]);
                    }
                    offset += n;
                }
            });
        }
        Ok(out)
    }

    // ---- dense layers ----

    /// weight[M,N] . x[N] + bias[M]
    pub fn linear(&mut self, x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, AutodiffError> {
        let (m, n) = match weight.shape() {
            [m, n] => (*m, *n),
            other => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "linear",
                    detail: format!("weight must be rank 2, got {other:?}"),
                })
            }
        };
        if x.len() != n || x.shape().len() != 1 {
            return Err(AutodiffError::ShapeMismatch {
                op: "linear",
                detail: format!("input {:?} does not match weight [{m}, {n}]", x.shape()),
            });
        }
        if bias.shape() != [m] {
            return Err(AutodiffError::ShapeMismatch {
                op: "linear",
                detail: format!("bias {:?} does not match weight rows {m}", bias.shape()),
            });
        }
        let out = {
            let xd = x.data();
            let wd = weight.data();
            let bd = bias.data();
            let mut data = vec![0.0; m];
            for (row, o) in data.iter_mut().enumerate() {
                let wrow = &wd[row * n..(row + 1) * n];
                let mut acc = bd[row];
                for (wv, xv) in wrow.iter().zip(xd.iter()) {
                    acc += wv * xv;
                }
                *o = acc;
            }
            Tensor::new(&[m], data)?
        };
        if self.should_record(&[x, weight, bias]) {
            let (x, w, b, o) = (x.clone(), weight.clone(), bias.clone(), out.clone());
            let (nx, nw, nb) = (x.tracked(), w.tracked(), b.tracked());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                if nx {
                    let wd = w.data();
                    let mut gx = x.grad_mut();
                    for (row, &g) in og.iter().enumerate() {
                        let wrow = &wd[row * n..(row + 1) * n];
                        for (gxv, wv) in gx.iter_mut().zip(wrow) {
                            *gxv += g * wv;
                        }
                    }
                }
                if nw {
                    let xd = x.data();
                    let mut gw = w.grad_mut();
                    for (row, &g) in og.iter().enumerate() {
                        let grow = &mut gw[row * n..(row + 1) * n];
                        for (gwv, xv) in grow.iter_mut().zip(xd.iter()) {
                            *gwv += g * xv;
                        }
                    }
                }
                if nb {
                    b.accumulate_grad(og);
                }
            });
        }
        Ok(out)
    }

    // ---- convolution and pooling ----

    /// 2-D convolution with zero padding.
    ///
    /// input [C_in,H,W], weight [C_out,C_in,K,K], bias [C_out]; output
    /// [C_out,H',W'] with H' = (H + 2*padding - K)/stride + 1 (floor).
    pub fn conv2d(
        &mut self,
        input: &Tensor,
        weight: &Tensor,
        bias: &Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor, AutodiffError> {
        let (cin, h, w) = match input.shape() {
            [c, h, w] => (*c, *h, *w),
            other => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "conv2d",
                    detail: format!("input must be [C,H,W], got {other:?}"),
                })
            }
        };
        let (cout, wcin, kh, kw) = match weight.shape() {
            [co, ci, kh, kw] => (*co, *ci, *kh, *kw),
            other => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "conv2d",
                    detail: format!("weight must be [C_out,C_in,K,K], got {other:?}"),
                })
            }
        };
        if kh != kw {
            return Err(AutodiffError::InvalidArg {
                op: "conv2d",
                detail: format!("kernel must be square, got {kh}x{kw}"),
            });
        }
        let k = kh;
        if wcin != cin {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d",
                detail: format!("input has {cin} channels but weight expects {wcin}"),
            });
        }
        if bias.shape() != [cout] {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d",
                detail: format!("bias {:?} does not match {cout} output channels", bias.shape()),
            });
        }
        if stride == 0 {
            return Err(AutodiffError::InvalidArg { op: "conv2d", detail: "stride must be >= 1".into() });
        }
        if k > h + 2 * padding || k > w + 2 * padding {
            return Err(AutodiffError::InvalidArg {
                op: "conv2d",
                detail: format!("kernel {k} exceeds padded input {}x{}", h + 2 * padding, w + 2 * padding),
            });
        }
        let oh = (h + 2 * padding - k) / stride + 1;
        let ow = (w + 2 * padding - k) / stride + 1;

        let out = {
            let xd = input.data();
            let wd = weight.data();
            let bd = bias.data();
            let mut data = vec![0.0; cout * oh * ow];
            for co in 0..cout {
                let ochan = &mut data[co * oh * ow..(co + 1) * oh * ow];
                ochan.fill(bd[co]);
                for ci in 0..cin {
                    let xchan = &xd[ci * h * w..(ci + 1) * h * w];
                    let wbase = (co * cin + ci) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = wd[wbase + ky * k + kx];
                            conv_axpy(ochan, xchan, wv, h, w, oh, ow, ky, kx, stride, padding);
                        }
                    }
                }
            }
            Tensor::new(&[cout, oh, ow], data)?
        };

        if self.should_record(&[input, weight, bias]) {
            let (x, wt, b, o) = (input.clone(), weight.clone(), bias.clone(), out.clone());
            let (nx, nw, nb) = (x.tracked(), wt.tracked(), b.tracked());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                if nb {
                    let mut gb = b.grad_mut();
                    for co in 0..cout {
                        gb[co] += og[co * oh * ow..(co + 1) * oh * ow].iter().sum::<f64>();
                    }
                }
                if nw {
                    let xd = x.data();
                    let mut gw = wt.grad_mut();
                    for co in 0..cout {
                        let ogchan = &og[co * oh * ow..(co + 1) * oh * ow];
                        for ci in 0..cin {
                            let xchan = &xd[ci * h * w..(ci + 1) * h * w];
                            let wbase = (co * cin + ci) * k * k;
                            for ky in 0..k {
                                for kx in 0..k {
                                    gw[wbase + ky * k + kx] +=
                                        conv_dot(ogchan, xchan, h, w, oh, ow, ky, kx, stride, padding);
                                }
                            }
                        }
                    }
                }
                if nx {
                    let wd = wt.data();
                    let mut gx = x.grad_mut();
                    for co in 0..cout {
                        let ogchan = &og[co * oh * ow..(co + 1) * oh * ow];
                        for ci in 0..cin {
                            let gxchan = &mut gx[ci * h * w..(ci + 1) * h * w];
                            let wbase = (co * cin + ci) * k * k;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let wv = wd[wbase + ky * k + kx];
                                    conv_scatter(gxchan, ogchan, wv, h, w, oh, ow, ky, kx, stride, padding);
                                }
                            }
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Max pooling over square windows. Backward routes each window's
    /// gradient to its argmax only; ties go to the first index in row-major
    /// window order so reruns are bit-identical.
    pub fn maxpool2d(&mut self, input: &Tensor, kernel: usize, stride: usize) -> Result<Tensor, AutodiffError> {
        let (c, h, w) = match input.shape() {
            [c, h, w] => (*c, *h, *w),
            other => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "maxpool2d",
                    detail: format!("input must be [C,H,W], got {other:?}"),
                })
            }
        };
        if kernel == 0 || stride == 0 {
            return Err(AutodiffError::InvalidArg {
                op: "maxpool2d",
                detail: "kernel and stride must be >= 1".into(),
            });
        }
        if kernel > h || kernel > w {
            return Err(AutodiffError::InvalidArg {
                op: "maxpool2d",
                detail: format!("kernel {kernel} exceeds input {h}x{w}"),
            });
        }
        let oh = (h - kernel) / stride + 1;
        let ow = (w - kernel) / stride + 1;
        let mut data = vec![0.0; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        {
            let xd = input.data();
            for ci in 0..c {
                let xchan = &xd[ci * h * w..(ci + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for ky in 0..kernel {
                            let row = (oy * stride + ky) * w + ox * stride;
                            for kx in 0..kernel {
                                let v = xchan[row + kx];
                                if v > best {
                                    best = v;
                                    best_idx = row + kx;
                                }
                            }
                        }
                        data[(ci * oh + oy) * ow + ox] = best;
                        argmax[(ci * oh + oy) * ow + ox] = ci * h * w + best_idx;
                    }
                }
            }
        }
        let out = Tensor::new(&[c, oh, ow], data)?;
        if self.should_record(&[input]) {
            let (x, o) = (input.clone(), out.clone());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                let mut gx = x.grad_mut();
                for (&src, &g) in argmax.iter().zip(og) {
                    gx[src] += g;
                }
            });
        }
        Ok(out)
    }

    /// Nearest-neighbour 2x spatial upsampling of a [C,H,W] tensor.
    pub fn upsample_nearest2(&mut self, input: &Tensor) -> Result<Tensor, AutodiffError> {
        let (c, h, w) = match input.shape() {
            [c, h, w] => (*c, *h, *w),
            other => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "upsample_nearest2",
                    detail: format!("input must be [C,H,W], got {other:?}"),
                })
            }
        };
        let (oh, ow) = (2 * h, 2 * w);
        let mut data = vec![0.0; c * oh * ow];
        {
            let xd = input.data();
            for ci in 0..c {
                for oy in 0..oh {
                    let src_row = &xd[(ci * h + oy / 2) * w..][..w];
                    let dst_row = &mut data[(ci * oh + oy) * ow..][..ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        *d = src_row[ox / 2];
                    }
                }
            }
        }
        let out = Tensor::new(&[c, oh, ow], data)?;
        if self.should_record(&[input]) {
            let (x, o) = (input.clone(), out.clone());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                let mut gx = x.grad_mut();
                for ci in 0..c {
                    for oy in 0..oh {
                        let grow = &og[(ci * oh + oy) * ow..][..ow];
                        let gxrow = &mut gx[(ci * h + oy / 2) * w..][..w];
                        for (ox, &g) in grow.iter().enumerate() {
                            gxrow[ox / 2] += g;
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    // ---- losses ----

    /// Mean squared error between two same-shape tensors.
    pub fn mse(&mut self, pred: &Tensor, target: &Tensor) -> Result<Tensor, AutodiffError> {
        if pred.shape() != target.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mse",
                detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
            });
        }
        let n = pred.len();
        if n == 0 {
            return Err(AutodiffError::EmptyInput { op: "mse" });
        }
        let value = pred
            .data()
            .iter()
            .zip(target.data().iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n as f64;
        let out = Tensor::scalar(value);
        if self.should_record(&[pred, target]) {
            let (p, t, o) = (pred.clone(), target.clone(), out.clone());
            let (np, nt) = (p.tracked(), t.tracked());
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                let g = og[0];
                let pd = p.data();
                let td = t.data();
                let scale = 2.0 * g / n as f64;
                let delta: Vec<f64> = pd.iter().zip(td.iter()).map(|(pv, tv)| scale * (pv - tv)).collect();
                drop(pd);
                drop(td);
                if np {
                    p.accumulate_grad(&delta);
                }
                if nt {
                    let neg: Vec<f64> = delta.iter().map(|d| -d).collect();
                    t.accumulate_grad(&neg);
                }
            });
        }
        Ok(out)
    }

    /// Mean per-pixel softmax cross-entropy of [C,H,W] logits against a
    /// label grid of H*W class ids.
    pub fn cross_entropy_pixels(&mut self, logits: &Tensor, labels: &[u8]) -> Result<Tensor, AutodiffError> {
        let (c, h, w) = match logits.shape() {
            [c, h, w] => (*c, *h, *w),
            other => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "cross_entropy_pixels",
                    detail: format!("logits must be [C,H,W], got {other:?}"),
                })
            }
        };
        let npix = h * w;
        if labels.len() != npix {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross_entropy_pixels",
                detail: format!("{npix} pixels but {} labels", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
            return Err(AutodiffError::InvalidArg {
                op: "cross_entropy_pixels",
                detail: format!("label {bad} out of range for {c} classes"),
            });
        }
        let mut probs = vec![0.0; c * npix];
        let mut total = 0.0;
        {
            let ld = logits.data();
            for px in 0..npix {
                let mut max = f64::NEG_INFINITY;
                for ch in 0..c {
                    max = max.max(ld[ch * npix + px]);
                }
                let mut denom = 0.0;
                for ch in 0..c {
                    let e = (ld[ch * npix + px] - max).exp();
                    probs[ch * npix + px] = e;
                    denom += e;
                }
                for ch in 0..c {
                    probs[ch * npix + px] /= denom;
                }
                total -= probs[labels[px] as usize * npix + px].ln();
            }
        }
        let out = Tensor::scalar(total / npix as f64);
        if self.should_record(&[logits]) {
            let (l, o) = (logits.clone(), out.clone());
            let labels = labels.to_vec();
            self.push(&out, move || {
                let og = o.grad_ref();
                let Some(og) = og.as_deref() else { return };
                let g = og[0] / npix as f64;
                let mut gl = l.grad_mut();
                for px in 0..npix {
                    let target = labels[px] as usize;
                    for ch in 0..c {
                        let indicator = if ch == target { 1.0 } else { 0.0 };
                        gl[ch * npix + px] += g * (probs[ch * npix + px] - indicator);
                    }
                }
            });
        }
        Ok(out)
    }
}

/// ochan[oy,ox] += wv * xchan[oy*stride+ky-p, ox*stride+kx-p] over the valid range.
#[allow(clippy::too_many_arguments)]
#[inline]
fn conv_axpy(
    ochan: &mut [f64],
    xchan: &[f64],
    wv: f64,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    ky: usize,
    kx: usize,
    stride: usize,
    padding: usize,
) {
    let (oy_lo, oy_hi) = valid_range(ky, padding, stride, h, oh);
    let (ox_lo, ox_hi) = valid_range(kx, padding, stride, w, ow);
    if oy_lo > oy_hi || ox_lo > ox_hi {
        return;
    }
    let count = ox_hi - ox_lo + 1;
    for oy in oy_lo..=oy_hi {
        let iy = oy * stride + ky - padding;
        let ix0 = ox_lo * stride + kx - padding;
        let dst = &mut ochan[oy * ow + ox_lo..][..count];
        if stride == 1 {
            let src = &xchan[iy * w + ix0..][..count];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wv * s;
            }
        } else {
            let row = &xchan[iy * w..][..w];
            for (i, d) in dst.iter_mut().enumerate() {
                *d += wv * row[ix0 + i * stride];
            }
        }
    }
}

/// sum over the valid range of ogchan[oy,ox] * xchan[oy*stride+ky-p, ox*stride+kx-p].
#[allow(clippy::too_many_arguments)]
#[inline]
fn conv_dot(
    ogchan: &[f64],
    xchan: &[f64],
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    ky: usize,
    kx: usize,
    stride: usize,
    padding: usize,
) -> f64 {
    let (oy_lo, oy_hi) = valid_range(ky, padding, stride, h, oh);
    let (ox_lo, ox_hi) = valid_range(kx, padding, stride, w, ow);
    if oy_lo > oy_hi || ox_lo > ox_hi {
        return 0.0;
    }
    let count = ox_hi - ox_lo + 1;
    let mut acc = 0.0;
    for oy in oy_lo..=oy_hi {
        let iy = oy * stride + ky - padding;
        let ix0 = ox_lo * stride + kx - padding;
        let gsrc = &ogchan[oy * ow + ox_lo..][..count];
        if stride == 1 {
            let xsrc = &xchan[iy * w + ix0..][..count];
            for (g, x) in gsrc.iter().zip(xsrc) {
                acc += g * x;
            }
        } else {
            let row = &xchan[iy * w..][..w];
            for (i, g) in gsrc.iter().enumerate() {
                acc += g * row[ix0 + i * stride];
            }
        }
    }
    acc
}

/// gxchan[oy*stride+ky-p, ox*stride+kx-p] += wv * ogchan[oy,ox] over the valid range.
#[allow(clippy::too_many_arguments)]
#[inline]
fn conv_scatter(
    gxchan: &mut [f64],
    ogchan: &[f64],
    wv: f64,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    ky: usize,
    kx: usize,
    stride: usize,
    padding: usize,
) {
    let (oy_lo, oy_hi) = valid_range(ky, padding, stride, h, oh);
    let (ox_lo, ox_hi) = valid_range(kx, padding, stride, w, ow);
    if oy_lo > oy_hi || ox_lo > ox_hi {
        return;
    }
    let count = ox_hi - ox_lo + 1;
    for oy in oy_lo..=oy_hi {
        let iy = oy * stride + ky - padding;
        let ix0 = ox_lo * stride + kx - padding;
        let gsrc = &ogchan[oy * ow + ox_lo..][..count];
        if stride == 1 {
            let dst = &mut gxchan[iy * w + ix0..][..count];
            for (d, g) in dst.iter_mut().zip(gsrc) {
                *d += wv * g;
            }
        } else {
            let row = &mut gxchan[iy * w..][..w];
            for (i, g) in gsrc.iter().enumerate() {
                row[ix0 + i * stride] += wv * g;
            }
        }
    }
}

/// Output positions o where 0 <= o*stride + k - padding < extent.
#[inline]
fn valid_range(k: usize, padding: usize, stride: usize, extent: usize, out_extent: usize) -> (usize, usize) {
    let lo = if padding > k { (padding - k).div_ceil(stride) } else { 0 };
    // o*stride < extent + padding - k, so no valid o when that bound is 0
    let Some(bound) = (extent + padding).checked_sub(k) else {
        return (1, 0); // empty
    };
    if bound == 0 {
        return (1, 0);
    }
    let hi = ((bound - 1) / stride).min(out_extent.saturating_sub(1));
    (lo, hi)
}
