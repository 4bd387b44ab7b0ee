use crate::autodiff::{Tape, Tensor};
use crate::checkpoint::Checkpoint;
use crate::rng::Rng;

use super::ModelError;

/// Hourglass perception module: four strided conv blocks squeeze the RGB
/// frame into a latent vector, and a mirrored upsample/conv stack
/// reconstructs per-pixel class logits from that vector alone. There are no
/// skip connections: everything the decoder sees flows through the latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerceptionConfig {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub widths: [usize; 4],
    pub latent: usize,
}

impl PerceptionConfig {
    pub fn new(classes: usize, height: usize, width: usize) -> PerceptionConfig {
        PerceptionConfig { classes, height, width, widths: [16, 32, 64, 64], latent: 128 }
    }

    pub fn preset(name: &str, height: usize, width: usize) -> Option<PerceptionConfig> {
        match name {
            "perception-13" => Some(PerceptionConfig::new(13, height, width)),
            "perception-7" => Some(PerceptionConfig::new(7, height, width)),
            _ => None,
        }
    }

    pub fn model_id(&self) -> String {
        format!("perception-{}", self.classes)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !self.height.is_multiple_of(16) || !self.width.is_multiple_of(16) || self.height < 16 || self.width < 16 {
            return Err(ModelError::BadConfig(format!(
                "input size {}x{} must be divisible by 16 (four stride-2 convs)",
                self.height, self.width
            )));
        }
        if self.classes == 0 || self.latent == 0 || self.widths.contains(&0) {
            return Err(ModelError::BadConfig("all widths must be positive".into()));
        }
        Ok(())
    }

    fn bottleneck_hw(&self) -> (usize, usize) {
        (self.height / 16, self.width / 16)
    }

    fn bottleneck_dim(&self) -> usize {
        let (h, w) = self.bottleneck_hw();
        self.widths[3] * h * w
    }
}

#[derive(Debug, Clone)]
pub struct PerceptionCoder {
    pub config: PerceptionConfig,
    enc_conv_w: Vec<Tensor>,
    enc_conv_b: Vec<Tensor>,
    enc_fc_w: Tensor,
    enc_fc_b: Tensor,
    dec_fc_w: Tensor,
    dec_fc_b: Tensor,
    dec_conv_w: Vec<Tensor>,
    dec_conv_b: Vec<Tensor>,
    out_w: Tensor,
    out_b: Tensor,
}

fn uniform_init(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::param(shape, data).expect("consistent init shape")
}

impl PerceptionCoder {
    pub fn init(config: PerceptionConfig, seed: u64) -> Result<PerceptionCoder, ModelError> {
        config.validate()?;
        let mut rng = Rng::stream(seed, 0xec0de);
        let [a, b, c, d] = config.widths;
        let enc_dims = [(a, 3), (b, a), (c, b), (d, c)];
        let mut enc_conv_w = Vec::new();
        let mut enc_conv_b = Vec::new();
        for (cout, cin) in enc_dims {
            enc_conv_w.push(uniform_init(&mut rng, &[cout, cin, 4, 4], cin * 16));
            enc_conv_b.push(uniform_init(&mut rng, &[cout], cin * 16));
        }
        let flat = config.bottleneck_dim();
        let enc_fc_w = uniform_init(&mut rng, &[config.latent, flat], flat);
        let enc_fc_b = uniform_init(&mut rng, &[config.latent], flat);
        let dec_fc_w = uniform_init(&mut rng, &[flat, config.latent], config.latent);
        let dec_fc_b = uniform_init(&mut rng, &[flat], config.latent);
        let dec_dims = [(c, d), (b, c), (a, b), (a, a)];
        let mut dec_conv_w = Vec::new();
        let mut dec_conv_b = Vec::new();
        for (cout, cin) in dec_dims {
            dec_conv_w.push(uniform_init(&mut rng, &[cout, cin, 3, 3], cin * 9));
            dec_conv_b.push(uniform_init(&mut rng, &[cout], cin * 9));
        }
        let out_w = uniform_init(&mut rng, &[config.classes, a, 1, 1], a);
        let out_b = uniform_init(&mut rng, &[config.classes], a);
        Ok(PerceptionCoder {
            config,
            enc_conv_w,
            enc_conv_b,
            enc_fc_w,
            enc_fc_b,
            dec_fc_w,
            dec_fc_b,
            dec_conv_w,
            dec_conv_b,
            out_w,
            out_b,
        })
    }

    pub fn params(&self) -> Vec<Tensor> {
        let mut params = Vec::new();
        for i in 0..4 {
            params.push(self.enc_conv_w[i].clone());
            params.push(self.enc_conv_b[i].clone());
        }
        params.push(self.enc_fc_w.clone());
        params.push(self.enc_fc_b.clone());
        params.push(self.dec_fc_w.clone());
        params.push(self.dec_fc_b.clone());
        for i in 0..4 {
            params.push(self.dec_conv_w[i].clone());
            params.push(self.dec_conv_b[i].clone());
        }
        params.push(self.out_w.clone());
        params.push(self.out_b.clone());
        params
    }

    fn check_input(&self, x: &Tensor) -> Result<(), ModelError> {
        let want = [3, self.config.height, self.config.width];
        if x.shape() != want {
            return Err(ModelError::WrongInput(format!(
                "expected input {:?}, got {:?}",
                want,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Embed an RGB frame into the latent vector.
    pub fn encode(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, ModelError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for i in 0..4 {
            let conv = tape.conv2d(&h, &self.enc_conv_w[i], &self.enc_conv_b[i], 2, 1)?;
            h = tape.relu(&conv);
        }
        let flat = tape.reshape(&h, &[self.config.bottleneck_dim()])?;
        Ok(tape.linear(&flat, &self.enc_fc_w, &self.enc_fc_b)?)
    }

    /// Reconstruct per-pixel class logits from the latent vector alone.
    pub fn decode(&self, tape: &mut Tape, z: &Tensor) -> Result<Tensor, ModelError> {
        if z.shape() != [self.config.latent] {
            return Err(ModelError::WrongInput(format!(
                "expected latent [{}], got {:?}",
                self.config.latent,
                z.shape()
            )));
        }
        let fc = tape.linear(z, &self.dec_fc_w, &self.dec_fc_b)?;
        let fc = tape.relu(&fc);
        let (bh, bw) = self.config.bottleneck_hw();
        let mut h = tape.reshape(&fc, &[self.config.widths[3], bh, bw])?;
        for i in 0..4 {
            let up = tape.upsample_nearest2(&h)?;
            let conv = tape.conv2d(&up, &self.dec_conv_w[i], &self.dec_conv_b[i], 1, 1)?;
            h = tape.relu(&conv);
        }
        Ok(tape.conv2d(&h, &self.out_w, &self.out_b, 1, 0)?)
    }

    /// Full encode-decode pass returning (latent, logits).
    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<(Tensor, Tensor), ModelError> {
        let z = self.encode(tape, x)?;
        let logits = self.decode(tape, &z)?;
        Ok((z, logits))
    }

    /// Forward-only latent embedding.
    pub fn embed(&self, x: &Tensor) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::inference();
        Ok(self.encode(&mut tape, x)?.to_vec())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(self.config.model_id());
        for i in 0..4 {
            ckpt.push(format!("enc{}.weight", i + 1), &self.enc_conv_w[i]);
            ckpt.push(format!("enc{}.bias", i + 1), &self.enc_conv_b[i]);
        }
        ckpt.push("enc_fc.weight", &self.enc_fc_w);
        ckpt.push("enc_fc.bias", &self.enc_fc_b);
        ckpt.push("dec_fc.weight", &self.dec_fc_w);
        ckpt.push("dec_fc.bias", &self.dec_fc_b);
        for i in 0..4 {
            ckpt.push(format!("dec{}.weight", i + 1), &self.dec_conv_w[i]);
            ckpt.push(format!("dec{}.bias", i + 1), &self.dec_conv_b[i]);
        }
        ckpt.push("out.weight", &self.out_w);
        ckpt.push("out.bias", &self.out_b);
        ckpt.push_raw("input_hw", vec![2], vec![self.config.height as f64, self.config.width as f64]);
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<PerceptionCoder, ModelError> {
        if !ckpt.model_id.starts_with("perception-") {
            return Err(ModelError::WrongInput(format!(
                "checkpoint {:?} is not a perception model",
                ckpt.model_id
            )));
        }
        let hw = ckpt.get("input_hw")?;
        let classes = ckpt.get("out.weight")?.shape[0];
        let widths = [
            ckpt.get("enc1.weight")?.shape[0],
            ckpt.get("enc2.weight")?.shape[0],
            ckpt.get("enc3.weight")?.shape[0],
            ckpt.get("enc4.weight")?.shape[0],
        ];
        let latent = ckpt.get("enc_fc.weight")?.shape[0];
        let config = PerceptionConfig {
            classes,
            height: hw.values[0] as usize,
            width: hw.values[1] as usize,
            widths,
            latent,
        };
        let model = PerceptionCoder::init(config, 0)?;
        for i in 0..4 {
            ckpt.load_into(&format!("enc{}.weight", i + 1), &model.enc_conv_w[i])?;
            ckpt.load_into(&format!("enc{}.bias", i + 1), &model.enc_conv_b[i])?;
            ckpt.load_into(&format!("dec{}.weight", i + 1), &model.dec_conv_w[i])?;
            ckpt.load_into(&format!("dec{}.bias", i + 1), &model.dec_conv_b[i])?;
        }
        ckpt.load_into("enc_fc.weight", &model.enc_fc_w)?;
        ckpt.load_into("enc_fc.bias", &model.enc_fc_b)?;
        ckpt.load_into("dec_fc.weight", &model.dec_fc_w)?;
        ckpt.load_into("dec_fc.bias", &model.dec_fc_b)?;
        ckpt.load_into("out.weight", &model.out_w)?;
        ckpt.load_into("out.bias", &model.out_b)?;
        Ok(model)
    }

    #[cfg(test)]
    pub(crate) fn zero_decoder_weights(&self) {
        for w in &self.dec_conv_w {
            w.set_data(vec![0.0; w.len()]).unwrap();
        }
        self.dec_fc_w.set_data(vec![0.0; self.dec_fc_w.len()]).unwrap();
        self.out_w.set_data(vec![0.0; self.out_w.len()]).unwrap();
    }
}

/// Small fully connected head mapping the latent vector to a tanh-bounded
/// steering scalar. Consumes only the latent.
#[derive(Debug, Clone)]
pub struct ControlHead {
    pub latent: usize,
    pub hidden: usize,
    fc1_w: Tensor,
    fc1_b: Tensor,
    fc2_w: Tensor,
    fc2_b: Tensor,
}

impl ControlHead {
    pub fn init(latent: usize, seed: u64) -> ControlHead {
        let hidden = 32;
        let mut rng = Rng::stream(seed, 0xc7a1);
        ControlHead {
            latent,
            hidden,
            fc1_w: uniform_init(&mut rng, &[hidden, latent], latent),
            fc1_b: uniform_init(&mut rng, &[hidden], latent),
            fc2_w: uniform_init(&mut rng, &[1, hidden], hidden),
            fc2_b: uniform_init(&mut rng, &[1], hidden),
        }
    }

    pub fn params(&self) -> Vec<Tensor> {
        vec![self.fc1_w.clone(), self.fc1_b.clone(), self.fc2_w.clone(), self.fc2_b.clone()]
    }

    pub fn forward(&self, tape: &mut Tape, z: &Tensor) -> Result<Tensor, ModelError> {
        if z.shape() != [self.latent] {
            return Err(ModelError::WrongInput(format!(
                "expected latent [{}], got {:?}",
                self.latent,
                z.shape()
            )));
        }
        let h = tape.linear(z, &self.fc1_w, &self.fc1_b)?;
        let h = tape.relu(&h);
        let out = tape.linear(&h, &self.fc2_w, &self.fc2_b)?;
        Ok(tape.tanh(&out))
    }

    pub fn predict(&self, z: &Tensor) -> Result<f64, ModelError> {
        let mut tape = Tape::inference();
        Ok(self.forward(&mut tape, z)?.item())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new("control");
        ckpt.push("fc1.weight", &self.fc1_w);
        ckpt.push("fc1.bias", &self.fc1_b);
        ckpt.push("fc2.weight", &self.fc2_w);
        ckpt.push("fc2.bias", &self.fc2_b);
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<ControlHead, ModelError> {
        ckpt.expect_model("control")?;
        let fc1 = ckpt.get("fc1.weight")?;
        let head = ControlHead::init(fc1.shape[1], 0);
        ckpt.load_into("fc1.weight", &head.fc1_w)?;
        ckpt.load_into("fc1.bias", &head.fc1_b)?;
        ckpt.load_into("fc2.weight", &head.fc2_w)?;
        ckpt.load_into("fc2.bias", &head.fc2_b)?;
        Ok(head)
    }
}
