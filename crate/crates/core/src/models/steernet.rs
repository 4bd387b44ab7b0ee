use crate::autodiff::{Tape, Tensor};
use crate::checkpoint::Checkpoint;
use crate::rng::Rng;

use super::ModelError;

/// Architecture parameters of the steering CNN. Layer numbering follows the
/// convention that layers 1, 4 and 7 are the convolutions and layer 10 is
/// the F4-wide fully connected layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SteerNetConfig {
    pub channels: usize,
    pub f1: usize,
    pub f2: usize,
    pub f3: usize,
    pub f4: usize,
    pub height: usize,
    pub width: usize,
}

impl SteerNetConfig {
    /// RGB preset: channels 3, filters 3/3/13, 4 hidden neurons.
    pub fn rgb(height: usize, width: usize) -> SteerNetConfig {
        SteerNetConfig { channels: 3, f1: 3, f2: 3, f3: 13, f4: 4, height, width }
    }

    /// Segmentation preset: 13 channels, filters 5/4/14, 5 hidden neurons.
    pub fn seg13(height: usize, width: usize) -> SteerNetConfig {
        SteerNetConfig { channels: 13, f1: 5, f2: 4, f3: 14, f4: 5, height, width }
    }

    /// Segmentation preset on the compact 7-class encoding.
    pub fn seg7(height: usize, width: usize) -> SteerNetConfig {
        SteerNetConfig { channels: 7, ..SteerNetConfig::seg13(height, width) }
    }

    pub fn preset(name: &str, height: usize, width: usize) -> Option<SteerNetConfig> {
        match name {
            "steernet-rgb" => Some(SteerNetConfig::rgb(height, width)),
            "steernet-seg13" => Some(SteerNetConfig::seg13(height, width)),
            "steernet-seg7" => Some(SteerNetConfig::seg7(height, width)),
            _ => None,
        }
    }

    pub fn model_id(&self) -> &'static str {
        match self.channels {
            3 => "steernet-rgb",
            13 => "steernet-seg13",
            _ => "steernet-seg7",
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !self.height.is_multiple_of(8) || !self.width.is_multiple_of(8) || self.height < 8 || self.width < 8 {
            return Err(ModelError::BadConfig(format!(
                "input size {}x{} must be divisible by 8 (three 2x2 pools)",
                self.height, self.width
            )));
        }
        if self.channels == 0 || self.f1 == 0 || self.f2 == 0 || self.f3 == 0 || self.f4 == 0 {
            return Err(ModelError::BadConfig("all widths must be positive".into()));
        }
        Ok(())
    }

    /// Flattened size after the third pool.
    pub fn flat_dim(&self) -> usize {
        self.f3 * (self.height / 8) * (self.width / 8)
    }
}

/// The steering CNN: three conv(5x5, stride 1, pad 2) -> relu -> maxpool(2,2)
/// blocks, then fc -> relu -> fc(1) -> tanh. The tanh keeps the output
/// strictly inside (-1, 1).
#[derive(Debug, Clone)]
pub struct SteerNet {
    pub config: SteerNetConfig,
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub conv3_w: Tensor,
    pub conv3_b: Tensor,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
}

/// Activations retained from a forward pass, by paper layer number:
/// conv outputs are layers 1/4/7, pool outputs are layers 3/6/9.
pub struct SteerTrace {
    pub conv1: Tensor,
    pub pool1: Tensor,
    pub conv2: Tensor,
    pub pool2: Tensor,
    pub conv3: Tensor,
    pub pool3: Tensor,
    pub hidden: Tensor,
    pub output: Tensor,
}

impl SteerTrace {
    /// The feature maps of a conv layer by its paper index (1, 4 or 7).
    pub fn conv_layer(&self, layer: usize) -> Option<&Tensor> {
        match layer {
            1 => Some(&self.conv1),
            4 => Some(&self.conv2),
            7 => Some(&self.conv3),
            _ => None,
        }
    }
}

/// Uniform init in +-1/sqrt(fan_in).
fn uniform_init(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::param(shape, data).expect("consistent init shape")
}

impl SteerNet {
    pub fn init(config: SteerNetConfig, seed: u64) -> Result<SteerNet, ModelError> {
        config.validate()?;
        let mut rng = Rng::stream(seed, 0x57ee);
        let c = config;
        let conv_fan = |cin: usize| cin * 25;
        let conv1_w = uniform_init(&mut rng, &[c.f1, c.channels, 5, 5], conv_fan(c.channels));
        let conv1_b = uniform_init(&mut rng, &[c.f1], conv_fan(c.channels));
        let conv2_w = uniform_init(&mut rng, &[c.f2, c.f1, 5, 5], conv_fan(c.f1));
        let conv2_b = uniform_init(&mut rng, &[c.f2], conv_fan(c.f1));
        let conv3_w = uniform_init(&mut rng, &[c.f3, c.f2, 5, 5], conv_fan(c.f2));
        let conv3_b = uniform_init(&mut rng, &[c.f3], conv_fan(c.f2));
        let flat = c.flat_dim();
        let fc1_w = uniform_init(&mut rng, &[c.f4, flat], flat);
        let fc1_b = uniform_init(&mut rng, &[c.f4], flat);
        let fc2_w = uniform_init(&mut rng, &[1, c.f4], c.f4);
        let fc2_b = uniform_init(&mut rng, &[1], c.f4);
        Ok(SteerNet {
            config,
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            conv3_w,
            conv3_b,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
        })
    }

    pub fn params(&self) -> Vec<Tensor> {
        vec![
            self.conv1_w.clone(),
            self.conv1_b.clone(),
            self.conv2_w.clone(),
            self.conv2_b.clone(),
            self.conv3_w.clone(),
            self.conv3_b.clone(),
            self.fc1_w.clone(),
            self.fc1_b.clone(),
            self.fc2_w.clone(),
            self.fc2_b.clone(),
        ]
    }

    fn check_input(&self, x: &Tensor) -> Result<(), ModelError> {
        let want = [self.config.channels, self.config.height, self.config.width];
        if x.shape() != want {
            return Err(ModelError::WrongInput(format!(
                "expected input {:?}, got {:?}",
                want,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Forward pass retaining every block's activations.
    pub fn forward_trace(&self, tape: &mut Tape, x: &Tensor) -> Result<SteerTrace, ModelError> {
        self.check_input(x)?;
        let conv1 = tape.conv2d(x, &self.conv1_w, &self.conv1_b, 1, 2)?;
        let r1 = tape.relu(&conv1);
        let pool1 = tape.maxpool2d(&r1, 2, 2)?;
        let conv2 = tape.conv2d(&pool1, &self.conv2_w, &self.conv2_b, 1, 2)?;
        let r2 = tape.relu(&conv2);
        let pool2 = tape.maxpool2d(&r2, 2, 2)?;
        let conv3 = tape.conv2d(&pool2, &self.conv3_w, &self.conv3_b, 1, 2)?;
        let r3 = tape.relu(&conv3);
        let pool3 = tape.maxpool2d(&r3, 2, 2)?;
        let flat = tape.reshape(&pool3, &[self.config.flat_dim()])?;
        let fc1 = tape.linear(&flat, &self.fc1_w, &self.fc1_b)?;
        let hidden = tape.relu(&fc1);
        let fc2 = tape.linear(&hidden, &self.fc2_w, &self.fc2_b)?;
        let output = tape.tanh(&fc2);
        Ok(SteerTrace { conv1, pool1, conv2, pool2, conv3, pool3, hidden, output })
    }

    /// Forward pass returning the scalar steering tensor.
    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.forward_trace(tape, x)?.output)
    }

    /// Forward-only steering prediction.
    pub fn predict(&self, x: &Tensor) -> Result<f64, ModelError> {
        let mut tape = Tape::inference();
        Ok(self.forward(&mut tape, x)?.item())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(self.config.model_id());
        ckpt.push("conv1.weight", &self.conv1_w);
        ckpt.push("conv1.bias", &self.conv1_b);
        ckpt.push("conv2.weight", &self.conv2_w);
        ckpt.push("conv2.bias", &self.conv2_b);
        ckpt.push("conv3.weight", &self.conv3_w);
        ckpt.push("conv3.bias", &self.conv3_b);
        ckpt.push("fc1.weight", &self.fc1_w);
        ckpt.push("fc1.bias", &self.fc1_b);
        ckpt.push("fc2.weight", &self.fc2_w);
        ckpt.push("fc2.bias", &self.fc2_b);
        ckpt.push_raw("input_hw", vec![2], vec![self.config.height as f64, self.config.width as f64]);
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<SteerNet, ModelError> {
        if !ckpt.model_id.starts_with("steernet-") {
            return Err(ModelError::WrongInput(format!(
                "checkpoint {:?} is not a steering model",
                ckpt.model_id
            )));
        }
        let hw = ckpt.get("input_hw")?;
        let conv1_w = ckpt.get("conv1.weight")?;
        let (f1, channels) = (conv1_w.shape[0], conv1_w.shape[1]);
        let f2 = ckpt.get("conv2.weight")?.shape[0];
        let f3 = ckpt.get("conv3.weight")?.shape[0];
        let f4 = ckpt.get("fc1.weight")?.shape[0];
        let config = SteerNetConfig {
            channels,
            f1,
            f2,
            f3,
            f4,
            height: hw.values[0] as usize,
            width: hw.values[1] as usize,
        };
        let net = SteerNet::init(config, 0)?;
        for (name, tensor) in [
            ("conv1.weight", &net.conv1_w),
            ("conv1.bias", &net.conv1_b),
            ("conv2.weight", &net.conv2_w),
            ("conv2.bias", &net.conv2_b),
            ("conv3.weight", &net.conv3_w),
            ("conv3.bias", &net.conv3_b),
            ("fc1.weight", &net.fc1_w),
            ("fc1.bias", &net.fc1_b),
            ("fc2.weight", &net.fc2_w),
            ("fc2.bias", &net.fc2_b),
        ] {
            ckpt.load_into(name, tensor)?;
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeroed_final_layer_outputs_zero() {
        let net = SteerNet::init(SteerNetConfig::seg13(16, 24), 3).unwrap();
        net.fc2_w.set_data(vec![0.0; net.fc2_w.len()]).unwrap();
        net.fc2_b.set_data(vec![0.0]).unwrap();
        let mut rng = Rng::new(1);
        for _ in 0..3 {
            let x = Tensor::from_fn(&[13, 16, 24], |_| rng.uniform(0.0, 1.0));
            assert_eq!(net.predict(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn all_zero_input_gives_bias_determined_constant() {
        let net = SteerNet::init(SteerNetConfig::seg13(16, 24), 5).unwrap();
        let zero = Tensor::zeros(&[13, 16, 24]);
        let a = net.predict(&zero).unwrap();
        let b = net.predict(&zero).unwrap();
        assert_eq!(a, b);
        // changing a conv bias changes the constant
        let mut bias = net.conv1_b.to_vec();
        bias[0] += 0.5;
        net.conv1_b.set_data(bias).unwrap();
        let c = net.predict(&zero).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let net = SteerNet::init(SteerNetConfig::seg13(16, 24), 9).unwrap();
        let mut rng = Rng::new(2);
        for _ in 0..5 {
            let x = Tensor::from_fn(&[13, 16, 24], |_| rng.uniform(0.0, 50.0));
            let y = net.predict(&x).unwrap();
            assert!(y.abs() < 1.0, "{y}");
        }
    }

    #[test]
    fn layer_shape_contract() {
        // activations after layers 3, 6, 9 are (F1,H/2,W/2), (F2,H/4,W/4), (F3,H/8,W/8)
        let config = SteerNetConfig::seg13(32, 48);
        let net = SteerNet::init(config, 0).unwrap();
        let x = Tensor::zeros(&[13, 32, 48]);
        let mut tape = Tape::inference();
        let trace = net.forward_trace(&mut tape, &x).unwrap();
        assert_eq!(trace.pool1.shape(), &[config.f1, 16, 24]);
        assert_eq!(trace.pool2.shape(), &[config.f2, 8, 12]);
        assert_eq!(trace.pool3.shape(), &[config.f3, 4, 6]);
        assert_eq!(trace.conv1.shape(), &[config.f1, 32, 48]);
        assert_eq!(trace.output.shape(), &[1]);
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let net = SteerNet::init(SteerNetConfig::rgb(16, 24), 0).unwrap();
        let x = Tensor::zeros(&[13, 16, 24]);
        assert!(matches!(net.predict(&x), Err(ModelError::WrongInput(_))));
    }

    #[test]
    fn rejects_non_divisible_size() {
        assert!(SteerNet::init(SteerNetConfig::seg13(30, 48), 0).is_err());
    }

    #[test]
    fn init_is_deterministic_and_checkpoint_round_trips() {
        let a = SteerNet::init(SteerNetConfig::seg7(16, 24), 11).unwrap();
        let b = SteerNet::init(SteerNetConfig::seg7(16, 24), 11).unwrap();
        assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());

        let back = SteerNet::from_checkpoint(&a.to_checkpoint()).unwrap();
        assert_eq!(back.config, a.config);
        assert_eq!(back.to_checkpoint().to_bytes(), a.to_checkpoint().to_bytes());

        let c = SteerNet::init(SteerNetConfig::seg7(16, 24), 12).unwrap();
        assert_ne!(a.to_checkpoint().to_bytes(), c.to_checkpoint().to_bytes());
    }

    #[test]
    fn presets_match_published_widths() {
        let rgb = SteerNetConfig::preset("steernet-rgb", 64, 96).unwrap();
        assert_eq!((rgb.channels, rgb.f1, rgb.f2, rgb.f3, rgb.f4), (3, 3, 3, 13, 4));
        let seg = SteerNetConfig::preset("steernet-seg13", 64, 96).unwrap();
        assert_eq!((seg.channels, seg.f1, seg.f2, seg.f3, seg.f4), (13, 5, 4, 14, 5));
        let seg7 = SteerNetConfig::preset("steernet-seg7", 64, 96).unwrap();
        assert_eq!((seg7.channels, seg7.f1, seg7.f2, seg7.f3, seg7.f4), (7, 5, 4, 14, 5));
        assert!(SteerNetConfig::preset("bogus", 64, 96).is_none());
    }
}
