//! Procedural generator of schematic driving scenes with an analytically
//! known steering ground truth.
//!
//! Geometry, bird's-eye style: a road band runs from the bottom of the
//! image (the vehicle) toward the top, its centerline shifted by the
//! lateral offset and bending with curvature as distance grows. Road-line
//! strips mark the centerline and both road edges, sidewalk bands abut the
//! road, and distractor objects (vegetation, buildings, walls, fences,
//! poles, traffic signs, vehicles, pedestrians) are scattered outside the
//! road's reachable envelope so their placement carries no steering
//! information. Steering itself is a clamped linear function of curvature
//! and offset, so road-line geometry alone determines it.
//!
//! Per-scene road width, a symmetric row-wise width wobble, and a per-side
//! asymmetric wobble (gated by how far the parameters sit from zero, so a
//! straight centered road stays mirror-symmetric) degrade how precisely the
//! road and sidewalk boundaries localize the centerline, while the center
//! line stays exact. Sidewalks abut the road, so they stay partially
//! informative by construction.

mod dataset;

pub use dataset::{load_dataset, Dataset, DatasetConfig, Split};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::semantics::{render_palette, Label, LabelSetKind, Palette, RgbImage, SemanticMap};

/// Steering 1.0 corresponds to this many degrees at the wheel.
pub const MAX_STEERING_DEGREES: f64 = 70.0;

#[derive(Debug, Error)]
pub enum SceneGenError {
    #[error("image {height}x{width} is too small to fit road geometry (needs at least {min_height}x{min_width})")]
    ImageTooSmall { height: usize, width: usize, min_height: usize, min_width: usize },
    #[error("parameter out of bounds: {0}")]
    ParamOutOfBounds(String),
    #[error("steering magnitude {0} exceeds 1")]
    SteeringOutOfRange(f64),
    #[error("dataset needs n >= 3, got n < 3 (n = {0})")]
    DatasetTooSmall(usize),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error(transparent)]
    Semantics(#[from] crate::semantics::SemanticsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Sunny,
    Rainy,
}

impl Weather {
    pub fn name(self) -> &'static str {
        match self {
            Weather::Sunny => "sunny",
            Weather::Rainy => "rainy",
        }
    }

    pub fn from_name(name: &str) -> Option<Weather> {
        match name {
            "sunny" => Some(Weather::Sunny),
            "rainy" => Some(Weather::Rainy),
            _ => None,
        }
    }
}

/// Everything the generator is allowed to vary, as flat JSON-friendly keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub height: usize,
    pub width: usize,
    /// Curvature bound; curvature is sampled uniformly in [-kappa_max, kappa_max].
    pub kappa_max: f64,
    /// Lateral offset bound in pixels (0.3 x nominal road width by default).
    pub delta_max: f64,
    /// Steering gain on curvature; defaults put ~5% of samples at the clamp.
    pub steer_gain_kappa: f64,
    /// Steering gain on lateral offset.
    pub steer_gain_delta: f64,
    /// Pixel deflection of the centerline is 0.5 * curve_scale * kappa * t^2
    /// at distance t rows ahead of the vehicle.
    pub curve_scale: f64,
    pub road_half_width: f64,
    /// Per-scene symmetric half-width jitter, uniform in [-jitter, jitter].
    pub road_width_jitter: f64,
    /// Amplitude of the row-wise sinusoidal width wobble.
    pub edge_wobble_amp: f64,
    /// Period of the width wobble in rows.
    pub edge_wobble_period: f64,
    /// Amplitude of the per-side (asymmetric) edge wobble. Scaled by how far
    /// the scene's parameters sit from zero, so a straight centered road
    /// stays perfectly mirror-symmetric while ordinary scenes get road and
    /// sidewalk boundaries that localize the centerline only approximately.
    /// The center road line is never wobbled: road-line geometry alone
    /// determines steering exactly.
    pub edge_asym_amp: f64,
    /// Center road line covers |x - center| < line_half_width.
    pub line_half_width: f64,
    /// Edge road lines cover the outermost edge_line_width pixels of the road.
    pub edge_line_width: f64,
    pub sidewalk_width: f64,
    /// Std-dev of the additive per-pixel RGB noise (8-bit scale).
    pub noise_sigma: f64,
    /// Extra clearance between the road envelope and any distractor.
    pub distractor_margin: f64,
    pub vegetation_min: usize,
    pub vegetation_max: usize,
    pub buildings_min: usize,
    pub buildings_max: usize,
    pub walls_min: usize,
    pub walls_max: usize,
    pub fences_min: usize,
    pub fences_max: usize,
    pub poles_min: usize,
    pub poles_max: usize,
    pub signs_min: usize,
    pub signs_max: usize,
    pub vehicles_min: usize,
    pub vehicles_max: usize,
    pub pedestrians_min: usize,
    pub pedestrians_max: usize,
    pub other_min: usize,
    pub other_max: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            height: 64,
            width: 96,
            kappa_max: 0.05,
            delta_max: 6.0,
            steer_gain_kappa: 16.0,
            steer_gain_delta: 0.075,
            curve_scale: 0.15,
            road_half_width: 8.0,
            road_width_jitter: 2.0,
            edge_wobble_amp: 1.5,
            edge_wobble_period: 24.0,
            edge_asym_amp: 7.0,
            line_half_width: 1.0,
            edge_line_width: 2.0,
            sidewalk_width: 4.0,
            noise_sigma: 8.0,
            distractor_margin: 2.0,
            vegetation_min: 1,
            vegetation_max: 3,
            buildings_min: 1,
            buildings_max: 2,
            walls_min: 0,
            walls_max: 2,
            fences_min: 0,
            fences_max: 2,
            poles_min: 1,
            poles_max: 3,
            signs_min: 0,
            signs_max: 2,
            vehicles_min: 0,
            vehicles_max: 2,
            pedestrians_min: 0,
            pedestrians_max: 2,
            other_min: 0,
            other_max: 2,
        }
    }
}

impl GeneratorConfig {
    /// Smallest image the road geometry fits into.
    pub fn min_size(&self) -> (usize, usize) {
        let half = self.road_half_width
            + self.road_width_jitter
            + self.edge_wobble_amp
            + self.edge_asym_amp
            + self.sidewalk_width;
        (8, (2.0 * half).ceil() as usize + 2)
    }

    fn validate_size(&self, height: usize, width: usize) -> Result<(), SceneGenError> {
        let (min_h, min_w) = self.min_size();
        if height < min_h || width < min_w {
            return Err(SceneGenError::ImageTooSmall {
                height,
                width,
                min_height: min_h,
                min_width: min_w,
            });
        }
        Ok(())
    }
}

/// Per-scene parameters; the scene is a pure function of these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub curvature: f64,
    pub offset: f64,
    pub seed: u64,
    pub weather: Weather,
    pub height: usize,
    pub width: usize,
}

/// A generated scene: semantic map, pseudo-RGB rendering, and the ground
/// truth steering in [-1, 1].
#[derive(Debug, Clone)]
pub struct Scene {
    pub params: SceneParams,
    pub semantic: SemanticMap,
    pub rgb: RgbImage,
    pub steering: f64,
}

/// The analytic steering law: clamp(a*kappa + b*delta, -1, 1).
/// Antisymmetric by construction: f(-k, -d) = -f(k, d).
pub fn steering_from_geometry(curvature: f64, offset: f64, config: &GeneratorConfig) -> f64 {
    (config.steer_gain_kappa * curvature + config.steer_gain_delta * offset).clamp(-1.0, 1.0)
}

/// Convert normalized steering to degrees at the wheel (70 degrees at 1.0).
pub fn steering_to_degrees(steering: f64) -> Result<f64, SceneGenError> {
    if !(steering.is_finite() && steering.abs() <= 1.0) {
        return Err(SceneGenError::SteeringOutOfRange(steering));
    }
    Ok(steering * MAX_STEERING_DEGREES)
}

/// Centerline column at row `y` (row 0 is the far edge of the image).
fn centerline(params: &SceneParams, config: &GeneratorConfig, y: usize) -> f64 {
    let t = (params.height - 1 - y) as f64;
    (params.width as f64 - 1.0) / 2.0
        + params.offset
        + 0.5 * config.curve_scale * params.curvature * t * t
}

/// Half extent of everything road-related (through the sidewalk) that any
/// parameter combination could reach at row `y`, measured from the image
/// center column. Distractors must stay outside this envelope, which makes
/// their placement independent of the actual curvature and offset.
fn envelope_half(config: &GeneratorConfig, height: usize, y: usize) -> f64 {
    let t = (height - 1 - y) as f64;
    let max_center_shift = config.delta_max + 0.5 * config.curve_scale * config.kappa_max * t * t;
    max_center_shift
        + config.road_half_width
        + config.road_width_jitter
        + config.edge_wobble_amp
        + config.edge_asym_amp
        + config.sidewalk_width
        + config.distractor_margin
}

struct RoadLayout {
    /// Per-row half width of the road band to the left of the centerline.
    left: Vec<f64>,
    /// Per-row half width to the right.
    right: Vec<f64>,
    /// Per-row centerline column.
    center: Vec<f64>,
}

fn road_layout(params: &SceneParams, config: &GeneratorConfig, rng: &mut Rng) -> RoadLayout {
    let h = params.height;
    let width_jitter = rng.uniform(-config.road_width_jitter, config.road_width_jitter);
    let wobble_phase = rng.uniform(0.0, std::f64::consts::TAU);
    let asym_phase_l = rng.uniform(0.0, std::f64::consts::TAU);
    let asym_phase_r = rng.uniform(0.0, std::f64::consts::TAU);
    // Constant per-side offsets survive row-averaging, so the road and
    // sidewalk boundaries stay systematically off the true centerline.
    let asym_dc_l = rng.uniform(-1.0, 1.0);
    let asym_dc_r = rng.uniform(-1.0, 1.0);
    let wobble_freq = std::f64::consts::TAU / config.edge_wobble_period.max(1.0);
    // The asymmetric wobble fades to exactly zero for a straight centered
    // road, keeping that case mirror-symmetric.
    let gate = ((params.curvature.abs() / config.kappa_max.max(1e-12))
        + (params.offset.abs() / config.delta_max.max(1e-12)))
    .min(1.0);
    let mut left = Vec::with_capacity(h);
    let mut right = Vec::with_capacity(h);
    let mut center = Vec::with_capacity(h);
    for y in 0..h {
        let base = config.road_half_width
            + width_jitter
            + config.edge_wobble_amp * (wobble_freq * y as f64 + wobble_phase).sin();
        let asym_l = gate
            * config.edge_asym_amp
            * (0.4 * (wobble_freq * y as f64 + asym_phase_l).sin() + 0.6 * asym_dc_l);
        let asym_r = gate
            * config.edge_asym_amp
            * (0.4 * (wobble_freq * y as f64 + asym_phase_r).sin() + 0.6 * asym_dc_r);
        left.push(base + asym_l);
        right.push(base + asym_r);
        center.push(centerline(params, config, y));
    }
    RoadLayout { left, right, center }
}

/// Deterministically generate one scene from its parameters.
pub fn generate_scene(params: &SceneParams, config: &GeneratorConfig) -> Result<Scene, SceneGenError> {
    config.validate_size(params.height, params.width)?;
    if params.curvature.abs() > config.kappa_max {
        return Err(SceneGenError::ParamOutOfBounds(format!(
            "|curvature| = {} exceeds kappa_max = {}",
            params.curvature.abs(),
            config.kappa_max
        )));
    }
    if params.offset.abs() > config.delta_max {
        return Err(SceneGenError::ParamOutOfBounds(format!(
            "|offset| = {} exceeds delta_max = {}",
            params.offset.abs(),
            config.delta_max
        )));
    }

    let (h, w) = (params.height, params.width);
    let mut map = SemanticMap::filled(h, w, LabelSetKind::Full13, Label::None.id())?;

    // Distractors first (they only ever touch the None background); their
    // stream depends on the seed alone, never on curvature or offset.
    let mut drng = Rng::stream(params.seed, 0xd15);
    paint_distractors(&mut map, config, &mut drng);

    // Road geometry over the background.
    let mut lrng = Rng::stream(params.seed, 0x10ad);
    let layout = road_layout(params, config, &mut lrng);
    paint_road(&mut map, config, &layout);

    let steering = steering_from_geometry(params.curvature, params.offset, config);

    // Weather affects only the rendering: palette plus a seeded noise
    // stream keyed on the weather mode.
    let palette = match params.weather {
        Weather::Sunny => Palette::carla(LabelSetKind::Full13),
        Weather::Rainy => Palette::carla(LabelSetKind::Full13).rainy_variant(),
    };
    let mut rgb = render_palette(&map, &palette)?;
    let noise_tag = match params.weather {
        Weather::Sunny => 0x5117,
        Weather::Rainy => 0x4a11,
    };
    let mut nrng = Rng::stream(params.seed, noise_tag);
    apply_noise(&mut rgb, config.noise_sigma, &mut nrng);

    Ok(Scene { params: *params, semantic: map, rgb, steering })
}

fn paint_road(map: &mut SemanticMap, config: &GeneratorConfig, layout: &RoadLayout) {
    let (h, w) = (map.height(), map.width());
    for y in 0..h {
        let center = layout.center[y];
        for x in 0..w {
            let signed = x as f64 - center;
            let half = if signed < 0.0 { layout.left[y] } else { layout.right[y] };
            let d = signed.abs();
            let label = if d < config.line_half_width {
                Label::RoadLines
            } else if d < half - config.edge_line_width {
                Label::Roads
            } else if d < half {
                Label::RoadLines
            } else if d < half + config.sidewalk_width {
                Label::Sidewalks
            } else {
                continue;
            };
            map.set(y, x, label.id());
        }
    }
}

struct ObjectSpec {
    label: Label,
    min: usize,
    max: usize,
    w_range: (usize, usize),
    h_range: (usize, usize),
    round: bool,
}

fn paint_distractors(map: &mut SemanticMap, config: &GeneratorConfig, rng: &mut Rng) {
    let specs = [
        ObjectSpec {
            label: Label::Vegetation,
            min: config.vegetation_min,
            max: config.vegetation_max,
            w_range: (4, 8),
            h_range: (4, 8),
            round: true,
        },
        ObjectSpec {
            label: Label::Buildings,
            min: config.buildings_min,
            max: config.buildings_max,
            w_range: (5, 9),
            h_range: (6, 12),
            round: false,
        },
        ObjectSpec {
            label: Label::Walls,
            min: config.walls_min,
            max: config.walls_max,
            w_range: (2, 3),
            h_range: (5, 10),
            round: false,
        },
        ObjectSpec {
            label: Label::Fences,
            min: config.fences_min,
            max: config.fences_max,
            w_range: (1, 2),
            h_range: (4, 8),
            round: false,
        },
        ObjectSpec {
            label: Label::Poles,
            min: config.poles_min,
            max: config.poles_max,
            w_range: (1, 1),
            h_range: (4, 7),
            round: false,
        },
        ObjectSpec {
            label: Label::TrafficSigns,
            min: config.signs_min,
            max: config.signs_max,
            w_range: (2, 3),
            h_range: (2, 3),
            round: false,
        },
        ObjectSpec {
            label: Label::Vehicles,
            min: config.vehicles_min,
            max: config.vehicles_max,
            w_range: (4, 6),
            h_range: (6, 9),
            round: false,
        },
        ObjectSpec {
            label: Label::Pedestrians,
            min: config.pedestrians_min,
            max: config.pedestrians_max,
            w_range: (2, 2),
            h_range: (3, 3),
            round: false,
        },
        ObjectSpec {
            label: Label::Other,
            min: config.other_min,
            max: config.other_max,
            w_range: (2, 4),
            h_range: (2, 4),
            round: true,
        },
    ];
    let (h, w) = (map.height(), map.width());
    for spec in &specs {
        let count = if spec.max >= spec.min { rng.range(spec.min, spec.max) } else { spec.min };
        for _ in 0..count {
            let ow = rng.range(spec.w_range.0, spec.w_range.1);
            let oh = rng.range(spec.h_range.0, spec.h_range.1);
            if ow >= w || oh >= h {
                continue;
            }
            // Rejection-sample a placement fully outside the road envelope.
            // The envelope depends only on the config, so the stream stays
            // independent of the scene's curvature and offset.
            for _attempt in 0..40 {
                let y0 = rng.below(h - oh);
                let x0 = rng.below(w - ow);
                // The envelope is widest at the smallest row index the
                // object covers (furthest ahead).
                let env = envelope_half(config, h, y0);
                let center = (w as f64 - 1.0) / 2.0;
                let lo = center - env;
                let hi = center + env;
                let left = x0 as f64;
                let right = (x0 + ow - 1) as f64;
                if right < lo || left > hi {
                    paint_object(map, spec, y0, x0, oh, ow);
                    break;
                }
            }
        }
    }
}

fn paint_object(map: &mut SemanticMap, spec: &ObjectSpec, y0: usize, x0: usize, oh: usize, ow: usize) {
    let cy = y0 as f64 + (oh as f64 - 1.0) / 2.0;
    let cx = x0 as f64 + (ow as f64 - 1.0) / 2.0;
    let ry = oh as f64 / 2.0;
    let rx = ow as f64 / 2.0;
    for y in y0..y0 + oh {
        for x in x0..x0 + ow {
            if spec.round {
                let dy = (y as f64 - cy) / ry;
                let dx = (x as f64 - cx) / rx;
                if dy * dy + dx * dx > 1.0 {
                    continue;
                }
            }
            map.set(y, x, spec.label.id());
        }
    }
}

fn apply_noise(img: &mut RgbImage, sigma: f64, rng: &mut Rng) {
    if sigma <= 0.0 {
        return;
    }
    let (h, w) = (img.height(), img.width());
    for y in 0..h {
        for x in 0..w {
            let mut px = img.get(y, x);
            for channel in &mut px {
                let noisy = *channel as f64 + sigma * rng.normal();
                *channel = noisy.round().clamp(0.0, 255.0) as u8;
            }
            img.set(y, x, px);
        }
    }
}

/// Worker-thread cap: the SEMREDUCE_THREADS environment variable when set,
/// otherwise the machine's available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("SEMREDUCE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}
