//! Dataset assembly: seeded bulk generation, train/val/test splits, and the
//! on-disk layout (config.json + manifest.csv + maps/*.pgm + rgb/*.ppm).

use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate_scene, worker_threads, GeneratorConfig, Scene, SceneGenError, SceneParams, Weather};
use crate::rng::Rng;
use crate::semantics::{read_pgm, read_ppm, write_pgm, write_ppm, LabelSetKind, RemapTable, SemanticMap};

pub const MANIFEST_HEADER: &str = "id,steering,curvature,offset,weather";

/// Regeneration metadata written next to every dataset. Flat keys so hand
/// editing stays easy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub master_seed: u64,
    pub n: usize,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub label_set: LabelSetKind,
    #[serde(flatten)]
    pub generator: GeneratorConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            master_seed: 0,
            n: 2000,
            train_ratio: 0.8,
            val_ratio: 0.1,
            test_ratio: 0.1,
            label_set: LabelSetKind::Full13,
            generator: GeneratorConfig::default(),
        }
    }
}

impl DatasetConfig {
    fn validate(&self) -> Result<(), SceneGenError> {
        if self.n < 3 {
            return Err(SceneGenError::DatasetTooSmall(self.n));
        }
        let ratios = [self.train_ratio, self.val_ratio, self.test_ratio];
        let sum: f64 = ratios.iter().sum();
        if ratios.iter().any(|&r| r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(SceneGenError::BadRatios(ratios));
        }
        Ok(())
    }

    /// Split sizes: floor the train and val shares, hand the remainder to
    /// test, and keep every split non-empty.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let n = self.n;
        let train = ((self.train_ratio * n as f64).floor() as usize).clamp(1, n - 2);
        let val = ((self.val_ratio * n as f64).floor() as usize).clamp(1, n - 1 - train);
        let test = n - train - val;
        (train, val, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// An in-memory dataset: scenes in id order plus the config that produced
/// them. Splits are contiguous, disjoint id ranges.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub scenes: Vec<Scene>,
}

/// The per-scene parameter draw. Kept in one place so that disk loading can
/// rederive the per-scene seed of any id.
fn scene_params(config: &DatasetConfig, id: usize) -> SceneParams {
    let mut rng = Rng::stream(config.master_seed, id as u64);
    let curvature = rng.uniform(-config.generator.kappa_max, config.generator.kappa_max);
    let offset = rng.uniform(-config.generator.delta_max, config.generator.delta_max);
    let weather = if rng.chance(0.5) { Weather::Sunny } else { Weather::Rainy };
    let seed = rng.next_u64();
    SceneParams {
        curvature,
        offset,
        seed,
        weather,
        height: config.generator.height,
        width: config.generator.width,
    }
}

impl Dataset {
    /// Generate all scenes, sharding across worker threads (the result does
    /// not depend on the thread count).
    pub fn generate(config: DatasetConfig) -> Result<Dataset, SceneGenError> {
        config.validate()?;
        let n = config.n;
        let workers = worker_threads().min(n).max(1);
        let mut scenes: Vec<Option<Scene>> = vec![None; n];
        let chunk = n.div_ceil(workers);
        let errors = std::sync::Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for (widx, slot_chunk) in scenes.chunks_mut(chunk).enumerate() {
                let config = &config;
                let errors = &errors;
                scope.spawn(move || {
                    let base = widx * chunk;
                    for (offset, slot) in slot_chunk.iter_mut().enumerate() {
                        let id = base + offset;
                        match generate_scene(&scene_params(config, id), &config.generator) {
                            Ok(scene) => *slot = Some(scene),
                            Err(e) => errors.lock().unwrap().push(e),
                        }
                    }
                });
            }
        });
        if let Some(e) = errors.into_inner().unwrap().into_iter().next() {
            return Err(e);
        }
        let scenes = scenes.into_iter().map(|s| s.expect("every slot filled")).collect();
        Ok(Dataset { config, scenes })
    }

    pub fn split_range(&self, split: Split) -> Range<usize> {
        let (train, val, _test) = self.config.split_sizes();
        match split {
            Split::Train => 0..train,
            Split::Val => train..train + val,
            Split::Test => train + val..self.config.n,
        }
    }

    pub fn split_scenes(&self, split: Split) -> &[Scene] {
        &self.scenes[self.split_range(split)]
    }

    /// Apply the label reduction to every semantic map. Steering values and
    /// renders are untouched; an already-compact dataset passes through
    /// unchanged.
    pub fn remapped(&self) -> Dataset {
        let table = RemapTable::table1();
        let mut config = self.config.clone();
        config.label_set = LabelSetKind::Compact7;
        let scenes = self
            .scenes
            .iter()
            .map(|s| Scene {
                params: s.params,
                semantic: s.semantic.remap(table),
                rgb: s.rgb.clone(),
                steering: s.steering,
            })
            .collect();
        Dataset { config, scenes }
    }

    /// Write the dataset directory: config.json, manifest.csv, maps/, rgb/.
    pub fn write(&self, dir: &Path) -> Result<(), SceneGenError> {
        fs::create_dir_all(dir.join("maps"))?;
        fs::create_dir_all(dir.join("rgb"))?;
        let config_json =
            serde_json::to_string_pretty(&self.config).expect("config serializes") + "\n";
        fs::write(dir.join("config.json"), config_json)?;

        let mut manifest = String::from(MANIFEST_HEADER);
        manifest.push('\n');
        for (id, scene) in self.scenes.iter().enumerate() {
            manifest.push_str(&format!(
                "{id},{},{},{},{}\n",
                scene.steering,
                scene.params.curvature,
                scene.params.offset,
                scene.params.weather.name()
            ));
        }
        fs::write(dir.join("manifest.csv"), manifest)?;

        for (id, scene) in self.scenes.iter().enumerate() {
            write_pgm(
                &dir.join("maps").join(format!("{id:05}.pgm")),
                scene.semantic.height(),
                scene.semantic.width(),
                scene.semantic.labels(),
            )?;
            write_ppm(&dir.join("rgb").join(format!("{id:05}.ppm")), &scene.rgb)?;
        }
        Ok(())
    }
}

/// Load a dataset directory written by [`Dataset::write`].
pub fn load_dataset(dir: &Path) -> Result<Dataset, SceneGenError> {
    let config: DatasetConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)
        .map_err(|e| SceneGenError::Format { what: "config.json", detail: e.to_string() })?;
    let manifest = fs::read_to_string(dir.join("manifest.csv"))?;
    let mut lines = manifest.lines();
    let header = lines.next().unwrap_or("");
    if header != MANIFEST_HEADER {
        return Err(SceneGenError::Format {
            what: "manifest.csv",
            detail: format!("unexpected header {header:?}"),
        });
    }
    let mut scenes = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(SceneGenError::Format {
                what: "manifest.csv",
                detail: format!("line {}: expected 5 fields, got {}", lineno + 2, fields.len()),
            });
        }
        let id: usize = fields[0].parse().map_err(|_| SceneGenError::Format {
            what: "manifest.csv",
            detail: format!("bad id {:?}", fields[0]),
        })?;
        let steering: f64 = fields[1].parse().map_err(|_| SceneGenError::Format {
            what: "manifest.csv",
            detail: format!("bad steering {:?}", fields[1]),
        })?;
        let curvature: f64 = fields[2].parse().map_err(|_| SceneGenError::Format {
            what: "manifest.csv",
            detail: format!("bad curvature {:?}", fields[2]),
        })?;
        let offset: f64 = fields[3].parse().map_err(|_| SceneGenError::Format {
            what: "manifest.csv",
            detail: format!("bad offset {:?}", fields[3]),
        })?;
        let weather = Weather::from_name(fields[4]).ok_or_else(|| SceneGenError::Format {
            what: "manifest.csv",
            detail: format!("bad weather {:?}", fields[4]),
        })?;

        let (h, w, labels) = read_pgm(&dir.join("maps").join(format!("{id:05}.pgm")))?;
        let semantic = SemanticMap::new(h, w, config.label_set, labels)?;
        let rgb = read_ppm(&dir.join("rgb").join(format!("{id:05}.ppm")))?;
        // Rederive the per-scene seed so a loaded dataset round-trips
        // byte-identically through write().
        let seed = scene_params(&config, id).seed;
        scenes.push(Scene {
            params: SceneParams { curvature, offset, seed, weather, height: h, width: w },
            semantic,
            rgb,
            steering,
        });
    }
    if scenes.len() != config.n {
        return Err(SceneGenError::Format {
            what: "manifest.csv",
            detail: format!("config says n = {}, manifest has {} rows", config.n, scenes.len()),
        });
    }
    Ok(Dataset { config, scenes })
}
