//! The 13-class label taxonomy, the 7-class reduction, one-hot encoding,
//! channel ablation, palettes, and bit-exact image I/O.
//!
//! Label ids follow the CARLA convention so exported data stays
//! interoperable: 0 None, 1 Buildings, 2 Fences, 3 Other, 4 Pedestrians,
//! 5 Poles, 6 RoadLines, 7 Roads, 8 Sidewalks, 9 Vegetation, 10 Vehicles,
//! 11 Walls, 12 TrafficSigns.

mod image;
mod palette;

pub use image::{read_pgm, read_ppm, write_pgm, write_ppm, RgbImage};
pub use palette::Palette;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("label id {id} is not valid for the {kind:?} label set")]
    InvalidLabel { id: u8, kind: LabelSetKind },
    #[error("palette has no color for label id {id}")]
    MissingColor { id: u8 },
    #[error("camouflage source and target must differ (both were {0})")]
    CamouflageSameLabel(u8),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The 13 semantic classes of the full label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Label {
    None = 0,
    Buildings = 1,
    Fences = 2,
    Other = 3,
    Pedestrians = 4,
    Poles = 5,
    RoadLines = 6,
    Roads = 7,
    Sidewalks = 8,
    Vegetation = 9,
    Vehicles = 10,
    Walls = 11,
    TrafficSigns = 12,
}

impl Label {
    pub const COUNT: usize = 13;

    pub const ALL: [Label; Label::COUNT] = [
        Label::None,
        Label::Buildings,
        Label::Fences,
        Label::Other,
        Label::Pedestrians,
        Label::Poles,
        Label::RoadLines,
        Label::Roads,
        Label::Sidewalks,
        Label::Vegetation,
        Label::Vehicles,
        Label::Walls,
        Label::TrafficSigns,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Label> {
        Label::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::None => "none",
            Label::Buildings => "buildings",
            Label::Fences => "fences",
            Label::Other => "other",
            Label::Pedestrians => "pedestrians",
            Label::Poles => "poles",
            Label::RoadLines => "road_lines",
            Label::Roads => "roads",
            Label::Sidewalks => "sidewalks",
            Label::Vegetation => "vegetation",
            Label::Vehicles => "vehicles",
            Label::Walls => "walls",
            Label::TrafficSigns => "traffic_signs",
        }
    }

    pub fn from_name(name: &str) -> Option<Label> {
        Label::ALL.iter().copied().find(|l| l.name() == name)
    }
}

/// Which label vocabulary governs a map or tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSetKind {
    /// All 13 CARLA classes, ids 0..=12.
    Full13,
    /// The 7 classes surviving the reduction, reindexed 0..=6 in ascending
    /// original-id order.
    Compact7,
}

impl LabelSetKind {
    pub fn class_count(self) -> usize {
        match self {
            LabelSetKind::Full13 => 13,
            LabelSetKind::Compact7 => 7,
        }
    }

    pub fn contains(self, id: u8) -> bool {
        (id as usize) < self.class_count()
    }

    /// Human-readable name of a class id in this set.
    pub fn name(self, id: u8) -> Option<&'static str> {
        match self {
            LabelSetKind::Full13 => Label::from_id(id).map(Label::name),
            LabelSetKind::Compact7 => RemapTable::table1()
                .surviving()
                .get(id as usize)
                .and_then(|&orig| Label::from_id(orig))
                .map(Label::name),
        }
    }

    /// Id of a named class in this set.
    pub fn id_of(self, name: &str) -> Option<u8> {
        (0..self.class_count() as u8).find(|&id| self.name(id) == Some(name))
    }
}

/// An ordered list of (id, name, display color) entries.
#[derive(Debug, Clone)]
pub struct LabelSet {
    pub kind: LabelSetKind,
    pub entries: Vec<LabelSetEntry>,
}

#[derive(Debug, Clone)]
pub struct LabelSetEntry {
    pub id: u8,
    pub name: &'static str,
    pub color: [u8; 3],
}

impl LabelSet {
    pub fn of(kind: LabelSetKind) -> LabelSet {
        let palette = Palette::carla(kind);
        let entries = (0..kind.class_count() as u8)
            .map(|id| LabelSetEntry {
                id,
                name: kind.name(id).expect("id in range"),
                color: palette.color(id).expect("palette covers the set"),
            })
            .collect();
        LabelSet { kind, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The many-to-one label reduction: every source id maps to a surviving id,
/// and surviving ids map to themselves (the table is idempotent).
///
/// The reduction collapses Pedestrians, Other, Vegetation, Walls and
/// Buildings into Other, and Poles and TrafficSigns into Fences; Roads,
/// Sidewalks, RoadLines, Fences, Vehicles and None survive unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemapTable {
    targets: [u8; Label::COUNT],
}

impl RemapTable {
    /// The standard reduction table.
    pub fn table1() -> &'static RemapTable {
        static TABLE: RemapTable = RemapTable {
            targets: [
                Label::None as u8,      // None -> None
                Label::Other as u8,     // Buildings -> Other
                Label::Fences as u8,    // Fences -> Fences
                Label::Other as u8,     // Other -> Other
                Label::Other as u8,     // Pedestrians -> Other
                Label::Fences as u8,    // Poles -> Fences
                Label::RoadLines as u8, // RoadLines -> RoadLines
                Label::Roads as u8,     // Roads -> Roads
                Label::Sidewalks as u8, // Sidewalks -> Sidewalks
                Label::Other as u8,     // Vegetation -> Other
                Label::Vehicles as u8,  // Vehicles -> Vehicles
                Label::Other as u8,     // Walls -> Other
                Label::Fences as u8,    // TrafficSigns -> Fences
            ],
        };
        &TABLE
    }

    /// Remap one label id within the original 13-id space.
    pub fn remap_label(&self, id: u8) -> Result<u8, SemanticsError> {
        self.targets
            .get(id as usize)
            .copied()
            .ok_or(SemanticsError::InvalidLabel { id, kind: LabelSetKind::Full13 })
    }

    /// Surviving original ids in ascending order; their position is the
    /// compact id.
    pub fn surviving(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self.targets.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// The compact id a source label lands on after reduction.
    pub fn remap_to_compact(&self, id: u8) -> Result<u8, SemanticsError> {
        let target = self.remap_label(id)?;
        let pos = self
            .surviving()
            .iter()
            .position(|&s| s == target)
            .expect("target is always a surviving id");
        Ok(pos as u8)
    }
}

/// A height x width grid of label ids governed by a label set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMap {
    width: usize,
    height: usize,
    kind: LabelSetKind,
    labels: Vec<u8>,
}

impl SemanticMap {
    pub fn new(height: usize, width: usize, kind: LabelSetKind, labels: Vec<u8>) -> Result<Self, SemanticsError> {
        if labels.len() != height * width {
            return Err(SemanticsError::SizeMismatch(format!(
                "{height}x{width} map needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| !kind.contains(l)) {
            return Err(SemanticsError::InvalidLabel { id: bad, kind });
        }
        Ok(SemanticMap { width, height, kind, labels })
    }

    pub fn filled(height: usize, width: usize, kind: LabelSetKind, label: u8) -> Result<Self, SemanticsError> {
        SemanticMap::new(height, width, kind, vec![label; height * width])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> LabelSetKind {
        self.kind
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub(crate) fn set(&mut self, y: usize, x: usize, label: u8) {
        debug_assert!(self.kind.contains(label));
        self.labels[y * self.width + x] = label;
    }

    /// Pixel count per class id.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.kind.class_count()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Apply the reduction pixelwise; the result is governed by the compact
    /// 7-class set. Remapping an already-compact map is the identity.
    pub fn remap(&self, table: &RemapTable) -> SemanticMap {
        match self.kind {
            LabelSetKind::Compact7 => self.clone(),
            LabelSetKind::Full13 => {
                let lut: Vec<u8> = (0..Label::COUNT as u8)
                    .map(|id| table.remap_to_compact(id).expect("id in range"))
                    .collect();
                let labels = self.labels.iter().map(|&l| lut[l as usize]).collect();
                SemanticMap {
                    width: self.width,
                    height: self.height,
                    kind: LabelSetKind::Compact7,
                    labels,
                }
            }
        }
    }

    /// One-hot encode to a [C,H,W] tensor: channel c is 1 exactly where the
    /// pixel's label id is c.
    pub fn one_hot(&self) -> OneHotTensor {
        OneHotTensor::encode(self)
    }
}

/// A [C,H,W] tensor of 0/1 values with per-pixel channel sum exactly 1.
///
/// Produced by [`SemanticMap::one_hot`]; [`OneHotTensor::zero_channel`]
/// deliberately breaks the sum-to-1 invariant (that is the ablation), while
/// [`OneHotTensor::camouflage_channel`] preserves it.
#[derive(Debug, Clone)]
pub struct OneHotTensor {
    kind: LabelSetKind,
    height: usize,
    width: usize,
    tensor: Tensor,
}

impl OneHotTensor {
    pub fn encode(map: &SemanticMap) -> OneHotTensor {
        let (h, w) = (map.height(), map.width());
        let classes = map.kind().class_count();
        let npix = h * w;
        let mut data = vec![0.0; classes * npix];
        for (px, &l) in map.labels().iter().enumerate() {
            data[l as usize * npix + px] = 1.0;
        }
        OneHotTensor {
            kind: map.kind(),
            height: h,
            width: w,
            tensor: Tensor::new(&[classes, h, w], data).expect("consistent dims"),
        }
    }

    pub fn kind(&self) -> LabelSetKind {
        self.kind
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// True when every value is 0/1 and each pixel's channel sum is 1.
    pub fn is_valid_one_hot(&self) -> bool {
        let npix = self.height * self.width;
        let classes = self.kind.class_count();
        let data = self.tensor.data();
        if data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return false;
        }
        (0..npix).all(|px| {
            let sum: f64 = (0..classes).map(|c| data[c * npix + px]).sum();
            sum == 1.0
        })
    }

    /// Zero out one label's channel. The result is intentionally not a
    /// valid one-hot tensor: per-pixel sums may drop to 0.
    pub fn zero_channel(&self, label: u8) -> Result<OneHotTensor, SemanticsError> {
        if !self.kind.contains(label) {
            return Err(SemanticsError::InvalidLabel { id: label, kind: self.kind });
        }
        let npix = self.height * self.width;
        let mut data = self.tensor.to_vec();
        data[label as usize * npix..(label as usize + 1) * npix].fill(0.0);
        Ok(OneHotTensor {
            kind: self.kind,
            height: self.height,
            width: self.width,
            tensor: Tensor::new(self.tensor.shape(), data).expect("same dims"),
        })
    }

    /// Move one label's pixels into another label's channel, preserving
    /// one-hot validity ("camouflage" removal).
    pub fn camouflage_channel(&self, label: u8, target: u8) -> Result<OneHotTensor, SemanticsError> {
        if label == target {
            return Err(SemanticsError::CamouflageSameLabel(label));
        }
        if !self.kind.contains(label) {
            return Err(SemanticsError::InvalidLabel { id: label, kind: self.kind });
        }
        if !self.kind.contains(target) {
            return Err(SemanticsError::InvalidLabel { id: target, kind: self.kind });
        }
        let npix = self.height * self.width;
        let mut data = self.tensor.to_vec();
        for px in 0..npix {
            if data[label as usize * npix + px] == 1.0 {
                data[label as usize * npix + px] = 0.0;
                data[target as usize * npix + px] = 1.0;
            }
        }
        Ok(OneHotTensor {
            kind: self.kind,
            height: self.height,
            width: self.width,
            tensor: Tensor::new(self.tensor.shape(), data).expect("same dims"),
        })
    }

    /// Reconstruct the map by per-pixel argmax over channels (first channel
    /// wins ties).
    pub fn argmax_map(&self) -> SemanticMap {
        let npix = self.height * self.width;
        let classes = self.kind.class_count();
        let data = self.tensor.data();
        let labels: Vec<u8> = (0..npix)
            .map(|px| {
                let mut best = f64::NEG_INFINITY;
                let mut best_c = 0u8;
                for c in 0..classes {
                    let v = data[c * npix + px];
                    if v > best {
                        best = v;
                        best_c = c as u8;
                    }
                }
                best_c
            })
            .collect();
        SemanticMap::new(self.height, self.width, self.kind, labels).expect("argmax ids in range")
    }
}

/// Pixelwise color lookup. Fails if the palette lacks a color for any id
/// present in the map's label set.
pub fn render_palette(map: &SemanticMap, palette: &Palette) -> Result<RgbImage, SemanticsError> {
    if palette.len() < map.kind().class_count() {
        let missing = palette.len() as u8;
        return Err(SemanticsError::MissingColor { id: missing });
    }
    let mut img = RgbImage::new(map.height(), map.width());
    for y in 0..map.height() {
        for x in 0..map.width() {
            let color = palette.color(map.get(y, x)).expect("checked length");
            img.set(y, x, color);
        }
    }
    Ok(img)
}
