use super::{LabelSetKind, RemapTable};

/// Display colors indexed by label id. Palettes are plain data so callers
/// can swap in their own; the defaults are the CARLA class colors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

/// CARLA's published class colors, indexed by the full-set label id.
const CARLA_COLORS: [[u8; 3]; 13] = [
    [0, 0, 0],       // none
    [70, 70, 70],    // buildings
    [190, 153, 153], // fences
    [250, 170, 160], // other
    [220, 20, 60],   // pedestrians
    [153, 153, 153], // poles
    [157, 234, 50],  // road lines
    [128, 64, 128],  // roads
    [244, 35, 232],  // sidewalks
    [107, 142, 35],  // vegetation
    [0, 0, 142],     // vehicles
    [102, 102, 156], // walls
    [220, 220, 0],   // traffic signs
];

impl Palette {
    pub fn new(colors: Vec<[u8; 3]>) -> Palette {
        Palette { colors }
    }

    /// The default colors for a label set. The compact palette keeps each
    /// surviving class's original color.
    pub fn carla(kind: LabelSetKind) -> Palette {
        match kind {
            LabelSetKind::Full13 => Palette { colors: CARLA_COLORS.to_vec() },
            LabelSetKind::Compact7 => Palette {
                colors: RemapTable::table1()
                    .surviving()
                    .iter()
                    .map(|&orig| CARLA_COLORS[orig as usize])
                    .collect(),
            },
        }
    }

    /// A darker, blue-shifted variant used as the rainy-weather rendering.
    pub fn rainy_variant(&self) -> Palette {
        Palette {
            colors: self
                .colors
                .iter()
                .map(|c| {
                    [
                        ((c[0] as f64 * 0.55) as u8).saturating_add(8),
                        ((c[1] as f64 * 0.55) as u8).saturating_add(12),
                        ((c[2] as f64 * 0.55) as u8).saturating_add(40),
                    ]
                })
                .collect(),
        }
    }

    pub fn color(&self, id: u8) -> Option<[u8; 3]> {
        self.colors.get(id as usize).copied()
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}
