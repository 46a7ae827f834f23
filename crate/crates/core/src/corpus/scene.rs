//! Scene descriptions: colored geometric shapes on a 4x4 placement grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Canvas geometry. Images are row-major (y, x, channel) in [0, 1].
pub const IMAGE_H: usize = 32;
pub const IMAGE_W: usize = 32;
pub const CHANNELS: usize = 3;
pub const IMAGE_LEN: usize = IMAGE_H * IMAGE_W * CHANNELS;

/// Placement grid: 4x4 cells of 8x8 pixels.
pub const GRID: usize = 4;
pub const CELL_PX: usize = IMAGE_H / GRID;
pub const NUM_CELLS: usize = GRID * GRID;

pub const MAX_OBJECTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Circle,
    Square,
    Triangle,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Circle, ShapeClass::Square, ShapeClass::Triangle];

    pub fn index(self) -> usize {
        match self {
            ShapeClass::Circle => 0,
            ShapeClass::Square => 1,
            ShapeClass::Triangle => 2,
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            ShapeClass::Circle => "circle",
            ShapeClass::Square => "square",
            ShapeClass::Triangle => "triangle",
        }
    }

    pub fn plural(self) -> &'static str {
        match self {
            ShapeClass::Circle => "circles",
            ShapeClass::Square => "squares",
            ShapeClass::Triangle => "triangles",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn index(self) -> usize {
        match self {
            Color::Red => 0,
            Color::Green => 1,
            Color::Blue => 2,
            Color::Yellow => 3,
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Red => [0.85, 0.10, 0.10],
            Color::Green => [0.10, 0.75, 0.12],
            Color::Blue => [0.12, 0.18, 0.85],
            Color::Yellow => [0.90, 0.85, 0.10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Size {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: ShapeClass,
    pub color: Color,
    /// Placement cell in row-major order over the 4x4 grid.
    pub cell: u8,
    pub size: Size,
}

impl SceneObject {
    pub fn grid_pos(&self) -> (usize, usize) {
        (self.cell as usize / GRID, self.cell as usize % GRID)
    }
}

/// A renderable scene: 1..=3 objects on distinct cells, kept sorted by cell
/// so "the first object" is the top-left-most in reading order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneSpecRaw", into = "SceneSpecRaw")]
pub struct SceneSpec {
    objects: Vec<SceneObject>,
}

#[derive(Serialize, Deserialize)]
struct SceneSpecRaw {
    objects: Vec<SceneObject>,
}

impl From<SceneSpec> for SceneSpecRaw {
    fn from(s: SceneSpec) -> Self {
        Self { objects: s.objects }
    }
}

impl TryFrom<SceneSpecRaw> for SceneSpec {
    type Error = Error;

    fn try_from(raw: SceneSpecRaw) -> Result<Self> {
        SceneSpec::new(raw.objects)
    }
}

impl SceneSpec {
    pub fn new(mut objects: Vec<SceneObject>) -> Result<Self> {
        if objects.is_empty() || objects.len() > MAX_OBJECTS {
            return Err(Error::Manifest(format!(
                "scene must have 1..={MAX_OBJECTS} objects, got {}",
                objects.len()
            )));
        }
        for obj in &objects {
            if obj.cell as usize >= NUM_CELLS {
                return Err(Error::Manifest(format!("cell {} outside the grid", obj.cell)));
            }
        }
        objects.sort_by_key(|o| o.cell);
        if objects.windows(2).any(|w| w[0].cell == w[1].cell) {
            return Err(Error::Manifest("objects must occupy distinct cells".into()));
        }
        Ok(Self { objects })
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn primary(&self) -> &SceneObject {
        &self.objects[0]
    }

    /// Number of objects sharing the primary object's shape and color —
    /// the count the caption grammar talks about.
    pub fn primary_group_count(&self) -> usize {
        let p = self.primary();
        self.objects.iter().filter(|o| o.shape == p.shape && o.color == p.color).count()
    }

    /// Category of the primary object among shape x color combinations.
    pub fn category(&self) -> usize {
        let p = self.primary();
        p.shape.index() * Color::ALL.len() + p.color.index()
    }
}

pub const CATEGORY_COUNT: usize = 12;

/// Human-readable category label, e.g. `circle/red`.
pub fn category_label(category: usize) -> String {
    let shape = ShapeClass::ALL[category / Color::ALL.len()];
    let color = Color::ALL[category % Color::ALL.len()];
    format!("{}/{}", shape.word(), color.word())
}

/// Draw a random scene. Object count is biased toward single-object scenes;
/// when several objects are drawn, half the time they all share the primary
/// shape and color so counting captions have support in the corpus.
pub fn sample_scene<R: Rng>(rng: &mut R) -> SceneSpec {
    let roll: f64 = rng.random();
    let n = if roll < 0.5 {
        1
    } else if roll < 0.8 {
        2
    } else {
        3
    };

    let mut cells: Vec<u8> = (0..NUM_CELLS as u8).collect();
    for i in 0..n {
        let j = rng.random_range(i..cells.len());
        cells.swap(i, j);
    }

    let sample_object = |rng: &mut R, cell: u8| SceneObject {
        shape: ShapeClass::ALL[rng.random_range(0..ShapeClass::ALL.len())],
        color: Color::ALL[rng.random_range(0..Color::ALL.len())],
        cell,
        size: if rng.random::<f64>() < 0.5 { Size::Small } else { Size::Large },
    };

    let first = sample_object(rng, cells[0]);
    let uniform_kind = n >= 2 && rng.random::<f64>() < 0.5;
    let mut objects = vec![first];
    for &cell in cells.iter().take(n).skip(1) {
        let mut obj = sample_object(rng, cell);
        if uniform_kind {
            obj.shape = first.shape;
            obj.color = first.color;
        }
        objects.push(obj);
    }
    SceneSpec::new(objects).expect("sampled scenes satisfy the invariants")
}
