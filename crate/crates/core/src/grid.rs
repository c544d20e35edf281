//! Land-cover grid primitives: classes, per-cell pixel counts, the state
//! tensor derived from them, and the shared 4-neighbor convolution that every
//! spatial metric is built on.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of land-cover classes.
pub const NUM_CLASSES: usize = 9;
/// Number of modifiable land-cover classes (the action/observation channels).
pub const NUM_MODIFIABLE: usize = 5;
/// Default pixel count per grid cell (a 5x5 block of 100 m pixels).
pub const DEFAULT_PIXELS_PER_CELL: u32 = 25;

/// Land-cover classes in table order. Water, flooded/wetlands, snow/ice and
/// clouds are protected: no action may move pixels into or out of them.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum LandClass {
    Water,
    Trees,
    Flooded,
    Crops,
    BuiltArea,
    BareGround,
    SnowIce,
    Clouds,
    Rangeland,
}

impl LandClass {
    /// All classes in table (index) order.
    pub const ALL: [LandClass; NUM_CLASSES] = [
        LandClass::Water,
        LandClass::Trees,
        LandClass::Flooded,
        LandClass::Crops,
        LandClass::BuiltArea,
        LandClass::BareGround,
        LandClass::SnowIce,
        LandClass::Clouds,
        LandClass::Rangeland,
    ];

    /// Modifiable classes in channel order (the secondary 0..K-1 index).
    pub const MODIFIABLE: [LandClass; NUM_MODIFIABLE] = [
        LandClass::Trees,
        LandClass::Crops,
        LandClass::BuiltArea,
        LandClass::BareGround,
        LandClass::Rangeland,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<LandClass> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LandClass::Water => "Water",
            LandClass::Trees => "Trees",
            LandClass::Flooded => "Flooded",
            LandClass::Crops => "Crops",
            LandClass::BuiltArea => "BuiltArea",
            LandClass::BareGround => "BareGround",
            LandClass::SnowIce => "SnowIce",
            LandClass::Clouds => "Clouds",
            LandClass::Rangeland => "Rangeland",
        }
    }

    /// Short lower-case key used in composition strings and CSV columns.
    pub fn key(self) -> &'static str {
        match self {
            LandClass::Water => "water",
            LandClass::Trees => "trees",
            LandClass::Flooded => "flooded",
            LandClass::Crops => "crops",
            LandClass::BuiltArea => "built",
            LandClass::BareGround => "bare",
            LandClass::SnowIce => "snow",
            LandClass::Clouds => "clouds",
            LandClass::Rangeland => "rangeland",
        }
    }

    /// Parse either the canonical name or the short key, case-insensitively.
    pub fn parse(s: &str) -> Option<LandClass> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.key() == lower || c.name().to_ascii_lowercase() == lower)
    }

    pub fn is_protected(self) -> bool {
        matches!(
            self,
            LandClass::Water | LandClass::Flooded | LandClass::SnowIce | LandClass::Clouds
        )
    }

    pub fn is_modifiable(self) -> bool {
        !self.is_protected()
    }

    /// Channel index among the modifiable classes, if any.
    pub fn modifiable_index(self) -> Option<usize> {
        Self::MODIFIABLE.iter().position(|&c| c == self)
    }

    pub fn from_modifiable_index(k: usize) -> Option<LandClass> {
        Self::MODIFIABLE.get(k).copied()
    }
}

/// Per-cell pixel counts over the nine classes. The sum is invariant under
/// every environment step (zero-sum conservation within the cell).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct CellCounts {
    counts: [u32; NUM_CLASSES],
}

impl CellCounts {
    pub fn new(counts: [u32; NUM_CLASSES]) -> CellCounts {
        CellCounts { counts }
    }

    /// A cell fully occupied by one class.
    pub fn of_class(class: LandClass, n_pixels: u32) -> CellCounts {
        let mut counts = [0; NUM_CLASSES];
        counts[class.index()] = n_pixels;
        CellCounts { counts }
    }

    pub fn counts(&self) -> &[u32; NUM_CLASSES] {
        &self.counts
    }

    pub fn count(&self, class: LandClass) -> u32 {
        self.counts[class.index()]
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn modifiable_total(&self) -> u32 {
        LandClass::MODIFIABLE.iter().map(|&c| self.count(c)).sum()
    }

    pub fn fraction(&self, class: LandClass, n_pixels: u32) -> f64 {
        f64::from(self.count(class)) / f64::from(n_pixels)
    }

    pub(crate) fn transfer(&mut self, src: LandClass, tgt: LandClass, pixels: u32) {
        self.counts[src.index()] -= pixels;
        self.counts[tgt.index()] += pixels;
    }
}

/// Dense 2D array of f64 used for fraction fields and convolution outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(rows: usize, cols: usize) -> Field {
        Field {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Field {
        assert_eq!(data.len(), rows * cols);
        Field { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub(crate) fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Offsets of the 4-connected neighborhood.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Convolve a field with the 4-connected neighbor kernel, zero-padded at the
/// boundaries: out[r][c] is the sum of the field at the up/down/left/right
/// neighbors of (r, c).
pub fn neighbor_convolve(field: &Field) -> Field {
    let mut out = Field::zeros(field.rows, field.cols);
    for r in 0..field.rows {
        for c in 0..field.cols {
            let mut sum = 0.0;
            if r > 0 {
                sum += field.get(r - 1, c);
            }
            if r + 1 < field.rows {
                sum += field.get(r + 1, c);
            }
            if c > 0 {
                sum += field.get(r, c - 1);
            }
            if c + 1 < field.cols {
                sum += field.get(r, c + 1);
            }
            out.set(r, c, sum);
        }
    }
    out
}

/// Protected-water fraction per cell. Water counts never change during an
/// episode, so the map is constant once derived.
#[derive(Clone, Debug, PartialEq)]
pub struct WaterMap {
    field: Field,
}

impl WaterMap {
    pub fn from_state(state: &GridState) -> WaterMap {
        WaterMap {
            field: state.class_field(LandClass::Water),
        }
    }

    pub fn field(&self) -> &Field {
        &self.field
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid header: {0}")]
    Header(String),
    #[error("grid file line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("cell ({i},{j}) counts sum to {got}, expected {expected}")]
    CountSum {
        i: usize,
        j: usize,
        got: u32,
        expected: u32,
    },
    #[error("expected {expected} cells, got {got}")]
    CellCount { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An M x M grid of cells. Immutable between environment steps; protected
/// counts never change across any step.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct GridState {
    m: usize,
    n_pixels: u32,
    cells: Vec<CellCounts>,
}

impl GridState {
    /// Build from row-major cells, validating the per-cell pixel sum.
    pub fn new(m: usize, n_pixels: u32, cells: Vec<CellCounts>) -> Result<GridState, GridError> {
        if cells.len() != m * m {
            return Err(GridError::CellCount {
                expected: m * m,
                got: cells.len(),
            });
        }
        for (idx, cell) in cells.iter().enumerate() {
            if cell.total() != n_pixels {
                return Err(GridError::CountSum {
                    i: idx / m,
                    j: idx % m,
                    got: cell.total(),
                    expected: n_pixels,
                });
            }
        }
        Ok(GridState { m, n_pixels, cells })
    }

    /// A grid fully covered by a single class.
    pub fn filled(m: usize, n_pixels: u32, class: LandClass) -> GridState {
        GridState {
            m,
            n_pixels,
            cells: vec![CellCounts::of_class(class, n_pixels); m * m],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_pixels(&self) -> u32 {
        self.n_pixels
    }

    pub fn cells(&self) -> &[CellCounts] {
        &self.cells
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &CellCounts {
        &self.cells[i * self.m + j]
    }

    #[inline]
    pub fn count(&self, i: usize, j: usize, class: LandClass) -> u32 {
        self.cell(i, j).count(class)
    }

    #[inline]
    pub fn fraction(&self, i: usize, j: usize, class: LandClass) -> f64 {
        self.cell(i, j).fraction(class, self.n_pixels)
    }

    /// Fraction of all pixels that belong to modifiable classes.
    pub fn modifiable_fraction(&self) -> f64 {
        let modifiable: u64 = self.cells.iter().map(|c| u64::from(c.modifiable_total())).sum();
        let total = self.m as u64 * self.m as u64 * u64::from(self.n_pixels);
        modifiable as f64 / total as f64
    }

    /// The M x M fraction field of one class.
    pub fn class_field(&self, class: LandClass) -> Field {
        let mut field = Field::zeros(self.m, self.m);
        for i in 0..self.m {
            for j in 0..self.m {
                field.set(i, j, self.fraction(i, j, class));
            }
        }
        field
    }

    /// Observation tensor of shape M x M x K, flattened row-major over
    /// (i, j, k): the fraction of cell (i, j) occupied by modifiable class k.
    /// Protected classes have no channel.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.m * self.m * NUM_MODIFIABLE);
        for cell in &self.cells {
            for &class in &LandClass::MODIFIABLE {
                obs.push(cell.fraction(class, self.n_pixels));
            }
        }
        obs
    }

    pub(crate) fn transfer(&mut self, i: usize, j: usize, src: LandClass, tgt: LandClass, pixels: u32) {
        self.cells[i * self.m + j].transfer(src, tgt, pixels);
    }

    /// Copy out a square sub-grid with top-left cell (i0, j0).
    pub fn subgrid(&self, i0: usize, j0: usize, size: usize) -> GridState {
        assert!(i0 + size <= self.m && j0 + size <= self.m);
        let mut cells = Vec::with_capacity(size * size);
        for i in i0..i0 + size {
            for j in j0..j0 + size {
                cells.push(*self.cell(i, j));
            }
        }
        GridState {
            m: size,
            n_pixels: self.n_pixels,
            cells,
        }
    }

    /// Write the canonical grid text format:
    /// header `gridfile v1 M=<m> NP=<n>` then one row-major line per cell.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "gridfile v1 M={} NP={}", self.m, self.n_pixels)?;
        for i in 0..self.m {
            for j in 0..self.m {
                write!(w, "{} {}", i, j)?;
                for &n in self.cell(i, j).counts() {
                    write!(w, " {}", n)?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("grid text is ASCII")
    }

    /// Parse the grid text format. Cells must appear in row-major order and
    /// every row must sum to NP.
    pub fn parse(reader: impl BufRead) -> Result<GridState, GridError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| GridError::Header("empty file".into()))??;
        let (m, n_pixels) = parse_header(&header)?;

        let mut cells = Vec::with_capacity(m * m);
        for idx in 0..m * m {
            let line_no = idx + 2;
            let line = lines
                .next()
                .ok_or(GridError::CellCount {
                    expected: m * m,
                    got: idx,
                })??;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 + NUM_CLASSES {
                return Err(GridError::Line {
                    line: line_no,
                    msg: format!("expected {} fields, got {}", 2 + NUM_CLASSES, tokens.len()),
                });
            }
            let parse_u32 = |s: &str| -> Result<u32, GridError> {
                s.parse().map_err(|_| GridError::Line {
                    line: line_no,
                    msg: format!("invalid integer '{}'", s),
                })
            };
            let i = parse_u32(tokens[0])? as usize;
            let j = parse_u32(tokens[1])? as usize;
            if i != idx / m || j != idx % m {
                return Err(GridError::Line {
                    line: line_no,
                    msg: format!("expected cell ({},{}), got ({},{})", idx / m, idx % m, i, j),
                });
            }
            let mut counts = [0u32; NUM_CLASSES];
            for (k, tok) in tokens[2..].iter().enumerate() {
                counts[k] = parse_u32(tok)?;
            }
            let cell = CellCounts::new(counts);
            if cell.total() != n_pixels {
                return Err(GridError::CountSum {
                    i,
                    j,
                    got: cell.total(),
                    expected: n_pixels,
                });
            }
            cells.push(cell);
        }
        for extra in lines {
            let extra = extra?;
            if !extra.trim().is_empty() {
                return Err(GridError::Line {
                    line: m * m + 2,
                    msg: "trailing content after last cell".into(),
                });
            }
        }
        GridState::new(m, n_pixels, cells)
    }

    pub fn from_text(text: &str) -> Result<GridState, GridError> {
        GridState::parse(text.as_bytes())
    }

    /// SHA-256 of the canonical text serialization, as lowercase hex.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_text().as_bytes());
        hex::encode(hasher.finalize())
    }
}

fn parse_header(header: &str) -> Result<(usize, u32), GridError> {
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "gridfile" || tokens[1] != "v1" {
        return Err(GridError::Header(header.into()));
    }
    let m = tokens[2]
        .strip_prefix("M=")
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| GridError::Header(header.into()))?;
    let n_pixels = tokens[3]
        .strip_prefix("NP=")
        .and_then(|s| s.parse::<u32>().ok())
        .ok_or_else(|| GridError::Header(header.into()))?;
    if m == 0 || n_pixels == 0 {
        return Err(GridError::Header(header.into()));
    }
    Ok((m, n_pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn class_partition_matches_table() {
        let protected: Vec<_> = LandClass::ALL.iter().filter(|c| c.is_protected()).collect();
        assert_eq!(protected.len(), 4);
        assert_eq!(LandClass::MODIFIABLE.len(), 5);
        for (k, &class) in LandClass::MODIFIABLE.iter().enumerate() {
            assert_eq!(class.modifiable_index(), Some(k));
            assert_eq!(LandClass::from_modifiable_index(k), Some(class));
        }
        assert_eq!(LandClass::Water.modifiable_index(), None);
        assert_eq!(LandClass::parse("BUILT"), Some(LandClass::BuiltArea));
        assert_eq!(LandClass::parse("bareground"), Some(LandClass::BareGround));
        assert_eq!(LandClass::parse("nope"), None);
    }

    #[test]
    fn convolve_zeros() {
        let out = neighbor_convolve(&Field::zeros(3, 3));
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn convolve_center_impulse() {
        let mut f = Field::zeros(3, 3);
        f.set(1, 1, 1.0);
        let out = neighbor_convolve(&f);
        for r in 0..3 {
            for c in 0..3 {
                let expected = if (r, c) == (0, 1)
                    || (r, c) == (2, 1)
                    || (r, c) == (1, 0)
                    || (r, c) == (1, 2)
                {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(out.get(r, c), expected, "at ({},{})", r, c);
            }
        }
    }

    #[test]
    fn convolve_two_by_one() {
        let f = Field::from_vec(2, 1, vec![1.0, 1.0]);
        let out = neighbor_convolve(&f);
        assert_eq!(out.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn observation_examples() {
        let np = DEFAULT_PIXELS_PER_CELL;
        let trees = GridState::new(1, np, vec![CellCounts::of_class(LandClass::Trees, np)]).unwrap();
        assert_eq!(trees.observation(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);

        let water = GridState::filled(1, np, LandClass::Water);
        assert_eq!(water.observation(), vec![0.0; 5]);

        let mut counts = [0u32; NUM_CLASSES];
        counts[LandClass::Water.index()] = 10;
        counts[LandClass::Crops.index()] = 15;
        let mixed = GridState::new(1, np, vec![CellCounts::new(counts)]).unwrap();
        let obs = mixed.observation();
        assert_eq!(obs[1], 0.6);
        assert_eq!(obs.iter().sum::<f64>(), 0.6);
    }

    #[test]
    fn gridfile_round_trip_and_rejection() {
        let mut counts = [0u32; NUM_CLASSES];
        counts[LandClass::Water.index()] = 10;
        counts[LandClass::Rangeland.index()] = 15;
        let grid = GridState::new(
            2,
            25,
            vec![
                CellCounts::new(counts),
                CellCounts::of_class(LandClass::Trees, 25),
                CellCounts::of_class(LandClass::Crops, 25),
                CellCounts::of_class(LandClass::Water, 25),
            ],
        )
        .unwrap();
        let text = grid.to_text();
        assert!(text.starts_with("gridfile v1 M=2 NP=25\n"));
        let parsed = GridState::from_text(&text).unwrap();
        assert_eq!(parsed, grid);
        assert_eq!(parsed.content_hash(), grid.content_hash());

        let bad = text.replace("0 0 10 0 0 0 0 0 0 0 15", "0 0 10 0 0 0 0 0 0 0 14");
        assert!(matches!(
            GridState::from_text(&bad),
            Err(GridError::CountSum { .. })
        ));
        assert!(GridState::from_text("gridfile v2 M=2 NP=25").is_err());
    }

    fn small_field() -> impl Strategy<Value = Field> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            prop::collection::vec(-10.0f64..10.0, r * c)
                .prop_map(move |data| Field::from_vec(r, c, data))
        })
    }

    proptest! {
        #[test]
        fn convolve_is_linear(f in small_field(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = Field::from_vec(
                f.rows(),
                f.cols(),
                f.as_slice().iter().map(|v| v * 0.5 + 1.0).collect(),
            );
            let combo = Field::from_vec(
                f.rows(),
                f.cols(),
                f.as_slice()
                    .iter()
                    .zip(g.as_slice())
                    .map(|(x, y)| a * x + b * y)
                    .collect(),
            );
            let lhs = neighbor_convolve(&combo);
            let cf = neighbor_convolve(&f);
            let cg = neighbor_convolve(&g);
            for idx in 0..lhs.as_slice().len() {
                let rhs = a * cf.as_slice()[idx] + b * cg.as_slice()[idx];
                prop_assert!((lhs.as_slice()[idx] - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn convolve_commutes_with_flips(f in small_field()) {
            let flip_h = |x: &Field| {
                let mut out = Field::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    for c in 0..x.cols() {
                        out.set(r, x.cols() - 1 - c, x.get(r, c));
                    }
                }
                out
            };
            let flip_v = |x: &Field| {
                let mut out = Field::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    for c in 0..x.cols() {
                        out.set(x.rows() - 1 - r, c, x.get(r, c));
                    }
                }
                out
            };
            prop_assert_eq!(neighbor_convolve(&flip_h(&f)), flip_h(&neighbor_convolve(&f)));
            prop_assert_eq!(neighbor_convolve(&flip_v(&f)), flip_v(&neighbor_convolve(&f)));
        }
    }
}
