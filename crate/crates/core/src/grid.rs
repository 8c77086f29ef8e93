//! Field discretization and the mixed-radix state codec.
//!
//! A robot state is six digits: team centroid cell `(t_x, t_y)`, position
//! cell `(p_x, p_y)` and velocity digits `(v_x, v_y)`. The x digits have radix
//! `cells_x` and the y digits radix `cells_y`. The index is the mixed-radix
//! number `t_x t_y p_x p_y v_x v_y` (most significant first), so with the
//! default 3 x 2 grid the digit weights are 72, 36, 12, 6, 2, 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of opponent robots tracked per package.
pub const ROBOTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec", into = "RawGridSpec")]
pub struct GridSpec {
    field_min_x: f64,
    field_min_y: f64,
    field_width: f64,
    field_height: f64,
    cells_x: u32,
    cells_y: u32,
    state_count: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGridSpec {
    field_min_x: f64,
    field_min_y: f64,
    field_width: f64,
    field_height: f64,
    cells_x: u32,
    cells_y: u32,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGridSpec) -> Result<Self> {
        GridSpec::new(
            raw.field_min_x,
            raw.field_min_y,
            raw.field_width,
            raw.field_height,
            raw.cells_x,
            raw.cells_y,
        )
    }
}

impl From<GridSpec> for RawGridSpec {
    fn from(spec: GridSpec) -> Self {
        RawGridSpec {
            field_min_x: spec.field_min_x,
            field_min_y: spec.field_min_y,
            field_width: spec.field_width,
            field_height: spec.field_height,
            cells_x: spec.cells_x,
            cells_y: spec.cells_y,
        }
    }
}

impl Default for GridSpec {
    /// A 6 m x 4 m field anchored at the origin, split into 3 x 2 cells.
    fn default() -> Self {
        GridSpec::new(0.0, 0.0, 6000.0, 4000.0, 3, 2).expect("default grid is valid")
    }
}

impl GridSpec {
    pub fn new(
        field_min_x: f64,
        field_min_y: f64,
        field_width: f64,
        field_height: f64,
        cells_x: u32,
        cells_y: u32,
    ) -> Result<Self> {
        if !field_min_x.is_finite() || !field_min_y.is_finite() {
            return Err(Error::validation("field origin must be finite"));
        }
        if !(field_width > 0.0 && field_width.is_finite())
            || !(field_height > 0.0 && field_height.is_finite())
        {
            return Err(Error::validation(format!(
                "field dimensions must be positive, got {field_width} x {field_height}"
            )));
        }
        if cells_x == 0 || cells_y == 0 {
            return Err(Error::validation(format!(
                "grid needs at least one cell per axis, got {cells_x} x {cells_y}"
            )));
        }
        let state_count = (cells_x as usize)
            .checked_mul(cells_y as usize)
            .and_then(|cells| cells.checked_pow(3))
            .ok_or_else(|| {
                Error::Config(format!(
                    "state space of a {cells_x} x {cells_y} grid overflows"
                ))
            })?;
        Ok(GridSpec {
            field_min_x,
            field_min_y,
            field_width,
            field_height,
            cells_x,
            cells_y,
            state_count,
        })
    }

    /// Same field rectangle with a different grid resolution.
    pub fn with_cells(&self, cells_x: u32, cells_y: u32) -> Result<Self> {
        GridSpec::new(
            self.field_min_x,
            self.field_min_y,
            self.field_width,
            self.field_height,
            cells_x,
            cells_y,
        )
    }

    pub fn field_min_x(&self) -> f64 {
        self.field_min_x
    }

    pub fn field_min_y(&self) -> f64 {
        self.field_min_y
    }

    pub fn field_width(&self) -> f64 {
        self.field_width
    }

    pub fn field_height(&self) -> f64 {
        self.field_height
    }

    pub fn cells_x(&self) -> u32 {
        self.cells_x
    }

    pub fn cells_y(&self) -> u32 {
        self.cells_y
    }

    pub fn cell_count(&self) -> usize {
        self.cells_x as usize * self.cells_y as usize
    }

    /// `(cells_x * cells_y)^3`, the number of distinct robot states.
    pub fn state_count(&self) -> usize {
        self.state_count
    }

    /// Number of states sharing one team centroid, `(cells_x * cells_y)^2`.
    pub fn block_size(&self) -> usize {
        self.cell_count() * self.cell_count()
    }

    /// Whether `(x, y)` lies inside the half-open field rectangle.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.field_min_x
            && x < self.field_min_x + self.field_width
            && y >= self.field_min_y
            && y < self.field_min_y + self.field_height
    }

    pub fn cell(&self, cx: u32, cy: u32) -> Result<Cell> {
        if cx >= self.cells_x || cy >= self.cells_y {
            return Err(Error::validation(format!(
                "cell ({cx},{cy}) outside {} x {} grid",
                self.cells_x, self.cells_y
            )));
        }
        Ok(Cell { cx, cy })
    }

    /// Maps a field coordinate to its grid cell. Readings outside the field
    /// clamp to the nearest boundary cell.
    pub fn to_cell(&self, x: f64, y: f64) -> Cell {
        Cell {
            cx: bin(x - self.field_min_x, self.field_width, self.cells_x),
            cy: bin(y - self.field_min_y, self.field_height, self.cells_y),
        }
    }

    /// Grid cell of the arithmetic mean of the raw robot positions.
    pub fn centroid_cell(&self, positions: &[(f64, f64)]) -> Result<Cell> {
        if positions.len() != ROBOTS {
            return Err(Error::validation(format!(
                "centroid needs {ROBOTS} positions, got {}",
                positions.len()
            )));
        }
        let n = positions.len() as f64;
        let (sx, sy) = positions
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x, sy + y));
        Ok(self.to_cell(sx / n, sy / n))
    }

    /// Modular cell displacement `(to - from) mod dims`.
    pub fn displacement(&self, from: Cell, to: Cell) -> Cell {
        Cell {
            cx: (to.cx + self.cells_x - from.cx) % self.cells_x,
            cy: (to.cy + self.cells_y - from.cy) % self.cells_y,
        }
    }

    /// Inverse of [`GridSpec::displacement`]: the cell a robot came from.
    pub fn previous_position(&self, position: Cell, velocity: Cell) -> Cell {
        self.displacement(velocity, position)
    }

    pub fn encode(&self, state: &PlayerState) -> Result<StateIndex> {
        for (name, c) in [
            ("centroid", state.centroid),
            ("position", state.position),
            ("velocity", state.velocity),
        ] {
            if c.cx >= self.cells_x || c.cy >= self.cells_y {
                return Err(Error::validation(format!(
                    "{name} digits ({},{}) outside {} x {} grid",
                    c.cx, c.cy, self.cells_x, self.cells_y
                )));
            }
        }
        let (gl, gw) = (self.cells_x as usize, self.cells_y as usize);
        let mut index = 0usize;
        for c in [state.centroid, state.position, state.velocity] {
            index = (index * gl + c.cx as usize) * gw + c.cy as usize;
        }
        Ok(StateIndex(index))
    }

    pub fn decode(&self, index: StateIndex) -> Result<PlayerState> {
        if index.0 >= self.state_count {
            return Err(Error::validation(format!(
                "state index {} out of range 0..{}",
                index.0, self.state_count
            )));
        }
        let (gl, gw) = (self.cells_x as usize, self.cells_y as usize);
        let mut rest = index.0;
        let mut digits = [Cell::default(); 3];
        for slot in digits.iter_mut().rev() {
            let cy = rest % gw;
            rest /= gw;
            let cx = rest % gl;
            rest /= gl;
            *slot = Cell {
                cx: cx as u32,
                cy: cy as u32,
            };
        }
        Ok(PlayerState {
            centroid: digits[0],
            position: digits[1],
            velocity: digits[2],
        })
    }

    /// Every state in ascending index order.
    pub fn enumerate_states(&self) -> impl Iterator<Item = (StateIndex, PlayerState)> + '_ {
        (0..self.state_count).map(move |i| {
            let index = StateIndex(i);
            (index, self.decode(index).expect("index below state_count"))
        })
    }

    pub fn index(&self, value: usize) -> Result<StateIndex> {
        if value >= self.state_count {
            return Err(Error::validation(format!(
                "state index {value} out of range 0..{}",
                self.state_count
            )));
        }
        Ok(StateIndex(value))
    }
}

fn bin(offset: f64, extent: f64, cells: u32) -> u32 {
    let raw = (offset / (extent / cells as f64)).floor();
    if raw.is_nan() || raw < 0.0 {
        0
    } else if raw >= cells as f64 {
        cells - 1
    } else {
        raw as u32
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Cell {
    pub cx: u32,
    pub cy: u32,
}

impl Cell {
    pub const ORIGIN: Cell = Cell { cx: 0, cy: 0 };

    /// Unchecked constructor; digits are validated when a state is encoded.
    pub const fn new(cx: u32, cy: u32) -> Self {
        Cell { cx, cy }
    }

    pub fn manhattan(&self, other: &Cell) -> u32 {
        self.cx.abs_diff(other.cx) + self.cy.abs_diff(other.cy)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.cx, self.cy)
    }
}

/// Discrete state of one robot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlayerState {
    pub centroid: Cell,
    pub position: Cell,
    /// Modular displacement from the previous position cell.
    pub velocity: Cell,
}

impl PlayerState {
    pub const fn new(centroid: Cell, position: Cell, velocity: Cell) -> Self {
        PlayerState {
            centroid,
            position,
            velocity,
        }
    }
}

impl fmt::Display for PlayerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{},{}>", self.centroid, self.position, self.velocity)
    }
}

/// Row/column index of a state in the transition table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateIndex(usize);

impl StateIndex {
    /// Unchecked; callers guarantee the value is below the state count.
    pub(crate) const fn from_raw(value: usize) -> Self {
        StateIndex(value)
    }

    pub fn value(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(t: (u32, u32), p: (u32, u32), v: (u32, u32)) -> PlayerState {
        PlayerState::new(
            Cell::new(t.0, t.1),
            Cell::new(p.0, p.1),
            Cell::new(v.0, v.1),
        )
    }

    #[test]
    fn default_spec_has_216_states() {
        let spec = GridSpec::default();
        assert_eq!(spec.state_count(), 216);
        assert_eq!(spec.block_size(), 36);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(0.0, 0.0, 0.0, 4000.0, 3, 2).is_err());
        assert!(GridSpec::new(0.0, 0.0, 6000.0, -1.0, 3, 2).is_err());
        assert!(GridSpec::new(0.0, 0.0, 6000.0, 4000.0, 0, 2).is_err());
        assert!(GridSpec::new(f64::NAN, 0.0, 6000.0, 4000.0, 3, 2).is_err());
        assert!(matches!(
            GridSpec::new(0.0, 0.0, 1.0, 1.0, u32::MAX, u32::MAX),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn to_cell_examples() {
        let spec = GridSpec::default();
        assert_eq!(spec.to_cell(0.0, 0.0), Cell::new(0, 0));
        assert_eq!(spec.to_cell(2500.0, 500.0), Cell::new(1, 0));
        assert_eq!(spec.to_cell(6000.0, 4000.0), Cell::new(2, 1));
        assert_eq!(spec.to_cell(-50.0, 9000.0), Cell::new(0, 1));
        assert_eq!(spec.to_cell(f64::NAN, f64::INFINITY), Cell::new(0, 1));
    }

    #[test]
    fn centroid_examples() {
        let spec = GridSpec::default();
        assert_eq!(
            spec.centroid_cell(&[(1000.0, 1000.0); 6]).unwrap(),
            Cell::new(0, 0)
        );
        let spread = [
            (0.0, 0.0),
            (0.0, 0.0),
            (0.0, 0.0),
            (6000.0, 4000.0),
            (6000.0, 4000.0),
            (6000.0, 4000.0),
        ];
        assert_eq!(spec.centroid_cell(&spread).unwrap(), Cell::new(1, 1));
        assert!(spec.centroid_cell(&[(0.0, 0.0); 5]).is_err());
    }

    #[test]
    fn encode_examples() {
        let spec = GridSpec::default();
        let enc = |s| spec.encode(&s).unwrap().value();
        assert_eq!(enc(state((0, 0), (0, 0), (0, 0))), 0);
        assert_eq!(enc(state((1, 1), (2, 1), (0, 0))), 138);
        assert_eq!(enc(state((2, 1), (2, 1), (2, 1))), 215);
        assert!(spec.encode(&state((3, 0), (0, 0), (0, 0))).is_err());
        assert!(spec.encode(&state((0, 0), (0, 0), (0, 2))).is_err());
    }

    #[test]
    fn digit_weights_match_closed_form() {
        // v_y, v_x, p_y, p_x, t_y, t_x
        let spec = GridSpec::default();
        let unit = [
            state((0, 0), (0, 0), (0, 1)),
            state((0, 0), (0, 0), (1, 0)),
            state((0, 0), (0, 1), (0, 0)),
            state((0, 0), (1, 0), (0, 0)),
            state((0, 1), (0, 0), (0, 0)),
            state((1, 0), (0, 0), (0, 0)),
        ];
        let weights: Vec<usize> = unit
            .iter()
            .map(|s| spec.encode(s).unwrap().value())
            .collect();
        assert_eq!(weights, vec![1, 2, 6, 12, 36, 72]);

        let spec = GridSpec::default().with_cells(4, 3).unwrap();
        let (gl, gw) = (4usize, 3usize);
        let weights: Vec<usize> = unit
            .iter()
            .map(|s| spec.encode(s).unwrap().value())
            .collect();
        assert_eq!(
            weights,
            vec![
                1,
                gw,
                gl * gw,
                gl * gw * gw,
                gl * gl * gw * gw,
                gl * gl * gw * gw * gw
            ]
        );
    }

    #[test]
    fn decode_examples() {
        let spec = GridSpec::default();
        assert_eq!(
            spec.decode(StateIndex(0)).unwrap(),
            state((0, 0), (0, 0), (0, 0))
        );
        assert_eq!(
            spec.decode(StateIndex(138)).unwrap(),
            state((1, 1), (2, 1), (0, 0))
        );
        assert!(spec.decode(StateIndex(216)).is_err());
        assert!(spec.index(216).is_err());
    }

    #[test]
    fn enumerate_examples() {
        let spec = GridSpec::default();
        let all: Vec<_> = spec.enumerate_states().collect();
        assert_eq!(all.len(), 216);
        assert_eq!(all[0].0.value(), 0);
        assert_eq!(all[215].0.value(), 215);

        let tiny = spec.with_cells(1, 1).unwrap();
        let all: Vec<_> = tiny.enumerate_states().collect();
        assert_eq!(all, vec![(StateIndex(0), PlayerState::default())]);
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let spec = GridSpec::default();
        let key = |s: &PlayerState| {
            (
                s.centroid.cx,
                s.centroid.cy,
                s.position.cx,
                s.position.cy,
                s.velocity.cx,
                s.velocity.cy,
            )
        };
        let states: Vec<_> = spec.enumerate_states().map(|(_, s)| key(&s)).collect();
        assert!(states.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn spec_serde_validates() {
        let spec: GridSpec = serde_json::from_str(
            r#"{"field_min_x":0,"field_min_y":0,"field_width":6000,"field_height":4000,"cells_x":3,"cells_y":2}"#,
        )
        .unwrap();
        assert_eq!(spec, GridSpec::default());
        let bad = serde_json::from_str::<GridSpec>(
            r#"{"field_min_x":0,"field_min_y":0,"field_width":6000,"field_height":4000,"cells_x":0,"cells_y":2}"#,
        );
        assert!(bad.is_err());
    }

    fn grid_and_state() -> impl Strategy<Value = (GridSpec, PlayerState)> {
        (1u32..6, 1u32..5).prop_flat_map(|(gx, gy)| {
            let cell = move || (0..gx, 0..gy).prop_map(|(x, y)| Cell::new(x, y));
            (cell(), cell(), cell()).prop_map(move |(t, p, v)| {
                (
                    GridSpec::default().with_cells(gx, gy).unwrap(),
                    PlayerState::new(t, p, v),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn decode_inverts_encode((spec, s) in grid_and_state()) {
            let index = spec.encode(&s).unwrap();
            prop_assert!(index.value() < spec.state_count());
            prop_assert_eq!(spec.decode(index).unwrap(), s);
        }

        #[test]
        fn encode_inverts_decode(gx in 1u32..6, gy in 1u32..5, frac in 0.0f64..1.0) {
            let spec = GridSpec::default().with_cells(gx, gy).unwrap();
            let i = ((spec.state_count() as f64 * frac) as usize).min(spec.state_count() - 1);
            let s = spec.decode(StateIndex(i)).unwrap();
            prop_assert_eq!(spec.encode(&s).unwrap().value(), i);
        }

        #[test]
        fn to_cell_is_total(x in proptest::num::f64::ANY, y in proptest::num::f64::ANY) {
            let spec = GridSpec::default();
            let c = spec.to_cell(x, y);
            prop_assert!(c.cx < 3 && c.cy < 2);
        }

        #[test]
        fn previous_position_is_recoverable(
            a in (0u32..3, 0u32..2), b in (0u32..3, 0u32..2)
        ) {
            let spec = GridSpec::default();
            let (a, b) = (Cell::new(a.0, a.1), Cell::new(b.0, b.1));
            let v = spec.displacement(a, b);
            prop_assert!(v.cx < 3 && v.cy < 2);
            prop_assert_eq!(spec.previous_position(b, v), a);
        }
    }

    #[test]
    fn displacement_example() {
        let spec = GridSpec::default();
        assert_eq!(
            spec.displacement(Cell::new(0, 0), Cell::new(2, 1)),
            Cell::new(2, 1)
        );
        assert_eq!(
            spec.displacement(Cell::new(2, 1), Cell::new(0, 0)),
            Cell::new(1, 1)
        );
    }
}
