//! Formations and multi-step formation prediction.
//!
//! A prediction step first picks the most likely TO centroid for the current
//! centroid, then moves every robot to its most likely TO state inside that
//! centroid's block. The formation probability is the centroid probability
//! times the six per-robot probabilities; confidence multiplies along the
//! chain of predictions, starting from 1 for the observed formation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec, PlayerState, ROBOTS};
use crate::model::{centroid_block, TransitionTable};
use crate::simulator::{Play, PLAY_LENGTH};
use crate::vision::VisionPackage;

/// Six robot states sharing one team centroid. Robot `id` lives at `id - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Formation {
    centroid: Cell,
    states: [PlayerState; ROBOTS],
}

impl Formation {
    pub fn new(centroid: Cell, states: [PlayerState; ROBOTS]) -> Result<Self> {
        if let Some(i) = states.iter().position(|s| s.centroid != centroid) {
            return Err(Error::validation(format!(
                "robot {} has centroid {} but the formation centroid is {centroid}",
                i + 1,
                states[i].centroid
            )));
        }
        Ok(Formation { centroid, states })
    }

    /// Discretizes a package. Velocities are displacements from `prev`, or
    /// zero when there is no previous formation.
    pub fn from_package(
        spec: &GridSpec,
        pkg: &VisionPackage,
        prev: Option<&Formation>,
    ) -> Result<Self> {
        pkg.validate()?;
        let positions = pkg.positions();
        Ok(Self::from_positions(spec, &positions, prev))
    }

    pub fn from_positions(
        spec: &GridSpec,
        positions: &[(f64, f64); ROBOTS],
        prev: Option<&Formation>,
    ) -> Self {
        let centroid = spec
            .centroid_cell(positions)
            .expect("fixed-size position array");
        let states = std::array::from_fn(|i| {
            let (x, y) = positions[i];
            let position = spec.to_cell(x, y);
            let velocity = match prev {
                Some(p) => spec.displacement(p.states[i].position, position),
                None => Cell::ORIGIN,
            };
            PlayerState::new(centroid, position, velocity)
        });
        Formation { centroid, states }
    }

    /// The three formations of a play, the first at rest and the later two
    /// with velocities chained from their predecessor.
    pub fn from_play(spec: &GridSpec, play: &Play) -> Result<[Formation; PLAY_LENGTH]> {
        play.validate(spec)?;
        let first = Self::from_positions(spec, &play.formation(0), None);
        let second = Self::from_positions(spec, &play.formation(1), Some(&first));
        let third = Self::from_positions(spec, &play.formation(2), Some(&second));
        Ok([first, second, third])
    }

    pub fn centroid(&self) -> Cell {
        self.centroid
    }

    pub fn states(&self) -> &[PlayerState; ROBOTS] {
        &self.states
    }

    /// State of robot `id` (1-based).
    pub fn state(&self, id: u8) -> Option<&PlayerState> {
        (id as usize)
            .checked_sub(1)
            .and_then(|i| self.states.get(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub formation: Formation,
    pub p_centroid: f64,
    /// Transition probability of robot `id` at `id - 1`.
    pub per_player_p: [f64; ROBOTS],
    pub p_formation: f64,
    pub confidence: f64,
    /// True when the centroid block had no outgoing transitions.
    pub centroid_unseen: bool,
    /// Robots whose state had no transition into the chosen block.
    pub unseen_ids: Vec<u8>,
}

impl Prediction {
    pub fn has_unseen(&self) -> bool {
        self.centroid_unseen || !self.unseen_ids.is_empty()
    }
}

/// `p_centroid * p_1 * ... * p_6`, multiplied left to right.
pub fn formation_probability(p_centroid: f64, per_player: &[f64]) -> f64 {
    per_player.iter().fold(p_centroid, |acc, p| acc * p)
}

/// Predicts the formation following `current`.
///
/// Unseen centroids keep the current centroid; unseen robots keep their
/// current position and velocity digits under the chosen centroid. Either case
/// contributes a zero factor, so the formation probability drops to zero.
pub fn predict_step(
    table: &TransitionTable,
    current: &Formation,
    base_confidence: f64,
) -> Result<Prediction> {
    if !(0.0..=1.0).contains(&base_confidence) {
        return Err(Error::validation(format!(
            "base confidence {base_confidence} outside [0, 1]"
        )));
    }
    let spec = table.spec();
    let (centroid, p_centroid, centroid_unseen) =
        match table.most_likely_centroid(current.centroid)? {
            Some(choice) => (choice.centroid, choice.probability, false),
            None => (current.centroid, 0.0, true),
        };
    let block = centroid_block(spec, centroid);

    let mut states = current.states;
    let mut per_player_p = [0.0; ROBOTS];
    let mut unseen_ids = Vec::new();
    for (i, state) in current.states.iter().enumerate() {
        let from = spec.encode(state)?;
        match table.most_likely_transition(from, block)? {
            Some(choice) => {
                states[i] = spec.decode(choice.to)?;
                per_player_p[i] = choice.probability;
            }
            None => {
                states[i] = PlayerState { centroid, ..*state };
                unseen_ids.push(i as u8 + 1);
            }
        }
    }
    let p_formation = formation_probability(p_centroid, &per_player_p);
    Ok(Prediction {
        formation: Formation::new(centroid, states)?,
        p_centroid,
        per_player_p,
        p_formation,
        confidence: base_confidence * p_formation,
        centroid_unseen,
        unseen_ids,
    })
}

/// Observes `initial` (at rest, confidence 1) and chains `steps` predictions,
/// each built from the previous predicted formation.
pub fn predict_play(
    table: &TransitionTable,
    initial: &VisionPackage,
    steps: usize,
) -> Result<Vec<Prediction>> {
    let base = Formation::from_package(table.spec(), initial, None)?;
    predict_from(table, &base, steps)
}

pub fn predict_from(
    table: &TransitionTable,
    base: &Formation,
    steps: usize,
) -> Result<Vec<Prediction>> {
    if steps == 0 {
        return Err(Error::validation("steps must be at least 1"));
    }
    let mut out: Vec<Prediction> = Vec::with_capacity(steps);
    let mut current = base.clone();
    let mut confidence = 1.0;
    for _ in 0..steps {
        let next = predict_step(table, &current, confidence)?;
        current = next.formation.clone();
        confidence = next.confidence;
        out.push(next);
    }
    Ok(out)
}
