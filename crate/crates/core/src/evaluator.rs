//! Similarity measures and the randomized evaluation harness.
//!
//! Each trial draws a random formation, predicts two formations ahead, picks
//! the play whose first formation is closest to the observed one and scores
//! observed/predicted formations against the play's three formations.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::TransitionTable;
use crate::predictor::{predict_from, Formation};
use crate::simulator::{random_formation, Play, PLAY_LENGTH};

pub const DEFAULT_TESTS: usize = 5000;

/// Number of robots whose full state differs.
pub fn count_measure(predicted: &Formation, expected: &Formation) -> u32 {
    predicted
        .states()
        .iter()
        .zip(expected.states())
        .filter(|(a, b)| a != b)
        .count() as u32
}

/// Sum of Manhattan distances between position cells; centroid and velocity
/// digits are ignored.
pub fn distance_measure(predicted: &Formation, expected: &Formation) -> u32 {
    predicted
        .states()
        .iter()
        .zip(expected.states())
        .map(|(a, b)| a.position.manhattan(&b.position))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Count,
    Distance,
}

impl Measure {
    pub const ALL: [Measure; 2] = [Measure::Count, Measure::Distance];

    pub fn score(self, predicted: &Formation, expected: &Formation) -> u32 {
        match self {
            Measure::Count => count_measure(predicted, expected),
            Measure::Distance => distance_measure(predicted, expected),
        }
    }
}

/// A play discretized the way training sees it.
#[derive(Debug, Clone)]
pub struct ReferencePlay {
    pub id: u32,
    pub formations: [Formation; PLAY_LENGTH],
}

pub fn reference_plays(spec: &GridSpec, plays: &[Play]) -> Result<Vec<ReferencePlay>> {
    plays
        .iter()
        .map(|p| {
            Ok(ReferencePlay {
                id: p.id,
                formations: Formation::from_play(spec, p)?,
            })
        })
        .collect()
}

/// Index of the play whose first formation scores lowest against `observed`;
/// ties keep the earliest play.
pub fn select_play(
    measure: Measure,
    observed: &Formation,
    plays: &[ReferencePlay],
) -> Option<usize> {
    plays
        .iter()
        .enumerate()
        .min_by_key(|(i, p)| (measure.score(observed, &p.formations[0]), *i))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureOutcome {
    pub selected_play: u32,
    /// Observed vs play F1, prediction 1 vs F2, prediction 2 vs F3.
    pub per_formation: [u32; PLAY_LENGTH],
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub count: MeasureOutcome,
    pub distance: MeasureOutcome,
    pub confidence: [f64; 2],
}

impl TrialResult {
    pub fn outcome(&self, measure: Measure) -> &MeasureOutcome {
        match measure {
            Measure::Count => &self.count,
            Measure::Distance => &self.distance,
        }
    }
}

fn score_against(
    measure: Measure,
    observed: &Formation,
    predicted: [&Formation; 2],
    plays: &[ReferencePlay],
) -> MeasureOutcome {
    let chosen = &plays[select_play(measure, observed, plays).expect("plays are non-empty")];
    let per_formation = [
        measure.score(observed, &chosen.formations[0]),
        measure.score(predicted[0], &chosen.formations[1]),
        measure.score(predicted[1], &chosen.formations[2]),
    ];
    MeasureOutcome {
        selected_play: chosen.id,
        per_formation,
        total: per_formation.iter().sum(),
    }
}

/// Runs one trial from an already discretized observed formation.
pub fn run_trial_from(
    table: &TransitionTable,
    plays: &[ReferencePlay],
    trial_index: usize,
    observed: &Formation,
) -> Result<TrialResult> {
    if plays.is_empty() {
        return Err(Error::validation("evaluation needs at least one play"));
    }
    let preds = predict_from(table, observed, 2)?;
    let predicted = [&preds[0].formation, &preds[1].formation];
    Ok(TrialResult {
        trial_index,
        count: score_against(Measure::Count, observed, predicted, plays),
        distance: score_against(Measure::Distance, observed, predicted, plays),
        confidence: [preds[0].confidence, preds[1].confidence],
    })
}

/// Runs one trial on a random formation drawn with the simulator's noise
/// generator.
pub fn run_trial(
    table: &TransitionTable,
    plays: &[ReferencePlay],
    trial_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrialResult> {
    let spec = table.spec();
    let positions = random_formation(spec, rng);
    let observed = Formation::from_positions(spec, &positions, None);
    run_trial_from(table, plays, trial_index, &observed)
}

/// Per-trial seed: a SplitMix64 finalizer over the run seed and trial index.
pub fn trial_seed(run_seed: u64, trial_index: usize) -> u64 {
    let mut z = run_seed.wrapping_add(
        (trial_index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureAverages {
    /// Mean per-play total (sum over the three formations).
    pub per_play: f64,
    /// `per_play / 3`.
    pub per_formation: f64,
    /// Mean score at each formation position.
    pub by_formation: [f64; PLAY_LENGTH],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub tests: usize,
    pub seed: u64,
    pub count: MeasureAverages,
    pub distance: MeasureAverages,
    pub mean_confidence: [f64; 2],
    /// Running mean of per-play totals after each trial: (count, distance).
    #[serde(skip)]
    pub running: Vec<(f64, f64)>,
    #[serde(skip)]
    pub trials: Vec<TrialResult>,
}

#[derive(Default)]
struct Accumulator {
    totals: u64,
    by_formation: [u64; PLAY_LENGTH],
}

impl Accumulator {
    fn add(&mut self, outcome: &MeasureOutcome) {
        self.totals += outcome.total as u64;
        for (acc, s) in self.by_formation.iter_mut().zip(outcome.per_formation) {
            *acc += s as u64;
        }
    }

    fn running(&self, n: usize) -> f64 {
        self.totals as f64 / n as f64
    }

    fn finish(&self, n: usize) -> MeasureAverages {
        let per_play = self.running(n);
        MeasureAverages {
            per_play,
            per_formation: per_play / PLAY_LENGTH as f64,
            by_formation: self.by_formation.map(|s| s as f64 / n as f64),
        }
    }
}

/// Optional CSV outputs written while the run progresses.
pub struct CsvSinks<'a> {
    pub running_avg: &'a mut dyn Write,
    pub confidence: &'a mut dyn Write,
}

/// Runs `tests` trials. Trial `k` draws from its own generator seeded with
/// [`trial_seed`], so results do not depend on execution order.
pub fn run_evaluation(
    table: &TransitionTable,
    plays: &[Play],
    tests: usize,
    seed: u64,
    mut csv: Option<CsvSinks<'_>>,
) -> Result<EvaluationReport> {
    if tests == 0 {
        return Err(Error::validation("evaluation needs at least one test"));
    }
    let references = reference_plays(table.spec(), plays)?;
    if references.is_empty() {
        return Err(Error::validation("evaluation needs at least one play"));
    }
    if let Some(sinks) = csv.as_mut() {
        writeln!(sinks.running_avg, "trial,count_avg,distance_avg")?;
        writeln!(sinks.confidence, "trial,conf_step1,conf_step2")?;
    }

    let mut count = Accumulator::default();
    let mut distance = Accumulator::default();
    let mut confidence_sum = [0.0f64; 2];
    let mut running = Vec::with_capacity(tests);
    let mut trials = Vec::with_capacity(tests);

    let result = (|| -> Result<()> {
        for k in 0..tests {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, k));
            let trial = run_trial(table, &references, k, &mut rng)?;
            count.add(&trial.count);
            distance.add(&trial.distance);
            confidence_sum[0] += trial.confidence[0];
            confidence_sum[1] += trial.confidence[1];
            let n = k + 1;
            let avg = (count.running(n), distance.running(n));
            if let Some(sinks) = csv.as_mut() {
                writeln!(sinks.running_avg, "{n},{},{}", avg.0, avg.1)?;
                writeln!(
                    sinks.confidence,
                    "{n},{},{}",
                    trial.confidence[0], trial.confidence[1]
                )?;
            }
            running.push(avg);
            trials.push(trial);
        }
        Ok(())
    })();
    if let Some(sinks) = csv.as_mut() {
        // Keep whatever was written even if a trial failed.
        let _ = sinks.running_avg.flush();
        let _ = sinks.confidence.flush();
    }
    result?;

    Ok(EvaluationReport {
        tests,
        seed,
        count: count.finish(tests),
        distance: distance.finish(tests),
        mean_confidence: confidence_sum.map(|s| s / tests as f64),
        running,
        trials,
    })
}

impl EvaluationReport {
    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Number of tests: {}\n\n", self.tests));
        out.push_str(&format!(
            "{:<30}{:>28}{:>34}\n",
            "", "Average measure per play", "Average measure per formation"
        ));
        for (name, m) in [
            ("Count similarity measure", &self.count),
            ("Distance similarity measure", &self.distance),
        ] {
            out.push_str(&format!(
                "{:<30}{:>28.4}{:>34.4}\n",
                name, m.per_play, m.per_formation
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:<30}{:>14}{:>14}{:>14}\n",
            "Average by formation", "F1", "F2", "F3"
        ));
        for (name, m) in [("count", &self.count), ("distance", &self.distance)] {
            out.push_str(&format!(
                "{:<30}{:>14.4}{:>14.4}{:>14.4}\n",
                name, m.by_formation[0], m.by_formation[1], m.by_formation[2]
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "Average confidence: step 1 = {:.6e}, step 2 = {:.6e}\n",
            self.mean_confidence[0], self.mean_confidence[1]
        ));
        out
    }
}
