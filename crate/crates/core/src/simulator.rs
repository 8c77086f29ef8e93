//! Synthetic vision feed: predesigned plays mixed with random noise formations.
//!
//! Each draw picks `u` uniformly from `0..=plays`. `u = 0` emits one formation
//! with every robot at a uniform random position on the field; otherwise the
//! three formations of play `u` are emitted back to back. With three plays,
//! 90% of all packages belong to plays in the long run.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ROBOTS};
use crate::vision::{write_break, write_package, DatagramSender, RobotObservation, VisionPackage};

/// Formations per play.
pub const PLAY_LENGTH: usize = 3;

/// Timestamp spacing used when pacing is disabled.
pub const NOMINAL_INTERVAL: f64 = 2.0;

const BUILTIN_PLAYS: &str = include_str!("../data/plays.json");

pub type RawFormation = [(f64, f64); ROBOTS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Play {
    pub id: u32,
    pub name: String,
    pub formations: Vec<Vec<RobotObservation>>,
}

impl Play {
    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        if self.formations.len() != PLAY_LENGTH {
            return Err(Error::validation(format!(
                "play {} has {} formations, expected {PLAY_LENGTH}",
                self.id,
                self.formations.len()
            )));
        }
        for (k, robots) in self.formations.iter().enumerate() {
            let pkg = VisionPackage {
                seq: 0,
                timestamp: 0.0,
                robots: robots.clone(),
            };
            pkg.validate().map_err(|e| {
                Error::validation(format!("play {} formation {}: {e}", self.id, k + 1))
            })?;
            if let Some(r) = robots.iter().find(|r| !spec.contains(r.x, r.y)) {
                return Err(Error::validation(format!(
                    "play {} formation {}: robot {} at ({}, {}) is off the field",
                    self.id,
                    k + 1,
                    r.id,
                    r.x,
                    r.y
                )));
            }
        }
        Ok(())
    }

    /// Positions of formation `k` (0-based) in robot-id order.
    pub fn formation(&self, k: usize) -> RawFormation {
        let mut out = [(0.0, 0.0); ROBOTS];
        for r in &self.formations[k] {
            out[r.id as usize - 1] = (r.x, r.y);
        }
        out
    }

    /// Formation `k` as a vision package.
    pub fn package(&self, k: usize, seq: u64, timestamp: f64) -> VisionPackage {
        VisionPackage {
            seq,
            timestamp,
            robots: self.formations[k].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayBook {
    pub plays: Vec<Play>,
}

impl PlayBook {
    pub fn parse(text: &str, spec: &GridSpec) -> Result<Self> {
        let book: PlayBook = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("plays file: {e}")))?;
        book.validate(spec)?;
        Ok(book)
    }

    pub fn load(path: &Path, spec: &GridSpec) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, spec)
    }

    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        if self.plays.is_empty() {
            return Err(Error::validation("plays file holds no plays"));
        }
        for (i, play) in self.plays.iter().enumerate() {
            if self.plays[..i].iter().any(|p| p.id == play.id) {
                return Err(Error::validation(format!("duplicate play id {}", play.id)));
            }
            play.validate(spec)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("play book serializes")
    }
}

/// The three bundled plays: a central pass-shoot and two corner plays.
pub fn builtin_plays() -> Vec<Play> {
    let book: PlayBook = serde_json::from_str(BUILTIN_PLAYS).expect("bundled plays parse");
    book.plays
}

/// Six independent uniform positions over the field rectangle.
pub fn random_formation<R: Rng + ?Sized>(spec: &GridSpec, rng: &mut R) -> RawFormation {
    let mut out = [(0.0, 0.0); ROBOTS];
    for slot in &mut out {
        let x = spec.field_min_x() + rng.random::<f64>() * spec.field_width();
        let y = spec.field_min_y() + rng.random::<f64>() * spec.field_height();
        *slot = (x, y);
    }
    out
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawKind {
    Noise,
    /// Index into the simulator's play list.
    Play(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub kind: DrawKind,
    pub packages: Vec<VisionPackage>,
}

/// Deterministic package producer.
pub struct Simulator {
    spec: GridSpec,
    plays: Vec<Play>,
    rng: ChaCha8Rng,
    next_seq: u64,
    interval: f64,
}

impl Simulator {
    pub fn new(spec: GridSpec, plays: Vec<Play>, seed: u64, interval: f64) -> Result<Self> {
        PlayBook {
            plays: plays.clone(),
        }
        .validate(&spec)?;
        if !(interval >= 0.0 && interval.is_finite()) {
            return Err(Error::validation(format!(
                "interval must be a non-negative number of seconds, got {interval}"
            )));
        }
        Ok(Simulator {
            spec,
            plays,
            rng: seeded_rng(seed),
            next_seq: 0,
            interval,
        })
    }

    pub fn plays(&self) -> &[Play] {
        &self.plays
    }

    fn stamp(&mut self) -> (u64, f64) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let step = if self.interval > 0.0 {
            self.interval
        } else {
            NOMINAL_INTERVAL
        };
        (seq, seq as f64 * step)
    }

    pub fn draw_next(&mut self) -> Draw {
        let u = self.rng.random_range(0..=self.plays.len());
        if u == 0 {
            let positions = random_formation(&self.spec, &mut self.rng);
            let (seq, t) = self.stamp();
            let pkg = VisionPackage::from_positions(seq, t, &positions)
                .expect("in-field random formation is valid");
            return Draw {
                kind: DrawKind::Noise,
                packages: vec![pkg],
            };
        }
        let play = u - 1;
        let packages = (0..PLAY_LENGTH)
            .map(|k| {
                let (seq, t) = self.stamp();
                self.plays[play].package(k, seq, t)
            })
            .collect();
        Draw {
            kind: DrawKind::Play(play),
            packages,
        }
    }
}

/// Destination for simulated packages.
pub trait PackageSink {
    fn emit(&mut self, pkg: &VisionPackage) -> Result<()>;

    /// Called after the last package of each draw.
    fn end_draw(&mut self) -> Result<()> {
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// `.vpl` log sink; draws are separated by blank lines.
pub struct LogSink<W: Write> {
    out: W,
}

impl<W: Write> LogSink<W> {
    pub fn new(out: W) -> Self {
        LogSink { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> PackageSink for LogSink<W> {
    fn emit(&mut self, pkg: &VisionPackage) -> Result<()> {
        write_package(pkg, &mut self.out)
    }

    fn end_draw(&mut self) -> Result<()> {
        write_break(&mut self.out)
    }

    fn finish(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl PackageSink for DatagramSender {
    fn emit(&mut self, pkg: &VisionPackage) -> Result<()> {
        self.send(pkg)
    }
}

impl PackageSink for Vec<VisionPackage> {
    fn emit(&mut self, pkg: &VisionPackage) -> Result<()> {
        self.push(pkg.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatorConfig {
    pub seed: u64,
    /// Seconds between packages; 0 disables pacing.
    pub interval: f64,
    pub draws: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimulationSummary {
    pub draws: u64,
    pub packages: u64,
    pub play_packages: u64,
    pub noise_packages: u64,
}

impl SimulationSummary {
    pub fn play_fraction(&self) -> f64 {
        if self.packages == 0 {
            0.0
        } else {
            self.play_packages as f64 / self.packages as f64
        }
    }
}

/// Emits `config.draws` draws into `sink`, pacing packages by the interval.
/// On a sink failure the error is returned; packages already emitted stay put.
pub fn run<S: PackageSink + ?Sized>(
    spec: GridSpec,
    plays: Vec<Play>,
    config: &SimulatorConfig,
    sink: &mut S,
) -> Result<SimulationSummary> {
    if config.draws == 0 {
        return Err(Error::validation("draws must be positive"));
    }
    let mut sim = Simulator::new(spec, plays, config.seed, config.interval)?;
    let pause = Duration::from_secs_f64(config.interval);
    let mut summary = SimulationSummary::default();
    for _ in 0..config.draws {
        let draw = sim.draw_next();
        for pkg in &draw.packages {
            if summary.packages > 0 && !pause.is_zero() {
                thread::sleep(pause);
            }
            sink.emit(pkg).inspect_err(|_| {
                log::error!("sink failed after {} packages", summary.packages);
            })?;
            summary.packages += 1;
        }
        sink.end_draw()?;
        summary.draws += 1;
        match draw.kind {
            DrawKind::Noise => summary.noise_packages += 1,
            DrawKind::Play(_) => summary.play_packages += PLAY_LENGTH as u64,
        }
    }
    sink.finish()?;
    Ok(summary)
}
