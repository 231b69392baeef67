//! Heterogeneous processor-speed profiles.
//!
//! Speeds are in tasks per unit of simulated time. A platform may carry a
//! drift policy under which a worker's speed is perturbed after every task
//! it completes.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::rng::RandomStream;

#[derive(Debug, Error, PartialEq)]
pub enum PlatformError {
    #[error("a platform needs at least one worker")]
    NoWorkers,
    #[error("speed bounds must satisfy 0 < lo <= hi (got lo={lo}, hi={hi})")]
    BadBounds { lo: f64, hi: f64 },
    #[error("speed set must be nonempty")]
    EmptySpeedSet,
    #[error("speed {0} is not strictly positive and finite")]
    NonPositiveSpeed(f64),
    #[error("jitter magnitude {0} must lie in [0, 1)")]
    BadJitter(f64),
    #[error("line {line}: cannot parse speed {text:?}")]
    Parse { line: usize, text: String },
    #[error("reading speeds file: {0}")]
    Io(String),
}

/// How speeds evolve during a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DriftPolicy {
    #[default]
    None,
    /// After each completed task the worker's speed is multiplied by a
    /// factor drawn uniformly from `[1 - m, 1 + m]`.
    PerTaskJitter(f64),
}

impl DriftPolicy {
    pub fn jitter(magnitude: f64) -> Result<Self, PlatformError> {
        if !(0.0..1.0).contains(&magnitude) {
            return Err(PlatformError::BadJitter(magnitude));
        }
        Ok(if magnitude == 0.0 { DriftPolicy::None } else { DriftPolicy::PerTaskJitter(magnitude) })
    }

    pub fn magnitude(&self) -> f64 {
        match self {
            DriftPolicy::None => 0.0,
            DriftPolicy::PerTaskJitter(m) => *m,
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, DriftPolicy::PerTaskJitter(_))
    }

    /// Draws the drifted value of one speed. Identity when inactive.
    pub fn drift_speed(&self, speed: f64, rng: &mut RandomStream) -> f64 {
        match *self {
            DriftPolicy::None => speed,
            DriftPolicy::PerTaskJitter(m) => speed * rng.uniform(1.0 - m, 1.0 + m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Platform {
    speeds: Vec<f64>,
    drift: DriftPolicy,
}

impl Platform {
    pub fn new(speeds: Vec<f64>) -> Result<Self, PlatformError> {
        if speeds.is_empty() {
            return Err(PlatformError::NoWorkers);
        }
        if let Some(&bad) = speeds.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(PlatformError::NonPositiveSpeed(bad));
        }
        Ok(Self { speeds, drift: DriftPolicy::None })
    }

    /// `p` workers of speed 1.
    pub fn homogeneous(p: usize) -> Result<Self, PlatformError> {
        Self::new(vec![1.0; p])
    }

    pub fn with_drift(mut self, drift: DriftPolicy) -> Self {
        self.drift = drift;
        self
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn drift(&self) -> DriftPolicy {
        self.drift
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    pub fn total_speed(&self) -> f64 {
        self.speeds.iter().sum()
    }

    /// Relative speeds `s_k / sum(s)`.
    pub fn relative_speeds(&self) -> Vec<f64> {
        let total = self.total_speed();
        self.speeds.iter().map(|s| s / total).collect()
    }

    /// Returns a copy with `worker`'s speed drifted once.
    pub fn apply_drift(&self, worker: usize, rng: &mut RandomStream) -> Platform {
        let mut next = self.clone();
        next.speeds[worker] = self.drift.drift_speed(self.speeds[worker], rng);
        next
    }

    /// One speed per line, shortest representation that round-trips.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.speeds {
            writeln!(out, "{s}").unwrap();
        }
        out
    }

    /// Parses one speed per line. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self, PlatformError> {
        let mut speeds = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let s: f64 = line.parse().map_err(|_| PlatformError::Parse { line: idx + 1, text: line.to_string() })?;
            speeds.push(s);
        }
        Self::new(speeds)
    }

    pub fn read_file(path: &Path) -> Result<Self, PlatformError> {
        let text = std::fs::read_to_string(path).map_err(|e| PlatformError::Io(e.to_string()))?;
        Self::from_text(&text)
    }
}

/// `p` speeds drawn i.i.d. uniform on `[lo, hi]`.
pub fn make_uniform_platform(p: usize, lo: f64, hi: f64, rng: &mut RandomStream) -> Result<Platform, PlatformError> {
    if p == 0 {
        return Err(PlatformError::NoWorkers);
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(PlatformError::BadBounds { lo, hi });
    }
    Platform::new((0..p).map(|_| rng.uniform(lo, hi)).collect())
}

/// `p` speeds drawn uniformly from a finite set.
pub fn make_discrete_platform(p: usize, speed_set: &[f64], rng: &mut RandomStream) -> Result<Platform, PlatformError> {
    if p == 0 {
        return Err(PlatformError::NoWorkers);
    }
    if speed_set.is_empty() {
        return Err(PlatformError::EmptySpeedSet);
    }
    if let Some(&bad) = speed_set.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(PlatformError::NonPositiveSpeed(bad));
    }
    Platform::new((0..p).map(|_| speed_set[rng.below(speed_set.len())]).collect())
}
