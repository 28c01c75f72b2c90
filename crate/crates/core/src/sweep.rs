//! Exhaustive grid search over learning rate, batch size and input size.
//!
//! Training itself sits behind the evaluator callback. Trials may run on
//! several worker threads, but the trial log and the choice of best point
//! depend only on enumeration order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    learning_rates: Vec<f64>,
    batch_sizes: Vec<u32>,
    input_sizes: Vec<(u32, u32)>,
}

impl SweepGrid {
    pub fn new(learning_rates: Vec<f64>, batch_sizes: Vec<u32>, input_sizes: Vec<(u32, u32)>) -> Result<Self> {
        fn unique<T: PartialEq>(v: &[T]) -> bool {
            v.iter().enumerate().all(|(i, a)| !v[..i].contains(a))
        }
        if learning_rates.is_empty() || batch_sizes.is_empty() || input_sizes.is_empty() {
            return Err(Error::invalid("every sweep axis needs at least one value"));
        }
        if let Some(lr) = learning_rates.iter().find(|lr| !(**lr > 0.0 && lr.is_finite())) {
            return Err(Error::invalid(format!("learning rate {lr} must be positive")));
        }
        if batch_sizes.contains(&0) {
            return Err(Error::invalid("batch sizes must be positive"));
        }
        if input_sizes.iter().any(|&(h, w)| h == 0 || w == 0) {
            return Err(Error::invalid("input sizes must be positive"));
        }
        if !(unique(&learning_rates) && unique(&batch_sizes) && unique(&input_sizes)) {
            return Err(Error::invalid("sweep axis values must be unique"));
        }
        Ok(Self { learning_rates, batch_sizes, input_sizes })
    }

    /// 3 × 3 × 3 lattice: learning rates 1e-3, 5e-4, 1e-4; batch sizes 8,
    /// 16, 32; square inputs of side 416, 512, 608.
    pub fn standard() -> Self {
        Self {
            learning_rates: vec![1e-3, 5e-4, 1e-4],
            batch_sizes: vec![8, 16, 32],
            input_sizes: vec![(416, 416), (512, 512), (608, 608)],
        }
    }

    pub fn learning_rates(&self) -> &[f64] {
        &self.learning_rates
    }

    pub fn batch_sizes(&self) -> &[u32] {
        &self.batch_sizes
    }

    pub fn input_sizes(&self) -> &[(u32, u32)] {
        &self.input_sizes
    }

    pub fn len(&self) -> usize {
        self.learning_rates.len() * self.batch_sizes.len() * self.input_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub learning_rate: f64,
    pub batch_size: u32,
    pub input_size: (u32, u32),
}

/// Every grid point, learning rate outermost and input size innermost.
pub fn enumerate_grid(g: &SweepGrid) -> Vec<SweepPoint> {
    let mut points = Vec::with_capacity(g.len());
    for &learning_rate in &g.learning_rates {
        for &batch_size in &g.batch_sizes {
            for &input_size in &g.input_sizes {
                points.push(SweepPoint { learning_rate, batch_size, input_size });
            }
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialOutcome {
    Ok { score: f64 },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub point: SweepPoint,
    pub outcome: TrialOutcome,
}

impl Trial {
    pub fn score(&self) -> Option<f64> {
        match self.outcome {
            TrialOutcome::Ok { score } => Some(score),
            TrialOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best_score: f64,
    pub best_point: SweepPoint,
    /// One entry per grid point, in enumeration order.
    pub trials: Vec<Trial>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| t.score().is_none())
    }

    /// `lr,batch,h,w,score,status` rows; failed trials leave `score` empty.
    pub fn trials_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(["lr", "batch", "h", "w", "score", "status"]).map_err(io)?;
        for t in &self.trials {
            let (score, status) = match &t.outcome {
                TrialOutcome::Ok { score } => (score.to_string(), "ok".to_string()),
                TrialOutcome::Failed { reason } => (String::new(), format!("failed: {reason}")),
            };
            w.write_record([
                t.point.learning_rate.to_string(),
                t.point.batch_size.to_string(),
                t.point.input_size.0.to_string(),
                t.point.input_size.1.to_string(),
                score,
                status,
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }
}

fn settle(raw: std::result::Result<f64, String>) -> TrialOutcome {
    match raw {
        Ok(score) if score.is_finite() && score >= 0.0 => TrialOutcome::Ok { score },
        Ok(score) => TrialOutcome::Failed { reason: format!("score {score} is not a finite non-negative number") },
        Err(reason) => TrialOutcome::Failed { reason },
    }
}

/// Evaluates every grid point and keeps the best.
///
/// `workers` threads pull points from a shared queue. The evaluator must be
/// deterministic and return non-negative scores; an `Err` or an invalid score
/// marks that trial as failed without stopping the sweep. A later point
/// replaces the best only when its score is strictly higher.
pub fn run_sweep<F>(g: &SweepGrid, workers: usize, evaluator: F) -> Result<SweepResult>
where
    F: Fn(&SweepPoint) -> std::result::Result<f64, String> + Sync,
{
    let points = enumerate_grid(g);
    let workers = workers.clamp(1, points.len().max(1));

    let outcomes: Vec<TrialOutcome> = if workers == 1 {
        points.iter().map(|p| settle(evaluator(p))).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<TrialOutcome>>> = Mutex::new(vec![None; points.len()]);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= points.len() {
                        break;
                    }
                    let outcome = settle(evaluator(&points[i]));
                    slots.lock().expect("trial slots poisoned")[i] = Some(outcome);
                });
            }
        });
        slots
            .into_inner()
            .expect("trial slots poisoned")
            .into_iter()
            .map(|o| o.expect("every point evaluated"))
            .collect()
    };

    let trials: Vec<Trial> = points
        .into_iter()
        .zip(outcomes)
        .enumerate()
        .map(|(index, (point, outcome))| Trial { index, point, outcome })
        .collect();

    let mut best: Option<(f64, SweepPoint)> = None;
    for t in &trials {
        if let Some(score) = t.score() {
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, t.point));
            }
        }
    }
    match best {
        Some((best_score, best_point)) => Ok(SweepResult { best_score, best_point, trials }),
        None => Err(Error::AllTrialsFailed(trials.len())),
    }
}

/// Synthetic evaluator with a single planted optimum: 1.0 at `optimum`,
/// otherwise `0.5 / (1 + d)` where `d` is the summed axis-index distance.
#[derive(Debug, Clone)]
pub struct PlantedOptimum {
    grid: SweepGrid,
    optimum: SweepPoint,
}

impl PlantedOptimum {
    pub fn new(grid: SweepGrid, optimum: SweepPoint) -> Result<Self> {
        if position(&grid, &optimum).is_none() {
            return Err(Error::invalid("planted optimum is not a grid point"));
        }
        Ok(Self { grid, optimum })
    }

    pub fn score(&self, p: &SweepPoint) -> std::result::Result<f64, String> {
        let a = position(&self.grid, p).ok_or_else(|| "point not on grid".to_string())?;
        let b = position(&self.grid, &self.optimum).expect("checked at construction");
        let d = a.0.abs_diff(b.0) + a.1.abs_diff(b.1) + a.2.abs_diff(b.2);
        Ok(if d == 0 { 1.0 } else { 0.5 / (1.0 + d as f64) })
    }
}

fn position(g: &SweepGrid, p: &SweepPoint) -> Option<(usize, usize, usize)> {
    Some((
        g.learning_rates.iter().position(|&v| v == p.learning_rate)?,
        g.batch_sizes.iter().position(|&v| v == p.batch_size)?,
        g.input_sizes.iter().position(|&v| v == p.input_size)?,
    ))
}
