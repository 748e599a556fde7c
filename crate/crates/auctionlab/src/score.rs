//! Domain types and the scoring pipeline.
//!
//! One auction ranks `n` jobs into `n` slots for a single seeker. Each job
//! carries a bid, and both the click-through estimate and the relevance
//! estimate are position-aware: `pctr[j][k]` is the probability that the
//! seeker clicks job `j` when it sits in slot `k`, and `erelevance[j][k]` is
//! the estimated relevance of that placement. The auction score combines a
//! poster component `bid * pctr` with a seeker component
//! `seeker_weight * erelevance` through a pluggable combiner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense square matrix, row-major. Rows index jobs, columns index slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    /// Builds a matrix from rows; every row must have length `rows.len()`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInstance("matrix must be at least 1x1".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (j, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInstance(format!(
                    "matrix is not square: row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                data.push(f(j, k));
            }
        }
        SquareMatrix { n, data }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        SquareMatrix { n, data: vec![value; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, job: usize, slot: usize) -> f64 {
        self.data[job * self.n + slot]
    }

    pub fn row(&self, job: usize) -> &[f64] {
        &self.data[job * self.n..(job + 1) * self.n]
    }

    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|j| self.row(j).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest absolute entry; 0 for an all-zero matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SquareMatrix::from_rows(rows)
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        m.rows()
    }
}

/// Position-aware auction scores; rows are jobs, columns are slots.
pub type ScoreMatrix = SquareMatrix;

/// One seeker's auction: bids, position-aware estimates, and the weight
/// placed on a unit of relevance for this seeker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInstance {
    pub seeker_id: String,
    /// Money offered per click by each job's poster; length n.
    pub bids: Vec<f64>,
    /// `pctr.get(j, k)` = probability the seeker clicks job j shown in slot k.
    pub pctr: SquareMatrix,
    /// `erelevance.get(j, k)` = relevance of job j shown in slot k.
    pub erelevance: SquareMatrix,
    /// Money per unit of relevance for this seeker.
    pub seeker_weight: f64,
}

impl QueryInstance {
    pub fn new(
        seeker_id: impl Into<String>,
        bids: Vec<f64>,
        pctr: SquareMatrix,
        erelevance: SquareMatrix,
        seeker_weight: f64,
    ) -> Result<Self> {
        let instance = QueryInstance {
            seeker_id: seeker_id.into(),
            bids,
            pctr,
            erelevance,
            seeker_weight,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn n(&self) -> usize {
        self.bids.len()
    }

    /// Checks that bids and both matrices agree on n.
    pub fn validate_dims(&self) -> Result<()> {
        let n = self.bids.len();
        if n == 0 {
            return Err(Error::InvalidInstance("instance needs at least one job".into()));
        }
        if self.pctr.n() != n || self.erelevance.n() != n {
            return Err(Error::InvalidInstance(format!(
                "dimension mismatch: {} bids, {}x{} pctr, {}x{} erelevance",
                n,
                self.pctr.n(),
                self.pctr.n(),
                self.erelevance.n(),
                self.erelevance.n()
            )));
        }
        Ok(())
    }

    /// Full invariant check: dimensions, finiteness, and value ranges.
    pub fn validate(&self) -> Result<()> {
        self.validate_dims()?;
        if let Some(b) = self.bids.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::InvalidInstance(format!("bid {b} is not finite and >= 0")));
        }
        if self.pctr.entries().any(|p| !p.is_finite() || !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidInstance("pctr entries must lie in [0, 1]".into()));
        }
        if self.erelevance.entries().any(|m| !m.is_finite() || m < 0.0) {
            return Err(Error::InvalidInstance(
                "erelevance entries must be finite and >= 0".into(),
            ));
        }
        if !self.seeker_weight.is_finite() || self.seeker_weight < 0.0 {
            return Err(Error::InvalidInstance(format!(
                "seeker weight {} is not finite and >= 0",
                self.seeker_weight
            )));
        }
        Ok(())
    }
}

/// Per-job means over slots of the position-aware quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotAveragedView {
    pub pctr_bar: Vec<f64>,
    pub erelevance_bar: Vec<f64>,
    pub score_bar: Vec<f64>,
}

/// How the poster component and the seeker component merge into one score.
///
/// Every combiner is monotone nondecreasing in both arguments and maps
/// (0, 0) to 0, so a zero bid with a zero weight always scores zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreCombiner {
    /// `poster + seeker`. Total-score maximization then decomposes into
    /// revenue plus weighted relevance, which keeps the tradeoff legible.
    #[default]
    Additive,
    /// Weighted power mean `(share * x^p + (1 - share) * y^p)^(1/p)` with
    /// `share` in [0, 1] and `p > 0`.
    WeightedPowerMean { poster_share: f64, exponent: f64 },
}

impl ScoreCombiner {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScoreCombiner::Additive => Ok(()),
            ScoreCombiner::WeightedPowerMean { poster_share, exponent } => {
                if !(0.0..=1.0).contains(&poster_share) || !poster_share.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "poster_share {poster_share} must lie in [0, 1]"
                    )));
                }
                if !exponent.is_finite() || exponent <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "exponent {exponent} must be positive"
                    )));
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn combine(&self, poster: f64, seeker: f64) -> f64 {
        match *self {
            ScoreCombiner::Additive => poster + seeker,
            ScoreCombiner::WeightedPowerMean { poster_share, exponent } => {
                let m = poster_share * poster.powf(exponent)
                    + (1.0 - poster_share) * seeker.powf(exponent);
                m.powf(1.0 / exponent)
            }
        }
    }
}

/// Position-aware scores: `s[j][k] = S(bid[j] * pctr[j][k], w * erelevance[j][k])`.
pub fn score_position_aware(
    instance: &QueryInstance,
    combiner: ScoreCombiner,
) -> Result<ScoreMatrix> {
    instance.validate_dims()?;
    let w = instance.seeker_weight;
    Ok(ScoreMatrix::from_fn(instance.n(), |j, k| {
        combiner.combine(
            instance.bids[j] * instance.pctr.get(j, k),
            w * instance.erelevance.get(j, k),
        )
    }))
}

/// Arithmetic means over slots of pctr, erelevance, and the score matrix.
pub fn slot_average(instance: &QueryInstance, scores: &ScoreMatrix) -> Result<SlotAveragedView> {
    instance.validate_dims()?;
    let n = instance.n();
    if scores.n() != n {
        return Err(Error::InvalidInstance(format!(
            "score matrix is {}x{} but the instance has n = {n}",
            scores.n(),
            scores.n()
        )));
    }
    let row_mean = |m: &SquareMatrix, j: usize| m.row(j).iter().sum::<f64>() / n as f64;
    Ok(SlotAveragedView {
        pctr_bar: (0..n).map(|j| row_mean(&instance.pctr, j)).collect(),
        erelevance_bar: (0..n).map(|j| row_mean(&instance.erelevance, j)).collect(),
        score_bar: (0..n).map(|j| row_mean(scores, j)).collect(),
    })
}

/// Position-unaware scores from slot-averaged estimates:
/// `s_bar[j] = S(bid[j] * pctr_bar[j], w * erelevance_bar[j])`.
pub fn score_position_unaware(
    view: &SlotAveragedView,
    instance: &QueryInstance,
    combiner: ScoreCombiner,
) -> Result<Vec<f64>> {
    instance.validate_dims()?;
    let n = instance.n();
    if view.pctr_bar.len() != n || view.erelevance_bar.len() != n {
        return Err(Error::InvalidInstance(format!(
            "slot-averaged view has {} entries but the instance has n = {n}",
            view.pctr_bar.len()
        )));
    }
    Ok((0..n)
        .map(|j| {
            combiner.combine(
                instance.bids[j] * view.pctr_bar[j],
                instance.seeker_weight * view.erelevance_bar[j],
            )
        })
        .collect())
}
