//! Monte Carlo harness comparing GFP and the matching mechanism.
//!
//! For each seeker the harness draws one auction instance and runs both
//! mechanisms on it, in a fixed order: (i) bids, (ii) position-aware pctr,
//! (iii) seeker weight, (iv) position-aware erelevance, (v) position-aware
//! scores, (vi) slot averages, (vii) GFP on the averaged scores,
//! (viii) maximum-weight matching on the position-aware scores. Sweeping the
//! auction depth `n` produces the revenue and relevance curves.
//!
//! Every seeker gets its own counter-based RNG stream derived from
//! `(seed, n, seeker index)`, so results are bit-identical no matter how the
//! work is scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{gfp_rank, match_optimal, total_score};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, relevance, revenue, AllocationOutcome, Mechanism, MechanismPair, PopulationSummary,
};
use crate::score::{score_position_aware, slot_average, QueryInstance, ScoreCombiner, SquareMatrix};

/// A named scalar sampling family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScalarDist {
    Lognormal { mu: f64, sigma: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

impl ScalarDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalarDist::Lognormal { mu, sigma } => {
                if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
                    return Err(Error::Config(format!(
                        "lognormal(mu = {mu}, sigma = {sigma}) needs finite mu and sigma > 0"
                    )));
                }
            }
            ScalarDist::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::Config(format!(
                        "uniform(lo = {lo}, hi = {hi}) needs finite lo < hi"
                    )));
                }
            }
            ScalarDist::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Config(format!("constant value {value} must be finite")));
                }
            }
        }
        Ok(())
    }

    fn sampler(&self) -> Result<ScalarSampler> {
        self.validate()?;
        Ok(match *self {
            ScalarDist::Lognormal { mu, sigma } => ScalarSampler::Lognormal(
                LogNormal::new(mu, sigma)
                    .map_err(|e| Error::Config(format!("lognormal: {e}")))?,
            ),
            ScalarDist::Uniform { lo, hi } => ScalarSampler::Uniform(
                Uniform::new(lo, hi).map_err(|e| Error::Config(format!("uniform: {e}")))?,
            ),
            ScalarDist::Constant { value } => ScalarSampler::Constant(value),
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<f64> {
        Ok(self.sampler()?.sample(rng))
    }
}

enum ScalarSampler {
    Lognormal(LogNormal<f64>),
    Uniform(Uniform<f64>),
    Constant(f64),
}

impl ScalarSampler {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            ScalarSampler::Lognormal(d) => d.sample(rng),
            ScalarSampler::Uniform(d) => d.sample(rng),
            ScalarSampler::Constant(v) => *v,
        }
    }
}

/// A named family for drawing one position-aware n-by-n matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MatrixDist {
    /// `entry[j][k] = quality_j * decay_k * noise_jk` with
    /// `decay_k = 1/log2(k + 2)`, clamped to [0, 1]. Draw order: all
    /// qualities first, then noise row-major.
    PositionalDecay { quality: ScalarDist, noise: ScalarDist },
    /// Independent draws per entry, row-major.
    Iid { entry: ScalarDist },
    /// One draw per job, repeated across slots; entries do not depend on
    /// the position.
    PositionIndependent { value: ScalarDist },
}

impl MatrixDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            MatrixDist::PositionalDecay { quality, noise } => {
                quality.validate()?;
                noise.validate()
            }
            MatrixDist::Iid { entry } => entry.validate(),
            MatrixDist::PositionIndependent { value } => value.validate(),
        }
    }

    pub fn sample_matrix(&self, n: usize, rng: &mut impl Rng) -> Result<SquareMatrix> {
        match self {
            MatrixDist::PositionalDecay { quality, noise } => {
                let quality = quality.sampler()?;
                let noise = noise.sampler()?;
                let q: Vec<f64> = (0..n).map(|_| quality.sample(rng)).collect();
                let mut rows = Vec::with_capacity(n);
                for j in 0..n {
                    let row: Vec<f64> = (0..n)
                        .map(|k| {
                            let decay = 1.0 / (k as f64 + 2.0).log2();
                            (q[j] * decay * noise.sample(rng)).clamp(0.0, 1.0)
                        })
                        .collect();
                    rows.push(row);
                }
                SquareMatrix::from_rows(rows)
            }
            MatrixDist::Iid { entry } => {
                let entry = entry.sampler()?;
                Ok(SquareMatrix::from_fn(n, |_, _| entry.sample(rng)))
            }
            MatrixDist::PositionIndependent { value } => {
                let value = value.sampler()?;
                let per_job: Vec<f64> = (0..n).map(|_| value.sample(rng)).collect();
                Ok(SquareMatrix::from_fn(n, |j, _| per_job[j]))
            }
        }
    }
}

/// Full configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Number of seekers simulated per depth.
    pub seeker_count: usize,
    /// Auction depths (jobs per query) to sweep.
    pub depth_grid: Vec<usize>,
    pub seed: u64,
    pub bid_dist: ScalarDist,
    pub pctr_dist: MatrixDist,
    pub erelevance_dist: MatrixDist,
    pub weight_dist: ScalarDist,
    #[serde(default)]
    pub combiner: ScoreCombiner,
}

impl Default for SimulationConfig {
    /// Defaults make position-awareness matter: click-through and relevance
    /// both decay with the slot, so the averaged view loses information.
    fn default() -> Self {
        SimulationConfig {
            seeker_count: 1000,
            depth_grid: vec![2, 4, 8, 16],
            seed: 0,
            bid_dist: ScalarDist::Lognormal { mu: 0.0, sigma: 0.5 },
            pctr_dist: MatrixDist::PositionalDecay {
                quality: ScalarDist::Uniform { lo: 0.2, hi: 1.0 },
                noise: ScalarDist::Uniform { lo: 0.8, hi: 1.2 },
            },
            erelevance_dist: MatrixDist::PositionalDecay {
                quality: ScalarDist::Uniform { lo: 0.2, hi: 1.0 },
                noise: ScalarDist::Uniform { lo: 0.8, hi: 1.2 },
            },
            weight_dist: ScalarDist::Uniform { lo: 0.5, hi: 2.0 },
            combiner: ScoreCombiner::Additive,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeker_count == 0 {
            return Err(Error::Config("seeker_count must be at least 1".into()));
        }
        if self.depth_grid.is_empty() {
            return Err(Error::Config("depth_grid must not be empty".into()));
        }
        if self.depth_grid.contains(&0) {
            return Err(Error::Config("every depth must be at least 1".into()));
        }
        self.bid_dist.validate()?;
        self.pctr_dist.validate()?;
        self.erelevance_dist.validate()?;
        self.weight_dist.validate()?;
        self.combiner.validate()
    }
}

/// Dedicated RNG stream for one `(seed, depth, seeker)` cell. Streams are
/// independent of execution order, which keeps parallel sweeps bit-exact.
pub fn seeker_rng(seed: u64, n: usize, seeker_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) ^ seeker_index);
    rng
}

/// Draws one auction instance: bids, position-aware pctr, the seeker
/// weight, then position-aware erelevance, in that order.
pub fn sample_instance(
    config: &SimulationConfig,
    n: usize,
    seeker_id: &str,
    rng: &mut impl Rng,
) -> Result<QueryInstance> {
    let bid_sampler = config.bid_dist.sampler()?;
    let bids: Vec<f64> = (0..n).map(|_| bid_sampler.sample(rng)).collect();
    let pctr = config.pctr_dist.sample_matrix(n, rng)?;
    let weight = config.weight_dist.sample(rng)?;
    let erelevance = config.erelevance_dist.sample_matrix(n, rng)?;
    QueryInstance::new(seeker_id, bids, pctr, erelevance, weight)
        .map_err(|e| Error::Config(format!("sampled instance is invalid: {e}")))
}

/// Samples one seeker and evaluates both mechanisms on the same instance.
pub fn simulate_seeker(
    config: &SimulationConfig,
    n: usize,
    seeker_id: &str,
    rng: &mut impl Rng,
) -> Result<MechanismPair> {
    let instance = sample_instance(config, n, seeker_id, rng)?;
    let scores = score_position_aware(&instance, config.combiner)?;
    let view = slot_average(&instance, &scores)?;

    let gfp_matching = gfp_rank(&view.score_bar)?;
    let gfp = AllocationOutcome {
        revenue: revenue(&instance, &gfp_matching)?,
        relevance: relevance(&instance, &gfp_matching)?,
        matching: gfp_matching,
        mechanism: Mechanism::Gfp,
    };

    let optimal = match_optimal(&scores)?;
    debug_assert!(
        optimal.total_score >= total_score(&scores, &gfp.matching),
        "matching optimum fell below the GFP total"
    );
    let vcg = AllocationOutcome {
        revenue: revenue(&instance, &optimal.matching)?,
        relevance: relevance(&instance, &optimal.matching)?,
        matching: optimal.matching,
        mechanism: Mechanism::Vcg,
    };

    Ok(MechanismPair { gfp, vcg })
}

/// Population summary for one depth, with standard errors of each mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub n: usize,
    pub summary: PopulationSummary,
    pub se_rev_gfp: f64,
    pub se_rev_vcg: f64,
    pub se_rel_gfp: f64,
    pub se_rel_vcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSeekerRow {
    pub seeker_id: String,
    pub n: usize,
    pub mechanism: Mechanism,
    pub revenue: f64,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub seed: u64,
    pub depths: Vec<DepthSummary>,
    /// Two rows per seeker per depth (one per mechanism) when retained.
    pub per_seeker: Option<Vec<PerSeekerRow>>,
}

/// Standard error of the mean, ddof = 1; zero for fewer than two samples.
fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (var / n as f64).sqrt()
}

fn seeker_label(index: usize) -> String {
    format!("s{index:06}")
}

/// Runs the full sweep. Seekers are simulated in parallel; each one owns a
/// counter-based stream, and results are collected in seeker order, so the
/// report does not depend on the number of threads.
pub fn run_sweep(config: &SimulationConfig, retain_per_seeker: bool) -> Result<SimulationReport> {
    config.validate()?;
    let mut depths = Vec::with_capacity(config.depth_grid.len());
    let mut per_seeker_rows = retain_per_seeker.then(Vec::new);

    for &n in &config.depth_grid {
        let pairs: Vec<MechanismPair> = (0..config.seeker_count)
            .into_par_iter()
            .map(|i| {
                let mut rng = seeker_rng(config.seed, n, i as u64);
                simulate_seeker(config, n, &seeker_label(i), &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;

        let summary = aggregate(&pairs)?;
        let collect = |f: fn(&MechanismPair) -> f64| -> Vec<f64> { pairs.iter().map(f).collect() };
        depths.push(DepthSummary {
            n,
            se_rev_gfp: standard_error(&collect(|p| p.gfp.revenue)),
            se_rev_vcg: standard_error(&collect(|p| p.vcg.revenue)),
            se_rel_gfp: standard_error(&collect(|p| p.gfp.relevance)),
            se_rel_vcg: standard_error(&collect(|p| p.vcg.relevance)),
            summary,
        });

        if let Some(rows) = per_seeker_rows.as_mut() {
            for (i, pair) in pairs.iter().enumerate() {
                for outcome in [&pair.gfp, &pair.vcg] {
                    rows.push(PerSeekerRow {
                        seeker_id: seeker_label(i),
                        n,
                        mechanism: outcome.mechanism,
                        revenue: outcome.revenue,
                        relevance: outcome.relevance,
                    });
                }
            }
        }
    }

    Ok(SimulationReport {
        config: config.clone(),
        seed: config.seed,
        depths,
        per_seeker: per_seeker_rows,
    })
}
