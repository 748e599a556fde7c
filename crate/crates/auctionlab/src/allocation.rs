//! Allocation rules mapping jobs to slots.
//!
//! Two mechanisms are compared throughout the crate:
//!
//! * generalized first-price ([`gfp_rank`]): sort jobs by their slot-averaged
//!   score, best score to the top slot;
//! * maximum-weight matching ([`match_optimal`]): pick the permutation that
//!   maximizes the sum of position-aware scores (the VCG allocation rule,
//!   used here without VCG prices).
//!
//! [`match_brute_force`] enumerates all permutations as an oracle for small
//! instances, and [`match_auction_eps`] solves the same matching problem with
//! a price-raising auction under an epsilon-scaling schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{ScoreMatrix, SquareMatrix};

/// A bijection from jobs to slots: `slot_of(j) = k` puts job `j` in slot `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Matching {
    slots: Vec<usize>,
}

impl Matching {
    /// Validates that `assignment` is a permutation of `0..n`.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let n = assignment.len();
        if n == 0 {
            return Err(Error::InvalidInstance("empty matching".into()));
        }
        let mut seen = vec![false; n];
        for &k in &assignment {
            if k >= n || seen[k] {
                return Err(Error::InvalidInstance(format!(
                    "assignment {assignment:?} is not a bijection on 0..{n}"
                )));
            }
            seen[k] = true;
        }
        Ok(Matching { slots: assignment })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    #[inline]
    pub fn slot_of(&self, job: usize) -> usize {
        self.slots[job]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.slots
    }

    /// Inverse map: entry `k` holds the job occupying slot `k`.
    pub fn job_in_slot(&self) -> Vec<usize> {
        let mut inv = vec![0; self.slots.len()];
        for (job, &slot) in self.slots.iter().enumerate() {
            inv[slot] = job;
        }
        inv
    }
}

impl TryFrom<Vec<usize>> for Matching {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Matching::new(v)
    }
}

impl From<Matching> for Vec<usize> {
    fn from(m: Matching) -> Self {
        m.slots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Gfp,
    Hungarian,
    AuctionEps,
    BruteForce,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SolverKind::Gfp => "gfp",
            SolverKind::Hungarian => "hungarian",
            SolverKind::AuctionEps => "auction_eps",
            SolverKind::BruteForce => "brute_force",
        };
        f.write_str(name)
    }
}

/// A matching together with its objective value and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub matching: Matching,
    /// Sum of `scores[j][matching(j)]`, accumulated in job order.
    pub total_score: f64,
    pub solver: SolverKind,
    /// Bidding rounds; only the auction solver reports this.
    pub iterations: Option<u64>,
}

/// Objective value of a matching, summed in ascending job order.
///
/// Every solver and test in the crate computes totals through this function
/// so that equal assignments produce bit-identical totals.
pub fn total_score(scores: &ScoreMatrix, matching: &Matching) -> f64 {
    debug_assert_eq!(scores.n(), matching.len());
    (0..matching.len()).map(|j| scores.get(j, matching.slot_of(j))).sum()
}

/// Ranks jobs by slot-averaged score, descending; the job with the k-th
/// largest score takes slot k. Ties go to the smaller job index.
pub fn gfp_rank(score_bar: &[f64]) -> Result<Matching> {
    let n = score_bar.len();
    if n == 0 {
        return Err(Error::InvalidInstance("cannot rank an empty score vector".into()));
    }
    if let Some(s) = score_bar.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInstance(format!("non-finite score {s}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        score_bar[b]
            .partial_cmp(&score_bar[a])
            .expect("scores validated finite")
            .then(a.cmp(&b))
    });
    let mut slots = vec![0; n];
    for (slot, &job) in order.iter().enumerate() {
        slots[job] = slot;
    }
    Matching::new(slots)
}

fn validate_scores(scores: &ScoreMatrix) -> Result<()> {
    if scores.n() == 0 {
        return Err(Error::InvalidInstance("empty score matrix".into()));
    }
    if !scores.is_finite() {
        return Err(Error::InvalidInstance("score matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Exact maximum-weight matching via the Hungarian method, O(n^3).
///
/// Maximization runs as minimization of `max_entry - score`. Among tied
/// optima the lexicographically smallest assignment array is returned, so
/// outputs are deterministic and comparable with [`match_brute_force`].
pub fn match_optimal(scores: &ScoreMatrix) -> Result<SolverReport> {
    validate_scores(scores)?;
    let n = scores.n();
    let big = scores.entries().fold(f64::NEG_INFINITY, f64::max);
    let costs = SquareMatrix::from_fn(n, |j, k| big - scores.get(j, k));

    let (mut assignment, mut u, mut v) = hungarian_min(&costs);
    let t_star = permutation_total(scores, &assignment);

    // Lexicographic refinement: for each job in turn, move it to the
    // smallest still-free slot that preserves the optimal total. Slots are
    // only candidates when their dual slack is (numerically) zero, so on
    // instances with a unique optimum this loop does no extra solves.
    let tol = 1e-9 * (1.0 + scores.max_abs());
    let mut slot_taken = vec![false; n];
    for j in 0..n {
        let cur = assignment[j];
        for k in 0..cur {
            if slot_taken[k] {
                continue;
            }
            if costs.get(j, k) - u[j] - v[k] > tol {
                continue; // strictly worse than the optimum
            }
            let rem_jobs: Vec<usize> = (j + 1..n).collect();
            let rem_slots: Vec<usize> =
                (0..n).filter(|&s| !slot_taken[s] && s != k).collect();
            let mut candidate = assignment.clone();
            candidate[j] = k;
            if !rem_jobs.is_empty() {
                let sub = SquareMatrix::from_fn(rem_jobs.len(), |r, c| {
                    costs.get(rem_jobs[r], rem_slots[c])
                });
                let (sub_assignment, sub_u, sub_v) = hungarian_min(&sub);
                for (r, &job) in rem_jobs.iter().enumerate() {
                    candidate[job] = rem_slots[sub_assignment[r]];
                }
                if permutation_total(scores, &candidate) == t_star {
                    assignment = candidate;
                    for (r, &job) in rem_jobs.iter().enumerate() {
                        u[job] = sub_u[r];
                    }
                    for (c, &slot) in rem_slots.iter().enumerate() {
                        v[slot] = sub_v[c];
                    }
                    break;
                }
            } else if permutation_total(scores, &candidate) == t_star {
                assignment = candidate;
                break;
            }
        }
        slot_taken[assignment[j]] = true;
    }

    let matching = Matching::new(assignment).expect("hungarian produced a permutation");
    Ok(SolverReport {
        total_score: total_score(scores, &matching),
        matching,
        solver: SolverKind::Hungarian,
        iterations: None,
    })
}

fn permutation_total(scores: &ScoreMatrix, assignment: &[usize]) -> f64 {
    (0..assignment.len()).map(|j| scores.get(j, assignment[j])).sum()
}

/// Dense Hungarian algorithm (minimization) with dual potentials.
///
/// Returns `(assignment, u, v)` where `assignment[row] = col` and the duals
/// satisfy `u[r] + v[c] <= cost[r][c]` with equality on matched edges.
fn hungarian_min(costs: &SquareMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = costs.n();
    let inf = f64::INFINITY;
    // 1-based internally; index 0 is the virtual root row/column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    (assignment, u[1..].to_vec(), v[1..].to_vec())
}

/// Cap for [`match_brute_force`]: n! permutations beyond this are refused.
pub const BRUTE_FORCE_MAX_N: usize = 10;

/// Exhaustive oracle: enumerates every permutation in lexicographic order
/// and keeps the first one attaining the maximal total, i.e. the same
/// tie-break as [`match_optimal`].
pub fn match_brute_force(scores: &ScoreMatrix) -> Result<SolverReport> {
    validate_scores(scores)?;
    let n = scores.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeLimit { n, max: BRUTE_FORCE_MAX_N });
    }

    fn recurse(
        scores: &ScoreMatrix,
        current: &mut Vec<usize>,
        used: &mut Vec<bool>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        let n = scores.n();
        if current.len() == n {
            let total = permutation_total(scores, current);
            let better = match best {
                None => true,
                Some((best_total, _)) => total > *best_total,
            };
            if better {
                *best = Some((total, current.clone()));
            }
            return;
        }
        for k in 0..n {
            if !used[k] {
                used[k] = true;
                current.push(k);
                recurse(scores, current, used, best);
                current.pop();
                used[k] = false;
            }
        }
    }

    let mut best = None;
    recurse(scores, &mut Vec::with_capacity(n), &mut vec![false; n], &mut best);
    let (_, assignment) = best.expect("at least one permutation exists");
    let matching = Matching::new(assignment).expect("enumeration yields permutations");
    Ok(SolverReport {
        total_score: total_score(scores, &matching),
        matching,
        solver: SolverKind::BruteForce,
        iterations: None,
    })
}

/// Default multiplier turning real-valued scores into integers for the
/// auction solver.
pub const DEFAULT_AUCTION_SCALE: f64 = 1e6;

/// Geometric epsilon schedule for [`match_auction_eps`] whose final value
/// satisfies the exact-termination condition `eps < 1/n` on scores scaled
/// by `scale`.
pub fn exactness_schedule(scores: &ScoreMatrix, scale: f64) -> Vec<f64> {
    let n = scores.n().max(1);
    let target = 1.0 / (n as f64 + 1.0);
    let mut eps = (scores.max_abs() * scale / 2.0).max(1.0);
    let mut schedule = Vec::new();
    while eps > target {
        schedule.push(eps);
        eps /= 4.0;
    }
    schedule.push(target * 0.5);
    schedule
}

/// Price-raising auction solver with epsilon scaling.
///
/// Scores are scaled by [`DEFAULT_AUCTION_SCALE`] and rounded to integers;
/// each epsilon phase keeps prices and restarts the assignment. When the
/// final epsilon is below `1/n` the integer rounding makes the result an
/// exact optimum of the scaled problem; otherwise it is within `n * eps`.
pub fn match_auction_eps(scores: &ScoreMatrix, eps_schedule: &[f64]) -> Result<SolverReport> {
    match_auction_eps_scaled(scores, eps_schedule, DEFAULT_AUCTION_SCALE)
}

/// [`match_auction_eps`] with an explicit integer-scaling factor. Epsilon
/// values are interpreted in scaled-score units.
pub fn match_auction_eps_scaled(
    scores: &ScoreMatrix,
    eps_schedule: &[f64],
    scale: f64,
) -> Result<SolverReport> {
    validate_scores(scores)?;
    if eps_schedule.is_empty() {
        return Err(Error::InvalidArgument("epsilon schedule is empty".into()));
    }
    if eps_schedule.iter().any(|e| !e.is_finite() || *e <= 0.0) {
        return Err(Error::InvalidArgument("epsilon values must be positive".into()));
    }
    if eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("epsilon schedule must be strictly decreasing".into()));
    }
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::InvalidArgument(format!("scale {scale} must be positive")));
    }

    let n = scores.n();
    let values = SquareMatrix::from_fn(n, |j, k| (scores.get(j, k) * scale).round());
    let mut prices = vec![0.0_f64; n];
    let mut job_slot: Vec<Option<usize>> = vec![None; n];
    let mut slot_job: Vec<Option<usize>> = vec![None; n];
    let mut iterations = 0u64;

    for &eps in eps_schedule {
        job_slot.fill(None);
        slot_job.fill(None);
        let mut pending: std::collections::VecDeque<usize> = (0..n).collect();
        while let Some(j) = pending.pop_front() {
            // Best and second-best net value for the bidding job.
            let mut best_slot = 0;
            let mut best = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for k in 0..n {
                let net = values.get(j, k) - prices[k];
                if net > best {
                    second = best;
                    best = net;
                    best_slot = k;
                } else if net > second {
                    second = net;
                }
            }
            let raise = if second.is_finite() { best - second + eps } else { eps };
            prices[best_slot] += raise;
            if let Some(evicted) = slot_job[best_slot] {
                job_slot[evicted] = None;
                pending.push_back(evicted);
            }
            slot_job[best_slot] = Some(j);
            job_slot[j] = Some(best_slot);
            iterations += 1;
        }
    }

    let assignment: Vec<usize> = job_slot
        .into_iter()
        .map(|s| s.expect("auction phase assigns every job"))
        .collect();
    let matching = Matching::new(assignment).expect("auction produced a permutation");
    Ok(SolverReport {
        total_score: total_score(scores, &matching),
        matching,
        solver: SolverKind::AuctionEps,
        iterations: Some(iterations),
    })
}
