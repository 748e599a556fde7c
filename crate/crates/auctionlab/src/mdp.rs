//! Discounted dynamic optimization of the seeker weight.
//!
//! The platform repeatedly picks a seeker weight; today's weight shifts
//! tomorrow's bids and relevance estimates. Modeled as a finite Markov
//! decision process: states discretize (bid, erelevance) snapshots, actions
//! are weight levels, and a stochastic kernel `Q(state, action)` drives the
//! transitions. Value iteration solves
//! `V(x) = max_a { Gain(x, a) + discount * E[V(x') | x, a] }`;
//! the kernel is estimated from transition data when it is not known.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Read;

use crate::allocation::match_optimal;
use crate::error::{Error, Result};
use crate::metrics::{relevance, revenue};
use crate::score::{score_position_aware, ScoreCombiner};
use crate::simulation::{sample_instance, MatrixDist, ScalarDist, SimulationConfig};

/// Tolerance for kernel rows summing to one.
pub const KERNEL_ROW_SUM_TOL: f64 = 1e-9;

/// A finite discounted MDP over weight actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    /// State labels; indices into these are used everywhere else.
    pub states: Vec<String>,
    /// The grid of seeker-weight levels the platform can set.
    pub actions: Vec<f64>,
    /// `gain[state][action]`: expected one-period payoff.
    pub gain: Vec<Vec<f64>>,
    /// `kernel[state][action][next_state]`: transition probabilities.
    pub kernel: Vec<Vec<Vec<f64>>>,
    /// Per-period discount, strictly below 1.
    pub discount: f64,
}

impl MdpModel {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.state_count();
        let a = self.action_count();
        if s == 0 || a == 0 {
            return Err(Error::InvalidArgument("model needs at least one state and action".into()));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::InvalidArgument(format!(
                "discount {} must lie in [0, 1)",
                self.discount
            )));
        }
        if self.gain.len() != s || self.gain.iter().any(|row| row.len() != a) {
            return Err(Error::InvalidArgument("gain table must be states x actions".into()));
        }
        if self.gain.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument("gain table has non-finite entries".into()));
        }
        if self.kernel.len() != s || self.kernel.iter().any(|per_action| per_action.len() != a) {
            return Err(Error::InvalidArgument("kernel must be states x actions x states".into()));
        }
        for (x, per_action) in self.kernel.iter().enumerate() {
            for (action, row) in per_action.iter().enumerate() {
                if row.len() != s {
                    return Err(Error::InvalidArgument(format!(
                        "kernel row ({x}, {action}) has {} entries, expected {s}",
                        row.len()
                    )));
                }
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "kernel row ({x}, {action}) has negative or non-finite entries"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > KERNEL_ROW_SUM_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "kernel row ({x}, {action}) sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(state_count: usize) -> Self {
        ValueFunction { values: vec![0.0; state_count] }
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Markov strategy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
}

/// An observed trajectory of transitions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Episode {
    pub transitions: Vec<Transition>,
}

/// One sweep of the Bellman optimality operator.
///
/// `v'(x) = max_a { gain[x][a] + discount * sum_x' kernel[x][a][x'] * v(x') }`,
/// with argmax ties resolved to the smallest action index. The model must
/// satisfy [`MdpModel::validate`].
pub fn bellman_backup(model: &MdpModel, value: &ValueFunction) -> (ValueFunction, Policy) {
    assert_eq!(
        value.values.len(),
        model.state_count(),
        "value function does not match the model's state count"
    );
    let mut next = Vec::with_capacity(model.state_count());
    let mut actions = Vec::with_capacity(model.state_count());
    for x in 0..model.state_count() {
        let mut best = f64::NEG_INFINITY;
        let mut best_action = 0;
        for a in 0..model.action_count() {
            let continuation: f64 = model.kernel[x][a]
                .iter()
                .zip(&value.values)
                .map(|(p, v)| p * v)
                .sum();
            let q = model.gain[x][a] + model.discount * continuation;
            if q > best {
                best = q;
                best_action = a;
            }
        }
        next.push(best);
        actions.push(best_action);
    }
    (ValueFunction { values: next }, Policy { actions })
}

/// Converged value function with its greedy policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub value: ValueFunction,
    pub policy: Policy,
    /// Number of Bellman backups performed.
    pub iterations: usize,
    /// Last sup-norm change between successive iterates.
    pub residual: f64,
}

/// Iterates [`bellman_backup`] from the zero function.
///
/// Stops once the sup-norm change `r` between iterates — or the fixed-point
/// gap `discount * r / (1 - discount)` it implies — drops to `tolerance`,
/// so the returned value function solves the Bellman equation to within
/// `tolerance / (1 - discount)`.
pub fn value_iteration(
    model: &MdpModel,
    tolerance: f64,
    max_iters: usize,
) -> Result<Convergence> {
    model.validate()?;
    if !tolerance.is_finite() || tolerance <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tolerance} must be positive")));
    }
    let gap_factor = model.discount / (1.0 - model.discount);
    let mut value = ValueFunction::zeros(model.state_count());
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iters {
        let (next, policy) = bellman_backup(model, &value);
        residual = next.sup_distance(&value);
        value = next;
        if residual <= tolerance || residual * gap_factor <= tolerance {
            return Ok(Convergence { value, policy, iterations: iteration, residual });
        }
    }
    Err(Error::NonConvergence { iterations: max_iters, residual })
}

/// Empirical transition kernel plus the (state, action) pairs never seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub kernel: Vec<Vec<Vec<f64>>>,
    /// Pairs with zero observations; their rows fall back to uniform.
    pub unvisited: Vec<(usize, usize)>,
}

/// Estimates `Q(x, a)(x') = (count(x, a, x') + lambda) / (count(x, a) + lambda * S)`
/// from transition data. With `lambda = 0`, unvisited pairs get a uniform
/// row and are reported in `unvisited`.
pub fn estimate_kernel(
    episodes: &[Episode],
    state_count: usize,
    action_count: usize,
    smoothing: f64,
) -> Result<KernelEstimate> {
    if state_count == 0 || action_count == 0 {
        return Err(Error::InvalidArgument("state and action counts must be positive".into()));
    }
    if !smoothing.is_finite() || smoothing < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "smoothing {smoothing} must be finite and >= 0"
        )));
    }
    let mut counts = vec![vec![vec![0u64; state_count]; action_count]; state_count];
    for (e, episode) in episodes.iter().enumerate() {
        for t in &episode.transitions {
            if t.state >= state_count || t.action >= action_count || t.next_state >= state_count {
                return Err(Error::InvalidArgument(format!(
                    "episode {e}: transition ({}, {}, {}) out of range for {state_count} states \
                     and {action_count} actions",
                    t.state, t.action, t.next_state
                )));
            }
            counts[t.state][t.action][t.next_state] += 1;
        }
    }

    let mut kernel = vec![vec![vec![0.0; state_count]; action_count]; state_count];
    let mut unvisited = Vec::new();
    for x in 0..state_count {
        for a in 0..action_count {
            let total: u64 = counts[x][a].iter().sum();
            if total == 0 {
                unvisited.push((x, a));
            }
            let denom = total as f64 + smoothing * state_count as f64;
            for x_next in 0..state_count {
                kernel[x][a][x_next] = if denom > 0.0 {
                    (counts[x][a][x_next] as f64 + smoothing) / denom
                } else {
                    1.0 / state_count as f64
                };
            }
        }
    }
    Ok(KernelEstimate { kernel, unvisited })
}

/// Everything needed to plan except the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSkeleton {
    pub states: Vec<String>,
    pub actions: Vec<f64>,
    pub gain: Vec<Vec<f64>>,
    pub discount: f64,
    /// Additive smoothing used when estimating the kernel.
    #[serde(default)]
    pub smoothing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub model: MdpModel,
    pub convergence: Convergence,
    pub unvisited: Vec<(usize, usize)>,
}

/// Model-based batch learning: estimate the kernel from `episodes`, then
/// plan on the estimated model with value iteration.
pub fn learn_and_plan(
    episodes: &[Episode],
    skeleton: &ModelSkeleton,
    tolerance: f64,
    max_iters: usize,
) -> Result<Plan> {
    let estimate = estimate_kernel(
        episodes,
        skeleton.states.len(),
        skeleton.actions.len(),
        skeleton.smoothing,
    )?;
    let model = MdpModel {
        states: skeleton.states.clone(),
        actions: skeleton.actions.clone(),
        gain: skeleton.gain.clone(),
        kernel: estimate.kernel,
        discount: skeleton.discount,
    };
    let convergence = value_iteration(&model, tolerance, max_iters)?;
    Ok(Plan { model, convergence, unvisited: estimate.unvisited })
}

/// Bin edges for turning a (bids, erelevances) snapshot into a state index.
///
/// Bins are left-closed over the mean bid and mean erelevance; values
/// outside the covered range clamp to the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Strictly increasing bid-bin edges, length = bid bins + 1.
    pub bid_edges: Vec<f64>,
    /// Strictly increasing erelevance-bin edges, length = erelevance bins + 1.
    pub erelevance_edges: Vec<f64>,
}

fn check_edges(edges: &[f64], what: &str) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidArgument(format!("{what} needs at least two edges")));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "{what} edges must be finite and strictly increasing"
        )));
    }
    Ok(())
}

impl GridSpec {
    /// Uniform bins over explicit ranges.
    pub fn uniform(
        bid_range: (f64, f64),
        bid_bins: usize,
        erelevance_range: (f64, f64),
        erelevance_bins: usize,
    ) -> Result<Self> {
        let edges = |(lo, hi): (f64, f64), bins: usize| -> Vec<f64> {
            (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins.max(1) as f64).collect()
        };
        let grid = GridSpec {
            bid_edges: edges(bid_range, bid_bins.max(1)),
            erelevance_edges: edges(erelevance_range, erelevance_bins.max(1)),
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Quantile bins from observed feature samples.
    pub fn from_quantiles(
        bid_samples: &[f64],
        bid_bins: usize,
        erelevance_samples: &[f64],
        erelevance_bins: usize,
    ) -> Result<Self> {
        let edges = |samples: &[f64], bins: usize| -> Result<Vec<f64>> {
            if samples.len() < 2 {
                return Err(Error::InvalidArgument(
                    "need at least two samples for quantile edges".into(),
                ));
            }
            let mut sorted = samples.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
            let q = |p: f64| -> f64 {
                let h = (sorted.len() as f64 - 1.0) * p;
                let lo = h.floor() as usize;
                let hi = h.ceil() as usize;
                sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
            };
            Ok((0..=bins.max(1)).map(|i| q(i as f64 / bins.max(1) as f64)).collect())
        };
        let grid = GridSpec {
            bid_edges: edges(bid_samples, bid_bins)?,
            erelevance_edges: edges(erelevance_samples, erelevance_bins)?,
        };
        grid.validate().map_err(|_| {
            Error::InvalidArgument(
                "quantile edges are not strictly increasing; the samples have too many ties \
                 for the requested bin count"
                    .into(),
            )
        })?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        check_edges(&self.bid_edges, "bid")?;
        check_edges(&self.erelevance_edges, "erelevance")
    }

    pub fn bid_bins(&self) -> usize {
        self.bid_edges.len() - 1
    }

    pub fn erelevance_bins(&self) -> usize {
        self.erelevance_edges.len() - 1
    }

    pub fn state_count(&self) -> usize {
        self.bid_bins() * self.erelevance_bins()
    }

    /// Short labels like `b1_e0`, in state-index order.
    pub fn state_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.state_count());
        for b in 0..self.bid_bins() {
            for e in 0..self.erelevance_bins() {
                labels.push(format!("b{b}_e{e}"));
            }
        }
        labels
    }

    fn cell_centers(&self, state: usize) -> (f64, f64) {
        let e_bins = self.erelevance_bins();
        let (b, e) = (state / e_bins, state % e_bins);
        (
            0.5 * (self.bid_edges[b] + self.bid_edges[b + 1]),
            0.5 * (self.erelevance_edges[e] + self.erelevance_edges[e + 1]),
        )
    }
}

/// `(bin, clamped)` for one feature value against one edge array.
fn bin_of(value: f64, edges: &[f64]) -> (usize, bool) {
    let bins = edges.len() - 1;
    if value < edges[0] {
        return (0, true);
    }
    if value > edges[bins] {
        return (bins - 1, true);
    }
    // partition_point gives the count of edges <= value; the value sits in
    // the bin below that edge. The top edge closes the last bin.
    let idx = edges.partition_point(|e| *e <= value);
    (idx.saturating_sub(1).min(bins - 1), false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscretizedState {
    pub index: usize,
    /// True when a feature fell outside the grid and was clamped to an
    /// edge bin.
    pub clamped: bool,
}

/// Maps an instance snapshot to a state index via (mean bid, mean
/// erelevance). Left-closed bins; out-of-range values clamp to edge bins.
pub fn discretize_state(bids: &[f64], erelevances: &[f64], grid: &GridSpec) -> Result<DiscretizedState> {
    grid.validate()?;
    if bids.is_empty() || erelevances.is_empty() {
        return Err(Error::InvalidArgument("bids and erelevances must be non-empty".into()));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (bid_bin, bid_clamped) = bin_of(mean(bids), &grid.bid_edges);
    let (erel_bin, erel_clamped) = bin_of(mean(erelevances), &grid.erelevance_edges);
    Ok(DiscretizedState {
        index: bid_bin * grid.erelevance_bins() + erel_bin,
        clamped: bid_clamped || erel_clamped,
    })
}

/// What one period pays the platform in [`simulated_gain_table`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    /// `revenue + weight * relevance`. Note this is nondecreasing in the
    /// weight action by construction, so on its own it never penalizes
    /// weighting relevance up; the tension has to come from the kernel.
    #[default]
    RevenuePlusWeightedRelevance,
    /// `revenue` only: weighting relevance up costs current gain, and pays
    /// off only through the transition dynamics.
    RevenueOnly,
}

/// Monte Carlo settings for [`simulated_gain_table`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSimulation {
    /// Jobs per representative auction.
    pub depth: usize,
    pub samples_per_cell: usize,
    pub seed: u64,
    #[serde(default)]
    pub gain_kind: GainKind,
}

impl Default for GainSimulation {
    fn default() -> Self {
        GainSimulation {
            depth: 5,
            samples_per_cell: 64,
            seed: 0,
            gain_kind: GainKind::default(),
        }
    }
}

fn jitter_around(center: f64) -> ScalarDist {
    if center > 0.0 {
        ScalarDist::Uniform { lo: 0.9 * center, hi: 1.1 * center }
    } else {
        ScalarDist::Constant { value: 0.0 }
    }
}

/// Default gain table: expected one-period revenue plus weighted relevance,
/// measured by running the matching mechanism on representative instances
/// drawn around each state's cell center with the action as the weight.
pub fn simulated_gain_table(
    grid: &GridSpec,
    actions: &[f64],
    sim: &GainSimulation,
) -> Result<Vec<Vec<f64>>> {
    grid.validate()?;
    if actions.is_empty() {
        return Err(Error::InvalidArgument("need at least one action".into()));
    }
    if actions.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("weight actions must be finite and >= 0".into()));
    }
    if sim.depth == 0 || sim.samples_per_cell == 0 {
        return Err(Error::InvalidArgument("depth and samples_per_cell must be positive".into()));
    }

    let mut table = Vec::with_capacity(grid.state_count());
    for state in 0..grid.state_count() {
        let (bid_center, erel_center) = grid.cell_centers(state);
        let mut row = Vec::with_capacity(actions.len());
        for (action_index, &weight) in actions.iter().enumerate() {
            let config = SimulationConfig {
                seeker_count: 1,
                depth_grid: vec![sim.depth],
                seed: sim.seed,
                bid_dist: jitter_around(bid_center),
                pctr_dist: MatrixDist::PositionalDecay {
                    quality: ScalarDist::Uniform { lo: 0.2, hi: 1.0 },
                    noise: ScalarDist::Uniform { lo: 0.8, hi: 1.2 },
                },
                erelevance_dist: MatrixDist::PositionalDecay {
                    quality: jitter_around(erel_center.min(1.0)),
                    noise: ScalarDist::Uniform { lo: 0.8, hi: 1.2 },
                },
                weight_dist: ScalarDist::Constant { value: weight },
                combiner: ScoreCombiner::Additive,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
            rng.set_stream(((state as u64) << 20) | action_index as u64);
            let mut total = 0.0;
            for _ in 0..sim.samples_per_cell {
                let instance = sample_instance(&config, sim.depth, "gain", &mut rng)?;
                let scores = score_position_aware(&instance, config.combiner)?;
                let matching = match_optimal(&scores)?.matching;
                total += match sim.gain_kind {
                    GainKind::RevenuePlusWeightedRelevance => {
                        revenue(&instance, &matching)?
                            + weight * relevance(&instance, &matching)?
                    }
                    GainKind::RevenueOnly => revenue(&instance, &matching)?,
                };
            }
            row.push(total / sim.samples_per_cell as f64);
        }
        table.push(row);
    }
    Ok(table)
}

/// Reads transitions from CSV with header `state,action,next_state`.
/// All rows form one batch episode.
pub fn read_episodes_csv(reader: impl Read) -> Result<Vec<Episode>> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let mut transitions = Vec::new();
    for record in csv_reader.deserialize::<Transition>() {
        transitions.push(record?);
    }
    Ok(vec![Episode { transitions }])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deterministic_row(state_count: usize, target: usize) -> Vec<f64> {
        let mut row = vec![0.0; state_count];
        row[target] = 1.0;
        row
    }

    /// Two states, two actions, deterministic moves:
    /// action 0 always goes to state 0, action 1 always to state 1.
    fn two_state_model(discount: f64) -> MdpModel {
        MdpModel {
            states: vec!["lo".into(), "hi".into()],
            actions: vec![0.5, 2.0],
            gain: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            kernel: vec![
                vec![deterministic_row(2, 0), deterministic_row(2, 1)],
                vec![deterministic_row(2, 0), deterministic_row(2, 1)],
            ],
            discount,
        }
    }

    #[test]
    fn myopic_backup_with_zero_discount() {
        let model = two_state_model(0.0);
        let v = ValueFunction { values: vec![100.0, 100.0] };
        let (next, policy) = bellman_backup(&model, &v);
        assert_eq!(next.values, vec![1.0, 2.0]);
        assert_eq!(policy.actions, vec![0, 1]);
    }

    #[test]
    fn single_backup_from_zero() {
        let model = MdpModel {
            states: vec!["only".into()],
            actions: vec![1.0],
            gain: vec![vec![1.0]],
            kernel: vec![vec![vec![1.0]]],
            discount: 0.5,
        };
        let (next, _) = bellman_backup(&model, &ValueFunction::zeros(1));
        assert_eq!(next.values, vec![1.0]);
    }

    #[test]
    fn hand_computed_two_state_backup() {
        // v = (3, 5), discount 0.9:
        //   state lo: a0 -> 1 + 0.9*3 = 3.7, a1 -> 0 + 0.9*5 = 4.5
        //   state hi: a0 -> 0 + 0.9*3 = 2.7, a1 -> 2 + 0.9*5 = 6.5
        let model = two_state_model(0.9);
        let v = ValueFunction { values: vec![3.0, 5.0] };
        let (next, policy) = bellman_backup(&model, &v);
        assert!((next.values[0] - 4.5).abs() < 1e-12);
        assert!((next.values[1] - 6.5).abs() < 1e-12);
        assert_eq!(policy.actions, vec![1, 1]);
    }

    #[test]
    fn backup_breaks_ties_toward_smaller_action() {
        let model = MdpModel {
            states: vec!["x".into()],
            actions: vec![1.0, 2.0],
            gain: vec![vec![3.0, 3.0]],
            kernel: vec![vec![vec![1.0], vec![1.0]]],
            discount: 0.5,
        };
        let (_, policy) = bellman_backup(&model, &ValueFunction::zeros(1));
        assert_eq!(policy.actions, vec![0]);
    }

    #[test]
    fn geometric_series_value() {
        let model = MdpModel {
            states: vec!["only".into()],
            actions: vec![1.0],
            gain: vec![vec![1.0]],
            kernel: vec![vec![vec![1.0]]],
            discount: 0.5,
        };
        let result = value_iteration(&model, 1e-9, 10_000).unwrap();
        assert!((result.value.values[0] - 2.0).abs() < 1e-8);
        assert_eq!(result.policy.actions, vec![0]);
    }

    #[test]
    fn zero_discount_converges_in_one_iteration() {
        let model = two_state_model(0.0);
        let result = value_iteration(&model, 1e-9, 100).unwrap();
        assert_eq!(result.iterations, 1);
        assert_eq!(result.value.values, vec![1.0, 2.0]);
        assert_eq!(result.policy.actions, vec![0, 1]);
    }

    #[test]
    fn value_iteration_matches_truncated_recursion() {
        let model = MdpModel {
            states: vec!["a".into(), "b".into()],
            actions: vec![0.5, 2.0],
            gain: vec![vec![1.0, 0.2], vec![0.4, 1.5]],
            kernel: vec![
                vec![vec![0.7, 0.3], vec![0.1, 0.9]],
                vec![vec![0.5, 0.5], vec![0.8, 0.2]],
            ],
            discount: 0.9,
        };
        // Independent 200-step finite-horizon recursion over the raw tables.
        let mut v = vec![0.0_f64; 2];
        for _ in 0..200 {
            let mut next = vec![f64::NEG_INFINITY; 2];
            for x in 0..2 {
                for a in 0..2 {
                    let mut q = model.gain[x][a];
                    for x2 in 0..2 {
                        q += model.discount * model.kernel[x][a][x2] * v[x2];
                    }
                    next[x] = next[x].max(q);
                }
            }
            v = next;
        }
        let result = value_iteration(&model, 1e-10, 100_000).unwrap();
        for x in 0..2 {
            assert!((result.value.values[x] - v[x]).abs() < 1e-6);
        }
    }

    #[test]
    fn non_convergence_carries_the_residual() {
        let model = two_state_model(0.99);
        let err = value_iteration(&model, 1e-12, 3).unwrap_err();
        match err {
            Error::NonConvergence { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn kernel_rows_are_frequency_estimates() {
        let episode = Episode {
            transitions: vec![
                Transition { state: 0, action: 0, next_state: 0 },
                Transition { state: 0, action: 0, next_state: 1 },
                Transition { state: 0, action: 0, next_state: 1 },
            ],
        };
        let estimate = estimate_kernel(&[episode.clone()], 2, 1, 0.0).unwrap();
        assert!((estimate.kernel[0][0][0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((estimate.kernel[0][0][1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(estimate.unvisited, vec![(1, 0)]);

        let smoothed = estimate_kernel(&[episode], 2, 1, 1.0).unwrap();
        assert!((smoothed.kernel[0][0][0] - 0.4).abs() < 1e-12);
        assert!((smoothed.kernel[0][0][1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_episodes_give_uniform_rows() {
        let estimate = estimate_kernel(&[], 3, 2, 1.0).unwrap();
        for x in 0..3 {
            for a in 0..2 {
                for p in &estimate.kernel[x][a] {
                    assert!((p - 1.0 / 3.0).abs() < 1e-12);
                }
            }
        }
        assert_eq!(estimate.unvisited.len(), 6);
    }

    #[test]
    fn out_of_range_transition_is_rejected() {
        let episode = Episode {
            transitions: vec![Transition { state: 0, action: 5, next_state: 0 }],
        };
        assert!(estimate_kernel(&[episode], 2, 2, 0.0).is_err());
    }

    #[test]
    fn learn_and_plan_recovers_a_deterministic_kernel() {
        // One pass over every (state, action) pair pins the kernel exactly.
        let transitions = vec![
            Transition { state: 0, action: 0, next_state: 0 },
            Transition { state: 0, action: 1, next_state: 1 },
            Transition { state: 1, action: 0, next_state: 0 },
            Transition { state: 1, action: 1, next_state: 1 },
        ];
        let skeleton = ModelSkeleton {
            states: vec!["lo".into(), "hi".into()],
            actions: vec![0.5, 2.0],
            gain: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            discount: 0.9,
            smoothing: 0.0,
        };
        let plan = learn_and_plan(&[Episode { transitions }], &skeleton, 1e-9, 100_000).unwrap();
        assert!(plan.unvisited.is_empty());
        assert_eq!(plan.model.kernel[0][1], vec![0.0, 1.0]);
        // staying in `hi` forever earns 2 per period: V(hi) = 2 / (1 - 0.9)
        assert!((plan.convergence.value.values[1] - 20.0).abs() < 1e-6);
        assert_eq!(plan.convergence.policy.actions, vec![1, 1]);
    }

    #[test]
    fn no_episodes_plan_falls_back_to_uniform_kernel() {
        let skeleton = ModelSkeleton {
            states: vec!["lo".into(), "hi".into()],
            actions: vec![1.0],
            gain: vec![vec![1.0], vec![2.0]],
            discount: 0.5,
            smoothing: 0.0,
        };
        let plan = learn_and_plan(&[], &skeleton, 1e-9, 10_000).unwrap();
        assert_eq!(plan.unvisited.len(), 2);
        for row in &plan.model.kernel[0] {
            assert!((row[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_respects_left_closed_bins() {
        let grid = GridSpec::uniform((0.0, 1.0), 2, (0.0, 1.0), 2).unwrap();
        // value exactly on a lower edge lands in that bin
        let state = discretize_state(&[0.5], &[0.0], &grid).unwrap();
        assert_eq!(state.index, 1 * 2 + 0);
        assert!(!state.clamped);

        // 0.75 in two uniform bins over [0, 1] -> bin 1
        let state = discretize_state(&[0.75], &[0.75], &grid).unwrap();
        assert_eq!(state.index, 1 * 2 + 1);

        // top edge closes the last bin
        let state = discretize_state(&[1.0], &[1.0], &grid).unwrap();
        assert_eq!(state.index, 3);
        assert!(!state.clamped);
    }

    #[test]
    fn discretize_clamps_out_of_range_inputs() {
        let grid = GridSpec::uniform((0.0, 1.0), 2, (0.0, 1.0), 2).unwrap();
        let above = discretize_state(&[5.0], &[0.2], &grid).unwrap();
        assert_eq!(above.index, 1 * 2 + 0);
        assert!(above.clamped);

        let below = discretize_state(&[-1.0], &[0.2], &grid).unwrap();
        assert_eq!(below.index, 0);
        assert!(below.clamped);
    }

    #[test]
    fn quantile_grid_covers_the_samples() {
        let bids: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let erels: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let grid = GridSpec::from_quantiles(&bids, 4, &erels, 2).unwrap();
        assert_eq!(grid.bid_bins(), 4);
        assert_eq!(grid.state_count(), 8);
        assert_eq!(grid.bid_edges[0], 0.0);
        assert_eq!(*grid.bid_edges.last().unwrap(), 99.0);

        let constant = vec![1.0; 10];
        assert!(GridSpec::from_quantiles(&constant, 2, &erels, 2).is_err());
    }

    #[test]
    fn simulated_gain_is_finite_and_deterministic() {
        let grid = GridSpec::uniform((0.5, 2.0), 2, (0.2, 1.0), 2).unwrap();
        let actions = [0.5, 1.0, 2.0];
        let sim = GainSimulation { depth: 3, samples_per_cell: 8, seed: 7, ..Default::default() };
        let a = simulated_gain_table(&grid, &actions, &sim).unwrap();
        let b = simulated_gain_table(&grid, &actions, &sim).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        for row in &a {
            assert_eq!(row.len(), 3);
            for g in row {
                assert!(g.is_finite() && *g > 0.0);
            }
        }
    }

    #[test]
    fn episodes_csv_reads_transitions() {
        let text = "state,action,next_state\n0,1,1\n1,0,0\n";
        let episodes = read_episodes_csv(text.as_bytes()).unwrap();
        assert_eq!(episodes.len(), 1);
        assert_eq!(episodes[0].transitions.len(), 2);
        assert_eq!(episodes[0].transitions[1], Transition { state: 1, action: 0, next_state: 0 });
    }

    #[test]
    fn invalid_models_are_rejected() {
        let mut model = two_state_model(0.9);
        model.discount = 1.0;
        assert!(model.validate().is_err());

        let mut model = two_state_model(0.9);
        model.kernel[0][0] = vec![0.6, 0.6];
        assert!(model.validate().is_err());

        let mut model = two_state_model(0.9);
        model.gain[1][1] = f64::NAN;
        assert!(model.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        prop_compose! {
            fn arb_model(max_states: usize, max_actions: usize)(
                s in 1..=max_states,
                a in 1..=max_actions,
            )(
                gain in proptest::collection::vec(-5.0..5.0f64, s * a),
                raw_kernel in proptest::collection::vec(0.01..1.0f64, s * a * s),
                discount in 0.0..0.95f64,
                s in Just(s),
                a in Just(a),
            ) -> MdpModel {
                let kernel: Vec<Vec<Vec<f64>>> = (0..s).map(|x| {
                    (0..a).map(|act| {
                        let start = (x * a + act) * s;
                        let row = &raw_kernel[start..start + s];
                        let total: f64 = row.iter().sum();
                        row.iter().map(|p| p / total).collect()
                    }).collect()
                }).collect();
                MdpModel {
                    states: (0..s).map(|i| format!("s{i}")).collect(),
                    actions: (0..a).map(|i| i as f64).collect(),
                    gain: (0..s).map(|x| gain[x * a..(x + 1) * a].to_vec()).collect(),
                    kernel,
                    discount,
                }
            }
        }

        proptest! {
            /// One backup contracts distances by at least the discount.
            #[test]
            fn backup_is_a_contraction(
                model in arb_model(6, 3),
                u_raw in proptest::collection::vec(-10.0..10.0f64, 6),
                v_raw in proptest::collection::vec(-10.0..10.0f64, 6),
            ) {
                let s = model.state_count();
                let u = ValueFunction { values: u_raw[..s].to_vec() };
                let v = ValueFunction { values: v_raw[..s].to_vec() };
                let (tu, _) = bellman_backup(&model, &u);
                let (tv, _) = bellman_backup(&model, &v);
                let before = u.sup_distance(&v);
                let after = tu.sup_distance(&tv);
                prop_assert!(after <= model.discount * before + 1e-12);
            }

            /// From zero with nonnegative gains, iterates grow pointwise.
            #[test]
            fn monotone_from_zero_with_nonnegative_gains(mut model in arb_model(5, 3)) {
                for row in &mut model.gain {
                    for g in row {
                        *g = g.abs();
                    }
                }
                let mut v = ValueFunction::zeros(model.state_count());
                for _ in 0..20 {
                    let (next, _) = bellman_backup(&model, &v);
                    for x in 0..model.state_count() {
                        prop_assert!(next.values[x] >= v.values[x] - 1e-12);
                    }
                    v = next;
                }
            }

            /// The converged value is bounded by max |gain| / (1 - discount),
            /// and one more backup moves it by at most the tolerance while
            /// keeping the greedy policy.
            #[test]
            fn converged_value_is_bounded_and_stable(model in arb_model(5, 3)) {
                let tol = 1e-10;
                let result = value_iteration(&model, tol, 200_000).unwrap();
                let bound = model.gain.iter().flatten().fold(0.0_f64, |m, g| m.max(g.abs()))
                    / (1.0 - model.discount);
                for v in &result.value.values {
                    prop_assert!(v.abs() <= bound + 1e-9);
                }
                let (again, policy) = bellman_backup(&model, &result.value);
                prop_assert!(again.sup_distance(&result.value) <= tol + 1e-12);
                prop_assert_eq!(policy, result.policy);
            }
        }
    }
}
