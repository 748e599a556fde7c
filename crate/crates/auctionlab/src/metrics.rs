//! Revenue and relevance of a matching, and population-level aggregation.
//!
//! Pricing follows a pay-for-performance model: by default a poster pays
//! their bid per click, so expected revenue of a matching is
//! `sum_j bid[j] * pctr[j][slot_of(j)]`. Realized relevance of the displayed
//! slate is `sum_j erelevance[j][slot_of(j)]`; positional discounting already
//! lives inside the position-aware `erelevance` entries.

use serde::{Deserialize, Serialize};

use crate::allocation::Matching;
use crate::error::{Error, Result};
use crate::score::{QueryInstance, SlotAveragedView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Gfp,
    Vcg,
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Gfp => "gfp",
            Mechanism::Vcg => "vcg",
        })
    }
}

/// Which performance event triggers payment of the bid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentEvent {
    /// Pay the bid per click: expected payment is `bid * pctr` at the
    /// assigned slot.
    #[default]
    PerClick,
    /// Pay the bid per impression, i.e. unconditionally once displayed.
    PerImpression,
}

/// Realized outcome of running one mechanism on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub matching: Matching,
    pub revenue: f64,
    pub relevance: f64,
    pub mechanism: Mechanism,
}

/// Both mechanisms evaluated on the same sampled instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismPair {
    pub gfp: AllocationOutcome,
    pub vcg: AllocationOutcome,
}

/// Population means of revenue and relevance for both mechanisms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub seeker_count: usize,
    pub rev_gfp: f64,
    pub rev_vcg: f64,
    pub rel_gfp: f64,
    pub rel_vcg: f64,
}

fn check_dims(instance: &QueryInstance, matching: &Matching) -> Result<()> {
    instance.validate_dims()?;
    if matching.len() != instance.n() {
        return Err(Error::InvalidArgument(format!(
            "matching covers {} jobs but the instance has {}",
            matching.len(),
            instance.n()
        )));
    }
    Ok(())
}

/// Expected per-click revenue of a matching (first-price payment).
pub fn revenue(instance: &QueryInstance, matching: &Matching) -> Result<f64> {
    revenue_for_event(instance, matching, PaymentEvent::PerClick)
}

pub fn revenue_for_event(
    instance: &QueryInstance,
    matching: &Matching,
    event: PaymentEvent,
) -> Result<f64> {
    check_dims(instance, matching)?;
    let total = (0..instance.n())
        .map(|j| match event {
            PaymentEvent::PerClick => {
                instance.bids[j] * instance.pctr.get(j, matching.slot_of(j))
            }
            PaymentEvent::PerImpression => instance.bids[j],
        })
        .sum();
    Ok(total)
}

/// Total position-aware relevance of the displayed slate.
pub fn relevance(instance: &QueryInstance, matching: &Matching) -> Result<f64> {
    check_dims(instance, matching)?;
    Ok((0..instance.n()).map(|j| instance.erelevance.get(j, matching.slot_of(j))).sum())
}

/// Log-discounted slate relevance: slot-averaged relevance of the job in
/// slot k, discounted by `1 / log2(k + 2)`. A rank-style companion to the
/// raw sum for calibration inputs.
pub fn discounted_relevance(view: &SlotAveragedView, matching: &Matching) -> Result<f64> {
    let n = view.erelevance_bar.len();
    if matching.len() != n {
        return Err(Error::InvalidArgument(format!(
            "matching covers {} jobs but the view has {n}",
            matching.len()
        )));
    }
    let job_in_slot = matching.job_in_slot();
    Ok((0..n)
        .map(|k| view.erelevance_bar[job_in_slot[k]] / (k as f64 + 2.0).log2())
        .sum())
}

/// Means of per-seeker revenue and relevance over the population.
pub fn aggregate(pairs: &[MechanismPair]) -> Result<PopulationSummary> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate zero outcomes".into()));
    }
    let count = pairs.len() as f64;
    Ok(PopulationSummary {
        seeker_count: pairs.len(),
        rev_gfp: pairs.iter().map(|p| p.gfp.revenue).sum::<f64>() / count,
        rev_vcg: pairs.iter().map(|p| p.vcg.revenue).sum::<f64>() / count,
        rel_gfp: pairs.iter().map(|p| p.gfp.relevance).sum::<f64>() / count,
        rel_vcg: pairs.iter().map(|p| p.vcg.relevance).sum::<f64>() / count,
    })
}
