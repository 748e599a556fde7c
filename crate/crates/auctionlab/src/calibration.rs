//! Power-law calibration of the seeker weight.
//!
//! Models segment relevance as `Rel_g = z_g * w^alpha`: one elasticity
//! `alpha` shared across segments, one efficiency `z_g` per segment. Fitting
//! is ordinary least squares on the log scale with per-segment intercepts
//! (fixed effects). The model makes a falsifiable prediction: the relative
//! lift from changing `w` depends only on the weight ratio and `alpha`,
//! never on the segment's baseline relevance.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    Treatment,
}

/// One measured (weight, relevance) point for a seeker segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentObservation {
    pub segment_id: String,
    pub seeker_weight: f64,
    pub relevance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
}

/// Result of the log-log fixed-effects fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Elasticity of relevance with respect to the seeker weight.
    pub alpha: f64,
    /// Standard error of `alpha` from the within regression.
    pub alpha_se: f64,
    /// Per-segment efficiency multipliers.
    pub z: BTreeMap<String, f64>,
    /// Fit quality on the log scale.
    pub r_squared: f64,
    pub n_obs: usize,
    /// The model is stated for elasticities in (0, 1); a fit outside that
    /// interval is reported, not rejected, and this flag records it.
    pub alpha_in_domain: bool,
}

impl PowerLawFit {
    /// Large-sample 95% confidence interval (normal critical value 1.96).
    pub fn alpha_ci95(&self) -> (f64, f64) {
        (self.alpha - 1.96 * self.alpha_se, self.alpha + 1.96 * self.alpha_se)
    }
}

fn validate_observations(observations: &[SegmentObservation]) -> Result<()> {
    if observations.len() < 2 {
        return Err(Error::Unidentifiable(format!(
            "need at least 2 observations, got {}",
            observations.len()
        )));
    }
    for obs in observations {
        if !obs.seeker_weight.is_finite() || obs.seeker_weight <= 0.0 {
            return Err(Error::Domain(format!(
                "segment {}: seeker weight {} must be positive",
                obs.segment_id, obs.seeker_weight
            )));
        }
        if !obs.relevance.is_finite() || obs.relevance <= 0.0 {
            return Err(Error::Domain(format!(
                "segment {}: relevance {} must be positive for the log transform",
                obs.segment_id, obs.relevance
            )));
        }
    }
    Ok(())
}

fn group_logs(observations: &[SegmentObservation]) -> BTreeMap<&str, Vec<(f64, f64)>> {
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for obs in observations {
        groups
            .entry(obs.segment_id.as_str())
            .or_default()
            .push((obs.seeker_weight.ln(), obs.relevance.ln()));
    }
    groups
}

/// Fits `log Rel = log z_g + alpha * log w` by OLS with per-segment
/// intercepts and one shared slope.
pub fn fit_power_law(observations: &[SegmentObservation]) -> Result<PowerLawFit> {
    validate_observations(observations)?;
    let groups = group_logs(observations);

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut group_means: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (segment, points) in &groups {
        let count = points.len() as f64;
        let x_bar = points.iter().map(|(x, _)| x).sum::<f64>() / count;
        let y_bar = points.iter().map(|(_, y)| y).sum::<f64>() / count;
        group_means.insert(segment, (x_bar, y_bar));
        for (x, y) in points {
            sxx += (x - x_bar) * (x - x_bar);
            sxy += (x - x_bar) * (y - y_bar);
        }
    }
    if sxx <= 0.0 {
        return Err(Error::Unidentifiable(
            "all observations within each segment share one weight; \
             the elasticity slope is not identified"
                .into(),
        ));
    }
    let alpha = sxy / sxx;

    let mut z = BTreeMap::new();
    let mut ssr = 0.0;
    for (segment, points) in &groups {
        let (x_bar, y_bar) = group_means[segment];
        z.insert(segment.to_string(), (y_bar - alpha * x_bar).exp());
        for (x, y) in points {
            let e = (y - y_bar) - alpha * (x - x_bar);
            ssr += e * e;
        }
    }

    let n_obs = observations.len();
    let y_grand = observations.iter().map(|o| o.relevance.ln()).sum::<f64>() / n_obs as f64;
    let sst: f64 = observations.iter().map(|o| (o.relevance.ln() - y_grand).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };

    let df = n_obs as f64 - groups.len() as f64 - 1.0;
    let alpha_se = if df > 0.0 && ssr > 0.0 { (ssr / df / sxx).sqrt() } else { 0.0 };

    Ok(PowerLawFit {
        alpha,
        alpha_se,
        z,
        r_squared,
        n_obs,
        alpha_in_domain: alpha > 0.0 && alpha < 1.0,
    })
}

/// Diagnostic variant fitting an independent slope per segment. Segments
/// without weight variation are omitted.
pub fn fit_power_law_per_segment(
    observations: &[SegmentObservation],
) -> Result<BTreeMap<String, PowerLawFit>> {
    validate_observations(observations)?;
    let mut by_segment: BTreeMap<&str, Vec<SegmentObservation>> = BTreeMap::new();
    for obs in observations {
        by_segment.entry(obs.segment_id.as_str()).or_default().push(obs.clone());
    }
    let mut fits = BTreeMap::new();
    for (segment, obs) in by_segment {
        match fit_power_law(&obs) {
            Ok(fit) => {
                fits.insert(segment.to_string(), fit);
            }
            Err(Error::Unidentifiable(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if fits.is_empty() {
        return Err(Error::Unidentifiable("no segment has two distinct weights".into()));
    }
    Ok(fits)
}

/// Relative relevance change from moving the weight `w_old -> w_new`:
/// `(w_new / w_old)^alpha - 1`. Independent of the segment and its baseline.
pub fn predicted_lift(fit: &PowerLawFit, w_old: f64, w_new: f64) -> Result<f64> {
    if !w_old.is_finite() || !w_new.is_finite() || w_old <= 0.0 || w_new <= 0.0 {
        return Err(Error::Domain(format!("weights must be positive, got {w_old} -> {w_new}")));
    }
    Ok((w_new / w_old).powf(fit.alpha) - 1.0)
}

/// Model-predicted relevance of `segment` at weight `w`.
pub fn predict_relevance(fit: &PowerLawFit, segment_id: &str, w: f64) -> Result<f64> {
    if !w.is_finite() || w <= 0.0 {
        return Err(Error::Domain(format!("weight {w} must be positive")));
    }
    let z = fit
        .z
        .get(segment_id)
        .ok_or_else(|| Error::UnknownSegment(segment_id.to_string()))?;
    Ok(z * w.powf(fit.alpha))
}

/// Weight needed for `segment` to reach `target_relevance`:
/// `w = (target / z_g)^(1 / alpha)`.
pub fn required_weight(fit: &PowerLawFit, segment_id: &str, target_relevance: f64) -> Result<f64> {
    if fit.alpha <= 0.0 {
        return Err(Error::InversionUndefined { alpha: fit.alpha });
    }
    if !target_relevance.is_finite() || target_relevance <= 0.0 {
        return Err(Error::Domain(format!(
            "target relevance {target_relevance} must be positive"
        )));
    }
    let z = fit
        .z
        .get(segment_id)
        .ok_or_else(|| Error::UnknownSegment(segment_id.to_string()))?;
    Ok((target_relevance / z).powf(1.0 / fit.alpha))
}

/// Descriptive statistics of one relevance population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl DispersionSummary {
    fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty relevance population".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite relevance values"));
        let q1 = quantile(&sorted, 0.25);
        let q3 = quantile(&sorted, 0.75);
        Ok(DispersionSummary {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median: quantile(&sorted, 0.5),
            q1,
            q3,
            iqr: q3 - q1,
        })
    }
}

/// Linear-interpolation quantile over pre-sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Relevance dispersion before and after a reweighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub before: DispersionSummary,
    pub after: DispersionSummary,
}

/// Applies the fitted lift `(w_new / w_old)^alpha` to every observation and
/// summarizes the relevance distributions before and after. Segments absent
/// from `new_weights` keep their observed weight.
pub fn dispersion_report(
    fit: &PowerLawFit,
    observations: &[SegmentObservation],
    new_weights: &BTreeMap<String, f64>,
) -> Result<DispersionReport> {
    validate_observations(observations)?;
    let before: Vec<f64> = observations.iter().map(|o| o.relevance).collect();
    let mut after = Vec::with_capacity(before.len());
    for obs in observations {
        let lifted = match new_weights.get(&obs.segment_id) {
            Some(&w_new) => obs.relevance * (1.0 + predicted_lift(fit, obs.seeker_weight, w_new)?),
            None => obs.relevance,
        };
        after.push(lifted);
    }
    Ok(DispersionReport {
        before: DispersionSummary::from_samples(&before)?,
        after: DispersionSummary::from_samples(&after)?,
    })
}

/// Reads observations from CSV with header
/// `segment_id,seeker_weight,relevance[,arm]`.
pub fn read_observations_csv(reader: impl Read) -> Result<Vec<SegmentObservation>> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut observations = Vec::new();
    for record in csv_reader.deserialize::<RawObservation>() {
        let raw = record?;
        let arm = match raw.arm.as_deref() {
            None | Some("") => None,
            Some("control") => Some(Arm::Control),
            Some("treatment") => Some(Arm::Treatment),
            Some(other) => {
                return Err(Error::Config(format!(
                    "arm column must be `control` or `treatment`, got `{other}`"
                )))
            }
        };
        observations.push(SegmentObservation {
            segment_id: raw.segment_id,
            seeker_weight: raw.seeker_weight,
            relevance: raw.relevance,
            arm,
        });
    }
    Ok(observations)
}

#[derive(Debug, Deserialize)]
struct RawObservation {
    segment_id: String,
    seeker_weight: f64,
    relevance: f64,
    #[serde(default)]
    arm: Option<String>,
}
