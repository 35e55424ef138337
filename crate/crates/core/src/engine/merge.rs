//! Central merging of per-program outcomes.

use serde::Serialize;

use super::Outcome;
use crate::error::EngineError;

pub const DEFAULT_GRID: usize = 10_000;

/// How the controller reduces the outcomes of all programs to one value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MergeSpec {
    /// Keep every outcome as is.
    Identity,
    /// `Σ c_j · e_j` where `e_j` is the named expectation of program `j`.
    WeightedSum {
        coefficients: Vec<f64>,
        observable: String,
    },
    /// Read the modal bitstring of a single program as a binary fraction,
    /// `bits[0]` being the most significant bit.
    BitAssembly { bits: Vec<String> },
    /// Programs ordered `i·centroids + j` report the overlap of point `i`
    /// with centroid `j`; each point goes to its closest centroid.
    NearestCentroid {
        points: usize,
        centroids: usize,
        observable: String,
    },
    /// Maximum likelihood amplitude over `grid + 1` uniform points of `[0, 1]`
    /// given the success counts of programs making `queries[k]` Grover calls.
    MaxLikelihoodAmplitude {
        queries: Vec<u64>,
        grid: usize,
        /// Count key of a success.
        success: String,
    },
}

impl MergeSpec {
    pub fn weighted_sum(coefficients: Vec<f64>) -> Self {
        MergeSpec::WeightedSum {
            coefficients,
            observable: "expval".into(),
        }
    }

    /// Fixed number of per-program outcomes this merge expects, if any.
    pub fn arity(&self) -> Option<usize> {
        match self {
            MergeSpec::Identity => None,
            MergeSpec::WeightedSum { coefficients, .. } => Some(coefficients.len()),
            MergeSpec::BitAssembly { .. } => Some(1),
            MergeSpec::NearestCentroid {
                points, centroids, ..
            } => Some(points * centroids),
            MergeSpec::MaxLikelihoodAmplitude { queries, .. } => Some(queries.len()),
        }
    }

    pub fn check(&self) -> Result<(), EngineError> {
        match self {
            MergeSpec::MaxLikelihoodAmplitude { grid, .. } if *grid < 2 => Err(
                EngineError::InvalidMerge(format!("grid resolution {grid} is below 2")),
            ),
            MergeSpec::BitAssembly { bits } if bits.is_empty() || bits.len() > 52 => Err(
                EngineError::InvalidMerge(format!("cannot assemble {} bits", bits.len())),
            ),
            MergeSpec::WeightedSum { coefficients, .. }
                if coefficients.iter().any(|c| !c.is_finite()) =>
            {
                Err(EngineError::InvalidMerge("non-finite coefficient".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MergedValue {
    Scalar(f64),
    /// Centroid index (0-based) per point.
    Assignment(Vec<usize>),
    PerProgram(Vec<Outcome>),
}

impl MergedValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            MergedValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_assignment(&self) -> Option<&[usize]> {
        match self {
            MergedValue::Assignment(a) => Some(a),
            _ => None,
        }
    }
}

fn expectation(o: &Outcome, name: &str) -> Result<f64, EngineError> {
    o.expectations.get(name).copied().ok_or_else(|| {
        EngineError::InvalidMerge(format!(
            "program {} reports no `{name}` estimate",
            o.program + 1
        ))
    })
}

pub fn merge(spec: &MergeSpec, outcomes: &[Outcome]) -> Result<MergedValue, EngineError> {
    spec.check()?;
    if let Some(expected) = spec.arity() {
        if expected != outcomes.len() {
            return Err(EngineError::ArityMismatch {
                expected,
                found: outcomes.len(),
            });
        }
    }
    Ok(match spec {
        MergeSpec::Identity => MergedValue::PerProgram(outcomes.to_vec()),
        MergeSpec::WeightedSum {
            coefficients,
            observable,
        } => {
            let mut total = 0.0;
            for (c, o) in coefficients.iter().zip(outcomes) {
                total += c * expectation(o, observable)?;
            }
            MergedValue::Scalar(total)
        }
        MergeSpec::BitAssembly { bits } => MergedValue::Scalar(bit_assembly(&outcomes[0], bits)?),
        MergeSpec::NearestCentroid {
            points,
            centroids,
            observable,
        } => {
            let mut assignment = Vec::with_capacity(*points);
            for i in 0..*points {
                let mut distances = Vec::with_capacity(*centroids);
                for j in 0..*centroids {
                    distances.push(overlap_distance(expectation(
                        &outcomes[i * centroids + j],
                        observable,
                    )?));
                }
                assignment.push(argmin(&distances));
            }
            MergedValue::Assignment(assignment)
        }
        MergeSpec::MaxLikelihoodAmplitude {
            queries,
            grid,
            success,
        } => {
            let observations: Vec<(u64, u64, u64)> = queries
                .iter()
                .zip(outcomes)
                .map(|(&m, o)| (m, o.counts.get(success).copied().unwrap_or(0), o.shots()))
                .collect();
            MergedValue::Scalar(max_likelihood_amplitude(&observations, *grid))
        }
    })
}

/// Modal bitstring of `o`, ties to the lexicographically smallest key.
pub fn modal_key(o: &Outcome) -> Option<&str> {
    let mut best: Option<(&str, u64)> = None;
    for (k, &c) in &o.counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k)
}

/// Binary fraction of the modal bitstring, `bits[0]` most significant.
pub fn bit_assembly(o: &Outcome, bits: &[String]) -> Result<f64, EngineError> {
    let key =
        modal_key(o).ok_or_else(|| EngineError::InvalidMerge("no counts to assemble".into()))?;
    let mut value = 0u64;
    for b in bits {
        let pos = o
            .bits
            .iter()
            .position(|x| x == b)
            .ok_or_else(|| EngineError::InvalidMerge(format!("bit {b} is not reported")))?;
        value = value * 2 + u64::from(key.as_bytes()[pos] == b'1');
    }
    Ok(value as f64 / (1u64 << bits.len()) as f64)
}

/// Euclidean distance of two unit vectors whose squared overlap is `overlap`.
pub fn overlap_distance(overlap: f64) -> f64 {
    (2.0 - 2.0 * overlap.clamp(0.0, 1.0).sqrt()).max(0.0).sqrt()
}

/// Index of the smallest value, ties to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Success probability after `m` Grover iterations on amplitude `a`.
pub fn success_probability(a: f64, m: u64) -> f64 {
    ((2 * m + 1) as f64 * a.clamp(0.0, 1.0).sqrt().asin())
        .sin()
        .powi(2)
}

pub fn log_likelihood(a: f64, observations: &[(u64, u64, u64)]) -> f64 {
    let mut total = 0.0;
    for &(m, hits, shots) in observations {
        let p = success_probability(a, m);
        let misses = shots - hits;
        if hits > 0 {
            total += hits as f64 * p.ln();
        }
        if misses > 0 {
            total += misses as f64 * (1.0 - p).ln();
        }
    }
    total
}

/// Grid MLE over `a = g / grid`, `g = 0..=grid`, given `(queries, hits, shots)`
/// triples. Near-ties go to the smallest amplitude.
pub fn max_likelihood_amplitude(observations: &[(u64, u64, u64)], grid: usize) -> f64 {
    let mut best_a = 0.0;
    let mut best = f64::NEG_INFINITY;
    for g in 0..=grid {
        let a = g as f64 / grid as f64;
        let ll = log_likelihood(a, observations);
        let tol = 1e-9 * best.abs().max(1.0);
        if ll > best + tol || (best == f64::NEG_INFINITY && ll > best) {
            best = ll;
            best_a = a;
        }
    }
    best_a
}
