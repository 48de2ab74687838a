use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Clipping applied before any logit transform.
pub const LOGIT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMethod {
    Temperature,
    Platt,
    Isotonic,
    Histogram,
    Beta,
    Identity,
}

impl CalibrationMethod {
    /// The five fitted methods, in tie-break order.
    pub const FITTED: [CalibrationMethod; 5] = [
        CalibrationMethod::Temperature,
        CalibrationMethod::Platt,
        CalibrationMethod::Isotonic,
        CalibrationMethod::Histogram,
        CalibrationMethod::Beta,
    ];

    /// Position in the selection tie-break order. Identity ranks last.
    pub fn tie_rank(self) -> u8 {
        match self {
            CalibrationMethod::Temperature => 0,
            CalibrationMethod::Platt => 1,
            CalibrationMethod::Isotonic => 2,
            CalibrationMethod::Histogram => 3,
            CalibrationMethod::Beta => 4,
            CalibrationMethod::Identity => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CalibrationMethod::Temperature => "temperature",
            CalibrationMethod::Platt => "platt",
            CalibrationMethod::Isotonic => "isotonic",
            CalibrationMethod::Histogram => "histogram",
            CalibrationMethod::Beta => "beta",
            CalibrationMethod::Identity => "identity",
        }
    }
}

impl fmt::Display for CalibrationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CalibrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temperature" => Ok(CalibrationMethod::Temperature),
            "platt" => Ok(CalibrationMethod::Platt),
            "isotonic" => Ok(CalibrationMethod::Isotonic),
            "histogram" => Ok(CalibrationMethod::Histogram),
            "beta" => Ok(CalibrationMethod::Beta),
            "identity" => Ok(CalibrationMethod::Identity),
            other => Err(Error::Parse(format!("unknown calibration method {other:?}"))),
        }
    }
}

/// A fitted score-to-probability map.
///
/// Serialized as `{"method": ..., "params": [...]}`. Isotonic parameters are
/// the breakpoints followed by their values; histogram parameters are the
/// `B+1` edges followed by the `B` bin means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub enum CalibrationModel {
    Identity,
    Temperature { t: f64 },
    Platt { a: f64, b: f64 },
    Isotonic { breakpoints: Vec<f64>, values: Vec<f64> },
    Histogram { edges: Vec<f64>, means: Vec<f64> },
    Beta { a: f64, b: f64, c: f64 },
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    method: CalibrationMethod,
    params: Vec<f64>,
}

impl From<CalibrationModel> for RawModel {
    fn from(m: CalibrationModel) -> Self {
        RawModel {
            method: m.method(),
            params: m.params(),
        }
    }
}

impl TryFrom<RawModel> for CalibrationModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        CalibrationModel::from_params(raw.method, &raw.params)
    }
}

fn wrong_arity(method: CalibrationMethod, got: usize) -> Error {
    Error::Parse(format!("{method} model: unexpected parameter count {got}"))
}

impl CalibrationModel {
    pub fn method(&self) -> CalibrationMethod {
        match self {
            CalibrationModel::Identity => CalibrationMethod::Identity,
            CalibrationModel::Temperature { .. } => CalibrationMethod::Temperature,
            CalibrationModel::Platt { .. } => CalibrationMethod::Platt,
            CalibrationModel::Isotonic { .. } => CalibrationMethod::Isotonic,
            CalibrationModel::Histogram { .. } => CalibrationMethod::Histogram,
            CalibrationModel::Beta { .. } => CalibrationMethod::Beta,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            CalibrationModel::Identity => vec![],
            CalibrationModel::Temperature { t } => vec![*t],
            CalibrationModel::Platt { a, b } => vec![*a, *b],
            CalibrationModel::Isotonic {
                breakpoints,
                values,
            } => breakpoints.iter().chain(values).copied().collect(),
            CalibrationModel::Histogram { edges, means } => {
                edges.iter().chain(means).copied().collect()
            }
            CalibrationModel::Beta { a, b, c } => vec![*a, *b, *c],
        }
    }

    pub fn from_params(method: CalibrationMethod, p: &[f64]) -> Result<Self> {
        let model = match method {
            CalibrationMethod::Identity if p.is_empty() => CalibrationModel::Identity,
            CalibrationMethod::Temperature if p.len() == 1 => {
                CalibrationModel::Temperature { t: p[0] }
            }
            CalibrationMethod::Platt if p.len() == 2 => CalibrationModel::Platt { a: p[0], b: p[1] },
            CalibrationMethod::Beta if p.len() == 3 => CalibrationModel::Beta {
                a: p[0],
                b: p[1],
                c: p[2],
            },
            CalibrationMethod::Isotonic if !p.is_empty() && p.len() % 2 == 0 => {
                let n = p.len() / 2;
                CalibrationModel::Isotonic {
                    breakpoints: p[..n].to_vec(),
                    values: p[n..].to_vec(),
                }
            }
            CalibrationMethod::Histogram if p.len() >= 3 && p.len() % 2 == 1 => {
                let bins = (p.len() - 1) / 2;
                CalibrationModel::Histogram {
                    edges: p[..=bins].to_vec(),
                    means: p[bins + 1..].to_vec(),
                }
            }
            other => return Err(wrong_arity(other, p.len())),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let bad = |msg: &str| Err(Error::Parse(format!("{} model: {msg}", self.method())));
        match self {
            CalibrationModel::Identity => Ok(()),
            CalibrationModel::Temperature { t } => {
                if t.is_finite() && *t > 0.0 {
                    Ok(())
                } else {
                    bad("temperature must be positive")
                }
            }
            CalibrationModel::Platt { a, b } => {
                if finite(&[*a, *b]) {
                    Ok(())
                } else {
                    bad("non-finite parameter")
                }
            }
            CalibrationModel::Beta { a, b, c } => {
                if !finite(&[*a, *b, *c]) {
                    bad("non-finite parameter")
                } else if *a < 0.0 || *b < 0.0 {
                    bad("a and b must be non-negative")
                } else {
                    Ok(())
                }
            }
            CalibrationModel::Isotonic {
                breakpoints,
                values,
            } => {
                if breakpoints.is_empty() || breakpoints.len() != values.len() {
                    return bad("breakpoints and values must be non-empty and equal length");
                }
                if !finite(breakpoints) || !finite(values) {
                    return bad("non-finite parameter");
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("breakpoints must be strictly increasing");
                }
                if values.windows(2).any(|w| w[0] > w[1]) {
                    return bad("values must be non-decreasing");
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return bad("values must lie in [0, 1]");
                }
                Ok(())
            }
            CalibrationModel::Histogram { edges, means } => {
                if means.is_empty() || edges.len() != means.len() + 1 {
                    return bad("expected B+1 edges and B means");
                }
                if !finite(edges) || !finite(means) {
                    return bad("non-finite parameter");
                }
                if edges.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("edges must be strictly increasing");
                }
                if means.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return bad("bin means must lie in [0, 1]");
                }
                Ok(())
            }
        }
    }

    /// Maps a raw fake-probability to a calibrated one.
    pub fn apply(&self, raw_score: f64) -> Result<f64> {
        check_probability("raw score", raw_score)?;
        Ok(self.apply_unchecked(raw_score))
    }

    pub(crate) fn apply_unchecked(&self, s: f64) -> f64 {
        let out = match self {
            CalibrationModel::Identity => s,
            CalibrationModel::Temperature { t } => sigmoid(logit(s) / t),
            CalibrationModel::Platt { a, b } => sigmoid(a * logit(s) + b),
            CalibrationModel::Beta { a, b, c } => {
                let p = clip(s);
                sigmoid(a * p.ln() - b * (1.0 - p).ln() + c)
            }
            CalibrationModel::Isotonic {
                breakpoints,
                values,
            } => interpolate(breakpoints, values, s),
            CalibrationModel::Histogram { edges, means } => {
                let idx = edges[1..edges.len() - 1].partition_point(|e| *e <= s);
                means[idx]
            }
        };
        out.clamp(0.0, 1.0)
    }

    pub fn apply_all(&self, scores: &[f64]) -> Result<Vec<f64>> {
        scores.iter().map(|s| self.apply(*s)).collect()
    }
}

fn interpolate(xs: &[f64], ys: &[f64], s: f64) -> f64 {
    if s <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if s >= xs[last] {
        return ys[last];
    }
    let j = xs.partition_point(|x| *x <= s);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let (y0, y1) = (ys[j - 1], ys[j]);
    y0 + (y1 - y0) * (s - x0) / (x1 - x0)
}

pub(crate) fn clip(p: f64) -> f64 {
    p.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS)
}

pub(crate) fn logit(p: f64) -> f64 {
    let p = clip(p);
    (p / (1.0 - p)).ln()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
