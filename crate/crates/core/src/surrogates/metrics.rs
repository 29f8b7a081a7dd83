//! Skill scores.
//!
//! [`r2_score`] is the variance-ratio form `1 − Var(Y − Ŷ)/Var(Y)` with
//! population variances. It ignores a constant bias in the predictions, so
//! [`conventional_r2`] (`1 − SSE/SST`) is reported next to it for diagnostics.

use serde::{Deserialize, Serialize};

use super::{SurrogateError, Table};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R2 {
    pub per_target: Vec<f64>,
    pub mean: f64,
}

fn population_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn check_shapes(y: &Table, yhat: &Table) -> Result<(), SurrogateError> {
    if y.cols != yhat.cols || y.rows != yhat.rows {
        return Err(SurrogateError::DimensionMismatch {
            expected: y.rows * y.cols,
            found: yhat.rows * yhat.cols,
        });
    }
    if y.rows == 0 {
        return Err(SurrogateError::TooFewSamples { need: 1, got: 0 });
    }
    Ok(())
}

fn per_target(
    y: &Table,
    yhat: &Table,
    score: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<R2, SurrogateError> {
    check_shapes(y, yhat)?;
    let mut per = Vec::with_capacity(y.cols);
    for j in 0..y.cols {
        let yj = y.column(j);
        let hj = yhat.column(j);
        if population_variance(yj.iter().copied()) == 0.0 {
            return Err(SurrogateError::DegenerateTarget(j));
        }
        per.push(score(&yj, &hj));
    }
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok(R2 { per_target: per, mean })
}

/// `1 − Var(Y − Ŷ)/Var(Y)` per target column, and their mean.
pub fn r2_score(y: &Table, yhat: &Table) -> Result<R2, SurrogateError> {
    per_target(y, yhat, |yj, hj| {
        let var_y = population_variance(yj.iter().copied());
        let var_r = population_variance(yj.iter().zip(hj).map(|(a, b)| a - b));
        1.0 - var_r / var_y
    })
}

/// `1 − Σ(y − ŷ)²/Σ(y − ȳ)²`, for diagnostics only.
pub fn conventional_r2(y: &Table, yhat: &Table) -> Result<R2, SurrogateError> {
    per_target(y, yhat, |yj, hj| {
        let n = yj.len() as f64;
        let mean = yj.iter().sum::<f64>() / n;
        let sst: f64 = yj.iter().map(|a| (a - mean) * (a - mean)).sum();
        let sse: f64 = yj.iter().zip(hj).map(|(a, b)| (a - b) * (a - b)).sum();
        1.0 - sse / sst
    })
}
