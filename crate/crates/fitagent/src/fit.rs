//! Nonlinear least squares over DSL models.
//!
//! The solver is Levenberg-Marquardt with Marquardt diagonal scaling and a
//! fixed damping schedule: lambda starts at 1e-3, divides by 10 on every
//! accepted step and multiplies by 10 on every rejected one. Jacobians come
//! from central finite differences with per-parameter step
//! h = max(1e-6 |theta_j|, 1e-12). Convergence is a relative resnorm
//! decrease or an infinity-norm gradient below `tolerance`. Parameter counts
//! here are tiny (1-6), so the normal equations are solved directly.

use std::collections::BTreeMap;

use crate::dataset::Dataset;
use crate::expr::{evaluate, Bindings, EvalError, Expr};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("model references undeclared variables: {0}")]
    UndeclaredVariables(String),
    #[error("declared parameters {declared:?} do not match the expression's {found:?}")]
    ParamMismatch {
        declared: Vec<String>,
        found: Vec<String>,
    },
    #[error("no initial value for parameter `{0}`")]
    MissingInit(String),
    #[error("non-finite initial value for parameter `{0}`")]
    NonFiniteInit(String),
    #[error("model output invalid at x = {x}: {cause}")]
    ModelOutput { x: f64, cause: String },
    #[error("finite-difference perturbation of `{param}` failed at x = {x}: {cause}")]
    Jacobian { param: String, x: f64, cause: String },
    #[error("log-space fit requires positive y; y[{index}] = {value}")]
    LogSpaceNegativeY { index: usize, value: f64 },
    #[error("log-space fit requires positive predictions at the start; f(x = {x}) = {value}")]
    LogSpaceNegativePrediction { x: f64, value: f64 },
    #[error("normal equations are singular and damping is exhausted")]
    SingularNormalEquations,
    #[error("y has zero variance; R^2 is undefined")]
    ZeroVarianceY,
    #[error("log-log linearization requires positive values; {axis}[{index}] = {value}")]
    NonPositiveForLog {
        axis: &'static str,
        index: usize,
        value: f64,
    },
    #[error("x values are all equal; slope is undefined")]
    DegenerateX,
}

/// A DSL expression promoted to a single-variable parametric model.
/// `params` fixes the parameter order used for Jacobian columns.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamModel {
    pub expr: Expr,
    pub variable: String,
    pub params: Vec<String>,
}

impl ParamModel {
    /// Builds a model with parameters in first-appearance order.
    pub fn new(expr: Expr, variable: &str) -> Result<ParamModel, FitError> {
        let params = expr.params_in_order();
        ParamModel::with_params(expr, variable, params)
    }

    /// Builds a model with an explicit parameter order. The set must equal
    /// the expression's free parameters; the expression may reference the
    /// variable or be constant in it, but nothing else.
    pub fn with_params(
        expr: Expr,
        variable: &str,
        params: Vec<String>,
    ) -> Result<ParamModel, FitError> {
        let (vars, free_params) = expr.free_names();
        let stray: Vec<String> = vars.iter().filter(|v| *v != variable).cloned().collect();
        if !stray.is_empty() {
            return Err(FitError::UndeclaredVariables(stray.join(", ")));
        }
        let declared: std::collections::BTreeSet<&String> = params.iter().collect();
        if declared.len() != params.len()
            || free_params.iter().collect::<std::collections::BTreeSet<_>>() != declared
        {
            return Err(FitError::ParamMismatch {
                declared: params,
                found: free_params.into_iter().collect(),
            });
        }
        Ok(ParamModel {
            expr,
            variable: variable.to_string(),
            params,
        })
    }

    /// Evaluates the model at one x under a parameter vector ordered like
    /// `self.params`.
    fn eval_at(&self, x: f64, theta: &[f64]) -> Result<f64, EvalError> {
        let mut b = Bindings::default();
        b.insert_var(self.variable.clone(), x)
            .map_err(|e| EvalError::Domain {
                expr: self.variable.clone(),
                message: e.to_string(),
            })?;
        for (name, value) in self.params.iter().zip(theta) {
            b.insert_param(name.clone(), *value)
                .map_err(|e| EvalError::Domain {
                    expr: name.clone(),
                    message: e.to_string(),
                })?;
        }
        evaluate(&self.expr, &b)
    }

    /// Evaluates the model at one x under a name -> value map.
    pub fn predict(&self, x: f64, params: &BTreeMap<String, f64>) -> Result<f64, FitError> {
        let theta = self.theta_from(params)?;
        self.eval_at(x, &theta).map_err(|e| FitError::ModelOutput {
            x,
            cause: e.to_string(),
        })
    }

    /// Predictions over a whole dataset, reporting the first offending x.
    pub fn predict_all(&self, xs: &[f64], params: &BTreeMap<String, f64>) -> Result<Vec<f64>, FitError> {
        let theta = self.theta_from(params)?;
        xs.iter()
            .map(|&x| {
                self.eval_at(x, &theta).map_err(|e| FitError::ModelOutput {
                    x,
                    cause: e.to_string(),
                })
            })
            .collect()
    }

    fn theta_from(&self, params: &BTreeMap<String, f64>) -> Result<Vec<f64>, FitError> {
        self.params
            .iter()
            .map(|name| match params.get(name) {
                Some(v) if v.is_finite() => Ok(*v),
                Some(_) => Err(FitError::NonFiniteInit(name.clone())),
                None => Err(FitError::MissingInit(name.clone())),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitSpace {
    Linear,
    Log10,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub fit_space: FitSpace,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> FitOptions {
        FitOptions {
            fit_space: FitSpace::Linear,
            max_iter: 200,
            tolerance: 1e-10,
        }
    }
}

/// Fit outcome. `residuals` and `resnorm` live in the fit space;
/// `resnorm_trace` records the resnorm at the start and after every accepted
/// step, so descent is checkable after the fact.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    pub resnorm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
    pub fit_space: FitSpace,
    pub resnorm_trace: Vec<f64>,
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e12;

/// Failure of a trial evaluation; rejected silently during line search,
/// fatal at the initial (accepted) point.
struct TrialError {
    x: f64,
    cause: TrialCause,
}

enum TrialCause {
    NonpositivePrediction(f64),
    Other(String),
}

impl TrialCause {
    fn into_message(self) -> String {
        match self {
            TrialCause::NonpositivePrediction(v) => {
                format!("nonpositive prediction {v} in log-space fit")
            }
            TrialCause::Other(s) => s,
        }
    }
}

fn residuals_in_space(
    model: &ParamModel,
    data: &Dataset,
    ylog: Option<&[f64]>,
    theta: &[f64],
) -> Result<Vec<f64>, TrialError> {
    let mut out = Vec::with_capacity(data.n);
    for (i, (&x, &y)) in data.x.iter().zip(&data.y).enumerate() {
        let pred = model.eval_at(x, theta).map_err(|e| TrialError {
            x,
            cause: TrialCause::Other(e.to_string()),
        })?;
        let r = match ylog {
            None => pred - y,
            Some(ylog) => {
                if pred <= 0.0 {
                    return Err(TrialError {
                        x,
                        cause: TrialCause::NonpositivePrediction(pred),
                    });
                }
                pred.log10() - ylog[i]
            }
        };
        if !r.is_finite() {
            return Err(TrialError {
                x,
                cause: TrialCause::Other(format!("non-finite residual (prediction {pred})")),
            });
        }
        out.push(r);
    }
    Ok(out)
}

fn fd_step(theta_j: f64) -> f64 {
    (1e-6 * theta_j.abs()).max(1e-12)
}

/// Central-difference Jacobian of the fit-space residual vector.
fn residual_jacobian(
    model: &ParamModel,
    data: &Dataset,
    ylog: Option<&[f64]>,
    theta: &[f64],
) -> Result<Vec<Vec<f64>>, FitError> {
    let n = data.n;
    let p = theta.len();
    let mut jac = vec![vec![0.0; p]; n];
    let mut probe = theta.to_vec();
    for j in 0..p {
        let h = fd_step(theta[j]);
        probe[j] = theta[j] + h;
        let plus = residuals_in_space(model, data, ylog, &probe).map_err(|e| FitError::Jacobian {
            param: model.params[j].clone(),
            x: e.x,
            cause: e.cause.into_message(),
        })?;
        probe[j] = theta[j] - h;
        let minus = residuals_in_space(model, data, ylog, &probe).map_err(|e| FitError::Jacobian {
            param: model.params[j].clone(),
            x: e.x,
            cause: e.cause.into_message(),
        })?;
        probe[j] = theta[j];
        for i in 0..n {
            jac[i][j] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Central-difference Jacobian of the model itself (linear space), rows per
/// data point, columns in `model.params` order.
pub fn jacobian_fd(
    model: &ParamModel,
    params: &BTreeMap<String, f64>,
    data: &Dataset,
) -> Result<Vec<Vec<f64>>, FitError> {
    let theta = model.theta_from(params)?;
    residual_jacobian(model, data, None, &theta)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves a small dense system by Gaussian elimination with partial
/// pivoting. None means singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Levenberg-Marquardt fit of `model` to `data` starting from `init`.
///
/// Iteration-budget exhaustion is not an error: the best-so-far result comes
/// back with `converged = false`. Hard errors are reserved for invalid
/// starting points, log-space positivity violations and singular normal
/// equations that damping cannot rescue.
pub fn fit_lm(
    model: &ParamModel,
    data: &Dataset,
    init: &BTreeMap<String, f64>,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let mut theta = model.theta_from(init)?;
    let p = theta.len();

    let ylog_store: Option<Vec<f64>>;
    match opts.fit_space {
        FitSpace::Linear => ylog_store = None,
        FitSpace::Log10 => {
            if let Some((i, &v)) = data.y.iter().enumerate().find(|(_, v)| **v <= 0.0) {
                return Err(FitError::LogSpaceNegativeY { index: i, value: v });
            }
            ylog_store = Some(data.y.iter().map(|v| v.log10()).collect());
        }
    }
    let ylog = ylog_store.as_deref();

    // The starting point is an accepted iterate by definition, so a failed
    // evaluation here is a hard error rather than a rejected step.
    let mut r = residuals_in_space(model, data, ylog, &theta).map_err(|e| match e.cause {
        TrialCause::NonpositivePrediction(value) => {
            FitError::LogSpaceNegativePrediction { x: e.x, value }
        }
        TrialCause::Other(cause) => FitError::ModelOutput { x: e.x, cause },
    })?;
    let mut s = dot(&r, &r);
    let mut lambda = LAMBDA_INIT;
    let mut trace = vec![s];
    let mut iterations = 0usize;
    let mut converged = false;

    'outer: while iterations < opts.max_iter {
        let jac = residual_jacobian(model, data, ylog, &theta)?;
        // g = J^T r, the gradient of resnorm/2.
        let mut g = vec![0.0; p];
        for i in 0..data.n {
            for j in 0..p {
                g[j] += jac[i][j] * r[i];
            }
        }
        if g.iter().all(|v| v.abs() < opts.tolerance) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut jtj = vec![vec![0.0; p]; p];
        for i in 0..data.n {
            for a in 0..p {
                for b in a..p {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }

        let mut solved_once = false;
        loop {
            let mut lhs = jtj.clone();
            for k in 0..p {
                let scale = if jtj[k][k] > 0.0 { jtj[k][k] } else { 1.0 };
                lhs[k][k] += lambda * scale;
            }
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            if let Some(delta) = solve(lhs, rhs) {
                solved_once = true;
                let trial: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + d).collect();
                if let Ok(rt) = residuals_in_space(model, data, ylog, &trial) {
                    let st = dot(&rt, &rt);
                    if st.is_finite() && st < s {
                        let rel = (s - st) / s.max(f64::MIN_POSITIVE);
                        theta = trial;
                        r = rt;
                        s = st;
                        trace.push(s);
                        lambda = (lambda / 10.0).max(1e-15);
                        if rel < opts.tolerance || s == 0.0 {
                            converged = true;
                            break 'outer;
                        }
                        break;
                    }
                }
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                if !solved_once {
                    return Err(FitError::SingularNormalEquations);
                }
                // No step improves on theta even under heavy damping:
                // treat the stall as convergence.
                converged = true;
                break 'outer;
            }
        }
    }

    Ok(FitResult {
        params: model
            .params
            .iter()
            .cloned()
            .zip(theta.iter().copied())
            .collect(),
        resnorm: s,
        iterations,
        converged,
        residuals: r,
        fit_space: opts.fit_space,
        resnorm_trace: trace,
    })
}

/// Ordinary least squares of log10 y on log10 x; returns (C0, m0) with
/// C0 = 10^intercept. The standard initializer for power-law models.
pub fn loglog_linearize(data: &Dataset) -> Result<(f64, f64), FitError> {
    for (i, &v) in data.x.iter().enumerate() {
        if v <= 0.0 {
            return Err(FitError::NonPositiveForLog {
                axis: "x",
                index: i,
                value: v,
            });
        }
    }
    for (i, &v) in data.y.iter().enumerate() {
        if v <= 0.0 {
            return Err(FitError::NonPositiveForLog {
                axis: "y",
                index: i,
                value: v,
            });
        }
    }
    let lx: Vec<f64> = data.x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = data.y.iter().map(|v| v.log10()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateX);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok((10f64.powf(intercept), slope))
}

/// Goodness of fit computed in linear space, with log-space analogues when
/// positivity allows them.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ValidationMetrics {
    pub r2: f64,
    /// Absent when n <= p + 1, where the correction divides by zero or
    /// flips sign.
    pub adjusted_r2: Option<f64>,
    pub rmse: f64,
    pub r2_log: Option<f64>,
    pub rmse_log: Option<f64>,
    /// Linear-space residuals, prediction minus observation.
    pub residuals: Vec<f64>,
}

pub fn validate(
    model: &ParamModel,
    fit: &FitResult,
    data: &Dataset,
) -> Result<ValidationMetrics, FitError> {
    let pred = model.predict_all(&data.x, &fit.params)?;
    let n = data.n as f64;
    let mean_y = data.y.iter().sum::<f64>() / n;
    let ssres: f64 = pred
        .iter()
        .zip(&data.y)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    let sstot: f64 = data.y.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    if sstot == 0.0 {
        return Err(FitError::ZeroVarianceY);
    }
    let r2 = 1.0 - ssres / sstot;
    let rmse = (ssres / n).sqrt();
    let p_count = model.params.len() as f64;
    let adjusted_r2 = if n > p_count + 1.0 {
        Some(1.0 - (1.0 - r2) * (n - 1.0) / (n - p_count - 1.0))
    } else {
        None
    };

    let positive = data.y.iter().all(|v| *v > 0.0) && pred.iter().all(|v| *v > 0.0);
    let (r2_log, rmse_log) = if positive {
        let ly: Vec<f64> = data.y.iter().map(|v| v.log10()).collect();
        let lp: Vec<f64> = pred.iter().map(|v| v.log10()).collect();
        let mly = ly.iter().sum::<f64>() / n;
        let ssres_l: f64 = lp.iter().zip(&ly).map(|(p, y)| (p - y) * (p - y)).sum();
        let sstot_l: f64 = ly.iter().map(|y| (y - mly) * (y - mly)).sum();
        let r2l = if sstot_l == 0.0 {
            None
        } else {
            Some(1.0 - ssres_l / sstot_l)
        };
        (r2l, Some((ssres_l / n).sqrt()))
    } else {
        (None, None)
    };

    let residuals: Vec<f64> = pred.iter().zip(&data.y).map(|(p, y)| p - y).collect();
    Ok(ValidationMetrics {
        r2,
        adjusted_r2,
        rmse,
        r2_log,
        rmse_log,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn hp_model() -> ParamModel {
        let expr = parse("sigma0 + k * d ^ (-0.5)", &["d"]).unwrap();
        ParamModel::new(expr, "d").unwrap()
    }

    fn hp_data(n: usize) -> Dataset {
        // Noiseless synthetic straight from the model expression, so the
        // global minimum is exactly zero residual.
        let model = hp_model();
        let truth = BTreeMap::from([("sigma0".to_string(), 38.4577), ("k".to_string(), 9.4836)]);
        let x: Vec<f64> = (0..n)
            .map(|i| 3.0 + 20.0 * i as f64 / (n as f64 - 1.0))
            .collect();
        let y = model.predict_all(&x, &truth).unwrap();
        Dataset::new(x, y, "d", "sigma", "um", "MPa").unwrap()
    }

    fn init(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    #[test]
    fn model_validates_names() {
        let expr = parse("a + b * x", &["x"]).unwrap();
        assert!(ParamModel::new(expr.clone(), "x").is_ok());
        assert!(matches!(
            ParamModel::new(expr.clone(), "y"),
            Err(FitError::UndeclaredVariables(_))
        ));
        assert!(matches!(
            ParamModel::with_params(expr, "x", vec!["a".into()]),
            Err(FitError::ParamMismatch { .. })
        ));
        // Constant models are legal.
        let c = parse("c0", &["x"]).unwrap();
        assert!(ParamModel::new(c, "x").is_ok());
    }

    #[test]
    fn recovers_hall_petch_exactly_on_noiseless_data() {
        let model = hp_model();
        let data = hp_data(13);
        let fit = fit_lm(&model, &data, &init(&[("sigma0", 50.0), ("k", 5.0)]), &FitOptions::default())
            .unwrap();
        assert!(fit.converged);
        assert!(fit.resnorm < 1e-16, "resnorm {}", fit.resnorm);
        assert!((fit.params["sigma0"] - 38.4577).abs() / 38.4577 < 1e-6);
        assert!((fit.params["k"] - 9.4836).abs() / 9.4836 < 1e-6);
        // Accepted steps never increase the resnorm.
        assert!(fit.resnorm_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(fit.resnorm_trace.last().copied().unwrap(), fit.resnorm);
    }

    #[test]
    fn optimal_init_returns_unchanged() {
        let model = hp_model();
        let data = hp_data(13);
        let truth = init(&[("sigma0", 38.4577), ("k", 9.4836)]);
        let fit = fit_lm(&model, &data, &truth, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 1);
        assert_eq!(fit.params["sigma0"], 38.4577);
        assert_eq!(fit.params["k"], 9.4836);
        assert_eq!(fit.resnorm, 0.0);
    }

    #[test]
    fn row_order_does_not_matter() {
        let model = hp_model();
        let data = hp_data(13);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut idx: Vec<usize> = (0..data.n).collect();
        idx.shuffle(&mut rng);
        let shuffled = Dataset::new(
            idx.iter().map(|&i| data.x[i]).collect(),
            idx.iter().map(|&i| data.y[i]).collect(),
            "d",
            "sigma",
            "um",
            "MPa",
        )
        .unwrap();
        let start = init(&[("sigma0", 50.0), ("k", 5.0)]);
        let a = fit_lm(&model, &data, &start, &FitOptions::default()).unwrap();
        let b = fit_lm(&model, &shuffled, &start, &FitOptions::default()).unwrap();
        for name in ["sigma0", "k"] {
            let (va, vb) = (a.params[name], b.params[name]);
            assert!((va - vb).abs() / va.abs() < 1e-10);
        }
        let va = validate(&model, &a, &data).unwrap();
        let vb = validate(&model, &b, &shuffled).unwrap();
        assert!((va.r2 - vb.r2).abs() < 1e-10);
        assert!((va.rmse - vb.rmse).abs() < 1e-10);
    }

    #[test]
    fn linear_scaling_covariance() {
        let model = hp_model();
        let data = hp_data(13);
        let scale = 3.7;
        let scaled = Dataset::new(
            data.x.clone(),
            data.y.iter().map(|v| v * scale).collect(),
            "d",
            "sigma",
            "um",
            "MPa",
        )
        .unwrap();
        let start = init(&[("sigma0", 50.0), ("k", 5.0)]);
        let a = fit_lm(&model, &data, &start, &FitOptions::default()).unwrap();
        let b = fit_lm(&model, &scaled, &start, &FitOptions::default()).unwrap();
        for name in ["sigma0", "k"] {
            assert!((b.params[name] - scale * a.params[name]).abs() / (scale * a.params[name]).abs() < 1e-8);
        }
        let va = validate(&model, &a, &data).unwrap();
        let vb = validate(&model, &b, &scaled).unwrap();
        assert!((va.r2 - vb.r2).abs() < 1e-8);
    }

    #[test]
    fn log_space_fit_recovers_power_law() {
        let expr = parse("C * dK ^ m", &["dK"]).unwrap();
        let model = ParamModel::new(expr, "dK").unwrap();
        let truth = init(&[("C", 8.7102e-12), ("m", 3.2583)]);
        let x: Vec<f64> = (0..25)
            .map(|i| {
                let t = i as f64 / 24.0;
                10f64.powf(3.8f64.log10() + t * (36.8f64.log10() - 3.8f64.log10()))
            })
            .collect();
        let y = model.predict_all(&x, &truth).unwrap();
        let data = Dataset::new(x, y, "dK", "dadN", "MPa_sqrt_m", "m_per_cycle").unwrap();

        let (c0, m0) = loglog_linearize(&data).unwrap();
        assert!((m0 - 3.2583).abs() < 1e-10);
        assert!((c0 - 8.7102e-12).abs() / 8.7102e-12 < 1e-9);

        let opts = FitOptions {
            fit_space: FitSpace::Log10,
            ..FitOptions::default()
        };
        let start = init(&[("C", c0), ("m", m0)]);
        let fit = fit_lm(&model, &data, &start, &opts).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.fit_space, FitSpace::Log10);
        assert!((fit.params["m"] - 3.2583).abs() / 3.2583 < 1e-8);
        assert!((fit.params["C"] - 8.7102e-12).abs() / 8.7102e-12 < 1e-6);
        // resnorm is the sum of squared fit-space residuals.
        let check: f64 = fit.residuals.iter().map(|r| r * r).sum();
        assert_eq!(check, fit.resnorm);
        assert!(fit.resnorm_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn loglog_linearize_edge_cases() {
        let two = Dataset::new(vec![1.0, 10.0], vec![1e-11, 1e-8], "x", "y", "", "").unwrap();
        let (c0, m0) = loglog_linearize(&two).unwrap();
        assert!((m0 - 3.0).abs() < 1e-12);
        assert!((c0 - 1e-11).abs() / 1e-11 < 1e-12);

        let neg = Dataset::new(vec![1.0, 2.0], vec![-1.0, 4.0], "x", "y", "", "").unwrap();
        assert!(matches!(
            loglog_linearize(&neg),
            Err(FitError::NonPositiveForLog { axis: "y", index: 0, .. })
        ));
        let flat = Dataset::new(vec![2.0, 2.0], vec![1.0, 4.0], "x", "y", "", "").unwrap();
        assert!(matches!(loglog_linearize(&flat), Err(FitError::DegenerateX)));
    }

    #[test]
    fn validate_perfect_and_mean_models() {
        let model = hp_model();
        let data = hp_data(13);
        let truth = init(&[("sigma0", 38.4577), ("k", 9.4836)]);
        let fit = fit_lm(&model, &data, &truth, &FitOptions::default()).unwrap();
        let v = validate(&model, &fit, &data).unwrap();
        assert_eq!(v.r2, 1.0);
        assert_eq!(v.rmse, 0.0);
        assert!(v.adjusted_r2.unwrap() >= 1.0 - 1e-12);
        assert!(v.r2_log.is_some());

        // A constant model pinned at mean(y) has R^2 exactly zero.
        let mean = data.y.iter().sum::<f64>() / data.n as f64;
        let cmodel = ParamModel::new(parse("c", &["d"]).unwrap(), "d").unwrap();
        let cfit = fit_lm(&cmodel, &data, &init(&[("c", mean)]), &FitOptions::default()).unwrap();
        let cv = validate(&cmodel, &cfit, &data).unwrap();
        assert!(cv.r2.abs() < 1e-12);
    }

    #[test]
    fn adjusted_r2_absent_when_underdetermined() {
        let model = hp_model();
        let data = hp_data(3);
        let truth = init(&[("sigma0", 38.4577), ("k", 9.4836)]);
        let fit = fit_lm(&model, &data, &truth, &FitOptions::default()).unwrap();
        let v = validate(&model, &fit, &data).unwrap();
        assert!(v.adjusted_r2.is_none());
    }

    #[test]
    fn linear_space_rmse_squares_back_to_resnorm() {
        let model = hp_model();
        let data = hp_data(13);
        let noisy = Dataset::new(
            data.x.clone(),
            data.y.iter().enumerate().map(|(i, y)| y + (i as f64 - 6.0) * 0.3).collect(),
            "d",
            "sigma",
            "um",
            "MPa",
        )
        .unwrap();
        let fit = fit_lm(
            &model,
            &noisy,
            &init(&[("sigma0", 50.0), ("k", 5.0)]),
            &FitOptions::default(),
        )
        .unwrap();
        let v = validate(&model, &fit, &noisy).unwrap();
        let n = noisy.n as f64;
        assert!((v.rmse * v.rmse * n - fit.resnorm).abs() / fit.resnorm < 1e-9);
        // resnorm is literally the sum of squared residuals.
        let check: f64 = fit.residuals.iter().map(|r| r * r).sum();
        assert_eq!(check, fit.resnorm);
    }

    #[test]
    fn log_space_initial_predictions_must_be_positive() {
        let expr = parse("a - x", &["x"]).unwrap();
        let model = ParamModel::new(expr, "x").unwrap();
        let data = Dataset::new(vec![1.0, 5.0], vec![1.0, 2.0], "x", "y", "", "").unwrap();
        let opts = FitOptions {
            fit_space: FitSpace::Log10,
            ..FitOptions::default()
        };
        match fit_lm(&model, &data, &init(&[("a", 2.0)]), &opts) {
            Err(FitError::LogSpaceNegativePrediction { x, value }) => {
                assert_eq!(x, 5.0);
                assert_eq!(value, -3.0);
            }
            other => panic!("expected log-space prediction error, got {other:?}"),
        }
    }

    #[test]
    fn validate_zero_variance_y_is_an_error() {
        let model = hp_model();
        let data = Dataset::new(vec![4.0, 9.0], vec![5.0, 5.0], "d", "s", "", "").unwrap();
        let fit = fit_lm(
            &model,
            &data,
            &init(&[("sigma0", 5.0), ("k", 0.0)]),
            &FitOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            validate(&model, &fit, &data),
            Err(FitError::ZeroVarianceY)
        ));
    }

    #[test]
    fn jacobian_matches_hand_partials() {
        let model = hp_model();
        let data = Dataset::new(vec![4.0, 9.0, 16.0], vec![0.0, 0.0, 0.0], "d", "s", "", "").unwrap();
        let at = init(&[("sigma0", 40.0), ("k", 9.0)]);
        let jac = jacobian_fd(&model, &at, &data).unwrap();
        for (i, &d) in data.x.iter().enumerate() {
            assert!((jac[i][0] - 1.0).abs() < 1e-9);
            assert!((jac[i][1] - d.powf(-0.5)).abs() < 1e-8);
        }

        let paris = ParamModel::new(parse("C * dK ^ m", &["dK"]).unwrap(), "dK").unwrap();
        let pdata = Dataset::new(vec![10.0, 20.0], vec![0.0, 0.0], "dK", "r", "", "").unwrap();
        let at = init(&[("C", 1e-11), ("m", 3.0)]);
        let jac = jacobian_fd(&paris, &at, &pdata).unwrap();
        assert!((jac[0][0] - 1000.0).abs() / 1000.0 < 1e-6);
        let dm = 1e-11 * 10f64.powf(3.0) * 10f64.ln();
        assert!((jac[0][1] - dm).abs() / dm < 1e-6);
    }

    #[test]
    fn init_errors_are_specific() {
        let model = hp_model();
        let data = hp_data(5);
        assert!(matches!(
            fit_lm(&model, &data, &init(&[("sigma0", 1.0)]), &FitOptions::default()),
            Err(FitError::MissingInit(name)) if name == "k"
        ));
        assert!(matches!(
            fit_lm(
                &model,
                &data,
                &init(&[("sigma0", f64::NAN), ("k", 1.0)]),
                &FitOptions::default()
            ),
            Err(FitError::NonFiniteInit(_))
        ));
    }

    #[test]
    fn invalid_start_reports_offending_x() {
        let expr = parse("log(x - c)", &["x"]).unwrap();
        let model = ParamModel::new(expr, "x").unwrap();
        let data = Dataset::new(vec![3.0, 10.0], vec![1.0, 2.0], "x", "y", "", "").unwrap();
        match fit_lm(&model, &data, &init(&[("c", 5.0)]), &FitOptions::default()) {
            Err(FitError::ModelOutput { x, .. }) => assert_eq!(x, 3.0),
            other => panic!("expected model-output error, got {other:?}"),
        }
    }

    #[test]
    fn log_space_requires_positive_y() {
        let expr = parse("C * x ^ m", &["x"]).unwrap();
        let model = ParamModel::new(expr, "x").unwrap();
        let data = Dataset::new(vec![1.0, 2.0], vec![1.0, -2.0], "x", "y", "", "").unwrap();
        let opts = FitOptions {
            fit_space: FitSpace::Log10,
            ..FitOptions::default()
        };
        assert!(matches!(
            fit_lm(&model, &data, &init(&[("C", 1.0), ("m", 1.0)]), &opts),
            Err(FitError::LogSpaceNegativeY { index: 1, .. })
        ));
    }

    #[test]
    fn iteration_budget_exhaustion_is_a_soft_stop() {
        let expr = parse("C * x ^ m", &["x"]).unwrap();
        let model = ParamModel::new(expr, "x").unwrap();
        let truth = init(&[("C", 2.0e-3), ("m", 2.5)]);
        let x: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let y = model.predict_all(&x, &truth).unwrap();
        let data = Dataset::new(x, y, "x", "y", "", "").unwrap();
        let opts = FitOptions {
            max_iter: 2,
            ..FitOptions::default()
        };
        let fit = fit_lm(&model, &data, &init(&[("C", 1.0), ("m", 1.0)]), &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 2);
        assert!(fit.resnorm_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
