//! Keeping the per-gas weights honest against counted traffic.
//!
//! Online calibration is exponentially forgetting recursive least squares on
//! the estimator features. The recursion runs on an unconstrained estimate
//! `θ`; the published weights are its projection `max(0, θ)`. Feeding the
//! clamped weights back into the recursion lets a clamped gas push the
//! correlated ones without bound, so the projection stays on the output side. [`batch_fit`] is the offline reference: ordinary least squares
//! refined by accelerated projected gradient onto the non-negative orthant.

pub mod checkpoint;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::estimator::{env_factors, wind_dilution_correct, EnvCorrectionParams, WeightVector};
use crate::linalg::{self, Mat4, Vec4};
use crate::preprocess::BaselineVector;
use crate::types::{EnvConditions, GasVector, NodeSample};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("NUMERIC_BREAKDOWN: covariance lost positive definiteness and was reset")]
    NumericBreakdown,
    #[error("RANK_DEFICIENT: feature matrix has rank {rank}, need 4")]
    RankDeficient { rank: usize },
    #[error("NO_OVERLAP: fewer than two common minutes between prediction and truth")]
    NoOverlap,
    #[error("invalid calibration parameter: {0}")]
    InvalidParameter(String),
}

/// Regression features of one reading: `x_g = a_g · (1 + κ·wind) · max(0, c_g − b_g)`,
/// so that `w · x` equals the node estimate.
pub fn features<T: Scalar>(
    gases: &GasVector<T>,
    env: &EnvConditions<T>,
    b: &BaselineVector<T>,
    p: &EnvCorrectionParams<T>,
) -> GasVector<T> {
    let excess = gases.zip_map(&b.0, |_, c, base| (c - base).max(T::zero()));
    let corrected = wind_dilution_correct(&excess, env.wind_speed, p);
    corrected.zip_map(&env_factors(env, p), |_, x, a| a * x)
}

pub fn sample_features<T: Scalar>(s: &NodeSample<T>, b: &BaselineVector<T>, p: &EnvCorrectionParams<T>) -> GasVector<T> {
    features(&s.gases, &s.env, b, p)
}

/// Online calibration state.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibState<T> {
    theta: Vec4<T>,
    cov: Mat4<T>,
    lambda: T,
    delta: T,
    n_updates: u64,
    clamp_events: u64,
    breakdowns: u64,
}

impl<T: Scalar> CalibState<T> {
    /// Zero weights and covariance `delta · I`.
    pub fn new(lambda: T, delta: T) -> Result<Self, CalibError> {
        Self::with_weights(WeightVector::zeros(), lambda, delta)
    }

    pub fn with_weights(w: WeightVector<T>, lambda: T, delta: T) -> Result<Self, CalibError> {
        if !(lambda > T::zero() && lambda <= T::one()) {
            return Err(CalibError::InvalidParameter(format!("lambda {lambda} must lie in (0, 1]")));
        }
        if !(delta > T::zero() && delta.is_finite()) {
            return Err(CalibError::InvalidParameter(format!("delta {delta} must be positive")));
        }
        Ok(CalibState {
            theta: *w.as_gas_vector().as_array(),
            cov: linalg::identity(delta),
            lambda,
            delta,
            n_updates: 0,
            clamp_events: 0,
            breakdowns: 0,
        })
    }

    /// Rebuilds a state from checkpointed parts; the covariance must be
    /// symmetric positive definite.
    pub fn from_parts(
        theta: GasVector<T>,
        cov: [[T; 4]; 4],
        lambda: T,
        delta: T,
        counters: (u64, u64, u64),
    ) -> Result<Self, CalibError> {
        if !theta.iter().all(|(_, v)| v.is_finite()) {
            return Err(CalibError::InvalidParameter("estimate must be finite".into()));
        }
        let mut st = Self::with_weights(WeightVector::zeros(), lambda, delta)?;
        st.theta = *theta.as_array();
        if linalg::cholesky(&cov).is_none() || (0..4).any(|i| (0..i).any(|j| cov[i][j] != cov[j][i])) {
            return Err(CalibError::InvalidParameter("covariance is not symmetric positive definite".into()));
        }
        st.cov = cov;
        (st.n_updates, st.clamp_events, st.breakdowns) = counters;
        Ok(st)
    }

    /// Published weights, `max(0, θ)`.
    pub fn weights(&self) -> WeightVector<T> {
        WeightVector::new(GasVector::new(self.theta.map(|v| v.max(T::zero())))).expect("projection is non-negative and finite")
    }

    /// Unconstrained recursive estimate `θ`.
    pub fn estimate(&self) -> GasVector<T> {
        GasVector::new(self.theta)
    }

    pub fn covariance(&self) -> &[[T; 4]; 4] {
        &self.cov
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn n_updates(&self) -> u64 {
        self.n_updates
    }

    /// Updates after which at least one published weight was clamped to zero.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    pub fn breakdowns(&self) -> u64 {
        self.breakdowns
    }

    pub fn is_positive_definite(&self) -> bool {
        linalg::cholesky(&self.cov).is_some()
    }

    /// One forgetting RLS step on feature vector `x` and target `y`:
    ///
    /// ```text
    /// k = P x / (λ + xᵀ P x)
    /// θ ← θ + k (y − θᵀ x),   w = max(0, θ)
    /// P ← (P − k xᵀ P) / λ,  then symmetrised
    /// ```
    ///
    /// An all-zero `x` carries no information and leaves the state untouched,
    /// so long idle stretches do not inflate `P` through forgetting alone.
    ///
    /// If the new covariance is not positive definite (or the step produced
    /// non-finite numbers) it is reset to `δ·I` and
    /// [`CalibError::NumericBreakdown`] is returned; the state stays usable.
    pub fn update(&mut self, x: &GasVector<T>, y: T) -> Result<(), CalibError> {
        let x = *x.as_array();
        if !(x.iter().all(|v| v.is_finite()) && y.is_finite()) {
            return Err(CalibError::InvalidParameter("non-finite feature or target".into()));
        }
        if x.iter().all(|&v| v == T::zero()) {
            return Ok(());
        }
        let px = linalg::mat_vec(&self.cov, &x);
        let denom = self.lambda + linalg::dot(&x, &px);
        let gain = px.map(|v| v / denom);
        let innovation = y - linalg::dot(&self.theta, &x);

        let mut theta = self.theta;
        for (t, k) in theta.iter_mut().zip(gain) {
            *t += k * innovation;
        }
        self.n_updates += 1;
        if !theta.iter().all(|t| t.is_finite()) {
            self.cov = linalg::identity(self.delta);
            self.breakdowns += 1;
            return Err(CalibError::NumericBreakdown);
        }
        self.theta = theta;
        if theta.iter().any(|&t| t < T::zero()) {
            self.clamp_events += 1;
        }

        // P symmetric, so xᵀP = (Px)ᵀ.
        let mut next = self.cov;
        for i in 0..4 {
            for j in 0..4 {
                next[i][j] = (self.cov[i][j] - gain[i] * px[j]) / self.lambda;
            }
        }
        for i in 0..4 {
            for j in 0..i {
                let m = (next[i][j] + next[j][i]) / T::lit(2.0);
                next[i][j] = m;
                next[j][i] = m;
            }
        }
        if linalg::cholesky(&next).is_none() {
            self.cov = linalg::identity(self.delta);
            self.breakdowns += 1;
            return Err(CalibError::NumericBreakdown);
        }
        self.cov = next;
        Ok(())
    }
}

/// Functional form of [`CalibState::update`].
pub fn rls_update<T: Scalar>(st: &CalibState<T>, x: &GasVector<T>, y: T) -> (CalibState<T>, Result<(), CalibError>) {
    let mut next = st.clone();
    let outcome = next.update(x, y);
    (next, outcome)
}

const PG_MAX_ITER: usize = 200_000;

/// Non-negative least squares fit of `y ≈ w · x`.
///
/// Needs at least four samples spanning all four feature directions.
pub fn batch_fit<T: Scalar>(samples: &[(GasVector<T>, T)]) -> Result<WeightVector<T>, CalibError> {
    let rows: Vec<Vec4<T>> = samples.iter().map(|(x, _)| *x.as_array()).collect();
    let y: Vec<T> = samples.iter().map(|&(_, y)| y).collect();
    let ols = linalg::qr_least_squares(&rows, &y).map_err(|e| CalibError::RankDeficient { rank: e.rank })?;
    if ols.iter().all(|&w| w >= T::zero()) {
        return WeightVector::new(GasVector::new(ols)).map_err(|e| CalibError::InvalidParameter(e.to_string()));
    }

    let mut gram = [[T::zero(); 4]; 4];
    let mut rhs = [T::zero(); 4];
    for (r, &t) in rows.iter().zip(&y) {
        for i in 0..4 {
            rhs[i] += r[i] * t;
            for j in 0..4 {
                gram[i][j] += r[i] * r[j];
            }
        }
    }
    let step = T::one() / linalg::max_eigenvalue(&gram);
    let project = |v: Vec4<T>| v.map(|x| x.max(T::zero()));
    let mut w = project(ols);
    let mut z = w;
    let mut t = T::one();
    let tol = T::epsilon() * T::lit(16.0);
    for _ in 0..PG_MAX_ITER {
        let grad = {
            let gz = linalg::mat_vec(&gram, &z);
            std::array::from_fn::<T, 4, _>(|i| gz[i] - rhs[i])
        };
        let next = project(std::array::from_fn(|i| z[i] - step * grad[i]));
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
        let beta = (t - T::one()) / t_next;
        let moved = next.iter().zip(&w).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        let scale = next.iter().fold(T::one(), |m, a| m.max(a.abs()));
        z = std::array::from_fn(|i| (next[i] + beta * (next[i] - w[i])).max(T::zero()));
        w = next;
        t = t_next;
        if moved <= tol * scale {
            break;
        }
    }
    WeightVector::new(GasVector::new(w)).map_err(|e| CalibError::InvalidParameter(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport<T> {
    pub mae: T,
    pub rmse: T,
    /// `None` when either series has zero variance.
    pub pearson_r: Option<T>,
    pub n: usize,
    pub mean_truth: T,
}

/// Error statistics over the minutes present in both series.
pub fn evaluate<T: Scalar>(pred: &BTreeMap<i64, T>, truth: &BTreeMap<i64, T>) -> Result<FitReport<T>, CalibError> {
    let pairs: Vec<(T, T)> = pred.iter().filter_map(|(m, &p)| truth.get(m).map(|&t| (p, t))).collect();
    if pairs.len() < 2 {
        return Err(CalibError::NoOverlap);
    }
    let n = T::lit(pairs.len() as f64);
    let mae = pairs.iter().map(|&(p, t)| (p - t).abs()).sum::<T>() / n;
    let rmse = (pairs.iter().map(|&(p, t)| (p - t) * (p - t)).sum::<T>() / n).sqrt();
    let mean_p = pairs.iter().map(|&(p, _)| p).sum::<T>() / n;
    let mean_t = pairs.iter().map(|&(_, t)| t).sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(p, t) in &pairs {
        let (dp, dt) = (p - mean_p, t - mean_t);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    let pearson_r = (sxx > T::zero() && syy > T::zero()).then(|| (sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one()));
    Ok(FitReport { mae, rmse, pearson_r, n: pairs.len(), mean_truth: mean_t })
}
