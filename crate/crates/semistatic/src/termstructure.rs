//! Gaussian affine term-structure model.
//!
//! A d-factor short-rate model in the shifted mean-zero form: each factor
//! follows `dx_i = -a_i x_i dt + sigma_i . dW` with `x(0) = 0` and the short
//! rate is `r(t) = phi(t) + sum_i x_i(t)`, where the deterministic shift
//! `phi` reproduces a flat initial instantaneous forward curve `f0`. Bond
//! prices are exponential-affine, `P(t,T) = exp(A(t,T) - B(t,T).x)`, and all
//! coefficient integrals close in elementary functions for constant
//! parameters. `d = 1` is the Hull-White model; `d = 2` with correlated
//! drivers is G2++.

use crate::real::{lit, Real};
use serde::{Deserialize, Serialize};

/// Errors from model construction and coefficient evaluation.
#[derive(Debug, Clone, thiserror::Error)]
pub enum ModelError {
    #[error("invalid parameter: {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("volatility/correlation input is not positive semi-definite")]
    NotPositiveSemiDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("time order violated: t = {t} exceeds maturity {maturity}")]
    TimeOrder { t: f64, maturity: f64 },
    #[error("non-finite factor state")]
    NonFiniteState,
}

/// Log-affine bond-price coefficients for a fixed `(t, T)` pair:
/// `P(t,T) = exp(intercept - loadings . x_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BondCoeffs<T> {
    pub intercept: T,
    pub loadings: Vec<T>,
}

impl<T: Real> BondCoeffs<T> {
    /// Bond price at factor state `x`.
    pub fn price(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.loadings.len());
        let mut e = self.intercept;
        for (b, xi) in self.loadings.iter().zip(x) {
            e = e - *b * *xi;
        }
        e.exp()
    }
}

/// Constant-parameter Gaussian affine short-rate model on a flat initial
/// forward curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianModel<T: Real> {
    a: Vec<T>,
    /// Volatility matrix on independent Brownian drivers; row i drives
    /// factor i.
    sigma: Vec<Vec<T>>,
    /// Instantaneous correlations of the factor noises (derived from
    /// `sigma` row inner products).
    rho: Vec<Vec<T>>,
    /// Row norms of `sigma`: total volatility per factor.
    sigma_tilde: Vec<T>,
    f0: T,
}

impl<T: Real> GaussianModel<T> {
    /// Builds a model from mean reversions, the full volatility matrix
    /// (rows = factors, columns = independent Brownian drivers) and the
    /// flat initial forward rate.
    pub fn new(a: Vec<T>, sigma: Vec<Vec<T>>, f0: T) -> Result<Self, ModelError> {
        let d = a.len();
        if d == 0 {
            return Err(ModelError::InvalidParameter {
                name: "d",
                value: 0.0,
            });
        }
        if sigma.len() != d {
            return Err(ModelError::Dimension {
                expected: d,
                got: sigma.len(),
            });
        }
        for (i, ai) in a.iter().enumerate() {
            if !(ai.is_finite() && *ai > T::zero()) {
                return Err(ModelError::InvalidParameter {
                    name: "a",
                    value: ai.to_f64().unwrap_or(f64::NAN),
                });
            }
            if sigma[i].len() != d {
                return Err(ModelError::Dimension {
                    expected: d,
                    got: sigma[i].len(),
                });
            }
        }
        let mut sigma_tilde = Vec::with_capacity(d);
        for row in &sigma {
            let mut sq = T::zero();
            for s in row {
                if !s.is_finite() {
                    return Err(ModelError::InvalidParameter {
                        name: "sigma",
                        value: s.to_f64().unwrap_or(f64::NAN),
                    });
                }
                sq = sq + *s * *s;
            }
            let norm = sq.sqrt();
            if norm <= T::zero() {
                return Err(ModelError::InvalidParameter {
                    name: "sigma_tilde",
                    value: norm.to_f64().unwrap_or(f64::NAN),
                });
            }
            sigma_tilde.push(norm);
        }
        let mut rho = vec![vec![T::zero(); d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut dot = T::zero();
                for k in 0..d {
                    dot = dot + sigma[i][k] * sigma[j][k];
                }
                rho[i][j] = dot / (sigma_tilde[i] * sigma_tilde[j]);
            }
        }
        if !f0.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "f0",
                value: f0.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            a,
            sigma,
            rho,
            sigma_tilde,
            f0,
        })
    }

    /// Builds a model from per-factor total volatilities and an
    /// instantaneous correlation matrix (the one-dimensional Ito form).
    /// The volatility matrix is recovered via a Cholesky factor of the
    /// correlations.
    pub fn from_factor_vols(
        a: Vec<T>,
        vols: Vec<T>,
        corr: Vec<Vec<T>>,
        f0: T,
    ) -> Result<Self, ModelError> {
        let d = a.len();
        if vols.len() != d || corr.len() != d {
            return Err(ModelError::Dimension {
                expected: d,
                got: vols.len().max(corr.len()),
            });
        }
        let tol = lit::<T>(1e-12);
        for i in 0..d {
            if corr[i].len() != d {
                return Err(ModelError::Dimension {
                    expected: d,
                    got: corr[i].len(),
                });
            }
            if (corr[i][i] - T::one()).abs() > tol {
                return Err(ModelError::InvalidParameter {
                    name: "rho_diagonal",
                    value: corr[i][i].to_f64().unwrap_or(f64::NAN),
                });
            }
            for j in 0..d {
                if (corr[i][j] - corr[j][i]).abs() > tol {
                    return Err(ModelError::InvalidParameter {
                        name: "rho_symmetry",
                        value: corr[i][j].to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        let chol = cholesky(&corr).ok_or(ModelError::NotPositiveSemiDefinite)?;
        let mut sigma = vec![vec![T::zero(); d]; d];
        for i in 0..d {
            for k in 0..=i {
                sigma[i][k] = vols[i] * chol[i][k];
            }
        }
        Self::new(a, sigma, f0)
    }

    /// One-factor Hull-White shorthand.
    pub fn hull_white(a: T, sigma: T, f0: T) -> Result<Self, ModelError> {
        Self::new(vec![a], vec![vec![sigma]], f0)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn mean_reversion(&self) -> &[T] {
        &self.a
    }

    pub fn volatility_matrix(&self) -> &[Vec<T>] {
        &self.sigma
    }

    pub fn correlations(&self) -> &[Vec<T>] {
        &self.rho
    }

    pub fn factor_vols(&self) -> &[T] {
        &self.sigma_tilde
    }

    pub fn flat_forward(&self) -> T {
        self.f0
    }

    /// Initial discount curve `P(0,T) = exp(-f0 T)`.
    pub fn discount(&self, maturity: T) -> T {
        (-self.f0 * maturity).exp()
    }

    #[inline]
    fn b_factor(&self, i: usize, tau: T) -> T {
        (T::one() - (-self.a[i] * tau).exp()) / self.a[i]
    }

    /// Factor loadings `B(t,T)` of the log bond price.
    pub fn loadings(&self, t: T, maturity: T) -> Result<Vec<T>, ModelError> {
        check_order(t, maturity)?;
        let tau = maturity - t;
        Ok((0..self.dim()).map(|i| self.b_factor(i, tau)).collect())
    }

    /// Accumulated variance of the integrated factor sum over `[t, T]`,
    /// `Var[int_t^T sum_i x_i(u) du | F_t]`.
    pub(crate) fn integrated_variance(&self, t: T, maturity: T) -> T {
        let tau = maturity - t;
        let d = self.dim();
        let mut v = T::zero();
        for i in 0..d {
            for j in 0..d {
                let aij = self.a[i] + self.a[j];
                let term = tau - self.b_factor(i, tau) - self.b_factor(j, tau)
                    + (T::one() - (-aij * tau).exp()) / aij;
                v = v + self.rho[i][j] * self.sigma_tilde[i] * self.sigma_tilde[j]
                    / (self.a[i] * self.a[j])
                    * term;
            }
        }
        v
    }

    /// Log-affine bond coefficients on the flat initial curve.
    pub fn bond_coeffs(&self, t: T, maturity: T) -> Result<BondCoeffs<T>, ModelError> {
        check_nonnegative(t)?;
        let loadings = self.loadings(t, maturity)?;
        let half = lit::<T>(0.5);
        let intercept = -self.f0 * (maturity - t)
            + half
                * (self.integrated_variance(t, maturity)
                    - self.integrated_variance(T::zero(), maturity)
                    + self.integrated_variance(T::zero(), t));
        Ok(BondCoeffs {
            intercept,
            loadings,
        })
    }

    /// Zero-coupon bond price at state `x`.
    pub fn bond_price(&self, t: T, maturity: T, x: &[T]) -> Result<T, ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteState);
        }
        Ok(self.bond_coeffs(t, maturity)?.price(x))
    }

    /// Instantaneous discount-bond volatility vector, one component per
    /// Brownian driver: `nu_k(t,T) = sum_i B_i(t,T) sigma_ik`.
    pub fn bond_volatility(&self, t: T, maturity: T) -> Result<Vec<T>, ModelError> {
        let b = self.loadings(t, maturity)?;
        let d = self.dim();
        let mut nu = vec![T::zero(); d];
        for (k, nu_k) in nu.iter_mut().enumerate() {
            for i in 0..d {
                *nu_k = *nu_k + b[i] * self.sigma[i][k];
            }
        }
        Ok(nu)
    }

    /// Drift adjustment `sigma_i . nu(t, horizon)` appearing under the
    /// `horizon`-forward measure.
    pub fn forward_drift(&self, t: T, horizon: T) -> Result<Vec<T>, ModelError> {
        let b = self.loadings(t, horizon)?;
        let d = self.dim();
        let mut out = vec![T::zero(); d];
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..d {
                *o = *o + self.rho[i][j] * self.sigma_tilde[i] * self.sigma_tilde[j] * b[j];
            }
        }
        Ok(out)
    }

    /// Accumulated drift adjustment
    /// `Theta_i(t,T;H) = int_t^T sigma_i . nu(s,H) e^{-a_i (T-s)} ds`
    /// under the `H`-forward measure.
    pub fn theta(&self, t: T, maturity: T, horizon: T) -> Result<Vec<T>, ModelError> {
        check_order(t, maturity)?;
        check_order(maturity, horizon)?;
        let tau = maturity - t;
        let d = self.dim();
        let mut theta = vec![T::zero(); d];
        for (i, th) in theta.iter_mut().enumerate() {
            for j in 0..d {
                let aij = self.a[i] + self.a[j];
                let term = self.b_factor(i, tau)
                    - (-self.a[j] * (horizon - maturity)).exp()
                        * (T::one() - (-aij * tau).exp())
                        / aij;
                *th = *th
                    + self.rho[i][j] * self.sigma_tilde[i] * self.sigma_tilde[j] / self.a[j]
                        * term;
            }
        }
        Ok(theta)
    }

    /// Conditional covariance of `x_T | x_t`; measure-independent.
    pub fn factor_covariance(&self, t: T, maturity: T) -> Result<Vec<Vec<T>>, ModelError> {
        check_order(t, maturity)?;
        let tau = maturity - t;
        let d = self.dim();
        let mut c = vec![vec![T::zero(); d]; d];
        for i in 0..d {
            for j in 0..d {
                let aij = self.a[i] + self.a[j];
                c[i][j] = self.rho[i][j] * self.sigma_tilde[i] * self.sigma_tilde[j]
                    * (T::one() - (-aij * tau).exp())
                    / aij;
            }
        }
        Ok(c)
    }

    /// Mean and covariance of `x_Tm | x_t = x` under the `Tm`-forward
    /// measure.
    pub fn forward_measure_moments(
        &self,
        t: T,
        tm: T,
        x: &[T],
    ) -> Result<(Vec<T>, Vec<Vec<T>>), ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let theta = self.theta(t, tm, tm)?;
        let cov = self.factor_covariance(t, tm)?;
        let tau = tm - t;
        let mean = (0..self.dim())
            .map(|i| x[i] * (-self.a[i] * tau).exp() - theta[i])
            .collect();
        Ok((mean, cov))
    }

    /// Deterministic short-rate shift reproducing the flat initial curve:
    /// `r(t) = shift(t) + sum_i x_i(t)`.
    pub fn short_rate_shift(&self, t: T) -> T {
        let d = self.dim();
        let half = lit::<T>(0.5);
        let mut s = self.f0;
        for i in 0..d {
            for j in 0..d {
                s = s + half
                    * self.rho[i][j]
                    * self.sigma_tilde[i]
                    * self.sigma_tilde[j]
                    * self.b_factor(i, t)
                    * self.b_factor(j, t);
            }
        }
        s
    }

    /// Short rate at state `x`.
    pub fn short_rate(&self, t: T, x: &[T]) -> T {
        let mut r = self.short_rate_shift(t);
        for xi in x {
            r = r + *xi;
        }
        r
    }
}

fn check_order<T: Real>(t: T, maturity: T) -> Result<(), ModelError> {
    if t > maturity {
        return Err(ModelError::TimeOrder {
            t: t.to_f64().unwrap_or(f64::NAN),
            maturity: maturity.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

fn check_nonnegative<T: Real>(t: T) -> Result<(), ModelError> {
    if t < T::zero() {
        return Err(ModelError::TimeOrder {
            t: t.to_f64().unwrap_or(f64::NAN),
            maturity: 0.0,
        });
    }
    Ok(())
}

/// Lower-triangular Cholesky factor; `None` when a pivot is not strictly
/// positive.
fn cholesky<T: Real>(m: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = m.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            if i == j {
                if s <= T::zero() {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}
