//! Swap analytics and swaption contract definitions.
//!
//! Contracts are described by a date ladder `T_0 < ... < T_M`: exercising at
//! a monitor date `T_m` enters the underlying swap with payments at
//! `T_{m+1}, ..., T_M`. A Bermudan monitors every ladder date before
//! maturity, a European only the first one; custom monitor sets cover
//! sub-schedule variants.

use crate::real::Real;
use crate::termstructure::{GaussianModel, ModelError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ContractError {
    #[error("invalid contract: {0}")]
    Invalid(String),
    #[error("exercise index {index} out of range (max {max})")]
    ExerciseIndex { index: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Fixed-leg direction of the underlying swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapSide {
    /// Pay fixed, receive floating.
    Payer,
    /// Receive fixed, pay floating.
    Receiver,
}

impl SwapSide {
    /// Payoff sign: +1 payer, -1 receiver.
    pub fn sign<T: Real>(self) -> T {
        match self {
            SwapSide::Payer => T::one(),
            SwapSide::Receiver => -T::one(),
        }
    }
}

/// A swaption on a fixed-vs-floating swap, exercisable at a set of monitor
/// dates taken from the ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BermudanSpec<T: Real> {
    notional: T,
    side: SwapSide,
    strike: T,
    /// Date ladder `T_0..=T_M` (years); payments occur at indices `1..=M`.
    dates: Vec<T>,
    /// Ladder indices at which exercise is allowed, strictly below `M`.
    monitor: Vec<usize>,
}

/// A European swaption is the single-monitor-date degenerate case.
pub type EuropeanSwaptionSpec<T> = BermudanSpec<T>;

impl<T: Real> BermudanSpec<T> {
    pub fn new(
        notional: T,
        side: SwapSide,
        strike: T,
        dates: Vec<T>,
        monitor: Vec<usize>,
    ) -> Result<Self, ContractError> {
        if dates.len() < 2 {
            return Err(ContractError::Invalid(
                "ladder needs at least two dates".into(),
            ));
        }
        if !(notional > T::zero()) {
            return Err(ContractError::Invalid("notional must be positive".into()));
        }
        if !strike.is_finite() {
            return Err(ContractError::Invalid("strike must be finite".into()));
        }
        for w in dates.windows(2) {
            if !(w[1] > w[0]) {
                return Err(ContractError::Invalid(
                    "ladder dates must be strictly increasing".into(),
                ));
            }
        }
        if dates[0] < T::zero() {
            return Err(ContractError::Invalid(
                "first monitor date must be nonnegative".into(),
            ));
        }
        if monitor.is_empty() {
            return Err(ContractError::Invalid(
                "at least one monitor date required".into(),
            ));
        }
        let max = dates.len() - 1;
        for w in monitor.windows(2) {
            if w[1] <= w[0] {
                return Err(ContractError::Invalid(
                    "monitor indices must be strictly increasing".into(),
                ));
            }
        }
        if *monitor.last().unwrap() >= max {
            return Err(ContractError::ExerciseIndex {
                index: *monitor.last().unwrap(),
                max: max - 1,
            });
        }
        Ok(Self {
            notional,
            side,
            strike,
            dates,
            monitor,
        })
    }

    /// Bermudan with payment frequency `freq` (years) between `t0` and
    /// `tm`, exercisable at every fixing date.
    pub fn bermudan(
        notional: T,
        side: SwapSide,
        strike: T,
        t0: T,
        tm: T,
        freq: T,
    ) -> Result<Self, ContractError> {
        let dates = build_ladder(t0, tm, freq)?;
        let monitor = (0..dates.len() - 1).collect();
        Self::new(notional, side, strike, dates, monitor)
    }

    /// European swaption: same swap, single exercise at `t0`.
    pub fn european(
        notional: T,
        side: SwapSide,
        strike: T,
        t0: T,
        tm: T,
        freq: T,
    ) -> Result<Self, ContractError> {
        let dates = build_ladder(t0, tm, freq)?;
        Self::new(notional, side, strike, dates, vec![0])
    }

    pub fn notional(&self) -> T {
        self.notional
    }

    pub fn side(&self) -> SwapSide {
        self.side
    }

    pub fn strike(&self) -> T {
        self.strike
    }

    /// Full date ladder `T_0..=T_M`.
    pub fn ladder(&self) -> &[T] {
        &self.dates
    }

    /// Ladder indices at which exercise is allowed.
    pub fn monitor_indices(&self) -> &[usize] {
        &self.monitor
    }

    pub fn monitor_dates(&self) -> Vec<T> {
        self.monitor.iter().map(|&m| self.dates[m]).collect()
    }

    /// Final payment date `T_M`, the natural forward-measure horizon.
    pub fn maturity(&self) -> T {
        *self.dates.last().unwrap()
    }

    pub fn year_fraction(&self, j: usize) -> T {
        self.dates[j] - self.dates[j - 1]
    }

    /// Returns a copy with the strike replaced.
    pub fn with_strike(&self, strike: T) -> Self {
        let mut spec = self.clone();
        spec.strike = strike;
        spec
    }

    fn check_index(&self, m: usize) -> Result<(), ContractError> {
        if m + 1 >= self.dates.len() {
            return Err(ContractError::ExerciseIndex {
                index: m,
                max: self.dates.len() - 2,
            });
        }
        Ok(())
    }

    /// Annuity of the residual swap after exercise at ladder index `m`:
    /// `A = sum_{j=m+1}^{M} dT_j P(t, T_j)`.
    pub fn annuity(
        &self,
        model: &GaussianModel<T>,
        t: T,
        x: &[T],
        m: usize,
    ) -> Result<T, ContractError> {
        self.check_index(m)?;
        let mut a = T::zero();
        for j in m + 1..self.dates.len() {
            a = a + self.year_fraction(j) * model.bond_price(t, self.dates[j], x)?;
        }
        Ok(a)
    }

    /// Par rate of the residual swap, telescoped:
    /// `S = (P(t,T_m) - P(t,T_M)) / A`.
    pub fn swap_rate(
        &self,
        model: &GaussianModel<T>,
        t: T,
        x: &[T],
        m: usize,
    ) -> Result<T, ContractError> {
        self.check_index(m)?;
        let front = model.bond_price(t, self.dates[m], x)?;
        let back = model.bond_price(t, self.maturity(), x)?;
        Ok((front - back) / self.annuity(model, t, x, m)?)
    }

    /// Exercise payoff at monitor ladder index `m`, evaluated at the
    /// monitor date itself: `h_m = sign * N * A * (S - K)`. May be
    /// negative; callers take the max against zero or a continuation.
    pub fn exercise_value(
        &self,
        model: &GaussianModel<T>,
        x: &[T],
        m: usize,
    ) -> Result<T, ContractError> {
        self.check_index(m)?;
        let t = self.dates[m];
        // At t = T_m the front bond is 1, so A*(S - K) = 1 - P(t,T_M) - K*A.
        let back = model.bond_price(t, self.maturity(), x)?;
        let annuity = self.annuity(model, t, x, m)?;
        let swap_value = T::one() - back - self.strike * annuity;
        Ok(self.side.sign::<T>() * self.notional * swap_value)
    }
}

fn build_ladder<T: Real>(t0: T, tm: T, freq: T) -> Result<Vec<T>, ContractError> {
    if !(freq > T::zero()) || !(tm > t0) {
        return Err(ContractError::Invalid(
            "need tm > t0 and a positive frequency".into(),
        ));
    }
    let span = (tm - t0) / freq;
    let n = span.round();
    if (span - n).abs() > T::from_f64(1e-9).unwrap() || n < T::one() {
        return Err(ContractError::Invalid(
            "ladder span must be an integer number of periods".into(),
        ));
    }
    let n = n.to_usize().unwrap();
    let mut dates = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let kt = T::from_usize(k).unwrap();
        dates.push(if k == n { tm } else { t0 + kt * freq });
    }
    Ok(dates)
}
