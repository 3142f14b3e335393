//! Closed-form valuation of a hedge network as an options portfolio.
//!
//! Each hidden node is a position in a simple instrument on discount
//! bonds: a forward, a European bond call or put (priced by the Black
//! formula under the Gaussian model), a worthless claim, or an option on
//! a weighted sum of log bond prices (a Gaussian variable, so the
//! expectation closes). Summing node values weighted by the output layer
//! prices the whole replication portfolio at any time up to its expiry,
//! which is what makes continuation values and price bounds
//! simulation-free.

use crate::real::{lit, norm_cdf, norm_pdf, Real};
use crate::regression::{HedgeNetwork, NetworkDesign};
use crate::termstructure::{BondCoeffs, GaussianModel, ModelError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum PricingError {
    #[error("valuation time {t} is after portfolio expiry {expiry}")]
    TimeOrder { t: f64, expiry: f64 },
    #[error("degenerate volatility: option node with zero integrated variance before expiry")]
    DegenerateVolatility,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("node/design mismatch: {0}")]
    Design(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Instrument type implied by the signs of the denormalized node
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Forward,
    Call,
    Put,
    Worthless,
    LogBasket,
}

/// One hidden node viewed as a portfolio position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortfolioNode<T: Real> {
    pub kind: NodeKind,
    /// Maturity offsets of the underlying bonds past the portfolio
    /// expiry; a single entry except for log baskets.
    pub offsets: Vec<T>,
    /// Position size including the output-layer weight (units of the
    /// option/forward for bond nodes).
    pub quantity: T,
    /// Option strike; zero for forwards and worthless nodes.
    pub strike: T,
    /// Raw denormalized first-layer weights of the node.
    pub weights: Vec<T>,
    /// Raw denormalized bias.
    pub bias: T,
    /// Denormalized output weight applied by the portfolio sum.
    pub out_weight: T,
}

fn classify<T: Real>(w: T, b: T) -> NodeKind {
    if w > T::zero() {
        if b >= T::zero() {
            NodeKind::Forward
        } else {
            NodeKind::Call
        }
    } else if w < T::zero() {
        if b > T::zero() {
            NodeKind::Put
        } else {
            NodeKind::Worthless
        }
    } else if b >= T::zero() {
        // Pure cash leg.
        NodeKind::Forward
    } else {
        NodeKind::Worthless
    }
}

/// Bond maturity offsets used as regression assets at a monitor date:
/// `d` bonds equally spaced up to the contract horizon, so the one-factor
/// case reduces to the single horizon bond.
pub fn input_offsets<T: Real>(expiry: T, horizon: T, d: usize) -> Vec<T> {
    let df = T::from_usize(d).unwrap();
    (1..=d)
        .map(|j| (horizon - expiry) * T::from_usize(j).unwrap() / df)
        .collect()
}

/// Regression asset vector at the expiry date: bond prices, or their logs
/// for the fully-connected design.
pub fn asset_inputs<T: Real>(
    model: &GaussianModel<T>,
    expiry: T,
    x: &[T],
    offsets: &[T],
    design: NetworkDesign,
) -> Result<Vec<T>, ModelError> {
    let mut z = Vec::with_capacity(offsets.len());
    for &delta in offsets {
        let p = model.bond_price(expiry, expiry + delta, x)?;
        z.push(if design.uses_log_inputs() { p.ln() } else { p });
    }
    Ok(z)
}

/// Decomposes a network into portfolio nodes (one per hidden node).
pub fn portfolio_nodes<T: Real>(
    net: &HedgeNetwork<T>,
    offsets: &[T],
) -> Result<Vec<PortfolioNode<T>>, PricingError> {
    if offsets.len() != net.input_dim() {
        return Err(PricingError::Dimension {
            expected: net.input_dim(),
            got: offsets.len(),
        });
    }
    let dw = net.denormalized_weights();
    let d = net.input_dim();
    let q = net.hidden_nodes();
    let mut nodes = Vec::with_capacity(q);
    for j in 0..q {
        let out = dw.w2[j];
        let bias = dw.b[j];
        if net.design() == NetworkDesign::FullyConnectedLog {
            nodes.push(PortfolioNode {
                kind: NodeKind::LogBasket,
                offsets: offsets.to_vec(),
                quantity: out,
                strike: -bias,
                weights: dw.w1[j * d..(j + 1) * d].to_vec(),
                bias,
                out_weight: out,
            });
            continue;
        }
        // Bond node: exactly one admissible input column.
        let k = (0..d)
            .find(|&k| net.mask()[j * d + k])
            .expect("bond node with empty mask row");
        let w = dw.w1[j * d + k];
        let kind = classify(w, bias);
        let (quantity, strike) = match kind {
            NodeKind::Forward => (out * w, T::zero()),
            NodeKind::Call => (out * w, -bias / w),
            NodeKind::Put => (-out * w, bias / -w),
            NodeKind::Worthless => (T::zero(), T::zero()),
            NodeKind::LogBasket => unreachable!(),
        };
        nodes.push(PortfolioNode {
            kind,
            offsets: vec![offsets[k]],
            quantity,
            strike,
            weights: vec![w],
            bias,
            out_weight: out,
        });
    }
    Ok(nodes)
}

/// Black value of one bond node with coefficients `(w, b)` on underlying
/// price `p_under`, expiry bond price `p_expiry` and integrated log-price
/// volatility `sqrt_sigma` (zero selects the intrinsic payoff).
pub(crate) fn bond_node_value<T: Real>(
    kind: NodeKind,
    w: T,
    b: T,
    p_under: T,
    p_expiry: T,
    sqrt_sigma: T,
) -> T {
    if sqrt_sigma == T::zero() {
        // Intrinsic: the exact ReLU payoff.
        let payoff = w * p_under + b * p_expiry;
        return if payoff > T::zero() { payoff } else { T::zero() };
    }
    match kind {
        NodeKind::Worthless => T::zero(),
        NodeKind::Forward => w * p_under + b * p_expiry,
        NodeKind::Call => {
            let half = lit::<T>(0.5);
            let d_plus =
                ((-w * p_under / (b * p_expiry)).ln() + half * sqrt_sigma * sqrt_sigma)
                    / sqrt_sigma;
            let d_minus = d_plus - sqrt_sigma;
            w * p_under * norm_cdf(d_plus) + b * p_expiry * norm_cdf(d_minus)
        }
        NodeKind::Put => {
            // Quantity |w| of puts struck at b/|w|: the Black value is
            // b P_e Phi(-d-) + w P Phi(-d+) (w < 0 here).
            let half = lit::<T>(0.5);
            let d_plus =
                ((-w * p_under / (b * p_expiry)).ln() + half * sqrt_sigma * sqrt_sigma)
                    / sqrt_sigma;
            let d_minus = d_plus - sqrt_sigma;
            b * p_expiry * norm_cdf(-d_minus) + w * p_under * norm_cdf(-d_plus)
        }
        NodeKind::LogBasket => unreachable!("log nodes are priced separately"),
    }
}

/// Value of a single bond node (forward/call/put/worthless), excluding
/// its output weight.
pub fn node_value_local<T: Real>(
    model: &GaussianModel<T>,
    t: T,
    x: &[T],
    node: &PortfolioNode<T>,
    expiry: T,
) -> Result<T, PricingError> {
    if node.kind == NodeKind::LogBasket {
        return Err(PricingError::Design(
            "log-basket node passed to the bond-node valuation".into(),
        ));
    }
    check_expiry(t, expiry)?;
    let delta = node.offsets[0];
    let w = node.weights[0];
    let b = node.bias;
    let p_expiry = model.bond_price(t, expiry, x)?;
    let p_under = model.bond_price(t, expiry + delta, x)?;
    let sqrt_sigma = if t == expiry {
        T::zero()
    } else {
        let s = integrated_bond_variance(model, t, expiry, delta)?;
        if s <= T::zero() {
            if matches!(node.kind, NodeKind::Call | NodeKind::Put) {
                return Err(PricingError::DegenerateVolatility);
            }
            T::zero()
        } else {
            s.sqrt()
        }
    };
    // At expiry the front bond is worth one: intrinsic payoff.
    let p_expiry = if t == expiry { T::one() } else { p_expiry };
    Ok(bond_node_value(
        node.kind, w, b, p_under, p_expiry, sqrt_sigma,
    ))
}

/// Value of a single log-basket node, excluding its output weight.
pub fn node_value_log<T: Real>(
    model: &GaussianModel<T>,
    t: T,
    x: &[T],
    node: &PortfolioNode<T>,
    expiry: T,
) -> Result<T, PricingError> {
    if node.kind != NodeKind::LogBasket {
        return Err(PricingError::Design(
            "bond node passed to the log-basket valuation".into(),
        ));
    }
    check_expiry(t, expiry)?;
    let d = node.weights.len();
    if x.len() != model.dim() || d != model.dim() {
        return Err(PricingError::Dimension {
            expected: model.dim(),
            got: d.max(x.len()),
        });
    }
    let (mu, cov) = model.forward_measure_moments(t, expiry, x)?;
    let mut const_a = T::zero();
    let mut m = vec![T::zero(); d];
    for (j, &delta) in node.offsets.iter().enumerate() {
        let coeffs = model.bond_coeffs(expiry, expiry + delta)?;
        const_a = const_a + node.weights[j] * coeffs.intercept;
        for i in 0..d {
            m[i] = m[i] + node.weights[j] * coeffs.loadings[i];
        }
    }
    let mut mu_y = const_a;
    let mut var_y = T::zero();
    for i in 0..d {
        mu_y = mu_y - m[i] * mu[i];
        for jj in 0..d {
            var_y = var_y + m[i] * cov[i][jj] * m[jj];
        }
    }
    let p_expiry = model.bond_price(t, expiry, x)?;
    let moneyness = mu_y + node.bias; // mu_Y - strike
    if var_y <= T::zero() {
        return Ok(p_expiry * moneyness.max(T::zero()));
    }
    let sigma_y = var_y.sqrt();
    let dd = moneyness / sigma_y;
    Ok(p_expiry * (sigma_y * norm_pdf(dd) + moneyness * norm_cdf(dd)))
}

/// Integrated squared volatility of the forward bond-price log over
/// `[t, expiry]` for a bond maturing `delta` past the expiry; equals the
/// loading-weighted factor covariance.
fn integrated_bond_variance<T: Real>(
    model: &GaussianModel<T>,
    t: T,
    expiry: T,
    delta: T,
) -> Result<T, PricingError> {
    let b = model.loadings(expiry, expiry + delta)?;
    let cov = model.factor_covariance(t, expiry)?;
    let mut s = T::zero();
    for i in 0..model.dim() {
        for j in 0..model.dim() {
            s = s + b[i] * cov[i][j] * b[j];
        }
    }
    Ok(s)
}

fn check_expiry<T: Real>(t: T, expiry: T) -> Result<(), PricingError> {
    if t > expiry {
        return Err(PricingError::TimeOrder {
            t: t.to_f64().unwrap_or(f64::NAN),
            expiry: expiry.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Portfolio value at `(t, x)` of the network expiring at `expiry`:
/// the closed-form conditional expectation of its payoff, i.e. the
/// continuation value it represents.
pub fn portfolio_value<T: Real>(
    model: &GaussianModel<T>,
    t: T,
    x: &[T],
    net: &HedgeNetwork<T>,
    expiry: T,
    offsets: &[T],
) -> Result<T, PricingError> {
    Ok(PortfolioPricer::new(model, t, net, expiry, offsets)?.value(x))
}

enum CompiledNodes<T: Real> {
    /// Bond nodes: `(kind, input index, w, b, out_weight)`.
    Local(Vec<(NodeKind, usize, T, T, T)>),
    /// Log nodes: `(const_a, m, sigma_y, bias, out_weight)`.
    Log(Vec<(T, Vec<T>, T, T, T)>),
}

/// Pre-compiled portfolio valuation for one `(t, expiry)` pair, for
/// repeated evaluation across many factor states.
pub struct PortfolioPricer<T: Real> {
    bond_expiry: BondCoeffs<T>,
    bond_under: Vec<BondCoeffs<T>>,
    sqrt_sigma: Vec<T>,
    at_expiry: bool,
    nodes: CompiledNodes<T>,
    /// Forward-measure state decay and drift, log designs only.
    decay: Vec<T>,
    theta: Vec<T>,
    dim: usize,
}

impl<T: Real> PortfolioPricer<T> {
    pub fn new(
        model: &GaussianModel<T>,
        t: T,
        net: &HedgeNetwork<T>,
        expiry: T,
        offsets: &[T],
    ) -> Result<Self, PricingError> {
        check_expiry(t, expiry)?;
        if offsets.len() != net.input_dim() {
            return Err(PricingError::Dimension {
                expected: net.input_dim(),
                got: offsets.len(),
            });
        }
        let at_expiry = t == expiry;
        let d_in = net.input_dim();
        let d = model.dim();
        let dw = net.denormalized_weights();
        let bond_expiry = model.bond_coeffs(t, expiry)?;
        let mut bond_under = Vec::with_capacity(d_in);
        let mut sqrt_sigma = Vec::with_capacity(d_in);
        for &delta in offsets {
            bond_under.push(model.bond_coeffs(t, expiry + delta)?);
            if at_expiry {
                sqrt_sigma.push(T::zero());
            } else {
                let s = integrated_bond_variance(model, t, expiry, delta)?;
                sqrt_sigma.push(if s > T::zero() { s.sqrt() } else { T::zero() });
            }
        }

        let nodes = if net.design() == NetworkDesign::FullyConnectedLog {
            let cov = model.factor_covariance(t, expiry)?;
            let mut compiled = Vec::with_capacity(net.hidden_nodes());
            for j in 0..net.hidden_nodes() {
                let w = &dw.w1[j * d_in..(j + 1) * d_in];
                let mut const_a = T::zero();
                let mut m = vec![T::zero(); d];
                for (k, &delta) in offsets.iter().enumerate() {
                    let coeffs = model.bond_coeffs(expiry, expiry + delta)?;
                    const_a = const_a + w[k] * coeffs.intercept;
                    for i in 0..d {
                        m[i] = m[i] + w[k] * coeffs.loadings[i];
                    }
                }
                let mut var_y = T::zero();
                for i in 0..d {
                    for jj in 0..d {
                        var_y = var_y + m[i] * cov[i][jj] * m[jj];
                    }
                }
                let sigma_y = if var_y > T::zero() {
                    var_y.sqrt()
                } else {
                    T::zero()
                };
                compiled.push((const_a, m, sigma_y, dw.b[j], dw.w2[j]));
            }
            CompiledNodes::Log(compiled)
        } else {
            let mut compiled = Vec::with_capacity(net.hidden_nodes());
            for j in 0..net.hidden_nodes() {
                let k = (0..d_in)
                    .find(|&k| net.mask()[j * d_in + k])
                    .expect("bond node with empty mask row");
                let w = dw.w1[j * d_in + k];
                let b = dw.b[j];
                let kind = classify(w, b);
                if !at_expiry
                    && matches!(kind, NodeKind::Call | NodeKind::Put)
                    && sqrt_sigma[k] <= T::zero()
                {
                    return Err(PricingError::DegenerateVolatility);
                }
                compiled.push((kind, k, w, b, dw.w2[j]));
            }
            CompiledNodes::Local(compiled)
        };

        let (decay, theta) = if matches!(nodes, CompiledNodes::Log(_)) {
            let tau = expiry - t;
            let decay = model
                .mean_reversion()
                .iter()
                .map(|&a| (-a * tau).exp())
                .collect();
            let theta = model.theta(t, expiry, expiry)?;
            (decay, theta)
        } else {
            (Vec::new(), Vec::new())
        };

        Ok(Self {
            bond_expiry,
            bond_under,
            sqrt_sigma,
            at_expiry,
            nodes,
            decay,
            theta,
            dim: d,
        })
    }

    /// Portfolio value at factor state `x`.
    pub fn value(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dim);
        match &self.nodes {
            CompiledNodes::Local(nodes) => {
                let p_expiry = if self.at_expiry {
                    T::one()
                } else {
                    self.bond_expiry.price(x)
                };
                let p_under: Vec<T> = self.bond_under.iter().map(|c| c.price(x)).collect();
                let mut acc = T::zero();
                for &(kind, k, w, b, out) in nodes {
                    if kind == NodeKind::Worthless {
                        continue;
                    }
                    acc = acc
                        + out
                            * bond_node_value(kind, w, b, p_under[k], p_expiry, self.sqrt_sigma[k]);
                }
                acc
            }
            CompiledNodes::Log(nodes) => {
                let p_expiry = if self.at_expiry {
                    T::one()
                } else {
                    self.bond_expiry.price(x)
                };
                // Forward-measure mean of x at expiry.
                let mut acc = T::zero();
                for (const_a, m, sigma_y, bias, out) in nodes {
                    let mut mu_y = *const_a;
                    for i in 0..self.dim {
                        mu_y = mu_y - m[i] * (x[i] * self.decay[i] - self.theta[i]);
                    }
                    let moneyness = mu_y + *bias;
                    let v = if *sigma_y > T::zero() {
                        let dd = moneyness / *sigma_y;
                        *sigma_y * norm_pdf(dd) + moneyness * norm_cdf(dd)
                    } else {
                        moneyness.max(T::zero())
                    };
                    acc = acc + *out * p_expiry * v;
                }
                acc
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::SwapSide;
    use crate::regression::NormConstants;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn hw() -> GaussianModel<f64> {
        GaussianModel::hull_white(0.01, 0.01, 0.03).unwrap()
    }

    fn g2() -> GaussianModel<f64> {
        GaussianModel::from_factor_vols(
            vec![0.07, 0.08],
            vec![0.015, 0.008],
            vec![vec![1.0, -0.6], vec![-0.6, 1.0]],
            0.03,
        )
        .unwrap()
    }

    fn random_net(design: NetworkDesign, q: usize, d: usize, seed: u64) -> HedgeNetwork<f64> {
        let mut net =
            HedgeNetwork::initialize(design, q, d, SwapSide::Receiver, None, seed).unwrap();
        net.set_normalization(NormConstants {
            mu_z: vec![0.85; d],
            sigma_z: vec![0.05; d],
            sigma_v: 40.0,
        })
        .unwrap();
        net
    }

    #[test]
    fn offsets_equally_spaced_ending_at_horizon() {
        let offs = input_offsets(1.0, 6.0, 1);
        assert_eq!(offs, vec![5.0]);
        let offs2 = input_offsets(2.0, 6.0, 2);
        assert_eq!(offs2, vec![2.0, 4.0]);
    }

    #[test]
    fn classification_follows_sign_table() {
        assert_eq!(classify(1.0, 0.5), NodeKind::Forward);
        assert_eq!(classify(1.0, 0.0), NodeKind::Forward);
        assert_eq!(classify(1.0, -0.5), NodeKind::Call);
        assert_eq!(classify(-1.0, 0.5), NodeKind::Put);
        assert_eq!(classify(-1.0, -0.5), NodeKind::Worthless);
        assert_eq!(classify(-1.0, 0.0), NodeKind::Worthless);
        assert_eq!(classify(0.0, 0.3), NodeKind::Forward);
        assert_eq!(classify(0.0, -0.3), NodeKind::Worthless);
    }

    #[test]
    fn trivial_node_values() {
        let model = hw();
        let worthless = PortfolioNode {
            kind: NodeKind::Worthless,
            offsets: vec![5.0],
            quantity: 0.0,
            strike: 0.0,
            weights: vec![-1.0],
            bias: -0.2,
            out_weight: 1.0,
        };
        assert_abs_diff_eq!(
            node_value_local(&model, 0.0, &[0.0], &worthless, 1.0).unwrap(),
            0.0
        );
        let pure_bond = PortfolioNode {
            kind: NodeKind::Forward,
            offsets: vec![5.0],
            quantity: 1.0,
            strike: 0.0,
            weights: vec![1.0],
            bias: 0.0,
            out_weight: 1.0,
        };
        assert_relative_eq!(
            node_value_local(&model, 0.0, &[0.0], &pure_bond, 1.0).unwrap(),
            model.bond_price(0.0, 6.0, &[0.0]).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn call_node_matches_quadrature_oracle() {
        // Price E^Q[(1/B(1)) relu(P(1,6) - 0.9)] as
        // P(t,1) * E^{1-fwd}[relu(...)] by Simpson quadrature over the
        // Gaussian factor at expiry.
        let model = hw();
        let node = PortfolioNode {
            kind: NodeKind::Call,
            offsets: vec![5.0],
            quantity: 1.0,
            strike: 0.9,
            weights: vec![1.0],
            bias: -0.9,
            out_weight: 1.0,
        };
        for &(t, x0) in &[(0.0, 0.0), (0.25, 0.01), (0.5, -0.015)] {
            let closed = node_value_local(&model, t, &[x0], &node, 1.0).unwrap();
            let (mu, cov) = model.forward_measure_moments(t, 1.0, &[x0]).unwrap();
            let sd = cov[0][0].sqrt();
            let n = 20_000;
            let lo = mu[0] - 8.5 * sd;
            let h = 17.0 * sd / n as f64;
            let payoff = |x: f64| -> f64 {
                let p = model.bond_price(1.0, 6.0, &[x]).unwrap();
                (p - 0.9).max(0.0)
            };
            let dens = |x: f64| {
                let u = (x - mu[0]) / sd;
                (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            };
            let mut acc = payoff(lo) * dens(lo);
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                let x = lo + k as f64 * h;
                acc += w * payoff(x) * dens(x);
            }
            let x_hi = lo + n as f64 * h;
            acc += payoff(x_hi) * dens(x_hi);
            let quad = model.bond_price(t, 1.0, &[x0]).unwrap() * acc * h / 3.0;
            assert_relative_eq!(closed, quad, epsilon = 1e-7);
        }
    }

    #[test]
    fn put_call_forward_parity() {
        // call - put on the same (|w|, strike) equals the forward payoff
        // value: w*P_under - K*P_expiry.
        let model = hw();
        let strike = 0.88;
        let call = PortfolioNode {
            kind: NodeKind::Call,
            offsets: vec![5.0],
            quantity: 1.0,
            strike,
            weights: vec![1.0],
            bias: -strike,
            out_weight: 1.0,
        };
        let put = PortfolioNode {
            kind: NodeKind::Put,
            offsets: vec![5.0],
            quantity: 1.0,
            strike,
            weights: vec![-1.0],
            bias: strike,
            out_weight: 1.0,
        };
        let c = node_value_local(&model, 0.3, &[0.004], &call, 1.0).unwrap();
        let p = node_value_local(&model, 0.3, &[0.004], &put, 1.0).unwrap();
        let fwd = model.bond_price(0.3, 6.0, &[0.004]).unwrap()
            - strike * model.bond_price(0.3, 1.0, &[0.004]).unwrap();
        assert_relative_eq!(c - p, fwd, epsilon = 1e-12);
    }

    #[test]
    fn call_value_monotone_in_underlying() {
        // Bump test directly on the Black formula.
        let base = bond_node_value(NodeKind::Call, 1.0, -0.9, 0.86, 0.97, 0.05);
        let bumped = bond_node_value(NodeKind::Call, 1.0, -0.9, 0.87, 0.97, 0.05);
        assert!(bumped > base);
    }

    #[test]
    fn log_node_matches_quadrature_oracle() {
        let model = g2();
        let node = PortfolioNode {
            kind: NodeKind::LogBasket,
            offsets: vec![2.5, 5.0],
            quantity: 1.0,
            strike: 0.22,
            weights: vec![-0.8, -0.6],
            bias: -0.22,
            out_weight: 1.0,
        };
        let t = 0.0;
        let x = [0.0, 0.0];
        let expiry = 1.0;
        let closed = node_value_log(&model, t, &x, &node, expiry).unwrap();

        // Tensor Simpson over the standardized bivariate normal.
        let (mu, cov) = model.forward_measure_moments(t, expiry, &x).unwrap();
        let l11 = cov[0][0].sqrt();
        let l21 = cov[0][1] / l11;
        let l22 = (cov[1][1] - l21 * l21).sqrt();
        let n = 400;
        let lim = 8.0;
        let h = 2.0 * lim / n as f64;
        let weight = |k: usize| -> f64 {
            if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut acc = 0.0;
        for i in 0..=n {
            let u1 = -lim + i as f64 * h;
            for j in 0..=n {
                let u2 = -lim + j as f64 * h;
                let x1 = mu[0] + l11 * u1;
                let x2 = mu[1] + l21 * u1 + l22 * u2;
                let y = node.weights[0]
                    * model.bond_price(expiry, expiry + 2.5, &[x1, x2]).unwrap().ln()
                    + node.weights[1]
                        * model.bond_price(expiry, expiry + 5.0, &[x1, x2]).unwrap().ln();
                let payoff = (y - node.strike).max(0.0);
                let dens = (-0.5 * (u1 * u1 + u2 * u2)).exp() / (2.0 * std::f64::consts::PI);
                acc += weight(i) * weight(j) * payoff * dens;
            }
        }
        let quad = model.bond_price(t, expiry, &x).unwrap() * acc * h * h / 9.0;
        assert_relative_eq!(closed, quad, epsilon = 1e-6);
    }

    #[test]
    fn log_node_degenerate_cases() {
        let model = g2();
        // w = 0: deterministic payoff max(-strike, 0) paid at expiry.
        let node = PortfolioNode {
            kind: NodeKind::LogBasket,
            offsets: vec![2.5, 5.0],
            quantity: 1.0,
            strike: -0.3,
            weights: vec![0.0, 0.0],
            bias: 0.3,
            out_weight: 1.0,
        };
        let v = node_value_log(&model, 0.0, &[0.0, 0.0], &node, 1.0).unwrap();
        assert_relative_eq!(
            v,
            0.3 * model.bond_price(0.0, 1.0, &[0.0, 0.0]).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn terminal_consistency_every_design() {
        // At its own expiry the portfolio value must equal the network
        // payoff through the denormalization identity.
        let model2 = g2();
        let model1 = hw();
        let cases: Vec<(GaussianModel<f64>, NetworkDesign, usize)> = vec![
            (model1.clone(), NetworkDesign::OneFactor, 1),
            (model2.clone(), NetworkDesign::LocallyConnected, 2),
            (model2.clone(), NetworkDesign::FullyConnectedLog, 2),
        ];
        for (model, design, d) in cases {
            let net = random_net(design, 16, d, 42);
            let expiry = 2.0;
            let offsets = input_offsets(expiry, 6.0, d);
            let pricer = PortfolioPricer::new(&model, expiry, &net, expiry, &offsets).unwrap();
            for s in 0..200 {
                let x: Vec<f64> = (0..d)
                    .map(|i| -0.06 + 0.0006 * (s * (i + 3)) as f64)
                    .collect();
                let z = asset_inputs(&model, expiry, &x, &offsets, design).unwrap();
                let direct = net.forward(&z);
                let via_portfolio = pricer.value(&x);
                assert_abs_diff_eq!(
                    via_portfolio,
                    direct,
                    epsilon = 1e-9 * (1.0 + direct.abs())
                );
            }
        }
    }

    #[test]
    fn pricer_matches_per_node_route() {
        let model = g2();
        let net = random_net(NetworkDesign::LocallyConnected, 8, 2, 9);
        let expiry = 1.0;
        let offsets = input_offsets(expiry, 6.0, 2);
        let nodes = portfolio_nodes(&net, &offsets).unwrap();
        let x = [0.01, -0.02];
        let t = 0.4;
        let mut by_nodes = 0.0;
        for node in &nodes {
            by_nodes += node.out_weight * node_value_local(&model, t, &x, node, expiry).unwrap();
        }
        let direct = portfolio_value(&model, t, &x, &net, expiry, &offsets).unwrap();
        assert_relative_eq!(by_nodes, direct, epsilon = 1e-12);
    }

    #[test]
    fn time_order_enforced() {
        let model = hw();
        let net = random_net(NetworkDesign::OneFactor, 4, 1, 3);
        let offsets = input_offsets(1.0, 6.0, 1);
        assert!(matches!(
            portfolio_value(&model, 1.5, &[0.0], &net, 1.0, &offsets),
            Err(PricingError::TimeOrder { .. })
        ));
    }
}
