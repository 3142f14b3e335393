//! Euler-scheme path generation under the risk-neutral and forward
//! measures, with trapezoidal bank-account accrual.
//!
//! Paths are generated in fixed blocks, each on its own counter-based RNG
//! stream, so results are reproducible bit-for-bit and independent of the
//! number of worker threads. Normal variates come from the inverse CDF.
//!
//! Long horizons with fine stepping would not fit in memory if every step
//! were retained, so [`simulate_observed`] steps a fine internal grid and
//! stores factors and numeraire only at requested observation dates.
//! [`simulate`] stores every grid point.

use crate::real::normal_from_u64;
use crate::termstructure::{GaussianModel, ModelError};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Paths per RNG stream. Fixed so results do not depend on thread count.
const BLOCK: usize = 4096;

const MAGIC: &[u8; 4] = b"SSPS";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("grid must start at 0 and increase strictly")]
    InvalidGrid,
    #[error("at least one path is required")]
    NoPaths,
    #[error("numeraire accrual requires a risk-neutral path set")]
    WrongMeasure,
    #[error("forward horizon {horizon} precedes the final grid date {last}")]
    HorizonTooShort { horizon: f64, last: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("malformed path-set file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Simulation measure: risk-neutral (bank-account numeraire) or the
/// `horizon`-forward measure (discount bond numeraire).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Measure {
    RiskNeutral,
    Forward { horizon: f64 },
}

/// Simulated factor trajectories observed on a time grid, with the
/// numeraire value per path and observation.
#[derive(Debug, Clone)]
pub struct PathSet {
    measure: Measure,
    grid: Vec<f64>,
    n_paths: usize,
    dim: usize,
    /// Layout `[path][time][factor]`, flattened.
    factors: Vec<f64>,
    /// Layout `[path][time]`: trapezoidal bank account (risk-neutral) or
    /// `P(t, horizon)` (forward measure).
    numeraire: Vec<f64>,
    seed: u64,
}

impl PathSet {
    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Factor state of one path at observation index `j`.
    #[inline]
    pub fn state(&self, path: usize, j: usize) -> &[f64] {
        let base = (path * self.grid.len() + j) * self.dim;
        &self.factors[base..base + self.dim]
    }

    #[inline]
    pub fn numeraire(&self, path: usize, j: usize) -> f64 {
        self.numeraire[path * self.grid.len() + j]
    }

    /// Observation index of time `t`, if present.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.grid.iter().position(|&g| (g - t).abs() < 1e-12)
    }

    /// Little-endian binary dump with a small self-describing header.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), SimulationError> {
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(FORMAT_VERSION)?;
        let (tag, horizon) = match self.measure {
            Measure::RiskNeutral => (0u8, 0.0),
            Measure::Forward { horizon } => (1u8, horizon),
        };
        w.write_u8(tag)?;
        w.write_f64::<LittleEndian>(horizon)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u64::<LittleEndian>(self.n_paths as u64)?;
        w.write_u64::<LittleEndian>(self.grid.len() as u64)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        for &g in &self.grid {
            w.write_f64::<LittleEndian>(g)?;
        }
        for &v in &self.factors {
            w.write_f64::<LittleEndian>(v)?;
        }
        for &v in &self.numeraire {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, SimulationError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SimulationError::BadFile("bad magic bytes".into()));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(SimulationError::BadFile(format!(
                "unsupported format version {version}"
            )));
        }
        let tag = r.read_u8()?;
        let horizon = r.read_f64::<LittleEndian>()?;
        let measure = match tag {
            0 => Measure::RiskNeutral,
            1 => Measure::Forward { horizon },
            other => {
                return Err(SimulationError::BadFile(format!(
                    "unknown measure tag {other}"
                )))
            }
        };
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let n_paths = r.read_u64::<LittleEndian>()? as usize;
        let n_times = r.read_u64::<LittleEndian>()? as usize;
        let seed = r.read_u64::<LittleEndian>()?;
        let mut grid = vec![0.0; n_times];
        for g in &mut grid {
            *g = r.read_f64::<LittleEndian>()?;
        }
        let mut factors = vec![0.0; n_paths * n_times * dim];
        for v in &mut factors {
            *v = r.read_f64::<LittleEndian>()?;
        }
        let mut numeraire = vec![0.0; n_paths * n_times];
        for v in &mut numeraire {
            *v = r.read_f64::<LittleEndian>()?;
        }
        Ok(Self {
            measure,
            grid,
            n_paths,
            dim,
            factors,
            numeraire,
            seed,
        })
    }
}

/// Builds a grid from 0 to the last anchor with steps of at most `dt`,
/// hitting every anchor exactly.
pub fn uniform_grid(dt: f64, anchors: &[f64]) -> Vec<f64> {
    assert!(dt > 0.0, "step size must be positive");
    let mut grid = vec![0.0];
    let mut prev = 0.0;
    for &a in anchors {
        assert!(a > prev - 1e-12, "anchors must be increasing");
        if a <= prev + 1e-12 {
            continue;
        }
        let span = a - prev;
        let n = (span / dt - 1e-9).ceil().max(1.0) as usize;
        for k in 1..=n {
            grid.push(if k == n {
                a
            } else {
                prev + span * k as f64 / n as f64
            });
        }
        prev = a;
    }
    grid
}

/// Euler simulation storing every grid point.
pub fn simulate(
    model: &GaussianModel<f64>,
    grid: &[f64],
    n_paths: usize,
    measure: Measure,
    seed: u64,
) -> Result<PathSet, SimulationError> {
    let observed: Vec<usize> = (0..grid.len()).collect();
    generate(model, grid, &observed, n_paths, measure, seed)
}

/// Euler simulation on a fine internal grid (steps of at most `dt`),
/// storing factors and numeraire only at `dates` (plus time zero). The
/// numeraire is still accrued along the fine grid.
pub fn simulate_observed(
    model: &GaussianModel<f64>,
    dt: f64,
    dates: &[f64],
    n_paths: usize,
    measure: Measure,
    seed: u64,
) -> Result<PathSet, SimulationError> {
    let fine = uniform_grid(dt, dates);
    let mut observed = vec![0usize];
    for &t in dates {
        let j = fine
            .iter()
            .position(|&g| (g - t).abs() < 1e-12)
            .expect("anchor missing from its own grid");
        if *observed.last().unwrap() != j {
            observed.push(j);
        }
    }
    generate(model, &fine, &observed, n_paths, measure, seed)
}

fn generate(
    model: &GaussianModel<f64>,
    grid: &[f64],
    observed: &[usize],
    n_paths: usize,
    measure: Measure,
    seed: u64,
) -> Result<PathSet, SimulationError> {
    if n_paths == 0 {
        return Err(SimulationError::NoPaths);
    }
    if grid.is_empty() || grid[0] != 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimulationError::InvalidGrid);
    }
    let last = *grid.last().unwrap();
    if let Measure::Forward { horizon } = measure {
        if horizon < last - 1e-12 {
            return Err(SimulationError::HorizonTooShort { horizon, last });
        }
    }

    let d = model.dim();
    let n_steps = grid.len() - 1;
    let a = model.mean_reversion().to_vec();
    let sigma = model.volatility_matrix().to_vec();

    // Per-step constants on the fine grid.
    let mut dts = Vec::with_capacity(n_steps);
    let mut sqrt_dts = Vec::with_capacity(n_steps);
    let mut drift_adj = Vec::with_capacity(n_steps); // forward-measure drift at the left node
    for j in 0..n_steps {
        let dt = grid[j + 1] - grid[j];
        dts.push(dt);
        sqrt_dts.push(dt.sqrt());
        match measure {
            Measure::RiskNeutral => drift_adj.push(vec![0.0; d]),
            Measure::Forward { horizon } => drift_adj.push(model.forward_drift(grid[j], horizon)?),
        }
    }
    let shift: Vec<f64> = grid.iter().map(|&t| model.short_rate_shift(t)).collect();
    // Forward numeraire coefficients at observed dates.
    let bond_coeffs: Vec<Option<crate::termstructure::BondCoeffs<f64>>> = match measure {
        Measure::RiskNeutral => vec![None; observed.len()],
        Measure::Forward { horizon } => observed
            .iter()
            .map(|&j| model.bond_coeffs(grid[j], horizon).map(Some))
            .collect::<Result<_, _>>()?,
    };

    let n_obs = observed.len();
    let mut factors = vec![0.0f64; n_paths * n_obs * d];
    let mut numeraire = vec![0.0f64; n_paths * n_obs];

    let factor_chunk = BLOCK * n_obs * d;
    let num_chunk = BLOCK * n_obs;
    factors
        .par_chunks_mut(factor_chunk)
        .zip(numeraire.par_chunks_mut(num_chunk))
        .enumerate()
        .for_each(|(block, (f_chunk, n_chunk))| {
            let paths_in_block = f_chunk.len() / (n_obs * d);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64 + 1);
            let mut x = vec![0.0f64; d];
            let mut z = vec![0.0f64; d];
            for p in 0..paths_in_block {
                x.iter_mut().for_each(|v| *v = 0.0);
                let mut log_bank = 0.0f64;
                let mut r_prev = shift[0];
                let mut obs_ptr = 0usize;
                for j in 0..=n_steps {
                    if j > 0 {
                        for zk in z.iter_mut() {
                            *zk = normal_from_u64(rng.next_u64());
                        }
                        let dt = dts[j - 1];
                        let sdt = sqrt_dts[j - 1];
                        let adj = &drift_adj[j - 1];
                        for i in 0..d {
                            let mut diffusion = 0.0;
                            for k in 0..d {
                                diffusion += sigma[i][k] * z[k];
                            }
                            x[i] += (-a[i] * x[i] - adj[i]) * dt + sdt * diffusion;
                        }
                        let r_new = shift[j] + x.iter().sum::<f64>();
                        log_bank += 0.5 * (r_prev + r_new) * dt;
                        r_prev = r_new;
                    }
                    while obs_ptr < n_obs && observed[obs_ptr] == j {
                        let fb = (p * n_obs + obs_ptr) * d;
                        f_chunk[fb..fb + d].copy_from_slice(&x);
                        n_chunk[p * n_obs + obs_ptr] = match &bond_coeffs[obs_ptr] {
                            None => log_bank.exp(),
                            Some(c) => c.price(&x),
                        };
                        obs_ptr += 1;
                    }
                }
            }
        });

    Ok(PathSet {
        measure,
        grid: observed.iter().map(|&j| grid[j]).collect(),
        n_paths,
        dim: d,
        factors,
        numeraire,
        seed,
    })
}

/// Recomputes the trapezoidal bank-account numeraire from the stored
/// factor observations: `B(t_j) = exp(sum 0.5 (r_{i-1} + r_i) dt)`.
///
/// Only valid on risk-neutral sets. Note that for sets produced by
/// [`simulate_observed`] the stored grid is coarser than the accrual grid
/// used at generation time.
pub fn accrue_numeraire(
    model: &GaussianModel<f64>,
    mut paths: PathSet,
) -> Result<PathSet, SimulationError> {
    if paths.measure != Measure::RiskNeutral {
        return Err(SimulationError::WrongMeasure);
    }
    let n_obs = paths.grid.len();
    let d = paths.dim;
    let shift: Vec<f64> = paths
        .grid
        .iter()
        .map(|&t| model.short_rate_shift(t))
        .collect();
    let grid = paths.grid.clone();
    let factors = &paths.factors;
    paths
        .numeraire
        .par_chunks_mut(n_obs)
        .enumerate()
        .for_each(|(p, row)| {
            let mut log_bank = 0.0;
            let mut r_prev = shift[0]
                + factors[p * n_obs * d..p * n_obs * d + d].iter().sum::<f64>();
            row[0] = 1.0;
            for j in 1..n_obs {
                let base = (p * n_obs + j) * d;
                let r_new = shift[j] + factors[base..base + d].iter().sum::<f64>();
                log_bank += 0.5 * (r_prev + r_new) * (grid[j] - grid[j - 1]);
                r_prev = r_new;
                row[j] = log_bank.exp();
            }
        });
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, sample_sd};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn hw() -> GaussianModel<f64> {
        GaussianModel::hull_white(0.01, 0.01, 0.03).unwrap()
    }

    fn weekly(to: f64) -> Vec<f64> {
        uniform_grid(1.0 / 52.0, &[to])
    }

    #[test]
    fn grid_builder_hits_anchors() {
        let g = uniform_grid(1.0 / 52.0, &[1.0, 2.5]);
        assert_eq!(g[0], 0.0);
        assert!(g.contains(&1.0));
        assert!(g.contains(&2.5));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.windows(2).all(|w| w[1] - w[0] <= 1.0 / 52.0 + 1e-12));
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = hw();
        assert!(matches!(
            simulate(&model, &[0.0, 1.0, 0.5], 10, Measure::RiskNeutral, 1),
            Err(SimulationError::InvalidGrid)
        ));
        assert!(matches!(
            simulate(&model, &[0.1, 1.0], 10, Measure::RiskNeutral, 1),
            Err(SimulationError::InvalidGrid)
        ));
        assert!(matches!(
            simulate(&model, &[0.0, 1.0], 0, Measure::RiskNeutral, 1),
            Err(SimulationError::NoPaths)
        ));
        assert!(matches!(
            simulate(&model, &[0.0, 2.0], 5, Measure::Forward { horizon: 1.0 }, 1),
            Err(SimulationError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let model = hw();
        let g = weekly(1.0);
        let a = simulate(&model, &g, 5000, Measure::RiskNeutral, 42).unwrap();
        let b = simulate(&model, &g, 5000, Measure::RiskNeutral, 42).unwrap();
        assert_eq!(a.factors, b.factors);
        assert_eq!(a.numeraire, b.numeraire);
        let c = simulate(&model, &g, 5000, Measure::RiskNeutral, 43).unwrap();
        assert_ne!(a.factors, c.factors);
    }

    #[test]
    fn observed_storage_matches_full_storage() {
        let model = hw();
        let dates = [0.5, 1.0];
        let full_grid = uniform_grid(1.0 / 52.0, &dates);
        let full = simulate(&model, &full_grid, 200, Measure::RiskNeutral, 7).unwrap();
        let obs = simulate_observed(&model, 1.0 / 52.0, &dates, 200, Measure::RiskNeutral, 7)
            .unwrap();
        assert_eq!(obs.grid(), &[0.0, 0.5, 1.0]);
        for p in 0..200 {
            for (oj, &t) in [0.0, 0.5, 1.0].iter().enumerate() {
                let fj = full.time_index(t).unwrap();
                assert_eq!(obs.state(p, oj), full.state(p, fj));
                assert_eq!(obs.numeraire(p, oj), full.numeraire(p, fj));
            }
        }
    }

    #[test]
    fn accrual_matches_inline_numeraire_bit_exactly() {
        let model = hw();
        let g = weekly(2.0);
        let sim = simulate(&model, &g, 500, Measure::RiskNeutral, 11).unwrap();
        let re = accrue_numeraire(&model, sim.clone()).unwrap();
        assert_eq!(sim.numeraire, re.numeraire);
    }

    #[test]
    fn accrual_rejects_forward_sets() {
        let model = hw();
        let sim = simulate(
            &model,
            &weekly(1.0),
            10,
            Measure::Forward { horizon: 6.0 },
            1,
        )
        .unwrap();
        assert!(matches!(
            accrue_numeraire(&model, sim),
            Err(SimulationError::WrongMeasure)
        ));
    }

    #[test]
    fn zero_volatility_limit_is_deterministic() {
        let model = GaussianModel::hull_white(0.01, 1e-12, 0.03).unwrap();
        let g = weekly(5.0);
        let sim = simulate(&model, &g, 50, Measure::RiskNeutral, 3).unwrap();
        let j = sim.time_index(5.0).unwrap();
        for p in 0..50 {
            assert_abs_diff_eq!(sim.state(p, j)[0], 0.0, epsilon = 1e-9);
            // Deterministic rates: bank account equals exp(f0 t).
            assert_relative_eq!(sim.numeraire(p, j), (0.15f64).exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn risk_neutral_variance_matches_closed_form() {
        let model = hw();
        let n = 200_000;
        let sim =
            simulate_observed(&model, 1.0 / 52.0, &[1.0], n, Measure::RiskNeutral, 99).unwrap();
        let xs: Vec<f64> = (0..n).map(|p| sim.state(p, 1)[0]).collect();
        let var = sample_sd(&xs).powi(2);
        let expected = model.factor_covariance(0.0, 1.0).unwrap()[0][0];
        // SE of a sample variance ~ var * sqrt(2/n); allow 3 SE plus the
        // O(dt) Euler bias margin.
        let tol = 3.0 * expected * (2.0 / n as f64).sqrt() + 2.0 * expected * 0.01 / 52.0;
        assert_abs_diff_eq!(var, expected, epsilon = tol);
    }

    #[test]
    fn forward_measure_mean_matches_theta() {
        let model = hw();
        let n = 200_000;
        let sim = simulate_observed(
            &model,
            1.0 / 52.0,
            &[1.0],
            n,
            Measure::Forward { horizon: 6.0 },
            1234,
        )
        .unwrap();
        let xs: Vec<f64> = (0..n).map(|p| sim.state(p, 1)[0]).collect();
        let theta = model.theta(0.0, 1.0, 6.0).unwrap()[0];
        let se = sample_sd(&xs) / (n as f64).sqrt();
        assert_abs_diff_eq!(mean(&xs), -theta, epsilon = 3.0 * se + 1e-7);
        assert!(theta > 0.0);
    }

    #[test]
    fn discount_curve_consistency() {
        // Martingale check: E[1/B(T)] = exp(-f0 T) within 3 standard errors.
        let model = hw();
        let n = 200_000;
        let sim = simulate_observed(
            &model,
            1.0 / 52.0,
            &[5.0, 10.0],
            n,
            Measure::RiskNeutral,
            2024,
        )
        .unwrap();
        for (j, t) in [(1usize, 5.0f64), (2, 10.0)] {
            let inv: Vec<f64> = (0..n).map(|p| 1.0 / sim.numeraire(p, j)).collect();
            let se = sample_sd(&inv) / (n as f64).sqrt();
            assert_abs_diff_eq!(mean(&inv), (-0.03 * t).exp(), epsilon = 3.0 * se);
        }
    }

    #[test]
    fn standard_error_scales_with_path_count() {
        let model = hw();
        let mut ses = Vec::new();
        for k in 0..5 {
            let n = 2000 << k;
            let sim = simulate_observed(&model, 1.0 / 52.0, &[5.0], n, Measure::RiskNeutral, 5)
                .unwrap();
            let inv: Vec<f64> = (0..n).map(|p| 1.0 / sim.numeraire(p, 1)).collect();
            ses.push(sample_sd(&inv) / (n as f64).sqrt());
        }
        // Four doublings: SE should shrink by ~1/4 overall.
        let ratio = ses[4] / ses[0];
        assert!(ratio > 0.17 && ratio < 0.35, "ratio = {ratio}");
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let model = hw();
        let sim = simulate(
            &model,
            &weekly(1.0),
            64,
            Measure::Forward { horizon: 6.0 },
            17,
        )
        .unwrap();
        let mut buf = Vec::new();
        sim.write_binary(&mut buf).unwrap();
        let back = PathSet::read_binary(buf.as_slice()).unwrap();
        assert_eq!(sim.factors, back.factors);
        assert_eq!(sim.numeraire, back.numeraire);
        assert_eq!(sim.grid, back.grid);
        assert_eq!(sim.seed(), back.seed());
        assert_eq!(sim.measure(), back.measure());
    }
}
