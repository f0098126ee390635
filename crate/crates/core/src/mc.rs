//! Monte Carlo Feynman-Kac estimators.
//!
//! A path couples a subordinator walk on the operational grid `{kh}` with a
//! spatial walk observed at the subordinated physical times: at grid index
//! `k` the state is `(S_k, B_{S_k})` with aliveness tracked through each
//! spatial step. The payoff of one path for the history problem is
//!
//! `h · Σ_{k < K} f(t - S_k, B_{S_k}) + φ(t - S_K, B_{S_K}) · 1{alive}`,
//!
//! the left-point rule for the running forcing plus the terminal value at
//! the crossing pair (the discrete overshoot). The initial-value problem
//! replaces the terminal term by `φ₀(B_{S_K}) · 1{alive}` and accumulates
//! `g` instead of `f`. Dead paths contribute only their pre-death forcing:
//! data vanish at the cemetery.
//!
//! Paths are grouped in fixed blocks of [`PATH_BLOCK`]; block sums are
//! combined in block order with compensated accumulation, so estimates are
//! bit-identical however blocks are scheduled across workers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::SpaceTimeFn;
use crate::error::{Error, Result};
use crate::math;
use crate::math::KahanSum;
use crate::rng::{stream_rng, substream};
use crate::spatial::{Point, SpatialModel};
use crate::subordinator::{LevyKernel, DEFAULT_MAX_STEPS};

/// Paths per reduction block.
pub const PATH_BLOCK: u64 = 4096;

/// Full problem data for one solve.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub spatial: SpatialModel,
    pub kernel: LevyKernel,
    pub horizon: f64,
    pub data: ProblemData,
}

/// Exactly one of the two data forms is active per problem.
#[derive(Clone, Debug)]
pub enum ProblemData {
    /// History form: `u = φ` on `(-∞, 0] × Ω`, forcing `f`.
    History { phi: SpaceTimeFn, forcing: SpaceTimeFn },
    /// Initial-value (Caputo-type) form: `u(0) = φ₀`, forcing `g`.
    Caputo { phi0: SpaceTimeFn, forcing: SpaceTimeFn },
}

impl ProblemSpec {
    pub fn new(
        spatial: SpatialModel,
        kernel: LevyKernel,
        horizon: f64,
        data: ProblemData,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if let ProblemData::Caputo { phi0, .. } = &data {
            if phi0.is_provably_time_dependent() {
                return Err(Error::invalid(
                    "initial-value data must be time independent",
                ));
            }
        }
        let spec = Self {
            spatial,
            kernel,
            horizon,
            data,
        };
        spec.validate_data_bounds()?;
        Ok(spec)
    }

    /// Spot-check the declared sup bounds of the data on a sample grid.
    fn validate_data_bounds(&self) -> Result<()> {
        let probes: Vec<Point> = match self.spatial.interval() {
            Some((a, b)) => (1..8)
                .map(|i| Point::d1(a + (b - a) * i as f64 / 8.0))
                .collect(),
            None => {
                let pts = [-4.0, -1.0, -0.3, 0.0, 0.3, 1.0, 4.0];
                pts.iter()
                    .filter(|&&x| {
                        !matches!(self.spatial, SpatialModel::ReflectedBmHalfLine) || x >= 0.0
                    })
                    .map(|&x| match self.spatial.dim() {
                        1 => Point::d1(x),
                        d => Point::from_slice(&[x, 0.1, -0.2][..d]).expect("probe point"),
                    })
                    .collect()
            }
        };
        match &self.data {
            ProblemData::History { phi, forcing } => {
                phi.validate_bound(&self.spatial, -4.0 * self.horizon, 0.0, &probes)?;
                forcing.validate_bound(&self.spatial, 0.0, self.horizon, &probes)?;
            }
            ProblemData::Caputo { phi0, forcing } => {
                phi0.validate_bound(&self.spatial, 0.0, 0.0, &probes)?;
                forcing.validate_bound(&self.spatial, 0.0, self.horizon, &probes)?;
            }
        }
        Ok(())
    }

    pub fn history_parts(&self) -> Result<(&SpaceTimeFn, &SpaceTimeFn)> {
        match &self.data {
            ProblemData::History { phi, forcing } => Ok((phi, forcing)),
            _ => Err(Error::usage(
                "history-form operation on an initial-value problem",
            )),
        }
    }

    pub fn caputo_parts(&self) -> Result<(&SpaceTimeFn, &SpaceTimeFn)> {
        match &self.data {
            ProblemData::Caputo { phi0, forcing } => Ok((phi0, forcing)),
            _ => Err(Error::usage(
                "initial-value operation on a history-form problem",
            )),
        }
    }

    fn check_point(&self, t: f64, x: &Point) -> Result<()> {
        if !(t > 0.0 && t <= self.horizon) {
            return Err(Error::domain(format!(
                "evaluation time must lie in (0, {}], got {t}",
                self.horizon
            )));
        }
        if !self.spatial.contains(x) {
            return Err(Error::domain(format!(
                "evaluation point {:?} lies outside the domain (dead state)",
                x.coords()
            )));
        }
        Ok(())
    }
}

/// Monte Carlo solver controls.
#[derive(Clone, Debug)]
pub struct McConfig {
    pub n_paths: u64,
    pub step_h: f64,
    pub max_steps: u64,
    pub master_seed: u64,
    /// Point slot; per-path streams are `(stream << 32) | path`.
    pub stream: u64,
}

impl McConfig {
    pub fn new(n_paths: u64, step_h: f64, master_seed: u64) -> Self {
        Self {
            n_paths,
            step_h,
            max_steps: DEFAULT_MAX_STEPS,
            master_seed,
            stream: 0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths must be positive"));
        }
        if !(self.step_h > 0.0) || !self.step_h.is_finite() {
            return Err(Error::invalid(format!(
                "operational step must be positive, got {}",
                self.step_h
            )));
        }
        Ok(())
    }
}

/// A Monte Carlo point estimate with its reproducibility fingerprint.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub step_h: f64,
    pub seed_fingerprint: String,
}

/// Partial sums over one path block.
#[derive(Clone, Copy, Debug, Default)]
pub struct PathBlockSum {
    pub sum: f64,
    pub sumsq: f64,
    pub n: u64,
}

pub fn n_blocks(n_paths: u64) -> u64 {
    n_paths.div_ceil(PATH_BLOCK)
}

/// Payoff sums over the paths of one block. Pure function of
/// `(problem, point, config, block index)`; the parallel drivers re-invoke it
/// from any worker with identical results.
pub fn block_sum(
    problem: &ProblemSpec,
    t: f64,
    x: &Point,
    cfg: &McConfig,
    block: u64,
) -> Result<PathBlockSum> {
    let lo = block * PATH_BLOCK;
    let hi = (lo + PATH_BLOCK).min(cfg.n_paths);
    let mut sum = KahanSum::new();
    let mut sumsq = KahanSum::new();
    for path in lo..hi {
        let mut rng = stream_rng(cfg.master_seed, substream(cfg.stream, path));
        let v = run_path(problem, t, x, cfg, &mut rng)?;
        sum.add(v);
        sumsq.add(v * v);
    }
    Ok(PathBlockSum {
        sum: sum.value(),
        sumsq: sumsq.value(),
        n: hi - lo,
    })
}

/// Combine block sums (in block order) into the final estimate.
pub fn assemble(blocks: impl IntoIterator<Item = PathBlockSum>, cfg: &McConfig) -> McEstimate {
    let mut sum = KahanSum::new();
    let mut sumsq = KahanSum::new();
    let mut n = 0u64;
    for b in blocks {
        sum.add(b.sum);
        sumsq.add(b.sumsq);
        n += b.n;
    }
    let nf = n as f64;
    let mean = sum.value() / nf;
    let var = ((sumsq.value() / nf - mean * mean) * nf / (nf - 1.0).max(1.0)).max(0.0);
    McEstimate {
        mean,
        stderr: math::sqrt(var / nf),
        n_paths: n,
        step_h: cfg.step_h,
        seed_fingerprint: fingerprint(cfg),
    }
}

fn fingerprint(cfg: &McConfig) -> String {
    format!(
        "seed={}/stream={}/n={}/h={:e}",
        cfg.master_seed, cfg.stream, cfg.n_paths, cfg.step_h
    )
}

/// One path payoff. Both data forms share this walk (identical stream
/// consumption), so initial-value and history estimates coincide bit-exactly
/// when their data coincide.
fn run_path(
    problem: &ProblemSpec,
    t: f64,
    x: &Point,
    cfg: &McConfig,
    rng: &mut crate::rng::StreamRng,
) -> Result<f64> {
    let model = &problem.spatial;
    let mut forcing_acc = KahanSum::new();
    let mut level = 0.0_f64;
    let mut pos = *x;
    let mut alive = true;
    let mut steps: u64 = 0;
    let terminal;
    loop {
        // grid point k: state (S_k, B_{S_k}), S_k <= t
        if !alive {
            terminal = 0.0;
            break;
        }
        match &problem.data {
            ProblemData::History { forcing, .. } | ProblemData::Caputo { forcing, .. } => {
                if !forcing.is_zero() {
                    forcing_acc.add(forcing.eval(model, t - level, &pos));
                }
            }
        }
        if steps >= cfg.max_steps {
            return Err(Error::Runaway {
                steps,
                cap: cfg.max_steps,
                reached: level,
                target: t,
                step_h: cfg.step_h,
            });
        }
        let ds = problem.kernel.sample_increment(cfg.step_h, rng)?;
        let (next, still_alive) = model.sample_step(&pos, ds.max(1e-300), rng)?;
        pos = next;
        alive = still_alive;
        level += ds;
        steps += 1;
        if level > t {
            terminal = if alive {
                match &problem.data {
                    ProblemData::History { phi, .. } => phi.eval(model, t - level, &pos),
                    ProblemData::Caputo { phi0, .. } => phi0.eval(model, 0.0, &pos),
                }
            } else {
                0.0
            };
            break;
        }
    }
    Ok(forcing_acc.value() * cfg.step_h + terminal)
}

/// Estimate the history-form solution at `(t, x)`.
pub fn estimate_history(
    problem: &ProblemSpec,
    t: f64,
    x: &Point,
    cfg: &McConfig,
) -> Result<McEstimate> {
    problem.history_parts()?;
    estimate_point(problem, t, x, cfg)
}

/// Estimate the initial-value (Caputo-type) solution at `(t, x)`.
pub fn estimate_caputo(
    problem: &ProblemSpec,
    t: f64,
    x: &Point,
    cfg: &McConfig,
) -> Result<McEstimate> {
    problem.caputo_parts()?;
    estimate_point(problem, t, x, cfg)
}

/// Form-agnostic point estimator.
pub fn estimate_point(
    problem: &ProblemSpec,
    t: f64,
    x: &Point,
    cfg: &McConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    problem.check_point(t, x)?;
    let blocks: Result<Vec<PathBlockSum>> = (0..n_blocks(cfg.n_paths))
        .map(|b| block_sum(problem, t, x, cfg, b))
        .collect();
    Ok(assemble(blocks?, cfg))
}

/// Map the point estimator over a grid; point `i` uses stream slot
/// `cfg.stream + i`, so the field is reproducible point by point.
pub fn estimate_field(
    problem: &ProblemSpec,
    grid: &[(f64, Point)],
    cfg: &McConfig,
) -> Result<Vec<McEstimate>> {
    grid.iter()
        .enumerate()
        .map(|(i, (t, x))| {
            let point_cfg = cfg.clone().with_stream(cfg.stream + i as u64);
            estimate_point(problem, *t, x, &point_cfg).map_err(|e| match e {
                Error::Domain(msg) => {
                    Error::Domain(format!("grid point {i} (t={t}, x={:?}): {msg}", x.coords()))
                }
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SpaceProfile, TimeFactor};
    use approx::assert_abs_diff_eq;

    fn free_problem(phi: SpaceTimeFn, forcing: SpaceTimeFn) -> ProblemSpec {
        ProblemSpec::new(
            SpatialModel::free_bm(1).unwrap(),
            LevyKernel::stable(0.6).unwrap(),
            1.0,
            ProblemData::History { phi, forcing },
        )
        .unwrap()
    }

    #[test]
    fn constant_data_on_conservative_model_is_exact() {
        let p = free_problem(SpaceTimeFn::constant(1.0), SpaceTimeFn::zero());
        let cfg = McConfig::new(2_000, 1e-2, 42);
        let est = estimate_history(&p, 1.0, &Point::d1(0.0), &cfg).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn constant_forcing_recovers_mean_inverse_passage() {
        // φ₀ = 0, g ≡ 1: the estimate is E[τ̂₀(t)] → t^α/Γ(1+α)
        let p = ProblemSpec::new(
            SpatialModel::free_bm(1).unwrap(),
            LevyKernel::stable(0.5).unwrap(),
            1.0,
            ProblemData::Caputo {
                phi0: SpaceTimeFn::zero(),
                forcing: SpaceTimeFn::constant(1.0),
            },
        )
        .unwrap();
        let h = 1e-3;
        let cfg = McConfig::new(100_000, h, 7);
        let est = estimate_caputo(&p, 1.0, &Point::d1(0.0), &cfg).unwrap();
        let exact = 1.0 / math::gamma(1.5);
        assert!(
            (est.mean - exact).abs() < 3.0 * est.stderr + 2.0 * h,
            "mean {} vs {} (se {})",
            est.mean,
            exact,
            est.stderr
        );
    }

    #[test]
    fn caputo_equals_history_bit_exactly_for_time_independent_data() {
        let phi = SpaceTimeFn::profile(SpaceProfile::GaussianBump {
            center: 0.0,
            width: 1.0,
        });
        let forcing = SpaceTimeFn::profile(SpaceProfile::GaussianBump {
            center: 0.0,
            width: 2.0,
        });
        let hist = free_problem(phi.clone(), forcing.clone());
        let cap = ProblemSpec::new(
            hist.spatial.clone(),
            hist.kernel.clone(),
            1.0,
            ProblemData::Caputo {
                phi0: phi,
                forcing,
            },
        )
        .unwrap();
        let cfg = McConfig::new(4_000, 1e-2, 99);
        let x = Point::d1(0.3);
        let a = estimate_history(&hist, 0.8, &x, &cfg).unwrap();
        let b = estimate_caputo(&cap, 0.8, &x, &cfg).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn short_time_limit_approaches_initial_data() {
        // the deviation from φ(0⁻, x) at horizon t is governed by the
        // overshoot tail mass, O(t^α); assert the limit with that allowance
        // and check the approach tightens as t shrinks
        let phi = SpaceTimeFn::separable(
            TimeFactor::Exp { rate: 1.0 },
            SpaceProfile::GaussianBump {
                center: 0.0,
                width: 1.0,
            },
        );
        let p = free_problem(phi.clone(), SpaceTimeFn::zero());
        let x = Point::d1(0.4);
        let target = phi.eval(&p.spatial, 0.0, &x);
        let mut gaps = Vec::new();
        for (t, h) in [(1e-2, 1e-3), (1e-4, 1e-5)] {
            let cfg = McConfig::new(30_000, h, 3);
            let est = estimate_history(&p, t, &x, &cfg).unwrap();
            let allowance = 3.0 * est.stderr + 2.0 * math::powf(t, 0.6);
            assert!(
                (est.mean - target).abs() < allowance,
                "t={t}: mean {} target {target} allowance {allowance}",
                est.mean
            );
            gaps.push((est.mean - target).abs() + 3.0 * est.stderr);
        }
        assert!(gaps[1] < gaps[0], "approach should tighten: {gaps:?}");
    }

    #[test]
    fn killed_interval_estimates_stay_below_constant_data() {
        let p = ProblemSpec::new(
            SpatialModel::killed_interval(0.0, math::PI).unwrap(),
            LevyKernel::stable(0.5).unwrap(),
            1.0,
            ProblemData::History {
                phi: SpaceTimeFn::constant(1.0),
                forcing: SpaceTimeFn::zero(),
            },
        )
        .unwrap();
        let cfg = McConfig::new(20_000, 1e-2, 5);
        let est = estimate_history(&p, 1.0, &Point::d1(math::PI / 2.0), &cfg).unwrap();
        assert!(est.mean < 1.0 - 5.0 * est.stderr, "killing defect expected");
        assert!(est.mean > 0.0);
    }

    #[test]
    fn maximum_principle_bound_holds() {
        let phi = SpaceTimeFn::profile(SpaceProfile::GaussianBump {
            center: 0.0,
            width: 1.0,
        });
        let forcing = SpaceTimeFn::constant(0.5);
        let p = free_problem(phi, forcing);
        let cfg = McConfig::new(10_000, 1e-2, 11);
        let t = 1.0;
        let est = estimate_history(&p, t, &Point::d1(0.0), &cfg).unwrap();
        let bound = 1.0 + 0.5 * (p.kernel.mean_inverse_passage(t).unwrap() + 2.0 * cfg.step_h);
        assert!(est.mean.abs() <= bound);
    }

    #[test]
    fn caputo_constant_datum_is_exactly_one() {
        let p = ProblemSpec::new(
            SpatialModel::free_bm(1).unwrap(),
            LevyKernel::stable(0.6).unwrap(),
            1.0,
            ProblemData::Caputo {
                phi0: SpaceTimeFn::constant(1.0),
                forcing: SpaceTimeFn::zero(),
            },
        )
        .unwrap();
        let cfg = McConfig::new(1_000, 1e-2, 8);
        let est = estimate_caputo(&p, 0.7, &Point::d1(0.0), &cfg).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn two_dimensional_walk_preserves_constants() {
        let p = ProblemSpec::new(
            SpatialModel::free_bm(2).unwrap(),
            LevyKernel::stable(0.5).unwrap(),
            1.0,
            ProblemData::History {
                phi: SpaceTimeFn::constant(1.0),
                forcing: SpaceTimeFn::zero(),
            },
        )
        .unwrap();
        let cfg = McConfig::new(500, 1e-2, 12);
        let x = Point::from_slice(&[0.1, 0.2]).unwrap();
        let est = estimate_history(&p, 0.5, &x, &cfg).unwrap();
        assert_eq!(est.mean, 1.0);
    }

    #[test]
    fn symmetric_problem_gives_symmetric_field() {
        // 5×5 grid on the killed interval with symmetric data: estimates at
        // x and π - x agree within their Monte Carlo bands
        let p = ProblemSpec::new(
            SpatialModel::killed_interval(0.0, math::PI).unwrap(),
            LevyKernel::stable(0.5).unwrap(),
            1.0,
            ProblemData::History {
                phi: SpaceTimeFn::profile(SpaceProfile::GaussianBump {
                    center: math::PI / 2.0,
                    width: 0.7,
                }),
                forcing: SpaceTimeFn::profile(SpaceProfile::Eigenfunction { mode: 1 }),
            },
        )
        .unwrap();
        let ts = [0.1, 0.2, 0.35, 0.5, 0.7];
        let xs = [0.6, 1.0, math::PI / 2.0, math::PI - 1.0, math::PI - 0.6];
        let grid: Vec<(f64, Point)> = ts
            .iter()
            .flat_map(|&t| xs.iter().map(move |&x| (t, Point::d1(x))))
            .collect();
        let cfg = McConfig::new(6_000, 5e-3, 77);
        let field = estimate_field(&p, &grid, &cfg).unwrap();
        for row in 0..ts.len() {
            for col in 0..2 {
                let left = &field[row * 5 + col];
                let right = &field[row * 5 + (4 - col)];
                let tol = 3.0 * (left.stderr + right.stderr);
                assert!(
                    (left.mean - right.mean).abs() < tol,
                    "row {row} col {col}: {} vs {} (tol {tol})",
                    left.mean,
                    right.mean
                );
            }
        }
    }

    #[test]
    fn field_reduces_to_point_estimates_and_is_seed_deterministic() {
        let p = free_problem(
            SpaceTimeFn::profile(SpaceProfile::GaussianBump {
                center: 0.0,
                width: 1.0,
            }),
            SpaceTimeFn::zero(),
        );
        let cfg = McConfig::new(2_000, 1e-2, 123);
        let grid = [(0.5, Point::d1(0.0)), (1.0, Point::d1(0.7))];
        let field = estimate_field(&p, &grid, &cfg).unwrap();
        let single = estimate_point(&p, 0.5, &Point::d1(0.0), &cfg).unwrap();
        assert_eq!(field[0].mean.to_bits(), single.mean.to_bits());
        let again = estimate_field(&p, &grid, &cfg).unwrap();
        for (a, b) in field.iter().zip(&again) {
            assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        }
    }

    #[test]
    fn bias_decreases_with_step_size() {
        // constant-forcing estimate of E[τ₀(1)] at shrinking h, shared seeds
        let p = ProblemSpec::new(
            SpatialModel::free_bm(1).unwrap(),
            LevyKernel::stable(0.5).unwrap(),
            1.0,
            ProblemData::Caputo {
                phi0: SpaceTimeFn::zero(),
                forcing: SpaceTimeFn::constant(1.0),
            },
        )
        .unwrap();
        let exact = 1.0 / math::gamma(1.5);
        let mut errs = Vec::new();
        for &h in &[1e-1, 1e-2, 1e-3] {
            let cfg = McConfig::new(400_000, h, 2024);
            let est = estimate_caputo(&p, 1.0, &Point::d1(0.0), &cfg).unwrap();
            errs.push((est.mean - exact).abs());
        }
        assert!(
            errs[0] > errs[1] && errs[1] > errs[2],
            "bias should decrease: {errs:?}"
        );
    }

    #[test]
    fn domain_errors_are_reported() {
        let p = free_problem(SpaceTimeFn::constant(1.0), SpaceTimeFn::zero());
        let cfg = McConfig::new(100, 1e-2, 1);
        assert!(estimate_history(&p, 0.0, &Point::d1(0.0), &cfg).is_err());
        assert!(estimate_history(&p, 2.0, &Point::d1(0.0), &cfg).is_err());
        let killed = ProblemSpec::new(
            SpatialModel::killed_interval(0.0, 1.0).unwrap(),
            LevyKernel::stable(0.5).unwrap(),
            1.0,
            ProblemData::History {
                phi: SpaceTimeFn::constant(1.0),
                forcing: SpaceTimeFn::zero(),
            },
        )
        .unwrap();
        assert!(estimate_history(&killed, 0.5, &Point::d1(2.0), &cfg).is_err());
        // wrong form
        assert!(estimate_caputo(&p, 0.5, &Point::d1(0.0), &cfg).is_err());
    }
}
