//! Subcommand implementations.

use std::time::Instant;

use cee_core::data::SpaceTimeFn;
use cee_core::field::SpaceTimeField;
use cee_core::mc::{McConfig, ProblemData, ProblemSpec};
use cee_core::octrw::{self, HistogramSpec, WalkSpec};
use cee_core::operator::{self, OperatorConfig, TestFunction, TestSpatial, TimeBump};
use cee_core::quadrature::{self, QuadratureConfig};
use cee_core::spatial::{Point, SpatialModel};
use cee_core::subordinator::LevyKernel;
use cee_core::Error as CoreError;

use crate::config::RunConfig;
use crate::output::{write_outputs, CsvDoc};
use crate::parallel;
use crate::registry;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("accuracy failure: {0}")]
    Accuracy(String),
    #[error("runaway path: {0}")]
    Runaway(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Accuracy { .. } => CliError::Accuracy(e.to_string()),
            CoreError::Runaway { .. } => CliError::Runaway(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Outcome summary printed by the binary.
#[derive(Debug)]
pub struct RunSummary {
    pub rows: usize,
    pub all_pass: bool,
}

pub fn run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    match cfg.command.as_str() {
        "solve-mc" => solve_mc(cfg, started),
        "solve-quad" => solve_quad(cfg, started),
        "compare" => compare(cfg, started),
        "density" => density(cfg, started),
        "octrw" => octrw_cmd(cfg, started),
        "residual" => residual(cfg, started),
        "reduce-history" => reduce_history(cfg, started),
        other => Err(CliError::Config(format!("unknown subcommand `{other}`"))),
    }
}

fn kernel_of(cfg: &RunConfig) -> Result<LevyKernel, CliError> {
    let spec = cfg
        .kernel
        .as_deref()
        .ok_or_else(|| CliError::Config("missing kernel spec".into()))?;
    registry::parse_kernel(spec).map_err(CliError::Config)
}

fn spatial_of(cfg: &RunConfig) -> Result<SpatialModel, CliError> {
    let spec = cfg
        .spatial
        .as_deref()
        .ok_or_else(|| CliError::Config("missing spatial spec".into()))?;
    registry::parse_spatial(spec).map_err(CliError::Config)
}

fn data_of(_cfg: &RunConfig, which: &Option<String>, model: &SpatialModel) -> Result<SpaceTimeFn, CliError> {
    match which {
        None => Ok(SpaceTimeFn::zero()),
        Some(spec) => registry::parse_data(spec, model).map_err(CliError::Config),
    }
}

fn problem_of(cfg: &RunConfig) -> Result<ProblemSpec, CliError> {
    let spatial = spatial_of(cfg)?;
    let kernel = kernel_of(cfg)?;
    let forcing = data_of(cfg, &cfg.forcing, &spatial)?;
    let data = match cfg.form.as_deref().unwrap_or("history") {
        "history" => ProblemData::History {
            phi: data_of(cfg, &cfg.phi, &spatial)?,
            forcing,
        },
        "caputo" => ProblemData::Caputo {
            phi0: data_of(cfg, &cfg.phi0, &spatial)?,
            forcing,
        },
        other => return Err(CliError::Config(format!("unknown form `{other}`"))),
    };
    Ok(ProblemSpec::new(spatial, kernel, cfg.horizon, data)?)
}

fn grid_of(cfg: &RunConfig) -> Result<Vec<(f64, Point)>, CliError> {
    if cfg.t_grid.is_empty() || cfg.x_grid.is_empty() {
        return Err(CliError::Config(
            "both t-grid and x-grid must be nonempty".into(),
        ));
    }
    let mut grid = Vec::with_capacity(cfg.t_grid.len() * cfg.x_grid.len());
    for &t in &cfg.t_grid {
        for &x in &cfg.x_grid {
            grid.push((t, Point::d1(x)));
        }
    }
    Ok(grid)
}

fn mc_config(cfg: &RunConfig) -> McConfig {
    let mut mc = McConfig::new(cfg.n_paths, cfg.h, cfg.seed);
    mc.max_steps = cfg.max_steps;
    mc
}

fn quad_config(cfg: &RunConfig) -> QuadratureConfig {
    QuadratureConfig {
        tolerance: cfg.tolerance,
        ..QuadratureConfig::default()
    }
}

fn solve_mc(cfg: &RunConfig, started: Instant) -> Result<RunSummary, CliError> {
    let problem = problem_of(cfg)?;
    let grid = grid_of(cfg)?;
    let pool = parallel::pool(parallel::resolve_workers(cfg.workers));
    let estimates = parallel::estimate_field_par(&problem, &grid, &mc_config(cfg), &pool)?;
    let mut doc = CsvDoc::new(cfg, &["t", "x", "value", "stderr"]);
    for ((t, x), est) in grid.iter().zip(&estimates) {
        doc.push_row(&[*t, x.x(), est.mean, est.stderr]);
    }
    write_outputs(cfg, &doc, started)?;
    Ok(RunSummary {
        rows: doc.rows(),
        all_pass: true,
    })
}

fn solve_quad(cfg: &RunConfig, started: Instant) -> Result<RunSummary, CliError> {
    let problem = problem_of(cfg)?;
    let grid = grid_of(cfg)?;
    let qcfg = quad_config(cfg);
    let mut doc = CsvDoc::new(cfg, &["t", "x", "value", "err_est"]);
    for (t, x) in &grid {
        let v = quadrature::solve(&problem, *t, x, &qcfg)?;
        doc.push_row(&[*t, x.x(), v.value, v.err_est]);
    }
    write_outputs(cfg, &doc, started)?;
    Ok(RunSummary {
        rows: doc.rows(),
        all_pass: true,
    })
}

fn compare(cfg: &RunConfig, started: Instant) -> Result<RunSummary, CliError> {
    let problem = problem_of(cfg)?;
    let grid = grid_of(cfg)?;
    let pool = parallel::pool(parallel::resolve_workers(cfg.workers));
    let estimates = parallel::estimate_field_par(&problem, &grid, &mc_config(cfg), &pool)?;
    let qcfg = quad_config(cfg);
    let mut doc = CsvDoc::new(
        cfg,
        &["t", "x", "mc", "mc_stderr", "quad", "quad_err", "abs_diff", "tol", "status"],
    );
    let mut all_pass = true;
    for ((t, x), est) in grid.iter().zip(&estimates) {
        let quad = quadrature::solve(&problem, *t, x, &qcfg)?;
        let diff = (est.mean - quad.value).abs();
        let tol = 3.0 * est.stderr + cfg.mc_slack + quad.err_est;
        let pass = diff < tol;
        all_pass &= pass;
        doc.push_row_status(
            &[*t, x.x(), est.mean, est.stderr, quad.value, quad.err_est, diff, tol],
            pass,
        );
    }
    write_outputs(cfg, &doc, started)?;
    if !all_pass {
        return Err(CliError::Accuracy(
            "Monte Carlo and quadrature disagree beyond 3 SE + slack".into(),
        ));
    }
    Ok(RunSummary {
        rows: doc.rows(),
        all_pass,
    })
}

fn density(cfg: &RunConfig, started: Instant) -> Result<RunSummary, CliError> {
    let kernel = kernel_of(cfg)?;
    let t = cfg
        .t
        .ok_or_else(|| CliError::Config("density needs `t`".into()))?;
    if !(cfg.r_min > 0.0 && cfg.r_max > cfg.r_min) || cfg.r_points < 2 {
        return Err(CliError::Config("degenerate r grid".into()));
    }
    let mut doc = CsvDoc::new(cfg, &["r", "density"]);
    for i in 0..cfg.r_points {
        let frac = i as f64 / (cfg.r_points - 1) as f64;
        let r = cfg.r_min * (cfg.r_max / cfg.r_min).powf(frac);
        doc.push_row(&[r, kernel.overshoot_density(t, r)?]);
    }
    write_outputs(cfg, &doc, started)?;
    Ok(RunSummary {
        rows: doc.rows(),
        all_pass: true,
    })
}

fn octrw_cmd(cfg: &RunConfig, started: Instant) -> Result<RunSummary, CliError> {
    let alpha = cfg
        .alpha
        .ok_or_else(|| CliError::Config("octrw needs `alpha`".into()))?;
    let t = cfg.t.unwrap_or(1.0);
    let kernel = LevyKernel::stable(alpha)?;
    let spatial = SpatialModel::free_bm(1)?;
    let qcfg = quad_config(cfg);
    let origin = Point::d1(0.0);
    let limit = |y: f64| -> f64 {
        quadrature::fundamental_density(&spatial, &kernel, t, &origin, &Point::d1(y), &qcfg)
            .unwrap_or(0.0)
    };
    let hist = HistogramSpec {
        lo: cfg.hist_lo.unwrap_or(-8.0),
        hi: cfg.hist_hi.unwrap_or(8.0),
        bins: cfg.bins.unwrap_or(40),
    };
    match cfg.octrw_mode.as_deref().unwrap_or("sweep") {
        "sweep" => {
            let scales = if cfg.scales.is_empty() {
                vec![100, 1_000, 10_000]
            } else {
                cfg.scales.clone()
            };
            let table =
                octrw::convergence_sweep(alpha, t, &scales, cfg.walkers, cfg.seed, &hist, &limit)?;
            let mut doc = CsvDoc::new(cfg, &["scale", "l1_distance"]);
            for (n, l1) in table {
                doc.push_row(&[n as f64, l1]);
            }
            write_outputs(cfg, &doc, started)?;
            Ok(RunSummary {
                rows: doc.rows(),
                all_pass: true,
            })
        }
        "hist" => {
            let scale = cfg.scales.first().copied().unwrap_or(10_000);
            let spec = WalkSpec::new(alpha, scale)?;
            let mut samples = Vec::with_capacity(cfg.walkers as usize);
            for wk in 0..cfg.walkers {
                let mut rng = cee_core::rng::stream_rng(cfg.seed, wk);
                samples.push(octrw::simulate_position(&spec, t, &mut rng)?);
            }
            let h = octrw::empirical_density(&samples, &hist)?;
            let mut doc = CsvDoc::new(cfg, &["bin_lo", "bin_hi", "mass", "limit_mass"]);
            let rule = cee_core::math::GaussLegendre::new(8);
            for (i, m) in h.mass.iter().enumerate() {
                let (lo, hi) = h.bin_edges(i);
                let target = rule.integrate(lo, hi, &limit);
                doc.push_row(&[lo, hi, *m, target]);
            }
            write_outputs(cfg, &doc, started)?;
            Ok(RunSummary {
                rows: doc.rows(),
                all_pass: true,
            })
        }
        other => Err(CliError::Config(format!("unknown octrw mode `{other}`"))),
    }
}

/// The three registered weak-form test functions on an interval model.
pub fn registered_test_functions(horizon: f64) -> Vec<TestFunction> {
    let t1 = 0.1 * horizon;
    let t2 = 0.9 * horizon;
    vec![
        TestFunction {
            time: TimeBump::new(t1, t2, 1.0).expect("valid bump"),
            spatial: TestSpatial::Modes(vec![(1, 1.0)]),
        },
        TestFunction {
            time: TimeBump::new(0.2 * horizon, 0.6 * horizon, 1.0).expect("valid bump"),
            spatial: TestSpatial::Modes(vec![(2, 1.0)]),
        },
        TestFunction {
            time: TimeBump::new(0.4 * horizon, 0.95 * horizon, 1.0).expect("valid bump"),
            spatial: TestSpatial::Modes(vec![(1, 1.0), (3, 0.5)]),
        },
    ]
}

fn residual(cfg: &RunConfig, started: Instant) -> Result<RunSummary, CliError> {
    let problem = problem_of(cfg)?;
    let qcfg = quad_config(cfg);
    let ocfg = OperatorConfig::default();
    let kind = cfg.residual_kind.as_deref().unwrap_or("weak");
    match kind {
        "strong" => {
            let knots = quadrature::default_mode_knots(cfg.horizon, 96);
            let field = quadrature::solve_modes(&problem, &knots, &qcfg)?;
            let grid = grid_of(cfg)?;
            let mut doc = CsvDoc::new(cfg, &["t", "x", "hnu_u", "minus_f", "rel_err"]);
            let mut worst: f64 = 0.0;
            for (t, x) in &grid {
                let hnu =
                    operator::apply_hnu(&field, &problem.spatial, &problem.kernel, *t, x, &ocfg)?;
                let f = match &problem.data {
                    ProblemData::History { forcing, .. }
                    | ProblemData::Caputo { forcing, .. } => {
                        forcing.eval(&problem.spatial, *t, x)
                    }
                };
                let rel = (hnu + f).abs() / f.abs().max(1e-12);
                worst = worst.max(rel);
                doc.push_row(&[*t, x.x(), hnu, -f, rel]);
            }
            write_outputs(cfg, &doc, started)?;
            Ok(RunSummary {
                rows: grid.len(),
                all_pass: worst < 0.05,
            })
        }
        "weak" => {
            let (phi, forcing) = match &problem.data {
                ProblemData::History { phi, forcing } => (phi, forcing),
                _ => {
                    return Err(CliError::Config(
                        "weak residual runs on the history form".into(),
                    ))
                }
            };
            let _ = phi;
            let knots = quadrature::default_mode_knots(cfg.horizon, 96);
            let field = quadrature::solve_modes(&problem, &knots, &qcfg)?;
            let mut doc = CsvDoc::new(cfg, &["test_idx", "residual", "bound"]);
            let mut all_pass = true;
            for (i, tf) in registered_test_functions(cfg.horizon).iter().enumerate() {
                let r = operator::weak_residual(
                    &field,
                    forcing,
                    tf,
                    &problem.spatial,
                    &problem.kernel,
                    cfg.horizon,
                    &ocfg,
                )?;
                let f_sup = forcing.bound_on(0.0, cfg.horizon);
                let bound = 1e-2 * f_sup.max(1e-12) * tf.l1(&problem.spatial);
                all_pass &= r.abs() < bound;
                doc.push_row(&[i as f64, r, bound]);
            }
            write_outputs(cfg, &doc, started)?;
            Ok(RunSummary {
                rows: doc.rows(),
                all_pass,
            })
        }
        "duality" => {
            // smooth eigen product u = e^t sin(k₁(x-a)) against each test
            // function
            let interval = problem.spatial.interval().ok_or_else(|| {
                CliError::Config("duality check needs an interval model".into())
            })?;
            let _ = interval;
            let u = cee_core::field::EigenField::new(
                problem.spatial.clone(),
                cfg.horizon,
                vec![cee_core::field::EigenMode {
                    n: 1,
                    coeff: cee_core::field::ModeCoeff::Analytic {
                        time: cee_core::data::TimeFactor::Exp { rate: 1.0 },
                        scale: 1.0,
                    },
                }],
            );
            let mut doc = CsvDoc::new(cfg, &["test_idx", "lhs", "rhs", "rel_diff"]);
            let mut all_pass = true;
            for (i, tf) in registered_test_functions(cfg.horizon).iter().enumerate() {
                let lhs =
                    operator::pair_hnu(&u, tf, &problem.spatial, &problem.kernel, &ocfg)?;
                let rhs = operator::weak_residual(
                    &u,
                    &SpaceTimeFn::zero(),
                    tf,
                    &problem.spatial,
                    &problem.kernel,
                    cfg.horizon,
                    &ocfg,
                )?;
                let rel = (lhs - rhs).abs() / lhs.abs().max(1e-12);
                all_pass &= rel < 1e-3;
                doc.push_row(&[i as f64, lhs, rhs, rel]);
            }
            write_outputs(cfg, &doc, started)?;
            Ok(RunSummary {
                rows: doc.rows(),
                all_pass,
            })
        }
        other => Err(CliError::Config(format!("unknown residual kind `{other}`"))),
    }
}

fn reduce_history(cfg: &RunConfig, started: Instant) -> Result<RunSummary, CliError> {
    let problem = problem_of(cfg)?;
    let (phi, forcing) = match &problem.data {
        ProblemData::History { phi, forcing } => (phi.clone(), forcing.clone()),
        _ => {
            return Err(CliError::Config(
                "reduce-history starts from the history form".into(),
            ))
        }
    };
    let grid = grid_of(cfg)?;
    let ocfg = OperatorConfig::default();
    // tabulate f_φ once, then solve the reduced initial-value problem with
    // g = f + f_φ and φ₀ = φ(0) on shared seeds
    let (a, b) = problem
        .spatial
        .interval()
        .ok_or_else(|| CliError::Config("reduce-history needs an interval model".into()))?;
    let t_knots: Vec<f64> = (1..=48)
        .map(|i| cfg.horizon * (i as f64 / 48.0).powi(2))
        .collect();
    let x_knots: Vec<f64> = (0..=64)
        .map(|i| a + (b - a) * i as f64 / 64.0)
        .collect();
    let fphi_grid = operator::forcing_from_history_grid(
        &phi,
        &problem.spatial,
        &problem.kernel,
        &t_knots,
        &x_knots,
        &ocfg,
    )?;
    let fphi = std::sync::Arc::new(fphi_grid);
    let model = problem.spatial.clone();
    let forcing_inner = forcing.clone();
    let g = SpaceTimeFn::custom(
        {
            let fphi = fphi.clone();
            let model = model.clone();
            move |t: f64, y: &Point| {
                forcing_inner.eval(&model, t, y) + fphi.eval(t, y)
            }
        },
        forcing.bound_on(0.0, cfg.horizon) + fphi.sup(),
    );
    let phi0 = phi.at_time_zero();
    let reduced = ProblemSpec::new(
        problem.spatial.clone(),
        problem.kernel.clone(),
        problem.horizon,
        ProblemData::Caputo { phi0, forcing: g },
    )?;
    let pool = parallel::pool(parallel::resolve_workers(cfg.workers));
    let mc = mc_config(cfg);
    let hist = parallel::estimate_field_par(&problem, &grid, &mc, &pool)?;
    let redu = parallel::estimate_field_par(&reduced, &grid, &mc, &pool)?;
    let mut doc = CsvDoc::new(
        cfg,
        &["t", "x", "history", "history_se", "reduced", "reduced_se", "diff", "tol", "status"],
    );
    let mut all_pass = true;
    for (((t, x), h), r) in grid.iter().zip(&hist).zip(&redu) {
        let diff = (h.mean - r.mean).abs();
        let tol = 3.0 * (h.stderr + r.stderr) + cfg.mc_slack;
        let pass = diff < tol;
        all_pass &= pass;
        doc.push_row_status(
            &[*t, x.x(), h.mean, h.stderr, r.mean, r.stderr, diff, tol],
            pass,
        );
    }
    write_outputs(cfg, &doc, started)?;
    if !all_pass {
        return Err(CliError::Accuracy(
            "history and reduced initial-value solves disagree".into(),
        ));
    }
    Ok(RunSummary {
        rows: doc.rows(),
        all_pass,
    })
}
