use clap::{Args, Parser, Subcommand};

use cee_cli::config::{load_config_file, RunConfig};
use cee_cli::{exit_code, run};

/// Solver suite for space-time coupled evolution equations: Monte Carlo and
/// quadrature solvers, density tables, residual checks and an OCTRW
/// scaling-limit simulator.
#[derive(Parser)]
#[command(name = "cee", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file (a previous run manifest also works); explicit
    /// flags override its fields.
    #[arg(long)]
    config: Option<String>,
    /// Kernel spec: stable:A | tempered:A,L | tabulated:FILE
    #[arg(long)]
    kernel: Option<String>,
    /// Spatial spec: free-bm:D | killed-interval[:A,B] | reflected-half-line
    /// | spectral-interval:B
    #[arg(long)]
    spatial: Option<String>,
    /// Data form: history | caputo
    #[arg(long)]
    form: Option<String>,
    /// History datum (named registry function)
    #[arg(long)]
    phi: Option<String>,
    /// Initial datum for the caputo form
    #[arg(long)]
    phi0: Option<String>,
    /// Forcing term
    #[arg(long, alias = "f")]
    forcing: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Comma-separated evaluation times
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    /// Comma-separated evaluation points
    #[arg(long, value_delimiter = ',')]
    x_grid: Option<Vec<f64>>,
    #[arg(long)]
    n_paths: Option<u64>,
    /// Operational step of the subordinator walk
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    mc_slack: Option<f64>,
    /// Output CSV path (a .manifest.toml sidecar is written next to it)
    #[arg(long, short)]
    out: Option<String>,
    /// Worker threads (wall time only; results are worker-count independent)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo solve over a (t, x) grid
    SolveMc(Common),
    /// Deterministic quadrature solve over a (t, x) grid
    SolveQuad(Common),
    /// Run both solvers and check agreement within 3 SE + slack
    Compare(Common),
    /// Overshoot density table of the kernel at level t
    Density {
        #[command(flatten)]
        common: Common,
        /// Level of the first passage
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        r_min: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long)]
        r_points: Option<usize>,
    },
    /// Overshoot CTRW scaling-limit tables
    Octrw {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        /// Horizon of the walk
        #[arg(long)]
        t: Option<f64>,
        /// Rescaling parameters n (comma separated)
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<u64>>,
        #[arg(long)]
        walkers: Option<u64>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        hist_lo: Option<f64>,
        #[arg(long)]
        hist_hi: Option<f64>,
        /// sweep | hist
        #[arg(long)]
        mode: Option<String>,
    },
    /// Operator-level residual checks: strong | weak | duality
    Residual {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: Option<String>,
    },
    /// Check the history-to-initial-value reduction on shared seeds
    ReduceHistory(Common),
}

fn apply_common(cfg: &mut RunConfig, c: &Common) {
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = &c.$field {
                cfg.$field = Some(v.clone());
            }
        };
    }
    set!(kernel);
    set!(spatial);
    set!(form);
    set!(phi);
    set!(phi0);
    set!(forcing);
    set!(workers);
    if let Some(v) = c.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = &c.t_grid {
        cfg.t_grid = v.clone();
    }
    if let Some(v) = &c.x_grid {
        cfg.x_grid = v.clone();
    }
    if let Some(v) = c.n_paths {
        cfg.n_paths = v;
    }
    if let Some(v) = c.h {
        cfg.h = v;
    }
    if let Some(v) = c.max_steps {
        cfg.max_steps = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.tolerance {
        cfg.tolerance = v;
    }
    if let Some(v) = c.mc_slack {
        cfg.mc_slack = v;
    }
    if let Some(v) = &c.out {
        cfg.output = Some(v.clone());
    }
}

fn build_config(command: &str, common: &Common) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => {
            let mut loaded = load_config_file(path)?;
            loaded.command = command.to_string();
            loaded
        }
        None => RunConfig::new(command),
    };
    apply_common(&mut cfg, common);
    Ok(cfg)
}

fn main() {
    let cli = Cli::parse();
    let cfg = match &cli.command {
        Command::SolveMc(c) => build_config("solve-mc", c),
        Command::SolveQuad(c) => build_config("solve-quad", c),
        Command::Compare(c) => build_config("compare", c),
        Command::Density {
            common,
            t,
            r_min,
            r_max,
            r_points,
        } => build_config("density", common).map(|mut cfg| {
            if t.is_some() {
                cfg.t = *t;
            }
            if let Some(v) = r_min {
                cfg.r_min = *v;
            }
            if let Some(v) = r_max {
                cfg.r_max = *v;
            }
            if let Some(v) = r_points {
                cfg.r_points = *v;
            }
            cfg
        }),
        Command::Octrw {
            common,
            alpha,
            t,
            scales,
            walkers,
            bins,
            hist_lo,
            hist_hi,
            mode,
        } => build_config("octrw", common).map(|mut cfg| {
            if alpha.is_some() {
                cfg.alpha = *alpha;
            }
            if t.is_some() {
                cfg.t = *t;
            }
            if let Some(v) = scales {
                cfg.scales = v.clone();
            }
            if let Some(v) = walkers {
                cfg.walkers = *v;
            }
            if bins.is_some() {
                cfg.bins = *bins;
            }
            if hist_lo.is_some() {
                cfg.hist_lo = *hist_lo;
            }
            if hist_hi.is_some() {
                cfg.hist_hi = *hist_hi;
            }
            if let Some(v) = mode {
                cfg.octrw_mode = Some(v.clone());
            }
            cfg
        }),
        Command::Residual { common, kind } => build_config("residual", common).map(|mut cfg| {
            if let Some(v) = kind {
                cfg.residual_kind = Some(v.clone());
            }
            cfg
        }),
        Command::ReduceHistory(c) => build_config("reduce-history", c),
    };
    let cfg = match cfg {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error[config]: {msg}");
            std::process::exit(2);
        }
    };
    match run(&cfg) {
        Ok(summary) => {
            eprintln!(
                "wrote {} rows to {}{}",
                summary.rows,
                cfg.output.as_deref().unwrap_or("cee-out.csv"),
                if summary.all_pass { "" } else { " (FAIL)" }
            );
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}
