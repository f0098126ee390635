//! Registry of named kernels, spatial models and problem data.
//!
//! Data functions form a closed list rather than an expression language, so
//! bounds are known and the test matrix stays enumerable:
//!
//! * `constant[:c]`
//! * `gaussian-bump[:center,width]` (defaults adapt to the domain)
//! * `eigenfunction[:n]` / `first-eigenfunction` — the n-th sine mode on
//!   interval domains, the smooth even profile `exp(-|y|²)` elsewhere
//! * `exp-time:<spatial>` — any of the above modulated by `e^{t}`
//! * `zero`

use cee_core::data::{SpaceProfile, SpaceTimeFn, TimeFactor};
use cee_core::spatial::SpatialModel;
use cee_core::subordinator::{LevyKernel, OccupationCfg};

use crate::tabulated;

pub fn parse_kernel(spec: &str) -> Result<LevyKernel, String> {
    let (name, args) = split_spec(spec);
    match name {
        "stable" => {
            let alpha = one_float(args, "stable:<alpha>")?;
            LevyKernel::stable(alpha).map_err(|e| e.to_string())
        }
        "tempered" | "tempered-stable" => {
            let v = float_list(args)?;
            if v.len() != 2 {
                return Err("tempered kernel takes `tempered:<alpha>,<lambda>`".into());
            }
            LevyKernel::tempered_stable(v[0], v[1]).map_err(|e| e.to_string())
        }
        "tabulated" => {
            let path = args.ok_or("tabulated kernel takes `tabulated:<csv path>`")?;
            tabulated::load_tabulated(path, &OccupationCfg::default())
        }
        other => Err(format!("unknown kernel `{other}`")),
    }
}

pub fn parse_spatial(spec: &str) -> Result<SpatialModel, String> {
    let (name, args) = split_spec(spec);
    match name {
        "free-bm" | "free" => {
            let dim = match args {
                None => 1,
                Some(a) => a
                    .parse::<usize>()
                    .map_err(|e| format!("free-bm dimension: {e}"))?,
            };
            SpatialModel::free_bm(dim).map_err(|e| e.to_string())
        }
        "killed-interval" | "killed" => {
            let (a, b) = match args {
                None => (0.0, core::f64::consts::PI),
                Some(s) => {
                    let v = float_list(Some(s))?;
                    if v.len() != 2 {
                        return Err("killed-interval takes `killed-interval:<a>,<b>`".into());
                    }
                    (v[0], v[1])
                }
            };
            SpatialModel::killed_interval(a, b).map_err(|e| e.to_string())
        }
        "reflected-half-line" | "reflected" => Ok(SpatialModel::reflected_half_line()),
        "spectral-interval" | "spectral" => {
            let beta = one_float(args, "spectral-interval:<beta>")?;
            SpatialModel::spectral_interval(beta).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown spatial model `{other}`")),
    }
}

/// Bump defaults adapted to the domain: centered, with a width that keeps
/// the profile well inside bounded domains.
fn default_bump(model: &SpatialModel) -> (f64, f64) {
    match model.interval() {
        Some((a, b)) => (0.5 * (a + b), 0.225 * (b - a)),
        None => (0.0, 1.0),
    }
}

pub fn parse_data(spec: &str, model: &SpatialModel) -> Result<SpaceTimeFn, String> {
    let (name, args) = split_spec(spec);
    match name {
        "zero" => Ok(SpaceTimeFn::zero()),
        "constant" => {
            let c = match args {
                None => 1.0,
                Some(_) => one_float(args, "constant:<value>")?,
            };
            Ok(SpaceTimeFn::constant(c))
        }
        "gaussian-bump" => {
            let (center, width) = match args {
                None => default_bump(model),
                Some(s) => {
                    let v = float_list(Some(s))?;
                    if v.len() != 2 {
                        return Err("gaussian-bump takes `gaussian-bump:<center>,<width>`".into());
                    }
                    (v[0], v[1])
                }
            };
            Ok(SpaceTimeFn::profile(SpaceProfile::GaussianBump {
                center,
                width,
            }))
        }
        "eigenfunction" | "first-eigenfunction" => {
            let mode = match args {
                None => 1,
                Some(a) => a
                    .parse::<u32>()
                    .map_err(|e| format!("eigenfunction mode: {e}"))?,
            };
            Ok(SpaceTimeFn::profile(SpaceProfile::Eigenfunction { mode }))
        }
        "exp-time" => {
            let inner = args.ok_or("exp-time takes `exp-time:<spatial profile>`")?;
            match parse_data(inner, model)? {
                SpaceTimeFn::Separable { space, scale, .. } => Ok(SpaceTimeFn::Separable {
                    time: TimeFactor::Exp { rate: 1.0 },
                    space,
                    scale,
                }),
                _ => Err("exp-time wraps a separable profile".into()),
            }
        }
        other => Err(format!("unknown data function `{other}`")),
    }
}

fn split_spec(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    }
}

fn one_float(args: Option<&str>, usage: &str) -> Result<f64, String> {
    args.ok_or_else(|| format!("missing argument, expected `{usage}`"))?
        .parse::<f64>()
        .map_err(|e| format!("expected `{usage}`: {e}"))
}

fn float_list(args: Option<&str>) -> Result<Vec<f64>, String> {
    args.unwrap_or("")
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect()
}
