//! Space-time solution fields.
//!
//! The operator module consumes solutions as bounded callables on
//! `(-∞, T] × Ω`. Interval-model solutions additionally carry their sine-mode
//! decomposition, which turns every semigroup application into a scalar
//! exponential; the generic grid/closure fields fall back to quadrature.

use alloc::vec::Vec;

use crate::data::{SpaceTimeFn, TimeFactor};
use crate::math;
use crate::spatial::{Point, SpatialModel};

/// A bounded function on `(-∞, horizon] × Ω`, with optional eigenmode view.
pub trait SpaceTimeField {
    fn eval(&self, t: f64, x: &Point) -> f64;
    /// A sup-norm bound used for truncation budgets.
    fn sup(&self) -> f64;
    fn modes(&self) -> Option<&EigenField> {
        None
    }
}

/// Time course of one sine mode.
#[derive(Clone, Debug)]
pub enum ModeCoeff {
    /// Interpolation table on `(0, horizon]` plus an analytic history factor
    /// for `t <= 0`.
    Table {
        knots: Vec<f64>,
        vals: Vec<f64>,
        history_time: TimeFactor,
        history_scale: f64,
    },
    /// `scale · a(t)` on the whole line.
    Analytic { time: TimeFactor, scale: f64 },
}

impl ModeCoeff {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            ModeCoeff::Analytic { time, scale } => scale * time.eval(t),
            ModeCoeff::Table {
                knots,
                vals,
                history_time,
                history_scale,
            } => {
                if t <= 0.0 {
                    return history_scale * history_time.eval(t);
                }
                let n = knots.len();
                if t >= knots[n - 1] {
                    return vals[n - 1];
                }
                if t <= knots[0] {
                    // bridge continuously from the history value at 0+
                    let h0 = history_scale * history_time.eval(0.0);
                    let w = t / knots[0];
                    return h0 * (1.0 - w) + vals[0] * w;
                }
                let i = knots.partition_point(|k| *k <= t) - 1;
                let w = (t - knots[i]) / (knots[i + 1] - knots[i]);
                vals[i] * (1.0 - w) + vals[i + 1] * w
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenMode {
    pub n: u32,
    pub coeff: ModeCoeff,
}

/// Sine-mode expansion `u(t, x) = (2/L) Σ c_n(t) sin(k_n (x - a))` over an
/// interval model.
#[derive(Clone, Debug)]
pub struct EigenField {
    pub model: SpatialModel,
    pub horizon: f64,
    pub modes: Vec<EigenMode>,
    sup_bound: f64,
}

impl EigenField {
    pub fn new(model: SpatialModel, horizon: f64, modes: Vec<EigenMode>) -> Self {
        let mut field = Self {
            model,
            horizon,
            modes,
            sup_bound: 0.0,
        };
        field.sup_bound = field.estimate_sup();
        field
    }

    fn estimate_sup(&self) -> f64 {
        let (a, b) = self.model.interval().expect("eigenfield needs an interval model");
        let mut best = 0.0_f64;
        for i in 0..=24 {
            let t = if i == 0 { -1.0 } else { self.horizon * i as f64 / 24.0 };
            for j in 1..32 {
                let x = a + (b - a) * j as f64 / 32.0;
                best = best.max(self.eval(t, &Point::d1(x)).abs());
            }
        }
        best * 1.1
    }

    /// `c_n(t)` for the mode at position `idx`.
    pub fn coeff_value(&self, idx: usize, t: f64) -> f64 {
        self.modes[idx].coeff.value(t)
    }

    /// Index of mode `n`, if present.
    pub fn mode_index(&self, n: u32) -> Option<usize> {
        self.modes.iter().position(|m| m.n == n)
    }
}

impl SpaceTimeField for EigenField {
    fn eval(&self, t: f64, x: &Point) -> f64 {
        let (a, b) = self.model.interval().expect("interval model");
        let l = b - a;
        let mut acc = 0.0;
        for m in &self.modes {
            let k = m.n as f64 * math::PI / l;
            acc += m.coeff.value(t) * math::sin(k * (x.x() - a));
        }
        acc * 2.0 / l
    }

    fn sup(&self) -> f64 {
        self.sup_bound
    }

    fn modes(&self) -> Option<&EigenField> {
        Some(self)
    }
}

/// Solution tabulated on a rectangular `(t, x)` grid (1-d models), extended
/// by its history data for `t <= 0`.
#[derive(Clone, Debug)]
pub struct GridField {
    pub model: SpatialModel,
    pub t_knots: Vec<f64>,
    pub x_knots: Vec<f64>,
    /// row-major `[t][x]`
    pub values: Vec<f64>,
    pub history: SpaceTimeFn,
    pub sup_bound: f64,
}

impl SpaceTimeField for GridField {
    fn eval(&self, t: f64, x: &Point) -> f64 {
        if t <= 0.0 {
            return self.history.eval(&self.model, t, x);
        }
        let xv = x.x();
        let nt = self.t_knots.len();
        let nx = self.x_knots.len();
        let ti = if t <= self.t_knots[0] {
            0
        } else if t >= self.t_knots[nt - 1] {
            nt - 2
        } else {
            self.t_knots.partition_point(|k| *k <= t) - 1
        };
        let xi = if xv <= self.x_knots[0] {
            0
        } else if xv >= self.x_knots[nx - 1] {
            nx - 2
        } else {
            self.x_knots.partition_point(|k| *k <= xv) - 1
        };
        let tw = ((t - self.t_knots[ti]) / (self.t_knots[ti + 1] - self.t_knots[ti]))
            .clamp(0.0, 1.0);
        let xw = ((xv - self.x_knots[xi]) / (self.x_knots[xi + 1] - self.x_knots[xi]))
            .clamp(0.0, 1.0);
        let v00 = self.values[ti * nx + xi];
        let v01 = self.values[ti * nx + xi + 1];
        let v10 = self.values[(ti + 1) * nx + xi];
        let v11 = self.values[(ti + 1) * nx + xi + 1];
        v00 * (1.0 - tw) * (1.0 - xw)
            + v01 * (1.0 - tw) * xw
            + v10 * tw * (1.0 - xw)
            + v11 * tw * xw
    }

    fn sup(&self) -> f64 {
        self.sup_bound
    }
}

/// Field given by an explicit closure (analytic test solutions).
pub struct ClosureField<F: Fn(f64, &Point) -> f64> {
    f: F,
    sup_bound: f64,
}

impl<F: Fn(f64, &Point) -> f64> ClosureField<F> {
    pub fn new(f: F, sup_bound: f64) -> Self {
        Self { f, sup_bound }
    }
}

impl<F: Fn(f64, &Point) -> f64> SpaceTimeField for ClosureField<F> {
    fn eval(&self, t: f64, x: &Point) -> f64 {
        (self.f)(t, x)
    }

    fn sup(&self) -> f64 {
        self.sup_bound
    }
}
