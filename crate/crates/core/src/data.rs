//! Problem data: bounded space-time functions for history, forcing and
//! initial values.
//!
//! The built-in profiles are separable `a(t)·b(y)`; separability is what the
//! eigenmode fast paths of the quadrature and operator modules key on.
//! Arbitrary bounded callables are accepted through [`SpaceTimeFn::Custom`]
//! and are handled by the generic tensor-quadrature paths.

use alloc::format;
use alloc::sync::Arc;

use crate::error::{Error, Result};
use crate::math;
use crate::math::GaussLegendre;
use crate::spatial::{Point, SpatialModel};

/// Spatial profile of a separable data function.
#[derive(Clone, Debug, PartialEq)]
pub enum SpaceProfile {
    Constant(f64),
    /// `exp(-|y - center|²/width²)` (the center is broadcast across
    /// coordinates in dimension > 1).
    GaussianBump { center: f64, width: f64 },
    /// `sin(k_n (y - a))` on interval domains. On unbounded domains there is
    /// no eigenbasis; the registered stand-in is the smooth even profile
    /// `exp(-|y|²)`.
    Eigenfunction { mode: u32 },
}

impl SpaceProfile {
    pub fn eval(&self, model: &SpatialModel, y: &Point) -> f64 {
        match self {
            SpaceProfile::Constant(c) => *c,
            SpaceProfile::GaussianBump { center, width } => {
                let mut q = 0.0;
                for c in y.coords() {
                    let d = c - center;
                    q += d * d;
                }
                math::exp(-q / (width * width))
            }
            SpaceProfile::Eigenfunction { mode } => match model.interval() {
                Some((a, b)) => {
                    let k = *mode as f64 * math::PI / (b - a);
                    math::sin(k * (y.x() - a))
                }
                None => {
                    let q: f64 = y.coords().iter().map(|c| c * c).sum();
                    math::exp(-q)
                }
            },
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            SpaceProfile::Constant(c) => c.abs(),
            _ => 1.0,
        }
    }

    /// `∫_a^b b(y) sin(k_n (y-a)) dy` against the interval sine basis;
    /// analytic for constants and eigenfunctions, Gauss-Legendre otherwise.
    /// `None` when the model has no sine basis.
    pub fn sine_coefficient(&self, model: &SpatialModel, n: u32) -> Option<f64> {
        let (a, b) = model.interval()?;
        let l = b - a;
        let k = n as f64 * math::PI / l;
        Some(match self {
            SpaceProfile::Constant(c) => c * (1.0 - math::cos(n as f64 * math::PI)) / k,
            SpaceProfile::Eigenfunction { mode } => {
                if *mode == n {
                    l / 2.0
                } else {
                    0.0
                }
            }
            SpaceProfile::GaussianBump { .. } => {
                // one panel per oscillation period keeps the rule accurate
                // at high mode numbers
                let rule = GaussLegendre::new(16);
                let panels = (n as usize).max(2);
                let mut acc = 0.0;
                for p in 0..panels {
                    let lo = a + (b - a) * p as f64 / panels as f64;
                    let hi = a + (b - a) * (p + 1) as f64 / panels as f64;
                    acc += rule.integrate(lo, hi, |y| {
                        self.eval(model, &Point::d1(y)) * math::sin(k * (y - a))
                    });
                }
                acc
            }
        })
    }

    /// Interval that must be resolved by quadrature grids regardless of the
    /// kernel width (the effective support of a localized profile).
    pub fn feature_window(&self) -> Option<(f64, f64)> {
        match self {
            SpaceProfile::GaussianBump { center, width } => {
                Some((center - 8.0 * width, center + 8.0 * width))
            }
            _ => None,
        }
    }
}

/// Temporal factor of a separable data function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeFactor {
    One,
    /// `e^{rate·t}`; with `rate > 0` this is bounded on histories `t <= 0`.
    Exp { rate: f64 },
}

impl TimeFactor {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFactor::One => 1.0,
            TimeFactor::Exp { rate } => math::exp(rate * t),
        }
    }

    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        match self {
            TimeFactor::One => 1.0,
            TimeFactor::Exp { rate } => {
                math::exp(rate * if *rate >= 0.0 { hi } else { lo })
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeFactor::One) || matches!(self, TimeFactor::Exp { rate } if *rate == 0.0)
    }
}

/// A bounded function on (a slab of) time × domain, extended by zero at the
/// cemetery state.
#[derive(Clone)]
pub enum SpaceTimeFn {
    Zero,
    Separable {
        time: TimeFactor,
        space: SpaceProfile,
        scale: f64,
    },
    Custom(CustomFn),
}

/// Opaque bounded callable with a declared sup bound.
#[derive(Clone)]
pub struct CustomFn {
    pub f: Arc<dyn Fn(f64, &Point) -> f64 + Send + Sync>,
    pub bound: f64,
    pub feature: Option<(f64, f64)>,
}

impl core::fmt::Debug for SpaceTimeFn {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SpaceTimeFn::Zero => write!(f, "Zero"),
            SpaceTimeFn::Separable { time, space, scale } => f
                .debug_struct("Separable")
                .field("time", time)
                .field("space", space)
                .field("scale", scale)
                .finish(),
            SpaceTimeFn::Custom(c) => f
                .debug_struct("Custom")
                .field("bound", &c.bound)
                .finish_non_exhaustive(),
        }
    }
}

impl SpaceTimeFn {
    pub fn zero() -> Self {
        SpaceTimeFn::Zero
    }

    pub fn constant(c: f64) -> Self {
        SpaceTimeFn::Separable {
            time: TimeFactor::One,
            space: SpaceProfile::Constant(c),
            scale: 1.0,
        }
    }

    pub fn profile(space: SpaceProfile) -> Self {
        SpaceTimeFn::Separable {
            time: TimeFactor::One,
            space,
            scale: 1.0,
        }
    }

    pub fn separable(time: TimeFactor, space: SpaceProfile) -> Self {
        SpaceTimeFn::Separable {
            time,
            space,
            scale: 1.0,
        }
    }

    pub fn custom(
        f: impl Fn(f64, &Point) -> f64 + Send + Sync + 'static,
        bound: f64,
    ) -> Self {
        SpaceTimeFn::Custom(CustomFn {
            f: Arc::new(f),
            bound,
            feature: None,
        })
    }

    pub fn eval(&self, model: &SpatialModel, t: f64, y: &Point) -> f64 {
        match self {
            SpaceTimeFn::Zero => 0.0,
            SpaceTimeFn::Separable { time, space, scale } => {
                scale * time.eval(t) * space.eval(model, y)
            }
            SpaceTimeFn::Custom(c) => (c.f)(t, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SpaceTimeFn::Zero)
            || matches!(self, SpaceTimeFn::Separable { scale, .. } if *scale == 0.0)
            || matches!(
                self,
                SpaceTimeFn::Separable { space: SpaceProfile::Constant(c), .. } if *c == 0.0
            )
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            SpaceTimeFn::Zero => true,
            SpaceTimeFn::Separable { time, .. } => time.is_constant(),
            SpaceTimeFn::Custom(_) => false,
        }
    }

    /// True only when the function is structurally time dependent; opaque
    /// callables are trusted.
    pub fn is_provably_time_dependent(&self) -> bool {
        matches!(self, SpaceTimeFn::Separable { time, .. } if !time.is_constant())
    }

    /// Freeze the time factor at zero (`φ ↦ φ(0, ·)`).
    pub fn at_time_zero(&self) -> SpaceTimeFn {
        match self {
            SpaceTimeFn::Zero => SpaceTimeFn::Zero,
            SpaceTimeFn::Separable { time, space, scale } => SpaceTimeFn::Separable {
                time: TimeFactor::One,
                space: space.clone(),
                scale: scale * time.eval(0.0),
            },
            SpaceTimeFn::Custom(c) => {
                let inner = c.f.clone();
                SpaceTimeFn::Custom(CustomFn {
                    f: Arc::new(move |_t, y| inner(0.0, y)),
                    bound: c.bound,
                    feature: c.feature,
                })
            }
        }
    }

    /// Sup-norm bound over `[t_lo, t_hi] ×` domain.
    pub fn bound_on(&self, t_lo: f64, t_hi: f64) -> f64 {
        match self {
            SpaceTimeFn::Zero => 0.0,
            SpaceTimeFn::Separable { time, space, scale } => {
                scale.abs() * time.sup_on(t_lo, t_hi) * space.sup()
            }
            SpaceTimeFn::Custom(c) => c.bound,
        }
    }

    pub fn separable_parts(&self) -> Option<(TimeFactor, &SpaceProfile, f64)> {
        match self {
            SpaceTimeFn::Separable { time, space, scale } => Some((*time, space, *scale)),
            SpaceTimeFn::Zero => None,
            SpaceTimeFn::Custom(_) => None,
        }
    }

    pub fn feature_window(&self) -> Option<(f64, f64)> {
        match self {
            SpaceTimeFn::Separable { space, .. } => space.feature_window(),
            SpaceTimeFn::Custom(c) => c.feature,
            SpaceTimeFn::Zero => None,
        }
    }

    /// Spot-check the declared bound on a sample grid (used by problem
    /// validation).
    pub fn validate_bound(
        &self,
        model: &SpatialModel,
        t_lo: f64,
        t_hi: f64,
        probes: &[Point],
    ) -> Result<()> {
        let bound = self.bound_on(t_lo, t_hi);
        let steps = 8;
        for i in 0..=steps {
            let t = t_lo + (t_hi - t_lo) * i as f64 / steps as f64;
            for p in probes {
                let v = self.eval(model, t, p);
                if !v.is_finite() || v.abs() > bound * (1.0 + 1e-12) + 1e-12 {
                    return Err(Error::invalid(format!(
                        "data function exceeds its declared bound {bound} at (t={t}, x={:?}): {v}",
                        p.coords()
                    )));
                }
            }
        }
        Ok(())
    }
}
