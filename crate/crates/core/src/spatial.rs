//! Spatial Feller models with explicit transition kernels.
//!
//! All models use the generator-`Δ` convention: the free kernel is
//! `(4πs)^{-d/2} e^{-|x-y|²/(4s)}`, so Gaussian steps have variance `2·Δs`
//! per coordinate. The four models:
//!
//! * `FreeBm(d)` — Brownian motion on `R^d`, conservative.
//! * `KilledBmInterval(a, b)` — Brownian motion killed on exiting `(a, b)`;
//!   sine eigenseries `(2/L) Σ e^{-k_n² s} sin(k_n(x-a)) sin(k_n(y-a))`,
//!   `k_n = nπ/L`; below a small-time floor the image-method Gaussian sum is
//!   used instead.
//! * `ReflectedBmHalfLine` — reflection at 0, image kernel
//!   `g_s(x-y) + g_s(x+y)`, conservative.
//! * `SpectralFractionalInterval(β)` — the killed interval semigroup on
//!   `(0, π)` subordinated by an independent β-stable subordinator:
//!   eigenseries with `e^{-n^{2β} s}`. Sampling uses exactly that
//!   subordination: a β-stable physical-time increment followed by a killed
//!   Brownian step.
//!
//! Killed-path sampling applies one-sided Brownian-bridge exit corrections
//! `exp(-(b-x₀)(b-x₁)/Δs)` per boundary between observation times (the
//! variance-2 convention), removing the first-order discretization bias.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;
use crate::math::{GaussLegendre, KahanSum};
use crate::rng::StreamRng;
use crate::subordinator::sample_positive_stable;

pub const MAX_DIM: usize = 3;

/// exponent margin for eigenseries truncation: e^{-34.5} < 1e-14
const SERIES_MARGIN: f64 = 34.5;
/// below this diffusion time the interval series switches to image Gaussians
const IMAGE_FLOOR: f64 = 1e-4;
/// hard cap on series length (spectral kernels at extreme arguments)
const SERIES_CAP: usize = 400_000;

/// A point of the state space, dimension at most [`MAX_DIM`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: u8,
}

impl Point {
    pub fn d1(x: f64) -> Self {
        Self {
            coords: [x, 0.0, 0.0],
            dim: 1,
        }
    }

    pub fn from_slice(c: &[f64]) -> Result<Self> {
        if c.is_empty() || c.len() > MAX_DIM {
            return Err(Error::domain(format!(
                "points must have 1..={MAX_DIM} coordinates, got {}",
                c.len()
            )));
        }
        let mut coords = [0.0; MAX_DIM];
        coords[..c.len()].copy_from_slice(c);
        Ok(Self {
            coords,
            dim: c.len() as u8,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    /// First coordinate; the natural accessor for the 1-d models.
    pub fn x(&self) -> f64 {
        self.coords[0]
    }
}

#[derive(Clone, Debug)]
pub enum SpatialModel {
    FreeBm { dim: usize },
    KilledBmInterval { a: f64, b: f64 },
    ReflectedBmHalfLine,
    SpectralFractionalInterval { beta: f64 },
}

impl SpatialModel {
    pub fn free_bm(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid(format!(
                "free Brownian motion supports dimensions 1..={MAX_DIM}, got {dim}"
            )));
        }
        Ok(SpatialModel::FreeBm { dim })
    }

    pub fn killed_interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!(
                "killed interval needs finite a < b, got ({a}, {b})"
            )));
        }
        Ok(SpatialModel::KilledBmInterval { a, b })
    }

    pub fn reflected_half_line() -> Self {
        SpatialModel::ReflectedBmHalfLine
    }

    /// Spectral fractional Laplacian of order β on the interval `(0, π)`.
    pub fn spectral_interval(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid(format!(
                "spectral order must lie in (0,1), got {beta}"
            )));
        }
        Ok(SpatialModel::SpectralFractionalInterval { beta })
    }

    pub fn dim(&self) -> usize {
        match self {
            SpatialModel::FreeBm { dim } => *dim,
            _ => 1,
        }
    }

    pub fn is_conservative(&self) -> bool {
        matches!(
            self,
            SpatialModel::FreeBm { .. } | SpatialModel::ReflectedBmHalfLine
        )
    }

    /// Domain endpoints for the interval models.
    pub fn interval(&self) -> Option<(f64, f64)> {
        match self {
            SpatialModel::KilledBmInterval { a, b } => Some((*a, *b)),
            SpatialModel::SpectralFractionalInterval { .. } => Some((0.0, math::PI)),
            _ => None,
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        if x.dim() != self.dim() {
            return false;
        }
        match self {
            SpatialModel::FreeBm { .. } => x.coords().iter().all(|c| c.is_finite()),
            SpatialModel::ReflectedBmHalfLine => x.x() >= 0.0 && x.x().is_finite(),
            _ => {
                let (a, b) = self.interval().expect("interval model");
                x.x() > a && x.x() < b
            }
        }
    }

    /// `-L`-eigenvalue of the n-th sine mode for the interval models.
    pub fn eigenvalue(&self, n: u32) -> Option<f64> {
        match self {
            SpatialModel::KilledBmInterval { a, b } => {
                let k = n as f64 * math::PI / (b - a);
                Some(k * k)
            }
            SpatialModel::SpectralFractionalInterval { beta } => {
                Some(math::powf((n as f64) * (n as f64), *beta))
            }
            _ => None,
        }
    }

    /// Unnormalized n-th eigenfunction `sin(k_n (x - a))` (interval models).
    pub fn eigenfunction(&self, n: u32, x: f64) -> Option<f64> {
        let (a, b) = self.interval()?;
        let k = n as f64 * math::PI / (b - a);
        Some(math::sin(k * (x - a)))
    }

    fn series_len(&self, s: f64) -> Result<usize> {
        let n = match self {
            SpatialModel::KilledBmInterval { a, b } => {
                let l = b - a;
                math::ceil(l / math::PI * math::sqrt(SERIES_MARGIN / s)) as usize
            }
            SpatialModel::SpectralFractionalInterval { beta } => {
                math::ceil(math::powf(SERIES_MARGIN / s, 0.5 / *beta)) as usize
            }
            _ => 0,
        };
        if n > SERIES_CAP {
            return Err(Error::Accuracy {
                what: format!("eigenseries of length {n} at s = {s}"),
                best: f64::NAN,
                err_est: f64::INFINITY,
                tol: 1e-14,
            });
        }
        Ok(n.max(1))
    }

    /// Transition density `p^Ω_s(x, y)`, `s > 0`.
    pub fn transition_density(&self, s: f64, x: &Point, y: &Point) -> Result<f64> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::domain(format!("time must be positive, got {s}")));
        }
        if !self.contains(x) || !self.contains(y) {
            return Err(Error::domain(
                "transition density arguments must lie in the domain",
            ));
        }
        Ok(match self {
            SpatialModel::FreeBm { dim } => {
                let mut q = 0.0;
                for i in 0..*dim {
                    let d = x.coords()[i] - y.coords()[i];
                    q += d * d;
                }
                math::exp(-q / (4.0 * s)) / math::powf(4.0 * math::PI * s, *dim as f64 / 2.0)
            }
            SpatialModel::ReflectedBmHalfLine => {
                gauss1(s, x.x() - y.x()) + gauss1(s, x.x() + y.x())
            }
            SpatialModel::KilledBmInterval { a, b } => {
                killed_interval_density(s, x.x(), y.x(), *a, *b)
            }
            SpatialModel::SpectralFractionalInterval { beta } => {
                let n = self.series_len(s)?;
                let mut acc = KahanSum::new();
                for m in 1..=n {
                    let mf = m as f64;
                    acc.add(
                        math::exp(-math::powf(mf * mf, *beta) * s)
                            * math::sin(mf * x.x())
                            * math::sin(mf * y.x()),
                    );
                }
                (2.0 / math::PI) * acc.value()
            }
        })
    }

    /// One transition over physical time `ds`: new position plus an alive
    /// flag realizing the killing time.
    pub fn sample_step(&self, x: &Point, ds: f64, rng: &mut StreamRng) -> Result<(Point, bool)> {
        if !(ds > 0.0) || !ds.is_finite() {
            return Err(Error::domain(format!("step must be positive, got {ds}")));
        }
        if !self.contains(x) {
            return Err(Error::usage(
                "sample_step called on a point outside the domain (dead state)",
            ));
        }
        match self {
            SpatialModel::FreeBm { dim } => {
                let sd = math::sqrt(2.0 * ds);
                let mut c = [0.0; MAX_DIM];
                for (i, ci) in c.iter_mut().enumerate().take(*dim) {
                    let z: f64 = StandardNormal.sample(rng);
                    *ci = x.coords()[i] + sd * z;
                }
                Ok((
                    Point {
                        coords: c,
                        dim: *dim as u8,
                    },
                    true,
                ))
            }
            SpatialModel::ReflectedBmHalfLine => {
                let z: f64 = StandardNormal.sample(rng);
                Ok((Point::d1((x.x() + math::sqrt(2.0 * ds) * z).abs()), true))
            }
            SpatialModel::KilledBmInterval { a, b } => {
                Ok(killed_step(x.x(), ds, *a, *b, rng))
            }
            SpatialModel::SpectralFractionalInterval { beta } => {
                // exact in law: the process is the killed interval motion run
                // at an independent β-stable time change
                let dt = math::fast_pow(ds, 1.0 / *beta) * sample_positive_stable(*beta, rng);
                Ok(killed_step(x.x(), dt.max(1e-300), 0.0, math::PI, rng))
            }
        }
    }

    /// Survival probability `∫ p^Ω_s(x, ·)`: closed sine sums for the killed
    /// models, 1 for the conservative ones.
    pub fn survival(&self, s: f64, x: &Point) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::domain(format!("time must be positive, got {s}")));
        }
        if !self.contains(x) {
            return Err(Error::domain("survival argument outside the domain"));
        }
        match self {
            SpatialModel::FreeBm { .. } | SpatialModel::ReflectedBmHalfLine => Ok(1.0),
            SpatialModel::KilledBmInterval { a, b } => {
                let l = b - a;
                let n = self.series_len(s)?;
                let mut acc = KahanSum::new();
                for m in 1..=n {
                    let k = m as f64 * math::PI / l;
                    let mass = (1.0 - math::cos(m as f64 * math::PI)) / k;
                    acc.add(math::exp(-k * k * s) * math::sin(k * (x.x() - a)) * mass);
                }
                Ok(((2.0 / l) * acc.value()).clamp(0.0, 1.0))
            }
            SpatialModel::SpectralFractionalInterval { beta } => {
                let n = self.series_len(s)?;
                let mut acc = KahanSum::new();
                for m in 1..=n {
                    let mf = m as f64;
                    let mass = (1.0 - math::cos(mf * math::PI)) / mf;
                    acc.add(math::exp(-math::powf(mf * mf, *beta) * s) * math::sin(mf * x.x()) * mass);
                }
                Ok(((2.0 / math::PI) * acc.value()).clamp(0.0, 1.0))
            }
        }
    }

    /// `e^{rL} q (x) = ∫ p^Ω_r(x, y) q(y) dy` by quadrature; `q` is extended
    /// by zero outside the domain.
    pub fn semigroup_apply(
        &self,
        r: f64,
        q: &dyn Fn(&Point) -> f64,
        x: &Point,
        cfg: &SemigroupQuad,
    ) -> Result<f64> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::domain(format!("time must be positive, got {r}")));
        }
        if !self.contains(x) {
            return Err(Error::domain("semigroup argument outside the domain"));
        }
        // the kernel is a spike of this width around x at small r; a cut
        // there keeps the quadrature resolved at all scales
        let spike_scale = match self {
            SpatialModel::SpectralFractionalInterval { beta } => {
                math::powf(r, 1.0 / beta)
            }
            _ => r,
        };
        let spike_w = cfg.width_sigmas * math::sqrt(2.0 * spike_scale);
        let spike = Some((x.x() - spike_w, x.x() + spike_w));
        match self {
            SpatialModel::KilledBmInterval { a, b } => {
                let segs = segments(*a, *b, &[cfg.feature, spike]);
                self.integrate_segments_1d(r, q, x, &segs, cfg)
            }
            SpatialModel::SpectralFractionalInterval { .. } => {
                let segs = segments(0.0, math::PI, &[cfg.feature, spike]);
                self.integrate_segments_1d(r, q, x, &segs, cfg)
            }
            SpatialModel::ReflectedBmHalfLine => {
                let w = cfg.width_sigmas * math::sqrt(2.0 * r);
                let segs = segments(0.0, x.x() + w, &[cfg.feature, spike]);
                self.integrate_segments_1d(r, q, x, &segs, cfg)
            }
            SpatialModel::FreeBm { dim } => {
                let w = cfg.width_sigmas * math::sqrt(2.0 * r);
                match dim {
                    1 => {
                        let segs = segments(x.x() - w, x.x() + w, &[cfg.feature]);
                        self.integrate_segments_1d(r, q, x, &segs, cfg)
                    }
                    _ => self.integrate_tensor(r, q, x, w, cfg),
                }
            }
        }
    }

    fn integrate_segments_1d(
        &self,
        r: f64,
        q: &dyn Fn(&Point) -> f64,
        x: &Point,
        segs: &[(f64, f64)],
        cfg: &SemigroupQuad,
    ) -> Result<f64> {
        let rule = GaussLegendre::new(cfg.nodes);
        let mut acc = KahanSum::new();
        for &(lo, hi) in segs {
            for p in 0..cfg.panels {
                let d = (hi - lo) / cfg.panels as f64;
                let (plo, phi) = (lo + p as f64 * d, lo + (p + 1) as f64 * d);
                for (yv, wt) in rule.mapped(plo, phi) {
                    let y = Point::d1(yv);
                    if !self.contains(&y) {
                        continue;
                    }
                    acc.add(wt * self.transition_density(r, x, &y)? * q(&y));
                }
            }
        }
        Ok(acc.value())
    }

    fn integrate_tensor(
        &self,
        r: f64,
        q: &dyn Fn(&Point) -> f64,
        x: &Point,
        w: f64,
        cfg: &SemigroupQuad,
    ) -> Result<f64> {
        let dim = self.dim();
        let rule = GaussLegendre::new(cfg.nodes);
        let mut axes: Vec<Vec<(f64, f64)>> = Vec::with_capacity(dim);
        for i in 0..dim {
            let c = x.coords()[i];
            let mut nodes = Vec::new();
            for &(lo, hi) in &segments(c - w, c + w, &[cfg.feature]) {
                for p in 0..cfg.panels {
                    let d = (hi - lo) / cfg.panels as f64;
                    nodes.extend(rule.mapped(lo + p as f64 * d, lo + (p + 1) as f64 * d));
                }
            }
            axes.push(nodes);
        }
        let mut acc = KahanSum::new();
        let mut idx = alloc::vec![0usize; dim];
        'outer: loop {
            let mut c = [0.0; MAX_DIM];
            let mut wt = 1.0;
            for i in 0..dim {
                let (yv, wv) = axes[i][idx[i]];
                c[i] = yv;
                wt *= wv;
            }
            let y = Point {
                coords: c,
                dim: dim as u8,
            };
            acc.add(wt * self.transition_density(r, x, &y)? * q(&y));
            for i in 0..dim {
                idx[i] += 1;
                if idx[i] < axes[i].len() {
                    continue 'outer;
                }
                idx[i] = 0;
            }
            break;
        }
        Ok(acc.value())
    }
}

/// Quadrature controls for [`SpatialModel::semigroup_apply`].
#[derive(Clone, Copy, Debug)]
pub struct SemigroupQuad {
    pub nodes: usize,
    pub panels: usize,
    /// Half-width of the Gaussian window in standard deviations
    /// (unbounded domains).
    pub width_sigmas: f64,
    /// Extra interval that must be resolved regardless of the Gaussian
    /// window, e.g. the support of a localized integrand.
    pub feature: Option<(f64, f64)>,
}

impl Default for SemigroupQuad {
    fn default() -> Self {
        Self {
            nodes: 48,
            panels: 3,
            width_sigmas: 12.0,
            feature: None,
        }
    }
}

/// Partition the union of `[lo, hi]` and the feature windows, inserting all
/// boundaries as cuts and dropping empty pieces. Out-of-domain pieces are
/// harmless: their nodes fail the domain check and are skipped.
fn segments(lo: f64, hi: f64, features: &[Option<(f64, f64)>]) -> Vec<(f64, f64)> {
    let mut lo2 = lo;
    let mut hi2 = hi;
    for f in features.iter().flatten() {
        lo2 = lo2.min(f.0);
        hi2 = hi2.max(f.1);
    }
    let mut cuts = alloc::vec![lo2, hi2];
    for c in [lo, hi]
        .into_iter()
        .chain(features.iter().flatten().flat_map(|f| [f.0, f.1]))
    {
        if c > lo2 && c < hi2 {
            cuts.push(c);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cuts"));
    cuts.dedup();
    cuts.windows(2)
        .filter(|w| w[1] > w[0] + 1e-300)
        .map(|w| (w[0], w[1]))
        .collect()
}

#[inline]
fn gauss1(s: f64, d: f64) -> f64 {
    math::exp(-d * d / (4.0 * s)) / math::sqrt(4.0 * math::PI * s)
}

/// Killed-interval transition density: sine eigenseries for moderate and
/// large times, image-method Gaussian sum below the small-time floor (where
/// the series length would explode and the images are exact to well below
/// 1e-14).
fn killed_interval_density(s: f64, x: f64, y: f64, a: f64, b: f64) -> f64 {
    let l = b - a;
    let scaled = math::PI / l;
    if s * scaled * scaled < IMAGE_FLOOR {
        return killed_interval_images(s, x, y, a, b);
    }
    let n = math::ceil(l / math::PI * math::sqrt(SERIES_MARGIN / s)).max(1.0) as usize;
    let mut acc = KahanSum::new();
    for m in 1..=n {
        let k = m as f64 * scaled;
        acc.add(math::exp(-k * k * s) * math::sin(k * (x - a)) * math::sin(k * (y - a)));
    }
    ((2.0 / l) * acc.value()).max(0.0)
}

/// Image-method killed-interval kernel for small times.
fn killed_interval_images(s: f64, x: f64, y: f64, a: f64, b: f64) -> f64 {
    let l = b - a;
    let mut total = 0.0;
    for k in -2i32..=2 {
        let shift = 2.0 * k as f64 * l;
        total += gauss1(s, x - y + shift);
        total -= gauss1(s, x + y - 2.0 * a + shift);
    }
    total.max(0.0)
}

/// Gaussian step in `(a, b)` with the exact Brownian-bridge no-exit
/// probability between observation times.
///
/// The bridge survival equals the ratio of the killed to the free transition
/// density at the endpoints. Its image expansion starts with the one-sided
/// factors `exp(-(b-x₀)(b-x₁)/Δs)` per boundary; the full ratio also sums
/// the higher images, which matter once `Δs` is comparable to the squared
/// interval length — routine here, because subordinated models feed
/// heavy-tailed physical-time increments through this step.
fn killed_step(x: f64, ds: f64, a: f64, b: f64, rng: &mut StreamRng) -> (Point, bool) {
    let z: f64 = StandardNormal.sample(rng);
    let x1 = x + math::sqrt(2.0 * ds) * z;
    if x1 <= a || x1 >= b {
        return (Point::d1(x1), false);
    }
    // one-sided exit exponents; when both exceed the f64 floor the bridge
    // stays inside almost surely and no decision draw is needed
    let q_lo = (x - a) * (x1 - a) / ds;
    let q_up = (b - x) * (b - x1) / ds;
    if q_lo > 40.0 && q_up > 40.0 {
        return (Point::d1(x1), true);
    }
    let l = b - a;
    let survive = if ds * (math::PI / l) * (math::PI / l) < IMAGE_FLOOR {
        // image expansion of the bridge no-exit probability relative to the
        // free kernel: the one-sided factors are the k = 0, -1 images of the
        // reflected sum; the remaining |k| <= 1 images enter here and
        // everything further is below e^{-40} in this regime
        let d = x - x1;
        let m = x + x1 - 2.0 * a;
        let mut ratio = 1.0 - guarded_exp(-q_lo) - guarded_exp(-q_up);
        ratio -= guarded_exp(-((m + 2.0 * l) * (m + 2.0 * l) - d * d) / (4.0 * ds));
        ratio += guarded_exp(-((d - 2.0 * l) * (d - 2.0 * l) - d * d) / (4.0 * ds));
        ratio += guarded_exp(-((d + 2.0 * l) * (d + 2.0 * l) - d * d) / (4.0 * ds));
        ratio.clamp(0.0, 1.0)
    } else {
        let free = gauss1(ds, x - x1);
        if free > 0.0 {
            (killed_interval_density(ds, x, x1, a, b) / free).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let u: f64 = rng.random::<f64>();
    (Point::d1(x1), u < survive)
}

#[inline]
fn guarded_exp(e: f64) -> f64 {
    if e < -40.0 {
        0.0
    } else {
        math::exp(e)
    }
}
