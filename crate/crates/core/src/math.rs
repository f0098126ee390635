//! Shared numerics: special functions, compensated summation and
//! Gauss-Legendre quadrature (plain, composite and logarithmic grids).
//!
//! Float math goes through `libm` so the crate stays `no_std` clean.

use alloc::vec::Vec;

pub use core::f64::consts::PI;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn powf(x: f64, p: f64) -> f64 {
    libm::pow(x, p)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// `x^e` with fast paths for the exponents the stable samplers hit in hot
/// loops (`e` is fixed per kernel, so exact comparisons are meaningful).
#[inline]
pub fn fast_pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 0.5 {
        libm::sqrt(x)
    } else if e == 1.0 / 3.0 {
        libm::cbrt(x)
    } else if e == 4.0 / 3.0 {
        let c = libm::cbrt(x);
        c * c * c * c
    } else if e == 2.0 / 3.0 {
        let c = libm::cbrt(x);
        c * c
    } else if e == 3.0 {
        x * x * x
    } else if e == 4.0 {
        let s = x * x;
        s * s
    } else {
        libm::pow(x, e)
    }
}

/// Gamma function on `(-1, 0) ∪ (0, ∞)`.
#[inline]
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Two-parameter Mittag-Leffler function `E_{a,a}(z) = sum_j z^j / Γ(a j + a)`
/// for `z >= 0`. All terms are positive, so the series is evaluated directly;
/// the Γ growth in the denominator makes it entire.
pub fn mittag_leffler_same(a: f64, z: f64) -> f64 {
    debug_assert!(a > 0.0 && z >= 0.0);
    if z == 0.0 {
        return 1.0 / gamma(a);
    }
    let ln_z = ln(z);
    let mut sum = 0.0_f64;
    for j in 0..500 {
        let term = exp(j as f64 * ln_z - ln_gamma(a * (j as f64 + 1.0)));
        sum += term;
        if term < sum * 1e-17 && j > 2 {
            break;
        }
    }
    sum
}

/// Neumaier-compensated accumulator. Used wherever a reduction must be
/// insensitive to magnitude ordering within a fixed summation order.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Gauss-Legendre rule on `[-1, 1]`, nodes by Newton iteration on the
/// Legendre recurrence.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature rule needs at least one node");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = KahanSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * x));
        }
        acc.value() * half
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrate `f` over `[a, b]` with `0 < a < b` on a logarithmic grid:
/// panels equally spaced in `ln r`, Gauss-Legendre in the log variable. The
/// substitution absorbs integrable power singularities `r^{-q}`, `q < 1`, at
/// the left endpoint.
pub fn integrate_log(
    a: f64,
    b: f64,
    panels_per_unit: f64,
    rule: &GaussLegendre,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    debug_assert!(a > 0.0 && b > a);
    let lo = ln(a);
    let hi = ln(b);
    let n_panels = ceil((hi - lo) * panels_per_unit).max(1.0) as usize;
    let dw = (hi - lo) / n_panels as f64;
    let mut acc = KahanSum::new();
    for p in 0..n_panels {
        let w0 = lo + p as f64 * dw;
        acc.add(rule.integrate(w0, w0 + dw, |w| {
            let r = exp(w);
            f(r) * r
        }));
    }
    acc.value()
}

/// Composite Gauss-Legendre over `[a, b]` split into `panels` equal pieces.
pub fn integrate_panels(
    a: f64,
    b: f64,
    panels: usize,
    rule: &GaussLegendre,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let dw = (b - a) / panels as f64;
    let mut acc = KahanSum::new();
    for p in 0..panels {
        let lo = a + p as f64 * dw;
        acc.add(rule.integrate(lo, lo + dw, &mut f));
    }
    acc.value()
}
