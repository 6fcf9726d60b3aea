//! Quadrature rules: Gauss–Legendre, adaptive Gauss–Kronrod and a product rule on the unit sphere.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::velocity::Velocity;

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Nodes and weights mapped affinely onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integral value and an (upper) absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_intervals: 2000,
        }
    }
}

impl AdaptiveOptions {
    pub fn rel(rel_tol: f64) -> Self {
        AdaptiveOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> QuadResult {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    QuadResult {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

struct Segment {
    a: f64,
    b: f64,
    r: QuadResult,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.r.error == other.r.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.r.error.total_cmp(&other.r.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) on `[a, b]`, with optional interior breakpoints.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: AdaptiveOptions,
) -> Result<QuadResult> {
    let mut edges = vec![a];
    edges.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    edges.sort_by(f64::total_cmp);

    let mut heap = BinaryHeap::new();
    let (mut value, mut error) = (0.0, 0.0);
    for w in edges.windows(2) {
        if w[1] > w[0] {
            let r = gk15(&mut f, w[0], w[1]);
            value += r.value;
            error += r.error;
            heap.push(Segment { a: w[0], b: w[1], r });
        }
    }
    let tol = |v: f64| (opts.rel_tol * v.abs()).max(opts.abs_tol);
    while error > tol(value) {
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature {
                what: "adaptive Gauss-Kronrod",
                achieved: error / value.abs().max(f64::MIN_POSITIVE),
                requested: opts.rel_tol,
            });
        }
        let seg = heap.pop().expect("non-empty heap");
        let m = 0.5 * (seg.a + seg.b);
        if m <= seg.a || m >= seg.b {
            // interval exhausted at machine precision; accept what we have
            heap.push(seg);
            break;
        }
        let left = gk15(&mut f, seg.a, m);
        let right = gk15(&mut f, m, seg.b);
        value += left.value + right.value - seg.r.value;
        error += left.error + right.error - seg.r.error;
        heap.push(Segment { a: seg.a, b: m, r: left });
        heap.push(Segment { a: m, b: seg.b, r: right });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value = heap.iter().map(|s| s.r.value).sum();
    let error = heap.iter().map(|s| s.r.error).sum();
    Ok(QuadResult { value, error })
}

/// Adaptive quadrature over `[a, ∞)` through the map `x = a + t / (1 − t)`.
pub fn adaptive_semi_infinite<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    opts: AdaptiveOptions,
) -> Result<QuadResult> {
    adaptive(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let v = f(a + t / s);
            if v == 0.0 {
                0.0
            } else {
                v / (s * s)
            }
        },
        0.0,
        1.0,
        &[],
        opts,
    )
}

/// Product rule for averages over the unit sphere: Gauss–Legendre in cos θ times a uniform
/// midpoint rule in azimuth. Weights sum to one, so a weighted sum is `(1/4π) ∫ dσ`.
#[derive(Debug, Clone)]
pub struct SphereRule {
    /// (cos θ, sin θ, weight/azimuth-count) per polar node.
    polar: Vec<(f64, f64, f64)>,
    /// (cos φ, sin φ) per azimuthal node.
    azimuth: Vec<(f64, f64)>,
}

impl SphereRule {
    pub fn new(n_polar: usize, n_azimuth: usize) -> Self {
        assert!(n_polar >= 1 && n_azimuth >= 1);
        let gl = GaussLegendre::new(n_polar);
        let polar = gl
            .nodes
            .iter()
            .zip(&gl.weights)
            .map(|(&c, &w)| (c, (1.0 - c * c).max(0.0).sqrt(), 0.5 * w / n_azimuth as f64))
            .collect();
        let azimuth = (0..n_azimuth)
            .map(|k| {
                let phi = 2.0 * PI * (k as f64 + 0.5) / n_azimuth as f64;
                (phi.cos(), phi.sin())
            })
            .collect();
        SphereRule { polar, azimuth }
    }

    pub fn len(&self) -> usize {
        self.polar.len() * self.azimuth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Directions and weights with the polar axis along `axis` (a unit vector).
    pub fn oriented(&self, axis: Velocity) -> impl Iterator<Item = (Velocity, f64)> + '_ {
        let (e1, e2) = axis.orthonormal_complement();
        self.polar.iter().flat_map(move |&(c, s, w)| {
            self.azimuth.iter().map(move |&(cp, sp)| {
                (axis * c + e1 * (s * cp) + e2 * (s * sp), w)
            })
        })
    }

    /// `(1/4π) ∫ f(σ) dσ` with the polar axis along `axis`.
    pub fn average<F: FnMut(Velocity) -> f64>(&self, axis: Velocity, mut f: F) -> f64 {
        self.oriented(axis).map(|(s, w)| w * f(s)).sum()
    }
}

impl Default for SphereRule {
    fn default() -> Self {
        SphereRule::new(64, 64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(10);
        assert!((gl.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // ∫_0^2 x^19 dx = 2^20 / 20
        let v = gl.integrate(0.0, 2.0, |x| x.powi(19));
        assert!((v / (2f64.powi(20) / 20.0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn high_order_rule_is_accurate() {
        let gl = GaussLegendre::new(256);
        assert!((gl.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        let v = gl.integrate(0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_sqrt_endpoint() {
        let r = adaptive(|x: f64| x.sqrt(), 0.0, 1.0, &[], AdaptiveOptions::rel(1e-12)).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn adaptive_with_kink_breakpoint() {
        let r = adaptive(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], AdaptiveOptions::rel(1e-13)).unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn semi_infinite_gaussian() {
        let r = adaptive_semi_infinite(|x: f64| (-x * x).exp(), 0.0, AdaptiveOptions::rel(1e-12)).unwrap();
        assert!((r.value - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_rule_moments() {
        let rule = SphereRule::new(16, 16);
        let axis = Velocity::new(1.0, 2.0, -0.5).normalized().unwrap();
        assert!((rule.average(axis, |_| 1.0) - 1.0).abs() < 1e-14);
        // <σ_x²> = 1/3, <σ_x σ_y> = 0
        assert!((rule.average(axis, |s| s.vx() * s.vx()) - 1.0 / 3.0).abs() < 1e-14);
        assert!(rule.average(axis, |s| s.vx() * s.vy()).abs() < 1e-14);
    }
}
