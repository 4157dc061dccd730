//! Triangle and interval quadrature.
//!
//! Triangle rules are the symmetric positive-weight rules of Dunavant, with
//! barycentric points and weights normalized to the reference triangle of
//! area 1/2. Interval rules are Gauss-Legendre on `[0, 1]`, computed by Newton
//! iteration on the Legendre recurrence.

use alloc::format;
use alloc::vec::Vec;

use libm::{cos, fabs};

use crate::{Error, Result};

/// Highest total degree integrated exactly by [`triangle_rule`].
pub const MAX_TRIANGLE_EXACTNESS: usize = 6;
/// Highest degree integrated exactly by [`edge_rule`].
pub const MAX_EDGE_EXACTNESS: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    /// Barycentric coordinates.
    pub points: Vec<[f64; 3]>,
    /// Weights summing to 1/2, the area of the reference triangle.
    pub weights: Vec<f64>,
    pub exactness: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRule {
    /// Points in `[0, 1]`.
    pub points: Vec<f64>,
    /// Weights summing to 1.
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl EdgeRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

enum Orbit {
    Centroid(f64),
    /// `(a, a, 1 - 2a)` and its permutations.
    Two(f64, f64),
    /// all permutations of `(a, b, 1 - a - b)`.
    Three(f64, f64, f64),
}

fn expand(orbits: &[Orbit], exactness: usize) -> TriangleRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits {
        match *orbit {
            Orbit::Centroid(w) => {
                points.push([1.0 / 3.0; 3]);
                weights.push(w);
            }
            Orbit::Two(a, w) => {
                let b = 1.0 - 2.0 * a;
                for p in [[a, a, b], [a, b, a], [b, a, a]] {
                    points.push(p);
                    weights.push(w);
                }
            }
            Orbit::Three(a, b, w) => {
                let c = 1.0 - a - b;
                for p in [
                    [a, b, c],
                    [a, c, b],
                    [b, a, c],
                    [b, c, a],
                    [c, a, b],
                    [c, b, a],
                ] {
                    points.push(p);
                    weights.push(w);
                }
            }
        }
    }
    // tabulated weights are relative to the triangle area
    for w in &mut weights {
        *w *= 0.5;
    }
    TriangleRule {
        points,
        weights,
        exactness,
    }
}

/// The cheapest tabulated rule that integrates every polynomial of total
/// degree `exactness` exactly.
pub fn triangle_rule(exactness: usize) -> Result<TriangleRule> {
    let rule = match exactness {
        0 | 1 => expand(&[Orbit::Centroid(1.0)], 1),
        2 => expand(&[Orbit::Two(1.0 / 6.0, 1.0 / 3.0)], 2),
        // the 4-point degree-3 rule has a negative weight; use degree 4
        3 | 4 => expand(
            &[
                Orbit::Two(0.445_948_490_915_964_886_32, 0.223_381_589_678_011_465_7),
                Orbit::Two(0.091_576_213_509_770_743_46, 0.109_951_743_655_321_867_64),
            ],
            4,
        ),
        5 => expand(
            &[
                Orbit::Centroid(0.225),
                Orbit::Two(0.470_142_064_105_115_089_77, 0.132_394_152_788_506_180_74),
                Orbit::Two(0.101_286_507_323_456_338_8, 0.125_939_180_544_827_152_6),
            ],
            5,
        ),
        6 => expand(
            &[
                Orbit::Two(0.249_286_745_170_910_421_29, 0.116_786_275_726_379_366_03),
                Orbit::Two(0.063_089_014_491_502_228_34, 0.050_844_906_370_206_816_921),
                Orbit::Three(
                    0.053_145_049_844_816_947_353,
                    0.310_352_451_033_784_405_42,
                    0.082_851_075_618_373_575_194,
                ),
            ],
            6,
        ),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "triangle quadrature of exactness {exactness} is not tabulated (max {MAX_TRIANGLE_EXACTNESS})"
            )))
        }
    };
    Ok(rule)
}

/// Gauss-Legendre rule on `[0, 1]` with the fewest points exact to `exactness`.
pub fn edge_rule(exactness: usize) -> Result<EdgeRule> {
    if exactness > MAX_EDGE_EXACTNESS {
        return Err(Error::InvalidArgument(format!(
            "edge quadrature of exactness {exactness} is not supported (max {MAX_EDGE_EXACTNESS})"
        )));
    }
    let n = exactness / 2 + 1;
    let (x, w) = gauss_legendre(n);
    Ok(EdgeRule {
        points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        weights: w.iter().map(|w| 0.5 * w).collect(),
        exactness: 2 * n - 1,
    })
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    for i in 0..n {
        let mut x = cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if fabs(dx) < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // ascending order
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// ∫_T x^i y^j over the reference triangle (0,0),(1,0),(0,1).
    fn monomial_exact(i: u32, j: u32) -> f64 {
        factorial(i) * factorial(j) / factorial(i + j + 2)
    }

    fn integrate(rule: &TriangleRule, i: u32, j: u32) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| w * l[1].powi(i as i32) * l[2].powi(j as i32))
            .sum()
    }

    #[test]
    fn triangle_battery() {
        for k in 0..=MAX_TRIANGLE_EXACTNESS {
            let rule = triangle_rule(k).unwrap();
            assert!(rule.exactness >= k);
            assert!(rule.weights.iter().all(|w| *w > 0.0));
            for d in 0..=rule.exactness as u32 {
                for i in 0..=d {
                    let got = integrate(&rule, i, d - i);
                    let want = monomial_exact(i, d - i);
                    assert!(
                        (got - want).abs() < 1e-15,
                        "k={k} x^{i} y^{} : {got} vs {want}",
                        d - i
                    );
                }
            }
        }
    }

    #[test]
    fn triangle_reference_values() {
        let r = triangle_rule(2).unwrap();
        assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-16);
        let x2y = integrate(&triangle_rule(3).unwrap(), 2, 1);
        assert!((x2y - 1.0 / 60.0).abs() < 1e-16);
    }

    #[test]
    fn rules_are_not_exact_beyond_their_degree() {
        // sanity: the battery above is not vacuous
        let r = triangle_rule(2).unwrap();
        assert!((integrate(&r, 4, 0) - monomial_exact(4, 0)).abs() > 1e-6);
    }

    #[test]
    fn unsupported_degrees() {
        assert!(triangle_rule(7).is_err());
        assert!(edge_rule(12).is_err());
    }

    #[test]
    fn edge_battery() {
        for k in 0..=MAX_EDGE_EXACTNESS {
            let r = edge_rule(k).unwrap();
            assert!(r.exactness >= k);
            assert!(r.weights.iter().all(|w| *w > 0.0));
            for d in 0..=r.exactness as i32 {
                let got: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * x.powi(d))
                    .sum();
                assert!((got - 1.0 / (d + 1) as f64).abs() < 1e-15, "k={k} d={d}");
            }
        }
    }

    #[test]
    fn composite_cosine_square() {
        // ∫_0^1 2 cos²(3πx) dx = 1 on subintervals of length 1/20
        let r = edge_rule(11).unwrap();
        let m = 20;
        let mut s = 0.0;
        for k in 0..m {
            for (t, w) in r.points.iter().zip(&r.weights) {
                let x = (k as f64 + t) / m as f64;
                let c = (3.0 * core::f64::consts::PI * x).cos();
                s += w / m as f64 * 2.0 * c * c;
            }
        }
        assert!((s - 1.0).abs() < 1e-10);
    }
}
