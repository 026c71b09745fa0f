//! Closed-form roots of real polynomials of degree at most four.
//!
//! Quartics go through Ferrari's resolvent cubic, cubics through Cardano
//! (or the trigonometric form when all roots are real). The closed-form
//! roots then seed a few simultaneous (Aberth-Ehrlich) corrections against
//! the original coefficients.

use alloc::vec::Vec;

use nalgebra::Complex;

use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Leading coefficients at or below this fraction of the largest one are
/// treated as zero and the degree is demoted.
pub const DEMOTION_THRESHOLD: f64 = 1e-12;

/// Real parts closer than this are reported once.
pub const CANDIDATE_DEDUP: f64 = 1e-10;

/// `a0 + a1 x + a2 x^2 + a3 x^3 + a4 x^4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartic {
    pub coeffs: [f64; 5],
}

impl Quartic {
    pub fn new(coeffs: [f64; 5]) -> Self {
        Self { coeffs }
    }

    /// Highest power whose coefficient survives the demotion test, or
    /// `None` for the zero polynomial.
    pub fn effective_degree(&self) -> Option<usize> {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return None;
        }
        (0..5)
            .rev()
            .find(|&k| self.coeffs[k].abs() > DEMOTION_THRESHOLD * scale)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: C64) -> C64 {
        self.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    fn derivative_complex(&self, z: C64) -> C64 {
        let a = &self.coeffs;
        (((z * (4.0 * a[4]) + 3.0 * a[3]) * z + 2.0 * a[2]) * z) + a[1]
    }
}

/// Roots of a [`Quartic`] and the step-size candidates derived from them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RootSet {
    pub roots: Vec<C64>,
    /// Real parts of all roots, ascending, deduplicated.
    pub real_candidates: Vec<f64>,
}

impl RootSet {
    /// True when the polynomial was a nonzero constant.
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Collects the real-part candidates of `roots`; non-finite roots are dropped.
    pub fn from_roots(roots: Vec<C64>) -> Self {
        let roots: Vec<C64> = roots
            .into_iter()
            .filter(|z| z.re.is_finite() && z.im.is_finite())
            .collect();
        let mut real: Vec<f64> = roots.iter().map(|z| z.re).filter(|r| r.is_finite()).collect();
        real.sort_by(f64::total_cmp);
        real.dedup_by(|a, b| (*a - *b).abs() <= CANDIDATE_DEDUP);
        Self {
            roots,
            real_candidates: real,
        }
    }
}

/// All complex roots of `q`.
///
/// Returns [`Error::ZeroPolynomial`] if every coefficient is zero, and an
/// empty [`RootSet`] for a nonzero constant.
pub fn solve(q: &Quartic) -> Result<RootSet> {
    let degree = q.effective_degree().ok_or(Error::ZeroPolynomial)?;
    let a = &q.coeffs;
    let lead = a[degree];
    let roots = match degree {
        0 => Vec::new(),
        1 => alloc::vec![C64::new(-a[0] / a[1], 0.0)],
        2 => quadratic(a[1] / lead, a[0] / lead).to_vec(),
        3 => cubic(a[2] / lead, a[1] / lead, a[0] / lead).to_vec(),
        _ => quartic(a[3] / lead, a[2] / lead, a[1] / lead, a[0] / lead).to_vec(),
    };
    let mut demoted = *q;
    for c in demoted.coeffs.iter_mut().skip(degree + 1) {
        *c = 0.0;
    }
    Ok(RootSet::from_roots(refine(&demoted, roots)))
}

/// Upper bound on simultaneous refinement sweeps.
pub const MAX_REFINEMENT_SWEEPS: usize = 40;

/// `|q(z)| / sum |a_k| |z|^k`, the backward error of `z` as a root of `q`.
fn backward_error(q: &Quartic, z: C64) -> f64 {
    let r = libm::hypot(z.re, z.im);
    let scale = q.coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c.abs());
    let v = q.eval_complex(z);
    let e = libm::hypot(v.re, v.im) / scale;
    if e.is_finite() {
        e
    } else {
        f64::INFINITY
    }
}

fn worst_backward_error(q: &Quartic, roots: &[C64]) -> f64 {
    roots.iter().map(|&z| backward_error(q, z)).fold(0.0, f64::max)
}

/// Aberth-Ehrlich sweeps on all roots at once. The closed forms lose the
/// small roots when root magnitudes are far apart; the simultaneous update
/// recovers them without two estimates collapsing onto the same root. The
/// refined set is kept only if its worst backward error is lower.
fn refine(q: &Quartic, start: Vec<C64>) -> Vec<C64> {
    let n = start.len();
    if n == 0 {
        return start;
    }
    let mut z = start.clone();
    // coincident starting points would stall the repulsion term
    for i in 1..n {
        for j in 0..i {
            if z[i] == z[j] {
                let bump = 1e-8 * libm::hypot(z[i].re, z[i].im).max(1e-8);
                z[i] += C64::new(bump * (i as f64), bump);
            }
        }
    }
    for _ in 0..MAX_REFINEMENT_SWEEPS {
        let mut largest = 0.0f64;
        for i in 0..n {
            let f = q.eval_complex(z[i]);
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            let df = q.derivative_complex(z[i]);
            let newton = f / df;
            let repulsion = (0..n)
                .filter(|&j| j != i && z[j] != z[i])
                .fold(C64::new(0.0, 0.0), |acc, j| acc + C64::new(1.0, 0.0) / (z[i] - z[j]));
            let step = newton / (C64::new(1.0, 0.0) - newton * repulsion);
            if !(step.re.is_finite() && step.im.is_finite()) {
                continue;
            }
            z[i] -= step;
            let size = libm::hypot(z[i].re, z[i].im).max(f64::MIN_POSITIVE);
            largest = largest.max(libm::hypot(step.re, step.im) / size);
        }
        if largest <= 4.0 * f64::EPSILON {
            break;
        }
    }
    if worst_backward_error(q, &z) < worst_backward_error(q, &start) {
        z
    } else {
        start
    }
}

fn csqrt(z: C64) -> C64 {
    let r = libm::hypot(z.re, z.im);
    if r == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let re = libm::sqrt((r + z.re.abs()) / 2.0);
    if z.re >= 0.0 {
        C64::new(re, z.im / (2.0 * re))
    } else {
        C64::new(z.im.abs() / (2.0 * re), libm::copysign(re, z.im))
    }
}

/// Roots of the monic `x^2 + b x + c`.
fn quadratic(b: f64, c: f64) -> [C64; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        // stable form: avoid subtracting nearly equal quantities
        let s = libm::sqrt(disc);
        let q = -0.5 * (b + libm::copysign(s, b));
        if q == 0.0 {
            return [C64::new(0.0, 0.0); 2];
        }
        [C64::new(q, 0.0), C64::new(c / q, 0.0)]
    } else {
        let im = 0.5 * libm::sqrt(-disc);
        [C64::new(-0.5 * b, im), C64::new(-0.5 * b, -im)]
    }
}

/// One real root of the monic `x^3 + b x^2 + c x + d`, the largest one
/// when all three are real.
fn cubic_real_root(b: f64, c: f64, d: f64) -> f64 {
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let half_q = q / 2.0;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;
    let t = if disc > 0.0 {
        let u = libm::cbrt(-half_q - libm::copysign(libm::sqrt(disc), half_q));
        if u == 0.0 {
            0.0
        } else {
            u - third_p / u
        }
    } else if p == 0.0 {
        libm::cbrt(-q)
    } else {
        let m = libm::sqrt(-third_p);
        let arg = (-half_q / (m * m * m)).clamp(-1.0, 1.0);
        2.0 * m * libm::cos(libm::acos(arg) / 3.0)
    };
    let mut x = t + shift;
    // closed forms lose digits near repeated roots; two real Newton steps
    for _ in 0..2 {
        let f = ((x + b) * x + c) * x + d;
        let df = (3.0 * x + 2.0 * b) * x + c;
        if df == 0.0 {
            break;
        }
        let next = x - f / df;
        let fn_ = ((next + b) * next + c) * next + d;
        if fn_.abs() < f.abs() {
            x = next;
        } else {
            break;
        }
    }
    x
}

/// Roots of the monic `x^3 + b x^2 + c x + d`.
fn cubic(b: f64, c: f64, d: f64) -> [C64; 3] {
    let r = cubic_real_root(b, c, d);
    // synthetic division by (x - r)
    let qb = b + r;
    let qc = c + r * qb;
    let [z1, z2] = quadratic(qb, qc);
    [C64::new(r, 0.0), z1, z2]
}

/// Roots of the monic `x^4 + b x^3 + c x^2 + d x + e` by Ferrari's method.
fn quartic(b: f64, c: f64, d: f64, e: f64) -> [C64; 4] {
    let shift = -b / 4.0;
    let b2 = b * b;
    // depressed quartic t^4 + p t^2 + q t + r with x = t - b/4
    let p = c - 3.0 * b2 / 8.0;
    let q = d - b * c / 2.0 + b2 * b / 8.0;
    let r = e - b * d / 4.0 + b2 * c / 16.0 - 3.0 * b2 * b2 / 256.0;

    let scale = 1.0f64.max(p.abs()).max(libm::sqrt(r.abs()));
    let roots: [C64; 4] = if q.abs() <= 1e-14 * scale * libm::sqrt(scale) {
        // biquadratic: z^2 + p z + r with z = t^2
        let [z1, z2] = quadratic(p, r);
        let (s1, s2) = (csqrt(z1), csqrt(z2));
        [s1, -s1, s2, -s2]
    } else {
        // resolvent cubic m^3 + p m^2 + (p^2/4 - r) m - q^2/8 = 0; its
        // largest real root is positive whenever q != 0
        let m = cubic_real_root(p, p * p / 4.0 - r, -q * q / 8.0);
        let m = if m > 0.0 { m } else { f64::MIN_POSITIVE };
        let s = libm::sqrt(2.0 * m);
        let base = p / 2.0 + m;
        let tilt = q / (2.0 * s);
        let [t1, t2] = quadratic(-s, base + tilt);
        let [t3, t4] = quadratic(s, base - tilt);
        [t1, t2, t3, t4]
    };
    roots.map(|t| t + shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn contains(roots: &[C64], z: C64, tol: f64) -> bool {
        roots.iter().any(|&r| close(r, z, tol))
    }

    #[test]
    fn fourth_roots_of_unity() {
        let rs = solve(&Quartic::new([-1.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(rs.roots.len(), 4);
        for z in [
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
            C64::new(0.0, 1.0),
            C64::new(0.0, -1.0),
        ] {
            assert!(contains(&rs.roots, z, 1e-12), "{z} missing from {:?}", rs.roots);
        }
        assert_eq!(rs.real_candidates.len(), 3);
        for (got, want) in rs.real_candidates.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constructed_factorization_with_double_root() {
        // (x-2)^2 (x+3) (x-5) = x^4 - 6x^3 - 3x^2 + 52x - 60
        let rs = solve(&Quartic::new([-60.0, 52.0, -3.0, -6.0, 1.0])).unwrap();
        for z in [2.0, -3.0, 5.0] {
            assert!(
                contains(&rs.roots, C64::new(z, 0.0), 1e-6),
                "{z} missing from {:?}",
                rs.roots
            );
        }
        let near_two = rs.roots.iter().filter(|z| close(**z, C64::new(2.0, 0.0), 1e-6)).count();
        assert_eq!(near_two, 2);
    }

    #[test]
    fn zero_and_constant_polynomials() {
        assert_eq!(solve(&Quartic::new([0.0; 5])), Err(Error::ZeroPolynomial));
        let rs = solve(&Quartic::new([3.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(rs.is_empty());
        assert!(rs.real_candidates.is_empty());
    }

    #[test]
    fn demotes_negligible_leading_terms() {
        // 1e-14 x^4 + x^2 - 4: treated as quadratic
        let q = Quartic::new([-4.0, 0.0, 1.0, 0.0, 1e-14]);
        assert_eq!(q.effective_degree(), Some(2));
        let rs = solve(&q).unwrap();
        assert_eq!(rs.roots.len(), 2);
        assert!(contains(&rs.roots, C64::new(2.0, 0.0), 1e-12));
        assert!(contains(&rs.roots, C64::new(-2.0, 0.0), 1e-12));
    }

    #[test]
    fn linear_and_cubic() {
        let rs = solve(&Quartic::new([3.0, -1.5, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(rs.roots, alloc::vec![C64::new(2.0, 0.0)]);
        // (x-1)(x-2)(x-3)
        let rs = solve(&Quartic::new([-6.0, 11.0, -6.0, 1.0, 0.0])).unwrap();
        for z in [1.0, 2.0, 3.0] {
            assert!(contains(&rs.roots, C64::new(z, 0.0), 1e-12));
        }
        // x^3 + 1: one real root, one conjugate pair
        let rs = solve(&Quartic::new([1.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        let h = libm::sqrt(3.0) / 2.0;
        for z in [C64::new(-1.0, 0.0), C64::new(0.5, h), C64::new(0.5, -h)] {
            assert!(contains(&rs.roots, z, 1e-12));
        }
    }

    #[test]
    fn biquadratic_branch() {
        // (x^2 - 1)(x^2 - 9)
        let rs = solve(&Quartic::new([9.0, 0.0, -10.0, 0.0, 1.0])).unwrap();
        for z in [1.0, -1.0, 3.0, -3.0] {
            assert!(contains(&rs.roots, C64::new(z, 0.0), 1e-12));
        }
    }

    #[test]
    fn evaluation_matches_horner() {
        let q = Quartic::new([1.0, -2.0, 0.5, 3.0, -1.0]);
        let x = 1.7;
        let direct = 1.0 - 2.0 * x + 0.5 * x * x + 3.0 * x * x * x - x * x * x * x;
        assert!((q.eval(x) - direct).abs() < 1e-12);
        assert!((q.eval_complex(C64::new(x, 0.0)).re - direct).abs() < 1e-12);
    }
}
