//! Harmonic numbers, the Hurwitz zeta function and the binomial lemma.

use crate::error::{usage, Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this index harmonic numbers are summed term by term.
const HARMONIC_DIRECT_LIMIT: u64 = 10_000_000;

/// `H_m = Σ_{k=1}^m 1/k`, with `H_0 = 0`.
pub fn harmonic_number(m: u64) -> f64 {
    if m <= HARMONIC_DIRECT_LIMIT {
        // smallest terms first
        (1..=m).rev().map(|k| 1.0 / k as f64).sum()
    } else {
        let x = m as f64;
        let x2 = x * x;
        x.ln() + EULER_GAMMA + 0.5 / x - 1.0 / (12.0 * x2) + 1.0 / (120.0 * x2 * x2)
    }
}

/// Bernoulli numbers `B_2, B_4, ..., B_14`.
const BERNOULLI: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// Hurwitz zeta `ζ(s, q) = Σ_{k≥0} (q+k)^{-s}` to absolute accuracy `tol`.
///
/// Direct summation of the first `N` terms followed by an Euler–Maclaurin tail.
pub fn hurwitz_zeta(s: f64, q: f64, tol: f64) -> Result<f64> {
    if !(s > 1.0) {
        return usage(format!("hurwitz_zeta needs s > 1, got {s}"));
    }
    if !(q > 0.0) || !(tol > 0.0) {
        return usage("hurwitz_zeta needs q > 0 and tol > 0");
    }
    let mut n = 8usize;
    loop {
        let (value, err) = hurwitz_em(s, q, n);
        if err <= tol {
            return Ok(value);
        }
        if n > 1 << 24 {
            return Err(Error::Numerical(format!(
                "hurwitz_zeta({s}, {q}) did not reach tolerance {tol}"
            )));
        }
        n *= 2;
    }
}

/// Value and error estimate with `n` explicit terms.
fn hurwitz_em(s: f64, q: f64, n: usize) -> (f64, f64) {
    let head: f64 = (0..n).rev().map(|k| (q + k as f64).powf(-s)).sum();
    let a = q + n as f64;
    let mut tail = a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // rising factorial s(s+1)...(s+2j-2) / (2j)!
    let mut coef = s / 2.0;
    let mut power = a.powf(-s - 1.0);
    let mut last = f64::INFINITY;
    for (j, b) in BERNOULLI.iter().enumerate() {
        let term = b * coef * power;
        if j + 1 == BERNOULLI.len() {
            last = term.abs();
            break;
        }
        tail += term;
        let m = 2.0 * (j as f64 + 1.0);
        coef *= (s + m - 1.0) * (s + m) / ((m + 1.0) * (m + 2.0));
        power /= a * a;
    }
    (head + tail, last)
}

/// `ζ(3/2)`, the limit of [`psi`].
pub fn zeta_three_halves() -> f64 {
    hurwitz_zeta(1.5, 1.0, 1e-15).expect("valid arguments")
}

/// `ψ(x) = ζ(3/2,1)^{1/3}·ζ(3/2, 1+1/x)^{2/3}` with `ψ(0) = 0`.
pub fn psi(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z1 = zeta_three_halves();
    let zq = hurwitz_zeta(1.5, 1.0 + 1.0 / x, 1e-15).expect("valid arguments");
    z1.cbrt() * zq.powf(2.0 / 3.0)
}

/// Exact `C(n+k, k)` with the bounds `(k+1)^n` and `(n+1)^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BinomialCheck {
    pub exact: u128,
    pub bound_k: u128,
    pub bound_n: u128,
}

impl BinomialCheck {
    pub fn holds(&self) -> bool {
        self.exact <= self.bound_k.min(self.bound_n)
    }
}

pub fn binomial(n: u64, k: u64) -> Result<u128> {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc
            .checked_mul((n - i) as u128)
            .ok_or_else(|| Error::Resource(format!("C({n},{k}) overflows")))?
            / (i as u128 + 1);
    }
    Ok(acc)
}

fn checked_pow(base: u64, exp: u64) -> Result<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc
            .checked_mul(base as u128)
            .ok_or_else(|| Error::Resource(format!("{base}^{exp} overflows")))?;
    }
    Ok(acc)
}

pub fn binomial_bound_check(n: u64, k: u64) -> Result<BinomialCheck> {
    Ok(BinomialCheck {
        exact: binomial(n + k, k)?,
        bound_k: checked_pow(k + 1, n)?,
        bound_n: checked_pow(n + 1, k)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct sum plus integral bounds on the tail: returns (lower, upper).
    fn zeta_bracket(s: f64, q: f64, n: usize) -> (f64, f64) {
        let head: f64 = (0..n).rev().map(|k| (q + k as f64).powf(-s)).sum();
        let a = q + n as f64;
        let lower = head + a.powf(1.0 - s) / (s - 1.0);
        (lower, lower + a.powf(-s))
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic_number(0), 0.0);
        assert_eq!(harmonic_number(1), 1.0);
        assert!((harmonic_number(3) - 11.0 / 6.0).abs() < 1e-15);
        for n in [10u64, 1_000, 1_000_000] {
            assert!(harmonic_number(n - 1) < (n as f64).ln() + 0.58);
        }
        let direct = harmonic_number(HARMONIC_DIRECT_LIMIT);
        let x = HARMONIC_DIRECT_LIMIT as f64;
        let asym = x.ln() + EULER_GAMMA + 0.5 / x - 1.0 / (12.0 * x * x);
        assert!((direct - asym).abs() < 1e-12);
    }

    #[test]
    fn zeta_against_bracket() {
        for &(s, q) in &[(1.5, 1.0), (1.5, 1.5), (1.5, 2.0), (2.0, 1.0), (3.0, 0.3), (1.5, 1e6)] {
            let z = hurwitz_zeta(s, q, 1e-14).unwrap();
            let (lo, hi) = zeta_bracket(s, q, 1_000_000);
            assert!(z >= lo - 1e-12 && z <= hi + 1e-12, "s={s} q={q}: {z} not in [{lo}, {hi}]");
        }
        assert!((hurwitz_zeta(2.0, 1.0, 1e-14).unwrap() - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
        assert!(hurwitz_zeta(1.0, 1.0, 1e-6).is_err());
    }

    #[test]
    fn psi_properties() {
        assert_eq!(psi(0.0), 0.0);
        let z = zeta_three_halves();
        assert!((z - 2.612_375_348_685_488).abs() < 1e-12);
        for x in [1.0, 10.0, 1e6, 1e12] {
            assert!(psi(x) < 2.7);
        }
        assert!((psi(1e12) - z).abs() < 1e-5);
        let mut prev = 0.0;
        for e in -6..=12 {
            let v = psi(10f64.powi(e));
            assert!(v > prev && v < 2.7);
            prev = v;
        }
    }

    #[test]
    fn binomial_lemma() {
        let c = binomial_bound_check(0, 5).unwrap();
        assert_eq!(c.exact, 1);
        let c = binomial_bound_check(2, 3).unwrap();
        assert_eq!((c.exact, c.bound_k, c.bound_n), (10, 16, 27));
        for n in 0..=20 {
            for k in 0..=20 {
                assert!(binomial_bound_check(n, k).unwrap().holds());
            }
        }
        assert!(matches!(binomial_bound_check(200, 200), Err(Error::Resource(_))));
    }
}
