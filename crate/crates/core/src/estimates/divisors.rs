//! Gaussian integer divisors from the rational factorization of the norm.

use num_complex::Complex64;

use crate::error::{Result, ZyError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GaussInt {
    pub re: i64,
    pub im: i64,
}

impl GaussInt {
    pub const ONE: GaussInt = GaussInt { re: 1, im: 0 };
    pub const I: GaussInt = GaussInt { re: 0, im: 1 };

    pub const fn new(re: i64, im: i64) -> Self {
        GaussInt { re, im }
    }

    pub fn norm(self) -> u128 {
        let (a, b) = (self.re as i128, self.im as i128);
        (a * a + b * b) as u128
    }

    pub fn mul(self, o: Self) -> Self {
        let (a, b, c, d) = (self.re as i128, self.im as i128, o.re as i128, o.im as i128);
        GaussInt::new((a * c - b * d) as i64, (a * d + b * c) as i64)
    }

    /// `self / d` when the quotient is a Gaussian integer.
    pub fn div_exact(self, d: Self) -> Option<Self> {
        let n = d.norm() as i128;
        if n == 0 {
            return None;
        }
        let (a, b, c, e) = (self.re as i128, self.im as i128, d.re as i128, d.im as i128);
        let re = a * c + b * e;
        let im = b * c - a * e;
        if re % n != 0 || im % n != 0 {
            return None;
        }
        Some(GaussInt::new((re / n) as i64, (im / n) as i64))
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re as f64, self.im as f64)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

// Brent's variant; `n` is odd, composite and free of small factors.
fn pollard_rho(n: u64) -> u64 {
    let mut c = 1u64;
    loop {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        let mut q = 1u64;
        let mut r = 1usize;
        let mut ys = y;
        while d == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            while k < r && d == 1 {
                ys = y;
                for _ in 0..(128.min(r - k)) {
                    y = f(y);
                    q = mul_mod(q, x.abs_diff(y), n);
                }
                d = gcd(q, n);
                k += 128;
            }
            r *= 2;
        }
        if d == n {
            loop {
                ys = f(ys);
                d = gcd(x.abs_diff(ys), n);
                if d > 1 {
                    break;
                }
            }
        }
        if d != n {
            return d;
        }
        c += 1;
    }
}

/// Prime factorization as ascending `(p, e)` pairs.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut primes = Vec::new();
    for p in 2..1000u64 {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            primes.push((p, e));
        }
    }
    let mut stack = vec![n];
    let mut big = Vec::new();
    while let Some(m) = stack.pop() {
        if m == 1 {
            continue;
        }
        if is_prime(m) {
            big.push(m);
            continue;
        }
        let d = pollard_rho(m);
        stack.push(d);
        stack.push(m / d);
    }
    big.sort_unstable();
    for p in big {
        match primes.last_mut() {
            Some((q, e)) if *q == p => *e += 1,
            _ => primes.push((p, 1)),
        }
    }
    primes
}

/// `a^2 + b^2 = p` for a prime `p = 1 mod 4`.
pub fn two_squares(p: u64) -> (u64, u64) {
    let mut c = 2u64;
    while pow_mod(c, (p - 1) / 2, p) != p - 1 {
        c += 1;
    }
    let x = pow_mod(c, (p - 1) / 4, p);
    let (mut a, mut b) = (p, x);
    while (b as u128 * b as u128) > p as u128 {
        (a, b) = (b, a % b);
    }
    let _ = a;
    let s = (p - b * b).isqrt();
    debug_assert_eq!(s * s, p - b * b);
    (b, s)
}

/// All Gaussian divisors of `m`, units included, in ascending order.
pub fn gaussian_divisors(m: GaussInt) -> Result<Vec<GaussInt>> {
    let norm = m.norm();
    if norm == 0 {
        return Err(ZyError::Invalid("m must be nonzero".into()));
    }
    if norm > u64::MAX as u128 {
        return Err(ZyError::Invalid("norm of m exceeds 64 bits".into()));
    }
    let mut divs = vec![GaussInt::ONE];
    let extend = |divs: &mut Vec<GaussInt>, pi: GaussInt, e: u32| {
        let base = divs.clone();
        let mut pw = GaussInt::ONE;
        for _ in 0..e {
            pw = pw.mul(pi);
            divs.extend(base.iter().map(|d| d.mul(pw)));
        }
    };
    for (p, e) in factorize(norm as u64) {
        if p == 2 {
            extend(&mut divs, GaussInt::new(1, 1), e);
        } else if p % 4 == 3 {
            extend(&mut divs, GaussInt::new(p as i64, 0), e / 2);
        } else {
            let (a, b) = two_squares(p);
            let pi = GaussInt::new(a as i64, b as i64);
            let mut rest = m;
            let mut j = 0;
            while let Some(q) = rest.div_exact(pi) {
                rest = q;
                j += 1;
            }
            extend(&mut divs, pi, j);
            extend(&mut divs, GaussInt::new(a as i64, -(b as i64)), e - j);
        }
    }
    let mut out = Vec::with_capacity(4 * divs.len());
    for d in divs {
        let mut u = d;
        for _ in 0..4 {
            out.push(u);
            u = u.mul(GaussInt::I);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// `#{(a, b) in Z[i]^2 : ab = m, |a - a0| <= M, |b - b0| <= N}`.
pub fn count_gaussian_divisors(m: GaussInt, a0: Complex64, b0: Complex64, big_m: f64, big_n: f64) -> Result<u64> {
    let mut count = 0;
    for a in gaussian_divisors(m)? {
        let b = m.div_exact(a).expect("divisor");
        if (a.to_complex() - a0).norm() <= big_m && (b.to_complex() - b0).norm() <= big_n {
            count += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_divisors(m: GaussInt) -> Vec<GaussInt> {
        let r = (m.norm() as f64).sqrt().ceil() as i64;
        let mut out = Vec::new();
        for x in -r..=r {
            for y in -r..=r {
                let a = GaussInt::new(x, y);
                if a.norm() > 0 && m.div_exact(a).is_some() {
                    out.push(a);
                }
            }
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn reference_counts() {
        let z = Complex64::new(0.0, 0.0);
        assert_eq!(count_gaussian_divisors(GaussInt::ONE, z, z, 1.0, 1.0).unwrap(), 4);
        assert_eq!(count_gaussian_divisors(GaussInt::new(2, 0), z, z, 2.0, 2.0).unwrap(), 12);
        assert_eq!(count_gaussian_divisors(GaussInt::new(2, 0), z, z, 0.5, 2.0).unwrap(), 0);
        assert!(count_gaussian_divisors(GaussInt::new(0, 0), z, z, 1.0, 1.0).is_err());
    }

    #[test]
    fn divisors_match_brute_force() {
        for (re, im) in [(1, 0), (2, 0), (5, 0), (3, 4), (12, -7), (65, 0), (-9, 27), (0, 50), (17, 1), (30, 30)] {
            let m = GaussInt::new(re, im);
            assert_eq!(gaussian_divisors(m).unwrap(), brute_divisors(m), "m = {m:?}");
        }
    }

    #[test]
    fn primes_and_factors() {
        assert!(is_prime(2) && is_prime(97) && is_prime(1_000_000_007) && is_prime(18446744073709551557));
        assert!(!is_prime(1) && !is_prime(561) && !is_prime(1_000_000_007 * 3));
        assert_eq!(factorize(360), vec![(2, 3), (3, 2), (5, 1)]);
        assert_eq!(factorize(1_000_000_007 * 998_244_353), vec![(998_244_353, 1), (1_000_000_007, 1)]);
        for p in [5u64, 13, 17, 29, 1_000_000_009] {
            let (a, b) = two_squares(p);
            assert_eq!(a * a + b * b, p);
        }
    }

    #[test]
    fn large_m_is_fast() {
        let m = GaussInt::new(999_999_937, 123_456_789);
        let divs = gaussian_divisors(m).unwrap();
        for d in &divs {
            assert!(m.div_exact(*d).is_some());
        }
        assert!(divs.len() >= 8);
    }
}
