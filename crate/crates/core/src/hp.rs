//! Thin wrapper over `astro_float` for the extended-precision parts of the
//! level recursion.

use astro_float::{BigFloat, Consts, RoundingMode, Sign};
use num_bigint::BigUint;

const RM: RoundingMode = RoundingMode::ToEven;

pub struct Hp {
    p: usize,
    cc: Consts,
}

impl Hp {
    pub fn new(bits: usize) -> Self {
        let p = bits.div_ceil(64).max(2) * 64;
        Hp {
            p,
            cc: Consts::new().expect("constant cache"),
        }
    }

    pub fn bits(&self) -> usize {
        self.p
    }

    pub fn f(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.p)
    }

    pub fn u(&self, x: u64) -> BigFloat {
        BigFloat::from_u64(x, self.p)
    }

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.p, RM)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.p, RM)
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.p, RM)
    }

    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.p, RM)
    }

    pub fn ln(&mut self, a: &BigFloat) -> BigFloat {
        a.ln(self.p, RM, &mut self.cc)
    }

    pub fn exp(&mut self, a: &BigFloat) -> BigFloat {
        a.exp(self.p, RM, &mut self.cc)
    }

    /// `ln(1 + x)` for `0 <= x < 1/2` by its alternating series, so that tiny
    /// `x` never has to be added to 1.
    pub fn ln1p_small(&self, x: &BigFloat) -> BigFloat {
        let mut sum = self.f(0.0);
        let mut pow = x.clone();
        let mut k = 1u64;
        loop {
            let term = self.div(&pow, &self.u(k));
            sum = if k % 2 == 1 {
                self.add(&sum, &term)
            } else {
                self.sub(&sum, &term)
            };
            if term.is_zero() || exponent(&term) < exponent(&sum) - self.p as i64 - 4 {
                break;
            }
            pow = self.mul(&pow, x);
            k += 1;
        }
        sum
    }

    pub fn half_floor(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        self.div(&self.add(a, b), &self.f(2.0)).floor()
    }
}

fn exponent(a: &BigFloat) -> i64 {
    a.exponent().map_or(i64::MIN / 2, |e| e as i64)
}

pub fn is_neg(a: &BigFloat) -> bool {
    a.is_negative() && !a.is_zero()
}

pub fn cmp(a: &BigFloat, b: &BigFloat) -> std::cmp::Ordering {
    match a.cmp(b) {
        Some(x) if x < 0 => std::cmp::Ordering::Less,
        Some(0) => std::cmp::Ordering::Equal,
        _ => std::cmp::Ordering::Greater,
    }
}

/// Nearest `f64` (truncating the mantissa to its top word).
pub fn to_f64(a: &BigFloat) -> f64 {
    if a.is_zero() {
        return 0.0;
    }
    match a.as_raw_parts() {
        Some((words, _, sign, e, _)) => {
            let top = *words.last().unwrap_or(&0);
            let next = if words.len() > 1 {
                words[words.len() - 2]
            } else {
                0
            };
            let mant = top as f64 + next as f64 / 18446744073709551616.0;
            let e = e as i64 - 64;
            let v = if e > 2000 {
                f64::INFINITY
            } else if e < -2200 {
                0.0
            } else {
                // Two steps keep the power of two representable.
                let h = e / 2;
                mant * 2f64.powi(h as i32) * 2f64.powi((e - h) as i32)
            };
            if sign == Sign::Neg {
                -v
            } else {
                v
            }
        }
        None => f64::NAN,
    }
}

/// The value of a nonnegative integral `BigFloat`.
pub fn to_biguint(a: &BigFloat) -> Option<BigUint> {
    if a.is_zero() {
        return Some(BigUint::from(0u32));
    }
    let (words, _, sign, e, _) = a.as_raw_parts()?;
    if sign == Sign::Neg {
        return None;
    }
    let mut bytes = Vec::with_capacity(words.len() * 8);
    for w in words {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    let m = BigUint::from_bytes_le(&bytes);
    let p = (words.len() * 64) as i64;
    let e = e as i64;
    Some(if e >= p {
        m << ((e - p) as usize)
    } else {
        m >> ((p - e) as usize)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_f64() {
        let hp = Hp::new(256);
        for x in [1.0, -2.5, 1e-40, 3.7e200, 123456.789] {
            assert_eq!(to_f64(&hp.f(x)), x);
        }
    }

    #[test]
    fn integer_conversion() {
        let hp = Hp::new(256);
        let big = hp.mul(&hp.u(u64::MAX), &hp.u(1 << 40));
        let expect = BigUint::from(u64::MAX) << 40usize;
        assert_eq!(to_biguint(&big).unwrap(), expect);
        assert_eq!(to_biguint(&hp.u(12345)).unwrap(), BigUint::from(12345u32));
    }

    #[test]
    fn ln1p_matches_f64() {
        let hp = Hp::new(256);
        for x in [1e-3, 1e-10, 1e-40] {
            let v = to_f64(&hp.ln1p_small(&hp.f(x)));
            assert!((v - x.ln_1p()).abs() <= 1e-16 * x);
        }
    }
}
