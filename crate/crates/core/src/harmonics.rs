//! Gegenbauer polynomials, eigenspace dimensions and the eigenspace inner
//! products `⟨t_k(u), t_k(v)⟩` on `S^{p-1}`.

use crate::error::{Error, Result};
use crate::scalar::{clamp_unit, Scalar};

/// `C_k^α(z)` by the three-term recurrence. `z` is clamped into `[-1, 1]`.
pub fn gegenbauer<T: Scalar>(k: usize, alpha: T, z: T) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "Gegenbauer index must be positive, got {alpha}"
        )));
    }
    let mut out = vec![T::zero(); k + 1];
    gegenbauer_into(alpha, clamp_unit(z), &mut out);
    Ok(out[k])
}

/// Fill `out[k] = C_k^α(z)` for `k = 0..out.len()`.
pub(crate) fn gegenbauer_into<T: Scalar>(alpha: T, z: T, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    out[0] = T::one();
    if out.len() == 1 {
        return;
    }
    let two = T::lit(2.0);
    out[1] = two * alpha * z;
    for k in 2..out.len() {
        let kf = T::from_usize_exact(k);
        out[k] = (two * z * (kf + alpha - T::one()) * out[k - 1]
            - (kf + two * alpha - two) * out[k - 2])
            / kf;
    }
}

fn binomial(m: u64, r: u64) -> Option<u128> {
    if r > m {
        return Some(0);
    }
    let r = r.min(m - r);
    let mut acc: u128 = 1;
    for i in 1..=r as u128 {
        // acc * (m - r + i) is divisible by i at every step.
        let num = m as u128 - r as u128 + i;
        let g = gcd(acc, i);
        acc = (acc / g).checked_mul(num / (i / g))?;
    }
    Some(acc)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Dimension `d_{p,k}` of the `k`-th eigenspace of the Laplacian on `S^{p-1}`.
pub fn eigendim(p: usize, k: usize) -> Result<u128> {
    if p < 2 {
        return Err(Error::Dimension(p));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("eigenspace order must be >= 1".into()));
    }
    let overflow = || Error::Overflow(format!("d_{{{p},{k}}} exceeds u128"));
    let (p, k) = (p as u64, k as u64);
    let a = binomial(p + k - 3, p - 2).ok_or_else(overflow)?;
    let b = binomial(p + k - 2, p - 2).ok_or_else(overflow)?;
    a.checked_add(b).ok_or_else(overflow)
}

/// `d_{p,k}` as a float, falling back to log-gamma when the integer overflows.
pub fn eigendim_f64(p: usize, k: usize) -> f64 {
    match eigendim(p, k) {
        Ok(d) => d as f64,
        Err(_) => {
            use statrs::function::gamma::ln_gamma;
            let ln_binom = |m: f64, r: f64| ln_gamma(m + 1.0) - ln_gamma(r + 1.0) - ln_gamma(m - r + 1.0);
            let (p, k) = (p as f64, k as f64);
            ln_binom(p + k - 3.0, p - 2.0).exp() + ln_binom(p + k - 2.0, p - 2.0).exp()
        }
    }
}

/// `⟨t_k(u), t_k(v)⟩` for unit vectors of dimension `p`.
pub fn inner_product<T: Scalar>(u: &[T], v: &[T], k: usize) -> T {
    let p = u.len();
    debug_assert_eq!(p, v.len());
    let z = clamp_unit(crate::scalar::dot(u, v));
    inner_product_from_cosine(z, k, p)
}

pub(crate) fn inner_product_from_cosine<T: Scalar>(z: T, k: usize, p: usize) -> T {
    let mut out = vec![T::zero(); k + 1];
    inner_products_into(z, p, &mut out);
    out[k]
}

/// `out[k] = ⟨t_k(u), t_k(v)⟩` for all `k < out.len()` given `z = u'v`.
/// `out[0]` is left as the constant-harmonic value 1.
pub(crate) fn inner_products_into<T: Scalar>(z: T, p: usize, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    let two = T::lit(2.0);
    if p == 2 {
        // 2cos(kψ) via the Chebyshev recurrence in z = cos ψ.
        out[0] = T::one();
        let (mut prev, mut cur) = (T::one(), z);
        for slot in out.iter_mut().skip(1) {
            *slot = two * cur;
            let next = two * z * cur - prev;
            prev = cur;
            cur = next;
        }
        return;
    }
    let alpha = T::from_usize_exact(p - 2) / two;
    gegenbauer_into(alpha, z, out);
    let pm2 = T::from_usize_exact(p - 2);
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        *slot = *slot * (T::one() + two * T::from_usize_exact(k) / pm2);
    }
}
