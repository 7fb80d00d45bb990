//! Closed-form circular statistics on ordered angles and spacings.

use crate::error::{Error, Result};
use crate::sample::{DirectionalSample, OrderedCircular, Spacings};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CircularTest {
    Kuiper,
    Watson,
    HodgesAjne,
    Range,
    RaoSpacings,
    Greenwood,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircularStatistic<T> {
    pub test: CircularTest,
    pub value: T,
    pub n: usize,
}

impl<T> CircularStatistic<T> {
    fn new(test: CircularTest, value: T, n: usize) -> Self {
        Self { test, value, n }
    }
}

/// The two one-sided Kolmogorov parts `(D⁺, D⁻)`, each scaled by `√n`.
pub fn kuiper_parts<T: Scalar>(ord: &OrderedCircular<T>) -> (T, T) {
    let u = ord.normalized();
    let nf = T::from_usize_exact(u.len());
    let mut plus = T::neg_infinity();
    let mut minus = T::neg_infinity();
    for (i, &ui) in u.iter().enumerate() {
        let i = T::from_usize_exact(i);
        plus = plus.max((i + T::one()) / nf - ui);
        minus = minus.max(ui - i / nf);
    }
    (nf.sqrt() * plus, nf.sqrt() * minus)
}

/// Kuiper's `V_n = D⁺ + D⁻`.
pub fn kuiper<T: Scalar>(ord: &OrderedCircular<T>) -> CircularStatistic<T> {
    let (plus, minus) = kuiper_parts(ord);
    CircularStatistic::new(CircularTest::Kuiper, plus + minus, ord.n())
}

/// Watson's `U_n²`.
pub fn watson<T: Scalar>(ord: &OrderedCircular<T>) -> CircularStatistic<T> {
    let u = ord.normalized();
    let n = T::from_usize_exact(u.len());
    let half = T::lit(0.5);
    let shift = ord.mean_normalized() - half;
    let sum = u.iter().enumerate().fold(T::zero(), |acc, (i, &ui)| {
        let d = (ui - (T::from_usize_exact(i) + half) / n) - shift;
        acc + d * d
    });
    CircularStatistic::new(CircularTest::Watson, sum + T::one() / (T::lit(12.0) * n), u.len())
}

/// Largest number of observations in an open half-circle.
///
/// The optimal arc can always be slid so that it opens just before an
/// observation, so a two-pointer pass over the sorted angles is exact.
pub fn max_half_circle_count<T: Scalar>(ord: &OrderedCircular<T>) -> usize {
    let a = ord.angles();
    let n = a.len();
    let two_pi = T::TAU();
    let pi = T::PI();
    let at = |j: usize| if j < n { a[j] } else { a[j - n] + two_pi };
    let mut best = 0;
    let mut j = 0;
    for i in 0..n {
        j = j.max(i);
        while j < i + n && at(j) - a[i] < pi {
            j += 1;
        }
        best = best.max(j - i);
    }
    best
}

/// Hodges–Ajne `H_n = (2/√n)(sup_α N(α) − n/2)`.
pub fn hodges_ajne<T: Scalar>(sample: &DirectionalSample<T>) -> Result<CircularStatistic<T>> {
    let ord = OrderedCircular::new(sample)?;
    Ok(hodges_ajne_ordered(&ord))
}

pub fn hodges_ajne_ordered<T: Scalar>(ord: &OrderedCircular<T>) -> CircularStatistic<T> {
    let n = T::from_usize_exact(ord.n());
    let sup = T::from_usize_exact(max_half_circle_count(ord));
    let value = T::lit(2.0) / n.sqrt() * (sup - n / T::lit(2.0));
    CircularStatistic::new(CircularTest::HodgesAjne, value, ord.n())
}

/// Range `T_n = 2π − max D_i`; small values indicate clustering.
pub fn circular_range<T: Scalar>(sp: &Spacings<T>) -> CircularStatistic<T> {
    let max_gap = sp.gaps().iter().fold(T::zero(), |m, &d| m.max(d));
    let value = (T::TAU() - max_gap).max(T::zero());
    CircularStatistic::new(CircularTest::Range, value, sp.n())
}

/// `(1/n) Σ h(n D_i / 2π)`.
pub fn symmetric_spacing<T: Scalar, F>(sp: &Spacings<T>, h: F) -> Result<T>
where
    F: Fn(T) -> T,
{
    let n = T::from_usize_exact(sp.n());
    let mut acc = T::zero();
    for (i, &d) in sp.gaps().iter().enumerate() {
        let v = h(n * d / T::TAU());
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("spacing kernel at gap {}", i + 1)));
        }
        acc = acc + v;
    }
    Ok(acc / n)
}

/// Rao's spacing statistic `P_n = √n(½Σ|D_i − 2π/n| − 2π/e)`.
pub fn rao_spacings<T: Scalar>(sp: &Spacings<T>) -> CircularStatistic<T> {
    let n = T::from_usize_exact(sp.n());
    let mean_gap = T::TAU() / n;
    let half_abs = sp
        .gaps()
        .iter()
        .fold(T::zero(), |a, &d| a + (d - mean_gap).abs())
        / T::lit(2.0);
    let value = n.sqrt() * (half_abs - T::TAU() / T::E());
    CircularStatistic::new(CircularTest::RaoSpacings, value, sp.n())
}

/// Greenwood's `W_n = √n(n Σ D_i² / 4π² − 2)`.
pub fn greenwood<T: Scalar>(sp: &Spacings<T>) -> CircularStatistic<T> {
    let n = T::from_usize_exact(sp.n());
    let four_pi2 = T::TAU() * T::TAU();
    let sq = sp.gaps().iter().fold(T::zero(), |a, &d| a + d * d);
    let value = n.sqrt() * (n * sq / four_pi2 - T::lit(2.0));
    CircularStatistic::new(CircularTest::Greenwood, value, sp.n())
}
