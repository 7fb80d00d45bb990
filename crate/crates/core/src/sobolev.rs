//! Sobolev statistics `S_n = (1/n) Σ_{i,j} Σ_k v_k² ⟨t_k(U_i), t_k(U_j)⟩`
//! and the named tests that specialise them.

use std::path::Path;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::harmonics::{eigendim_f64, inner_products_into};
use crate::sample::{DirectionalSample, OrderedCircular};
use crate::scalar::{clamp_unit, dot, Scalar};

/// Coefficients `v_1..v_K` of one Sobolev test.
#[derive(Clone, Debug, PartialEq)]
pub struct SobolevWeights {
    v: Vec<f64>,
    label: Option<String>,
    /// Known bound on `Σ_{k>K} v_k² d_{p,k}` for circular data, when available.
    circular_tail: Option<f64>,
}

/// Default truncation for the slowly decaying weight sequences.
pub const DEFAULT_TRUNCATION: usize = 5000;

impl SobolevWeights {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidParameter("Sobolev weights need K >= 1".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Sobolev weight".into()));
        }
        Ok(Self {
            v,
            label: None,
            circular_tail: None,
        })
    }

    fn named(v: Vec<f64>, label: &str, circular_tail: Option<f64>) -> Self {
        Self {
            v,
            label: Some(label.to_string()),
            circular_tail,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Read `v_k` values (comma or whitespace separated, `#` comments).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let mut v = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for (col, tok) in line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .enumerate()
            {
                v.push(tok.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    column: col + 1,
                    token: tok.to_string(),
                })?);
            }
        }
        Ok(Self::new(v)?.with_label(path.as_ref().display().to_string()))
    }

    /// `v_1 = 1`: Rayleigh.
    pub fn rayleigh() -> Self {
        Self::named(vec![1.0], "rayleigh", Some(0.0))
    }

    /// `v_2 = 1`: Bingham.
    pub fn bingham() -> Self {
        Self::named(vec![0.0, 1.0], "bingham", Some(0.0))
    }

    /// `v_k = 1/(2πk)`: Watson's `U_n²` on the circle.
    pub fn watson(k: usize) -> Self {
        let v = (1..=k).map(|k| 1.0 / (2.0 * std::f64::consts::PI * k as f64)).collect();
        // Σ_{k>K} 2/(4π²k²) < 1/(2π²K).
        let tail = 1.0 / (2.0 * std::f64::consts::PI.powi(2) * k as f64);
        Self::named(v, "watson", Some(tail))
    }

    /// `v_k = 1/(πk)` for odd `k`, 0 for even: Ajne on the circle.
    pub fn ajne(k: usize) -> Self {
        let v = (1..=k)
            .map(|k| if k % 2 == 1 { 1.0 / (std::f64::consts::PI * k as f64) } else { 0.0 })
            .collect();
        let tail = 1.0 / (std::f64::consts::PI.powi(2) * k as f64);
        Self::named(v, "ajne", Some(tail))
    }

    /// `v_k = sin(kπt)/(kπ)`: Rothman's `A_n(t)` on the circle.
    pub fn rothman(t: f64, k: usize) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidParameter(format!("Rothman t must lie in (0, 1), got {t}")));
        }
        let pi = std::f64::consts::PI;
        let v = (1..=k).map(|k| (k as f64 * pi * t).sin() / (k as f64 * pi)).collect();
        let tail = 2.0 / (pi * pi * k as f64);
        Ok(Self::named(v, "rothman", Some(tail)))
    }

    /// `v_k = 1` for `k ≤ ℓ`: the score statistic `S_{n,ℓ}`.
    pub fn truncated_ones(l: usize) -> Self {
        Self::named(vec![1.0; l.max(1)], "score", None)
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn truncation(&self) -> usize {
        self.v.len()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn squared(&self) -> Vec<f64> {
        self.v.iter().map(|v| v * v).collect()
    }

    /// Bound on the neglected mass `Σ_{k>K} v_k² d_{p,k}` where known.
    pub fn tail_bound(&self, p: usize) -> Option<f64> {
        if p == 2 {
            self.circular_tail
        } else {
            self.circular_tail.filter(|&t| t == 0.0)
        }
    }

    /// `Σ_{k≤K} v_k² d_{p,k}`, the null mean of the statistic.
    pub fn null_mean(&self, p: usize) -> f64 {
        self.v
            .iter()
            .enumerate()
            .map(|(k, v)| v * v * eigendim_f64(p, k + 1))
            .sum()
    }
}

/// Row-blocked pairwise sum `Σ_{i<j} f(U_i, U_j)`.
///
/// Each row's partial sum is accumulated left to right and the row sums are
/// added in row order, so the result does not depend on the thread count.
fn pair_sum<T, F>(sample: &DirectionalSample<T>, f: F) -> T
where
    T: Scalar,
    F: Fn(&[T], &[T]) -> T + Sync,
{
    let n = sample.n();
    let row = |i: usize| {
        let ui = sample.point(i);
        ((i + 1)..n).fold(T::zero(), |acc, j| acc + f(ui, sample.point(j)))
    };
    let rows: Vec<T> = if n >= 512 {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    rows.into_iter().fold(T::zero(), |a, b| a + b)
}

/// Per-order components `c_k = (1/n) Σ_{i,j} ⟨t_k(U_i), t_k(U_j)⟩`, `k = 1..=order`.
///
/// Circular data use the trigonometric moments; otherwise the O(n²K) pair sum.
pub fn sobolev_components<T: Scalar>(sample: &DirectionalSample<T>, order: usize) -> Vec<T> {
    let n = sample.n();
    let nf = T::from_usize_exact(n);
    let p = sample.dim();
    if order == 0 {
        return Vec::new();
    }
    if p == 2 {
        let two = T::lit(2.0);
        // e^{ikθ} by repeated rotation of each observation.
        let mut re = vec![T::zero(); order];
        let mut im = vec![T::zero(); order];
        for u in sample.points() {
            let (c1, s1) = (u[0], u[1]);
            let (mut c, mut s) = (c1, s1);
            for k in 0..order {
                re[k] = re[k] + c;
                im[k] = im[k] + s;
                (c, s) = (c * c1 - s * s1, s * c1 + c * s1);
            }
        }
        return re
            .iter()
            .zip(&im)
            .map(|(&r, &i)| two * (r * r + i * i) / nf)
            .collect();
    }

    if p == 3 && n > 2 * order {
        return sphere_components(sample, order);
    }

    let row = |i: usize| {
        let mut acc = vec![T::zero(); order + 1];
        let mut buf = vec![T::zero(); order + 1];
        let ui = sample.point(i);
        for j in (i + 1)..n {
            let z = clamp_unit(dot(ui, sample.point(j)));
            inner_products_into(z, p, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a = *a + *b;
            }
        }
        acc
    };
    let rows: Vec<Vec<T>> = if n >= 256 {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    let mut off = vec![T::zero(); order + 1];
    for r in rows {
        for (a, b) in off.iter_mut().zip(r) {
            *a = *a + b;
        }
    }
    (1..=order)
        .map(|k| {
            let d = T::lit(eigendim_f64(p, k));
            (T::lit(2.0) * off[k] + nf * d) / nf
        })
        .collect()
}

/// Components on `S²` through the addition theorem
/// `P_k(x·y) = Σ_m S_k^m(x_3) S_k^m(y_3) cos(m(φ_x − φ_y))` with Schmidt
/// semi-normalised associated Legendre functions, in O(n K²).
fn sphere_components<T: Scalar>(sample: &DirectionalSample<T>, order: usize) -> Vec<T> {
    let width = order + 1;
    let mut cos_sum = vec![T::zero(); width * width];
    let mut sin_sum = vec![T::zero(); width * width];
    let mut cos_m = vec![T::zero(); width];
    let mut sin_m = vec![T::zero(); width];
    for u in sample.points() {
        let z = clamp_unit(u[2]);
        let s = (T::one() - z * z).max(T::zero()).sqrt();
        let rho = (u[0] * u[0] + u[1] * u[1]).sqrt();
        let (c1, s1) = if rho > T::zero() { (u[0] / rho, u[1] / rho) } else { (T::one(), T::zero()) };
        cos_m[0] = T::one();
        sin_m[0] = T::zero();
        for m in 1..width {
            cos_m[m] = cos_m[m - 1] * c1 - sin_m[m - 1] * s1;
            sin_m[m] = sin_m[m - 1] * c1 + cos_m[m - 1] * s1;
        }
        let mut diag = T::one();
        for m in 0..width {
            if m == 1 {
                diag = s;
            } else if m > 1 {
                let mf = T::from_usize_exact(m);
                diag = diag * s * ((T::lit(2.0) * mf - T::one()) / (T::lit(2.0) * mf)).sqrt();
            }
            let mut prev2 = T::zero();
            let mut prev = diag;
            for k in m..width {
                let value = if k == m {
                    diag
                } else {
                    let kf = T::from_usize_exact(k);
                    let mf = T::from_usize_exact(m);
                    let next = (T::lit(2.0) * kf - T::one()) * z * prev
                        - ((kf - T::one()) * (kf - T::one()) - mf * mf).max(T::zero()).sqrt() * prev2;
                    let next = next / (kf * kf - mf * mf).sqrt();
                    prev2 = prev;
                    prev = next;
                    next
                };
                cos_sum[k * width + m] = cos_sum[k * width + m] + value * cos_m[m];
                sin_sum[k * width + m] = sin_sum[k * width + m] + value * sin_m[m];
            }
        }
    }
    let nf = T::from_usize_exact(sample.n());
    (1..width)
        .map(|k| {
            let power = (0..=k).fold(T::zero(), |acc, m| {
                let (a, b) = (cos_sum[k * width + m], sin_sum[k * width + m]);
                acc + a * a + b * b
            });
            T::from_usize_exact(2 * k + 1) * power / nf
        })
        .collect()
}

/// `S_n` for the given weights (diagonal terms included).
pub fn sobolev_statistic<T: Scalar>(sample: &DirectionalSample<T>, w: &SobolevWeights) -> T {
    let comps = sobolev_components(sample, w.truncation());
    comps
        .iter()
        .zip(w.v())
        .fold(T::zero(), |acc, (&c, &v)| acc + T::lit(v * v) * c)
}

/// Rayleigh `R_n = np‖Ū‖²`.
pub fn rayleigh<T: Scalar>(sample: &DirectionalSample<T>) -> T {
    let m = sample.mean();
    let n = T::from_usize_exact(sample.n());
    let p = T::from_usize_exact(sample.dim());
    n * p * m.iter().fold(T::zero(), |a, &x| a + x * x)
}

/// `Σ_{i<j} d_c(θ_i, θ_j)` for sorted angles in `[0, 2π)`, in O(n).
fn circular_distance_sum<T: Scalar>(sorted: &[T]) -> T {
    let n = sorted.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(T::zero());
    for &a in sorted {
        let last = *prefix.last().expect("non-empty prefix");
        prefix.push(last + a);
    }
    let mut total = T::zero();
    let mut k = 0;
    for i in 0..n {
        k = k.max(i);
        while k + 1 < n && sorted[k + 1] - sorted[i] <= T::PI() {
            k += 1;
        }
        let near = T::from_usize_exact(k - i);
        let far = T::from_usize_exact(n - 1 - k);
        total = total + (prefix[k + 1] - prefix[i + 1]) - near * sorted[i]
            + far * (T::TAU() + sorted[i])
            - (prefix[n] - prefix[k + 1]);
    }
    total
}

/// Ajne `A_n = n/4 − (1/(nπ)) Σ_{i<j} Ψ_ij`.
pub fn ajne<T: Scalar>(sample: &DirectionalSample<T>) -> T {
    let n = T::from_usize_exact(sample.n());
    let psi = match OrderedCircular::new(sample) {
        Ok(ord) if sample.dim() == 2 => circular_distance_sum(ord.angles()),
        _ => pair_sum(sample, |u, v| clamp_unit(dot(u, v)).acos()),
    };
    n / T::lit(4.0) - psi / (n * T::PI())
}

/// Rothman's `A_n(t)` through its truncated Sobolev series.
pub fn rothman<T: Scalar>(sample: &DirectionalSample<T>, t: f64, truncation: usize) -> Result<T> {
    if sample.dim() != 2 {
        return Err(Error::needs_circle("rothman", sample.dim()));
    }
    Ok(sobolev_statistic(sample, &SobolevWeights::rothman(t, truncation)?))
}

/// Rothman's `A_n(t) = (1/2πn) ∫ (N(t, α) − nt)² dα` evaluated exactly.
///
/// The integral of the product of two centred arc indicators is the arc
/// overlap over 2π minus t², which gives an O(n²) closed form.
pub fn rothman_exact<T: Scalar>(sample: &DirectionalSample<T>, t: f64) -> Result<T> {
    if sample.dim() != 2 {
        return Err(Error::needs_circle("rothman", sample.dim()));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidParameter(format!("Rothman t must lie in (0, 1), got {t}")));
    }
    let n = T::from_usize_exact(sample.n());
    let len = T::lit(std::f64::consts::TAU * t);
    let two_pi = T::TAU();
    let t2 = T::lit(t * t);
    let overlap = |d: T| (len - d).max(T::zero()) + (len - (two_pi - d)).max(T::zero());
    let diag = n * (len / two_pi - t2);
    let off = pair_sum(sample, |u, v| {
        let d = clamp_unit(dot(u, v)).acos();
        overlap(d) / two_pi - t2
    });
    Ok((diag + T::lit(2.0) * off) / n)
}

/// Sample second-moment matrix `S = (1/n) Σ U_i U_i'`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix<T> {
    p: usize,
    entries: Vec<T>,
}

impl<T: Scalar> CovMatrix<T> {
    pub fn new(sample: &DirectionalSample<T>) -> Self {
        let p = sample.dim();
        let mut entries = vec![T::zero(); p * p];
        for u in sample.points() {
            for a in 0..p {
                for b in a..p {
                    entries[a * p + b] = entries[a * p + b] + u[a] * u[b];
                }
            }
        }
        let n = T::from_usize_exact(sample.n());
        for a in 0..p {
            for b in a..p {
                let v = entries[a * p + b] / n;
                entries[a * p + b] = v;
                entries[b * p + a] = v;
            }
        }
        Self { p, entries }
    }

    pub fn get(&self, a: usize, b: usize) -> T {
        self.entries[a * self.p + b]
    }

    pub fn trace(&self) -> T {
        (0..self.p).fold(T::zero(), |acc, a| acc + self.get(a, a))
    }

    /// `tr(S²)`, which for symmetric `S` is the squared Frobenius norm.
    pub fn trace_of_square(&self) -> T {
        self.entries.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }
}

/// Bingham `B_n = (np(p+2)/2)(tr(S²) − 1/p)`.
pub fn bingham<T: Scalar>(sample: &DirectionalSample<T>) -> T {
    let s = CovMatrix::new(sample);
    let n = T::from_usize_exact(sample.n());
    let p = T::from_usize_exact(sample.dim());
    n * p * (p + T::lit(2.0)) / T::lit(2.0) * (s.trace_of_square() - T::one() / p)
}

/// `(p−1)Γ((p−1)/2)² / (2Γ(p/2)²)`, computed on the log scale.
fn gine_constant(p: usize) -> f64 {
    let pf = p as f64;
    (pf - 1.0) / 2.0 * (2.0 * (ln_gamma((pf - 1.0) / 2.0) - ln_gamma(pf / 2.0))).exp()
}

/// Giné `G_n = n/2 − (c_p/n) Σ_{i<j} sin Ψ_ij`.
pub fn gine_g<T: Scalar>(sample: &DirectionalSample<T>) -> T {
    let n = T::from_usize_exact(sample.n());
    let sines = pair_sum(sample, |u, v| {
        let z = clamp_unit(dot(u, v));
        (T::one() - z * z).max(T::zero()).sqrt()
    });
    n / T::lit(2.0) - T::lit(gine_constant(sample.dim())) / n * sines
}

/// Giné `F_n = A_n + G_n`.
pub fn gine_f<T: Scalar>(sample: &DirectionalSample<T>) -> T {
    ajne(sample) + gine_g(sample)
}

/// Circular kernel statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CircularKernel {
    /// Full double sum of the Hermans–Rasson kernel, constants included.
    HermansRasson,
    /// Hermans–Rasson without its additive constants.
    HermansRassonConstantFree,
    /// `(1/(n−1)) Σ_{i<j} −2 log(2 − 2cos(Θ_i − Θ_j))`.
    Pycke,
}

const HERMANS_RASSON_BETA: f64 = 2.895;

pub fn circular_kernel_test<T: Scalar>(sample: &DirectionalSample<T>, kernel: CircularKernel) -> Result<T> {
    let name = match kernel {
        CircularKernel::Pycke => "pycke",
        _ => "hermans-rasson",
    };
    if sample.dim() != 2 {
        return Err(Error::needs_circle(name, sample.dim()));
    }
    let n = sample.n();
    if n < 2 {
        return Err(Error::too_few(name, 2, n));
    }
    let nf = T::from_usize_exact(n);
    let pi = T::PI();
    let beta = T::lit(HERMANS_RASSON_BETA);
    let two = T::lit(2.0);
    match kernel {
        CircularKernel::HermansRasson | CircularKernel::HermansRassonConstantFree => {
            // The kernel depends on |θ| through the unsigned angle ψ ∈ [0, π].
            let varying = |psi: T| (pi - psi).abs() + beta * psi.sin().abs() / two;
            let off = pair_sum(sample, |u, v| varying(clamp_unit(dot(u, v)).acos()));
            let mut total = (nf * varying(T::zero()) + two * off) / nf;
            if kernel == CircularKernel::HermansRasson {
                let constant = -pi / two + (nf - T::one()) * beta / pi;
                total = total + nf * constant;
            }
            Ok(total)
        }
        CircularKernel::Pycke => {
            let angles = sample.angles()?;
            let mut acc = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    // 2 − 2cos Δ = 4 sin²(Δ/2).
                    let s = ((angles[i] - angles[j]) / two).sin();
                    let chord2 = T::lit(4.0) * s * s;
                    if chord2 <= T::zero() {
                        return Err(Error::Degenerate(format!(
                            "pycke kernel is singular: observations {} and {} coincide",
                            i + 1,
                            j + 1
                        )));
                    }
                    acc = acc - two * chord2.ln();
                }
            }
            Ok(acc / (nf - T::one()))
        }
    }
}

/// Result of the data-driven order selection.
#[derive(Clone, Debug, PartialEq)]
pub struct JuppSelection<T> {
    /// Smallest maximiser `ℓ̂` of the penalised score.
    pub order: usize,
    /// `S_{n,ℓ̂}`.
    pub statistic: T,
    /// Penalised scores `B_S(ℓ)` for `ℓ = 1..=L_max`.
    pub penalized: Vec<T>,
    /// Set when the maximiser sits on the cap, so a larger cap could change it.
    pub cap_binding: bool,
}

pub const JUPP_DEFAULT_CAP: usize = 25;

/// Data-driven Sobolev test: maximise `B_S(ℓ) = S_{n,ℓ} − (Σ_{k≤ℓ} d_{p,k}) log n`.
pub fn jupp_data_driven<T: Scalar>(sample: &DirectionalSample<T>, cap: usize) -> Result<JuppSelection<T>> {
    let n = sample.n();
    if n < 2 {
        return Err(Error::too_few("jupp", 2, n));
    }
    if cap == 0 {
        return Err(Error::InvalidParameter("jupp cap must be >= 1".into()));
    }
    let p = sample.dim();
    let log_n = T::lit((n as f64).ln());
    let comps = sobolev_components(sample, cap);
    let mut stat = T::zero();
    let mut dims = T::zero();
    let mut stats = Vec::with_capacity(cap);
    let mut penalized = Vec::with_capacity(cap);
    for (k, &c) in comps.iter().enumerate() {
        stat = stat + c;
        dims = dims + T::lit(eigendim_f64(p, k + 1));
        stats.push(stat);
        penalized.push(stat - dims * log_n);
    }
    let mut best = 0;
    for (l, &b) in penalized.iter().enumerate() {
        if b > penalized[best] {
            best = l;
        }
    }
    Ok(JuppSelection {
        order: best + 1,
        statistic: stats[best],
        penalized,
        cap_binding: best + 1 == cap && cap > 1,
    })
}
