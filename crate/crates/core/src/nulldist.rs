//! Analytic and simulated null distributions.
//!
//! Every `*_pvalue` function returns a probability in `[0, 1]`. Series are
//! summed until the next term drops below a per-law cutoff, with a hard cap of
//! [`MAX_TERMS`] terms; [`NullLaw::evaluate`] reports when the cap was hit.

use std::f64::consts::{PI, TAU};

use rand_distr::{ChiSquared, Distribution, Gamma};
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::highdim::RegimeSpec;
use crate::rng::substream;

pub const MAX_TERMS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Series {
    value: f64,
    capped: bool,
}

/// Sum `term(m)` for `m = 1, 2, ...` until `|term| < cutoff`.
fn sum_series(cutoff: f64, term: impl FnMut(usize) -> f64) -> Series {
    sum_series_from(cutoff, 1, term)
}

/// Like [`sum_series`], but the cutoff is only tested from term `start` on.
fn sum_series_from(cutoff: f64, start: usize, mut term: impl FnMut(usize) -> f64) -> Series {
    let mut value = 0.0;
    for m in 1..=MAX_TERMS {
        let t = term(m);
        value += t;
        if m >= start && t.abs() < cutoff {
            return Series { value, capped: false };
        }
    }
    Series { value, capped: true }
}

/// Dual (theta-function) form `√(2π)/x Σ e^{−(2m−1)²π²/(8x²)}`.
pub fn kolmogorov_cdf_theta(x: f64, terms: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let s: f64 = (1..=terms)
        .map(|m| {
            let k = (2 * m - 1) as f64;
            (-k * k * PI * PI / (8.0 * x * x)).exp()
        })
        .sum();
    (TAU.sqrt() / x * s).clamp(0.0, 1.0)
}

/// Alternating form `1 − 2 Σ (−1)^{m−1} e^{−2m²x²}`.
pub fn kolmogorov_cdf_alternating(x: f64, terms: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (1.0 - kolmogorov_tail_terms(x, terms)).clamp(0.0, 1.0)
}

fn kolmogorov_tail_terms(x: f64, terms: usize) -> f64 {
    2.0 * (1..=terms)
        .map(|m| {
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (m * m) as f64 * x * x).exp()
        })
        .sum::<f64>()
}

fn kolmogorov_cdf_series(x: f64) -> Series {
    if x <= 0.0 {
        return Series { value: 0.0, capped: false };
    }
    if x < 1.0 {
        let s = sum_series(1e-15, |m| {
            let k = (2 * m - 1) as f64;
            (-k * k * PI * PI / (8.0 * x * x)).exp()
        });
        Series {
            value: (TAU.sqrt() / x * s.value).clamp(0.0, 1.0),
            capped: s.capped,
        }
    } else {
        let s = kolmogorov_sf_series(x);
        Series {
            value: (1.0 - s.value).clamp(0.0, 1.0),
            capped: s.capped,
        }
    }
}

fn kolmogorov_sf_series(x: f64) -> Series {
    if x < 1.0 {
        let c = kolmogorov_cdf_series(x);
        return Series {
            value: 1.0 - c.value,
            capped: c.capped,
        };
    }
    let s = sum_series(1e-15, |m| {
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        sign * 2.0 * (-2.0 * (m * m) as f64 * x * x).exp()
    });
    Series {
        value: s.value.clamp(0.0, 1.0),
        capped: s.capped,
    }
}

/// Kolmogorov distribution function `K(x)`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    kolmogorov_cdf_series(x).value
}

/// `1 − K(x)` without cancellation in the upper tail.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    kolmogorov_sf_series(x).value
}

/// Below this the Kuiper tail differs from one by less than `e^{−π²/(2v²)} < 1e-50`.
const KUIPER_UNIT_TAIL_BELOW: f64 = 0.2;

fn kuiper_series(v: f64, n: usize) -> Series {
    if v < KUIPER_UNIT_TAIL_BELOW {
        return Series { value: 1.0, capped: false };
    }
    let v2 = v * v;
    // Terms change sign near m = 1/(2v); only test the cutoff once they decay.
    let decaying = (1.0 / v).ceil() as usize;
    let lead = sum_series_from(1e-12, decaying, |m| {
        let m2 = (m * m) as f64;
        2.0 * (4.0 * m2 * v2 - 1.0) * (-2.0 * m2 * v2).exp()
    });
    let corr = sum_series_from(1e-12, decaying, |m| {
        let m2 = (m * m) as f64;
        m2 * (4.0 * m2 * v2 - 3.0) * (-2.0 * m2 * v2).exp()
    });
    let value = lead.value - 8.0 * v / (3.0 * (n as f64).sqrt()) * corr.value;
    Series {
        value: value.clamp(0.0, 1.0),
        capped: lead.capped || corr.capped,
    }
}

/// `P[V_n > v]` with the first-order finite-`n` correction.
pub fn kuiper_pvalue(v: f64, n: usize) -> f64 {
    kuiper_series(v, n).value
}

/// `lim P[U_n² > u] = 1 − K(π√u)`.
pub fn watson_pvalue(u: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    kolmogorov_sf(PI * u.sqrt())
}

fn ajne_series(a: f64) -> Series {
    if a <= 0.0 {
        return Series { value: 1.0, capped: false };
    }
    let s = sum_series(1e-14, |m| {
        let k = (2 * m - 1) as f64;
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        sign / k * (-PI * PI * k * k * a / 2.0).exp()
    });
    Series {
        value: (4.0 / PI * s.value).clamp(0.0, 1.0),
        capped: s.capped,
    }
}

/// `lim P[A_n > a]`.
pub fn ajne_pvalue(a: f64) -> f64 {
    ajne_series(a).value
}

/// `lim P[H_n > h] = K(π/(2h))`.
pub fn hodges_ajne_pvalue(h: f64) -> f64 {
    if h <= 0.0 {
        return 1.0;
    }
    kolmogorov_cdf(PI / (2.0 * h))
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct RangeEval {
    value: f64,
    approximated: bool,
}

fn range_eval(t: f64, n: usize) -> RangeEval {
    if t <= 0.0 {
        return RangeEval { value: 0.0, approximated: false };
    }
    if t >= TAU {
        return RangeEval { value: 1.0, approximated: false };
    }
    let gap = 1.0 - t / TAU;
    let mut sum = 0.0;
    let mut largest: f64 = 0.0;
    let mut log_binom = 0.0;
    let nf = n as f64;
    for m in 1..=n {
        log_binom += ((n - m + 1) as f64).ln() - (m as f64).ln();
        let base = 1.0 - m as f64 * gap;
        if base <= 0.0 {
            break;
        }
        let term = (log_binom + (nf - 1.0) * base.ln()).exp();
        largest = largest.max(term);
        sum += if m % 2 == 1 { term } else { -term };
    }
    // Alternating inclusion–exclusion loses all precision once its terms
    // dwarf the result; that only happens deep in the upper tail, where the
    // Poisson approximation for the number of large gaps is accurate.
    if largest * 1e-16 * n as f64 > 1e-9 {
        let lambda = nf * (1.0 - gap).powf(nf - 1.0);
        return RangeEval {
            value: (1.0 - (-lambda).exp()).clamp(0.0, 1.0),
            approximated: true,
        };
    }
    RangeEval {
        value: sum.clamp(0.0, 1.0),
        approximated: false,
    }
}

/// Exact `P[T_n ≤ t]`; small ranges reject, so this is the p-value.
pub fn range_cdf(t: f64, n: usize) -> f64 {
    range_eval(t, n).value
}

/// Upper tail of `χ²_df`.
pub fn chisq_pvalue(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    Upper,
    Lower,
    TwoSided,
}

impl std::str::FromStr for Tail {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Tail::Upper),
            "lower" => Ok(Tail::Lower),
            "two-sided" => Ok(Tail::TwoSided),
            other => Err(Error::InvalidParameter(format!("unknown tail {other:?}"))),
        }
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pvalue(x: f64, mean: f64, variance: f64, tail: Tail) -> f64 {
    let z = (x - mean) / variance.sqrt();
    let upper = 0.5 * erfc(z / std::f64::consts::SQRT_2);
    let p = match tail {
        Tail::Upper => upper,
        Tail::Lower => 1.0 - upper,
        Tail::TwoSided => erfc(z.abs() / std::f64::consts::SQRT_2),
    };
    p.clamp(0.0, 1.0)
}

/// Extreme-value limits `F_1`, `F_2(β)`, `F_3` of the coherence statistics.
pub fn extreme_value_cdf(z: f64, regime: RegimeSpec) -> f64 {
    let (scale, shift) = match regime {
        RegimeSpec::SubExponential => (1.0 / (8.0 * PI).sqrt(), 0.0),
        RegimeSpec::Exponential { beta } => {
            (((beta / (TAU * (-(-4.0 * beta).exp_m1()))).sqrt()), 8.0 * beta)
        }
        RegimeSpec::SuperExponential => (1.0 / TAU.sqrt(), 0.0),
    };
    // 1 − exp(−c e^{(z+s)/2}) computed as −expm1 for accuracy in the lower tail.
    let inner = scale * ((z + shift) / 2.0).exp();
    (-(-inner).exp_m1()).clamp(0.0, 1.0)
}

/// `Σ_k w_k χ²_{d_k}` with `w_k = v_k²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiSqMixture {
    weights: Vec<f64>,
    dims: Vec<f64>,
}

/// Terms drawn exactly; the remainder is moment-matched by one gamma variable.
const EXACT_MIXTURE_TERMS: usize = 64;

pub const DEFAULT_MIXTURE_DRAWS: usize = 100_000;

impl ChiSqMixture {
    pub fn new(weights: Vec<f64>, dims: Vec<f64>) -> Result<Self> {
        if weights.len() != dims.len() {
            return Err(Error::InvalidParameter(format!(
                "mixture has {} weights but {} dimensions",
                weights.len(),
                dims.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty chi-square mixture".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || dims.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidParameter(
                "mixture weights must be >= 0 and dimensions > 0".into(),
            ));
        }
        Ok(Self { weights, dims })
    }

    /// Mixture for the Sobolev weights `v` on `S^{p-1}`.
    pub fn sobolev(w: &crate::sobolev::SobolevWeights, p: usize) -> Self {
        let weights = w.squared();
        let dims = (1..=weights.len())
            .map(|k| crate::harmonics::eigendim_f64(p, k))
            .collect();
        Self { weights, dims }
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.dims).map(|(w, d)| w * d).sum()
    }

    pub fn variance(&self) -> f64 {
        self.weights.iter().zip(&self.dims).map(|(w, d)| 2.0 * w * w * d).sum()
    }

    /// Simulate the law once; the result answers any number of p-value queries.
    pub fn simulate(&self, draws: usize, seed: u64) -> MixtureNull {
        let mut order: Vec<usize> = (0..self.weights.len()).filter(|&k| self.weights[k] > 0.0).collect();
        order.sort_by(|&a, &b| {
            (self.weights[b] * self.dims[b])
                .total_cmp(&(self.weights[a] * self.dims[a]))
                .then(a.cmp(&b))
        });
        let (exact, rest) = order.split_at(order.len().min(EXACT_MIXTURE_TERMS));
        let exact: Vec<(f64, ChiSquared<f64>)> = exact
            .iter()
            .map(|&k| (self.weights[k], ChiSquared::new(self.dims[k]).expect("positive df")))
            .collect();
        let rest_mean: f64 = rest.iter().map(|&k| self.weights[k] * self.dims[k]).sum();
        let rest_var: f64 = rest
            .iter()
            .map(|&k| 2.0 * self.weights[k] * self.weights[k] * self.dims[k])
            .sum();
        let remainder = (rest_mean > 0.0 && rest_var > 0.0).then(|| {
            Gamma::new(rest_mean * rest_mean / rest_var, rest_var / rest_mean).expect("positive moments")
        });

        let mut rng = substream(seed, 0);
        let mut sorted: Vec<f64> = (0..draws)
            .map(|_| {
                let mut x: f64 = exact.iter().map(|(w, chi)| w * chi.sample(&mut rng)).sum();
                if let Some(g) = &remainder {
                    x += g.sample(&mut rng);
                }
                x
            })
            .collect();
        sorted.sort_by(f64::total_cmp);
        MixtureNull { sorted }
    }
}

/// Sorted simulated draws from a chi-square mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureNull {
    sorted: Vec<f64>,
}

impl MixtureNull {
    pub fn draws(&self) -> usize {
        self.sorted.len()
    }

    /// `(b + 1)/(M + 1)` with `b` the number of draws at least `x`.
    pub fn pvalue(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let below = self.sorted.partition_point(|&d| d < x);
        let b = self.sorted.len() - below;
        (b as f64 + 1.0) / (self.sorted.len() as f64 + 1.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&d| d <= x) as f64 / self.sorted.len() as f64
    }
}

/// `P[Σ w_k χ²_{d_k} ≥ x]` by simulation, `(b+1)/(M+1)`.
pub fn chisq_mixture_pvalue(x: f64, weights: &[f64], dims: &[f64], draws: usize, seed: u64) -> Result<f64> {
    let mix = ChiSqMixture::new(weights.to_vec(), dims.to_vec())?;
    Ok(mix.simulate(draws, seed).pvalue(x))
}

/// A p-value with any accuracy warnings.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub p_value: f64,
    pub warnings: Vec<String>,
}

/// Tagged null law.
#[derive(Clone, Debug)]
pub enum NullLaw {
    KuiperSeries { n: usize },
    /// `1 − K(x)` for an already `√n`-scaled Kolmogorov statistic.
    Kolmogorov,
    WatsonAsym,
    AjneSeries,
    HodgesAjneAsym,
    RangeExact { n: usize },
    Normal { mean: f64, variance: f64, tail: Tail },
    ChiSq { df: f64 },
    ChiSqMixture {
        mixture: ChiSqMixture,
        null: std::sync::Arc<MixtureNull>,
        tail_bound: Option<f64>,
    },
    ExtremeValue(RegimeSpec),
}

impl NullLaw {
    pub fn chisq_mixture(mixture: ChiSqMixture, draws: usize, seed: u64, tail_bound: Option<f64>) -> Self {
        let null = std::sync::Arc::new(mixture.simulate(draws, seed));
        NullLaw::ChiSqMixture {
            mixture,
            null,
            tail_bound,
        }
    }

    pub fn name(&self) -> String {
        match self {
            NullLaw::KuiperSeries { n } => format!("kuiper-series(n={n})"),
            NullLaw::Kolmogorov => "kolmogorov".into(),
            NullLaw::WatsonAsym => "watson-asymptotic".into(),
            NullLaw::AjneSeries => "ajne-series".into(),
            NullLaw::HodgesAjneAsym => "hodges-ajne-asymptotic".into(),
            NullLaw::RangeExact { n } => format!("range-exact(n={n})"),
            NullLaw::Normal { mean, variance, .. } => format!("normal(mean={mean}, variance={variance})"),
            NullLaw::ChiSq { df } => format!("chi-square(df={df})"),
            NullLaw::ChiSqMixture { mixture, .. } => {
                format!("chi-square-mixture(K={})", mixture.weights.len())
            }
            NullLaw::ExtremeValue(r) => format!("extreme-value({})", r.label()),
        }
    }

    /// Whether the law is exact at finite `n`.
    pub fn is_exact(&self) -> bool {
        matches!(self, NullLaw::RangeExact { .. })
    }

    pub fn evaluate(&self, stat: f64) -> Evaluation {
        let mut warnings = Vec::new();
        let mut capped = |s: Series| {
            if s.capped {
                warnings.push(format!("series truncated at the {MAX_TERMS}-term cap"));
            }
            s.value
        };
        let p_value = match self {
            NullLaw::KuiperSeries { n } => capped(kuiper_series(stat, *n)),
            NullLaw::Kolmogorov => {
                if stat <= 0.0 {
                    1.0
                } else {
                    capped(kolmogorov_sf_series(stat))
                }
            }
            NullLaw::WatsonAsym => {
                if stat <= 0.0 {
                    1.0
                } else {
                    capped(kolmogorov_sf_series(PI * stat.sqrt()))
                }
            }
            NullLaw::AjneSeries => capped(ajne_series(stat)),
            NullLaw::HodgesAjneAsym => {
                if stat <= 0.0 {
                    1.0
                } else {
                    capped(kolmogorov_cdf_series(PI / (2.0 * stat)))
                }
            }
            NullLaw::RangeExact { n } => {
                let r = range_eval(stat, *n);
                if r.approximated {
                    warnings.push("range law evaluated by its Poisson tail approximation".into());
                }
                r.value
            }
            NullLaw::Normal { mean, variance, tail } => normal_pvalue(stat, *mean, *variance, *tail),
            NullLaw::ChiSq { df } => chisq_pvalue(stat, *df),
            NullLaw::ChiSqMixture { null, tail_bound, .. } => {
                if let Some(t) = tail_bound {
                    warnings.push(format!("mixture truncation tail bound {t:.3e}"));
                }
                null.pvalue(stat)
            }
            NullLaw::ExtremeValue(r) => extreme_value_cdf(stat, *r),
        };
        Evaluation { p_value, warnings }
    }

    pub fn pvalue(&self, stat: f64) -> f64 {
        self.evaluate(stat).p_value
    }

    /// Distribution function of the law, for tabulation.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            NullLaw::KuiperSeries { n } => 1.0 - kuiper_pvalue(x, *n),
            NullLaw::Kolmogorov => kolmogorov_cdf(x),
            NullLaw::WatsonAsym => 1.0 - watson_pvalue(x),
            NullLaw::AjneSeries => 1.0 - ajne_pvalue(x),
            NullLaw::HodgesAjneAsym => 1.0 - hodges_ajne_pvalue(x),
            NullLaw::RangeExact { n } => range_cdf(x, *n),
            NullLaw::Normal { mean, variance, .. } => normal_cdf((x - mean) / variance.sqrt()),
            NullLaw::ChiSq { df } => 1.0 - chisq_pvalue(x, *df),
            NullLaw::ChiSqMixture { null, .. } => null.cdf(x),
            NullLaw::ExtremeValue(r) => extreme_value_cdf(x, *r),
        }
    }
}
