//! Standardized Rayleigh and coherence tests for large `p`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nulldist::{extreme_value_cdf, NullLaw};
use crate::sample::DirectionalSample;
use crate::scalar::{dot, dot_compensated, Scalar};

const COMPENSATED_DIM: usize = 10_000;
pub const SUB_EXPONENTIAL_BELOW: f64 = 0.01;
pub const SUPER_EXPONENTIAL_ABOVE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum RegimeSpec {
    SubExponential,
    Exponential { beta: f64 },
    SuperExponential,
}

impl RegimeSpec {
    pub fn exponential(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(RegimeSpec::Exponential { beta })
        } else {
            Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")))
        }
    }

    pub fn label(&self) -> String {
        match self {
            RegimeSpec::SubExponential => "sub".into(),
            RegimeSpec::Exponential { beta } => format!("exp:{beta}"),
            RegimeSpec::SuperExponential => "super".into(),
        }
    }
}

/// Threshold rule on a growth ratio `r`.
pub fn regime_from_ratio(r: f64) -> RegimeSpec {
    if r < SUB_EXPONENTIAL_BELOW {
        RegimeSpec::SubExponential
    } else if r > SUPER_EXPONENTIAL_ABOVE {
        RegimeSpec::SuperExponential
    } else {
        RegimeSpec::Exponential { beta: r }
    }
}

/// Classify on `log(p)/n`. `p` is a float so astronomically large dimensions
/// can be described.
pub fn regime_classify(n: usize, p: f64) -> RegimeSpec {
    regime_from_ratio(p.ln() / n as f64)
}

/// Regime requested by the user.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegimeChoice {
    Auto,
    Sub,
    /// Exponential with an explicit `β`, or the default ratio when `None`.
    Exp(Option<f64>),
    Super,
}

impl std::str::FromStr for RegimeChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(RegimeChoice::Auto),
            "sub" => Ok(RegimeChoice::Sub),
            "super" => Ok(RegimeChoice::Super),
            "exp" => Ok(RegimeChoice::Exp(None)),
            other => {
                let beta = other
                    .strip_prefix("exp:")
                    .and_then(|b| b.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown regime {other:?}")))?;
                RegimeSpec::exponential(beta)?;
                Ok(RegimeChoice::Exp(Some(beta)))
            }
        }
    }
}

/// Which of `n`, `p` plays the role of the number of points in the limit law.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoherenceRoles {
    /// `n` points on `S^{p-1}`: `C = p log(1−ℓ²) + 4 log n − log log n`.
    #[default]
    PointsInDimension,
    /// The formula with `n` and `p` exchanged: `C = n log(1−ℓ²) + 4 log p − log log p`.
    Exchanged,
}

impl CoherenceRoles {
    /// `(points, dimension)` as they enter the limit formulas.
    fn roles(self, n: usize, p: usize) -> (f64, f64) {
        match self {
            CoherenceRoles::PointsInDimension => (n as f64, p as f64),
            CoherenceRoles::Exchanged => (p as f64, n as f64),
        }
    }

    pub fn resolve(self, choice: RegimeChoice, n: usize, p: usize) -> RegimeSpec {
        let (points, dim) = self.roles(n, p);
        let ratio = points.ln() / dim;
        match choice {
            RegimeChoice::Auto => regime_from_ratio(ratio),
            RegimeChoice::Sub => RegimeSpec::SubExponential,
            RegimeChoice::Super => RegimeSpec::SuperExponential,
            RegimeChoice::Exp(Some(beta)) => RegimeSpec::Exponential { beta },
            RegimeChoice::Exp(None) => RegimeSpec::Exponential { beta: ratio },
        }
    }
}

/// `(R_n − p)/√(2p)` with `R_n = np‖Ū‖²`.
pub fn rayleigh_standardized<T: Scalar>(sample: &DirectionalSample<T>) -> T {
    let n = T::from_usize_exact(sample.n());
    let p = T::from_usize_exact(sample.dim());
    let mean = sample.mean();
    let r = n * p * dot(&mean, &mean);
    (r - p) / (T::lit(2.0) * p).sqrt()
}

/// `(√(2p)/n) Σ_{i<j} U_i'U_j`.
pub fn rayleigh_standardized_pairs<T: Scalar>(sample: &DirectionalSample<T>) -> T {
    let n = sample.n();
    let p = T::from_usize_exact(sample.dim());
    let mut sum = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            sum = sum + dot(sample.point(i), sample.point(j));
        }
    }
    (T::lit(2.0) * p).sqrt() / T::from_usize_exact(n) * sum
}

/// `ℓ_n = max_{i<j} |U_i'U_j|`.
pub fn coherence<T: Scalar>(sample: &DirectionalSample<T>) -> Result<T> {
    let n = sample.n();
    if n < 2 {
        return Err(Error::too_few("coherence", 2, n));
    }
    let kernel: fn(&[T], &[T]) -> T = if sample.dim() > COMPENSATED_DIM {
        dot_compensated
    } else {
        dot
    };
    let ell = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let u = sample.point(i);
            (i + 1..n)
                .map(|j| kernel(u, sample.point(j)).abs())
                .fold(T::zero(), |a, b| a.max(b))
        })
        .reduce(T::zero, |a, b| a.max(b));
    Ok(ell.min(T::one()))
}

#[derive(Clone, Debug, Serialize)]
pub struct CoherenceOutcome {
    pub ell: f64,
    /// `None` when `ℓ_n = 1` and `log(1 − ℓ²)` diverges.
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub regime: RegimeSpec,
    pub roles: CoherenceRoles,
    pub degenerate: bool,
}

impl CoherenceOutcome {
    pub fn law(&self) -> NullLaw {
        NullLaw::ExtremeValue(self.regime)
    }
}

/// `C_{n,1}`/`C_{n,2}` (sub-exponential and exponential) or `C_{n,3}`
/// (super-exponential), with p-value `F_j(C)`.
pub fn coherence_statistic<T: Scalar>(
    sample: &DirectionalSample<T>,
    regime: RegimeSpec,
    roles: CoherenceRoles,
) -> Result<CoherenceOutcome> {
    let (n, p) = (sample.n(), sample.dim());
    let (points, dim) = roles.roles(n, p);
    if points <= std::f64::consts::E || dim <= 2.0 {
        return Err(Error::Unsupported {
            test: "coherence".into(),
            requirement: "n >= 3 and p >= 3".into(),
            got: format!("n={n}, p={p}"),
        });
    }
    if let RegimeSpec::Exponential { beta } = regime {
        RegimeSpec::exponential(beta)?;
    }
    let ell = coherence(sample)?.as_f64();
    let log1m = (-ell * ell).ln_1p();
    if !log1m.is_finite() {
        return Ok(CoherenceOutcome {
            ell,
            statistic: None,
            p_value: 0.0,
            regime,
            roles,
            degenerate: true,
        });
    }
    let c = match regime {
        RegimeSpec::SuperExponential => {
            dim * log1m + 4.0 * dim / (dim - 2.0) * points.ln() - dim.ln()
        }
        _ => dim * log1m + 4.0 * points.ln() - points.ln().ln(),
    };
    Ok(CoherenceOutcome {
        ell,
        statistic: Some(c),
        p_value: extreme_value_cdf(c, regime),
        regime,
        roles,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::sample_uniform;

    #[test]
    fn rayleigh_forms_agree() {
        for seed in 0..20 {
            let s = sample_uniform(30, 7, seed);
            let a = rayleigh_standardized(&s);
            let b = rayleigh_standardized_pairs(&s);
            assert!((a - b).abs() < 1e-9);
        }
        let pair = DirectionalSample::from_vectors(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert!(rayleigh_standardized::<f64>(&pair).abs() < 1e-12);
        let same = DirectionalSample::from_vectors(vec![vec![0.0, 0.0, 1.0]; 6]).unwrap();
        let expect = (6.0f64).sqrt() * 5.0 / 2.0;
        assert!((rayleigh_standardized(&same) - expect).abs() < 1e-12);
    }

    #[test]
    fn coherence_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = DirectionalSample::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![h, h]]).unwrap();
        assert!((coherence(&s).unwrap() - h).abs() < 1e-15);
        let ortho = DirectionalSample::from_vectors(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(coherence(&ortho).unwrap(), 0.0);
        let dup = DirectionalSample::from_vectors(vec![vec![0.6, 0.8], vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        assert_eq!(coherence(&dup).unwrap(), 1.0);
        let one = DirectionalSample::from_vectors(vec![vec![1.0, 0.0]]).unwrap();
        assert!(coherence(&one).is_err());
    }

    #[test]
    fn coherence_statistic_at_zero_and_degenerate() {
        let mut rows = Vec::new();
        for i in 0..5 {
            let mut v = vec![0.0; 5];
            v[i] = 1.0;
            rows.push(v);
        }
        let s = DirectionalSample::from_vectors(rows).unwrap();
        let out = coherence_statistic(&s, RegimeSpec::SubExponential, CoherenceRoles::Exchanged).unwrap();
        let p = 5.0f64;
        assert!((out.statistic.unwrap() - (4.0 * p.ln() - p.ln().ln())).abs() < 1e-12);

        let dup = DirectionalSample::from_vectors(vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0], vec![1.0, 0.0, 0.0]])
            .unwrap();
        let out = coherence_statistic(&dup, RegimeSpec::SubExponential, CoherenceRoles::default()).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.p_value, 0.0);
        assert!(out.statistic.is_none());

        let small = sample_uniform(10, 2, 1);
        assert!(coherence_statistic(&small, RegimeSpec::SubExponential, CoherenceRoles::Exchanged).is_err());
    }

    #[test]
    fn coherence_pvalue_rejects_large_ell() {
        let s = sample_uniform(50, 20, 4);
        let base = coherence_statistic(&s, RegimeSpec::SubExponential, CoherenceRoles::default()).unwrap();
        let mut rows: Vec<Vec<f64>> = s.points().map(|r| r.to_vec()).collect();
        let mut near = rows[0].clone();
        near[1] += 0.05;
        let norm = near.iter().map(|x| x * x).sum::<f64>().sqrt();
        near.iter_mut().for_each(|x| *x /= norm);
        rows[1] = near;
        let tight = DirectionalSample::from_vectors(rows).unwrap();
        let out = coherence_statistic(&tight, RegimeSpec::SubExponential, CoherenceRoles::default()).unwrap();
        assert!(out.ell > base.ell);
        assert!(out.p_value < base.p_value);
    }

    #[test]
    fn regime_threshold_rule() {
        assert_eq!(regime_classify(1000, 50.0), RegimeSpec::SubExponential);
        match regime_classify(10, 1e8) {
            RegimeSpec::Exponential { beta } => assert!((beta - 1.842).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        assert_eq!(regime_classify(5, 1e40), RegimeSpec::SuperExponential);
        assert!(RegimeSpec::exponential(0.0).is_err());
        assert!("exp:-1".parse::<RegimeChoice>().is_err());
        assert_eq!("exp:0.5".parse::<RegimeChoice>().unwrap(), RegimeChoice::Exp(Some(0.5)));
        assert!("bogus".parse::<RegimeChoice>().is_err());
    }

    #[test]
    fn coherence_invariant_under_sign_flips() {
        let s = sample_uniform(40, 6, 9);
        let flipped: Vec<Vec<f64>> = s
            .points()
            .enumerate()
            .map(|(i, r)| r.iter().map(|x| if i % 3 == 0 { -x } else { *x }).collect())
            .collect();
        let f = DirectionalSample::from_vectors(flipped).unwrap();
        assert!((coherence(&s).unwrap() - coherence(&f).unwrap()).abs() < 1e-15);
    }
}
