//! Random-projection Kolmogorov–Smirnov test and its minimum-p-value
//! aggregation over `k` directions.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::nulldist::kolmogorov_sf;
use crate::rng::{derive_seed, purpose, substream};
use crate::sample::DirectionalSample;
use crate::samplers::{uniform_direction, uniform_with};
use crate::scalar::{clamp_unit, dot, Scalar};

/// `Y_i = U_i'H`, clamped to `[-1, 1]`.
pub fn project<T: Scalar>(sample: &DirectionalSample<T>, direction: &[T]) -> Result<Vec<T>> {
    if direction.len() != sample.dim() {
        return Err(Error::InvalidParameter(format!(
            "direction has dimension {}, sample has {}",
            direction.len(),
            sample.dim()
        )));
    }
    let norm = dot(direction, direction).sqrt();
    if (norm - T::one()).abs() > T::unit_tolerance() {
        return Err(Error::InvalidParameter(format!("direction has norm {norm}, expected 1")));
    }
    Ok(sample.points().map(|u| clamp_unit(dot(u, direction))).collect())
}

const GL_NODES: usize = 64;

fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_NODES;
        let mut rule = Vec::with_capacity(n);
        for i in 1..=n {
            let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

fn gl_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    half * gauss_legendre().iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// Adaptive 64-node Gauss–Legendre quadrature to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = (a + b) / 2.0;
        let (left, right) = (gl_panel(f, a, m), gl_panel(f, m, b));
        if depth >= 30 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        recurse(f, a, m, left, tol / 2.0, depth + 1) + recurse(f, m, b, right, tol / 2.0, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(&f, a, b, gl_panel(&f, a, b), tol, 0)
}

/// Law of one coordinate of a uniform point on `S^{p-1}`.
pub fn projected_null_cdf(x: f64, p: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::Dimension(p));
    }
    if !(x.abs() <= 1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!("projected value {x} outside [-1, 1]")));
    }
    let x = x.clamp(-1.0, 1.0);
    Ok(match p {
        2 => 1.0 - x.acos() / PI,
        3 => (1.0 + x) / 2.0,
        _ => {
            // x = sin φ turns the density (1−x²)^{(p−3)/2} into cos^{p−2} φ.
            let e = (p - 2) as f64;
            let norm = (PI.sqrt().ln() + ln_gamma((p as f64 - 1.0) / 2.0) - ln_gamma(p as f64 / 2.0)).exp();
            let half = integrate(|phi: f64| phi.cos().powf(e), 0.0, x.abs().asin(), 1e-10) / norm;
            (0.5 + x.signum() * half).clamp(0.0, 1.0)
        }
    })
}

/// `sup_x |F_n(x) − F_0(x)|` over the jump points of `F_n`.
pub fn ks_distance(projected: &[f64], p: usize) -> Result<f64> {
    let mut y = projected.to_vec();
    y.sort_by(f64::total_cmp);
    let n = y.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let f0 = projected_null_cdf(yi, p)?;
        d = d.max((i + 1) as f64 / n - f0).max(f0 - i as f64 / n);
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionOutcome {
    /// `K_n` without the `√n` factor.
    pub statistic: f64,
    /// `1 − K(√n K_n)`.
    pub p_value: f64,
}

pub fn single_projection_test<T: Scalar>(sample: &DirectionalSample<T>, direction: &[T]) -> Result<ProjectionOutcome> {
    let y: Vec<f64> = project(sample, direction)?.into_iter().map(Scalar::as_f64).collect();
    single_from_projected(&y, sample.dim())
}

fn single_from_projected(y: &[f64], p: usize) -> Result<ProjectionOutcome> {
    let k_n = ks_distance(y, p)?;
    Ok(ProjectionOutcome {
        statistic: k_n,
        p_value: kolmogorov_sf((y.len() as f64).sqrt() * k_n),
    })
}

pub const MIN_CALIBRATION_REPLICATES: usize = 99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ProjectionConfig {
    pub k: usize,
    pub seed: u64,
    pub mc_replicates: usize,
}

impl ProjectionConfig {
    pub fn default_k(p: usize) -> usize {
        if p == 2 {
            25
        } else {
            100
        }
    }

    pub fn for_dimension(p: usize, seed: u64) -> Self {
        Self {
            k: Self::default_k(p),
            seed,
            mc_replicates: 999,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("number of projections must be >= 1".into()));
        }
        if self.mc_replicates < MIN_CALIBRATION_REPLICATES {
            return Err(Error::InvalidParameter(format!(
                "mc_replicates must be >= {MIN_CALIBRATION_REPLICATES}, got {}",
                self.mc_replicates
            )));
        }
        Ok(())
    }

    /// The `k` directions, reproducible from the seed.
    pub fn directions(&self, p: usize) -> Vec<Vec<f64>> {
        let mut rng = substream(derive_seed(self.seed, purpose::PROJECTION_DIRECTIONS), 0);
        (0..self.k).map(|_| uniform_direction(p, &mut rng)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiProjectionOutcome {
    /// `P_{n,k} = min_j P_j`.
    pub min_p: f64,
    pub single_p: Vec<f64>,
    /// Monte Carlo p-value `(b+1)/(M+1)`, conditional on the directions.
    pub p_value: f64,
    pub exceedances: usize,
}

/// Null law of `P_{n,k}` for fixed directions and sample shape, simulated once.
#[derive(Clone, Debug)]
pub struct ProjectionCalibrator {
    n: usize,
    p: usize,
    cfg: ProjectionConfig,
    directions: Vec<Vec<f64>>,
    null_sorted: Vec<f64>,
}

fn min_pvalue(sample: &DirectionalSample<f64>, directions: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let mut ps = Vec::with_capacity(directions.len());
    for h in directions {
        ps.push(single_projection_test(sample, h)?.p_value);
    }
    Ok((ps.iter().copied().fold(f64::INFINITY, f64::min), ps))
}

impl ProjectionCalibrator {
    pub fn new(n: usize, p: usize, cfg: ProjectionConfig) -> Result<Self> {
        cfg.validate()?;
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if p < 2 {
            return Err(Error::Dimension(p));
        }
        let directions = cfg.directions(p);
        let seed = derive_seed(cfg.seed, purpose::PROJECTION_CALIBRATION);
        let mut null_sorted = (0..cfg.mc_replicates as u64)
            .into_par_iter()
            .map(|r| {
                let s = uniform_with(n, p, &mut substream(seed, r));
                min_pvalue(&s, &directions).map(|(m, _)| m)
            })
            .collect::<Result<Vec<f64>>>()?;
        null_sorted.sort_by(f64::total_cmp);
        Ok(Self {
            n,
            p,
            cfg,
            directions,
            null_sorted,
        })
    }

    pub fn config(&self) -> ProjectionConfig {
        self.cfg
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn matches(&self, n: usize, p: usize, cfg: &ProjectionConfig) -> bool {
        self.n == n && self.p == p && self.cfg == *cfg
    }

    pub fn test<T: Scalar>(&self, sample: &DirectionalSample<T>) -> Result<MultiProjectionOutcome> {
        if sample.n() != self.n || sample.dim() != self.p {
            return Err(Error::InvalidParameter(format!(
                "calibrated for n={}, p={}, got n={}, p={}",
                self.n,
                self.p,
                sample.n(),
                sample.dim()
            )));
        }
        let (min_p, single_p) = min_pvalue(&sample.cast::<f64>(), &self.directions)?;
        // Small minimum p-values reject; ties count against the data.
        let b = self.null_sorted.partition_point(|&x| x <= min_p);
        Ok(MultiProjectionOutcome {
            min_p,
            single_p,
            p_value: (b as f64 + 1.0) / (self.null_sorted.len() as f64 + 1.0),
            exceedances: b,
        })
    }
}

pub fn multi_projection_test<T: Scalar>(
    sample: &DirectionalSample<T>,
    cfg: ProjectionConfig,
) -> Result<MultiProjectionOutcome> {
    ProjectionCalibrator::new(sample.n(), sample.dim(), cfg)?.test(sample)
}
