//! Null and alternative samplers on `S^{p-1}`.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};
use crate::sample::DirectionalSample;

fn normal_vector<R: Rng + ?Sized>(p: usize, rng: &mut R, out: &mut Vec<f64>) {
    loop {
        let start = out.len();
        let mut norm2 = 0.0;
        for _ in 0..p {
            let x: f64 = StandardNormal.sample(rng);
            norm2 += x * x;
            out.push(x);
        }
        if norm2 > 0.0 {
            let inv = norm2.sqrt().recip();
            out[start..].iter_mut().for_each(|x| *x *= inv);
            return;
        }
        out.truncate(start);
    }
}

/// `n` uniform points on `S^{p-1}` drawn from `rng`.
pub fn uniform_with<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DirectionalSample<f64> {
    assert!(n >= 1 && p >= 2, "uniform sampler needs n >= 1, p >= 2");
    let mut coords = Vec::with_capacity(n * p);
    for _ in 0..n {
        normal_vector(p, rng, &mut coords);
    }
    DirectionalSample::from_flat_unchecked(coords, p)
}

pub fn sample_uniform(n: usize, p: usize, seed: u64) -> DirectionalSample<f64> {
    uniform_with(n, p, &mut substream(seed, 0))
}

/// One uniform direction on `S^{p-1}`.
pub fn uniform_direction<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    let mut v = Vec::with_capacity(p);
    normal_vector(p, rng, &mut v);
    v
}

/// Default location: the first basis vector.
pub fn default_mu(p: usize) -> Vec<f64> {
    let mut mu = vec![0.0; p];
    mu[0] = 1.0;
    mu
}

fn check_mu(mu: &[f64], p: usize) -> Result<()> {
    if mu.len() != p {
        return Err(Error::InvalidParameter(format!(
            "location has dimension {}, expected {p}",
            mu.len()
        )));
    }
    let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("location norm {norm} is not 1")));
    }
    Ok(())
}

/// Cosine sampler for the von Mises–Fisher law: draws `t = u'μ` with
/// density proportional to `e^{κt}(1 − t²)^{(p−3)/2}` by Wood's rejection
/// scheme with a Beta((p−1)/2, (p−1)/2) envelope.
#[derive(Clone, Debug)]
pub struct VmfCosine {
    kappa: f64,
    dim_m1: f64,
    b: f64,
    x0: f64,
    c: f64,
    beta: Beta<f64>,
}

impl VmfCosine {
    pub fn new(p: usize, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")));
        }
        if p < 2 {
            return Err(Error::Dimension(p));
        }
        let m = (p - 1) as f64;
        let b = m / ((4.0 * kappa * kappa + m * m).sqrt() + 2.0 * kappa);
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + m * (1.0 - x0 * x0).ln();
        let beta = Beta::new(m / 2.0, m / 2.0)
            .map_err(|e| Error::InvalidParameter(format!("beta envelope: {e}")))?;
        Ok(Self {
            kappa,
            dim_m1: m,
            b,
            x0,
            c,
            beta,
        })
    }

    /// Returns the cosine and the number of proposals it took.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, u64) {
        let mut tries = 0;
        loop {
            tries += 1;
            let z = self.beta.sample(rng);
            let w = (1.0 - (1.0 + self.b) * z) / (1.0 - (1.0 - self.b) * z);
            let u: f64 = rng.random();
            let lhs = self.kappa * w + self.dim_m1 * (1.0 - self.x0 * w).ln() - self.c;
            if lhs >= u.ln() {
                return (w.clamp(-1.0, 1.0), tries);
            }
        }
    }
}

/// A sample plus the acceptance rate of the rejection step that produced it.
#[derive(Clone, Debug)]
pub struct RejectionDraw {
    pub sample: DirectionalSample<f64>,
    pub acceptance: f64,
}

fn combine_with_tangent<R: Rng + ?Sized>(t: f64, mu: &[f64], rng: &mut R, out: &mut Vec<f64>) {
    let p = mu.len();
    // Uniform direction in the tangent space at μ.
    let mut xi = Vec::with_capacity(p);
    loop {
        xi.clear();
        for _ in 0..p {
            let x: f64 = StandardNormal.sample(rng);
            xi.push(x);
        }
        let proj: f64 = xi.iter().zip(mu).map(|(a, b)| a * b).sum();
        xi.iter_mut().zip(mu).for_each(|(x, m)| *x -= proj * m);
        let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            xi.iter_mut().for_each(|x| *x /= norm);
            break;
        }
    }
    let s = (1.0 - t * t).max(0.0).sqrt();
    let start = out.len();
    out.extend(mu.iter().zip(&xi).map(|(m, x)| t * m + s * x));
    let norm = out[start..].iter().map(|x| x * x).sum::<f64>().sqrt();
    out[start..].iter_mut().for_each(|x| *x /= norm);
}

pub fn vmf_with<R: Rng + ?Sized>(
    n: usize,
    mu: &[f64],
    kappa: f64,
    rng: &mut R,
) -> Result<RejectionDraw> {
    let p = mu.len();
    check_mu(mu, p)?;
    let cosine = VmfCosine::new(p, kappa)?;
    let mut coords = Vec::with_capacity(n * p);
    let mut proposals = 0u64;
    for _ in 0..n {
        let (t, tries) = cosine.draw(rng);
        proposals += tries;
        combine_with_tangent(t, mu, rng, &mut coords);
    }
    Ok(RejectionDraw {
        sample: DirectionalSample::from_flat_unchecked(coords, p),
        acceptance: n as f64 / proposals as f64,
    })
}

pub fn sample_vmf(n: usize, p: usize, mu: &[f64], kappa: f64, seed: u64) -> Result<DirectionalSample<f64>> {
    if mu.len() != p {
        return Err(Error::InvalidParameter(format!("location must have dimension {p}")));
    }
    Ok(vmf_with(n, mu, kappa, &mut substream(seed, 0))?.sample)
}

/// Circular base densities usable inside the contamination family
/// `(1 − κ)/2π + κ f(θ + μ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "base", rename_all = "kebab-case")]
pub enum CircularBase {
    /// `(1/2π)(1 + 2ρ cos θ)`.
    Cardioid { rho: f64 },
    /// Von Mises with mode 0.
    VonMises { kappa: f64 },
}

impl CircularBase {
    fn validate(&self) -> Result<()> {
        match *self {
            CircularBase::Cardioid { rho } if !(0.0..=0.5).contains(&rho) => Err(
                Error::InvalidParameter(format!("cardioid rho must lie in [0, 1/2], got {rho}")),
            ),
            CircularBase::VonMises { kappa } if !(kappa >= 0.0) => {
                Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")))
            }
            _ => Ok(()),
        }
    }

    /// One angle from the base density; returns the angle and proposal count.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, u64) {
        match *self {
            CircularBase::Cardioid { rho } => {
                let mut tries = 0;
                loop {
                    tries += 1;
                    let theta = rng.random::<f64>() * std::f64::consts::TAU;
                    let u: f64 = rng.random();
                    if u * (1.0 + 2.0 * rho) <= 1.0 + 2.0 * rho * theta.cos() {
                        return (theta, tries);
                    }
                }
            }
            CircularBase::VonMises { kappa } => {
                let cosine = VmfCosine::new(2, kappa).expect("validated kappa");
                let (t, tries) = cosine.draw(rng);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                (sign * t.acos(), tries)
            }
        }
    }

    /// Cdf on `[0, 2π)` for the cardioid; von Mises has no closed form.
    pub fn cdf(&self, theta: f64) -> Option<f64> {
        match *self {
            CircularBase::Cardioid { rho } => {
                Some(theta / std::f64::consts::TAU + rho * theta.sin() / std::f64::consts::PI)
            }
            CircularBase::VonMises { .. } => None,
        }
    }
}

fn circular_from_angles(angles: Vec<f64>) -> DirectionalSample<f64> {
    DirectionalSample::from_angles(&angles).expect("finite angles")
}

pub fn cardioid_with<R: Rng + ?Sized>(n: usize, mu: f64, rho: f64, rng: &mut R) -> Result<RejectionDraw> {
    let base = CircularBase::Cardioid { rho };
    base.validate()?;
    let mut proposals = 0;
    let angles = (0..n)
        .map(|_| {
            let (t, tries) = base.draw(rng);
            proposals += tries;
            t + mu
        })
        .collect();
    Ok(RejectionDraw {
        sample: circular_from_angles(angles),
        acceptance: n as f64 / proposals as f64,
    })
}

/// Cardioid density `(1/2π)(1 + 2ρ cos(θ − μ))`.
pub fn sample_cardioid(n: usize, mu: f64, rho: f64, seed: u64) -> Result<DirectionalSample<f64>> {
    Ok(cardioid_with(n, mu, rho, &mut substream(seed, 0))?.sample)
}

/// Contamination family `(1 − κ)/2π + κ f(θ + μ)`: with probability `κ`
/// the angle is `Θ₀ − μ` with `Θ₀ ~ f`, otherwise uniform.
pub fn mixture8_with<R: Rng + ?Sized>(
    n: usize,
    base: CircularBase,
    mu: f64,
    kappa_mix: f64,
    rng: &mut R,
) -> Result<DirectionalSample<f64>> {
    if !(0.0..=1.0).contains(&kappa_mix) {
        return Err(Error::InvalidParameter(format!(
            "mixture weight must lie in [0, 1], got {kappa_mix}"
        )));
    }
    base.validate()?;
    let angles = (0..n)
        .map(|_| {
            if rng.random::<f64>() < kappa_mix {
                base.draw(rng).0 - mu
            } else {
                rng.random::<f64>() * std::f64::consts::TAU
            }
        })
        .collect();
    Ok(circular_from_angles(angles))
}

pub fn sample_mixture8(
    n: usize,
    base: CircularBase,
    mu: f64,
    kappa_mix: f64,
    seed: u64,
) -> Result<DirectionalSample<f64>> {
    mixture8_with(n, base, mu, kappa_mix, &mut substream(seed, 0))
}

/// vMF draw followed by a fair random sign: an antipodally symmetric law.
pub fn axial_with<R: Rng + ?Sized>(n: usize, mu: &[f64], kappa: f64, rng: &mut R) -> Result<RejectionDraw> {
    let p = mu.len();
    check_mu(mu, p)?;
    let cosine = VmfCosine::new(p, kappa)?;
    let mut coords = Vec::with_capacity(n * p);
    let mut proposals = 0;
    for _ in 0..n {
        let (t, tries) = cosine.draw(rng);
        proposals += tries;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        combine_with_tangent(sign * t, mu, rng, &mut coords);
    }
    Ok(RejectionDraw {
        sample: DirectionalSample::from_flat_unchecked(coords, p),
        acceptance: n as f64 / proposals as f64,
    })
}

pub fn sample_axial(n: usize, p: usize, mu: &[f64], kappa: f64, seed: u64) -> Result<DirectionalSample<f64>> {
    if mu.len() != p {
        return Err(Error::InvalidParameter(format!("location must have dimension {p}")));
    }
    Ok(axial_with(n, mu, kappa, &mut substream(seed, 0))?.sample)
}

/// Data-generating law for level and power studies.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum AlternativeSpec {
    Uniform,
    /// `mu = None` uses the first basis vector.
    Vmf { mu: Option<Vec<f64>>, kappa: f64 },
    Cardioid { mu: f64, rho: f64 },
    Mixture8 { base: CircularBase, mu: f64, kappa_mix: f64 },
    Axial { mu: Option<Vec<f64>>, kappa: f64 },
}

impl AlternativeSpec {
    pub fn is_circular_only(&self) -> bool {
        matches!(self, AlternativeSpec::Cardioid { .. } | AlternativeSpec::Mixture8 { .. })
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if p < 2 {
            return Err(Error::Dimension(p));
        }
        if self.is_circular_only() && p != 2 {
            return Err(Error::needs_circle(self.name(), p));
        }
        match self {
            AlternativeSpec::Vmf { mu, kappa } | AlternativeSpec::Axial { mu, kappa } => {
                if let Some(mu) = mu {
                    check_mu(mu, p)?;
                }
                VmfCosine::new(p, *kappa).map(|_| ())
            }
            AlternativeSpec::Cardioid { rho, .. } => CircularBase::Cardioid { rho: *rho }.validate(),
            AlternativeSpec::Mixture8 { base, kappa_mix, .. } => {
                base.validate()?;
                if !(0.0..=1.0).contains(kappa_mix) {
                    return Err(Error::InvalidParameter("mixture weight must lie in [0, 1]".into()));
                }
                Ok(())
            }
            AlternativeSpec::Uniform => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlternativeSpec::Uniform => "uniform",
            AlternativeSpec::Vmf { .. } => "vmf",
            AlternativeSpec::Cardioid { .. } => "cardioid",
            AlternativeSpec::Mixture8 { .. } => "mixture",
            AlternativeSpec::Axial { .. } => "axial",
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, p: usize, rng: &mut R) -> Result<DirectionalSample<f64>> {
        self.validate(p)?;
        let mu_or_default = |mu: &Option<Vec<f64>>| mu.clone().unwrap_or_else(|| default_mu(p));
        match self {
            AlternativeSpec::Uniform => Ok(uniform_with(n, p, rng)),
            AlternativeSpec::Vmf { mu, kappa } => Ok(vmf_with(n, &mu_or_default(mu), *kappa, rng)?.sample),
            AlternativeSpec::Axial { mu, kappa } => Ok(axial_with(n, &mu_or_default(mu), *kappa, rng)?.sample),
            AlternativeSpec::Cardioid { mu, rho } => Ok(cardioid_with(n, *mu, *rho, rng)?.sample),
            AlternativeSpec::Mixture8 { base, mu, kappa_mix } => mixture8_with(n, *base, *mu, *kappa_mix, rng),
        }
    }

    pub fn sample(&self, n: usize, p: usize, seed: u64) -> Result<DirectionalSample<f64>> {
        self.sample_with(n, p, &mut substream(seed, 0) as &mut StreamRng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn mean_resultant(s: &DirectionalSample<f64>, mu: &[f64]) -> f64 {
        s.points().map(|u| u.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>() / s.n() as f64
    }

    #[test]
    fn uniform_unit_norm_and_deterministic() {
        let s = sample_uniform(500, 5, 3);
        for u in s.points() {
            assert!((u.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        }
        assert_eq!(s, sample_uniform(500, 5, 3));
        assert_ne!(s, sample_uniform(500, 5, 4));
    }

    #[test]
    fn uniform_coordinate_means() {
        let s = sample_uniform(100_000, 3, 1);
        for m in s.mean() {
            assert!(m.abs() < 0.01, "{m}");
        }
    }

    #[test]
    fn vmf_concentration() {
        let mu = vec![0.0, 0.6, 0.8];
        let s = sample_vmf(10_000, 3, &mu, 50.0, 2).unwrap();
        let m = s.mean();
        let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = m.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / norm;
        assert!(cos.clamp(-1.0, 1.0).acos() < 0.05);
    }

    #[test]
    fn vmf_mean_resultant_increases_with_kappa() {
        let mu = default_mu(3);
        let r: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&k| mean_resultant(&sample_vmf(100_000, 3, &mu, k, 5).unwrap(), &mu))
            .collect();
        assert!(r.windows(2).all(|w| w[0] < w[1]), "{r:?}");
        // E[t] = coth κ − 1/κ on S².
        let k: f64 = 2.0;
        let expected = 1.0 / k.tanh() - 1.0 / k;
        assert!((r[2] - expected).abs() < 0.01);
    }

    #[test]
    fn vmf_acceptance_guard() {
        for &p in &[2usize, 3, 10, 50, 200] {
            for &k in &[0.0, 0.5, 5.0, 30.0, 100.0] {
                let d = vmf_with(2_000, &default_mu(p), k, &mut substream(9, 0)).unwrap();
                assert!(d.acceptance >= 0.3, "p={p} kappa={k}: {}", d.acceptance);
            }
        }
        assert!(sample_vmf(10, 3, &default_mu(3), -1.0, 0).is_err());
    }

    #[test]
    fn cardioid_moment_and_antimode() {
        let rho = 0.3;
        let n = 200_000;
        let mu = 1.0;
        let s = sample_cardioid(n, mu, rho, 8).unwrap();
        let a = s.angles().unwrap();
        let m = a.iter().map(|t| (t - mu).cos()).sum::<f64>() / n as f64;
        // Var[cos(Θ−μ)] = 1/2 − ρ²  for this density.
        let sd = ((0.5 - rho * rho) / n as f64).sqrt();
        assert!((m - rho).abs() < 3.0 * sd, "{m}");

        let n = 1_000_000;
        let s = sample_cardioid(n, 0.0, 0.5, 9).unwrap();
        let bins = 100;
        let anti = s
            .angles()
            .unwrap()
            .iter()
            .filter(|&&t| ((t - PI) / TAU * bins as f64).abs() < 0.5)
            .count() as f64
            / n as f64;
        assert!(anti < 1e-3, "{anti}");
        assert!(sample_cardioid(10, 0.0, 0.6, 0).is_err());
    }

    #[test]
    fn mixture_cdf_matches() {
        let base = CircularBase::Cardioid { rho: 0.5 };
        let n = 100_000;
        let kappa = 0.3;
        let s = sample_mixture8(n, base, 0.0, kappa, 11).unwrap();
        let mut a = s.angles().unwrap();
        a.sort_by(f64::total_cmp);
        let cdf = |t: f64| (1.0 - kappa) * t / TAU + kappa * base.cdf(t).unwrap();
        let ks = a
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let f = cdf(t);
                ((i + 1) as f64 / n as f64 - f).abs().max((f - i as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "{ks}");
    }

    #[test]
    fn mixture_endpoints() {
        let base = CircularBase::Cardioid { rho: 0.5 };
        let u = sample_mixture8(1000, base, 0.0, 0.0, 1).unwrap();
        let b = sample_mixture8(1000, base, 0.0, 1.0, 1).unwrap();
        assert!(mean_resultant(&u, &[1.0, 0.0]).abs() < 0.1);
        assert!((mean_resultant(&b, &[1.0, 0.0]) - 0.5).abs() < 0.1);
        assert!(sample_mixture8(10, base, 0.0, 1.5, 1).is_err());
    }

    #[test]
    fn axial_is_symmetric() {
        let s = sample_axial(100_000, 3, &default_mu(3), 5.0, 4).unwrap();
        let m = s.mean();
        assert!(m.iter().map(|x| x * x).sum::<f64>().sqrt() < 0.02);
    }

    #[test]
    fn alternative_spec_validation() {
        assert!(AlternativeSpec::Cardioid { mu: 0.0, rho: 0.2 }.validate(3).is_err());
        assert!(AlternativeSpec::Vmf { mu: Some(vec![1.0, 0.0]), kappa: 1.0 }.validate(3).is_err());
        let s = AlternativeSpec::Vmf { mu: None, kappa: 1.0 }.sample(20, 4, 1).unwrap();
        assert_eq!((s.n(), s.dim()), (20, 4));
    }
}
