//! Named tests, p-value method selection and test outcomes.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::circular::{circular_range, greenwood, hodges_ajne_ordered, kuiper, rao_spacings, watson};
use crate::error::{Error, Result};
use crate::highdim::{coherence, coherence_statistic, rayleigh_standardized, CoherenceRoles, RegimeChoice};
use crate::mc::{with_workers, McConfig, NullDraws, PValueProcedure};
use crate::nulldist::{ChiSqMixture, NullLaw, Tail, DEFAULT_MIXTURE_DRAWS};
use crate::projection::{single_projection_test, ProjectionCalibrator, ProjectionConfig};
use crate::rng::{derive_seed, purpose};
use crate::sample::{DirectionalSample, OrderedCircular, Spacings};
use crate::sobolev::{
    ajne, bingham, circular_kernel_test, gine_f, gine_g, jupp_data_driven, rayleigh, rothman_exact, sobolev_statistic,
    CircularKernel, JuppSelection, SobolevWeights, DEFAULT_TRUNCATION, JUPP_DEFAULT_CAP,
};

pub const DEFAULT_ROTHMAN_T: f64 = 0.25;

/// Rao's spacing statistic under the normal reading of its limit law.
pub const RAO_NORMAL_VARIANCE: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI
    * (2.0 / std::f64::consts::E - 5.0 / (std::f64::consts::E * std::f64::consts::E));

#[derive(Clone, Debug, PartialEq)]
pub enum TestId {
    Kuiper,
    Watson,
    HodgesAjne,
    Ajne,
    Rothman { t: f64 },
    Range,
    Rao,
    Greenwood,
    Rayleigh,
    Bingham,
    GineG,
    GineF,
    HermansRasson,
    Pycke,
    Sobolev { path: PathBuf, weights: Arc<SobolevWeights> },
    Jupp,
    Projection,
    RayleighHd,
    Coherence,
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestId::Kuiper => f.write_str("kuiper"),
            TestId::Watson => f.write_str("watson"),
            TestId::HodgesAjne => f.write_str("hodges-ajne"),
            TestId::Ajne => f.write_str("ajne"),
            TestId::Rothman { t } => write!(f, "rothman:{t}"),
            TestId::Range => f.write_str("range"),
            TestId::Rao => f.write_str("rao"),
            TestId::Greenwood => f.write_str("greenwood"),
            TestId::Rayleigh => f.write_str("rayleigh"),
            TestId::Bingham => f.write_str("bingham"),
            TestId::GineG => f.write_str("gine-g"),
            TestId::GineF => f.write_str("gine-f"),
            TestId::HermansRasson => f.write_str("hermans-rasson"),
            TestId::Pycke => f.write_str("pycke"),
            TestId::Sobolev { path, .. } => write!(f, "sobolev:{}", path.display()),
            TestId::Jupp => f.write_str("jupp"),
            TestId::Projection => f.write_str("projection"),
            TestId::RayleighHd => f.write_str("rayleigh-hd"),
            TestId::Coherence => f.write_str("coherence"),
        }
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "kuiper" => TestId::Kuiper,
            "watson" => TestId::Watson,
            "hodges-ajne" => TestId::HodgesAjne,
            "ajne" => TestId::Ajne,
            "rothman" => TestId::Rothman { t: DEFAULT_ROTHMAN_T },
            "range" => TestId::Range,
            "rao" => TestId::Rao,
            "greenwood" => TestId::Greenwood,
            "rayleigh" => TestId::Rayleigh,
            "bingham" => TestId::Bingham,
            "gine-g" => TestId::GineG,
            "gine-f" => TestId::GineF,
            "hermans-rasson" => TestId::HermansRasson,
            "pycke" => TestId::Pycke,
            "jupp" => TestId::Jupp,
            "projection" => TestId::Projection,
            "rayleigh-hd" => TestId::RayleighHd,
            "coherence" => TestId::Coherence,
            other => {
                if let Some(t) = other.strip_prefix("rothman:") {
                    let t: f64 = t
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("invalid Rothman parameter {t:?}")))?;
                    if !(t > 0.0 && t < 1.0) {
                        return Err(Error::InvalidParameter(format!("Rothman t must lie in (0, 1), got {t}")));
                    }
                    TestId::Rothman { t }
                } else if let Some(path) = other.strip_prefix("sobolev:") {
                    let weights = SobolevWeights::from_file(path)?.with_label(format!("sobolev:{path}"));
                    TestId::Sobolev {
                        path: PathBuf::from(path),
                        weights: Arc::new(weights),
                    }
                } else {
                    return Err(Error::InvalidParameter(format!("unknown test id {other:?}")));
                }
            }
        })
    }
}

impl TestId {
    /// Parse a comma-separated list, or `all`.
    pub fn parse_list(spec: &str, p: usize, highdim: bool) -> Result<Vec<TestId>> {
        if spec.trim() == "all" {
            return Ok(Self::all(p, highdim));
        }
        spec.split(',').map(str::parse).collect()
    }

    /// Every test applicable to dimension `p`; the high-dimensional tests only
    /// when `highdim` is set.
    pub fn all(p: usize, highdim: bool) -> Vec<TestId> {
        let mut out = Vec::new();
        if p == 2 {
            out.extend([
                TestId::Kuiper,
                TestId::Watson,
                TestId::HodgesAjne,
                TestId::Rothman { t: DEFAULT_ROTHMAN_T },
                TestId::Range,
                TestId::Rao,
                TestId::Greenwood,
                TestId::HermansRasson,
                TestId::Pycke,
            ]);
        }
        out.extend([
            TestId::Ajne,
            TestId::Rayleigh,
            TestId::Bingham,
            TestId::GineG,
            TestId::GineF,
            TestId::Jupp,
            TestId::Projection,
        ]);
        if highdim {
            out.push(TestId::RayleighHd);
            if p >= 3 {
                out.push(TestId::Coherence);
            }
        }
        out
    }

    pub fn is_circular_only(&self) -> bool {
        matches!(
            self,
            TestId::Kuiper
                | TestId::Watson
                | TestId::HodgesAjne
                | TestId::Rothman { .. }
                | TestId::Range
                | TestId::Rao
                | TestId::Greenwood
                | TestId::HermansRasson
                | TestId::Pycke
        )
    }

    /// Direction of rejection for Monte Carlo calibration.
    pub fn tail(&self, opts: &TestOptions) -> Tail {
        match self {
            TestId::Range => Tail::Lower,
            TestId::Greenwood => opts.greenwood_tail,
            TestId::Projection => Tail::Lower,
            _ => Tail::Upper,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    Exact,
    Asymptotic,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PValueRequest {
    Auto,
    Exact,
    Asymptotic,
    MonteCarlo,
}

impl FromStr for PValueRequest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(PValueRequest::Auto),
            "exact" => Ok(PValueRequest::Exact),
            "asymptotic" => Ok(PValueRequest::Asymptotic),
            "mc" => Ok(PValueRequest::MonteCarlo),
            other => Err(Error::InvalidParameter(format!("unknown p-value method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TestOptions {
    pub pvalue: PValueRequest,
    pub mc_replicates: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub alpha: Option<f64>,
    pub regime: RegimeChoice,
    pub roles: CoherenceRoles,
    /// Number of projections; `None` picks the per-dimension default.
    pub projections: Option<usize>,
    pub jupp_cap: usize,
    pub hermans_rasson_constant_free: bool,
    pub rao_normal: bool,
    pub greenwood_tail: Tail,
    pub truncation: usize,
    pub mixture_draws: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            pvalue: PValueRequest::Auto,
            mc_replicates: 999,
            seed: 0,
            workers: None,
            alpha: None,
            regime: RegimeChoice::Auto,
            roles: CoherenceRoles::default(),
            projections: None,
            jupp_cap: JUPP_DEFAULT_CAP,
            hermans_rasson_constant_free: false,
            rao_normal: false,
            greenwood_tail: Tail::TwoSided,
            truncation: DEFAULT_TRUNCATION,
            mixture_draws: DEFAULT_MIXTURE_DRAWS,
            cache_dir: None,
        }
    }
}

/// One test applied to one sample.
#[derive(Clone, Debug, Serialize)]
pub struct TestOutcome {
    pub test: String,
    /// `None` only for a degenerate statistic, which a warning explains.
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub p_value_method: PValueMethod,
    pub n: usize,
    pub p: usize,
    pub config: Value,
    pub warnings: Vec<String>,
}

fn check_dimension(test: &TestId, n: usize, p: usize) -> Result<()> {
    if test.is_circular_only() && p != 2 {
        return Err(Error::needs_circle(&test.to_string(), p));
    }
    let min_n = match test {
        TestId::Range | TestId::Rao | TestId::Greenwood | TestId::HermansRasson | TestId::Pycke | TestId::Jupp => 2,
        TestId::Coherence => 3,
        _ => 1,
    };
    if n < min_n {
        return Err(Error::too_few(&test.to_string(), min_n, n));
    }
    if let TestId::Sobolev { .. } = test {
        if p < 2 {
            return Err(Error::Dimension(p));
        }
    }
    Ok(())
}

/// Value of the test statistic used for Monte Carlo calibration.
fn raw_statistic(test: &TestId, opts: &TestOptions, s: &DirectionalSample<f64>) -> Result<f64> {
    let ordered = || OrderedCircular::new(s);
    let spaced = || -> Result<Spacings<f64>> { Spacings::from_ordered(&ordered()?) };
    Ok(match test {
        TestId::Kuiper => kuiper(&ordered()?).value,
        TestId::Watson => watson(&ordered()?).value,
        TestId::HodgesAjne => hodges_ajne_ordered(&ordered()?).value,
        TestId::Ajne => ajne(s),
        TestId::Rothman { t } => rothman_exact(s, *t)?,
        TestId::Range => circular_range(&spaced()?).value,
        TestId::Rao => rao_spacings(&spaced()?).value,
        TestId::Greenwood => greenwood(&spaced()?).value,
        TestId::Rayleigh => rayleigh(s),
        TestId::Bingham => bingham(s),
        TestId::GineG => gine_g(s),
        TestId::GineF => gine_f(s),
        TestId::HermansRasson => circular_kernel_test(
            s,
            if opts.hermans_rasson_constant_free {
                CircularKernel::HermansRassonConstantFree
            } else {
                CircularKernel::HermansRasson
            },
        )?,
        TestId::Pycke => circular_kernel_test(s, CircularKernel::Pycke)?,
        TestId::Sobolev { weights, .. } => sobolev_statistic(s, weights),
        TestId::Jupp => jupp_data_driven(s, opts.jupp_cap)?.statistic,
        TestId::RayleighHd => rayleigh_standardized(s),
        TestId::Coherence => coherence(s)?,
        TestId::Projection => {
            return Err(Error::InvalidParameter("projection is calibrated by its own engine".into()))
        }
    })
}

enum Calibration {
    Law(NullLaw),
    SingleProjection(Vec<f64>),
    MultiProjection(Arc<ProjectionCalibrator>),
    Coherence,
    Monte(Arc<NullDraws>),
}

/// A test bound to a sample shape, with any null simulation already done.
pub struct PreparedTest {
    test: TestId,
    opts: TestOptions,
    n: usize,
    p: usize,
    method: PValueMethod,
    calibration: Calibration,
    config: serde_json::Map<String, Value>,
    warnings: Vec<String>,
}

fn analytic_law(test: &TestId, opts: &TestOptions, n: usize, p: usize) -> Option<NullLaw> {
    let mixture = |w: &SobolevWeights| {
        NullLaw::chisq_mixture(
            ChiSqMixture::sobolev(w, p),
            opts.mixture_draws,
            derive_seed(opts.seed, purpose::MIXTURE_DRAWS),
            w.tail_bound(p),
        )
    };
    Some(match test {
        TestId::Kuiper => NullLaw::KuiperSeries { n },
        TestId::Watson => NullLaw::WatsonAsym,
        TestId::HodgesAjne => NullLaw::HodgesAjneAsym,
        TestId::Ajne if p == 2 => NullLaw::AjneSeries,
        TestId::Rothman { t } => mixture(&SobolevWeights::rothman(*t, opts.truncation).ok()?),
        TestId::Range => NullLaw::RangeExact { n },
        TestId::Rao if opts.rao_normal => NullLaw::Normal {
            mean: 0.0,
            variance: RAO_NORMAL_VARIANCE,
            tail: Tail::Upper,
        },
        TestId::Greenwood => NullLaw::Normal {
            mean: 0.0,
            variance: 4.0,
            tail: opts.greenwood_tail,
        },
        TestId::Rayleigh | TestId::Jupp => NullLaw::ChiSq { df: p as f64 },
        TestId::Bingham => NullLaw::ChiSq {
            df: ((p - 1) * (p + 2)) as f64 / 2.0,
        },
        TestId::Sobolev { weights, .. } => mixture(weights),
        TestId::RayleighHd => NullLaw::Normal {
            mean: 0.0,
            variance: 1.0,
            tail: Tail::Upper,
        },
        _ => return None,
    })
}

fn cache_path(dir: &Path, id: &str, n: usize, p: usize, cfg: &McConfig) -> PathBuf {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    dir.join(format!("{safe}-n{n}-p{p}-m{}-s{}.null", cfg.replicates, cfg.seed))
}

impl PreparedTest {
    pub fn new(test: TestId, opts: &TestOptions, n: usize, p: usize) -> Result<Self> {
        check_dimension(&test, n, p)?;
        let mut warnings = Vec::new();
        let mut config = serde_json::Map::new();
        let law = analytic_law(&test, opts, n, p);
        let projections = opts.projections.unwrap_or_else(|| ProjectionConfig::default_k(p));
        let has_exact = law.as_ref().is_some_and(NullLaw::is_exact);
        let has_asymptotic = match &test {
            TestId::Projection => projections == 1,
            TestId::Coherence => true,
            _ => law.as_ref().is_some_and(|l| !l.is_exact()),
        };
        let method = match opts.pvalue {
            PValueRequest::Auto if has_exact => PValueMethod::Exact,
            PValueRequest::Auto if has_asymptotic => PValueMethod::Asymptotic,
            PValueRequest::Auto => PValueMethod::MonteCarlo,
            PValueRequest::Exact if has_exact => PValueMethod::Exact,
            PValueRequest::Asymptotic if has_asymptotic => PValueMethod::Asymptotic,
            PValueRequest::MonteCarlo => PValueMethod::MonteCarlo,
            PValueRequest::Exact | PValueRequest::Asymptotic => {
                warnings.push(format!(
                    "{test} has no {} null law; using Monte Carlo",
                    if opts.pvalue == PValueRequest::Exact { "exact" } else { "asymptotic" }
                ));
                PValueMethod::MonteCarlo
            }
        };

        let calibration = match (&test, method) {
            (TestId::Projection, _) => {
                config.insert("k".into(), json!(projections));
                if projections == 1 && method != PValueMethod::MonteCarlo {
                    let cfg = ProjectionConfig {
                        k: 1,
                        seed: opts.seed,
                        mc_replicates: opts.mc_replicates.max(crate::projection::MIN_CALIBRATION_REPLICATES),
                    };
                    Calibration::SingleProjection(cfg.directions(p).remove(0))
                } else {
                    let cfg = ProjectionConfig {
                        k: projections,
                        seed: opts.seed,
                        mc_replicates: opts.mc_replicates,
                    };
                    config.insert("mc_replicates".into(), json!(opts.mc_replicates));
                    config.insert("seed".into(), json!(opts.seed));
                    let cal = with_workers(opts.workers, || ProjectionCalibrator::new(n, p, cfg))??;
                    Calibration::MultiProjection(Arc::new(cal))
                }
            }
            (TestId::Coherence, PValueMethod::Asymptotic) => {
                let regime = opts.roles.resolve(opts.regime, n, p);
                config.insert("regime".into(), serde_json::to_value(regime).expect("serializable"));
                config.insert("roles".into(), serde_json::to_value(opts.roles).expect("serializable"));
                Calibration::Coherence
            }
            (_, PValueMethod::MonteCarlo) => {
                let cfg = McConfig {
                    replicates: opts.mc_replicates,
                    seed: opts.seed,
                    workers: opts.workers,
                };
                cfg.validate()?;
                let id = test.to_string();
                let cache = opts.cache_dir.as_deref().map(|d| cache_path(d, &id, n, p, &cfg));
                let stat = |s: &DirectionalSample<f64>| raw_statistic(&test, opts, s);
                let draws = NullDraws::load_or_simulate(cache.as_deref(), &id, n, p, cfg, &stat)?;
                config.insert("mc_replicates".into(), json!(opts.mc_replicates));
                config.insert("seed".into(), json!(opts.seed));
                config.insert("tail".into(), serde_json::to_value(test.tail(opts)).expect("serializable"));
                Calibration::Monte(Arc::new(draws))
            }
            _ => {
                let law = law.expect("analytic method implies a law");
                config.insert("law".into(), json!(law.name()));
                if let NullLaw::ChiSqMixture { .. } = law {
                    config.insert("truncation".into(), json!(opts.truncation));
                    config.insert("mixture_draws".into(), json!(opts.mixture_draws));
                }
                Calibration::Law(law)
            }
        };

        match &test {
            TestId::Rothman { t } => {
                config.insert("t".into(), json!(t));
            }
            TestId::Jupp => {
                config.insert("cap".into(), json!(opts.jupp_cap));
            }
            TestId::HermansRasson => {
                config.insert("constant_free".into(), json!(opts.hermans_rasson_constant_free));
            }
            TestId::Greenwood => {
                config.insert("tail".into(), serde_json::to_value(opts.greenwood_tail).expect("serializable"));
            }
            TestId::Sobolev { weights, .. } => {
                config.insert("truncation".into(), json!(weights.truncation()));
            }
            TestId::Rao if opts.rao_normal && method == PValueMethod::Asymptotic => {
                warnings.push("normal law for Rao's statistic is a reading of the source, not an established result".into());
            }
            _ => {}
        }
        if let Some(a) = opts.alpha {
            config.insert("alpha".into(), json!(a));
        }
        Ok(Self {
            test,
            opts: opts.clone(),
            n,
            p,
            method,
            calibration,
            config,
            warnings,
        })
    }

    pub fn method(&self) -> PValueMethod {
        self.method
    }

    pub fn test_id(&self) -> &TestId {
        &self.test
    }

    /// Statistic value; the Jupp selection is kept for reporting.
    fn statistic(&self, sample: &DirectionalSample<f64>, jupp: &mut Option<JuppSelection<f64>>) -> Result<f64> {
        if let TestId::Jupp = self.test {
            let sel = jupp_data_driven(sample, self.opts.jupp_cap)?;
            let stat = sel.statistic;
            *jupp = Some(sel);
            return Ok(stat);
        }
        raw_statistic(&self.test, &self.opts, sample)
    }

    pub fn apply(&self, sample: &DirectionalSample<f64>) -> Result<TestOutcome> {
        if sample.n() != self.n || sample.dim() != self.p {
            return Err(Error::InvalidParameter(format!(
                "{} prepared for n={}, p={}, got n={}, p={}",
                self.test,
                self.n,
                self.p,
                sample.n(),
                sample.dim()
            )));
        }
        let mut warnings = self.warnings.clone();
        let mut config = self.config.clone();
        let mut jupp = None;
        let (statistic, p_value) = match &self.calibration {
            Calibration::Law(law) => {
                let stat = self.statistic(sample, &mut jupp)?;
                let eval = law.evaluate(stat);
                warnings.extend(eval.warnings);
                (Some(stat), eval.p_value)
            }
            Calibration::SingleProjection(h) => {
                let out = single_projection_test(sample, h)?;
                (Some(out.statistic), out.p_value)
            }
            Calibration::MultiProjection(cal) => {
                let out = cal.test(sample)?;
                config.insert("min_p".into(), json!(out.min_p));
                (Some(out.min_p), out.p_value)
            }
            Calibration::Coherence => {
                let regime = self.opts.roles.resolve(self.opts.regime, self.n, self.p);
                let out = coherence_statistic(sample, regime, self.opts.roles)?;
                config.insert("ell".into(), json!(out.ell));
                if out.degenerate {
                    warnings.push("coherence is 1 (duplicate or antipodal pair): statistic degenerate".into());
                }
                (out.statistic, out.p_value)
            }
            Calibration::Monte(draws) => {
                let stat = self.statistic(sample, &mut jupp)?;
                let (b, p) = draws.pvalue(stat, self.test.tail(&self.opts));
                config.insert("exceedances".into(), json!(b));
                (Some(stat), p)
            }
        };
        if let Some(sel) = jupp {
            config.insert("order".into(), json!(sel.order));
            if sel.cap_binding {
                warnings.push(format!("selected order sits on the cap {}", self.opts.jupp_cap));
            }
        }
        if let Some(a) = self.opts.alpha {
            config.insert("reject".into(), json!(p_value <= a));
        }
        Ok(TestOutcome {
            test: self.test.to_string(),
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            p_value_method: self.method,
            n: self.n,
            p: self.p,
            config: Value::Object(config),
            warnings,
        })
    }
}

impl PValueProcedure for PreparedTest {
    fn pvalue(&self, sample: &DirectionalSample<f64>) -> Result<f64> {
        Ok(self.apply(sample)?.p_value)
    }
}

/// Run every test on one sample, in order.
pub fn run_tests(sample: &DirectionalSample<f64>, tests: &[TestId], opts: &TestOptions) -> Result<Vec<TestOutcome>> {
    tests
        .iter()
        .map(|t| PreparedTest::new(t.clone(), opts, sample.n(), sample.dim())?.apply(sample))
        .collect()
}
