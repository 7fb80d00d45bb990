use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::ser::Formatter;
use sphunif::highdim::{CoherenceRoles, RegimeChoice, RegimeSpec};
use sphunif::mc::{level_power_study, StudyCell, StudyRow};
use sphunif::nulldist::{ChiSqMixture, NullLaw, Tail, DEFAULT_MIXTURE_DRAWS};
use sphunif::sample::{emit, ingest};
use sphunif::samplers::{AlternativeSpec, CircularBase};
use sphunif::sobolev::SobolevWeights;
use sphunif::{Error, Format, IngestOptions, PValueRequest, PreparedTest, TestId, TestOptions};

/// Uniformity tests on the circle and the hypersphere.
#[derive(Parser)]
#[command(name = "sphunif", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run tests on a data file and print a JSON array of outcomes.
    Test(TestArgs),
    /// Draw a sample from a null or alternative family.
    Sample(SampleArgs),
    /// Rejection rates of tests under alternatives, as CSV.
    Power(PowerArgs),
    /// Tabulate a null law on a grid, as CSV.
    Null(NullArgs),
}

#[derive(Args)]
struct TestFlags {
    /// auto, exact, asymptotic or mc.
    #[arg(long, default_value = "auto")]
    pvalue: String,
    #[arg(long, default_value_t = 999)]
    mc_replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for Monte Carlo work (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    /// auto, sub, exp, exp:<beta> or super.
    #[arg(long, default_value = "auto")]
    regime: String,
    /// points-in-dimension or exchanged.
    #[arg(long, default_value = "points-in-dimension")]
    coherence_roles: String,
    /// Number of random projections.
    #[arg(long)]
    k: Option<usize>,
    /// Directory for persisted null draws.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    jupp_cap: usize,
    /// Use the normal approximation for the Rao spacing test.
    #[arg(long)]
    rao_normal: bool,
    /// upper, lower or two-sided.
    #[arg(long, default_value = "two-sided")]
    greenwood_tail: String,
    #[arg(long)]
    hermans_rasson_constant_free: bool,
    /// Series truncation for Rothman-type statistics.
    #[arg(long, default_value_t = 5000)]
    truncation: usize,
    #[arg(long, default_value_t = DEFAULT_MIXTURE_DRAWS)]
    mixture_draws: usize,
}

impl TestFlags {
    fn options(&self, alpha: Option<f64>) -> Result<TestOptions, Error> {
        let roles = match self.coherence_roles.as_str() {
            "points-in-dimension" => CoherenceRoles::PointsInDimension,
            "exchanged" => CoherenceRoles::Exchanged,
            other => return Err(Error::InvalidParameter(format!("unknown coherence roles {other:?}"))),
        };
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(Error::InvalidParameter("--workers must be at least 1".into()));
            }
        }
        if let Some(a) = alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidParameter(format!("--alpha must lie in (0, 1), got {a}")));
            }
        }
        Ok(TestOptions {
            pvalue: self.pvalue.parse::<PValueRequest>()?,
            mc_replicates: self.mc_replicates,
            seed: self.seed,
            workers: self.workers,
            alpha,
            regime: self.regime.parse::<RegimeChoice>()?,
            roles,
            projections: self.k,
            jupp_cap: self.jupp_cap,
            hermans_rasson_constant_free: self.hermans_rasson_constant_free,
            rao_normal: self.rao_normal,
            greenwood_tail: self.greenwood_tail.parse::<Tail>()?,
            truncation: self.truncation,
            mixture_draws: self.mixture_draws,
            cache_dir: self.cache_dir.clone(),
        })
    }
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    /// angles-rad, angles-deg or vectors.
    #[arg(long, default_value = "vectors")]
    format: String,
    /// Comma-separated test ids, or `all`.
    #[arg(long, default_value = "all")]
    test: String,
    #[arg(long)]
    alpha: Option<f64>,
    /// Include rayleigh-hd and coherence in `all`.
    #[arg(long)]
    highdim: bool,
    /// Rescale rows whose norm is within 1e-3 of one.
    #[arg(long)]
    renormalize: bool,
    #[command(flatten)]
    flags: TestFlags,
}

#[derive(Args)]
struct SampleArgs {
    /// uniform, vmf, cardioid, mixture8 or axial.
    #[arg(long)]
    family: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    /// Mean direction: comma-separated components, or one angle on the circle.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Base density of mixture8: cardioid or von-mises.
    #[arg(long, default_value = "cardioid")]
    base: String,
    #[arg(long, default_value_t = 0.0)]
    kappa_mix: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "vectors")]
    format: String,
}

#[derive(Args)]
struct PowerArgs {
    /// Comma-separated test ids.
    #[arg(long)]
    test: String,
    /// Comma-separated alternatives: uniform, vmf:<kappa>, axial:<kappa>,
    /// cardioid:<rho>, mixture8:<rho>:<weight>.
    #[arg(long, default_value = "uniform")]
    alternative: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of simulated datasets per cell.
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[command(flatten)]
    flags: TestFlags,
}

#[derive(Args)]
struct NullArgs {
    /// kolmogorov, kuiper, watson, ajne, hodges-ajne, range, normal, chisq,
    /// chisq-mixture or extreme-value.
    #[arg(long)]
    law: String,
    #[arg(long, allow_hyphen_values = true)]
    from: f64,
    #[arg(long, allow_hyphen_values = true)]
    to: f64,
    #[arg(long)]
    step: f64,
    /// Sample size for kuiper and range.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    df: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value = "upper")]
    tail: String,
    /// sub, exp:<beta> or super.
    #[arg(long)]
    regime: Option<String>,
    /// Sobolev weights file for chisq-mixture.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Dimension for chisq-mixture.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MIXTURE_DRAWS)]
    mixture_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

const MAX_GRID_POINTS: usize = 10_000_000;

/// Compact JSON with every float written to 17 significant digits.
struct SignificantDigits;

impl Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidParameter(format!("serializing output: {e}")))?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn number(x: f64) -> String {
    format!("{x:.16e}")
}

fn run_test(args: &TestArgs) -> Result<String, Error> {
    let format: Format = args.format.parse()?;
    let mut ingest_opts = IngestOptions::new(format);
    ingest_opts.renormalize = args.renormalize;
    let sample = ingest::<f64>(&args.input, ingest_opts)?;
    let opts = args.flags.options(args.alpha)?;
    let tests = TestId::parse_list(&args.test, sample.dim(), args.highdim)?;
    let outcomes = tests
        .iter()
        .map(|t| PreparedTest::new(t.clone(), &opts, sample.n(), sample.dim())?.apply(&sample))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(to_json(&outcomes)? + "\n")
}

fn parse_list(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("cannot parse {t:?} as a number")))
        })
        .collect()
}

/// Mean direction for `p`-dimensional families: a unit vector, or an angle when `p = 2`.
fn direction(mu: &Option<String>, p: usize) -> Result<Option<Vec<f64>>, Error> {
    let Some(mu) = mu else { return Ok(None) };
    let v = parse_list(mu)?;
    if p == 2 && v.len() == 1 {
        return Ok(Some(vec![v[0].cos(), v[0].sin()]));
    }
    Ok(Some(v))
}

fn angle(mu: &Option<String>) -> Result<f64, Error> {
    let Some(mu) = mu else { return Ok(0.0) };
    match parse_list(mu)?.as_slice() {
        [a] => Ok(*a),
        [x, y] => Ok(y.atan2(*x)),
        _ => Err(Error::InvalidParameter("circular mu is one angle or a 2-vector".into())),
    }
}

fn run_sample(args: &SampleArgs) -> Result<String, Error> {
    let format: Format = args.format.parse()?;
    let spec = match args.family.as_str() {
        "uniform" => AlternativeSpec::Uniform,
        "vmf" => AlternativeSpec::Vmf {
            mu: direction(&args.mu, args.p)?,
            kappa: args.kappa,
        },
        "axial" => AlternativeSpec::Axial {
            mu: direction(&args.mu, args.p)?,
            kappa: args.kappa,
        },
        "cardioid" => AlternativeSpec::Cardioid {
            mu: angle(&args.mu)?,
            rho: args.rho,
        },
        "mixture8" => AlternativeSpec::Mixture8 {
            base: match args.base.as_str() {
                "cardioid" => CircularBase::Cardioid { rho: args.rho },
                "von-mises" => CircularBase::VonMises { kappa: args.kappa },
                other => return Err(Error::InvalidParameter(format!("unknown base density {other:?}"))),
            },
            mu: angle(&args.mu)?,
            kappa_mix: args.kappa_mix,
        },
        other => return Err(Error::InvalidParameter(format!("unknown family {other:?}"))),
    };
    if args.n == 0 {
        return Err(Error::EmptyInput);
    }
    let sample = spec.sample(args.n, args.p, args.seed)?;
    let text = emit(&sample, format)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn alternative(spec: &str) -> Result<AlternativeSpec, Error> {
    let mut parts = spec.trim().split(':');
    let name = parts.next().unwrap_or_default();
    let params = parts.map(|t| {
        t.parse::<f64>()
            .map_err(|_| Error::InvalidParameter(format!("cannot parse {t:?} in alternative {spec:?}")))
    });
    let params = params.collect::<Result<Vec<f64>, Error>>()?;
    let bad = || Error::InvalidParameter(format!("malformed alternative {spec:?}"));
    Ok(match (name, params.as_slice()) {
        ("uniform", []) => AlternativeSpec::Uniform,
        ("vmf", [kappa]) => AlternativeSpec::Vmf { mu: None, kappa: *kappa },
        ("axial", [kappa]) => AlternativeSpec::Axial { mu: None, kappa: *kappa },
        ("cardioid", [rho]) => AlternativeSpec::Cardioid { mu: 0.0, rho: *rho },
        ("mixture8", [rho, weight]) => AlternativeSpec::Mixture8 {
            base: CircularBase::Cardioid { rho: *rho },
            mu: 0.0,
            kappa_mix: *weight,
        },
        _ => return Err(bad()),
    })
}

fn run_power(args: &PowerArgs) -> Result<String, Error> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let opts = args.flags.options(None)?;
    let tests = TestId::parse_list(&args.test, args.p, false)?;
    let alternatives = args.alternative.split(',').map(alternative).collect::<Result<Vec<_>, _>>()?;
    let mut cells = Vec::new();
    for test in &tests {
        let prepared = Arc::new(PreparedTest::new(test.clone(), &opts, args.n, args.p)?);
        for alt in &alternatives {
            cells.push(StudyCell {
                test: test.to_string(),
                procedure: prepared.clone(),
                alternative: alt.clone(),
                n: args.n,
                p: args.p,
                alpha: args.alpha,
            });
        }
    }
    let rows = level_power_study(&cells, args.replicates, args.flags.seed, opts.workers)?;
    let mut out = String::from(StudyRow::CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv());
        out.push('\n');
    }
    Ok(out)
}

fn null_law(args: &NullArgs) -> Result<NullLaw, Error> {
    let need_n = || {
        args.n
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::InvalidParameter(format!("law {} needs --n >= 1", args.law)))
    };
    Ok(match args.law.as_str() {
        "kolmogorov" => NullLaw::Kolmogorov,
        "kuiper" => NullLaw::KuiperSeries { n: need_n()? },
        "watson" => NullLaw::WatsonAsym,
        "ajne" => NullLaw::AjneSeries,
        "hodges-ajne" => NullLaw::HodgesAjneAsym,
        "range" => NullLaw::RangeExact { n: need_n()? },
        "normal" => {
            if !(args.variance > 0.0 && args.variance.is_finite()) {
                return Err(Error::InvalidParameter("--variance must be positive".into()));
            }
            NullLaw::Normal {
                mean: args.mean,
                variance: args.variance,
                tail: args.tail.parse()?,
            }
        }
        "chisq" => match args.df {
            Some(df) if df > 0.0 && df.is_finite() => NullLaw::ChiSq { df },
            _ => return Err(Error::InvalidParameter("law chisq needs --df > 0".into())),
        },
        "chisq-mixture" => {
            let path = args
                .weights
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("law chisq-mixture needs --weights".into()))?;
            let p = args
                .p
                .filter(|&p| p >= 2)
                .ok_or_else(|| Error::InvalidParameter("law chisq-mixture needs --p >= 2".into()))?;
            let w = SobolevWeights::from_file(path)?;
            NullLaw::chisq_mixture(ChiSqMixture::sobolev(&w, p), args.mixture_draws, args.seed, w.tail_bound(p))
        }
        "extreme-value" => {
            let regime = match args.regime.as_deref() {
                Some("sub") => RegimeSpec::SubExponential,
                Some("super") => RegimeSpec::SuperExponential,
                Some(other) => match other.strip_prefix("exp:").map(str::parse::<f64>) {
                    Some(Ok(beta)) => RegimeSpec::exponential(beta)?,
                    _ => return Err(Error::InvalidParameter(format!("unknown regime {other:?}"))),
                },
                None => return Err(Error::InvalidParameter("law extreme-value needs --regime".into())),
            };
            NullLaw::ExtremeValue(regime)
        }
        other => return Err(Error::InvalidParameter(format!("unknown law {other:?}"))),
    })
}

fn run_null(args: &NullArgs) -> Result<String, Error> {
    if !(args.from.is_finite() && args.to.is_finite() && args.step.is_finite()) || args.step <= 0.0 || args.to < args.from {
        return Err(Error::InvalidParameter(format!(
            "malformed grid: from {} to {} step {}",
            args.from, args.to, args.step
        )));
    }
    let count = ((args.to - args.from) / args.step + 1e-9).floor() + 1.0;
    if count > MAX_GRID_POINTS as f64 {
        return Err(Error::InvalidParameter(format!("grid has more than {MAX_GRID_POINTS} points")));
    }
    let law = null_law(args)?;
    let mut out = String::from("x,cdf,p_value\n");
    for i in 0..count as usize {
        let x = args.from + i as f64 * args.step;
        out.push_str(&format!("{},{},{}\n", number(x), number(law.cdf(x)), number(law.pvalue(x))));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Test(a) => run_test(a),
        Command::Sample(a) => run_sample(a),
        Command::Power(a) => run_power(a),
        Command::Null(a) => run_null(a),
    };
    match result {
        Ok(text) => {
            let mut stdout = io::stdout().lock();
            if stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
