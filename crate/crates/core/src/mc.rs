//! Seeded Monte Carlo: null simulation, empirical p-values and
//! level/power studies.
//!
//! Replicate `r` always draws from `substream(derive_seed(seed, purpose), r)`
//! and results are gathered in replicate order, so the output never depends on
//! the number of worker threads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nulldist::Tail;
use crate::rng::{derive_seed, purpose, substream};
use crate::sample::DirectionalSample;
use crate::samplers::{uniform_with, AlternativeSpec};

pub const MIN_REPLICATES: usize = 99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the ambient pool.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl McConfig {
    pub fn new(replicates: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            replicates,
            seed,
            workers: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::InvalidParameter(format!(
                "Monte Carlo needs at least {MIN_REPLICATES} replicates, got {}",
                self.replicates
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Run `f` on a pool with `workers` threads, or on the ambient pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Exceedance count and `(b+1)/(M+1)` p-value of `observed` against sorted draws.
pub fn empirical_pvalue(sorted: &[f64], observed: f64, tail: Tail) -> (usize, f64) {
    let m = sorted.len();
    let upper = m - sorted.partition_point(|&x| x < observed);
    let lower = sorted.partition_point(|&x| x <= observed);
    let p = |b: usize| (b as f64 + 1.0) / (m as f64 + 1.0);
    match tail {
        Tail::Upper => (upper, p(upper)),
        Tail::Lower => (lower, p(lower)),
        Tail::TwoSided => {
            let b = upper.min(lower);
            (b, (2.0 * p(b)).min(1.0))
        }
    }
}

/// Sorted null draws of one statistic for one sample shape.
#[derive(Clone, Debug, PartialEq)]
pub struct NullDraws {
    pub statistic: String,
    pub n: usize,
    pub p: usize,
    pub replicates: usize,
    pub seed: u64,
    sorted: Vec<f64>,
}

const CACHE_MAGIC: &[u8; 8] = b"SPHNULL1";

impl NullDraws {
    pub fn simulate<F>(statistic: &str, n: usize, p: usize, cfg: McConfig, stat: &F) -> Result<Self>
    where
        F: Fn(&DirectionalSample<f64>) -> Result<f64> + Sync,
    {
        cfg.validate()?;
        let seed = derive_seed(cfg.seed, purpose::NULL_REPLICATES);
        let mut sorted = with_workers(cfg.workers, || {
            (0..cfg.replicates as u64)
                .into_par_iter()
                .map(|r| stat(&uniform_with(n, p, &mut substream(seed, r))))
                .collect::<Result<Vec<f64>>>()
        })??;
        if let Some(bad) = sorted.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{statistic} null draw {bad}")));
        }
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            statistic: statistic.to_string(),
            n,
            p,
            replicates: cfg.replicates,
            seed: cfg.seed,
            sorted,
        })
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn pvalue(&self, observed: f64, tail: Tail) -> (usize, f64) {
        empirical_pvalue(&self.sorted, observed, tail)
    }

    /// Upper `α` quantile of the draws.
    pub fn upper_quantile(&self, alpha: f64) -> f64 {
        let m = self.sorted.len();
        let idx = (((1.0 - alpha) * m as f64).ceil() as usize).clamp(1, m) - 1;
        self.sorted[idx]
    }

    fn header_matches(&self, statistic: &str, n: usize, p: usize, cfg: &McConfig) -> bool {
        self.statistic == statistic && self.n == n && self.p == p && self.replicates == cfg.replicates && self.seed == cfg.seed
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        let id = self.statistic.as_bytes();
        w.write_all(&(id.len() as u64).to_le_bytes())?;
        w.write_all(id)?;
        for v in [self.n as u64, self.p as u64, self.replicates as u64, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        for x in &self.sorted {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("not a null-draw cache file".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut BufReader<File>| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let len = next(&mut r)? as usize;
        if len > 4096 {
            return Err(Error::Cache("statistic id too long".into()));
        }
        let mut id = vec![0u8; len];
        r.read_exact(&mut id)?;
        let statistic = String::from_utf8(id).map_err(|_| Error::Cache("statistic id is not UTF-8".into()))?;
        let n = next(&mut r)? as usize;
        let p = next(&mut r)? as usize;
        let replicates = next(&mut r)? as usize;
        let seed = next(&mut r)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != replicates * 8 {
            return Err(Error::Cache(format!(
                "expected {replicates} draws, found {} bytes",
                bytes.len()
            )));
        }
        let sorted = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            statistic,
            n,
            p,
            replicates,
            seed,
            sorted,
        })
    }

    /// Reuse a cache file when its header matches exactly, otherwise simulate
    /// and (re)write it.
    pub fn load_or_simulate<F>(
        cache: Option<&Path>,
        statistic: &str,
        n: usize,
        p: usize,
        cfg: McConfig,
        stat: &F,
    ) -> Result<Self>
    where
        F: Fn(&DirectionalSample<f64>) -> Result<f64> + Sync,
    {
        if let Some(path) = cache {
            if let Ok(hit) = Self::load(path) {
                if hit.header_matches(statistic, n, p, &cfg) {
                    return Ok(hit);
                }
            }
        }
        let draws = Self::simulate(statistic, n, p, cfg, stat)?;
        if let Some(path) = cache {
            draws.save(path)?;
        }
        Ok(draws)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McResult {
    pub observed: f64,
    pub exceedances: usize,
    pub p_value: f64,
    #[serde(skip)]
    pub null_draws: Option<Arc<NullDraws>>,
    #[serde(skip)]
    pub wall_time: std::time::Duration,
    pub warnings: Vec<String>,
}

/// Monte Carlo p-value of `stat` on `sample` against `M` uniform datasets of
/// the same shape.
pub fn mc_pvalue<F>(
    sample: &DirectionalSample<f64>,
    statistic: &str,
    stat: &F,
    cfg: McConfig,
    tail: Tail,
    nonnegative: bool,
) -> Result<McResult>
where
    F: Fn(&DirectionalSample<f64>) -> Result<f64> + Sync,
{
    let start = Instant::now();
    let observed = stat(sample)?;
    let draws = NullDraws::simulate(statistic, sample.n(), sample.dim(), cfg, stat)?;
    let (b, p) = draws.pvalue(observed, tail);
    let mut warnings = Vec::new();
    if nonnegative && tail != Tail::Upper {
        warnings.push(format!("{tail:?} tail requested for {statistic}, which rejects for large values"));
    }
    Ok(McResult {
        observed,
        exceedances: b,
        p_value: p,
        null_draws: Some(Arc::new(draws)),
        wall_time: start.elapsed(),
        warnings,
    })
}

/// A test ready to be applied repeatedly, with any null simulation done up front.
pub trait PValueProcedure: Send + Sync {
    fn pvalue(&self, sample: &DirectionalSample<f64>) -> Result<f64>;
}

impl<F> PValueProcedure for F
where
    F: Fn(&DirectionalSample<f64>) -> Result<f64> + Send + Sync,
{
    fn pvalue(&self, sample: &DirectionalSample<f64>) -> Result<f64> {
        self(sample)
    }
}

#[derive(Clone)]
pub struct StudyCell {
    pub test: String,
    pub procedure: Arc<dyn PValueProcedure>,
    pub alternative: AlternativeSpec,
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub test: String,
    pub alternative: String,
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub rejections: usize,
    pub rate: f64,
    pub std_error: f64,
}

impl StudyRow {
    pub const CSV_HEADER: &'static str = "test,alternative,n,p,alpha,replicates,rejections,rate,std_error";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.6},{:.6}",
            self.test, self.alternative, self.n, self.p, self.alpha, self.replicates, self.rejections, self.rate, self.std_error
        )
    }
}

/// Rejection frequency per cell. Datasets depend only on
/// `(seed, alternative, n, p, replicate)`, so cells sharing an alternative and
/// shape see identical data.
pub fn level_power_study(cells: &[StudyCell], outer: usize, seed: u64, workers: Option<usize>) -> Result<Vec<StudyRow>> {
    if outer == 0 {
        return Err(Error::InvalidParameter("study needs at least one replicate".into()));
    }
    let data_seed = derive_seed(seed, purpose::STUDY_DATA);
    with_workers(workers, || {
        cells
            .iter()
            .map(|cell| {
                cell.alternative.validate(cell.p)?;
                let rejected = (0..outer as u64)
                    .into_par_iter()
                    .map(|r| {
                        let data = cell.alternative.sample_with(cell.n, cell.p, &mut substream(data_seed, r))?;
                        Ok(cell.procedure.pvalue(&data)? <= cell.alpha)
                    })
                    .collect::<Result<Vec<bool>>>()?;
                let rejections = rejected.iter().filter(|&&r| r).count();
                let rate = rejections as f64 / outer as f64;
                Ok(StudyRow {
                    test: cell.test.clone(),
                    alternative: cell.alternative.name().to_string(),
                    n: cell.n,
                    p: cell.p,
                    alpha: cell.alpha,
                    replicates: outer,
                    rejections,
                    rate,
                    std_error: (rate * (1.0 - rate) / outer as f64).sqrt(),
                })
            })
            .collect::<Result<Vec<StudyRow>>>()
    })?
}
