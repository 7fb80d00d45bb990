//! Directional samples: validation, angle/vector views, ordering, spacings,
//! and plain-text ingestion/emission.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `n` unit vectors in `R^p`, stored row-major.
///
/// Angles (for `p = 2`) are always derived from the vector view.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalSample<T> {
    coords: Vec<T>,
    n: usize,
    dim: usize,
}

impl<T: Scalar> DirectionalSample<T> {
    /// Build from row vectors that must already have unit norm.
    pub fn from_vectors(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::from_rows(rows, None)
    }

    /// Build from row vectors, rescaling rows whose norm lies within `band` of 1.
    pub fn from_vectors_renormalized(rows: Vec<Vec<T>>, band: T) -> Result<Self> {
        Self::from_rows(rows, Some(band))
    }

    fn from_rows(rows: Vec<Vec<T>>, band: Option<T>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let dim = rows[0].len();
        if dim < 2 {
            return Err(Error::Dimension(dim));
        }
        let mut coords = Vec::with_capacity(n * dim);
        for (row, v) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InconsistentWidth {
                    line: row + 1,
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("row {}", row + 1)));
            }
            let norm = v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
            if norm == T::zero() {
                return Err(Error::ZeroNorm { row: row + 1 });
            }
            let tol = band.unwrap_or_else(T::unit_tolerance);
            if (norm - T::one()).abs() > tol {
                return Err(Error::NotUnit {
                    row: row + 1,
                    norm: norm.as_f64(),
                    tolerance: tol.as_f64(),
                });
            }
            if band.is_some() {
                coords.extend(v.iter().map(|&x| x / norm));
            } else {
                coords.extend(v);
            }
        }
        Ok(Self { coords, n, dim })
    }

    /// Circular sample from angles in radians; angles are reduced mod 2π.
    pub fn from_angles(angles: &[T]) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut coords = Vec::with_capacity(2 * angles.len());
        for (i, &a) in angles.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("angle {}", i + 1)));
            }
            let a = reduce_angle(a);
            coords.push(a.cos());
            coords.push(a.sin());
        }
        Ok(Self {
            coords,
            n: angles.len(),
            dim: 2,
        })
    }

    /// Trusted constructor for freshly normalised sampler output.
    pub(crate) fn from_flat_unchecked(coords: Vec<T>, dim: usize) -> Self {
        debug_assert!(dim >= 2 && !coords.is_empty() && coords.len() % dim == 0);
        let n = coords.len() / dim;
        Self { coords, n, dim }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, T> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.coords
    }

    /// Angle view in `[0, 2π)`; only defined for circular data.
    pub fn angles(&self) -> Result<Vec<T>> {
        if self.dim != 2 {
            return Err(Error::needs_circle("angle view", self.dim));
        }
        Ok(self
            .points()
            .map(|u| {
                let a = u[1].atan2(u[0]);
                reduce_angle(a)
            })
            .collect())
    }

    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim];
        for u in self.points() {
            for (acc, &x) in m.iter_mut().zip(u) {
                *acc = *acc + x;
            }
        }
        let n = T::from_usize_exact(self.n);
        m.iter_mut().for_each(|x| *x = *x / n);
        m
    }

    /// Apply `x -> Q x` to every observation (`q` is row-major `p × p`).
    pub fn transformed(&self, q: &[T]) -> Self {
        let p = self.dim;
        assert_eq!(q.len(), p * p, "transform must be p x p");
        let mut coords = Vec::with_capacity(self.coords.len());
        for u in self.points() {
            for r in 0..p {
                coords.push(crate::scalar::dot(&q[r * p..(r + 1) * p], u));
            }
        }
        Self {
            coords,
            n: self.n,
            dim: p,
        }
    }

    /// Subset of observations, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        Self {
            coords,
            n: idx.len(),
            dim: self.dim,
        }
    }

    pub fn cast<U: Scalar>(&self) -> DirectionalSample<U> {
        DirectionalSample {
            coords: self.coords.iter().map(|x| U::lit(x.as_f64())).collect(),
            n: self.n,
            dim: self.dim,
        }
    }

    pub fn ordered(&self) -> Result<OrderedCircular<T>> {
        OrderedCircular::new(self)
    }

    pub fn spacings(&self) -> Result<Spacings<T>> {
        spacings(self)
    }
}

/// Reduce an angle into `[0, 2π)`.
pub fn reduce_angle<T: Scalar>(a: T) -> T {
    let two_pi = T::TAU();
    let mut r = a % two_pi;
    if r < T::zero() {
        r = r + two_pi;
    }
    if r >= two_pi {
        r = T::zero();
    }
    r
}

/// Sorted circular angles and their `[0, 1)` normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderedCircular<T> {
    angles: Vec<T>,
    u: Vec<T>,
    u_mean: T,
}

impl<T: Scalar> OrderedCircular<T> {
    pub fn new(sample: &DirectionalSample<T>) -> Result<Self> {
        let mut angles = sample.angles()?;
        Self::sort_angles(&mut angles);
        Ok(Self::from_sorted(angles))
    }

    /// Order raw angles (already in `[0, 2π)`); ties keep their input order.
    pub fn from_angles(angles: &[T]) -> Self {
        let mut angles: Vec<T> = angles.iter().map(|&a| reduce_angle(a)).collect();
        Self::sort_angles(&mut angles);
        Self::from_sorted(angles)
    }

    fn sort_angles(angles: &mut [T]) {
        angles.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    }

    fn from_sorted(angles: Vec<T>) -> Self {
        let two_pi = T::TAU();
        let u: Vec<T> = angles.iter().map(|&a| a / two_pi).collect();
        let n = T::from_usize_exact(u.len().max(1));
        let u_mean = u.iter().fold(T::zero(), |a, &x| a + x) / n;
        Self { angles, u, u_mean }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn angles(&self) -> &[T] {
        &self.angles
    }

    /// `U_i = Θ_(i) / 2π`, nondecreasing in `[0, 1)`.
    pub fn normalized(&self) -> &[T] {
        &self.u
    }

    pub fn mean_normalized(&self) -> T {
        self.u_mean
    }
}

/// Arc gaps between consecutive ordered angles; the last entry wraps around.
#[derive(Clone, Debug, PartialEq)]
pub struct Spacings<T> {
    gaps: Vec<T>,
}

impl<T: Scalar> Spacings<T> {
    pub fn from_ordered(ord: &OrderedCircular<T>) -> Result<Self> {
        let a = ord.angles();
        let n = a.len();
        if n < 2 {
            return Err(Error::too_few("spacings", 2, n));
        }
        let mut gaps = Vec::with_capacity(n);
        for w in a.windows(2) {
            gaps.push(w[1] - w[0]);
        }
        gaps.push(T::TAU() - (a[n - 1] - a[0]));
        Ok(Self { gaps })
    }

    pub fn n(&self) -> usize {
        self.gaps.len()
    }

    pub fn gaps(&self) -> &[T] {
        &self.gaps
    }
}

/// Spacings of a circular sample.
pub fn spacings<T: Scalar>(sample: &DirectionalSample<T>) -> Result<Spacings<T>> {
    if sample.dim() != 2 {
        return Err(Error::needs_circle("spacings", sample.dim()));
    }
    if sample.n() < 2 {
        return Err(Error::too_few("spacings", 2, sample.n()));
    }
    Spacings::from_ordered(&OrderedCircular::new(sample)?)
}

/// On-disk layout of a sample file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    AnglesRad,
    AnglesDeg,
    Vectors,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angles-rad" => Ok(Format::AnglesRad),
            "angles-deg" => Ok(Format::AnglesDeg),
            "vectors" => Ok(Format::Vectors),
            other => Err(Error::InvalidParameter(format!(
                "unknown format {other:?} (expected angles-rad, angles-deg or vectors)"
            ))),
        }
    }
}

/// Ingestion options. `renormalize` rescales rows whose norm is within `band` of 1.
#[derive(Clone, Copy, Debug)]
pub struct IngestOptions {
    pub format: Format,
    pub renormalize: bool,
    pub band: f64,
}

impl IngestOptions {
    pub const DEFAULT_BAND: f64 = 1e-3;

    pub fn new(format: Format) -> Self {
        Self {
            format,
            renormalize: false,
            band: Self::DEFAULT_BAND,
        }
    }
}

pub fn ingest<T: Scalar>(path: impl AsRef<Path>, opts: IngestOptions) -> Result<DirectionalSample<T>> {
    let text = std::fs::read_to_string(path)?;
    parse(&text, opts)
}

/// Parse sample text: comma or whitespace separated, `#` comment lines skipped.
pub fn parse<T: Scalar>(text: &str, opts: IngestOptions) -> Result<DirectionalSample<T>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (col, tok) in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .enumerate()
        {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                column: col + 1,
                token: tok.to_string(),
            })?;
            row.push(v);
        }
        let expected = *width.get_or_insert(row.len());
        if opts.format == Format::Vectors && row.len() != expected {
            return Err(Error::InconsistentWidth {
                line: lineno + 1,
                expected,
                found: row.len(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }

    match opts.format {
        Format::AnglesRad | Format::AnglesDeg => {
            let mut angles = Vec::new();
            for row in &rows {
                for &a in row {
                    let a = if opts.format == Format::AnglesDeg {
                        a * (std::f64::consts::PI / 180.0)
                    } else {
                        a
                    };
                    angles.push(T::lit(a));
                }
            }
            DirectionalSample::from_angles(&angles)
        }
        Format::Vectors => {
            let rows: Vec<Vec<T>> = rows
                .into_iter()
                .map(|r| r.into_iter().map(T::lit).collect())
                .collect();
            if opts.renormalize {
                DirectionalSample::from_vectors_renormalized(rows, T::lit(opts.band))
            } else {
                DirectionalSample::from_vectors(rows)
            }
        }
    }
}

fn push_number(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("writing to a String");
}

/// Render a sample in ingestible text, 17 significant digits per value.
///
/// Circular samples may be written as radians; anything else is written as vectors.
pub fn emit<T: Scalar>(sample: &DirectionalSample<T>, format: Format) -> Result<String> {
    let mut out = String::new();
    match format {
        Format::AnglesRad | Format::AnglesDeg => {
            for a in sample.angles()? {
                let a = a.as_f64();
                let a = if format == Format::AnglesDeg {
                    a * (180.0 / std::f64::consts::PI)
                } else {
                    a
                };
                push_number(&mut out, a);
                out.push('\n');
            }
        }
        Format::Vectors => {
            for u in sample.points() {
                for (j, x) in u.iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    push_number(&mut out, x.as_f64());
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn write_sample<T: Scalar>(
    sample: &DirectionalSample<T>,
    format: Format,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, emit(sample, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn opts(format: Format) -> IngestOptions {
        IngestOptions::new(format)
    }

    #[test]
    fn single_angle_pi() {
        let s: DirectionalSample<f64> = parse("3.141592653589793\n", opts(Format::AnglesRad)).unwrap();
        assert_eq!((s.n(), s.dim()), (1, 2));
        assert!((s.point(0)[0] + 1.0).abs() < 1e-15);
        assert!(s.point(0)[1].abs() < 1e-15);
    }

    #[test]
    fn unit_vector_row_accepted() {
        let s: DirectionalSample<f64> = parse("0.6,0.8\n", opts(Format::Vectors)).unwrap();
        assert_eq!(s.point(0), &[0.6, 0.8]);
    }

    #[test]
    fn renormalization_band() {
        let mut o = opts(Format::Vectors);
        assert!(matches!(
            parse::<f64>("0.60001,0.8\n", o),
            Err(Error::NotUnit { row: 1, .. })
        ));
        o.renormalize = true;
        let s: DirectionalSample<f64> = parse("0.60001,0.8\n", o).unwrap();
        let u = s.point(0);
        assert!(((u[0] * u[0] + u[1] * u[1]).sqrt() - 1.0).abs() < 1e-15);
        assert!(matches!(parse::<f64>("0.7,0.8\n", o), Err(Error::NotUnit { .. })));
    }

    #[test]
    fn ingestion_errors() {
        assert!(matches!(parse::<f64>("# only a comment\n\n", opts(Format::Vectors)), Err(Error::EmptyInput)));
        match parse::<f64>("1,0\n0,x1\n", opts(Format::Vectors)) {
            Err(Error::Parse { line, column, token }) => {
                assert_eq!((line, column, token.as_str()), (2, 2, "x1"))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse::<f64>("0,0\n", opts(Format::Vectors)), Err(Error::ZeroNorm { row: 1 })));
        assert!(matches!(
            parse::<f64>("1,0\n0,0,1\n", opts(Format::Vectors)),
            Err(Error::InconsistentWidth { line: 2, expected: 2, found: 3 })
        ));
    }

    #[test]
    fn degrees_and_whitespace() {
        let s: DirectionalSample<f64> = parse("# comment\n90 180\n270\n", opts(Format::AnglesDeg)).unwrap();
        let a = s.angles().unwrap();
        assert_eq!(s.n(), 3);
        for (x, y) in a.iter().zip([PI / 2.0, PI, 1.5 * PI]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn angles_reduced_and_consistent() {
        let s = DirectionalSample::from_angles(&[-0.5, 7.0, 2.0 * PI]).unwrap();
        let a = s.angles().unwrap();
        for (i, &t) in a.iter().enumerate() {
            assert!((0.0..2.0 * PI).contains(&t));
            assert!((t.cos() - s.point(i)[0]).abs() < 1e-12);
            assert!((t.sin() - s.point(i)[1]).abs() < 1e-12);
        }
        assert!(a[2].abs() < 1e-12 || (a[2] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn spacing_examples() {
        let d = spacings(&DirectionalSample::from_angles(&[0.0, PI]).unwrap()).unwrap();
        assert!(d.gaps().iter().all(|g| (g - PI).abs() < 1e-12));

        let eq: Vec<f64> = (0..4).map(|i| i as f64 * PI / 2.0).collect();
        let d = spacings(&DirectionalSample::from_angles(&eq).unwrap()).unwrap();
        assert!(d.gaps().iter().all(|g| (g - PI / 2.0).abs() < 1e-12));

        let d = spacings(&DirectionalSample::from_angles(&[0.0, PI / 2.0, PI / 2.0]).unwrap()).unwrap();
        let want = [PI / 2.0, 0.0, 1.5 * PI];
        for (g, w) in d.gaps().iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn spacing_errors() {
        let one = DirectionalSample::from_angles(&[1.0]).unwrap();
        assert!(spacings(&one).is_err());
        let sphere = DirectionalSample::from_vectors(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert!(spacings(&sphere).is_err());
    }

    #[test]
    fn single_observation_allowed() {
        let s = DirectionalSample::from_vectors(vec![vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(s.n(), 1);
    }

    #[test]
    fn f32_samples_work() {
        let s: DirectionalSample<f32> = parse("0.6 0.8\n1 0\n", opts(Format::Vectors)).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.cast::<f64>().n(), 2);
    }
}
