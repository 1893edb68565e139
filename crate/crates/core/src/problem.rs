//! Least-squares problem instances: synthetic spectra and real CSV data.

use std::fmt;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, norm2, DenseMatrix, SpectralSummary};
use crate::rng::{rng_from_seed, Rng};

/// Singular value profile of a synthetic instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    /// Exponential decay.
    Exponential,
    /// Algebraic decay.
    Algebraic,
}

impl Decay {
    pub fn short_name(self) -> &'static str {
        match self {
            Decay::Exponential => "ED",
            Decay::Algebraic => "AD",
        }
    }
}

impl std::str::FromStr for Decay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ed" | "exponential" => Ok(Decay::Exponential),
            "ad" | "algebraic" => Ok(Decay::Algebraic),
            other => Err(Error::Config(format!("unknown decay type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consistency {
    Consistent,
    Inconsistent,
}

impl std::str::FromStr for Consistency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "consistent" => Ok(Consistency::Consistent),
            "inconsistent" => Ok(Consistency::Inconsistent),
            other => Err(Error::Config(format!("unknown consistency '{other}'"))),
        }
    }
}

/// Default radius of the right-hand-side perturbation for inconsistent instances.
pub const DEFAULT_NOISE_RADIUS: f64 = 1e-3;

/// Parameters of a synthetic instance with prescribed Gram spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub decay: Decay,
    /// Condition number of `AᵀA`.
    pub kappa: f64,
    /// Decay rate.
    pub q: f64,
    /// Smallest eigenvalue of `AᵀA`.
    pub lambda_d: f64,
    pub n: usize,
    pub d: usize,
    pub consistency: Consistency,
    /// Radius of the perturbation sphere (inconsistent instances only).
    pub noise_radius: f64,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn new(decay: Decay, kappa: f64, q: f64, n: usize, d: usize, seed: u64) -> Self {
        ProblemSpec {
            decay,
            kappa,
            q,
            lambda_d: 1.0,
            n,
            d,
            consistency: Consistency::Consistent,
            noise_radius: DEFAULT_NOISE_RADIUS,
            seed,
        }
    }

    pub fn inconsistent(mut self, noise_radius: f64) -> Self {
        self.consistency = Consistency::Inconsistent;
        self.noise_radius = noise_radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Domain(format!(
                "d = {} but at least 2 columns are required",
                self.d
            )));
        }
        if self.n < self.d {
            return Err(Error::Domain(format!("n = {} is smaller than d = {}", self.n, self.d)));
        }
        if !(self.kappa > 1.0 && self.kappa.is_finite()) {
            return Err(Error::Domain(format!("condition number {} must exceed 1", self.kappa)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::Domain(format!("decay rate {} must be positive", self.q)));
        }
        if self.decay == Decay::Exponential && self.q > 1.0 {
            // q > 1 would push interior values above s₁² and break the prescribed κ
            return Err(Error::Domain(format!(
                "exponential decay rate {} must not exceed 1",
                self.q
            )));
        }
        if !(self.lambda_d > 0.0 && self.lambda_d.is_finite()) {
            return Err(Error::Domain(format!("lambda_d {} must be positive", self.lambda_d)));
        }
        if !(self.noise_radius >= 0.0 && self.noise_radius.is_finite()) {
            return Err(Error::Domain(format!(
                "noise radius {} must be non-negative",
                self.noise_radius
            )));
        }
        Ok(())
    }

    /// Label in the `(ED, 20, 0.7)` style.
    pub fn label(&self) -> String {
        format!("({}, {}, {})", self.decay.short_name(), self.kappa, self.q)
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} n={} d={}", self.label(), self.n, self.d)
    }
}

/// A least-squares instance `min ½‖Ax − b‖²` with its known minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct LlspInstance {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub x_star: Vec<f64>,
    /// `A x* − b`, one entry per row.
    pub r_star: Vec<f64>,
    pub spectral: SpectralSummary,
    pub is_consistent: bool,
    pub label: String,
    /// Free-form provenance, written to instance files.
    pub metadata: Vec<(String, String)>,
}

/// Residual threshold that separates consistent from inconsistent instances.
pub const CONSISTENCY_TOL: f64 = 1e-8;

impl LlspInstance {
    /// Assembles an instance, computing `r*` and the spectral summary.
    pub fn new(a: DenseMatrix, b: Vec<f64>, x_star: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if b.len() != a.rows() || x_star.len() != a.cols() {
            return Err(Error::Config(format!(
                "instance dimensions disagree: A is {}x{}, b has {}, x* has {}",
                a.rows(),
                a.cols(),
                b.len(),
                x_star.len()
            )));
        }
        let mut r_star = a.matvec(&x_star);
        for (r, bi) in r_star.iter_mut().zip(&b) {
            *r -= bi;
        }
        let is_consistent = norm2(&r_star) <= CONSISTENCY_TOL * norm2(&b);
        let spectral = linalg::spectral_summary(&a)?;
        Ok(LlspInstance {
            a,
            b,
            x_star,
            r_star,
            spectral,
            is_consistent,
            label: label.into(),
            metadata: Vec::new(),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.a.cols()
    }

    /// Checks the optimality invariant matching the consistency flag.
    pub fn check_invariants(&self) -> Result<()> {
        if self.is_consistent {
            let res = norm2(&self.r_star);
            if res > CONSISTENCY_TOL * norm2(&self.b) {
                return Err(Error::Numerical(format!("consistent instance has residual {res:e}")));
            }
        } else {
            let grad = norm2(&self.a.t_matvec(&self.r_star));
            let scale = norm2(&self.a.t_matvec(&self.b));
            if grad > linalg::NORMAL_SOLVE_TOL * scale {
                return Err(Error::Numerical(format!(
                    "x* violates the normal equations: ‖Aᵀr*‖ = {grad:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Prescribed singular values `s₁ ≥ … ≥ s_d` of `A`.
pub fn decay_singular_values(spec: &ProblemSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let d = spec.d;
    let span = spec.lambda_d * (spec.kappa - 1.0);
    let values = (1..=d)
        .map(|j| {
            let frac = (d - j) as f64 / (d - 1) as f64;
            let sq = match spec.decay {
                Decay::Exponential => spec.lambda_d + frac * span * spec.q.powi(j as i32 - 1),
                Decay::Algebraic => spec.lambda_d + frac.powf(spec.q) * span,
            };
            sq.sqrt()
        })
        .collect();
    Ok(values)
}

/// Haar-distributed `n x d` matrix with orthonormal columns.
///
/// Thin QR of a Gaussian matrix by Gram-Schmidt with re-orthogonalization; the
/// diagonal of R is positive by construction.
pub fn random_orthonormal(n: usize, d: usize, rng: &mut Rng) -> Result<DenseMatrix> {
    if n < d {
        return Err(Error::Domain(format!(
            "cannot fit {d} orthonormal columns in dimension {n}"
        )));
    }
    for _attempt in 0..2 {
        if let Some(q) = try_orthonormal(n, d, rng) {
            return Ok(q);
        }
    }
    Err(Error::Numerical("random matrix was rank deficient twice".into()))
}

fn try_orthonormal(n: usize, d: usize, rng: &mut Rng) -> Option<DenseMatrix> {
    // column-major working copy
    let mut cols: Vec<Vec<f64>> = vec![vec![0.0; n]; d];
    for i in 0..n {
        for col in cols.iter_mut() {
            col[i] = rng.sample(StandardNormal);
        }
    }
    for j in 0..d {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        let original = norm2(v);
        for _pass in 0..2 {
            for q in done.iter() {
                let r = linalg::dot(q, v);
                linalg::axpy(-r, q, v);
            }
        }
        let norm = norm2(v);
        if !(norm > 1e-10 * original) {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Some(DenseMatrix::from_fn(n, d, |i, j| cols[j][i]))
}

/// Builds `A = U Σ Vᵀ` with Haar `U`, `V` and the prescribed spectrum, plus `b` and `x*`.
pub fn assemble_instance(spec: &ProblemSpec, rng: &mut Rng) -> Result<LlspInstance> {
    let s = decay_singular_values(spec)?;
    let (n, d) = (spec.n, spec.d);
    let u = random_orthonormal(n, d, rng)?;
    let v = random_orthonormal(d, d, rng)?;
    let sigma_vt = DenseMatrix::from_fn(d, d, |i, j| s[i] * v.get(j, i));
    let a = u.matmul(&sigma_vt);

    let mut instance = match spec.consistency {
        Consistency::Consistent => {
            let x_star: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let b = a.matvec(&x_star);
            LlspInstance::new(a, b, x_star, spec.label())?
        }
        Consistency::Inconsistent => {
            let x_tilde: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let g_norm = norm2(&g);
            let mut b = a.matvec(&x_tilde);
            for (bi, gi) in b.iter_mut().zip(&g) {
                *bi += spec.noise_radius * gi / g_norm;
            }
            let x_star = linalg::normal_solve(&a, &b)?;
            LlspInstance::new(a, b, x_star, spec.label())?
        }
    };
    instance.metadata = vec![
        ("decay".into(), spec.decay.short_name().into()),
        ("kappa".into(), spec.kappa.to_string()),
        ("q".into(), spec.q.to_string()),
        ("lambda_d".into(), spec.lambda_d.to_string()),
        (
            "consistency".into(),
            match spec.consistency {
                Consistency::Consistent => "consistent".into(),
                Consistency::Inconsistent => "inconsistent".into(),
            },
        ),
        ("noise_radius".into(), spec.noise_radius.to_string()),
        ("seed".into(), spec.seed.to_string()),
    ];
    Ok(instance)
}

/// Generates the instance determined by `spec.seed`.
pub fn generate_instance(spec: &ProblemSpec) -> Result<LlspInstance> {
    assemble_instance(spec, &mut rng_from_seed(spec.seed))
}

/// Standardized regression data loaded from a table.
#[derive(Debug, Clone)]
pub struct StandardizedData {
    pub instance: LlspInstance,
    /// Original (0-based) column indices dropped for zero variance.
    pub dropped_columns: Vec<usize>,
}

/// Reads a numeric CSV and standardizes it into an inconsistent instance.
pub fn load_csv_standardized(path: impl AsRef<Path>, target_column: usize) -> Result<LlspInstance> {
    Ok(load_csv_table(path, target_column)?.instance)
}

/// Like [`load_csv_standardized`] but also reports dropped columns.
pub fn load_csv_table(path: impl AsRef<Path>, target_column: usize) -> Result<StandardizedData> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = read_numeric_csv(file)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    let mut data = standardize(&rows, target_column, label)?;
    data.instance
        .metadata
        .push(("source".into(), path.display().to_string()));
    Ok(data)
}

/// Parses comma-separated numeric rows; a first line that does not parse is a header.
pub fn read_numeric_csv<R: std::io::Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (idx, record) in csv.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row: line,
            column: 0,
            message: e.to_string(),
        })?;
        let parsed: std::result::Result<Vec<f64>, (usize, String)> = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or((c + 1, cell.to_string()))
            })
            .collect();
        match parsed {
            Ok(values) => rows.push(values),
            Err(_) if idx == 0 => {}
            Err((column, cell)) => {
                return Err(Error::Parse {
                    row: line,
                    column,
                    message: format!("'{cell}' is not a finite number"),
                })
            }
        }
    }
    Ok(rows)
}

/// Standardizes feature columns to zero mean and unit sample deviation and
/// mean-centers the target; `x*` is the least-squares solution.
pub fn standardize(rows: &[Vec<f64>], target_column: usize, label: impl Into<String>) -> Result<StandardizedData> {
    let width = rows.first().map_or(0, Vec::len);
    if target_column >= width {
        return Err(Error::Config(format!(
            "target column {target_column} out of range for {width} columns"
        )));
    }
    let features = width - 1;
    if rows.len() < features + 1 {
        return Err(Error::Domain(format!(
            "{} rows are too few for {features} features",
            rows.len()
        )));
    }
    let n = rows.len();
    let mean = |c: usize| rows.iter().map(|r| r[c]).sum::<f64>() / n as f64;
    let std = |c: usize, m: f64| (rows.iter().map(|r| (r[c] - m) * (r[c] - m)).sum::<f64>() / (n - 1) as f64).sqrt();

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for c in (0..width).filter(|&c| c != target_column) {
        let m = mean(c);
        let s = std(c, m);
        if s > 0.0 {
            kept.push((c, m, s));
        } else {
            log::warn!("dropping zero-variance feature column {c}");
            dropped.push(c);
        }
    }
    if kept.is_empty() {
        return Err(Error::Domain("no feature column has positive variance".into()));
    }
    let d = kept.len();
    let a = DenseMatrix::from_fn(n, d, |i, j| {
        let (c, m, s) = kept[j];
        (rows[i][c] - m) / s
    });
    let target_mean = mean(target_column);
    let b: Vec<f64> = rows.iter().map(|r| r[target_column] - target_mean).collect();
    let x_star = linalg::normal_solve(&a, &b)?;
    let mut instance = LlspInstance::new(a, b, x_star, label)?;
    instance.is_consistent = false;
    instance.metadata = vec![
        ("consistency".into(), "inconsistent".into()),
        ("target_column".into(), target_column.to_string()),
    ];
    Ok(StandardizedData {
        instance,
        dropped_columns: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(decay: Decay, kappa: f64, q: f64, d: usize) -> ProblemSpec {
        ProblemSpec::new(decay, kappa, q, 4 * d, d, 7)
    }

    #[test]
    fn decay_boundaries_are_forced() {
        for d in [2, 5, 50] {
            let ed = decay_singular_values(&spec(Decay::Exponential, 20.0, 0.7, d)).unwrap();
            assert!((ed[0] * ed[0] - 20.0).abs() < 1e-12);
            assert!((ed[d - 1] * ed[d - 1] - 1.0).abs() < 1e-12);
            let ad = decay_singular_values(&spec(Decay::Algebraic, 50.0, 2.0, d)).unwrap();
            assert!((ad[0] * ad[0] - 50.0).abs() < 1e-12);
            assert!((ad[d - 1] * ad[d - 1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_interior_value() {
        let s = decay_singular_values(&spec(Decay::Exponential, 20.0, 0.2, 100)).unwrap();
        let expected = 1.0 + (98.0 / 99.0) * 19.0 * 0.2;
        assert!((s[1] * s[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn decay_rejects_bad_specs() {
        assert!(decay_singular_values(&spec(Decay::Algebraic, 20.0, 1.0, 1)).is_err());
        assert!(decay_singular_values(&spec(Decay::Algebraic, 1.0, 1.0, 4)).is_err());
        assert!(decay_singular_values(&spec(Decay::Exponential, 20.0, 1.5, 4)).is_err());
        let mut s = spec(Decay::Algebraic, 20.0, 1.0, 4);
        s.n = 3;
        assert!(decay_singular_values(&s).is_err());
    }

    #[test]
    fn orthonormal_1x1_is_unit() {
        let mut rng = rng_from_seed(3);
        for _ in 0..10 {
            let q = random_orthonormal(1, 1, &mut rng).unwrap();
            assert_eq!(q.get(0, 0).abs(), 1.0);
        }
    }

    #[test]
    fn orthonormal_columns() {
        let mut rng = rng_from_seed(11);
        let q = random_orthonormal(200, 30, &mut rng).unwrap();
        let g = linalg::gram(&q).unwrap();
        let err: f64 = (0..30)
            .flat_map(|i| (0..30).map(move |j| (i, j)))
            .map(|(i, j)| {
                let e = g.get(i, j) - if i == j { 1.0 } else { 0.0 };
                e * e
            })
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn consistent_instance_properties() {
        let spec = ProblemSpec::new(Decay::Exponential, 20.0, 0.7, 300, 10, 5);
        let inst = generate_instance(&spec).unwrap();
        assert!(inst.is_consistent);
        inst.check_invariants().unwrap();
        let kappa = inst.spectral.condition_number();
        assert!((kappa - 20.0).abs() / 20.0 < 1e-6, "{kappa}");
        assert!((inst.spectral.lambda_min - 1.0).abs() < 1e-6);
        let rel = norm2(&inst.r_star) / norm2(&inst.b);
        assert!(rel <= 1e-10);
    }

    #[test]
    fn inconsistent_instance_properties() {
        let spec = ProblemSpec::new(Decay::Algebraic, 20.0, 1.0, 300, 10, 5).inconsistent(1e-3);
        let inst = generate_instance(&spec).unwrap();
        assert!(!inst.is_consistent);
        inst.check_invariants().unwrap();
        let r = norm2(&inst.r_star);
        assert!(r > 0.0 && r <= 1e-3 * (1.0 + 1e-9), "{r}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ProblemSpec::new(Decay::Algebraic, 50.0, 2.0, 100, 6, 99);
        let a = generate_instance(&spec).unwrap();
        let b = generate_instance(&spec).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.a.data()), bits(b.a.data()));
        assert_eq!(bits(&a.b), bits(&b.b));
        assert_eq!(bits(&a.x_star), bits(&b.x_star));
    }

    #[test]
    fn standardize_toy_and_constant_column() {
        let rows = vec![vec![1.0, 5.0, 10.0], vec![2.0, 5.0, 12.0], vec![3.0, 5.0, 17.0]];
        let data = standardize(&rows, 2, "toy").unwrap();
        assert_eq!(data.dropped_columns, vec![1]);
        let a = &data.instance.a;
        assert_eq!(a.cols(), 1);
        assert_eq!((a.get(0, 0), a.get(1, 0), a.get(2, 0)), (-1.0, 0.0, 1.0));
        assert_eq!(data.instance.b, vec![-3.0, -1.0, 4.0]);
        assert!(!data.instance.is_consistent);
    }

    #[test]
    fn standardize_moments() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64;
                vec![
                    t.sin() * 3.0 + 1.0,
                    (t * 0.37).cos() * 100.0,
                    t * t * 0.01,
                    2.0 * t - 5.0 + t.sin(),
                ]
            })
            .collect();
        let data = standardize(&rows, 3, "moments").unwrap();
        let a = &data.instance.a;
        for c in 0..a.cols() {
            let col: Vec<f64> = (0..a.rows()).map(|i| a.get(i, c)).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (col.len() - 1) as f64).sqrt();
            assert!(m.abs() <= 1e-10, "mean {m}");
            assert!((s - 1.0).abs() <= 1e-10, "std {s}");
        }
        data.instance.check_invariants().unwrap();
    }

    #[test]
    fn csv_header_and_parse_errors() {
        let text = "x1,x2,y\n1,2,3\n2,1,4\n0,0,1\n4,1,0\n";
        let rows = read_numeric_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 4);
        let bad = "1,2,3\n4,oops,6\n";
        match read_numeric_csv(bad.as_bytes()) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_too_few_rows() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 1.0]];
        assert!(matches!(standardize(&rows, 2, "x"), Err(Error::Domain(_))));
    }
}
