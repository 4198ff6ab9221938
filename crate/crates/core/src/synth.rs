//! Representations drawn from independent per-dimension normal laws, with
//! parameters either sampled from uniform hyper-priors or fitted to a corpus.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ReprMatrix;
use crate::property::{property_cosine, summarize, BatchSummary, PcaConvention};
use crate::rng::{tag, CounterRng, SeedStream};

/// Per-dimension `N(μ_j, σ_j²)` parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct NormalSpec {
    d: usize,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSpec {
    d: usize,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl TryFrom<RawSpec> for NormalSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        if raw.mu.len() != raw.d {
            return Err(Error::InvalidSpec(format!(
                "d = {} but mu has {} entries",
                raw.d,
                raw.mu.len()
            )));
        }
        NormalSpec::new(raw.mu, raw.sigma)
    }
}

impl NormalSpec {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::InvalidSpec(format!(
                "mu has {} entries, sigma has {}",
                mu.len(),
                sigma.len()
            )));
        }
        if mu.is_empty() {
            return Err(Error::InvalidSpec("d must be at least 1".into()));
        }
        if mu.iter().chain(&sigma).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("non-finite parameter".into()));
        }
        if let Some(j) = sigma.iter().position(|&s| s < 0.0) {
            return Err(Error::InvalidSpec(format!("sigma[{j}] is negative")));
        }
        if sigma.iter().all(|&s| s == 0.0) {
            return Err(Error::InvalidSpec(
                "every sigma is zero: the representations would be deterministic".into(),
            ));
        }
        Ok(Self {
            d: mu.len(),
            mu,
            sigma,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Both parameter vectors multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.mu.iter().map(|m| m * c).collect(),
            self.sigma.iter().map(|s| s * c).collect(),
        )
    }
}

/// Uniform ranges for `μ_j` and `σ_j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub mu_range: (f64, f64),
    pub sigma_range: (f64, f64),
}

impl HyperPrior {
    pub fn new(mu_range: (f64, f64), sigma_range: (f64, f64)) -> Result<Self> {
        let ok = mu_range.0 <= mu_range.1
            && sigma_range.0 <= sigma_range.1
            && sigma_range.0 >= 0.0
            && [mu_range.0, mu_range.1, sigma_range.0, sigma_range.1]
                .iter()
                .all(|x| x.is_finite());
        if !ok {
            return Err(Error::ConfigInvalid(format!(
                "invalid hyper-prior mu {mu_range:?}, sigma {sigma_range:?}"
            )));
        }
        Ok(Self {
            mu_range,
            sigma_range,
        })
    }

    /// The four parameter priors of the normal-model property table.
    pub fn table4() -> [HyperPrior; 4] {
        [
            HyperPrior {
                mu_range: (-1.0, 1.0),
                sigma_range: (0.0, 1.0),
            },
            HyperPrior {
                mu_range: (-1.0, 1.0),
                sigma_range: (0.0, 10.0),
            },
            HyperPrior {
                mu_range: (3.0, 5.0),
                sigma_range: (0.0, 1.0),
            },
            HyperPrior {
                mu_range: (0.0, 0.0),
                sigma_range: (0.0, 1.0),
            },
        ]
    }
}

fn range_label(name: &str, (lo, hi): (f64, f64)) -> String {
    if lo == hi {
        format!("{name}={lo}")
    } else {
        format!("{name}~U[{lo},{hi}]")
    }
}

impl fmt::Display for HyperPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}",
            range_label("mu", self.mu_range),
            range_label("sigma", self.sigma_range)
        )
    }
}

/// How many tokens each synthetic matrix has.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthLaw {
    Fixed(usize),
    Uniform {
        min: usize,
        max: usize,
    },
    /// Test `t` uses `lengths[t % lengths.len()]` (e.g. the sentence lengths
    /// of an ingested corpus).
    Cycle(Vec<usize>),
}

impl LengthLaw {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            LengthLaw::Fixed(l) => *l >= 2,
            LengthLaw::Uniform { min, max } => *min >= 2 && min <= max,
            LengthLaw::Cycle(ls) => !ls.is_empty() && ls.iter().all(|&l| l >= 2),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!(
                "invalid length law {self:?}: need L >= 2"
            )))
        }
    }

    pub fn draw(&self, test: usize, rng: &mut CounterRng) -> usize {
        match self {
            LengthLaw::Fixed(l) => *l,
            LengthLaw::Uniform { min, max } => rng.range_inclusive(*min, *max),
            LengthLaw::Cycle(ls) => ls[test % ls.len()],
        }
    }
}

impl fmt::Display for LengthLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LengthLaw::Fixed(l) => write!(f, "L={l}"),
            LengthLaw::Uniform { min, max } => write!(f, "L~U{{{min}..{max}}}"),
            LengthLaw::Cycle(ls) => write!(f, "L from {} corpus lengths", ls.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub d: usize,
    pub length_law: LengthLaw,
    pub n_tests: usize,
    pub zero_sum: bool,
    pub seed: u64,
    /// Draw a fresh parameter set for every test rather than one per prior.
    pub resample_spec_per_test: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 768,
            length_law: LengthLaw::Uniform { min: 8, max: 64 },
            n_tests: 4000,
            zero_sum: false,
            seed: 0,
            resample_spec_per_test: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::ConfigInvalid(format!(
                "d must be >= 2, got {}",
                self.d
            )));
        }
        if self.n_tests == 0 {
            return Err(Error::ConfigInvalid("n_tests must be >= 1".into()));
        }
        self.length_law.validate()
    }
}

/// `d` independent uniform draws for each parameter.
pub fn sample_spec(prior: &HyperPrior, d: usize, rng: &mut CounterRng) -> Result<NormalSpec> {
    let mu = (0..d)
        .map(|_| rng.uniform(prior.mu_range.0, prior.mu_range.1))
        .collect();
    let sigma = (0..d)
        .map(|_| rng.uniform(prior.sigma_range.0, prior.sigma_range.1))
        .collect();
    NormalSpec::new(mu, sigma)
}

/// Per-dimension mean and population standard deviation over every column
/// of the corpus.
pub fn fit_spec(corpus: &[ReprMatrix]) -> Result<NormalSpec> {
    let d = corpus.first().ok_or(Error::EmptyCorpus)?.d();
    let mut count = 0usize;
    let mut sum = vec![0.0; d];
    for (idx, m) in corpus.iter().enumerate() {
        if m.d() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.d(),
                context: Some(format!("matrix {idx}")),
            });
        }
        for col in m.columns() {
            sum.iter_mut().zip(col).for_each(|(s, x)| *s += x);
            count += 1;
        }
    }
    if count < 2 {
        return Err(Error::InsufficientData(format!("{count} representations")));
    }
    let mu: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut ss = vec![0.0; d];
    for m in corpus {
        for col in m.columns() {
            for ((s, x), m) in ss.iter_mut().zip(col).zip(&mu) {
                *s += (x - m) * (x - m);
            }
        }
    }
    let sigma = ss.iter().map(|s| (s / count as f64).sqrt()).collect();
    NormalSpec::new(mu, sigma)
}

/// `r_ji = μ_j + σ_j z`, filled column by column. With `zero_sum`, every
/// column is then shifted by its own mean so its entries sum to zero.
pub fn sample_matrix(
    spec: &NormalSpec,
    l: usize,
    rng: &mut CounterRng,
    zero_sum: bool,
) -> Result<ReprMatrix> {
    let d = spec.d();
    let mut data = Vec::with_capacity(d * l);
    for _ in 0..l {
        for (m, s) in spec.mu.iter().zip(&spec.sigma) {
            data.push(m + s * rng.normal());
        }
    }
    let r = ReprMatrix::from_column_major(d, l, data)?;
    Ok(if zero_sum { r.column_centered() } else { r })
}

fn test_stream(root: &SeedStream, group: u64, test: usize) -> SeedStream {
    root.split(group).split(test as u64)
}

/// Property batch for one hyper-prior: per test, a parameter set (fresh or
/// shared), a length and a matrix, each from its own sub-stream.
pub fn run_prior(
    config: &SynthConfig,
    prior: &HyperPrior,
    group: u64,
    conv: PcaConvention,
) -> Result<BatchSummary> {
    config.validate()?;
    let root = SeedStream::new(config.seed);
    let shared = if config.resample_spec_per_test {
        None
    } else {
        Some(sample_spec(
            prior,
            config.d,
            &mut root.split(group).split(tag::SPEC).rng(),
        )?)
    };
    let results: Vec<_> = (0..config.n_tests)
        .into_par_iter()
        .map(|t| {
            let stream = test_stream(&root, group, t);
            let fresh;
            let spec = match &shared {
                Some(s) => s,
                None => {
                    fresh = sample_spec(prior, config.d, &mut stream.split(tag::SPEC).rng())?;
                    &fresh
                }
            };
            let l = config
                .length_law
                .draw(t, &mut stream.split(tag::LENGTH).rng());
            let r = sample_matrix(
                spec,
                l,
                &mut stream.split(tag::MATRIX).rng(),
                config.zero_sum,
            )?;
            property_cosine(&r, conv)
        })
        .collect();
    summarize(prior.to_string(), results, true)
}

/// One batch summary per prior.
pub fn run_table4(
    config: &SynthConfig,
    priors: &[HyperPrior],
    conv: PcaConvention,
) -> Result<Vec<BatchSummary>> {
    priors
        .iter()
        .enumerate()
        .map(|(i, p)| run_prior(config, p, i as u64, conv))
        .collect()
}

/// Property batch for matrices drawn from one fixed parameter set.
pub fn run_fixed_spec(
    spec: &NormalSpec,
    config: &SynthConfig,
    conv: PcaConvention,
    scenario: impl Into<String>,
) -> Result<BatchSummary> {
    config.validate()?;
    let root = SeedStream::new(config.seed);
    let results: Vec<_> = (0..config.n_tests)
        .into_par_iter()
        .map(|t| {
            let stream = test_stream(&root, 0, t);
            let l = config
                .length_law
                .draw(t, &mut stream.split(tag::LENGTH).rng());
            let r = sample_matrix(
                spec,
                l,
                &mut stream.split(tag::MATRIX).rng(),
                config.zero_sum,
            )?;
            property_cosine(&r, conv)
        })
        .collect();
    summarize(scenario, results, true)
}

/// `d × L` matrix of i.i.d. uniform `[lo, hi]` entries.
pub fn sample_uniform_matrix(
    d: usize,
    l: usize,
    lo: f64,
    hi: f64,
    rng: &mut CounterRng,
) -> Result<ReprMatrix> {
    let data = (0..d * l).map(|_| rng.uniform(lo, hi)).collect();
    ReprMatrix::from_column_major(d, l, data)
}

/// Property batch for i.i.d. uniform matrices, the no-structure baseline.
pub fn run_uniform_baseline(
    config: &SynthConfig,
    range: (f64, f64),
    conv: PcaConvention,
) -> Result<BatchSummary> {
    config.validate()?;
    if !(range.0 < range.1 && range.0.is_finite() && range.1.is_finite()) {
        return Err(Error::ConfigInvalid(format!(
            "invalid uniform range {range:?}"
        )));
    }
    let root = SeedStream::new(config.seed);
    let results: Vec<_> = (0..config.n_tests)
        .into_par_iter()
        .map(|t| {
            let stream = test_stream(&root, 0, t);
            let l = config
                .length_law
                .draw(t, &mut stream.split(tag::LENGTH).rng());
            let r = sample_uniform_matrix(
                config.d,
                l,
                range.0,
                range.1,
                &mut stream.split(tag::MATRIX).rng(),
            )?;
            property_cosine(&r, conv)
        })
        .collect();
    summarize(format!("uniform[{}, {}]", range.0, range.1), results, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub d: usize,
    pub length_law: LengthLaw,
    pub summaries: Vec<BatchSummary>,
}

/// Re-runs the prior table across alternative `(d, length law)` choices.
pub fn table4_sensitivity(
    base: &SynthConfig,
    priors: &[HyperPrior],
    conv: PcaConvention,
    grid: &[(usize, LengthLaw)],
) -> Result<Vec<SensitivityRow>> {
    grid.iter()
        .map(|(d, law)| {
            let config = SynthConfig {
                d: *d,
                length_law: law.clone(),
                ..base.clone()
            };
            Ok(SensitivityRow {
                d: *d,
                length_law: law.clone(),
                summaries: run_table4(&config, priors, conv)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_generator;
    use crate::stats::{moments, standardize, DimensionSample};

    #[test]
    fn degenerate_prior_ranges() {
        let prior = HyperPrior::new((0.0, 0.0), (1.0, 1.0)).unwrap();
        let spec = sample_spec(&prior, 5, &mut seeded_generator(1, 0)).unwrap();
        assert_eq!(spec.mu(), &[0.0; 5]);
        assert_eq!(spec.sigma(), &[1.0; 5]);
    }

    #[test]
    fn spec_sampling_is_deterministic() {
        let prior = HyperPrior::table4()[0];
        let a = sample_spec(&prior, 50, &mut seeded_generator(9, 1)).unwrap();
        let b = sample_spec(&prior, 50, &mut seeded_generator(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_mu_centres_on_prior_mean() {
        let prior = HyperPrior::table4()[0];
        let spec = sample_spec(&prior, 768, &mut seeded_generator(3, 3)).unwrap();
        let m = spec.mu().iter().sum::<f64>() / 768.0;
        assert!(m.abs() < 0.05, "{m}");
    }

    #[test]
    fn invalid_specs() {
        assert!(NormalSpec::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(NormalSpec::new(vec![0.0], vec![-1.0]).is_err());
        assert!(NormalSpec::new(vec![0.0], vec![1.0, 1.0]).is_err());
        assert!(HyperPrior::new((1.0, 0.0), (0.0, 1.0)).is_err());
        assert!(HyperPrior::new((0.0, 1.0), (-1.0, 1.0)).is_err());
        let json = r#"{"d": 3, "mu": [0, 0], "sigma": [1, 1]}"#;
        assert!(serde_json::from_str::<NormalSpec>(json).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = NormalSpec::new(vec![0.1, -0.25], vec![1.0, 0.5]).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"d":2,"mu":[0.1,-0.25],"sigma":[1.0,0.5]}"#);
        assert_eq!(serde_json::from_str::<NormalSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn zero_sigma_rows_are_constant() {
        let spec = NormalSpec::new(vec![2.5, 0.0, 1.0], vec![0.0, 1.0, 1.0]).unwrap();
        let r = sample_matrix(&spec, 10, &mut seeded_generator(4, 0), false).unwrap();
        assert!(r.row(0).iter().all(|&x| x == 2.5));
    }

    #[test]
    fn zero_sum_columns() {
        let spec = sample_spec(&HyperPrior::table4()[2], 40, &mut seeded_generator(5, 0)).unwrap();
        let r = sample_matrix(&spec, 12, &mut seeded_generator(5, 1), true).unwrap();
        for c in r.columns() {
            assert!(c.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn standard_spec_moments_look_normal() {
        let spec = NormalSpec::new(vec![0.0; 768], vec![1.0; 768]).unwrap();
        let r = sample_matrix(&spec, 50, &mut seeded_generator(6, 0), false).unwrap();
        for j in (0..768).step_by(97) {
            let (z, _, _) = standardize(&DimensionSample::new(j, r.row(j)).unwrap()).unwrap();
            let m = moments(&z).unwrap();
            assert!(
                m.skewness.abs() < 0.6 && (m.kurtosis - 3.0).abs() < 1.0,
                "{j}: {m:?}"
            );
        }
    }

    #[test]
    fn fit_recovers_generating_spec() {
        let truth = sample_spec(&HyperPrior::table4()[0], 8, &mut seeded_generator(7, 0)).unwrap();
        let corpus: Vec<ReprMatrix> = (0..200)
            .map(|i| sample_matrix(&truth, 250, &mut seeded_generator(7, 100 + i), false).unwrap())
            .collect();
        let fit = fit_spec(&corpus).unwrap();
        for j in 0..8 {
            assert!((fit.mu()[j] - truth.mu()[j]).abs() < 0.01);
            assert!((fit.sigma()[j] - truth.sigma()[j]).abs() < 0.01);
        }
    }

    #[test]
    fn fit_rejects_constant_corpus() {
        let r = ReprMatrix::from_columns(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(fit_spec(&[r]), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn table4_is_deterministic_and_scale_equivariant() {
        let config = SynthConfig {
            d: 64,
            n_tests: 40,
            seed: 11,
            ..SynthConfig::default()
        };
        let priors = &HyperPrior::table4()[..2];
        let a = run_table4(&config, priors, PcaConvention::DimensionCentered).unwrap();
        let b = run_table4(&config, priors, PcaConvention::DimensionCentered).unwrap();
        assert_eq!(a, b);

        let spec = sample_spec(&priors[0], 64, &mut seeded_generator(2, 2)).unwrap();
        let x = run_fixed_spec(&spec, &config, PcaConvention::DimensionCentered, "x").unwrap();
        let y = run_fixed_spec(
            &spec.scaled(3.0).unwrap(),
            &config,
            PcaConvention::DimensionCentered,
            "x",
        )
        .unwrap();
        assert!((x.average - y.average).abs() < 1e-9);
        assert!((x.min - y.min).abs() < 1e-9);
    }
}
