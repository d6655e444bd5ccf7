//! Synthetic cohorts with a hidden severity.
//!
//! Each patient gets a latent severity in [0, 1] drawn from Beta(2, 3). A few
//! features are noisy monotone functions of it, some extra features are noisy
//! copies of those, and the rest are pure noise. The rating is the latent on
//! a 0-100 scale plus Gaussian noise, and the binary label thresholds the
//! latent before random flips. The latent never enters the `Cohort` itself.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{write_cohort_csv, Cohort, CohortError};
use crate::matrix::Matrix;
use crate::seed;

const TAG_LATENT: u64 = 21;
const TAG_LINKS: u64 = 22;
const TAG_FEATURES: u64 = 23;
const TAG_RATING: u64 = 24;
const TAG_LABEL: u64 = 25;
const TAG_COLUMNS: u64 = 26;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    pub k_informative: usize,
    /// Standard deviation of the rating noise, in rating units.
    pub rating_noise_std: f64,
    pub feature_noise_std: f64,
    pub prevalence_target: f64,
    pub label_noise_rate: f64,
    pub correlated_extras: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n: 391,
            m: 30,
            k_informative: 8,
            rating_noise_std: 10.0,
            feature_noise_std: 0.5,
            prevalence_target: 0.35,
            label_noise_rate: 0.05,
            correlated_extras: 4,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.k_informative + self.correlated_extras > self.m {
            return bad(format!(
                "k_informative + correlated_extras = {} exceeds m = {}",
                self.k_informative + self.correlated_extras,
                self.m
            ));
        }
        if self.correlated_extras > 0 && self.k_informative == 0 {
            return bad("correlated extras need at least one informative feature".into());
        }
        for (name, v) in [
            ("rating_noise_std", self.rating_noise_std),
            ("feature_noise_std", self.feature_noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.label_noise_rate >= 0.0 && self.label_noise_rate < 0.5) {
            return bad(format!("label_noise_rate must be in [0, 0.5), got {}", self.label_noise_rate));
        }
        let (p, r) = (self.prevalence_target, self.label_noise_rate);
        if !(p > r && p < 1.0 - r) {
            return bad(format!(
                "prevalence_target must lie strictly between {r} and {} at label_noise_rate {r}, got {p}",
                1.0 - r
            ));
        }
        Ok(())
    }

    /// Latent threshold whose expected prevalence, after label flips, equals
    /// the target.
    pub fn threshold(&self) -> f64 {
        let r = self.label_noise_rate;
        let q = (self.prevalence_target - r) / (1.0 - 2.0 * r);
        beta23_quantile(1.0 - q)
    }
}

fn beta23_cdf(x: f64) -> f64 {
    let x2 = x * x;
    6.0 * x2 - 8.0 * x2 * x + 3.0 * x2 * x2
}

fn beta23_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if beta23_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub cohort: Cohort,
    pub latent: Vec<f64>,
    /// Column indices of the informative features, ascending.
    pub true_support: Vec<usize>,
    /// Column indices of the noisy copies, ascending.
    pub correlated: Vec<usize>,
    pub threshold: f64,
    pub config: GeneratorConfig,
}

#[derive(Debug, Clone, Copy)]
enum Link {
    Linear { slope: f64 },
    Sigmoid { amp: f64, center: f64, steep: f64 },
}

impl Link {
    fn apply(self, t: f64) -> f64 {
        match self {
            Link::Linear { slope } => slope * t,
            Link::Sigmoid { amp, center, steep } => amp / (1.0 + (-steep * (t - center)).exp()),
        }
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

pub fn generate(cfg: &GeneratorConfig) -> Result<SynthCohort, SynthError> {
    cfg.validate()?;
    let (n, m, k) = (cfg.n, cfg.m, cfg.k_informative);

    let beta = Beta::new(2.0, 3.0).expect("valid beta parameters");
    let mut rng = seed::rng(seed::derive(cfg.seed, &[TAG_LATENT]));
    let latent: Vec<f64> = (0..n).map(|_| beta.sample(&mut rng)).collect();

    // Alternate linear and saturating links; every other pair is decreasing.
    let mut rng = seed::rng(seed::derive(cfg.seed, &[TAG_LINKS]));
    let links: Vec<Link> = (0..k)
        .map(|j| {
            let sign = if j % 4 < 2 { 1.0 } else { -1.0 };
            let amp = sign * rng.random_range(2.0..3.5);
            if j % 2 == 0 {
                Link::Linear { slope: amp }
            } else {
                Link::Sigmoid {
                    amp,
                    center: rng.random_range(0.25..0.55),
                    steep: rng.random_range(6.0..12.0),
                }
            }
        })
        .collect();
    let sources: Vec<usize> = (0..cfg.correlated_extras).map(|e| e % k.max(1)).collect();

    // Generated column order: informative, extras, pure noise.
    let mut rng = seed::rng(seed::derive(cfg.seed, &[TAG_FEATURES]));
    let mut raw = Matrix::zeros(n, m);
    for (i, &t) in latent.iter().enumerate() {
        for (j, link) in links.iter().enumerate() {
            let v = link.apply(t) + cfg.feature_noise_std * normal(&mut rng);
            raw.set(i, j, v);
        }
        for (e, &src) in sources.iter().enumerate() {
            let v = raw.get(i, src) + cfg.feature_noise_std * normal(&mut rng);
            raw.set(i, k + e, v);
        }
        for j in k + cfg.correlated_extras..m {
            raw.set(i, j, normal(&mut rng));
        }
    }

    let mut rng = seed::rng(seed::derive(cfg.seed, &[TAG_RATING]));
    let rating: Vec<f64> = latent
        .iter()
        .map(|&t| (100.0 * t + cfg.rating_noise_std * normal(&mut rng)).clamp(0.0, 100.0))
        .collect();

    let threshold = cfg.threshold();
    let mut rng = seed::rng(seed::derive(cfg.seed, &[TAG_LABEL]));
    let label: Vec<u8> = latent
        .iter()
        .map(|&t| {
            let y = u8::from(t > threshold);
            if rng.random::<f64>() < cfg.label_noise_rate {
                1 - y
            } else {
                y
            }
        })
        .collect();

    // position[g] is the output column of generated column g.
    let mut position: Vec<usize> = (0..m).collect();
    position.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[TAG_COLUMNS])));
    let mut features = Matrix::zeros(n, m);
    for i in 0..n {
        for (g, &p) in position.iter().enumerate() {
            features.set(i, p, raw.get(i, g));
        }
    }
    let mut true_support: Vec<usize> = position[..k].to_vec();
    let mut correlated: Vec<usize> = position[k..k + cfg.correlated_extras].to_vec();
    true_support.sort_unstable();
    correlated.sort_unstable();

    let width = n.to_string().len().max(3);
    let ids = (1..=n).map(|i| format!("P{i:0width$}")).collect();
    let names = (1..=m).map(|j| format!("feat_{j:02}")).collect();
    let cohort = Cohort::new(ids, names, features, rating, Some(label))?;
    Ok(SynthCohort {
        cohort,
        latent,
        true_support,
        correlated,
        threshold,
        config: cfg.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub ids: Vec<String>,
    pub latent: Vec<f64>,
    pub true_support: Vec<String>,
    pub correlated: Vec<String>,
    pub threshold: f64,
    pub config: GeneratorConfig,
}

/// `synth.csv` becomes `synth.truth.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.truth.json"))
}

/// Writes the cohort CSV, plus the ground-truth sidecar when `include_latent`
/// is set. Returns the sidecar path if one was written.
pub fn write_cohort(synth: &SynthCohort, path: impl AsRef<Path>, include_latent: bool) -> Result<Option<PathBuf>, SynthError> {
    let path = path.as_ref();
    write_cohort_csv(&synth.cohort, path)?;
    if !include_latent {
        return Ok(None);
    }
    let names = synth.cohort.feature_names();
    let side = Sidecar {
        ids: synth.cohort.ids().to_vec(),
        latent: synth.latent.clone(),
        true_support: synth.true_support.iter().map(|&j| names[j].clone()).collect(),
        correlated: synth.correlated.iter().map(|&j| names[j].clone()).collect(),
        threshold: synth.threshold,
        config: synth.config.clone(),
    };
    let out = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(&side)?;
    text.push('\n');
    fs::write(&out, text).map_err(|source| SynthError::Io {
        path: out.clone(),
        source,
    })?;
    Ok(Some(out))
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<Sidecar, SynthError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
