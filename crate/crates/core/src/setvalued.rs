//! Two-branch toy datasets: a 1D quartic with a flattened twin, and a pair
//! of sigmoid-wrapped 2D polynomials.
//!
//! A mixture draws inputs uniformly from the shared box, assigns each sample
//! to branch 1 with probability `fraction_first`, adds Gaussian noise to the
//! target and splits the result into train and test sets.

use serde::{Deserialize, Serialize};

use crate::activations::sigmoid;
use crate::dataset::{Dataset, SampleTags};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

pub const DOMAIN_1D: (f64, f64) = (-6.0, 6.0);
pub const DOMAIN_2D: (f64, f64) = (-1.5, 1.5);
/// The 1D branches differ only on this open interval.
pub const MULTI_VALUED_1D: (f64, f64) = (-4.0, 4.0);

fn check_interval(v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::OutOfDomain { value: v, lo, hi })
    }
}

#[inline]
fn quartic(x: f64) -> f64 {
    let p = (x - 4.0) * (x + 4.0);
    p * p
}

#[inline]
fn flat_quartic(x: f64) -> f64 {
    if (-4.0..=4.0).contains(&x) {
        0.0
    } else {
        quartic(x)
    }
}

pub fn eval_f1_1d(x: f64) -> Result<f64> {
    check_interval(x, DOMAIN_1D.0, DOMAIN_1D.1)?;
    Ok(quartic(x))
}

/// Zero on `[-4, 4]`, equal to [`eval_f1_1d`] elsewhere.
pub fn eval_f2_1d(x: f64) -> Result<f64> {
    check_interval(x, DOMAIN_1D.0, DOMAIN_1D.1)?;
    Ok(flat_quartic(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which2d {
    F1,
    F2,
}

fn raw_2d(which: Which2d, x: f64, y: f64) -> f64 {
    let p = match which {
        Which2d::F1 => x * y * (2.0 * x + 2.0 * y),
        Which2d::F2 => x * y * (x * x + y * y),
    };
    sigmoid(p)
}

/// Sigmoid of `xy(2x+2y)` or `xy(x^2+y^2)` on the default 2D box.
pub fn eval_2d(which: Which2d, x: f64, y: f64) -> Result<f64> {
    check_interval(x, DOMAIN_2D.0, DOMAIN_2D.1)?;
    check_interval(y, DOMAIN_2D.0, DOMAIN_2D.1)?;
    Ok(raw_2d(which, x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchFunction {
    Quartic1d,
    FlatQuartic1d,
    Sigmoid2dF1,
    Sigmoid2dF2,
}

impl BranchFunction {
    pub fn input_dim(self) -> usize {
        match self {
            BranchFunction::Quartic1d | BranchFunction::FlatQuartic1d => 1,
            BranchFunction::Sigmoid2dF1 | BranchFunction::Sigmoid2dF2 => 2,
        }
    }

    fn eval_raw(self, x: &[f64]) -> f64 {
        match self {
            BranchFunction::Quartic1d => quartic(x[0]),
            BranchFunction::FlatQuartic1d => flat_quartic(x[0]),
            BranchFunction::Sigmoid2dF1 => raw_2d(Which2d::F1, x[0], x[1]),
            BranchFunction::Sigmoid2dF2 => raw_2d(Which2d::F2, x[0], x[1]),
        }
    }
}

/// Axis-aligned box, one `(lo, hi)` pair per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            bounds: vec![(lo, hi); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::InvalidConfig("domain has no dimensions".into()));
        }
        for &(lo, hi) in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!("empty domain interval [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| (*lo..=*hi).contains(v))
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::LengthMismatch {
                op: "domain",
                left: x.len(),
                right: self.dim(),
            });
        }
        for (v, &(lo, hi)) in x.iter().zip(&self.bounds) {
            check_interval(*v, lo, hi)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub id: u8,
    pub function: BranchFunction,
    pub domain: Domain,
}

impl BranchSpec {
    pub fn new(id: u8, function: BranchFunction, domain: Domain) -> Result<Self> {
        let s = Self { id, function, domain };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.domain.dim() != self.function.input_dim() {
            return Err(Error::InvalidConfig(format!(
                "branch {} is {}-dimensional but its domain has {} axes",
                self.id,
                self.function.input_dim(),
                self.domain.dim()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        Ok(self.function.eval_raw(x))
    }

    pub fn paper_1d() -> [BranchSpec; 2] {
        let d = Domain::cube(1, DOMAIN_1D.0, DOMAIN_1D.1);
        [
            BranchSpec {
                id: 1,
                function: BranchFunction::Quartic1d,
                domain: d.clone(),
            },
            BranchSpec {
                id: 2,
                function: BranchFunction::FlatQuartic1d,
                domain: d,
            },
        ]
    }

    pub fn paper_2d() -> [BranchSpec; 2] {
        let d = Domain::cube(2, DOMAIN_2D.0, DOMAIN_2D.1);
        [
            BranchSpec {
                id: 1,
                function: BranchFunction::Sigmoid2dF1,
                domain: d.clone(),
            },
            BranchSpec {
                id: 2,
                function: BranchFunction::Sigmoid2dF2,
                domain: d,
            },
        ]
    }
}

pub const DEFAULT_NOISE_1D: f64 = 5.0;
pub const DEFAULT_NOISE_2D: f64 = 0.02;
pub const PAPER_SAMPLES_1D: usize = 2000;
pub const PAPER_SAMPLES_2D: usize = 160_000;
pub const DESK_SAMPLES_2D: usize = 16_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub branches: [BranchSpec; 2],
    pub fraction_first: f64,
    pub n_samples: usize,
    pub noise_stddev: f64,
    pub split_test_fraction: f64,
    pub seed: u64,
}

impl MixtureConfig {
    pub fn paper_1d(fraction_first: f64, seed: u64) -> Self {
        Self {
            branches: BranchSpec::paper_1d(),
            fraction_first,
            n_samples: PAPER_SAMPLES_1D,
            noise_stddev: DEFAULT_NOISE_1D,
            split_test_fraction: 0.2,
            seed,
        }
    }

    pub fn paper_2d(fraction_first: f64, seed: u64, desk: bool) -> Self {
        Self {
            branches: BranchSpec::paper_2d(),
            fraction_first,
            n_samples: if desk { DESK_SAMPLES_2D } else { PAPER_SAMPLES_2D },
            noise_stddev: DEFAULT_NOISE_2D,
            split_test_fraction: 0.2,
            seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.branches[0].domain.dim()
    }

    pub fn n_test(&self) -> usize {
        (self.n_samples as f64 * self.split_test_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.branches {
            b.validate()?;
        }
        if self.branches[0].domain != self.branches[1].domain {
            return Err(Error::InvalidConfig("both branches must share one domain".into()));
        }
        if self.branches[0].id == self.branches[1].id {
            return Err(Error::InvalidConfig("branch ids must differ".into()));
        }
        if !(0.0..=1.0).contains(&self.fraction_first) {
            return Err(Error::InvalidConfig(format!(
                "fraction_first must lie in [0, 1], got {}",
                self.fraction_first
            )));
        }
        if !(self.noise_stddev >= 0.0 && self.noise_stddev.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_stddev must be finite and non-negative, got {}",
                self.noise_stddev
            )));
        }
        if !(self.split_test_fraction > 0.0 && self.split_test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "split_test_fraction must lie in (0, 1), got {}",
                self.split_test_fraction
            )));
        }
        let n_test = self.n_test();
        if n_test == 0 || n_test >= self.n_samples {
            return Err(Error::InvalidConfig(format!(
                "{} samples cannot be split with test fraction {}",
                self.n_samples, self.split_test_fraction
            )));
        }
        Ok(())
    }
}

fn column_names(dim: usize) -> (Vec<String>, Vec<String>) {
    match dim {
        1 => (vec!["x".into()], vec!["y".into()]),
        2 => (vec!["x".into(), "y".into()], vec!["z".into()]),
        d => ((0..d).map(|i| format!("x{i}")).collect(), vec!["y".into()]),
    }
}

/// Draws the mixture and returns `(train, test)`.
///
/// The test set holds exactly `round(n_samples * split_test_fraction)` rows.
/// Both sets keep the generation order of their rows.
pub fn generate_mixture(cfg: &MixtureConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let dim = cfg.input_dim();
    let bounds = &cfg.branches[0].domain.bounds;
    let n = cfg.n_samples;

    let mut xs = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);
    let mut x = vec![0.0; dim];
    for _ in 0..n {
        for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *xi = rng.uniform_range(lo, hi);
        }
        let branch = if rng.bernoulli(cfg.fraction_first) {
            &cfg.branches[0]
        } else {
            &cfg.branches[1]
        };
        let noise = if cfg.noise_stddev > 0.0 {
            rng.normal(0.0, cfg.noise_stddev)
        } else {
            0.0
        };
        xs.extend_from_slice(&x);
        ys.push(branch.function.eval_raw(&x) + noise);
        tags.push(SampleTags::branch(branch.id));
    }

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_test = cfg.n_test();
    let mut test_idx = order[..n_test].to_vec();
    let mut train_idx = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();

    let (fnames, tnames) = column_names(dim);
    let all = Dataset::new(
        fnames,
        tnames,
        Matrix::new(n, dim, xs)?,
        Matrix::new(n, 1, ys)?,
        tags,
    )?;
    Ok((all.subset(&train_idx), all.subset(&test_idx)))
}
