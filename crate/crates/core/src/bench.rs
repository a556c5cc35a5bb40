//! Synthetic objectives and seeded candidate pools.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, exp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, Tensor};

/// Half-width of the Rastrigin box.
pub const RASTRIGIN_BOUND: f64 = 5.12;

/// Negated Rastrigin function, `−(10d + Σ x_i² − 10 cos(2π x_i))`; maximum 0
/// at the origin.
pub fn rastrigin(x: &[f64]) -> f64 {
    let f: f64 = x
        .iter()
        .map(|&xi| xi * xi - 10.0 * cos(2.0 * PI * xi))
        .sum::<f64>()
        + 10.0 * x.len() as f64;
    -f
}

/// `Σ e^{x_i}`.
pub fn sum_exp(x: &[f64]) -> f64 {
    x.iter().map(|&xi| exp(xi)).sum()
}

/// Number of lit pixels of a binary image.
pub fn max_area(img: &[f64]) -> Result<f64> {
    let mut count = 0usize;
    for (index, &v) in img.iter().enumerate() {
        if v == 1.0 {
            count += 1;
        } else if v != 0.0 {
            return Err(Error::NonBinaryPixel { index, value: v });
        }
    }
    Ok(count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Rastrigin {
        dim: usize,
    },
    SumExp {
        dim: usize,
    },
    /// Binary `side x side` shape images.
    MaxArea {
        side: usize,
    },
}

impl Benchmark {
    pub const NAMES: [&'static str; 3] = ["rastrigin", "sum_exp", "max_area"];

    /// Benchmark by name with its default size (Rastrigin 2-D, Sum-ND 20-D,
    /// 64 x 64 images).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rastrigin" => Ok(Self::Rastrigin { dim: 2 }),
            "sum_exp" | "sum_nd" => Ok(Self::SumExp { dim: 20 }),
            "max_area" => Ok(Self::MaxArea { side: 64 }),
            other => Err(Error::UnknownBenchmark(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rastrigin { .. } => "rastrigin",
            Self::SumExp { .. } => "sum_exp",
            Self::MaxArea { .. } => "max_area",
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            Self::Rastrigin { dim } | Self::SumExp { dim } => dim,
            Self::MaxArea { side } => side * side,
        }
    }

    /// Size of the labeled set used to warm-start a run.
    pub fn default_initial_labeled(&self) -> usize {
        match self {
            Self::MaxArea { .. } => 50,
            _ => 100,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        match self {
            Self::Rastrigin { .. } => Ok(rastrigin(x)),
            Self::SumExp { .. } => Ok(sum_exp(x)),
            Self::MaxArea { .. } => max_area(x),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim() == 0 {
            return Err(Error::Config(format!(
                "{} needs a positive size",
                self.name()
            )));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            Self::Rastrigin { .. } => {
                for v in out {
                    *v = rng.random_range(-RASTRIGIN_BOUND..=RASTRIGIN_BOUND);
                }
            }
            Self::SumExp { .. } => {
                for v in out {
                    *v = rng.sample(StandardNormal);
                }
            }
            Self::MaxArea { side } => draw_shape(side, rng, out),
        }
    }
}

/// One axis-aligned rectangle or ellipse of random size and position.
fn draw_shape<R: Rng>(side: usize, rng: &mut R, img: &mut [f64]) {
    img.fill(0.0);
    if rng.random_bool(0.5) {
        let w = rng.random_range(1..=side);
        let h = rng.random_range(1..=side);
        let x0 = rng.random_range(0..=side - w);
        let y0 = rng.random_range(0..=side - h);
        for r in y0..y0 + h {
            img[r * side + x0..r * side + x0 + w].fill(1.0);
        }
    } else {
        let half = (side as f64 / 2.0).max(1.0);
        let rx = rng.random_range(0.5..=half);
        let ry = rng.random_range(0.5..=half);
        let cx = rng.random_range(0..side) as f64 + 0.5;
        let cy = rng.random_range(0..side) as f64 + 0.5;
        for r in 0..side {
            for c in 0..side {
                let dx = (c as f64 + 0.5 - cx) / rx;
                let dy = (r as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    img[r * side + c] = 1.0;
                }
            }
        }
    }
}

/// A pre-collected candidate pool with its true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkInstance {
    pub benchmark: Benchmark,
    /// `N x d`, one candidate per row.
    pub inputs: Tensor,
    pub labels: Vec<f64>,
    pub optimum: f64,
    pub seed: u64,
}

impl BenchmarkInstance {
    pub fn name(&self) -> &'static str {
        self.benchmark.name()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Index of the best candidate (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &y) in self.labels.iter().enumerate() {
            if y > self.labels[best] {
                best = i;
            }
        }
        best
    }

    /// Builds an instance from explicit inputs and labels.
    pub fn from_parts(
        benchmark: Benchmark,
        inputs: Tensor,
        labels: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Dimension {
                expected: inputs.rows(),
                got: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::Empty);
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::Config("pool labels must be finite".into()));
        }
        let optimum = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            benchmark,
            inputs,
            labels,
            optimum,
            seed,
        })
    }
}

/// Seeded pool of `n` candidates labeled by the true objective.
pub fn make_pool(benchmark: Benchmark, n: usize, seed: u64) -> Result<BenchmarkInstance> {
    if n < 2 {
        return Err(Error::Config(format!(
            "pool needs at least 2 candidates, got {n}"
        )));
    }
    benchmark.validate()?;
    let d = benchmark.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = alloc::vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    for row in data.chunks_mut(d) {
        benchmark.sample(&mut rng, row);
        labels.push(benchmark.evaluate(row)?);
    }
    BenchmarkInstance::from_parts(benchmark, Tensor::new(n, d, data)?, labels, seed)
}

/// `make_pool` by benchmark name with default sizes.
pub fn make_named_pool(name: &str, n: usize, seed: u64) -> Result<BenchmarkInstance> {
    make_pool(Benchmark::from_name(name)?, n, seed)
}

/// Human-readable one-line description of each benchmark.
pub fn describe(benchmark: &Benchmark) -> String {
    match *benchmark {
        Benchmark::Rastrigin { dim } => {
            format!("rastrigin: negated Rastrigin on [-5.12, 5.12]^{dim}, optimum 0 at the origin")
        }
        Benchmark::SumExp { dim } => format!("sum_exp: sum of exp(x_i), x ~ N(0, I_{dim})"),
        Benchmark::MaxArea { side } => {
            format!("max_area: lit-pixel count of random {side}x{side} rectangles and ellipses")
        }
    }
}
