//! Particle ensemble storage and seeded random streams.
//!
//! Positions live in one flat row-major `N x d` buffer. Every particle owns a
//! dedicated counter-based random stream derived from the master seed, and the
//! scheduler (batching, restarts) uses a reserved stream. Updates that consume
//! per-particle noise therefore produce the same result no matter how the work
//! is split across workers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CboError, Result};

/// Stream id reserved for scheduling decisions (batch permutations, data draws).
const SCHEDULER_STREAM: u64 = 0;

/// Builds the ChaCha stream with the given id from a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The scheduler stream shared by batch planning and restart bookkeeping.
pub fn scheduler_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, SCHEDULER_STREAM)
}

fn particle_stream(seed: u64, particle: usize) -> ChaCha8Rng {
    stream_rng(seed, particle as u64 + 1)
}

/// Initial particle distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// Independent uniform draws on `[lo, hi]` per coordinate.
    UniformBox { lo: f64, hi: f64 },
    /// Independent Gaussian draws with the given mean and standard deviation.
    Gaussian { mean: f64, std: f64 },
    /// Explicit row-major `N x d` positions.
    Explicit { positions: Vec<f64>, dim: usize },
}

impl InitSpec {
    fn validate(&self) -> Result<()> {
        match self {
            InitSpec::UniformBox { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(CboError::InvalidConfig(format!(
                        "uniform box requires finite lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            InitSpec::Gaussian { mean, std } => {
                if !mean.is_finite() || !std.is_finite() || *std < 0.0 {
                    return Err(CboError::InvalidConfig(format!(
                        "gaussian init requires finite mean and std >= 0, got ({mean}, {std})"
                    )));
                }
            }
            InitSpec::Explicit { positions, dim } => {
                if *dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
                    return Err(CboError::InvalidConfig(
                        "explicit positions must form a nonempty N x d array".into(),
                    ));
                }
                if positions.iter().any(|v| !v.is_finite()) {
                    return Err(CboError::NonFinite {
                        what: "explicit initial position",
                    });
                }
            }
        }
        Ok(())
    }
}

/// Mutable state of the particle system: positions plus per-particle noise streams.
pub struct Ensemble {
    positions: Vec<f64>,
    n_particles: usize,
    dim: usize,
    seed: u64,
    streams: Vec<ChaCha8Rng>,
}

impl Ensemble {
    /// Draws `n_particles` particles in dimension `dim` from `init`, keyed by `seed`.
    ///
    /// Particle `j`'s coordinates come from its own stream, so the same
    /// `(seed, init)` pair reproduces the same particle bit-for-bit.
    pub fn init(init: &InitSpec, n_particles: usize, dim: usize, seed: u64) -> Result<Self> {
        if n_particles == 0 || dim == 0 {
            return Err(CboError::InvalidConfig(format!(
                "ensemble requires n_particles >= 1 and dim >= 1, got ({n_particles}, {dim})"
            )));
        }
        init.validate()?;

        let mut positions = vec![0.0; n_particles * dim];
        let mut streams = Vec::with_capacity(n_particles);
        for j in 0..n_particles {
            let mut rng = particle_stream(seed, j);
            let row = &mut positions[j * dim..(j + 1) * dim];
            match init {
                InitSpec::UniformBox { lo, hi } => {
                    for x in row.iter_mut() {
                        *x = rng.gen_range(*lo..=*hi);
                    }
                }
                InitSpec::Gaussian { mean, std } => {
                    for x in row.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *x = mean + std * z;
                    }
                }
                InitSpec::Explicit {
                    positions: given,
                    dim: given_dim,
                } => {
                    if *given_dim != dim || given.len() != n_particles * dim {
                        return Err(CboError::DimensionMismatch {
                            expected: n_particles * dim,
                            got: given.len(),
                        });
                    }
                    row.copy_from_slice(&given[j * dim..(j + 1) * dim]);
                }
            }
            streams.push(rng);
        }

        Ok(Self {
            positions,
            n_particles,
            dim,
            seed,
            streams,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The flat row-major position buffer.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, j: usize) -> &[f64] {
        &self.positions[j * self.dim..(j + 1) * self.dim]
    }

    pub fn particle_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.positions[j * self.dim..(j + 1) * self.dim]
    }

    /// Mutable access to one particle's row together with its noise stream.
    pub fn particle_with_rng(&mut self, j: usize) -> (&mut [f64], &mut ChaCha8Rng) {
        let Self {
            positions,
            streams,
            dim,
            ..
        } = self;
        let row = &mut positions[j * *dim..(j + 1) * *dim];
        (row, &mut streams[j])
    }

    /// Coordinate-wise sample mean over all particles.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for j in 0..self.n_particles {
            for (mi, xi) in m.iter_mut().zip(self.particle(j)) {
                *mi += xi;
            }
        }
        let inv = 1.0 / self.n_particles as f64;
        for mi in &mut m {
            *mi *= inv;
        }
        m
    }

    /// Sample variance `mean_j |X_j - mean|^2` (population convention).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let mut acc = 0.0;
        for j in 0..self.n_particles {
            for (xi, mi) in self.particle(j).iter().zip(&m) {
                let d = xi - mi;
                acc += d * d;
            }
        }
        acc / self.n_particles as f64
    }

    /// Mean squared distance to an anchor point.
    pub fn second_moment_about(&self, anchor: &[f64]) -> Result<f64> {
        if anchor.len() != self.dim {
            return Err(CboError::DimensionMismatch {
                expected: self.dim,
                got: anchor.len(),
            });
        }
        let mut acc = 0.0;
        for j in 0..self.n_particles {
            for (xi, ai) in self.particle(j).iter().zip(anchor) {
                let d = xi - ai;
                acc += d * d;
            }
        }
        Ok(acc / self.n_particles as f64)
    }

    /// Adds independent `N(0, kick_sigma^2)` noise to every coordinate of every
    /// particle, drawn from the per-particle streams.
    pub fn gaussian_kick(&mut self, kick_sigma: f64) {
        if kick_sigma == 0.0 {
            return;
        }
        for j in 0..self.n_particles {
            let (row, rng) = self.particle_with_rng(j);
            for x in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x += kick_sigma * z;
            }
        }
    }
}
