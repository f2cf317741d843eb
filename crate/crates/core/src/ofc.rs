//! Olami-Feder-Christensen spring-block automaton with open boundaries.
//!
//! A site is critical when its force reaches the threshold. Loading raises
//! every site by the same amount until the strongest one is critical;
//! relaxation topples all critical sites of a generation at once, passing
//! `transfer * F` to each of the (up to four) nearest neighbours. Stress sent
//! past the edge is lost.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Generations allowed in one relaxation before it is declared runaway.
pub const DEFAULT_GENERATION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OfcLattice {
    side: usize,
    force: Vec<f64>,
    threshold: f64,
    transfer: f64,
    generation_cap: usize,
}

/// Sites toppled in each generation of one avalanche, as flat indices `row * side + col`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AvalancheTrace {
    pub generations: Vec<Vec<usize>>,
}

impl AvalancheTrace {
    /// Total number of topple events.
    pub fn size(&self) -> usize {
        self.generations.iter().map(Vec::len).sum()
    }
}

impl OfcLattice {
    pub fn new(side: usize, threshold: f64, transfer: f64) -> Result<Self> {
        Self::from_forces(side, vec![0.0; side * side], threshold, transfer)
    }

    pub fn from_forces(side: usize, force: Vec<f64>, threshold: f64, transfer: f64) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidConfig("lattice side must be positive"));
        }
        if force.len() != side * side {
            return Err(Error::LengthMismatch {
                expected: side * side,
                found: force.len(),
            });
        }
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::InvalidConfig("threshold must be positive"));
        }
        if !(0.0..=0.25).contains(&transfer) {
            return Err(Error::InvalidConfig("transfer fraction must lie in [0, 0.25]"));
        }
        if force.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidConfig("forces must be finite and non-negative"));
        }
        Ok(Self {
            side,
            force,
            threshold,
            transfer,
            generation_cap: DEFAULT_GENERATION_CAP,
        })
    }

    /// Forces drawn uniformly from `[0, threshold)`.
    pub fn random(side: usize, threshold: f64, transfer: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let force = (0..side * side)
            .map(|_| rng.random::<f64>() * threshold)
            .collect();
        Self::from_forces(side, force, threshold, transfer)
    }

    pub fn with_generation_cap(mut self, cap: usize) -> Self {
        self.generation_cap = cap;
        self
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn transfer(&self) -> f64 {
        self.transfer
    }

    pub fn forces(&self) -> &[f64] {
        &self.force
    }

    pub fn force(&self, row: usize, col: usize) -> f64 {
        self.force[row * self.side + col]
    }

    pub fn max_force(&self) -> f64 {
        self.force.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn total_force(&self) -> f64 {
        self.force.iter().sum()
    }

    pub fn has_critical_site(&self) -> bool {
        self.force.iter().any(|&f| f >= self.threshold)
    }

    /// Raises every site by `threshold - max`, so the maximal site(s) sit
    /// exactly at the threshold. Returns the load applied.
    pub fn uniform_load(&mut self) -> Result<f64> {
        let max = self.max_force();
        if max > self.threshold {
            return Err(Error::Protocol("uniform load applied while a site is critical"));
        }
        let load = self.threshold - max;
        for f in &mut self.force {
            *f = if *f == max { self.threshold } else { *f + load };
        }
        Ok(load)
    }

    /// Topples critical sites generation by generation until none is left.
    pub fn relax(&mut self) -> Result<AvalancheTrace> {
        let side = self.side;
        let mut current: Vec<usize> = (0..self.force.len())
            .filter(|&s| self.force[s] >= self.threshold)
            .collect();
        if current.is_empty() {
            return Err(Error::Protocol("relax called without a critical site"));
        }

        let mut trace = AvalancheTrace::default();
        let mut released: Vec<f64> = Vec::new();
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; self.force.len()];
        while !current.is_empty() {
            if trace.generations.len() >= self.generation_cap {
                return Err(Error::Runaway(self.generation_cap));
            }
            released.clear();
            released.extend(current.iter().map(|&s| self.force[s]));
            for &s in &current {
                self.force[s] = 0.0;
            }
            touched.clear();
            for (&s, &f) in current.iter().zip(&released) {
                let share = self.transfer * f;
                let (r, c) = (s / side, s % side);
                let mut give = |n: usize| {
                    self.force[n] += share;
                    if !mark[n] {
                        mark[n] = true;
                        touched.push(n);
                    }
                };
                if r > 0 {
                    give(s - side);
                }
                if r + 1 < side {
                    give(s + side);
                }
                if c > 0 {
                    give(s - 1);
                }
                if c + 1 < side {
                    give(s + 1);
                }
            }
            let next: Vec<usize> = touched
                .iter()
                .copied()
                .filter(|&n| self.force[n] >= self.threshold)
                .collect();
            for &n in &touched {
                mark[n] = false;
            }
            trace.generations.push(core::mem::replace(&mut current, next));
        }
        debug_assert!(self.max_force() < self.threshold);
        Ok(trace)
    }

    /// One load followed by one relaxation; returns the avalanche size.
    pub fn next_avalanche(&mut self) -> Result<usize> {
        self.uniform_load()?;
        Ok(self.relax()?.size())
    }
}

/// Warm-up length used by [`run_ofc`]: `10 * side^2` avalanches.
pub fn default_warmup(side: usize) -> usize {
    10 * side * side
}

/// Discards [`default_warmup`] avalanches, then records `num_avalanches` sizes.
pub fn run_ofc(lattice: &mut OfcLattice, num_avalanches: usize) -> Result<Vec<usize>> {
    let warmup = default_warmup(lattice.side());
    run_ofc_with_warmup(lattice, num_avalanches, warmup)
}

pub fn run_ofc_with_warmup(
    lattice: &mut OfcLattice,
    num_avalanches: usize,
    warmup: usize,
) -> Result<Vec<usize>> {
    for _ in 0..warmup {
        lattice.next_avalanche()?;
    }
    (0..num_avalanches).map(|_| lattice.next_avalanche()).collect()
}
