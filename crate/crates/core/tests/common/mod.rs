#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use usris::beamforming::CVector;
use usris::channel::{CMatrix, ChannelSet};
use usris::search::{random_topology, ActivationTopology};

pub fn gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / 2f64.sqrt()
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_vector<R: Rng>(len: usize, rng: &mut R) -> CVector {
    CVector::from_fn(len, |_, _| gaussian(rng))
}

/// Vector with Euclidean norm `norm` and uniformly random direction.
pub fn random_on_sphere<R: Rng>(len: usize, norm: f64, rng: &mut R) -> CVector {
    let x = random_vector(len, rng);
    let n = x.norm();
    x * Complex64::from(norm / n)
}

pub fn random_phases<R: Rng>(len: usize, rng: &mut R) -> CVector {
    CVector::from_fn(len, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
}

/// Rayleigh channels for a `layers × n` surface between `k` user and `m` BS antennas.
pub fn random_channels<R: Rng>(k: usize, m: usize, n: usize, layers: usize, rng: &mut R) -> ChannelSet {
    let mut h = vec![random_matrix(n, k, rng)];
    for _ in 1..layers {
        h.push(random_matrix(n, n, rng));
    }
    ChannelSet {
        h,
        g: random_matrix(n, m, rng),
    }
}

/// Random instance dimensions within `K ≤ 2, M ≤ 4, N ≤ 16, L ≤ 3` and a
/// topology with at least one active element per layer.
pub fn random_instance<R: Rng>(rng: &mut R) -> (ChannelSet, ActivationTopology) {
    let k = rng.random_range(1..=2);
    let m = rng.random_range(1..=4);
    let n = rng.random_range(1..=16);
    let layers = rng.random_range(1..=3);
    let channels = random_channels(k, m, n, layers, rng);
    loop {
        let budget = rng.random_range(layers..=layers * n);
        let z = random_topology(layers, n, budget, rng).unwrap();
        if (0..layers).all(|l| z.layer_budget(l) > 0) {
            return (channels, z);
        }
    }
}
