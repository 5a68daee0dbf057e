//! Alternating optimization of the receive combiner, per-layer phase shifts
//! and transmit precoder for a fixed activation topology and fold.
//!
//! The signal model is `r = v^H g^H T(L,1) w s + v^H n` with
//! `T(p,q) = α Z_p Θ_p h_p ⋯ α Z_q Θ_q h_q`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{CMatrix, ChannelSet};
use crate::error::{Error, Result};
use crate::search::ActivationTopology;

pub type CVector = DVector<Complex64>;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `Σ conj(a_i) b_i`
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(a: &CVector) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn achievable_rate(snr: f64) -> f64 {
    (1.0 + snr).log2()
}

/// Channels, activation pattern, penetration loss and the current phase
/// vectors: everything the cascade needs apart from `w` and `v`.
#[derive(Debug, Clone)]
pub struct CascadeContext<'a> {
    pub channels: &'a ChannelSet,
    pub topology: &'a ActivationTopology,
    pub alpha: f64,
    pub theta: Vec<CVector>,
}

impl<'a> CascadeContext<'a> {
    /// Context with every phase shift set to 1.
    pub fn new(channels: &'a ChannelSet, topology: &'a ActivationTopology, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain(format!("penetration loss must lie in (0, 1], got {alpha}")));
        }
        let n = channels.elements();
        if topology.layers() != channels.layers() || topology.per_layer() != n {
            return Err(Error::domain(format!(
                "topology is {}x{} but channels have {} layers of {} elements",
                topology.layers(),
                topology.per_layer(),
                channels.layers(),
                n
            )));
        }
        let theta = vec![CVector::from_element(n, ONE); channels.layers()];
        Ok(CascadeContext {
            channels,
            topology,
            alpha,
            theta,
        })
    }

    pub fn layers(&self) -> usize {
        self.channels.layers()
    }

    pub fn elements(&self) -> usize {
        self.channels.elements()
    }

    /// Replaces the phase vectors; each entry must be unit modulus.
    pub fn set_theta(&mut self, theta: Vec<CVector>) -> Result<()> {
        if theta.len() != self.layers() || theta.iter().any(|t| t.len() != self.elements()) {
            return Err(Error::domain("phase vectors do not match the surface dimensions"));
        }
        if let Some(bad) = theta.iter().flatten().find(|t| (t.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::ConstraintViolation(format!("phase shift {bad} is not unit modulus")));
        }
        self.theta = theta;
        Ok(())
    }

    /// Diagonal of `α Z_l Θ_l` for 0-based layer `l`.
    fn gains(&self, l: usize) -> impl Iterator<Item = Complex64> + '_ {
        let alpha = self.alpha;
        self.topology
            .layer(l)
            .iter()
            .zip(self.theta[l].iter())
            .map(move |(&on, &t)| if on { t * alpha } else { ZERO })
    }

    fn layer_factor(&self, l: usize) -> CMatrix {
        let mut m = self.channels.h[l].clone();
        for (mut row, gain) in m.row_iter_mut().zip(self.gains(l)) {
            row *= gain;
        }
        m
    }

    fn apply_gains(&self, l: usize, incident: &CVector) -> CVector {
        CVector::from_iterator(
            incident.len(),
            incident.iter().zip(self.gains(l)).map(|(x, g)| x * g),
        )
    }

    /// Incident field at every layer and the field leaving the last layer.
    pub fn propagate(&self, w: &CVector) -> (Vec<CVector>, CVector) {
        let mut incident = Vec::with_capacity(self.layers());
        let mut x = w.clone();
        for l in 0..self.layers() {
            let f = &self.channels.h[l] * &x;
            x = self.apply_gains(l, &f);
            incident.push(f);
        }
        (incident, x)
    }

    /// `g^H T(L,1) w`, the effective channel seen by the base station.
    pub fn effective_channel(&self, w: &CVector) -> CVector {
        let (_, out) = self.propagate(w);
        self.channels.g.ad_mul(&out)
    }

    /// `T(L,l+1)^H g v` for every 0-based layer `l`, plus `T(L,1)^H g v`.
    fn backward(&self, v: &CVector) -> (Vec<CVector>, CVector) {
        let layers = self.layers();
        let mut back = vec![CVector::zeros(0); layers];
        let mut r = &self.channels.g * v;
        for l in (0..layers).rev() {
            back[l] = r.clone();
            let weighted = CVector::from_iterator(
                r.len(),
                r.iter().zip(self.gains(l)).map(|(x, g)| x * g.conj()),
            );
            r = self.channels.h[l].ad_mul(&weighted);
        }
        (back, r)
    }
}

/// `T(p,q)` with layers numbered from 1 and 0 standing for the user side.
///
/// Valid pairs are `1 ≤ q ≤ p ≤ L`, `(L, L+1)` (the N×N identity) and
/// `(0, 1)` (the K×K identity).
pub fn cascade(ctx: &CascadeContext<'_>, p: usize, q: usize) -> Result<CMatrix> {
    let layers = ctx.layers();
    if p == layers && q == layers + 1 {
        return Ok(DMatrix::identity(ctx.elements(), ctx.elements()));
    }
    if p == 0 && q == 1 {
        let k = ctx.channels.user_antennas();
        return Ok(DMatrix::identity(k, k));
    }
    if q < 1 || q > p || p > layers {
        return Err(Error::domain(format!(
            "cascade index pair ({p}, {q}) is invalid for {layers} layers"
        )));
    }
    let mut t = ctx.layer_factor(q - 1);
    for l in q..p {
        t = ctx.layer_factor(l) * t;
    }
    Ok(t)
}

/// Decoding SNR `|v^H g^H T(L,1) w|² / (‖v‖² σ²)`.
pub fn snr(ctx: &CascadeContext<'_>, w: &CVector, v: &CVector, noise_power: f64) -> Result<f64> {
    let vv = norm_sqr(v);
    if !(vv > 0.0) {
        return Err(Error::domain("combiner must be nonzero"));
    }
    if !(noise_power > 0.0) {
        return Err(Error::domain(format!("noise power must be positive, got {noise_power}")));
    }
    let e = ctx.effective_channel(w);
    Ok(inner(v, &e).norm_sqr() / (vv * noise_power))
}

/// Rotates `v` so its largest-magnitude entry is real and positive.
fn canonical_phase(mut v: CVector) -> CVector {
    let mut pivot = ZERO;
    for x in v.iter() {
        if x.norm() > pivot.norm() {
            pivot = *x;
        }
    }
    if pivot.norm() > 0.0 {
        let rot = pivot.conj() / pivot.norm();
        v *= rot;
    }
    v
}

/// Principal eigenvector of the rank-1 matrix `e e^H`, i.e. `e / ‖e‖`.
pub fn optimal_combiner(ctx: &CascadeContext<'_>, w: &CVector) -> Result<CVector> {
    combiner_from_effective(ctx.effective_channel(w))
}

fn combiner_from_effective(e: CVector) -> Result<CVector> {
    let n = norm_sqr(&e).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateChannel("effective channel is zero".into()));
    }
    Ok(canonical_phase(e / Complex64::from(n)))
}

/// Power iteration for the dominant eigenvector of a Hermitian PSD matrix.
///
/// Starts from the column of largest norm and stops once successive unit
/// iterates agree to `tol` after phase alignment.
pub fn principal_eigenvector(m: &CMatrix, tol: f64, max_iters: usize) -> Result<CVector> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::domain("power iteration needs a nonempty square matrix"));
    }
    let start = (0..m.ncols())
        .max_by(|&a, &b| m.column(a).norm().total_cmp(&m.column(b).norm()))
        .unwrap_or(0);
    let mut v: CVector = m.column(start).into_owned();
    let n0 = v.norm();
    if !(n0 > 0.0) {
        return Err(Error::DegenerateChannel("matrix is zero".into()));
    }
    v /= Complex64::from(n0);
    for _ in 0..max_iters {
        let mut next = m * &v;
        let n = next.norm();
        if !(n > 0.0) {
            return Err(Error::DegenerateChannel("iterate collapsed to zero".into()));
        }
        next /= Complex64::from(n);
        // align the global phase before comparing
        let ph = inner(&next, &v);
        let aligned = if ph.norm() > 0.0 {
            &next * (ph / ph.norm())
        } else {
            next.clone()
        };
        let diff = (&aligned - &v).norm();
        v = aligned;
        if diff < tol {
            return Ok(canonical_phase(v));
        }
    }
    Ok(canonical_phase(v))
}

/// Unit-modulus phases for 0-based `layer` that co-phase every active
/// element's contribution to `v^H g^H T(L,1) w`. Inactive elements get 1.
pub fn optimal_phases(ctx: &CascadeContext<'_>, w: &CVector, v: &CVector, layer: usize) -> Result<CVector> {
    if layer >= ctx.layers() {
        return Err(Error::domain(format!(
            "layer {layer} out of range for {} layers",
            ctx.layers()
        )));
    }
    let (incident, _) = ctx.propagate(w);
    let (back, _) = ctx.backward(v);
    Ok(aligned_phases(ctx.topology.layer(layer), &incident[layer], &back[layer]))
}

fn aligned_phases(active: &[bool], incident: &CVector, back: &CVector) -> CVector {
    CVector::from_iterator(
        incident.len(),
        active
            .iter()
            .zip(incident.iter().zip(back.iter()))
            .map(|(&on, (f, r))| {
                // term n is conj(r_n) f_n θ_n; rotate it onto the positive real axis
                let c = r.conj() * f;
                if on && c.norm() > 0.0 {
                    c.conj() / c.norm()
                } else {
                    ONE
                }
            }),
    )
}

/// `√P_max · a / ‖a‖` with `a = T(L,1)^H g v`.
pub fn optimal_precoder(ctx: &CascadeContext<'_>, v: &CVector, p_max: f64) -> Result<CVector> {
    let (_, a) = ctx.backward(v);
    precoder_from(a, p_max)
}

fn precoder_from(a: CVector, p_max: f64) -> Result<CVector> {
    let n = norm_sqr(&a).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateChannel("transmit-side effective channel is zero".into()));
    }
    Ok(a * Complex64::from(p_max.sqrt() / n))
}

/// Transmit power and receiver noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub p_max: f64,
    pub noise_power: f64,
}

/// Stopping rule for the alternating loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoParams {
    /// Stop when a full sweep improves the SNR by less than this fraction.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for AoParams {
    fn default() -> Self {
        AoParams {
            tol: 1e-8,
            max_sweeps: 200,
        }
    }
}

impl AoParams {
    /// Cheaper budget used while scoring search candidates.
    pub fn search() -> Self {
        AoParams {
            tol: 1e-6,
            max_sweeps: 60,
        }
    }
}

/// Starting point of the alternating loop.
#[derive(Debug, Clone, Default)]
pub enum AoStart {
    /// All-ones phases and `w = √P_max e₁`.
    #[default]
    Canonical,
    Given { w: CVector, theta: Vec<CVector> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub w: CVector,
    pub theta: Vec<CVector>,
    pub v: CVector,
    pub snr: f64,
    pub rate: f64,
    /// Full sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Set when the cascade is identically zero and no beam can be formed.
    pub degenerate: bool,
    /// SNR after every sub-step: combiner, each layer's phases, precoder.
    pub history: Vec<f64>,
}

impl BeamformingSolution {
    /// Same beam directions at a different transmit power.
    pub fn rescaled(&self, ctx: &CascadeContext<'_>, noise_power: f64, gamma: f64) -> Result<Self> {
        let mut out = self.clone();
        out.w *= Complex64::from(gamma.sqrt());
        let mut ctx = ctx.clone();
        ctx.set_theta(self.theta.clone())?;
        out.snr = snr(&ctx, &out.w, &out.v, noise_power)?;
        out.rate = achievable_rate(out.snr);
        out.history.clear();
        Ok(out)
    }

    /// Text dump with 17 significant digits for every complex entry.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "snr {:.16e}", self.snr)?;
        writeln!(out, "rate {:.16e}", self.rate)?;
        writeln!(out, "iterations {}", self.iterations)?;
        writeln!(out, "converged {}", self.converged)?;
        writeln!(out, "degenerate {}", self.degenerate)?;
        let mut vector = |name: &str, x: &CVector| -> std::io::Result<()> {
            writeln!(out, "{name} {}", x.len())?;
            for z in x.iter() {
                writeln!(out, "{:.16e} {:.16e}", z.re, z.im)?;
            }
            Ok(())
        };
        vector("w", &self.w)?;
        vector("v", &self.v)?;
        for (l, t) in self.theta.iter().enumerate() {
            vector(&format!("theta{}", l + 1), t)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn basis(len: usize, scale: f64) -> CVector {
    let mut e = CVector::zeros(len);
    e[0] = Complex64::from(scale);
    e
}

/// Alternates combiner → phases of layers 1..L → precoder until the SNR
/// stalls. An all-zero cascade yields a flagged zero-SNR solution.
pub fn ao_solve(
    mut ctx: CascadeContext<'_>,
    budget: LinkBudget,
    params: AoParams,
    start: AoStart,
) -> Result<BeamformingSolution> {
    if !(params.tol > 0.0) || params.max_sweeps == 0 {
        return Err(Error::domain("AO needs tol > 0 and at least one sweep"));
    }
    if !(budget.p_max > 0.0) || !(budget.noise_power > 0.0) {
        return Err(Error::domain("transmit power and noise power must be positive"));
    }
    let k = ctx.channels.user_antennas();
    let m = ctx.channels.bs_antennas();
    let mut w = match start {
        AoStart::Canonical => basis(k, budget.p_max.sqrt()),
        AoStart::Given { w, theta } => {
            if w.len() != k || norm_sqr(&w) > budget.p_max * (1.0 + 1e-12) {
                return Err(Error::domain("initial precoder violates dimensions or power budget"));
            }
            ctx.set_theta(theta)?;
            w
        }
    };
    let sigma2 = budget.noise_power;
    let mut history = Vec::new();
    let mut v = match combiner_from_effective(ctx.effective_channel(&w)) {
        Ok(v) => v,
        Err(Error::DegenerateChannel(_)) => {
            return Ok(BeamformingSolution {
                w,
                theta: ctx.theta,
                v: basis(m, 1.0),
                snr: 0.0,
                rate: 0.0,
                iterations: 0,
                converged: false,
                degenerate: true,
                history,
            })
        }
        Err(e) => return Err(e),
    };

    let mut reference = inner(&v, &ctx.effective_channel(&w)).norm_sqr() / sigma2;
    let mut iterations = 0;
    let mut converged = false;
    for sweep in 0..params.max_sweeps {
        iterations = sweep + 1;
        if sweep > 0 {
            v = combiner_from_effective(ctx.effective_channel(&w))?;
        }
        let e = ctx.effective_channel(&w);
        history.push(inner(&v, &e).norm_sqr() / sigma2);

        // later layers are untouched until their turn, so the backward
        // vectors stay valid while we walk forward through the stack
        let (back, _) = ctx.backward(&v);
        let mut x = w.clone();
        for l in 0..ctx.layers() {
            let f = &ctx.channels.h[l] * &x;
            ctx.theta[l] = aligned_phases(ctx.topology.layer(l), &f, &back[l]);
            x = ctx.apply_gains(l, &f);
            history.push(inner(&back[l], &x).norm_sqr() / sigma2);
        }

        let (_, a) = ctx.backward(&v);
        history.push(budget.p_max * norm_sqr(&a) / sigma2);
        w = precoder_from(a, budget.p_max)?;

        let current = *history.last().unwrap_or(&0.0);
        if current - reference < params.tol * reference {
            converged = true;
            break;
        }
        reference = current;
    }

    let snr = snr(&ctx, &w, &v, sigma2)?;
    Ok(BeamformingSolution {
        w,
        theta: ctx.theta,
        v,
        snr,
        rate: achievable_rate(snr),
        iterations,
        converged,
        degenerate: false,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSet;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut impl Rng, r: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(r, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_vector(rng: &mut impl Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_phases(rng: &mut impl Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
    }

    fn random_channels(rng: &mut impl Rng, k: usize, m: usize, n: usize, layers: usize) -> ChannelSet {
        let mut h = vec![random_matrix(rng, n, k)];
        for _ in 1..layers {
            h.push(random_matrix(rng, n, n));
        }
        ChannelSet {
            h,
            g: random_matrix(rng, n, m),
        }
    }

    fn scalar_chain(h: Complex64, g: Complex64) -> ChannelSet {
        ChannelSet {
            h: vec![CMatrix::from_element(1, 1, h)],
            g: CMatrix::from_element(1, 1, g),
        }
    }

    #[test]
    fn rate_mapping() {
        assert_eq!(achievable_rate(0.0), 0.0);
        assert_eq!(achievable_rate(1.0), 1.0);
        assert_eq!(achievable_rate(3.0), 2.0);
    }

    #[test]
    fn cascade_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = random_channels(&mut rng, 2, 3, 4, 2);
        let z = ActivationTopology::dense(2, 4);
        let ctx = CascadeContext::new(&ch, &z, 0.8).unwrap();
        assert_eq!(cascade(&ctx, 2, 3).unwrap(), CMatrix::identity(4, 4));
        assert_eq!(cascade(&ctx, 0, 1).unwrap(), CMatrix::identity(2, 2));
        assert!(cascade(&ctx, 1, 2).is_err());
        assert!(cascade(&ctx, 3, 1).is_err());
        assert!(cascade(&ctx, 0, 0).is_err());
        // two-layer product equals the explicit factors
        let t = cascade(&ctx, 2, 1).unwrap();
        let expect = (&ch.h[1] * Complex64::from(0.8)) * (&ch.h[0] * Complex64::from(0.8));
        assert!((t - expect).norm() < 1e-12);

        let s = scalar_chain(c(0.3, -0.2), c(0.1, 0.4));
        let z1 = ActivationTopology::dense(1, 1);
        let ctx = CascadeContext::new(&s, &z1, 0.8).unwrap();
        assert_eq!(cascade(&ctx, 1, 1).unwrap()[(0, 0)], c(0.3, -0.2) * 0.8);
    }

    #[test]
    fn context_rejects_bad_inputs() {
        let s = scalar_chain(ONE, ONE);
        let z = ActivationTopology::dense(1, 1);
        assert!(CascadeContext::new(&s, &z, 0.0).is_err());
        assert!(CascadeContext::new(&s, &z, 1.2).is_err());
        let z2 = ActivationTopology::dense(2, 1);
        assert!(CascadeContext::new(&s, &z2, 0.5).is_err());
    }

    #[test]
    fn scalar_snr_closed_form() {
        let (h, g) = (c(0.3, -0.2), c(0.1, 0.4));
        let s = scalar_chain(h, g);
        let z = ActivationTopology::dense(1, 1);
        let ctx = CascadeContext::new(&s, &z, 0.8).unwrap();
        let p = 2.0f64;
        let w = CVector::from_element(1, c(p.sqrt(), 0.0));
        let v = CVector::from_element(1, ONE);
        let expect = p * 0.64 * h.norm_sqr() * g.norm_sqr() / 1e-6;
        assert_relative_eq!(snr(&ctx, &w, &v, 1e-6).unwrap(), expect, max_relative = 1e-12);
        assert!(snr(&ctx, &w, &CVector::zeros(1), 1e-6).is_err());
    }

    #[test]
    fn inactive_everywhere_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = random_channels(&mut rng, 2, 2, 4, 2);
        let z = ActivationTopology::new(2, 4, vec![false; 8]).unwrap();
        let ctx = CascadeContext::new(&ch, &z, 0.8).unwrap();
        let w = random_vector(&mut rng, 2);
        let v = random_vector(&mut rng, 2);
        assert_eq!(snr(&ctx, &w, &v, 1e-6).unwrap(), 0.0);
        assert!(matches!(optimal_combiner(&ctx, &w), Err(Error::DegenerateChannel(_))));
        let budget = LinkBudget { p_max: 1.0, noise_power: 1e-6 };
        let sol = ao_solve(ctx, budget, AoParams::default(), AoStart::Canonical).unwrap();
        assert!(sol.degenerate);
        assert_eq!((sol.snr, sol.rate), (0.0, 0.0));
    }

    #[test]
    fn snr_matches_raw_matrix_products() {
        // oracle: Eq.-style evaluation with explicit diag matrices
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let ch = random_channels(&mut rng, 2, 2, 4, 2);
            let bits: Vec<bool> = (0..8).map(|_| rng.random_bool(0.7)).collect();
            let z = ActivationTopology::new(2, 4, bits.clone()).unwrap();
            let mut ctx = CascadeContext::new(&ch, &z, 0.8).unwrap();
            let theta = vec![random_phases(&mut rng, 4), random_phases(&mut rng, 4)];
            ctx.set_theta(theta.clone()).unwrap();
            let w = random_vector(&mut rng, 2);
            let v = random_vector(&mut rng, 2);

            let mut t = CMatrix::identity(2, 2);
            for l in 0..2 {
                let zd = CMatrix::from_diagonal(&CVector::from_iterator(
                    4,
                    bits[l * 4..(l + 1) * 4].iter().map(|&b| if b { ONE } else { ZERO }),
                ));
                let td = CMatrix::from_diagonal(&theta[l]);
                t = (zd * td * &ch.h[l] * Complex64::from(0.8)) * t;
            }
            let num = (v.adjoint() * ch.g.adjoint() * t * &w)[(0, 0)].norm_sqr();
            let expect = num / (v.norm_squared() * 1e-6);
            let got = snr(&ctx, &w, &v, 1e-6).unwrap();
            assert_relative_eq!(got, expect, max_relative = 1e-10);
        }
    }

    #[test]
    fn combiner_cases() {
        let s = scalar_chain(c(0.3, -0.2), c(0.1, 0.4));
        let z = ActivationTopology::dense(1, 1);
        let ctx = CascadeContext::new(&s, &z, 0.8).unwrap();
        let v = optimal_combiner(&ctx, &CVector::from_element(1, ONE)).unwrap();
        assert_relative_eq!(v[0].norm(), 1.0, epsilon = 1e-15);

        // effective channel along e1: a g with a single nonzero column
        let mut g = CMatrix::zeros(2, 3);
        g[(0, 0)] = c(0.2, 0.7);
        g[(1, 0)] = c(-0.4, 0.1);
        let ch = ChannelSet {
            h: vec![CMatrix::from_element(2, 1, c(1.0, 0.5))],
            g,
        };
        let z = ActivationTopology::dense(1, 2);
        let ctx = CascadeContext::new(&ch, &z, 0.8).unwrap();
        let v = optimal_combiner(&ctx, &CVector::from_element(1, ONE)).unwrap();
        assert_relative_eq!(v[0].re, 1.0, epsilon = 1e-14);
        assert_eq!(v[0].im, 0.0);
        assert!(v[1].norm() < 1e-15 && v[2].norm() < 1e-15);
    }

    #[test]
    fn combiner_agrees_with_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let ch = random_channels(&mut rng, 2, 4, 3, 2);
            let z = ActivationTopology::dense(2, 3);
            let ctx = CascadeContext::new(&ch, &z, 0.9).unwrap();
            let w = random_vector(&mut rng, 2);
            let v = optimal_combiner(&ctx, &w).unwrap();
            let e = ctx.effective_channel(&w);
            let outer = &e * e.adjoint();
            let p = principal_eigenvector(&outer, 1e-12, 10_000).unwrap();
            assert!((&v - &p).norm() < 1e-10);
            // rank-1 identity |v^H e| = ‖e‖
            assert_relative_eq!(inner(&v, &e).norm(), e.norm(), max_relative = 1e-12);
        }
    }

    #[test]
    fn power_iteration_on_full_rank_hermitian() {
        // eigenvalues 5 and 1 with eigenvector (1, i)/√2 for 5
        let m = CMatrix::from_row_slice(2, 2, &[c(3.0, 0.0), c(0.0, -2.0), c(0.0, 2.0), c(3.0, 0.0)]);
        let v = principal_eigenvector(&m, 1e-12, 10_000).unwrap();
        let mv = &m * &v;
        assert!((mv - &v * Complex64::from(5.0)).norm() < 1e-9);
        assert!(principal_eigenvector(&CMatrix::zeros(2, 2), 1e-12, 10).is_err());
    }

    #[test]
    fn phases_are_trivial_when_aligned() {
        let s = scalar_chain(c(0.5, 0.0), c(0.2, 0.0));
        let z = ActivationTopology::dense(1, 1);
        let ctx = CascadeContext::new(&s, &z, 0.8).unwrap();
        let one = CVector::from_element(1, ONE);
        let t = optimal_phases(&ctx, &one, &one, 0).unwrap();
        assert_relative_eq!(t[0].re, 1.0, epsilon = 1e-15);
        assert!(t[0].im.abs() < 1e-15);
        assert!(optimal_phases(&ctx, &one, &one, 1).is_err());
    }

    #[test]
    fn phases_cophase_every_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = random_channels(&mut rng, 2, 2, 5, 3);
        let bits: Vec<bool> = (0..15).map(|i| i % 4 != 1).collect();
        let z = ActivationTopology::new(3, 5, bits).unwrap();
        let mut ctx = CascadeContext::new(&ch, &z, 0.8).unwrap();
        let w = random_vector(&mut rng, 2);
        let v = random_vector(&mut rng, 2);
        for l in 0..3 {
            let t = optimal_phases(&ctx, &w, &v, l).unwrap();
            ctx.theta[l] = t.clone();
            let (incident, _) = ctx.propagate(&w);
            let (back, _) = ctx.backward(&v);
            for n in 0..5 {
                assert_relative_eq!(t[n].norm(), 1.0, epsilon = 1e-14);
                if !z.layer(l)[n] {
                    assert_eq!(t[n], ONE);
                    continue;
                }
                let term = back[l][n].conj() * incident[l][n] * t[n];
                assert!(term.arg().abs() < 1e-9, "layer {l} element {n}: {term}");
            }
        }
    }

    #[test]
    fn precoder_meets_power_with_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = random_channels(&mut rng, 2, 3, 4, 2);
        let z = ActivationTopology::dense(2, 4);
        let ctx = CascadeContext::new(&ch, &z, 0.8).unwrap();
        let v = random_vector(&mut rng, 3);
        for p in [1e-3, 0.5, 7.0] {
            let w = optimal_precoder(&ctx, &v, p).unwrap();
            assert_relative_eq!(w.norm_squared(), p, max_relative = 1e-12);
        }
        let s = scalar_chain(c(0.3, 0.1), c(0.2, 0.2));
        let z1 = ActivationTopology::dense(1, 1);
        let ctx = CascadeContext::new(&s, &z1, 0.8).unwrap();
        let w = optimal_precoder(&ctx, &CVector::from_element(1, ONE), 4.0).unwrap();
        assert_relative_eq!(w[0].norm(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn scalar_ao_converges_to_closed_form() {
        let (h, g) = (c(0.3, -0.2), c(0.1, 0.4));
        let s = scalar_chain(h, g);
        let z = ActivationTopology::dense(1, 1);
        let ctx = CascadeContext::new(&s, &z, 0.8).unwrap();
        let budget = LinkBudget { p_max: 0.5, noise_power: 1e-6 };
        let sol = ao_solve(ctx, budget, AoParams::default(), AoStart::Canonical).unwrap();
        let expect = 0.5 * 0.64 * h.norm_sqr() * g.norm_sqr() / 1e-6;
        assert_relative_eq!(sol.snr, expect, max_relative = 1e-10);
        assert_eq!(sol.iterations, 1);
        assert!(sol.converged);
        assert_relative_eq!(sol.rate, (1.0 + sol.snr).log2(), max_relative = 1e-15);
    }

    #[test]
    fn solution_dump_has_every_block() {
        let s = scalar_chain(c(0.3, -0.2), c(0.1, 0.4));
        let z = ActivationTopology::dense(1, 1);
        let ctx = CascadeContext::new(&s, &z, 0.8).unwrap();
        let budget = LinkBudget { p_max: 1.0, noise_power: 1e-6 };
        let sol = ao_solve(ctx, budget, AoParams::default(), AoStart::Canonical).unwrap();
        let mut buf = Vec::new();
        sol.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for key in ["snr ", "rate ", "iterations 1", "converged true", "w 1", "v 1", "theta1 1"] {
            assert!(text.contains(key), "missing {key}");
        }
    }
}
