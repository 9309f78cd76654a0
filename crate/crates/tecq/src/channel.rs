//! Channel models: i.i.d. Rayleigh fading, first-order Gauss-Markov temporal
//! correlation, and the exponential spatial-correlation model, plus the
//! dominant-eigenvector computations the quantizers need.
//!
//! All draws are pure functions of `(seed, stream, position)`; see [`crate::rng`].

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::rng::SimRng;

/// How the exponential model's correlation phase is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationPhase {
    /// Redrawn uniformly on [0, 2π) for every realization.
    PerRealization,
    /// Pinned (useful for cross-implementation golden tests).
    Fixed(f64),
}

/// i.i.d. CN(0, 1) vector: Rayleigh fading with unit per-antenna power.
pub fn draw_iid_vec(rng: &mut SimRng, n: usize) -> Vec<C64> {
    rng.complex_normal_vec(n)
}

/// i.i.d. CN(0, 1) matrix (`num_tx x num_rx`).
pub fn draw_iid_mat(rng: &mut SimRng, rows: usize, cols: usize) -> CMat {
    CMat::from_data(rows, cols, rng.complex_normal_vec(rows * cols))
}

/// One step of the first-order Gauss-Markov process
/// `h' = η h + sqrt(1 - η²) g` with fresh innovation `g ~ CN(0, I)`.
pub fn evolve_gauss_markov(rng: &mut SimRng, eta: f64, h_prev: &[C64]) -> Vec<C64> {
    let w = (1.0 - eta * eta).max(0.0).sqrt();
    h_prev.iter().map(|&h| h * eta + rng.complex_normal() * w).collect()
}

/// Temporal correlation coefficient from the classical isotropic-scattering
/// model: `η = J0(2π f_D τ)` with Doppler `f_D = v f_c / c`.
pub fn jakes_eta(carrier_hz: f64, tau_s: f64, speed_mps: f64) -> f64 {
    const C: f64 = 299_792_458.0;
    let doppler = speed_mps * carrier_hz / C;
    bessel_j0(std::f64::consts::TAU * doppler * tau_s)
}

/// Zeroth-order Bessel function of the first kind, accurate to ~1e-8 over
/// [0, 20]: power series below 12, Hankel asymptotic expansion above.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 12.0 {
        // sum_k (-1)^k (x^2/4)^k / (k!)^2
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..80 {
            term *= -q / ((k * k) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
        }
        sum
    } else {
        // J0(x) ~ sqrt(2/(πx)) [P(x) cos(x - π/4) - Q(x) sin(x - π/4)]
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        // Coefficients A_m = prod_{i=1..m} -(2i-1)^2 / (m 8); P takes the
        // even ones, Q the odd ones.
        let p = 1.0
            + inv2 * (-9.0 / 128.0 + inv2 * (3675.0 / 32768.0 + inv2 * (-2_401_245.0 / 4_194_304.0)));
        let q = inv
            * (-1.0 / 8.0
                + inv2 * (75.0 / 1024.0 + inv2 * (-59535.0 / 262_144.0 + inv2 * (57_972_915.0 / 33_554_432.0))));
        let chi = x - std::f64::consts::FRAC_PI_4;
        (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Exponential spatial correlation, `[R]_{l,r} = (α e^{jθ})^{r-l}` for
/// `l <= r` (conjugate-symmetric below). The sampler precomputes the
/// Hermitian square root and dominant eigenvector of the phase-free Toeplitz
/// base `R0 = R(θ=0)` once; for any phase, `R(θ) = D R0 D^H` with
/// `D = diag(e^{-jθl})`, so `R(θ)^{1/2} = D R0^{1/2} D^H` is again the
/// Hermitian square root and `u1(R(θ)) = D u1(R0)`.
#[derive(Debug, Clone)]
pub struct ExpSpatialSampler {
    alpha: f64,
    n: usize,
    phase_mode: CorrelationPhase,
    sqrt_base: CMat,
    u1_base: Vec<C64>,
    eigvals: Vec<f64>,
}

/// One realization from the exponential model.
#[derive(Debug, Clone)]
pub struct ExpSpatialDraw {
    pub vartheta: f64,
    pub h: Vec<C64>,
}

impl ExpSpatialSampler {
    pub fn new(num_antennas: usize, alpha: f64, phase_mode: CorrelationPhase) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::config(format!(
                "exponential correlation needs 0 <= alpha < 1, got {alpha}"
            )));
        }
        let r0 = CMat::from_fn(num_antennas, num_antennas, |l, r| {
            C64::new(alpha.powi((r as i32 - l as i32).abs()), 0.0)
        });
        let sqrt_base = linalg::hermitian_sqrt(&r0)?;
        let (eigvals, vecs) = linalg::hermitian_eigen(&r0)?;
        let u1_base = vecs.col(0).to_vec();
        Ok(ExpSpatialSampler { alpha, n: num_antennas, phase_mode, sqrt_base, u1_base, eigvals })
    }

    pub fn num_antennas(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Eigenvalues of the correlation matrix (phase-independent), in
    /// nonincreasing order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    fn phase_diag(&self, vartheta: f64) -> Vec<C64> {
        (0..self.n)
            .map(|l| {
                let a = -vartheta * l as f64;
                C64::new(a.cos(), a.sin())
            })
            .collect()
    }

    /// The correlation matrix for a given phase, straight from the formula.
    pub fn correlation(&self, vartheta: f64) -> CMat {
        CMat::from_fn(self.n, self.n, |l, r| {
            let d = r as i32 - l as i32;
            let mag = self.alpha.powi(d.abs());
            let ang = vartheta * d as f64;
            C64::new(mag * ang.cos(), mag * ang.sin())
        })
    }

    /// Hermitian square root `R(θ)^{1/2} = D R0^{1/2} D^H`.
    pub fn sqrt_correlation(&self, vartheta: f64) -> CMat {
        let d = self.phase_diag(vartheta);
        CMat::from_fn(self.n, self.n, |r, c| d[r] * self.sqrt_base[(r, c)] * d[c].conj())
    }

    /// Dominant eigenvector of `R(θ)`.
    pub fn dominant_eigvec(&self, vartheta: f64) -> Vec<C64> {
        let d = self.phase_diag(vartheta);
        d.iter().zip(&self.u1_base).map(|(p, u)| p * u).collect()
    }

    /// Draws `(θ, h = R(θ)^{1/2} h_w)`. The phase is consumed from `rng`
    /// before the white vector, so replaying a stream reproduces the
    /// realization exactly.
    pub fn draw(&self, rng: &mut SimRng) -> ExpSpatialDraw {
        let vartheta = match self.phase_mode {
            CorrelationPhase::PerRealization => rng.angle(),
            CorrelationPhase::Fixed(t) => t,
        };
        let hw = rng.complex_normal_vec(self.n);
        let d = self.phase_diag(vartheta);
        // h = D (R0^{1/2} (D^H h_w))
        let rotated: Vec<C64> = d.iter().zip(&hw).map(|(p, x)| p.conj() * x).collect();
        let mixed = self.sqrt_base.mul_vec(&rotated);
        let h = d.iter().zip(&mixed).map(|(p, x)| p * x).collect();
        ExpSpatialDraw { vartheta, h }
    }
}

/// First `k` dominant eigenvectors of a Hermitian PSD matrix (see
/// [`linalg::dominant_eigenvectors`]); returns the `M x K` orthonormal
/// column matrix.
pub fn dominant_eigenvectors(a: &CMat, k: usize) -> Result<CMat> {
    let (_, vecs) = linalg::dominant_eigenvectors(a, k)?;
    Ok(vecs)
}
