//! Seeded Monte Carlo experiment runners.
//!
//! Every runner is deterministic in its spec (including the seed) and in
//! nothing else: trials draw from per-trial substreams, trial results are
//! collected in trial order, and reductions are sequential, so the thread
//! count changes speed only, never results. Channel substreams are shared
//! across schemes at a sweep point, so scheme comparisons are paired.

use crate::channel::{self, CorrelationPhase, ExpSpatialSampler};
use crate::codebook::{map_codewords_to_branches, Codebook, MappingKind};
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, vdot, CMat};
use crate::quantizer::{
    quantize, quantize_subspace, quantize_vq, reconstruct, reconstruct_subspace,
    uniform_theta_grid, QuantizerConfig,
};
use crate::rng::{derive_seed, SimRng};
use crate::tespa::{tespa_spatial, tespa_update, TespaConfig, TespaState};
use crate::trellis::ConvCode;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Domain-separation tags for [`derive_seed`].
const TAG_CHANNEL: u64 = 0x43484e4c; // "CHNL"
const TAG_SCHEME: u64 = 0x5343484d; // "SCHM"
const TAG_CODEBOOK: u64 = 0x43444241; // "CDBA"

/// One emitted measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep: String,
    pub metric: String,
    pub value: f64,
    pub halfwidth: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    TeEd,
    TeLte,
    TeLteRandomMap,
    Rvq,
    RvqAnalytic,
    Genie,
    /// Placeholder for an external reference scheme that is intentionally
    /// not implemented; selecting it is a configuration error.
    NtcqReferenceOff,
}

impl SchemeKind {
    pub fn parse(s: &str) -> Result<SchemeKind> {
        Ok(match s {
            "te_ed" => SchemeKind::TeEd,
            "te_lte" => SchemeKind::TeLte,
            "te_lte_random_map" => SchemeKind::TeLteRandomMap,
            "rvq" => SchemeKind::Rvq,
            "rvq_analytic" => SchemeKind::RvqAnalytic,
            "genie" => SchemeKind::Genie,
            "ntcq_reference_off" => SchemeKind::NtcqReferenceOff,
            other => return Err(Error::config(format!("unknown scheme {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::TeEd => "te_ed",
            SchemeKind::TeLte => "te_lte",
            SchemeKind::TeLteRandomMap => "te_lte_random_map",
            SchemeKind::Rvq => "rvq",
            SchemeKind::RvqAnalytic => "rvq_analytic",
            SchemeKind::Genie => "genie",
            SchemeKind::NtcqReferenceOff => "ntcq_reference_off",
        }
    }
}

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// Average-beamforming-gain sweep over antenna counts (MISO, i.i.d.
/// Rayleigh).
#[derive(Debug, Clone)]
pub struct BeamformingSpec {
    pub schemes: Vec<SchemeKind>,
    pub mt_sweep: Vec<usize>,
    /// Trellis input bits per stage; bits per entry is `input_bits / block_len`.
    pub input_bits: u32,
    pub block_len: usize,
    pub k_theta: usize,
    pub trials: u64,
    pub seed: u64,
    pub threads: Option<usize>,
}

/// Achievable-rate sweep over SNR (MIMO, rank-K precoding).
#[derive(Debug, Clone)]
pub struct RateSpec {
    pub schemes: Vec<SchemeKind>,
    pub mt: usize,
    pub num_rx: usize,
    pub rank: usize,
    pub snr_db: Vec<f64>,
    pub input_bits: u32,
    pub block_len: usize,
    pub k_theta: usize,
    pub trials: u64,
    pub seed: u64,
    pub threads: Option<usize>,
}

/// Differential tracking over fading blocks (Gauss-Markov temporal model):
/// gain versus update index k for block-shifted / unshifted updates, plus
/// the no-update flat-codebook baseline (analytic).
#[derive(Debug, Clone)]
pub struct TespaTemporalSpec {
    pub mt: usize,
    pub eta: f64,
    pub k_max: usize,
    /// Input bits of the initial quantization at k = 0 (max-min distance
    /// codebook).
    pub input_bits: u32,
    /// Input bits of the differential updates at k >= 1.
    pub spa_input_bits: u32,
    pub block_len: usize,
    pub k_theta: usize,
    pub trials: u64,
    pub seed: u64,
    pub threads: Option<usize>,
}

/// One-shot phase adjustment on spatially correlated channels, swept over
/// antenna counts: the quantized dominant eigenvector is rotated toward
/// each realization, against direct quantization at higher rate.
#[derive(Debug, Clone)]
pub struct TespaSpatialSpec {
    pub mt_sweep: Vec<usize>,
    pub alpha: f64,
    /// Input bits for quantizing the dominant eigenvector (DFT codebook).
    pub u1_input_bits: u32,
    /// Input bits of the phase adjustment.
    pub spa_input_bits: u32,
    /// Input bits of the direct-quantization reference (DFT codebook).
    pub direct_input_bits: u32,
    pub block_len: usize,
    pub k_theta: usize,
    pub trials: u64,
    pub seed: u64,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum TespaSpec {
    Temporal(TespaTemporalSpec),
    Spatial(TespaSpatialSpec),
}

/// One line of the session trace (JSON-lines replay format).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub feedback_bits: String,
    pub theta_index: usize,
    pub metric: f64,
    pub gain_db: f64,
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn run_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn validate_common(trials: u64, k_theta: usize, block_len: usize, mts: &[usize]) -> Result<()> {
    if trials == 0 {
        return Err(Error::config("trials must be at least 1"));
    }
    if k_theta == 0 {
        return Err(Error::config("phase grid size must be at least 1"));
    }
    if mts.is_empty() {
        return Err(Error::config("sweep must contain at least one point"));
    }
    for &mt in mts {
        if block_len == 0 || mt % block_len != 0 {
            return Err(Error::config(format!(
                "block length {block_len} must divide every antenna count (got {mt})"
            )));
        }
    }
    Ok(())
}

fn check_input_bits(input_bits: u32) -> Result<()> {
    if !(1..=3).contains(&input_bits) {
        return Err(Error::config(format!(
            "supported per-stage input bits are 1, 2 or 3 (got {input_bits})"
        )));
    }
    Ok(())
}

/// Mean and normal-approximation 95% confidence half-width.
fn mean_halfwidth(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Converts a linear-scale mean and half-width to dB (delta method).
fn to_db(mean: f64, halfwidth: f64) -> (f64, f64) {
    let db = 10.0 * mean.log10();
    let hw = 10.0 / std::f64::consts::LN_10 * halfwidth / mean;
    (db, hw)
}

/// Closed-form approximation of the flat random-codebook beamforming gain,
/// `M_t (1 - 2^{-Btot/(M_t-1)})`, in linear scale.
pub fn rvq_analytic_gain(mt: usize, total_bits: u32) -> f64 {
    let m = mt as f64;
    m * (1.0 - 2f64.powf(-(total_bits as f64) / (m - 1.0)))
}

/// Builds the quantizer configuration for a trellis scheme at one antenna
/// count. The max-min-distance codebook is designed once per (shape, seed)
/// and shared across sweep points.
fn trellis_cfg(
    scheme: SchemeKind,
    mt: usize,
    block_len: usize,
    input_bits: u32,
    k_theta: usize,
    rank: usize,
    seed: u64,
    mapping_kind: MappingKind,
) -> Result<QuantizerConfig> {
    let code = ConvCode::for_input_bits(input_bits)?;
    let n_words = code.num_labels();
    let cb = match scheme {
        SchemeKind::TeEd => Codebook::design_ed(
            block_len,
            n_words,
            rank,
            derive_seed(seed, &[TAG_CODEBOOK, block_len as u64, n_words as u64, rank as u64]),
        )?,
        SchemeKind::TeLte | SchemeKind::TeLteRandomMap => Codebook::lte_dft(block_len, n_words)?,
        other => {
            return Err(Error::config(format!(
                "{} is not a trellis scheme",
                other.name()
            )))
        }
    };
    let mapping = map_codewords_to_branches(&cb, &code, mapping_kind, None)?;
    QuantizerConfig::new(mt, block_len, code, &cb, mapping, uniform_theta_grid(k_theta))
}

// ---------------------------------------------------------------------------
// Beamforming experiment
// ---------------------------------------------------------------------------

pub fn run_beamforming_experiment(spec: &BeamformingSpec) -> Result<Vec<ResultRow>> {
    validate_beamforming(spec)?;
    run_pool(spec.threads, || beamforming_inner(spec))?
}

fn validate_beamforming(spec: &BeamformingSpec) -> Result<()> {
    validate_common(spec.trials, spec.k_theta, spec.block_len, &spec.mt_sweep)?;
    check_input_bits(spec.input_bits)?;
    if spec.schemes.is_empty() {
        return Err(Error::config("no schemes selected"));
    }
    for s in &spec.schemes {
        if *s == SchemeKind::NtcqReferenceOff {
            return Err(Error::config(
                "scheme ntcq_reference_off is a deliberately unimplemented external \
                 reference; compare against rvq_analytic instead",
            ));
        }
        if *s == SchemeKind::Rvq {
            for &mt in &spec.mt_sweep {
                let total = spec.input_bits as usize * mt / spec.block_len;
                if total > crate::codebook::MAX_FLAT_BITS as usize {
                    return Err(Error::feasibility(format!(
                        "simulated rvq needs {total} feedback bits at mt={mt}; beyond \
                         {} bits use rvq_analytic",
                        crate::codebook::MAX_FLAT_BITS
                    )));
                }
            }
        }
    }
    Ok(())
}

fn beamforming_inner(spec: &BeamformingSpec) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (sweep_idx, &mt) in spec.mt_sweep.iter().enumerate() {
        let total_bits = (spec.input_bits as usize * mt / spec.block_len) as u32;
        let channel_base = derive_seed(spec.seed, &[TAG_CHANNEL, sweep_idx as u64]);
        for (scheme_idx, &scheme) in spec.schemes.iter().enumerate() {
            let metric = format!("{}.gain_db", scheme.name());
            if scheme == SchemeKind::RvqAnalytic {
                rows.push(ResultRow {
                    sweep: format!("mt={mt}"),
                    metric,
                    value: 10.0 * rvq_analytic_gain(mt, total_bits).log10(),
                    halfwidth: 0.0,
                    trials: 0,
                    seed: spec.seed,
                });
                continue;
            }
            let scheme_base =
                derive_seed(spec.seed, &[TAG_SCHEME, sweep_idx as u64, scheme_idx as u64]);
            let gains = beamforming_gains(spec, scheme, mt, channel_base, scheme_base)?;
            let (mean, hw) = mean_halfwidth(&gains);
            let (db, hw_db) = to_db(mean, hw);
            rows.push(ResultRow {
                sweep: format!("mt={mt}"),
                metric,
                value: db,
                halfwidth: hw_db,
                trials: spec.trials,
                seed: spec.seed,
            });
        }
    }
    Ok(rows)
}

fn beamforming_gains(
    spec: &BeamformingSpec,
    scheme: SchemeKind,
    mt: usize,
    channel_base: u64,
    scheme_base: u64,
) -> Result<Vec<f64>> {
    let total_bits = (spec.input_bits as usize * mt / spec.block_len) as u32;
    match scheme {
        SchemeKind::Genie => Ok((0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = SimRng::substream(channel_base, t);
                norm_sq(&channel::draw_iid_vec(&mut rng, mt))
            })
            .collect()),
        SchemeKind::Rvq => Ok((0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let mut ch = SimRng::substream(channel_base, t);
                let h = channel::draw_iid_vec(&mut ch, mt);
                let mut sr = SimRng::substream(scheme_base, t);
                let cb = Codebook::rvq_with_rng(mt, total_bits, &mut sr)
                    .expect("validated total bits");
                let idx = quantize_vq(&cb, &h).expect("validated dimensions");
                vdot(&h, cb.word(idx).col(0)).norm_sqr()
            })
            .collect()),
        SchemeKind::TeEd | SchemeKind::TeLte => {
            let cfg = trellis_cfg(
                scheme,
                mt,
                spec.block_len,
                spec.input_bits,
                spec.k_theta,
                1,
                spec.seed,
                MappingKind::Proposed,
            )?;
            Ok((0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    let mut ch = SimRng::substream(channel_base, t);
                    let h = channel::draw_iid_vec(&mut ch, mt);
                    let (fw, _) = quantize(&cfg, &h).expect("validated dimensions");
                    let c = reconstruct(&cfg, &fw).expect("own feedback");
                    vdot(&h, &c).norm_sqr()
                })
                .collect())
        }
        SchemeKind::TeLteRandomMap => {
            let code = ConvCode::for_input_bits(spec.input_bits)?;
            let cb = Codebook::lte_dft(spec.block_len, code.num_labels())?;
            Ok((0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    let mut ch = SimRng::substream(channel_base, t);
                    let h = channel::draw_iid_vec(&mut ch, mt);
                    // Fresh random bijection per trial.
                    let mut sr = SimRng::substream(scheme_base, t);
                    let mapping =
                        map_codewords_to_branches(&cb, &code, MappingKind::Random, Some(&mut sr))
                            .expect("sizes match");
                    let cfg = QuantizerConfig::new(
                        mt,
                        spec.block_len,
                        code.clone(),
                        &cb,
                        mapping,
                        uniform_theta_grid(spec.k_theta),
                    )
                    .expect("validated shape");
                    let (fw, _) = quantize(&cfg, &h).expect("validated dimensions");
                    let c = reconstruct(&cfg, &fw).expect("own feedback");
                    vdot(&h, &c).norm_sqr()
                })
                .collect())
        }
        SchemeKind::RvqAnalytic | SchemeKind::NtcqReferenceOff => {
            Err(Error::config("scheme has no Monte Carlo trials"))
        }
    }
}

// ---------------------------------------------------------------------------
// Achievable-rate experiment
// ---------------------------------------------------------------------------

pub fn run_rate_experiment(spec: &RateSpec) -> Result<Vec<ResultRow>> {
    validate_rate(spec)?;
    run_pool(spec.threads, || rate_inner(spec))?
}

fn validate_rate(spec: &RateSpec) -> Result<()> {
    validate_common(spec.trials, spec.k_theta, spec.block_len, &[spec.mt])?;
    check_input_bits(spec.input_bits)?;
    if spec.rank > spec.num_rx {
        return Err(Error::config(format!(
            "rank {} exceeds the receive antenna count {}",
            spec.rank, spec.num_rx
        )));
    }
    if !(1..=2).contains(&spec.rank) {
        return Err(Error::config("supported transmission ranks are 1 and 2"));
    }
    if spec.snr_db.is_empty() {
        return Err(Error::config("sweep must contain at least one SNR point"));
    }
    for s in &spec.schemes {
        match s {
            SchemeKind::TeEd | SchemeKind::Genie => {}
            SchemeKind::Rvq => {
                let total = spec.input_bits as usize * spec.mt / spec.block_len;
                if total > crate::codebook::MAX_FLAT_BITS as usize {
                    return Err(Error::feasibility(format!(
                        "simulated rvq needs {total} feedback bits; cap is {}",
                        crate::codebook::MAX_FLAT_BITS
                    )));
                }
            }
            other => {
                return Err(Error::config(format!(
                    "scheme {} is not available in the rate experiment",
                    other.name()
                )))
            }
        }
    }
    Ok(())
}

/// `log2 det(I_K + (snr/K) F^H G F)` for K <= 2 (G Hermitian PSD).
fn rate_bps_hz(f: &CMat, g: &CMat, snr: f64) -> f64 {
    let k = f.cols();
    let fgf = f.adjoint_mul(&g.mul(f));
    let c = snr / k as f64;
    match k {
        1 => (1.0 + c * fgf[(0, 0)].re).log2(),
        2 => {
            let a = 1.0 + c * fgf[(0, 0)].re;
            let d = 1.0 + c * fgf[(1, 1)].re;
            let b = c * fgf[(0, 1)];
            (a * d - b.norm_sqr()).log2()
        }
        _ => unreachable!("rank validated to 1 or 2"),
    }
}

fn rate_inner(spec: &RateSpec) -> Result<Vec<ResultRow>> {
    let total_bits = (spec.input_bits as usize * spec.mt / spec.block_len) as u32;
    let channel_base = derive_seed(spec.seed, &[TAG_CHANNEL, 0]);
    let snrs: Vec<f64> = spec.snr_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
    let mut rows = Vec::new();
    for (scheme_idx, &scheme) in spec.schemes.iter().enumerate() {
        let scheme_base = derive_seed(spec.seed, &[TAG_SCHEME, 0, scheme_idx as u64]);
        let cfg = match scheme {
            SchemeKind::TeEd => Some(trellis_cfg(
                scheme,
                spec.mt,
                spec.block_len,
                spec.input_bits,
                spec.k_theta,
                spec.rank,
                spec.seed,
                MappingKind::Proposed,
            )?),
            _ => None,
        };
        // rates[trial][snr]
        let rates: Vec<Vec<f64>> = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let mut ch = SimRng::substream(channel_base, t);
                let h = channel::draw_iid_mat(&mut ch, spec.mt, spec.num_rx);
                let g = h.mul(&h.adjoint());
                let g = CMat::from_fn(spec.mt, spec.mt, |r, c| {
                    (g[(r, c)] + g[(c, r)].conj()) * 0.5
                });
                let u = channel::dominant_eigenvectors(&g, spec.rank)
                    .expect("G is Hermitian PSD by construction");
                let f = match scheme {
                    SchemeKind::Genie => u.scale(1.0 / (spec.rank as f64).sqrt()),
                    SchemeKind::TeEd => {
                        let cfg = cfg.as_ref().expect("configured above");
                        let (fw, _) = quantize_subspace(cfg, &u).expect("orthonormal input");
                        reconstruct_subspace(cfg, &fw).expect("own feedback")
                    }
                    SchemeKind::Rvq => {
                        let mut sr = SimRng::substream(scheme_base, t);
                        let cb = Codebook::rvq_matrix_with_rng(
                            spec.mt, spec.rank, total_bits, &mut sr,
                        )
                        .expect("validated total bits");
                        // Select by subspace alignment ||U^H F||_F^2.
                        let mut best = (f64::NEG_INFINITY, 0usize);
                        for (i, w) in cb.words().iter().enumerate() {
                            let v = u.adjoint_mul(w).frobenius_sq();
                            if v > best.0 {
                                best = (v, i);
                            }
                        }
                        cb.word(best.1).clone()
                    }
                    _ => unreachable!("validated schemes"),
                };
                snrs.iter().map(|&snr| rate_bps_hz(&f, &g, snr)).collect()
            })
            .collect();
        for (si, &snr_db) in spec.snr_db.iter().enumerate() {
            let vals: Vec<f64> = rates.iter().map(|r| r[si]).collect();
            let (mean, hw) = mean_halfwidth(&vals);
            rows.push(ResultRow {
                sweep: format!("snr_db={snr_db}"),
                metric: format!("{}.rate_bps_hz", scheme.name()),
                value: mean,
                halfwidth: hw,
                trials: spec.trials,
                seed: spec.seed,
            });
        }
    }
    // Stable row order: sweep-major like the other experiments.
    rows.sort_by(|a, b| {
        spec.snr_db
            .iter()
            .position(|s| a.sweep == format!("snr_db={s}"))
            .cmp(&spec.snr_db.iter().position(|s| b.sweep == format!("snr_db={s}")))
            .then_with(|| {
                let pa = spec.schemes.iter().position(|s| a.metric.starts_with(s.name()));
                let pb = spec.schemes.iter().position(|s| b.metric.starts_with(s.name()));
                pa.cmp(&pb)
            })
    });
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Differential experiments
// ---------------------------------------------------------------------------

pub fn run_tespa_experiment(spec: &TespaSpec) -> Result<Vec<ResultRow>> {
    match spec {
        TespaSpec::Temporal(s) => run_tespa_temporal(s),
        TespaSpec::Spatial(s) => run_tespa_spatial(s),
    }
}

fn validate_tespa_temporal(spec: &TespaTemporalSpec) -> Result<()> {
    validate_common(spec.trials, spec.k_theta, spec.block_len, &[spec.mt])?;
    check_input_bits(spec.input_bits)?;
    check_input_bits(spec.spa_input_bits)?;
    if !(0.0..=1.0).contains(&spec.eta) {
        return Err(Error::config(format!("eta must lie in [0, 1], got {}", spec.eta)));
    }
    Ok(())
}

pub fn run_tespa_temporal(spec: &TespaTemporalSpec) -> Result<Vec<ResultRow>> {
    validate_tespa_temporal(spec)?;
    run_pool(spec.threads, || tespa_temporal_inner(spec))?
}

struct TemporalTrialGains {
    shifted: Vec<f64>,
    unshifted: Vec<f64>,
}

fn tespa_temporal_context(
    spec: &TespaTemporalSpec,
) -> Result<(QuantizerConfig, TespaConfig, TespaConfig)> {
    let tec_cfg = trellis_cfg(
        SchemeKind::TeEd,
        spec.mt,
        spec.block_len,
        spec.input_bits,
        spec.k_theta,
        1,
        spec.seed,
        MappingKind::Proposed,
    )?;
    let spa_code = ConvCode::for_input_bits(spec.spa_input_bits)?;
    let shifted = TespaConfig::new(
        spec.mt,
        spec.block_len,
        spa_code.clone(),
        uniform_theta_grid(spec.k_theta),
        true,
    )?;
    let unshifted = TespaConfig::new(
        spec.mt,
        spec.block_len,
        spa_code,
        uniform_theta_grid(spec.k_theta),
        false,
    )?;
    Ok((tec_cfg, shifted, unshifted))
}

fn tespa_temporal_trial(
    spec: &TespaTemporalSpec,
    tec_cfg: &QuantizerConfig,
    shifted_cfg: &TespaConfig,
    unshifted_cfg: &TespaConfig,
    channel_base: u64,
    trial: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> TemporalTrialGains {
    let mut rng = SimRng::substream(channel_base, trial);
    let mut h = channel::draw_iid_vec(&mut rng, spec.mt);
    let (fw0, metric0) = quantize(tec_cfg, &h).expect("validated dimensions");
    let h_hat0 = reconstruct(tec_cfg, &fw0).expect("own feedback");
    let gain0 = vdot(&h, &h_hat0).norm_sqr();
    if let Some(rows) = trace.as_deref_mut() {
        rows.push(TraceRow {
            k: 0,
            feedback_bits: bit_string(&fw0.inputs, tec_cfg.code().input_bits()),
            theta_index: fw0.theta_index,
            metric: metric0,
            gain_db: 10.0 * gain0.log10(),
        });
    }
    let mut shifted = vec![gain0];
    let mut unshifted = vec![gain0];
    let mut st_s = TespaState::from_initial(h_hat0.clone()).expect("unit-norm reconstruction");
    let mut st_u = st_s.clone();
    for k in 1..=spec.k_max {
        h = channel::evolve_gauss_markov(&mut rng, spec.eta, &h);
        let (fw, next_s, metric) = tespa_update(shifted_cfg, &st_s, &h).expect("validated");
        let (_, next_u, _) = tespa_update(unshifted_cfg, &st_u, &h).expect("validated");
        st_s = next_s;
        st_u = next_u;
        let g_s = vdot(&h, st_s.h_hat()).norm_sqr();
        shifted.push(g_s);
        unshifted.push(vdot(&h, st_u.h_hat()).norm_sqr());
        if let Some(rows) = trace.as_deref_mut() {
            rows.push(TraceRow {
                k,
                feedback_bits: bit_string(&fw.inputs, shifted_cfg.code().input_bits()),
                theta_index: fw.theta_index,
                metric,
                gain_db: 10.0 * g_s.log10(),
            });
        }
    }
    TemporalTrialGains { shifted, unshifted }
}

fn tespa_temporal_inner(spec: &TespaTemporalSpec) -> Result<Vec<ResultRow>> {
    let (tec_cfg, shifted_cfg, unshifted_cfg) = tespa_temporal_context(spec)?;
    let channel_base = derive_seed(spec.seed, &[TAG_CHANNEL, 0]);
    let trials: Vec<TemporalTrialGains> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            tespa_temporal_trial(spec, &tec_cfg, &shifted_cfg, &unshifted_cfg, channel_base, t, None)
        })
        .collect();

    let spa_total_bits = (spec.spa_input_bits as usize * spec.mt / spec.block_len) as u32;
    let rvq_db = 10.0 * rvq_analytic_gain(spec.mt, spa_total_bits).log10();
    let mut rows = Vec::new();
    for k in 0..=spec.k_max {
        let s_vals: Vec<f64> = trials.iter().map(|t| t.shifted[k]).collect();
        let u_vals: Vec<f64> = trials.iter().map(|t| t.unshifted[k]).collect();
        for (name, vals) in [("tespa_shifted", &s_vals), ("tespa_unshifted", &u_vals)] {
            let (mean, hw) = mean_halfwidth(vals);
            let (db, hw_db) = to_db(mean, hw);
            rows.push(ResultRow {
                sweep: format!("k={k}"),
                metric: format!("{name}.gain_db"),
                value: db,
                halfwidth: hw_db,
                trials: spec.trials,
                seed: spec.seed,
            });
        }
        rows.push(ResultRow {
            sweep: format!("k={k}"),
            metric: "rvq_analytic.gain_db".into(),
            value: rvq_db,
            halfwidth: 0.0,
            trials: 0,
            seed: spec.seed,
        });
    }
    Ok(rows)
}

/// Replays one trial's block-shifted session and returns its trace rows
/// (the JSON-lines replay interface).
pub fn tespa_trace(spec: &TespaTemporalSpec, trial: u64) -> Result<Vec<TraceRow>> {
    validate_tespa_temporal(spec)?;
    let (tec_cfg, shifted_cfg, unshifted_cfg) = tespa_temporal_context(spec)?;
    let channel_base = derive_seed(spec.seed, &[TAG_CHANNEL, 0]);
    let mut rows = Vec::new();
    tespa_temporal_trial(
        spec,
        &tec_cfg,
        &shifted_cfg,
        &unshifted_cfg,
        channel_base,
        trial,
        Some(&mut rows),
    );
    Ok(rows)
}

fn bit_string(inputs: &[u8], input_bits: u32) -> String {
    // Stage 0 first, least significant input bit first.
    let mut s = String::with_capacity(inputs.len() * input_bits as usize);
    for &sym in inputs {
        for b in 0..input_bits {
            s.push(if (sym >> b) & 1 == 1 { '1' } else { '0' });
        }
    }
    s
}

fn validate_tespa_spatial(spec: &TespaSpatialSpec) -> Result<()> {
    validate_common(spec.trials, spec.k_theta, spec.block_len, &spec.mt_sweep)?;
    check_input_bits(spec.u1_input_bits)?;
    check_input_bits(spec.spa_input_bits)?;
    check_input_bits(spec.direct_input_bits)?;
    if !(0.0..1.0).contains(&spec.alpha) {
        return Err(Error::config(format!("alpha must lie in [0, 1), got {}", spec.alpha)));
    }
    Ok(())
}

pub fn run_tespa_spatial(spec: &TespaSpatialSpec) -> Result<Vec<ResultRow>> {
    validate_tespa_spatial(spec)?;
    run_pool(spec.threads, || tespa_spatial_inner(spec))?
}

fn tespa_spatial_inner(spec: &TespaSpatialSpec) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (sweep_idx, &mt) in spec.mt_sweep.iter().enumerate() {
        let sampler = ExpSpatialSampler::new(mt, spec.alpha, CorrelationPhase::PerRealization)?;
        let u1_cfg = trellis_cfg(
            SchemeKind::TeLte,
            mt,
            spec.block_len,
            spec.u1_input_bits,
            spec.k_theta,
            1,
            spec.seed,
            MappingKind::Proposed,
        )?;
        let direct_cfg = trellis_cfg(
            SchemeKind::TeLte,
            mt,
            spec.block_len,
            spec.direct_input_bits,
            spec.k_theta,
            1,
            spec.seed,
            MappingKind::Proposed,
        )?;
        let spa_cfg = TespaConfig::new(
            mt,
            spec.block_len,
            ConvCode::for_input_bits(spec.spa_input_bits)?,
            uniform_theta_grid(spec.k_theta),
            true,
        )?;
        let channel_base = derive_seed(spec.seed, &[TAG_CHANNEL, sweep_idx as u64]);
        let gains: Vec<(f64, f64)> = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = SimRng::substream(channel_base, t);
                let draw = sampler.draw(&mut rng);
                let u1 = sampler.dominant_eigvec(draw.vartheta);
                // Long-term side information: quantized dominant eigenvector.
                let (fw_u, _) = quantize(&u1_cfg, &u1).expect("validated dimensions");
                let u1_hat = reconstruct(&u1_cfg, &fw_u).expect("own feedback");
                let (_, h_hat, _) =
                    tespa_spatial(&spa_cfg, &u1_hat, &draw.h).expect("unit-norm input");
                let g_spa = vdot(&draw.h, &h_hat).norm_sqr();
                // Direct quantization at higher rate.
                let (fw_d, _) = quantize(&direct_cfg, &draw.h).expect("validated dimensions");
                let c = reconstruct(&direct_cfg, &fw_d).expect("own feedback");
                let g_direct = vdot(&draw.h, &c).norm_sqr();
                (g_spa, g_direct)
            })
            .collect();
        let spa: Vec<f64> = gains.iter().map(|g| g.0).collect();
        let direct: Vec<f64> = gains.iter().map(|g| g.1).collect();
        for (name, vals) in [("tespa", &spa), ("te_lte_direct", &direct)] {
            let (mean, hw) = mean_halfwidth(vals);
            let (db, hw_db) = to_db(mean, hw);
            rows.push(ResultRow {
                sweep: format!("mt={mt}"),
                metric: format!("{name}.gain_db"),
                value: db,
                halfwidth: hw_db,
                trials: spec.trials,
                seed: spec.seed,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Result emission
// ---------------------------------------------------------------------------

/// Renders rows in the stable column order
/// `sweep, metric, value, halfwidth, trials, seed`.
pub fn render_results(rows: &[ResultRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => {
            let mut out = String::from("sweep,metric,value,halfwidth,trials,seed\n");
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.sweep, r.metric, r.value, r.halfwidth, r.trials, r.seed
                ));
            }
            out
        }
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
            s.push('\n');
            s
        }
    }
}

/// Writes rows to `path` in the requested format.
pub fn emit_results(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(render_results(rows, format).as_bytes())?;
    Ok(())
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Serde(format!("bad csv line: {line:?}")));
        }
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Serde(e.to_string()));
        let parse_u = |s: &str| s.parse::<u64>().map_err(|e| Error::Serde(e.to_string()));
        rows.push(ResultRow {
            sweep: parts[0].to_string(),
            metric: parts[1].to_string(),
            value: parse_f(parts[2])?,
            halfwidth: parse_f(parts[3])?,
            trials: parse_u(parts[4])?,
            seed: parse_u(parts[5])?,
        });
    }
    Ok(rows)
}

/// Convenience for tests and assertions on emitted rows.
pub fn find_row<'a>(rows: &'a [ResultRow], sweep: &str, metric: &str) -> Option<&'a ResultRow> {
    rows.iter().find(|r| r.sweep == sweep && r.metric == metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_beamforming(trials: u64, schemes: Vec<SchemeKind>) -> BeamformingSpec {
        BeamformingSpec {
            schemes,
            mt_sweep: vec![8],
            input_bits: 2,
            block_len: 4,
            k_theta: 16,
            trials,
            seed: 11,
            threads: None,
        }
    }

    #[test]
    fn genie_gain_matches_antenna_count() {
        let spec = BeamformingSpec {
            schemes: vec![SchemeKind::Genie],
            mt_sweep: vec![64],
            input_bits: 2,
            block_len: 4,
            k_theta: 16,
            trials: 4000,
            seed: 3,
            threads: None,
        };
        let rows = run_beamforming_experiment(&spec).unwrap();
        let g = find_row(&rows, "mt=64", "genie.gain_db").unwrap();
        assert!((g.value - 10.0 * 64f64.log10()).abs() < 0.1, "genie {}", g.value);
    }

    #[test]
    fn rvq_analytic_row_is_exact() {
        let spec = small_beamforming(1, vec![SchemeKind::RvqAnalytic]);
        let rows = run_beamforming_experiment(&spec).unwrap();
        let r = &rows[0];
        // B_tot = 2 * 8 / 4 = 4 bits.
        let expect = 10.0 * (8.0 * (1.0 - 2f64.powf(-4.0 / 7.0))).log10();
        assert_eq!(r.value, expect);
        assert_eq!(r.trials, 0);
        assert_eq!(r.halfwidth, 0.0);
    }

    #[test]
    fn beamforming_rejects_bad_specs() {
        let mut spec = small_beamforming(0, vec![SchemeKind::Genie]);
        assert!(run_beamforming_experiment(&spec).is_err());
        spec.trials = 10;
        spec.mt_sweep = vec![10];
        assert!(run_beamforming_experiment(&spec).is_err());
        spec.mt_sweep = vec![8];
        spec.schemes = vec![SchemeKind::NtcqReferenceOff];
        assert!(run_beamforming_experiment(&spec).is_err());
        // Simulated RVQ beyond the flat-search cap must refuse.
        let big = BeamformingSpec {
            schemes: vec![SchemeKind::Rvq],
            mt_sweep: vec![64],
            input_bits: 2,
            block_len: 4,
            k_theta: 16,
            trials: 10,
            seed: 0,
            threads: None,
        };
        assert!(run_beamforming_experiment(&big).is_err());
    }

    #[test]
    fn results_are_thread_count_invariant() {
        let mut spec = small_beamforming(200, vec![SchemeKind::TeEd, SchemeKind::Rvq]);
        let a = run_beamforming_experiment(&spec).unwrap();
        spec.threads = Some(1);
        let b = run_beamforming_experiment(&spec).unwrap();
        spec.threads = Some(4);
        let c = run_beamforming_experiment(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn all_gains_bounded_by_genie() {
        let spec = small_beamforming(
            300,
            vec![SchemeKind::Genie, SchemeKind::TeEd, SchemeKind::TeLte, SchemeKind::Rvq],
        );
        let rows = run_beamforming_experiment(&spec).unwrap();
        let genie = find_row(&rows, "mt=8", "genie.gain_db").unwrap().value;
        for r in &rows {
            assert!(r.value <= genie + 1e-9, "{} exceeds genie", r.metric);
        }
    }

    #[test]
    fn confidence_halfwidth_shrinks_like_sqrt_trials() {
        let rows_1k = run_beamforming_experiment(&small_beamforming(1000, vec![SchemeKind::TeEd]))
            .unwrap();
        let rows_4k = run_beamforming_experiment(&small_beamforming(4000, vec![SchemeKind::TeEd]))
            .unwrap();
        let ratio = rows_1k[0].halfwidth / rows_4k[0].halfwidth;
        assert!((1.5..2.5).contains(&ratio), "halfwidth ratio {ratio}");
    }

    #[test]
    fn rate_experiment_zero_snr_limit_and_genie_dominance() {
        let spec = RateSpec {
            schemes: vec![SchemeKind::Genie, SchemeKind::TeEd, SchemeKind::Rvq],
            mt: 8,
            num_rx: 2,
            rank: 2,
            snr_db: vec![-40.0, 10.0],
            input_bits: 2,
            block_len: 4,
            k_theta: 8,
            trials: 150,
            seed: 5,
            threads: None,
        };
        let rows = run_rate_experiment(&spec).unwrap();
        // Rate vanishes as SNR -> 0.
        let low = find_row(&rows, "snr_db=-40", "genie.rate_bps_hz").unwrap();
        assert!(low.value < 0.02, "rate at -40 dB: {}", low.value);
        // Genie dominates quantized precoding on average.
        let genie = find_row(&rows, "snr_db=10", "genie.rate_bps_hz").unwrap().value;
        let te = find_row(&rows, "snr_db=10", "te_ed.rate_bps_hz").unwrap().value;
        let rvq = find_row(&rows, "snr_db=10", "rvq.rate_bps_hz").unwrap().value;
        assert!(genie >= te && genie >= rvq);
    }

    #[test]
    fn rate_experiment_validation() {
        let mut spec = RateSpec {
            schemes: vec![SchemeKind::TeEd],
            mt: 8,
            num_rx: 2,
            rank: 3,
            snr_db: vec![0.0],
            input_bits: 2,
            block_len: 4,
            k_theta: 8,
            trials: 5,
            seed: 0,
            threads: None,
        };
        assert!(run_rate_experiment(&spec).is_err()); // rank > num_rx
        spec.rank = 2;
        spec.schemes = vec![SchemeKind::TeLte];
        assert!(run_rate_experiment(&spec).is_err()); // not a rate scheme
    }

    #[test]
    fn tespa_temporal_static_channel_improves_monotonically() {
        // η = 1: the channel freezes, so successive adjustment can only
        // refine; the gain must be non-decreasing in k.
        let spec = TespaTemporalSpec {
            mt: 16,
            eta: 1.0,
            k_max: 6,
            input_bits: 2,
            spa_input_bits: 1,
            block_len: 4,
            k_theta: 16,
            trials: 300,
            seed: 9,
            threads: None,
        };
        let rows = run_tespa_temporal(&spec).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=6 {
            let g = find_row(&rows, &format!("k={k}"), "tespa_shifted.gain_db").unwrap().value;
            assert!(g >= prev - 1e-9, "gain dropped at k={k}: {g} < {prev}");
            prev = g;
        }
    }

    #[test]
    fn tespa_trace_replays_one_session() {
        let spec = TespaTemporalSpec {
            mt: 8,
            eta: 0.99,
            k_max: 3,
            input_bits: 2,
            spa_input_bits: 1,
            block_len: 4,
            k_theta: 16,
            trials: 4,
            seed: 2,
            threads: None,
        };
        let rows = tespa_trace(&spec, 1).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].k, 0);
        assert_eq!(rows[0].feedback_bits.len(), 2 * 2); // Bin * T at k = 0
        assert_eq!(rows[1].feedback_bits.len(), 2); // Bspa_in * T afterwards
        // JSON-lines round trip.
        let line = serde_json::to_string(&rows[1]).unwrap();
        let back: TraceRow = serde_json::from_str(&line).unwrap();
        assert_eq!(back.k, rows[1].k);
    }

    #[test]
    fn emit_results_round_trip_and_determinism() {
        let spec = small_beamforming(50, vec![SchemeKind::TeEd, SchemeKind::RvqAnalytic]);
        let rows = run_beamforming_experiment(&spec).unwrap();
        let csv_a = render_results(&rows, OutputFormat::Csv);
        let rows_b = run_beamforming_experiment(&spec).unwrap();
        let csv_b = render_results(&rows_b, OutputFormat::Csv);
        assert_eq!(csv_a, csv_b, "byte-identical reruns");
        // Full-precision round trip.
        let parsed = parse_results_csv(&csv_a).unwrap();
        assert_eq!(parsed, rows);
        // Header-only CSV for no rows.
        assert_eq!(render_results(&[], OutputFormat::Csv), "sweep,metric,value,halfwidth,trials,seed\n");
        // JSON mirrors the same rows.
        let js = render_results(&rows, OutputFormat::Json);
        let parsed_js: Vec<ResultRow> = serde_json::from_str(&js).unwrap();
        assert_eq!(parsed_js, rows);
    }
}
