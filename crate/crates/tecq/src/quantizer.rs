//! The trellis-extended quantizer and its reconstructor.
//!
//! Quantization minimizes `|| h - e^{jθ} out(p) ||^2` jointly over trellis
//! paths `p` (Viterbi, starting state fixed to 0) and a discrete phase grid
//! `θ` that absorbs the phase ambiguity between a channel and its quantized
//! direction. The feedback word is the path's *input* bit sequence, so the
//! transmitter reconstructs `out(p)` by re-running the convolutional
//! encoder; with per-stage words scaled to squared norm `L / M_t` the
//! reconstruction has unit norm.

use crate::codebook::{BranchMapping, Codebook, NormMode};
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, vdot, CMat, C64};
use crate::trellis::ConvCode;
use serde::{Deserialize, Serialize};

/// Which search produced a feedback word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Tec,
    Tespa,
}

/// The binary feedback: one input symbol per trellis stage. The selected
/// grid phase is carried along for diagnostics only; it is never fed back.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackWord {
    pub inputs: Vec<u8>,
    pub scheme: Scheme,
    pub best_theta: f64,
    pub theta_index: usize,
}

impl FeedbackWord {
    pub fn bit_len(&self, input_bits: u32) -> usize {
        self.inputs.len() * input_bits as usize
    }

    /// Packs the input symbols into bytes: stage 0 first, `input_bits` bits
    /// per stage, least significant input bit first, filling each byte from
    /// bit 0 upward.
    pub fn to_bytes(&self, input_bits: u32) -> Vec<u8> {
        let total = self.bit_len(input_bits);
        let mut bytes = vec![0u8; total.div_ceil(8)];
        let mut pos = 0usize;
        for &sym in &self.inputs {
            for b in 0..input_bits {
                if (sym >> b) & 1 == 1 {
                    bytes[pos / 8] |= 1 << (pos % 8);
                }
                pos += 1;
            }
        }
        bytes
    }

    /// Inverse of [`FeedbackWord::to_bytes`] for a known stage count.
    pub fn inputs_from_bytes(bytes: &[u8], input_bits: u32, stages: usize) -> Result<Vec<u8>> {
        let total = stages * input_bits as usize;
        if bytes.len() < total.div_ceil(8) {
            return Err(Error::invalid("feedback byte buffer too short"));
        }
        let mut inputs = Vec::with_capacity(stages);
        let mut pos = 0usize;
        for _ in 0..stages {
            let mut sym = 0u8;
            for b in 0..input_bits {
                if (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                    sym |= 1 << b;
                }
                pos += 1;
            }
            inputs.push(sym);
        }
        Ok(inputs)
    }
}

/// Uniform noncoherent search grid of `k_theta` angles in [0, 2π).
pub fn uniform_theta_grid(k_theta: usize) -> Vec<f64> {
    (0..k_theta).map(|i| std::f64::consts::TAU * i as f64 / k_theta as f64).collect()
}

/// Everything the quantizer and the reconstructor share.
#[derive(Debug, Clone)]
pub struct QuantizerConfig {
    num_antennas: usize,
    block_len: usize,
    stages: usize,
    rank: usize,
    theta_grid: Vec<f64>,
    code: ConvCode,
    mapping: BranchMapping,
    /// Scaled codeword per trellis label (mapping already applied).
    words_by_label: Vec<CMat>,
}

impl QuantizerConfig {
    /// Builds a configuration. The codebook may be in unit mode (it is then
    /// rescaled so per-stage words have squared norm `block_len /
    /// num_antennas`) or already scaled for this antenna count.
    pub fn new(
        num_antennas: usize,
        block_len: usize,
        code: ConvCode,
        codebook: &Codebook,
        mapping: BranchMapping,
        theta_grid: Vec<f64>,
    ) -> Result<Self> {
        if block_len == 0 || num_antennas == 0 || num_antennas % block_len != 0 {
            return Err(Error::config(format!(
                "block length {block_len} must divide the antenna count {num_antennas}"
            )));
        }
        if codebook.dim() != block_len {
            return Err(Error::config(format!(
                "codebook dimension {} does not match block length {block_len}",
                codebook.dim()
            )));
        }
        if codebook.len() != code.num_labels() {
            return Err(Error::config(format!(
                "codebook has {} words, trellis needs {}",
                codebook.len(),
                code.num_labels()
            )));
        }
        if mapping.len() != code.num_labels() {
            return Err(Error::config("branch mapping does not match the trellis"));
        }
        if theta_grid.is_empty() {
            return Err(Error::config("noncoherent phase grid must not be empty"));
        }
        let scaled;
        let scaled_ref = match codebook.norm_mode() {
            NormMode::Scaled { num_antennas: na } if na == num_antennas => codebook,
            NormMode::Scaled { num_antennas: na } => {
                return Err(Error::config(format!(
                    "codebook scaled for {na} antennas, config has {num_antennas}"
                )));
            }
            NormMode::Unit => {
                scaled = codebook.scaled(num_antennas)?;
                &scaled
            }
        };
        let words_by_label = (0..code.num_labels())
            .map(|l| scaled_ref.word(mapping.word_for_label(l)).clone())
            .collect();
        Ok(QuantizerConfig {
            num_antennas,
            block_len,
            stages: num_antennas / block_len,
            rank: codebook.rank(),
            theta_grid,
            code,
            mapping,
            words_by_label,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn code(&self) -> &ConvCode {
        &self.code
    }

    pub fn mapping(&self) -> &BranchMapping {
        &self.mapping
    }

    pub fn theta_grid(&self) -> &[f64] {
        &self.theta_grid
    }

    /// Feedback bits per quantization: `Bin * T = B * M_t`.
    pub fn feedback_bits(&self) -> usize {
        self.code.input_bits() as usize * self.stages
    }

    pub fn scaled_word_for_label(&self, label: usize) -> &CMat {
        &self.words_by_label[label]
    }
}

/// Quantizes a MISO channel vector. Returns the feedback word and the
/// achieved metric `min_θ min_p || h - e^{jθ} out(p) ||^2`.
pub fn quantize(cfg: &QuantizerConfig, h: &[C64]) -> Result<(FeedbackWord, f64)> {
    if cfg.rank != 1 {
        return Err(Error::invalid("quantize expects a rank-1 configuration"));
    }
    if h.len() != cfg.num_antennas {
        return Err(Error::invalid(format!(
            "channel has dimension {}, config expects {}",
            h.len(),
            cfg.num_antennas
        )));
    }
    Ok(search(cfg, &CMat::from_col(h)))
}

/// Quantizes the `K` dominant eigenvector columns of a channel (orthonormal
/// within 1e-6), with Frobenius-norm branch metrics.
pub fn quantize_subspace(cfg: &QuantizerConfig, u: &CMat) -> Result<(FeedbackWord, f64)> {
    if u.rows() != cfg.num_antennas || u.cols() != cfg.rank {
        return Err(Error::invalid(format!(
            "subspace is {}x{}, config expects {}x{}",
            u.rows(),
            u.cols(),
            cfg.num_antennas,
            cfg.rank
        )));
    }
    let gram = u.adjoint_mul(u);
    let defect = gram.max_abs_diff(&CMat::identity(u.cols()));
    if defect > 1e-6 {
        return Err(Error::invalid(format!(
            "subspace columns are not orthonormal (defect {defect:.2e})"
        )));
    }
    Ok(search(cfg, u))
}

/// Reconstructs the unit-norm quantized vector from a feedback word
/// (transmitter side: re-run the encoder, concatenate the mapped words).
pub fn reconstruct(cfg: &QuantizerConfig, fw: &FeedbackWord) -> Result<Vec<C64>> {
    let m = reconstruct_subspace(cfg, fw)?;
    if cfg.rank != 1 {
        return Err(Error::invalid("reconstruct expects a rank-1 configuration"));
    }
    Ok(m.col(0).to_vec())
}

/// Matrix-codeword variant of [`reconstruct`]; the result has unit Frobenius
/// norm.
pub fn reconstruct_subspace(cfg: &QuantizerConfig, fw: &FeedbackWord) -> Result<CMat> {
    if fw.inputs.len() != cfg.stages {
        return Err(Error::invalid(format!(
            "feedback has {} stages, config expects {}",
            fw.inputs.len(),
            cfg.stages
        )));
    }
    let path = cfg.code.encode(&fw.inputs)?;
    let mut out = CMat::zeros(cfg.num_antennas, cfg.rank);
    for (t, &label) in path.output_labels.iter().enumerate() {
        let w = &cfg.words_by_label[label as usize];
        for c in 0..cfg.rank {
            let dst = out.col_mut(c);
            for r in 0..cfg.block_len {
                dst[t * cfg.block_len + r] = w[(r, c)];
            }
        }
    }
    Ok(out)
}

/// Flat vector-quantization baseline: the codeword maximizing `|h^H c|^2`
/// over a full-dimension unit-norm codebook, ties to the lowest index.
pub fn quantize_vq(cb: &Codebook, h: &[C64]) -> Result<usize> {
    if cb.rank() != 1 {
        return Err(Error::invalid("flat quantization expects vector codewords"));
    }
    if cb.dim() != h.len() {
        return Err(Error::invalid(format!(
            "codebook dimension {} does not match channel dimension {}",
            cb.dim(),
            h.len()
        )));
    }
    if cb.len() > (1 << crate::codebook::MAX_FLAT_BITS) {
        return Err(Error::feasibility(format!(
            "flat search over {} codewords exceeds the 2^{} limit",
            cb.len(),
            crate::codebook::MAX_FLAT_BITS
        )));
    }
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, w) in cb.words().iter().enumerate() {
        let v = vdot(h, w.col(0)).norm_sqr();
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Search internals
// ---------------------------------------------------------------------------

/// Joint phase-grid / Viterbi minimization. Ties break toward the smaller
/// phase index, then (inside the trellis) toward the lower predecessor
/// state, so results are identical across runs and thread counts.
fn search(cfg: &QuantizerConfig, target: &CMat) -> (FeedbackWord, f64) {
    let t_stages = cfg.stages;
    let n_labels = cfg.code.num_labels();
    let block = cfg.block_len;

    // Stage/label inner products: the branch metric for phase θ expands to
    //   ||U_t||^2 + ||W_l||^2 - 2 Re(e^{jθ} <U_t, W_l>).
    let mut nh = vec![0.0f64; t_stages];
    let mut z = vec![C64::new(0.0, 0.0); t_stages * n_labels];
    let mut nw = vec![0.0f64; n_labels];
    for (l, w) in cfg.words_by_label.iter().enumerate() {
        nw[l] = w.frobenius_sq();
    }
    for t in 0..t_stages {
        let mut acc = 0.0;
        for c in 0..cfg.rank {
            acc += norm_sq(&target.col(c)[t * block..(t + 1) * block]);
        }
        nh[t] = acc;
        for (l, w) in cfg.words_by_label.iter().enumerate() {
            let mut dot = C64::new(0.0, 0.0);
            for c in 0..cfg.rank {
                dot += vdot(&target.col(c)[t * block..(t + 1) * block], w.col(c));
            }
            z[t * n_labels + l] = dot;
        }
    }

    let mut best: Option<(f64, usize, Vec<u8>)> = None;
    let mut bm = vec![0.0f64; t_stages * n_labels];
    for (ti, &theta) in cfg.theta_grid.iter().enumerate() {
        let (cos_t, sin_t) = (theta.cos(), theta.sin());
        for t in 0..t_stages {
            for l in 0..n_labels {
                let d = z[t * n_labels + l];
                bm[t * n_labels + l] = nh[t] + nw[l] - 2.0 * (cos_t * d.re - sin_t * d.im);
            }
        }
        let (metric, inputs) = viterbi(&cfg.code, t_stages, n_labels, &bm);
        if best.as_ref().is_none_or(|b| metric < b.0) {
            best = Some((metric, ti, inputs));
        }
    }
    let (metric, theta_index, inputs) = best.expect("theta grid is non-empty");
    (
        FeedbackWord {
            inputs,
            scheme: Scheme::Tec,
            best_theta: cfg.theta_grid[theta_index],
            theta_index,
        },
        metric,
    )
}

/// Standard Viterbi forward pass from state 0 over precomputed per-stage,
/// per-label branch metrics, with traceback.
pub(crate) fn viterbi(
    code: &ConvCode,
    t_stages: usize,
    n_labels: usize,
    bm: &[f64],
) -> (f64, Vec<u8>) {
    let ns = code.num_states();
    let n_in = code.num_inputs();
    let mut dist = vec![f64::INFINITY; ns];
    dist[0] = 0.0;
    let mut decisions = vec![(0u16, 0u8); t_stages * ns];
    let mut next = vec![f64::INFINITY; ns];
    for t in 0..t_stages {
        next.iter_mut().for_each(|d| *d = f64::INFINITY);
        for s in 0..ns {
            let base = dist[s];
            if !base.is_finite() {
                continue;
            }
            for i in 0..n_in {
                let label = code.output_label(s, i);
                let cand = base + bm[t * n_labels + label];
                let tgt = code.next_state(s, i);
                if cand < next[tgt] {
                    next[tgt] = cand;
                    decisions[t * ns + tgt] = (s as u16, i as u8);
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    let mut end = 0usize;
    for s in 1..ns {
        if dist[s] < dist[end] {
            end = s;
        }
    }
    let metric = dist[end];
    let mut inputs = vec![0u8; t_stages];
    let mut state = end;
    for t in (0..t_stages).rev() {
        let (prev, input) = decisions[t * ns + state];
        inputs[t] = input;
        state = prev as usize;
    }
    debug_assert_eq!(state, 0, "path must start at state 0");
    (metric, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{map_codewords_to_branches, MappingKind};
    use crate::linalg::orthonormalize;
    use crate::rng::SimRng;

    fn test_cfg(num_antennas: usize, k_theta: usize, seed: u64) -> QuantizerConfig {
        let code = ConvCode::ungerboeck(8, 2).unwrap();
        let cb = Codebook::design_ed(4, 8, 1, seed).unwrap();
        let mapping = map_codewords_to_branches(&cb, &code, MappingKind::Proposed, None).unwrap();
        QuantizerConfig::new(num_antennas, 4, code, &cb, mapping, uniform_theta_grid(k_theta))
            .unwrap()
    }

    /// Exhaustive minimum over every trellis path and grid phase, computed
    /// directly from the definition (no shared code with the search).
    fn oracle_metric(cfg: &QuantizerConfig, target: &CMat) -> f64 {
        let paths = cfg.code().enumerate_paths(cfg.stages()).unwrap();
        let mut best = f64::INFINITY;
        for p in &paths {
            let mut cand = CMat::zeros(cfg.num_antennas(), cfg.rank());
            for (t, &l) in p.output_labels.iter().enumerate() {
                let w = cfg.scaled_word_for_label(l as usize);
                for c in 0..cfg.rank() {
                    for r in 0..cfg.block_len() {
                        cand[(t * cfg.block_len() + r, c)] = w[(r, c)];
                    }
                }
            }
            for &theta in cfg.theta_grid() {
                let rot = C64::new(theta.cos(), theta.sin());
                let mut m = 0.0;
                for (a, b) in target.data().iter().zip(cand.data()) {
                    m += (a - rot * b).norm_sqr();
                }
                best = best.min(m);
            }
        }
        best
    }

    #[test]
    fn quantizer_matches_exhaustive_oracle() {
        let cfg = test_cfg(8, 16, 7);
        let mut rng = SimRng::from_seed(100);
        for _ in 0..50 {
            let h = rng.complex_normal_vec(8);
            let (_, metric) = quantize(&cfg, &h).unwrap();
            let oracle = oracle_metric(&cfg, &CMat::from_col(&h));
            let denom = oracle.abs().max(1e-30);
            assert!(
                ((metric - oracle) / denom).abs() <= 1e-12,
                "viterbi {metric} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn exact_representable_channel_has_zero_metric() {
        let cfg = test_cfg(8, 16, 3);
        // h = e^{jθ0} (word chain along the encoded path of inputs [1, 2]).
        let path = cfg.code().encode(&[1, 2]).unwrap();
        let theta0 = cfg.theta_grid()[5];
        let rot = C64::new(theta0.cos(), theta0.sin());
        let mut h = Vec::new();
        for &l in &path.output_labels {
            for r in 0..4 {
                h.push(rot * cfg.scaled_word_for_label(l as usize)[(r, 0)]);
            }
        }
        let (fw, metric) = quantize(&cfg, &h).unwrap();
        assert!(metric.abs() < 1e-9, "metric {metric}");
        let rec = reconstruct(&cfg, &fw).unwrap();
        // The reconstruction recovers the chain: |h^H c|^2 = ||h||^2.
        let gain = vdot(&h, &rec).norm_sqr();
        assert!((gain - norm_sq(&h)).abs() < 1e-9);
    }

    #[test]
    fn reconstruct_is_unit_norm() {
        let cfg = test_cfg(16, 16, 5);
        let mut rng = SimRng::from_seed(2);
        for _ in 0..20 {
            let h = rng.complex_normal_vec(16);
            let (fw, _) = quantize(&cfg, &h).unwrap();
            let rec = reconstruct(&cfg, &fw).unwrap();
            assert!((norm_sq(&rec) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn all_zero_feedback_reconstructs_branch_zero_chain() {
        let cfg = test_cfg(8, 16, 5);
        let fw = FeedbackWord {
            inputs: vec![0, 0],
            scheme: Scheme::Tec,
            best_theta: 0.0,
            theta_index: 0,
        };
        let rec = reconstruct(&cfg, &fw).unwrap();
        let path = cfg.code().encode(&[0, 0]).unwrap();
        for (t, &l) in path.output_labels.iter().enumerate() {
            for r in 0..4 {
                assert_eq!(rec[4 * t + r], cfg.scaled_word_for_label(l as usize)[(r, 0)]);
            }
        }
    }

    #[test]
    fn metric_matches_reconstruction_recompute() {
        let cfg = test_cfg(16, 16, 9);
        let mut rng = SimRng::from_seed(4);
        for _ in 0..20 {
            let h = rng.complex_normal_vec(16);
            let (fw, metric) = quantize(&cfg, &h).unwrap();
            let rec = reconstruct(&cfg, &fw).unwrap();
            let rot = C64::new(fw.best_theta.cos(), fw.best_theta.sin());
            let recomputed: f64 =
                h.iter().zip(&rec).map(|(a, b)| (a - rot * b).norm_sqr()).sum();
            assert!((metric - recomputed).abs() < 1e-9);
        }
    }

    #[test]
    fn enlarging_the_phase_grid_never_hurts() {
        let code = ConvCode::ungerboeck(8, 2).unwrap();
        let cb = Codebook::design_ed(4, 8, 1, 7).unwrap();
        let mapping = map_codewords_to_branches(&cb, &code, MappingKind::Proposed, None).unwrap();
        let cfg16 = QuantizerConfig::new(8, 4, code.clone(), &cb, mapping.clone(), uniform_theta_grid(16)).unwrap();
        let cfg32 = QuantizerConfig::new(8, 4, code, &cb, mapping, uniform_theta_grid(32)).unwrap();
        let mut rng = SimRng::from_seed(8);
        for _ in 0..30 {
            let h = rng.complex_normal_vec(8);
            let m16 = quantize(&cfg16, &h).unwrap().1;
            let m32 = quantize(&cfg32, &h).unwrap().1;
            assert!(m32 <= m16, "superset grid increased the metric: {m32} > {m16}");
        }
    }

    #[test]
    fn grid_aligned_global_phase_is_absorbed() {
        let cfg = test_cfg(8, 16, 6);
        let mut rng = SimRng::from_seed(21);
        let h = rng.complex_normal_vec(8);
        let base = quantize(&cfg, &h).unwrap().1;
        for k in [1usize, 5, 9] {
            let phi = std::f64::consts::TAU * k as f64 / 16.0;
            let rot = C64::new(phi.cos(), phi.sin());
            let hr: Vec<C64> = h.iter().map(|x| x * rot).collect();
            let m = quantize(&cfg, &hr).unwrap().1;
            assert!((m - base).abs() < 1e-9, "phase {k}: {m} vs {base}");
        }
    }

    #[test]
    fn beamforming_gain_is_bounded_by_channel_power() {
        let cfg = test_cfg(16, 16, 10);
        let mut rng = SimRng::from_seed(30);
        for _ in 0..50 {
            let h = rng.complex_normal_vec(16);
            let (fw, _) = quantize(&cfg, &h).unwrap();
            let rec = reconstruct(&cfg, &fw).unwrap();
            let gain = vdot(&h, &rec).norm_sqr();
            assert!(gain <= norm_sq(&h) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn argument_errors() {
        let cfg = test_cfg(8, 16, 3);
        assert!(quantize(&cfg, &vec![C64::new(1.0, 0.0); 7]).is_err());
        let code = ConvCode::ungerboeck(8, 2).unwrap();
        let cb = Codebook::design_ed(4, 8, 1, 3).unwrap();
        let mapping = map_codewords_to_branches(&cb, &code, MappingKind::Identity, None).unwrap();
        assert!(QuantizerConfig::new(8, 4, code.clone(), &cb, mapping.clone(), vec![]).is_err());
        assert!(QuantizerConfig::new(10, 4, code, &cb, mapping, uniform_theta_grid(4)).is_err());
    }

    #[test]
    fn flat_quantizer_self_match_and_oracle() {
        let cb = Codebook::rvq(4, 8, 42).unwrap();
        // A codeword quantizes to itself.
        let h: Vec<C64> = cb.word(17).col(0).to_vec();
        assert_eq!(quantize_vq(&cb, &h).unwrap(), 17);
        // Double computation with shuffled evaluation order.
        let mut rng = SimRng::from_seed(77);
        for _ in 0..25 {
            let h = rng.complex_normal_vec(4);
            let fast = quantize_vq(&cb, &h).unwrap();
            let order = rng.permutation(cb.len());
            let mut best = (f64::NEG_INFINITY, 0usize);
            for &i in &order {
                let v = vdot(&h, cb.word(i).col(0)).norm_sqr();
                if v > best.0 || (v == best.0 && i < best.1) {
                    best = (v, i);
                }
            }
            assert_eq!(fast, best.1);
        }
    }

    #[test]
    fn flat_quantizer_refuses_oversized_codebooks() {
        let cb = Codebook::random(1, 1 << 17, 1, &mut SimRng::from_seed(0));
        assert!(quantize_vq(&cb, &[C64::new(1.0, 0.0)]).is_err());
    }

    fn rank2_cfg(num_antennas: usize, seed: u64) -> QuantizerConfig {
        let code = ConvCode::ungerboeck(8, 2).unwrap();
        let cb = Codebook::design_ed(4, 8, 2, seed).unwrap();
        let mapping = map_codewords_to_branches(&cb, &code, MappingKind::Proposed, None).unwrap();
        QuantizerConfig::new(num_antennas, 4, code, &cb, mapping, uniform_theta_grid(16)).unwrap()
    }

    #[test]
    fn rank_one_subspace_reduces_to_vector_quantize() {
        let cfg = test_cfg(8, 16, 3);
        let mut rng = SimRng::from_seed(50);
        let mut u = rng.complex_normal_vec(8);
        let inv = 1.0 / norm_sq(&u).sqrt();
        u.iter_mut().for_each(|x| *x *= inv);
        let (fw_v, m_v) = quantize(&cfg, &u).unwrap();
        let (fw_s, m_s) = quantize_subspace(&cfg, &CMat::from_col(&u)).unwrap();
        assert_eq!(fw_v.inputs, fw_s.inputs);
        assert_eq!(m_v, m_s);
    }

    #[test]
    fn rank_two_matches_exhaustive_oracle() {
        let cfg = rank2_cfg(8, 13);
        let mut rng = SimRng::from_seed(60);
        for _ in 0..20 {
            let mut u = CMat::from_fn(8, 2, |_, _| rng.complex_normal());
            orthonormalize(&mut u);
            let (fw, metric) = quantize_subspace(&cfg, &u).unwrap();
            let oracle = oracle_metric(&cfg, &u);
            let denom = oracle.abs().max(1e-30);
            assert!(((metric - oracle) / denom).abs() <= 1e-12);
            let rec = reconstruct_subspace(&cfg, &fw).unwrap();
            assert!((rec.frobenius_sq() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn subspace_rejects_non_orthonormal_input() {
        let cfg = rank2_cfg(8, 13);
        let mut rng = SimRng::from_seed(61);
        let u = CMat::from_fn(8, 2, |_, _| rng.complex_normal());
        assert!(quantize_subspace(&cfg, &u).is_err());
    }

    #[test]
    fn feedback_bit_packing_round_trip() {
        let fw = FeedbackWord {
            inputs: vec![1, 2, 3, 0, 2],
            scheme: Scheme::Tec,
            best_theta: 0.0,
            theta_index: 0,
        };
        assert_eq!(fw.bit_len(2), 10);
        let bytes = fw.to_bytes(2);
        assert_eq!(bytes.len(), 2);
        // Stage 0 occupies the low bits of byte 0, LSB first: 1,2,3 -> 0b111001.
        assert_eq!(bytes[0] & 0b0011_1111, 0b0011_1001);
        let back = FeedbackWord::inputs_from_bytes(&bytes, 2, 5).unwrap();
        assert_eq!(back, fw.inputs);
        assert!(FeedbackWord::inputs_from_bytes(&bytes[..1], 2, 5).is_err());
    }
}
