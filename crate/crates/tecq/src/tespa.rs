//! Successive phase adjustment: the differential follow-up to the trellis
//! quantizer for temporally or spatially correlated channels.
//!
//! Each update rotates the previous quantized vector block-wise by phases
//! drawn from a PSK-like half-circle set, selected by the same joint
//! Viterbi / phase-grid search as the quantizer. The block partition is
//! circularly shifted by `L/2` per update so consecutive updates interweave
//! adjacent blocks; without the shift the phase relation *inside* a block
//! could never be adjusted and the gain would saturate.

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, vdot, C64};
use crate::quantizer::{viterbi, FeedbackWord, Scheme};
use crate::trellis::ConvCode;

/// The phase alphabet: `2^Bout` angles `ψ_ν = (ν-1) π / 2^Bout` mapped to
/// trellis output `ν - 1`. Only a half circle is needed because a rotation
/// matrix is determined by the phase *relations* among blocks; the identity
/// label order realizes the set-partition mapping of trellis coded
/// modulation (branches sharing a state carry maximally separated phases,
/// since every state's labels form one parity class).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSet {
    angles: Vec<f64>,
}

impl PhaseSet {
    pub fn for_output_bits(output_bits: u32) -> PhaseSet {
        let n = 1usize << output_bits;
        PhaseSet {
            angles: (0..n).map(|nu| std::f64::consts::PI * nu as f64 / n as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn phase_of_label(&self, label: usize) -> f64 {
        self.angles[label]
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

#[derive(Debug, Clone)]
pub struct TespaConfig {
    num_antennas: usize,
    block_len: usize,
    stages: usize,
    code: ConvCode,
    phases: PhaseSet,
    theta_grid: Vec<f64>,
    block_shifting: bool,
}

impl TespaConfig {
    pub fn new(
        num_antennas: usize,
        block_len: usize,
        code: ConvCode,
        theta_grid: Vec<f64>,
        block_shifting: bool,
    ) -> Result<Self> {
        if block_len == 0 || num_antennas == 0 || num_antennas % block_len != 0 {
            return Err(Error::config(format!(
                "block length {block_len} must divide the antenna count {num_antennas}"
            )));
        }
        if block_len % 2 != 0 {
            return Err(Error::config("block shifting needs an even block length"));
        }
        if theta_grid.is_empty() {
            return Err(Error::config("noncoherent phase grid must not be empty"));
        }
        let phases = PhaseSet::for_output_bits(code.output_bits());
        Ok(TespaConfig {
            num_antennas,
            block_len,
            stages: num_antennas / block_len,
            code,
            phases,
            theta_grid,
            block_shifting,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn code(&self) -> &ConvCode {
        &self.code
    }

    pub fn phases(&self) -> &PhaseSet {
        &self.phases
    }

    pub fn theta_grid(&self) -> &[f64] {
        &self.theta_grid
    }

    pub fn block_shifting(&self) -> bool {
        self.block_shifting
    }

    /// Shift applied at update step `k` (`k >= 1`): `(L/2)(k-1) mod M_t`,
    /// or 0 when shifting is disabled.
    pub fn shift_at_step(&self, step: usize) -> usize {
        if self.block_shifting {
            (self.block_len / 2 * (step - 1)) % self.num_antennas
        } else {
            0
        }
    }
}

/// Tracker state shared (in lockstep) by the user and the base station.
/// `step` is the index of the *next* update; it exists so neither side ever
/// passes shift amounts around explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct TespaState {
    h_hat: Vec<C64>,
    step: usize,
}

impl TespaState {
    /// Starts a session from the initial quantization (step 0 is a plain
    /// trellis quantization; updates begin at step 1).
    pub fn from_initial(h_hat: Vec<C64>) -> Result<TespaState> {
        let n = norm_sq(&h_hat);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "initial quantized vector must be unit norm (got squared norm {n})"
            )));
        }
        Ok(TespaState { h_hat, step: 1 })
    }

    pub fn h_hat(&self) -> &[C64] {
        &self.h_hat
    }

    pub fn step(&self) -> usize {
        self.step
    }
}

/// Left circular shift by `m`: `[1,2,3,4,5]` shifted by 2 is `[3,4,5,1,2]`.
pub(crate) fn circ_shift_left(v: &[C64], m: usize) -> Vec<C64> {
    let n = v.len();
    let m = m % n;
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&v[m..]);
    out.extend_from_slice(&v[..m]);
    out
}

/// One differential update: selects block phases by trellis search against
/// the (shift-interwoven) current channel, returns the feedback word, the
/// advanced state and the achieved metric
/// `min ||shift(h_k) - e^{jθ} P shift(h_hat)||^2`.
pub fn tespa_update(
    cfg: &TespaConfig,
    state: &TespaState,
    h_k: &[C64],
) -> Result<(FeedbackWord, TespaState, f64)> {
    update_inner(cfg, state, h_k, false)
}

/// Overhead-reduced variant: the first block's phase is pinned to zero (its
/// effect is absorbed by the global phase), so only `T-1` input symbols are
/// fed back.
pub fn tespa_update_fixed_first(
    cfg: &TespaConfig,
    state: &TespaState,
    h_k: &[C64],
) -> Result<(FeedbackWord, TespaState, f64)> {
    update_inner(cfg, state, h_k, true)
}

/// One-shot phase adjustment of a quantized dominant eigenvector toward the
/// current channel (spatially correlated channels). No shift accumulates
/// across calls.
pub fn tespa_spatial(
    cfg: &TespaConfig,
    u1_hat: &[C64],
    h_k: &[C64],
) -> Result<(FeedbackWord, Vec<C64>, f64)> {
    let state = TespaState::from_initial(u1_hat.to_vec())?;
    let (fw, new_state, metric) = tespa_update(cfg, &state, h_k)?;
    Ok((fw, new_state.h_hat, metric))
}

/// Base-station side: applies a received feedback word to the mirrored
/// state. The user side's update is `apply_feedback` of its own selection,
/// so both sides stay bit-identical.
pub fn apply_feedback(
    cfg: &TespaConfig,
    state: &TespaState,
    fw: &FeedbackWord,
) -> Result<TespaState> {
    let full_inputs = full_input_sequence(cfg, fw)?;
    let path = cfg.code.encode(&full_inputs)?;
    let shift = cfg.shift_at_step(state.step);
    let n = cfg.num_antennas;
    let mut h_hat = state.h_hat.clone();
    for (i, x) in h_hat.iter_mut().enumerate() {
        let block = ((i + n - shift) % n) / cfg.block_len;
        let phi = cfg.phases.phase_of_label(path.output_labels[block] as usize);
        *x *= C64::new(phi.cos(), phi.sin());
    }
    Ok(TespaState { h_hat, step: state.step + 1 })
}

fn full_input_sequence(cfg: &TespaConfig, fw: &FeedbackWord) -> Result<Vec<u8>> {
    if fw.scheme != Scheme::Tespa {
        return Err(Error::invalid("feedback word is not a phase-adjustment word"));
    }
    if fw.inputs.len() == cfg.stages {
        Ok(fw.inputs.clone())
    } else if fw.inputs.len() + 1 == cfg.stages {
        // Fixed-first word: stage 1 is the pinned zero-input branch.
        let mut full = Vec::with_capacity(cfg.stages);
        full.push(0);
        full.extend_from_slice(&fw.inputs);
        Ok(full)
    } else {
        Err(Error::invalid(format!(
            "feedback has {} stages, config expects {} (or {} fixed-first)",
            fw.inputs.len(),
            cfg.stages,
            cfg.stages.saturating_sub(1)
        )))
    }
}

fn update_inner(
    cfg: &TespaConfig,
    state: &TespaState,
    h_k: &[C64],
    fixed_first: bool,
) -> Result<(FeedbackWord, TespaState, f64)> {
    if h_k.len() != cfg.num_antennas {
        return Err(Error::invalid(format!(
            "channel has dimension {}, config expects {}",
            h_k.len(),
            cfg.num_antennas
        )));
    }
    if state.h_hat.len() != cfg.num_antennas {
        return Err(Error::invalid("state dimension does not match configuration"));
    }
    let n_labels = cfg.code.num_labels();
    let t_stages = cfg.stages;
    let shift = cfg.shift_at_step(state.step);
    let hs = circ_shift_left(h_k, shift);
    let gs = circ_shift_left(&state.h_hat, shift);

    // Per-block cross terms: the branch metric for (θ, label) is
    //   ||hs_t||^2 + ||gs_t||^2 - 2 Re(e^{j(θ+ψ)} <hs_t, gs_t>).
    let block = cfg.block_len;
    let mut base = vec![0.0f64; t_stages];
    let mut cross = vec![C64::new(0.0, 0.0); t_stages];
    for t in 0..t_stages {
        let a = &hs[t * block..(t + 1) * block];
        let b = &gs[t * block..(t + 1) * block];
        base[t] = norm_sq(a) + norm_sq(b);
        cross[t] = vdot(a, b);
    }

    let mut best: Option<(f64, usize, Vec<u8>)> = None;
    let mut bm = vec![0.0f64; t_stages * n_labels];
    for (ti, &theta) in cfg.theta_grid.iter().enumerate() {
        for t in 0..t_stages {
            for l in 0..n_labels {
                let ang = theta + cfg.phases.phase_of_label(l);
                let rot = C64::new(ang.cos(), ang.sin());
                bm[t * n_labels + l] = base[t] - 2.0 * (rot * cross[t]).re;
            }
        }
        let (metric, inputs) = if fixed_first {
            viterbi_fixed_first(&cfg.code, t_stages, n_labels, &bm)
        } else {
            viterbi(&cfg.code, t_stages, n_labels, &bm)
        };
        if best.as_ref().is_none_or(|b| metric < b.0) {
            best = Some((metric, ti, inputs));
        }
    }
    let (metric, theta_index, inputs) = best.expect("theta grid is non-empty");
    let fw = FeedbackWord {
        inputs,
        scheme: Scheme::Tespa,
        best_theta: cfg.theta_grid[theta_index],
        theta_index,
    };
    let new_state = apply_feedback(cfg, state, &fw)?;
    Ok((fw, new_state, metric))
}

/// Viterbi with stage 1 pinned to the zero-input branch out of state 0
/// (label 0, phase 0). Returns the inputs of the free stages only.
fn viterbi_fixed_first(
    code: &ConvCode,
    t_stages: usize,
    n_labels: usize,
    bm: &[f64],
) -> (f64, Vec<u8>) {
    let forced_label = code.output_label(0, 0);
    let forced_cost = bm[forced_label];
    if t_stages == 1 {
        return (forced_cost, Vec::new());
    }
    // Run the remaining stages from the forced successor state. The zero
    // branch of state 0 is a self-loop in every supported code, so the
    // reachable subtrellis is unrestricted.
    let start = code.next_state(0, 0);
    let (tail_metric, tail_inputs) =
        viterbi_from(code, start, t_stages - 1, n_labels, &bm[n_labels..]);
    (forced_cost + tail_metric, tail_inputs)
}

/// Viterbi from an arbitrary start state (used by the fixed-first variant).
fn viterbi_from(
    code: &ConvCode,
    start: usize,
    t_stages: usize,
    n_labels: usize,
    bm: &[f64],
) -> (f64, Vec<u8>) {
    let ns = code.num_states();
    let n_in = code.num_inputs();
    let mut dist = vec![f64::INFINITY; ns];
    dist[start] = 0.0;
    let mut decisions = vec![(0u16, 0u8); t_stages * ns];
    let mut next = vec![f64::INFINITY; ns];
    for t in 0..t_stages {
        next.iter_mut().for_each(|d| *d = f64::INFINITY);
        for s in 0..ns {
            let basev = dist[s];
            if !basev.is_finite() {
                continue;
            }
            for i in 0..n_in {
                let label = code.output_label(s, i);
                let cand = basev + bm[t * n_labels + label];
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
    let mut statev = end;
    for t in (0..t_stages).rev() {
        let (prev, input) = decisions[t * ns + statev];
        inputs[t] = input;
        statev = prev as usize;
    }
    (metric, inputs)
}
