//! Per-stage codebooks and the codeword-to-branch mapping.
//!
//! A codebook holds `2^Bout` words, one per distinct trellis output label.
//! Words are `dim x rank` complex matrices (`rank = 1` for vector/MISO
//! quantization). In `Unit` mode each word has unit Frobenius norm; in
//! `Scaled { num_antennas }` mode the squared norm is `dim / num_antennas`,
//! so the concatenation of one word per trellis stage has unit norm.

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, CMat, C64};
use crate::rng::SimRng;
use crate::trellis::ConvCode;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MAX_FLAT_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Unit,
    Scaled { num_antennas: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    rank: usize,
    words: Vec<CMat>,
    norm: NormMode,
}

impl Codebook {
    fn new_unit(dim: usize, rank: usize, words: Vec<CMat>) -> Self {
        Codebook { dim, rank, words, norm: NormMode::Unit }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, i: usize) -> &CMat {
        &self.words[i]
    }

    pub fn words(&self) -> &[CMat] {
        &self.words
    }

    /// Uniformly random unit-Frobenius words (orthonormal columns for
    /// `rank > 1`). This is both the RVQ construction and the initial
    /// configuration of the distance optimizer.
    pub fn random(dim: usize, n_words: usize, rank: usize, rng: &mut SimRng) -> Codebook {
        let words = (0..n_words).map(|_| random_word(dim, rank, rng)).collect();
        Codebook::new_unit(dim, rank, words)
    }

    /// Random vector-quantization codebook: `2^total_bits` i.i.d. isotropic
    /// unit vectors of dimension `num_antennas`. Refuses more than
    /// [`MAX_FLAT_BITS`] bits, where flat codeword search stops being
    /// simulatable.
    pub fn rvq(num_antennas: usize, total_bits: u32, seed: u64) -> Result<Codebook> {
        let mut rng = SimRng::from_seed(seed);
        Self::rvq_with_rng(num_antennas, total_bits, &mut rng)
    }

    pub fn rvq_with_rng(num_antennas: usize, total_bits: u32, rng: &mut SimRng) -> Result<Codebook> {
        guard_flat_bits(total_bits)?;
        Ok(Self::random(num_antennas, 1 << total_bits, 1, rng))
    }

    /// Matrix-codeword variant of [`Codebook::rvq_with_rng`] used as the
    /// same-overhead baseline for subspace quantization: isotropic random
    /// orthonormal columns, rescaled to unit Frobenius norm.
    pub fn rvq_matrix_with_rng(
        num_antennas: usize,
        rank: usize,
        total_bits: u32,
        rng: &mut SimRng,
    ) -> Result<Codebook> {
        guard_flat_bits(total_bits)?;
        Ok(Self::random(num_antennas, 1 << total_bits, rank, rng))
    }

    /// Oversampled-DFT codebook on 4 antennas: the 8-word variant is the
    /// first half of the standardized LTE 4-Tx codebook (8 DFT beams with
    /// entries `0.5 * exp(j 2π m n / 8)`); the 16-word variant extends the
    /// oversampling to `0.5 * exp(j 2π m n / 16)`. Constant-modulus entries,
    /// unit norm.
    pub fn lte_dft(dim: usize, n_words: usize) -> Result<Codebook> {
        if dim != 4 {
            return Err(Error::config(format!("DFT codebook is defined for dim 4, got {dim}")));
        }
        if n_words != 8 && n_words != 16 {
            return Err(Error::config(format!("DFT codebook supports 8 or 16 words, got {n_words}")));
        }
        let words = (0..n_words)
            .map(|n| {
                CMat::from_fn(dim, 1, |m, _| {
                    let phase = std::f64::consts::TAU * (m * n) as f64 / n_words as f64;
                    C64::new(0.5 * phase.cos(), 0.5 * phase.sin())
                })
            })
            .collect();
        Ok(Codebook::new_unit(dim, 1, words))
    }

    /// Codebook maximizing the minimum pairwise (Frobenius) distance over
    /// unit-norm words: randomized multi-start repulsion with exact
    /// min-distance polishing, keeping the best configuration ever seen.
    /// The result never has a smaller minimum distance than the random
    /// codebook `Codebook::random(dim, n_words, rank, substream(seed, 0))`
    /// it starts from.
    pub fn design_ed(dim: usize, n_words: usize, rank: usize, seed: u64) -> Result<Codebook> {
        if n_words < 2 {
            return Err(Error::invalid("distance design needs at least 2 words"));
        }
        if dim < 1 || rank < 1 || rank > dim {
            return Err(Error::invalid(format!("bad word shape {dim}x{rank}")));
        }
        const STARTS: u64 = 32;
        let candidates: Vec<(f64, Vec<CMat>)> = (0..STARTS)
            .into_par_iter()
            .map(|start| {
                let mut rng = SimRng::substream(seed, start);
                optimize_min_distance(dim, n_words, rank, &mut rng)
            })
            .collect();
        // Best of all starts; ties resolved by start index order.
        let mut best = 0;
        for i in 1..candidates.len() {
            if candidates[i].0 > candidates[best].0 {
                best = i;
            }
        }
        let words = candidates.into_iter().nth(best).unwrap().1;
        Ok(Codebook::new_unit(dim, rank, words))
    }

    /// Minimum pairwise squared Frobenius distance.
    pub fn min_distance_sq(&self) -> f64 {
        min_pairwise_distance_sq(&self.words)
    }

    /// Rescales a unit-mode codebook so every squared word norm is
    /// `dim / num_antennas`.
    pub fn scaled(&self, num_antennas: usize) -> Result<Codebook> {
        if self.norm != NormMode::Unit {
            return Err(Error::invalid("codebook is already scaled"));
        }
        if num_antennas % self.dim != 0 {
            return Err(Error::config(format!(
                "word dimension {} must divide the antenna count {num_antennas}",
                self.dim
            )));
        }
        let s = (self.dim as f64 / num_antennas as f64).sqrt();
        Ok(Codebook {
            dim: self.dim,
            rank: self.rank,
            words: self.words.iter().map(|w| w.scale(s)).collect(),
            norm: NormMode::Scaled { num_antennas },
        })
    }

    pub fn to_json(&self) -> String {
        let file = CodebookFile {
            dim_l: self.dim,
            rank_k: self.rank,
            norm_mode: match self.norm {
                NormMode::Unit => "unit".into(),
                NormMode::Scaled { .. } => "scaled".into(),
            },
            num_antennas: match self.norm {
                NormMode::Unit => None,
                NormMode::Scaled { num_antennas } => Some(num_antennas),
            },
            words: self
                .words
                .iter()
                .map(|w| w.data().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("codebook serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Codebook> {
        let file: CodebookFile =
            serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        let norm = match file.norm_mode.as_str() {
            "unit" => NormMode::Unit,
            "scaled" => NormMode::Scaled {
                num_antennas: file
                    .num_antennas
                    .ok_or_else(|| Error::Serde("scaled codebook without num_antennas".into()))?,
            },
            other => return Err(Error::Serde(format!("unknown norm_mode {other:?}"))),
        };
        let expected = file.dim_l * file.rank_k;
        let mut words = Vec::with_capacity(file.words.len());
        for entries in &file.words {
            if entries.len() != expected {
                return Err(Error::Serde(format!(
                    "word has {} entries, expected {expected}",
                    entries.len()
                )));
            }
            let mut w = CMat::zeros(file.dim_l, file.rank_k);
            // Column-major entry order, matching serialization.
            for (k, e) in entries.iter().enumerate() {
                let (c, r) = (k / file.dim_l, k % file.dim_l);
                w[(r, c)] = C64::new(e[0], e[1]);
            }
            words.push(w);
        }
        Ok(Codebook { dim: file.dim_l, rank: file.rank_k, words, norm })
    }
}

/// On-disk codebook format: words hold `[re, im]` pairs in column-major
/// entry order.
#[derive(Serialize, Deserialize)]
struct CodebookFile {
    dim_l: usize,
    rank_k: usize,
    norm_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_antennas: Option<usize>,
    words: Vec<Vec<[f64; 2]>>,
}

fn guard_flat_bits(total_bits: u32) -> Result<()> {
    if total_bits > MAX_FLAT_BITS {
        return Err(Error::feasibility(format!(
            "flat vector quantization with {total_bits} bits (2^{total_bits} codewords) \
             is not simulatable; the supported maximum is {MAX_FLAT_BITS} bits"
        )));
    }
    Ok(())
}

fn random_word(dim: usize, rank: usize, rng: &mut SimRng) -> CMat {
    let mut w = CMat::from_fn(dim, rank, |_, _| rng.complex_normal());
    project_word(&mut w);
    w
}

/// Projects a word back onto the feasible set: unit Frobenius norm, with
/// orthonormal columns (scaled by 1/sqrt(rank)) when rank > 1.
fn project_word(w: &mut CMat) {
    if w.cols() > 1 {
        orthonormalize(w);
        let s = 1.0 / (w.cols() as f64).sqrt();
        *w = w.scale(s);
    } else {
        let n = w.frobenius_sq().sqrt();
        if n > 0.0 {
            *w = w.scale(1.0 / n);
        }
    }
}

fn min_pairwise_distance_sq(words: &[CMat]) -> f64 {
    let mut dmin = f64::INFINITY;
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            dmin = dmin.min(distance_sq(&words[i], &words[j]));
        }
    }
    dmin
}

fn distance_sq(a: &CMat, b: &CMat) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// One optimizer start: soft-min repulsion with annealing, then pairwise
/// push-apart polishing. Returns the best (min distance, words) seen,
/// which includes the initial random configuration.
fn optimize_min_distance(
    dim: usize,
    n_words: usize,
    rank: usize,
    rng: &mut SimRng,
) -> (f64, Vec<CMat>) {
    let mut words: Vec<CMat> = (0..n_words).map(|_| random_word(dim, rank, rng)).collect();
    let mut best = (min_pairwise_distance_sq(&words), words.clone());

    const REPULSION_ITERS: usize = 300;
    for iter in 0..REPULSION_ITERS {
        let frac = iter as f64 / REPULSION_ITERS as f64;
        let beta = 2.0 * (40.0f64 / 2.0).powf(frac); // 2 -> 40
        let mu = 0.25 * (0.02f64 / 0.25).powf(frac); // 0.25 -> 0.02

        let mut d2 = vec![vec![0.0; n_words]; n_words];
        let mut dmin = f64::INFINITY;
        for i in 0..n_words {
            for j in (i + 1)..n_words {
                let d = distance_sq(&words[i], &words[j]);
                d2[i][j] = d;
                d2[j][i] = d;
                dmin = dmin.min(d);
            }
        }
        let entries = dim * rank;
        let mut next = words.clone();
        for k in 0..n_words {
            let mut force = vec![C64::new(0.0, 0.0); entries];
            for l in 0..n_words {
                if l == k {
                    continue;
                }
                let w = (-beta * (d2[k][l] - dmin)).exp();
                for (f, (a, b)) in force.iter_mut().zip(words[k].data().iter().zip(words[l].data()))
                {
                    *f += (a - b) * w;
                }
            }
            let fnorm = crate::linalg::norm_sq(&force).sqrt();
            if fnorm > 1e-12 {
                let step = mu / fnorm;
                let moved: Vec<C64> = words[k]
                    .data()
                    .iter()
                    .zip(&force)
                    .map(|(a, f)| a + f * step)
                    .collect();
                let mut moved = CMat::from_data(dim, rank, moved);
                project_word(&mut moved);
                next[k] = moved;
            }
        }
        words = next;
        let d = min_pairwise_distance_sq(&words);
        if d > best.0 {
            best = (d, words.clone());
        }
    }

    // Exact min-distance polishing: push the closest pair apart, keep only
    // strict improvements.
    words = best.1.clone();
    let mut eps = 0.08;
    for _ in 0..120 {
        let (mut pi, mut pj, mut dmin) = (0, 1, f64::INFINITY);
        for i in 0..n_words {
            for j in (i + 1)..n_words {
                let d = distance_sq(&words[i], &words[j]);
                if d < dmin {
                    dmin = d;
                    pi = i;
                    pj = j;
                }
            }
        }
        let mut trial = words.clone();
        let mut di = Vec::with_capacity(dim * rank);
        let mut dj = Vec::with_capacity(dim * rank);
        for idx in 0..dim * rank {
            let diff = words[pi].data()[idx] - words[pj].data()[idx];
            di.push(words[pi].data()[idx] + diff * eps);
            dj.push(words[pj].data()[idx] - diff * eps);
        }
        let mut wi = CMat::from_data(dim, rank, di);
        let mut wj = CMat::from_data(dim, rank, dj);
        project_word(&mut wi);
        project_word(&mut wj);
        trial[pi] = wi;
        trial[pj] = wj;
        let d = min_pairwise_distance_sq(&trial);
        if d > best.0 {
            best = (d, trial.clone());
            words = trial;
        } else {
            eps *= 0.7;
            if eps < 1e-4 {
                break;
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Codeword-to-branch mapping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingKind {
    /// Distance-driven assignment: the best balanced half of the codebook
    /// (largest min intra-set distance, exhaustively searched) goes to the
    /// even labels; sub-halves of the remainder go to the odd label pairs
    /// that compete in short trellis error events.
    Proposed,
    /// A uniformly random bijection (fresh per call).
    Random,
    /// Label `i` maps to word `i`.
    Identity,
}

/// Bijective assignment of codebook indices to trellis output labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchMapping {
    label_to_word: Vec<usize>,
    pub kind: MappingKind,
}

impl BranchMapping {
    pub fn word_for_label(&self, label: usize) -> usize {
        self.label_to_word[label]
    }

    pub fn table(&self) -> &[usize] {
        &self.label_to_word
    }

    pub fn len(&self) -> usize {
        self.label_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label_to_word.is_empty()
    }
}

/// Builds the codeword-to-branch mapping for `code`. `rng` is required only
/// for [`MappingKind::Random`], which draws a fresh bijection per call.
pub fn map_codewords_to_branches(
    cb: &Codebook,
    code: &ConvCode,
    kind: MappingKind,
    rng: Option<&mut SimRng>,
) -> Result<BranchMapping> {
    let n = code.num_labels();
    if cb.len() != n {
        return Err(Error::invalid(format!(
            "codebook has {} words but the trellis has {n} distinct labels",
            cb.len()
        )));
    }
    let table = match kind {
        MappingKind::Identity => (0..n).collect(),
        MappingKind::Random => {
            let rng = rng.ok_or_else(|| Error::invalid("random mapping needs a generator"))?;
            rng.permutation(n)
        }
        MappingKind::Proposed => proposed_mapping(cb, n)?,
    };
    Ok(BranchMapping { label_to_word: table, kind })
}

/// The distance-driven mapping. The even labels take the exhaustive-best
/// half because every even-label pair competes from the very first trellis
/// transition (the search starts at state 0, whose branches are all even).
/// The odd half is re-split the same way onto the label pairs {1,5}/{3,7}
/// (and once more per half for the 16-label trellis), which are the odd
/// pairs that appear on short merging path pairs.
fn proposed_mapping(cb: &Codebook, n: usize) -> Result<Vec<usize>> {
    if !(n == 4 || n == 8 || n == 16) {
        return Err(Error::config(format!("proposed mapping supports 4, 8 or 16 labels, got {n}")));
    }
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance_sq(cb.word(i), cb.word(j));
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let (even_set, odd_set) = best_half(&all, &dist);
    let mut table = vec![0usize; n];
    let assign = |table: &mut Vec<usize>, labels: &[usize], words: &[usize]| {
        // Ascending word index onto ascending label.
        for (&l, &w) in labels.iter().zip(words) {
            table[l] = w;
        }
    };
    match n {
        4 => {
            assign(&mut table, &[0, 2], &even_set);
            assign(&mut table, &[1, 3], &odd_set);
        }
        8 => {
            assign(&mut table, &[0, 2, 4, 6], &even_set);
            let (o1, o2) = best_half(&odd_set, &dist);
            assign(&mut table, &[1, 5], &o1);
            assign(&mut table, &[3, 7], &o2);
        }
        16 => {
            let (e1, e2) = best_half(&even_set, &dist);
            assign(&mut table, &[0, 4, 8, 12], &e1);
            assign(&mut table, &[2, 6, 10, 14], &e2);
            let (o1, o2) = best_half(&odd_set, &dist);
            assign(&mut table, &[1, 5, 9, 13], &o1);
            assign(&mut table, &[3, 7, 11, 15], &o2);
        }
        _ => unreachable!(),
    }
    Ok(table)
}

/// Exhaustively searches the balanced bipartitions of `indices` and returns
/// `(best, rest)` where `best` has the maximum min intra-set distance. Ties
/// go to the lexicographically smallest index set, so the result is
/// deterministic.
fn best_half(indices: &[usize], dist: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>) {
    let n = indices.len();
    let half = n / 2;
    debug_assert!(n % 2 == 0 && half >= 1);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_mask = 0usize;
    // Iterate subsets in lexicographic order of their sorted index sets, so
    // a strict comparison keeps the lexicographically smallest on ties.
    for_each_combination(n, half, |positions| {
        let mut v = f64::INFINITY;
        for a in 0..half {
            for b in (a + 1)..half {
                v = v.min(dist[indices[positions[a]]][indices[positions[b]]]);
            }
        }
        if half == 1 {
            v = f64::INFINITY;
        }
        if v > best_val {
            best_val = v;
            best_mask = positions.iter().fold(0usize, |m, &p| m | (1 << p));
        }
    });
    let mut best = Vec::with_capacity(half);
    let mut rest = Vec::with_capacity(n - half);
    for (p, &idx) in indices.iter().enumerate() {
        if best_mask & (1 << p) != 0 {
            best.push(idx);
        } else {
            rest.push(idx);
        }
    }
    (best, rest)
}

/// Calls `f` with each size-`k` combination of `0..n`, in lexicographic
/// order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        f(&c);
        // Advance to the next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if c[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        c[i] += 1;
        for j in i + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}
