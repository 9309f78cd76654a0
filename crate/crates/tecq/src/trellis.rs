//! Convolutional codes and their trellis tables.
//!
//! The quantizer uses the trellis as its search lattice (Viterbi) and the
//! transmitter uses the same tables as the reconstructor, so the tables are
//! fixed, published constants rather than anything derived at run time.
//!
//! All three supported codes share one systematic feedback structure: the
//! state bits are `c1..cv` (c1 is the state LSB), the input bits are
//! `b1..b{v-1}` (b1 is the input LSB), the single parity output bit is `c1`,
//! and the register update is `c1' = c2^b1, c2' = c3^b2, ..., cv' = c1`.
//! Consequently every state's outgoing branches carry distinct labels that
//! are all even (even states) or all odd (odd states), and all `2^(Bin+1)`
//! labels occur across the trellis.
//!
//! Rate-1/2, 4 states (label = c1 | b<<1):
//!
//! ```text
//! state | in 0        | in 1
//!   0   | out 0 -> 0  | out 2 -> 1
//!   1   | out 1 -> 2  | out 3 -> 3
//!   2   | out 0 -> 1  | out 2 -> 0
//!   3   | out 1 -> 3  | out 3 -> 2
//! ```
//!
//! Rate-2/3, 8 states (label = c1 | b2<<1 | b1<<2; the systematic bits are
//! packed so that state 0 moves to state 1 on input 1 with output 4):
//!
//! ```text
//! state | in 0        | in 1        | in 2        | in 3
//!   0   | out 0 -> 0  | out 4 -> 1  | out 2 -> 2  | out 6 -> 3
//!   1   | out 1 -> 4  | out 5 -> 5  | out 3 -> 6  | out 7 -> 7
//!   2   | out 0 -> 1  | out 4 -> 0  | out 2 -> 3  | out 6 -> 2
//!   3   | out 1 -> 5  | out 5 -> 4  | out 3 -> 7  | out 7 -> 6
//!   4   | out 0 -> 2  | out 4 -> 3  | out 2 -> 0  | out 6 -> 1
//!   5   | out 1 -> 6  | out 5 -> 7  | out 3 -> 4  | out 7 -> 5
//!   6   | out 0 -> 3  | out 4 -> 2  | out 2 -> 1  | out 6 -> 0
//!   7   | out 1 -> 7  | out 5 -> 6  | out 3 -> 5  | out 7 -> 4
//! ```
//!
//! Rate-3/4, 16 states: same register structure with
//! label = c1 | b1<<1 | b2<<2 | b3<<3 and
//! next  = (c2^b1) | (c3^b2)<<1 | (c4^b3)<<2 | c1<<3.

use crate::error::{Error, Result};
use serde::Serialize;

/// A rate Bin/(Bin+1) convolutional code as explicit transition tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvCode {
    num_states: usize,
    input_bits: u32,
    output_bits: u32,
    /// `next_state[state][input]`
    next_state: Vec<Vec<u16>>,
    /// `output_label[state][input]`
    output_label: Vec<Vec<u16>>,
}

/// A path through the trellis, always starting at state 0. Fixing the start
/// state keeps the path representable by its input bits alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrellisPath {
    pub inputs: Vec<u8>,
    pub output_labels: Vec<u16>,
}

impl TrellisPath {
    pub const START_STATE: usize = 0;
}

/// One `(state, input) -> (next_state, label)` table entry, for the JSON
/// debug dump consumed by cross-implementation checks.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransitionRow {
    pub state: u16,
    pub input: u16,
    pub next_state: u16,
    pub label: u16,
}

impl ConvCode {
    /// Builds one of the supported systematic feedback codes:
    /// `(4, 1)`, `(8, 2)` or `(16, 3)` as `(num_states, input_bits)`.
    pub fn ungerboeck(num_states: usize, input_bits: u32) -> Result<ConvCode> {
        match (num_states, input_bits) {
            (4, 1) => Ok(Self::from_tables(4, 1, |s, i| {
                let (c1, c2) = (s & 1, (s >> 1) & 1);
                let b = i & 1;
                let label = c1 | (b << 1);
                let next = (c2 ^ b) | (c1 << 1);
                (next, label)
            })),
            (8, 2) => Ok(Self::from_tables(8, 2, |s, i| {
                let (c1, c2, c3) = (s & 1, (s >> 1) & 1, (s >> 2) & 1);
                let (b1, b2) = (i & 1, (i >> 1) & 1);
                let label = c1 | (b2 << 1) | (b1 << 2);
                let next = (c2 ^ b1) | ((c3 ^ b2) << 1) | (c1 << 2);
                (next, label)
            })),
            (16, 3) => Ok(Self::from_tables(16, 3, |s, i| {
                let (c1, c2, c3, c4) = (s & 1, (s >> 1) & 1, (s >> 2) & 1, (s >> 3) & 1);
                let (b1, b2, b3) = (i & 1, (i >> 1) & 1, (i >> 2) & 1);
                let label = c1 | (b1 << 1) | (b2 << 2) | (b3 << 3);
                let next = (c2 ^ b1) | ((c3 ^ b2) << 1) | ((c4 ^ b3) << 2) | (c1 << 3);
                (next, label)
            })),
            _ => Err(Error::config(format!(
                "unsupported code: {num_states} states with {input_bits} input bits \
                 (supported: (4,1), (8,2), (16,3))"
            ))),
        }
    }

    /// The code whose per-stage input count realizes `input_bits` feedback
    /// bits per stage: 1 -> 4 states, 2 -> 8, 3 -> 16.
    pub fn for_input_bits(input_bits: u32) -> Result<ConvCode> {
        Self::ungerboeck(1usize << (input_bits + 1), input_bits)
    }

    fn from_tables(
        num_states: usize,
        input_bits: u32,
        rule: impl Fn(usize, usize) -> (usize, usize),
    ) -> ConvCode {
        let num_inputs = 1usize << input_bits;
        let mut next_state = vec![vec![0u16; num_inputs]; num_states];
        let mut output_label = vec![vec![0u16; num_inputs]; num_states];
        for s in 0..num_states {
            for i in 0..num_inputs {
                let (next, label) = rule(s, i);
                next_state[s][i] = next as u16;
                output_label[s][i] = label as u16;
            }
        }
        ConvCode { num_states, input_bits, output_bits: input_bits + 1, next_state, output_label }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn input_bits(&self) -> u32 {
        self.input_bits
    }

    pub fn output_bits(&self) -> u32 {
        self.output_bits
    }

    /// Branches per state.
    pub fn num_inputs(&self) -> usize {
        1 << self.input_bits
    }

    /// Distinct output labels across the trellis.
    pub fn num_labels(&self) -> usize {
        1 << self.output_bits
    }

    pub fn next_state(&self, state: usize, input: usize) -> usize {
        self.next_state[state][input] as usize
    }

    pub fn output_label(&self, state: usize, input: usize) -> usize {
        self.output_label[state][input] as usize
    }

    /// Runs the encoder from state 0 over `inputs`.
    pub fn encode(&self, inputs: &[u8]) -> Result<TrellisPath> {
        let mut labels = Vec::with_capacity(inputs.len());
        let mut state = TrellisPath::START_STATE;
        for &i in inputs {
            let i = i as usize;
            if i >= self.num_inputs() {
                return Err(Error::invalid(format!(
                    "input symbol {i} out of range for {} input bits",
                    self.input_bits
                )));
            }
            labels.push(self.output_label[state][i]);
            state = self.next_state[state][i] as usize;
        }
        Ok(TrellisPath { inputs: inputs.to_vec(), output_labels: labels })
    }

    /// Every trellis path of `stages` stages from state 0, for brute-force
    /// oracles. Refuses anything beyond 2^20 paths.
    pub fn enumerate_paths(&self, stages: usize) -> Result<Vec<TrellisPath>> {
        let total_bits = self.input_bits as usize * stages;
        if total_bits > 20 {
            return Err(Error::feasibility(format!(
                "enumerate_paths would generate 2^{total_bits} paths; limit is 2^20"
            )));
        }
        let count = 1usize << total_bits;
        let num_inputs = self.num_inputs() as u64;
        let mut out = Vec::with_capacity(count);
        for idx in 0..count as u64 {
            let mut rem = idx;
            let mut inputs = Vec::with_capacity(stages);
            for _ in 0..stages {
                inputs.push((rem % num_inputs) as u8);
                rem /= num_inputs;
            }
            out.push(self.encode(&inputs)?);
        }
        Ok(out)
    }

    /// Flat table dump for the JSON debug interface.
    pub fn transition_rows(&self) -> Vec<TransitionRow> {
        let mut rows = Vec::with_capacity(self.num_states * self.num_inputs());
        for s in 0..self.num_states {
            for i in 0..self.num_inputs() {
                rows.push(TransitionRow {
                    state: s as u16,
                    input: i as u16,
                    next_state: self.next_state[s][i],
                    label: self.output_label[s][i],
                });
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_codes() -> Vec<ConvCode> {
        vec![
            ConvCode::ungerboeck(4, 1).unwrap(),
            ConvCode::ungerboeck(8, 2).unwrap(),
            ConvCode::ungerboeck(16, 3).unwrap(),
        ]
    }

    #[test]
    fn eight_state_anchor_transition() {
        // State 0 moves to state 1 on input 1 with output 4.
        let code = ConvCode::ungerboeck(8, 2).unwrap();
        assert_eq!(code.next_state(0, 1), 1);
        assert_eq!(code.output_label(0, 1), 4);
    }

    #[test]
    fn eight_state_full_table_is_exact() {
        let code = ConvCode::ungerboeck(8, 2).unwrap();
        // (next_state, label) rows in (state, input) order; the table from
        // the module docs.
        #[rustfmt::skip]
        let expected: [[(usize, usize); 4]; 8] = [
            [(0, 0), (1, 4), (2, 2), (3, 6)],
            [(4, 1), (5, 5), (6, 3), (7, 7)],
            [(1, 0), (0, 4), (3, 2), (2, 6)],
            [(5, 1), (4, 5), (7, 3), (6, 7)],
            [(2, 0), (3, 4), (0, 2), (1, 6)],
            [(6, 1), (7, 5), (4, 3), (5, 7)],
            [(3, 0), (2, 4), (1, 2), (0, 6)],
            [(7, 1), (6, 5), (5, 3), (4, 7)],
        ];
        for s in 0..8 {
            for i in 0..4 {
                assert_eq!(code.next_state(s, i), expected[s][i].0, "next({s},{i})");
                assert_eq!(code.output_label(s, i), expected[s][i].1, "label({s},{i})");
            }
        }
    }

    #[test]
    fn four_state_full_table_is_exact() {
        let code = ConvCode::ungerboeck(4, 1).unwrap();
        #[rustfmt::skip]
        let expected: [[(usize, usize); 2]; 4] = [
            [(0, 0), (1, 2)],
            [(2, 1), (3, 3)],
            [(1, 0), (0, 2)],
            [(3, 1), (2, 3)],
        ];
        for s in 0..4 {
            for i in 0..2 {
                assert_eq!(code.next_state(s, i), expected[s][i].0);
                assert_eq!(code.output_label(s, i), expected[s][i].1);
            }
        }
    }

    #[test]
    fn structural_invariants_hold_for_all_codes() {
        for code in all_codes() {
            assert_eq!(code.output_bits(), code.input_bits() + 1);
            let mut seen_labels = vec![false; code.num_labels()];
            for s in 0..code.num_states() {
                let mut state_labels = Vec::new();
                for i in 0..code.num_inputs() {
                    let l = code.output_label(s, i);
                    seen_labels[l] = true;
                    state_labels.push(l);
                    assert!(code.next_state(s, i) < code.num_states());
                }
                // Labels within a state: distinct, and all even or all odd
                // matching the state parity.
                let parity = s % 2;
                for &l in &state_labels {
                    assert_eq!(l % 2, parity, "state {s} label {l}");
                }
                state_labels.sort_unstable();
                state_labels.dedup();
                assert_eq!(state_labels.len(), code.num_inputs(), "state {s} labels not distinct");
            }
            assert!(seen_labels.iter().all(|&b| b), "not all labels occur");
            // Regular in-degree.
            let mut indeg = vec![0usize; code.num_states()];
            for s in 0..code.num_states() {
                for i in 0..code.num_inputs() {
                    indeg[code.next_state(s, i)] += 1;
                }
            }
            assert!(indeg.iter().all(|&d| d == code.num_inputs()));
        }
    }

    #[test]
    fn unsupported_codes_are_rejected() {
        assert!(ConvCode::ungerboeck(8, 1).is_err());
        assert!(ConvCode::ungerboeck(32, 4).is_err());
        assert!(ConvCode::ungerboeck(5, 2).is_err());
    }

    #[test]
    fn encode_single_symbol_matches_anchor() {
        let code = ConvCode::ungerboeck(8, 2).unwrap();
        let path = code.encode(&[1]).unwrap();
        assert_eq!(path.output_labels, vec![4]);
    }

    #[test]
    fn encode_all_zero_inputs_walks_branch_zero() {
        for code in all_codes() {
            let path = code.encode(&[0; 5]).unwrap();
            let mut state = 0;
            for &l in &path.output_labels {
                assert_eq!(l as usize, code.output_label(state, 0));
                state = code.next_state(state, 0);
            }
        }
    }

    #[test]
    fn encode_rejects_out_of_range_symbols() {
        let code = ConvCode::ungerboeck(4, 1).unwrap();
        assert!(code.encode(&[0, 2]).is_err());
    }

    #[test]
    fn enumerate_path_counts() {
        let eight = ConvCode::ungerboeck(8, 2).unwrap();
        assert_eq!(eight.enumerate_paths(1).unwrap().len(), 4);
        assert_eq!(eight.enumerate_paths(2).unwrap().len(), 16);
        let four = ConvCode::ungerboeck(4, 1).unwrap();
        assert_eq!(four.enumerate_paths(3).unwrap().len(), 8);
    }

    #[test]
    fn enumerate_paths_are_distinct() {
        let code = ConvCode::ungerboeck(8, 2).unwrap();
        let mut paths: Vec<Vec<u8>> =
            code.enumerate_paths(4).unwrap().into_iter().map(|p| p.inputs).collect();
        let n = paths.len();
        paths.sort();
        paths.dedup();
        assert_eq!(paths.len(), n);
    }

    #[test]
    fn enumerate_paths_guard_boundary() {
        let code = ConvCode::ungerboeck(16, 3).unwrap();
        assert!(code.enumerate_paths(6).is_ok()); // 2^18
        assert!(code.enumerate_paths(7).is_err()); // 2^21
    }

    #[test]
    fn transition_rows_cover_table() {
        let code = ConvCode::ungerboeck(4, 1).unwrap();
        let rows = code.transition_rows();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().any(|r| r.state == 0 && r.input == 1 && r.label == 2));
    }

    proptest! {
        #[test]
        fn encode_round_trip(inputs in proptest::collection::vec(0u8..4, 0..24)) {
            let code = ConvCode::ungerboeck(8, 2).unwrap();
            let path = code.encode(&inputs).unwrap();
            prop_assert_eq!(&path.inputs, &inputs);
            prop_assert_eq!(path.output_labels.len(), inputs.len());
            // Recompute labels independently from the tables.
            let mut state = 0usize;
            for (t, &i) in inputs.iter().enumerate() {
                prop_assert_eq!(path.output_labels[t] as usize, code.output_label(state, i as usize));
                state = code.next_state(state, i as usize);
            }
        }
    }
}
