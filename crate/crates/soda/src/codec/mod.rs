//! [n, k] MDS erasure coding over GF(256).
//!
//! The generator is a systematic Vandermonde-derived matrix G = V * V_top^-1,
//! so fragment i is a deterministic pure function of (params, value, i).
//! That determinism matters: relay servers recompute other servers' fragments
//! and every replica of a coded element must be bit-identical.
//!
//! A value of L bytes is zero-padded to k * ceil(L/k) and striped column-wise
//! across k stripes; each fragment payload is exactly ceil(L/k) bytes. The
//! original length rides along as fragment metadata so padding strips off at
//! decode.

pub mod gf256;

use gf256::Matrix;
use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Servers are addressed as GF(256) points, which caps n at 255.
pub const MAX_N: usize = 255;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid code parameters: {0}")]
    InvalidParams(String),
    #[error("expected {expected} fragments, got {got}")]
    WrongFragmentCount { expected: usize, got: usize },
    #[error("duplicate fragment index {0}")]
    DuplicateIndex(usize),
    #[error("fragment index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("fragments disagree on payload or value length")]
    LengthMismatch,
    #[error("cannot encode an empty value")]
    EmptyValue,
    #[error("no candidate value consistent with enough fragments")]
    DecodeFailure,
}

/// Dimensions of the erasure code: n fragments, any k reconstruct, and up to
/// e of the fragments handed to the error decoder may be corrupt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeParams {
    pub n: usize,
    pub k: usize,
    pub e: usize,
}

impl CodeParams {
    pub fn new(n: usize, k: usize, e: usize) -> Result<Self, CodecError> {
        if k == 0 {
            return Err(CodecError::InvalidParams("k must be at least 1".into()));
        }
        if k > n {
            return Err(CodecError::InvalidParams(format!("k = {k} exceeds n = {n}")));
        }
        if n > MAX_N {
            return Err(CodecError::InvalidParams(format!("n = {n} exceeds field size")));
        }
        Ok(CodeParams { n, k, e })
    }

    /// SODA dimension: k = n - f. Write quorums (n - f acks) must intersect
    /// phase-1 majorities, which needs 2f <= n; liveness under f crashes
    /// additionally needs f <= (n-1)/2.
    pub fn for_soda(n: usize, f: usize) -> Result<Self, CodecError> {
        if 2 * f > n {
            return Err(CodecError::InvalidParams(format!(
                "f = {f} violates f <= n/2 for n = {n}"
            )));
        }
        CodeParams::new(n, n - f, 0)
    }

    /// SODA-err dimension: k = n - f - 2e.
    pub fn for_soda_err(n: usize, f: usize, e: usize) -> Result<Self, CodecError> {
        if 2 * f > n {
            return Err(CodecError::InvalidParams(format!(
                "f = {f} violates f <= n/2 for n = {n}"
            )));
        }
        if f + 2 * e >= n {
            return Err(CodecError::InvalidParams(format!(
                "k = n - f - 2e = {} must be at least 1",
                n as i64 - f as i64 - 2 * e as i64
            )));
        }
        CodeParams::new(n, n - f - 2 * e, e)
    }

    /// Fragment payload size for a value of `value_len` bytes.
    pub fn stripe_len(&self, value_len: usize) -> usize {
        value_len.div_ceil(self.k)
    }

    /// Padded value size: the unit all normalized costs are measured in.
    pub fn padded_len(&self, value_len: usize) -> usize {
        self.stripe_len(value_len) * self.k
    }
}

/// An opaque application value; size is measured in bytes of the raw string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Value(pub Vec<u8>);

impl Value {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One server's fragment: `payload` is exactly ceil(value_len / k) bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedElement {
    /// Server index in 1..=n.
    pub index: usize,
    /// Byte length of the original (unpadded) value.
    pub value_len: u32,
    pub payload: Vec<u8>,
}

/// Encoder/decoder for a fixed set of parameters.
#[derive(Debug, Clone)]
pub struct Codec {
    params: CodeParams,
    gen: Matrix,
}

impl Codec {
    pub fn new(params: CodeParams) -> Self {
        let v = Matrix::vandermonde(params.n, params.k);
        let top = v.select_rows(&(0..params.k).collect::<Vec<_>>());
        let top_inv = top.inverse().expect("vandermonde top block is invertible");
        Codec { params, gen: v.matmul(&top_inv) }
    }

    pub fn params(&self) -> CodeParams {
        self.params
    }

    /// All n fragments of `v`, indices 1..=n.
    pub fn encode(&self, v: &Value) -> Result<Vec<CodedElement>, CodecError> {
        if v.is_empty() {
            return Err(CodecError::EmptyValue);
        }
        Ok((1..=self.params.n).map(|i| self.fragment(v, i)).collect())
    }

    /// Fragment for a single server index, identical to `encode(v)[index-1]`.
    pub fn encode_fragment(&self, v: &Value, index: usize) -> Result<CodedElement, CodecError> {
        if v.is_empty() {
            return Err(CodecError::EmptyValue);
        }
        if index == 0 || index > self.params.n {
            return Err(CodecError::IndexOutOfRange(index));
        }
        Ok(self.fragment(v, index))
    }

    fn fragment(&self, v: &Value, index: usize) -> CodedElement {
        let k = self.params.k;
        let stripe = self.params.stripe_len(v.len());
        let row = self.gen.row(index - 1);
        let mut payload = vec![0u8; stripe];
        // Column j of the code is bytes v[j*k .. j*k + k], zero-padded.
        for (j, out) in payload.iter_mut().enumerate() {
            let base = j * k;
            let mut acc = 0u8;
            for (m, &g) in row.iter().enumerate() {
                if let Some(&b) = v.0.get(base + m) {
                    acc ^= gf256::mul(g, b);
                }
            }
            *out = acc;
        }
        CodedElement { index, value_len: v.len() as u32, payload }
    }

    /// Reconstructs the value from exactly k erasure-free fragments.
    pub fn decode(&self, fragments: &[CodedElement]) -> Result<Value, CodecError> {
        let k = self.params.k;
        if fragments.len() != k {
            return Err(CodecError::WrongFragmentCount { expected: k, got: fragments.len() });
        }
        self.check_consistency(fragments)?;
        let rows: Vec<usize> = fragments.iter().map(|f| f.index - 1).collect();
        let sub = self.gen.select_rows(&rows);
        let inv = sub.inverse().expect("any k rows of an MDS generator are invertible");
        let value_len = fragments[0].value_len as usize;
        let stripe = self.params.stripe_len(value_len);
        let mut buf = vec![0u8; stripe * k];
        for j in 0..stripe {
            for m in 0..k {
                let mut acc = 0u8;
                for (c, frag) in fragments.iter().enumerate() {
                    acc ^= gf256::mul(inv.get(m, c), frag.payload[j]);
                }
                buf[j * k + m] = acc;
            }
        }
        buf.truncate(value_len);
        Ok(Value(buf))
    }

    /// Error-correcting decode from at least k + 2e fragments, of which at
    /// most e carry corrupted payloads at unknown positions.
    ///
    /// Subset voting: decode each k-subset and accept the first candidate
    /// whose re-encoding agrees with all but at most e of the supplied
    /// fragments. Any two such candidates agree on >= k fragment indices and
    /// are therefore equal, so the answer is unique.
    pub fn decode_with_errors(&self, fragments: &[CodedElement]) -> Result<Value, CodecError> {
        let k = self.params.k;
        let e = self.params.e;
        if e == 0 {
            let head: Vec<CodedElement> = fragments.iter().take(k).cloned().collect();
            return self.decode(&head);
        }
        if fragments.len() < k + 2 * e {
            return Err(CodecError::WrongFragmentCount {
                expected: k + 2 * e,
                got: fragments.len(),
            });
        }
        self.check_consistency(fragments)?;
        let need = fragments.len() - e;
        for subset in (0..fragments.len()).combinations(k) {
            let chosen: Vec<CodedElement> = subset.iter().map(|&i| fragments[i].clone()).collect();
            let candidate = self.decode(&chosen)?;
            let consistent = fragments
                .iter()
                .filter(|f| self.fragment(&candidate, f.index).payload == f.payload)
                .count();
            if consistent >= need {
                return Ok(candidate);
            }
        }
        Err(CodecError::DecodeFailure)
    }

    fn check_consistency(&self, fragments: &[CodedElement]) -> Result<(), CodecError> {
        let mut seen = vec![false; self.params.n + 1];
        let value_len = fragments[0].value_len;
        let stripe = self.params.stripe_len(value_len as usize);
        for f in fragments {
            if f.index == 0 || f.index > self.params.n {
                return Err(CodecError::IndexOutOfRange(f.index));
            }
            if seen[f.index] {
                return Err(CodecError::DuplicateIndex(f.index));
            }
            seen[f.index] = true;
            if f.value_len != value_len || f.payload.len() != stripe {
                return Err(CodecError::LengthMismatch);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use proptest::prelude::*;

    fn codec(n: usize, k: usize, e: usize) -> Codec {
        Codec::new(CodeParams::new(n, k, e).unwrap())
    }

    fn value(len: usize, seed: u8) -> Value {
        Value((0..len).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect())
    }

    #[test]
    fn fragment_sizes() {
        let c = codec(5, 3, 0);
        let frags = c.encode(&value(6, 1)).unwrap();
        assert_eq!(frags.len(), 5);
        for (i, f) in frags.iter().enumerate() {
            assert_eq!(f.index, i + 1);
            assert_eq!(f.payload.len(), 2);
        }
        // size law: total stored bytes = n * ceil(len/k)
        let total: usize = frags.iter().map(|f| f.payload.len()).sum();
        assert_eq!(total, 5 * 2);
    }

    #[test]
    fn identity_code() {
        let c = codec(1, 1, 0);
        let v = value(9, 7);
        let frags = c.encode(&v).unwrap();
        assert_eq!(frags.len(), 1);
        assert_eq!(c.decode(&frags).unwrap(), v);
    }

    #[test]
    fn systematic_prefix() {
        // fragment i <= k carries stripe i directly
        let c = codec(6, 3, 0);
        let v = value(9, 3);
        let frags = c.encode(&v).unwrap();
        for (m, frag) in frags.iter().take(3).enumerate() {
            let expected: Vec<u8> = (0..3).map(|j| v.0[j * 3 + m]).collect();
            assert_eq!(frag.payload, expected);
        }
    }

    #[test]
    fn all_k_subsets_decode() {
        let c = codec(5, 3, 0);
        let v = value(30, 11);
        let frags = c.encode(&v).unwrap();
        let mut count = 0;
        for subset in frags.iter().cloned().combinations(3) {
            assert_eq!(c.decode(&subset).unwrap(), v);
            count += 1;
        }
        assert_eq!(count, 10);
    }

    #[test]
    fn first_and_last_k() {
        let c = codec(7, 4, 0);
        let v = value(21, 5);
        let frags = c.encode(&v).unwrap();
        assert_eq!(c.decode(&frags[..4]).unwrap(), v);
        assert_eq!(c.decode(&frags[3..]).unwrap(), v);
    }

    #[test]
    fn k1_unpads() {
        let c = codec(3, 1, 0);
        let v = value(5, 2);
        let frags = c.encode(&v).unwrap();
        assert_eq!(c.decode(&frags[2..3]).unwrap(), v);
    }

    #[test]
    fn decode_precondition_errors() {
        let c = codec(5, 3, 0);
        let v = value(12, 9);
        let frags = c.encode(&v).unwrap();
        assert!(matches!(
            c.decode(&frags[..2]),
            Err(CodecError::WrongFragmentCount { expected: 3, got: 2 })
        ));
        let dup = vec![frags[0].clone(), frags[0].clone(), frags[1].clone()];
        assert_eq!(c.decode(&dup), Err(CodecError::DuplicateIndex(1)));
        let mut bad = frags[..3].to_vec();
        bad[1].payload.push(0);
        assert_eq!(c.decode(&bad), Err(CodecError::LengthMismatch));
    }

    #[test]
    fn invalid_params() {
        assert!(CodeParams::new(3, 4, 0).is_err());
        assert!(CodeParams::new(3, 0, 0).is_err());
        assert!(CodeParams::for_soda(5, 3).is_err());
        assert!(CodeParams::for_soda_err(5, 2, 2).is_err());
    }

    #[test]
    fn error_decode_e0_degenerate() {
        let c = codec(5, 3, 0);
        let v = value(30, 4);
        let frags = c.encode(&v).unwrap();
        assert_eq!(c.decode_with_errors(&frags[1..4]).unwrap(), v);
    }

    #[test]
    fn error_decode_repetition_like() {
        // (n=5, k=1, e=1): 3 fragments, any one corrupted
        let c = codec(5, 1, 1);
        let v = value(8, 6);
        let frags = c.encode(&v).unwrap();
        for corrupt in 0..3 {
            let mut got: Vec<CodedElement> = frags[..3].to_vec();
            for b in got[corrupt].payload.iter_mut() {
                *b = !*b;
            }
            assert_eq!(c.decode_with_errors(&got).unwrap(), v);
        }
    }

    #[test]
    fn error_decode_single_byte_flip_every_position() {
        // (n=7, k=3, e=1): 5 fragments, one corrupted by a byte flip
        let c = codec(7, 3, 1);
        let v = value(30, 13);
        let frags = c.encode(&v).unwrap();
        for corrupt in 0..5 {
            for byte in 0..frags[0].payload.len() {
                let mut got: Vec<CodedElement> = frags[..5].to_vec();
                got[corrupt].payload[byte] ^= 0xa5;
                assert_eq!(c.decode_with_errors(&got).unwrap(), v, "position {corrupt}/{byte}");
            }
        }
    }

    #[test]
    fn error_decode_budget_exceeded() {
        let c = codec(7, 3, 1);
        let v = value(12, 1);
        let frags = c.encode(&v).unwrap();
        let mut got: Vec<CodedElement> = frags[..5].to_vec();
        for f in got.iter_mut().take(2) {
            for b in f.payload.iter_mut() {
                *b = !*b;
            }
        }
        // two corruptions with e = 1: wrong value or failure, never v by luck
        match c.decode_with_errors(&got) {
            Ok(w) => assert_ne!(w, v),
            Err(CodecError::DecodeFailure) => {}
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn prop_random_subset_roundtrip(
            n in 1usize..=10,
            kk in 0usize..10,
            len in 1usize..80,
            seed in 0u8..,
        ) {
            let k = 1 + kk % n;
            let c = codec(n, k, 0);
            let v = Value((0..len).map(|i| seed.wrapping_add(i as u8).wrapping_mul(17)).collect());
            let frags = c.encode(&v).unwrap();
            // rotate to pick a deterministic but varied k-subset
            let start = (seed as usize) % n;
            let subset: Vec<CodedElement> =
                (0..k).map(|i| frags[(start + i * 2 + i / n) % n].clone())
                    .unique_by(|f| f.index)
                    .collect();
            if subset.len() == k {
                prop_assert_eq!(c.decode(&subset).unwrap(), v);
            }
        }

        #[test]
        fn prop_size_law(n in 1usize..=10, kk in 0usize..10, len in 1usize..200) {
            let k = 1 + kk % n;
            let params = CodeParams::new(n, k, 0).unwrap();
            let c = Codec::new(params);
            let v = Value(vec![0xab; len]);
            let frags = c.encode(&v).unwrap();
            let total: usize = frags.iter().map(|f| f.payload.len()).sum();
            prop_assert_eq!(total, n * len.div_ceil(k));
        }
    }
}
