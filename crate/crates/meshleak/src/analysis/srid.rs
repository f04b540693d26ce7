//! Certain-bit inference from a left-to-right sliding-window mul/sqr
//! sequence.
//!
//! Semantics are defined by consistency: bit i is reported as 0 or 1 exactly
//! when every key of the given length whose window encoding equals the
//! observed sequence agrees on that bit; anything else is X. The
//! implementation enumerates parse states (window placements and the
//! zero runs their maximality forces) with a forward/backward reachability
//! product, so it is exact without enumerating keys.

use crate::analysis::decode::KeyInference;
use crate::workload::{MulSqrSeq, Op};
use crate::{Error, Result};

/// One S-run of the token stream: `count` squarings, `followed_by_mul` for
/// every run except possibly the last.
fn runs_of(seq: &MulSqrSeq) -> Option<Vec<(usize, bool)>> {
    let mut runs = Vec::new();
    let mut count = 0usize;
    for op in &seq.0 {
        match op {
            Op::Sqr => count += 1,
            Op::Mul => {
                if count == 0 {
                    // A window always squares at least once before its mul.
                    return None;
                }
                runs.push((count, true));
                count = 0;
            }
        }
    }
    runs.push((count, false));
    Some(runs)
}

/// Infers every key bit forced by the observed sequence; unforced bits are X.
///
/// `w` is the window width, `key_len` the exact exponent bit length (which
/// must equal the squaring count). Errors when no key of that length can
/// produce the sequence.
pub fn srid_infer(seq: &MulSqrSeq, w: usize, key_len: usize) -> Result<KeyInference> {
    assert!(w >= 1 && w <= 16, "window width out of range");
    let inconsistent = || Error::InconsistentSequence { key_len };
    if seq.sqr_count() != key_len || key_len == 0 {
        return Err(inconsistent());
    }
    let runs = runs_of(seq).ok_or_else(inconsistent)?;
    let r = runs.len();
    // Position of each run's first bit.
    let mut starts = Vec::with_capacity(r);
    let mut p = 0usize;
    for (q, _) in &runs {
        starts.push(p);
        p += q;
    }

    // forward[i][z]: a prefix parse reaches run i with z pending forced
    // zeros. Run 0 is special: the key's leading 1 forces its window to
    // cover the whole first run.
    let zmax = w; // obligations are at most w-1, clipped by the key end
    let mut forward = vec![vec![false; zmax + 1]; r + 1];
    forward[0][0] = true;
    for i in 0..r {
        let (q, has_mul) = runs[i];
        for z in 0..=zmax {
            if !forward[i][z] {
                continue;
            }
            if !has_mul {
                // Trailing zeros close the key; a key of positive length
                // always opens with a window, so run 0 cannot be mul-less.
                continue;
            }
            if z >= q {
                continue;
            }
            let max_s = w.min(q - z);
            for s in 1..=max_s {
                if i == 0 && s != q {
                    continue; // leading window must start at the MSB
                }
                let after = starts[i] + q;
                let z_next = (w - s).min(key_len - after);
                forward[i + 1][z_next] = true;
            }
        }
    }

    // backward[i][z]: a parse entering run i with obligation z can complete.
    let mut backward = vec![vec![false; zmax + 1]; r + 1];
    for i in (0..r).rev() {
        let (q, has_mul) = runs[i];
        for z in 0..=zmax {
            if !has_mul {
                // Final run: all zeros; the obligation must fit inside it
                // and it can never be the leading run.
                backward[i][z] = i > 0 && z <= q;
                continue;
            }
            if z >= q {
                continue; // no room for a window
            }
            let max_s = w.min(q - z);
            for s in 1..=max_s {
                if i == 0 && s != q {
                    continue;
                }
                let after = starts[i] + q;
                let z_next = (w - s).min(key_len - after);
                // A trailing (possibly empty) zero run always follows the
                // last mul, so every mul run has a successor row.
                if backward[i + 1][z_next] {
                    backward[i][z] = true;
                    break;
                }
            }
        }
    }

    // At least one full parse must exist.
    let mut any_parse = false;

    // possible[p] bitmask: 1 = can be zero, 2 = can be one.
    let mut possible = vec![0u8; key_len];
    for i in 0..r {
        let (q, has_mul) = runs[i];
        let base = starts[i];
        for z in 0..=zmax {
            if !forward[i][z] {
                continue;
            }
            if !has_mul {
                if i > 0 && z <= q {
                    any_parse = true;
                    for k in 0..q {
                        possible[base + k] |= 1;
                    }
                }
                continue;
            }
            if z >= q {
                continue;
            }
            let max_s = w.min(q - z);
            for s in 1..=max_s {
                if i == 0 && s != q {
                    continue;
                }
                let after = base + q;
                let z_next = (w - s).min(key_len - after);
                if !backward[i + 1][z_next] {
                    continue;
                }
                any_parse = true;
                // Bits before the window are zeros (obligation + slack).
                for k in 0..q - s {
                    possible[base + k] |= 1;
                }
                // Window: first and last bits are ones, middle bits free.
                possible[base + q - s] |= 2;
                possible[base + q - 1] |= 2;
                for k in (q - s + 1)..(q - 1) {
                    possible[base + k] |= 3;
                }
            }
        }
    }
    if !any_parse {
        return Err(inconsistent());
    }

    let bits: String = possible
        .iter()
        .map(|&m| match m {
            1 => '0',
            2 => '1',
            _ => 'X',
        })
        .collect();
    Ok(KeyInference {
        bits,
        source: "srid".to_string(),
        params: format!("w={w} key_len={key_len}"),
    })
}

/// Fraction of non-X bits in an inference.
pub fn recovered_fraction(inf: &KeyInference) -> f64 {
    if inf.bits.is_empty() {
        return 0.0;
    }
    let known = inf.bits.chars().filter(|c| *c != 'X').count();
    known as f64 / inf.bits.len() as f64
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{sliding_window_ops, RsaKey};
    use num_bigint::BigUint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn w1_sequences_are_fully_determined() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let k = RsaKey::random(rng.gen_range(2..20), &mut rng);
            let ops = sliding_window_ops(&k.d, 1);
            let inf = srid_infer(&ops, 1, k.bit_len()).unwrap();
            assert_eq!(inf.bits, k.d_bits());
            assert!(!inf.bits.contains('X'));
        }
    }

    #[test]
    fn inference_matches_enumeration_oracle_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let len = rng.gen_range(3..=14);
            let k = RsaKey::random(len, &mut rng);
            for w in 2..=5usize {
                let ops = sliding_window_ops(&k.d, w);
                let inf = srid_infer(&ops, w, len).unwrap();
                let want = oracle::srid_by_enumeration(&ops, w, len).unwrap();
                assert_eq!(inf.bits, want, "d={} w={w}", k.d.to_str_radix(2));
            }
        }
    }

    #[test]
    fn non_x_bits_never_contradict_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let len = rng.gen_range(3..=20);
            let k = RsaKey::random(len, &mut rng);
            let truth = k.d_bits();
            for w in 2..=5usize {
                let ops = sliding_window_ops(&k.d, w);
                let inf = srid_infer(&ops, w, len).unwrap();
                for (got, want) in inf.bits.chars().zip(truth.chars()) {
                    if got != 'X' {
                        assert_eq!(got, want, "d={truth} w={w} inf={}", inf.bits);
                    }
                }
            }
        }
    }

    #[test]
    fn corrupted_sequences_are_flagged() {
        // Two muls in a row can never happen.
        let seq: MulSqrSeq = "SMMS".parse().unwrap();
        assert!(matches!(
            srid_infer(&seq, 3, 2),
            Err(Error::InconsistentSequence { .. })
        ));
        // Squaring count must equal the key length.
        let seq: MulSqrSeq = "SSM".parse().unwrap();
        assert!(srid_infer(&seq, 3, 5).is_err());
        // A leading window longer than w is impossible.
        let seq: MulSqrSeq = "SSSSSM".parse().unwrap();
        assert!(srid_infer(&seq, 3, 5).is_err());
        // Leading mul is impossible.
        let seq: MulSqrSeq = "MSS".parse().unwrap();
        assert!(srid_infer(&seq, 3, 2).is_err());
    }

    #[test]
    fn leakage_rate_sits_near_one_third_at_w5() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut total = 0.0;
        let trials = 40;
        for _ in 0..trials {
            let k = RsaKey::random(512, &mut rng);
            let ops = sliding_window_ops(&k.d, 5);
            let inf = srid_infer(&ops, 5, 512).unwrap();
            total += recovered_fraction(&inf);
        }
        let mean = total / trials as f64;
        assert!(
            (0.25..0.45).contains(&mean),
            "w=5 recovered fraction {mean}"
        );
    }

    #[test]
    fn all_zero_tail_is_inferred() {
        // d = 100000: one window then zeros.
        let d = BigUint::from(0b100000u32);
        let ops = sliding_window_ops(&d, 4);
        let inf = srid_infer(&ops, 4, 6).unwrap();
        assert_eq!(inf.bits, "100000");
    }
}
