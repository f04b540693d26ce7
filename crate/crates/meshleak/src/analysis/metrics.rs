//! Similarity metrics for scoring recovered keys: Levenshtein distance,
//! longest common substring, longest common subsequence.

/// Levenshtein distance (two-row DP).
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<u8> = a.bytes().collect();
    let b: Vec<u8> = b.bytes().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Length of the longest common substring (contiguous run).
pub fn lcs_str(a: &str, b: &str) -> usize {
    let a: Vec<u8> = a.bytes().collect();
    let b: Vec<u8> = b.bytes().collect();
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in &a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Length of the longest common subsequence.
pub fn lcs_seq(a: &str, b: &str) -> usize {
    let a: Vec<u8> = a.bytes().collect();
    let b: Vec<u8> = b.bytes().collect();
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &ca in &a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_strings() {
        assert_eq!(edit_distance("0100", "0100"), 0);
        assert_eq!(lcs_str("0100", "0100"), 4);
        assert_eq!(lcs_seq("0100", "0100"), 4);
    }

    #[test]
    fn one_substitution() {
        assert_eq!(edit_distance("0100", "0110"), 1);
        assert_eq!(lcs_str("0100", "0110"), 2);
        assert_eq!(lcs_seq("0100", "0110"), 3);
    }

    #[test]
    fn empty_versus_one() {
        assert_eq!(edit_distance("", "x"), 1);
        assert_eq!(lcs_str("", "x"), 0);
        assert_eq!(lcs_seq("", "x"), 0);
    }

    /// Full-matrix reference implementations, kept independent of the
    /// two-row versions above.
    fn ed_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 0..=a.len() {
            dp[i][0] = i;
        }
        for j in 0..=b.len() {
            dp[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                dp[i][j] = (dp[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]))
                    .min(dp[i - 1][j] + 1)
                    .min(dp[i][j - 1] + 1);
            }
        }
        dp[a.len()][b.len()]
    }

    fn lcs_str_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut best = 0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                let mut k = 0;
                while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                    k += 1;
                }
                best = best.max(k);
            }
        }
        best
    }

    fn lcs_seq_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                dp[i][j] = if a[i - 1] == b[j - 1] {
                    dp[i - 1][j - 1] + 1
                } else {
                    dp[i - 1][j].max(dp[i][j - 1])
                };
            }
        }
        dp[a.len()][b.len()]
    }

    fn random_bits<R: Rng>(rng: &mut R, max_len: usize) -> String {
        let len = rng.gen_range(0..=max_len);
        (0..len).map(|_| if rng.gen_bool(0.5) { '1' } else { '0' }).collect()
    }

    #[test]
    fn metrics_match_full_matrix_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..2000 {
            let a = random_bits(&mut rng, 40);
            let b = random_bits(&mut rng, 40);
            assert_eq!(edit_distance(&a, &b), ed_oracle(&a, &b), "{a} {b}");
            assert_eq!(lcs_str(&a, &b), lcs_str_oracle(&a, &b), "{a} {b}");
            assert_eq!(lcs_seq(&a, &b), lcs_seq_oracle(&a, &b), "{a} {b}");
        }
    }

    #[test]
    fn triangle_inequality_and_lcs_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..500 {
            let a = random_bits(&mut rng, 30);
            let b = random_bits(&mut rng, 30);
            let c = random_bits(&mut rng, 30);
            assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
            assert!(lcs_seq(&a, &b) >= lcs_str(&a, &b));
        }
    }
}
