//! k-mer consensus over a group of noisy key decodes: build the k-mer
//! multigraph, drop rare k-mers, and walk the heaviest position-consistent
//! path back into a single corrected key.

use std::collections::HashMap;

/// Outcome of a consensus walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DebruijnResult {
    pub bits: String,
    /// True when pruning disconnected the graph and the walk had to fall
    /// back to unsupported extensions or stop early (best contig).
    pub disconnected: bool,
}

/// Fraction of inputs that must contain a k-mer for it to survive pruning.
const SUPPORT_FLOOR: f64 = 0.25;
/// Positional slack when matching k-mer occurrences to output positions.
/// Substitution errors do not shift positions; the slack only needs to
/// absorb occasional indel decode errors, growing slowly with depth.
const DRIFT: usize = 2;

/// Corrects a group of noisy decodes of the same key. `k` is the k-mer size
/// (default 8 upstream); inputs should be same-length decodes of one key.
///
/// The walk extends one bit at a time, choosing the branch whose k-mer has
/// the most input support near the current output position; k-mers seen in
/// fewer than a quarter of the inputs are pruned. If pruning strands the
/// walk, the best remaining branch is taken and the result is flagged.
pub fn debruijn_correct(keys: &[String], k: usize) -> DebruijnResult {
    assert!(k >= 2, "k-mer size must be at least 2");
    assert!(keys.len() >= 2, "need at least two decodes to vote");
    let usable: Vec<&String> = keys.iter().filter(|s| s.len() >= k).collect();
    if usable.is_empty() {
        return DebruijnResult {
            bits: String::new(),
            disconnected: true,
        };
    }

    // Positional support: kmer -> list of (input, position), deduplicated to
    // one count per input per position window later.
    let mut occurrences: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    let mut containing: HashMap<&str, u32> = HashMap::new();
    for (idx, key) in usable.iter().enumerate() {
        let mut seen_here: HashMap<&str, ()> = HashMap::new();
        for pos in 0..=key.len() - k {
            let mer = &key[pos..pos + k];
            occurrences.entry(mer).or_default().push((idx, pos));
            if seen_here.insert(mer, ()).is_none() {
                *containing.entry(mer).or_insert(0) += 1;
            }
        }
    }
    let floor = ((usable.len() as f64) * SUPPORT_FLOOR).ceil() as u32;

    let mut lengths: Vec<usize> = usable.iter().map(|s| s.len()).collect();
    lengths.sort_unstable();
    let target_len = lengths[lengths.len() / 2];

    // Start k-mer: the best-supported prefix.
    let mut prefix_votes: HashMap<&str, u32> = HashMap::new();
    for key in &usable {
        *prefix_votes.entry(&key[..k]).or_insert(0) += 1;
    }
    let start = prefix_votes
        .iter()
        .max_by_key(|(mer, votes)| (**votes, std::cmp::Reverse(*mer)))
        .map(|(mer, _)| *mer)
        .unwrap();

    let mut out = start.to_string();
    let mut disconnected = false;
    while out.len() < target_len {
        let suffix = &out[out.len() - (k - 1)..];
        let pos = out.len() - (k - 1); // k-mer start position for this step
        let mut scored: Vec<(char, u32, u32)> = Vec::new(); // (bit, positional, containing)
        for bit in ['0', '1'] {
            let mer: String = format!("{suffix}{bit}");
            let contain = containing.get(mer.as_str()).copied().unwrap_or(0);
            // Exact-position hits dominate: substitution noise never
            // shifts positions, so same-position votes are the signal and
            // the drift window only catches indel-displaced copies.
            let positional = occurrences
                .get(mer.as_str())
                .map(|occ| {
                    occ.iter()
                        .map(|(_, p)| match p.abs_diff(pos) {
                            0 => 4u32,
                            d if d <= DRIFT + pos / 48 => 1,
                            _ => 0,
                        })
                        .sum::<u32>()
                })
                .unwrap_or(0);
            scored.push((bit, positional, contain));
        }
        // Prefer surviving k-mers ranked by positional support; fall back to
        // raw support when pruning removed both.
        let kept: Vec<&(char, u32, u32)> =
            scored.iter().filter(|(_, _, c)| *c >= floor).collect();
        let choice = match kept.len() {
            0 => {
                disconnected = true;
                let best = scored
                    .iter()
                    .max_by_key(|(bit, p, c)| (*p, *c, std::cmp::Reverse(*bit)))
                    .unwrap();
                if best.1 == 0 && best.2 == 0 {
                    break; // nothing left anywhere: stop with the contig
                }
                best.0
            }
            1 => kept[0].0,
            _ => {
                kept.iter()
                    .max_by_key(|(bit, p, c)| (*p, *c, std::cmp::Reverse(*bit)))
                    .unwrap()
                    .0
            }
        };
        out.push(choice);
    }
    DebruijnResult {
        bits: out,
        disconnected,
    }
}
