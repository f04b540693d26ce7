//! Everything downstream of a captured trace: filtering, smoothing, peak
//! detection, bit and mul/sqr decoding, k-mer consensus correction, certain
//! -bit inference for sliding-window sequences, similarity metrics, SNR and
//! covert decoding.

pub mod debruijn;
pub mod decode;
pub mod metrics;
pub mod signal;
pub mod srid;

pub use debruijn::{debruijn_correct, DebruijnResult};
pub use decode::{decode_bits, decode_mulsqr, DecodeParams, KeyInference, PatternMode};
pub use metrics::{edit_distance, lcs_seq, lcs_str};
pub use signal::{clip_filter, covert_decode, detect_peaks, fft_magnitudes, percentile, smooth, snr};
pub use srid::srid_infer;
