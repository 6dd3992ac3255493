//! Signed feature hashing of sentences into a fixed-width vector.

/// Width of node and edge embeddings.
pub const EMBEDDING_DIM: usize = 384;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs of `sentence`.
pub fn tokenize(sentence: &str) -> impl Iterator<Item = String> + '_ {
    sentence.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// Embed a sentence: each token adds ±1 to bucket `fnv1a(token) mod 384`,
/// with the sign taken from the hash's top bit, and the sum is L2-normalized.
/// A sentence without tokens (or whose tokens cancel) maps to the zero vector.
pub fn embed_sentence(sentence: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBEDDING_DIM];
    for token in tokenize(sentence) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % EMBEDDING_DIM as u64) as usize;
        v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}
