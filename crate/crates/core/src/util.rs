use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::audio::{quantize_pcm16, AudioBuffer};

/// 64-bit FNV-1a; stable across platforms and releases.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Independent RNG stream for one utterance, so results do not depend on
/// processing order.
pub fn rng_for(seed: u64, key: &str) -> ChaCha8Rng {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(key.as_bytes());
    ChaCha8Rng::seed_from_u64(fnv1a64(&bytes))
}

/// SHA-256 over the PCM16 rendering of the samples, as lowercase hex.
pub fn audio_fingerprint(buffer: &AudioBuffer) -> String {
    let mut h = Sha256::new();
    h.update(buffer.sample_rate().to_le_bytes());
    for s in buffer.samples() {
        h.update(quantize_pcm16(*s).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
