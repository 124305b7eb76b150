use sha2::{Digest, Sha512};

/// SHA-512 of an arbitrary byte string.
pub fn sha512(bytes: &[u8]) -> [u8; 64] {
    let digest = Sha512::digest(bytes);
    let mut out = [0u8; 64];
    out.copy_from_slice(&digest);
    out
}

/// Short hex prefix used for human-facing identifiers.
pub fn short_hex(bytes: &[u8]) -> String {
    hex::encode(&bytes[..bytes.len().min(8)])
}
