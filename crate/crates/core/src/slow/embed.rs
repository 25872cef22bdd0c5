use alloc::vec;
use alloc::vec::Vec;

use super::SlowError;

pub const EMBED_DIM: usize = 64;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased tokens split on anything that is not alphanumeric.
pub fn tokens(text: &str) -> impl Iterator<Item = alloc::string::String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase())
}

/// Hashed bag-of-words embedding, L2-normalized.
pub fn embed_text(text: &str) -> Result<Vec<f64>, SlowError> {
    let mut v = vec![0.0; EMBED_DIM];
    for t in tokens(text) {
        v[(fnv1a(t.as_bytes()) % EMBED_DIM as u64) as usize] += 1.0;
    }
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm == 0.0 {
        return Err(SlowError::EmptyText);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts() {
        let a = embed_text("ego in lane 2 at 25 m/s").unwrap();
        let b = embed_text("ego in lane 2 at 25 m/s").unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_tokens() {
        let a = embed_text("oncoming truck ahead").unwrap();
        let b = embed_text("quiet empty highway").unwrap();
        assert!(cosine(&a, &b) < 0.2);
    }

    #[test]
    fn case_and_punctuation_are_ignored() {
        assert_eq!(embed_text("Lane, TWO!").unwrap(), embed_text("lane two").unwrap());
    }

    #[test]
    fn empty_text() {
        assert_eq!(embed_text(""), Err(SlowError::EmptyText));
        assert_eq!(embed_text(" ,.! "), Err(SlowError::EmptyText));
    }
}
