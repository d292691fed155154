use twox_hash::XxHash64;

/// Sparse bag of hashed unigram and bigram counts, sorted by bucket.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseFeatures {
    entries: Vec<(u32, f64)>,
}

impl SparseFeatures {
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self, bucket: u32) -> f64 {
        self.entries
            .binary_search_by_key(&bucket, |&(b, _)| b)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn bucket_of(bytes: &[u8], buckets: usize, seed: u64) -> u32 {
    (XxHash64::oneshot(seed, bytes) % buckets as u64) as u32
}

/// Hashes every token and adjacent token pair into `[0, buckets)`.
///
/// Panics if `buckets == 0`.
pub fn featurize(text: &str, buckets: usize, seed: u64) -> SparseFeatures {
    assert!(buckets > 0, "featurize needs at least one bucket");
    let tokens = tokenize(text);
    let mut hashed: Vec<u32> = Vec::with_capacity(tokens.len() * 2);
    let mut key = Vec::new();
    for tok in &tokens {
        key.clear();
        key.push(0x01);
        key.extend_from_slice(tok.as_bytes());
        hashed.push(bucket_of(&key, buckets, seed));
    }
    for pair in tokens.windows(2) {
        key.clear();
        key.push(0x02);
        key.extend_from_slice(pair[0].as_bytes());
        key.push(0x1f);
        key.extend_from_slice(pair[1].as_bytes());
        hashed.push(bucket_of(&key, buckets, seed));
    }
    hashed.sort_unstable();
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for b in hashed {
        match entries.last_mut() {
            Some((last, w)) if *last == b => *w += 1.0,
            _ => entries.push((b, 1.0)),
        }
    }
    SparseFeatures { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_has_no_features() {
        assert!(featurize("", 4096, 7).is_empty());
        assert!(featurize("  ,.; ", 4096, 7).is_empty());
    }

    #[test]
    fn counts_repeated_tokens() {
        let f = featurize("visit visit", 4096, 7);
        let token_bucket = bucket_of(b"\x01visit", 4096, 7);
        assert_eq!(f.weight(token_bucket), 2.0);
        let total: f64 = f.entries().iter().map(|(_, w)| w).sum();
        assert_eq!(total, 3.0, "two unigrams and one bigram");
        assert_eq!(f.entries().len(), 2);
    }

    #[test]
    fn deterministic_and_case_insensitive() {
        let a = featurize("Okada Katsuya wish to visit Cambodia at 2009-10-02", 4096, 3);
        let b = featurize("okada katsuya WISH to visit cambodia at 2009 10 02", 4096, 3);
        assert_eq!(a, b);
        assert_ne!(a, featurize("Okada Katsuya wish to visit Cambodia at 2009-10-02", 4096, 4));
    }

    #[test]
    fn splits_punctuation() {
        assert_eq!(tokenize("Foreign Affairs (South Korea)"), vec!["foreign", "affairs", "south", "korea"]);
        assert_eq!(tokenize("2009-10-02"), vec!["2009", "10", "02"]);
    }
}
