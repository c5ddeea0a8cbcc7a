use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token-to-id table. Ids 0..4 are the reserved tokens; the rest are ordered
/// by descending frequency, ties broken by the token string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from(
            SPECIAL_TOKENS
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>(),
        )
    }
}

impl Vocabulary {
    /// Builds from token streams, keeping at most `max_size` entries in total
    /// (reserved tokens included). `None` keeps every token seen.
    pub fn build<'a, I, S>(streams: I, max_size: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for stream in streams {
            for t in stream {
                *counts.entry(t.as_ref()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !SPECIAL_TOKENS.contains(t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let room = max_size.map_or(usize::MAX, |m| m.saturating_sub(tokens.len()));
        tokens.extend(ranked.into_iter().take(room).map(|(t, _)| t.to_string()));
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens
            .get(id as usize)
            .map_or(SPECIAL_TOKENS[UNK as usize], String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_and_ordering() {
        let docs = [vec!["b", "a", "b"], vec!["c", "a", "b"]];
        let v = Vocabulary::build(docs.iter().map(|d| d.as_slice()), None);
        assert_eq!(&v.tokens()[..4], &SPECIAL_TOKENS);
        assert_eq!(v.id("b"), 4);
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("c"), 6);
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(v.decode(&v.encode(&["a", "c"])), vec!["a", "c"]);
    }

    #[test]
    fn max_size_truncates() {
        let docs = [vec!["x", "x", "y", "z"]];
        let v = Vocabulary::build(docs.iter().map(|d| d.as_slice()), Some(5));
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("y"), UNK);
    }

    #[test]
    fn serde_round_trip() {
        let docs = [vec!["q", "r"]];
        let v = Vocabulary::build(docs.iter().map(|d| d.as_slice()), None);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }
}
