//! Word lists and their prefix-tree index over alphabet classes.
//!
//! File format: UTF-8, one word per line, sorted and deduplicated.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::alphabet::Alphabet;
use crate::decoder::reorder_line;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    words: Vec<String>,
}

impl Lexicon {
    /// Sorted, deduplicated word set; empty strings are dropped.
    pub fn new<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        let set: BTreeSet<String> = words
            .into_iter()
            .map(Into::into)
            .filter(|w: &String| !w.is_empty())
            .collect();
        Lexicon {
            words: set.into_iter().collect(),
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.binary_search_by(|w| w.as_str().cmp(word)).is_ok()
    }

    pub fn parse(content: &str) -> Self {
        Lexicon::new(
            content
                .lines()
                .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string()),
        )
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Lexicon::parse(&content))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    /// Drops words the alphabet cannot spell, returning them.
    pub fn retain_spellable(&mut self, alphabet: &Alphabet) -> Vec<String> {
        let (keep, dropped): (Vec<String>, Vec<String>) =
            self.words.drain(..).partition(|w| alphabet.can_spell(w));
        self.words = keep;
        dropped
    }

    /// Prefix tree over the class spelling of every word.
    pub fn index(&self, alphabet: &Alphabet) -> Result<PrefixTree> {
        PrefixTree::build(self, alphabet)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrieNode {
    /// Class emitted on entering this node (0 for the root).
    pub label: usize,
    pub children: Vec<usize>,
    /// Index into the lexicon's word list when a word ends here.
    pub word: Option<usize>,
}

/// Prefix tree of the spatial class sequences of the words; node 0 is the
/// root. `words` keeps the logical spellings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefixTree {
    pub nodes: Vec<TrieNode>,
    pub words: Vec<String>,
}

impl PrefixTree {
    pub fn build(lexicon: &Lexicon, alphabet: &Alphabet) -> Result<Self> {
        let mut nodes = vec![TrieNode {
            label: 0,
            children: Vec::new(),
            word: None,
        }];
        for (wi, word) in lexicon.words().iter().enumerate() {
            // the network emits spatial order, so Arabic words are indexed reversed
            let labels = alphabet.encode(&reorder_line(word))?;
            let mut node = 0;
            for l in labels {
                node = match nodes[node].children.iter().find(|&&c| nodes[c].label == l) {
                    Some(&c) => c,
                    None => {
                        nodes.push(TrieNode {
                            label: l,
                            children: Vec::new(),
                            word: None,
                        });
                        let c = nodes.len() - 1;
                        nodes[node].children.push(c);
                        c
                    }
                };
            }
            nodes[node].word = Some(wi);
        }
        Ok(PrefixTree {
            nodes,
            words: lexicon.words().to_vec(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedups_sorts_and_roundtrips() {
        let lex = Lexicon::new(["b", "a", "b", ""]);
        assert_eq!(lex.words(), ["a", "b"]);
        let text = lex.to_file_string();
        assert_eq!(text, "a\nb\n");
        assert_eq!(Lexicon::parse(&text), lex);
        assert!(lex.contains("a") && !lex.contains("c"));
    }

    #[test]
    fn trie_shares_prefixes() {
        let a = Alphabet::new(["a", "b", " "]).unwrap();
        let lex = Lexicon::new(["ab", "a", "ba"]);
        let t = lex.index(&a).unwrap();
        // root, a, ab, b, ba
        assert_eq!(t.nodes.len(), 5);
        assert_eq!(t.nodes.iter().filter(|n| n.word.is_some()).count(), 3);
        assert!(Lexicon::new(["zz"]).index(&a).is_err());
    }
}
