//! Fixed synthetic vocabularies. Detokenization is plain concatenation of
//! symbols; the end-of-sequence token renders as the empty string.

use serde::{Deserialize, Serialize};

const STANDARD: [&str; 24] = [
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "+", "-", "*", "^", " mod ", "=", ".",
    ",", "<think>", "</think>", "<answer>", "</answer>", "", " ",
];

const BINARY: [&str; 8] = ["0", "1", "^", "<think>", "</think>", "<answer>", "</answer>", ""];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Vocab {
    /// Digits, arithmetic operators, punctuation, tags and end-of-sequence.
    #[default]
    Standard,
    /// Two bits, xor, tags and end-of-sequence; small enough to enumerate.
    Binary,
}

/// Role of a token in the response template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenClass {
    Digit,
    Content,
    ThinkOpen,
    ThinkClose,
    AnswerOpen,
    AnswerClose,
    Eos,
}

impl Vocab {
    fn symbols(self) -> &'static [&'static str] {
        match self {
            Vocab::Standard => &STANDARD,
            Vocab::Binary => &BINARY,
        }
    }

    pub fn size(self) -> usize {
        self.symbols().len()
    }

    pub fn symbol(self, token: u32) -> &'static str {
        self.symbols()[token as usize]
    }

    pub fn find(self, symbol: &str) -> Option<u32> {
        self.symbols().iter().position(|s| *s == symbol).map(|i| i as u32)
    }

    fn expect(self, symbol: &str) -> u32 {
        self.find(symbol).expect("symbol present in every vocabulary")
    }

    pub fn think_open(self) -> u32 {
        self.expect("<think>")
    }

    pub fn think_close(self) -> u32 {
        self.expect("</think>")
    }

    pub fn answer_open(self) -> u32 {
        self.expect("<answer>")
    }

    pub fn answer_close(self) -> u32 {
        self.expect("</answer>")
    }

    pub fn eos(self) -> u32 {
        self.expect("")
    }

    /// Token for a single decimal digit, if the vocabulary has it.
    pub fn digit(self, d: u32) -> Option<u32> {
        char::from_digit(d, 10).and_then(|c| self.find(c.encode_utf8(&mut [0; 4])))
    }

    pub fn class(self, token: u32) -> TokenClass {
        match self.symbol(token) {
            "<think>" => TokenClass::ThinkOpen,
            "</think>" => TokenClass::ThinkClose,
            "<answer>" => TokenClass::AnswerOpen,
            "</answer>" => TokenClass::AnswerClose,
            "" => TokenClass::Eos,
            s if s.len() == 1 && s.as_bytes()[0].is_ascii_digit() => TokenClass::Digit,
            _ => TokenClass::Content,
        }
    }

    pub fn detokenize(self, tokens: &[u32]) -> String {
        tokens.iter().map(|&t| self.symbol(t)).collect()
    }

    /// Greedy longest-match tokenization of a string over this vocabulary.
    pub fn tokenize(self, text: &str) -> Option<Vec<u32>> {
        let symbols = self.symbols();
        let mut rest = text;
        let mut out = Vec::new();
        while !rest.is_empty() {
            let (id, sym) = symbols
                .iter()
                .enumerate()
                .filter(|(_, s)| !s.is_empty() && rest.starts_with(**s))
                .max_by_key(|(_, s)| s.len())?;
            out.push(id as u32);
            rest = &rest[sym.len()..];
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_tokens_resolve() {
        for v in [Vocab::Standard, Vocab::Binary] {
            let ids = [v.think_open(), v.think_close(), v.answer_open(), v.answer_close(), v.eos()];
            let mut sorted = ids.to_vec();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), 5);
            assert_eq!(v.class(v.eos()), TokenClass::Eos);
        }
        assert_eq!(Vocab::Standard.size(), 24);
        assert_eq!(Vocab::Binary.size(), 8);
        assert_eq!(Vocab::Binary.digit(1), Some(1));
        assert_eq!(Vocab::Binary.digit(2), None);
    }

    #[test]
    fn tokenize_detokenize() {
        let v = Vocab::Standard;
        let text = "<think>3+4=7</think><answer>7</answer>";
        let toks = v.tokenize(text).unwrap();
        assert_eq!(v.detokenize(&toks), text);
        assert_eq!(v.detokenize(&v.tokenize("3+4 mod 10").unwrap()), "3+4 mod 10");
        assert!(v.tokenize("x").is_none());
    }
}
