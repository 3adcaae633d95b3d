//! Source and target vocabularies and the token syntax on both sides.
//!
//! Source phrases spell every railcar count with two digits and every
//! container count with three, most significant digit first, each railcar
//! type and container length using its own digit tokens. Target phrases
//! list one token per loaded railcar and end with `EOS`; an empty plan is
//! `BLANK EOS`.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::catalog::RailcarCatalog;
use crate::instances::{Booking, MAX_CONTAINERS_PER_LENGTH, MAX_RAILCARS_PER_TYPE};
use crate::oracle::SolutionDescription;

pub type TokenId = usize;

const RAILCAR_DIGITS: usize = 2;
const CONTAINER_DIGITS: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LanguageError {
    #[error("{what} count {value} exceeds the syntax limit {limit}")]
    OutOfRange { what: String, value: u32, limit: u32 },
    #[error("source phrase has {got} tokens, expected {expected}")]
    SourceLength { got: usize, expected: usize },
    #[error("position {position}: expected {expected}, found token {token}")]
    Role { position: usize, expected: String, token: String },
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("output syntax: {0}")]
    Syntax(&'static str),
    #[error("pattern {0} is not in the catalog")]
    UnknownPattern(usize),
    #[error("{source_lines} source lines but {target_lines} target lines")]
    LineCount { source_lines: usize, target_lines: usize },
    #[error("line {line}: {error}")]
    AtLine { line: usize, error: Box<LanguageError> },
}

/// A tokenized training pair with its decoded booking.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub booking: Booking,
    pub source: Vec<TokenId>,
    pub target: Vec<TokenId>,
}

/// What a token stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    RailcarDigit { railcar_type: usize, place: usize },
    ContainerDigit { length: usize, place: usize },
    Pattern(usize),
    Eos,
    Blank,
}

/// Token strings with contiguous ids; the id of a token is its line in the
/// vocabulary file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    /// Space-separated rendering of a phrase.
    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.tokens[i].as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn parse(&self, line: &str) -> Result<Vec<TokenId>, LanguageError> {
        line.split_whitespace()
            .map(|t| self.id(t).ok_or_else(|| LanguageError::UnknownToken(t.to_string())))
            .collect()
    }

    /// One token per line.
    pub fn to_file_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }
}

/// Both vocabularies of a catalog plus the encoders between domain objects
/// and phrases.
#[derive(Debug, Clone)]
pub struct Lexicon {
    catalog: RailcarCatalog,
    source: Vocabulary,
    target: Vocabulary,
}

impl Lexicon {
    pub fn new(catalog: &RailcarCatalog) -> Self {
        let mut src = Vec::with_capacity(10 * (catalog.num_types() + catalog.num_lengths()));
        for j in 0..catalog.num_types() {
            src.extend((0..10).map(|d| format!("r{j}_{d}")));
        }
        for c in catalog.containers() {
            src.extend((0..10).map(|d| format!("c{}_{d}", c.length_ft)));
        }
        let mut tgt = Vec::with_capacity(catalog.pattern_count() + 2);
        for j in 0..catalog.num_types() {
            tgt.extend(catalog.patterns_of(j).iter().map(|p| format!("pat{j}_{}", p.local_index)));
        }
        tgt.push("EOS".to_string());
        tgt.push("BLANK".to_string());
        Lexicon { catalog: catalog.clone(), source: Vocabulary::from_tokens(src), target: Vocabulary::from_tokens(tgt) }
    }

    pub fn catalog(&self) -> &RailcarCatalog {
        &self.catalog
    }

    pub fn source(&self) -> &Vocabulary {
        &self.source
    }

    pub fn target(&self) -> &Vocabulary {
        &self.target
    }

    pub fn eos(&self) -> TokenId {
        self.catalog.pattern_count()
    }

    pub fn blank(&self) -> TokenId {
        self.catalog.pattern_count() + 1
    }

    /// Source phrase length: two digits per railcar type, three per length.
    pub fn source_len(&self) -> usize {
        RAILCAR_DIGITS * self.catalog.num_types() + CONTAINER_DIGITS * self.catalog.num_lengths()
    }

    pub fn source_role(&self, id: TokenId) -> Role {
        let j = self.catalog.num_types();
        if id < 10 * j {
            Role::RailcarDigit { railcar_type: id / 10, place: id % 10 }
        } else {
            let k = id - 10 * j;
            Role::ContainerDigit { length: k / 10, place: k % 10 }
        }
    }

    pub fn target_role(&self, id: TokenId) -> Role {
        let p = self.catalog.pattern_count();
        match id {
            _ if id < p => Role::Pattern(id),
            _ if id == p => Role::Eos,
            _ => Role::Blank,
        }
    }

    pub fn encode_input(&self, booking: &Booking) -> Result<Vec<TokenId>, LanguageError> {
        let types = self.catalog.num_types();
        if booking.railcars.len() != types || booking.containers.len() != self.catalog.num_lengths() {
            return Err(LanguageError::SourceLength {
                got: booking.railcars.len() + booking.containers.len(),
                expected: types + self.catalog.num_lengths(),
            });
        }
        let mut out = Vec::with_capacity(self.source_len());
        for (j, &r) in booking.railcars.iter().enumerate() {
            if r > MAX_RAILCARS_PER_TYPE {
                return Err(LanguageError::OutOfRange { what: format!("railcar type {j}"), value: r, limit: MAX_RAILCARS_PER_TYPE });
            }
            out.extend(digits(r, RAILCAR_DIGITS).map(|d| 10 * j + d));
        }
        for (l, &n) in booking.containers.iter().enumerate() {
            if n > MAX_CONTAINERS_PER_LENGTH {
                return Err(LanguageError::OutOfRange {
                    what: format!("container length {}", self.catalog.containers()[l].length_ft),
                    value: n,
                    limit: MAX_CONTAINERS_PER_LENGTH,
                });
            }
            out.extend(digits(n, CONTAINER_DIGITS).map(|d| 10 * types + 10 * l + d));
        }
        Ok(out)
    }

    pub fn decode_input(&self, tokens: &[TokenId]) -> Result<Booking, LanguageError> {
        if tokens.len() != self.source_len() {
            return Err(LanguageError::SourceLength { got: tokens.len(), expected: self.source_len() });
        }
        let types = self.catalog.num_types();
        let mut railcars = vec![0u32; types];
        let mut containers = vec![0u32; self.catalog.num_lengths()];
        for (pos, &tok) in tokens.iter().enumerate() {
            let (slot, expected) = if pos < RAILCAR_DIGITS * types {
                (pos / RAILCAR_DIGITS, Role::RailcarDigit { railcar_type: pos / RAILCAR_DIGITS, place: 0 })
            } else {
                let k = (pos - RAILCAR_DIGITS * types) / CONTAINER_DIGITS;
                (k, Role::ContainerDigit { length: k, place: 0 })
            };
            let role = if tok < self.source.len() { Some(self.source_role(tok)) } else { None };
            let digit = match (expected, role) {
                (Role::RailcarDigit { railcar_type, .. }, Some(Role::RailcarDigit { railcar_type: t, place })) if t == railcar_type => place,
                (Role::ContainerDigit { length, .. }, Some(Role::ContainerDigit { length: l, place })) if l == length => place,
                _ => {
                    let want = match expected {
                        Role::RailcarDigit { railcar_type, .. } => format!("a digit of railcar type {railcar_type}"),
                        Role::ContainerDigit { length, .. } => {
                            format!("a digit of container length {}", self.catalog.containers()[length].length_ft)
                        }
                        _ => unreachable!(),
                    };
                    let token = if tok < self.source.len() { self.source.token(tok).to_string() } else { format!("#{tok}") };
                    return Err(LanguageError::Role { position: pos, expected: want, token });
                }
            } as u32;
            if pos < RAILCAR_DIGITS * types {
                railcars[slot] = railcars[slot] * 10 + digit;
            } else {
                containers[slot] = containers[slot] * 10 + digit;
            }
        }
        Ok(Booking { railcars, containers })
    }

    /// Canonical target phrase: loadings in ascending pattern order, `EOS`.
    pub fn encode_output(&self, description: &SolutionDescription) -> Result<Vec<TokenId>, LanguageError> {
        if description.is_empty() {
            return Ok(vec![self.blank(), self.eos()]);
        }
        let mut out = description.loadings();
        if let Some(&bad) = out.iter().find(|&&p| p >= self.catalog.pattern_count()) {
            return Err(LanguageError::UnknownPattern(bad));
        }
        out.push(self.eos());
        Ok(out)
    }

    /// Tallies the loadings of a target phrase; order is irrelevant.
    pub fn decode_output(&self, tokens: &[TokenId]) -> Result<SolutionDescription, LanguageError> {
        let (&last, body) = tokens.split_last().ok_or(LanguageError::Syntax("missing EOS"))?;
        if last != self.eos() {
            return Err(LanguageError::Syntax("missing EOS"));
        }
        if body.is_empty() {
            return Err(LanguageError::Syntax("EOS in first position"));
        }
        let mut description = SolutionDescription::new();
        for (pos, &tok) in body.iter().enumerate() {
            match self.target_role_checked(tok)? {
                Role::Pattern(p) => description.add(p, 1),
                Role::Eos => return Err(LanguageError::Syntax("EOS before the end of the phrase")),
                Role::Blank if pos > 0 => return Err(LanguageError::Syntax("BLANK preceded by another token")),
                Role::Blank if body.len() > 1 => return Err(LanguageError::Syntax("BLANK not followed by EOS")),
                _ => {}
            }
        }
        Ok(description)
    }

    fn target_role_checked(&self, tok: TokenId) -> Result<Role, LanguageError> {
        if tok >= self.target.len() {
            return Err(LanguageError::UnknownToken(format!("#{tok}")));
        }
        Ok(self.target_role(tok))
    }

    /// Parses one line of each side; the target must be well formed.
    pub fn pair(&self, source_line: &str, target_line: &str) -> Result<Pair, LanguageError> {
        let source = self.source.parse(source_line)?;
        let booking = self.decode_input(&source)?;
        let target = self.target.parse(target_line)?;
        self.decode_output(&target)?;
        Ok(Pair { booking, source, target })
    }

    /// Parses a line-aligned parallel corpus.
    pub fn read_corpus(&self, source_text: &str, target_text: &str) -> Result<Vec<Pair>, LanguageError> {
        let src: Vec<&str> = source_text.lines().collect();
        let tgt: Vec<&str> = target_text.lines().collect();
        if src.len() != tgt.len() {
            return Err(LanguageError::LineCount { source_lines: src.len(), target_lines: tgt.len() });
        }
        src.iter()
            .zip(&tgt)
            .enumerate()
            .map(|(i, (s, t))| self.pair(s, t).map_err(|e| LanguageError::AtLine { line: i + 1, error: Box::new(e) }))
            .collect()
    }

    /// Writes `vocab.src.txt` and `vocab.tgt.txt`.
    pub fn write_vocab_files(&self, dir: &Path) -> io::Result<()> {
        fs::write(dir.join("vocab.src.txt"), self.source.to_file_text())?;
        fs::write(dir.join("vocab.tgt.txt"), self.target.to_file_text())
    }
}

fn digits(value: u32, width: usize) -> impl Iterator<Item = usize> {
    (0..width).rev().map(move |k| (value / 10u32.pow(k as u32) % 10) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_reading() {
        let lex = Lexicon::new(&RailcarCatalog::toy());
        let b = Booking::new(vec![1, 0], vec![1, 1]);
        let src = lex.source().render(&lex.encode_input(&b).unwrap());
        let pairs = lex.read_corpus(&format!("{src}\n{src}\n"), "pat0_3 EOS\nBLANK EOS\n").unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].booking, b);
        assert_eq!(pairs[1].target, vec![lex.blank(), lex.eos()]);
        assert!(matches!(lex.read_corpus(&src, ""), Err(LanguageError::LineCount { source_lines: 1, target_lines: 0 })));
        assert!(matches!(lex.read_corpus(&src, "EOS"), Err(LanguageError::AtLine { line: 1, .. })));
    }

    #[test]
    fn vocabulary_sizes() {
        let lex = Lexicon::new(&RailcarCatalog::default10());
        assert_eq!(lex.source().len(), 120);
        assert_eq!(lex.target().len(), 157);
        assert_eq!(lex.source_len(), 26);
        let toy = Lexicon::new(&RailcarCatalog::toy());
        assert_eq!(toy.source().len(), 40);
        assert_eq!(toy.target().len(), 14);
        assert_eq!(toy.target().token(12), "EOS");
        assert_eq!(toy.target().token(13), "BLANK");
        assert_eq!(toy.target().token(4), "pat1_0");
    }

    #[test]
    fn toy_source_phrase() {
        let lex = Lexicon::new(&RailcarCatalog::toy());
        let ids = lex.encode_input(&Booking::new(vec![2, 0], vec![3, 12])).unwrap();
        assert_eq!(lex.source().render(&ids), "r0_0 r0_2 r1_0 r1_0 c40_0 c40_0 c40_3 c53_0 c53_1 c53_2");
        assert_eq!(lex.decode_input(&ids).unwrap(), Booking::new(vec![2, 0], vec![3, 12]));
    }

    #[test]
    fn default_source_phrase_has_26_tokens() {
        let lex = Lexicon::new(&RailcarCatalog::default10());
        let b = Booking::new(vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 99], vec![150, 999]);
        assert_eq!(lex.encode_input(&b).unwrap().len(), 26);
    }

    #[test]
    fn out_of_range_counts() {
        let lex = Lexicon::new(&RailcarCatalog::toy());
        assert!(matches!(lex.encode_input(&Booking::new(vec![100, 0], vec![0, 0])), Err(LanguageError::OutOfRange { value: 100, .. })));
        assert!(matches!(lex.encode_input(&Booking::new(vec![0, 0], vec![0, 1000])), Err(LanguageError::OutOfRange { value: 1000, .. })));
    }

    #[test]
    fn decode_input_errors() {
        let lex = Lexicon::new(&RailcarCatalog::toy());
        let zeros = lex.source().parse("r0_0 r0_0 r1_0 r1_0 c40_0 c40_0 c40_0 c53_0 c53_0 c53_0").unwrap();
        assert_eq!(lex.decode_input(&zeros).unwrap(), Booking::new(vec![0, 0], vec![0, 0]));
        assert!(matches!(lex.decode_input(&zeros[..9]), Err(LanguageError::SourceLength { got: 9, expected: 10 })));
        let mut swapped = zeros.clone();
        swapped[0] = lex.source().id("r1_0").unwrap();
        assert!(matches!(lex.decode_input(&swapped), Err(LanguageError::Role { position: 0, .. })));
        let mut pattern_in_source = zeros;
        pattern_in_source[4] = 55;
        assert!(matches!(lex.decode_input(&pattern_in_source), Err(LanguageError::Role { position: 4, .. })));
    }

    #[test]
    fn output_phrases() {
        let cat = RailcarCatalog::toy();
        let lex = Lexicon::new(&cat);
        let blank = lex.encode_output(&SolutionDescription::new()).unwrap();
        assert_eq!(lex.target().render(&blank), "BLANK EOS");
        assert!(lex.decode_output(&blank).unwrap().is_empty());

        let q = cat.find_pattern(0, &[1, 1]).unwrap();
        let one = lex.encode_output(&SolutionDescription::from_patterns([q])).unwrap();
        assert_eq!(lex.target().render(&one), "pat0_2 EOS");
        let two = lex.encode_output(&SolutionDescription::from_patterns([q, q])).unwrap();
        assert_eq!(two, vec![q, q, lex.eos()]);

        let a = lex.decode_output(&[3, 7, lex.eos()]).unwrap();
        let b = lex.decode_output(&[7, 3, lex.eos()]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_syntax_errors() {
        let lex = Lexicon::new(&RailcarCatalog::toy());
        let (eos, blank) = (lex.eos(), lex.blank());
        assert_eq!(lex.decode_output(&[3, blank, eos]), Err(LanguageError::Syntax("BLANK preceded by another token")));
        assert_eq!(lex.decode_output(&[blank, 3, eos]), Err(LanguageError::Syntax("BLANK not followed by EOS")));
        assert_eq!(lex.decode_output(&[eos]), Err(LanguageError::Syntax("EOS in first position")));
        assert_eq!(lex.decode_output(&[3, 4]), Err(LanguageError::Syntax("missing EOS")));
        assert_eq!(lex.decode_output(&[3, eos, 4, eos]), Err(LanguageError::Syntax("EOS before the end of the phrase")));
        assert_eq!(lex.decode_output(&[]), Err(LanguageError::Syntax("missing EOS")));
    }

    #[test]
    fn encode_output_rejects_unknown_pattern() {
        let lex = Lexicon::new(&RailcarCatalog::toy());
        assert_eq!(lex.encode_output(&SolutionDescription::from_patterns([40])), Err(LanguageError::UnknownPattern(40)));
    }
}
