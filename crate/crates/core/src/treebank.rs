//! Reading and writing treebanks, one tree per line.
//!
//! Two formats are supported:
//!
//! * bracketed: `(S (NP John) (VP runs))`, leaves are words numbered left to
//!   right; only continuous trees can be written this way.
//! * discbracket: `(S (VP 0=Allerdings 2=in) 1=wird)`, every leaf carries its
//!   sentence position, so crossing branches are representable.
//!
//! Words and labels escape `\`, `(`, `)`, `=` and whitespace with a backslash.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use flate2::read::MultiGzDecoder;
use thiserror::Error;

use crate::tree::{Child, Node, Tree, Violation};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty input")]
    Empty,
    #[error("unbalanced parentheses at byte {offset}")]
    UnbalancedParens { offset: usize },
    #[error("empty constituent at byte {offset}")]
    EmptyConstituent { offset: usize },
    #[error("stray token at top level at byte {offset}")]
    StrayToken { offset: usize },
    #[error("missing label at byte {offset}")]
    MissingLabel { offset: usize },
    #[error("malformed leaf token at byte {offset}")]
    MalformedLeaf { offset: usize },
    #[error("duplicate index {index} at byte {offset}")]
    DuplicateIndex { index: usize, offset: usize },
    #[error("missing index {index}")]
    MissingIndex { index: usize },
    #[error("invalid tree: {0}")]
    Invalid(#[from] Violation),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error("tree is discontinuous")]
    Discontinuous,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{source_name}:{line}: {error}")]
    Line {
        source_name: String,
        line: usize,
        error: ParseError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Format {
    Bracketed,
    Discbracket,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bracketed" | "ptb" => Ok(Format::Bracketed),
            "discbracket" | "disc" => Ok(Format::Discbracket),
            other => Err(format!("unknown tree format `{other}`")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Bracketed => "bracketed",
            Format::Discbracket => "discbracket",
        })
    }
}

impl Format {
    pub fn parse(self, text: &str) -> Result<Tree, ParseError> {
        match self {
            Format::Bracketed => parse_bracketed(text),
            Format::Discbracket => parse_discbracket(text),
        }
    }

    pub fn emit(self, tree: &Tree) -> Result<String, EmitError> {
        match self {
            Format::Bracketed => emit_bracketed(tree),
            Format::Discbracket => Ok(emit_discbracket(tree)),
        }
    }
}

/// An ordered collection of validated trees.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Treebank {
    pub trees: Vec<Tree>,
    pub source: String,
}

impl Treebank {
    pub fn new(trees: Vec<Tree>, source: impl Into<String>) -> Self {
        Treebank {
            trees,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tree> {
        self.trees.iter()
    }
}

impl<'a> IntoIterator for &'a Treebank {
    type Item = &'a Tree;
    type IntoIter = std::slice::Iter<'a, Tree>;

    fn into_iter(self) -> Self::IntoIter {
        self.trees.iter()
    }
}

// ---------------------------------------------------------------------------
// Lexing

#[derive(Debug, PartialEq)]
enum Token {
    Open(usize),
    Close(usize),
    /// Raw, still-escaped text and its byte offset.
    Atom(String, usize),
}

fn is_special(c: char) -> bool {
    c == '(' || c == ')' || c.is_whitespace()
}

fn lex(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '(' => {
                tokens.push(Token::Open(i));
                chars.next();
            }
            ')' => {
                tokens.push(Token::Close(i));
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut raw = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if is_special(c) {
                        break;
                    }
                    chars.next();
                    raw.push(c);
                    if c == '\\' {
                        if let Some((_, e)) = chars.next() {
                            raw.push(e);
                        }
                    }
                }
                tokens.push(Token::Atom(raw, i));
            }
        }
    }
    tokens
}

/// Escapes a word or label for either format.
pub fn escape(word: &str) -> String {
    let mut out = String::with_capacity(word.len());
    for c in word.chars() {
        match c {
            '\\' | '(' | ')' | '=' | ' ' => {
                out.push('\\');
                out.push(c);
            }
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c if c.is_whitespace() => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(e) => out.push(e),
            None => out.push('\\'),
        }
    }
    out
}

/// Byte index of the first `=` not preceded by an escaping backslash.
fn unescaped_eq(raw: &str) -> Option<usize> {
    let mut escaped = false;
    for (i, c) in raw.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '=' {
            return Some(i);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Parsing

enum Leaf {
    Word(String),
    Indexed(usize, String),
}

struct RawNode {
    label: String,
    children: Vec<RawChild>,
}

enum RawChild {
    Leaf(Leaf, usize),
    Node(RawNode),
}

struct Reader<'t> {
    tokens: &'t [Token],
    pos: usize,
    end: usize,
    indexed: bool,
}

impl<'t> Reader<'t> {
    fn next(&mut self) -> Option<&'t Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn leaf(&self, raw: &str, offset: usize) -> Result<Leaf, ParseError> {
        if !self.indexed {
            return Ok(Leaf::Word(unescape(raw)));
        }
        let eq = unescaped_eq(raw).ok_or(ParseError::MalformedLeaf { offset })?;
        let index = raw[..eq]
            .parse::<usize>()
            .map_err(|_| ParseError::MalformedLeaf { offset })?;
        Ok(Leaf::Indexed(index, unescape(&raw[eq + 1..])))
    }

    /// Parses the remainder of a constituent whose `(` was at `open`.
    fn node(&mut self, open: usize) -> Result<RawNode, ParseError> {
        let label = match self.peek() {
            Some(Token::Atom(raw, _)) => {
                self.pos += 1;
                unescape(raw)
            }
            Some(Token::Open(_)) => String::new(),
            Some(Token::Close(_)) => return Err(ParseError::EmptyConstituent { offset: open }),
            None => return Err(ParseError::UnbalancedParens { offset: self.end }),
        };
        let mut children = Vec::new();
        loop {
            match self.next() {
                None => return Err(ParseError::UnbalancedParens { offset: self.end }),
                Some(Token::Close(_)) => break,
                Some(Token::Open(o)) => children.push(RawChild::Node(self.node(*o)?)),
                Some(Token::Atom(raw, o)) => children.push(RawChild::Leaf(self.leaf(raw, *o)?, *o)),
            }
        }
        if children.is_empty() {
            return Err(ParseError::EmptyConstituent { offset: open });
        }
        if label.is_empty() {
            // PTB files wrap every tree in an unlabeled bracket: `( (S ...) )`.
            if children.len() == 1 {
                if let RawChild::Node(_) = children[0] {
                    let Some(RawChild::Node(inner)) = children.pop() else {
                        unreachable!()
                    };
                    return Ok(inner);
                }
            }
            return Err(ParseError::MissingLabel { offset: open });
        }
        Ok(RawNode { label, children })
    }
}

fn read_root(text: &str, indexed: bool) -> Result<RawNode, ParseError> {
    let tokens = lex(text);
    let mut reader = Reader {
        tokens: &tokens,
        pos: 0,
        end: text.len(),
        indexed,
    };
    let root = match reader.next() {
        None => return Err(ParseError::Empty),
        Some(Token::Open(o)) => reader.node(*o)?,
        Some(Token::Close(o)) => return Err(ParseError::UnbalancedParens { offset: *o }),
        Some(Token::Atom(_, o)) => return Err(ParseError::StrayToken { offset: *o }),
    };
    match reader.next() {
        None => Ok(root),
        Some(Token::Close(o)) => Err(ParseError::UnbalancedParens { offset: *o }),
        Some(Token::Open(o)) | Some(Token::Atom(_, o)) => Err(ParseError::StrayToken { offset: *o }),
    }
}

/// Parses one continuous tree in bracketed notation.
pub fn parse_bracketed(text: &str) -> Result<Tree, ParseError> {
    fn build(raw: RawNode, words: &mut Vec<String>) -> Node {
        let children = raw
            .children
            .into_iter()
            .map(|c| match c {
                RawChild::Leaf(Leaf::Word(w), _) | RawChild::Leaf(Leaf::Indexed(_, w), _) => {
                    words.push(w);
                    Child::Leaf(words.len() - 1)
                }
                RawChild::Node(n) => Child::Node(build(n, words)),
            })
            .collect();
        Node::new(raw.label, children)
    }
    let raw = read_root(text, false)?;
    let mut words = Vec::new();
    let root = build(raw, &mut words);
    Ok(Tree::new(words, root)?)
}

/// Parses one tree in discbracket notation (`index=word` leaves).
pub fn parse_discbracket(text: &str) -> Result<Tree, ParseError> {
    fn build(raw: RawNode, words: &mut Vec<Option<(String, usize)>>) -> Result<Node, ParseError> {
        let mut children = Vec::with_capacity(raw.children.len());
        for c in raw.children {
            children.push(match c {
                RawChild::Leaf(Leaf::Indexed(index, word), offset) => {
                    if index >= words.len() {
                        words.resize(index + 1, None);
                    }
                    if words[index].is_some() {
                        return Err(ParseError::DuplicateIndex { index, offset });
                    }
                    words[index] = Some((word, offset));
                    Child::Leaf(index)
                }
                RawChild::Leaf(Leaf::Word(_), offset) => {
                    return Err(ParseError::MalformedLeaf { offset })
                }
                RawChild::Node(n) => Child::Node(build(n, words)?),
            });
        }
        Ok(Node::new(raw.label, children))
    }
    let raw = read_root(text, true)?;
    let mut slots = Vec::new();
    let root = build(raw, &mut slots)?;
    let mut words = Vec::with_capacity(slots.len());
    for (index, slot) in slots.into_iter().enumerate() {
        match slot {
            Some((w, _)) => words.push(w),
            None => return Err(ParseError::MissingIndex { index }),
        }
    }
    Ok(Tree::new(words, root)?)
}

// ---------------------------------------------------------------------------
// Emission

fn write_node(out: &mut String, node: &Node, leaf: &dyn Fn(&mut String, usize)) {
    out.push('(');
    out.push_str(&escape(node.label()));
    for child in node.children() {
        out.push(' ');
        match child {
            Child::Leaf(p) => leaf(out, *p),
            Child::Node(n) => write_node(out, n, leaf),
        }
    }
    out.push(')');
}

pub fn emit_bracketed(tree: &Tree) -> Result<String, EmitError> {
    if !tree.is_continuous() {
        return Err(EmitError::Discontinuous);
    }
    let mut out = String::new();
    write_node(&mut out, tree.root(), &|out, p| out.push_str(&escape(&tree.words()[p])));
    Ok(out)
}

pub fn emit_discbracket(tree: &Tree) -> String {
    let mut out = String::new();
    write_node(&mut out, tree.root(), &|out, p| {
        out.push_str(&p.to_string());
        out.push('=');
        out.push_str(&escape(&tree.words()[p]));
    });
    out
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_discbracket(self))
    }
}

/// A sentence line: escaped words separated by single spaces.
pub fn emit_sentence(words: &[String]) -> String {
    words.iter().map(|w| escape(w)).collect::<Vec<_>>().join(" ")
}

pub fn parse_sentence(line: &str) -> Vec<String> {
    lex(line)
        .into_iter()
        .map(|t| match t {
            Token::Atom(raw, _) => unescape(&raw),
            Token::Open(_) => "(".to_string(),
            Token::Close(_) => ")".to_string(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Files

/// Opens a file for reading, decompressing `.gz` transparently.
pub fn open_reader(path: &Path) -> io::Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let inner: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(inner)))
}

/// Outcome of a lenient load: the trees that parsed and the lines that did not.
#[derive(Debug, Default)]
pub struct LenientLoad {
    pub treebank: Treebank,
    pub errors: Vec<(usize, ParseError)>,
}

/// Reads one tree per non-blank line, stopping at the first bad line.
pub fn read_treebank<R: BufRead>(reader: R, format: Format, source: &str) -> Result<Treebank, LoadError> {
    let load = read_lines(reader, format, source, false)?;
    Ok(load.treebank)
}

fn read_lines<R: BufRead>(
    reader: R,
    format: Format,
    source: &str,
    lenient: bool,
) -> Result<LenientLoad, LoadError> {
    let mut load = LenientLoad {
        treebank: Treebank::new(Vec::new(), source),
        errors: Vec::new(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source_err| LoadError::Io {
            path: source.to_string(),
            source: source_err,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match format.parse(&line) {
            Ok(tree) => load.treebank.trees.push(tree),
            Err(error) if lenient => load.errors.push((i + 1, error)),
            Err(error) => {
                return Err(LoadError::Line {
                    source_name: source.to_string(),
                    line: i + 1,
                    error,
                })
            }
        }
    }
    Ok(load)
}

pub fn load_treebank(path: impl AsRef<Path>, format: Format) -> Result<Treebank, LoadError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let reader = open_reader(path).map_err(|source| LoadError::Io {
        path: name.clone(),
        source,
    })?;
    read_treebank(reader, format, &name)
}

/// Like [`load_treebank`] but collects per-line failures instead of stopping.
pub fn load_treebank_lenient(path: impl AsRef<Path>, format: Format) -> Result<LenientLoad, LoadError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let reader = open_reader(path).map_err(|source| LoadError::Io {
        path: name.clone(),
        source,
    })?;
    read_lines(reader, format, &name, true)
}

/// Writes each tree on its own line.
pub fn write_treebank<W: Write>(mut out: W, treebank: &Treebank, format: Format) -> io::Result<()> {
    for tree in treebank {
        let line = format
            .emit(tree)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracketed_yields() {
        let t = parse_bracketed("(S (NP John) (VP runs))").unwrap();
        assert_eq!(t.words(), &["John", "runs"]);
        let spans: Vec<(&str, Vec<usize>)> = t
            .constituents()
            .iter()
            .map(|n| (n.label(), n.span().positions().to_vec()))
            .collect();
        assert_eq!(
            spans,
            vec![("S", vec![0, 1]), ("NP", vec![0]), ("VP", vec![1])]
        );
    }

    #[test]
    fn bracketed_single_leaf() {
        let t = parse_bracketed("(S John)").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.root().label(), "S");
    }

    #[test]
    fn bracketed_unbalanced_reports_end_offset() {
        let text = "(S (NP John) (VP runs)";
        let err = parse_bracketed(text).unwrap_err();
        assert_eq!(err, ParseError::UnbalancedParens { offset: text.len() });
        assert!(err.to_string().starts_with("unbalanced parentheses"));
    }

    #[test]
    fn bracketed_errors() {
        assert_eq!(
            parse_bracketed("(S (NP) x)").unwrap_err(),
            ParseError::EmptyConstituent { offset: 3 }
        );
        assert_eq!(
            parse_bracketed("(S x) y").unwrap_err(),
            ParseError::StrayToken { offset: 6 }
        );
        assert_eq!(
            parse_bracketed("x (S y)").unwrap_err(),
            ParseError::StrayToken { offset: 0 }
        );
        assert_eq!(
            parse_bracketed("(S x))").unwrap_err(),
            ParseError::UnbalancedParens { offset: 5 }
        );
        assert_eq!(parse_bracketed("  ").unwrap_err(), ParseError::Empty);
    }

    #[test]
    fn ptb_outer_bracket_is_unwrapped() {
        let t = parse_bracketed("( (S (NP John) (VP runs)) )").unwrap();
        assert_eq!(t.root().label(), "S");
    }

    #[test]
    fn discbracket_discontinuous() {
        let t = parse_discbracket(
            "(S (VP 0=Allerdings (PP 2=in 3=bestimmten 4=Vierteln)) 1=wird 5=Wasser)",
        )
        .unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.words()[1], "wird");
        let vp = &t.discontinuous_constituents()[0];
        assert_eq!(vp.label(), "VP");
        assert_eq!(vp.span().positions(), &[0, 2, 3, 4]);
    }

    #[test]
    fn discbracket_errors() {
        let t = parse_discbracket("(S 0=a 1=b)").unwrap();
        assert!(t.is_continuous());
        let err = parse_discbracket("(S 0=a 0=b)").unwrap_err();
        assert_eq!(err.to_string(), "duplicate index 0 at byte 7");
        assert_eq!(
            parse_discbracket("(S 0=a 2=b)").unwrap_err(),
            ParseError::MissingIndex { index: 1 }
        );
        assert_eq!(
            parse_discbracket("(S 0=a b)").unwrap_err(),
            ParseError::MalformedLeaf { offset: 7 }
        );
        assert_eq!(
            parse_discbracket("(S x=a)").unwrap_err(),
            ParseError::MalformedLeaf { offset: 3 }
        );
    }

    #[test]
    fn emit_roundtrip_is_identical() {
        let s = "(S (NP John) (VP runs))";
        assert_eq!(emit_bracketed(&parse_bracketed(s).unwrap()).unwrap(), s);
        let d = "(S (VP 0=Allerdings (PP 2=in 3=bestimmten 4=Vierteln)) 1=wird 5=Wasser)";
        let t = parse_discbracket(d).unwrap();
        assert_eq!(emit_discbracket(&t), d);
        assert_eq!(parse_discbracket(&emit_discbracket(&t)).unwrap(), t);
        assert_eq!(emit_bracketed(&t), Err(EmitError::Discontinuous));
    }

    #[test]
    fn whitespace_is_normalized() {
        let t = parse_bracketed("(S\t(NP  John)\n (VP runs) )").unwrap();
        assert_eq!(emit_bracketed(&t).unwrap(), "(S (NP John) (VP runs))");
    }

    #[test]
    fn escaped_words_survive() {
        let words = ["(", "a=b", "x y", "back\\slash", "tab\there"];
        for w in words {
            assert_eq!(unescape(&escape(w)), w);
        }
        let t = parse_bracketed(r"(S (-LRB- \() (X a\=b) (Y x\ y))").unwrap();
        assert_eq!(t.words(), &["(", "a=b", "x y"]);
        let d = emit_discbracket(&t);
        assert_eq!(d, r"(S (-LRB- 0=\() (X 1=a\=b) (Y 2=x\ y))");
        assert_eq!(parse_discbracket(&d).unwrap(), t);
    }

    #[test]
    fn sentences_roundtrip() {
        let words: Vec<String> = ["a", "b c", "(", "="].iter().map(|s| s.to_string()).collect();
        assert_eq!(parse_sentence(&emit_sentence(&words)), words);
    }
}
