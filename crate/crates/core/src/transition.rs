//! Shift-reduce transition systems: top-down, in-order and non-binary
//! bottom-up, optionally extended with word-reordering transitions.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{Child, Node};

/// One token of a linearization.
///
/// `ShiftK(0)` and `SwapK(1)` are never stored: the constructors
/// [`Transition::shift_k`] and [`Transition::swap_k`] normalize them to
/// `Shift` and `Swap`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transition {
    Shift,
    /// Moves the k-th buffer item (0-based, k ≥ 1) onto the stack.
    ShiftK(usize),
    Swap,
    /// Moves the k items below the stack top (k ≥ 2) back to the buffer front.
    SwapK(usize),
    Nt(String),
    Reduce,
    /// Reduce carrying the label of the constituent it closes (enriched schemes).
    ReduceLabeled(String),
    /// Bottom-up reduce of the top k items into a constituent.
    ReduceK(usize, String),
    Finish,
}

impl Transition {
    pub fn shift_k(k: usize) -> Self {
        if k == 0 {
            Transition::Shift
        } else {
            Transition::ShiftK(k)
        }
    }

    /// `k` must be positive.
    pub fn swap_k(k: usize) -> Self {
        assert!(k >= 1, "SWAP#0 is not a transition");
        if k == 1 {
            Transition::Swap
        } else {
            Transition::SwapK(k)
        }
    }

    /// Text form under a given scheme. Schemes whose vocabulary is built from
    /// `SHIFT#k` / `SWAP#k` spell the unit cases `SHIFT#0` / `SWAP#1`.
    pub fn render(&self, scheme: Scheme) -> String {
        match (self, scheme.disco) {
            (Transition::Shift, Disco::ShiftK) => "SHIFT#0".to_string(),
            (Transition::Swap, Disco::SwapK) => "SWAP#1".to_string(),
            _ => self.to_string(),
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transition::Shift => write!(f, "SHIFT"),
            Transition::ShiftK(k) => write!(f, "SHIFT#{k}"),
            Transition::Swap => write!(f, "SWAP"),
            Transition::SwapK(k) => write!(f, "SWAP#{k}"),
            Transition::Nt(x) => write!(f, "NT({x})"),
            Transition::Reduce => write!(f, "REDUCE"),
            Transition::ReduceLabeled(x) => write!(f, "REDUCE({x})"),
            Transition::ReduceK(k, x) => write!(f, "REDUCE#{k}({x})"),
            Transition::Finish => write!(f, "FINISH"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("malformed transition token `{0}`")]
pub struct TokenError(pub String);

fn parenthesized<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
    (!inner.is_empty()).then_some(inner)
}

impl FromStr for Transition {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TokenError(s.to_string());
        match s {
            "SHIFT" => return Ok(Transition::Shift),
            "SWAP" => return Ok(Transition::Swap),
            "REDUCE" => return Ok(Transition::Reduce),
            "FINISH" => return Ok(Transition::Finish),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("SHIFT#") {
            return k.parse().map(Transition::shift_k).map_err(|_| bad());
        }
        if let Some(k) = s.strip_prefix("SWAP#") {
            let k: usize = k.parse().map_err(|_| bad())?;
            return if k == 0 { Err(bad()) } else { Ok(Transition::swap_k(k)) };
        }
        if let Some(x) = parenthesized(s, "NT") {
            return Ok(Transition::Nt(x.to_string()));
        }
        if let Some(x) = parenthesized(s, "REDUCE") {
            return Ok(Transition::ReduceLabeled(x.to_string()));
        }
        if let Some(rest) = s.strip_prefix("REDUCE#") {
            let open = rest.find('(').ok_or_else(bad)?;
            let k: usize = rest[..open].parse().map_err(|_| bad())?;
            let label = parenthesized(&rest[open..], "").ok_or_else(bad)?;
            if k == 0 {
                return Err(bad());
            }
            return Ok(Transition::ReduceK(k, label.to_string()));
        }
        Err(bad())
    }
}

/// Parses a space-separated token line.
pub fn parse_tokens(line: &str) -> Result<Vec<Transition>, TokenError> {
    line.split_whitespace().map(str::parse).collect()
}

pub fn render_tokens(tokens: &[Transition], scheme: Scheme) -> String {
    tokens
        .iter()
        .map(|t| t.render(scheme))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Base {
    TopDown,
    InOrder,
    BottomUp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Disco {
    None,
    Swap,
    SwapK,
    ShiftK,
}

/// A linearization strategy: base traversal, reordering extension and
/// whether reduces carry labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scheme {
    pub base: Base,
    pub disco: Disco,
    pub enriched: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SchemeError {
    #[error("unknown scheme `{0}`")]
    Unknown(String),
    #[error("{0} is not a supported combination")]
    Unsupported(String),
}

impl Scheme {
    pub fn new(base: Base, disco: Disco, enriched: bool) -> Result<Self, SchemeError> {
        let scheme = Scheme {
            base,
            disco,
            enriched,
        };
        let ok = match (base, disco, enriched) {
            (Base::BottomUp, _, true) => false,
            (_, Disco::None, _) => true,
            (_, _, true) => false,
            (_, Disco::Swap, _) => true,
            (Base::InOrder, Disco::SwapK | Disco::ShiftK, _) => true,
            _ => false,
        };
        if ok {
            Ok(scheme)
        } else {
            Err(SchemeError::Unsupported(scheme.to_string()))
        }
    }

    pub const fn top_down() -> Self {
        Scheme {
            base: Base::TopDown,
            disco: Disco::None,
            enriched: false,
        }
    }

    pub const fn in_order() -> Self {
        Scheme {
            base: Base::InOrder,
            disco: Disco::None,
            enriched: false,
        }
    }

    pub const fn bottom_up() -> Self {
        Scheme {
            base: Base::BottomUp,
            disco: Disco::None,
            enriched: false,
        }
    }

    pub const fn with_disco(self, disco: Disco) -> Self {
        Scheme { disco, ..self }
    }

    pub const fn enriched(self) -> Self {
        Scheme {
            enriched: true,
            ..self
        }
    }

    /// Every supported scheme: the three continuous systems, their enriched
    /// variants, the three `+swap` systems and in-order `+swapk` / `+shiftk`.
    pub fn all() -> Vec<Scheme> {
        vec![
            Scheme::top_down(),
            Scheme::top_down().enriched(),
            Scheme::in_order(),
            Scheme::in_order().enriched(),
            Scheme::bottom_up(),
            Scheme::top_down().with_disco(Disco::Swap),
            Scheme::in_order().with_disco(Disco::Swap),
            Scheme::bottom_up().with_disco(Disco::Swap),
            Scheme::in_order().with_disco(Disco::SwapK),
            Scheme::in_order().with_disco(Disco::ShiftK),
        ]
    }

    pub fn handles_discontinuity(&self) -> bool {
        self.disco != Disco::None
    }

    pub fn uses_finish(&self) -> bool {
        self.base != Base::TopDown
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.base {
            Base::TopDown => "topdown",
            Base::InOrder => "inorder",
            Base::BottomUp => "bottomup",
        })?;
        f.write_str(match self.disco {
            Disco::None => "",
            Disco::Swap => "+swap",
            Disco::SwapK => "+swapk",
            Disco::ShiftK => "+shiftk",
        })?;
        if self.enriched {
            f.write_str(":enriched")?;
        }
        Ok(())
    }
}

impl FromStr for Scheme {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || SchemeError::Unknown(s.to_string());
        let (rest, enriched) = match s.strip_suffix(":enriched") {
            Some(r) => (r, true),
            None => (s, false),
        };
        let (base, disco) = match rest.split_once('+') {
            Some((b, d)) => (b, d),
            None => (rest, ""),
        };
        let base = match base {
            "topdown" => Base::TopDown,
            "inorder" => Base::InOrder,
            "bottomup" => Base::BottomUp,
            _ => return Err(unknown()),
        };
        let disco = match disco {
            "" => Disco::None,
            "swap" => Disco::Swap,
            "swapk" => Disco::SwapK,
            "shiftk" => Disco::ShiftK,
            _ => return Err(unknown()),
        };
        Scheme::new(base, disco, enriched)
    }
}

impl Serialize for Transition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Transition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A stack or buffer entry. Markers only ever live on the stack.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Item {
    Word(usize),
    Marker(String),
    Constituent(Node),
}

impl Item {
    pub fn is_marker(&self) -> bool {
        matches!(self, Item::Marker(_))
    }

    /// Smallest word position covered; `None` for markers.
    pub fn min_position(&self) -> Option<usize> {
        match self {
            Item::Word(p) => Some(*p),
            Item::Marker(_) => None,
            Item::Constituent(n) => n.span().min(),
        }
    }

    pub fn positions(&self) -> Vec<usize> {
        match self {
            Item::Word(p) => vec![*p],
            Item::Marker(_) => Vec::new(),
            Item::Constituent(n) => n.span().positions().to_vec(),
        }
    }

    fn into_child(self) -> Child {
        match self {
            Item::Word(p) => Child::Leaf(p),
            Item::Constituent(n) => Child::Node(n),
            Item::Marker(_) => unreachable!("markers are never children"),
        }
    }
}

/// Why a transition was rejected.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("sentence must contain at least one word")]
    EmptySentence,
    #[error("{transition} is not legal under {scheme}: {guard}")]
    Illegal {
        transition: String,
        scheme: String,
        guard: &'static str,
    },
}

/// A parser state `⟨stack, buffer, finished⟩`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    stack: Vec<Item>,
    buffer: VecDeque<Item>,
    finished: bool,
    n: usize,
}

impl Configuration {
    pub fn initial(n: usize) -> Result<Self, TransitionError> {
        if n == 0 {
            return Err(TransitionError::EmptySentence);
        }
        Ok(Configuration {
            stack: Vec::new(),
            buffer: (0..n).map(Item::Word).collect(),
            finished: false,
            n,
        })
    }

    pub fn stack(&self) -> &[Item] {
        &self.stack
    }

    pub fn buffer(&self) -> &VecDeque<Item> {
        &self.buffer
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn sentence_len(&self) -> usize {
        self.n
    }

    fn nearest_marker(&self) -> Option<usize> {
        self.stack.iter().rposition(Item::is_marker)
    }

    fn top_is_item(&self, depth: usize) -> bool {
        self.stack.len() > depth && !self.stack[self.stack.len() - 1 - depth].is_marker()
    }

    fn single_constituent(&self) -> Option<&Node> {
        match self.stack.as_slice() {
            [Item::Constituent(n)] => Some(n),
            _ => None,
        }
    }

    pub fn is_terminal(&self, scheme: Scheme) -> bool {
        match scheme.base {
            Base::TopDown => self.buffer.is_empty() && self.single_constituent().is_some(),
            Base::InOrder | Base::BottomUp => self.finished,
        }
    }

    /// The finished constituent, if the configuration is terminal.
    pub fn result(&self, scheme: Scheme) -> Option<&Node> {
        if self.is_terminal(scheme) {
            self.single_constituent()
        } else {
            None
        }
    }

    /// Checks the transition's premise and scheme guards, returning the name
    /// of the first guard that fails.
    pub fn check(&self, t: &Transition, scheme: Scheme) -> Result<(), &'static str> {
        if self.is_terminal(scheme) {
            return Err("configuration is terminal");
        }
        let ensure = |cond: bool, guard: &'static str| if cond { Ok(()) } else { Err(guard) };
        match t {
            Transition::Shift => ensure(!self.buffer.is_empty(), "buffer is empty"),
            Transition::ShiftK(k) => {
                ensure(scheme.disco == Disco::ShiftK, "SHIFT#k needs a +shiftk scheme")?;
                ensure(self.buffer.len() > *k, "buffer shorter than k+1")
            }
            Transition::Swap => {
                ensure(
                    matches!(scheme.disco, Disco::Swap | Disco::SwapK),
                    "SWAP needs a +swap or +swapk scheme",
                )?;
                self.check_swap(1)
            }
            Transition::SwapK(k) => {
                ensure(scheme.disco == Disco::SwapK, "SWAP#k needs a +swapk scheme")?;
                self.check_swap(*k)
            }
            Transition::Nt(_) => match scheme.base {
                Base::TopDown => Ok(()),
                Base::InOrder => ensure(self.top_is_item(0), "NT needs a word or constituent on top"),
                Base::BottomUp => Err("bottom-up has no NT"),
            },
            Transition::Reduce | Transition::ReduceLabeled(_) => {
                ensure(scheme.base != Base::BottomUp, "bottom-up reduces with REDUCE#k")?;
                let labeled = matches!(t, Transition::ReduceLabeled(_));
                ensure(labeled == scheme.enriched, "reduce form does not match the scheme")?;
                let m = self.nearest_marker().ok_or("no open non-terminal")?;
                match scheme.base {
                    Base::TopDown => ensure(m + 1 < self.stack.len(), "nothing to reduce")?,
                    _ => ensure(m > 0 && !self.stack[m - 1].is_marker(), "no first child below marker")?,
                }
                if let (Transition::ReduceLabeled(x), Item::Marker(open)) = (t, &self.stack[m]) {
                    ensure(x == open, "label differs from the open non-terminal")?;
                }
                Ok(())
            }
            Transition::ReduceK(k, _) => {
                ensure(scheme.base == Base::BottomUp, "REDUCE#k is bottom-up only")?;
                ensure(
                    self.stack.len() >= *k
                        && self.stack[self.stack.len() - k..].iter().all(|i| !i.is_marker()),
                    "fewer than k items on the stack",
                )
            }
            Transition::Finish => {
                ensure(scheme.uses_finish(), "top-down has no FINISH")?;
                ensure(self.buffer.is_empty(), "buffer is not empty")?;
                ensure(self.single_constituent().is_some(), "stack is not a single constituent")
            }
        }
    }

    fn check_swap(&self, k: usize) -> Result<(), &'static str> {
        let len = self.stack.len();
        if len < k + 1 || self.stack[len - 1 - k..].iter().any(Item::is_marker) {
            return Err("fewer than k+1 items atop the stack");
        }
        let top = self.stack[len - 1].min_position();
        let in_order = self.stack[len - 1 - k..len - 1]
            .iter()
            .all(|i| i.min_position() < top);
        if in_order {
            Ok(())
        } else {
            Err("items already swapped past the top")
        }
    }

    pub fn legal(&self, t: &Transition, scheme: Scheme) -> bool {
        self.check(t, scheme).is_ok()
    }

    /// Legal and cannot lead to a configuration from which no terminal one is
    /// reachable. Used to constrain search; decoding replays with [`legal`].
    ///
    /// [`legal`]: Configuration::legal
    pub fn viable(&self, t: &Transition, scheme: Scheme) -> bool {
        if !self.legal(t, scheme) {
            return false;
        }
        let shifting = matches!(t, Transition::Shift | Transition::ShiftK(_));
        match scheme.base {
            Base::TopDown => {
                let markers = self.stack.iter().filter(|i| i.is_marker()).count();
                match t {
                    _ if shifting => markers > 0,
                    Transition::Nt(_) => {
                        !self.buffer.is_empty() && (self.stack.is_empty() || markers > 0)
                    }
                    Transition::Reduce | Transition::ReduceLabeled(_) => {
                        markers > 1 || self.buffer.is_empty()
                    }
                    _ => true,
                }
            }
            Base::InOrder => {
                !shifting || self.stack.is_empty() || self.stack.iter().any(Item::is_marker)
            }
            Base::BottomUp => true,
        }
    }

    /// Applies a legal transition, returning the successor configuration.
    pub fn apply(&self, t: &Transition, scheme: Scheme) -> Result<Configuration, TransitionError> {
        self.check(t, scheme).map_err(|guard| TransitionError::Illegal {
            transition: t.to_string(),
            scheme: scheme.to_string(),
            guard,
        })?;
        let mut next = self.clone();
        next.apply_unchecked(t, scheme);
        Ok(next)
    }

    fn apply_unchecked(&mut self, t: &Transition, scheme: Scheme) {
        match t {
            Transition::Shift => {
                let item = self.buffer.pop_front().expect("checked");
                self.stack.push(item);
            }
            Transition::ShiftK(k) => {
                let item = self.buffer.remove(*k).expect("checked");
                self.stack.push(item);
            }
            Transition::Swap => self.swap(1),
            Transition::SwapK(k) => self.swap(*k),
            Transition::Nt(x) => self.stack.push(Item::Marker(x.clone())),
            Transition::Reduce | Transition::ReduceLabeled(_) => {
                let m = self.nearest_marker().expect("checked");
                let start = if scheme.base == Base::InOrder { m - 1 } else { m };
                let mut popped: Vec<Item> = self.stack.drain(start..).collect();
                let label = match popped.remove(m - start) {
                    Item::Marker(x) => x,
                    _ => unreachable!(),
                };
                let children = popped.into_iter().map(Item::into_child).collect();
                self.stack.push(Item::Constituent(Node::new(label, children)));
            }
            Transition::ReduceK(k, x) => {
                let start = self.stack.len() - k;
                let children = self.stack.drain(start..).map(Item::into_child).collect();
                self.stack.push(Item::Constituent(Node::new(x.clone(), children)));
            }
            Transition::Finish => self.finished = true,
        }
    }

    fn swap(&mut self, k: usize) {
        let top = self.stack.pop().expect("checked");
        let start = self.stack.len() - k;
        let moved: Vec<Item> = self.stack.drain(start..).collect();
        for item in moved.into_iter().rev() {
            self.buffer.push_front(item);
        }
        self.stack.push(top);
    }

    /// Word positions held anywhere in the configuration, sorted.
    pub fn word_positions(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .stack
            .iter()
            .chain(self.buffer.iter())
            .flat_map(Item::positions)
            .collect();
        all.sort_unstable();
        all
    }

    pub(crate) fn take_all_items(&mut self) -> (Vec<Item>, Vec<Item>) {
        (
            std::mem::take(&mut self.stack),
            self.buffer.drain(..).collect(),
        )
    }

    pub(crate) fn apply_trusted(&mut self, t: &Transition, scheme: Scheme) {
        debug_assert!(self.legal(t, scheme));
        self.apply_unchecked(t, scheme);
    }
}
