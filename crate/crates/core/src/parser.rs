//! Concrete syntax: lexer, parser and printer.
//!
//! ```text
//! program  := def*
//! def      := "def" NAME "(" (param ("," param)*)? ")" "=" process
//! param    := NAME ":" formula
//!
//! process  := prefix ("(+)" prefix)*                      -- choice, left-assoc
//! prefix   := "link" NAME NAME
//!           | "fail" NAME
//!           | "close" NAME
//!           | "wait" NAME "." prefix
//!           | "send" NAME "(" NAME ("," NAME)? ")" "(" process "|" process ")"
//!           | "recv" NAME "(" NAME ("," NAME)? ")" "." prefix
//!           | "case" NAME ("(" NAME ")")? "{" NAME ":" process ";" NAME ":" process "}"
//!           | "unfold" NAME ("(" NAME ")")? "." prefix    -- mu side (output)
//!           | "rec" NAME ("(" NAME ")")? "." prefix       -- nu side (input)
//!           | "new" "(" NAME ":" formula ")" "(" process "|" process ")"
//!           | NAME "." TAG ("(" NAME ")")? "." prefix     -- select
//!           | NAME "(" (NAME ("," NAME)*)? ")"            -- call
//!           | "(" process ")"
//!
//! formula  := mult (("+" | "&") mult)*                    -- left-assoc
//! mult     := atom (("*" | "par") atom)*                  -- left-assoc
//! atom     := "0" | "1" | "top" | "bot" | NAME
//!           | ("mu" | "nu") NAME "." formula              -- extends maximally right
//!           | "(" formula ")"
//! ```
//!
//! Where a binder is omitted it defaults to the subject: `unfold x. P` is
//! `unfold x (x). P`, `recv x (y). P` is `recv x (y, x). P`, and
//! `send x (y) (P | Q)` is `send x (y, x) (P | Q)`. A prefix continuation
//! binds tighter than `(+)`, so `wait x. P (+) Q` is `(wait x. P) (+) Q`.
//! Select tags are `in1`/`in2` (`inl`/`inr` are accepted as synonyms); case
//! labels are free-form and type positionally, first branch first summand.
//! Comments run from `--` to end of line.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::ast::{Definition, Name, Process, Program, Tag};
use crate::types::Formula;

/// Byte range plus 1-based line/column of its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}:{line}:{col}: {message}", path.as_deref().unwrap_or("<input>"))]
pub struct ParseError {
    pub path: Option<String>,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

/// A parsed source file: the program plus enough location information to
/// report on any process node. Nodes are addressed by their definition name
/// and the child-index path from the definition body.
#[derive(Debug, Clone)]
pub struct SourceProgram {
    pub path: Option<String>,
    pub text: String,
    pub program: Program,
    locations: HashMap<(Name, Vec<u32>), Span>,
    def_spans: HashMap<Name, Span>,
}

impl SourceProgram {
    /// Span of the node at `path` (child indices from the body root) inside
    /// definition `def`. The empty path is the body itself.
    pub fn span_of(&self, def: &str, path: &[u32]) -> Option<Span> {
        self.locations.get(&(def.to_string(), path.to_vec())).copied()
    }

    pub fn def_span(&self, def: &str) -> Option<Span> {
        self.def_spans.get(def).copied()
    }
}

pub fn parse_program(text: &str) -> Result<SourceProgram, ParseError> {
    parse_program_at(text, None)
}

pub fn parse_program_at(text: &str, path: Option<&str>) -> Result<SourceProgram, ParseError> {
    let tokens = lex(text, path)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        path: path.map(|s| s.to_string()),
        node_spans: Vec::new(),
    };
    parser.program(text)
}

/// Parse a formula on its own (used by tests and tools).
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let tokens = lex(text, None)?;
    let mut parser = Parser { tokens, pos: 0, path: None, node_spans: Vec::new() };
    let f = parser.formula(&mut Vec::new())?;
    parser.expect_eof()?;
    Ok(f)
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Zero,
    One,
    KwDef,
    KwLink,
    KwFail,
    KwClose,
    KwWait,
    KwSend,
    KwRecv,
    KwCase,
    KwUnfold,
    KwRec,
    KwNew,
    KwMu,
    KwNu,
    KwPar,
    KwTop,
    KwBot,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Colon,
    Semi,
    Comma,
    Dot,
    Equals,
    Pipe,
    Plus,
    Amp,
    Star,
    ChoiceOp,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{}`", s),
            Tok::Zero => "`0`".into(),
            Tok::One => "`1`".into(),
            Tok::KwDef => "`def`".into(),
            Tok::KwLink => "`link`".into(),
            Tok::KwFail => "`fail`".into(),
            Tok::KwClose => "`close`".into(),
            Tok::KwWait => "`wait`".into(),
            Tok::KwSend => "`send`".into(),
            Tok::KwRecv => "`recv`".into(),
            Tok::KwCase => "`case`".into(),
            Tok::KwUnfold => "`unfold`".into(),
            Tok::KwRec => "`rec`".into(),
            Tok::KwNew => "`new`".into(),
            Tok::KwMu => "`mu`".into(),
            Tok::KwNu => "`nu`".into(),
            Tok::KwPar => "`par`".into(),
            Tok::KwTop => "`top`".into(),
            Tok::KwBot => "`bot`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Star => "`*`".into(),
            Tok::ChoiceOp => "`(+)`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn keyword(s: &str) -> Option<Tok> {
    Some(match s {
        "def" => Tok::KwDef,
        "link" => Tok::KwLink,
        "fail" => Tok::KwFail,
        "close" => Tok::KwClose,
        "wait" => Tok::KwWait,
        "send" => Tok::KwSend,
        "recv" => Tok::KwRecv,
        "case" => Tok::KwCase,
        "unfold" => Tok::KwUnfold,
        "rec" => Tok::KwRec,
        "new" => Tok::KwNew,
        "mu" => Tok::KwMu,
        "nu" => Tok::KwNu,
        "par" => Tok::KwPar,
        "top" => Tok::KwTop,
        "bot" => Tok::KwBot,
        _ => return None,
    })
}

fn lex(text: &str, path: Option<&str>) -> Result<Vec<(Tok, Span)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    macro_rules! span {
        ($start:expr, $end:expr, $l:expr, $c:expr) => {
            Span { start: $start, end: $end, line: $l, col: $c }
        };
    }
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' => {
                i += 1;
                col += 1;
            }
            b'\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            b'-' if i + 1 < bytes.len() && bytes[i + 1] == b'-' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => {
                if i + 2 < bytes.len() && bytes[i + 1] == b'+' && bytes[i + 2] == b')' {
                    out.push((Tok::ChoiceOp, span!(i, i + 3, line, col)));
                    i += 3;
                    col += 3;
                } else {
                    out.push((Tok::LParen, span!(i, i + 1, line, col)));
                    i += 1;
                    col += 1;
                }
            }
            b')' | b'{' | b'}' | b':' | b';' | b',' | b'.' | b'=' | b'|' | b'+' | b'&' | b'*' => {
                let tok = match b {
                    b')' => Tok::RParen,
                    b'{' => Tok::LBrace,
                    b'}' => Tok::RBrace,
                    b':' => Tok::Colon,
                    b';' => Tok::Semi,
                    b',' => Tok::Comma,
                    b'.' => Tok::Dot,
                    b'=' => Tok::Equals,
                    b'|' => Tok::Pipe,
                    b'+' => Tok::Plus,
                    b'&' => Tok::Amp,
                    _ => Tok::Star,
                };
                out.push((tok, span!(i, i + 1, line, col)));
                i += 1;
                col += 1;
            }
            b'0' => {
                out.push((Tok::Zero, span!(i, i + 1, line, col)));
                i += 1;
                col += 1;
            }
            b'1' => {
                out.push((Tok::One, span!(i, i + 1, line, col)));
                i += 1;
                col += 1;
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                let start_col = col;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'\'')
                {
                    i += 1;
                    col += 1;
                }
                let word = &text[start..i];
                let tok = keyword(word).unwrap_or_else(|| Tok::Ident(word.to_string()));
                out.push((tok, span!(start, i, line, start_col)));
            }
            _ => {
                return Err(ParseError {
                    path: path.map(|s| s.to_string()),
                    line,
                    col,
                    message: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                });
            }
        }
    }
    out.push((Tok::Eof, span!(bytes.len(), bytes.len(), line, col)));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<(Tok, Span)>,
    pos: usize,
    path: Option<String>,
    /// (start, end) byte spans of process nodes in construction (postorder)
    /// order, reset per definition.
    node_spans: Vec<(usize, usize)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn here(&self) -> Span {
        self.tokens[self.pos].1
    }

    fn prev_end(&self) -> usize {
        self.tokens[self.pos.saturating_sub(1)].1.end
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: String) -> ParseError {
        let s = self.here();
        ParseError { path: self.path.clone(), line: s.line, col: s.col, message }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!(
                "expected {} {}, found {}",
                tok.describe(),
                what,
                self.peek().describe()
            )))
        }
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.error(format!("expected end of input, found {}", self.peek().describe())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<Name, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error(format!("expected {} name, found {}", what, other.describe()))),
        }
    }

    fn note(&mut self, start: usize) {
        let end = self.prev_end();
        self.node_spans.push((start, end));
    }

    fn program(&mut self, text: &str) -> Result<SourceProgram, ParseError> {
        let mut program = Program::default();
        let mut locations = HashMap::new();
        let mut def_spans = HashMap::new();
        while *self.peek() != Tok::Eof {
            let def_start = self.here();
            self.expect(Tok::KwDef, "to start a definition")?;
            let name = self.ident("definition")?;
            if program.definitions.contains_key(&name)
                || (name == "main" && program.main.is_some())
            {
                return Err(self.error(format!("definition `{}` is defined twice", name)));
            }
            self.expect(Tok::LParen, "after the definition name")?;
            let mut params = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    let pname = self.ident("parameter")?;
                    self.expect(Tok::Colon, "after the parameter name")?;
                    let f = self.formula(&mut Vec::new())?;
                    params.push((pname, f));
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen, "after the parameters")?;
            self.expect(Tok::Equals, "before the definition body")?;
            self.node_spans.clear();
            let body = self.process()?;
            // Pair up the recorded spans with a postorder walk of the tree.
            let mut paths = Vec::new();
            collect_paths_postorder(&body, &mut Vec::new(), &mut paths);
            debug_assert_eq!(paths.len(), self.node_spans.len());
            for (path, (start, end)) in paths.into_iter().zip(self.node_spans.drain(..)) {
                let (line, col) = line_col_at(text, start);
                locations.insert(
                    (name.clone(), path),
                    Span { start, end, line, col },
                );
            }
            let span = Span {
                start: def_start.start,
                end: self.prev_end(),
                line: def_start.line,
                col: def_start.col,
            };
            def_spans.insert(name.clone(), span);
            let def = Definition { name: name.clone(), params, body };
            if name == "main" {
                program.main = Some(def);
            } else {
                program.definitions.insert(name, def);
            }
        }
        Ok(SourceProgram {
            path: self.path.clone(),
            text: text.to_string(),
            program,
            locations,
            def_spans,
        })
    }

    fn process(&mut self) -> Result<Process, ParseError> {
        let start = self.here().start;
        let mut p = self.prefix()?;
        while *self.peek() == Tok::ChoiceOp {
            self.bump();
            let q = self.prefix()?;
            p = Process::choice(p, q);
            self.note(start);
        }
        Ok(p)
    }

    fn prefix(&mut self) -> Result<Process, ParseError> {
        let start = self.here().start;
        match self.peek().clone() {
            Tok::KwLink => {
                self.bump();
                let x = self.ident("channel")?;
                let y = self.ident("channel")?;
                let p = Process::Link(x, y);
                self.note(start);
                Ok(p)
            }
            Tok::KwFail => {
                self.bump();
                let x = self.ident("channel")?;
                let p = Process::Fail(x);
                self.note(start);
                Ok(p)
            }
            Tok::KwClose => {
                self.bump();
                let x = self.ident("channel")?;
                let p = Process::Close(x);
                self.note(start);
                Ok(p)
            }
            Tok::KwWait => {
                self.bump();
                let x = self.ident("channel")?;
                self.expect(Tok::Dot, "after `wait x`")?;
                let body = self.prefix()?;
                let p = Process::Wait(x, Box::new(body));
                self.note(start);
                Ok(p)
            }
            Tok::KwSend => {
                self.bump();
                let subject = self.ident("channel")?;
                self.expect(Tok::LParen, "to open the binders of `send`")?;
                let left_binder = self.ident("binder")?;
                let right_binder = if *self.peek() == Tok::Comma {
                    self.bump();
                    self.ident("binder")?
                } else {
                    subject.clone()
                };
                self.expect(Tok::RParen, "after the binders")?;
                self.expect(Tok::LParen, "to open the components of `send`")?;
                let left = self.process()?;
                self.expect(Tok::Pipe, "between the components")?;
                let right = self.process()?;
                self.expect(Tok::RParen, "after the components")?;
                let p = Process::Fork {
                    subject,
                    left_binder,
                    right_binder,
                    left: Box::new(left),
                    right: Box::new(right),
                };
                self.note(start);
                Ok(p)
            }
            Tok::KwRecv => {
                self.bump();
                let subject = self.ident("channel")?;
                self.expect(Tok::LParen, "to open the binders of `recv`")?;
                let left_binder = self.ident("binder")?;
                let right_binder = if *self.peek() == Tok::Comma {
                    self.bump();
                    self.ident("binder")?
                } else {
                    subject.clone()
                };
                self.expect(Tok::RParen, "after the binders")?;
                self.expect(Tok::Dot, "after the binders of `recv`")?;
                let body = self.prefix()?;
                let p = Process::Join {
                    subject,
                    left_binder,
                    right_binder,
                    body: Box::new(body),
                };
                self.note(start);
                Ok(p)
            }
            Tok::KwCase => {
                self.bump();
                let subject = self.ident("channel")?;
                let binder = if *self.peek() == Tok::LParen {
                    self.bump();
                    let b = self.ident("binder")?;
                    self.expect(Tok::RParen, "after the binder")?;
                    b
                } else {
                    subject.clone()
                };
                self.expect(Tok::LBrace, "to open the case branches")?;
                let l1 = self.ident("branch label")?;
                self.expect(Tok::Colon, "after the branch label")?;
                let left = self.process()?;
                self.expect(Tok::Semi, "between the two branches")?;
                let l2 = self.ident("branch label")?;
                self.expect(Tok::Colon, "after the branch label")?;
                let right = self.process()?;
                self.expect(Tok::RBrace, "after the second branch (case takes exactly two)")?;
                let p = Process::Case {
                    subject,
                    binder,
                    labels: [l1, l2],
                    left: Box::new(left),
                    right: Box::new(right),
                };
                self.note(start);
                Ok(p)
            }
            Tok::KwUnfold | Tok::KwRec => {
                let is_rec_side = *self.peek() == Tok::KwUnfold;
                self.bump();
                let subject = self.ident("channel")?;
                let binder = if *self.peek() == Tok::LParen {
                    self.bump();
                    let b = self.ident("binder")?;
                    self.expect(Tok::RParen, "after the binder")?;
                    b
                } else {
                    subject.clone()
                };
                self.expect(Tok::Dot, "after the fixpoint subject")?;
                let body = Box::new(self.prefix()?);
                let p = if is_rec_side {
                    Process::Rec { subject, binder, body }
                } else {
                    Process::Corec { subject, binder, body }
                };
                self.note(start);
                Ok(p)
            }
            Tok::KwNew => {
                self.bump();
                self.expect(Tok::LParen, "to open the cut channel")?;
                let channel = self.ident("channel")?;
                self.expect(Tok::Colon, "after the cut channel")?;
                let ann = self.formula(&mut Vec::new())?;
                self.expect(Tok::RParen, "after the cut annotation")?;
                self.expect(Tok::LParen, "to open the components of `new`")?;
                let left = self.process()?;
                self.expect(Tok::Pipe, "between the components")?;
                let right = self.process()?;
                self.expect(Tok::RParen, "after the components")?;
                let p = Process::Cut {
                    channel,
                    ann,
                    left: Box::new(left),
                    right: Box::new(right),
                };
                self.note(start);
                Ok(p)
            }
            Tok::LParen => {
                self.bump();
                let p = self.process()?;
                self.expect(Tok::RParen, "to close the parenthesized process")?;
                Ok(p)
            }
            Tok::Ident(name) => {
                self.bump();
                match self.peek() {
                    Tok::Dot => {
                        self.bump();
                        let tag_name = self.ident("selection tag")?;
                        let tag = match tag_name.as_str() {
                            "in1" | "inl" => Tag::In1,
                            "in2" | "inr" => Tag::In2,
                            other => {
                                return Err(self.error(format!(
                                    "unknown selection tag `{}` (use in1/in2; inl/inr are synonyms)",
                                    other
                                )))
                            }
                        };
                        let binder = if *self.peek() == Tok::LParen {
                            self.bump();
                            let b = self.ident("binder")?;
                            self.expect(Tok::RParen, "after the binder")?;
                            b
                        } else {
                            name.clone()
                        };
                        self.expect(Tok::Dot, "after the selection")?;
                        let body = self.prefix()?;
                        let p = Process::Select {
                            subject: name,
                            tag,
                            binder,
                            body: Box::new(body),
                        };
                        self.note(start);
                        Ok(p)
                    }
                    Tok::LParen => {
                        self.bump();
                        let mut args = Vec::new();
                        if *self.peek() != Tok::RParen {
                            loop {
                                args.push(self.ident("argument")?);
                                if *self.peek() == Tok::Comma {
                                    self.bump();
                                } else {
                                    break;
                                }
                            }
                        }
                        self.expect(Tok::RParen, "after the call arguments")?;
                        let p = Process::Call(name, args);
                        self.note(start);
                        Ok(p)
                    }
                    other => Err(self.error(format!(
                        "expected `.` (select) or `(` (call) after `{}`, found {}",
                        name,
                        other.describe()
                    ))),
                }
            }
            other => Err(self.error(format!("expected a process, found {}", other.describe()))),
        }
    }

    fn formula(&mut self, binders: &mut Vec<Name>) -> Result<Formula, ParseError> {
        let mut f = self.mult(binders)?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let g = self.mult(binders)?;
                    f = Formula::plus(f, g);
                }
                Tok::Amp => {
                    self.bump();
                    let g = self.mult(binders)?;
                    f = Formula::with(f, g);
                }
                _ => break,
            }
        }
        Ok(f)
    }

    fn mult(&mut self, binders: &mut Vec<Name>) -> Result<Formula, ParseError> {
        let mut f = self.formula_atom(binders)?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let g = self.formula_atom(binders)?;
                    f = Formula::tensor(f, g);
                }
                Tok::KwPar => {
                    self.bump();
                    let g = self.formula_atom(binders)?;
                    f = Formula::par(f, g);
                }
                _ => break,
            }
        }
        Ok(f)
    }

    fn formula_atom(&mut self, binders: &mut Vec<Name>) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::Zero => {
                self.bump();
                Ok(Formula::Zero)
            }
            Tok::One => {
                self.bump();
                Ok(Formula::One)
            }
            Tok::KwTop => {
                self.bump();
                Ok(Formula::Top)
            }
            Tok::KwBot => {
                self.bump();
                Ok(Formula::Bot)
            }
            Tok::KwMu | Tok::KwNu => {
                let is_mu = *self.peek() == Tok::KwMu;
                self.bump();
                let var = self.ident("type variable")?;
                self.expect(Tok::Dot, "after the fixpoint variable")?;
                binders.push(var);
                let body = self.formula(binders)?;
                binders.pop();
                Ok(if is_mu { Formula::mu(body) } else { Formula::nu(body) })
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula(binders)?;
                self.expect(Tok::RParen, "to close the parenthesized formula")?;
                Ok(f)
            }
            Tok::Ident(name) => {
                self.bump();
                match binders.iter().rposition(|b| *b == name) {
                    Some(pos) => Ok(Formula::Var((binders.len() - 1 - pos) as u32)),
                    None => Err(self.error(format!("unknown type variable `{}`", name))),
                }
            }
            other => Err(self.error(format!("expected a formula, found {}", other.describe()))),
        }
    }
}

fn line_col_at(text: &str, offset: usize) -> (u32, u32) {
    let mut line = 1u32;
    let mut col = 1u32;
    for (i, ch) in text.char_indices() {
        if i >= offset {
            break;
        }
        if ch == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

/// Postorder enumeration of node paths, mirroring the order in which the
/// parser records spans.
fn collect_paths_postorder(p: &Process, path: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let child = |i: u32, c: &Process, path: &mut Vec<u32>, out: &mut Vec<Vec<u32>>| {
        path.push(i);
        collect_paths_postorder(c, path, out);
        path.pop();
    };
    match p {
        Process::Link(_, _) | Process::Fail(_) | Process::Close(_) | Process::Call(_, _) => {}
        Process::Wait(_, body) => child(0, body, path, out),
        Process::Fork { left, right, .. } => {
            child(0, left, path, out);
            child(1, right, path, out);
        }
        Process::Join { body, .. } => child(0, body, path, out),
        Process::Select { body, .. } => child(0, body, path, out),
        Process::Case { left, right, .. } => {
            child(0, left, path, out);
            child(1, right, path, out);
        }
        Process::Rec { body, .. } | Process::Corec { body, .. } => child(0, body, path, out),
        Process::Cut { left, right, .. } => {
            child(0, left, path, out);
            child(1, right, path, out);
        }
        Process::Choice(left, right) => {
            child(0, left, path, out);
            child(1, right, path, out);
        }
    }
    out.push(path.clone());
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

/// Render a process in the concrete syntax; parsing the output gives the
/// same tree back.
pub fn print_process(p: &Process) -> String {
    let mut s = String::new();
    fmt_process(p, false, &mut s);
    s
}

/// Render a whole program, one definition per line.
pub fn print_program(prog: &Program) -> String {
    let mut out = String::new();
    for def in prog.all_defs() {
        let params = def
            .params
            .iter()
            .map(|(n, f)| format!("{}: {}", n, f))
            .collect::<Vec<_>>()
            .join(", ");
        out.push_str(&format!("def {}({}) = {}\n", def.name, params, print_process(&def.body)));
    }
    out
}

/// `as_operand` is true where the grammar wants a prefix: a choice must then
/// be parenthesized.
fn fmt_process(p: &Process, as_operand: bool, out: &mut String) {
    match p {
        Process::Choice(l, r) => {
            if as_operand {
                out.push('(');
            }
            fmt_process(l, !matches!(**l, Process::Choice(_, _)), out);
            out.push_str(" (+) ");
            fmt_process(r, true, out);
            if as_operand {
                out.push(')');
            }
        }
        Process::Link(x, y) => {
            out.push_str("link ");
            out.push_str(x);
            out.push(' ');
            out.push_str(y);
        }
        Process::Fail(x) => {
            out.push_str("fail ");
            out.push_str(x);
        }
        Process::Close(x) => {
            out.push_str("close ");
            out.push_str(x);
        }
        Process::Wait(x, body) => {
            out.push_str("wait ");
            out.push_str(x);
            out.push_str(". ");
            fmt_process(body, true, out);
        }
        Process::Fork { subject, left_binder, right_binder, left, right } => {
            out.push_str("send ");
            out.push_str(subject);
            out.push_str(" (");
            out.push_str(left_binder);
            if right_binder != subject {
                out.push_str(", ");
                out.push_str(right_binder);
            }
            out.push_str(") (");
            fmt_process(left, false, out);
            out.push_str(" | ");
            fmt_process(right, false, out);
            out.push(')');
        }
        Process::Join { subject, left_binder, right_binder, body } => {
            out.push_str("recv ");
            out.push_str(subject);
            out.push_str(" (");
            out.push_str(left_binder);
            if right_binder != subject {
                out.push_str(", ");
                out.push_str(right_binder);
            }
            out.push_str("). ");
            fmt_process(body, true, out);
        }
        Process::Select { subject, tag, binder, body } => {
            out.push_str(subject);
            out.push('.');
            out.push_str(&tag.to_string());
            if binder != subject {
                out.push_str(" (");
                out.push_str(binder);
                out.push(')');
            }
            out.push_str(". ");
            fmt_process(body, true, out);
        }
        Process::Case { subject, binder, labels, left, right } => {
            out.push_str("case ");
            out.push_str(subject);
            if binder != subject {
                out.push_str(" (");
                out.push_str(binder);
                out.push(')');
            }
            out.push_str(" { ");
            out.push_str(&labels[0]);
            out.push_str(": ");
            fmt_process(left, false, out);
            out.push_str("; ");
            out.push_str(&labels[1]);
            out.push_str(": ");
            fmt_process(right, false, out);
            out.push_str(" }");
        }
        Process::Rec { subject, binder, body } => {
            out.push_str("unfold ");
            out.push_str(subject);
            if binder != subject {
                out.push_str(" (");
                out.push_str(binder);
                out.push(')');
            }
            out.push_str(". ");
            fmt_process(body, true, out);
        }
        Process::Corec { subject, binder, body } => {
            out.push_str("rec ");
            out.push_str(subject);
            if binder != subject {
                out.push_str(" (");
                out.push_str(binder);
                out.push(')');
            }
            out.push_str(". ");
            fmt_process(body, true, out);
        }
        Process::Cut { channel, ann, left, right } => {
            out.push_str("new (");
            out.push_str(channel);
            out.push_str(": ");
            out.push_str(&ann.to_string());
            out.push_str(") (");
            fmt_process(left, false, out);
            out.push_str(" | ");
            fmt_process(right, false, out);
            out.push(')');
        }
        Process::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            out.push_str(&args.join(", "));
            out.push(')');
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", print_process(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{alpha_eq, check_well_formed, free_names};
    use crate::types::Formula as F;
    use proptest::prelude::*;

    const BUYER_SELLER: &str = r#"
-- A buyer that decides how long to keep shopping, against a patient seller.
def Buyer(x: mu X. X + 1) =
  unfold x. (x.in1. Buyer(x) (+) x.in2. close x)

def Seller(x: nu X. X & bot, y: 1) =
  rec x. case x { in1: Seller(x, y); in2: wait x. close y }

def main(y: 1) =
  new (x: mu X. X + 1) (Buyer(x) | Seller(x, y))
"#;

    #[test]
    fn parses_buyer_seller() {
        let sp = parse_program(BUYER_SELLER).unwrap();
        let prog = &sp.program;
        assert_eq!(prog.definitions.len(), 2);
        let buyer = &prog.definitions["Buyer"];
        assert_eq!(buyer.params, vec![("x".into(), F::mu(F::plus(F::Var(0), F::One)))]);
        let expected_body = Process::Rec {
            subject: "x".into(),
            binder: "x".into(),
            body: Box::new(Process::choice(
                Process::Select {
                    subject: "x".into(),
                    tag: Tag::In1,
                    binder: "x".into(),
                    body: Box::new(Process::Call("Buyer".into(), vec!["x".into()])),
                },
                Process::Select {
                    subject: "x".into(),
                    tag: Tag::In2,
                    binder: "x".into(),
                    body: Box::new(Process::Close("x".into())),
                },
            )),
        };
        assert_eq!(buyer.body, expected_body);

        let seller = &prog.definitions["Seller"];
        assert_eq!(
            seller.params[0].1,
            F::nu(F::with(F::Var(0), F::Bot))
        );
        let main = prog.main.as_ref().unwrap();
        assert_eq!(main.params, vec![("y".into(), F::One)]);
        match &main.body {
            Process::Cut { channel, ann, .. } => {
                assert_eq!(channel, "x");
                assert_eq!(*ann, F::mu(F::plus(F::Var(0), F::One)));
            }
            other => panic!("expected a cut, got {:?}", other),
        }
        assert_eq!(check_well_formed(prog), Vec::new());
    }

    #[test]
    fn sugar_defaults_binders_to_the_subject() {
        let a = parse_program("def A(x: mu X. X + 1) = unfold x. x.in1. A(x)").unwrap();
        let b = parse_program("def A(x: mu X. X + 1) = unfold x (x). x.in1 (x). A(x)").unwrap();
        assert_eq!(a.program.definitions["A"].body, b.program.definitions["A"].body);

        let c = parse_program("def B(x: 1 * 1) = send x (y) (close y | close x)").unwrap();
        match &c.program.definitions["B"].body {
            Process::Fork { left_binder, right_binder, .. } => {
                assert_eq!(left_binder, "y");
                assert_eq!(right_binder, "x");
            }
            other => panic!("expected a fork, got {:?}", other),
        }

        let d = parse_program("def C(x: bot par 1, z: 1) = recv x (y). wait y. link x z").unwrap();
        match &d.program.definitions["C"].body {
            Process::Join { left_binder, right_binder, .. } => {
                assert_eq!(left_binder, "y");
                assert_eq!(right_binder, "x");
            }
            other => panic!("expected a join, got {:?}", other),
        }
    }

    #[test]
    fn choice_binds_looser_than_prefixes() {
        let sp = parse_program("def A(x: 1, y: top) = wait z. close x (+) fail y").unwrap();
        // Parses as (wait z. close x) (+) (fail y) -- z unbound is a
        // well-formedness matter, not a parse error.
        match &sp.program.definitions["A"].body {
            Process::Choice(l, r) => {
                assert!(matches!(**l, Process::Wait(_, _)));
                assert!(matches!(**r, Process::Fail(_)));
            }
            other => panic!("expected a choice, got {:?}", other),
        }
    }

    #[test]
    fn formulas_parse_with_expected_precedence() {
        assert_eq!(
            parse_formula("mu X. 1 * X + 1").unwrap(),
            F::mu(F::plus(F::tensor(F::One, F::Var(0)), F::One))
        );
        assert_eq!(
            parse_formula("nu X. (bot par X) & bot").unwrap(),
            F::nu(F::with(F::par(F::Bot, F::Var(0)), F::Bot))
        );
        assert_eq!(
            parse_formula("mu X. nu Y. X + Y").unwrap(),
            F::mu(F::nu(F::plus(F::Var(1), F::Var(0))))
        );
        // `mu` swallows everything to its right.
        assert_eq!(
            parse_formula("1 * mu X. X * 1").unwrap(),
            F::tensor(F::One, F::mu(F::tensor(F::Var(0), F::One)))
        );
        assert_eq!(parse_formula("1 + bot + 1").unwrap(),
            F::plus(F::plus(F::One, F::Bot), F::One));
    }

    #[test]
    fn rejects_unknown_type_variables_and_tags() {
        let e = parse_program("def A(x: mu X. Y) = close x").unwrap_err();
        assert!(e.message.contains("unknown type variable `Y`"));
        let e = parse_program("def A(x: 1 + 1) = x.in3. close x").unwrap_err();
        assert!(e.message.contains("unknown selection tag `in3`"));
        assert!(e.message.contains("in1/in2"));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_program("def A(x: 1) =\n  close").unwrap_err();
        assert_eq!((e.line, e.col), (2, 8));
        let e = parse_program_at("def A(x: 1) = ?", Some("foo.pilin")).unwrap_err();
        assert_eq!(e.to_string(), "foo.pilin:1:15: unexpected character `?`");
    }

    #[test]
    fn comments_are_skipped() {
        let sp = parse_program("-- nothing here\ndef A(x: 1) = close x -- done\n").unwrap();
        assert!(sp.program.definitions.contains_key("A"));
    }

    #[test]
    fn location_map_covers_every_node() {
        let sp = parse_program(BUYER_SELLER).unwrap();
        // Body of Buyer: the whole unfold.
        let body = sp.span_of("Buyer", &[]).unwrap();
        assert!(sp.text[body.start..body.end].starts_with("unfold x."));
        // Path [0] is the choice, [0,0] the first select, [0,0,0] the call.
        let choice = sp.span_of("Buyer", &[0]).unwrap();
        assert!(sp.text[choice.start..choice.end].starts_with("x.in1"));
        let call = sp.span_of("Buyer", &[0, 0, 0]).unwrap();
        assert_eq!(&sp.text[call.start..call.end], "Buyer(x)");
        assert_eq!(call.line, 4);
        // Main's cut and its two components.
        assert!(sp.span_of("main", &[]).is_some());
        assert!(sp.span_of("main", &[0]).is_some());
        assert!(sp.span_of("main", &[1]).is_some());
        assert!(sp.span_of("main", &[2]).is_none());
    }

    #[test]
    fn print_parse_round_trips_on_sources() {
        for src in [
            BUYER_SELLER,
            "def A(x: top) = fail x (+) (fail x (+) fail x)",
            "def A(x: 1 + 1, y: top) = x.in1 (w). case w (v) { a: fail y; b: fail y }",
            "def A(x: 1 * (1 * 1)) = send x (y, z) (close y | send z (u, v) (close u | close v))",
        ] {
            let sp = parse_program(src).unwrap();
            let printed = print_program(&sp.program);
            let reparsed = parse_program(&printed)
                .unwrap_or_else(|e| panic!("reparse of {:?} failed: {}", printed, e));
            assert_eq!(sp.program, reparsed.program, "printed form: {}", printed);
        }
    }

    // Random closed formulas and well-scoped processes for the round-trip
    // properties.
    fn arb_formula(depth: u32) -> BoxedStrategy<F> {
        fn go(depth: u32, binders: u32) -> BoxedStrategy<F> {
            let mut leaves: Vec<BoxedStrategy<F>> = vec![
                Just(F::Zero).boxed(),
                Just(F::Top).boxed(),
                Just(F::One).boxed(),
                Just(F::Bot).boxed(),
            ];
            if binders > 0 {
                leaves.push((0..binders).prop_map(F::Var).boxed());
            }
            let leaf = prop::strategy::Union::new(leaves).boxed();
            if depth == 0 {
                return leaf;
            }
            let sub = go(depth - 1, binders);
            let sub_b = go(depth - 1, binders + 1);
            prop_oneof![
                2 => leaf,
                1 => (sub.clone(), sub.clone()).prop_map(|(a, b)| F::plus(a, b)),
                1 => (sub.clone(), sub.clone()).prop_map(|(a, b)| F::with(a, b)),
                1 => (sub.clone(), sub.clone()).prop_map(|(a, b)| F::tensor(a, b)),
                1 => (sub.clone(), sub).prop_map(|(a, b)| F::par(a, b)),
                1 => sub_b.clone().prop_map(F::mu),
                1 => sub_b.prop_map(F::nu),
            ]
            .boxed()
        }
        go(depth, 0)
    }

    proptest! {
        #[test]
        fn formula_display_reparses(f in arb_formula(4)) {
            let printed = f.to_string();
            let reparsed = parse_formula(&printed)
                .unwrap_or_else(|e| panic!("reparse of {:?} failed: {}", printed, e));
            prop_assert_eq!(f, reparsed);
        }
    }

    proptest! {
        #[test]
        fn process_print_parse_round_trips(p in arb_process_top()) {
            let printed = print_process(&p);
            let wrapped = format!("def T(a: 1, b: 1, c: 1, d: 1, e: 1) = {}", printed);
            let sp = parse_program(&wrapped)
                .unwrap_or_else(|e| panic!("reparse of {:?} failed: {}", printed, e));
            let q = &sp.program.definitions["T"].body;
            prop_assert!(alpha_eq(&p, q), "printed: {}\nreparsed: {:?}", printed, q);
            prop_assert_eq!(free_names(&p), free_names(q));
        }
    }

    fn arb_process_top() -> BoxedStrategy<Process> {
        arb_process_impl(vec!["a".into(), "b".into(), "c".into(), "d".into(), "e".into()], 3)
    }

    fn arb_process_impl(scope: Vec<String>, depth: u32) -> BoxedStrategy<Process> {
        let pick = prop::sample::select(scope.clone());
        let leaf = prop_oneof![
            (pick.clone(), pick.clone()).prop_map(|(x, y)| Process::Link(x, y)),
            pick.clone().prop_map(Process::Fail),
            pick.clone().prop_map(Process::Close),
            (
                prop::sample::select(vec!["A", "B", "Go"]),
                prop::collection::vec(pick.clone(), 0..3)
            )
                .prop_map(|(n, args)| Process::Call(n.to_string(), args)),
        ];
        if depth == 0 {
            return leaf.boxed();
        }
        let with = |extra: Vec<String>| {
            let mut s = scope.clone();
            s.extend(extra);
            arb_process_impl(s, depth - 1)
        };
        let sub = arb_process_impl(scope.clone(), depth - 1);
        prop_oneof![
            2 => leaf,
            1 => (pick.clone(), with(vec![])).prop_map(|(x, b)| Process::Wait(x, Box::new(b))),
            1 => (pick.clone(), with(vec!["v1".into()]), with(vec!["v2".into()]))
                .prop_map(|(s, lb, rb)| Process::Fork {
                    subject: s,
                    left_binder: "v1".into(),
                    right_binder: "v2".into(),
                    left: Box::new(lb),
                    right: Box::new(rb),
                }),
            1 => (pick.clone(), with(vec!["v1".into(), "v2".into()])).prop_map(|(s, b)| Process::Join {
                subject: s,
                left_binder: "v1".into(),
                right_binder: "v2".into(),
                body: Box::new(b),
            }),
            1 => (pick.clone(), prop::bool::ANY, with(vec!["v1".into()])).prop_map(|(s, t, b)| Process::Select {
                subject: s,
                tag: if t { Tag::In1 } else { Tag::In2 },
                binder: "v1".into(),
                body: Box::new(b),
            }),
            1 => (pick.clone(), with(vec!["v1".into()]), with(vec!["v1".into()])).prop_map(|(s, l, r)| Process::Case {
                subject: s,
                binder: "v1".into(),
                labels: ["in1".into(), "in2".into()],
                left: Box::new(l),
                right: Box::new(r),
            }),
            1 => (pick.clone(), with(vec!["v1".into()])).prop_map(|(s, b)| Process::Rec {
                subject: s,
                binder: "v1".into(),
                body: Box::new(b),
            }),
            1 => (pick.clone(), with(vec!["v1".into()])).prop_map(|(s, b)| Process::Corec {
                subject: s,
                binder: "v1".into(),
                body: Box::new(b),
            }),
            1 => (arb_formula(2), with(vec!["v1".into()]), with(vec!["v1".into()])).prop_map(|(f, l, r)| Process::Cut {
                channel: "v1".into(),
                ann: f,
                left: Box::new(l),
                right: Box::new(r),
            }),
            1 => (sub.clone(), sub).prop_map(|(l, r)| Process::choice(l, r)),
        ]
        .boxed()
    }
}
