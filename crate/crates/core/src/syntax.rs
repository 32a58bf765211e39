//! Surface syntax: lexer, recursive-descent parser and printer.
//!
//! ```text
//! % comment              /* block comment */
//! pos(f("abc", "ab")).   neg(f([1,2], [])).
//! prim(head/2).          metarules(std).       interpreted([map, until]).
//! metarule(chain, [P,Q,R], P(A,B) :- Q(A,C), R(C,B)).
//! metarule(chain, [P,Q,R], ([P,A,B] :- [[Q,A,C],[R,C,B]])).
//! ibk(map(A,B,F) :- empty(A), empty(B)).
//! parent(ann, bob).      grandparent(A,B) :- parent(A,C), parent(C,B).
//! ```
//!
//! Identifiers start lowercase, variables uppercase or `_`. `"abc"` is a list
//! of characters, `0'a` a single character, `(a,b)` a tuple, `'Text'` a quoted
//! symbol. Negation is `not(Atom)` or `\+ Atom`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::logic::{Atom, Clause, GroundValue, PredSym, Term, VarId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Str(String),
    Quoted(String),
    Char(char),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Neck,
    Bar,
    Slash,
    NotOp,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Var(s) => write!(f, "variable `{s}`"),
            Tok::Int(v) => write!(f, "integer `{v}`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::Quoted(s) => write!(f, "quoted atom '{s}'"),
            Tok::Char(c) => write!(f, "character 0'{c}"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Neck => write!(f, "`:-`"),
            Tok::Bar => write!(f, "`|`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::NotOp => write!(f, "`\\+`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, line: usize, col: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) -> Result<(), ParseError> {
        loop {
            match self.chars.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('%') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('/') => {
                    let mut ahead = self.chars.clone();
                    ahead.next();
                    if ahead.peek() != Some(&'*') {
                        return Ok(());
                    }
                    let (line, col) = (self.line, self.col);
                    self.bump();
                    self.bump();
                    let mut prev = ' ';
                    loop {
                        match self.bump() {
                            Some('/') if prev == '*' => break,
                            Some(c) => prev = c,
                            None => return Err(self.err(line, col, "unterminated block comment")),
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn escape(&mut self, line: usize, col: usize) -> Result<char, ParseError> {
        match self.bump() {
            Some('n') => Ok('\n'),
            Some('t') => Ok('\t'),
            Some(c @ ('\\' | '\'' | '"')) => Ok(c),
            Some(c) => Err(self.err(line, col, format!("unknown escape `\\{c}`"))),
            None => Err(self.err(line, col, "unterminated escape")),
        }
    }

    fn quoted(&mut self, quote: char, line: usize, col: usize) -> Result<String, ParseError> {
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('\\') => out.push(self.escape(line, col)?),
                Some(c) if c == quote => return Ok(out),
                Some(c) => out.push(c),
                None => return Err(self.err(line, col, "unterminated quoted text")),
            }
        }
    }

    fn number(&mut self, first: char, negative: bool, line: usize, col: usize) -> Result<Tok, ParseError> {
        let mut text = String::new();
        if negative {
            text.push('-');
        }
        text.push(first);
        if first == '0' && self.chars.peek() == Some(&'\'') {
            self.bump();
            let c = match self.bump() {
                Some('\\') => self.escape(line, col)?,
                Some(c) => c,
                None => return Err(self.err(line, col, "unterminated character literal")),
            };
            return Ok(Tok::Char(c));
        }
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        text.parse::<i64>()
            .map(Tok::Int)
            .map_err(|_| self.err(line, col, format!("integer `{text}` out of range")))
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia()?;
            let (line, col) = (self.line, self.col);
            let Some(c) = self.bump() else {
                out.push(Spanned {
                    tok: Tok::Eof,
                    line,
                    col,
                });
                return Ok(out);
            };
            let tok = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ',' => Tok::Comma,
                '|' => Tok::Bar,
                '/' => Tok::Slash,
                '.' => Tok::Dot,
                ':' => {
                    if self.bump() == Some('-') {
                        Tok::Neck
                    } else {
                        return Err(self.err(line, col, "expected `:-`"));
                    }
                }
                '\\' => {
                    if self.bump() == Some('+') {
                        Tok::NotOp
                    } else {
                        return Err(self.err(line, col, "expected `\\+`"));
                    }
                }
                '"' => Tok::Str(self.quoted('"', line, col)?),
                '\'' => Tok::Quoted(self.quoted('\'', line, col)?),
                '-' => match self.chars.peek() {
                    Some(&d) if d.is_ascii_digit() => {
                        self.bump();
                        self.number(d, true, line, col)?
                    }
                    _ => return Err(self.err(line, col, "unexpected `-`")),
                },
                c if c.is_ascii_digit() => self.number(c, false, line, col)?,
                c if c.is_alphabetic() || c == '_' => {
                    let mut name = String::from(c);
                    while let Some(&n) = self.chars.peek() {
                        if n.is_alphanumeric() || n == '_' {
                            name.push(n);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    if c.is_uppercase() || c == '_' {
                        Tok::Var(name)
                    } else {
                        Tok::Ident(name)
                    }
                }
                c => return Err(self.err(line, col, format!("unexpected character `{c}`"))),
            };
            out.push(Spanned { tok, line, col });
        }
    }
}

/// Argument before variable kinds and predicate names are resolved.
#[derive(Debug, Clone, PartialEq)]
enum RawArg {
    Var(String),
    Ident(String),
    Value(GroundValue),
}

#[derive(Debug, Clone, PartialEq)]
enum RawPred {
    Var(String),
    Ident(String),
}

#[derive(Debug, Clone, PartialEq)]
struct RawAtom {
    pred: RawPred,
    args: Vec<RawArg>,
    negated: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct RawClause {
    head: RawAtom,
    body: Vec<RawAtom>,
}

/// Metarule as written, before kinds are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaruleDecl {
    pub name: String,
    pub existentials: Vec<String>,
    pub clause: Clause,
    /// Variable names in id order.
    pub var_names: Vec<String>,
}

/// Either `std` or an explicit list of names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Std,
    All,
    Names(Vec<String>),
}

/// One top-level directive or clause of a source file.
#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Pos(Atom),
    Neg(Atom),
    Prim(PredSym),
    Metarule(MetaruleDecl),
    Ibk(Clause),
    Clause(Clause),
    Task(String),
    Metarules(Selection),
    Interpreted(Selection),
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: Lexer::new(src).tokens()?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, message: impl Into<String>) -> ParseError {
        let s = &self.toks[self.pos];
        ParseError {
            line: s.line,
            col: s.col,
            message: message.into(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            Err(self.err_here(format!("expected {tok}, found {}", self.peek())))
        }
    }

    fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    /// Ground value, used inside lists and tuples.
    fn value(&mut self) -> Result<GroundValue, ParseError> {
        match self.parse_arg()? {
            RawArg::Value(v) => Ok(v),
            RawArg::Ident(s) => Ok(GroundValue::sym(&s)),
            RawArg::Var(v) => Err(self.err_here(format!(
                "variable `{v}` inside a structured value; clauses are function-free"
            ))),
        }
    }

    fn parse_arg(&mut self) -> Result<RawArg, ParseError> {
        match self.next() {
            Tok::Var(v) => Ok(RawArg::Var(v)),
            Tok::Int(i) => Ok(RawArg::Value(GroundValue::Int(i))),
            Tok::Char(c) => Ok(RawArg::Value(GroundValue::Char(c))),
            Tok::Str(s) => Ok(RawArg::Value(GroundValue::chars(&s))),
            Tok::Quoted(s) => Ok(RawArg::Value(GroundValue::sym(&s))),
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    return Err(self.err_here(format!(
                        "compound term `{name}(...)` in argument position; clauses are function-free"
                    )));
                }
                Ok(RawArg::Ident(name))
            }
            Tok::LBracket => {
                let mut items = Vec::new();
                if *self.peek() == Tok::RBracket {
                    self.next();
                    return Ok(RawArg::Value(GroundValue::list(items)));
                }
                loop {
                    items.push(self.value()?);
                    match self.next() {
                        Tok::Comma => continue,
                        Tok::RBracket => break,
                        Tok::Bar => return Err(self.err_here("list tails `|` are not supported in values")),
                        t => return Err(self.err_here(format!("expected `,` or `]`, found {t}"))),
                    }
                }
                Ok(RawArg::Value(GroundValue::list(items)))
            }
            Tok::LParen => {
                let mut items = vec![self.value()?];
                loop {
                    match self.next() {
                        Tok::Comma => items.push(self.value()?),
                        Tok::RParen => break,
                        t => return Err(self.err_here(format!("expected `,` or `)`, found {t}"))),
                    }
                }
                if items.len() < 2 {
                    return Err(self.err_here("tuples need at least two elements"));
                }
                Ok(RawArg::Value(GroundValue::tuple(items)))
            }
            t => Err(self.err_here(format!("expected a term, found {t}"))),
        }
    }

    fn args(&mut self) -> Result<Vec<RawArg>, ParseError> {
        let mut args = Vec::new();
        if *self.peek() != Tok::LParen {
            return Ok(args);
        }
        self.next();
        if *self.peek() == Tok::RParen {
            self.next();
            return Ok(args);
        }
        loop {
            args.push(self.parse_arg()?);
            match self.next() {
                Tok::Comma => continue,
                Tok::RParen => return Ok(args),
                t => return Err(self.err_here(format!("expected `,` or `)`, found {t}"))),
            }
        }
    }

    fn atom(&mut self) -> Result<RawAtom, ParseError> {
        match self.peek().clone() {
            Tok::NotOp => {
                self.next();
                let mut a = self.atom()?;
                a.negated = !a.negated;
                Ok(a)
            }
            Tok::Ident(name) if name == "not" && *self.peek_at(1) == Tok::LParen => {
                self.next();
                self.next();
                let mut a = self.atom()?;
                self.expect(Tok::RParen)?;
                a.negated = !a.negated;
                Ok(a)
            }
            Tok::Ident(name) => {
                self.next();
                Ok(RawAtom {
                    pred: RawPred::Ident(name),
                    args: self.args()?,
                    negated: false,
                })
            }
            Tok::Var(name) => {
                self.next();
                Ok(RawAtom {
                    pred: RawPred::Var(name),
                    args: self.args()?,
                    negated: false,
                })
            }
            Tok::LBracket => self.list_atom(),
            t => Err(self.err_here(format!("expected an atom, found {t}"))),
        }
    }

    /// `[P,A,B]` list-encoded atom.
    fn list_atom(&mut self) -> Result<RawAtom, ParseError> {
        self.expect(Tok::LBracket)?;
        let pred = match self.next() {
            Tok::Var(v) => RawPred::Var(v),
            Tok::Ident(i) => RawPred::Ident(i),
            t => return Err(self.err_here(format!("expected predicate, found {t}"))),
        };
        let mut args = Vec::new();
        loop {
            match self.next() {
                Tok::Comma => args.push(self.parse_arg()?),
                Tok::RBracket => break,
                t => return Err(self.err_here(format!("expected `,` or `]`, found {t}"))),
            }
        }
        Ok(RawAtom {
            pred,
            args,
            negated: false,
        })
    }

    fn body(&mut self) -> Result<Vec<RawAtom>, ParseError> {
        if *self.peek() == Tok::LBracket && matches!(self.peek_at(1), Tok::LBracket | Tok::RBracket) {
            self.next();
            let mut body = Vec::new();
            if *self.peek() == Tok::RBracket {
                self.next();
                return Ok(body);
            }
            loop {
                body.push(self.list_atom()?);
                match self.next() {
                    Tok::Comma => continue,
                    Tok::RBracket => return Ok(body),
                    t => return Err(self.err_here(format!("expected `,` or `]`, found {t}"))),
                }
            }
        }
        let mut body = vec![self.atom()?];
        while *self.peek() == Tok::Comma {
            self.next();
            body.push(self.atom()?);
        }
        Ok(body)
    }

    fn raw_clause(&mut self) -> Result<RawClause, ParseError> {
        let parenthesised = *self.peek() == Tok::LParen;
        if parenthesised {
            self.next();
        }
        let head = self.atom()?;
        if head.negated {
            return Err(self.err_here("a clause head cannot be negated"));
        }
        let body = if *self.peek() == Tok::Neck {
            self.next();
            self.body()?
        } else {
            vec![]
        };
        if parenthesised {
            self.expect(Tok::RParen)?;
        }
        Ok(RawClause { head, body })
    }

    fn pred_indicator(&mut self) -> Result<PredSym, ParseError> {
        let name = match self.next() {
            Tok::Ident(n) => n,
            t => return Err(self.err_here(format!("expected predicate name, found {t}"))),
        };
        self.expect(Tok::Slash)?;
        match self.next() {
            Tok::Int(a) if a >= 0 => Ok(PredSym::new(&name, a as usize)),
            t => Err(self.err_here(format!("expected arity, found {t}"))),
        }
    }

    fn selection(&mut self) -> Result<Selection, ParseError> {
        match self.next() {
            Tok::Ident(s) if s == "std" => Ok(Selection::Std),
            Tok::Ident(s) if s == "all" => Ok(Selection::All),
            Tok::LBracket => {
                let mut names = Vec::new();
                if *self.peek() == Tok::RBracket {
                    self.next();
                    return Ok(Selection::Names(names));
                }
                loop {
                    match self.next() {
                        Tok::Ident(n) => names.push(n),
                        t => return Err(self.err_here(format!("expected a name, found {t}"))),
                    }
                    if *self.peek() == Tok::Slash {
                        self.next();
                        self.next();
                    }
                    match self.next() {
                        Tok::Comma => continue,
                        Tok::RBracket => return Ok(Selection::Names(names)),
                        t => return Err(self.err_here(format!("expected `,` or `]`, found {t}"))),
                    }
                }
            }
            t => Err(self.err_here(format!("expected `std`, `all` or a list, found {t}"))),
        }
    }

    fn example(&mut self) -> Result<Atom, ParseError> {
        let raw = self.atom()?;
        if raw.negated {
            return Err(self.err_here("examples cannot be negated"));
        }
        let (atom, _) = lower_atoms(&[raw], &[], &HashMap::new());
        let atom = atom.into_iter().next().unwrap();
        if !atom.is_ground() {
            return Err(self.err_here("examples must be ground"));
        }
        Ok(atom)
    }

    fn item(&mut self) -> Result<Item, ParseError> {
        let start = self.pos;
        if let (Tok::Ident(name), Tok::LParen) = (self.peek().clone(), self.peek_at(1).clone()) {
            let directive = match name.as_str() {
                "pos" | "neg" | "prim" | "metarule" | "ibk" | "task" | "metarules" | "interpreted" => Some(name),
                _ => None,
            };
            if let Some(d) = directive {
                self.next();
                self.next();
                let item = match d.as_str() {
                    "pos" => Item::Pos(self.example()?),
                    "neg" => Item::Neg(self.example()?),
                    "prim" => Item::Prim(self.pred_indicator()?),
                    "task" => match self.next() {
                        Tok::Ident(n) => Item::Task(n),
                        t => return Err(self.err_here(format!("expected task name, found {t}"))),
                    },
                    "metarules" => Item::Metarules(self.selection()?),
                    "interpreted" => Item::Interpreted(self.selection()?),
                    "ibk" => {
                        let raw = self.raw_clause()?;
                        let (clause, _) = lower_clause(&raw, &[], &HashMap::new());
                        Item::Ibk(clause)
                    }
                    "metarule" => {
                        let name = match self.next() {
                            Tok::Ident(n) => n,
                            t => return Err(self.err_here(format!("expected metarule name, found {t}"))),
                        };
                        self.expect(Tok::Comma)?;
                        self.expect(Tok::LBracket)?;
                        let mut existentials = Vec::new();
                        if *self.peek() != Tok::RBracket {
                            loop {
                                match self.next() {
                                    Tok::Var(v) => existentials.push(v),
                                    t => {
                                        return Err(
                                            self.err_here(format!("expected an existential variable, found {t}"))
                                        )
                                    }
                                }
                                match self.peek() {
                                    Tok::Comma => {
                                        self.next();
                                    }
                                    _ => break,
                                }
                            }
                        }
                        self.expect(Tok::RBracket)?;
                        self.expect(Tok::Comma)?;
                        let raw = self.raw_clause()?;
                        let (clause, var_names) = lower_clause(&raw, &existentials, &HashMap::new());
                        Item::Metarule(MetaruleDecl {
                            name,
                            existentials,
                            clause,
                            var_names,
                        })
                    }
                    _ => unreachable!(),
                };
                self.expect(Tok::RParen)?;
                self.expect(Tok::Dot)?;
                return Ok(item);
            }
        }
        self.pos = start;
        let raw = self.raw_clause()?;
        self.expect(Tok::Dot)?;
        let (clause, _) = lower_clause(&raw, &[], &HashMap::new());
        Ok(Item::Clause(clause))
    }
}

/// Assign variable ids and kinds. Variables used as a predicate, or listed in
/// `ho_hint`, become higher-order; identifiers naming entries of `preds` in
/// argument position become predicate symbols.
fn lower_atoms(atoms: &[RawAtom], ho_hint: &[String], preds: &HashMap<String, usize>) -> (Vec<Atom>, Vec<String>) {
    let mut names: Vec<String> = Vec::new();
    let mut ho: Vec<String> = ho_hint.to_vec();
    for a in atoms {
        if let RawPred::Var(v) = &a.pred {
            ho.push(v.clone());
        }
    }
    let id_of = |name: &str, names: &mut Vec<String>| -> VarId {
        match names.iter().position(|n| n == name) {
            Some(i) => VarId(i as u32),
            None => {
                names.push(name.to_string());
                VarId(names.len() as u32 - 1)
            }
        }
    };
    let mut out = Vec::new();
    for a in atoms {
        let arity = a.args.len();
        let pred = match &a.pred {
            RawPred::Var(v) => Term::HoVar(id_of(v, &mut names)),
            RawPred::Ident(i) => Term::Pred(PredSym::new(i, arity)),
        };
        let args = a
            .args
            .iter()
            .map(|arg| match arg {
                RawArg::Var(v) => {
                    let id = if v == "_" {
                        let fresh = format!("_{}", names.len());
                        names.push(fresh);
                        VarId(names.len() as u32 - 1)
                    } else {
                        id_of(v, &mut names)
                    };
                    if ho.contains(v) {
                        Term::HoVar(id)
                    } else {
                        Term::FoVar(id)
                    }
                }
                RawArg::Ident(i) => match preds.get(i) {
                    Some(&ar) => Term::Pred(PredSym::new(i, ar)),
                    None => Term::Value(GroundValue::sym(i)),
                },
                RawArg::Value(v) => Term::Value(v.clone()),
            })
            .collect();
        out.push(Atom {
            pred,
            args,
            negated: a.negated,
        });
    }
    (out, names)
}

fn lower_clause(raw: &RawClause, ho_hint: &[String], preds: &HashMap<String, usize>) -> (Clause, Vec<String>) {
    let mut all = vec![raw.head.clone()];
    all.extend(raw.body.iter().cloned());
    let (mut atoms, names) = lower_atoms(&all, ho_hint, preds);
    let body = atoms.split_off(1);
    (Clause::new(atoms.pop().unwrap(), body), names)
}

/// Parse a whole source file into items.
pub fn parse_document(src: &str) -> Result<Vec<Item>, ParseError> {
    let mut p = Parser::new(src)?;
    let mut items = Vec::new();
    while !p.at_eof() {
        items.push(p.item()?);
    }
    Ok(items)
}

/// Parse a single atom, e.g. `f([1,2],[2])`. A trailing `.` is optional.
pub fn parse_atom(src: &str) -> Result<Atom, ParseError> {
    let mut p = Parser::new(src)?;
    let raw = p.atom()?;
    if *p.peek() == Tok::Dot {
        p.next();
    }
    if !p.at_eof() {
        return Err(p.err_here(format!("unexpected {} after atom", p.peek())));
    }
    let (atoms, _) = lower_atoms(&[raw], &[], &HashMap::new());
    Ok(atoms.into_iter().next().unwrap())
}

/// Parse a single clause. A trailing `.` is optional.
pub fn parse_clause(src: &str) -> Result<Clause, ParseError> {
    let mut p = Parser::new(src)?;
    let raw = p.raw_clause()?;
    if *p.peek() == Tok::Dot {
        p.next();
    }
    if !p.at_eof() {
        return Err(p.err_here(format!("unexpected {} after clause", p.peek())));
    }
    Ok(lower_clause(&raw, &[], &HashMap::new()).0)
}

/// Parse clauses, turning identifiers that name a clause head or a member of
/// `known` into predicate symbols when they occur as arguments.
pub fn parse_clauses(src: &str, known: &[PredSym]) -> Result<Vec<Clause>, ParseError> {
    let mut p = Parser::new(src)?;
    let mut raws = Vec::new();
    while !p.at_eof() {
        raws.push(p.raw_clause()?);
        p.expect(Tok::Dot)?;
    }
    let mut preds: HashMap<String, usize> = known.iter().map(|s| (s.name.to_string(), s.arity)).collect();
    for r in &raws {
        if let RawPred::Ident(n) = &r.head.pred {
            preds.insert(n.clone(), r.head.args.len());
        }
    }
    Ok(raws.iter().map(|r| lower_clause(r, &[], &preds).0).collect())
}

/// Re-resolve symbol arguments that name predicates in `known`.
pub fn resolve_pred_args(clause: &Clause, known: &[PredSym]) -> Clause {
    let fix = |a: &Atom| Atom {
        pred: a.pred.clone(),
        args: a
            .args
            .iter()
            .map(|t| match t {
                Term::Value(GroundValue::Symbol(s)) => known
                    .iter()
                    .find(|p| &p.name == s)
                    .map(|p| Term::Pred(p.clone()))
                    .unwrap_or_else(|| t.clone()),
                t => t.clone(),
            })
            .collect(),
        negated: a.negated,
    };
    Clause::new(fix(&clause.head), clause.body.iter().map(fix).collect())
}

fn letter_name(base: &[char], i: usize) -> String {
    let c = base[i % base.len()];
    let round = i / base.len();
    if round == 0 {
        c.to_string()
    } else {
        format!("{c}{round}")
    }
}

const FO_LETTERS: [char; 14] = ['A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N'];
const HO_LETTERS: [char; 10] = ['P', 'Q', 'R', 'S', 'T', 'U', 'V', 'W', 'X', 'Y'];

/// Letter names for the variables of a clause: `A, B, ...` for first-order and
/// `P, Q, ...` for higher-order, in order of first occurrence.
pub fn clause_var_names(clause: &Clause) -> HashMap<VarId, String> {
    let mut names = HashMap::new();
    let (mut fo, mut ho) = (0, 0);
    for t in clause.terms() {
        match t {
            Term::FoVar(v) if !names.contains_key(v) => {
                names.insert(*v, letter_name(&FO_LETTERS, fo));
                fo += 1;
            }
            Term::HoVar(v) if !names.contains_key(v) => {
                names.insert(*v, letter_name(&HO_LETTERS, ho));
                ho += 1;
            }
            _ => {}
        }
    }
    names
}

fn term_text(t: &Term, names: &HashMap<VarId, String>) -> String {
    match t {
        Term::FoVar(v) | Term::HoVar(v) => names.get(v).cloned().unwrap_or_else(|| format!("_G{}", v.0)),
        Term::Value(v) => v.to_string(),
        Term::Pred(p) => p.name.to_string(),
    }
}

fn atom_text(a: &Atom, names: &HashMap<VarId, String>) -> String {
    let mut s = term_text(&a.pred, names);
    if !a.args.is_empty() {
        s.push('(');
        for (i, t) in a.args.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&term_text(t, names));
        }
        s.push(')');
    }
    if a.negated {
        format!("not({s})")
    } else {
        s
    }
}

/// Print an atom with its variables lettered independently.
pub fn print_atom(a: &Atom) -> String {
    let c = Clause::fact(a.clone());
    atom_text(a, &clause_var_names(&c))
}

/// Print a clause, without the terminating `.`.
pub fn print_clause_body(c: &Clause) -> String {
    let names = clause_var_names(c);
    let mut s = atom_text(&c.head, &names);
    if !c.body.is_empty() {
        s.push_str(":-");
        for (i, a) in c.body.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&atom_text(a, &names));
        }
    }
    s
}

/// Print a clause as `head:-body.`.
pub fn print_clause(c: &Clause) -> String {
    format!("{}.", print_clause_body(c))
}

/// Print clauses one per line; an empty slice prints as the empty string.
pub fn print_clauses(cs: &[Clause]) -> String {
    cs.iter().map(|c| format!("{}\n", print_clause(c))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_examples_with_strings_and_tuples() {
        let items =
            parse_document("% waiter\npos(f((0,[(0,down,none,tea)]), (1,[(0,up,tea,tea)]))).\nneg(f(\"ab\", [])).")
                .unwrap();
        assert_eq!(items.len(), 2);
        let Item::Neg(a) = &items[1] else { panic!() };
        assert_eq!(a.args[0], Term::Value(GroundValue::chars("ab")));
        assert!(matches!(&items[0], Item::Pos(a) if a.is_ground()));
    }

    #[test]
    fn metarule_forms_agree() {
        let a = parse_document("metarule(chain,[P,Q,R],P(A,B):-Q(A,C),R(C,B)).").unwrap();
        let b = parse_document("metarule(chain,[P,Q,R],([P,A,B]:-[[Q,A,C],[R,C,B]])).").unwrap();
        assert_eq!(a, b);
        let Item::Metarule(m) = &a[0] else { panic!() };
        assert_eq!(m.clause.body.len(), 2);
        assert!(matches!(m.clause.head.pred, Term::HoVar(_)));
    }

    #[test]
    fn curry_existential_in_argument_is_higher_order() {
        let a = parse_document("metarule(curry1,[P,Q,R],P(A,B):-Q(A,B,R)).").unwrap();
        let Item::Metarule(m) = &a[0] else { panic!() };
        assert!(matches!(m.clause.body[0].args[2], Term::HoVar(_)));
        assert!(matches!(m.clause.body[0].args[0], Term::FoVar(_)));
    }

    #[test]
    fn negation_forms() {
        let c = parse_clause("until(A,B,C,F) :- not(C(A)), F(A,D), \\+ p(D)").unwrap();
        assert!(c.body[0].negated);
        assert!(!c.body[1].negated);
        assert!(c.body[2].negated);
        assert!(matches!(c.body[0].pred, Term::HoVar(_)));
        assert!(matches!(c.head.args[2], Term::HoVar(_)));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_document("pos(f(a,b)).\npos(f(a,").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_document("pos(f(X,b)).").unwrap_err();
        assert!(e.message.contains("ground"));
        let e = parse_document("p(a) :- q(g(a)).").unwrap_err();
        assert!(e.message.contains("function-free"));
    }

    #[test]
    fn program_round_trip_resolves_invented_symbols() {
        let text = "f(A,B):-map(A,B,f_1).\nf_1(A,B):-succ(A,B).\n";
        let known = [PredSym::new("map", 3), PredSym::new("succ", 2)];
        let cs = parse_clauses(text, &known).unwrap();
        assert_eq!(cs[0].body[0].args[2], Term::Pred(PredSym::new("f_1", 2)));
        assert_eq!(print_clauses(&cs), text);
        assert_eq!(print_clauses(&[]), "");
    }

    #[test]
    fn char_literals_and_negative_ints() {
        let a = parse_atom("p(0'a, -3, 'Hi')").unwrap();
        assert_eq!(a.args[0], Term::Value(GroundValue::Char('a')));
        assert_eq!(a.args[1], Term::Value(GroundValue::Int(-3)));
        assert_eq!(a.args[2], Term::Value(GroundValue::sym("Hi")));
    }

    #[test]
    fn selections() {
        let items =
            parse_document("metarules(std). interpreted([map/3, until]). prim(head/2). task(droplast).").unwrap();
        assert_eq!(items[0], Item::Metarules(Selection::Std));
        assert_eq!(
            items[1],
            Item::Interpreted(Selection::Names(vec!["map".into(), "until".into()]))
        );
        assert_eq!(items[2], Item::Prim(PredSym::new("head", 2)));
        assert_eq!(items[3], Item::Task("droplast".into()));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_value() -> impl Strategy<Value = GroundValue> {
            let leaf = prop_oneof![
                (-50i64..50).prop_map(GroundValue::Int),
                prop::sample::select(vec!["a", "tea", "Up", "x y"]).prop_map(GroundValue::sym),
                prop::sample::select(vec!['a', 'z', '\'', '"', ' ']).prop_map(GroundValue::Char),
            ];
            leaf.prop_recursive(3, 16, 4, |inner| {
                prop_oneof![
                    prop::collection::vec(inner.clone(), 0..4).prop_map(GroundValue::list),
                    prop::collection::vec(inner, 2..4).prop_map(GroundValue::tuple),
                ]
            })
        }

        proptest! {
            #[test]
            fn values_round_trip(vs in prop::collection::vec(arb_value(), 0..4)) {
                let a = Atom::fact("p", vs);
                let text = print_atom(&a);
                prop_assert_eq!(parse_atom(&text).unwrap(), a);
            }
        }
    }
}
