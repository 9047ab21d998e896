//! The formula language: existential set quantifiers (partition, connected, forest, free)
//! over a conjunction of six guarded clause shapes whose matrices are in CNF.
//!
//! ```text
//! formula    := (statement (';' statement)*)? ';'?
//! statement  := 'partition' IDENT (',' IDENT)*
//!             | 'connected' IDENT | 'forest' IDENT | 'free' IDENT (',' IDENT)*
//!             | 'exists' IDENT                      -- sugar for partition X, ~X
//!             | 'minimize' | 'maximize'
//!             | clause
//! clause     := 'forall' VAR 'forall' VAR guard '->' matrix
//!             | 'forall' VAR 'exists' VAR guard '&' matrix
//!             | 'exists' VAR 'forall' VAR guard '->' matrix
//!             | 'exists' VAR 'exists' VAR guard '&' matrix
//!             | ('forall' | 'exists') VAR matrix
//! guard      := 'edge' | 'E' '(' VAR ',' VAR ')'
//! matrix     := item ('&' item)* | literal ('|' literal)*
//! item       := '(' literal ('|' literal)* ')' | literal
//! literal    := '!'? IDENT '(' VAR ')' | VAR '=' VAR | VAR '!=' VAR
//! ```
//!
//! Comments run from `#` or `//` to the end of the line.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Quantifier {
    Partition(Vec<String>),
    Connected(String),
    Forest(String),
    Free(String),
}

impl Quantifier {
    pub fn names(&self) -> Vec<&str> {
        match self {
            Quantifier::Partition(classes) => classes.iter().map(String::as_str).collect(),
            Quantifier::Connected(n) | Quantifier::Forest(n) | Quantifier::Free(n) => vec![n],
        }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, Quantifier::Partition(_) | Quantifier::Free(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Objective {
    #[default]
    Decide,
    Minimize,
    Maximize,
}

/// The two first-order variables a clause binds, in binding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FoVar {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Atom {
    Member { set: String, var: FoVar },
    Equal(FoVar, FoVar),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Literal {
    pub positive: bool,
    pub atom: Atom,
}

/// Conjunction of disjunctions of literals.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Cnf(pub Vec<Vec<Literal>>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Shape {
    /// forall x forall y. E(x,y) -> chi
    AllAllEdge,
    /// forall x exists y. E(x,y) & chi
    AllExistsEdge,
    /// exists x forall y. E(x,y) -> chi
    ExistsAllEdge,
    /// exists x exists y. E(x,y) & chi
    ExistsExistsEdge,
    /// forall x. chi
    AllVertex,
    /// exists x. chi
    ExistsVertex,
}

impl Shape {
    pub fn is_edge(self) -> bool {
        !matches!(self, Shape::AllVertex | Shape::ExistsVertex)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clause {
    pub shape: Shape,
    pub matrix: Cnf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Formula {
    pub prefix: Vec<Quantifier>,
    pub objective: Objective,
    pub clauses: Vec<Clause>,
}

impl Formula {
    /// Every set name in declaration order.
    pub fn set_names(&self) -> Vec<&str> {
        self.prefix.iter().flat_map(|q| q.names()).collect()
    }

    pub fn free_variables(&self) -> Vec<&str> {
        self.prefix
            .iter()
            .filter_map(|q| match q {
                Quantifier::Free(n) => Some(n.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// Atom with its set name resolved to a bit position in [`Formula::set_names`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompiledAtom {
    Member(u32, FoVar),
    Equal(FoVar, FoVar),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledClause {
    pub shape: Shape,
    pub cnf: Vec<Vec<(bool, CompiledAtom)>>,
}

impl CompiledClause {
    /// Evaluates the matrix. `mx` and `my` are membership masks of x and y; `same` says
    /// whether x and y denote the same vertex.
    pub fn holds(&self, mx: u64, my: u64, same: bool) -> bool {
        self.cnf.iter().all(|disj| {
            disj.iter().any(|&(positive, atom)| {
                let value = match atom {
                    CompiledAtom::Member(set, FoVar::X) => mx >> set & 1 == 1,
                    CompiledAtom::Member(set, FoVar::Y) => my >> set & 1 == 1,
                    CompiledAtom::Equal(a, b) => a == b || same,
                };
                value == positive
            })
        })
    }
}

impl Formula {
    pub fn compile_clauses(&self) -> Vec<CompiledClause> {
        let names = self.set_names();
        let index = |set: &str| names.iter().position(|n| *n == set).expect("validated") as u32;
        self.clauses
            .iter()
            .map(|c| CompiledClause {
                shape: c.shape,
                cnf: c
                    .matrix
                    .0
                    .iter()
                    .map(|disj| {
                        disj.iter()
                            .map(|lit| {
                                let atom = match &lit.atom {
                                    Atom::Member { set, var } => {
                                        CompiledAtom::Member(index(set), *var)
                                    }
                                    Atom::Equal(a, b) => CompiledAtom::Equal(*a, *b),
                                };
                                (lit.positive, atom)
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    NonCnf,
    Undeclared,
    NotInFragment,
    Duplicate,
    NonUnary,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}{message}", location(*.line, *.column))]
pub struct FormulaError {
    pub kind: ErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

fn location(line: usize, column: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("{line}:{column}: ")
    }
}

impl FormulaError {
    fn semantic(kind: ErrorKind, message: impl Into<String>) -> Self {
        FormulaError {
            kind,
            line: 0,
            column: 0,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Semi,
    Amp,
    Pipe,
    Bang,
    Eq,
    Neq,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Amp => f.write_str("`&`"),
            Tok::Pipe => f.write_str("`|`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Neq => f.write_str("`!=`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, FormulaError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let next = chars.get(i + 1).copied();
            let push = |tok, out: &mut Vec<Spanned>| {
                out.push(Spanned {
                    tok,
                    line: li + 1,
                    column,
                })
            };
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '#' || (c == '/' && next == Some('/')) {
                break;
            }
            if c.is_alphabetic() || c == '_' || c == '~' {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                push(Tok::Ident(chars[start..i].iter().collect()), &mut out);
                continue;
            }
            let (tok, len) = match (c, next) {
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                (',', _) => (Tok::Comma, 1),
                (';', _) => (Tok::Semi, 1),
                ('&', Some('&')) => (Tok::Amp, 2),
                ('&', _) => (Tok::Amp, 1),
                ('|', Some('|')) => (Tok::Pipe, 2),
                ('|', _) => (Tok::Pipe, 1),
                ('!', Some('=')) => (Tok::Neq, 2),
                ('!', _) | ('~', _) => (Tok::Bang, 1),
                ('=', _) => (Tok::Eq, 1),
                ('-', Some('>')) => (Tok::Arrow, 2),
                _ => {
                    return Err(FormulaError {
                        kind: ErrorKind::Syntax,
                        line: li + 1,
                        column,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            push(tok, &mut out);
            i += len;
        }
    }
    let line = text.lines().count().max(1);
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: text.lines().last().map_or(1, |l| l.chars().count() + 1),
    });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "partition",
    "connected",
    "forest",
    "free",
    "exists",
    "forall",
    "minimize",
    "maximize",
    "edge",
    "E",
];

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, kind: ErrorKind, message: impl Into<String>) -> FormulaError {
        let s = &self.toks[self.pos];
        FormulaError {
            kind,
            line: s.line,
            column: s.column,
            message: message.into(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), FormulaError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(
                ErrorKind::Syntax,
                format!("expected {tok}, found {}", self.peek()),
            ))
        }
    }

    fn ident(&mut self) -> Result<String, FormulaError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error(
                ErrorKind::Syntax,
                format!("expected an identifier, found {other}"),
            )),
        }
    }

    fn set_name(&mut self) -> Result<String, FormulaError> {
        let name = self.ident()?;
        if KEYWORDS.contains(&name.as_str()) || name.starts_with('~') {
            self.pos -= 1;
            return Err(self.error(
                ErrorKind::Syntax,
                format!("`{name}` cannot be used as a set name"),
            ));
        }
        Ok(name)
    }

    fn name_list(&mut self) -> Result<Vec<String>, FormulaError> {
        let mut names = vec![self.set_name()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            names.push(self.set_name()?);
        }
        Ok(names)
    }

    fn is_keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        let mut f = Formula::default();
        let mut objective_set = false;
        loop {
            while *self.peek() == Tok::Semi {
                self.bump();
            }
            if *self.peek() == Tok::Eof {
                break;
            }
            let word = match self.peek() {
                Tok::Ident(s) => s.clone(),
                other => {
                    return Err(self.error(
                        ErrorKind::Syntax,
                        format!("expected a statement, found {other}"),
                    ))
                }
            };
            match word.as_str() {
                "partition" => {
                    self.bump();
                    f.prefix.push(Quantifier::Partition(self.name_list()?));
                }
                "connected" => {
                    self.bump();
                    f.prefix.push(Quantifier::Connected(self.set_name()?));
                }
                "forest" => {
                    self.bump();
                    f.prefix.push(Quantifier::Forest(self.set_name()?));
                }
                "free" => {
                    self.bump();
                    for n in self.name_list()? {
                        f.prefix.push(Quantifier::Free(n));
                    }
                }
                "minimize" | "maximize" => {
                    if objective_set {
                        return Err(self.error(ErrorKind::Duplicate, "objective given twice"));
                    }
                    self.bump();
                    objective_set = true;
                    f.objective = if word == "minimize" {
                        Objective::Minimize
                    } else {
                        Objective::Maximize
                    };
                }
                "exists"
                    if matches!(self.peek_at(1), Tok::Ident(_))
                        && matches!(self.peek_at(2), Tok::Semi | Tok::Eof) =>
                {
                    self.bump();
                    let name = self.set_name()?;
                    let complement = format!("~{name}");
                    f.prefix.push(Quantifier::Partition(vec![name, complement]));
                }
                "exists" | "forall" => f.clauses.push(self.clause()?),
                other => {
                    return Err(
                        self.error(ErrorKind::Syntax, format!("unknown statement `{other}`"))
                    )
                }
            }
            match self.peek() {
                Tok::Semi => {
                    self.bump();
                }
                Tok::Eof => break,
                other => {
                    return Err(
                        self.error(ErrorKind::Syntax, format!("expected `;`, found {other}"))
                    )
                }
            }
        }
        Ok(f)
    }

    fn clause(&mut self) -> Result<Clause, FormulaError> {
        let mut binders: Vec<(bool, String)> = Vec::new();
        while self.is_keyword("forall") || self.is_keyword("exists") {
            let universal = self.is_keyword("forall");
            self.bump();
            let var = self.ident()?;
            if binders.iter().any(|(_, v)| *v == var) {
                self.pos -= 1;
                return Err(self.error(ErrorKind::Duplicate, format!("`{var}` bound twice")));
            }
            binders.push((universal, var));
        }
        if binders.len() > 2 {
            return Err(self.error(
                ErrorKind::NotInFragment,
                "clauses bind at most two first-order variables",
            ));
        }
        let vars: Vec<String> = binders.iter().map(|(_, v)| v.clone()).collect();
        if binders.len() == 1 {
            let shape = if binders[0].0 {
                Shape::AllVertex
            } else {
                Shape::ExistsVertex
            };
            let matrix = self.matrix(&vars)?;
            return Ok(Clause { shape, matrix });
        }
        // guard
        if self.is_keyword("edge") {
            self.bump();
        } else if self.is_keyword("E") {
            self.bump();
            self.expect(Tok::LParen)?;
            let a = self.ident()?;
            self.expect(Tok::Comma)?;
            let b = self.ident()?;
            self.expect(Tok::RParen)?;
            let mut pair = [a, b];
            pair.sort();
            let mut bound = vars.clone();
            bound.sort();
            if pair != *bound {
                return Err(self.error(
                    ErrorKind::NotInFragment,
                    "edge guard must relate the two bound variables",
                ));
            }
        } else {
            return Err(self.error(
                ErrorKind::NotInFragment,
                "two-variable clauses must be guarded by `edge`",
            ));
        }
        let connective = self.bump();
        let shape = match (binders[0].0, binders[1].0, &connective) {
            (true, true, Tok::Arrow) => Shape::AllAllEdge,
            (true, false, Tok::Amp) => Shape::AllExistsEdge,
            (false, true, Tok::Arrow) => Shape::ExistsAllEdge,
            (false, false, Tok::Amp) => Shape::ExistsExistsEdge,
            (_, _, Tok::Arrow | Tok::Amp) => {
                self.pos -= 1;
                return Err(self.error(
                    ErrorKind::NotInFragment,
                    "universal y needs `edge ->`, existential y needs `edge &`",
                ));
            }
            (_, _, other) => {
                self.pos -= 1;
                return Err(self.error(
                    ErrorKind::Syntax,
                    format!("expected `->` or `&` after the guard, found {other}"),
                ));
            }
        };
        let matrix = self.matrix(&vars)?;
        Ok(Clause { shape, matrix })
    }

    fn matrix(&mut self, vars: &[String]) -> Result<Cnf, FormulaError> {
        let mut clauses = Vec::new();
        let mut bare_disjunction = false;
        loop {
            if *self.peek() == Tok::LParen {
                self.bump();
                let mut disj = vec![self.literal(vars)?];
                loop {
                    match self.peek() {
                        Tok::Pipe => {
                            self.bump();
                            disj.push(self.literal(vars)?);
                        }
                        Tok::RParen => {
                            self.bump();
                            break;
                        }
                        Tok::Amp => {
                            return Err(self.error(
                                ErrorKind::NonCnf,
                                "conjunction inside a disjunction; matrices must be in CNF",
                            ))
                        }
                        other => {
                            return Err(self.error(
                                ErrorKind::Syntax,
                                format!("expected `|` or `)`, found {other}"),
                            ))
                        }
                    }
                }
                clauses.push(disj);
            } else {
                let lit = self.literal(vars)?;
                if *self.peek() == Tok::Pipe {
                    if !clauses.is_empty() {
                        return Err(self.error(
                            ErrorKind::NonCnf,
                            "parenthesize disjunctions when combining them with `&`",
                        ));
                    }
                    let mut disj = vec![lit];
                    while *self.peek() == Tok::Pipe {
                        self.bump();
                        disj.push(self.literal(vars)?);
                    }
                    clauses.push(disj);
                    bare_disjunction = true;
                } else {
                    clauses.push(vec![lit]);
                }
            }
            match self.peek() {
                Tok::Amp if bare_disjunction => {
                    return Err(self.error(
                        ErrorKind::NonCnf,
                        "parenthesize disjunctions when combining them with `&`",
                    ))
                }
                Tok::Amp => {
                    self.bump();
                }
                Tok::Pipe => {
                    return Err(self.error(
                        ErrorKind::NonCnf,
                        "disjunction of conjunctions; matrices must be in CNF",
                    ))
                }
                _ => break,
            }
        }
        Ok(Cnf(clauses))
    }

    fn fo_var(&mut self, vars: &[String]) -> Result<FoVar, FormulaError> {
        let name = self.ident()?;
        match vars.iter().position(|v| *v == name) {
            Some(0) => Ok(FoVar::X),
            Some(_) => Ok(FoVar::Y),
            None => {
                self.pos -= 1;
                Err(self.error(
                    ErrorKind::Undeclared,
                    format!("`{name}` is not a bound first-order variable"),
                ))
            }
        }
    }

    fn literal(&mut self, vars: &[String]) -> Result<Literal, FormulaError> {
        let mut positive = true;
        while *self.peek() == Tok::Bang {
            self.bump();
            positive = !positive;
        }
        match (self.peek().clone(), self.peek_at(1).clone()) {
            (Tok::LParen, _) => Err(self.error(
                ErrorKind::NonCnf,
                "negation applies to atoms only; matrices must be in CNF",
            )),
            (Tok::Ident(name), Tok::LParen) => {
                if name == "E" || name == "edge" {
                    return Err(self.error(
                        ErrorKind::NotInFragment,
                        "the edge relation may only appear as the clause guard",
                    ));
                }
                self.bump();
                self.bump();
                let var = self.fo_var(vars)?;
                if *self.peek() == Tok::Comma {
                    return Err(self.error(
                        ErrorKind::NonUnary,
                        format!("set variable `{name}` is unary"),
                    ));
                }
                self.expect(Tok::RParen)?;
                Ok(Literal {
                    positive,
                    atom: Atom::Member { set: name, var },
                })
            }
            (Tok::Ident(_), Tok::Eq | Tok::Neq) => {
                let a = self.fo_var(vars)?;
                let negated = self.bump() == Tok::Neq;
                let b = self.fo_var(vars)?;
                Ok(Literal {
                    positive: positive != negated,
                    atom: Atom::Equal(a, b),
                })
            }
            (other, _) => Err(self.error(
                ErrorKind::Syntax,
                format!("expected a literal, found {other}"),
            )),
        }
    }
}

/// Parses and validates formula source text.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let mut parser = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let f = parser.formula()?;
    validate_fragment(f)
}

/// Upper bound on distinct set names, so a vertex's memberships fit one `u64`.
pub const MAX_SETS: usize = 64;

/// Semantic checks: unique declarations, declared atoms, single-variable vertex clauses.
pub fn validate_fragment(f: Formula) -> Result<Formula, FormulaError> {
    let mut declared = HashSet::new();
    for q in &f.prefix {
        if let Quantifier::Partition(classes) = q {
            if classes.is_empty() {
                return Err(FormulaError::semantic(
                    ErrorKind::Syntax,
                    "partition needs at least one class",
                ));
            }
        }
        for name in q.names() {
            if !declared.insert(name) {
                return Err(FormulaError::semantic(
                    ErrorKind::Duplicate,
                    format!("set `{name}` declared twice"),
                ));
            }
        }
    }
    if declared.len() > MAX_SETS {
        return Err(FormulaError::semantic(
            ErrorKind::NotInFragment,
            format!("at most {MAX_SETS} set names are supported"),
        ));
    }
    for (i, clause) in f.clauses.iter().enumerate() {
        for lit in clause.matrix.0.iter().flatten() {
            let vars: &[FoVar] = match &lit.atom {
                Atom::Member { set, var } => {
                    if !declared.contains(set.as_str()) {
                        return Err(FormulaError::semantic(
                            ErrorKind::Undeclared,
                            format!("clause {}: set `{set}` is not declared", i + 1),
                        ));
                    }
                    std::slice::from_ref(var)
                }
                Atom::Equal(a, b) => &[*a, *b],
            };
            if !clause.shape.is_edge() && vars.contains(&FoVar::Y) {
                return Err(FormulaError::semantic(
                    ErrorKind::NotInFragment,
                    format!("clause {}: single-variable clause mentions y", i + 1),
                ));
            }
        }
    }
    Ok(f)
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let var = |v: &FoVar| if *v == FoVar::X { "x" } else { "y" };
        match &self.atom {
            Atom::Member { set, var: v } => {
                if !self.positive {
                    f.write_str("!")?;
                }
                write!(f, "{set}({})", var(v))
            }
            Atom::Equal(a, b) => {
                let op = if self.positive { "=" } else { "!=" };
                write!(f, "{}{op}{}", var(a), var(b))
            }
        }
    }
}

impl fmt::Display for Cnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, disj) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            f.write_str("(")?;
            for (j, lit) in disj.iter().enumerate() {
                if j > 0 {
                    f.write_str(" | ")?;
                }
                write!(f, "{lit}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in &self.prefix {
            match q {
                Quantifier::Partition(classes)
                    if classes.len() == 2 && classes[1] == format!("~{}", classes[0]) =>
                {
                    writeln!(f, "exists {};", classes[0])?
                }
                Quantifier::Partition(classes) => writeln!(f, "partition {};", classes.join(", "))?,
                Quantifier::Connected(n) => writeln!(f, "connected {n};")?,
                Quantifier::Forest(n) => writeln!(f, "forest {n};")?,
                Quantifier::Free(n) => writeln!(f, "free {n};")?,
            }
        }
        match self.objective {
            Objective::Decide => {}
            Objective::Minimize => writeln!(f, "minimize;")?,
            Objective::Maximize => writeln!(f, "maximize;")?,
        }
        for c in &self.clauses {
            let head = match c.shape {
                Shape::AllAllEdge => "forall x forall y edge -> ",
                Shape::AllExistsEdge => "forall x exists y edge & ",
                Shape::ExistsAllEdge => "exists x forall y edge -> ",
                Shape::ExistsExistsEdge => "exists x exists y edge & ",
                Shape::AllVertex => "forall x ",
                Shape::ExistsVertex => "exists x ",
            };
            writeln!(f, "{head}{};", c.matrix)?;
        }
        Ok(())
    }
}

/// What a slot group stores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupRole {
    FreeVariable { name: String },
    Partition { classes: Vec<String> },
    Connected { name: String },
    Forest { name: String },
    Clause { index: usize, shape: Shape },
}

/// A contiguous bit range: `slots` per-vertex fields of `slot_bits` bits (values below
/// `domain`), followed by `extra_bits` bag-independent flag bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlotGroup {
    pub role: GroupRole,
    pub offset: usize,
    pub slots: usize,
    pub slot_bits: usize,
    pub domain: usize,
    pub extra_bits: usize,
    pub symmetric: bool,
}

impl SlotGroup {
    pub fn bits(&self) -> usize {
        self.slots * self.slot_bits + self.extra_bits
    }

    pub fn slot_offset(&self, slot: usize) -> usize {
        self.offset + slot * self.slot_bits
    }

    pub fn extra_offset(&self) -> usize {
        self.offset + self.slots * self.slot_bits
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateLayout {
    pub k: usize,
    /// Groups in bit order; all symmetric groups precede the asymmetric ones.
    pub groups: Vec<SlotGroup>,
    pub total_bits: usize,
    pub symmetric_bits: usize,
    pub asymmetric_bits: usize,
    /// Index into `groups` for each prefix entry.
    pub quantifier_groups: Vec<usize>,
    /// Index into `groups` for each clause.
    pub clause_groups: Vec<usize>,
}

/// Bits needed to store values `0..domain`.
pub fn bits_for(domain: usize) -> usize {
    if domain <= 1 {
        0
    } else {
        (usize::BITS - (domain - 1).leading_zeros()) as usize
    }
}

/// Lays out the state bits of `f` for bags of at most `k` vertices.
pub fn compile_layout(f: &Formula, k: usize) -> StateLayout {
    let k = k.max(1);
    let label_domain = k + 1;
    let mut groups = Vec::new();
    let mut quantifier_groups = vec![usize::MAX; f.prefix.len()];
    let mut clause_groups = Vec::with_capacity(f.clauses.len());
    let mut offset = 0;
    let mut place = |groups: &mut Vec<SlotGroup>, mut g: SlotGroup| {
        g.offset = offset;
        offset += g.bits();
        groups.push(g);
        groups.len() - 1
    };
    for symmetric_pass in [true, false] {
        for (i, q) in f.prefix.iter().enumerate() {
            if q.is_symmetric() != symmetric_pass {
                continue;
            }
            let (role, domain, extra_bits) = match q {
                Quantifier::Free(name) => (GroupRole::FreeVariable { name: name.clone() }, 2, 0),
                Quantifier::Partition(classes) => (
                    GroupRole::Partition {
                        classes: classes.clone(),
                    },
                    classes.len(),
                    0,
                ),
                Quantifier::Connected(name) => {
                    (GroupRole::Connected { name: name.clone() }, label_domain, 1)
                }
                Quantifier::Forest(name) => {
                    (GroupRole::Forest { name: name.clone() }, label_domain, 0)
                }
            };
            let group = SlotGroup {
                role,
                offset: 0,
                slots: k,
                slot_bits: bits_for(domain),
                domain,
                extra_bits,
                symmetric: symmetric_pass,
            };
            quantifier_groups[i] = place(&mut groups, group);
        }
    }
    for (index, clause) in f.clauses.iter().enumerate() {
        let (slots, extra_bits) = match clause.shape {
            Shape::AllAllEdge | Shape::AllVertex => (0, 0),
            Shape::AllExistsEdge => (k, 0),
            Shape::ExistsAllEdge => (k, 1),
            Shape::ExistsExistsEdge | Shape::ExistsVertex => (0, 1),
        };
        let group = SlotGroup {
            role: GroupRole::Clause {
                index,
                shape: clause.shape,
            },
            offset: 0,
            slots,
            slot_bits: usize::from(slots > 0),
            domain: 2,
            extra_bits,
            symmetric: false,
        };
        clause_groups.push(place(&mut groups, group));
    }
    let symmetric_bits = groups
        .iter()
        .filter(|g| g.symmetric)
        .map(SlotGroup::bits)
        .sum();
    let total_bits = offset;
    StateLayout {
        k,
        groups,
        total_bits,
        symmetric_bits,
        asymmetric_bits: total_bits - symmetric_bits,
        quantifier_groups,
        clause_groups,
    }
}

/// The bundled formulas.
pub mod builtin {
    pub const NAMES: &[&str] = &["3col", "vc", "ds", "is", "fvs", "triangle-minor"];

    pub fn source(name: &str) -> Option<&'static str> {
        Some(match name {
            "3col" => include_str!("../formulas/3col.mso"),
            "vc" => include_str!("../formulas/vc.mso"),
            "ds" => include_str!("../formulas/ds.mso"),
            "is" => include_str!("../formulas/is.mso"),
            "fvs" => include_str!("../formulas/fvs.mso"),
            "triangle-minor" => include_str!("../formulas/triangle-minor.mso"),
            _ => return None,
        })
    }

    /// Parsed bundled formula. Panics on an unknown name.
    pub fn formula(name: &str) -> super::Formula {
        let src = source(name).unwrap_or_else(|| panic!("no bundled formula `{name}`"));
        super::parse_formula(src).expect("bundled formulas parse")
    }
}
