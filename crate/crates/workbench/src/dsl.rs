//! Text format for algebras, signatures and structures.
//!
//! ```text
//! algebra V { elements: bot, a, b, top; order: bot <= a <= top, bot <= b <= top; }
//! algebra D = downsets { points: x, y; order: x <= y; }
//! signature S { rel E/2; fun f/1; const c; }
//! structure M over V sig S {
//!   section x extent top;
//!   section y extent a;
//!   identify x|a = y;
//!   rel E(x, y) = a;
//!   fun f(x) = x;
//!   const c = x;
//! }
//! ```
//!
//! `omega2`, `chain3` and `diamond` are predefined. Downset algebras name
//! their elements `{x,y}`; such names may be written as-is or quoted.
//! `fill close;` in a structure closes relation values upwards instead of
//! rejecting incomplete tables. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use omega_core::heyting::{AlgebraError, Elem, Heyting};
use omega_core::presheaf::{
    RelationFill, Sec, SecRef, Signature, Structure, StructureBuilder, StructureError,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DslErrorKind {
    Syntax(String),
    Algebra(AlgebraError),
    Structure(StructureError),
    UnknownName(String),
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DslError {
    pub file: String,
    pub line: usize,
    pub kind: DslErrorKind,
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.file, self.line)?;
        match &self.kind {
            DslErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            DslErrorKind::Algebra(AlgebraError::NotDistributive(a, b, c)) => write!(
                f,
                "distributive law fails for the counterexample triple ({a}, {b}, {c}): \
                 {a} /\\ ({b} \\/ {c}) differs from ({a} /\\ {b}) \\/ ({a} /\\ {c})"
            ),
            DslErrorKind::Algebra(e) => write!(f, "invalid algebra: {e}"),
            DslErrorKind::Structure(e) => write!(f, "invalid structure: {e}"),
            DslErrorKind::UnknownName(m) => write!(f, "unknown name: {m}"),
            DslErrorKind::Duplicate(m) => write!(f, "duplicate definition of `{m}`"),
        }
    }
}

impl std::error::Error for DslError {}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Sym(char),
    Le,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
            Tok::Le => write!(f, "`<=`"),
        }
    }
}

fn ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, (usize, String)> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut it = src.chars().peekable();
    while let Some(c) = it.next() {
        match c {
            '\n' => line += 1,
            c if c.is_whitespace() => {}
            '#' => {
                for d in it.by_ref() {
                    if d == '\n' {
                        line += 1;
                        break;
                    }
                }
            }
            '"' => {
                let mut s = String::new();
                loop {
                    match it.next() {
                        Some('"') => break,
                        Some('\n') | None => return Err((line, "unterminated string".into())),
                        Some(d) => s.push(d),
                    }
                }
                out.push((Tok::Ident(s), line));
            }
            '<' if it.peek() == Some(&'=') => {
                it.next();
                out.push((Tok::Le, line));
            }
            c if ident_char(c) => {
                let mut s = String::from(c);
                while let Some(&d) = it.peek() {
                    if !ident_char(d) {
                        break;
                    }
                    s.push(d);
                    it.next();
                }
                out.push((Tok::Ident(s), line));
            }
            '{' | '}' | '(' | ')' | ';' | ':' | ',' | '=' | '|' | '/' => {
                out.push((Tok::Sym(c), line))
            }
            other => return Err((line, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub lax_constants: bool,
}

/// Everything loaded from one or more files, by name.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub algebras: BTreeMap<String, Arc<Heyting>>,
    pub signatures: BTreeMap<String, Arc<Signature>>,
    pub structures: BTreeMap<String, Structure>,
    /// Definitions in load order, for reports.
    pub order: Vec<(Kind, String)>,
    opts: LoadOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Algebra,
    Signature,
    Structure,
}

impl Workspace {
    pub fn new(opts: LoadOptions) -> Self {
        let mut algebras = BTreeMap::new();
        algebras.insert("omega2".to_string(), Arc::new(Heyting::omega2()));
        algebras.insert("chain3".to_string(), Arc::new(Heyting::chain3()));
        algebras.insert("diamond".to_string(), Arc::new(Heyting::diamond()));
        let mut signatures = BTreeMap::new();
        signatures.insert("empty".to_string(), Arc::new(Signature::new()));
        Workspace {
            algebras,
            signatures,
            structures: BTreeMap::new(),
            order: Vec::new(),
            opts,
        }
    }

    /// Parses `src` and adds its definitions. Stops at the first error.
    pub fn load(&mut self, file: &str, src: &str) -> Result<(), DslError> {
        let toks = lex(src).map_err(|(line, m)| DslError {
            file: file.into(),
            line,
            kind: DslErrorKind::Syntax(m),
        })?;
        let mut p = Parser {
            toks,
            pos: 0,
            file,
            ws: self,
        };
        while !p.done() {
            p.item()?;
        }
        Ok(())
    }

    pub fn structure(&self, name: &str) -> Result<&Structure, DslErrorKind> {
        self.structures
            .get(name)
            .ok_or_else(|| DslErrorKind::UnknownName(format!("no structure named `{name}`")))
    }

    pub fn algebra(&self, name: &str) -> Result<&Arc<Heyting>, DslErrorKind> {
        self.algebras
            .get(name)
            .ok_or_else(|| DslErrorKind::UnknownName(format!("no algebra named `{name}`")))
    }

    pub fn signature(&self, name: &str) -> Result<&Arc<Signature>, DslErrorKind> {
        self.signatures
            .get(name)
            .ok_or_else(|| DslErrorKind::UnknownName(format!("no signature named `{name}`")))
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    file: &'a str,
    ws: &'a mut Workspace,
}

type R<T> = Result<T, DslError>;
type OrderBody = (Vec<String>, Vec<(String, String)>);

impl Parser<'_> {
    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or(self.toks.last())
            .map_or(1, |t| t.1)
    }

    fn fail<T>(&self, kind: DslErrorKind) -> R<T> {
        Err(self.error_at(self.line(), kind))
    }

    fn error_at(&self, line: usize, kind: DslErrorKind) -> DslError {
        DslError {
            file: self.file.into(),
            line,
            kind,
        }
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> R<T> {
        self.fail(DslErrorKind::Syntax(msg.into()))
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self, what: &str) -> R<Tok> {
        match self.toks.get(self.pos) {
            Some((t, _)) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.syntax(format!("expected {what}, found end of input")),
        }
    }

    fn ident(&mut self, what: &str) -> R<String> {
        match self.next(what)? {
            Tok::Ident(s) => Ok(s),
            t => {
                self.pos -= 1;
                self.syntax(format!("expected {what}, found {t}"))
            }
        }
    }

    fn keyword(&mut self, kw: &str) -> R<()> {
        let s = self.ident(&format!("`{kw}`"))?;
        if s != kw {
            self.pos -= 1;
            return self.syntax(format!("expected `{kw}`, found `{s}`"));
        }
        Ok(())
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn sym(&mut self, c: char) -> R<()> {
        match self.next(&format!("`{c}`"))? {
            Tok::Sym(d) if d == c => Ok(()),
            t => {
                self.pos -= 1;
                self.syntax(format!("expected `{c}`, found {t}"))
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// An element name: an identifier, a quoted string, or `{x,y}`.
    fn elem_name(&mut self) -> R<String> {
        if self.eat('{') {
            let mut parts = Vec::new();
            while !self.eat('}') {
                if !parts.is_empty() {
                    self.sym(',')?;
                }
                parts.push(self.ident("point name")?);
            }
            return Ok(format!("{{{}}}", parts.join(",")));
        }
        self.ident("element name")
    }

    fn name_list(&mut self, what: &str) -> R<Vec<String>> {
        let mut out = vec![self.elem_name_or(what)?];
        while self.eat(',') {
            out.push(self.elem_name_or(what)?);
        }
        Ok(out)
    }

    fn elem_name_or(&mut self, what: &str) -> R<String> {
        if self.peek() == Some(&Tok::Sym('{')) {
            self.elem_name()
        } else {
            self.ident(what)
        }
    }

    /// `a <= b <= c, d <= e` as covering pairs.
    fn order_list(&mut self) -> R<Vec<(String, String)>> {
        let mut out = Vec::new();
        if self.peek() == Some(&Tok::Sym(';')) {
            return Ok(out);
        }
        loop {
            let mut prev = self.elem_name()?;
            let mut any = false;
            while self.peek() == Some(&Tok::Le) {
                self.pos += 1;
                let next = self.elem_name()?;
                out.push((prev, next.clone()));
                prev = next;
                any = true;
            }
            if !any {
                return self.syntax("expected `<=` in order list");
            }
            if !self.eat(',') {
                return Ok(out);
            }
        }
    }

    fn fresh(&self, kind: Kind, name: &str, line: usize) -> R<()> {
        let taken = match kind {
            Kind::Algebra => self.ws.algebras.contains_key(name),
            Kind::Signature => self.ws.signatures.contains_key(name),
            Kind::Structure => self.ws.structures.contains_key(name),
        };
        if taken {
            return Err(self.error_at(line, DslErrorKind::Duplicate(name.into())));
        }
        Ok(())
    }

    fn item(&mut self) -> R<()> {
        let line = self.line();
        let head = self.ident("`algebra`, `signature` or `structure`")?;
        match head.as_str() {
            "algebra" => self.algebra(line),
            "signature" => self.signature(line),
            "structure" => self.structure(line),
            other => {
                self.pos -= 1;
                self.syntax(format!(
                    "expected `algebra`, `signature` or `structure`, found `{other}`"
                ))
            }
        }
    }

    fn algebra(&mut self, line: usize) -> R<()> {
        let name = self.ident("algebra name")?;
        self.fresh(Kind::Algebra, &name, line)?;
        let alg = if self.eat('=') {
            let kind = self.ident("`downsets` or an algebra name")?;
            if kind == "downsets" {
                self.sym('{')?;
                let (points, order) = self.order_body("points")?;
                let p: Vec<&str> = points.iter().map(String::as_str).collect();
                let o: Vec<(&str, &str)> = order
                    .iter()
                    .map(|(a, b)| (a.as_str(), b.as_str()))
                    .collect();
                Heyting::from_poset_downsets(&p, &o)
                    .map_err(|e| self.error_at(line, DslErrorKind::Algebra(e)))?
            } else {
                let a = (**self.ws.algebra(&kind).map_err(|k| self.error_at(line, k))?).clone();
                self.eat(';');
                a
            }
        } else {
            self.sym('{')?;
            let (elements, order) = self.order_body("elements")?;
            let e: Vec<&str> = elements.iter().map(String::as_str).collect();
            let o: Vec<(&str, &str)> = order
                .iter()
                .map(|(a, b)| (a.as_str(), b.as_str()))
                .collect();
            Heyting::from_order(&e, &o)
                .map_err(|e| self.error_at(line, DslErrorKind::Algebra(e)))?
        };
        self.ws.algebras.insert(name.clone(), Arc::new(alg));
        self.ws.order.push((Kind::Algebra, name));
        Ok(())
    }

    /// `{ LIST: ...; order: ...; }` after the opening brace.
    fn order_body(&mut self, list: &str) -> R<OrderBody> {
        let mut names = None;
        let mut order = Vec::new();
        while !self.eat('}') {
            let key = self.ident(&format!("`{list}` or `order`"))?;
            self.sym(':')?;
            if key == list {
                names = Some(self.name_list("name")?);
            } else if key == "order" {
                order.extend(self.order_list()?);
            } else {
                self.pos -= 2;
                return self.syntax(format!("expected `{list}` or `order`, found `{key}`"));
            }
            self.sym(';')?;
        }
        match names {
            Some(n) => Ok((n, order)),
            None => self.syntax(format!("missing `{list}` list")),
        }
    }

    fn arity(&mut self) -> R<usize> {
        self.sym('/')?;
        let n = self.ident("arity")?;
        match n.parse() {
            Ok(k) => Ok(k),
            Err(_) => {
                self.pos -= 1;
                self.syntax(format!("expected an arity, found `{n}`"))
            }
        }
    }

    fn signature(&mut self, line: usize) -> R<()> {
        let name = self.ident("signature name")?;
        self.fresh(Kind::Signature, &name, line)?;
        self.sym('{')?;
        let mut sig = Signature::new();
        while !self.eat('}') {
            let l = self.line();
            let kw = self.ident("`rel`, `fun` or `const`")?;
            let res = match kw.as_str() {
                "rel" => {
                    let r = self.ident("relation name")?;
                    let k = self.arity()?;
                    sig.add_rel(&r, k).map(|_| ())
                }
                "fun" => {
                    let f = self.ident("function name")?;
                    let k = self.arity()?;
                    sig.add_fun(&f, k).map(|_| ())
                }
                "const" => {
                    let mut res = Ok(());
                    for c in self.name_list("constant name")? {
                        res = res.and_then(|_| sig.add_const(&c).map(|_| ()));
                    }
                    res
                }
                other => {
                    self.pos -= 1;
                    return self
                        .syntax(format!("expected `rel`, `fun` or `const`, found `{other}`"));
                }
            };
            res.map_err(|e| self.error_at(l, DslErrorKind::Syntax(e.to_string())))?;
            self.sym(';')?;
        }
        self.ws.signatures.insert(name.clone(), Arc::new(sig));
        self.ws.order.push((Kind::Signature, name));
        Ok(())
    }

    fn elem(&mut self, alg: &Heyting) -> R<Elem> {
        let line = self.line();
        let name = self.elem_name()?;
        alg.elem(&name).ok_or_else(|| {
            self.error_at(
                line,
                DslErrorKind::UnknownName(format!("no element `{name}` in the algebra")),
            )
        })
    }

    fn secref(&mut self, b: &StructureBuilder, alg: &Heyting) -> R<SecRef> {
        let line = self.line();
        let g = self.ident("section name")?;
        let gen = b.generator(&g).ok_or_else(|| {
            self.error_at(
                line,
                DslErrorKind::UnknownName(format!("no section `{g}` declared")),
            )
        })?;
        if self.eat('|') {
            Ok(SecRef::at(gen, self.elem(alg)?))
        } else {
            Ok(SecRef::gen(gen))
        }
    }

    fn secrefs(&mut self, b: &StructureBuilder, alg: &Heyting) -> R<Vec<SecRef>> {
        self.sym('(')?;
        let mut out = Vec::new();
        while !self.eat(')') {
            if !out.is_empty() {
                self.sym(',')?;
            }
            out.push(self.secref(b, alg)?);
        }
        Ok(out)
    }

    fn structure(&mut self, line: usize) -> R<()> {
        let name = self.ident("structure name")?;
        self.fresh(Kind::Structure, &name, line)?;
        self.keyword("over")?;
        let an = self.ident("algebra name")?;
        let alg = self
            .ws
            .algebra(&an)
            .map_err(|k| self.error_at(line, k))?
            .clone();
        let sig = if self.is_keyword("sig") {
            self.pos += 1;
            let sn = self.ident("signature name")?;
            self.ws
                .signature(&sn)
                .map_err(|k| self.error_at(line, k))?
                .clone()
        } else {
            Arc::new(Signature::new())
        };
        self.sym('{')?;
        let mut b = StructureBuilder::new(&name, alg.clone(), sig.clone())
            .lax_constants(self.ws.opts.lax_constants);
        let structure_err =
            |p: &Self, l: usize, e: StructureError| p.error_at(l, DslErrorKind::Structure(e));
        while !self.eat('}') {
            let l = self.line();
            let kw = self.ident("a structure statement")?;
            match kw.as_str() {
                "section" => {
                    let mut names = vec![self.ident("section name")?];
                    while self.eat(',') {
                        names.push(self.ident("section name")?);
                    }
                    self.keyword("extent")?;
                    let e = self.elem(&alg)?;
                    for n in names {
                        b.section(&n, e).map_err(|e| structure_err(self, l, e))?;
                    }
                }
                "identify" => {
                    let x = self.secref(&b, &alg)?;
                    self.sym('=')?;
                    let y = self.secref(&b, &alg)?;
                    b.identify(x, y);
                }
                "rel" => {
                    let r = self.ident("relation name")?;
                    let id = sig.rel(&r).ok_or_else(|| {
                        self.error_at(l, DslErrorKind::UnknownName(format!("no relation `{r}`")))
                    })?;
                    let args = self.secrefs(&b, &alg)?;
                    self.sym('=')?;
                    let v = self.elem(&alg)?;
                    b.rel(id, args, v).map_err(|e| structure_err(self, l, e))?;
                }
                "fun" => {
                    let f = self.ident("function name")?;
                    let id = sig.fun(&f).ok_or_else(|| {
                        self.error_at(l, DslErrorKind::UnknownName(format!("no function `{f}`")))
                    })?;
                    let args = self.secrefs(&b, &alg)?;
                    self.sym('=')?;
                    let v = self.secref(&b, &alg)?;
                    b.fun(id, args, v).map_err(|e| structure_err(self, l, e))?;
                }
                "const" => {
                    let c = self.ident("constant name")?;
                    let id = sig.constant(&c).ok_or_else(|| {
                        self.error_at(l, DslErrorKind::UnknownName(format!("no constant `{c}`")))
                    })?;
                    self.sym('=')?;
                    let v = self.secref(&b, &alg)?;
                    b.constant(id, v);
                }
                "fill" => {
                    let mode = self.ident("`strict` or `close`")?;
                    let fill = match mode.as_str() {
                        "strict" => RelationFill::Strict,
                        "close" => RelationFill::Close,
                        other => {
                            self.pos -= 1;
                            return self
                                .syntax(format!("expected `strict` or `close`, found `{other}`"));
                        }
                    };
                    b = b.relation_fill(fill);
                }
                other => {
                    self.pos -= 1;
                    return self.syntax(format!("unknown structure statement `{other}`"));
                }
            }
            self.sym(';')?;
        }
        let s = b.build().map_err(|e| structure_err(self, line, e))?;
        self.ws.structures.insert(name.clone(), s);
        self.ws.order.push((Kind::Structure, name));
        Ok(())
    }
}

/// Splits `a, b|{x,y}` at top-level commas.
fn split_tuple(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in text.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(text[start..].trim());
    out
}

/// Reads a tuple of sections such as `a, b|m`. The empty string and
/// `empty` give the empty tuple.
pub fn parse_tuple(m: &Structure, text: &str) -> Result<Vec<Sec>, StructureError> {
    let text = text.trim();
    if text.is_empty() || text == "empty" || text == "()" {
        return Ok(Vec::new());
    }
    let text = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .unwrap_or(text);
    split_tuple(text)
        .into_iter()
        .map(|s| m.section(s))
        .collect()
}
