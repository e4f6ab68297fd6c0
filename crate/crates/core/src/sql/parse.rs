use super::{KeyPredicate, QueryAst, SqlError};
use crate::interval::{Atom, CompareOp, Endpoint, Operand, TemporalCondition};
use crate::store::{AttributeKind, TemporalRelation, Value};
use crate::time::{Duration, TimePoint};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Sym(char),
}

fn tokenize(text: &str, base: usize) -> Result<Vec<(Tok, usize)>, SqlError> {
    let mut out = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some(&(i, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
        } else if c == '\'' {
            it.next();
            let mut s = String::new();
            loop {
                match it.next() {
                    Some((_, '\'')) => {
                        if matches!(it.peek(), Some((_, '\''))) {
                            it.next();
                            s.push('\'');
                        } else {
                            break;
                        }
                    }
                    Some((_, ch)) => s.push(ch),
                    None => {
                        return Err(SqlError::Syntax {
                            offset: base + i,
                            detail: "unterminated string".into(),
                        })
                    }
                }
            }
            out.push((Tok::Str(s), base + i));
        } else if c.is_alphanumeric() || c == '_' {
            let mut s = String::new();
            while let Some(&(_, ch)) = it.peek() {
                if ch.is_alphanumeric() || ch == '_' {
                    s.push(ch);
                    it.next();
                } else {
                    break;
                }
            }
            out.push((Tok::Ident(s), base + i));
        } else if "(),=<>".contains(c) {
            out.push((Tok::Sym(c), base + i));
            it.next();
        } else {
            return Err(SqlError::Syntax {
                offset: base + i,
                detail: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

fn find_keyword(text: &str, kw: &str) -> Option<usize> {
    let upper = text.to_ascii_uppercase();
    upper.find(&format!(" {kw} ")).map(|i| i + 1)
}

/// Parses the dialect produced by [`super::print_sql`], resolving attribute
/// names case-insensitively against `relation`.
pub fn parse_sql(text: &str, relation: &TemporalRelation) -> Result<QueryAst, SqlError> {
    let text = text.trim().trim_end_matches(';');
    let syntax = |offset: usize, detail: &str| SqlError::Syntax {
        offset,
        detail: detail.to_string(),
    };
    if !text.to_ascii_uppercase().starts_with("SELECT ") {
        return Err(syntax(0, "expected SELECT"));
    }
    let from = find_keyword(text, "FROM").ok_or_else(|| syntax(0, "expected FROM"))?;
    let resolve = |name: &str| {
        relation
            .resolve_attr(name)
            .map(str::to_string)
            .ok_or_else(|| SqlError::UnknownAttribute(name.to_string()))
    };
    let select_attrs = text[7..from]
        .split(',')
        .map(|s| resolve(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let rest_at = from + 5;
    let rest = &text[rest_at..];
    let (relation_name, where_at) = match find_keyword(rest, "WHERE") {
        Some(w) => (rest[..w].trim().to_string(), Some(rest_at + w + 6)),
        None => (rest.trim().to_string(), None),
    };

    let mut ast = QueryAst {
        relation_name,
        start_attr: relation.start_attr.clone(),
        end_attr: relation.end_attr.clone(),
        select_attrs,
        key_predicates: Vec::new(),
        condition: TemporalCondition::default(),
        provenance: None,
    };
    let Some(where_at) = where_at else {
        return Ok(ast);
    };
    let toks = tokenize(&text[where_at..], where_at)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let mut atoms = Vec::new();
    loop {
        p.clause(relation, &mut ast.key_predicates, &mut atoms)?;
        if p.at_end() {
            break;
        }
        p.keyword("AND")?;
    }
    ast.condition = TemporalCondition { atoms: fold_between(atoms) };
    Ok(ast)
}

fn fold_between(atoms: Vec<Atom>) -> Vec<Atom> {
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for atom in atoms {
        if let (
            Some(Atom::Compare {
                endpoint: e1,
                op: CompareOp::Gt,
                rhs: Operand::Literal(lower),
            }),
            Atom::Compare {
                endpoint: e2,
                op: CompareOp::Lt,
                rhs: Operand::Literal(upper),
            },
        ) = (out.last().copied(), atom)
        {
            if e1 == e2 {
                out.pop();
                out.push(Atom::Between {
                    endpoint: e1,
                    lower,
                    upper,
                });
                continue;
            }
        }
        out.push(atom);
    }
    out
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end)
    }

    fn err(&self, detail: &str) -> SqlError {
        SqlError::Syntax {
            offset: self.offset(),
            detail: detail.to_string(),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SqlError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&format!("expected {kw}"))),
        }
    }

    fn sym(&mut self, c: char) -> Result<(), SqlError> {
        match self.peek() {
            Some(Tok::Sym(s)) if *s == c => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&format!("expected `{c}`"))),
        }
    }

    fn ident(&mut self) -> Result<String, SqlError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => {
                self.pos -= 1;
                Err(self.err("expected identifier"))
            }
        }
    }

    fn string(&mut self) -> Result<String, SqlError> {
        match self.next() {
            Some(Tok::Str(s)) => Ok(s),
            _ => {
                self.pos -= 1;
                Err(self.err("expected string literal"))
            }
        }
    }

    fn op(&mut self) -> Result<CompareOp, SqlError> {
        match self.next() {
            Some(Tok::Sym('=')) => Ok(CompareOp::Eq),
            Some(Tok::Sym('<')) => Ok(CompareOp::Lt),
            Some(Tok::Sym('>')) => Ok(CompareOp::Gt),
            _ => {
                self.pos -= 1;
                Err(self.err("expected comparison operator"))
            }
        }
    }

    fn date(&mut self) -> Result<TimePoint, SqlError> {
        let s = self.string()?;
        Ok(TimePoint::parse_iso(&s)?)
    }

    fn endpoint(&self, relation: &TemporalRelation, attr: &str) -> Option<Endpoint> {
        if attr == relation.start_attr {
            Some(Endpoint::Start)
        } else if attr == relation.end_attr {
            Some(Endpoint::End)
        } else {
            None
        }
    }

    fn clause(
        &mut self,
        relation: &TemporalRelation,
        keys: &mut Vec<KeyPredicate>,
        atoms: &mut Vec<Atom>,
    ) -> Result<(), SqlError> {
        let name = self.ident()?;
        if name.eq_ignore_ascii_case("date") && self.peek() == Some(&Tok::Sym('(')) {
            self.sym('(')?;
            let col = self.ident()?;
            self.sym(')')?;
            let op = self.op()?;
            self.keyword("date")?;
            self.sym('(')?;
            let base = self.date()?;
            self.sym(',')?;
            let by = Duration::parse_modifier(&self.string()?)?;
            self.sym(')')?;
            let attr = resolve(relation, &col)?;
            let endpoint = self
                .endpoint(relation, &attr)
                .ok_or_else(|| self.err("date() applies only to timestamp attributes"))?;
            atoms.push(Atom::Compare {
                endpoint,
                op,
                rhs: Operand::Shifted { base, by },
            });
            return Ok(());
        }
        let attr = resolve(relation, &name)?;
        let endpoint = self.endpoint(relation, &attr);
        match self.peek() {
            Some(Tok::Ident(kw)) if kw.eq_ignore_ascii_case("IS") => {
                self.pos += 1;
                self.keyword("NULL")?;
                let endpoint = endpoint.ok_or_else(|| self.err("IS NULL applies only to timestamps"))?;
                atoms.push(Atom::IsNull(endpoint));
            }
            Some(Tok::Ident(kw)) if kw.eq_ignore_ascii_case("BETWEEN") => {
                self.pos += 1;
                let lower = self.date()?;
                self.keyword("AND")?;
                let upper = self.date()?;
                let endpoint = endpoint.ok_or_else(|| self.err("BETWEEN applies only to timestamps"))?;
                atoms.push(Atom::Between { endpoint, lower, upper });
            }
            _ => {
                let op = self.op()?;
                let lit = self.string()?;
                match endpoint {
                    Some(endpoint) => atoms.push(Atom::Compare {
                        endpoint,
                        op,
                        rhs: Operand::Literal(TimePoint::parse_iso(&lit)?),
                    }),
                    None => {
                        if op != CompareOp::Eq {
                            return Err(self.err("key predicates must use `=`"));
                        }
                        let value = match relation.attribute(&attr).map(|a| a.kind) {
                            Some(AttributeKind::Date) => Value::Date(TimePoint::parse_iso(&lit)?),
                            _ => Value::Text(lit),
                        };
                        keys.push(KeyPredicate { attr, value });
                    }
                }
            }
        }
        Ok(())
    }
}

fn resolve(relation: &TemporalRelation, name: &str) -> Result<String, SqlError> {
    relation
        .resolve_attr(name)
        .map(str::to_string)
        .ok_or_else(|| SqlError::UnknownAttribute(name.to_string()))
}
