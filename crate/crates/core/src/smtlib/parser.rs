//! Elaboration of S-expressions into commands and interned terms.

use std::collections::HashMap;

use super::lexer::{line_col, read_all, SExpr, Token};
use super::{Command, CommandKind, FrontendError, Script, Span};
use crate::terms::{Kind, SortId, TermError, TermId, TermStore};

pub fn parse_script(text: &[u8]) -> Result<Script, FrontendError> {
    parse_script_into(TermStore::new(), text)
}

/// Parses `text` on top of an existing store (symbols already declared
/// there are visible).
pub fn parse_script_into(store: TermStore, text: &[u8]) -> Result<Script, FrontendError> {
    let sexprs = read_all(text)?;
    let mut el = Elaborator {
        src: text,
        store,
        scopes: Vec::new(),
        warnings: Vec::new(),
    };
    let mut commands = Vec::new();
    let mut seen_check_sat = false;
    for sx in &sexprs {
        let kind = el.command(sx)?;
        match kind {
            CommandKind::CheckSat if seen_check_sat => {
                let (line, _) = line_col(text, sx.span().start);
                el.warnings
                    .push(format!("line {line}: additional check-sat ignored"));
            }
            CommandKind::CheckSat => seen_check_sat = true,
            CommandKind::Assert(_) if seen_check_sat => {
                let (line, _) = line_col(text, sx.span().start);
                el.warnings
                    .push(format!("line {line}: assertion after check-sat ignored"));
            }
            _ => {}
        }
        commands.push(Command {
            kind,
            span: sx.span(),
        });
    }
    Ok(Script {
        store: el.store,
        commands,
        warnings: el.warnings,
    })
}

struct Elaborator<'a> {
    src: &'a [u8],
    store: TermStore,
    scopes: Vec<HashMap<String, TermId>>,
    warnings: Vec<String>,
}

impl Elaborator<'_> {
    fn pos(&self, span: &Span) -> (usize, usize) {
        line_col(self.src, span.start)
    }

    fn parse_err(&self, span: &Span, msg: impl Into<String>) -> FrontendError {
        let (line, col) = self.pos(span);
        FrontendError::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn unsupported(&self, span: &Span, what: impl Into<String>) -> FrontendError {
        let (line, col) = self.pos(span);
        FrontendError::Unsupported {
            line,
            col,
            what: what.into(),
        }
    }

    fn sort_err(&self, span: &Span, source: TermError) -> FrontendError {
        let (line, col) = self.pos(span);
        FrontendError::Sort { line, col, source }
    }

    fn symbol_of<'s>(&self, sx: &'s SExpr) -> Result<(&'s str, &'s str), FrontendError> {
        match sx {
            SExpr::Atom(Token::Symbol { name, spelling }, _) => Ok((name, spelling)),
            _ => Err(self.parse_err(&sx.span(), "expected a symbol")),
        }
    }

    fn command(&mut self, sx: &SExpr) -> Result<CommandKind, FrontendError> {
        let SExpr::List(items, span) = sx else {
            return Err(self.parse_err(&sx.span(), "expected a command"));
        };
        let Some(head) = items.first().and_then(SExpr::symbol) else {
            return Err(self.parse_err(span, "expected a command name"));
        };
        let args = &items[1..];
        let expect_args = |el: &Self, n: usize| {
            if args.len() != n {
                Err(el.parse_err(span, format!("`{head}` expects {n} argument(s)")))
            } else {
                Ok(())
            }
        };
        match head {
            "set-logic" => {
                expect_args(self, 1)?;
                let (name, _) = self.symbol_of(&args[0])?;
                Ok(CommandKind::SetLogic(name.to_string()))
            }
            "set-info" | "set-option" => {
                let key = match args.first() {
                    Some(SExpr::Atom(Token::Keyword(k), _)) => k.clone(),
                    _ => return Err(self.parse_err(span, format!("`{head}` expects a keyword"))),
                };
                Ok(if head == "set-info" {
                    CommandKind::SetInfo(key)
                } else {
                    CommandKind::SetOption(key)
                })
            }
            "declare-sort" => {
                if args.is_empty() || args.len() > 2 {
                    return Err(self.parse_err(span, "`declare-sort` expects a name and arity"));
                }
                let (name, spelling) = self.symbol_of(&args[0])?;
                if let Some(a) = args.get(1) {
                    match a {
                        SExpr::Atom(Token::Numeral(n), _) if n == "0" => {}
                        SExpr::Atom(Token::Numeral(_), s) => {
                            return Err(self.unsupported(s, "sort with non-zero arity"))
                        }
                        other => return Err(self.parse_err(&other.span(), "expected a numeral")),
                    }
                }
                let id = self
                    .store
                    .declare_sort(name, spelling)
                    .map_err(|e| self.sort_err(span, e))?;
                Ok(CommandKind::DeclareSort(id))
            }
            "declare-fun" => {
                expect_args(self, 3)?;
                let (name, spelling) = self.symbol_of(&args[0])?;
                let SExpr::List(arg_sorts, _) = &args[1] else {
                    return Err(self.parse_err(&args[1].span(), "expected a sort list"));
                };
                let arg_sorts = arg_sorts
                    .iter()
                    .map(|s| self.sort(s))
                    .collect::<Result<Vec<_>, _>>()?;
                let ret = self.sort(&args[2])?;
                self.check_fresh_name(name, &args[0].span())?;
                let id = self
                    .store
                    .declare_fun(name, spelling, arg_sorts, ret)
                    .map_err(|e| self.sort_err(span, e))?;
                Ok(CommandKind::DeclareFun(id))
            }
            "declare-const" => {
                expect_args(self, 2)?;
                let (name, spelling) = self.symbol_of(&args[0])?;
                let ret = self.sort(&args[1])?;
                self.check_fresh_name(name, &args[0].span())?;
                let id = self
                    .store
                    .declare_fun(name, spelling, vec![], ret)
                    .map_err(|e| self.sort_err(span, e))?;
                Ok(CommandKind::DeclareConst(id))
            }
            "assert" => {
                expect_args(self, 1)?;
                let t = self.term(&args[0])?;
                if !self.store.is_bool(t) {
                    let actual = self.store.sort(self.store.sort_of(t)).name.clone();
                    return Err(self.sort_err(
                        &args[0].span(),
                        TermError::SortMismatch {
                            op: "assert".into(),
                            index: 0,
                            expected: "Bool".into(),
                            actual,
                        },
                    ));
                }
                Ok(CommandKind::Assert(t))
            }
            "check-sat" => {
                expect_args(self, 0)?;
                Ok(CommandKind::CheckSat)
            }
            "get-model" => {
                expect_args(self, 0)?;
                Ok(CommandKind::GetModel)
            }
            "exit" => Ok(CommandKind::Exit),
            other => Err(self.unsupported(span, format!("command `{other}`"))),
        }
    }

    fn check_fresh_name(&self, name: &str, span: &Span) -> Result<(), FrontendError> {
        if matches!(name, "true" | "false") {
            return Err(self.parse_err(span, format!("cannot redeclare `{name}`")));
        }
        Ok(())
    }

    fn sort(&self, sx: &SExpr) -> Result<SortId, FrontendError> {
        match sx {
            SExpr::Atom(Token::Symbol { name, .. }, span) => {
                self.store.sort_by_name(name).ok_or_else(|| {
                    let (line, col) = self.pos(span);
                    FrontendError::UndeclaredSymbol {
                        line,
                        col,
                        name: name.clone(),
                    }
                })
            }
            SExpr::List(_, span) => Err(self.unsupported(span, "parametric or indexed sort")),
            other => Err(self.parse_err(&other.span(), "expected a sort")),
        }
    }

    fn lookup_bound(&self, name: &str) -> Option<TermId> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn mk(&mut self, span: &Span, kind: Kind, args: &[TermId]) -> Result<TermId, FrontendError> {
        self.store
            .mk(kind, args)
            .map_err(|e| self.sort_err(span, e))
    }

    fn term(&mut self, sx: &SExpr) -> Result<TermId, FrontendError> {
        match sx {
            SExpr::Atom(tok, span) => self.atom_term(tok, span),
            SExpr::List(items, span) => self.list_term(items, span),
        }
    }

    fn atom_term(&mut self, tok: &Token, span: &Span) -> Result<TermId, FrontendError> {
        match tok {
            Token::Symbol { name, .. } => {
                if let Some(t) = self.lookup_bound(name) {
                    return Ok(t);
                }
                match name.as_str() {
                    "true" => return Ok(self.store.mk_true()),
                    "false" => return Ok(self.store.mk_false()),
                    _ => {}
                }
                let Some(f) = self.store.symbol_by_name(name) else {
                    let (line, col) = self.pos(span);
                    return Err(FrontendError::UndeclaredSymbol {
                        line,
                        col,
                        name: name.clone(),
                    });
                };
                self.mk(span, Kind::App(f), &[])
            }
            Token::Numeral(_) | Token::Decimal(_) | Token::Hex(_) | Token::Binary(_) => {
                Err(self.unsupported(span, "numeric literal"))
            }
            Token::Str(_) => Err(self.unsupported(span, "string literal")),
            Token::Keyword(k) => Err(self.parse_err(span, format!("unexpected keyword `{k}`"))),
            Token::LParen | Token::RParen => unreachable!("parens never reach the elaborator"),
        }
    }

    fn list_term(&mut self, items: &[SExpr], span: &Span) -> Result<TermId, FrontendError> {
        let Some(head) = items.first() else {
            return Err(self.parse_err(span, "empty application"));
        };
        let head_name = match head {
            SExpr::Atom(Token::Symbol { name, .. }, _) => name.as_str(),
            SExpr::List(..) => {
                return Err(self.unsupported(span, "indexed or qualified identifier"));
            }
            other => return Err(self.parse_err(&other.span(), "expected a function symbol")),
        };
        let rest = &items[1..];
        match head_name {
            "let" => return self.let_term(rest, span),
            "!" => {
                // annotations such as :named are accepted and dropped
                let Some(inner) = rest.first() else {
                    return Err(self.parse_err(span, "`!` expects a term"));
                };
                return self.term(inner);
            }
            "forall" | "exists" => return Err(self.unsupported(span, "quantifier")),
            "match" | "_" | "as" | "par" => {
                return Err(self.unsupported(span, format!("`{head_name}`")))
            }
            _ => {}
        }
        let is_bound = self.lookup_bound(head_name).is_some();
        let args = rest
            .iter()
            .map(|a| self.term(a))
            .collect::<Result<Vec<_>, _>>()?;
        let need = |el: &Self, ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(el.parse_err(span, format!("`{head_name}` expects {what}")))
            }
        };
        if !is_bound {
            match head_name {
                "not" => {
                    need(self, args.len() == 1, "1 argument")?;
                    return self.mk(span, Kind::Not, &args);
                }
                "and" | "or" | "xor" | "=>" => {
                    need(self, !args.is_empty(), "at least 1 argument")?;
                    let kind = match head_name {
                        "and" => Kind::And,
                        "or" => Kind::Or,
                        "xor" => Kind::Xor,
                        _ => Kind::Implies,
                    };
                    return self.mk(span, kind, &args);
                }
                "=" => {
                    need(self, args.len() >= 2, "at least 2 arguments")?;
                    if args.len() == 2 {
                        return self.mk(span, Kind::Eq, &args);
                    }
                    let mut chain = Vec::with_capacity(args.len() - 1);
                    for w in args.windows(2) {
                        chain.push(self.mk(span, Kind::Eq, w)?);
                    }
                    return self.mk(span, Kind::And, &chain);
                }
                "distinct" => {
                    need(self, args.len() >= 2, "at least 2 arguments")?;
                    return self.mk(span, Kind::Distinct, &args);
                }
                "ite" => {
                    need(self, args.len() == 3, "3 arguments")?;
                    return self.mk(span, Kind::Ite, &args);
                }
                _ => {}
            }
        }
        if is_bound {
            return Err(self.parse_err(span, format!("`{head_name}` is not a function")));
        }
        let Some(f) = self.store.symbol_by_name(head_name) else {
            let (line, col) = self.pos(&head.span());
            return Err(FrontendError::UndeclaredSymbol {
                line,
                col,
                name: head_name.to_string(),
            });
        };
        self.mk(span, Kind::App(f), &args)
    }

    fn let_term(&mut self, rest: &[SExpr], span: &Span) -> Result<TermId, FrontendError> {
        let [SExpr::List(bindings, _), body] = rest else {
            return Err(self.parse_err(span, "`let` expects a binding list and a body"));
        };
        // bindings are parallel: all right-hand sides see the outer scope
        let mut scope = HashMap::new();
        for b in bindings {
            let SExpr::List(pair, bspan) = b else {
                return Err(self.parse_err(&b.span(), "malformed let binding"));
            };
            let [name, value] = pair.as_slice() else {
                return Err(self.parse_err(bspan, "malformed let binding"));
            };
            let (name, _) = self.symbol_of(name)?;
            let value = self.term(value)?;
            scope.insert(name.to_string(), value);
        }
        self.scopes.push(scope);
        let body = self.term(body);
        self.scopes.pop();
        body
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smtlib::print_term;

    #[test]
    fn four_commands() {
        let s = parse_script(b"(declare-sort S 0)(declare-fun a () S)(assert (= a a))(check-sat)")
            .unwrap();
        assert_eq!(s.commands.len(), 4);
        assert_eq!(s.assertions().len(), 1);
    }

    #[test]
    fn nary_xor_is_one_node() {
        let s = parse_script(
            b"(declare-fun p () Bool)(declare-fun q () Bool)(declare-fun r () Bool)(assert (xor p q r))",
        )
        .unwrap();
        let t = s.assertions()[0];
        assert_eq!(s.store.kind(t), Kind::Xor);
        assert_eq!(s.store.args(t).len(), 3);
    }

    #[test]
    fn let_expands_to_shared_node() {
        let s = parse_script(
            b"(declare-sort S 0)(declare-fun a () S)(declare-fun f (S) S)\
              (assert (let ((x (f a))) (= x x)))",
        )
        .unwrap();
        let t = s.assertions()[0];
        assert_eq!(s.store.kind(t), Kind::Eq);
        let args = s.store.args(t);
        assert_eq!(args[0], args[1]);
        assert_eq!(print_term(&s.store, t), "(= (f a) (f a))");
    }

    #[test]
    fn let_is_parallel_and_shadows() {
        let s = parse_script(
            b"(declare-sort S 0)(declare-fun a () S)(declare-fun b () S)\
              (assert (let ((a b) (b a)) (= a b)))\
              (assert (let ((x a)) (let ((x b)) (= x a))))",
        )
        .unwrap();
        let st = &s.store;
        let asserts = s.assertions();
        // Both assertions intern to the same equality between a and b.
        assert_eq!(asserts[0], asserts[1]);
        let mut sides: Vec<String> = st.args(asserts[0]).iter().map(|&t| print_term(st, t)).collect();
        sides.sort();
        assert_eq!(sides, vec!["a", "b"]);
    }

    #[test]
    fn named_annotations_are_stripped() {
        let s = parse_script(
            b"(set-info :status unsat)(set-option :produce-models true)\
              (declare-fun p () Bool)(assert (! (not p) :named n1))",
        )
        .unwrap();
        assert_eq!(print_term(&s.store, s.assertions()[0]), "(not p)");
    }

    #[test]
    fn errors_carry_positions() {
        match parse_script(b"(declare-sort S 0)\n(assert (= a a))") {
            Err(FrontendError::UndeclaredSymbol { line, col, name }) => {
                assert_eq!((line, col, name.as_str()), (2, 12, "a"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_script(b"(declare-sort S 1)"),
            Err(FrontendError::Unsupported { .. })
        ));
        assert!(matches!(
            parse_script(b"(declare-fun p () Bool)(assert (forall ((x Bool)) x))"),
            Err(FrontendError::Unsupported { .. })
        ));
        assert!(matches!(
            parse_script(b"(declare-sort S 0)(declare-fun a () S)(assert (= a 1))"),
            Err(FrontendError::Unsupported { .. })
        ));
        assert!(matches!(
            parse_script(b"(declare-sort S 0)(declare-fun a () S)(assert a)"),
            Err(FrontendError::Sort { .. })
        ));
    }

    #[test]
    fn bool_terms_as_uf_arguments() {
        let s = parse_script(
            b"(declare-sort S 0)(declare-fun f (Bool) S)(declare-fun c0 () S)(declare-fun c2 () S)\
              (assert (= (f (distinct c0 c2)) (f true)))",
        )
        .unwrap();
        assert_eq!(s.assertions().len(), 1);
    }

    #[test]
    fn extra_check_sat_warns() {
        let s = parse_script(b"(declare-fun p () Bool)(assert p)(check-sat)(assert (not p))(check-sat)")
            .unwrap();
        assert_eq!(s.assertions().len(), 1);
        assert_eq!(s.warnings.len(), 2);
    }
}
