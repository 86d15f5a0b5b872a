use std::fmt::Write;

use super::lexer::is_simple_symbol_char;
use crate::terms::{Kind, TermId, TermStore};

const RESERVED: &[&str] = &[
    "!", "_", "as", "BINARY", "DECIMAL", "exists", "forall", "HEXADECIMAL", "let", "match",
    "NUMERAL", "par", "STRING", "assert", "check-sat", "declare-const", "declare-fun",
    "declare-sort", "define-fun", "define-sort", "exit", "get-model", "set-info", "set-logic",
    "set-option",
];

/// Prints `name` as a simple symbol when possible, otherwise with bars.
pub fn quote_symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.as_bytes()[0].is_ascii_digit()
        && name.bytes().all(is_simple_symbol_char)
        && !RESERVED.contains(&name);
    if simple {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

pub fn print_term(store: &TermStore, t: TermId) -> String {
    let mut out = String::new();
    write_term(store, t, &mut out);
    out
}

pub fn write_term(store: &TermStore, t: TermId, out: &mut String) {
    let head = match store.kind(t) {
        Kind::True => {
            out.push_str("true");
            return;
        }
        Kind::False => {
            out.push_str("false");
            return;
        }
        Kind::App(f) => {
            let name = &store.symbol(f).spelling;
            if store.args(t).is_empty() {
                out.push_str(name);
                return;
            }
            name.as_str()
        }
        Kind::Eq => "=",
        Kind::Distinct => "distinct",
        Kind::Not => "not",
        Kind::And => "and",
        Kind::Or => "or",
        Kind::Xor => "xor",
        Kind::Implies => "=>",
        Kind::Ite => "ite",
    };
    out.push('(');
    out.push_str(head);
    for &a in store.args(t) {
        out.push(' ');
        write_term(store, a, out);
    }
    out.push(')');
}

/// A complete script: every declared sort and symbol, the given
/// assertions and a trailing `(check-sat)`.
pub fn script_text(store: &TermStore, assertions: &[TermId]) -> String {
    let mut out = String::from("(set-logic QF_UF)\n");
    for s in store.user_sorts() {
        let _ = writeln!(out, "(declare-sort {} 0)", store.sort(s).spelling);
    }
    for f in store.symbols() {
        let sym = store.symbol(f);
        let args: Vec<&str> = sym
            .arg_sorts
            .iter()
            .map(|&s| store.sort(s).spelling.as_str())
            .collect();
        let _ = writeln!(
            out,
            "(declare-fun {} ({}) {})",
            sym.spelling,
            args.join(" "),
            store.sort(sym.ret_sort).spelling
        );
    }
    for &a in assertions {
        out.push_str("(assert ");
        write_term(store, a, &mut out);
        out.push_str(")\n");
    }
    out.push_str("(check-sat)\n");
    out
}
