//! SMT-LIB 2 front end for the QF_UF fragment.

mod lexer;
mod parser;
mod printer;

use std::ops::Range;

use thiserror::Error;

use crate::terms::{SortId, SymbolId, TermError, TermId, TermStore};

pub use lexer::{line_col, read_all, SExpr, Token};
pub use parser::{parse_script, parse_script_into};
pub use printer::{print_term, quote_symbol, script_text, write_term};

pub type Span = Range<usize>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{line}:{col}: lexical error: {msg}")]
    Lex { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: parse error: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: undeclared symbol `{name}`")]
    UndeclaredSymbol { line: usize, col: usize, name: String },
    #[error("{line}:{col}: {source}")]
    Sort {
        line: usize,
        col: usize,
        #[source]
        source: TermError,
    },
    #[error("{line}:{col}: unsupported feature: {what}")]
    Unsupported { line: usize, col: usize, what: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CommandKind {
    SetLogic(String),
    SetInfo(String),
    SetOption(String),
    DeclareSort(SortId),
    DeclareFun(SymbolId),
    DeclareConst(SymbolId),
    Assert(TermId),
    CheckSat,
    GetModel,
    Exit,
}

#[derive(Clone, Debug)]
pub struct Command {
    pub kind: CommandKind,
    pub span: Span,
}

/// A parsed script together with the term store it was elaborated into.
#[derive(Clone, Debug)]
pub struct Script {
    pub store: TermStore,
    pub commands: Vec<Command>,
    pub warnings: Vec<String>,
}

impl Script {
    /// Assertions that precede the first `check-sat` (all of them if there
    /// is none). Later assertions are ignored.
    pub fn assertions(&self) -> Vec<TermId> {
        let mut out = Vec::new();
        for c in &self.commands {
            match c.kind {
                CommandKind::Assert(t) => out.push(t),
                CommandKind::CheckSat => break,
                _ => {}
            }
        }
        out
    }

    pub fn logic(&self) -> Option<&str> {
        self.commands.iter().find_map(|c| match &c.kind {
            CommandKind::SetLogic(l) => Some(l.as_str()),
            _ => None,
        })
    }
}

/// Evaluator contract for n-ary `xor`: true iff an odd number of inputs
/// are true.
pub fn xor_semantics(values: &[bool]) -> bool {
    values.iter().filter(|&&v| v).count() % 2 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_is_parity() {
        assert!(!xor_semantics(&[true, true]));
        assert!(xor_semantics(&[true, true, true]));
        // left fold of binary xor
        let input = [false, false, false, false, true];
        let folded = input.iter().fold(false, |acc, &v| acc ^ v);
        assert_eq!(xor_semantics(&input), folded);
        assert!(folded);
    }
}
