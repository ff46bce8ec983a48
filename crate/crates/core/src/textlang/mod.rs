//! Concrete `.bip` syntax: lexer, error-recovering parser and canonical printer.

mod lexer;
mod parser;
mod printer;

pub use lexer::is_keyword;
pub use parser::{parse, parse_expr};
pub use printer::{pretty_print, print_action, print_connector, print_expr};
