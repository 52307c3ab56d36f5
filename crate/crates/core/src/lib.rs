pub mod ast;
pub mod engine;
pub mod env;
pub mod fol;
pub mod gen;
pub mod num;
pub mod oracle;
pub mod parser;
pub mod reduction;
pub mod translate;
