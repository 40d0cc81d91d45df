//! Library surface of the experiment runner, exposed so integration tests
//! can exercise config parsing and output handling directly.

pub mod account;
pub mod config;
pub mod kappa;
pub mod output;
pub mod run;
pub mod sweep;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}
