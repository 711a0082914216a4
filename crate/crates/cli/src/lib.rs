//! Command-line front end: `qlc/1` netlists and the `qlc` subcommands.

// `!(x >= 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod netlist;

use std::ffi::OsString;

use clap::Parser;

pub use commands::{Cli, CliError};
pub use netlist::{emit_netlist, parse_netlist, Netlist, NetlistError};

/// Runs the CLI on `args` (including the program name) and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qlc: {e}");
            e.exit_code()
        }
    }
}
