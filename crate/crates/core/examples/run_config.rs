// Drive the library from a configuration file, as the binary does.
//
//   cargo run --example run_config -- crates/core/fixtures/box_rtpcr100.json worst-case

use clap::ValueEnum;
use survey_design::cli::{render_table, run, Command, Overrides};
use survey_design::config::load_config;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/rtpcr1600.json").into());
    let command = args
        .next()
        .map(|c| Command::from_str(&c, true).expect("unknown command"))
        .unwrap_or(Command::COptimal);
    let report = load_config(&path).and_then(|c| run(&c, command, &Overrides::default()));
    match report {
        Ok(r) => print!("{}", render_table(&r)),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(survey_design::cli::exit_code(&e));
        }
    }
}
