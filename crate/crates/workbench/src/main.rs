use std::io::{self, BufReader};
use std::process::ExitCode;

use omega_workbench::cli::{run, MAX_SEARCH_VAR};

fn main() -> ExitCode {
    let budget = std::env::var(MAX_SEARCH_VAR).ok();
    let stdin = io::stdin();
    let mut input = BufReader::new(stdin.lock());
    let code = run(
        std::env::args_os(),
        budget.as_deref(),
        &mut input,
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    ExitCode::from(code as u8)
}
