use std::process::ExitCode;

fn main() -> ExitCode {
    moje_cli::main_impl()
}
