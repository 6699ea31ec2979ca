use std::process::ExitCode;

fn main() -> ExitCode {
    hris_cli::cli_main(std::env::args_os())
}
