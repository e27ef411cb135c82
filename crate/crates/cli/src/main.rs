use std::process::ExitCode;

fn main() -> ExitCode {
    pca_oracle_cli::main_with(std::env::args_os())
}
