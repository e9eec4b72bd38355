use std::process::ExitCode;

fn main() -> ExitCode {
    vsd::cli::main()
}
