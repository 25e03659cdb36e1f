use std::process::ExitCode;

fn main() -> ExitCode {
    soda::cli::main()
}
