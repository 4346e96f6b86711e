use std::process::ExitCode;

fn main() -> ExitCode {
    neuroscore::cli::main()
}
