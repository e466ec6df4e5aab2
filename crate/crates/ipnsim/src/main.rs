use std::process::ExitCode;

fn main() -> ExitCode {
    ipnsim::cli::main()
}
