use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPEX_LOG", "info")).init();
    ExitCode::from(spex_cli::main_with_args(std::env::args().collect()))
}
