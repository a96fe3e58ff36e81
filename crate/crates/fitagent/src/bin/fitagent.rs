use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match fitagent::cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version arrive through the error path; real flag
            // mistakes must exit 1 because 2 already means "no equation".
            let wanted = !e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if wanted { 0 } else { 1 });
        }
    };
    ExitCode::from(fitagent::cli::dispatch(cli) as u8)
}
