use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    match dre::run(std::env::args_os()) {
        Ok(Some(summary)) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            // A closed stdout (e.g. piped into `head`) is not a failure of the run.
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
