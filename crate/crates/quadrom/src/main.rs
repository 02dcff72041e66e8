use std::process::ExitCode;

fn main() -> ExitCode {
    match quadrom::cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(clap_err) = e.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return if clap_err.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
            }
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}
