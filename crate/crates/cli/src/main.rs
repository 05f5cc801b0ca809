use clap::Parser;
use modemux_cli::{dispatch, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout with status 0; usage errors are domain errors
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let mut out = String::new();
    let result = dispatch(&cli, &mut out);
    print!("{out}");
    if let Err(e) = result {
        eprintln!("{}", e.report());
        std::process::exit(e.exit_code());
    }
}
