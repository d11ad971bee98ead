use std::io::Write;

use clap::Args;

use mementos::canonical;

use crate::Exit;

#[derive(Debug, Args)]
pub struct CanonArgs {
    /// Report malformed URIs and continue instead of stopping at the first.
    #[arg(long)]
    pub keep_going: bool,

    #[arg(required = true)]
    pub uris: Vec<String>,
}

pub fn run(args: &CanonArgs) -> Exit {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut failed = false;
    for uri in &args.uris {
        match canonical::surt(uri) {
            Ok(key) => {
                let _ = writeln!(out, "{key}");
            }
            Err(e) => {
                eprintln!("{uri}: {e}");
                failed = true;
                if !args.keep_going {
                    break;
                }
            }
        }
    }
    if failed {
        Exit::Partial
    } else {
        Exit::Ok
    }
}
