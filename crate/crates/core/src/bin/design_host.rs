//! Serves a `design.json` artifact over the design wire protocol on
//! stdin/stdout.

use std::io::{self, BufReader};
use std::process::ExitCode;

use memarch::builtin::{serve, DesignSpec};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = match args.as_slice() {
        [flag, path] if flag == "--design" => path,
        _ => {
            eprintln!("usage: memarch-design-host --design <design.json>");
            return ExitCode::from(2);
        }
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {path}: {e}");
            return ExitCode::from(2);
        }
    };
    let spec = match DesignSpec::parse(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{path}: {e}");
            return ExitCode::from(2);
        }
    };
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = io::stdout().lock();
    ExitCode::from(serve(spec, &mut input, &mut output) as u8)
}
