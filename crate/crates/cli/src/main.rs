use clap::Parser;
use relucert_cli::{run, RunConfig, EXIT_INPUT};

fn main() {
    let cfg = match RunConfig::try_parse() {
        Ok(cfg) => cfg,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            std::process::exit(EXIT_INPUT);
        }
        Err(e) => {
            let _ = e.print();
            std::process::exit(0);
        }
    };
    let code = run(&cfg, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
