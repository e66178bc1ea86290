use std::process::ExitCode;

use alqg_cli::commands::{self, Exit, OUT_ENV};
use alqg_cli::{Cli, Command};
use clap::Parser;

fn code(e: Exit) -> ExitCode {
    ExitCode::from(e as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let env_out = std::env::var(OUT_ENV).ok();
            match commands::cmd_run(&args, env_out.as_deref()) {
                Ok(reports) => {
                    for r in &reports {
                        let s = &r.summary;
                        let status = if r.aborted { "aborted" } else { "completed" };
                        println!(
                            "{}: {status} J_hat={:.6} J_star={:.6} stability_stat={:.6} beta_switches={}",
                            r.dir.display(),
                            s.j_hat,
                            s.j_star,
                            s.stability_stat,
                            s.beta_switches
                        );
                    }
                    code(commands::run_exit(&reports))
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code(e.exit())
                }
            }
        }
        Command::Oracle { config } => match commands::cmd_oracle(&config) {
            Ok(v) => {
                println!("{}", serde_json::to_string_pretty(&v).expect("oracle output serializes"));
                code(Exit::Ok)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(e.exit())
            }
        },
        Command::Audit { samples, seed } => {
            let report = commands::cmd_audit(samples, seed);
            println!("{}", serde_json::to_string_pretty(&report).expect("audit report serializes"));
            code(commands::audit_exit(&report))
        }
    }
}
