mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use nubblematch_core::report::canonical_json;
use nubblematch_core::Error;
use serde_json::Value;

fn exit_for(e: &Error) -> ExitCode {
    if e.is_io() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    let name = command_name(&cli.command);
    let result = commands::run(cli.command).and_then(|mut run| {
        let paths = run.outputs.paths();
        run.outputs.commit()?;
        run.summary.insert("command".into(), name.into());
        run.summary.insert("outputs".into(), paths.into());
        Ok(run.summary)
    });
    match result {
        Ok(summary) => {
            println!("{}", canonical_json(&Value::Object(summary)));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn command_name(c: &args::Command) -> &'static str {
    use args::Command::*;
    match c {
        Normalize(_) => "normalize",
        Drop(_) => "drop",
        Trim(_) => "trim",
        Prune(_) => "prune",
        Match(_) => "match",
        Prompts(_) => "prompts",
        Segment(_) => "segment",
        Iou(_) => "iou",
        Mismatch(_) => "mismatch",
        Diagnose(_) => "diagnose",
        Interaction(_) => "interaction",
        Synth(_) => "synth",
        Sweep(_) => "sweep",
        Curve(_) => "curve",
    }
}
