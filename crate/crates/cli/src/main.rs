use std::process::ExitCode;

use dsc_cli::error::CliError;
use dsc_cli::run;

use dsc_cli::args::{parse, Command, USAGE};

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Help => {
            print!("{USAGE}");
            Ok(())
        }
        Command::GenData {
            out,
            samples,
            seed,
            scale,
        } => run::gen_data_command(&run::GenDataArgs {
            out: &out,
            samples,
            seed,
            scale,
        }),
        Command::Train { config, data, out } => run::train_command(&config, &data, &out),
        Command::Eval {
            ckpt,
            data,
            zones,
            config,
            out,
        } => run::eval_command(&run::EvalArgs {
            ckpt: &ckpt,
            data_dir: &data,
            zones: zones.as_deref(),
            config: config.as_deref(),
            out_dir: out.as_deref(),
        }),
        Command::Infer {
            ckpt,
            sample,
            out,
            threshold,
            config,
        } => run::infer_command(&run::InferArgs {
            ckpt: &ckpt,
            sample_dir: &sample,
            out: &out,
            threshold,
            config: config.as_deref(),
        }),
        Command::Count {
            config,
            compare,
            no_trunk,
        } => run::count_command(&config, compare, no_trunk),
        Command::ValidatePcdm { files } => run::validate_command(&files),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cmd = match parse(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            eprint!("{USAGE}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
