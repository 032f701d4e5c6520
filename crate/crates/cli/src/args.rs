//! Flag parsing: exact flags per subcommand, unknown flags rejected.

use std::path::PathBuf;

use crate::error::{CliError, Result};

pub const USAGE: &str = "\
usage: dsc <command> [flags]

commands:
  gen-data      --out DIR --samples N --seed S [--scale F] [--paper-scale]
  train         --config FILE --data DIR --out DIR
  eval          --ckpt FILE --data DIR [--zones FILE] [--config FILE] [--out DIR]
  infer         --ckpt FILE --sample DIR --out FILE.{ply|csv|pcdm} [--threshold P] [--config FILE]
  count         --config FILE [--compare] [--no-trunk]
  validate-pcdm FILE...

environment:
  DSC_THREADS   caps worker threads (default: available parallelism)
";

#[derive(Debug)]
pub enum Command {
    GenData {
        out: PathBuf,
        samples: usize,
        seed: u64,
        scale: f64,
    },
    Train {
        config: PathBuf,
        data: PathBuf,
        out: PathBuf,
    },
    Eval {
        ckpt: PathBuf,
        data: PathBuf,
        zones: Option<PathBuf>,
        config: Option<PathBuf>,
        out: Option<PathBuf>,
    },
    Infer {
        ckpt: PathBuf,
        sample: PathBuf,
        out: PathBuf,
        threshold: f64,
        config: Option<PathBuf>,
    },
    Count {
        config: PathBuf,
        compare: bool,
        no_trunk: bool,
    },
    ValidatePcdm {
        files: Vec<PathBuf>,
    },
    Help,
}

struct Flags {
    args: Vec<String>,
    at: usize,
}

impl Flags {
    fn next_flag(&mut self) -> Option<String> {
        if self.at < self.args.len() {
            let f = self.args[self.at].clone();
            self.at += 1;
            Some(f)
        } else {
            None
        }
    }

    fn value(&mut self, flag: &str) -> Result<String> {
        if self.at >= self.args.len() {
            return Err(CliError::usage(format!("{flag} needs a value")));
        }
        let v = self.args[self.at].clone();
        self.at += 1;
        Ok(v)
    }
}

fn parse_num<T: std::str::FromStr>(flag: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::usage(format!("{flag}: bad value `{v}`")))
}

pub fn parse(args: Vec<String>) -> Result<Command> {
    let Some(cmd) = args.first().cloned() else {
        return Ok(Command::Help);
    };
    let mut flags = Flags { args, at: 1 };
    match cmd.as_str() {
        "help" | "--help" | "-h" => Ok(Command::Help),
        "gen-data" => {
            let mut out = None;
            let mut samples = None;
            let mut seed = None;
            let mut scale = 0.25f64;
            while let Some(f) = flags.next_flag() {
                match f.as_str() {
                    "--out" => out = Some(PathBuf::from(flags.value(&f)?)),
                    "--samples" => samples = Some(parse_num(&f, &flags.value(&f)?)?),
                    "--seed" => seed = Some(parse_num(&f, &flags.value(&f)?)?),
                    "--scale" => scale = parse_num(&f, &flags.value(&f)?)?,
                    "--paper-scale" => scale = 1.0,
                    other => return Err(CliError::usage(format!("unknown flag `{other}`"))),
                }
            }
            if !(scale > 0.0 && scale <= 1.0) {
                return Err(CliError::usage("--scale must be in (0, 1]"));
            }
            Ok(Command::GenData {
                out: out.ok_or_else(|| CliError::usage("gen-data needs --out"))?,
                samples: samples.ok_or_else(|| CliError::usage("gen-data needs --samples"))?,
                seed: seed.ok_or_else(|| CliError::usage("gen-data needs --seed"))?,
                scale,
            })
        }
        "train" => {
            let mut config = None;
            let mut data = None;
            let mut out = None;
            while let Some(f) = flags.next_flag() {
                match f.as_str() {
                    "--config" => config = Some(PathBuf::from(flags.value(&f)?)),
                    "--data" => data = Some(PathBuf::from(flags.value(&f)?)),
                    "--out" => out = Some(PathBuf::from(flags.value(&f)?)),
                    other => return Err(CliError::usage(format!("unknown flag `{other}`"))),
                }
            }
            Ok(Command::Train {
                config: config.ok_or_else(|| CliError::usage("train needs --config"))?,
                data: data.ok_or_else(|| CliError::usage("train needs --data"))?,
                out: out.ok_or_else(|| CliError::usage("train needs --out"))?,
            })
        }
        "eval" => {
            let mut ckpt = None;
            let mut data = None;
            let mut zones = None;
            let mut config = None;
            let mut out = None;
            while let Some(f) = flags.next_flag() {
                match f.as_str() {
                    "--ckpt" => ckpt = Some(PathBuf::from(flags.value(&f)?)),
                    "--data" => data = Some(PathBuf::from(flags.value(&f)?)),
                    "--zones" => zones = Some(PathBuf::from(flags.value(&f)?)),
                    "--config" => config = Some(PathBuf::from(flags.value(&f)?)),
                    "--out" => out = Some(PathBuf::from(flags.value(&f)?)),
                    other => return Err(CliError::usage(format!("unknown flag `{other}`"))),
                }
            }
            Ok(Command::Eval {
                ckpt: ckpt.ok_or_else(|| CliError::usage("eval needs --ckpt"))?,
                data: data.ok_or_else(|| CliError::usage("eval needs --data"))?,
                zones,
                config,
                out,
            })
        }
        "infer" => {
            let mut ckpt = None;
            let mut sample = None;
            let mut out = None;
            let mut threshold = 0.5f64;
            let mut config = None;
            while let Some(f) = flags.next_flag() {
                match f.as_str() {
                    "--ckpt" => ckpt = Some(PathBuf::from(flags.value(&f)?)),
                    "--sample" => sample = Some(PathBuf::from(flags.value(&f)?)),
                    "--out" => out = Some(PathBuf::from(flags.value(&f)?)),
                    "--threshold" => threshold = parse_num(&f, &flags.value(&f)?)?,
                    "--config" => config = Some(PathBuf::from(flags.value(&f)?)),
                    other => return Err(CliError::usage(format!("unknown flag `{other}`"))),
                }
            }
            if !threshold.is_finite() || threshold < 0.0 {
                return Err(CliError::usage("--threshold must be a nonnegative number"));
            }
            Ok(Command::Infer {
                ckpt: ckpt.ok_or_else(|| CliError::usage("infer needs --ckpt"))?,
                sample: sample.ok_or_else(|| CliError::usage("infer needs --sample"))?,
                out: out.ok_or_else(|| CliError::usage("infer needs --out"))?,
                threshold,
                config,
            })
        }
        "count" => {
            let mut config = None;
            let mut compare = false;
            let mut no_trunk = false;
            while let Some(f) = flags.next_flag() {
                match f.as_str() {
                    "--config" => config = Some(PathBuf::from(flags.value(&f)?)),
                    "--compare" => compare = true,
                    "--no-trunk" => no_trunk = true,
                    other => return Err(CliError::usage(format!("unknown flag `{other}`"))),
                }
            }
            Ok(Command::Count {
                config: config.ok_or_else(|| CliError::usage("count needs --config"))?,
                compare,
                no_trunk,
            })
        }
        "validate-pcdm" => {
            let mut files = Vec::new();
            while let Some(f) = flags.next_flag() {
                if f.starts_with("--") {
                    return Err(CliError::usage(format!("unknown flag `{f}`")));
                }
                files.push(PathBuf::from(f));
            }
            Ok(Command::ValidatePcdm { files })
        }
        other => Err(CliError::usage(format!("unknown command `{other}`"))),
    }
}
