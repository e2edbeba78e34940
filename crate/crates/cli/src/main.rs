use std::process::ExitCode;

use aduq::quadrature::Method;
use aduq::uq::ExampleKind;
use aduq_cli::{checks, run, CliError};

const USAGE: &str = "\
usage: aduq <subcommand> [args]

subcommands:
  mesh-info L [--vtk FILE]     mesh counts, volume, boundary areas; optional VTK export
  kl L                         KL truncation rank, residual trace, gamma CSV
  rule METHOD L [--seed S]     dump a quadrature rule as CSV (mc | qmc | sg)
  solve EXAMPLE L [--y v1,v2,...] [--out FILE]
                               solve one sample and export the solution as VTK
  converge CONFIG              run the convergence study described by CONFIG
  check                        run the invariant self-check battery

exit codes: 0 ok, 1 usage, 2 validation, 3 numerical failure.
The thread count is taken from the config, ADUQ_THREADS, or the machine.";

fn parse_level(s: &str) -> Result<u32, CliError> {
    s.parse::<u32>()
        .map_err(|e| CliError::Usage(format!("bad level `{s}`: {e}")))
}

fn parse_flag<'a>(args: &mut Vec<&'a str>, name: &str) -> Result<Option<&'a str>, CliError> {
    if let Some(pos) = args.iter().position(|a| *a == name) {
        if pos + 1 >= args.len() {
            return Err(CliError::Usage(format!("{name} needs a value")));
        }
        let value = args.remove(pos + 1);
        args.remove(pos);
        Ok(Some(value))
    } else {
        Ok(None)
    }
}

fn dispatch(args: &[String]) -> Result<(), CliError> {
    let mut rest: Vec<&str> = args.iter().skip(2).map(String::as_str).collect();
    match args.get(1).map(String::as_str) {
        Some("mesh-info") => {
            let vtk = parse_flag(&mut rest, "--vtk")?;
            let level = parse_level(
                rest.first()
                    .ok_or_else(|| CliError::Usage("mesh-info needs a level".into()))?,
            )?;
            print!("{}", run::mesh_info(level, vtk)?);
            Ok(())
        }
        Some("kl") => {
            let level = parse_level(
                rest.first()
                    .ok_or_else(|| CliError::Usage("kl needs a level".into()))?,
            )?;
            print!("{}", run::kl_report(level)?);
            Ok(())
        }
        Some("rule") => {
            let seed = parse_flag(&mut rest, "--seed")?
                .map(|s| {
                    s.parse::<u64>()
                        .map_err(|e| CliError::Usage(format!("bad seed: {e}")))
                })
                .transpose()?
                .unwrap_or(run::DEFAULT_RULE_SEED);
            let [method, level] = rest[..] else {
                return Err(CliError::Usage("rule needs METHOD and LEVEL".into()));
            };
            let method: Method = method.parse().map_err(CliError::Usage)?;
            print!("{}", run::rule_csv(method, parse_level(level)?, seed)?);
            Ok(())
        }
        Some("solve") => {
            let y_spec = parse_flag(&mut rest, "--y")?;
            let out = parse_flag(&mut rest, "--out")?;
            let [example, level] = rest[..] else {
                return Err(CliError::Usage("solve needs EXAMPLE and LEVEL".into()));
            };
            let example = example
                .parse::<u32>()
                .ok()
                .and_then(ExampleKind::from_id)
                .ok_or_else(|| {
                    CliError::Usage(format!("example must be 1 or 2, got `{example}`"))
                })?;
            print!(
                "{}",
                run::solve_one(example, parse_level(level)?, y_spec, out)?
            );
            Ok(())
        }
        Some("converge") => {
            let [config] = rest[..] else {
                return Err(CliError::Usage("converge needs a CONFIG file".into()));
            };
            run::converge(config)
        }
        Some("check") => {
            let failures = checks::run_all();
            if failures == 0 {
                println!("all checks passed");
                Ok(())
            } else {
                Err(CliError::Numerical(aduq::Error::Domain(format!(
                    "{failures} checks failed"
                ))))
            }
        }
        Some(other) => Err(CliError::Usage(format!("unknown subcommand `{other}`"))),
        None => Err(CliError::Usage("missing subcommand".into())),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            if matches!(err, CliError::Usage(_)) {
                eprintln!("\n{USAGE}");
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
