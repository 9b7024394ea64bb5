//! `qsym`: verification suites for relative endoscopy on U(2n)/U(n)×U(n).

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qsym::endoscopy::EndoDatum;
use qsym::harness::{self, Report, Suite, VerifyConfig};
use qsym::lattice::FormLabel;
use qsym::matalg::{EMatrix, EPoly};
use qsym::orbital::{kappa_orbital, oracle_auto, orbit_integral_auto, orbit_integral_lie_auto, stable_orbital_lie_one};
use qsym::symspace::{lift_from_herm, SymPoint};
use qsym::PrecisionContext;
use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qsym", version, about = "Exact p-adic checks of the relative fundamental lemma")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Group fundamental lemma on sampled matched pairs.
    VerifyFl(Common),
    /// Lie-algebra fundamental lemma.
    VerifyLie(Common),
    /// Descent identities on the descent locus.
    VerifyDescent(Common),
    /// Property suites (cayley, tjd, lattice, oracle).
    Props {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset; all four by default.
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
    },
    /// Orbital integrals of `lift(diag(roots))` (or its Lie analogue).
    Orbit {
        #[command(flatten)]
        common: Common,
        /// Contraction roots, integers.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        roots: Vec<i64>,
        #[arg(long)]
        lie: bool,
        /// Also run the double-coset oracle.
        #[arg(long)]
        oracle: bool,
    },
    /// Re-run cases of a saved report and compare.
    Replay {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        case: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 3)]
    p: u32,
    #[arg(long, default_value_t = 12)]
    precision: u32,
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Endoscopic split `a,b`; defaults to `1,n−1`.
    #[arg(long)]
    datum: Option<String>,
    #[arg(long, default_value = "split")]
    alpha: String,
    #[arg(long, default_value = "split")]
    beta: String,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl Common {
    fn config(&self, suites: Vec<Suite>) -> Result<VerifyConfig> {
        let (a, b) = match &self.datum {
            Some(s) => {
                let parts: Vec<&str> = s.split(',').collect();
                if parts.len() != 2 {
                    bail!("--datum expects a,b");
                }
                (parts[0].trim().parse()?, parts[1].trim().parse()?)
            }
            None => (1usize.min(self.n), self.n.saturating_sub(1)),
        };
        let datum = EndoDatum::new(a, b, FormLabel::parse(&self.alpha)?, FormLabel::parse(&self.beta)?);
        let cfg = VerifyConfig {
            p: self.p,
            precision: self.precision,
            n: self.n,
            datum,
            trials: self.trials,
            seed: self.seed,
            window: self.window,
            suites,
            cache_dir: self.cache_dir.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_out(path: &Option<PathBuf>, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn finish(report: Report, out: &Option<PathBuf>) -> Result<ExitCode> {
    write_out(out, &report.to_json())?;
    for s in &report.suites {
        let tally = report.suite_tally(s.suite);
        eprintln!(
            "{:<8} cases {:>4}  pass {:>4}  fail {:>3}  error {:>3}  vacuous {:>3}  {} ms",
            s.suite.as_str(),
            tally.cases,
            tally.passed,
            tally.failed,
            tally.errors,
            tally.vacuous,
            s.runtime_ms
        );
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn orbit(common: &Common, roots: &[i64], lie: bool, oracle: bool) -> Result<ExitCode> {
    let mut c = common.clone();
    c.n = roots.len();
    if c.datum.is_none() {
        c.datum = Some(format!("{},0", roots.len()));
    }
    let cfg = c.config(vec![])?;
    let ctx = PrecisionContext::new(cfg.p, cfg.precision)?;
    let ocfg = cfg.orbital();
    let diag = EMatrix::diag(&ctx, &roots.iter().map(|&r| ctx.e_int(r)).collect::<Vec<_>>());
    let forms = SymPoint::split_forms(&ctx, roots.len());
    let out = if lie {
        let xm = qsym::dynamics::lie_lift_from_herm(&diag, &forms)?;
        let r = orbit_integral_lie_auto(&xm, &forms, &ocfg)?;
        json!({"lie": true, "roots": roots, "delta": xm.to_json(), "orbit": r.to_json(), "stable": stable_orbital_lie_one(&xm, &forms, &ocfg)?})
    } else {
        let x = lift_from_herm(&diag, &forms)?;
        let r = orbit_integral_auto(&x, &ocfg)?;
        let mut v = json!({"lie": false, "roots": roots, "x": x.to_json(), "orbit": r.to_json()});
        if cfg.datum.a > 0 && cfg.datum.b > 0 {
            let chi_a = roots[..cfg.datum.a].iter().fold(EPoly::constant(&ctx, ctx.e_one()), |f, &r| f.mul(&EPoly::linear(&ctx, ctx.e_int(r))));
            let chi_b = roots[cfg.datum.a..].iter().fold(EPoly::constant(&ctx, ctx.e_one()), |f, &r| f.mul(&EPoly::linear(&ctx, ctx.e_int(r))));
            v["orb_kappa"] = kappa_orbital(&x, &cfg.datum, (&chi_a, &chi_b), &ocfg)?.to_json();
        }
        if oracle {
            let (o, level) = oracle_auto(&x, r.window, r.window + 3)?;
            v["oracle"] = json!({"count": o, "level": level});
        }
        v
    };
    write_out(&common.out, &json!({"schema": harness::SCHEMA, "orbit": out}))?;
    Ok(ExitCode::SUCCESS)
}

fn replay(report: &PathBuf, suite: &Option<String>, case: Option<usize>, out: &Option<PathBuf>) -> Result<ExitCode> {
    let text = std::fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?;
    let v: Value = serde_json::from_str(&text)?;
    let only = match (suite, case) {
        (Some(s), Some(i)) => Some((Suite::parse(s)?, i)),
        (None, None) => None,
        _ => bail!("--suite and --case go together"),
    };
    let reps = harness::replay_report(&v, only)?;
    let all_ok = reps.iter().all(|r| r.reproduced && matches!(r.record.verdict, harness::Verdict::Pass | harness::Verdict::Vacuous));
    let rows: Vec<Value> = reps
        .iter()
        .map(|r| json!({"suite": r.suite.as_str(), "index": r.index, "reproduced": r.reproduced, "verdict": r.record.verdict.as_str()}))
        .collect();
    write_out(out, &json!({"schema": harness::SCHEMA, "replayed": rows}))?;
    eprintln!("replayed {} cases, {} reproduced", reps.len(), reps.iter().filter(|r| r.reproduced).count());
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::VerifyFl(c) => c.config(vec![Suite::Fl]).and_then(|cfg| Ok(harness::verify_fl(&cfg)?)).and_then(|r| finish(r, &c.out)),
        Cmd::VerifyLie(c) => c.config(vec![Suite::FlLie]).and_then(|cfg| Ok(harness::verify_fl_lie(&cfg)?)).and_then(|r| finish(r, &c.out)),
        Cmd::VerifyDescent(c) => c.config(vec![Suite::Descent]).and_then(|cfg| Ok(harness::verify_descent(&cfg)?)).and_then(|r| finish(r, &c.out)),
        Cmd::Props { common, suite } => suite
            .iter()
            .map(|s| Suite::parse(s).map_err(anyhow::Error::from))
            .collect::<Result<Vec<_>>>()
            .and_then(|ss| common.config(ss))
            .and_then(|cfg| Ok(harness::property_suite(&cfg)?))
            .and_then(|r| finish(r, &common.out)),
        Cmd::Orbit { common, roots, lie, oracle } => orbit(common, roots, *lie, *oracle),
        Cmd::Replay { report, suite, case, out } => replay(report, suite, *case, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
