//! One line per acceptance criterion. Runs as a plain binary so the lines
//! are always printed; exits nonzero if any criterion fails.

use qsym::endoscopy::EndoDatum;
use qsym::harness::{self, CaseRecord, Report, Suite, Verdict, VerifyConfig};
use qsym::lattice::FormLabel;
use serde_json::Value;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

/// Relative precision for every run.
const N: u32 = 12;
/// Cayley identities are checked mod p^(N - CAYLEY_LOSS).
const CAYLEY_LOSS: u32 = 2;
const FL_TRIALS: usize = 50;
const RAMIFIED_MIN: usize = 20;
const CAYLEY_TRIALS: usize = 200;
const TJD_TRIALS: usize = 100;
const DESCENT_MIN: usize = 20;
const ORACLE_RANK1: usize = 20;
const ORACLE_RANK2: usize = 5;
const FL_BUDGET: Duration = Duration::from_secs(5 * 60);
const CLI_BUDGET: Duration = Duration::from_secs(15 * 60);

fn split() -> EndoDatum {
    EndoDatum::new(1, 1, FormLabel::Split, FormLabel::Split)
}

fn ramified() -> EndoDatum {
    EndoDatum::new(1, 1, FormLabel::NonSplit, FormLabel::NonSplit)
}

fn config(p: u32, datum: EndoDatum, suite: Suite, trials: usize) -> VerifyConfig {
    VerifyConfig { p, precision: N, n: datum.n(), datum, trials, suites: vec![suite], ..VerifyConfig::default() }
}

fn flag(c: &CaseRecord, key: &str) -> bool {
    c.result.get(key).and_then(Value::as_bool) == Some(true)
}

fn all_pass(r: &Report, s: Suite) -> Result<usize, String> {
    let mut n = 0;
    for c in r.cases(s) {
        if c.verdict != Verdict::Pass {
            return Err(format!("{} case {} ({}): {} {}", s.as_str(), c.index, c.kind, c.verdict.as_str(), c.error.clone().unwrap_or_default()));
        }
        n += 1;
    }
    Ok(n)
}

fn require(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn has_kinds(r: &Report, s: Suite, kinds: &[&str]) -> Result<(), String> {
    for k in kinds {
        require(r.cases(s).any(|c| c.kind == *k), format!("no {k} case in {}", s.as_str()))?;
    }
    Ok(())
}

fn c1() -> Result<String, String> {
    let t = Instant::now();
    let mut total = 0;
    for p in [3, 5] {
        let r = harness::verify_fl(&config(p, split(), Suite::Fl, FL_TRIALS)).map_err(|e| e.to_string())?;
        total += all_pass(&r, Suite::Fl)?;
        has_kinds(&r, Suite::Fl, &["vdiff0", "vdiff1", "vdiff2", "descent"])?;
        for c in r.cases(Suite::Fl) {
            require(c.result["identity"] == "delta * orb_kappa == so" && flag(c, "saturated"), format!("p={p} case {}", c.index))?;
        }
    }
    let el = t.elapsed();
    require(el <= FL_BUDGET, format!("took {el:?}"))?;
    Ok(format!("{total} exact equalities over p=3,5 in {:.1}s", el.as_secs_f64()))
}

fn c2() -> Result<String, String> {
    // (split, nonsplit) has no matched pair at all: the valuation parity of
    // det(1 − A²) differs between the sides, so every case is vacuous
    let obstructed = EndoDatum::new(1, 1, FormLabel::Split, FormLabel::NonSplit);
    require(harness::datum_is_obstructed(&obstructed), "split/nonsplit not obstructed")?;
    let r = harness::verify_fl(&config(3, obstructed, Suite::Fl, 5)).map_err(|e| e.to_string())?;
    require(r.cases(Suite::Fl).all(|c| c.verdict == Verdict::Vacuous), "split/nonsplit produced a non-vacuous case")?;
    let mut zeros = 0;
    let mut nonzero_terms = 0;
    for p in [3, 5] {
        let r = harness::verify_fl(&config(p, ramified(), Suite::Fl, FL_TRIALS)).map_err(|e| e.to_string())?;
        zeros += all_pass(&r, Suite::Fl)?;
        for c in r.cases(Suite::Fl) {
            require(c.result["orb_kappa"]["value"] == 0, format!("p={p} case {} nonzero", c.index))?;
            let terms = c.result["orb_kappa"]["breakdown"].as_array().cloned().unwrap_or_default();
            nonzero_terms += terms.iter().filter(|b| b["orbit"]["count"].as_u64().unwrap_or(0) > 0).count();
        }
    }
    require(zeros >= RAMIFIED_MIN, format!("only {zeros} cases"))?;
    Ok(format!("Orb^kappa = 0 in {zeros} nonsplit/nonsplit cases ({nonzero_terms} nonzero orbit terms cancelled); split/nonsplit vacuous"))
}

fn c3() -> Result<String, String> {
    let mut total = 0;
    for (p, d) in [(3, split()), (5, split()), (3, ramified())] {
        let r = harness::verify_fl_lie(&config(p, d, Suite::FlLie, FL_TRIALS)).map_err(|e| e.to_string())?;
        total += all_pass(&r, Suite::FlLie)?;
        has_kinds(&r, Suite::FlLie, &["vdiff0", "vdiff1", "vdiff2", "nonintegral"])?;
    }
    Ok(format!("{total} Lie cases exact (p=3,5 split; p=3 nonsplit/nonsplit)"))
}

fn c4() -> Result<String, String> {
    let mut cfg = config(3, split(), Suite::Cayley, CAYLEY_TRIALS);
    cfg.n = 3;
    cfg.datum = EndoDatum::new(1, 2, FormLabel::Split, FormLabel::Split);
    let r = harness::property_suite(&cfg).map_err(|e| e.to_string())?;
    let n = all_pass(&r, Suite::Cayley)?;
    require(n == CAYLEY_TRIALS, "trial count")?;
    for c in r.cases(Suite::Cayley) {
        for k in ["roundtrip", "equivariance", "contraction", "charpoly", "discriminant"] {
            require(flag(c, k), format!("case {} {k}", c.index))?;
        }
    }
    has_kinds(&r, Suite::Cayley, &["rank1", "rank2", "rank3"])?;
    Ok(format!("{n} deltas, ranks 1..3, mod p^{}", N - CAYLEY_LOSS))
}

fn c5() -> Result<String, String> {
    let r = harness::property_suite(&config(3, split(), Suite::Tjd, TJD_TRIALS)).map_err(|e| e.to_string())?;
    let n = all_pass(&r, Suite::Tjd)?;
    for c in r.cases(Suite::Tjd) {
        for k in ["commute", "reassemble", "as_fixed", "tu_unipotent", "membership", "idempotence", "conjugation_uniqueness"] {
            require(flag(c, k), format!("case {} {k}", c.index))?;
        }
    }
    has_kinds(&r, Suite::Tjd, &["identity", "minus_identity"])?;
    Ok(format!("{n} samples including +I and -I"))
}

fn c6() -> Result<String, String> {
    let r = harness::verify_descent(&config(3, split(), Suite::Descent, FL_TRIALS)).map_err(|e| e.to_string())?;
    let n = all_pass(&r, Suite::Descent)?;
    require(n >= DESCENT_MIN, format!("only {n} cases"))?;
    for c in r.cases(Suite::Descent) {
        for k in ["product_identity", "transfer_factorization", "eigen_restriction"] {
            require(flag(c, k), format!("case {} {k}", c.index))?;
        }
    }
    let both = r.cases(Suite::Descent).filter(|c| c.result["pieces"] == 2).count();
    require(both > 0, "no case touches both eigenvalues")?;
    let rr = harness::verify_descent(&config(3, ramified(), Suite::Descent, DESCENT_MIN)).map_err(|e| e.to_string())?;
    let m = all_pass(&rr, Suite::Descent)?;
    Ok(format!("{n} split cases ({both} at both +1 and -1), {m} ramified vanishing"))
}

fn c7() -> Result<String, String> {
    let r = harness::property_suite(&config(3, split(), Suite::Oracle, ORACLE_RANK1 + ORACLE_RANK2)).map_err(|e| e.to_string())?;
    all_pass(&r, Suite::Oracle)?;
    let rank = |k: &str| r.cases(Suite::Oracle).filter(|c| c.kind.starts_with(k)).count();
    require(rank("rank1") == ORACLE_RANK1 && rank("rank2") == ORACLE_RANK2, "rank mix")?;
    for c in r.cases(Suite::Oracle) {
        let e = &c.result["engine"];
        require(e["saturated"] == true && e["count"] == c.result["oracle"], format!("case {}", c.index))?;
    }
    Ok(format!("engine == oracle on {ORACLE_RANK1} rank-1 and {ORACLE_RANK2} rank-2 points, all saturated"))
}

fn c8() -> Result<String, String> {
    let dir: PathBuf = std::env::temp_dir().join(format!("qsym-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let t = Instant::now();
    for cmd in ["props", "verify-fl", "verify-lie", "verify-descent"] {
        let out = dir.join(format!("{cmd}.json"));
        let st = Command::new(env!("CARGO_BIN_EXE_qsym"))
            .args([cmd, "--p", "3", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        require(st.status.code() == Some(0), format!("{cmd} exited with {:?}", st.status.code()))?;
        let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
        let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        harness::validate_report(&v).map_err(|e| format!("{cmd}: {e}"))?;
    }
    let el = t.elapsed();
    let _ = std::fs::remove_dir_all(&dir);
    require(el <= CLI_BUDGET, format!("took {el:?}"))?;
    Ok(format!("4 commands exit 0 with valid reports in {:.1}s", el.as_secs_f64()))
}

type Criterion = (&'static str, fn() -> Result<String, String>);

fn main() {
    let criteria: [Criterion; 8] = [
        ("fundamental lemma, unramified", c1),
        ("fundamental lemma, ramified", c2),
        ("Lie-algebra fundamental lemma", c3),
        ("Cayley suite", c4),
        ("TJD suite", c5),
        ("descent suite", c6),
        ("counting model vs oracle", c7),
        ("default CLI run", c8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("criterion {} [{name}]: PASS  {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL  {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
