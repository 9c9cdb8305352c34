//! Command-line front end: series expansion, point evaluation, character and
//! Z-hat computation, and the verification suites, with machine-readable
//! JSON output.

use clap::{Parser, Subcommand};
use num_complex::Complex64;

use falsetheta::families::{boundary_family, eval_family, FamilyKind, FamilyLabel};
use falsetheta::numerics::{c64, TruncationBudget};
use falsetheta::qseries::{parse_rational, Coeff, QSeries};
use falsetheta::rat::{rat_i, Rational};

mod suites;

#[derive(Parser)]
#[command(
    name = "falsetheta",
    about = "False theta functions, bimodular completions, W-algebra characters and SU(3) Z-hat invariants",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a family boundary series, a unary theta function, or eta.
    Series {
        /// One of psiA1, phiA1, psiA2, phiA2, psiA3, phiA3, theta, eta.
        #[arg(long)]
        family: String,
        /// Scale p (for theta: the modulus m).
        #[arg(long, default_value_t = 2)]
        p: i64,
        /// Class label components (for theta: the residue r).
        #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "0")]
        s: Vec<i64>,
        /// Truncation order as NUM or NUM/DEN.
        #[arg(long)]
        order: String,
        #[arg(long)]
        json: bool,
    },
    /// Vacuum character of W^0(p)_{A_n}.
    Character {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: i64,
        #[arg(long)]
        order: i64,
        /// direct (Kostant sum) or signform (A_3, p >= 4).
        #[arg(long, default_value = "direct")]
        route: String,
        #[arg(long)]
        json: bool,
    },
    /// SU(3) Z-hat invariant of a Brieskorn sphere.
    Zhat {
        /// Pairwise coprime exponents P1,P2,P3.
        #[arg(long, value_delimiter = ',')]
        triple: Vec<i64>,
        #[arg(long)]
        order: i64,
        /// direct (triple chi series) or reduced (64-term G_mu combination).
        #[arg(long, default_value = "direct")]
        route: String,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a completed family member at a point of H x H.
    Eval {
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 2)]
        p: i64,
        #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "0")]
        s: Vec<i64>,
        /// tau as RE,IM.
        #[arg(long)]
        tau: String,
        /// w as RE,IM.
        #[arg(long)]
        w: String,
        /// Lattice-sum cutoff.
        #[arg(long, default_value_t = 40.0)]
        cutoff: f64,
        #[arg(long)]
        json: bool,
    },
    /// Run a verification suite; exit code 0 iff every check passes.
    Verify {
        /// One of modular, eichler, kostant, operators, zhat-consistency, all.
        #[arg(long)]
        suite: String,
        /// Extra scale parameter for the modular suite.
        #[arg(long)]
        p: Option<i64>,
        /// Override the pass tolerance of every check.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Half-width of the Kostant verification box.
        #[arg(long, default_value_t = 12)]
        kostant_box: i64,
        #[arg(long)]
        json: bool,
    },
}

fn parse_family(name: &str) -> Result<(usize, FamilyKind), String> {
    match name {
        "psiA1" => Ok((1, FamilyKind::Psi)),
        "phiA1" => Ok((1, FamilyKind::Phi)),
        "psiA2" => Ok((2, FamilyKind::Psi)),
        "phiA2" => Ok((2, FamilyKind::Phi)),
        "psiA3" => Ok((3, FamilyKind::Psi)),
        "phiA3" => Ok((3, FamilyKind::Phi)),
        other => Err(format!(
            "unknown family {other}; expected psiA1, phiA1, psiA2, phiA2, psiA3, phiA3, theta or eta"
        )),
    }
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected RE,IM, got {s}"));
    }
    let re = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let im = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok(c64(re, im))
}

fn coeff_string(c: &Coeff) -> String {
    match c {
        Coeff::Numeric(v) => format!("{} + {}i", v.re, v.im),
        Coeff::Exact(e) => {
            if let Some(r) = e.as_rational() {
                format!("{r}")
            } else {
                let parts: Vec<String> = e
                    .parts
                    .iter()
                    .map(|(k, g)| format!("({} + {}i) {}", g.re, g.im, k.json_name()))
                    .collect();
                parts.join(" + ")
            }
        }
    }
}

fn print_series(s: &QSeries, json: bool, envelope: serde_json::Value) {
    if json {
        let mut env = envelope;
        env["schema"] = serde_json::json!(1);
        env["series"] = s.to_json();
        println!("{}", serde_json::to_string(&env).expect("serializable"));
    } else {
        for (e, c) in &s.terms {
            println!("q^{{{}/{}}}  {}", e.numer(), e.denom(), coeff_string(c));
        }
    }
}

fn echo_config(value: serde_json::Value) {
    let threads = std::env::var("FALSETHETA_THREADS").unwrap_or_else(|_| "1".into());
    eprintln!("config: {}", serde_json::json!({ "invocation": value, "threads": threads }));
}

fn run() -> Result<i32, falsetheta::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Series { family, p, s, order, json } => {
            echo_config(serde_json::json!({
                "subcommand": "series", "family": family, "p": p, "s": s, "order": order
            }));
            let order: Rational = parse_rational(&order)?;
            let series = match family.as_str() {
                "eta" => falsetheta::qseries::eta(order),
                "theta" => {
                    falsetheta::qseries::unary_theta(p, s.first().copied().unwrap_or(0), 0, order)?
                }
                other => {
                    let (n, kind) =
                        parse_family(other).map_err(falsetheta::Error::InvalidArgument)?;
                    boundary_family(&FamilyLabel::new(n, p, s.clone(), kind)?, order)?
                }
            };
            print_series(
                &series,
                json,
                serde_json::json!({ "type": "series", "family": family, "p": p, "s": s }),
            );
            Ok(0)
        }
        Command::Character { n, p, order, route, json } => {
            echo_config(serde_json::json!({
                "subcommand": "character", "n": n, "p": p, "order": order, "route": route
            }));
            let spec = falsetheta::characters::CharacterSpec::new(n, p)?;
            let eta_pow_ch = match route.as_str() {
                "direct" => falsetheta::characters::vacuum_character_direct(spec, rat_i(order))?,
                "signform" => {
                    if n != 3 {
                        return Err(falsetheta::Error::InvalidArgument(
                            "the signform route applies to n = 3".into(),
                        ));
                    }
                    falsetheta::characters::vacuum_character_a3_signform(p, rat_i(order))?
                }
                other => {
                    return Err(falsetheta::Error::InvalidArgument(format!(
                        "unknown route {other}; expected direct or signform"
                    )))
                }
            };
            let ch = falsetheta::characters::divide_by_eta_pow(&eta_pow_ch, n as u32)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "schema": 1,
                        "type": "character",
                        "n": n,
                        "p": p,
                        "order": order,
                        "series": eta_pow_ch.to_json(),
                        "ch": ch.to_json(),
                    })
                );
            } else {
                println!("eta^{n} * ch:");
                print_series(&eta_pow_ch, false, serde_json::json!({}));
                println!("ch:");
                print_series(&ch, false, serde_json::json!({}));
            }
            Ok(0)
        }
        Command::Zhat { triple, order, route, json } => {
            echo_config(serde_json::json!({
                "subcommand": "zhat", "triple": triple, "order": order, "route": route
            }));
            if triple.len() != 3 {
                return Err(falsetheta::Error::InvalidArgument(
                    "--triple needs exactly three exponents".into(),
                ));
            }
            let spec = falsetheta::zhat::BrieskornSpec::new(triple[0], triple[1], triple[2])?;
            let series = match route.as_str() {
                "direct" => falsetheta::zhat::zhat_direct(&spec, rat_i(order))?,
                "reduced" => falsetheta::zhat::zhat_reduced(&spec, rat_i(order))?,
                other => {
                    return Err(falsetheta::Error::InvalidArgument(format!(
                        "unknown route {other}; expected direct or reduced"
                    )))
                }
            };
            print_series(
                &series,
                json,
                serde_json::json!({ "type": "zhat_su3", "P": triple, "order": order }),
            );
            Ok(0)
        }
        Command::Eval { family, p, s, tau, w, cutoff, json } => {
            echo_config(serde_json::json!({
                "subcommand": "eval", "family": family, "p": p, "s": s,
                "tau": tau, "w": w, "cutoff": cutoff
            }));
            let (n, kind) = parse_family(&family).map_err(falsetheta::Error::InvalidArgument)?;
            let tau = parse_complex(&tau).map_err(falsetheta::Error::InvalidArgument)?;
            let w = parse_complex(&w).map_err(falsetheta::Error::InvalidArgument)?;
            let budget = TruncationBudget { lattice_cutoff: cutoff, ..Default::default() };
            let label = FamilyLabel::new(n, p, s.clone(), kind)?;
            let value = eval_family(&label, tau, w, &budget)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "schema": 1,
                        "type": "eval",
                        "family": family, "p": p, "s": s,
                        "tau": [tau.re, tau.im], "w": [w.re, w.im],
                        "value": { "re": value.re, "im": value.im },
                    })
                );
            } else {
                println!("{} + {}i", value.re, value.im);
            }
            Ok(0)
        }
        Command::Verify { suite, p, tolerance, kostant_box, json } => {
            echo_config(serde_json::json!({
                "subcommand": "verify", "suite": suite, "p": p,
                "tolerance": tolerance, "kostant_box": kostant_box
            }));
            let mut checks = Vec::new();
            let known =
                ["modular", "eichler", "kostant", "operators", "zhat-consistency", "all"];
            if !known.contains(&suite.as_str()) {
                return Err(falsetheta::Error::InvalidArgument(format!(
                    "unknown suite {suite}; expected one of {known:?}"
                )));
            }
            if suite == "kostant" || suite == "all" {
                checks.extend(suites::suite_kostant(kostant_box)?);
            }
            if suite == "modular" || suite == "all" {
                checks.extend(suites::suite_modular(p)?);
            }
            if suite == "eichler" || suite == "all" {
                checks.extend(suites::suite_eichler()?);
            }
            if suite == "operators" || suite == "all" {
                checks.extend(suites::suite_operators()?);
            }
            if suite == "zhat-consistency" || suite == "all" {
                checks.extend(suites::suite_zhat()?);
            }
            if let Some(t) = tolerance {
                for c in &mut checks {
                    c.tolerance = t;
                    c.passed = c.residual <= t;
                }
            }
            let all_passed = checks.iter().all(|c| c.passed);
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "schema": 1,
                        "type": "verify",
                        "suite": suite,
                        "passed": all_passed,
                        "checks": checks,
                    })
                );
            } else {
                for c in &checks {
                    println!(
                        "{}  {}  residual {:.3e} (tolerance {:.1e})",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.residual,
                        c.tolerance
                    );
                }
            }
            Ok(if all_passed { 0 } else { 1 })
        }
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
