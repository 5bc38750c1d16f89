//! Batch front door for the game solvers.
//!
//! Subcommands: `validate`, `solve`, `email-game`, `global-game`,
//! `hierarchy`. Reports are machine-first (JSON and CSV) with sorted keys,
//! so identical invocations produce byte-identical outputs. `LGL_THREADS`
//! caps worker parallelism.
//!
//! Exit codes: 0 ok, 1 validation findings, 2 usage or parse errors, 3
//! assumption-validator failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lgl_core::email_game::{
    self, build_email_game, contagion_check_on, DeathIntervalReading, EmailGameParams, TailPolicy,
};
use lgl_core::equilibrium::{self, Direction};
use lgl_core::game::schema::GameFile;
use lgl_core::game::validate::validate_game;
use lgl_core::game::GameInstance;
use lgl_core::global_game::{self, GlobalGameView};
use lgl_core::hierarchy;
use lgl_core::icr;

const EXIT_FINDINGS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ASSUMPTIONS: u8 = 3;

#[derive(Parser)]
#[command(name = "lgl", version, about = "Solvers for finite large distributional Bayesian games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every structural invariant of a game file.
    Validate(ValidateArgs),
    /// Run the elimination solver and, when the complementarity validators
    /// pass, the extremal-equilibrium iteration and the sandwich check.
    Solve(SolveArgs),
    /// Generate the coordinated-attack circle game and its contagion
    /// analytics.
    EmailGame(EmailGameArgs),
    /// Generate a regime-change game and its belief-operator region report.
    GlobalGame(GlobalGameArgs),
    /// Dump the finite belief hierarchy of one belief.
    Hierarchy(HierarchyArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Game JSON file.
    game: PathBuf,
    /// Structural tolerance for probability sums and marginals.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Directory for report.json (stdout only when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    game: PathBuf,
    /// Output directory for the solver reports.
    #[arg(long)]
    out: PathBuf,
    /// Structural tolerance used by the validation gate.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Run the elimination solver even when the complementarity validators
    /// fail; the equilibrium iteration is skipped in that case.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReadingArg {
    Consistent,
    PositionMultiple,
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    Renormalize,
    ToCommonCertainty,
}

#[derive(Args)]
struct EmailGameArgs {
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long, default_value_t = 2.0)]
    l: f64,
    #[arg(long, default_value_t = 0.5)]
    pi: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 20)]
    positions: usize,
    #[arg(long, default_value_t = 10)]
    max_signals: usize,
    #[arg(long, default_value_t = 4)]
    buckets: usize,
    /// Death-interval reading for signal beliefs.
    #[arg(long, value_enum, default_value_t = ReadingArg::Consistent)]
    reading: ReadingArg,
    /// Where truncated tail mass of top-layer beliefs goes.
    #[arg(long, value_enum, default_value_t = TailArg::Renormalize)]
    tail_policy: TailArg,
    /// Comma-separated alpha values for a sweep CSV.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GlobalGameArgs {
    /// Seed for a randomized instance; the bundled near-uniform-rank
    /// instance is used when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Slack for the rank and risk-dominance filters.
    #[arg(long, default_value_t = global_game::LADDER_EPS)]
    eps: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HierarchyArgs {
    game: PathBuf,
    /// Belief id to extract.
    #[arg(long)]
    belief: usize,
    /// Truncation depth (at most 3).
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Directory for hierarchy.json (stdout only when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::EmailGame(args) => cmd_email_game(args),
        Command::GlobalGame(args) => cmd_global_game(args),
        Command::Hierarchy(args) => cmd_hierarchy(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() {
    if let Ok(raw) = std::env::var("LGL_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn check_tol(tol: f64) -> Result<(), Failure> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Failure::usage(format!("tolerance must be positive, got {tol}")))
    }
}

fn read_game_file(path: &Path) -> Result<GameFile, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    GameFile::from_json(&text)
        .map_err(|e| Failure::usage(format!("cannot parse {}: {e}", path.display())))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text)
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(dir, name, &text)
}

fn cmd_validate(args: ValidateArgs) -> Result<u8, Failure> {
    check_tol(args.tol)?;
    let file = read_game_file(&args.game)?;
    let report = match file.resolve() {
        Ok(instance) => validate_game(&instance),
        Err(report) => report,
    };
    let body = serde_json::json!({
        "game": args.game.display().to_string(),
        "tolerance": args.tol,
        "ok": report.is_empty(),
        "violations": serde_json::to_value(&report.violations).expect("serializable"),
    });
    let mut text = serde_json::to_string_pretty(&body).expect("report serializes");
    text.push('\n');
    print!("{text}");
    if let Some(dir) = &args.out {
        write_text(dir, "report.json", &text)?;
    }
    Ok(if report.is_empty() { 0 } else { EXIT_FINDINGS })
}

fn load_validated(path: &Path) -> Result<GameInstance, Failure> {
    let file = read_game_file(path)?;
    match file.resolve() {
        Ok(instance) => {
            let report = validate_game(&instance);
            if report.is_empty() {
                Ok(instance)
            } else {
                Err(Failure { code: EXIT_FINDINGS, message: format!("game is invalid:\n{report}") })
            }
        }
        Err(report) => {
            Err(Failure { code: EXIT_FINDINGS, message: format!("game is invalid:\n{report}") })
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<u8, Failure> {
    check_tol(args.tol)?;
    let g = load_validated(&args.game)?;

    let sm = equilibrium::check_supermodular(&g, &[]);
    let id = equilibrium::check_increasing_differences(&g)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let assumptions_ok = sm.all_ok() && id.increasing_differences_ok;
    if !assumptions_ok && !args.force {
        let mut report = sm.clone();
        report.increasing_differences_ok = id.increasing_differences_ok;
        return Err(Failure {
            code: EXIT_ASSUMPTIONS,
            message: format!(
                "complementarity validators failed (rerun with --force to eliminate anyway): {}",
                serde_json::to_string(&report).expect("serializable")
            ),
        });
    }

    let solution = icr::icr_solve(&g).map_err(|e| Failure::usage(e.to_string()))?;
    let trace = icr::trace_json(&g, &solution.trace);
    write_json(
        &args.out,
        "icr_trace.json",
        &serde_json::json!({
            "rounds": solution.rounds,
            "approximate": solution.approximate,
            "trace": trace,
        }),
    )?;
    write_text(&args.out, "icr_summary.csv", &icr::summary_csv(&g, &solution))?;

    if !assumptions_ok {
        eprintln!("assumption validators failed; equilibrium iteration skipped (--force)");
        return Ok(0);
    }

    let top = equilibrium::extremal_equilibrium(&g, Direction::Top)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let bottom = equilibrium::extremal_equilibrium(&g, Direction::Bottom)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let zeta_json = |zeta: &equilibrium::StrategyProfile| -> serde_json::Value {
        zeta.zeta
            .iter()
            .map(|(&(c, b), &a)| {
                serde_json::json!({
                    "characteristic": g.characteristics.labels[c],
                    "belief": b,
                    "action": g.actions.labels[a],
                })
            })
            .collect()
    };
    write_json(
        &args.out,
        "equilibrium_report.json",
        &serde_json::json!({
            "supermodular": sm,
            "increasing_differences": id,
            "top": {
                "rounds": top.rounds,
                "verified": top.verification.is_bne,
                "zeta": zeta_json(&top.zeta),
            },
            "bottom": {
                "rounds": bottom.rounds,
                "verified": bottom.verification.is_bne,
                "zeta": zeta_json(&bottom.zeta),
            },
        }),
    )?;
    let sandwich = equilibrium::sandwich_check_with(&g, &solution, &top, &bottom);
    write_json(
        &args.out,
        "sandwich_report.json",
        &serde_json::to_value(&sandwich).expect("serializable"),
    )?;
    if !sandwich.ok {
        return Err(Failure::usage("sandwich check failed; see sandwich_report.json"));
    }
    Ok(0)
}

fn email_params(args: &EmailGameArgs) -> Result<EmailGameParams, Failure> {
    let mut params = EmailGameParams::new(
        args.m,
        args.l,
        args.pi,
        args.alpha,
        args.positions,
        args.max_signals,
        args.buckets,
    )
    .map_err(|e| Failure::usage(e.to_string()))?;
    params.reading = match args.reading {
        ReadingArg::Consistent => DeathIntervalReading::Consistent,
        ReadingArg::PositionMultiple => DeathIntervalReading::PositionMultiple,
    };
    params.tail_policy = match args.tail_policy {
        TailArg::Renormalize => TailPolicy::Renormalize,
        TailArg::ToCommonCertainty => TailPolicy::ToCommonCertainty,
    };
    Ok(params)
}

fn cmd_email_game(args: EmailGameArgs) -> Result<u8, Failure> {
    let params = email_params(&args)?;
    let email = build_email_game(&params).map_err(|e| Failure::usage(e.to_string()))?;
    let file = GameFile::from_instance(&email.game).map_err(|e| Failure::usage(e.to_string()))?;
    write_text(&args.out, "game.json", &file.to_canonical_json())?;

    let outcome = contagion_check_on(&email).map_err(|e| Failure::usage(e.to_string()))?;
    let analytics = serde_json::json!({
        "params": params,
        "contagion_function": email_game::contagion_function(params.alpha),
        "risk_dominance_threshold": email_game::risk_dominance_threshold(params.m, params.l)
            .map_err(|e| Failure::usage(e.to_string()))?,
        "all_zero_unique": outcome.all_zero_unique,
        "rounds": outcome.rounds,
    });
    write_json(&args.out, "analytics.json", &analytics)?;

    let mut csv = String::from(
        "round,newly_eliminated,furthest_time,furthest_position,furthest_signals\n",
    );
    for row in &outcome.front {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.round,
            row.newly_eliminated,
            row.furthest_time.map(|t| t.to_string()).unwrap_or_default(),
            row.furthest_position.map(|p| p.to_string()).unwrap_or_default(),
            row.furthest_signals.map(|n| n.to_string()).unwrap_or_default(),
        ));
    }
    write_text(&args.out, "contagion_front.csv", &csv)?;

    if let Some(grid) = &args.grid {
        let mut csv =
            String::from("alpha,contagion_function,risk_dominance_threshold,all_zero_unique\n");
        for raw in grid.split(',') {
            let alpha: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Failure::usage(format!("bad grid entry {raw:?}")))?;
            let mut p = params;
            p.alpha = alpha;
            let out = email_game::contagion_check(&p).map_err(|e| Failure::usage(e.to_string()))?;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                alpha,
                email_game::contagion_function(alpha),
                email_game::risk_dominance_threshold(p.m, p.l)
                    .map_err(|e| Failure::usage(e.to_string()))?,
                out.all_zero_unique,
            ));
        }
        write_text(&args.out, "grid.csv", &csv)?;
    }
    Ok(0)
}

fn cmd_global_game(args: GlobalGameArgs) -> Result<u8, Failure> {
    if !(args.eps >= 0.0 && args.eps.is_finite()) {
        return Err(Failure::usage(format!("eps must be nonnegative, got {}", args.eps)));
    }
    let g = match args.seed {
        Some(seed) => lgl_core::generators::random_global_game(seed),
        None => global_game::ladder_instance(Default::default())
            .map_err(|e| Failure::usage(e.to_string()))?,
    };
    let file = GameFile::from_instance(&g).map_err(|e| Failure::usage(e.to_string()))?;
    write_text(&args.out, "game.json", &file.to_canonical_json())?;

    let view = GlobalGameView::new(&g).map_err(|e| Failure::usage(e.to_string()))?;
    let cert = global_game::uniqueness_certificate(&view, args.eps)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let solution = icr::icr_solve(&g).map_err(|e| Failure::usage(e.to_string()))?;
    let unique_invest: BTreeSet<usize> = (0..g.n_beliefs())
        .filter(|&b| solution.survivors.sets[&(0, b)] == BTreeSet::from([1]))
        .collect();
    let unique_safe: BTreeSet<usize> = (0..g.n_beliefs())
        .filter(|&b| solution.survivors.sets[&(0, b)] == BTreeSet::from([0]))
        .collect();

    let beliefs: Vec<serde_json::Value> = (0..g.n_beliefs())
        .map(|b| {
            let certified = if cert.invest_region.contains(&b) {
                Some("invest")
            } else if cert.noninvest_region.contains(&b) {
                Some("noninvest")
            } else {
                None
            };
            serde_json::json!({
                "belief": b,
                "x": view.stats.x[b],
                "rank": view.stats.rank[b],
                "in_urb": cert.urb.contains(&b),
                "in_core": cert.core.contains(&b),
                "certified": certified,
                "uniquely_rationalizable": if unique_invest.contains(&b) {
                    Some("invest")
                } else if unique_safe.contains(&b) {
                    Some("noninvest")
                } else {
                    None
                },
            })
        })
        .collect();
    write_json(
        &args.out,
        "region_report.json",
        &serde_json::json!({
            "eps": args.eps,
            "assumptions": cert.assumptions,
            "beliefs": beliefs,
        }),
    )?;

    let mut csv = String::from("belief,x,rank,in_urb,in_core,certified\n");
    for b in 0..g.n_beliefs() {
        let certified = if cert.invest_region.contains(&b) {
            "invest"
        } else if cert.noninvest_region.contains(&b) {
            "noninvest"
        } else {
            ""
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b,
            view.stats.x[b],
            view.stats.rank[b],
            cert.urb.contains(&b),
            cert.core.contains(&b),
            certified,
        ));
    }
    write_text(&args.out, "regions.csv", &csv)?;

    // Certified regions must agree with the solver; surface a hard error
    // rather than emitting a misleading report.
    for &b in &cert.invest_region {
        if !unique_invest.contains(&b) {
            return Err(Failure::usage(format!("certificate unsound at belief {b}")));
        }
    }
    for &b in &cert.noninvest_region {
        if !unique_safe.contains(&b) {
            return Err(Failure::usage(format!("certificate unsound at belief {b}")));
        }
    }
    Ok(0)
}

fn cmd_hierarchy(args: HierarchyArgs) -> Result<u8, Failure> {
    let g = load_validated(&args.game)?;
    let h = hierarchy::extract_hierarchy(&g, args.belief, args.depth)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let body = serde_json::json!({
        "belief": args.belief,
        "depth": args.depth,
        "coherent": hierarchy::check_coherence(&h).coherent,
        "hierarchy": hierarchy::hierarchy_json(&g, &h),
    });
    let mut text = serde_json::to_string_pretty(&body).expect("report serializes");
    text.push('\n');
    if let Some(dir) = &args.out {
        write_text(dir, "hierarchy.json", &text)?;
    } else {
        print!("{text}");
    }
    Ok(0)
}
