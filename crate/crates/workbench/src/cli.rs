//! Argument parsing and the subcommands. `run` is the whole program apart
//! from process setup, so tests can drive it in memory.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use omega_core::backforth::{enumerate_partial_isos, scott_rank, BackForth, Config, QTable};
use omega_core::games::{
    apply_ii, auto_play, candidate_entries, describe_i, describe_ii, is_legal_ii, legal_moves_i,
    legal_moves_ii, solve, GameConfig, GameState, MoveII, Player, Strategy,
};
use omega_core::heyting::Heyting;
use omega_core::invariants::{Caps, Comparison, Divergence, Engine, Invariant};
use omega_core::presheaf::{Sec, Signature, Structure};
use omega_core::semantics::{Evaluator, Mutation};
use omega_core::syntax::{parse_formula, print_shared};
use omega_core::transform::unnest;
use serde_json::{json, Value};

use crate::dsl::{parse_tuple, DslErrorKind, LoadOptions, Workspace};
use crate::fuzz::{self, FuzzConfig};
use crate::verdicts::Portmanteau;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_COUNTEREXAMPLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Name of the variable that caps search budgets.
pub const MAX_SEARCH_VAR: &str = "WORKBENCH_MAX_SEARCH";

#[derive(Parser, Debug)]
#[command(
    name = "workbench",
    version,
    about = "Heyting-valued structures, back-and-forth systems, games and Scott analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Number of back-and-forth rounds.
    #[arg(long, global = true)]
    alpha: Option<usize>,
    /// Bound on move tuple lengths, exclusive; the move cap is `mu - 1`.
    #[arg(long, global = true)]
    mu: Option<usize>,
    /// Longest tuple a single move may play.
    #[arg(long = "move-cap", global = true)]
    move_cap: Option<usize>,
    /// Longest tuple reached by invariants, or the tuple length for Scott rank.
    #[arg(long = "tuple-cap", global = true)]
    tuple_cap: Option<usize>,
    /// Comma-separated structure names forming the probe class.
    #[arg(long, global = true, value_delimiter = ',')]
    probes: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Allow constants to denote non-global sections.
    #[arg(long = "lax-constants", global = true)]
    lax_constants: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SideArg {
    #[value(name = "I")]
    I,
    #[value(name = "II")]
    II,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MutationArg {
    ExistsGlobalOnly,
    ForallUnguarded,
}

#[derive(clap::Args, Debug)]
struct PairArgs {
    /// Definition files.
    files: Vec<PathBuf>,
    #[arg(long, short = 'l')]
    left: String,
    #[arg(long, short = 'r')]
    right: String,
    /// Tuple in the left structure, e.g. `a, b|m`.
    #[arg(long = "tuple-left", short = 'a', default_value = "")]
    tuple_left: String,
    #[arg(long = "tuple-right", short = 'b', default_value = "")]
    tuple_right: String,
}

#[derive(clap::Args, Debug)]
struct FormulaArgs {
    files: Vec<PathBuf>,
    /// Read the language from this structure.
    #[arg(long, short = 's')]
    structure: Option<String>,
    /// Read the language from this signature instead.
    #[arg(long)]
    signature: Option<String>,
    /// Algebra for `[p]` and `<p>` when `--signature` is used.
    #[arg(long, default_value = "omega2")]
    algebra: String,
    #[arg(long, short = 'f')]
    formula: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate algebras and structures.
    Check { files: Vec<PathBuf> },
    /// Value of a formula at a tuple.
    Eval {
        files: Vec<PathBuf>,
        #[arg(long, short = 's')]
        structure: String,
        #[arg(long, short = 'f')]
        formula: String,
        #[arg(long, short = 't', default_value = "")]
        tuple: String,
    },
    /// Rewrite nested atomics into unnested ones.
    Unnest(FormulaArgs),
    /// Quantifier degree, modified rank and fragment membership.
    Rank(FormulaArgs),
    /// The table of `Q_α(p)` over enumerated partial isomorphisms.
    Qtable {
        files: Vec<PathBuf>,
        #[arg(long, short = 'l')]
        left: String,
        #[arg(long, short = 'r')]
        right: String,
        #[arg(long = "max-isos", default_value_t = 5000)]
        max_isos: usize,
    },
    /// Compare two anchored structures level by level.
    Equiv {
        #[command(flatten)]
        pair: PairArgs,
        /// `empty` for the whole-model comparison, or `LEFT / RIGHT`.
        #[arg(long)]
        tuples: Option<String>,
    },
    /// Play or auto-play the back-and-forth game.
    Game {
        #[command(flatten)]
        pair: PairArgs,
        /// The side you play.
        #[arg(long, value_enum, default_value_t = SideArg::I)]
        side: SideArg,
        /// Let both sides play optimally and print the transcript.
        #[arg(long)]
        auto: bool,
    },
    /// Least level at which tuple equivalence stabilizes.
    ScottRank {
        files: Vec<PathBuf>,
        #[arg(long, short = 's')]
        structure: String,
    },
    /// Invariant tables of one or two anchored structures.
    Invariants {
        files: Vec<PathBuf>,
        #[arg(long, short = 'l')]
        left: String,
        #[arg(long, short = 'r')]
        right: Option<String>,
        #[arg(long = "tuple-left", short = 'a', default_value = "")]
        tuple_left: String,
        #[arg(long = "tuple-right", short = 'b', default_value = "")]
        tuple_right: String,
    },
    /// The level-α Scott sentence of an anchored structure.
    ScottSentence {
        files: Vec<PathBuf>,
        #[arg(long, short = 's')]
        structure: String,
        #[arg(long, short = 't', default_value = "")]
        tuple: String,
    },
    /// Random property checks.
    Fuzz {
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Inject a semantic fault to test the cross-checks.
        #[arg(long, value_enum)]
        mutate: Option<MutationArg>,
        /// Run only the instance with this seed, as printed by a finding.
        #[arg(long)]
        replay: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Settings every command sees.
#[derive(Clone, Copy, Debug)]
struct Settings {
    alpha: Option<usize>,
    move_cap: usize,
    tuple_cap: Option<usize>,
    budget: Option<u64>,
    lax: bool,
}

impl Settings {
    fn alpha(&self) -> usize {
        self.alpha.unwrap_or(2)
    }
    fn caps(&self) -> Caps {
        Caps {
            move_cap: self.move_cap,
            max_tuple_len: self.tuple_cap.unwrap_or(Caps::default().max_tuple_len),
        }
    }
    fn config(&self) -> Config {
        Config {
            move_cap: self.move_cap,
            budget: self.budget,
            ..Config::default()
        }
    }
}

/// A finished command: what to print and how to exit.
struct Output {
    text: String,
    json: Value,
    code: i32,
}

impl Output {
    fn ok(text: String, json: Value) -> Self {
        Output {
            text,
            json,
            code: EXIT_OK,
        }
    }
}

/// Reads `WORKBENCH_MAX_SEARCH`.
pub fn budget_from_env(value: Option<&str>) -> Result<Option<u64>, Error> {
    match value {
        None => Ok(None),
        Some(v) => {
            v.trim().parse().map(Some).map_err(|_| {
                Error::Usage(format!("{MAX_SEARCH_VAR} must be a node count, got `{v}`"))
            })
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. `input` feeds interactive play.
pub fn run(
    args: impl IntoIterator<Item = impl Into<OsString> + Clone>,
    max_search: Option<&str>,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = if code == EXIT_OK {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    let format = cli.format;
    let settings = settings(&cli, max_search);
    let Cli {
        command,
        probes,
        seed,
        ..
    } = cli;
    let result = settings.and_then(|s| dispatch(command, &probes, seed, s, input, out));
    match result {
        Ok(o) => {
            let _ = match format {
                Format::Text => write!(out, "{}", o.text),
                Format::Json => writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&o.json).expect("values serialize")
                ),
            };
            o.code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Usage(_) => EXIT_USAGE,
                _ => EXIT_INVALID,
            }
        }
    }
}

fn settings(cli: &Cli, max_search: Option<&str>) -> Result<Settings, Error> {
    let move_cap = match (cli.mu, cli.move_cap) {
        (Some(mu), _) if mu < 2 => {
            return Err(Error::Usage("--mu must be at least 2".into()));
        }
        (Some(mu), Some(c)) if c != mu - 1 => {
            return Err(Error::Usage(format!(
                "--mu {mu} allows moves of length {} but --move-cap is {c}",
                mu - 1
            )));
        }
        (Some(mu), _) => mu - 1,
        (None, Some(0)) => return Err(Error::Usage("--move-cap must be positive".into())),
        (None, Some(c)) => c,
        (None, None) => 1,
    };
    Ok(Settings {
        alpha: cli.alpha,
        move_cap,
        tuple_cap: cli.tuple_cap,
        budget: budget_from_env(max_search)?,
        lax: cli.lax_constants,
    })
}

fn load(files: &[PathBuf], s: Settings) -> Result<Workspace, Error> {
    let mut ws = Workspace::new(LoadOptions {
        lax_constants: s.lax,
    });
    for f in files {
        let name = f.display().to_string();
        let src = std::fs::read_to_string(f).map_err(|e| Error::Io(name.clone(), e))?;
        ws.load(&name, &src)?;
    }
    Ok(ws)
}

fn name_err(k: DslErrorKind) -> Error {
    match k {
        DslErrorKind::UnknownName(m) => Error::Name(format!("unknown name: {m}")),
        other => Error::Name(format!("{other:?}")),
    }
}

fn dispatch(
    cmd: Command,
    probes: &[String],
    seed: Option<u64>,
    s: Settings,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<Output, Error> {
    match cmd {
        Command::Check { files } => Ok(check(&files, s)),
        Command::Eval {
            files,
            structure,
            formula,
            tuple,
        } => eval(&load(&files, s)?, &structure, &formula, &tuple),
        Command::Unnest(a) => unnest_cmd(&load(&a.files, s)?, &a),
        Command::Rank(a) => rank(&load(&a.files, s)?, &a),
        Command::Qtable {
            files,
            left,
            right,
            max_isos,
        } => qtable(&load(&files, s)?, &left, &right, max_isos, s),
        Command::Equiv { pair, tuples } => {
            let ws = load(&pair.files, s)?;
            let (ta, tb) = match tuples.as_deref().map(str::trim) {
                None => (pair.tuple_left.clone(), pair.tuple_right.clone()),
                Some("empty") => (String::new(), String::new()),
                Some(t) => match t.split_once('/') {
                    Some((x, y)) => (x.to_string(), y.to_string()),
                    None => {
                        return Err(Error::Usage(
                            "--tuples takes `empty` or `LEFT / RIGHT`".into(),
                        ))
                    }
                },
            };
            equiv(&ws, &pair.left, &ta, &pair.right, &tb, s)
        }
        Command::Game { pair, side, auto } => {
            let ws = load(&pair.files, s)?;
            game(&ws, &pair, side, auto, s, input, out)
        }
        Command::ScottRank { files, structure } => scott_rank_cmd(&load(&files, s)?, &structure, s),
        Command::Invariants {
            files,
            left,
            right,
            tuple_left,
            tuple_right,
        } => {
            let ws = load(&files, s)?;
            let mut anchors = vec![(left, tuple_left)];
            if let Some(r) = right {
                anchors.push((r, tuple_right));
            }
            invariants(&ws, &anchors, probes, s)
        }
        Command::ScottSentence {
            files,
            structure,
            tuple,
        } => scott_sentence(&load(&files, s)?, &structure, &tuple, probes, s),
        Command::Fuzz {
            count,
            mutate,
            replay,
            threads,
        } => Ok(fuzz_cmd(
            seed.unwrap_or(0),
            count,
            mutate,
            replay,
            threads,
            s,
        )),
    }
}

fn check(files: &[PathBuf], s: Settings) -> Output {
    let mut ws = Workspace::new(LoadOptions {
        lax_constants: s.lax,
    });
    let mut text = String::new();
    let mut reports = Vec::new();
    let mut ok = true;
    for f in files {
        let name = f.display().to_string();
        let before = ws.order.len();
        let res = std::fs::read_to_string(f)
            .map_err(|e| format!("{name}: {e}"))
            .and_then(|src| ws.load(&name, &src).map_err(|e| e.to_string()));
        let mut defs = Vec::new();
        for (kind, n) in &ws.order[before..] {
            let line = match kind {
                crate::dsl::Kind::Algebra => {
                    let a = &ws.algebras[n];
                    // Adjunction is structural for lattices built here, but
                    // a failure would mean a broken table.
                    if let Some((p, q, r)) = a.check_adjunction() {
                        ok = false;
                        format!(
                            "algebra {n}: adjunction p∧q ≤ r ⟺ p ≤ q→r fails at ({}, {}, {})",
                            a.name(p),
                            a.name(q),
                            a.name(r)
                        )
                    } else {
                        format!("algebra {n} ({} elements)", a.size())
                    }
                }
                crate::dsl::Kind::Signature => format!("signature {n}"),
                crate::dsl::Kind::Structure => {
                    let m = &ws.structures[n];
                    format!("structure {n} ({} sections)", m.len())
                }
            };
            defs.push(line);
        }
        for d in &defs {
            text.push_str(&format!("ok {name}: {d}\n"));
        }
        match &res {
            Ok(()) => {}
            Err(e) => {
                ok = false;
                text.push_str(&format!("error {e}\n"));
            }
        }
        reports.push(json!({
            "file": name,
            "definitions": defs,
            "error": res.err(),
        }));
    }
    text.push_str(if ok {
        "all valid\n"
    } else {
        "validation failed\n"
    });
    Output {
        text,
        json: json!({ "files": reports, "valid": ok }),
        code: if ok { EXIT_OK } else { EXIT_INVALID },
    }
}

fn structure<'w>(ws: &'w Workspace, name: &str) -> Result<&'w Structure, Error> {
    ws.structure(name).map_err(name_err)
}

fn eval(ws: &Workspace, name: &str, formula: &str, tuple: &str) -> Result<Output, Error> {
    let m = structure(ws, name)?;
    let f = parse_formula(formula, m.signature(), m.algebra())?;
    let t = parse_tuple(m, tuple)?;
    let v = Evaluator::new(m).eval_tuple(&f, &t)?;
    let alg = m.algebra();
    Ok(Output::ok(
        format!("{}\n", alg.name(v)),
        json!({
            "structure": name,
            "formula": f.display(m.signature(), alg).to_string(),
            "tuple": m.tuple_label(&t),
            "value": alg.name(v),
        }),
    ))
}

fn language(ws: &Workspace, a: &FormulaArgs) -> Result<(Arc<Signature>, Arc<Heyting>), Error> {
    match (&a.structure, &a.signature) {
        (Some(s), None) => {
            let m = structure(ws, s)?;
            Ok((m.signature().clone(), m.algebra().clone()))
        }
        (None, Some(sig)) => Ok((
            ws.signature(sig).map_err(name_err)?.clone(),
            ws.algebra(&a.algebra).map_err(name_err)?.clone(),
        )),
        _ => Err(Error::Usage(
            "give exactly one of --structure and --signature".into(),
        )),
    }
}

fn unnest_cmd(ws: &Workspace, a: &FormulaArgs) -> Result<Output, Error> {
    let (sig, alg) = language(ws, a)?;
    let f = parse_formula(&a.formula, &sig, &alg)?;
    let u = unnest(&f);
    let shown = u.display(&sig, &alg).to_string();
    let (r, d) = (f.mrank(), u.qdegree());
    Ok(Output::ok(
        format!("{shown}\nrank: r = {r} in, d = {d} out\n"),
        json!({
            "input": f.display(&sig, &alg).to_string(),
            "output": shown,
            "mrank_in": r,
            "qdegree_out": d,
        }),
    ))
}

fn rank(ws: &Workspace, a: &FormulaArgs) -> Result<Output, Error> {
    let (sig, alg) = language(ws, a)?;
    let f = parse_formula(&a.formula, &sig, &alg)?;
    let (rp, c) = (f.ranks(), f.classify());
    let free: Vec<String> = f.free_vars().iter().map(|v| format!("v{v}")).collect();
    Ok(Output::ok(
        format!(
            "{}\nqdegree d = {}\nmodified rank r = {}\nunnested: {}\nceu: {}\npp: {}\nfree: {}\n",
            f.display(&sig, &alg),
            rp.d,
            rp.r,
            c.unnested,
            c.ceu,
            c.pp,
            free.join(" ")
        ),
        json!({
            "formula": f.display(&sig, &alg).to_string(),
            "qdegree": rp.d,
            "mrank": rp.r,
            "unnested": c.unnested,
            "ceu": c.ceu,
            "pp": c.pp,
            "free": free,
        }),
    ))
}

/// Disjoint copies of two loaded structures, which may be the same one.
fn pair(ws: &Workspace, left: &str, right: &str) -> Result<(Structure, Structure), Error> {
    let (m, n) = (structure(ws, left)?, structure(ws, right)?);
    Ok(Structure::disjointify(m, n)?)
}

fn qtable(
    ws: &Workspace,
    left: &str,
    right: &str,
    max_isos: usize,
    s: Settings,
) -> Result<Output, Error> {
    let (m, n) = pair(ws, left, right)?;
    let alg = m.algebra().clone();
    let alpha = s.alpha();
    let isos = enumerate_partial_isos(&m, &n, Some(max_isos + 1));
    let truncated = isos.len() > max_isos;
    let isos: Vec<_> = isos.into_iter().take(max_isos).collect();
    let mut engine = BackForth::new(&m, &n, s.config())?;
    let mut t = QTable::new(&mut engine, isos)?;
    while t.levels.len() <= alpha {
        t.refine_step(&mut engine)?;
    }
    let mut text = format!(
        "qtable {} vs {}, move cap {}{}\nisos:\n",
        m.name(),
        n.name(),
        s.move_cap,
        if truncated { " (truncated)" } else { "" }
    );
    let mut iso_json = Vec::new();
    for (i, h) in t.isos.iter().enumerate() {
        text.push_str(&format!("  {i}: {}\n", h.describe(&m, &n)));
        let pairs: Vec<[&str; 2]> = h
            .pairs
            .iter()
            .map(|&(a, b)| [m.label(a), n.label(b)])
            .collect();
        iso_json.push(json!({ "id": i, "pairs": pairs }));
    }
    let mut levels = Vec::new();
    for (a, level) in t.levels.iter().enumerate() {
        text.push_str(&format!("level {a}:\n"));
        let mut members = serde_json::Map::new();
        for p in alg.elements() {
            let ids = &level[p.index()];
            let shown: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
            text.push_str(&format!("  {}: [{}]\n", alg.name(p), shown.join(" ")));
            members.insert(alg.name(p).to_string(), json!(ids));
        }
        levels.push(json!({ "alpha": a, "members": members }));
    }
    Ok(Output::ok(
        text,
        json!({
            "left": m.name(),
            "right": n.name(),
            "move_cap": s.move_cap,
            "truncated": truncated,
            "isos": iso_json,
            "levels": levels,
        }),
    ))
}

fn anchored(m: &Structure, tuple: &str) -> Result<Vec<Sec>, Error> {
    Ok(parse_tuple(m, tuple)?)
}

fn same_extent(m: &Structure, a: &[Sec], n: &Structure, b: &[Sec]) -> Result<(), Error> {
    if a.len() != b.len() {
        return Err(Error::Name(format!(
            "tuples have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let alg = m.algebra();
    let (ea, eb) = (m.tuple_extent(a), n.tuple_extent(b));
    if ea != eb {
        return Err(Error::Name(format!(
            "ExtentMismatch: E{} = {} in {} but E{} = {} in {}",
            m.tuple_label(a),
            alg.name(ea),
            m.name(),
            n.tuple_label(b),
            alg.name(eb),
            n.name()
        )));
    }
    Ok(())
}

fn equiv(
    ws: &Workspace,
    left: &str,
    ta: &str,
    right: &str,
    tb: &str,
    s: Settings,
) -> Result<Output, Error> {
    let (m, n) = pair(ws, left, right)?;
    let (a, b) = (anchored(&m, ta)?, anchored(&n, tb)?);
    same_extent(&m, &a, &n, &b)?;
    let alg = m.algebra().clone();
    let mut pm = Portmanteau::new(&m, &n, s.caps(), s.budget, None)?;
    let mut rows = Vec::new();
    let mut text = format!(
        "equiv {} {} vs {} {}, extent {}, move cap {}\n",
        m.name(),
        m.tuple_label(&a),
        n.name(),
        n.tuple_label(&b),
        alg.name(m.tuple_extent(&a)),
        s.move_cap
    );
    for alpha in 0..=s.alpha() {
        let v = pm.verdicts(&a, &b, alpha)?;
        text.push_str(&format!(
            "alpha {alpha}: invariants {}, Q witness {}, game winner {}, mutual forcing {}, {}\n",
            if v.invariants_equal {
                "equal"
            } else {
                "differ"
            },
            v.q_witness.as_deref().unwrap_or("none"),
            v.game_winner,
            if v.mutual_forcing { "yes" } else { "no" },
            match (v.agree, v.equivalent()) {
                (false, _) => "DISAGREE",
                (true, true) => "equivalent",
                (true, false) => "not equivalent",
            }
        ));
        rows.push(v);
    }
    let agree = rows.iter().all(|r| r.agree);
    Ok(Output {
        text,
        json: json!({
            "left": m.name(),
            "right": n.name(),
            "tuple_left": m.tuple_label(&a),
            "tuple_right": n.tuple_label(&b),
            "extent": alg.name(m.tuple_extent(&a)),
            "move_cap": s.move_cap,
            "rows": rows,
            "all_agree": agree,
        }),
        code: if agree { EXIT_OK } else { EXIT_COUNTEREXAMPLE },
    })
}

fn read_choice(
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    options: usize,
) -> Result<usize, Error> {
    loop {
        let _ = write!(out, "choose 0..{}> ", options - 1);
        let _ = out.flush();
        let mut line = String::new();
        let n = input
            .read_line(&mut line)
            .map_err(|e| Error::Io("stdin".into(), e))?;
        if n == 0 {
            return Err(Error::Usage("input ended before the game did".into()));
        }
        match line.trim().parse::<usize>() {
            Ok(i) if i < options => return Ok(i),
            _ => {
                let _ = writeln!(out, "not a valid choice");
            }
        }
    }
}

fn game(
    ws: &Workspace,
    p: &PairArgs,
    side: SideArg,
    auto: bool,
    s: Settings,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<Output, Error> {
    let (m, n) = pair(ws, &p.left, &p.right)?;
    let (a, b) = (anchored(&m, &p.tuple_left)?, anchored(&n, &p.tuple_right)?);
    same_extent(&m, &a, &n, &b)?;
    let cfg = GameConfig::positional(&m, &a, &n, &b, s.alpha(), s.move_cap)?;
    let you = match side {
        SideArg::I => Player::I,
        SideArg::II => Player::II,
    };
    let name = |p: Player| if p == Player::I { "I" } else { "II" };
    let lines = if auto {
        let (winner, mut lines) = auto_play(&cfg, s.budget)?;
        lines.push(format!(
            "winner: {} (side {} {})",
            name(winner),
            name(you),
            if winner == you { "wins" } else { "loses" }
        ));
        (winner, lines)
    } else {
        interactive(&cfg, you, s.budget, input, out)?
    };
    let (winner, lines) = lines;
    let mut text = String::new();
    if auto {
        for l in &lines {
            text.push_str(l);
            text.push('\n');
        }
    }
    Ok(Output::ok(
        text,
        json!({ "winner": name(winner), "side": name(you), "transcript": lines }),
    ))
}

/// You play `you`; the machine plays the other side with its optimal
/// strategy when it has one.
fn interactive(
    cfg: &GameConfig<'_>,
    you: Player,
    budget: Option<u64>,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<(Player, Vec<String>), Error> {
    let (m, n) = (cfg.m, cfg.n);
    let sol = solve(cfg, budget)?;
    let mut strategy = sol.strategy;
    let pool = enumerate_partial_isos(m, n, Some(2000));
    let mut state = GameState::initial(cfg);
    let mut lines = vec![format!(
        "start: h = {}, alpha = {}",
        state.h.describe(m, n),
        state.budget
    )];
    let say = |lines: &mut Vec<String>, l: String, out: &mut dyn Write| {
        let _ = writeln!(out, "{l}");
        lines.push(l);
    };
    let _ = writeln!(out, "{}", lines[0]);
    loop {
        let mv = if you == Player::I {
            let moves: Vec<_> = legal_moves_i(cfg, &state).collect();
            if moves.is_empty() {
                None
            } else {
                for (i, mv) in moves.iter().enumerate() {
                    let _ = writeln!(out, "  {i}) {}", describe_i(cfg, mv));
                }
                let i = read_choice(input, out, moves.len())?;
                Some(moves[i].clone())
            }
        } else {
            match &mut strategy {
                Strategy::I(st) => st.next_move(&state)?,
                Strategy::II(_) => legal_moves_i(cfg, &state).next(),
            }
        };
        let Some(mv) = mv else {
            say(&mut lines, "I cannot move; II wins".into(), out);
            return Ok((Player::II, lines));
        };
        say(&mut lines, describe_i(cfg, &mv), out);
        let resp = if you == Player::II {
            let answers: Vec<MoveII> = legal_moves_ii(cfg, &state, &mv, &pool).take(30).collect();
            if answers.is_empty() {
                None
            } else {
                for (i, r) in answers.iter().enumerate() {
                    let _ = writeln!(out, "  {i}) {}", describe_ii(cfg, mv.side, r));
                }
                let i = read_choice(input, out, answers.len())?;
                Some(answers[i].clone())
            }
        } else {
            let r = match &mut strategy {
                Strategy::II(st) => st.respond(&state, &mv)?,
                Strategy::I(_) => MoveII {
                    entries: candidate_entries(cfg, &state, &mv, &[]),
                },
            };
            is_legal_ii(cfg, &state, &mv, &r).then_some(r)
        };
        let Some(resp) = resp else {
            say(&mut lines, "II has no legal answer; I wins".into(), out);
            return Ok((Player::I, lines));
        };
        say(&mut lines, describe_ii(cfg, mv.side, &resp), out);
        state = apply_ii(&state, &mv, resp);
    }
}

fn scott_rank_cmd(ws: &Workspace, name: &str, s: Settings) -> Result<Output, Error> {
    let m = structure(ws, name)?;
    let len = s.tuple_cap.unwrap_or(2);
    let r = scott_rank(m, len, 2, s.config())?;
    let sizes: Vec<String> = r.gamma_sizes.iter().map(|x| x.to_string()).collect();
    Ok(Output::ok(
        format!(
            "scott rank of {} (tuples up to length {len}): {}\n|Γ_α| for α = 0..{}: {}\n",
            m.name(),
            r.rank,
            r.gamma_sizes.len() - 1,
            sizes.join(" ")
        ),
        json!({
            "structure": m.name(),
            "tuple_cap": len,
            "rank": r.rank,
            "gamma_sizes": r.gamma_sizes,
            "pairs": r.pairs.len(),
        }),
    ))
}

/// The loaded structures an invariant engine needs: the anchors' structures
/// first, then any extra probes. Returns the structures and probe indices.
fn probe_class<'w>(
    ws: &'w Workspace,
    anchors: &[&str],
    probes: &[String],
) -> Result<(Vec<&'w Structure>, Vec<usize>), Error> {
    let mut names: Vec<&str> = Vec::new();
    for a in anchors {
        if !names.contains(a) {
            names.push(a);
        }
    }
    let probe_names: Vec<&str> = if probes.is_empty() {
        names.clone()
    } else {
        probes.iter().map(String::as_str).collect()
    };
    for p in &probe_names {
        if !names.contains(p) {
            names.push(p);
        }
    }
    let structs = names
        .iter()
        .map(|n| structure(ws, n))
        .collect::<Result<Vec<_>, _>>()?;
    let idx = probe_names
        .iter()
        .map(|p| names.iter().position(|n| n == p).expect("added above"))
        .collect();
    Ok((structs, idx))
}

fn invariant_json(engine: &mut Engine<'_>, inv: &Invariant, text: &mut String) -> Value {
    let m = engine.structure(inv.structure);
    let (sig, alg) = (m.signature().clone(), m.algebra().clone());
    let mut levels = serde_json::Map::new();
    let mut base = std::collections::BTreeMap::new();
    for ((atom, map), v) in engine.base(inv) {
        let f = atom.instance(&sig, &map);
        base.insert(f.display(&sig, &alg).to_string(), alg.name(v).to_string());
    }
    text.push_str("  level 0:\n");
    for (k, v) in &base {
        text.push_str(&format!("    {k} => {v}\n"));
    }
    levels.insert("0".into(), json!(base));
    for level in 1..=inv.alpha {
        let mut rows = std::collections::BTreeMap::new();
        for (k, v) in engine.table(inv, level) {
            rows.insert(engine.describe_key(&k), alg.name(v).to_string());
        }
        text.push_str(&format!("  level {level}:\n"));
        for (k, v) in &rows {
            text.push_str(&format!("    {k} => {v}\n"));
        }
        levels.insert(level.to_string(), json!(rows));
    }
    json!({
        "structure": m.name(),
        "anchor": m.tuple_label(&inv.anchor),
        "alpha": inv.alpha,
        "extent": alg.name(inv.extent),
        "levels": levels,
    })
}

fn invariants(
    ws: &Workspace,
    anchors: &[(String, String)],
    probes: &[String],
    s: Settings,
) -> Result<Output, Error> {
    let names: Vec<&str> = anchors.iter().map(|(n, _)| n.as_str()).collect();
    let (structs, idx) = probe_class(ws, &names, probes)?;
    let mut engine = Engine::new(&structs, &idx, s.caps())?;
    let alpha = s.alpha();
    let mut invs = Vec::new();
    for (name, tuple) in anchors {
        let x = structs
            .iter()
            .position(|m| m.name() == name)
            .expect("anchors come first");
        let t = anchored(structs[x], tuple)?;
        invs.push(engine.invariant(x, &t, alpha)?);
    }
    if invs.len() == 2 {
        let (m, n) = (structs[invs[0].structure], structs[invs[1].structure]);
        same_extent(m, &invs[0].anchor, n, &invs[1].anchor)?;
    }
    let probe_names: Vec<&str> = idx.iter().map(|&i| structs[i].name()).collect();
    let mut text = String::new();
    let mut tables = Vec::new();
    for inv in &invs {
        let m = structs[inv.structure];
        text.push_str(&format!(
            "invariant of {} {} at alpha {}, extent {}, probes {}\n",
            m.name(),
            m.tuple_label(&inv.anchor),
            inv.alpha,
            m.algebra().name(inv.extent),
            probe_names.join(",")
        ));
        tables.push(invariant_json(&mut engine, inv, &mut text));
    }
    let mut out = json!({ "probes": probe_names, "invariants": tables });
    if let [x, y] = &invs[..] {
        let alg = engine.algebra().clone();
        let cmp = match engine.compare(x, y)? {
            Comparison::Equal => json!({ "equal": true }),
            Comparison::Differ(Divergence::Base {
                atom,
                map,
                left,
                right,
            }) => {
                let sig = structs[0].signature();
                json!({
                    "equal": false,
                    "level": 0,
                    "key": atom.instance(sig, &map).display(sig, &alg).to_string(),
                    "left": alg.name(left),
                    "right": alg.name(right),
                })
            }
            Comparison::Differ(Divergence::Key {
                level,
                probe,
                s: st,
                t,
                left,
                right,
            }) => {
                let k = structs[probe];
                json!({
                    "equal": false,
                    "level": level,
                    "key": format!("{}: {} | {}", k.name(), k.tuple_label(&st), k.tuple_label(&t)),
                    "left": alg.name(left),
                    "right": alg.name(right),
                })
            }
        };
        if cmp["equal"] == json!(true) {
            text.push_str("comparison: equal\n");
        } else {
            text.push_str(&format!(
                "comparison: differ at level {}, key {}: {} vs {}\n",
                cmp["level"],
                cmp["key"].as_str().unwrap_or_default(),
                cmp["left"].as_str().unwrap_or_default(),
                cmp["right"].as_str().unwrap_or_default()
            ));
        }
        out["comparison"] = cmp;
    }
    Ok(Output::ok(text, out))
}

fn scott_sentence(
    ws: &Workspace,
    name: &str,
    tuple: &str,
    probes: &[String],
    s: Settings,
) -> Result<Output, Error> {
    let (structs, idx) = probe_class(ws, &[name], probes)?;
    let mut engine = Engine::new(&structs, &idx, s.caps())?;
    let m = structs[0];
    let t = anchored(m, tuple)?;
    let alpha = s.alpha();
    let phi = engine.scott_sentence(0, &t, alpha)?;
    let forces = engine.forces(0, &phi, &t)?;
    let shown = print_shared(&phi, m.signature(), m.algebra());
    let size = phi.dag_size();
    Ok(Output::ok(
        format!(
            "{shown}\nqdegree: {}\ndag size: {size}\nforces itself: {}\n",
            phi.qdegree(),
            if forces { "yes" } else { "no" }
        ),
        json!({
            "structure": m.name(),
            "tuple": m.tuple_label(&t),
            "alpha": alpha,
            "sentence": shown,
            "qdegree": phi.qdegree(),
            "dag_size": size,
            "forces_itself": forces,
        }),
    ))
}

fn fuzz_cmd(
    seed: u64,
    count: usize,
    mutate: Option<MutationArg>,
    replay: Option<u64>,
    threads: Option<usize>,
    s: Settings,
) -> Output {
    let cfg = FuzzConfig {
        seed,
        count,
        mutation: mutate.map(|m| match m {
            MutationArg::ExistsGlobalOnly => Mutation::ExistsGlobalOnly,
            MutationArg::ForallUnguarded => Mutation::ForallUnguarded,
        }),
        budget: s.budget,
        max_alpha: s.alpha.unwrap_or(3),
        threads: threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get().min(8))),
    };
    let report = match replay {
        Some(r) => fuzz::replay(r, &cfg),
        None => fuzz::run(&cfg),
    };
    let mut text = match replay {
        Some(r) => format!("fuzz replay of instance seed {r}\n"),
        None => format!("fuzz seed {} count {}\n", report.seed, report.count),
    };
    if let Some(m) = &report.mutation {
        text.push_str(&format!("mutation: {m}\n"));
    }
    for (p, t) in &report.properties {
        text.push_str(&format!(
            "{p}: {} passed, {} failed, {} skipped\n",
            t.pass, t.fail, t.skipped
        ));
    }
    match &report.first_counterexample {
        None => text.push_str("no counterexample\n"),
        Some(f) => text.push_str(&format!(
            "first counterexample: instance {} ({}): {}\nreplay with: workbench fuzz --replay {}{}\n",
            f.instance,
            f.property,
            f.detail,
            f.instance_seed,
            report
                .mutation
                .as_ref()
                .map(|m| format!(" --mutate {m}"))
                .unwrap_or_default()
        )),
    }
    let code = if report.passed() {
        EXIT_OK
    } else {
        EXIT_COUNTEREXAMPLE
    };
    Output {
        text,
        json: serde_json::to_value(&report).expect("report serializes"),
        code,
    }
}
