use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crnf::campaign::{uniqueness_instance, UniquenessSummary};
use crnf::chern_moser::{kernel_dimension, solve_equation, EquationOutcome, Normalization};
use crnf::embedding::{build_embedding, check_transversality, factor_rigidity, induced_defining_series, normalize_embedding};
use crnf::hermitian::{decompose, in_class_h, in_class_s, in_class_s_tilde, profile, recompose};
use crnf::json::*;
use crnf::quadric::{transform_defining, verify_equivalence, HypersurfaceModel, SignatureForm};
use crnf::series::{Domain, TruncatedRealSeries};
use crnf::Error;

/// Exact Hermitian normal forms, hyperquadric automorphisms, Chern-Moser
/// systems and embeddings into hyperquadrics.
#[derive(Parser)]
#[command(name = "crnf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Full,
    FreeReGww,
    Off,
}

impl From<Mode> for Normalization {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Full => Normalization::Full,
            Mode::FreeReGww => Normalization::FreeReGww,
            Mode::Off => Normalization::Off,
        }
    }
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
enum Command {
    /// Rank, signature, class membership and decomposition of a real series.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        /// Largest class bound reported (default: n).
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Diagonal decomposition into signed squares.
    Decompose {
        #[arg(long)]
        input: PathBuf,
    },
    /// Embedding (z, phi, w) of a model into a hyperquadric.
    Embed {
        #[arg(long)]
        model: PathBuf,
    },
    /// Restriction of a series to the quadric, w = u + i<z, z̄>_l.
    Restrict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ell: usize,
    },
    /// Solve the normalized linearized equation or refute it with a certificate.
    CmSolve {
        #[arg(long, alias = "input")]
        series: PathBuf,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        degree: Option<u32>,
    },
    /// Kernel dimensions of the homogeneous operator per weighted degree.
    CmKernel {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        ell: usize,
        #[arg(long, default_value_t = 8)]
        sigma_max: u32,
        #[arg(long, value_enum, default_value = "full")]
        mode: Mode,
    },
    /// Check that T maps the second model onto the first.
    EquivVerify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        model2: PathBuf,
        #[arg(long)]
        automorphism: PathBuf,
    },
    /// Factor H2 = T ∘ L ∘ H1 for two embeddings of the same model.
    Rigidity {
        #[arg(long)]
        h1: PathBuf,
        #[arg(long)]
        h2: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Normalize an embedding by an automorphism of its target quadric.
    NormalizeMap {
        #[arg(long)]
        h: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Defining series of the preimage of a model under T.
    Transform {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        automorphism: PathBuf,
        #[arg(long)]
        ell: usize,
    },
    /// Seeded uniqueness campaign over random members of the slice class.
    Thm12Sweep {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        ell: usize,
        #[arg(long, default_value_t = 8)]
        degree: u32,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze { .. } => "analyze",
            Command::Decompose { .. } => "decompose",
            Command::Embed { .. } => "embed",
            Command::Restrict { .. } => "restrict",
            Command::CmSolve { .. } => "cm-solve",
            Command::CmKernel { .. } => "cm-kernel",
            Command::EquivVerify { .. } => "equiv-verify",
            Command::Rigidity { .. } => "rigidity",
            Command::NormalizeMap { .. } => "normalize-map",
            Command::Transform { .. } => "transform",
            Command::Thm12Sweep { .. } => "thm12-sweep",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Thm12Sweep { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

/// Outcome of a command: the result body and whether it is a verified negative.
struct Outcome {
    result: Value,
    negative: bool,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Outcome { result, negative: false }
    }
}

type CliResult = std::result::Result<Outcome, Error>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> crnf::Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn read_real(path: &Path) -> crnf::Result<TruncatedRealSeries> {
    real_from_json(&read_json(path)?)
}

fn read_model(path: &Path) -> crnf::Result<HypersurfaceModel> {
    model_from_json(&read_json(path)?)
}

fn analyze(input: &Path, kmax: Option<usize>) -> CliResult {
    let a = read_real(input)?;
    let p = profile(&a);
    let kmax = kmax.unwrap_or(a.n().max(p.rank));
    let ks = |f: &dyn Fn(usize) -> bool| (0..=kmax).filter(|&k| f(k)).collect::<Vec<_>>();
    let d = decompose(&a);
    Ok(Outcome::ok(json!({
        "degree": a.cap(),
        "rank": p.rank,
        "rank_label": format!("rank at degree {}", a.cap()),
        "neg": p.neg_count,
        "pos": p.pos_count,
        "classes": {
            "H": ks(&|k| in_class_h(&a, k)),
            "S": ks(&|k| in_class_s(&a, k)),
            "S_tilde": ks(&|k| in_class_s_tilde(&a, k)),
        },
        "decomposition": d.phis.iter().map(holo_to_json).collect::<Vec<_>>(),
        "weights": d.weights.iter().map(crnf::gaussian::format_rational).collect::<Vec<_>>(),
    })))
}

fn decompose_cmd(input: &Path) -> CliResult {
    let a = read_real(input)?;
    let d = decompose(&a);
    Ok(Outcome::ok(json!({
        "s": d.s,
        "rank": d.rank(),
        "unit_weights": d.has_unit_weights(),
        "weights": d.weights.iter().map(crnf::gaussian::format_rational).collect::<Vec<_>>(),
        "phis": d.phis.iter().map(holo_to_json).collect::<Vec<_>>(),
        "recompose_exact": recompose(&d) == a,
    })))
}

fn embed(model: &Path) -> CliResult {
    let m = read_model(model)?;
    let h = build_embedding(&m)?;
    Ok(Outcome::ok(json!({
        "embedding": embedding_to_json(&h),
        "sigma": h.sigma,
        "transversal": check_transversality(&h.map),
        "identity_verified": true,
    })))
}

fn restrict(input: &Path, ell: usize) -> CliResult {
    let a = read_real(input)?;
    SignatureForm::new(a.n(), ell)?;
    let t = a.restrict_to_quadric(ell)?;
    Ok(Outcome::ok(json!({ "trace": real_to_json(&t), "zero": t.is_zero() })))
}

fn cm_solve(series: &Path, ell: usize, degree: Option<u32>) -> CliResult {
    let a = read_real(series)?;
    if let Some(d) = degree {
        if d != a.cap() {
            return Err(Error::Precondition(format!("--degree {d} differs from the series cap {}", a.cap())));
        }
    }
    let form = SignatureForm::new(a.n(), ell)?;
    let rhs = match a.domain() {
        Domain::ZW => a.restrict_to_quadric(ell)?,
        Domain::ZU => a,
    };
    Ok(match solve_equation(&rhs, form)? {
        EquationOutcome::Solved { f, g } => Outcome::ok(json!({
            "outcome": "solved",
            "f": f.iter().map(holo_to_json).collect::<Vec<_>>(),
            "g": holo_to_json(&g),
        })),
        EquationOutcome::Refuted(cert, _) => Outcome {
            negative: cert.verified,
            result: json!({ "outcome": "refuted", "certificate": cert }),
        },
    })
}

fn cm_kernel(n: usize, ell: usize, sigma_max: u32, mode: Mode) -> CliResult {
    let form = SignatureForm::new(n, ell)?;
    let dims: Vec<Value> = (0..=sigma_max)
        .map(|s| json!({ "sigma": s, "dim": kernel_dimension(s, form, mode.into()) }))
        .collect();
    Ok(Outcome::ok(json!({ "n": n, "ell": ell, "mode": mode, "dims": dims })))
}

fn equiv_verify(model: &Path, model2: &Path, automorphism: &Path) -> CliResult {
    let m1 = read_model(model)?;
    let m2 = read_model(model2)?;
    let t = automorphism_from_json(&read_json(automorphism)?, Some(m1.form.ell), m1.cap())?;
    let rep = verify_equivalence(&m1, &m2, &t)?;
    Ok(Outcome {
        negative: !rep.equivalent,
        result: json!({
            "equivalent": rep.equivalent,
            "invariants_match": rep.invariants_match,
            "rank": [rep.rank.0, rep.rank.1],
            "signature_pairs": [[rep.signature_pairs.0 .0, rep.signature_pairs.0 .1], [rep.signature_pairs.1 .0, rep.signature_pairs.1 .1]],
            "first_difference": rep.first_difference,
            "warnings": rep.warnings,
        }),
    })
}

fn rigidity(h1: &Path, h2: &Path, model: &Path) -> CliResult {
    let m = read_model(model)?;
    let e1 = embedding_from_json(&read_json(h1)?)?;
    let e2 = embedding_from_json(&read_json(h2)?)?;
    let fac = factor_rigidity(&e1, &e2, &m)?;
    Ok(Outcome {
        negative: !fac.residual_exact,
        result: json!({
            "T": automorphism_to_json(&fac.t),
            "residual_exact": fac.residual_exact,
            "factorization_regime": fac.regime,
            "unitary_match": matrix_to_json(&fac.unitary_match),
            "perm1": fac.perm1,
            "perm2": fac.perm2,
            "sigma": fac.sigma,
            "warnings": fac.warnings,
        }),
    })
}

fn normalize_map(h: &Path, model: &Path) -> CliResult {
    let m = read_model(model)?;
    let e = embedding_from_json(&read_json(h)?)?;
    let nz = normalize_embedding(&e, &m)?;
    let induced = induced_defining_series(&nz.htilde, m.form.ell, e.target.ell, nz.sigma)?;
    Ok(Outcome::ok(json!({
        "T": automorphism_to_json(&nz.t),
        "htilde": map_to_json(&nz.htilde),
        "sigma": nz.sigma,
        "renumbering": nz.renumbering,
        "f": nz.f().iter().map(holo_to_json).collect::<Vec<_>>(),
        "phi": nz.phi().iter().map(holo_to_json).collect::<Vec<_>>(),
        "g": holo_to_json(&nz.g()),
        "induced_series": real_to_json(&induced),
    })))
}

fn transform(input: &Path, automorphism: &Path, ell: usize) -> CliResult {
    let a = read_real(input)?;
    let t = automorphism_from_json(&read_json(automorphism)?, Some(ell), a.cap())?;
    let out = transform_defining(&a, &t)?;
    Ok(Outcome::ok(json!({ "series": real_to_json(&out) })))
}

fn thm12_sweep(n: usize, ell: usize, degree: u32, count: u64, seed: u64, jobs: usize) -> CliResult {
    if degree < 4 {
        return Err(Error::Precondition("--degree must be at least 4".into()));
    }
    let form = SignatureForm::new(n, ell)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let records = pool.install(|| {
        (0..count).into_par_iter().map(|i| uniqueness_instance(form, degree, seed, i)).collect::<crnf::Result<Vec<_>>>()
    })?;
    let summary = UniquenessSummary::new(records);
    Ok(Outcome { negative: !summary.all_refuted(), result: serde_json::to_value(&summary).expect("serializable") })
}

fn dispatch(cmd: &Command) -> CliResult {
    match cmd {
        Command::Analyze { input, kmax } => analyze(input, *kmax),
        Command::Decompose { input } => decompose_cmd(input),
        Command::Embed { model } => embed(model),
        Command::Restrict { input, ell } => restrict(input, *ell),
        Command::CmSolve { series, ell, degree } => cm_solve(series, *ell, *degree),
        Command::CmKernel { n, ell, sigma_max, mode } => cm_kernel(*n, *ell, *sigma_max, *mode),
        Command::EquivVerify { model, model2, automorphism } => equiv_verify(model, model2, automorphism),
        Command::Rigidity { h1, h2, model } => rigidity(h1, h2, model),
        Command::NormalizeMap { h, model } => normalize_map(h, model),
        Command::Transform { input, automorphism, ell } => transform(input, automorphism, *ell),
        Command::Thm12Sweep { n, ell, degree, count, seed, jobs } => thm12_sweep(*n, *ell, *degree, *count, *seed, *jobs),
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Mismatch(_) => "mismatch",
        Error::Reality(_) => "reality",
        Error::CapExceeded(_) => "cap_exceeded",
        Error::ConstantTerm(_) => "constant_term",
        Error::LowOrder(_) => "low_order",
        Error::Parse(_) => "parse",
        Error::Precondition(_) => "precondition",
        Error::Isometry(_) => "isometry",
        Error::SigmaSignature { .. } => "sigma_signature",
        Error::Recovery(_) => "recovery",
        Error::Transversality(_) => "transversality",
        Error::Normalization(_) => "normalization",
        Error::Hypothesis { .. } => "hypothesis",
        Error::Singular(_) => "singular",
        Error::Irrational(_) => "irrational",
        Error::IdentityFailed { .. } => "identity_failed",
        Error::Internal(_) => "internal",
    }
}

/// Failed identity checks are verified negatives; everything else is an input error.
fn exit_for_error(e: &Error) -> u8 {
    match e {
        Error::IdentityFailed { .. } | Error::Hypothesis { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // Usage errors exit 1: code 2 is reserved for verified negatives.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cmd = &cli.command;
    let mut report = json!({
        "command": cmd.name(),
        "regime": "exact",
        "provenance": {
            "tool": "crnf",
            "version": env!("CARGO_PKG_VERSION"),
            "library_version": crnf::VERSION,
            "seed": cmd.seed(),
            "config": cmd,
        },
    });
    let code = match dispatch(cmd) {
        Ok(out) => {
            report["status"] = json!(if out.negative { "negative" } else { "ok" });
            report["result"] = out.result;
            if out.negative {
                2
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("crnf {}: {e}", cmd.name());
            let code = exit_for_error(&e);
            report["status"] = json!(if code == 2 { "negative" } else { "error" });
            report["error"] = json!({ "kind": error_kind(&e), "message": e.to_string() });
            code
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &cli.output {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                eprintln!("crnf: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(code)
}
