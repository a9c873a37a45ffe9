//! Command-line interface: simulate tables, fit fixed models, run model
//! determination, inspect the log-linear/logistic correspondence, and verify
//! the implied-prior identity.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use loglogit::correspondence::{
    build_map, implied_beta_prior, implied_beta_prior_flat_intercept, projection_identity_check,
    verify_sweep, LambdaBetaMap, VerifyReport,
};
use loglogit::design::{design_for_binomial, design_for_table, DesignMatrix};
use loglogit::inference::{
    enumerate_models, rj_select, run_chain, summarize, summarize_g, Chain, GlmModel,
    McmcSettings, ModelPosterior, ParamSummary, RjSettings, SelectionProblem,
};
use loglogit::models::{
    close_hierarchical, logistic_to_loglinear_equivalent,
    minimal_loglinear_preimage, ModelFormula, ModelSpec, Role, Term,
};
use loglogit::priors::{
    apply_flat_intercept, gprior_logistic, gprior_loglinear, mixture_ig_params, GLaw, GPriorSpec,
};
use loglogit::scenarios;
use loglogit::tables::{ContingencyTable, FactorSpec};
use loglogit::Error;

#[derive(Parser)]
#[command(
    name = "loglogit",
    version,
    about = "Bayesian log-linear and logistic regression on contingency tables under g-priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a multinomial table from the built-in five-factor scenario.
    Simulate(SimulateArgs),
    /// Fit one model by adaptive MCMC and report posterior summaries.
    Fit(FitArgs),
    /// Model determination over the graphical model space.
    Select(SelectArgs),
    /// Show the lambda-to-beta map, implied prior, and equivalent models.
    Correspond(CorrespondArgs),
    /// Verify the implied-prior identity across a sweep of models.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Loglinear,
    Logistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rj,
    Enumerate,
}

#[derive(Args)]
struct SimulateArgs {
    /// Total subject count of the multinomial draw.
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (writes table.csv); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Contingency-table CSV (factor columns plus a `count` column).
    #[arg(long)]
    data: PathBuf,
    /// Model: path to a JSON spec, or inline generators like "Y*A*B+Y*C*D"
    /// (single-character factor names may omit the `*`).
    #[arg(long)]
    model: String,
    #[arg(long, value_enum, default_value = "loglinear")]
    role: RoleArg,
    /// Binary outcome factor (required for the logistic role).
    #[arg(long)]
    outcome: Option<String>,
    /// g law: `N` (unit information), `fixed:<v>`, or `ig:<var>`.
    #[arg(long, default_value = "N")]
    g: String,
    /// Flat prior on the intercept over a centered design.
    #[arg(long)]
    flat_intercept: bool,
    /// Credible-interval level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 100_000)]
    burnin: usize,
    #[arg(long, default_value_t = 200_000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (chain.csv and summary.json).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "loglinear")]
    role: RoleArg,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long, default_value = "N")]
    g: String,
    #[arg(long, value_enum, default_value = "rj")]
    method: MethodArg,
    #[arg(long, default_value_t = 10_000)]
    burnin: usize,
    #[arg(long, default_value_t = 100_000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// How many models to report.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CorrespondArgs {
    /// Table CSV supplying factor names and level counts.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Factor levels inline, e.g. "Y:2,X:3,Z:2" (alternative to --data).
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    model: String,
    #[arg(long, value_enum, default_value = "loglinear")]
    role: RoleArg,
    #[arg(long)]
    outcome: String,
    #[arg(long, default_value = "N")]
    g: String,
    #[arg(long)]
    flat_intercept: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Largest table dimension to sweep (outcome plus covariates).
    #[arg(long, default_value_t = 4)]
    max_factors: usize,
    /// Largest level count per non-outcome factor.
    #[arg(long, default_value_t = 3)]
    max_levels: usize,
    /// Total count N backing the priors.
    #[arg(long, default_value_t = 1000)]
    n: u64,
    /// g value used in the sweep (`N` or `fixed:<v>`).
    #[arg(long, default_value = "N")]
    g: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Select(args) => cmd_select(args),
        Command::Correspond(args) => cmd_correspond(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Exit code 3 for numerical failures, 2 for configuration problems.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotPositiveDefinite
        | Error::RankDeficient(_)
        | Error::NonFiniteInit
        | Error::ModeFindingFailed(_)
        | Error::BlockStructure(_) => 3,
        _ => 2,
    }
}

/// Parse the `--g` flag into a law; `ig:<var>` needs the data total N.
fn parse_g_law(spec: &str, n_total: f64) -> Result<GLaw, Error> {
    if spec == "N" {
        return Ok(GLaw::UnitInformation);
    }
    if let Some(v) = spec.strip_prefix("fixed:") {
        let g: f64 = v
            .parse()
            .map_err(|_| Error::Config(format!("invalid fixed g value `{v}` in --g")))?;
        if g <= 0.0 {
            return Err(Error::Config(format!("--g fixed value must be positive, got {g}")));
        }
        return Ok(GLaw::Fixed { g });
    }
    if let Some(v) = spec.strip_prefix("ig:") {
        let var: f64 = v
            .parse()
            .map_err(|_| Error::Config(format!("invalid variance `{v}` in --g")))?;
        if var <= 0.0 {
            return Err(Error::Config(format!("--g ig variance must be positive, got {var}")));
        }
        let (a, b) = mixture_ig_params(n_total, var);
        return Ok(GLaw::InverseGammaMixture { a, b });
    }
    Err(Error::Config(format!(
        "unrecognized --g `{spec}`; expected N, fixed:<v>, or ig:<var>"
    )))
}

/// Load a model from a JSON spec path or an inline generator string.
fn load_model(spec: &str, role: Role, factors: &[FactorSpec]) -> Result<ModelFormula, Error> {
    if Path::new(spec).exists() {
        let text = fs::read_to_string(spec)?;
        let parsed: ModelSpec = serde_json::from_str(&text)?;
        return parsed.to_formula();
    }
    let mut gens = Vec::new();
    for part in spec.split('+') {
        let part = part.trim();
        if part.is_empty() || part == "1" {
            continue;
        }
        let names: Vec<String> = if part.contains('*') {
            part.split('*').map(|s| s.trim().to_string()).collect()
        } else {
            // Single-character factor names concatenated, e.g. "YAB".
            part.chars().map(|c| c.to_string()).collect()
        };
        for n in &names {
            if !factors.iter().any(|f| &f.name == n) {
                return Err(Error::Config(format!(
                    "factor `{n}` in --model `{part}` is not a data column"
                )));
            }
        }
        gens.push(Term::new(names));
    }
    close_hierarchical(&gens, role)
}

fn read_table(path: &Path) -> Result<ContingencyTable, Error> {
    let file = fs::File::open(path).map_err(|e| {
        Error::Config(format!("cannot open --data {}: {e}", path.display()))
    })?;
    ContingencyTable::from_csv_inferred(file)
}

fn ensure_out_dir(out: &Path) -> Result<(), Error> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, Error> {
    let table = scenarios::simulate_scenario(args.n, args.seed)?;
    let mut buf = Vec::new();
    table.to_csv(&mut buf)?;
    let csv_text = String::from_utf8(buf).expect("CSV is UTF-8");
    if let Some(out) = &args.out {
        ensure_out_dir(out)?;
        fs::write(out.join("table.csv"), &csv_text)?;
        println!("wrote {}", out.join("table.csv").display());
    } else if args.json {
        #[derive(Serialize)]
        struct SimReport<'a> {
            n: u64,
            seed: u64,
            factors: &'a [FactorSpec],
            counts: &'a [u64],
        }
        println!(
            "{}",
            serde_json::to_string_pretty(&SimReport {
                n: args.n,
                seed: args.seed,
                factors: table.factors(),
                counts: table.counts(),
            })?
        );
    } else {
        print!("{csv_text}");
    }
    Ok(ExitCode::SUCCESS)
}

/// Everything needed to run one fit: likelihood model and prior.
struct FitSetup {
    glm: GlmModel,
    prior: GPriorSpec,
    formula: ModelFormula,
}

fn build_fit(
    table: &ContingencyTable,
    model_spec: &str,
    role: RoleArg,
    outcome: Option<&str>,
    g_spec: &str,
    flat_intercept: bool,
) -> Result<FitSetup, Error> {
    let g_law = parse_g_law(g_spec, table.total() as f64)?;
    match role {
        RoleArg::Loglinear => {
            let formula = load_model(model_spec, Role::LogLinear, table.factors())?;
            let x = design_for_table(table, &formula)?;
            let mut prior = gprior_loglinear(&x, table)?.with_g_law(g_law);
            let x = if flat_intercept {
                let (flat, centered) = apply_flat_intercept(&prior, &x)?;
                prior = flat;
                centered
            } else {
                x
            };
            let glm = GlmModel::poisson(x, table.counts().to_vec())?;
            Ok(FitSetup { glm, prior, formula })
        }
        RoleArg::Logistic => {
            let y = outcome.ok_or_else(|| {
                Error::Config("--outcome is required with --role logistic".to_string())
            })?;
            let formula = load_model(
                model_spec,
                Role::Logistic(y.to_string()),
                table.factors(),
            )?;
            let retained: Vec<String> = table
                .factors()
                .iter()
                .filter(|f| f.name != y && formula.contains_factor(&f.name))
                .map(|f| f.name.clone())
                .collect();
            let data = table.collapse_to_binomial(y, &retained)?;
            let x = design_for_binomial(&data, &formula)?;
            let mut prior = gprior_logistic(&x, &data)?.with_g_law(g_law);
            let x = if flat_intercept {
                let (flat, centered) = apply_flat_intercept(&prior, &x)?;
                prior = flat;
                centered
            } else {
                x
            };
            let glm = GlmModel::binomial(x, data)?;
            Ok(FitSetup { glm, prior, formula })
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    model: ModelSpec,
    display: String,
    g: String,
    flat_intercept: bool,
    level: f64,
    burn_in: usize,
    iterations: usize,
    seed: u64,
    acceptance_rate: f64,
    parameters: Vec<ParamSummary>,
    g_summary: Option<ParamSummary>,
    deviance_at_posterior_mean: f64,
    deviance_at_mle: f64,
}

fn cmd_fit(args: FitArgs) -> Result<ExitCode, Error> {
    let table = read_table(&args.data)?;
    let setup = build_fit(
        &table,
        &args.model,
        args.role,
        args.outcome.as_deref(),
        &args.g,
        args.flat_intercept,
    )?;
    let settings = McmcSettings {
        burn_in: args.burnin,
        iterations: args.iters,
        seed: args.seed,
        prior_only: false,
        target_acceptance: 0.234,
    };
    let chain = run_chain(&setup.glm, &setup.prior, &settings)?;
    let parameters = summarize(&chain, args.level)?;
    let g_summary = summarize_g(&chain, args.level)?;
    let posterior_mean = chain.posterior_mean();
    let deviance_at_posterior_mean = setup.glm.deviance(&posterior_mean);
    let deviance_at_mle = loglogit::inference::deviance_mle(&setup.glm)?;

    let report = FitReport {
        model: ModelSpec::from_formula(&setup.formula),
        display: setup.formula.to_string(),
        g: args.g.clone(),
        flat_intercept: args.flat_intercept,
        level: args.level,
        burn_in: args.burnin,
        iterations: args.iters,
        seed: args.seed,
        acceptance_rate: chain.acceptance_rate,
        parameters,
        g_summary,
        deviance_at_posterior_mean,
        deviance_at_mle,
    };

    if let Some(out) = &args.out {
        ensure_out_dir(out)?;
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
        write_chain_csv(&out.join("chain.csv"), &chain)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_fit_table(&report);
    }
    Ok(ExitCode::SUCCESS)
}

fn write_chain_csv(path: &Path, chain: &Chain) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = chain.labels.clone();
    if chain.g_draws.is_some() {
        header.push("g".to_string());
    }
    w.write_record(&header)?;
    for i in 0..chain.draws.nrows() {
        let mut row: Vec<String> = chain
            .draws
            .row(i)
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        if let Some(g) = &chain.g_draws {
            row.push(format!("{}", g[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn print_fit_table(report: &FitReport) {
    println!("model: {}", report.display);
    println!(
        "g: {}   flat intercept: {}   acceptance: {:.3}",
        report.g, report.flat_intercept, report.acceptance_rate
    );
    println!(
        "deviance at posterior mean: {:.3}   at MLE: {:.3}",
        report.deviance_at_posterior_mean, report.deviance_at_mle
    );
    let pct = report.level * 100.0;
    println!(
        "{:<14} {:>10} {:>10} {:>10} {:>22}",
        "parameter",
        "mean",
        "sd",
        "mcse",
        format!("{pct:.0}% CI")
    );
    for p in &report.parameters {
        println!(
            "{:<14} {:>10.4} {:>10.4} {:>10.5} ({:>9.4}, {:>9.4})",
            p.label, p.mean, p.sd, p.mcse, p.ci_low, p.ci_high
        );
    }
    if let Some(g) = &report.g_summary {
        println!(
            "{:<14} {:>10.4} {:>10.4} {:>10.5} ({:>9.4}, {:>9.4})",
            g.label, g.mean, g.sd, g.mcse, g.ci_low, g.ci_high
        );
    }
}

#[derive(Serialize)]
struct SelectReport {
    method: String,
    g: String,
    seed: u64,
    mode_failures: u64,
    models: Vec<SelectEntry>,
}

#[derive(Serialize)]
struct SelectEntry {
    display: String,
    model: ModelSpec,
    probability: f64,
    visits: Option<u64>,
    log_marginal: Option<f64>,
}

fn cmd_select(args: SelectArgs) -> Result<ExitCode, Error> {
    let table = read_table(&args.data)?;
    let g_law = parse_g_law(&args.g, table.total() as f64)?;
    let problem = match args.role {
        RoleArg::Loglinear => SelectionProblem::LogLinear { table },
        RoleArg::Logistic => {
            let y = args.outcome.clone().ok_or_else(|| {
                Error::Config("--outcome is required with --role logistic".to_string())
            })?;
            let retained: Vec<String> = table
                .factors()
                .iter()
                .filter(|f| f.name != y)
                .map(|f| f.name.clone())
                .collect();
            let data = table.collapse_to_binomial(&y, &retained)?;
            SelectionProblem::Logistic { data, outcome: y }
        }
    };
    let posterior: ModelPosterior = match args.method {
        MethodArg::Enumerate => enumerate_models(&problem, &g_law)?,
        MethodArg::Rj => {
            let settings = RjSettings {
                burn_in: args.burnin,
                iterations: args.iters,
                seed: args.seed,
                jump_probability: 0.75,
            };
            rj_select(&problem, &g_law, &settings)?
        }
    };
    let report = SelectReport {
        method: posterior.method.clone(),
        g: args.g.clone(),
        seed: args.seed,
        mode_failures: posterior.mode_failures,
        models: posterior
            .top_k(args.top)
            .iter()
            .map(|e| SelectEntry {
                display: e.display.clone(),
                model: e.model.clone(),
                probability: e.probability,
                visits: e.visits,
                log_marginal: e.log_marginal,
            })
            .collect(),
    };
    if let Some(out) = &args.out {
        ensure_out_dir(out)?;
        fs::write(out.join("models.json"), serde_json::to_string_pretty(&report)?)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("method: {}   g: {}", report.method, report.g);
        for (rank, m) in report.models.iter().enumerate() {
            println!("{:>3}. p={:<8.4} {}", rank + 1, m.probability, m.display);
        }
        if report.mode_failures > 0 {
            println!("note: {} proposals rejected (mode finding failed)", report.mode_failures);
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CorrespondReport {
    input: ModelSpec,
    logistic: ModelSpec,
    logistic_display: String,
    /// Identities `beta = lambda`, one per logistic parameter.
    identities: Vec<String>,
    implied_sigma_diagonal: Vec<f64>,
    implied_prior: Option<VerifyReport>,
    equivalent_loglinear: String,
    minimal_preimage: String,
    /// Two distinct log-linear models with the same logistic image.
    witness: [String; 2],
}

fn parse_levels(spec: &str) -> Result<Vec<FactorSpec>, Error> {
    spec.split(',')
        .map(|part| {
            let (name, levels) = part.split_once(':').ok_or_else(|| {
                Error::Config(format!("bad --levels entry `{part}`; expected name:levels"))
            })?;
            let levels: usize = levels.parse().map_err(|_| {
                Error::Config(format!("bad level count in --levels entry `{part}`"))
            })?;
            FactorSpec::new(name.trim(), levels)
        })
        .collect()
}

fn cmd_correspond(args: CorrespondArgs) -> Result<ExitCode, Error> {
    let (factors, table) = match (&args.data, &args.levels) {
        (Some(path), _) => {
            let t = read_table(path)?;
            (t.factors().to_vec(), Some(t))
        }
        (None, Some(levels)) => (parse_levels(levels)?, None),
        (None, None) => {
            return Err(Error::Config(
                "provide --data or --levels to fix the factor layout".to_string(),
            ))
        }
    };
    let y = args.outcome.clone();
    let all_names: Vec<String> = factors.iter().map(|f| f.name.clone()).collect();

    // Normalize to a log-linear model: a logistic input is replaced by its
    // minimal log-linear preimage for the mapping sections.
    let (input_formula, loglinear) = match args.role {
        RoleArg::Loglinear => {
            let m = load_model(&args.model, Role::LogLinear, &factors)?;
            (m.clone(), m)
        }
        RoleArg::Logistic => {
            let m = load_model(&args.model, Role::Logistic(y.clone()), &factors)?;
            let pre = minimal_loglinear_preimage(&m)?;
            (m, pre)
        }
    };

    let map = build_map(&loglinear, &y, &factors)?;
    let identities: Vec<String> = map
        .linked_pairs()
        .iter()
        .map(|&(k, j)| {
            format!(
                "beta[{}] = lambda[{}]",
                map.beta_labels()[k].name,
                map.lambda_labels()[j].name
            )
        })
        .collect();

    // Implied prior on beta; with a table we can evaluate it numerically.
    let (implied_sigma_diagonal, implied_prior) = match &table {
        Some(t) => {
            let x_ll = design_for_table(t, &loglinear)?;
            let prior = gprior_loglinear(&x_ll, t)?;
            let implied = if args.flat_intercept {
                let (flat, _) = apply_flat_intercept(&prior, &x_ll)?;
                implied_beta_prior_flat_intercept(&flat, &map)?
            } else {
                implied_beta_prior(&prior, &map)?
            };
            let g = match parse_g_law(&args.g, t.total() as f64)? {
                GLaw::Fixed { g } => g,
                GLaw::UnitInformation => t.total() as f64,
                GLaw::InverseGammaMixture { .. } => {
                    return Err(Error::MixtureNotEnumerable)
                }
            };
            let report = loglogit::correspondence::verify_implied_prior_with_map(
                &loglinear,
                &factors,
                &map,
                t.total(),
                g,
            )?;
            (
                implied.sigma.diagonal().iter().copied().collect(),
                Some(report),
            )
        }
        None => (Vec::new(), None),
    };

    let logistic = map.logistic().clone();
    let equivalent = logistic_to_loglinear_equivalent(&logistic, &all_names)?;
    let minimal = minimal_loglinear_preimage(&logistic)?;
    let report = CorrespondReport {
        input: ModelSpec::from_formula(&input_formula),
        logistic: ModelSpec::from_formula(&logistic),
        logistic_display: logistic.to_string(),
        identities,
        implied_sigma_diagonal,
        implied_prior,
        equivalent_loglinear: equivalent.to_string(),
        minimal_preimage: minimal.to_string(),
        witness: [minimal.to_string(), equivalent.to_string()],
    };

    if let Some(out) = &args.out {
        ensure_out_dir(out)?;
        fs::write(
            out.join("correspondence.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("logistic model: {}", report.logistic_display);
        for id in &report.identities {
            println!("  {id}");
        }
        println!("deviance-equivalent log-linear model: {}", report.equivalent_loglinear);
        println!("minimal log-linear preimage: {}", report.minimal_preimage);
        if report.witness[0] != report.witness[1] {
            println!(
                "distinct log-linear models with this logistic image:\n  {}\n  {}",
                report.witness[0], report.witness[1]
            );
        }
        if let Some(t1) = &report.implied_prior {
            println!(
                "implied-prior identity: max relative error {:.3e} -> {}",
                t1.max_rel_diff,
                if t1.pass { "pass" } else { "FAIL" }
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct VerifySummary {
    instances: usize,
    worst_rel_diff: f64,
    failures: usize,
    projection_worst_residual: f64,
    pass: bool,
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, Error> {
    let g = match parse_g_law(&args.g, args.n as f64)? {
        GLaw::Fixed { g } => g,
        GLaw::UnitInformation => args.n as f64,
        GLaw::InverseGammaMixture { .. } => return Err(Error::MixtureNotEnumerable),
    };
    let reports = verify_sweep(args.max_factors, args.max_levels, args.n, g)?;
    let failures = reports.iter().filter(|r| !r.pass).count();
    let worst = reports
        .iter()
        .map(|r| r.max_rel_diff)
        .fold(0.0f64, f64::max);

    // Projection identity on the sweep's logistic designs.
    let mut projection_worst: f64 = 0.0;
    for shape in loglogit::correspondence::sweep_shapes(args.max_factors, args.max_levels) {
        for model in loglogit::correspondence::hierarchical_models_containing("Y", &shape) {
            let map: LambdaBetaMap = build_map(&model, "Y", &shape)?;
            let x_lt: DesignMatrix = map.logistic_design()?;
            for c in [2.0, 5.0, 10.0] {
                projection_worst =
                    projection_worst.max(projection_identity_check(x_lt.matrix(), c)?);
            }
        }
    }

    let summary = VerifySummary {
        instances: reports.len(),
        worst_rel_diff: worst,
        failures,
        projection_worst_residual: projection_worst,
        pass: failures == 0 && projection_worst < 1e-12,
    };
    if let Some(out) = &args.out {
        ensure_out_dir(out)?;
        fs::write(out.join("verify.json"), serde_json::to_string_pretty(&reports)?)?;
        fs::write(
            out.join("verify_summary.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!(
            "{} instances, worst relative error {:.3e}, {} failures",
            summary.instances, summary.worst_rel_diff, summary.failures
        );
        println!(
            "projection identity worst residual {:.3e}",
            summary.projection_worst_residual
        );
        println!("{}", if summary.pass { "pass" } else { "FAIL" });
    }
    if summary.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}
