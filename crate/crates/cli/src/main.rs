use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use recourse_core::attribution::{
    attribution_table, group_others, importance_from_table, top_displayed, BackgroundSet,
    DEFAULT_BACKGROUND_SIZE,
};
use recourse_core::export::{write_attribution_table, write_path_csv};
use recourse_core::{
    load_csv, train_logistic, ConstraintSet, Dataset, DisplaySelection, Engine, LogisticModel,
    Scorer, TrainConfig,
};
use recourse_service::{bind, local_addr, router, serve, AppState, ServiceConfig};

/// Largest |score - (base + sum phi)| tolerated before `explain` refuses to write.
const EFFICIENCY_TOLERANCE: f64 = 1e-9;
const PORT_ENV: &str = "REVISE_PORT";

#[derive(Debug, Parser)]
#[command(
    name = "recourse",
    version,
    about = "Train, explain, plan and serve incremental recourse"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the logistic model and write its weights.
    Train(TrainArgs),
    /// Write the attribution table for every subject.
    Explain(ExplainArgs),
    /// Greedily plan a recourse path from one subject.
    Plan(PlanArgs),
    /// Precompute attributions and serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
struct Inputs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Background rows sampled for attribution.
    #[arg(long, default_value_t = DEFAULT_BACKGROUND_SIZE)]
    background_size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    start: String,
    #[arg(long, default_value_t = 0.8)]
    target: f64,
    #[arg(long, default_value_t = 10)]
    max_steps: usize,
    /// Features held fixed, comma separated.
    #[arg(long, value_delimiter = ',')]
    immutable: Vec<String>,
    /// Also write the path as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Overridden by REVISE_PORT when set.
    #[arg(long, default_value_t = 8750)]
    port: u16,
    /// Static files for the browser companion.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => train(args),
        Command::Explain(args) => explain(args),
        Command::Plan(args) => plan(args),
        Command::Serve(args) => serve_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_data(path: &Path) -> Result<Dataset> {
    load_csv(path).with_context(|| format!("loading {}", path.display()))
}

fn load_inputs(inputs: &Inputs) -> Result<(Dataset, LogisticModel, BackgroundSet)> {
    let ds = load_data(&inputs.data)?;
    let model = LogisticModel::load(&inputs.model, &ds.schema)
        .with_context(|| format!("loading {}", inputs.model.display()))?;
    let bg = BackgroundSet::sample(&ds, inputs.background_size, inputs.seed);
    Ok((ds, model, bg))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn train(args: TrainArgs) -> Result<()> {
    let ds = load_data(&args.data)?;
    let config = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        l2_lambda: args.l2,
        seed: args.seed,
    };
    let fit = train_logistic(&ds, &config)?;
    fit.model
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("final loss {}", fit.final_loss());
    Ok(())
}

fn explain(args: ExplainArgs) -> Result<()> {
    let (ds, model, bg) = load_inputs(&args.inputs)?;
    let raw = attribution_table(&model, &ds, &bg)?;
    for (r, av) in ds.records.iter().zip(&raw) {
        let gap = (model.score(&r.values) - av.total()).abs();
        if gap > EFFICIENCY_TOLERANCE {
            bail!("EfficiencyViolation: subject {} is off by {gap:e}", r.id);
        }
    }
    let displayed = top_displayed(&importance_from_table(&raw)?);
    let grouped = raw
        .iter()
        .map(|av| group_others(av, &displayed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = create(&args.out)?;
    write_attribution_table(&mut out, &ds.schema, &grouped)?;
    out.flush()?;
    println!("wrote {} rows to {}", grouped.len(), args.out.display());
    Ok(())
}

fn plan(args: PlanArgs) -> Result<()> {
    let (ds, model, bg) = load_inputs(&args.inputs)?;
    let mut constraints = ConstraintSet::for_schema(&ds.schema);
    for f in args.immutable {
        if !constraints.immutable_features.contains(&f) {
            constraints.immutable_features.push(f);
        }
    }
    constraints.validate(&ds.schema)?;
    let engine = Engine::build(ds, Arc::new(model), bg, DisplaySelection::ByImportance)?;
    let plan = engine.greedy_plan(&args.start, &constraints, args.target, args.max_steps)?;

    let mut stdout = std::io::stdout().lock();
    let states = &plan.path.states;
    for (step, st) in states.iter().enumerate().skip(1) {
        let arrival = st.arrival.expect("extended states carry their projection");
        writeln!(
            stdout,
            "step {step}: {} projection {} outcome {}",
            st.subject_id, arrival.projection, st.outcome
        )?;
    }
    let (first, last) = (&states[0], &states[states.len() - 1]);
    writeln!(
        stdout,
        "{} {} -> {} {} after {} steps: {}",
        first.subject_id,
        first.outcome,
        last.subject_id,
        last.outcome,
        states.len() - 1,
        plan.termination.as_str()
    )?;
    if let Some(path) = args.csv {
        let mut out = create(&path)?;
        write_path_csv(&mut out, engine.schema(), &plan.path)?;
        out.flush()?;
    }
    Ok(())
}

fn port(args: &ServeArgs) -> Result<u16> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{PORT_ENV}={v} is not a port")),
        Err(_) => Ok(args.port),
    }
}

fn serve_cmd(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let addr = format!("{}:{}", args.host, port(&args)?);
    let config = ServiceConfig {
        ui_dir: args.ui_dir.clone(),
        session_idle_timeout: None,
    };

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        // bind before the expensive precompute so a busy port fails fast
        let listener = bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let state = AppState::new(&config);
        let app = router(state.clone(), &config);
        eprintln!("listening on http://{}", local_addr(&listener)?);
        let server = tokio::spawn(serve(listener, app));

        let (ds, model, bg) = load_inputs(&args.inputs)?;
        let engine = tokio::task::spawn_blocking(move || {
            Engine::build(ds, Arc::new(model), bg, DisplaySelection::ByImportance)
        })
        .await??;
        state.install(Arc::new(engine));
        eprintln!("attribution table ready");
        server.await??;
        Ok(())
    })
}
