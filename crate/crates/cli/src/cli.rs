use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use er_sentinel_core::detect::collusion::FxsThreshold;

use crate::commands::{self, KEYRING_FILE, LABELS_FILE, SCORE_FILE, TRACE_FILE, VERDICTS_FILE};
use crate::error::CliError;
use crate::scenario::{parse_fxs_flag, Scenario};

pub const OUT_ENV: &str = "ER_SENTINEL_OUT";

#[derive(Debug, Parser)]
#[command(name = "er-sentinel", version, about = "Simulate relay meshes and detect dropping and colluding nodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulator; writes trace.jsonl, labels.json and keyring.json.
    Simulate(Common),
    /// Run detection over a trace; writes verdicts.jsonl.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: DetectInputs,
        /// Accepted for convenience and ignored: detection never reads labels.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Score verdicts against labels; writes score.json.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Threshold sweeps over an existing trace; writes one CSV per list and summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: DetectInputs,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// simulate, detect, evaluate and sweep in one go.
    RunAll(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario TOML file. Without one the library defaults are used.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory. Falls back to the scenario, then $ER_SENTINEL_OUT, then ./out.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub rr_threshold: Option<f64>,
    #[arg(long)]
    pub sr_threshold: Option<f64>,
    /// A fixed messages-per-encounter cut-off, or `adaptive`.
    #[arg(long, value_parser = parse_fxs_flag)]
    pub fxs_threshold: Option<FxsThreshold>,
}

#[derive(Debug, Clone, Args)]
pub struct DetectInputs {
    /// Defaults to trace.jsonl in the output directory.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Defaults to keyring.json next to the trace.
    #[arg(long)]
    pub keyring: Option<PathBuf>,
}

struct Resolved {
    scenario: Scenario,
    out: PathBuf,
    jobs: usize,
}

impl Common {
    fn resolve(&self) -> Result<Resolved, CliError> {
        let mut scenario = match &self.scenario {
            Some(path) => Scenario::load(path)?,
            None => Scenario::default(),
        };
        if let Some(seed) = self.seed {
            scenario.sim.seed = seed;
        }
        if let Some(t) = self.rr_threshold {
            scenario.det.rr_threshold = t;
        }
        if let Some(t) = self.sr_threshold {
            scenario.det.sr_threshold = t;
        }
        if let Some(t) = self.fxs_threshold {
            scenario.det.fxs_threshold = t;
        }
        scenario.validate()?;
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        let out = self
            .out
            .clone()
            .or_else(|| scenario.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Resolved { scenario, out, jobs: self.jobs })
    }
}

fn sibling(of: &Path, name: &str) -> PathBuf {
    of.parent().unwrap_or(Path::new("")).join(name)
}

impl DetectInputs {
    fn paths(&self, out: &Path) -> (PathBuf, PathBuf) {
        let trace = self.trace.clone().unwrap_or_else(|| out.join(TRACE_FILE));
        let keyring = self.keyring.clone().unwrap_or_else(|| sibling(&trace, KEYRING_FILE));
        (trace, keyring)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(common) => {
            let r = common.resolve()?;
            simulate(&r)
        }
        Command::Detect { common, inputs, labels } => {
            let r = common.resolve()?;
            if labels.is_some() {
                eprintln!("note: --labels is ignored by detect");
            }
            let (trace, keyring) = inputs.paths(&r.out);
            detect(&r, &trace, &keyring)
        }
        Command::Evaluate { common, verdicts, labels } => {
            let r = common.resolve()?;
            let verdicts = verdicts.unwrap_or_else(|| r.out.join(VERDICTS_FILE));
            let labels = labels.unwrap_or_else(|| sibling(&verdicts, LABELS_FILE));
            evaluate(&r, &verdicts, &labels)
        }
        Command::Sweep { common, inputs, labels } => {
            let r = common.resolve()?;
            let (trace, keyring) = inputs.paths(&r.out);
            let labels = labels.unwrap_or_else(|| sibling(&trace, LABELS_FILE));
            sweep(&r, &trace, &keyring, &labels)
        }
        Command::RunAll(common) => {
            let r = common.resolve()?;
            let trace = r.out.join(TRACE_FILE);
            let keyring = r.out.join(KEYRING_FILE);
            let labels = r.out.join(LABELS_FILE);
            simulate(&r)?;
            detect(&r, &trace, &keyring)?;
            evaluate(&r, &r.out.join(VERDICTS_FILE), &labels)?;
            sweep(&r, &trace, &keyring, &labels)
        }
    }
}

fn simulate(r: &Resolved) -> Result<(), CliError> {
    let s = commands::simulate(&r.scenario.sim, &r.out)?;
    println!(
        "simulated {} nodes: {} messages, {} encounters, {} records ({} forged), {} delivered, {} dropped, {} expired",
        s.nodes, s.messages, s.encounters, s.records, s.forged_records, s.delivered, s.malicious_drops, s.expired
    );
    println!("wrote {}", r.out.join(TRACE_FILE).display());
    Ok(())
}

fn detect(r: &Resolved, trace: &Path, keyring: &Path) -> Result<(), CliError> {
    let verdicts = r.out.join(VERDICTS_FILE);
    let s = commands::detect(trace, keyring, &r.scenario.det, &verdicts)?;
    println!("{} nodes over {} windows, {} blacklisted", s.nodes, s.windows, s.blacklisted);
    println!("wrote {}", verdicts.display());
    Ok(())
}

fn evaluate(r: &Resolved, verdicts: &Path, labels: &Path) -> Result<(), CliError> {
    let s = commands::evaluate(verdicts, labels, &r.out.join(SCORE_FILE))?;
    println!(
        "tp={} fp={} fn={} tn={} precision={:.3} recall={:.3} f_score={:.3}",
        s.tp, s.fp, s.fn_, s.tn, s.precision, s.recall, s.f_score
    );
    Ok(())
}

fn sweep(r: &Resolved, trace: &Path, keyring: &Path, labels: &Path) -> Result<(), CliError> {
    let results = commands::sweep(trace, keyring, labels, &r.scenario.det, &r.scenario.sweep, r.jobs, &r.out)?;
    for res in &results {
        if let Some(b) = res.best() {
            println!(
                "{} {}: best threshold {} precision={:.3} recall={:.3} f_score={:.3}",
                res.metric.as_str(),
                res.mode.as_str(),
                b.threshold,
                b.score.precision,
                b.score.recall,
                b.score.f_score
            );
        }
    }
    println!("wrote sweeps to {}", r.out.display());
    Ok(())
}
