use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use psgplan::domains::DomainTemplate;
use psgplan::eval::{AbsentLabels, ExperimentConfig};
use psgplan::traces::ObservationPct;

/// Settings file: every `ExperimentConfig` key at the top level, plus
/// `output_dir` and `threads`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse()?;
        let output_dir = match table.remove("output_dir") {
            Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
            Some(other) => bail!("output_dir must be a string, got {other}"),
            None => None,
        };
        let threads = match table.remove("threads") {
            Some(toml::Value::Integer(n)) if n > 0 => Some(n as usize),
            Some(other) => bail!("threads must be a positive integer, got {other}"),
            None => None,
        };
        let experiment: ExperimentConfig = toml::Value::Table(table).try_into()?;
        Ok(RunConfig { experiment, output_dir, threads })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }
}

/// Settings shared by every stage. Flags override the config file, which
/// overrides the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML settings file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Domain template, e.g. `ferry:cars=3,locations=3`
    #[arg(long, value_name = "TEMPLATE")]
    pub domain: Option<DomainTemplate>,
    #[arg(long, value_name = "N")]
    pub train_traces: Option<usize>,
    #[arg(long, value_name = "N")]
    pub test_traces: Option<usize>,
    /// Observation percentages, comma separated
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub pct: Option<Vec<u32>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedding width
    #[arg(long)]
    pub k: Option<usize>,
    /// Hidden widths of the learner networks, comma separated
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Learner epochs
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    #[arg(long, value_name = "N")]
    pub selector_epochs: Option<usize>,
    /// Planner expansion budget
    #[arg(long, value_name = "N")]
    pub plan_budget: Option<usize>,
    /// How unobserved propositions enter the loss
    #[arg(long, value_enum)]
    pub absent_labels: Option<AbsentArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum AbsentArg {
    ObservationRate,
    Unknown,
    Negative,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut run = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let e = &mut run.experiment;
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = &self.$flag {
                    e.$($field)+ = v.clone();
                }
            };
        }
        set!(domain => domain);
        set!(train_traces => train_traces);
        set!(test_traces => test_traces);
        set!(pct => percentages);
        set!(seed => seed);
        set!(k => learner.k);
        set!(hidden => learner.hidden);
        set!(lr => training.lr);
        set!(batch_size => training.batch_size);
        set!(epochs => training.epochs);
        set!(selector_epochs => selector.epochs);
        set!(plan_budget => planner.budget);
        if let Some(lr) = self.lr {
            e.selector.lr = lr;
        }
        if let Some(b) = self.batch_size {
            e.selector.batch_size = b;
        }
        if let Some(a) = self.absent_labels {
            e.absent_labels = match a {
                AbsentArg::ObservationRate => AbsentLabels::ObservationRate,
                AbsentArg::Unknown => AbsentLabels::Unknown,
                AbsentArg::Negative => AbsentLabels::Negative,
            };
        }
        e.validate().map_err(anyhow::Error::msg).context("invalid configuration")?;
        Ok(run)
    }
}

/// The single observation percentage a one-level stage runs at.
pub fn single_pct(e: &ExperimentConfig) -> Result<ObservationPct> {
    match e.percentages.as_slice() {
        [p] => Ok(ObservationPct::new(*p)?),
        _ => bail!("this command needs exactly one observation percentage (use --pct)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_flag_overrides() {
        let run = RunConfig::parse(
            "output_dir = \"o\"\nthreads = 2\ndomain = \"ferry:cars=2,locations=2\"\npercentages = [40]\n[training]\nepochs = 7\n",
        )
        .unwrap();
        assert_eq!(run.output_dir, Some(PathBuf::from("o")));
        assert_eq!(run.threads, Some(2));
        assert_eq!(run.experiment.training.epochs, 7);
        assert_eq!(run.experiment.domain, DomainTemplate::Ferry { cars: 2, locations: 2 });
        assert_eq!(single_pct(&run.experiment).unwrap().value(), 40);
        assert!(single_pct(&ExperimentConfig::default()).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("epochz = 3\n").is_err());
        assert!(RunConfig::parse("[training]\nepochz = 3\n").is_err());
        assert!(RunConfig::parse("threads = 0\n").is_err());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = toml::to_string(&ExperimentConfig::default()).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap().experiment, ExperimentConfig::default());
    }
}
