use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "resgene",
    version,
    about = "Genomic prediction with residual networks over SNP images and tensors"
)]
pub struct Cli {
    /// Repeat for more log output (info, debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic genotype/phenotype dataset with known effects.
    Synth(SynthArgs),
    /// Write the network input tensor of every variety as an RGTN file.
    Encode(EncodeArgs),
    /// Cross-validate one model configuration and write a run result.
    Train(TrainArgs),
    /// Cross-validate every cell of a hyperparameter grid.
    Tune(TuneArgs),
    /// Rank models across traits and run the Friedman test.
    Report(ReportArgs),
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn half_open_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1)"))
    }
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer, got {s}")),
        Ok(v) => Ok(v),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite value >= 0, got {v}"))
    }
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Global seed; falls back to RESGENE_SEED, then 0.
    #[arg(long, env = "RESGENE_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200, value_parser = positive)]
    pub n: usize,
    #[arg(long, default_value_t = 400, value_parser = positive)]
    pub d: usize,
    /// Number of causal SNPs with additive effects.
    #[arg(long, default_value_t = 20)]
    pub q: usize,
    #[arg(long, default_value_t = 0.8, value_parser = unit_interval)]
    pub h2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub effect_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub epistatic_pairs: usize,
    #[arg(long, default_value_t = 0.0, value_parser = half_open_unit)]
    pub missing_rate: f64,
    #[arg(long, default_value = "PH")]
    pub trait_name: String,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output directory for genotypes.csv, phenotypes.csv and truth.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DelimiterArg {
    Comma,
    Tab,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding genotypes.csv and phenotypes.csv.
    #[arg(long, required_unless_present = "genotypes")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "phenotypes", conflicts_with = "data")]
    pub genotypes: Option<PathBuf>,
    #[arg(long, requires = "genotypes", conflicts_with = "data")]
    pub phenotypes: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DelimiterArg::Comma)]
    pub delimiter: DelimiterArg,
    /// Dataset label used in reports; defaults to the data directory name.
    #[arg(long)]
    pub dataset_name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Image2d,
    Tensor3d,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub genotypes: PathBuf,
    #[arg(long, value_enum, default_value_t = DelimiterArg::Comma)]
    pub delimiter: DelimiterArg,
    #[arg(long, value_enum, default_value_t = LayoutArg::Image2d)]
    pub layout: LayoutArg,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub channels: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    #[value(name = "resgene-2d")]
    Resgene2d,
    #[value(name = "resgene-t")]
    ResgeneT,
    Ridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

/// Settings shared by `train` and `tune`.
#[derive(Debug, Args)]
pub struct CommonTrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long = "trait", required = true)]
    pub trait_name: Option<String>,
    /// Defaults to 100, or 3 under the tiny tuning preset.
    #[arg(long, value_parser = positive)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.0, value_parser = half_open_unit)]
    pub momentum: f64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    pub precision: PrecisionArg,
    /// Folds (and grid cells) trained concurrently.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub jobs: usize,
    /// Comma-separated widths of the four residual stages.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Train on raw targets instead of fold-standardized ones.
    #[arg(long)]
    pub no_standardize: bool,
    /// Score by one correlation over all held-out predictions instead of
    /// the mean of per-fold correlations.
    #[arg(long)]
    pub pooled: bool,
    /// Omit wall-clock time so repeated runs give identical files.
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Tensor channel count; required for resgene-t.
    #[arg(long, value_parser = positive)]
    pub channels: Option<usize>,
    #[arg(long, default_value_t = 32, value_parser = positive)]
    pub bs: usize,
    #[arg(long, default_value_t = 0.001, value_parser = non_negative)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1, value_parser = half_open_unit)]
    pub dropout: f64,
    /// Fixed ridge penalty; by default it is chosen per fold by inner CV.
    #[arg(long, value_parser = non_negative)]
    pub lambda: Option<f64>,
    /// Shuffle the trait values among varieties first (null check).
    #[arg(long)]
    pub permute_labels: bool,
    #[command(flatten)]
    pub common: CommonTrainArgs,
    /// Run result JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TuneModelArg {
    #[value(name = "resgene-2d")]
    Resgene2d,
    #[value(name = "resgene-t")]
    ResgeneT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    /// Full ResNet-18 widths.
    Paper,
    /// Narrow stages and few epochs, for smoke tests.
    Tiny,
}

// `--list` needs neither data nor a trait.
#[derive(Debug, Args)]
#[command(
    mut_arg("trait_name", |a| a.required(false).required_unless_present("list")),
    mut_arg("data", |a| a.required_unless_present_any(["genotypes", "list"]))
)]
pub struct TuneArgs {
    #[arg(long, value_enum)]
    pub model: TuneModelArg,
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64])]
    pub bs_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.001])]
    pub lr_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3])]
    pub dropout_grid: Vec<f64>,
    /// Channel counts; only used by resgene-t.
    #[arg(long, value_delimiter = ',', default_values_t = [20, 50])]
    pub channels_grid: Vec<usize>,
    #[arg(long, value_enum, default_value_t = PresetArg::Paper)]
    pub preset: PresetArg,
    /// Select per outer fold by inner CV instead of on the reported folds.
    #[arg(long)]
    pub nested: bool,
    /// Print the grid cells and exit.
    #[arg(long)]
    pub list: bool,
    #[command(flatten)]
    pub common: CommonTrainArgs,
    /// Output directory for per-cell run results and tune.json.
    #[arg(long, required_unless_present = "list")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of run result JSON files.
    #[arg(
        long,
        required_unless_present = "pcc_table",
        conflicts_with = "pcc_table"
    )]
    pub runs: Option<PathBuf>,
    /// CSV with columns dataset,trait,<model>...
    #[arg(long)]
    pub pcc_table: Option<PathBuf>,
    /// Model whose gain over the others is reported; defaults to the last column.
    #[arg(long)]
    pub reference: Option<String>,
    /// Also write one grouped bar chart per dataset.
    #[arg(long)]
    pub svg: bool,
    #[arg(long)]
    pub out: PathBuf,
}
