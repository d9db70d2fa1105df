use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use resgene_core::cv::{cross_validate, Aggregation, CvOptions, FoldModel, FoldPrediction};
use resgene_core::geno_io::{self, encode_base, Delimiter, GenotypeDataset};
use resgene_core::models::{Precision, ResGeneModel, ResGeneVariant, RidgeBaseline, INNER_FOLDS};
use resgene_core::report::{self, PccTable};
use resgene_core::seeds::{self, purpose};
use resgene_core::synth::{self, SynthSpec};
use resgene_core::tensorize::{plan_layout, to_image2d, to_tensor3d, LayoutMode};
use resgene_core::train::TrainConfig;
use serde::Serialize;

use crate::args::*;
use crate::error::{CliError, Result};
use crate::grid::{select_best, GridCell, GridSpec};
use crate::run_result::{RunConfig, RunResult, SCHEMA};

pub const TUNE_SCHEMA: &str = "resgene.tune/1";
const DEFAULT_EPOCHS: usize = 100;
const TINY_EPOCHS: usize = 3;
const TINY_WIDTHS: [usize; 4] = [8, 8, 16, 16];

fn delimiter(d: DelimiterArg) -> Delimiter {
    match d {
        DelimiterArg::Comma => Delimiter::COMMA,
        DelimiterArg::Tab => Delimiter::TAB,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(CliError::io(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(resgene_core::Error::from)?;
    s.push('\n');
    Ok(s)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n: a.n,
        d: a.d,
        causal: a.q,
        effect_scale: a.effect_scale,
        epistatic_pairs: a.epistatic_pairs,
        h2: a.h2,
        missing_rate: a.missing_rate,
        seed: a.seed.seed,
        trait_name: a.trait_name,
    };
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let out = synth::generate(&spec)?;
    let files = out.write(&a.out)?;
    println!("wrote {}", files.genotypes.display());
    println!("wrote {}", files.phenotypes.display());
    println!("wrote {}", files.truth.display());
    Ok(())
}

#[derive(Serialize)]
struct EncodeIndex<'a> {
    layout: &'a resgene_core::tensorize::SnpLayout,
    files: Vec<EncodedFile>,
}

#[derive(Serialize)]
struct EncodedFile {
    variety: String,
    file: String,
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn encode(a: EncodeArgs) -> Result<()> {
    let raw = geno_io::load_genotypes(&a.genotypes, delimiter(a.delimiter))?;
    let (mode, channels) = match a.layout {
        LayoutArg::Image2d if a.channels != 1 => {
            return Err(CliError::Usage(
                "--layout image2d takes exactly one channel".into(),
            ));
        }
        LayoutArg::Image2d => (LayoutMode::Image2d, 1),
        LayoutArg::Tensor3d => (LayoutMode::Tensor3d, a.channels),
    };
    let layout = plan_layout(raw.d(), mode, channels)?;
    create_dir(&a.out)?;
    let mut files = Vec::with_capacity(raw.n());
    for (i, id) in raw.variety_ids().iter().enumerate() {
        let seq: Vec<i8> = raw
            .row(i)
            .iter()
            .map(|&b| encode_base(b as char).expect("loader validated the alphabet"))
            .collect();
        let image = match mode {
            LayoutMode::Image2d => to_image2d(&seq, &layout)?,
            LayoutMode::Tensor3d => to_tensor3d(&seq, &layout)?,
        };
        let name = format!("{i:05}_{}.rgtn", file_stem(id));
        let path = a.out.join(&name);
        let f = fs::File::create(&path).map_err(CliError::io(&path))?;
        image.write_rgtn(std::io::BufWriter::new(f))?;
        files.push(EncodedFile {
            variety: id.clone(),
            file: name,
        });
    }
    let index_path = a.out.join("layout.json");
    write_file(
        &index_path,
        to_json(&EncodeIndex {
            layout: &layout,
            files,
        })?,
    )?;
    println!(
        "encoded {} varieties as {}x{}x{} ({} pad cells) into {}",
        raw.n(),
        layout.channels,
        layout.side,
        layout.side,
        layout.pad_count,
        a.out.display()
    );
    Ok(())
}

fn load_data(a: &DataArgs) -> Result<(GenotypeDataset, String)> {
    let (geno, pheno) = match (&a.data, &a.genotypes, &a.phenotypes) {
        (Some(dir), _, _) => (dir.join("genotypes.csv"), dir.join("phenotypes.csv")),
        (None, Some(g), Some(p)) => (g.clone(), p.clone()),
        _ => {
            return Err(CliError::Usage(
                "give --data or both --genotypes and --phenotypes".into(),
            ))
        }
    };
    let delim = delimiter(a.delimiter);
    let raw = geno_io::load_genotypes(&geno, delim)?;
    let phenotypes = geno_io::load_phenotypes(&pheno, delim)?;
    let dataset = geno_io::build_dataset(&raw, &phenotypes)?;
    let name = a.dataset_name.clone().unwrap_or_else(|| {
        let dir = a
            .data
            .clone()
            .or_else(|| geno.parent().map(PathBuf::from))
            .unwrap_or_default();
        dir.canonicalize()
            .ok()
            .and_then(|d| d.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "dataset".into())
    });
    log::info!(
        "loaded {name}: {} varieties, {} SNPs, traits {:?}",
        dataset.n(),
        dataset.d(),
        dataset.trait_names()
    );
    Ok((dataset, name))
}

fn cv_options(c: &CommonTrainArgs) -> Result<CvOptions> {
    if c.folds < 2 {
        return Err(CliError::Usage(format!(
            "--folds must be at least 2, got {}",
            c.folds
        )));
    }
    Ok(CvOptions {
        folds: c.folds,
        seed: c.seed.seed,
        jobs: c.jobs,
        aggregation: if c.pooled {
            Aggregation::Pooled
        } else {
            Aggregation::FoldMean
        },
    })
}

fn precision(p: PrecisionArg) -> Precision {
    match p {
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F64 => Precision::F64,
    }
}

fn resgene_model(
    variant: ResGeneVariant,
    cell: &GridCell,
    c: &CommonTrainArgs,
    epochs: usize,
    widths: Option<Vec<usize>>,
    seed: u64,
) -> Result<ResGeneModel> {
    if !(0.0..1.0).contains(&cell.dropout) {
        return Err(CliError::Usage(format!(
            "dropout must lie in [0, 1), got {}",
            cell.dropout
        )));
    }
    let train = TrainConfig {
        batch_size: cell.batch_size,
        learning_rate: cell.learning_rate,
        momentum: c.momentum,
        epochs,
        seed,
        standardize_targets: !c.no_standardize,
    };
    train
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(ResGeneModel {
        variant,
        train,
        dropout: cell.dropout,
        stage_widths: widths,
        precision: precision(c.precision),
        seed,
    })
}

fn network_config(
    model: &ResGeneModel,
    d: usize,
    opts: &CvOptions,
    permuted: bool,
) -> Result<RunConfig> {
    let (layout, network) = model.model_config(d)?;
    Ok(RunConfig {
        network: Some(network),
        train: Some(model.train.clone()),
        layout: Some(layout),
        precision: Some(model.precision),
        ridge: None,
        aggregation: opts.aggregation,
        permuted_labels: permuted,
    })
}

fn summary_line(run: &RunResult) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"));
    let mut s = format!(
        "{} / {} / {}: mean PCC {} over {} folds, pooled PCC {}",
        run.dataset,
        run.trait_name,
        run.model,
        fmt(run.mean_pcc),
        run.folds - run.undefined_folds,
        fmt(run.pooled_pcc)
    );
    if let Some(t) = run.wall_clock_seconds {
        s += &format!(" ({t:.1} s)");
    }
    s
}

pub fn train(a: TrainArgs) -> Result<()> {
    let c = &a.common;
    let variant = match (a.model, a.channels) {
        (ModelArg::ResgeneT, None) => {
            return Err(CliError::Usage(
                "--model resgene-t requires --channels".into(),
            ))
        }
        (ModelArg::ResgeneT, Some(channels)) => Some(ResGeneVariant::Tensor { channels }),
        (_, Some(_)) => {
            return Err(CliError::Usage(
                "--channels only applies to --model resgene-t".into(),
            ))
        }
        (ModelArg::Resgene2d, None) => Some(ResGeneVariant::Image2d),
        (ModelArg::Ridge, None) => None,
    };
    if a.lambda.is_some() && variant.is_some() {
        return Err(CliError::Usage(
            "--lambda only applies to --model ridge".into(),
        ));
    }
    let opts = cv_options(c)?;
    let seed = c.seed.seed;
    let trait_name = c.trait_name.as_deref().expect("clap requires --trait");
    let (dataset, name) = load_data(&c.data)?;
    let dataset = if a.permute_labels {
        dataset.with_permuted_trait(trait_name, seeds::derive(seed, 0, purpose::PERMUTE))?
    } else {
        dataset
    };

    let (model, config): (Box<dyn FoldModel>, RunConfig) = match variant {
        Some(variant) => {
            let cell = GridCell {
                batch_size: a.bs,
                learning_rate: a.lr,
                dropout: a.dropout,
                channels: a.channels,
            };
            let epochs = c.epochs.unwrap_or(DEFAULT_EPOCHS);
            let m = resgene_model(variant, &cell, c, epochs, c.widths.clone(), seed)?;
            let config = network_config(&m, dataset.d(), &opts, a.permute_labels)?;
            (Box::new(m), config)
        }
        None => {
            let m = RidgeBaseline {
                lambda: a.lambda,
                seed,
            };
            let config = RunConfig {
                network: None,
                train: None,
                layout: None,
                precision: None,
                ridge: Some(m.clone()),
                aggregation: opts.aggregation,
                permuted_labels: a.permute_labels,
            };
            (Box::new(m), config)
        }
    };

    let start = Instant::now();
    let report = cross_validate(&dataset, trait_name, model.as_ref(), &opts)?;
    let mut run = RunResult::new(&name, seed, config, report);
    if !c.no_timing {
        run.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    }
    run.write(&a.out)?;
    println!("{}", summary_line(&run));
    Ok(())
}

#[derive(Serialize)]
struct TuneRow {
    cell: GridCell,
    mean_pcc: Option<f64>,
    pooled_pcc: Option<f64>,
    score: Option<f64>,
    run_file: String,
}

#[derive(Serialize)]
struct TuneSummary {
    schema: &'static str,
    dataset: String,
    trait_name: String,
    model: String,
    seed: u64,
    /// `full_cv` selects on the reported folds; `nested` selects inside
    /// each outer training set.
    selection: &'static str,
    grid: GridSpec,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    rows: Vec<TuneRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best: Option<GridCell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_score: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fold_choices: Vec<GridCell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nested_run_file: Option<String>,
}

/// Picks a cell by inner CV on each outer training set, then trains it on
/// the whole training set.
struct NestedGrid {
    variant: ResGeneVariant,
    cells: Vec<(GridCell, ResGeneModel)>,
    trait_name: String,
    choices: Mutex<Vec<(usize, usize)>>,
}

impl FoldModel for NestedGrid {
    fn name(&self) -> String {
        self.variant.name().into()
    }

    fn fit_predict(
        &self,
        dataset: &GenotypeDataset,
        train_rows: &[usize],
        train_targets: &[f64],
        test_rows: &[usize],
        fold: usize,
    ) -> resgene_core::Result<FoldPrediction> {
        let inner = dataset.subset(train_rows)?;
        let opts = CvOptions {
            folds: INNER_FOLDS,
            seed: seeds::derive(self.cells[0].1.seed, fold, purpose::INNER_CV),
            ..CvOptions::default()
        };
        let mut scores = Vec::with_capacity(self.cells.len());
        for (_, m) in &self.cells {
            scores.push(cross_validate(&inner, &self.trait_name, m, &opts)?.score());
        }
        let cells: Vec<GridCell> = self.cells.iter().map(|(c, _)| *c).collect();
        let best = select_best(&cells, &scores).unwrap_or(0);
        log::info!("fold {}: inner CV chose {}", fold + 1, cells[best].label());
        self.choices
            .lock()
            .expect("not poisoned")
            .push((fold, best));
        self.cells[best]
            .1
            .fit_predict(dataset, train_rows, train_targets, test_rows, fold)
    }
}

pub fn tune(a: TuneArgs) -> Result<()> {
    let c = &a.common;
    let grid = GridSpec {
        batch_sizes: a.bs_grid.clone(),
        learning_rates: a.lr_grid.clone(),
        dropouts: a.dropout_grid.clone(),
        channels: (a.model == TuneModelArg::ResgeneT).then(|| a.channels_grid.clone()),
    };
    let cells = grid.cells().map_err(CliError::Usage)?;
    if a.list {
        for cell in &cells {
            println!("{}", cell.label());
        }
        println!("{} configurations", cells.len());
        return Ok(());
    }
    let out = a.out.clone().expect("clap requires --out without --list");
    let (epochs, widths) = match a.preset {
        PresetArg::Paper => (c.epochs.unwrap_or(DEFAULT_EPOCHS), c.widths.clone()),
        PresetArg::Tiny => (
            c.epochs.unwrap_or(TINY_EPOCHS),
            Some(c.widths.clone().unwrap_or(TINY_WIDTHS.to_vec())),
        ),
    };
    let opts = cv_options(c)?;
    let seed = c.seed.seed;
    let trait_name = c.trait_name.as_deref().expect("clap requires --trait");
    let (dataset, name) = load_data(&c.data)?;
    let models: Vec<(GridCell, ResGeneModel)> = cells
        .iter()
        .map(|cell| {
            let variant = match cell.channels {
                Some(channels) => ResGeneVariant::Tensor { channels },
                None => ResGeneVariant::Image2d,
            };
            Ok((
                *cell,
                resgene_model(variant, cell, c, epochs, widths.clone(), seed)?,
            ))
        })
        .collect::<Result<_>>()?;
    let model_name = models[0].1.variant.name().to_string();
    create_dir(&out)?;

    let mut summary = TuneSummary {
        schema: TUNE_SCHEMA,
        dataset: name.clone(),
        trait_name: trait_name.to_string(),
        model: model_name.clone(),
        seed,
        selection: if a.nested { "nested" } else { "full_cv" },
        grid,
        rows: Vec::new(),
        best: None,
        best_score: None,
        fold_choices: Vec::new(),
        nested_run_file: None,
    };

    if a.nested {
        let nested = NestedGrid {
            variant: models[0].1.variant,
            cells: models,
            trait_name: trait_name.to_string(),
            choices: Mutex::new(Vec::new()),
        };
        let start = Instant::now();
        let report = cross_validate(&dataset, trait_name, &nested, &opts)?;
        let config = RunConfig {
            network: None,
            train: None,
            layout: None,
            precision: Some(precision(c.precision)),
            ridge: None,
            aggregation: opts.aggregation,
            permuted_labels: false,
        };
        let mut run = RunResult::new(&name, seed, config, report);
        if !c.no_timing {
            run.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
        }
        let file = format!("{model_name}_nested.json");
        run.write(&out.join(&file))?;
        let mut choices = nested.choices.into_inner().expect("not poisoned");
        choices.sort_unstable();
        summary.fold_choices = choices.iter().map(|&(_, i)| nested.cells[i].0).collect();
        summary.best_score = run.score;
        summary.nested_run_file = Some(file);
        println!("{}", summary_line(&run));
    } else {
        let runs_dir = out.join("runs");
        create_dir(&runs_dir)?;
        let mut scores = Vec::with_capacity(models.len());
        for (i, (cell, model)) in models.iter().enumerate() {
            log::info!("configuration {}/{}: {}", i + 1, models.len(), cell.label());
            let config = network_config(model, dataset.d(), &opts, false)?;
            let start = Instant::now();
            let report = cross_validate(&dataset, trait_name, model, &opts)?;
            let mut run = RunResult::new(&name, seed, config, report);
            if !c.no_timing {
                run.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
            }
            let file = format!("{model_name}_{}.json", cell.label());
            run.write(&runs_dir.join(&file))?;
            println!("{}: {}", cell.label(), summary_line(&run));
            scores.push(run.score);
            summary.rows.push(TuneRow {
                cell: *cell,
                mean_pcc: run.mean_pcc,
                pooled_pcc: run.pooled_pcc,
                score: run.score,
                run_file: format!("runs/{file}"),
            });
        }
        let best = select_best(&cells, &scores);
        summary.best = best.map(|i| cells[i]);
        summary.best_score = best.and_then(|i| scores[i]);
        match summary.best {
            Some(b) => println!(
                "best: {} (score {:.4})",
                b.label(),
                summary.best_score.unwrap_or(f64::NAN)
            ),
            None => println!("best: none, every configuration had an undefined score"),
        }
    }
    write_file(&out.join("tune.json"), to_json(&summary)?)?;
    Ok(())
}

/// Known models in display order; others sort alphabetically before them.
const MODEL_ORDER: [&str; 3] = ["ridge", "resgene-2d", "resgene-t"];

fn model_key(m: &str) -> (usize, &str) {
    (
        MODEL_ORDER
            .iter()
            .position(|k| *k == m)
            .map_or(0, |p| p + 1),
        m,
    )
}

fn table_from_runs(dir: &Path) -> Result<PccTable> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(CliError::io(dir)))
        .collect::<Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    let mut cells = Vec::new();
    for path in &paths {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|source| CliError::Json {
                path: path.clone(),
                source,
            })?;
        if value.get("schema").and_then(|s| s.as_str()) != Some(SCHEMA) {
            log::warn!("skipping {}: not a run result", path.display());
            continue;
        }
        let run = RunResult::read(path)?;
        let score = run.score.ok_or_else(|| CliError::Invalid {
            path: path.clone(),
            message: "run has no defined correlation".into(),
        })?;
        cells.push((run.dataset, run.trait_name, run.model, score));
    }
    if cells.is_empty() {
        return Err(CliError::Usage(format!(
            "no run results in {}",
            dir.display()
        )));
    }
    cells.sort_by(|a, b| (&a.0, &a.1, model_key(&a.2)).cmp(&(&b.0, &b.1, model_key(&b.2))));
    Ok(PccTable::from_cells(&cells)?)
}

pub fn report(a: ReportArgs) -> Result<()> {
    let table = match (&a.runs, &a.pcc_table) {
        (Some(dir), _) => table_from_runs(dir)?,
        (None, Some(path)) => {
            PccTable::from_csv(&fs::read_to_string(path).map_err(CliError::io(path))?)?
        }
        (None, None) => return Err(CliError::Usage("give --runs or --pcc-table".into())),
    };
    if let Some(r) = &a.reference {
        if !table.models.contains(r) {
            return Err(CliError::Usage(format!(
                "--reference {r} is not one of {:?}",
                table.models
            )));
        }
    }
    let rep = report::aggregate_report(&table, a.reference.as_deref())?;
    create_dir(&a.out)?;
    let csv = report::to_csv(&rep);
    write_file(&a.out.join("ranks.csv"), &csv)?;
    write_file(&a.out.join("report.json"), report::to_json(&rep)?)?;
    if a.svg {
        for ds in table.datasets() {
            let path = a.out.join(format!("{}.svg", file_stem(ds)));
            write_file(&path, report::svg_bar_chart(&table, ds)?)?;
        }
    }
    print!("{csv}");
    Ok(())
}
