use std::path::{Path, PathBuf};

use nonsep_gasp::baselines::{
    compute_metrics, lm_by_sample_predict, lm_by_site_predict, model_predict,
    nearest_neighbor_predict, MetricsReport, PredictionTable,
};
use nonsep_gasp::bench::{plot_data, run_benchmark};
use nonsep_gasp::estimate::{fit, PriorSpec};
use nonsep_gasp::io::{
    metrics_table, prediction_table_tsv, read_prediction_table, write_atomic, DataFile,
};
use nonsep_gasp::model::{
    marginal_log_likelihood, ComponentKernel, FittedModel, FunctionalDataset,
};
use nonsep_gasp::simulate::{simulate, SimulationConfig};
use nonsep_gasp::GaspError;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| GaspError::Io {
        path: cfg.out_dir.clone(),
        source: e,
    })?;
    Ok(cfg.out_dir.join(name))
}

fn write_text(cfg: &RunConfig, name: &str, text: &str) -> Result<PathBuf> {
    let path = out_path(cfg, name)?;
    write_atomic(&path, text.as_bytes())?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

#[derive(Serialize)]
struct SimulationRecord<'a> {
    config: SimulationConfig,
    masked_samples: Vec<&'a str>,
    masked_columns: &'a [usize],
    /// Rows of the mixing matrix.
    mixing: Vec<Vec<f64>>,
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<()> {
    let sim_cfg = cfg.simulation();
    let sim = simulate(&sim_cfg)?;
    sim.truth.write(&out_path(cfg, "truth.csv")?)?;
    sim.masked.write(&out_path(cfg, "masked.csv")?)?;
    let record = SimulationRecord {
        config: sim_cfg,
        masked_samples: sim
            .masked_samples
            .iter()
            .map(|&i| sim.truth.sample_ids[i].as_str())
            .collect(),
        masked_columns: &sim.masked_columns,
        mixing: sim
            .mixing
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
    };
    write_text(cfg, "simulation.toml", &to_toml(&record)?)?;
    println!(
        "simulated K={} n={} seed={} into {}",
        cfg.k,
        cfg.n,
        cfg.seed,
        cfg.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ComponentRecord {
    kernel: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    sigma2: f64,
    eta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_posterior: Option<f64>,
}

#[derive(Serialize)]
struct ModelRecord {
    /// Samples in the order of the basis rows, partially observed ones last.
    samples: Vec<String>,
    n_sites: usize,
    log_likelihood: f64,
    prior: PriorSpec,
    row_means: Vec<f64>,
    /// Rows of the basis matrix.
    basis: Vec<Vec<f64>>,
    components: Vec<ComponentRecord>,
}

fn model_record(
    file: &DataFile,
    data_order: &[usize],
    fitted: &FittedModel,
    prior: PriorSpec,
) -> Result<ModelRecord> {
    let components = fitted
        .params()
        .iter()
        .zip(fitted.estimates())
        .map(|(p, e)| ComponentRecord {
            kernel: match p.kernel {
                ComponentKernel::Matern(_) => "matern-2.5",
                ComponentKernel::WhiteNoise => "frozen",
            },
            gamma: p.kernel.gamma(),
            sigma2: p.sigma2,
            eta: p.eta,
            zeta: e.as_ref().map(|e| e.zeta),
            s2: e.as_ref().map(|e| e.s2),
            iterations: e.as_ref().map(|e| e.iterations),
            converged: e.as_ref().map(|e| e.converged),
            log_posterior: e.as_ref().map(|e| e.objective),
        })
        .collect();
    let k = fitted.basis().matrix().nrows();
    Ok(ModelRecord {
        samples: data_order[..k]
            .iter()
            .map(|&i| file.sample_ids[i].clone())
            .collect(),
        n_sites: fitted.grid().len(),
        log_likelihood: marginal_log_likelihood(fitted)?,
        prior,
        row_means: fitted.row_means().iter().copied().collect(),
        basis: fitted
            .basis()
            .matrix()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        components,
    })
}

fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| CliError::Config(format!("serializing output: {e}")))
}

fn load(input: &Path, need_targets: bool) -> Result<(DataFile, FunctionalDataset)> {
    let file = DataFile::read(input)?;
    let data = file.to_dataset()?;
    if need_targets && data.k_star() == 0 {
        return Err(GaspError::NothingToImpute.into());
    }
    Ok((file, data))
}

/// Fits the model and writes `model.toml`.
fn fit_and_record(
    cfg: &RunConfig,
    file: &DataFile,
    data: &FunctionalDataset,
) -> Result<FittedModel> {
    let fit_cfg = cfg.fit_config()?;
    let prior = cfg.prior_for(&data.observed_grid()?)?;
    let model = fit(data, &prior, &fit_cfg)?;
    let record = model_record(file, data.row_order(), &model, prior)?;
    write_text(cfg, "model.toml", &to_toml(&record)?)?;
    Ok(model)
}

pub fn fit_cmd(cfg: &RunConfig, input: &Path) -> Result<()> {
    let (file, data) = load(input, false)?;
    let model = fit_and_record(cfg, &file, &data)?;
    println!(
        "fitted {} components on {} sites into {}",
        model.n_components(),
        model.grid().len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn read_truth(path: &Path, masked: &DataFile) -> Result<DataFile> {
    let truth = DataFile::read(path)?;
    if truth.sample_ids != masked.sample_ids || *truth.sites != *masked.sites {
        return Err(GaspError::Contract(format!(
            "{} does not have the samples and sites of the masked input",
            path.display()
        ))
        .into());
    }
    Ok(truth)
}

fn attach(table: &mut PredictionTable, truth: &DataFile) -> Result<()> {
    table.attach_truth(|s, c| truth.value(s, c));
    if let Some(c) = table.cells.iter().find(|c| c.truth.is_none()) {
        return Err(GaspError::Contract(format!(
            "truth file has no value for sample {} at column {}",
            truth.sample_ids[c.sample], c.column
        ))
        .into());
    }
    Ok(())
}

pub fn impute_cmd(cfg: &RunConfig, input: &Path, truth: Option<&Path>) -> Result<()> {
    let (file, data) = load(input, true)?;
    let truth = truth.map(|t| read_truth(t, &file)).transpose()?;
    let model = fit_and_record(cfg, &file, &data)?;
    let mut table = model_predict(&data, &model, cfg.level)?;
    if let Some(truth) = truth {
        attach(&mut table, &truth)?;
        let m = compute_metrics(&table, cfg.threshold)?;
        write_text(cfg, "metrics.tsv", &metrics_table(std::slice::from_ref(&m)))?;
        print_report(&m);
    }
    write_text(
        cfg,
        "predictions.tsv",
        &prediction_table_tsv(&table, &file.sample_ids),
    )?;
    println!(
        "imputed {} cells into {}",
        table.cells.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn print_report(m: &MetricsReport) {
    let opt = |v: Option<f64>| v.map_or_else(|| "/".to_owned(), |x| format!("{x:.4}"));
    println!(
        "{}: rmse={:.4} coverage={} length={} accuracy={:.4} cells={}",
        m.method,
        m.rmse,
        opt(m.coverage),
        opt(m.mean_length),
        m.accuracy,
        m.n_cells
    );
}

pub fn baselines_cmd(cfg: &RunConfig, input: &Path, truth: &Path) -> Result<()> {
    let (file, data) = load(input, true)?;
    let truth = read_truth(truth, &file)?;
    let model = fit_and_record(cfg, &file, &data)?;
    let runs: Vec<(&str, nonsep_gasp::Result<PredictionTable>)> = vec![
        ("nonseparable-gasp", model_predict(&data, &model, cfg.level)),
        ("nearest-neighbor", nearest_neighbor_predict(&data)),
        (
            "lm-by-site",
            lm_by_site_predict(&data, cfg.flank, cfg.level),
        ),
        ("lm-by-sample", lm_by_sample_predict(&data, cfg.level)),
    ];
    let mut reports = Vec::new();
    for (name, run) in runs {
        match run {
            Ok(mut table) => {
                attach(&mut table, &truth)?;
                let m = compute_metrics(&table, cfg.threshold)?;
                write_text(
                    cfg,
                    &format!("predictions-{name}.tsv"),
                    &prediction_table_tsv(&table, &file.sample_ids),
                )?;
                print_report(&m);
                reports.push(m);
            }
            Err(e @ GaspError::Precondition(_)) => log::warn!("skipping {name}: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    write_text(cfg, "comparison.tsv", &metrics_table(&reports))?;
    Ok(())
}

pub fn evaluate_cmd(cfg: &RunConfig, predictions: &Path, truth: &Path) -> Result<()> {
    let truth = DataFile::read(truth)?;
    let mut table = read_prediction_table(predictions, &truth.sample_ids, Some(cfg.level))?;
    if table.cells.iter().all(|c| c.lower.is_none()) {
        table.level = None;
    }
    attach(&mut table, &truth)?;
    let m = compute_metrics(&table, cfg.threshold)?;
    write_text(cfg, "metrics.tsv", &metrics_table(std::slice::from_ref(&m)))?;
    print_report(&m);
    Ok(())
}

pub fn benchmark_cmd(cfg: &RunConfig) -> Result<()> {
    if cfg.sizes.is_empty() {
        return Err(CliError::Config("benchmark needs at least one size".into()));
    }
    let rows = run_benchmark(&cfg.sizes, cfg.dense_max, cfg.reps, cfg.seed)?;
    for r in &rows {
        let dense = r
            .dense_seconds
            .map_or_else(|| "NA".to_owned(), |d| format!("{d:.3e}"));
        println!("n={} fast={:.3e}s dense={}s", r.n, r.fast_seconds, dense);
    }
    write_text(cfg, "benchmark.tsv", &plot_data(&rows))?;
    Ok(())
}
