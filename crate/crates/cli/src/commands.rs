use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use r2vfl::dataset::{load_csv, load_table, CsvOptions, LabelColumn};
use r2vfl::eval::{accuracy, average_ranks, cross_validate, grid_search, BenchmarkTable, GridSearchResult, GridSpec};
use r2vfl::model::{load_model, save_model, train};
use r2vfl::stats::{friedman, nemenyi_cd, nemenyi_table, wilcoxon_signed_rank, NemenyiParams};
use r2vfl::{Dataset, ModelConfig, Variant};
use serde::Deserialize;
use serde_json::json;

use crate::cli::{
    BenchArgs, CvArgs, DataArgs, Format, GridArgs, PredictArgs, RankSource, StatsCommand, TrainArgs,
};
use crate::config::{read_toml, resolve_grid, resolve_model};
use crate::UsageError;

fn load_data(args: &DataArgs) -> Result<Dataset> {
    Ok(load_csv(&args.data, args.csv_options())?)
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("starting worker threads")?;
    Ok(pool.install(f))
}

fn write_output(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn join(values: &[f64], digits: usize, sep: &str) -> String {
    values
        .iter()
        .map(|v| format!("{v:.digits$}"))
        .collect::<Vec<_>>()
        .join(sep)
}

fn describe(cfg: &ModelConfig) -> String {
    let mut s = format!(
        "variant={} hidden={} gamma={} activation={:?} seed={}",
        cfg.variant, cfg.hidden_nodes, cfg.gamma, cfg.activation, cfg.seed
    );
    if cfg.variant.is_robust() {
        let _ = write!(
            s,
            " kernel={} tau={} delta={:?}",
            cfg.weighting.kernel.gamma, cfg.weighting.tau_multiplier, cfg.weighting.delta
        );
    }
    s
}

pub fn train_cmd(args: TrainArgs) -> Result<()> {
    let cfg = resolve_model(&args.model)?;
    let ds = load_data(&args.data)?;
    let model = train(&ds, &cfg)?;
    let pred = model.predict(ds.features())?;
    let train_acc = accuracy(&pred.labels, ds.labels())?;
    save_model(&model, &args.out)?;
    let mean_r = model
        .scores
        .as_ref()
        .map(|s| s.r.iter().sum::<f64>() / s.len() as f64);
    match args.format {
        Format::Human => {
            println!("trained {}", describe(&cfg));
            println!("samples {} features {} classes {}", ds.n_samples(), ds.n_features(), ds.n_classes());
            if let Some(r) = mean_r {
                println!("mean contribution score {r:.4}");
            }
            println!("training accuracy {train_acc:.4}");
            println!("model written to {}", args.out.display());
        }
        Format::Csv => {
            println!("variant,hidden_nodes,gamma,training_accuracy");
            println!("{},{},{},{train_acc:.4}", cfg.variant, cfg.hidden_nodes, cfg.gamma);
        }
        Format::Json => {
            let v = json!({
                "config": cfg,
                "training_accuracy": train_acc,
                "mean_contribution_score": mean_r,
                "model": args.out,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}

pub fn predict_cmd(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let table = load_table(&args.data, args.header, args.label_column)?;
    let pred = model.predict(&table.features)?;
    let mut out = String::from("row,predicted\n");
    for (i, &c) in pred.labels.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, model.class_names[c]);
    }
    match &args.out {
        Some(path) => write_output(path, out.as_bytes())?,
        None => print!("{out}"),
    }
    if let Some(truth) = &table.labels {
        // labels the model never saw can never be predicted correctly
        let encoded: Vec<usize> = truth
            .iter()
            .map(|t| model.class_names.iter().position(|c| c == t).unwrap_or(usize::MAX))
            .collect();
        eprintln!("accuracy {:.4}", accuracy(&pred.labels, &encoded)?);
    }
    Ok(())
}

pub fn cv_cmd(args: CvArgs) -> Result<()> {
    let cfg = resolve_model(&args.model)?;
    if args.k < 2 {
        return Err(UsageError(format!("--k must be at least 2, got {}", args.k)).into());
    }
    let ds = load_data(&args.data)?;
    let res = cross_validate(&ds, &cfg, args.k, cfg.seed)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    match args.format {
        Format::Human => {
            println!("{}", describe(&cfg));
            for (f, a) in res.fold_accuracies.iter().enumerate() {
                println!("fold {} accuracy {a:.4}", f + 1);
            }
            println!("mean accuracy {:.4}", res.mean);
        }
        Format::Csv => {
            println!("fold,accuracy");
            for (f, a) in res.fold_accuracies.iter().enumerate() {
                println!("{},{a}", f + 1);
            }
            println!("mean,{}", res.mean);
        }
        Format::Json => {
            let v = json!({ "config": cfg, "k": args.k, "result": res });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}

/// One row per configuration in search order. Floats use the shortest
/// representation that round-trips, so equal results give equal bytes.
pub fn trace_csv(res: &GridSearchResult, k: usize) -> String {
    let mut out = String::from("index,variant,gamma,hidden_nodes,kernel,tau,seed");
    for f in 1..=k {
        let _ = write!(out, ",fold_{f}");
    }
    out.push_str(",mean\n");
    for (i, e) in res.trace.iter().enumerate() {
        let c = &e.config;
        let (kernel, tau) = if c.variant.is_robust() {
            (c.weighting.kernel.gamma.to_string(), c.weighting.tau_multiplier.to_string())
        } else {
            (String::new(), String::new())
        };
        let _ = write!(
            out,
            "{i},{},{},{},{kernel},{tau},{}",
            c.variant, c.gamma, c.hidden_nodes, c.seed
        );
        for a in &e.fold_accuracies {
            let _ = write!(out, ",{a}");
        }
        let _ = writeln!(out, ",{}", e.mean);
    }
    out
}

pub fn grid_cmd(args: GridArgs) -> Result<()> {
    let base = resolve_model(&args.model)?;
    let grid = resolve_grid(args.grid_file.as_deref(), args.k, args.model.seed)?;
    let ds = load_data(&args.data)?;
    let res = with_jobs(args.jobs, || grid_search(&ds, &base, &grid))??;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.out {
        write_output(path, trace_csv(&res, grid.k).as_bytes())?;
    }
    match args.format {
        Format::Human => {
            println!("searched {} configurations with {}-fold cross-validation", res.trace.len(), grid.k);
            println!("best {}", describe(&res.best_config));
            println!("best mean accuracy {:.4}", res.best_mean);
        }
        Format::Csv => print!("{}", trace_csv(&res, grid.k)),
        Format::Json => {
            let v = json!({
                "configurations": res.trace.len(),
                "best_config": res.best_config,
                "best_mean": res.best_mean,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDataset {
    name: Option<String>,
    path: PathBuf,
    #[serde(default)]
    header: bool,
    label_column: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    models: Vec<Variant>,
    #[serde(default)]
    grid: GridSpec,
    #[serde(rename = "dataset")]
    datasets: Vec<ManifestDataset>,
}

fn load_manifest_dataset(entry: &ManifestDataset, root: &Path) -> Result<Dataset> {
    let label_column: LabelColumn = match &entry.label_column {
        Some(s) => s.parse()?,
        None => LabelColumn::Last,
    };
    let path = if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        root.join(&entry.path)
    };
    let opts = CsvOptions {
        has_header: entry.header,
        label_column,
    };
    let mut ds = load_csv(&path, opts)?;
    if let Some(name) = &entry.name {
        ds.set_name(name.clone());
    }
    Ok(ds)
}

pub fn bench_cmd(args: BenchArgs) -> Result<()> {
    let manifest: Manifest = read_toml(&args.manifest)?;
    let models = args.models.clone().unwrap_or(manifest.models);
    if models.is_empty() {
        return Err(UsageError("no models given (--models or manifest models)".into()).into());
    }
    if manifest.datasets.is_empty() {
        bail!("manifest lists no datasets");
    }
    manifest.grid.validate()?;
    let root = args.manifest.parent().unwrap_or(Path::new("."));
    let datasets = manifest
        .datasets
        .iter()
        .map(|e| load_manifest_dataset(e, root))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(datasets.len());
    for ds in &datasets {
        let mut row = Vec::with_capacity(models.len());
        for &variant in &models {
            let base = ModelConfig::new(variant);
            let res = with_jobs(args.jobs, || grid_search(ds, &base, &manifest.grid))?
                .with_context(|| format!("{} on {}", variant, ds.name()))?;
            for w in &res.warnings {
                eprintln!("warning: {} on {}: {w}", variant, ds.name());
            }
            row.push(res.best_mean);
        }
        rows.push(row);
    }
    let table = BenchmarkTable::new(
        models.iter().map(|m| m.to_string()).collect(),
        datasets.iter().map(|d| d.name().to_string()).collect(),
        rows,
    )?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut acc = Vec::new();
    table.write_accuracy_csv(&mut acc)?;
    write_output(&args.out.join("accuracy.csv"), &acc)?;
    let mut ranks = Vec::new();
    table.write_rank_csv(&mut ranks)?;
    write_output(&args.out.join("ranks.csv"), &ranks)?;

    match args.format {
        Format::Human | Format::Csv => std::io::stdout().write_all(&acc)?,
        Format::Json => {
            let v = json!({
                "table": table,
                "average_accuracy": table.average_accuracy(),
                "average_rank": average_ranks(&table)?,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}

fn model_column(table: &BenchmarkTable, name: &str) -> Result<usize> {
    table
        .model_index(name)
        .ok_or_else(|| anyhow!("model {name:?} not in table (have {})", table.models.join(", ")))
}

fn table_ranks(table: &BenchmarkTable, source: RankSource) -> Result<(Vec<f64>, &'static str)> {
    match (source, &table.reported_ranks) {
        (RankSource::Computed, _) | (RankSource::Auto, None) => Ok((average_ranks(table)?, "computed")),
        (_, Some(r)) => Ok((r.clone(), "reported")),
        (RankSource::Reported, None) => bail!("table has no \"Average Rank\" row"),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

pub fn stats_cmd(cmd: StatsCommand) -> Result<()> {
    match cmd {
        StatsCommand::Friedman { table, f_critical } => {
            let t = BenchmarkTable::load_csv(&table.table)?;
            let (ranks, source) = table_ranks(&t, table.ranks)?;
            let r = friedman(&ranks, t.datasets.len())?;
            let decision = f_critical.map(|f| r.rejects(f));
            match table.format {
                Format::Human => {
                    println!("datasets {} models {}", r.datasets, r.models);
                    println!("average ranks ({source}) {}", join(&ranks, 4, " "));
                    println!("chi2_F {:.4} (df {})", r.chi2, r.df1);
                    println!("F_F {:.4} (df {}, {})", r.ff, r.df2_pair.0, r.df2_pair.1);
                    if let Some(rej) = decision {
                        let verdict = if rej { "rejected" } else { "not rejected" };
                        println!("null hypothesis {verdict}");
                    }
                }
                Format::Csv => {
                    println!("chi2_f,f_f,df1,df2,datasets,models,reject");
                    let rej = decision.map(|d| yes_no(d).to_string()).unwrap_or_default();
                    println!(
                        "{:.4},{:.4},{},{},{},{},{rej}",
                        r.chi2, r.ff, r.df2_pair.0, r.df2_pair.1, r.datasets, r.models
                    );
                }
                Format::Json => {
                    let v = json!({
                        "average_ranks": ranks,
                        "rank_source": source,
                        "result": r,
                        "reject": decision,
                    });
                    println!("{}", serde_json::to_string_pretty(&v)?);
                }
            }
        }
        StatsCommand::Nemenyi {
            table,
            q_alpha,
            reference,
        } => {
            let t = BenchmarkTable::load_csv(&table.table)?;
            let p = t.models.len();
            let params = match q_alpha {
                Some(q) => NemenyiParams { q_alpha: q, alpha: 0.05 },
                None => NemenyiParams::alpha_005(p)
                    .ok_or_else(|| UsageError(format!("no built-in q_alpha for {p} models; pass --q-alpha")))?,
            };
            let reference = match &reference {
                Some(name) => model_column(&t, name)?,
                None => p - 1,
            };
            let (ranks, source) = table_ranks(&t, table.ranks)?;
            let cd = nemenyi_cd(params, p, t.datasets.len())?;
            let flags = nemenyi_table(&ranks, reference, cd)?;
            let base = ranks[reference];
            match table.format {
                Format::Human => {
                    println!("critical difference {cd:.4} (q_alpha {})", params.q_alpha);
                    println!(
                        "reference {} (average rank {base:.4}, {source})",
                        t.models[reference]
                    );
                    for (j, m) in t.models.iter().enumerate().filter(|(j, _)| *j != reference) {
                        println!(
                            "{m:<20} rank {:.4} diff {:.4} significant {}",
                            ranks[j],
                            (ranks[j] - base).abs(),
                            yes_no(flags[j])
                        );
                    }
                }
                Format::Csv => {
                    println!("model,average_rank,difference,critical_difference,significant");
                    for (j, m) in t.models.iter().enumerate().filter(|(j, _)| *j != reference) {
                        println!(
                            "{m},{:.4},{:.4},{cd:.4},{}",
                            ranks[j],
                            (ranks[j] - base).abs(),
                            yes_no(flags[j])
                        );
                    }
                }
                Format::Json => {
                    let rows: Vec<_> = t
                        .models
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != reference)
                        .map(|(j, m)| json!({ "model": m, "average_rank": ranks[j], "significant": flags[j] }))
                        .collect();
                    let v = json!({
                        "critical_difference": cd,
                        "q_alpha": params.q_alpha,
                        "reference": t.models[reference],
                        "rank_source": source,
                        "models": rows,
                    });
                    println!("{}", serde_json::to_string_pretty(&v)?);
                }
            }
        }
        StatsCommand::Wilcoxon { table, a, b, alpha } => {
            let t = BenchmarkTable::load_csv(&table.table)?;
            let (ia, ib) = (model_column(&t, &a)?, model_column(&t, &b)?);
            let r = wilcoxon_signed_rank(&t.column(ia), &t.column(ib))?;
            let decision = if r.rejects(alpha) { "Reject" } else { "Accept" };
            let (na, nb) = (&t.models[ia], &t.models[ib]);
            match table.format {
                Format::Human => {
                    println!("{na} vs {nb}");
                    println!("R+ {} R- {} (n = {})", r.r_plus, r.r_minus, r.n_effective);
                    println!("z {:.4} p {:.3e}", r.z, r.p_value);
                    println!("{decision} at alpha {alpha}");
                }
                Format::Csv => {
                    println!("a,b,r_plus,r_minus,n,z,p_value,decision");
                    println!(
                        "{na},{nb},{},{},{},{:.6},{:e},{decision}",
                        r.r_plus, r.r_minus, r.n_effective, r.z, r.p_value
                    );
                }
                Format::Json => {
                    let v = json!({ "a": na, "b": nb, "result": r, "alpha": alpha, "decision": decision });
                    println!("{}", serde_json::to_string_pretty(&v)?);
                }
            }
        }
    }
    Ok(())
}
