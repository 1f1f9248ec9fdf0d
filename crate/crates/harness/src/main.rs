//! `dadil` command-line interface.
//!
//! Every configuration key is also a flag (`--n-iter 40` sets `n_iter`);
//! values come from the defaults, then `--config FILE`, then
//! `DADIL_OUTPUT_DIR`, then flags. Exit codes: 0 success, 1 a method or
//! computation failed, 2 configuration or parse error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use dadil_core::dictionary::Dictionary;
use dadil_harness::config::KEYS;
use dadil_harness::data::{generate_domains, write_labeled_csv};
use dadil_harness::experiment::{dadil_config, fit_dictionaries, prepare_seed, reconstruction_config, run_experiment};
use dadil_harness::report::{
    read_results, simplex_heatmap_svg, summarize, write_correlations, write_interpolation, write_results,
    write_run_info, write_sparsity, write_summary, write_trace, SummaryRow,
};
use dadil_harness::study::{interpolation_study, sparsity_sweep, InterpolationTable};
use dadil_harness::{ExperimentConfig, HarnessError, Result};

const OUTPUT_DIR_ENV: &str = "DADIL_OUTPUT_DIR";

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn with_config_args(cmd: Command) -> Command {
    let mut cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("flat key = value configuration file"),
    );
    for (key, help) in KEYS {
        // The command is built once per process; leaking the few flag names
        // gives clap the 'static strings it wants.
        let long: &'static str = Box::leak(flag(key).into_boxed_str());
        let mut arg = Arg::new(*key).long(long).value_name("VALUE").help(*help);
        if *key == "output_dir" {
            arg = arg.env(OUTPUT_DIR_ENV);
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn cli() -> Command {
    Command::new("dadil")
        .about("Dataset dictionary learning for multi-source domain adaptation")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_config_args(
            Command::new("generate").about("write the synthetic domains of every seed as feature CSVs"),
        ))
        .subcommand(with_config_args(
            Command::new("fit").about("learn one dictionary per seed and save it as JSON with its trace"),
        ))
        .subcommand(with_config_args(
            Command::new("eval").about("run every requested method for every seed and write results.csv"),
        ))
        .subcommand(with_config_args(Command::new("interpolate").about("simplex-grid study of a fitted dictionary")).arg(
            Arg::new("dictionary")
                .long("dictionary")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .action(ArgAction::Set)
                .help("use this saved dictionary (first seed's data) instead of fitting"),
        ))
        .subcommand(
            Command::new("report").about("aggregate results.csv files into summary.csv").arg(
                Arg::new("inputs")
                    .value_name("RESULTS_CSV")
                    .num_args(1..)
                    .required(true)
                    .value_parser(clap::value_parser!(PathBuf)),
            ).arg(
                Arg::new("output_dir")
                    .long("output-dir")
                    .env(OUTPUT_DIR_ENV)
                    .value_name("DIR")
                    .value_parser(clap::value_parser!(PathBuf)),
            ),
        )
}

fn load_config(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    // Listed order: the generator and angles come before the keys that
    // refine them.
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v).map_err(|e| HarnessError::Config(format!("--{}: {e}", flag(key))))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn describe(cfg: &ExperimentConfig) -> Vec<String> {
    vec![
        format!("seeds: {:?}", cfg.seeds),
        format!("methods: {}", cfg.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")),
        format!("dataset: {:?}", cfg.dataset),
        format!("dictionary: {:?}", cfg.dadil),
        format!("classifier: {:?}", cfg.classifier),
    ]
}

fn generate(cfg: &ExperimentConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let mut spec = cfg.dataset.clone();
        spec.seed = seed;
        let domains = generate_domains(&spec)?;
        let dir = cfg.output_dir.join(format!("seed{seed}"));
        std::fs::create_dir_all(&dir)?;
        for (l, d) in domains.iter().enumerate() {
            write_labeled_csv(&dir.join(format!("domain{l}.csv")), d)?;
        }
        eprintln!("seed {seed}: wrote {} domains to {}", domains.len(), dir.display());
    }
    Ok(())
}

fn fit_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let fitted = fit_dictionaries(cfg)?;
    for f in &fitted {
        let path = cfg.output_dir.join(format!("dictionary_seed{}.json", f.seed));
        std::fs::create_dir_all(&cfg.output_dir)?;
        f.dictionary.save(&path)?;
        eprintln!(
            "seed {}: loss {:.4} -> {:.4}, target weights {:?}, {:.1}s -> {}",
            f.seed,
            f.trace.first_epoch_loss(),
            f.trace.final_epoch_loss(),
            f.dictionary.target_weights().as_slice(),
            f.wall_time_s,
            path.display()
        );
    }
    let traces: Vec<_> = fitted.iter().map(|f| (f.seed, &f.trace)).collect();
    write_trace(&cfg.output_dir.join("trace.csv"), &traces)?;
    write_run_info(&cfg.output_dir.join("run_info.txt"), &describe(cfg))
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<10} {:<16} {:>4} {:>9} {:>7}", "method", "target", "runs", "accuracy", "std");
    for r in rows {
        println!(
            "{:<10} {:<16} {:>4} {:>9.2} {:>7.2}",
            r.method.name(),
            r.target,
            r.runs,
            r.mean_accuracy,
            r.std_accuracy
        );
    }
}

/// Returns whether every job succeeded.
fn eval(cfg: &ExperimentConfig) -> Result<bool> {
    let out = run_experiment(cfg)?;
    let dir = &cfg.output_dir;
    write_results(&dir.join("results.csv"), &out.rows)?;
    let summary = summarize(&out.rows);
    write_summary(&dir.join("summary.csv"), &summary)?;
    let traces: Vec<_> = out.dictionaries.iter().map(|f| (f.seed, &f.trace)).collect();
    write_trace(&dir.join("trace.csv"), &traces)?;
    if cfg.sparsity {
        write_sparsity(&dir.join("sparsity.csv"), &cfg.seeds, &sparsity_sweep(cfg)?)?;
    }
    let mut info = describe(cfg);
    info.extend(out.failures.iter().map(|e| format!("failed: {e}")));
    write_run_info(&dir.join("run_info.txt"), &info)?;
    print_summary(&summary);
    for e in &out.failures {
        eprintln!("error: {e}");
    }
    Ok(out.failures.is_empty())
}

fn interpolate(cfg: &ExperimentConfig, saved: Option<&Path>) -> Result<()> {
    let seeds: Vec<u64> = if saved.is_some() { cfg.seeds[..1].to_vec() } else { cfg.seeds.clone() };
    let mut tables = Vec::new();
    for &seed in &seeds {
        let data = prepare_seed(cfg, seed)?;
        let dcfg = dadil_config(cfg, seed);
        let dict = match saved {
            Some(p) => Dictionary::load(p)?,
            None => dadil_core::dictionary::fit(&data.sources, &data.target_train, &dcfg)?.0,
        };
        let table = interpolation_study(
            &dict,
            &data.target_train,
            &data.target_test,
            cfg.interpolation.grid_resolution,
            &reconstruction_config(&dict, &dcfg),
            &cfg.classifier,
            cfg.parallel,
        )?;
        eprintln!("seed {seed}: corr_r {:?} corr_e {:?}", table.corr_r, table.corr_e);
        write_interpolation(&cfg.output_dir.join(format!("interpolation_seed{seed}.csv")), dict.n_atoms(), &table)?;
        if tables.is_empty() && dict.n_atoms() == 3 {
            std::fs::write(cfg.output_dir.join("simplex_heatmap.svg"), simplex_heatmap_svg(&table)?)?;
        }
        tables.push((seed, dict.n_atoms(), table));
    }
    let k = tables[0].1;
    if tables.iter().any(|t| t.1 != k) {
        return Err(HarnessError::Config("saved dictionaries differ in size".into()));
    }
    let plain: Vec<InterpolationTable> = tables.iter().map(|t| t.2.clone()).collect();
    let pooled = InterpolationTable::pooled(&plain);
    write_interpolation(&cfg.output_dir.join("interpolation.csv"), k, &pooled)?;
    let per_seed: Vec<_> = tables.iter().map(|t| (t.0, &t.2)).collect();
    write_correlations(&cfg.output_dir.join("correlations.csv"), &per_seed, &pooled)?;
    println!("pooled corr_r {:?} corr_e {:?}", pooled.corr_r, pooled.corr_e);
    Ok(())
}

fn report(m: &ArgMatches) -> Result<()> {
    let mut rows = Vec::new();
    for p in m.get_many::<PathBuf>("inputs").into_iter().flatten() {
        rows.extend(read_results(p)?);
    }
    let summary = summarize(&rows);
    let dir = m.get_one::<PathBuf>("output_dir").cloned().unwrap_or_else(|| PathBuf::from("."));
    write_summary(&dir.join("summary.csv"), &summary)?;
    print_summary(&summary);
    Ok(())
}

fn run(m: &ArgMatches) -> Result<bool> {
    match m.subcommand() {
        Some(("generate", sub)) => generate(&load_config(sub)?).map(|_| true),
        Some(("fit", sub)) => fit_cmd(&load_config(sub)?).map(|_| true),
        Some(("eval", sub)) => eval(&load_config(sub)?),
        Some(("interpolate", sub)) => {
            let cfg = load_config(sub)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            interpolate(&cfg, sub.get_one::<PathBuf>("dictionary").map(PathBuf::as_path)).map(|_| true)
        }
        Some(("report", sub)) => report(sub).map(|_| true),
        _ => unreachable!("subcommand required"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
