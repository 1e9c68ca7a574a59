//! `normform`: generate datasets, train normal-form autoencoders, validate
//! checkpoints, and ingest external snapshot data through POD — every run
//! driven by one JSON config and fully determined by (config, seed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::s;

use normform_core::analysis::{svg_line_plot, validation_report, write_trace_csv};
use normform_core::config::{DataSource, RunConfig, TauPolicy};
use normform_core::dataset::build_set;
use normform_core::error::Error;
use normform_core::io;
use normform_core::nf_autoencoder::{self, estimate_tau, NfAutoencoder};
use normform_core::normal_forms::NormalFormKind;
use normform_core::pod;
use normform_core::systems::System;

#[derive(Parser)]
#[command(name = "normform", about = "normal-form autoencoder pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file path or built-in preset name.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Overrides the sampling and training seeds from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for inputs and outputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Skip the dataset-hash consistency check.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build and write train/test datasets.
    Generate,
    /// Train a model on a generated dataset.
    Train,
    /// Score a trained checkpoint against the test dataset.
    Validate,
    /// Reduce an external snapshot container to a trainable dataset.
    Pod,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::HashMismatch { .. } => EXIT_CONFIG,
        Error::Blowup { .. }
        | Error::DatasetConstruction { .. }
        | Error::NonFiniteGradient(_)
        | Error::TrainingDivergence { .. }
        | Error::NoOscillation
        | Error::RankDeficient { .. } => EXIT_DIVERGENCE,
        Error::Format(_) | Error::Shape(_) | Error::Io(_) | Error::Json(_) => EXIT_IO,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Ok(threads) = std::env::var("NORMFORM_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: NORMFORM_THREADS must be a positive integer");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }

    let mut cfg = match load_config(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(code);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.sampling.seed = seed;
        cfg.training.seed = seed;
    }

    let result = match cli.command {
        Command::Generate => cmd_generate(&cfg, &cli.out),
        Command::Train => cmd_train(&cfg, &cli.out),
        Command::Validate => cmd_validate(&cfg, &cli.out, cli.force),
        Command::Pod => cmd_pod(&cfg, &cli.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(arg: Option<&str>) -> Result<RunConfig, (u8, String)> {
    let arg = arg.ok_or((EXIT_CONFIG as u8, "--config is required".to_string()))?;
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| (EXIT_IO, format!("reading {arg}: {e}")))?;
        RunConfig::from_json(&text).map_err(|e| (EXIT_CONFIG, format!("config {arg}: {e}")))
    } else if RunConfig::preset_names().contains(&arg) {
        RunConfig::preset(arg).map_err(|e| (EXIT_CONFIG, e.to_string()))
    } else {
        Err((
            EXIT_CONFIG,
            format!(
                "config {arg:?} is neither a file nor a preset (presets: {})",
                RunConfig::preset_names().join(", ")
            ),
        ))
    }
}

fn nfds_header(
    cfg: &RunConfig,
    set: &normform_core::dataset::TrajectorySet,
) -> normform_core::error::Result<io::NfdsHeader> {
    Ok(io::NfdsHeader {
        schema_version: io::SCHEMA_VERSION,
        system: cfg.name.clone(),
        spec: serde_json::to_value(cfg)?,
        grid: set.grid,
        trim: cfg.trim,
        state_dim: set.u.nrows(),
        t_kept: set.t_kept,
        n_traj: set.n_traj(),
        config_hash: io::hash_json(cfg)?,
    })
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> normform_core::error::Result<()> {
    let DataSource::System { kind } = &cfg.source else {
        return Err(Error::InvalidArgument(
            "generate requires a built-in system; use `pod` for external data".into(),
        ));
    };
    let system = System::from_kind(*kind)?;
    let (train, test) = build_set(&system, &cfg.sampling, &cfg.grid, cfg.trim)?;
    std::fs::create_dir_all(out)?;
    let train_path = out.join("train.nfds");
    let test_path = out.join("test.nfds");
    io::write_nfds(&train_path, &nfds_header(cfg, &train)?, &train)?;
    io::write_nfds(&test_path, &nfds_header(cfg, &test)?, &test)?;
    let manifest = serde_json::json!({
        "schema_version": io::SCHEMA_VERSION,
        "name": cfg.name,
        "config_hash": io::hash_json(cfg)?,
        "train": {"file": "train.nfds", "hash": io::hash_file(&train_path)?},
        "test": {"file": "test.nfds", "hash": io::hash_file(&test_path)?},
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    println!(
        "wrote {} ({} x {}) and {} ({} trajectories)",
        train_path.display(),
        train.u.nrows(),
        train.u.ncols(),
        test_path.display(),
        test.n_traj()
    );
    Ok(())
}

fn initial_tau(
    cfg: &RunConfig,
    train: &normform_core::dataset::TrajectorySet,
) -> normform_core::error::Result<f64> {
    match cfg.tau {
        TauPolicy::Trainable { initial } => Ok(initial),
        TauPolicy::Fixed { value } => Ok(value),
        TauPolicy::EstimateFromData => {
            if cfg.normal_form != NormalFormKind::Hopf {
                return Err(Error::InvalidArgument(
                    "tau estimation needs an oscillatory (hopf) normal form".into(),
                ));
            }
            let dt = train.grid.dt();
            let mut periods = Vec::new();
            for j in 0..train.n_traj() {
                let r = train.traj_range(j);
                let series = train.u.row(0).slice(s![r]).to_vec();
                if let Ok(p) = normform_core::analysis::dominant_period(&series, dt) {
                    periods.push(p);
                }
            }
            if periods.is_empty() {
                return Err(Error::NoOscillation);
            }
            let t_data = periods.iter().sum::<f64>() / periods.len() as f64;
            let t_nf = 2.0 * std::f64::consts::PI / cfg.omega;
            estimate_tau(t_data, t_nf)
        }
    }
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> normform_core::error::Result<()> {
    let train_path = out.join("train.nfds");
    let (_, train_set) = io::read_nfds(&train_path)?;
    if let Some(dim) = cfg.state_dim()? {
        if dim != train_set.u.nrows() {
            return Err(Error::DimensionMismatch { expected: dim, got: train_set.u.nrows() });
        }
    }
    let tau = initial_tau(cfg, &train_set)?;
    let mut model = NfAutoencoder::init(
        train_set.u.nrows(),
        cfg.normal_form,
        cfg.omega,
        tau,
        cfg.tau.trainable(),
        cfg.orientation,
        &cfg.phi1_hidden,
        &cfg.psi1_hidden,
        &cfg.phi2_hidden,
        &cfg.psi2_hidden,
        cfg.activation,
        cfg.training.seed,
    )?;
    let outcome = nf_autoencoder::train(&mut model, &train_set, &cfg.loss_weights, &cfg.training)?;
    io::write_history_csv(&out.join("history.csv"), &outcome.history)?;

    // loss-balance probe after the first epoch
    let batches_per_epoch = (train_set.n_traj() / cfg.training.batch_size).max(1);
    if outcome.history.rows.len() >= batches_per_epoch {
        let row = &outcome.history.rows[batches_per_epoch - 1];
        let probe = serde_json::json!({
            "epoch": 1,
            "l3_over_l1": if row.l1 > 0.0 { row.l3 / row.l1 } else { f64::NAN },
            "l4_over_l1": if row.l1 > 0.0 { row.l4 / row.l1 } else { f64::NAN },
        });
        std::fs::write(out.join("probe.json"), serde_json::to_string_pretty(&probe)?)?;
    }

    if let Some(err) = outcome.error {
        // history is already on disk for the post-mortem
        return Err(err);
    }
    let dataset_hash = io::hash_file(&train_path)?;
    io::write_checkpoint(
        &out.join("checkpoint.ckpt"),
        &model,
        &cfg.loss_weights,
        cfg.training.seed,
        &dataset_hash,
    )?;
    if let (Some(first), Some(last)) = (outcome.history.rows.first(), outcome.history.rows.last())
    {
        println!(
            "trained {} iterations: total {:.6} -> {:.6}, tau {:.4}",
            outcome.history.rows.len(),
            first.total,
            last.total,
            model.tau()
        );
    } else {
        println!("0 epochs requested; wrote untrained checkpoint");
    }
    Ok(())
}

fn cmd_validate(_cfg: &RunConfig, out: &Path, force: bool) -> normform_core::error::Result<()> {
    let (header, model) = io::read_checkpoint(&out.join("checkpoint.ckpt"))?;
    let (_, test_set) = io::read_nfds(&out.join("test.nfds"))?;
    if model.phi1.in_dim() != test_set.u.nrows() {
        return Err(Error::DimensionMismatch {
            expected: model.phi1.in_dim(),
            got: test_set.u.nrows(),
        });
    }
    let train_path = out.join("train.nfds");
    let actual = if train_path.exists() {
        io::hash_file(&train_path)?
    } else {
        String::new()
    };
    if actual != header.dataset_hash && !force {
        return Err(Error::HashMismatch { recorded: header.dataset_hash, actual });
    }
    let report = validation_report(&model, &test_set, 20, 0.05, header.seed)?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;

    // per-trajectory traces with ensemble envelope shading for the first few
    let nf = model.nf();
    let dt = test_set.grid.dt();
    let times: Vec<f64> = (0..test_set.t_kept).map(|k| k as f64 * dt).collect();
    let grid = normform_core::integrate::TimeGrid::new(
        0.0,
        dt * (test_set.t_kept - 1) as f64,
        test_set.t_kept,
    )?;
    for (j, traj) in report.trajectories.iter().enumerate().take(4) {
        let latent = ndarray::Array2::from_shape_fn(
            (traj.latent.len(), test_set.t_kept),
            |(i, k)| traj.latent[i][k],
        );
        write_trace_csv(&out.join(format!("trace_{j}.csv")), &times, &latent)?;
        // envelope shading is best-effort: normal-form ensembles can blow up
        // (saddle-node with beta < 0 has no equilibrium)
        let envelope = nf
            .simulate_ensemble(
                latent.column(0),
                traj.beta,
                20,
                0.05,
                &grid,
                header.seed.wrapping_add(j as u64),
            )
            .ok()
            .map(|ensemble| {
                let dim = latent.nrows();
                let mut lo =
                    ndarray::Array2::from_elem((dim, test_set.t_kept), f64::INFINITY);
                let mut hi =
                    ndarray::Array2::from_elem((dim, test_set.t_kept), f64::NEG_INFINITY);
                for t in &ensemble {
                    for i in 0..dim {
                        for k in 0..test_set.t_kept {
                            lo[[i, k]] = lo[[i, k]].min(t.states[[i, k]]);
                            hi[[i, k]] = hi[[i, k]].max(t.states[[i, k]]);
                        }
                    }
                }
                (lo, hi)
            });
        let title = format!("trajectory {j}: alpha {:.3}, beta {:.3}", traj.alpha, traj.beta);
        let svg = svg_line_plot(
            &times,
            &latent,
            envelope.as_ref().map(|(lo, hi)| (lo, hi)),
            &title,
        );
        std::fs::write(out.join(format!("trace_{j}.svg")), svg)?;
    }
    println!(
        "validated {} trajectories: recon rel err {:.4}, sign agreement {:.2}",
        report.trajectories.len(),
        report.reconstruction_rel_error,
        report.sign_agreement
    );
    Ok(())
}

fn cmd_pod(cfg: &RunConfig, out: &Path) -> normform_core::error::Result<()> {
    let Some(pc) = &cfg.pod else {
        return Err(Error::InvalidArgument("pod command requires a pod config section".into()));
    };
    let DataSource::External { path } = &cfg.source else {
        return Err(Error::InvalidArgument("pod command requires an external data source".into()));
    };
    let (header, snapshots) = io::read_nfds(Path::new(path))?;
    std::fs::create_dir_all(out)?;
    let config_hash = io::hash_json(cfg)?;
    let mut mixed_list = Vec::new();
    for j in 0..snapshots.n_traj() {
        let range = snapshots.traj_range(j);
        let block = snapshots.u.slice(s![.., range]).to_owned();
        let (mut basis, mut series) = pod::pod_decompose(&block, pc.m, pc.trim, pc.stride)?;
        let gamma = match pc.gamma.kind.as_str() {
            "identity" => ndarray::Array2::eye(pc.m),
            "preset-4" => {
                if pc.m != 4 {
                    return Err(Error::InvalidArgument(format!(
                        "preset-4 gamma requires m = 4, got {}",
                        pc.m
                    )));
                }
                pod::gamma_preset_4()
            }
            "random" => pod::make_unitary_gamma(pc.m, pc.gamma.seed)?,
            other => {
                return Err(Error::InvalidArgument(format!("unknown gamma policy {other:?}")))
            }
        };
        pod::apply_mixing(&mut basis, &mut series, gamma)?;
        io::write_basis(&out.join(format!("basis_{j}.nfb")), &basis, &config_hash)?;
        mixed_list.push(series.mixed);
    }
    let dt = snapshots.grid.dt() * pc.stride as f64;
    let reduced = pod::reduced_trajectory_set(&mixed_list, &snapshots.alpha, dt)?;
    let reduced_header = io::NfdsHeader {
        schema_version: io::SCHEMA_VERSION,
        system: format!("{}-reduced", header.system),
        spec: serde_json::to_value(cfg)?,
        grid: reduced.grid,
        trim: pc.trim,
        state_dim: pc.m,
        t_kept: reduced.t_kept,
        n_traj: reduced.n_traj(),
        config_hash,
    };
    io::write_nfds(&out.join("train.nfds"), &reduced_header, &reduced)?;
    println!(
        "reduced {} trajectories to {} modes x {} columns",
        reduced.n_traj(),
        pc.m,
        reduced.t_kept
    );
    Ok(())
}
