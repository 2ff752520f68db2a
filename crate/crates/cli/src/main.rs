use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use crane_core::clutch::{insert_to_depth, InchwormState};
use crane_core::config::CraneConfig;
use crane_core::harness::{
    calibrate_on_plant, default_cone, export, home_configuration, prepare_plant, run_insertion_scenario, run_tracking,
    summarize, summary_text, ExportPaths, TrackingMode,
};
use crane_core::plant::Plant;

/// CRANE needle-placement robot simulator.
#[derive(Debug, Parser)]
#[command(name = "crane", version)]
struct Cli {
    /// TOML configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Calibrate the motor-to-joint coupling on a simulated robot and save it as CSV.
    Calibrate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Calibrate, then register the tracker to the robot base and save it as TOML.
    Register {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the cone-tracking experiment and write CSV, SVG and a summary.
    Track {
        #[arg(long, value_enum, default_value_t = Mode::Closed)]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Inch-worm needle insertion to a depth, logged as CSV.
    Insert {
        /// Target depth, mm.
        #[arg(long)]
        depth: f64,
        /// Tissue resistance, N.
        #[arg(long, default_value_t = 5.0)]
        resistance: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also run the closed-loop straight-insertion scenario and report its
        /// needle-axis error.
        #[arg(long)]
        vector: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the teleoperation service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Print the default configuration as TOML.
    Config,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Open,
    Closed,
}

impl From<Mode> for TrackingMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Open => TrackingMode::OpenLoop,
            Mode::Closed => TrackingMode::ClosedLoop,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<CraneConfig> {
    match path {
        Some(p) => CraneConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(CraneConfig::default()),
    }
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Cmd::Calibrate { seed, out } => {
            out_dir(&out)?;
            let mut plant = Plant::new(cfg.plant.clone(), seed)?;
            let home = home_configuration();
            plant.place_at(&home)?;
            let coupling = calibrate_on_plant(&mut plant, &cfg.harness, &home)?;
            let path = out.join(format!("coupling_seed{seed}.csv"));
            coupling.save(&path)?;
            let truth = plant.coupling_matrix();
            let err = (coupling.matrix() - truth).abs().max();
            let scale = truth.abs().max();
            println!("coupling written to {}", path.display());
            println!("max entry error {err:.3e} ({:.3e} relative)", err / scale);
        }
        Cmd::Register { seed, out } => {
            out_dir(&out)?;
            let (_, setup) = prepare_plant(&cfg.plant, &cfg.control, &cfg.harness, seed)?;
            let path = out.join(format!("registration_seed{seed}.toml"));
            setup.registration.save(&path)?;
            println!("registration written to {}", path.display());
            println!("rms residual {:.3} mm", setup.registration.rms_residual * 1e3);
        }
        Cmd::Track { mode, seed, out } => {
            out_dir(&out)?;
            let mode = TrackingMode::from(mode);
            let cone = default_cone(&cfg.harness)?;
            let record = run_tracking(mode, &cone, &cfg.plant, &cfg.control, &cfg.harness, seed)?;
            let summary = summarize(&record, cfg.harness.transient_fraction)?;
            let paths = ExportPaths::in_dir(&out, &format!("track_{}_seed{seed}", mode.name()));
            export(&record, &summary, &paths)?;
            print!("{}", summary_text(&summary));
            println!("wrote {}, {} and {}", paths.csv.display(), paths.svg.display(), paths.summary.display());
        }
        Cmd::Insert {
            depth,
            resistance,
            out,
            vector,
            seed,
        } => {
            if !(depth > 0.0 && depth.is_finite()) {
                bail!("depth must be a positive number of millimetres");
            }
            out_dir(&out)?;
            let start = InchwormState::grasped(&cfg.clutch);
            let run = insert_to_depth(&cfg.clutch, &start, depth * 1e-3, resistance, 3600.0)?;
            let path = out.join("insertion.csv");
            run.write_csv(&path)?;
            let s = &run.final_state;
            match run.stall {
                Some(stall) => println!(
                    "stalled at {:.1} mm: {:.1} N resistance exceeds {:.2} N grip",
                    stall.depth * 1e3,
                    stall.resistance,
                    stall.grip
                ),
                None => println!(
                    "reached {:.1} mm in {} cycles, {:.1} s",
                    s.needle_depth * 1e3,
                    s.cycles,
                    s.time - start.time
                ),
            }
            println!("log written to {}", path.display());
            if vector {
                let report = run_insertion_scenario(&cfg.plant, &cfg.control, &cfg.harness, seed)?;
                println!(
                    "insertion vector error {:.3} deg (displacement {:.3} deg, axis {:.3} deg)",
                    report.error_deg(),
                    report.displacement_angle_deg,
                    report.max_axis_angle_deg
                );
            }
            if run.stall.is_some() {
                std::process::exit(2);
            }
        }
        Cmd::Serve { port } => {
            let mut cfg = cfg;
            if let Some(p) = port {
                cfg.service.port = p;
            }
            tracing_subscriber::fmt().init();
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crane_service::serve(cfg))?;
        }
        Cmd::Config => print!("{}", CraneConfig::default().to_toml()),
    }
    Ok(())
}
