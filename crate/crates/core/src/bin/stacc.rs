use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use stacc::calibration::DecayFamily;
use stacc::fixture::{write_mini_city, MiniCityOptions};
use stacc::pipeline::{self, BetaSetting, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "stacc", version, about = "Space-time job accessibility engine")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check inputs and parameters without computing anything.
    Validate(ConfigArgs),
    /// Interval count tables to hourly tables.
    Temporal(ConfigArgs),
    /// Grid over the zone layer.
    Grid(ConfigArgs),
    /// Zone counts onto grid cells.
    Dasymetric(ConfigArgs),
    /// Residential-to-employment network cost matrices.
    Odmatrix(ConfigArgs),
    /// Friction coefficient from commuter flows.
    Calibrate(ConfigArgs),
    /// Accessibility surfaces for the four scenarios.
    Access(ConfigArgs),
    /// Space-time cube and isosurface.
    Cube(ConfigArgs),
    /// Every stage in order, plus the run report.
    Run(ConfigArgs),
    /// Serve an output directory over HTTP for the viewer.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Write the synthetic mini-city input set.
    Fixture {
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Every field overrides the corresponding config-file value.
#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; relative paths inside resolve against it.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    zones: Option<PathBuf>,
    #[arg(long)]
    zone_id_property: Option<String>,
    #[arg(long)]
    parcels: Option<PathBuf>,
    #[arg(long)]
    parcel_id_property: Option<String>,
    #[arg(long)]
    land_use_property: Option<String>,
    #[arg(long)]
    workers: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    directed: bool,
    #[arg(long)]
    flows: Option<PathBuf>,
    /// Per-hour matrix files, `{hour}` expanding to 00..23.
    #[arg(long)]
    hourly_costs: Option<String>,
    #[arg(long)]
    network_hourly: bool,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    decay: Option<DecayFamily>,
    /// A positive number or "calibrate".
    #[arg(long)]
    beta: Option<BetaSetting>,
    #[arg(long, value_delimiter = ',')]
    hourly_beta: Option<Vec<f64>>,
    #[arg(long)]
    distance_floor: Option<f64>,
    #[arg(long)]
    snap_tolerance: Option<f64>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    iso_percentile: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    slice_hours: Option<Vec<u8>>,
    #[arg(long)]
    export_mesh: bool,
}

impl ConfigArgs {
    fn resolve(self) -> Result<RunConfig, PipelineError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f { c.$f = Some(v); }
            )*};
        }
        set!(zones, parcels, workers, jobs, nodes, edges, flows, hourly_costs, hourly_beta, distance_floor, snap_tolerance);
        macro_rules! replace {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f { c.$f = v; }
            )*};
        }
        replace!(
            zone_id_property,
            parcel_id_property,
            land_use_property,
            cell_size,
            decay,
            beta,
            output_dir,
            iso_percentile,
            slice_hours
        );
        c.directed |= self.directed;
        c.network_hourly |= self.network_hourly;
        c.export_mesh |= self.export_mesh;
        Ok(c)
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable summary")
    );
}

fn stage<T: Serialize>(
    args: ConfigArgs,
    f: impl FnOnce(&RunConfig) -> Result<T, PipelineError>,
) -> Result<(), PipelineError> {
    let cfg = args.resolve()?;
    print_json(&f(&cfg)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Validate(args) => match args.resolve() {
            Ok(cfg) => {
                let report = pipeline::validate(&cfg);
                print_json(&report);
                if report.is_ok() {
                    Ok(())
                } else {
                    Err(PipelineError::Invalid(report))
                }
            }
            Err(e) => Err(e),
        },
        Command::Temporal(args) => stage(args, pipeline::stage_temporal),
        Command::Grid(args) => stage(args, pipeline::stage_grid),
        Command::Dasymetric(args) => stage(args, pipeline::stage_dasymetric),
        Command::Odmatrix(args) => stage(args, pipeline::stage_odmatrix),
        Command::Calibrate(args) => stage(args, pipeline::stage_calibrate),
        Command::Access(args) => stage(args, pipeline::stage_access),
        Command::Cube(args) => stage(args, pipeline::stage_cube),
        Command::Run(args) => match args.resolve() {
            Ok(cfg) => match pipeline::run_pipeline(&cfg) {
                Ok(report) => {
                    print_json(&report);
                    Ok(())
                }
                Err(PipelineError::Invalid(report)) => {
                    print_json(&report);
                    Err(PipelineError::Invalid(report))
                }
                Err(e) => Err(e),
            },
            Err(e) => Err(e),
        },
        Command::Serve { dir, port } => {
            return match pipeline::serve(&dir, port) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
        Command::Fixture { out, seed } => {
            let mut opts = MiniCityOptions::default();
            if let Some(s) = seed {
                opts.seed = s;
            }
            return match write_mini_city(&out, &opts) {
                Ok(config) => {
                    println!("{}", config.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
