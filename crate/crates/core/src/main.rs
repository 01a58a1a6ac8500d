use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nf_noma::analog::{
    gain_map_union, mlb_beamformer, slb_beamformer, AnalogBeamformer, AntennaSplit, GainMapGrid,
};
use nf_noma::geometry::{ArrayGeometry, UserLocation};
use nf_noma::io::{read_config, write_curves, write_trials, RunConfig};
use nf_noma::par::Execution;
use nf_noma::scenario::montecarlo::{run_trials, summarize};

/// Near-field NOMA hybrid beamforming simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write curves.csv and trials.csv.
    Run(RunArgs),
    /// Check a config file without running anything.
    Validate {
        /// JSON config, or `-` for stdin.
        #[arg(long)]
        config: PathBuf,
    },
    /// Rasterize the array gain of focused beams.
    Gainmap(GainmapArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config, or `-` for stdin. Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    threads: Option<usize>,
    /// Validate and print the plan only.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Beam {
    Slb,
    Mlb,
}

#[derive(Args)]
struct GainmapArgs {
    #[arg(long, value_enum, default_value = "slb")]
    beam: Beam,
    #[arg(long, default_value_t = 1024)]
    antennas: usize,
    #[arg(long, default_value_t = 30e9)]
    carrier_hz: f64,
    /// `radius_m,angle_deg`. SLB: one beam per focus. MLB: consecutive
    /// pairs of foci (H then L) form one beam each.
    #[arg(long = "focus", value_parser = parse_pair, required = true, allow_hyphen_values = true)]
    foci: Vec<(f64, f64)>,
    /// Antennas on the H sub-array of every MLB beam; defaults to half.
    #[arg(long)]
    num_h: Option<usize>,
    #[arg(long, value_parser = parse_pair, default_value = "5,100", allow_hyphen_values = true)]
    radius_m: (f64, f64),
    #[arg(long, value_parser = parse_pair, default_value = "-60,60", allow_hyphen_values = true)]
    angle_deg: (f64, f64),
    /// `radii,angles` grid points.
    #[arg(long, value_parser = parse_size_pair, default_value = "200,241")]
    resolution: (usize, usize),
    #[arg(long)]
    threads: Option<usize>,
    /// CSV file to write.
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn parse_size_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn execution(threads: Option<usize>) -> Result<Execution> {
    match threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the thread pool")?;
            #[cfg(not(feature = "parallel"))]
            log::warn!("built without the `parallel` feature; ignoring --threads {n}");
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn load(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(read_config(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut config = load(args.config.as_ref())?;
    if let Some(seed) = args.seed {
        config.scenario.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    config.validate()?;
    let exec = execution(args.threads)?;
    if args.dry_run {
        println!(
            "config ok: {} trials x {} sweep points x {} schemes, {} curve rows into {}",
            config.trials,
            config.sweep.values.len(),
            config.schemes.len(),
            config.row_count(),
            config.output_dir.display()
        );
        return Ok(());
    }
    let exp = config.experiment();
    log::info!("running {} trials (seed {})", exp.trials, exp.scenario.seed);
    let results = run_trials(&exp, exec)?;
    let rows = summarize(&exp, &results);
    std::fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let curves = config.output_dir.join("curves.csv");
    write_curves(&rows, BufWriter::new(File::create(&curves)?))
        .with_context(|| format!("writing {}", curves.display()))?;
    let trials = config.output_dir.join("trials.csv");
    write_trials(
        &exp.sweep.values,
        &exp.schemes,
        &results,
        BufWriter::new(File::create(&trials)?),
    )
    .with_context(|| format!("writing {}", trials.display()))?;
    for r in &rows {
        if r.n_feasible < r.n_total {
            log::info!(
                "{} at {} = {}: {}/{} trials feasible",
                r.scheme,
                r.sweep_var.name(),
                r.value,
                r.n_feasible,
                r.n_total
            );
        }
    }
    println!("wrote {} and {}", curves.display(), trials.display());
    Ok(())
}

fn cmd_gainmap(args: GainmapArgs) -> Result<()> {
    let geometry = ArrayGeometry::from_carrier(args.antennas, args.carrier_hz)?;
    let foci = args
        .foci
        .iter()
        .map(|&(r, a)| UserLocation::from_degrees(r, a))
        .collect::<nf_noma::Result<Vec<_>>>()?;
    let beams: Vec<AnalogBeamformer> = match args.beam {
        Beam::Slb => foci.iter().map(|f| slb_beamformer(&geometry, f)).collect(),
        Beam::Mlb => {
            if foci.len() % 2 != 0 {
                bail!("MLB beams need foci in H,L pairs; got {}", foci.len());
            }
            let n = args.antennas;
            let num_h = args.num_h.unwrap_or(n / 2);
            let split = AntennaSplit::new(num_h, n.saturating_sub(num_h), 1)?;
            foci.chunks(2)
                .map(|p| mlb_beamformer(&geometry, split, &p[0], &p[1]))
                .collect::<nf_noma::Result<_>>()?
        }
    };
    let grid = GainMapGrid {
        radius_min: args.radius_m.0,
        radius_max: args.radius_m.1,
        angle_min: args.angle_deg.0.to_radians(),
        angle_max: args.angle_deg.1.to_radians(),
        num_radii: args.resolution.0,
        num_angles: args.resolution.1,
    };
    let map = gain_map_union(&beams, &geometry, &grid, execution(args.threads)?)?;
    map.write_csv(BufWriter::new(File::create(&args.out)?))
        .with_context(|| format!("writing {}", args.out.display()))?;
    let (ri, ai, peak) = map.peak();
    println!(
        "wrote {}; peak {peak:.6} at {:.3} m, {:.3}°",
        args.out.display(),
        map.radii[ri],
        map.angles[ai].to_degrees()
    );
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NF_NOMA_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate { config } => read_config(&config)
            .map(|c| println!("config ok: {} curve rows", c.row_count()))
            .map_err(Into::into),
        Command::Gainmap(args) => cmd_gainmap(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
