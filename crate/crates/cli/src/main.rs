use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pendepth::seeding::Strategy;
use pendepth::shapes;
use pendepth_cli::{generate_random_scenario, run, RunOptions, Scenario};

#[derive(Parser)]
#[command(
    name = "pendepth",
    version,
    about = "Translational penetration depth benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute PD for every frame of a scenario file.
    Run {
        scenario: PathBuf,
        /// Write per-frame rows here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Zero the time columns so the CSV is reproducible byte for byte.
        #[arg(long)]
        no_timing: bool,
        /// Do not read or write the clearance-field sidecar.
        #[arg(long)]
        no_field_cache: bool,
        #[command(flatten)]
        tune: Tunables,
    },
    /// Write a scenario of random penetrating frames of a mesh against itself.
    GenRandom {
        mesh: PathBuf,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario output path; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        tune: Tunables,
    },
    /// Write a built-in test mesh as OBJ.
    Shape {
        /// cube, sphere, torus, knot, blob or blob40k
        name: String,
        output: PathBuf,
    },
}

#[derive(Args)]
struct Tunables {
    /// Compare against the sampled oracle with this many directions.
    #[arg(
        long,
        num_args = 0..=1,
        default_missing_value = "1024",
        value_name = "DIRECTIONS",
        value_parser = clap::value_parser!(u64).range(1..)
    )]
    oracle: Option<u64>,
    /// Seeding: auto, centroid, clearance, coherence or random.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Clearance grid points per axis.
    #[arg(long, value_parser = clap::value_parser!(u64).range(4..))]
    grid: Option<u64>,
    /// Most contact features kept per contact configuration.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    feature_cap: Option<u64>,
    /// Contact tolerance as a fraction of the larger bounding radius.
    #[arg(long)]
    epsilon_scale: Option<f64>,
    /// Extra walks seeded from this many spread-out directions.
    #[arg(long)]
    restarts: Option<usize>,
}

impl Tunables {
    fn apply(&self, sc: &mut Scenario) {
        if let Some(n) = self.oracle {
            sc.oracle = Some(n as usize);
        }
        if let Some(s) = self.strategy {
            sc.strategy = s;
        }
        if let Some(g) = self.grid {
            sc.grid = g as usize;
        }
        if let Some(k) = self.feature_cap {
            sc.feature_cap = k as usize;
        }
        if let Some(e) = self.epsilon_scale {
            sc.epsilon_scale = e;
        }
        if let Some(r) = self.restarts {
            sc.restarts = r;
        }
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).ok_or_else(|| format!("unknown strategy `{s}`"))
}

fn builtin(name: &str) -> Option<pendepth::mesh::TriangleMesh> {
    Some(match name {
        "cube" => shapes::unit_cube(),
        "sphere" => shapes::uv_sphere(1.0, 24, 12),
        "torus" => shapes::torus(1.0, 0.3, 24, 12),
        "knot" => shapes::torus_knot(2, 3, 1.0, 0.12, 96, 8),
        "blob" => shapes::blob(1.0, 32, 17),
        "blob40k" => shapes::blob(1.0, 200, 101),
        _ => return None,
    })
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            scenario,
            csv,
            no_timing,
            no_field_cache,
            tune,
        } => {
            let mut sc = Scenario::load(&scenario)?;
            tune.apply(&mut sc);
            let opts = RunOptions {
                timing: !no_timing,
                field_cache: !no_field_cache,
            };
            let report = run(&sc, &opts)?;
            let summary = report.summary();
            match csv {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(&path)?);
                    report.write_csv(&mut w)?;
                    w.flush()?;
                    print!("{summary}");
                }
                None => {
                    report.write_csv(io::stdout().lock())?;
                    eprint!("{summary}");
                }
            }
        }
        Command::GenRandom {
            mesh,
            frames,
            seed,
            output,
            tune,
        } => {
            let mut sc = generate_random_scenario(&mesh, frames, seed)?;
            tune.apply(&mut sc);
            match output {
                Some(path) => {
                    // mesh paths in the file are relative to the file itself
                    if let (Ok(m), Some(dir)) = (mesh.canonicalize(), path.parent()) {
                        let dir = if dir.as_os_str().is_empty() {
                            PathBuf::from(".")
                        } else {
                            dir.to_path_buf()
                        };
                        if let Ok(dir) = dir.canonicalize() {
                            let rel = relative_to(&m, &dir);
                            sc.mesh_a = rel.clone();
                            sc.mesh_b = rel;
                        }
                    }
                    sc.save(&path)?;
                }
                None => print!("{}", sc.to_text()),
            }
        }
        Command::Shape { name, output } => {
            let mesh = builtin(&name).ok_or_else(|| format!("unknown shape `{name}`"))?;
            mesh.write_obj(&output)?;
        }
    }
    Ok(())
}

fn relative_to(path: &std::path::Path, dir: &std::path::Path) -> PathBuf {
    let p: Vec<_> = path.components().collect();
    let d: Vec<_> = dir.components().collect();
    let common = p.iter().zip(&d).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..d.len() {
        out.push("..");
    }
    for c in &p[common..] {
        out.push(c);
    }
    out
}
