//! The `spmap` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::decode::{default_discontinuity_tol, grid_triangulate, unproject_map};
use crate::encode::{coverage, encode_with_stats, layer_histogram, EncodeConfig};
use crate::error::{Error, Result};
use crate::harness::config::{fixture_items, manifest_items, CorpusItem, CorpusManifest, Resolution, SweepConfig};
use crate::harness::pipeline::{decode_map, default_cache_dir, run_cell, Cell, EncodingCache, PreparedMesh, Representation};
use crate::harness::report::{rows_csv, to_json, write_sweep};
use crate::harness::sweep::{run_sweep, SweepOutcome};
use crate::mesh::{normalize_mesh, TriangleMesh};
use crate::mesh_io::{load_mesh, save_mesh, save_point_cloud};
use crate::nested::stacks_from_bytes;
use crate::quality::{combined_quality, QualityScores, QualityWeights};
use crate::sphere::{SpMap, SphericalGrid};
use crate::spm::{self, read_spm, write_spm, SpHeader, HEADER_LEN, MAGIC, NESTED_MAGIC};

#[derive(Debug, Parser)]
#[command(name = "spmap", version, about = "Multi-layer spherical depth maps for triangle meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a mesh into an SPM file.
    Encode(EncodeArgs),
    /// Reconstruct a mesh or point cloud from an SPM file.
    Decode(DecodeArgs),
    /// Encode, decode and score one mesh; prints one CSV row.
    Roundtrip(RoundtripArgs),
    /// Run the resolution and layer sweep over a corpus.
    Sweep(SweepArgs),
    /// Edge and spectral quality of one map against another.
    Quality(QualityArgs),
    /// Surface coverage for every layer count up to --layers.
    Coverage(CoverageArgs),
    /// Describe an SPM, nested-stack or mesh file.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to every available core.
    #[arg(long, env = "SPMAP_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    pub mesh: PathBuf,
    #[arg(long, default_value = "256x512")]
    pub res: Resolution,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    /// Also store per-hit face normals.
    #[arg(long)]
    pub normals: bool,
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeMode {
    /// Occupancy and marching cubes when nothing was truncated, else grid.
    Auto,
    Occupancy,
    Grid,
    Points,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    pub map: PathBuf,
    #[arg(long, value_enum, default_value_t = DecodeMode::Auto)]
    pub mode: DecodeMode,
    /// Voxels per axis for occupancy decoding.
    #[arg(long)]
    pub voxels: Option<usize>,
    /// Output `.obj` or `.ply`.
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    pub mesh: PathBuf,
    #[arg(long, default_value = "256x512")]
    pub res: Resolution,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value = "sp")]
    pub repr: Representation,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub voxels: Option<usize>,
    /// Treat the mesh as open even if it is closed.
    #[arg(long)]
    pub open: bool,
    /// CSV destination; standard output when absent.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Corpus manifest (TOML); the built-in fixture corpus when absent.
    pub manifest: Option<PathBuf>,
    /// Comma-separated resolutions, e.g. 32x64,64x128.
    #[arg(long, value_delimiter = ',')]
    pub res: Option<Vec<Resolution>>,
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub repr: Option<Vec<Representation>>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub voxels: Option<usize>,
    #[arg(short, long, default_value = "sweep-out")]
    pub out: PathBuf,
    /// Skip the encoding cache.
    #[arg(long)]
    pub no_cache: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    pub candidate: PathBuf,
    pub reference: PathBuf,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    pub mesh: PathBuf,
    #[arg(long, default_value = "256x512")]
    pub res: Resolution,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Distance below which a surface sample counts as covered.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    pub file: PathBuf,
}

/// Exit status for an error: 2 for bad input or usage, 1 when the input
/// was fine but evaluation could not complete.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::FileNotFound(_)
        | Error::Parse { .. }
        | Error::UnsupportedFormat(_)
        | Error::InvalidMesh(_)
        | Error::EmptyMesh
        | Error::Io(_)
        | Error::BadMagic(_)
        | Error::HeaderMismatch(_)
        | Error::InvalidGrid(_)
        | Error::InvalidMap(_)
        | Error::OutOfRange { .. }
        | Error::PadTooLarge { .. }
        | Error::Config(_) => 2,
        _ => 1,
    }
}

fn load_config(common: &Common) -> Result<SweepConfig> {
    let mut cfg = match &common.config {
        Some(p) => SweepConfig::load(p)?,
        None => SweepConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn workers(common: &Common) -> usize {
    common
        .workers
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn in_pool<T: Send>(n: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?
        .install(f)
}

fn load_normalized(path: &Path) -> Result<TriangleMesh> {
    normalize_mesh(&load_mesh(path)?.mesh)
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_encode(args: &EncodeArgs, stdout: &mut dyn Write) -> Result<SpMap> {
    let mesh = load_normalized(&args.mesh)?;
    let mut cfg = EncodeConfig::new(SphericalGrid::new(args.res.height, args.res.width)?, args.layers);
    cfg.store_normals = args.normals;
    let start = Instant::now();
    let (map, stats) = in_pool(workers(&args.common), || encode_with_stats(&mesh, &cfg))?;
    let elapsed = start.elapsed();
    write_spm(&map, &args.out)?;
    let hist: Vec<String> = layer_histogram(&map)
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(k, n)| format!("{k}: {n}"))
        .collect();
    writeln!(stdout, "wrote {} ({} bytes)", args.out.display(), spm::to_bytes(&map).len())?;
    writeln!(stdout, "layer histogram {{{}}}", hist.join(", "))?;
    writeln!(stdout, "truncation count {}", map.meta.truncation_count)?;
    writeln!(stdout, "retried rays {}", stats.retried_rays)?;
    writeln!(stdout, "encode time {:.3} s", elapsed.as_secs_f64())?;
    Ok(map)
}

pub fn cmd_decode(args: &DecodeArgs, stdout: &mut dyn Write) -> Result<()> {
    let map = read_spm(&args.map)?;
    let cfg = load_config(&args.common)?;
    let voxels = args.voxels.unwrap_or_else(|| cfg.metrics.voxels_for(map.grid().height()));
    let supersample = cfg.metrics.supersample;
    if args.mode == DecodeMode::Points {
        let cloud = unproject_map(&map)?;
        save_point_cloud(&cloud.points, &cloud.normals, &args.out)?;
        writeln!(stdout, "wrote {} points to {}", cloud.len(), args.out.display())?;
        return Ok(());
    }
    if args.mode == DecodeMode::Occupancy && map.meta.truncation_count > 0 {
        return Err(Error::TruncatedMap(map.meta.truncation_count));
    }
    let mesh = in_pool(workers(&args.common), || match args.mode {
        DecodeMode::Grid => grid_triangulate(&map, default_discontinuity_tol(&map)),
        _ => Ok(decode_map(&map, true, voxels, supersample)?.0),
    })?;
    save_mesh(&mesh, &args.out)?;
    writeln!(
        stdout,
        "wrote {} vertices, {} faces to {}",
        mesh.vertices.len(),
        mesh.faces.len(),
        args.out.display()
    )?;
    Ok(())
}

/// One CSV row (with header) for a single mesh and cell.
pub fn cmd_roundtrip(args: &RoundtripArgs) -> Result<String> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.samples {
        cfg.metrics.samples = s;
    }
    if args.voxels.is_some() {
        cfg.metrics.voxels = args.voxels;
    }
    cfg.validate()?;
    let mesh = load_normalized(&args.mesh)?;
    let watertight = !args.open && mesh.topology().is_closed_manifold();
    let cell = Cell {
        repr: args.repr,
        height: args.res.height,
        layers: args.layers,
    };
    if cell.layers == 0 {
        return Err(Error::Config("layers must be positive".into()));
    }
    let opts = cfg.metric_options();
    let id = args
        .mesh
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh".into());
    let row = in_pool(workers(&args.common), || {
        let src = PreparedMesh::new(&id, mesh, watertight, &opts)?;
        run_cell(&src, &cell, &opts, None)
    })?;
    rows_csv(&[row])
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepOutcome> {
    let mut cfg = load_config(&args.common)?;
    if let Some(r) = &args.res {
        cfg.resolutions = r.clone();
    }
    if let Some(l) = &args.layers {
        cfg.layers = l.clone();
    }
    if let Some(r) = &args.repr {
        cfg.representations = r.clone();
    }
    if let Some(s) = args.samples {
        cfg.metrics.samples = s;
    }
    if args.voxels.is_some() {
        cfg.metrics.voxels = args.voxels;
    }
    cfg.validate()?;
    let corpus: Vec<CorpusItem> = match &args.manifest {
        Some(p) => manifest_items(&CorpusManifest::load(p)?),
        None => fixture_items(),
    };
    let cache = if args.no_cache {
        None
    } else {
        Some(EncodingCache::new(default_cache_dir(&args.out))?)
    };
    let outcome = run_sweep(&corpus, &cfg, cache.as_ref(), workers(&args.common))?;
    write_sweep(&outcome, &args.out)?;
    Ok(outcome)
}

#[derive(Debug, Serialize)]
pub struct QualityReport {
    pub candidate: String,
    pub reference: String,
    pub weights: QualityWeights,
    pub scores: QualityScores,
}

pub fn cmd_quality(args: &QualityArgs) -> Result<String> {
    let cfg = load_config(&args.common)?;
    let cand = read_spm(&args.candidate)?;
    let reference = read_spm(&args.reference)?;
    let weights = cfg.metrics.quality;
    let scores = in_pool(workers(&args.common), || combined_quality(&cand, &reference, &weights))?;
    to_json(&QualityReport {
        candidate: args.candidate.display().to_string(),
        reference: args.reference.display().to_string(),
        weights,
        scores,
    })
}

#[derive(Debug, Serialize)]
pub struct CoverageRow {
    pub k: usize,
    pub coverage: f64,
    pub truncation_count: u32,
}

/// Coverage of one mesh at every `k` from 1 to `--layers`, as CSV.
pub fn cmd_coverage(args: &CoverageArgs) -> Result<String> {
    let cfg = load_config(&args.common)?;
    let samples = args.samples.unwrap_or(cfg.metrics.coverage_samples);
    let tol = args.tol.unwrap_or(cfg.metrics.coverage_tol);
    if args.layers == 0 || samples == 0 || !(tol > 0.0) {
        return Err(Error::Config("layers, samples and tol must be positive".into()));
    }
    let mesh = load_normalized(&args.mesh)?;
    let grid = SphericalGrid::new(args.res.height, args.res.width)?;
    let rows = in_pool(workers(&args.common), || {
        (1..=args.layers)
            .map(|k| {
                let (map, _) = encode_with_stats(&mesh, &EncodeConfig::new(grid, k))?;
                Ok(CoverageRow {
                    k,
                    coverage: coverage(&mesh, &map, samples, tol, cfg.seed)?,
                    truncation_count: map.meta.truncation_count,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut text = String::from("k,coverage,truncation_count\n");
    for r in rows {
        text.push_str(&format!("{},{},{}\n", r.k, r.coverage, r.truncation_count));
    }
    Ok(text)
}

pub fn cmd_info(args: &InfoArgs, stdout: &mut dyn Write) -> Result<()> {
    let path = &args.file;
    if !path.exists() {
        return Err(Error::FileNotFound(path.clone()));
    }
    let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
    if matches!(ext.as_deref(), Some("obj" | "ply")) {
        let loaded = load_mesh(path)?;
        let m = &loaded.mesh;
        let t = m.topology();
        let b = m.aabb();
        writeln!(stdout, "mesh {}", path.display())?;
        writeln!(stdout, "vertices {} faces {}", m.vertices.len(), m.faces.len())?;
        writeln!(stdout, "dropped degenerate faces {}", loaded.dropped_faces)?;
        writeln!(stdout, "closed manifold {}", t.is_closed_manifold())?;
        writeln!(stdout, "boundary loops {}", t.boundary_loops())?;
        writeln!(stdout, "euler characteristic {}", t.euler_characteristic())?;
        writeln!(stdout, "bounds {:?} .. {:?}", b.min.as_slice(), b.max.as_slice())?;
        return Ok(());
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::HeaderMismatch(format!("{} bytes is shorter than a header", bytes.len())));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic == MAGIC {
        let map = spm::from_bytes(&bytes)?;
        let g = map.grid();
        writeln!(stdout, "spm {}", path.display())?;
        writeln!(stdout, "grid {}x{} layers {}", g.height(), g.width(), map.layers())?;
        writeln!(stdout, "normals {}", map.has_normals())?;
        writeln!(stdout, "encoder version {}", map.meta.encoder_version)?;
        writeln!(stdout, "source hash {:016x}", map.meta.source_hash)?;
        writeln!(stdout, "truncation count {}", map.meta.truncation_count)?;
        writeln!(stdout, "valid depths {}", map.valid_count())?;
        writeln!(stdout, "layer histogram {:?}", layer_histogram(&map))?;
    } else if magic == NESTED_MAGIC {
        let stacks = stacks_from_bytes(&bytes)?;
        let header = SpHeader::parse(&bytes, NESTED_MAGIC)?;
        writeln!(stdout, "nested stacks {}", path.display())?;
        writeln!(stdout, "stacks {} of {}x{} layers {}", stacks.len(), header.height, header.width, header.layers)?;
        for s in &stacks {
            let hits: usize = s.valid.iter().filter(|&&v| v).count();
            writeln!(stdout, "  {} hits {} truncated {}", s.axis, hits, s.truncation_count)?;
        }
    } else {
        return Err(Error::BadMagic(magic));
    }
    Ok(())
}

/// Runs a parsed command, writing human-readable output to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Encode(a) => cmd_encode(a, stdout).map(|_| ()),
        Command::Decode(a) => cmd_decode(a, stdout),
        Command::Roundtrip(a) => emit(&cmd_roundtrip(a)?, a.out.as_deref(), stdout),
        Command::Sweep(a) => {
            let outcome = cmd_sweep(a)?;
            writeln!(
                stdout,
                "{} rows, {} failures, reports in {}",
                outcome.rows.len(),
                outcome.failures.len(),
                a.out.display()
            )?;
            match outcome.failures.len() {
                0 => Ok(()),
                n => Err(Error::FailedCells(n)),
            }
        }
        Command::Quality(a) => emit(&cmd_quality(a)?, a.out.as_deref(), stdout),
        Command::Coverage(a) => emit(&cmd_coverage(a)?, a.out.as_deref(), stdout),
        Command::Info(a) => cmd_info(a, stdout),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::FileNotFound("x".into())), 2);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::NonWatertight { fraction: 0.5 }), 1);
        assert_eq!(exit_code(&Error::TruncatedMap(3)), 1);
        assert_eq!(exit_code(&Error::FailedCells(2)), 1);
    }

    #[test]
    fn parses_every_subcommand() {
        for line in [
            "spmap encode m.obj --res 32x64 --layers 2 -o m.spm",
            "spmap decode m.spm --mode grid -o m.obj",
            "spmap roundtrip m.obj --repr nested --samples 10 --voxels 16 --seed 3",
            "spmap sweep manifest.toml --res 32x64,64x128 --layers 1,2 --repr sp --workers 4",
            "spmap quality a.spm b.spm --config q.toml",
            "spmap coverage m.obj --layers 3 --tol 0.02",
            "spmap info m.spm",
        ] {
            Cli::try_parse_from(line.split_whitespace()).unwrap_or_else(|e| panic!("{line}: {e}"));
        }
    }

    #[test]
    fn bad_resolution_is_a_usage_error() {
        let e = Cli::try_parse_from("spmap encode m.obj --res 32x32 -o x.spm".split_whitespace()).unwrap_err();
        assert!(e.use_stderr());
    }
}
