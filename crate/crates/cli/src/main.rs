use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radrobust::imageio::{write_nifti, write_nifti_mask};
use radrobust::workflow::{emit_report, OutputFormat, Pose, Scenario, Study, StudyConfig, StudyReport};
use radrobust::Error;

const CONFIG_HELP: &str = "\
CONFIG FILE (JSON; every field optional, omitted fields take the demo defaults)
  seed                      base seed; every acquisition and shuffle derives its own stream from it
  phantom                   digital phantom
    compartment_semi_axes_mm  fluid ellipsoid semi-axes [x, y, z]
    inserts[]                 four agar cylinders along z
      center_mm, radius_mm, height_mm
      sphere_bands[]          {min_mm, max_mm, weight}: sphere diameters drawn uniformly per band
      packing_seed            seed of the sphere packing
      fill_fraction           target packed volume fraction (0 = homogeneous insert)
    materials                 {fluid, agar, sphere}, each {t1_ms, t2_ms, pd}
  extraction                feature extraction
    mode                      \"2d\" (in-plane texture, 944 features) or \"3d\" (1316 features)
    normalize                 z-score the whole image first
    normalize_scale           scale after z-scoring (default 100)
    voxel_array_shift         shift after scaling (default 300)
    bin_width                 fixed bin width, or \"auto\"
    bin_count_bounds          [lo, hi] admissible bin counts
    log_sigma_mm              Laplacian-of-Gaussian sigma
    wavelet_levels            Haar decomposition levels (only 1 is supported)
    filters                   subset of log, wavelet, square, squareroot, logarithm, exponential
    classes                   subset of shape, firstorder, glcm, glrlm, glszm, ngtdm, gldm
  scanners[]                {name, gain, noise_sigma, bias_field_amplitude}
  setups[]                  a scanner running a sequence
    name, scanner             setup name; scanner name from scanners[]
    sequence                  {te_ms, tr_ms, slice_thickness_mm, slice_spacing_mm,
                               pixel_spacing_mm [x, y], fov_mm [x, y], mode \"2d\" | \"3d\"}
    repeatability             acquire fixed and repositioned retests (default true)
  base_pose                 phantom pose {euler_deg, translation} or {rotation, translation}
  reposition                motion applied between test and repositioned retest
  reproducibility_pairs     [[setup, setup], ...] compared by CCC
  te_grid                   null, or {setup, te_ms [..], tr_ms, tr_pair_ms [a, b], tr_pair_te_ms}
  screens                   {shape_spearman (0.8), shuffle_icc (0.9)}
  ccc_level                 confidence level of CCC intervals (0.95)
  inputs[]                  {name, image, mask}: NIfTI files used by extract and the
                            screens instead of simulated acquisitions

EXIT STATUS
  0 success, 1 invalid arguments, configuration or input data, 2 runtime failure";

#[derive(Parser)]
#[command(name = "radrobust", version, about = "Radiomic feature robustness workbench")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Study configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, env = "RADROBUST_THREADS")]
    threads: Option<usize>,
    /// Which report files to write.
    #[arg(long, default_value = "all", value_parser = ["csv", "json", "svg", "all"])]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated images and ROI masks as NIfTI.
    #[command(after_help = CONFIG_HELP)]
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Only this setup (default: every setup).
        #[arg(long)]
        setup: Option<String>,
        /// Also write the repositioned retest.
        #[arg(long)]
        repositioned: bool,
    },
    /// Feature table per input (or per simulated setup).
    #[command(after_help = CONFIG_HELP)]
    Extract {
        #[command(flatten)]
        common: Common,
    },
    /// Test-retest ICC, fixed and repositioned.
    #[command(after_help = CONFIG_HELP)]
    Repeatability {
        #[command(flatten)]
        common: Common,
    },
    /// CCC between the configured setup pairs.
    #[command(after_help = CONFIG_HELP)]
    Reproducibility {
        #[command(flatten)]
        common: Common,
    },
    /// CCC over all TE pairs and the TR pair.
    #[command(name = "te-grid", after_help = CONFIG_HELP)]
    TeGrid {
        #[command(flatten)]
        common: Common,
    },
    /// Non-shape features correlated with shape.
    #[command(name = "shape-screen", after_help = CONFIG_HELP)]
    ShapeScreen {
        #[command(flatten)]
        common: Common,
    },
    /// Non-shape features unchanged by shuffling voxel intensities.
    #[command(name = "shuffle-screen", after_help = CONFIG_HELP)]
    ShuffleScreen {
        #[command(flatten)]
        common: Common,
    },
    /// Every experiment, both screens and the robust set.
    #[command(after_help = CONFIG_HELP)]
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
    /// Re-render CSV and SVG files from a report.json.
    #[command(after_help = CONFIG_HELP)]
    Report {
        /// report.json written by an earlier run.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "all", value_parser = ["csv", "json", "svg", "all"])]
        format: String,
    },
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_validation() { 1 } else { 2 }, message: e.to_string() }
    }
}

fn invalid(message: String) -> Failure {
    Failure { code: 1, message }
}

fn load_config(common: &Common) -> Result<StudyConfig, Failure> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| invalid(format!("cannot read config {}: {e}", common.config.display())))?;
    let mut config: StudyConfig = serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn set_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure { code: 2, message: e.to_string() })?;
    }
    Ok(())
}

fn emit(report: &StudyReport, out: &Path, format: &str) -> Result<(), Failure> {
    let format: OutputFormat = format.parse()?;
    for path in emit_report(report, out, format)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn write_tables(report: &StudyReport, out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure { code: 2, message: format!("{}: {e}", out.display()) })?;
    for (name, table) in &report.tables {
        for w in &table.warnings {
            log::warn!("{name}: {w}");
        }
        let path = out.join(format!("features_{name}.csv"));
        std::fs::write(&path, table.to_csv()).map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn run_scenarios(common: &Common, scenarios: &[Scenario]) -> Result<(), Failure> {
    let config = load_config(common)?;
    set_threads(common.threads)?;
    let report = Study::new(config)?.run(scenarios)?;
    emit(&report, &common.out, &common.format)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { common, setup, repositioned } => {
            let config = load_config(&common)?;
            set_threads(common.threads)?;
            let study = Study::new(config)?;
            let names: Vec<String> = match setup {
                Some(s) => vec![study.config().setup(&s)?.name.clone()],
                None => study.config().setups.iter().map(|s| s.name.clone()).collect(),
            };
            std::fs::create_dir_all(&common.out).map_err(|e| Failure { code: 2, message: format!("{}: {e}", common.out.display()) })?;
            for name in names {
                let mut specs = vec![study.acquisition(&name, "fixed1", Pose::Base)?];
                if repositioned {
                    specs.push(study.acquisition(&name, "repositioned", Pose::Repositioned)?);
                }
                for spec in specs {
                    let (image, mask) = study.simulate(&spec)?;
                    let label = spec.label();
                    write_nifti(&image, common.out.join(format!("{label}.nii")))?;
                    write_nifti_mask(&mask, common.out.join(format!("{label}_mask.nii")))?;
                    log::info!("wrote {label}");
                }
            }
            Ok(())
        }
        Command::Extract { common } => {
            let config = load_config(&common)?;
            set_threads(common.threads)?;
            let study = Study::new(config)?;
            let report = StudyReport { tables: study.feature_tables()?, ..Default::default() };
            write_tables(&report, &common.out)
        }
        Command::Repeatability { common } => run_scenarios(&common, &[Scenario::RepeatabilityFixed, Scenario::RepeatabilityRepositioned]),
        Command::Reproducibility { common } => run_scenarios(&common, &[Scenario::ReproducibilityPair]),
        Command::TeGrid { common } => run_scenarios(&common, &[Scenario::TeGrid, Scenario::TrPair]),
        Command::ShapeScreen { common } => run_scenarios(&common, &[Scenario::ShapeScreen]),
        Command::ShuffleScreen { common } => run_scenarios(&common, &[Scenario::ShuffleScreen]),
        Command::Pipeline { common } => run_scenarios(&common, &[Scenario::FullPipeline]),
        Command::Report { input, out, format } => {
            let text = std::fs::read_to_string(&input).map_err(|e| invalid(format!("cannot read {}: {e}", input.display())))?;
            let report: StudyReport = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", input.display())))?;
            emit(&report, &out, &format)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).target(env_logger::Target::Stderr).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
