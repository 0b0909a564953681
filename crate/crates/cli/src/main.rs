use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use skintone_core::color::{ita_of, lab_to_srgb, srgb_to_lab, ItaClass, LabColor, PolarTone, RgbColor};
use skintone_core::measurement::{average_bilateral, expected_min_error, ingest_measurements_path, Site};
use skintone_core::pipeline::report::digest;
use skintone_core::pipeline::simulate::{realistic_corpus, RatingMode, SimulationConfig};
use skintone_core::pipeline::stimuli::read_stimuli;
use skintone_core::pipeline::{
    emit_reports, run_study1, run_study2, simulate_study, ReportBundle, ReportFormat, Study1Config, Study1Inputs,
    Study2Config, Study2Inputs,
};
use skintone_core::scale::{generate_cst_scale, load_scale_dir, scale_to_string, CstConfig};
use skintone_survey::{SurveyConfig, SurveyService};

#[derive(Parser)]
#[command(name = "skintone", version, about = "Colorimetric skin-tone scales and rating-study analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a color between sRGB and CIELAB and classify it by ITA.
    Convert(ConvertArgs),
    /// Fit hue and chroma over L* and sample a colorimetric scale.
    BuildScale(BuildScaleArgs),
    /// Mean left/right ΔE per site of a measurement file.
    MinError(MinErrorArgs),
    /// Self-rating study: stepwise models, accuracy, utilization, preference.
    AnalyzeStudy1(Study1Args),
    /// Image-rating study: mixed models, per-device ICC, accuracy.
    AnalyzeStudy2(Study2Args),
    /// Write a synthetic dataset from planted models.
    Simulate(SimulateArgs),
    /// Run the survey HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ConvertArgs {
    /// sRGB as R,G,B.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["hex", "lab"])]
    rgb: Option<Vec<u8>>,
    /// sRGB as #rrggbb.
    #[arg(long, conflicts_with = "lab")]
    hex: Option<String>,
    /// CIELAB as L,a,b.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lab: Option<Vec<f64>>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BuildScaleArgs {
    /// Measurement CSV whose bilateral averages form the corpus.
    #[arg(long, conflicts_with = "synthetic")]
    measurements: Option<PathBuf>,
    #[arg(long, default_value = "hand")]
    site: Site,
    /// Use a synthetic corpus of this many tones instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 20.0)]
    l_min: f64,
    #[arg(long, default_value_t = 70.0)]
    l_max: f64,
    #[arg(long, default_value = "cst")]
    id: String,
    #[arg(long)]
    name: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MinErrorArgs {
    #[arg(long)]
    measurements: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of scale definition files.
    #[arg(long)]
    scales: PathBuf,
    /// JSON config file; defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "both")]
    format: ReportFormat,
}

#[derive(Args)]
struct Study1Args {
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long)]
    demographics: PathBuf,
    #[arg(long)]
    ratings: PathBuf,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct Study2Args {
    #[arg(long)]
    stimuli: PathBuf,
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long)]
    demographics: PathBuf,
    #[arg(long)]
    ratings: PathBuf,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = ["1", "2"])]
    study: Option<String>,
    /// Full simulation config (JSON); overrides the study presets.
    #[arg(long, conflicts_with = "study")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Rate by nearest swatch plus noise of this SD instead of the planted models.
    #[arg(long)]
    oracle_noise: Option<f64>,
    #[arg(long)]
    scales: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Print the effective config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    scales: PathBuf,
    /// Append-only rating store; created when absent.
    #[arg(long)]
    store: PathBuf,
    /// Study-2 stimuli CSV.
    #[arg(long)]
    stimuli: Option<PathBuf>,
    /// Root for stimulus image files; defaults to the stimuli file's directory.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(T::default()),
    }
}

#[derive(Serialize)]
struct Conversion {
    hex: String,
    rgb: RgbColor,
    lab: LabColor,
    polar: PolarTone,
    ita: Option<ItaClass>,
    out_of_gamut: bool,
}

fn three<T: Copy>(v: &[T], flag: &str) -> Result<[T; 3]> {
    v.try_into().map_err(|_| anyhow::anyhow!("--{flag} takes three comma-separated values"))
}

fn convert(args: ConvertArgs) -> Result<()> {
    let (lab, rendered) = match (args.rgb, args.hex, args.lab) {
        (Some(c), _, _) => {
            let [r, g, b] = three(&c, "rgb")?;
            let rgb = RgbColor::new(r, g, b);
            (srgb_to_lab(rgb), lab_to_srgb(srgb_to_lab(rgb)))
        }
        (_, Some(hex), _) => {
            let rgb: RgbColor = hex.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
            (srgb_to_lab(rgb), lab_to_srgb(srgb_to_lab(rgb)))
        }
        (_, _, Some(v)) => {
            let [l, a, b] = three(&v, "lab")?;
            let lab = LabColor::new(l, a, b).validate()?;
            (lab, lab_to_srgb(lab))
        }
        _ => bail!("give one of --rgb, --hex or --lab"),
    };
    let c = Conversion {
        hex: rendered.rgb.to_hex(),
        rgb: rendered.rgb,
        lab,
        polar: PolarTone::from_lab(lab),
        ita: ita_of(lab).ok(),
        out_of_gamut: rendered.out_of_gamut,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&c)?);
        return Ok(());
    }
    println!(
        "sRGB    {} ({}, {}, {}){}",
        c.hex,
        c.rgb.r,
        c.rgb.g,
        c.rgb.b,
        if c.out_of_gamut { " clamped" } else { "" }
    );
    println!("CIELAB  L*={:.4} a*={:.4} b*={:.4}", lab.l, lab.a, lab.b);
    println!("polar   hue={:.4}° chroma={:.4}", c.polar.hue_deg, c.polar.chroma);
    match c.ita {
        Some(ita) => println!("ITA     {:.2}° {}", ita.ita_deg, ita.category),
        None => println!("ITA     undefined"),
    }
    Ok(())
}

fn build_scale(args: BuildScaleArgs) -> Result<()> {
    let corpus: Vec<PolarTone> = match (&args.measurements, args.synthetic) {
        (Some(path), _) => {
            let records = ingest_measurements_path(path)?;
            average_bilateral(&records).tones.iter().filter_map(|t| t.site_polar(args.site)).collect()
        }
        (None, Some(n)) => realistic_corpus(n, args.seed),
        (None, None) => bail!("give --measurements or --synthetic"),
    };
    let config = CstConfig { k: args.k, l_min: args.l_min, l_max: args.l_max };
    let mut generated = generate_cst_scale(&corpus, config)?;
    generated.scale.scale_id = args.id;
    if let Some(name) = args.name {
        generated.scale.name = name;
    }
    let [h0, h1, h2] = generated.hue_fit.coefficients();
    let [c0, c1, c2] = generated.chroma_fit.coefficients();
    eprintln!(
        "{} tones; hue = {h0:.4} + {h1:.4}·L* + {h2:.6}·L*²; chroma = {c0:.4} + {c1:.4}·L* + {c2:.6}·L*²",
        corpus.len()
    );
    let text = scale_to_string(&generated.scale);
    match args.out {
        Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn min_error(args: MinErrorArgs) -> Result<()> {
    let records = ingest_measurements_path(&args.measurements)?;
    for site in [Site::Hand, Site::Face] {
        match expected_min_error(&records, site) {
            Ok(s) => println!(
                "{site}: ΔE_min = {:.4} over {} pairs ({} incomplete)",
                s.delta_e_min,
                s.n_pairs(),
                s.excluded.len()
            ),
            Err(e) => println!("{site}: {e}"),
        }
    }
    Ok(())
}

fn finish(bundle: &ReportBundle, report: &ReportArgs) -> Result<()> {
    let files = emit_reports(bundle, &report.out, report.format)?;
    print!("{}", digest(bundle));
    println!("wrote {} files to {}", files.len(), report.out.display());
    Ok(())
}

fn analyze_study1(args: Study1Args) -> Result<()> {
    let config: Study1Config = read_config(args.report.config.as_deref())?;
    let scales = load_scale_dir(&args.report.scales)?;
    let inputs = Study1Inputs::load(&args.measurements, &args.demographics, &args.ratings, scales)?;
    finish(&run_study1(&inputs, &config)?, &args.report)
}

fn analyze_study2(args: Study2Args) -> Result<()> {
    let config: Study2Config = read_config(args.report.config.as_deref())?;
    let scales = load_scale_dir(&args.report.scales)?;
    let inputs = Study2Inputs::load(&args.stimuli, &args.measurements, &args.demographics, &args.ratings, scales)?;
    finish(&run_study2(&inputs, &config)?, &args.report)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config = match (&args.config, args.study.as_deref()) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some("2")) => SimulationConfig::study2(args.n, args.seed),
        (None, _) => SimulationConfig::study1(args.n, args.seed),
    };
    if let Some(sd) = args.oracle_noise {
        config.mode = RatingMode::Oracle { noise_sd: sd };
    }
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    let scales = load_scale_dir(&args.scales)?;
    let files = simulate_study(&config, &scales, &args.out)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut config: SurveyConfig = read_config(args.config.as_deref())?;
    let scales = load_scale_dir(&args.scales)?;
    let stimuli = match &args.stimuli {
        Some(path) => read_stimuli(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?)?,
        None => Vec::new(),
    };
    if let Some(dir) = args.images {
        config.image_dir = Some(dir);
    } else if config.image_dir.is_none() {
        config.image_dir = args.stimuli.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf);
    }
    let service = Arc::new(SurveyService::open(scales, stimuli, &config, &args.store)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        skintone_survey::serve(listener, service).await?;
        Ok(())
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Convert(a) => convert(a),
        Command::BuildScale(a) => build_scale(a),
        Command::MinError(a) => min_error(a),
        Command::AnalyzeStudy1(a) => analyze_study1(a),
        Command::AnalyzeStudy2(a) => analyze_study2(a),
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve(a),
    }
}
