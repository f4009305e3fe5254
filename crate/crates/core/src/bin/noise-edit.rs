use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use noise_edit::container::{self, Container};
use noise_edit::eiam::{embed_prompt, serve_mock, EiamBackend, HttpBackend, Instruction, MockBackend};
use noise_edit::maskops::{self, FarField};
use noise_edit::pipeline::{self, EditConfig, EditRequest, WindowSetting};
use noise_edit::{preview, AnalyticGaussian, Error, Result};

#[derive(Parser)]
#[command(
    name = "noise-edit",
    version,
    about = "Latent video editing with region-adaptive noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Invert a clean latent and write every intermediate step.
    Invert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out_trajectory: PathBuf,
        /// Config naming the world manifest and schedule.
        #[arg(long)]
        config: PathBuf,
        /// Source prompt used as the inversion condition.
        #[arg(long, default_value = "")]
        prompt: String,
    },
    /// Run the full edit.
    Edit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, conflicts_with = "instruction", required_unless_present = "instruction")]
        mask: Option<PathBuf>,
        #[arg(long)]
        instruction: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Guidance steps `lo:hi`, overriding alpha and beta.
        #[arg(long)]
        window: Option<String>,
        /// Prompts for the manual (--mask) path.
        #[arg(long, default_value = "")]
        source_prompt: String,
        #[arg(long, default_value = "")]
        target_prompt: String,
        /// Clip id sent to the analysis services; defaults to the input file stem.
        #[arg(long)]
        video_ref: Option<String>,
        /// Answer analysis requests from a local fixtures directory instead of HTTP.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Euclidean distance to the mask, per frame.
    Dist {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blend coefficients for transition width `m`.
    Coeff {
        #[arg(long)]
        mask: PathBuf,
        #[arg(short = 'm', long = "width", default_value_t = 16.0)]
        width: f64,
        #[arg(long)]
        out: PathBuf,
        /// Weight beyond the band: zero or one.
        #[arg(long, default_value = "zero")]
        far_field: String,
    },
    /// Serve the mock analysis services.
    ServeMock {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value_t = 8077)]
        port: u16,
    },
    /// Print a container header and value statistics.
    Inspect {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write PGM previews.
    Preview {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

fn invert(input: &Path, steps: usize, out: &Path, config: &Path, prompt: &str) -> Result<()> {
    let cfg = EditConfig::load(config)?;
    let z0 = container::read_latent(input)?;
    let world = cfg.load_world()?;
    let sampler = cfg.build_sampler()?;
    let denoiser = AnalyticGaussian::new(world, sampler.schedule.clone());
    let cond = embed_prompt(prompt, cfg.condition_length)?;
    let trajectory = sampler.invert(&z0, steps, &denoiser, &cond)?;
    trajectory.write_dir(out)?;
    println!("wrote {} steps to {}", steps + 1, out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn edit(
    input: &Path,
    mask: Option<&Path>,
    instruction: Option<&str>,
    config: Option<&Path>,
    out: &Path,
    report: &Path,
    window: Option<&str>,
    source_prompt: String,
    target_prompt: String,
    video_ref: Option<String>,
    fixtures: Option<&Path>,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => EditConfig::load(p)?,
        None => EditConfig::default(),
    };
    if let Some(w) = window {
        cfg.window = w.parse()?;
        if matches!(cfg.window, WindowSetting::Fractions) {
            return Err(Error::Config("--window takes lo:hi or off".into()));
        }
        cfg.validate()?;
    }
    let source = container::read_latent(input)?;
    let backend: Box<dyn EiamBackend>;
    let request = match (mask, instruction) {
        (Some(m), _) => EditRequest::Manual {
            source_prompt,
            target_prompt,
            mask: container::read_mask(m)?,
        },
        (None, Some(text)) => {
            backend = match fixtures {
                Some(dir) => Box::new(MockBackend::from_dir(dir)?),
                None => Box::new(HttpBackend::from_env()?),
            };
            let video_ref = video_ref.unwrap_or_else(|| {
                input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            EditRequest::Instruction {
                backend: backend.as_ref(),
                video_ref,
                instruction: Instruction::new(text)?,
            }
        }
        (None, None) => return Err(Error::Config("either --mask or --instruction is required".into())),
    };
    let outcome = pipeline::run_edit_with_world(&source, request, &cfg)?;
    container::write_latent(out, &outcome.edited)?;
    std::fs::write(report, outcome.report.to_json() + "\n").map_err(|e| Error::io(report, e))?;
    println!("source prompt: {}", outcome.prompts.source);
    println!("target prompt: {}", outcome.prompts.target);
    println!("unedited mse:  {:.6e}", outcome.report.unedited_mse);
    if let Some(shift) = outcome.report.edited_mean_shift {
        println!("mean shift:    {shift:.4}");
    }
    Ok(())
}

fn inspect(input: &Path) -> Result<()> {
    let bytes = std::fs::read(input).map_err(|e| Error::io(input, e))?;
    let header = container::parse_header(&bytes)?;
    println!("kind:     {:?}", header.kind);
    println!("shape:    {}", header.shape);
    match container::decode(&bytes)? {
        Container::Latent(v) => {
            let (min, max) = v.min_max();
            println!("min:      {min}");
            println!("max:      {max}");
            println!("mean:     {}", v.mean());
            println!("l2 norm:  {}", v.norm());
        }
        Container::Mask(m) => {
            println!("set:      {} of {}", m.count(), m.shape().len());
            for f in 0..m.shape().frames {
                let n = m.frame(f).iter().filter(|&&b| b == 1).count();
                println!("frame {f:>3}: {n}");
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Invert {
            input,
            steps,
            out_trajectory,
            config,
            prompt,
        } => invert(&input, steps, &out_trajectory, &config, &prompt),
        Command::Edit {
            input,
            mask,
            instruction,
            config,
            out,
            report,
            window,
            source_prompt,
            target_prompt,
            video_ref,
            fixtures,
        } => edit(
            &input,
            mask.as_deref(),
            instruction.as_deref(),
            config.as_deref(),
            &out,
            &report,
            window.as_deref(),
            source_prompt,
            target_prompt,
            video_ref,
            fixtures.as_deref(),
        ),
        Command::Dist { mask, out } => {
            let dist = maskops::distance_transform(&container::read_mask(&mask)?);
            container::write_plane(&out, dist.field())
        }
        Command::Coeff {
            mask,
            width,
            out,
            far_field,
        } => {
            let far = match far_field.as_str() {
                "zero" => FarField::Zero,
                "one" => FarField::One,
                other => return Err(Error::Config(format!("unknown far field `{other}` (zero | one)"))),
            };
            let dist = maskops::distance_transform(&container::read_mask(&mask)?);
            let coeffs =
                maskops::coefficient_field_with(&dist, width, far).map_err(|e| Error::Config(e.to_string()))?;
            container::write_plane(&out, coeffs.field())
        }
        Command::ServeMock { fixtures, port } => {
            let server = serve_mock(&fixtures, port)?;
            println!("mock services listening on {}", server.base_url());
            server.wait()
        }
        Command::Inspect { input } => inspect(&input),
        Command::Preview { input, out_prefix } => {
            let paths = preview::emit_preview(&container::read_latent(&input)?, &out_prefix)?;
            println!("wrote {} images", paths.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let text = s.to_string();
                if !msg.contains(&text) {
                    msg.push_str(": ");
                    msg.push_str(&text);
                }
                src = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
