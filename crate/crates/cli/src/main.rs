//! `intvit`: generate, calibrate, quantize, run and check integer-only ViTs.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use intvit::engine::{
    build_qmodel, load_fp, load_model, save_fp, save_qmodel, Calibration, FpViT, LoadedModel,
};
use intvit::itns::{self, Tensor};
use intvit::oracle::{
    fp_forward_batch, kernel_sweep, model_report, ErrorReport, GeluForm, KernelId, SweepSpec,
};
use intvit::rng::{gen_gaussian, Rng};
use intvit::{Error, FpTensor, QTensor, Result};

use config::{KernelFlags, ModelFlags, RunConfig};

#[derive(Parser)]
#[command(
    name = "intvit",
    version,
    about = "Integer-only vision transformer toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for every random draw made by the command.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file with `seed`, `model` and `kernel` sections; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeluArg {
    Erf,
    Sigmoid,
}

impl From<GeluArg> for GeluForm {
    fn from(g: GeluArg) -> Self {
        match g {
            GeluArg::Erf => GeluForm::Erf,
            GeluArg::Sigmoid => GeluForm::Sigmoid,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Int,
    Fp,
}

/// Where calibration or evaluation images come from.
#[derive(Args, Clone)]
struct InputSource {
    /// ITNS tensor of real images, `(C, H, W)` or `(B, C, H, W)`.
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Number of Gaussian images to draw when no input file is given.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a randomly initialized floating-point model.
    GenModel {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a batch of Gaussian images as an ITNS tensor.
    GenInputs {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Take image dimensions from this model instead of the flags.
        #[arg(long)]
        model_dir: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        std: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect min-max activation ranges from the floating-point model.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        source: InputSource,
        #[arg(long, value_enum, default_value = "erf")]
        gelu: GeluArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the integer model from a floating-point model and calibration.
    Quantize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model_flags: ModelFlags,
        #[command(flatten)]
        kernel: KernelFlags,
        #[arg(long)]
        model: PathBuf,
        /// Calibration file from `calibrate`.
        #[arg(long)]
        calib: Option<PathBuf>,
        #[command(flatten)]
        source: InputSource,
        #[arg(long, value_enum, default_value = "erf")]
        gelu: GeluArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a model on images and write the logits.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "int")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "erf")]
        gelu: GeluArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Floating-point inference, same as `infer --mode fp`.
    InferFp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "erf")]
        gelu: GeluArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare integer and floating-point models and check the pinned thresholds.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Floating-point model.
        #[arg(long)]
        fp_model: PathBuf,
        /// Quantized model.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        source: InputSource,
        #[arg(long, value_enum, default_value = "erf")]
        gelu: GeluArg,
        /// Images whose intermediate activations are compared site by site.
        #[arg(long, default_value_t = 16)]
        trace_samples: usize,
        #[arg(long)]
        report: PathBuf,
    },
    /// Sweep one kernel against its real-valued reference.
    KernelTest {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        kernel_flags: KernelFlags,
        /// shiftmax, shift_gelu, i_layernorm, int_div, isqrt or requantize.
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Output width of the kernel under test.
        #[arg(long)]
        k_out: Option<u8>,
        /// Row length for row-wise kernels.
        #[arg(long)]
        row_len: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Pass,
    ToleranceFailure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::ToleranceFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Real images as `(B, C, H, W)`, from a file or drawn with `seed`.
fn load_images(source: &InputSource, image_dims: &[usize], seed: u64) -> Result<FpTensor> {
    match (&source.inputs, source.count) {
        (Some(path), None) => {
            let t = itns::read_tensor(path)?.into_fp()?;
            as_batch(t, image_dims)
        }
        (None, Some(count)) => {
            let mut dims = vec![count];
            dims.extend_from_slice(image_dims);
            gen_gaussian(&mut Rng::new(seed), &dims, 0.0, 1.0)
        }
        (Some(_), Some(_)) => Err(Error::Argument(
            "give either --inputs or --count, not both".into(),
        )),
        (None, None) => Err(Error::Argument(
            "images required: pass --inputs FILE or --count N".into(),
        )),
    }
}

fn as_batch(t: FpTensor, image_dims: &[usize]) -> Result<FpTensor> {
    if t.dims() == image_dims {
        let mut dims = vec![1];
        dims.extend_from_slice(image_dims);
        t.reshape(dims)
    } else if t.dims().len() == 4 && t.dims()[1..] == *image_dims {
        Ok(t)
    } else {
        Err(Error::Shape(format!(
            "images {:?} do not match model input {image_dims:?}",
            t.dims()
        )))
    }
}

fn write_report(path: &Path, report: &ErrorReport) -> Result<()> {
    fs::write(path, report.to_json()?)?;
    Ok(())
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::GenModel { common, model, out } => {
            let rc = RunConfig::resolve("gen-model", &common, &model, None)?.path("out", &out);
            let fp = FpViT::random(&rc.model, rc.seed)?;
            save_fp(&out, &fp)?;
            println!(
                "wrote {} parameters to {}",
                fp.named_tensors().values().map(|t| t.len()).sum::<usize>(),
                out.display()
            );
            Ok(Outcome::Pass)
        }
        Command::GenInputs {
            common,
            model,
            model_dir,
            count,
            std,
            out,
        } => {
            let mut rc = RunConfig::resolve("gen-inputs", &common, &model, None)?.path("out", &out);
            if let Some(dir) = &model_dir {
                rc.model = match load_model(dir)? {
                    LoadedModel::Fp(m) => m.config,
                    LoadedModel::Quantized(m) => m.config,
                };
            }
            if !(std > 0.0 && std.is_finite()) {
                return Err(Error::Argument(format!(
                    "--std must be positive, got {std}"
                )));
            }
            let mut dims = vec![count];
            dims.extend(rc.model.image_dims());
            let t = gen_gaussian(&mut Rng::new(rc.seed), &dims, 0.0, std)?;
            itns::write_tensor(&out, &Tensor::Fp(t))?;
            Ok(Outcome::Pass)
        }
        Command::Calibrate {
            common,
            model,
            source,
            gelu,
            out,
        } => {
            let fp = load_fp(&model)?;
            let rc = RunConfig::resolve("calibrate", &common, &ModelFlags::default(), None)?;
            let imgs = load_images(&source, &fp.config.image_dims(), rc.seed)?;
            let calib = Calibration::collect(&fp, &imgs, gelu.into())?;
            fs::write(&out, calib.to_json()?)?;
            println!(
                "calibrated {} sites on {} images",
                calib.clip.len(),
                calib.samples
            );
            Ok(Outcome::Pass)
        }
        Command::Quantize {
            common,
            model_flags,
            kernel,
            model,
            calib,
            source,
            gelu,
            out,
        } => {
            let fp = load_fp(&model)?;
            let rc = RunConfig::resolve_for_model(
                "quantize",
                &common,
                &model_flags,
                Some(&kernel),
                &fp.config,
            )?;
            let fp = FpViT {
                config: rc.model.clone(),
                ..fp
            };
            let calib = match (&calib, source.inputs.is_some() || source.count.is_some()) {
                (Some(path), false) => Calibration::from_json(&fs::read_to_string(path)?)?,
                (None, true) => Calibration::collect(
                    &fp,
                    &load_images(&source, &fp.config.image_dims(), rc.seed)?,
                    gelu.into(),
                )?,
                (Some(_), true) => {
                    return Err(Error::Argument(
                        "give either --calib or calibration images".into(),
                    ))
                }
                (None, false) => {
                    return Err(Error::Build(
                        "missing calibration: pass --calib, --inputs or --count".into(),
                    ))
                }
            };
            let q = build_qmodel(&fp, &calib, &rc.kernel)?;
            save_qmodel(&out, &q)?;
            println!("{:<18}  {:>14}  {:>10}", "site", "scale", "1/scale");
            for site in intvit::engine::activation_sites(&q.config) {
                let s = q.scales[&site];
                println!("{site:<18}  {s:>14.6e}  {:>10.2}", 1.0 / s);
            }
            println!("logits scale {:.6e}", q.logit_scale());
            Ok(Outcome::Pass)
        }
        Command::Infer {
            common,
            model,
            input,
            mode,
            gelu,
            out,
        } => infer(common, &model, &input, mode, gelu, &out),
        Command::InferFp {
            common,
            model,
            input,
            gelu,
            out,
        } => infer(common, &model, &input, Mode::Fp, gelu, &out),
        Command::Compare {
            common,
            fp_model,
            model,
            source,
            gelu,
            trace_samples,
            report,
        } => {
            let fp = load_fp(&fp_model)?;
            let q = match load_model(&model)? {
                LoadedModel::Quantized(q) => q,
                LoadedModel::Fp(_) => {
                    return Err(Error::Argument("--model must be a quantized model".into()))
                }
            };
            let rc = RunConfig::resolve_for_model(
                "compare",
                &common,
                &ModelFlags::default(),
                None,
                &q.config,
            )?
            .with_kernel(q.settings)
            .path("fp_model", &fp_model)
            .path("model", &model)
            .path("report", &report)
            .option("trace_samples", trace_samples)
            .option("gelu", GeluForm::from(gelu))
            .option("inputs", source.inputs.as_deref().map(path_str))
            .option("count", source.count);
            let imgs = load_images(&source, &q.config.image_dims(), rc.seed)?;
            let r = model_report(
                &fp,
                &q,
                &imgs,
                gelu.into(),
                trace_samples,
                rc.seed,
                rc.to_value()?,
            )?;
            write_report(&report, &r)?;
            print!("{}", r.render_table());
            Ok(if r.pass {
                Outcome::Pass
            } else {
                Outcome::ToleranceFailure
            })
        }
        Command::KernelTest {
            common,
            kernel_flags,
            kernel,
            trials,
            k_out,
            row_len,
            report,
        } => {
            let kernel: KernelId = kernel.parse()?;
            let rc = RunConfig::resolve(
                "kernel-test",
                &common,
                &ModelFlags::default(),
                Some(&kernel_flags),
            )?;
            let mut spec = SweepSpec::default_for(kernel);
            if let Some(k) = k_out {
                spec.k_out = k;
            }
            if let Some(n) = row_len {
                spec.row_len = n;
            }
            let mut r = kernel_sweep(kernel, &spec, trials, rc.seed, &rc.kernel.intmath)?;
            let mut rc = rc
                .option("kernel", kernel.name())
                .option("trials", trials)
                .option("spec", &spec);
            if let Some(p) = &report {
                rc = rc.path("report", p);
            }
            r.config = rc.to_value()?;
            if let Some(p) = &report {
                write_report(p, &r)?;
            }
            print!("{}", r.render_table());
            Ok(if r.pass {
                Outcome::Pass
            } else {
                Outcome::ToleranceFailure
            })
        }
    }
}

fn infer(
    common: Common,
    model: &Path,
    input: &Path,
    mode: Mode,
    gelu: GeluArg,
    out: &Path,
) -> Result<Outcome> {
    // seed is accepted for uniformity; inference draws nothing at random
    RunConfig::resolve("infer", &common, &ModelFlags::default(), None)?;
    let input = itns::read_tensor(input)?;
    match (load_model(model)?, mode) {
        (LoadedModel::Quantized(q), Mode::Int) => {
            let image_dims = q.config.image_dims();
            let batch = match input {
                Tensor::Fp(t) => q.quantize_input(&as_batch(t, &image_dims)?)?,
                Tensor::Q(t) => {
                    let dims = if t.dims() == image_dims.as_slice() {
                        [vec![1], image_dims.clone()].concat()
                    } else {
                        t.dims().to_vec()
                    };
                    let (scale, bits) = (t.scale(), t.bits());
                    QTensor::new(dims, t.into_data(), scale, bits)?
                }
            };
            let logits = q.forward_batch(&batch, true)?;
            itns::write_tensor(out, &Tensor::Q(logits))?;
        }
        (LoadedModel::Fp(fp), Mode::Fp) => {
            let imgs = as_batch(input.into_fp()?, &fp.config.image_dims())?;
            let logits = fp_forward_batch(&fp, &imgs, gelu.into())?;
            itns::write_tensor(out, &Tensor::Fp(logits))?;
        }
        (LoadedModel::Fp(_), Mode::Int) => {
            return Err(Error::Argument(
                "integer inference needs a quantized model; run `quantize` first".into(),
            ))
        }
        (LoadedModel::Quantized(_), Mode::Fp) => {
            return Err(Error::Argument(
                "floating-point inference needs the floating-point model".into(),
            ))
        }
    }
    Ok(Outcome::Pass)
}
