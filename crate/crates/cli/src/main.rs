use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use flowfield::io::{
    load_flow, read_image, read_rgb_image, save_flow, write_data_image, write_image, write_mask,
};
use flowfield::ops::{self, fit_matrix, get_padding, track};
use flowfield::synthetic::{analytic_f23, lens_workflow, LensScene};
use flowfield::verify::{self, format_table};
use flowfield::viz::{render_arrows, render_colorwheel};
use flowfield::{combine, ComposeMode, FlowField, Padding, Point, Reference, Transform};

const TRANSFORM_HELP: &str = "Transform list: semicolon-separated items, applied last to first \
(the list is a matrix product). Items: `translation:tx,ty`, `rotation:cx,cy,degrees`, \
`scaling:cx,cy,factor`. Grammar version 1.";

#[derive(Parser)]
#[command(
    name = "flowfield",
    version,
    about = "Create, warp, combine and inspect dense optical flow fields",
    after_help = "Flows are .flo files; the reference frame is read from a `.ref` file next to \
each flow (`s` or `t`) unless --in-ref is given, and defaults to source. \
Set FLOWFIELD_DETERMINISTIC=1 for bit-reproducible sequential kernels.\n\
Exit status: 0 success, 1 usage error, 2 data error."
)]
struct Cli {
    /// Reference of every input flow, overriding `.ref` files.
    #[arg(long, global = true, value_name = "s|t")]
    in_ref: Option<Reference>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a flow from a list of transforms
    #[command(after_help = TRANSFORM_HELP)]
    Make {
        #[arg(long, value_parser = parse_transforms)]
        transforms: TransformList,
        /// Field size as HEIGHTxWIDTH.
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long = "ref", value_name = "s|t")]
        reference: Reference,
        /// Evaluate on a grid enlarged by T,B,L,R pixels.
        #[arg(long)]
        padding: Option<Padding>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Warp an image with a flow
    Apply {
        #[arg(short, long)]
        flow: PathBuf,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Where to save the validity mask of the warped image.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Invert a flow, keeping its reference
    Invert(InOut),
    /// Move a flow to the other reference frame
    SwitchRef(InOut),
    /// Resize a flow, scaling its vectors
    Resize {
        #[command(flatten)]
        io: InOut,
        /// Scale factors as SY,SX.
        #[arg(long, value_parser = parse_pair)]
        scale: (f64, f64),
    },
    /// Add invalid border cells
    Pad {
        #[command(flatten)]
        io: InOut,
        /// T,B,L,R
        #[arg(long)]
        padding: Padding,
    },
    /// Remove border cells
    Unpad {
        #[command(flatten)]
        io: InOut,
        /// T,B,L,R
        #[arg(long)]
        padding: Padding,
    },
    /// Compute the unknown flow of f12 (+) f23 = f13
    #[command(after_help = "Inputs by mode: 1: -a f23 -b f13; 2: -a f12 -b f13; 3: -a f12 -b f23.")]
    Combine {
        #[arg(short = 'a', long)]
        first: PathBuf,
        #[arg(short = 'b', long)]
        second: PathBuf,
        /// Which flow is unknown: 1 = f12, 2 = f23, 3 = f13.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        mode: u8,
        /// Reference of the result; defaults to that of the first input.
        #[arg(long, value_name = "s|t")]
        out_ref: Option<Reference>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Save the valid source or target area as a mask image
    Valid {
        #[arg(short, long)]
        flow: PathBuf,
        #[arg(long, value_enum)]
        which: Area,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the padding (T B L R) that avoids invalid areas
    Padding {
        #[arg(short, long)]
        flow: PathBuf,
    },
    /// Move points with a flow
    Track {
        #[arg(short, long)]
        flow: PathBuf,
        /// CSV file with one `x,y` point per line.
        #[arg(long)]
        points: PathBuf,
        /// Output CSV (`x,y,valid`); standard output if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Render a flow as a colour wheel or arrow image
    Viz {
        #[arg(short, long)]
        flow: PathBuf,
        #[arg(long, value_enum, default_value_t = Style::Wheel)]
        style: Style,
        /// Arrow lattice spacing in pixels.
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        stride: u32,
        /// Magnitude shown at full saturation; defaults to the largest vector.
        #[arg(long)]
        max_mag: Option<f64>,
        /// Image to draw arrows on.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit an affine matrix to a flow
    FitMatrix {
        #[arg(short, long)]
        flow: PathBuf,
    },
    /// Check composition accuracy on random affine motions
    VerifyCompose {
        /// Mode to check; all three if omitted.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        mode: Option<u8>,
        #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
        trials: u32,
        /// Field size as HEIGHTxWIDTH.
        #[arg(long, default_value = "150x250", value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 50.0)]
        max_mag: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build the lens-and-translation ground truth and its f23
    DemoSynthetic {
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct InOut {
    #[arg(short, long)]
    flow: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Area {
    Source,
    Target,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Wheel,
    Arrows,
}

#[derive(Clone)]
struct TransformList(Vec<Transform>);

fn parse_transforms(s: &str) -> Result<TransformList, String> {
    let list = Transform::parse_list(s).map_err(|e| e.to_string())?;
    if list.is_empty() {
        return Err("empty transform list".into());
    }
    Ok(TransformList(list))
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HEIGHTxWIDTH, got `{s}`"))?;
    let dim = |v: &str| match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("bad dimension `{v}` in `{s}`")),
    };
    Ok((dim(h)?, dim(w)?))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated numbers, got `{s}`"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number `{v}` in `{s}`"))
    };
    Ok((num(a)?, num(b)?))
}

fn load(path: &Path, in_ref: Option<Reference>) -> anyhow::Result<FlowField> {
    Ok(load_flow(path, in_ref)?)
}

fn save(path: &Path, f: &FlowField) -> anyhow::Result<()> {
    Ok(save_flow(path, f)?)
}

fn read_points(path: &Path) -> anyhow::Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("{}", path.display()))?;
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}", path.display()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed = (rec.len() >= 2)
            .then(|| Some((rec[0].parse::<f64>().ok()?, rec[1].parse::<f64>().ok()?)))
            .flatten();
        match parsed {
            Some((x, y)) => points.push(Point::new(x, y)),
            // A non-numeric first line is a header.
            None if i == 0 => {}
            None => bail!("{}: line {} is not `x,y`", path.display(), i + 1),
        }
    }
    Ok(points)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let in_ref = cli.in_ref;
    match cli.command {
        Command::Make {
            transforms,
            size,
            reference,
            padding,
            output,
        } => save(&output, &FlowField::from_transforms(&transforms.0, size, reference, padding)?),
        Command::Apply {
            flow,
            input,
            output,
            mask_out,
        } => {
            let f = load(&flow, in_ref)?;
            let data = read_image(&input)?;
            let warped = ops::apply(&f, data.view(), None)?;
            write_data_image(&output, warped.data.view(), Some(warped.mask.view()))?;
            if let Some(m) = mask_out {
                write_mask(&m, &warped.mask)?;
            }
            Ok(())
        }
        Command::Invert(io) => save(&io.output, &ops::invert(&load(&io.flow, in_ref)?)),
        Command::SwitchRef(io) => save(&io.output, &ops::switch_reference(&load(&io.flow, in_ref)?)),
        Command::Resize { io, scale } => save(&io.output, &load(&io.flow, in_ref)?.resize(scale)?),
        Command::Pad { io, padding } => save(&io.output, &load(&io.flow, in_ref)?.pad(padding)),
        Command::Unpad { io, padding } => save(&io.output, &load(&io.flow, in_ref)?.unpad(padding)?),
        Command::Combine {
            first,
            second,
            mode,
            out_ref,
            output,
        } => {
            let a = load(&first, in_ref)?;
            let b = load(&second, in_ref)?;
            save(&output, &combine(&a, &b, ComposeMode::from_index(mode)?, out_ref)?)
        }
        Command::Valid { flow, which, output } => {
            let f = load(&flow, in_ref)?;
            let mask = match which {
                Area::Source => ops::valid_source(&f),
                Area::Target => ops::valid_target(&f),
            };
            Ok(write_mask(&output, &mask)?)
        }
        Command::Padding { flow } => {
            let p = get_padding(&load(&flow, in_ref)?);
            println!("{} {} {} {}", p.top, p.bottom, p.left, p.right);
            Ok(())
        }
        Command::Track { flow, points, output } => {
            let f = load(&flow, in_ref)?;
            let tracked = track(&f, &read_points(&points)?)?;
            let sink: Box<dyn Write> = match &output {
                Some(p) => Box::new(fs::File::create(p).with_context(|| format!("{}", p.display()))?),
                None => Box::new(io::stdout().lock()),
            };
            let mut wtr = csv::Writer::from_writer(sink);
            wtr.write_record(["x", "y", "valid"])?;
            for (p, ok) in tracked.points.iter().zip(&tracked.valid) {
                wtr.write_record([p.x.to_string(), p.y.to_string(), u8::from(*ok).to_string()])?;
            }
            wtr.flush()?;
            Ok(())
        }
        Command::Viz {
            flow,
            style,
            stride,
            max_mag,
            background,
            output,
        } => {
            let f = load(&flow, in_ref)?;
            let img = match style {
                Style::Wheel => render_colorwheel(&f, max_mag)?,
                Style::Arrows => {
                    let bg = match background {
                        Some(p) => Some(read_rgb_image(&p)?),
                        None => None,
                    };
                    render_arrows(&f, bg.as_ref(), stride as usize)?
                }
            };
            Ok(write_image(&output, &img)?)
        }
        Command::FitMatrix { flow } => {
            let fit = fit_matrix(&load(&flow, in_ref)?)?;
            print!("{}", fit.transform);
            println!("rms_residual={:.6e}", fit.rms_residual);
            Ok(())
        }
        Command::VerifyCompose {
            mode,
            trials,
            size,
            max_mag,
            seed,
        } => {
            let modes = match mode {
                Some(m) => vec![ComposeMode::from_index(m)?],
                None => ComposeMode::ALL.to_vec(),
            };
            let mut rows = Vec::new();
            for m in modes {
                rows.push((m, verify::run_trials(m, trials as usize, size, max_mag, seed)?));
            }
            print!("{}", format_table(&rows));
            for (m, r) in &rows {
                println!(
                    "mode={m} trials={trials} size={}x{} max_mag={max_mag} seed={seed} {}",
                    size.0,
                    size.1,
                    r.to_record()
                );
            }
            Ok(())
        }
        Command::DemoSynthetic { output } => demo_synthetic(&output),
    }
}

fn demo_synthetic(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
    let scene = LensScene::default();
    let flows = lens_workflow(&scene)?;
    for (name, f) in [("f12", &flows.f12), ("f13", &flows.f13), ("f23", &flows.f23)] {
        save(&dir.join(format!("{name}.flo")), f)?;
        write_image(dir.join(format!("{name}.ppm")), &render_colorwheel(f, None)?)?;
    }
    write_mask(dir.join("f23_mask.pgm"), &flows.f23.mask().to_owned())?;
    let report = verify::compare(&flows.f23, &analytic_f23(&scene)?)?;
    let valid = flows.f23.mask().iter().filter(|&&m| m).count();
    println!("pad1={} pad2={}", flows.pad1, flows.pad2);
    println!(
        "f23 valid={valid}/{} mean_abs_err={:.6} max_abs_err={:.6}",
        flows.f23.height() * flows.f23.width(),
        report.mean_abs_err,
        report.max_abs_err
    );
    Ok(())
}

/// Joins the causes of `e`, skipping any already quoted by the message above it.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !prev.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        prev = msg;
    }
    out
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            ExitCode::from(2)
        }
    }
}
