//! Command-line front end: every subcommand is a thin adapter over the
//! library — argument parsing, file IO, and printing only.

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use optolayer::datagen::{generate_dataset, generate_split, validate_dataset, SamplerConfig};
use optolayer::evalbench::{bench, eval_families, eval_mse, FamilySpec};
use optolayer::materials::{load_material_db, MaterialDb};
use optolayer::surrogate::load_checkpoint;
use optolayer::tmm::{simulate, AmbientConfig, NamedStructure, Structure, WavelengthGrid};
use optolayer::trainer::{train, TrainConfig};
use optolayer::{analysis, ModelConfig, Vocabulary};

#[derive(Parser)]
#[command(
    name = "optolayer",
    version,
    about = "Multilayer thin-film simulation and a transformer surrogate",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MaterialArgs {
    /// Directory of dispersion CSV files (one material per file).
    #[arg(long, value_name = "DIR")]
    materials: Option<PathBuf>,

    /// Use the built-in synthetic toy materials instead of a directory.
    #[arg(long, conflicts_with = "materials")]
    toy_materials: bool,
}

impl MaterialArgs {
    fn load(&self) -> Result<MaterialDb> {
        if self.toy_materials {
            Ok(MaterialDb::toy())
        } else {
            let dir = self
                .materials
                .as_ref()
                .ok_or_else(|| anyhow!("pass --materials DIR or --toy-materials"))?;
            Ok(load_material_db(dir)?)
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Wavelength grid start:stop:step in nm.
    #[arg(long, value_name = "S:E:D", default_value = "400:1100:10")]
    grid: String,

    /// Refractive index of the (lossless) incidence medium.
    #[arg(long, value_name = "N", default_value_t = 1.0)]
    ambient_in: f64,

    /// Refractive index of the exit medium.
    #[arg(long, value_name = "N", default_value_t = 1.45)]
    ambient_out: f64,
}

impl GridArgs {
    fn grid(&self) -> Result<WavelengthGrid> {
        let parts: Vec<&str> = self.grid.split(':').collect();
        if parts.len() != 3 {
            bail!("--grid expects start:stop:step, got '{}'", self.grid);
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .with_context(|| format!("bad grid component '{s}'"))
        };
        Ok(WavelengthGrid::new(
            parse(parts[0])?,
            parse(parts[1])?,
            parse(parts[2])?,
        )?)
    }

    fn ambient(&self) -> AmbientConfig {
        AmbientConfig::new(self.ambient_in, Complex64::new(self.ambient_out, 0.0))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one structure and write its spectrum as CSV.
    Simulate {
        /// Structure JSON: {"layers":[{"material":"SiO2","thickness_nm":120.0},…]}
        #[arg(long, value_name = "FILE")]
        structure: PathBuf,
        #[command(flatten)]
        materials: MaterialArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },

    /// Generate a labeled dataset (JSONL + manifest sidecar).
    GenData {
        #[command(flatten)]
        materials: MaterialArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        max_layers: usize,
        /// Thickness bin grid lo:hi:step in nm.
        #[arg(long, value_name = "S:E:D", default_value = "10:500:10")]
        bins: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also write a disjoint validation split here.
        #[arg(long, value_name = "FILE", requires = "val_fraction")]
        val_out: Option<PathBuf>,
        /// Fraction of records hashed into the validation split.
        #[arg(long, requires = "val_out")]
        val_fraction: Option<f64>,
        /// Resample exact duplicate structures.
        #[arg(long)]
        dedup: bool,
    },

    /// Train a surrogate on a generated dataset.
    Train {
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        val: PathBuf,
        /// Named architecture preset.
        #[arg(long, value_enum, default_value_t = Preset::Tiny, conflicts_with = "config")]
        preset: Preset,
        /// Full model config as JSON (overrides --preset).
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 3e-4)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1.0)]
        grad_clip_norm: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Validation cadence in steps (0: per epoch).
        #[arg(long, default_value_t = 500)]
        eval_every: usize,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },

    /// Global clamped MSE of a checkpoint over a labeled dataset.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
    },

    /// Per-family MSE over structures with fixed materials, random thicknesses.
    EvalFamilies {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[command(flatten)]
        materials: MaterialArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Family spec JSON (list of {name, materials, thickness_ranges_nm}).
        #[arg(long, value_name = "FILE")]
        families: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON report path.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Wall-clock benchmark: solver vs surrogate, single and batched.
    Bench {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[command(flatten)]
        materials: MaterialArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 100)]
        n_single: usize,
        #[arg(long, default_value_t = 1000)]
        batch_size: usize,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON report path.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Dump the token embedding table with labels as CSV.
    ExportEmbeddings {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },

    /// Dump one attention map for a structure as CSV.
    ExportAttention {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        structure: PathBuf,
        #[arg(long, default_value_t = 0)]
        block: usize,
        #[arg(long, default_value_t = 0)]
        head: usize,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },

    /// Dump the |E(z, λ)| grid of a structure as CSV.
    ExportField {
        #[arg(long, value_name = "FILE")]
        structure: PathBuf,
        #[command(flatten)]
        materials: MaterialArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 5.0)]
        z_step: f64,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },

    /// Re-simulate a sample of a dataset and verify manifest checksums.
    ValidateData {
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        #[command(flatten)]
        materials: MaterialArgs,
        #[arg(long, default_value_t = 0.01)]
        fraction: f64,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Preset {
    Tiny,
    Production,
}

fn parse_bins(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("--bins expects lo:hi:step, got '{spec}'");
    }
    let lo: f64 = parts[0].parse().context("bad bins lo")?;
    let hi: f64 = parts[1].parse().context("bad bins hi")?;
    let step: f64 = parts[2].parse().context("bad bins step")?;
    if !(step > 0.0 && hi >= lo) {
        bail!("--bins needs hi >= lo and step > 0");
    }
    let n = ((hi - lo) / step).round() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

fn read_structure(path: &Path) -> Result<NamedStructure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading structure {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing structure {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            structure,
            materials,
            grid,
            out,
        } => {
            let db = materials.load()?;
            let named = read_structure(&structure)?;
            let s = named.resolve(|name| db.id_of(name))?;
            let spectrum = simulate(&db, &s, &grid.grid()?, &grid.ambient())?;
            let mut text = String::from("wavelength_nm,R,T\n");
            for (j, wl) in spectrum.grid.values().iter().enumerate() {
                text.push_str(&format!("{wl},{},{}\n", spectrum.r[j], spectrum.t[j]));
            }
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} rows to {}", spectrum.grid.count, out.display());
        }

        Command::GenData {
            materials,
            grid,
            count,
            seed,
            max_layers,
            bins,
            out,
            val_out,
            val_fraction,
            dedup,
        } => {
            let db = materials.load()?;
            let vocab = Vocabulary::from_db(&db, parse_bins(&bins)?, max_layers);
            let mut cfg = SamplerConfig::linear(max_layers, seed, count);
            cfg.dedup = dedup;
            let g = grid.grid()?;
            let amb = grid.ambient();
            match (val_out, val_fraction) {
                (Some(val_path), Some(frac)) => {
                    let (mt, mv) =
                        generate_split(&db, &cfg, &vocab, &g, &amb, &out, &val_path, frac)?;
                    println!(
                        "wrote {} train records to {} (sha256 {})",
                        mt.record_count,
                        out.display(),
                        mt.data_sha256
                    );
                    println!(
                        "wrote {} val records to {} (sha256 {})",
                        mv.record_count,
                        val_path.display(),
                        mv.data_sha256
                    );
                }
                _ => {
                    let manifest = generate_dataset(&db, &cfg, &vocab, &g, &amb, &out)?;
                    println!(
                        "wrote {} records to {} (sha256 {})",
                        manifest.record_count,
                        out.display(),
                        manifest.data_sha256
                    );
                }
            }
        }

        Command::Train {
            data,
            val,
            preset,
            config,
            epochs,
            batch_size,
            learning_rate,
            grad_clip_norm,
            seed,
            eval_every,
            out_dir,
        } => {
            let model_cfg: ModelConfig = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => match preset {
                    Preset::Tiny => ModelConfig::tiny(),
                    Preset::Production => ModelConfig::production(),
                },
            };
            let mut train_cfg = TrainConfig::new(&out_dir);
            train_cfg.epochs = epochs;
            train_cfg.batch_size = batch_size;
            train_cfg.learning_rate = learning_rate;
            train_cfg.grad_clip_norm = grad_clip_norm;
            train_cfg.seed = seed;
            train_cfg.eval_every = eval_every;
            let report = train(&data, &val, &model_cfg, &train_cfg)?;
            println!(
                "trained {} steps: final train loss {:.6e}, best val mse {:.6e}, final val mse {:.6e}",
                report.steps, report.final_train_loss, report.best_val_mse, report.final_val_mse
            );
            println!(
                "checkpoints: {} / {}; metrics: {}",
                report.best_checkpoint.display(),
                report.final_checkpoint.display(),
                report.metrics_path.display()
            );
        }

        Command::Eval { checkpoint, data } => {
            let mse = eval_mse(&checkpoint, &data)?;
            println!("{mse}");
        }

        Command::EvalFamilies {
            checkpoint,
            materials,
            grid,
            families,
            count,
            seed,
            out,
        } => {
            let db = materials.load()?;
            let text = std::fs::read_to_string(&families)
                .with_context(|| format!("reading {}", families.display()))?;
            let specs: Vec<FamilySpec> = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", families.display()))?;
            let results = eval_families(
                &checkpoint,
                &db,
                &specs,
                count,
                seed,
                &grid.grid()?,
                &grid.ambient(),
            )?;
            println!("{:<52}{:>8}{:>14}", "family", "layers", "mse");
            for r in &results {
                println!("{:<52}{:>8}{:>14.6e}", r.name, r.layers, r.mse);
            }
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_vec_pretty(&results)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }

        Command::Bench {
            checkpoint,
            materials,
            grid,
            n_single,
            batch_size,
            repetitions,
            seed,
            out,
        } => {
            let db = materials.load()?;
            let report = bench(
                &checkpoint,
                &db,
                n_single,
                batch_size,
                repetitions,
                &grid.grid()?,
                &grid.ambient(),
                seed,
            )?;
            print!("{}", report.text_table());
            println!("note: {}", report.hardware_note);
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_vec_pretty(&report)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }

        Command::ExportEmbeddings { checkpoint, out } => {
            let rows = analysis::export_embeddings(&checkpoint, None, &out)?;
            println!("wrote {rows} embedding rows to {}", out.display());
        }

        Command::ExportAttention {
            checkpoint,
            structure,
            block,
            head,
            out,
        } => {
            let named = read_structure(&structure)?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let vocab = ckpt.vocab_manifest.to_vocabulary();
            let names = vocab.material_names().to_vec();
            let s: Structure = named.resolve(|name| names.iter().position(|n| n == name))?;
            analysis::export_attention(&checkpoint, &s, block, head, &out)?;
            println!("wrote attention map to {}", out.display());
        }

        Command::ExportField {
            structure,
            materials,
            grid,
            z_step,
            out,
        } => {
            let db = materials.load()?;
            let named = read_structure(&structure)?;
            let s = named.resolve(|name| db.id_of(name))?;
            analysis::export_field(&db, &s, &grid.grid()?, &grid.ambient(), z_step, &out)?;
            println!("wrote field grid to {}", out.display());
        }

        Command::ValidateData {
            data,
            materials,
            fraction,
            tolerance,
        } => {
            let db = materials.load()?;
            let report = validate_dataset(&db, &data, fraction, tolerance)?;
            println!(
                "ok: {} records, {} checked, max label error {:e}, checksum verified",
                report.record_count, report.records_checked, report.max_label_error
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("OL_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = optolayer::set_worker_threads(n);
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
