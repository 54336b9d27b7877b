//! gaitpipe: pose detections -> tracklets -> filtered stores -> trained
//! embedding model -> retrieval metrics.
//!
//! Every command takes `--seed`; all randomness flows from it, so repeated
//! invocations with the same flags produce byte-identical outputs.
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gait_cli::config::PipelineConfig;
use gait_cli::formats;
use gait_core::model::checkpoint;
use gait_core::quality::FilterReport;
use gait_core::rng::{derive_seed, DetRng};
use gait_core::skeleton::normalize_tracklet;
use gait_core::synth::{generate_synthetic_walkers, SynthConfig};
use gait_core::tracking::track_stream;
use gait_core::train::{
    dataset_stats, embed_store, evaluate, train, SequenceStore, StoreEntry, TrackletStore,
};

#[derive(Parser)]
#[command(
    name = "gaitpipe",
    about = "Skeleton gait pipeline: tracking, filtering, embedding training and retrieval",
    version
)]
struct Cli {
    /// Seed for all randomness of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline configuration (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse pose-estimator output and track it into tracklets.
    Ingest {
        /// Pose JSON array (image_id, 51 keypoint numbers, score).
        #[arg(long)]
        poses: PathBuf,
        #[arg(long, default_value_t = 24.0)]
        fps: f64,
        #[arg(long, default_value = "cam0")]
        camera: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply admission filters to a tracklet store.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-tracklet verdict lines.
        #[arg(long)]
        report: PathBuf,
    },
    /// Dataset statistics and a track-duration histogram.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 24.0)]
        fps: f64,
        #[arg(long, default_value_t = 24)]
        bin_width: usize,
        #[arg(long)]
        hist_out: PathBuf,
    },
    /// Train the embedding model with supervised contrastive loss.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-step loss CSV (step, loss).
        #[arg(long)]
        loss_curve: PathBuf,
    },
    /// Embed every tracklet of a store with a trained model.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank-1/rank-5 retrieval of probe embeddings against a gallery.
    Eval {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate labeled synthetic walker tracklets.
    Synth {
        #[arg(long, default_value_t = 32)]
        ids: usize,
        #[arg(long, default_value_t = 4)]
        runs: usize,
        #[arg(long, default_value_t = 108)]
        frames: usize,
        #[arg(long, default_value_t = 24.0)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump a tracklet's normalized sequence and two augmented views.
    AugmentPreview {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        track: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => {
            PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_store(path: &Path) -> Result<TrackletStore> {
    formats::read_store(open_reader(path)?)
        .with_context(|| format!("reading store {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.config)?;
    match cli.command {
        Command::Ingest {
            poses,
            fps,
            camera,
            out,
        } => {
            let json = std::fs::read_to_string(&poses)
                .with_context(|| format!("reading {}", poses.display()))?;
            let (frames, stats) = formats::ingest_poses(&json)?;
            let tracklets = track_stream(frames, &config.tracker.to_core(), &camera, fps)?;
            let store = TrackletStore {
                entries: tracklets
                    .into_iter()
                    .map(|t| StoreEntry {
                        label: t.track_id as i64,
                        run: 0,
                        tracklet: t,
                    })
                    .collect(),
            };
            let mut w = create_writer(&out)?;
            formats::write_store(&mut w, &store)?;
            w.flush()?;
            println!(
                "{}",
                serde_json::json!({
                    "frames": stats.frames,
                    "detections": stats.detections,
                    "skipped_records": stats.skipped,
                    "tracklets": store.entries.len(),
                })
            );
            Ok(())
        }
        Command::Filter { input, out, report } => {
            let store = read_store(&input)?;
            let filter_cfg = config.filter.to_core();
            let mut admitted = TrackletStore::default();
            let mut verdicts = Vec::with_capacity(store.entries.len());
            let mut report_w = create_writer(&report)?;
            for entry in store.entries {
                let verdict = gait_core::quality::run_filters(&entry.tracklet, &filter_cfg);
                let record = formats::VerdictRecord {
                    track_id: entry.tracklet.track_id,
                    label: entry.label,
                    verdict: if verdict.passed() { "pass" } else { "reject" }.to_string(),
                    reason: verdict.reason().map(|r| r.as_str().to_string()),
                };
                serde_json::to_writer(&mut report_w, &record)?;
                report_w.write_all(b"\n")?;
                if verdict.passed() {
                    admitted.entries.push(entry);
                }
                verdicts.push(verdict);
            }
            report_w.flush()?;
            let mut w = create_writer(&out)?;
            formats::write_store(&mut w, &admitted)?;
            w.flush()?;
            let tally = FilterReport::tally(&verdicts);
            let rejected: Vec<serde_json::Value> = tally
                .rejected
                .iter()
                .map(|(r, c)| serde_json::json!({"reason": r.as_str(), "count": c}))
                .collect();
            println!(
                "{}",
                serde_json::json!({
                    "total": tally.total,
                    "passed": tally.passed,
                    "rejected": rejected,
                })
            );
            Ok(())
        }
        Command::Stats {
            input,
            fps,
            bin_width,
            hist_out,
        } => {
            let store = read_store(&input)?;
            let stats = dataset_stats(&store, fps, bin_width);
            let mut w = create_writer(&hist_out)?;
            writeln!(w, "bin_start_frames,bin_end_frames,count")?;
            for bin in &stats.histogram {
                writeln!(w, "{},{},{}", bin.start_frames, bin.end_frames, bin.count)?;
            }
            w.flush()?;
            println!(
                "{}",
                serde_json::json!({
                    "id_count": stats.id_count,
                    "total_walk_hours": stats.total_walk_hours,
                    "avg_run_length_frames": stats.avg_run_length,
                })
            );
            Ok(())
        }
        Command::Train {
            input,
            out,
            loss_curve,
        } => {
            let store = read_store(&input)?;
            let sequences = SequenceStore::from_tracklets(&store);
            let model_cfg = config.model.to_core();
            let mut train_cfg = config.train.to_core();
            if let Some(seed) = cli.seed {
                train_cfg.seed = seed;
            }
            let mut aug_cfg = config.augment.to_core();
            aug_cfg.window_len = model_cfg.frames;
            let output = train(&sequences, &model_cfg, &aug_cfg, &train_cfg)?;
            let mut w = create_writer(&out)?;
            checkpoint::save(&mut w, &model_cfg, &output.params)?;
            w.flush()?;
            let mut c = create_writer(&loss_curve)?;
            writeln!(c, "step,loss")?;
            for (step, loss) in output.loss_curve.iter().enumerate() {
                writeln!(c, "{step},{loss}")?;
            }
            c.flush()?;
            println!(
                "{}",
                serde_json::json!({
                    "steps": output.loss_curve.len(),
                    "final_loss": output.loss_curve.last().copied().unwrap_or(f64::NAN),
                })
            );
            Ok(())
        }
        Command::Embed { model, input, out } => {
            let (model_cfg, params) = checkpoint::load(&mut open_reader(&model)?)
                .with_context(|| format!("loading checkpoint {}", model.display()))?;
            let store = read_store(&input)?;
            let sequences = SequenceStore::from_tracklets(&store);
            let table = embed_store(&params, &model_cfg, &sequences);
            let mut w = create_writer(&out)?;
            formats::write_embeddings(&mut w, &table)?;
            w.flush()?;
            println!(
                "{}",
                serde_json::json!({"embeddings": table.n, "dim": table.d})
            );
            Ok(())
        }
        Command::Eval {
            gallery,
            probe,
            out,
        } => {
            let gallery = formats::read_embeddings(open_reader(&gallery)?)?;
            let probe = formats::read_embeddings(open_reader(&probe)?)?;
            let result = evaluate(&gallery, &probe)?;
            let mut w = create_writer(&out)?;
            writeln!(w, "metric,value")?;
            writeln!(w, "rank1,{}", result.rank1)?;
            writeln!(w, "rank5,{}", result.rank5)?;
            w.flush()?;
            println!(
                "{}",
                serde_json::json!({"rank1": result.rank1, "rank5": result.rank5})
            );
            Ok(())
        }
        Command::Synth {
            ids,
            runs,
            frames,
            fps,
            out,
        } => {
            let synth_cfg = SynthConfig {
                n_ids: ids,
                runs_per_id: runs,
                frames,
                fps,
                seed: cli.seed.unwrap_or(7),
            };
            let store = generate_synthetic_walkers(&synth_cfg);
            let mut w = create_writer(&out)?;
            formats::write_store(&mut w, &store)?;
            w.flush()?;
            println!("{}", serde_json::json!({"tracklets": store.entries.len()}));
            Ok(())
        }
        Command::AugmentPreview { input, track, out } => {
            let store = read_store(&input)?;
            let Some(entry) = store
                .entries
                .iter()
                .find(|e| e.tracklet.track_id == track)
            else {
                bail!("track {track} not found in {}", input.display());
            };
            let ns = normalize_tracklet(&entry.tracklet)?;
            let mut aug_cfg = config.augment.to_core();
            if let Some(seed) = cli.seed {
                aug_cfg.seed = seed;
            }
            let mut rng = DetRng::new(derive_seed(aug_cfg.seed, track));
            let (view_a, view_b) = gait_core::augment::make_views(&ns, &aug_cfg, &mut rng)?;
            let mut w = create_writer(&out)?;
            for (kind, seq) in [("source", &ns), ("view_a", &view_a), ("view_b", &view_b)] {
                let record = formats::ViewRecord {
                    track_id: track,
                    kind: kind.to_string(),
                    frames: seq
                        .frames
                        .iter()
                        .map(|f| f.iter().map(|j| [j[0], j[1]]).collect())
                        .collect(),
                };
                serde_json::to_writer(&mut w, &record)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            println!(
                "{}",
                serde_json::json!({"track_id": track, "view_len": view_a.len()})
            );
            Ok(())
        }
    }
}
