use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use edgefs_core::frame_io::load_manifest;
use edgefs_core::oracles::{dense_block_disparity, dense_block_flow, DenseFlowConfig};
use edgefs_core::{compute_metrics, CameraIntrinsics, EdgeFsF64, MetricsReport, PipelineConfig, StereoFrame};
use edgefs_sim::trajectory::{default_start, DEFAULT_RATE_HZ};
use edgefs_sim::{generate_sequence, render_sequence, run_episode, scripted_trajectory, Motion, WorldPreset};
use serde::Deserialize;
use serde_json::json;

use crate::error::CliError;
use crate::settings::{self, FileConfig};
use crate::{Cli, Command};

/// Width of the depth buckets in the error table.
const DEPTH_BUCKET_M: f64 = 0.5;
const BUCKET_HEADER: &str =
    "depth_lo_m,depth_hi_m,n,vx_err_q1,vx_err_median,vx_err_q3,vy_err_q1,vy_err_median,vy_err_q3\n";

struct Ctx {
    seed: u64,
    preset: Option<String>,
    out: Option<PathBuf>,
    intr: CameraIntrinsics<f64>,
    pipeline: PipelineConfig,
    file: FileConfig,
}

impl Ctx {
    fn world_preset(&self, default: WorldPreset) -> Result<WorldPreset, CliError> {
        match &self.preset {
            Some(name) => Ok(WorldPreset::from_name(name)?),
            None => Ok(default),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let file = match &g.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let intr_name = g.intrinsics.or(file.intrinsics.clone());
    let intr = settings::intrinsics(intr_name.as_deref().unwrap_or(settings::DEFAULT_INTRINSICS))?;
    let ctx = Ctx {
        seed: g.seed.or(file.seed).unwrap_or(settings::DEFAULT_SEED),
        preset: g.preset.or(file.preset.clone()),
        out: g.out.or(file.out.clone()),
        intr,
        pipeline: settings::pipeline(
            g.window.or(file.window).unwrap_or(settings::DEFAULT_WINDOW_PX),
            g.range.or(file.range).unwrap_or(settings::DEFAULT_RANGE_PX),
            g.robust_fit.or(file.robust_fit).unwrap_or(true),
            &intr,
        )?,
        file,
    };
    match cli.command {
        Command::Gen { motion, seconds } => cmd_gen(&ctx, motion, seconds),
        Command::Estimate { manifest } => cmd_estimate(&ctx, &manifest),
        Command::Bench { frames, manifest } => cmd_bench(&ctx, frames, manifest),
        Command::Navsim {
            episodes,
            max_seconds,
            cruise,
        } => cmd_navsim(&ctx, episodes, max_seconds, cruise),
        Command::Metrics { input } => cmd_metrics(&ctx, &input),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn positive_seconds(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be positive, got {v}")))
    }
}

fn cmd_gen(ctx: &Ctx, motion: Option<String>, seconds: Option<f64>) -> Result<(), CliError> {
    let preset = ctx.world_preset(WorldPreset::FlatWall)?;
    let motion_spec = motion
        .or(ctx.file.motion.clone())
        .unwrap_or(settings::DEFAULT_MOTION.into());
    let motion = Motion::parse(&motion_spec)?;
    let seconds = positive_seconds(
        "--seconds",
        seconds.or(ctx.file.seconds).unwrap_or(settings::DEFAULT_SECONDS),
    )?;
    let n = (seconds * DEFAULT_RATE_HZ).round() as usize;
    if n == 0 {
        return Err(CliError::Usage(format!(
            "--seconds {seconds} is shorter than one frame"
        )));
    }
    let out = ctx
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("gen needs --out DIR".into()))?;
    let world = preset.build(ctx.seed);
    let start = default_start(preset, &motion, ctx.seed);
    let traj = scripted_trajectory(start, &motion, n, DEFAULT_RATE_HZ);
    generate_sequence(&world, &traj, &ctx.intr, ctx.seed, out)?;
    println!(
        "{} frames of {} over {} written to {}",
        n,
        motion_spec,
        preset.name(),
        out.join("manifest.json").display()
    );
    Ok(())
}

/// One estimate row; `None` fields are written empty.
struct EstimateRow {
    t: f64,
    vx_est: Option<f64>,
    vy_est: Option<f64>,
    vx_gt: Option<f64>,
    vy_gt: Option<f64>,
    n_points: usize,
    residual_rms: Option<f64>,
    mean_depth_m: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn write_estimates(rows: &[EstimateRow], out: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "vx_est", "vy_est", "vx_gt", "vy_gt", "n_points", "residual_rms"])?;
    for r in rows {
        w.write_record([
            format!("{:.6}", r.t),
            fmt_opt(r.vx_est),
            fmt_opt(r.vy_est),
            fmt_opt(r.vx_gt),
            fmt_opt(r.vy_gt),
            r.n_points.to_string(),
            fmt_opt(r.residual_rms),
        ])?;
    }
    w.flush().map_err(|e| CliError::io("<csv>", e))
}

fn cmd_estimate(ctx: &Ctx, manifest_path: &Path) -> Result<(), CliError> {
    let manifest = load_manifest(manifest_path)?;
    let mut est = EdgeFsF64::new(manifest.intrinsics, ctx.pipeline);
    let mut rows = Vec::with_capacity(manifest.frames.len());
    for (i, mf) in manifest.frames.iter().enumerate() {
        let frame = manifest.load_frame(i)?;
        let out = est.process(&frame)?;
        let filtered = out.filtered.filter(|e| e.valid);
        rows.push(EstimateRow {
            t: mf.timestamp_s,
            vx_est: filtered.map(|e| e.vx_m_s),
            vy_est: filtered.map(|e| e.vy_m_s),
            vx_gt: mf.ground_truth.map(|g| g.vx_m_s),
            vy_gt: mf.ground_truth.map(|g| g.vy_m_s),
            n_points: filtered.map_or(0, |e| e.n_points),
            residual_rms: filtered.map(|e| e.residual_rms),
            mean_depth_m: out.depth.mean_valid_depth(),
        });
    }

    let summary = if manifest.has_ground_truth() {
        Some(estimate_summary(&rows)?)
    } else {
        None
    };
    match &ctx.out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join("estimates.csv");
            let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            write_estimates(&rows, std::io::BufWriter::new(f))?;
            if let Some(s) = &summary {
                write_file(
                    &dir.join("metrics.json"),
                    &(serde_json::to_string_pretty(&s.json).unwrap() + "\n"),
                )?;
                write_file(&dir.join("depth_errors.csv"), &s.buckets_csv)?;
            }
            println!("{} frames, estimates in {}", rows.len(), path.display());
            if let Some(s) = &summary {
                print!("{}", s.text);
            }
        }
        None => {
            write_estimates(&rows, std::io::stdout().lock())?;
            if let Some(s) = &summary {
                eprint!("{}", s.text);
            }
        }
    }
    Ok(())
}

struct Summary {
    text: String,
    json: serde_json::Value,
    buckets_csv: String,
}

fn metrics_json(r: &MetricsReport<f64>) -> serde_json::Value {
    json!({ "mse": r.mse, "var": r.var, "nmxm": r.nmxm })
}

fn metrics_line(axis: &str, r: &MetricsReport<f64>) -> String {
    let nmxm = r.nmxm.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    format!("{axis}: MSE {:.6}  VAR {:.6}  NMXM {nmxm}\n", r.mse, r.var)
}

/// Metrics over the frames that carry both an estimate and ground truth.
fn paired_metrics(pairs: &[(f64, f64, f64, f64)]) -> Result<(MetricsReport<f64>, MetricsReport<f64>), CliError> {
    let col = |f: fn(&(f64, f64, f64, f64)) -> f64| pairs.iter().map(f).collect::<Vec<_>>();
    let vx = compute_metrics(&col(|p| p.0), &col(|p| p.2)).map_err(|e| CliError::Data(e.to_string()))?;
    let vy = compute_metrics(&col(|p| p.1), &col(|p| p.3)).map_err(|e| CliError::Data(e.to_string()))?;
    Ok((vx, vy))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn estimate_summary(rows: &[EstimateRow]) -> Result<Summary, CliError> {
    let paired: Vec<&EstimateRow> = rows
        .iter()
        .filter(|r| r.vx_est.is_some() && r.vx_gt.is_some())
        .collect();
    let mut text = format!("{} of {} frames with a filtered estimate\n", paired.len(), rows.len());
    let mut json = json!({ "frames": rows.len(), "estimated": paired.len() });
    if paired.is_empty() {
        return Ok(Summary {
            text,
            json,
            buckets_csv: BUCKET_HEADER.into(),
        });
    }
    let pairs: Vec<_> = paired
        .iter()
        .map(|r| (r.vx_est.unwrap(), r.vy_est.unwrap(), r.vx_gt.unwrap(), r.vy_gt.unwrap()))
        .collect();
    let (vx, vy) = paired_metrics(&pairs)?;
    text += &metrics_line("vx", &vx);
    text += &metrics_line("vy", &vy);
    json["vx"] = metrics_json(&vx);
    json["vy"] = metrics_json(&vy);

    // absolute error grouped by the mean observed depth of the frame
    let mut buckets: std::collections::BTreeMap<i64, (Vec<f64>, Vec<f64>)> = Default::default();
    for r in &paired {
        let Some(d) = r.mean_depth_m else { continue };
        let b = buckets.entry((d / DEPTH_BUCKET_M).floor() as i64).or_default();
        b.0.push((r.vx_est.unwrap() - r.vx_gt.unwrap()).abs());
        b.1.push((r.vy_est.unwrap() - r.vy_gt.unwrap()).abs());
    }
    let mut csv = String::from(BUCKET_HEADER);
    text += "abs error by mean observed depth (q1 / median / q3)\n";
    text += "  depth m      n   vx                        vy\n";
    let mut table = Vec::new();
    for (k, (mut ex, mut ey)) in buckets {
        ex.sort_by(f64::total_cmp);
        ey.sort_by(f64::total_cmp);
        let lo = k as f64 * DEPTH_BUCKET_M;
        let hi = lo + DEPTH_BUCKET_M;
        let qx = [quantile(&ex, 0.25), quantile(&ex, 0.5), quantile(&ex, 0.75)];
        let qy = [quantile(&ey, 0.25), quantile(&ey, 0.5), quantile(&ey, 0.75)];
        csv += &format!(
            "{lo:.2},{hi:.2},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            ex.len(),
            qx[0],
            qx[1],
            qx[2],
            qy[0],
            qy[1],
            qy[2]
        );
        text += &format!(
            "  {lo:.1}-{hi:.1} {:>6}   {:.4} / {:.4} / {:.4}   {:.4} / {:.4} / {:.4}\n",
            ex.len(),
            qx[0],
            qx[1],
            qx[2],
            qy[0],
            qy[1],
            qy[2]
        );
        table.push(json!({ "depth_lo_m": lo, "depth_hi_m": hi, "n": ex.len(), "vx": qx, "vy": qy }));
    }
    json["depth_buckets"] = table.into();
    Ok(Summary {
        text,
        json,
        buckets_csv: csv,
    })
}

#[derive(Debug, Deserialize)]
struct MetricsRow {
    vx_est: Option<f64>,
    vy_est: Option<f64>,
    vx_gt: Option<f64>,
    vy_gt: Option<f64>,
}

fn cmd_metrics(ctx: &Ctx, input: &Path) -> Result<(), CliError> {
    let f = fs::File::open(input).map_err(|e| CliError::io(input, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let headers = rdr.headers()?.clone();
    for col in ["vx_est", "vy_est", "vx_gt", "vy_gt"] {
        if !headers.iter().any(|h| h == col) {
            return Err(CliError::Data(format!("{}: missing column {col}", input.display())));
        }
    }
    let mut pairs = Vec::new();
    let mut total = 0usize;
    for rec in rdr.deserialize::<MetricsRow>() {
        let r = rec?;
        total += 1;
        if let (Some(a), Some(b), Some(c), Some(d)) = (r.vx_est, r.vy_est, r.vx_gt, r.vy_gt) {
            pairs.push((a, b, c, d));
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no rows with both estimate and ground truth",
            input.display()
        )));
    }
    let (vx, vy) = paired_metrics(&pairs)?;
    print!(
        "{} of {total} rows used\n{}{}",
        pairs.len(),
        metrics_line("vx", &vx),
        metrics_line("vy", &vy)
    );
    if let Some(dir) = &ctx.out {
        create_dir(dir)?;
        let doc = json!({ "rows": total, "used": pairs.len(), "vx": metrics_json(&vx), "vy": metrics_json(&vy) });
        write_file(
            &dir.join("metrics.json"),
            &(serde_json::to_string_pretty(&doc).unwrap() + "\n"),
        )?;
    }
    Ok(())
}

struct Timing {
    mean_ms: f64,
    p50_ms: f64,
    p95_ms: f64,
    max_ms: f64,
}

impl Timing {
    fn from_secs(mut v: Vec<f64>) -> Self {
        v.sort_by(f64::total_cmp);
        Timing {
            mean_ms: v.iter().sum::<f64>() / v.len() as f64 * 1e3,
            p50_ms: quantile(&v, 0.5) * 1e3,
            p95_ms: quantile(&v, 0.95) * 1e3,
            max_ms: v[v.len() - 1] * 1e3,
        }
    }

    fn json(&self) -> serde_json::Value {
        json!({ "mean_ms": self.mean_ms, "p50_ms": self.p50_ms, "p95_ms": self.p95_ms, "max_ms": self.max_ms })
    }
}

fn cmd_bench(ctx: &Ctx, frames: Option<usize>, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let n = frames.or(ctx.file.frames).unwrap_or(settings::DEFAULT_BENCH_FRAMES);
    if n == 0 {
        return Err(CliError::Usage("--frames must be at least 1".into()));
    }
    let (intr, stereo): (CameraIntrinsics<f64>, Vec<StereoFrame>) = match manifest {
        Some(path) => {
            let m = load_manifest(&path)?;
            let k = n.min(m.frames.len());
            let frames = (0..k).map(|i| m.load_frame(i)).collect::<Result<_, _>>()?;
            (m.intrinsics, frames)
        }
        None => {
            let preset = ctx.world_preset(WorldPreset::FlatWall)?;
            let motion = Motion::parse(settings::DEFAULT_MOTION)?;
            let world = preset.build(ctx.seed);
            let traj = scripted_trajectory(default_start(preset, &motion, ctx.seed), &motion, n, DEFAULT_RATE_HZ);
            let frames = render_sequence(&world, &traj, &ctx.intr, ctx.seed)?;
            (ctx.intr, frames.into_iter().map(|f| f.rendered.frame).collect())
        }
    };

    let mut est = EdgeFsF64::new(intr, ctx.pipeline);
    let mut edge = Vec::with_capacity(stereo.len());
    for f in &stereo {
        let t0 = Instant::now();
        std::hint::black_box(est.process(f)?);
        edge.push(t0.elapsed().as_secs_f64());
    }
    let dense_cfg = DenseFlowConfig::from(&ctx.pipeline.matcher);
    let mut dense = Vec::with_capacity(stereo.len());
    for (i, f) in stereo.iter().enumerate() {
        let prev = &stereo[i.saturating_sub(1)];
        let t0 = Instant::now();
        let flow = dense_block_flow(&prev.left, &f.left, &dense_cfg).map_err(|e| CliError::Data(e.to_string()))?;
        let disp = dense_block_disparity(&f.left, &f.right, &dense_cfg).map_err(|e| CliError::Data(e.to_string()))?;
        std::hint::black_box((flow, disp));
        dense.push(t0.elapsed().as_secs_f64());
    }
    let (edge, dense) = (Timing::from_secs(edge), Timing::from_secs(dense));
    let ratio = dense.mean_ms / edge.mean_ms;
    println!("{} frames, {}x{} px", stereo.len(), intr.width_px(), intr.height_px());
    for (name, t) in [("edge-fs", &edge), ("dense", &dense)] {
        println!(
            "{name:>8}: mean {:.3} ms  p50 {:.3} ms  p95 {:.3} ms  max {:.3} ms",
            t.mean_ms, t.p50_ms, t.p95_ms, t.max_ms
        );
    }
    println!("dense / edge-fs: {ratio:.1}x");
    if let Some(dir) = &ctx.out {
        create_dir(dir)?;
        let doc = json!({ "frames": stereo.len(), "edge_fs": edge.json(), "dense": dense.json(), "ratio": ratio });
        write_file(
            &dir.join("bench.json"),
            &(serde_json::to_string_pretty(&doc).unwrap() + "\n"),
        )?;
    }
    Ok(())
}

fn cmd_navsim(
    ctx: &Ctx,
    episodes: Option<usize>,
    max_seconds: Option<f64>,
    cruise: Option<f64>,
) -> Result<(), CliError> {
    let preset = ctx.world_preset(WorldPreset::Room4x4)?;
    let episodes = episodes.or(ctx.file.episodes).unwrap_or(settings::DEFAULT_EPISODES);
    if episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let max_seconds = positive_seconds(
        "--max-seconds",
        max_seconds
            .or(ctx.file.max_seconds)
            .unwrap_or(settings::DEFAULT_MAX_SECONDS),
    )?;
    let mut cfg = ctx.file.nav.unwrap_or_default();
    if let Some(v) = cruise.or(ctx.file.cruise) {
        cfg.cruise_speed_m_s = v;
    }
    cfg.validate()?;
    if let Some(dir) = &ctx.out {
        create_dir(dir)?;
    }

    let mut summaries = Vec::with_capacity(episodes);
    let mut survived = 0;
    for i in 0..episodes {
        let seed = ctx.seed.wrapping_add(i as u64);
        let world = preset.build(seed);
        let start = default_start(preset, &Motion::Static, seed);
        let log = run_episode(&world, start, &cfg, &ctx.intr, seed, max_seconds)?;
        let ok = log.survived(max_seconds);
        survived += usize::from(ok);
        let s = log.summary();
        match &log.collision {
            None => println!(
                "seed {seed}: {} {:.1} s, {} turns, {:.1} m flown",
                if ok { "survived" } else { "stopped at" },
                s.duration_s,
                s.turns,
                s.distance_flown_m
            ),
            Some(c) => println!(
                "seed {seed}: collided at {:.1} s, wall angle {:.0} deg, after turn {}, near-parallel {}",
                c.t, c.wall_angle_deg, c.after_turn, c.near_parallel
            ),
        }
        if let Some(dir) = &ctx.out {
            log.save(
                &dir.join(format!("episode_{seed}.csv")),
                &dir.join(format!("episode_{seed}.json")),
            )?;
        }
        summaries.push(s);
    }
    println!(
        "survived {survived} of {episodes} episodes ({max_seconds} s cap, {})",
        preset.name()
    );
    if let Some(dir) = &ctx.out {
        let doc = json!({
            "preset": preset.name(),
            "seed": ctx.seed,
            "max_seconds": max_seconds,
            "cruise_m_s": cfg.cruise_speed_m_s,
            "survived": survived,
            "episodes": summaries,
        });
        write_file(
            &dir.join("summary.json"),
            &(serde_json::to_string_pretty(&doc).unwrap() + "\n"),
        )?;
    }
    Ok(())
}
