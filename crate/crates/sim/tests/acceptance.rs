//! End-to-end acceptance checks. Each criterion is its own test and writes a
//! single PASS/FAIL line to stderr (bypassing the test harness capture) so the
//! report shows up in a plain `cargo test` run.

use std::collections::{HashSet, VecDeque};
use std::io::Write;
use std::time::{Duration, Instant};

use edgefs_core::block_matcher::{match_profiles, MatchConfig};
use edgefs_core::edge_distribution::EdgeDistribution;
use edgefs_core::edge_stereo::disparity_from_depth;
use edgefs_core::frame_io::{CameraIntrinsics, StereoFrame};
use edgefs_core::oracles::{dense_block_disparity, dense_block_flow, exhaustive_match_1d, DenseFlowConfig};
use edgefs_core::{compute_metrics, EdgeFsF64, PipelineConfig};
use edgefs_sim::nav::{step_fsm, FsmState};
use edgefs_sim::trajectory::default_start;
use edgefs_sim::{
    render_sequence, render_stereo, run_episode, scripted_trajectory, CameraPose, Motion, NavConfig, NavMode,
    WorldPreset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RATE_HZ: f64 = 30.0;

fn intr() -> CameraIntrinsics<f64> {
    CameraIntrinsics::delfly_stereoboard()
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {id} [{name}]: {verdict} ({detail})");
}

/// Filtered `(vx, vy)` per frame alongside the scripted truth and the
/// left-camera centre depth.
struct RunSample {
    t: f64,
    filtered: Option<(f64, f64)>,
    truth: (f64, f64),
    centre_depth: Option<f64>,
}

fn run_pipeline(world: &edgefs_sim::World2D, traj: &[edgefs_sim::trajectory::TimedPose], seed: u64) -> Vec<RunSample> {
    let frames = render_sequence(world, traj, &intr(), seed).unwrap();
    let mut est = EdgeFsF64::new(intr(), PipelineConfig::default());
    frames
        .iter()
        .map(|f| {
            let out = est.process(&f.rendered.frame).unwrap();
            RunSample {
                t: out.timestamp_s,
                filtered: out.filtered.map(|e| (e.vx_m_s, e.vy_m_s)),
                truth: f.truth.vel_body,
                centre_depth: f.rendered.depth_m[intr().width_px() / 2],
            }
        })
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // ties share the mean rank
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = mean;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn random_pair(rng: &mut ChaCha8Rng, width: usize) -> (EdgeDistribution, EdgeDistribution) {
    match rng.random_range(0..3) {
        // independent noise
        0 => {
            let a = (0..width).map(|_| rng.random_range(0..2000)).collect();
            let b = (0..width).map(|_| rng.random_range(0..2000)).collect();
            (EdgeDistribution::new(a, 0.0), EdgeDistribution::new(b, 0.0))
        }
        // tiny alphabet, lots of exact ties
        1 => {
            let a = (0..width).map(|_| rng.random_range(0..3)).collect();
            let b = (0..width).map(|_| rng.random_range(0..3)).collect();
            (EdgeDistribution::new(a, 0.0), EdgeDistribution::new(b, 0.0))
        }
        // shifted copy with noise
        _ => {
            let base: Vec<u32> = (0..width + 40).map(|_| rng.random_range(0..1500)).collect();
            let k = rng.random_range(-15i32..=15);
            let a = (0..width).map(|i| base[i + 20]).collect();
            let b = (0..width)
                .map(|i| {
                    let j = (i as i32 + 20 - k) as usize;
                    base[j].saturating_add(rng.random_range(0..60))
                })
                .collect();
            (EdgeDistribution::new(a, 0.0), EdgeDistribution::new(b, 0.0))
        }
    }
}

#[test]
fn criterion_1_matcher_oracle_equivalence() {
    let cfg = MatchConfig::new(11, 15);
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
    let pairs = 1200;
    let started = Instant::now();
    let (mut compared, mut mismatches) = (0usize, 0usize);
    for _ in 0..pairs {
        let (a, b) = random_pair(&mut rng, 128);
        let shift = rng.random_range(-3i32..=3);
        let shifts = vec![shift; 128];
        let fast = match_profiles::<f64>(&a, &b, &cfg, &shifts).unwrap();
        let slow = exhaustive_match_1d::<f64>(&a, &b, &cfg, &shifts).unwrap();
        for i in 0..128 {
            if fast.valid[i] != slow.valid[i] {
                mismatches += 1;
            } else if fast.valid[i] {
                compared += 1;
                if fast.integer_px[i] != slow.integer_px[i] {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let pass = mismatches == 0 && compared > 0 && elapsed < Duration::from_secs(5);
    report(
        1,
        "matcher-oracle equivalence",
        pass,
        &format!(
            "{pairs} pairs, {compared} valid columns, {mismatches} mismatches, {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_stereo_accuracy() {
    let intr = intr();
    let depths = [0.5, 1.0, 2.0, 3.0];
    let mut detail = Vec::new();
    let mut errors = Vec::new();
    let mut in_envelope = true;
    for &d in &depths {
        let mut recovered = Vec::new();
        for seed in 0..6u64 {
            let world = WorldPreset::FlatWall.build(seed);
            for y in [-2.0, 0.0, 3.0] {
                let pose = CameraPose::at(3.0 - d, y, 0.0);
                let r = render_stereo(&world, &pose, &intr, seed, 0.0).unwrap();
                let mut est = EdgeFsF64::new(intr, PipelineConfig::default());
                let out = est.process(&r.frame).unwrap();
                recovered.extend((0..intr.width_px()).filter_map(|u| out.depth.depth(u)));
            }
        }
        assert!(!recovered.is_empty(), "no valid depth at {d} m");
        let med = median(&mut recovered.clone());
        let s = disparity_from_depth(d, &intr);
        let fr = intr.focal_px() * intr.baseline_m();
        let (lo, hi) = (fr / (s + 0.5), fr / (s - 0.5));
        let ok = med >= lo && med <= hi;
        in_envelope &= ok;
        let mut abs: Vec<f64> = recovered.iter().map(|x| (x - d).abs()).collect();
        let err = median(&mut abs);
        errors.push(err);
        detail.push(format!(
            "{d} m: median {med:.3} in [{lo:.3}, {hi:.3}] {ok}, |err| {err:.4}"
        ));
    }
    let rho = spearman(&depths, &errors);
    let pass = in_envelope && rho > 0.9;
    report(
        2,
        "stereo accuracy",
        pass,
        &format!("{}; spearman {rho:.3}", detail.join("; ")),
    );
    assert!(pass);
}

fn lateral_run() -> Vec<RunSample> {
    let world = WorldPreset::FlatWall.build(1);
    let motion = Motion::Lateral {
        speed_m_s: 0.3,
        ramp_s: 1.0,
    };
    let traj = scripted_trajectory(default_start(WorldPreset::FlatWall, &motion, 1), &motion, 90, RATE_HZ);
    run_pipeline(&world, &traj, 1)
}

fn forward_run() -> Vec<RunSample> {
    let world = WorldPreset::FlatWall.build(1);
    let motion = Motion::Forward { speed_m_s: 0.3 };
    // 3 m down to 0.7 m
    let traj = scripted_trajectory(default_start(WorldPreset::FlatWall, &motion, 1), &motion, 231, RATE_HZ);
    run_pipeline(&world, &traj, 1)
}

/// Steady part of the ramped slide: cruise speed reached at 1 s, plus the
/// median filter's latency.
const LATERAL_STEADY_FROM_S: f64 = 1.2;

#[test]
fn criterion_3_sideways_velocity() {
    let run = lateral_run();
    let steady: Vec<f64> = run
        .iter()
        .filter(|s| s.t >= LATERAL_STEADY_FROM_S)
        .map(|s| s.filtered.map_or(f64::NAN, |v| v.1))
        .collect();
    let worst = steady.iter().map(|v| (v - 0.3).abs()).fold(0.0, f64::max);
    let within = steady.iter().all(|v| (v - 0.3).abs() <= 0.03);
    let (est, truth): (Vec<f64>, Vec<f64>) = run.iter().filter_map(|s| s.filtered.map(|v| (v.1, s.truth.1))).unzip();
    let nmxm = compute_metrics(&est, &truth).unwrap().nmxm.unwrap_or(f64::NAN);
    let pass = within && !steady.is_empty() && nmxm >= 0.9;
    report(
        3,
        "sideways velocity",
        pass,
        &format!(
            "{} steady samples, worst |vy-0.3| {worst:.4}, nmxm {nmxm:.3}",
            steady.len()
        ),
    );
    assert!(pass);
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    (s / n as f64).sqrt()
}

#[test]
fn criterion_4_forward_velocity() {
    let run = forward_run();
    let close: Vec<&RunSample> = run.iter().filter(|s| s.centre_depth.is_some_and(|d| d < 2.0)).collect();
    let vx: Vec<f64> = close.iter().map(|s| s.filtered.map_or(f64::NAN, |v| v.0)).collect();
    let worst = vx.iter().map(|v| (v - 0.3).abs()).fold(0.0, f64::max);
    let within = !vx.is_empty() && vx.iter().all(|v| (v - 0.3).abs() <= 0.06);

    // forward channel on the approach against the sideways channel on the
    // matching slide: same wall, same speed
    let fwd_err = rms(vx.iter().map(|v| v - 0.3));
    let lateral = lateral_run();
    let side_err = rms(lateral
        .iter()
        .filter(|s| s.t >= LATERAL_STEADY_FROM_S)
        .map(|s| s.filtered.map_or(f64::NAN, |v| v.1) - s.truth.1));
    let pass = within && fwd_err > side_err;
    report(
        4,
        "forward velocity",
        pass,
        &format!(
            "{} samples below 2 m, worst |vx-0.3| {worst:.4}, rms vx err {fwd_err:.4} vs rms vy err {side_err:.4}",
            vx.len()
        ),
    );
    assert!(pass);
}

/// History capacity plus median window: before this the horizon and the
/// filter are still filling.
const YAW_SETTLED_FRAME: usize = 15;

#[test]
fn criterion_5_derotation() {
    let motion = Motion::Yaw { rate_rad_s: 0.5 };
    let mut worst: f64 = 0.0;
    let mut all = Vec::new();
    for seed in 0..10u64 {
        // 1 m from the wall, sweeping -0.75..+0.75 rad across its normal
        let world = WorldPreset::FlatWall.build(seed);
        let traj = scripted_trajectory(CameraPose::at(2.0, 0.0, -0.75), &motion, 90, RATE_HZ);
        let run = run_pipeline(&world, &traj, seed);
        for s in &run[YAW_SETTLED_FRAME..] {
            let m = s.filtered.map_or(f64::INFINITY, |(a, b)| a.hypot(b));
            worst = worst.max(m);
            all.push(m);
        }
    }
    let med = median(&mut all);
    let pass = worst < 0.05;
    report(
        5,
        "derotation",
        pass,
        &format!("10 sweeps, settled |v| median {med:.4}, max {worst:.4} (bound 0.05)"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_relative_cost() {
    let world = WorldPreset::FlatWall.build(3);
    let motion = Motion::Lateral {
        speed_m_s: 0.3,
        ramp_s: 0.0,
    };
    let traj = scripted_trajectory(default_start(WorldPreset::FlatWall, &motion, 3), &motion, 60, RATE_HZ);
    let frames: Vec<StereoFrame> = render_sequence(&world, &traj, &intr(), 3)
        .unwrap()
        .into_iter()
        .map(|f| f.rendered.frame)
        .collect();

    let mut est = EdgeFsF64::new(intr(), PipelineConfig::default());
    let mut edge_times = Vec::new();
    for _ in 0..5 {
        est.reset();
        for f in &frames {
            let t0 = Instant::now();
            std::hint::black_box(est.process(f).unwrap());
            edge_times.push(t0.elapsed().as_secs_f64());
        }
    }
    let dense_cfg = DenseFlowConfig::default();
    let mut dense_times = Vec::new();
    for w in frames.windows(2).take(20) {
        let t0 = Instant::now();
        std::hint::black_box(dense_block_flow(&w[0].left, &w[1].left, &dense_cfg).unwrap());
        std::hint::black_box(dense_block_disparity(&w[1].left, &w[1].right, &dense_cfg).unwrap());
        dense_times.push(t0.elapsed().as_secs_f64());
    }
    let edge = median(&mut edge_times);
    let dense = median(&mut dense_times);
    let ratio = dense / edge;
    let pass = edge < 2e-3 && ratio >= 3.0;
    report(
        6,
        "relative cost",
        pass,
        &format!(
            "edge-fs {:.3} ms/frame, dense oracle {:.3} ms/frame, ratio {ratio:.1}",
            edge * 1e3,
            dense * 1e3
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_closed_loop_survival() {
    let cfg = NavConfig::default();
    assert_eq!(cfg.cruise_speed_m_s, 0.3);
    let mut survived = 0;
    let mut notes = Vec::new();
    for seed in 0..10u64 {
        let world = WorldPreset::Room4x4.build(seed);
        let start = default_start(WorldPreset::Room4x4, &Motion::Static, seed);
        let log = run_episode(&world, start, &cfg, &intr(), seed, 90.0).unwrap();
        if log.survived(90.0) {
            survived += 1;
        } else if let Some(c) = log.collision {
            notes.push(format!(
                "seed {seed} hit at {:.1} s, wall angle {:.0} deg, after turn {}, near-parallel {}",
                c.t, c.wall_angle_deg, c.after_turn, c.near_parallel
            ));
        }
    }
    let pass = survived >= 8;
    let extra = if notes.is_empty() {
        String::new()
    } else {
        format!("; {}", notes.join("; "))
    };
    report(
        7,
        "closed-loop survival",
        pass,
        &format!("{survived}/10 reached 90 s{extra}"),
    );
    assert!(pass);
}

/// Nearest-obstacle inputs that cover every guard: nothing seen, below, at
/// and above the threshold.
fn fsm_inputs(cfg: &NavConfig) -> [Option<f64>; 4] {
    let th = cfg.obstacle_threshold_m;
    [None, Some(0.5 * th), Some(th), Some(2.0 * th)]
}

type Key = (NavMode, u32, u64, u64);

/// Only Hover and Turn read the tick counter, so elsewhere it is folded away
/// to keep the reachable set finite.
fn key(s: &FsmState) -> Key {
    let ticks = match s.mode {
        NavMode::Hover | NavMode::Turn => s.ticks_in_mode,
        NavMode::Check | NavMode::Forward => 0,
    };
    (s.mode, ticks, s.turn_progress_rad.to_bits(), s.turn_sign.to_bits())
}

/// Exhaustive exploration of the reachable state graph. Returns a list of
/// violated properties.
fn model_check(cfg: &NavConfig) -> (usize, Vec<String>) {
    let dt = cfg.dt();
    let hover = cfg.hover_ticks();
    let mut problems = Vec::new();
    let init = FsmState::default();
    let mut seen: HashSet<Key> = HashSet::new();
    let mut queue = VecDeque::from([init]);
    let mut states = Vec::new();
    let mut edges: Vec<(usize, Key)> = Vec::new();
    seen.insert(key(&init));
    while let Some(s) = queue.pop_front() {
        let from = states.len();
        states.push(s);
        for input in fsm_inputs(cfg) {
            let (n, cmd) = step_fsm(&s, input, cfg, dt);
            if s.mode == NavMode::Hover && n.mode != NavMode::Hover && s.ticks_in_mode != hover {
                problems.push(format!("hover left after {} ticks", s.ticks_in_mode));
            }
            if s.mode == NavMode::Hover && n.mode == NavMode::Hover && s.ticks_in_mode >= hover {
                problems.push(format!("hover held past {hover} ticks"));
            }
            let turning = s.mode == NavMode::Turn || s.mode == NavMode::Hover && n.mode != NavMode::Hover;
            if turning {
                // yaw commanded this tick must equal the progress gained
                let gained = n.turn_progress_rad
                    - if s.mode == NavMode::Turn {
                        s.turn_progress_rad
                    } else {
                        0.0
                    };
                if (cmd.yaw_rate_ref.abs() * dt - gained).abs() > 1e-12 {
                    problems.push("turn command and progress disagree".into());
                }
            }
            if s.mode == NavMode::Turn && n.mode == NavMode::Check && n.turn_progress_rad != cfg.turn_angle_rad {
                problems.push(format!("turn ended at {} rad", n.turn_progress_rad));
            }
            if n.turn_progress_rad > cfg.turn_angle_rad {
                problems.push("turn overshoot".into());
            }
            edges.push((from, key(&n)));
            if seen.insert(key(&n)) {
                queue.push_back(n);
            }
            if states.len() + queue.len() > 100_000 {
                problems.push("state space did not close".into());
                return (states.len(), problems);
            }
        }
    }
    for mode in NavMode::ALL {
        if !states.iter().any(|s| s.mode == mode) {
            problems.push(format!("{mode} unreachable"));
        }
    }
    // every state can get back to Check (no deadlock or livelock)
    let index: std::collections::HashMap<Key, usize> = states.iter().enumerate().map(|(i, s)| (key(s), i)).collect();
    let mut back: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
    for (from, to) in &edges {
        back[index[to]].push(*from);
    }
    let mut live = vec![false; states.len()];
    let mut stack: Vec<usize> = (0..states.len())
        .filter(|&i| states[i].mode == NavMode::Check)
        .collect();
    for &i in &stack {
        live[i] = true;
    }
    while let Some(i) = stack.pop() {
        for &p in &back[i] {
            if !live[p] {
                live[p] = true;
                stack.push(p);
            }
        }
    }
    let stuck = live.iter().filter(|&&l| !l).count();
    if stuck > 0 {
        problems.push(format!("{stuck} states cannot return to check"));
    }
    (states.len(), problems)
}

#[test]
fn criterion_8_fsm_model_check() {
    let base = NavConfig::default();
    let variants = [
        base,
        NavConfig {
            hover_duration_s: 0.5,
            rate_hz: 20.0,
            ..base
        },
        NavConfig {
            turn_angle_rad: 90f64.to_radians(),
            turn_rate_rad_s: 0.7,
            ..base
        },
        NavConfig {
            turn_angle_rad: 45f64.to_radians(),
            turn_rate_rad_s: 2.5,
            hover_duration_s: 0.1,
            ..base
        },
    ];
    let mut total = 0;
    let mut problems = Vec::new();
    for cfg in &variants {
        let (n, p) = model_check(cfg);
        total += n;
        problems.extend(p);
    }
    let pass = problems.is_empty();
    let detail = if pass {
        format!(
            "{} configs, {total} reachable states, all properties hold",
            variants.len()
        )
    } else {
        problems.join("; ")
    };
    report(8, "fsm model check", pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_9_metric_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ok = true;
    for _ in 0..200 {
        let n = rng.random_range(2..200);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let same = compute_metrics(&x, &x).unwrap();
        let flip = compute_metrics(&x, &neg).unwrap();
        ok &= same.mse == 0.0 && same.var == 0.0;
        ok &= same.nmxm.is_some_and(|c| (c - 1.0).abs() < 1e-12);
        ok &= flip.nmxm.is_some_and(|c| (c + 1.0).abs() < 1e-12);
    }
    report(9, "metric identities", ok, "200 random series");
    assert!(ok);
}
