//! `reftraj` command line: plan paths, train agents, evaluate checkpoints,
//! run the PID baseline, compare the two, and run goal generalization.

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reftraj::config::{Ablation, GoalGenSpec, HarnessError, TaskSource, TrainConfig};
use reftraj::experiments::{
    baseline_rollout, compare, compare_csv, goal_generalize, success_curve, task_label, SeedRun,
};
use reftraj::metrics::{max_joint_accelerations, rollout_path_length, EvalRow, RunMetrics};
use reftraj::plots::{line_plot, Series};
use reftraj::rollout::eval_battery;
use reftraj::trainer::Trainer;
use reftraj_core::env::{PidGains, ReferenceTrajectory, RolloutRecord, TaskFile, TaskSpec};
use reftraj_core::planner::JointPath;
use reftraj_core::presets;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "reftraj",
    version,
    about = "Joint-space trajectory optimization: RRT reference paths, TD3 training, and baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a collision-free path with RRT plus shortcutting and write a CSV.
    Plan {
        /// Preset task name or task JSON file.
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long, default_value = "path.csv")]
        out: PathBuf,
    },
    /// Train an agent; writes metrics CSVs, plots, and a checkpoint per seed.
    Train {
        /// Preset task name or train-config JSON file.
        #[arg(long)]
        config: String,
        /// Overrides the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
        /// Feature switches: no-ref, no-curriculum, no-self-imitation,
        /// no-ref-update (repeatable).
        #[arg(long)]
        ablation: Vec<String>,
        /// Overrides the config's environment-step budget.
        #[arg(long)]
        budget: Option<u64>,
        /// Continue a saved checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print a progress line after each evaluation battery.
        #[arg(long)]
        verbose: bool,
    },
    /// Deterministically evaluate a checkpoint and export the trajectory.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional task override (preset name or task JSON file).
        #[arg(long)]
        config: Option<String>,
        /// Battery rollouts to run (default: the checkpoint's full battery).
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "eval")]
        out_dir: PathBuf,
    },
    /// Run the PID path-tracking baseline on a task.
    Baseline {
        /// Preset task name or train-config JSON file.
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "baseline")]
        out_dir: PathBuf,
    },
    /// Compare trained checkpoints against the PID baseline, task by task.
    Compare {
        /// Checkpoint files, one per task.
        #[arg(long, required = true, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value = "compare")]
        out_dir: PathBuf,
    },
    /// Train one goal-conditioned agent over a rectangle of goals and report
    /// train/test success.
    GoalGen {
        /// Preset task name or train-config JSON file for the base task.
        #[arg(long, default_value = "toy1")]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100.0)]
        width_mm: f64,
        #[arg(long, default_value_t = 100.0)]
        height_mm: f64,
        #[arg(long, default_value_t = 10)]
        train_goals: usize,
        #[arg(long, default_value_t = 50)]
        test_goals: usize,
        /// Overrides the training budget.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long, default_value = "goalgen")]
        out_dir: PathBuf,
    },
    /// Write the bundled world and task JSON files.
    Bundle {
        #[arg(long, default_value = "tasks")]
        out_dir: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli.command) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}

/// Resolves `--config`: an existing JSON file is a full train config; a
/// preset name gets that preset's tuned defaults.
fn resolve_train_config(value: &str) -> Result<TrainConfig, HarnessError> {
    let path = Path::new(value);
    if path.is_file() {
        return TrainConfig::load(path);
    }
    if presets::task_by_name(value).is_some() {
        if value.starts_with("toy") {
            return Ok(TrainConfig::toy(value));
        }
        return Ok(TrainConfig {
            task: TaskSource::Preset(value.into()),
            ..TrainConfig::default()
        });
    }
    Err(HarnessError::BadConfig(format!(
        "{value:?} is neither a config file nor a preset ({})",
        presets::preset_names().join(", ")
    )))
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Plan { config, seed, out } => cmd_plan(&config, seed, &out),
        Command::Train {
            config,
            seed,
            out_dir,
            ablation,
            budget,
            resume,
            verbose,
        } => cmd_train(
            &config,
            seed,
            &out_dir,
            &ablation,
            budget,
            resume.as_deref(),
            verbose,
        ),
        Command::Evaluate {
            checkpoint,
            config,
            episodes,
            out_dir,
        } => cmd_evaluate(&checkpoint, config.as_deref(), episodes, &out_dir),
        Command::Baseline {
            config,
            seed,
            out_dir,
        } => cmd_baseline(&config, seed, &out_dir),
        Command::Compare {
            checkpoints,
            out_dir,
        } => cmd_compare(&checkpoints, &out_dir),
        Command::GoalGen {
            config,
            seed,
            width_mm,
            height_mm,
            train_goals,
            test_goals,
            budget,
            out_dir,
        } => cmd_goal_gen(
            &config,
            seed,
            width_mm,
            height_mm,
            train_goals,
            test_goals,
            budget,
            &out_dir,
        ),
        Command::Bundle { out_dir } => cmd_bundle(&out_dir),
    }
}

fn cmd_plan(config: &str, seed: u64, out: &Path) -> Result<(), HarnessError> {
    let train = resolve_train_config(config)?;
    let task = train.task.resolve()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = reftraj_core::planner::rrt_plan(
        &task.world,
        &task.start,
        &task.goal,
        &train.planner,
        &mut rng,
    )?;
    let smoothed = reftraj_core::planner::shortcut(&task.world, &raw, &train.shortcut, &mut rng);
    println!(
        "planned {} vertices ({:.3} rad), shortcut to {} vertices ({:.3} rad)",
        raw.len(),
        raw.length(),
        smoothed.len(),
        smoothed.length()
    );
    write(out, &smoothed.to_csv_degrees())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config_name: &str,
    seed: Option<u64>,
    out_dir: &Path,
    ablation: &[String],
    budget: Option<u64>,
    resume: Option<&Path>,
    verbose: bool,
) -> Result<(), HarnessError> {
    if let Some(path) = resume {
        let mut trainer = Trainer::load(path)?;
        if let Some(b) = budget {
            trainer.config.budget = b;
        }
        trainer.config.verbose |= verbose;
        let label = format!("{}-{}", task_label(&trainer.config), trainer.config.ablation.label());
        let run_dir = out_dir.join(label).join(format!("seed{}", trainer.seed));
        return finish_run(trainer, &run_dir);
    }

    let mut config = resolve_train_config(config_name)?;
    config.ablation = Ablation::parse(ablation)?;
    if let Some(b) = budget {
        config.budget = b;
    }
    config.verbose |= verbose;
    let seeds = match seed {
        Some(s) => vec![s],
        None => config.seeds.clone(),
    };
    let label = format!("{}-{}", task_label(&config), config.ablation.label());
    let mut runs = Vec::new();
    for &s in &seeds {
        let run_dir = out_dir.join(&label).join(format!("seed{s}"));
        let mut run_config = config.clone();
        run_config.checkpoint_path = Some(run_dir.join("final.ckpt"));
        let trainer = Trainer::new(run_config, s)?;
        let summary = finish_run_collect(trainer, &run_dir, &mut runs)?;
        println!(
            "seed {s}: {} episodes, {} steps, final success {:.2}{}",
            summary.episodes,
            summary.total_steps,
            summary.final_success,
            summary
                .first_stable_success_step
                .map(|st| format!(", stable success at step {st}"))
                .unwrap_or_default()
        );
    }
    if runs.len() > 1 {
        let curve = success_curve(&label, &runs, config.budget, 30);
        let svg = line_plot(
            "Evaluation success over training",
            "environment steps",
            "success rate",
            &[curve],
        );
        write(&out_dir.join(&label).join("learning_curve.svg"), &svg)?;
    }
    Ok(())
}

/// Runs a prepared trainer to completion and writes its artifacts.
fn finish_run(trainer: Trainer, run_dir: &Path) -> Result<(), HarnessError> {
    let mut collected = Vec::new();
    finish_run_collect(trainer, run_dir, &mut collected)?;
    Ok(())
}

fn finish_run_collect(
    mut trainer: Trainer,
    run_dir: &Path,
    runs: &mut Vec<SeedRun>,
) -> Result<reftraj::TrainSummary, HarnessError> {
    let outcome = trainer.run();
    match outcome {
        Ok(summary) => {
            trainer.metrics.write(run_dir)?;
            trainer.save(&run_dir.join("final.ckpt"))?;
            let curve = success_curve(
                "success",
                std::slice::from_ref(&SeedRun {
                    summary: summary.clone(),
                    metrics: trainer.metrics.clone(),
                }),
                trainer.config.budget.max(trainer.total_steps.max(1)),
                30,
            );
            let svg = line_plot(
                "Evaluation success over training",
                "environment steps",
                "success rate",
                &[curve],
            );
            write(&run_dir.join("learning_curve.svg"), &svg)?;
            let text = serde_json::to_string_pretty(&summary)
                .map_err(|e| HarnessError::Other(e.to_string()))?;
            write(&run_dir.join("summary.json"), &text)?;
            runs.push(SeedRun {
                summary: summary.clone(),
                metrics: trainer.metrics.clone(),
            });
            Ok(summary)
        }
        Err(error) => {
            // Preserve whatever was collected before the failure.
            let _ = trainer.metrics.write(run_dir);
            Err(error)
        }
    }
}

/// Builds an evaluation row plus exported artifacts from a rollout.
fn export_rollout(
    record: &RolloutRecord,
    dt: f64,
    success_rate: f64,
    out_dir: &Path,
    stem: &str,
) -> Result<EvalRow, HarnessError> {
    write(&out_dir.join(format!("{stem}.csv")), &record.to_csv())?;
    let joints = record.points.first().map_or(0, |p| p.angles.len());
    let mut angle_series = Vec::new();
    let mut accel_series = Vec::new();
    for j in 0..joints {
        let angles = record
            .points
            .iter()
            .map(|p| (p.time, p.angles[j].to_degrees()))
            .collect();
        angle_series.push(Series::new(format!("joint {}", j + 1), angles));
        let accels = record
            .points
            .windows(2)
            .map(|w| (w[1].time, (w[1].velocities[j] - w[0].velocities[j]).abs() / dt))
            .collect();
        accel_series.push(Series::new(format!("joint {}", j + 1), accels));
    }
    write(
        &out_dir.join(format!("{stem}_angles.svg")),
        &line_plot("Joint angles", "time [s]", "angle [deg]", &angle_series),
    )?;
    write(
        &out_dir.join(format!("{stem}_accel.svg")),
        &line_plot(
            "Commanded acceleration",
            "time [s]",
            "|accel| [rad/s^2]",
            &accel_series,
        ),
    )?;
    Ok(EvalRow {
        total_steps: 0,
        success_rate,
        from_start_reached: record.reached_goal && !record.had_collision,
        from_start_steps: record.steps,
        time_to_goal_s: record.steps as f64 * dt,
        path_length: rollout_path_length(&record.points),
        max_accel: max_joint_accelerations(&record.points, dt),
    })
}

fn cmd_evaluate(
    checkpoint: &Path,
    config: Option<&str>,
    episodes: Option<usize>,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    let trainer = Trainer::load(checkpoint)?;
    let env = match config {
        None => trainer.env.clone(),
        Some(value) => {
            let task = resolve_train_config(value)?.task.resolve()?;
            let reference = ReferenceTrajectory::from_path(
                JointPath::new(vec![task.start.clone(), task.goal.clone()]),
                task.resample_interval,
            );
            let env = reftraj_core::env::Env::new(task, reference);
            if env.obs_dim() != trainer.agent.obs_dim
                || env.action_dim() != trainer.agent.action_dim
            {
                return Err(HarnessError::BadConfig(format!(
                    "checkpoint expects {}-dim observations and {}-dim actions, task provides {} and {}",
                    trainer.agent.obs_dim,
                    trainer.agent.action_dim,
                    env.obs_dim(),
                    env.action_dim()
                )));
            }
            env
        }
    };
    let mut points = trainer.eval_points.clone();
    if config.is_some() {
        points = vec![reftraj::rollout::EvalPoint {
            start: env.task.start.clone(),
            goal: 0,
        }];
    }
    if let Some(n) = episodes {
        points.truncate(n.max(1));
    }
    let battery = eval_battery(&env, &trainer.agent, &points);
    let dt = env.task.dt;
    for (i, record) in battery.records.iter().enumerate() {
        println!(
            "point {:2}: reached={} collided={} steps={}",
            i, record.reached_goal, record.had_collision, record.steps
        );
    }
    let mut metrics = RunMetrics::default();
    let row = export_rollout(&battery.records[0], dt, battery.success_rate, out_dir, "rollout")?;
    println!(
        "success {}/{} ({:.2}); from start: reached={} steps={} time={:.3}s peak accel={:.3} rad/s^2",
        battery.successes,
        points.len(),
        battery.success_rate,
        row.from_start_reached,
        row.from_start_steps,
        row.time_to_goal_s,
        row.max_accel.iter().copied().fold(0.0, f64::max)
    );
    metrics.evals.push(row);
    write(&out_dir.join("evals.csv"), &metrics.evals_csv())?;
    Ok(())
}

fn cmd_baseline(config: &str, seed: u64, out_dir: &Path) -> Result<(), HarnessError> {
    let train = resolve_train_config(config)?;
    let task = train.task.resolve()?;
    let (record, waypoints) = baseline_rollout(&task, &train, seed, &PidGains::default())?;
    write(&out_dir.join("waypoints.csv"), &waypoints.to_csv_degrees())?;
    let success = f64::from(u8::from(record.reached_goal && !record.had_collision));
    let mut metrics = RunMetrics::default();
    let row = export_rollout(&record, task.dt, success, out_dir, "rollout")?;
    println!(
        "baseline: reached={} collided={} diverged={} steps={} time={:.3}s",
        record.reached_goal,
        record.had_collision,
        record.diverged,
        record.steps,
        record.duration()
    );
    metrics.evals.push(row);
    write(&out_dir.join("evals.csv"), &metrics.evals_csv())?;
    Ok(())
}

fn cmd_compare(checkpoints: &[PathBuf], out_dir: &Path) -> Result<(), HarnessError> {
    let trainers: Vec<Trainer> = checkpoints
        .iter()
        .map(|p| Trainer::load(p))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&Trainer> = trainers.iter().collect();
    let rows = compare(&refs, &PidGains::default())?;
    println!("task            rl_time  pid_time  rl_accel  pid_accel");
    for r in &rows {
        println!(
            "{:<15} {:>7.3}s {:>8.3}s {:>9.2} {:>10.2}",
            r.task, r.rl_time_s, r.pid_time_s, r.rl_peak_accel, r.pid_peak_accel
        );
    }
    write(&out_dir.join("compare.csv"), &compare_csv(&rows))
}

#[allow(clippy::too_many_arguments)]
fn cmd_goal_gen(
    config: &str,
    seed: u64,
    width_mm: f64,
    height_mm: f64,
    train_goals: usize,
    test_goals: usize,
    budget: Option<u64>,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    let mut train = resolve_train_config(config)?;
    if let Some(b) = budget {
        train.budget = b;
    }
    let spec = GoalGenSpec {
        train,
        width_mm,
        height_mm,
        train_goals,
        test_goals,
        ..GoalGenSpec::default()
    };
    let (report, trainer) = goal_generalize(&spec, seed)?;
    println!(
        "train {}/{} ({:.2}), test {}/{} ({:.2}), overall {:.2}",
        report.train_reached,
        report.train_total,
        report.train_rate(),
        report.test_reached,
        report.test_total,
        report.test_rate(),
        report.overall_rate()
    );
    write(&out_dir.join("success.csv"), &report.to_csv())?;
    trainer.metrics.write(out_dir)?;
    trainer.save(&out_dir.join("final.ckpt"))?;
    Ok(())
}

fn cmd_bundle(out_dir: &Path) -> Result<(), HarnessError> {
    use reftraj_core::arm::WorldFile;
    std::fs::create_dir_all(out_dir)?;

    let worlds = [
        ("bookshelf", presets::bookshelf_world()),
        ("open-computer", presets::open_computer_world()),
        ("toy", presets::toy_world()),
    ];
    for (name, world) in &worlds {
        let file = WorldFile::from_world(world);
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| HarnessError::Other(e.to_string()))?;
        write(&out_dir.join(format!("{name}.world.json")), &text)?;
    }

    let mut tasks: Vec<(String, TaskSpec, &str)> = presets::BOOKSHELF_GOALS_DEG
        .iter()
        .map(|(label, _)| {
            (
                format!("bookshelf-{label}"),
                presets::bookshelf_task(label).expect("bundled task"),
                "bookshelf.world.json",
            )
        })
        .collect();
    tasks.push((
        "open-computer".into(),
        presets::open_computer_task(),
        "open-computer.world.json",
    ));
    for i in 1..=5 {
        tasks.push((
            format!("toy{i}"),
            presets::toy_task(i).expect("bundled task"),
            "toy.world.json",
        ));
    }
    for (name, task, world_file) in &tasks {
        let file = TaskFile {
            world_file: (*world_file).into(),
            theta_start_deg: task.start.to_degrees(),
            theta_goal_deg: task.goal.to_degrees(),
            dt: task.dt,
            max_steps: task.max_steps,
            p_reset: task.p_reset,
            reward_weights: task.weights,
            curriculum: task.curriculum,
            resample_interval_rad: task.resample_interval,
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| HarnessError::Other(e.to_string()))?;
        write(&out_dir.join(format!("{name}.task.json")), &text)?;
    }
    Ok(())
}
