//! Experiment drivers: multi-seed sweeps, the PID baseline comparison, and
//! the goal-generalization protocol over a workspace rectangle.

use crate::config::{GoalGenSpec, HarnessError, TaskSource, TrainConfig};
use crate::metrics::{peak_acceleration, RunMetrics};
use crate::plots::Series;
use crate::rollout::{eval_battery, policy_rollout, EvalPoint};
use crate::trainer::{plan_reference, Trainer, TrainSummary};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reftraj_core::arm::{solve_ik, JointVector};
use reftraj_core::env::{run_pid, Env, PidGains, ReferenceTrajectory, RolloutRecord, TaskSpec};
use reftraj_core::planner::JointPath;
use reftraj_core::presets::{toy_goal_rectangle, GoalRectangle};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// One seed's training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub summary: TrainSummary,
    pub metrics: RunMetrics,
}

/// Trains `config` once per seed, sequentially.
pub fn train_seeds(config: &TrainConfig, seeds: &[u64]) -> Result<Vec<SeedRun>, HarnessError> {
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut trainer = Trainer::new(config.clone(), seed)?;
        let summary = trainer.run()?;
        runs.push(SeedRun {
            summary,
            metrics: trainer.metrics,
        });
    }
    Ok(runs)
}

/// Median environment steps to the first stable evaluation success; runs that
/// never got there count as the full budget (censored).
pub fn median_steps_to_stable(runs: &[SeedRun], budget: u64) -> f64 {
    let mut steps: Vec<f64> = runs
        .iter()
        .map(|r| r.summary.first_stable_success_step.unwrap_or(budget) as f64)
        .collect();
    steps.sort_by(f64::total_cmp);
    let n = steps.len();
    if n == 0 {
        return budget as f64;
    }
    if n % 2 == 1 {
        steps[n / 2]
    } else {
        (steps[n / 2 - 1] + steps[n / 2]) / 2.0
    }
}

/// Evaluation success over training steps, averaged across seeds on a
/// uniform grid, with a mean +/- standard deviation band.
pub fn success_curve(label: &str, runs: &[SeedRun], budget: u64, grid: usize) -> Series {
    let mut points = Vec::with_capacity(grid + 1);
    let mut band = Vec::with_capacity(grid + 1);
    for g in 0..=grid {
        let x = budget as f64 * g as f64 / grid as f64;
        let values: Vec<f64> = runs
            .iter()
            .map(|r| {
                r.metrics
                    .evals
                    .iter()
                    .take_while(|e| (e.total_steps as f64) <= x)
                    .last()
                    .map_or(0.0, |e| e.success_rate)
            })
            .collect();
        if values.is_empty() {
            continue;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64;
        let std = var.sqrt();
        points.push((x, mean));
        band.push((x, (mean - std).max(0.0), (mean + std).min(1.0)));
    }
    Series {
        label: label.into(),
        points,
        band,
    }
}

/// Short human-readable name for a configured task.
pub fn task_label(config: &TrainConfig) -> String {
    match &config.task {
        TaskSource::Preset(name) => name.clone(),
        TaskSource::Inline(spec) => spec.world.name.clone(),
    }
}

/// Plans with the trainer's seed (replaying the exact reference used at
/// training start) and tracks it with the PID controller.
pub fn baseline_rollout(
    task: &TaskSpec,
    config: &TrainConfig,
    seed: u64,
    gains: &PidGains,
) -> Result<(RolloutRecord, JointPath), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waypoints = plan_reference(task, &task.goal.clone(), config, &mut rng)?;
    let record = run_pid(task, &waypoints, gains);
    Ok((record, waypoints))
}

/// One task's learned-policy versus PID-baseline comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub task: String,
    pub rl_reached: bool,
    pub rl_time_s: f64,
    pub rl_peak_accel: f64,
    pub pid_reached: bool,
    pub pid_time_s: f64,
    pub pid_peak_accel: f64,
}

/// Evaluates each trained agent from the task start and runs the PID
/// baseline on the same task with the same planning seed.
pub fn compare(trainers: &[&Trainer], gains: &PidGains) -> Result<Vec<CompareRow>, HarnessError> {
    let mut rows = Vec::with_capacity(trainers.len());
    for trainer in trainers {
        let dt = trainer.env.task.dt;
        let mut eval = crate::rollout::eval_env(&trainer.env);
        let start = trainer.env.task.start.clone();
        let rl = policy_rollout(&mut eval, &trainer.agent, &start);
        let (pid, _) =
            baseline_rollout(&trainer.env.task, &trainer.config, trainer.seed, gains)?;
        rows.push(CompareRow {
            task: task_label(&trainer.config),
            rl_reached: rl.reached_goal && !rl.had_collision,
            rl_time_s: rl.steps as f64 * dt,
            rl_peak_accel: peak_acceleration(&rl, dt),
            pid_reached: pid.reached_goal && !pid.had_collision,
            pid_time_s: pid.steps as f64 * dt,
            pid_peak_accel: peak_acceleration(&pid, dt),
        });
    }
    Ok(rows)
}

/// Comparison table in CSV form.
pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from(
        "task,rl_reached,rl_time_s,rl_peak_accel,pid_reached,pid_time_s,pid_peak_accel\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{:.6},{:.6}",
            r.task,
            u8::from(r.rl_reached),
            r.rl_time_s,
            r.rl_peak_accel,
            u8::from(r.pid_reached),
            r.pid_time_s,
            r.pid_peak_accel
        );
    }
    out
}

/// Samples `count` collision-free goal configurations whose end effector
/// lands in the rectangle, retrying each with fresh rectangle points.
pub fn sample_goals<R: Rng>(
    task: &TaskSpec,
    rect: &GoalRectangle,
    count: usize,
    attempts: usize,
    rng: &mut R,
) -> Result<Vec<JointVector>, HarnessError> {
    let mut goals = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..attempts {
            let target = rect.point_at(rng.gen::<f64>(), rng.gen::<f64>());
            let Ok(q) = solve_ik(&task.world.chain, &target, &task.goal, 1e-3, 200) else {
                continue;
            };
            if task.world.chain.check_joint_limits(&q) || task.world.check_collision(&q) {
                continue;
            }
            found = Some(q);
            break;
        }
        goals.push(found.ok_or_else(|| {
            HarnessError::Other(format!(
                "no reachable collision-free goal after {attempts} rectangle samples"
            ))
        })?);
    }
    Ok(goals)
}

/// Success counts of the goal-generalization protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoalGenReport {
    pub train_reached: usize,
    pub train_total: usize,
    pub test_reached: usize,
    pub test_total: usize,
    pub summary: TrainSummary,
}

impl GoalGenReport {
    pub fn train_rate(&self) -> f64 {
        self.train_reached as f64 / self.train_total.max(1) as f64
    }

    pub fn test_rate(&self) -> f64 {
        if self.test_total == 0 {
            return self.train_rate();
        }
        self.test_reached as f64 / self.test_total as f64
    }

    pub fn overall_rate(&self) -> f64 {
        (self.train_reached + self.test_reached) as f64
            / (self.train_total + self.test_total).max(1) as f64
    }

    /// Success table: one row per split plus the combined total.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,reached,total,rate\n");
        let _ = writeln!(
            out,
            "train,{},{},{:.6}",
            self.train_reached,
            self.train_total,
            self.train_rate()
        );
        let _ = writeln!(
            out,
            "test,{},{},{:.6}",
            self.test_reached,
            self.test_total,
            self.test_rate()
        );
        let _ = writeln!(
            out,
            "overall,{},{},{:.6}",
            self.train_reached + self.test_reached,
            self.train_total + self.test_total,
            self.overall_rate()
        );
        out
    }
}

/// Seed offset separating goal sampling from the training stream.
const GOAL_SAMPLING_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Trains one goal-conditioned agent over goals sampled from the rectangle
/// and reports success over the training goals plus held-out test goals.
pub fn goal_generalize(
    spec: &GoalGenSpec,
    seed: u64,
) -> Result<(GoalGenReport, Trainer), HarnessError> {
    spec.validate()?;
    let mut task = spec.train.task.resolve()?;
    let rect = toy_goal_rectangle(spec.width_mm, spec.height_mm);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed ^ GOAL_SAMPLING_STREAM);
    let train_goals = sample_goals(
        &task,
        &rect,
        spec.train_goals,
        spec.ik_attempts,
        &mut sample_rng,
    )?;
    let test_goals = sample_goals(
        &task,
        &rect,
        spec.test_goals,
        spec.ik_attempts,
        &mut sample_rng,
    )?;
    task.goal = train_goals[0].clone();

    let mut trainer = Trainer::with_goal_set(spec.train.clone(), task.clone(), train_goals.clone(), seed)?;
    let summary = trainer.run()?;

    // Evaluate train and held-out goals with one goal-conditioned
    // environment; references only shape rewards, so held-out goals get
    // straight-line placeholders.
    let mut all_goals = train_goals.clone();
    all_goals.extend(test_goals.iter().cloned());
    let references: Vec<ReferenceTrajectory> = all_goals
        .iter()
        .map(|goal| {
            ReferenceTrajectory::from_path(
                JointPath::new(vec![task.start.clone(), goal.clone()]),
                task.resample_interval,
            )
        })
        .collect();
    let eval_env = Env::with_goal_set(task.clone(), all_goals, references, true);
    let points: Vec<EvalPoint> = (0..trainer.env.goals.len() + test_goals.len())
        .map(|goal| EvalPoint {
            start: task.start.clone(),
            goal,
        })
        .collect();
    let battery = eval_battery(&eval_env, &trainer.agent, &points);
    let train_total = train_goals.len();
    let successes = |range: std::ops::Range<usize>| {
        battery.records[range]
            .iter()
            .filter(|r| r.reached_goal && !r.had_collision)
            .count()
    };
    let report = GoalGenReport {
        train_reached: successes(0..train_total),
        train_total,
        test_reached: successes(train_total..train_total + test_goals.len()),
        test_total: test_goals.len(),
        summary,
    };
    Ok((report, trainer))
}
