//! Occupancy-grid navigation tasks: generation, validation, the BFS
//! shortest-path oracle, and the on-disk task/task-set format.
//!
//! Tasks are walled 16x16 arenas (configurable) with a fixed start at the
//! bottom-center and goal at the top-center, nudged to the nearest free
//! cell when occupied. Generation is cellular-automata style: random fill
//! at a target obstacle density followed by majority-rule smoothing.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng as _, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("no solvable task after {attempts} attempts at density {density}")]
    GenerationFailed { attempts: usize, density: f64 },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("format error in {path} line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("task has no id; set ids before saving a task set")]
    MissingId,
}

/// A navigation task: boolean occupancy grid (true = obstacle) with start
/// and goal cells. Coordinates are (col, row), row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub width: usize,
    pub height: usize,
    cells: Vec<bool>,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub id: Option<String>,
}

impl Task {
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<bool>,
        start: (usize, usize),
        goal: (usize, usize),
    ) -> Self {
        assert_eq!(cells.len(), width * height);
        Task {
            width,
            height,
            cells,
            start,
            goal,
            id: None,
        }
    }

    /// Open arena: border walls only, start/goal at the standard convention.
    pub fn open_arena(width: usize, height: usize) -> Self {
        let mut cells = vec![false; width * height];
        for c in 0..width {
            cells[c] = true;
            cells[(height - 1) * width + c] = true;
        }
        for r in 0..height {
            cells[r * width] = true;
            cells[r * width + width - 1] = true;
        }
        Task::new(
            width,
            height,
            cells,
            (width / 2, height - 2),
            (width / 2, 1),
        )
    }

    pub fn is_obstacle(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn set_obstacle(&mut self, col: usize, row: usize, value: bool) {
        self.cells[row * self.width + col] = value;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Grid as a 0/1 vector, obstacle = 1.0 (VAE input encoding).
    pub fn cells_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }
}

/// Parameters for cellular-automata task generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    pub width: usize,
    pub height: usize,
    pub obstacle_density: f64,
    pub smoothing_iterations: usize,
    pub rng_seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            width: 16,
            height: 16,
            obstacle_density: 0.25,
            smoothing_iterations: 2,
            rng_seed: 0,
        }
    }
}

/// The fixed task set standing in for real-world deployment tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTaskSet {
    pub tasks: Vec<Task>,
    pub split_seed: u64,
}

const GENERATION_ATTEMPTS: usize = 100;

/// Generates a solvable task, retrying up to a bounded number of times.
/// Deterministic in `params`: the same seed yields a bit-identical grid.
pub fn generate_task(params: &GenerationParams) -> Result<Task, TaskError> {
    assert!((0.0..=1.0).contains(&params.obstacle_density));
    let mut rng = crate::Rng::seed_from_u64(params.rng_seed);
    for _ in 0..GENERATION_ATTEMPTS {
        if let Some(task) = try_generate(params, &mut rng) {
            return Ok(task);
        }
    }
    Err(TaskError::GenerationFailed {
        attempts: GENERATION_ATTEMPTS,
        density: params.obstacle_density,
    })
}

fn try_generate(params: &GenerationParams, rng: &mut crate::Rng) -> Option<Task> {
    let (w, h) = (params.width, params.height);
    let mut cells = vec![false; w * h];
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            cells[r * w + c] = rng.random::<f64>() < params.obstacle_density;
        }
    }
    for _ in 0..params.smoothing_iterations {
        cells = smooth(&cells, w, h);
    }
    force_border(&mut cells, w, h);

    let start = nearest_free(&cells, w, h, (w / 2, h - 2))?;
    let goal = nearest_free_excluding(&cells, w, h, (w / 2, 1), start)?;
    let task = Task::new(w, h, cells, start, goal);
    if validate_task(&task).is_valid() {
        Some(task)
    } else {
        None
    }
}

/// Majority rule over the 3x3 neighborhood; out-of-bounds counts as wall.
fn smooth(cells: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = cells.to_vec();
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let mut walls = 0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = ((r as i64 + dr) as usize, (c as i64 + dc) as usize);
                    if cells[nr * w + nc] {
                        walls += 1;
                    }
                }
            }
            out[r * w + c] = walls >= 5;
        }
    }
    out
}

fn force_border(cells: &mut [bool], w: usize, h: usize) {
    for c in 0..w {
        cells[c] = true;
        cells[(h - 1) * w + c] = true;
    }
    for r in 0..h {
        cells[r * w] = true;
        cells[r * w + w - 1] = true;
    }
}

/// Nearest free interior cell to `target` by Manhattan distance, with a
/// deterministic tie-break (row-major scan order of increasing radius).
fn nearest_free(cells: &[bool], w: usize, h: usize, target: (usize, usize)) -> Option<(usize, usize)> {
    nearest_free_excluding(cells, w, h, target, (usize::MAX, usize::MAX))
}

fn nearest_free_excluding(
    cells: &[bool],
    w: usize,
    h: usize,
    target: (usize, usize),
    exclude: (usize, usize),
) -> Option<(usize, usize)> {
    let max_radius = w + h;
    for radius in 0..=max_radius {
        for r in 1..h - 1 {
            for c in 1..w - 1 {
                let d = c.abs_diff(target.0) + r.abs_diff(target.1);
                if d == radius && !cells[r * w + c] && (c, r) != exclude {
                    return Some((c, r));
                }
            }
        }
    }
    None
}

/// Minimum 4-connected step count from start to goal through free cells,
/// or `None` when unreachable. BFS semantics, exact.
pub fn shortest_path_length(task: &Task) -> Option<usize> {
    let (w, h) = (task.width, task.height);
    let idx = |c: usize, r: usize| r * w + c;
    if task.is_obstacle(task.start.0, task.start.1) || task.is_obstacle(task.goal.0, task.goal.1) {
        return None;
    }
    let mut dist = vec![usize::MAX; w * h];
    let mut queue = VecDeque::new();
    dist[idx(task.start.0, task.start.1)] = 0;
    queue.push_back(task.start);
    while let Some((c, r)) = queue.pop_front() {
        let d = dist[idx(c, r)];
        if (c, r) == task.goal {
            return Some(d);
        }
        let neighbors = [
            (c.wrapping_sub(1), r),
            (c + 1, r),
            (c, r.wrapping_sub(1)),
            (c, r + 1),
        ];
        for (nc, nr) in neighbors {
            if nc < w && nr < h && !task.is_obstacle(nc, nr) && dist[idx(nc, nr)] == usize::MAX {
                dist[idx(nc, nr)] = d + 1;
                queue.push_back((nc, nr));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationFailure {
    StartOccupied,
    GoalOccupied,
    StartEqualsGoal,
    Unreachable,
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValidationFailure::StartOccupied => "start-occupied",
            ValidationFailure::GoalOccupied => "goal-occupied",
            ValidationFailure::StartEqualsGoal => "start==goal",
            ValidationFailure::Unreachable => "unreachable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub failures: Vec<ValidationFailure>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn validate_task(task: &Task) -> ValidityReport {
    let mut failures = Vec::new();
    if task.is_obstacle(task.start.0, task.start.1) {
        failures.push(ValidationFailure::StartOccupied);
    }
    if task.is_obstacle(task.goal.0, task.goal.1) {
        failures.push(ValidationFailure::GoalOccupied);
    }
    if task.start == task.goal {
        failures.push(ValidationFailure::StartEqualsGoal);
    }
    if failures.is_empty() && shortest_path_length(task).is_none() {
        failures.push(ValidationFailure::Unreachable);
    }
    ValidityReport { failures }
}

// ---------------------------------------------------------------------------
// On-disk format: plain text header plus one '#'/'.' character per cell.
// ---------------------------------------------------------------------------

pub fn task_to_string(task: &Task) -> String {
    let mut s = String::new();
    s.push_str(&format!("width {}\n", task.width));
    s.push_str(&format!("height {}\n", task.height));
    s.push_str(&format!("start {} {}\n", task.start.0, task.start.1));
    s.push_str(&format!("goal {} {}\n", task.goal.0, task.goal.1));
    for r in 0..task.height {
        for c in 0..task.width {
            s.push(if task.is_obstacle(c, r) { '#' } else { '.' });
        }
        s.push('\n');
    }
    s
}

pub fn task_from_string(text: &str, path: &str) -> Result<Task, TaskError> {
    let fail = |line: usize, message: String| TaskError::Format {
        path: path.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let mut header = |key: &str| -> Result<(usize, String), TaskError> {
        let (i, line) = lines
            .next()
            .ok_or_else(|| fail(0, format!("missing {key} header")))?;
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| fail(i + 1, format!("expected '{key}', got '{line}'")))?;
        Ok((i + 1, rest.trim().to_string()))
    };
    let (l, w) = header("width")?;
    let width: usize = w.parse().map_err(|_| fail(l, format!("bad width '{w}'")))?;
    let (l, h) = header("height")?;
    let height: usize = h.parse().map_err(|_| fail(l, format!("bad height '{h}'")))?;
    let parse_pair = |l: usize, v: &str, key: &str| -> Result<(usize, usize), TaskError> {
        let parts: Vec<&str> = v.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(fail(l, format!("{key} needs two integers, got '{v}'")));
        }
        let a = parts[0].parse().map_err(|_| fail(l, format!("bad {key} col '{}'", parts[0])))?;
        let b = parts[1].parse().map_err(|_| fail(l, format!("bad {key} row '{}'", parts[1])))?;
        Ok((a, b))
    };
    let (l, s) = header("start")?;
    let start = parse_pair(l, &s, "start")?;
    let (l, g) = header("goal")?;
    let goal = parse_pair(l, &g, "goal")?;

    let mut cells = Vec::with_capacity(width * height);
    let mut rows = 0;
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        if rows == height {
            return Err(fail(i + 1, format!("more than {height} grid rows")));
        }
        if line.chars().count() != width {
            return Err(fail(
                i + 1,
                format!("grid row {rows} has width {}, expected {width}", line.chars().count()),
            ));
        }
        for ch in line.chars() {
            match ch {
                '#' => cells.push(true),
                '.' => cells.push(false),
                other => return Err(fail(i + 1, format!("bad cell character '{other}'"))),
            }
        }
        rows += 1;
    }
    if rows != height {
        return Err(fail(0, format!("truncated grid: {rows} rows, expected {height}")));
    }
    if start.0 >= width || start.1 >= height || goal.0 >= width || goal.1 >= height {
        return Err(fail(0, "start/goal out of bounds".to_string()));
    }
    Ok(Task::new(width, height, cells, start, goal))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TaskError + '_ {
    move |source| TaskError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Saves a task set as a directory of `<id>.task` files plus a manifest
/// listing ids in order. Every task must carry an id.
pub fn save_tasks(set: &RealTaskSet, dir: &Path) -> Result<(), TaskError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = String::new();
    manifest.push_str(&format!("split_seed {}\n", set.split_seed));
    for task in &set.tasks {
        let id = task.id.as_ref().ok_or(TaskError::MissingId)?;
        manifest.push_str(id);
        manifest.push('\n');
        let path = dir.join(format!("{id}.task"));
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(task_to_string(task).as_bytes()).map_err(io_err(&path))?;
    }
    let mpath = dir.join("manifest.txt");
    fs::write(&mpath, manifest).map_err(io_err(&mpath))?;
    Ok(())
}

pub fn load_tasks(dir: &Path) -> Result<RealTaskSet, TaskError> {
    let mpath = dir.join("manifest.txt");
    let manifest = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let mut lines = manifest.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| TaskError::Format {
        path: mpath.display().to_string(),
        line: 1,
        message: "empty manifest".to_string(),
    })?;
    let split_seed: u64 = first
        .strip_prefix("split_seed")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| TaskError::Format {
            path: mpath.display().to_string(),
            line: 1,
            message: format!("expected 'split_seed <n>', got '{first}'"),
        })?;
    let mut tasks = Vec::new();
    for (_, id) in lines {
        if id.is_empty() {
            continue;
        }
        let tpath = dir.join(format!("{id}.task"));
        let text = fs::read_to_string(&tpath).map_err(io_err(&tpath))?;
        let task = task_from_string(&text, &tpath.display().to_string())?;
        tasks.push(task.with_id(id));
    }
    if tasks.is_empty() {
        return Err(TaskError::Format {
            path: mpath.display().to_string(),
            line: 1,
            message: "manifest lists no tasks".to_string(),
        });
    }
    Ok(RealTaskSet { tasks, split_seed })
}

/// Generates `count` solvable tasks with ids `task-0000`.. from seeds
/// derived off `base_seed`. Densities cycle through a small spread so the
/// pool covers open through constrained layouts.
pub fn generate_pool(
    count: usize,
    base: &GenerationParams,
    base_seed: u64,
) -> Result<Vec<Task>, TaskError> {
    // Majority-rule smoothing needs fill ratios near 0.5 to keep coherent
    // structure; below ~0.4 the filter erodes the noise to an open arena.
    // This spread maps to post-smoothing interior densities of roughly
    // 0.05 through 0.45 — open through constrained.
    let densities = [0.35, 0.38, 0.40, 0.42, 0.45, 0.48];
    let mut tasks = Vec::with_capacity(count);
    for i in 0..count {
        let params = GenerationParams {
            obstacle_density: densities[i % densities.len()],
            rng_seed: base_seed.wrapping_add(i as u64).wrapping_mul(0x2545_F491_4F6C_DD1D),
            ..base.clone()
        };
        let task = generate_task(&params)?;
        tasks.push(task.with_id(format!("task-{i:04}")));
    }
    Ok(tasks)
}
