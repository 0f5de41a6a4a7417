//! Labelled-example generation by exhaustive search over a geometric grid of
//! partitionings `(s^i, s^j)`, `i, j in 1..=k`.
//!
//! Cells are independent trials. Cells whose partitionings coincide after
//! clamping to the dataset share one executor call. A grid can be persisted
//! half-way and resumed; only `PENDING` cells are executed on resume.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::process::Command;
use std::thread;

use thiserror::Error;

use crate::domain::{
    clamp_partitioning, AlgorithmDescriptor, DatasetDescriptor, EnvironmentDescriptor, Partitioning, Time,
    FAILED_LITERAL,
};
use crate::extraction::{best_trial, trial_order, ConfigurationKey, TrainingExample};
use crate::log_ingest::FORMAT_TAG;
use crate::num::Scalar;
use crate::simulator::{simulate_execution, CostModelParams};

pub const DEFAULT_STEP: u64 = 2;
const PENDING_LITERAL: &str = "PENDING";

#[derive(Debug, Error)]
pub enum GridError {
    #[error("search step must be at least 2, got {0}")]
    InvalidStep(u64),
    #[error("total cores {cores} is smaller than the search step {step}")]
    CoresBelowStep { cores: u64, step: u64 },
    #[error("dataset {rows}x{cols} is smaller than one step ({step}) along some axis")]
    DatasetTooSmall { rows: u64, cols: u64, step: u64 },
    #[error("every cell of the grid failed")]
    AllCellsFailed,
    #[error("grid has pending cells")]
    Incomplete,
    #[error("grid does not match this search: {0}")]
    Mismatch(String),
    #[error("grid file line {line_no}: {reason}")]
    Format { line_no: usize, reason: String },
    #[error(transparent)]
    Executor(#[from] ExecutorError),
}

/// The executor itself broke (could not run, garbled output). A run that
/// merely failed is reported as [`Time::Failed`], not as an error.
#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("could not launch executor: {0}")]
    Launch(String),
    #[error("executor produced unusable output: {0}")]
    Output(String),
}

/// Something that can run (or pretend to run) one configuration.
///
/// Implementations must be deterministic for reproducible grids.
pub trait Executor<T>: Sync {
    fn execute(
        &self,
        d: &DatasetDescriptor,
        a: &AlgorithmDescriptor,
        e: &EnvironmentDescriptor,
        part: Partitioning,
    ) -> Result<Time<T>, ExecutorError>;
}

impl<T, F> Executor<T> for F
where
    F: Fn(
            &DatasetDescriptor,
            &AlgorithmDescriptor,
            &EnvironmentDescriptor,
            Partitioning,
        ) -> Result<Time<T>, ExecutorError>
        + Sync,
{
    fn execute(
        &self,
        d: &DatasetDescriptor,
        a: &AlgorithmDescriptor,
        e: &EnvironmentDescriptor,
        part: Partitioning,
    ) -> Result<Time<T>, ExecutorError> {
        self(d, a, e, part)
    }
}

/// Cost-model executor; ignores the algorithm beyond the parameters it was built with.
#[derive(Debug, Clone)]
pub struct SimulatedExecutor<T> {
    pub params: CostModelParams<T>,
}

impl<T: Scalar> Executor<T> for SimulatedExecutor<T> {
    fn execute(
        &self,
        d: &DatasetDescriptor,
        _a: &AlgorithmDescriptor,
        e: &EnvironmentDescriptor,
        part: Partitioning,
    ) -> Result<Time<T>, ExecutorError> {
        Ok(simulate_execution(&self.params, d, e, part))
    }
}

/// Cost-model executor that looks up [`CostModelParams::preset`] for each
/// run's algorithm, with shared noise settings.
#[derive(Debug, Clone, Copy)]
pub struct PresetExecutor<T> {
    pub noise_rel: T,
    pub seed: u64,
}

impl<T: Scalar> PresetExecutor<T> {
    pub fn params_for(&self, a: &AlgorithmDescriptor) -> CostModelParams<T> {
        CostModelParams { noise_rel: self.noise_rel, seed: self.seed, ..CostModelParams::preset(a.name()) }
    }
}

impl<T: Scalar> Executor<T> for PresetExecutor<T> {
    fn execute(
        &self,
        d: &DatasetDescriptor,
        a: &AlgorithmDescriptor,
        e: &EnvironmentDescriptor,
        part: Partitioning,
    ) -> Result<Time<T>, ExecutorError> {
        Ok(simulate_execution(&self.params_for(a), d, e, part))
    }
}

/// Runs an external program once per trial.
///
/// The configuration is passed through `BLOCKWISE_*` environment variables
/// (`ROWS`, `COLS`, `SIZE_BYTES`, `ELEM_BYTES`, `ALGO`, `TASK`, `MODE`,
/// `NODES`, `CORES_PER_NODE`, `TOTAL_CORES`, `RAM_PER_NODE`, `P_R`, `P_C`).
/// The program prints the elapsed seconds on stdout and exits 0; any nonzero
/// exit counts as a failed run.
#[derive(Debug, Clone)]
pub struct CommandExecutor {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandExecutor {
    /// Runs `command_line` through `sh -c`.
    pub fn shell(command_line: &str) -> Self {
        Self { program: "sh".into(), args: vec!["-c".into(), command_line.into()] }
    }
}

impl<T: Scalar> Executor<T> for CommandExecutor {
    fn execute(
        &self,
        d: &DatasetDescriptor,
        a: &AlgorithmDescriptor,
        e: &EnvironmentDescriptor,
        part: Partitioning,
    ) -> Result<Time<T>, ExecutorError> {
        let output = Command::new(&self.program)
            .args(&self.args)
            .env("BLOCKWISE_ROWS", d.rows().to_string())
            .env("BLOCKWISE_COLS", d.cols().to_string())
            .env("BLOCKWISE_SIZE_BYTES", d.size_bytes().to_string())
            .env("BLOCKWISE_ELEM_BYTES", d.element_bytes().to_string())
            .env("BLOCKWISE_ALGO", a.name())
            .env("BLOCKWISE_TASK", a.task_kind().as_str())
            .env("BLOCKWISE_MODE", a.mode().as_str())
            .env("BLOCKWISE_NODES", e.nodes().to_string())
            .env("BLOCKWISE_CORES_PER_NODE", e.cores_per_node().to_string())
            .env("BLOCKWISE_TOTAL_CORES", e.total_cores().to_string())
            .env("BLOCKWISE_RAM_PER_NODE", e.ram_per_node_bytes().to_string())
            .env("BLOCKWISE_P_R", part.p_r().to_string())
            .env("BLOCKWISE_P_C", part.p_c().to_string())
            .output()
            .map_err(|err| ExecutorError::Launch(format!("{}: {err}", self.program)))?;
        if !output.status.success() {
            return Ok(Time::Failed);
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let text = stdout.trim();
        let seconds =
            T::parse_decimal(text).ok_or_else(|| ExecutorError::Output(format!("{text:?} is not a number")))?;
        Time::finite(seconds).map_err(|err| ExecutorError::Output(err.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub k: u32,
    /// False when `total_cores` is not a power of the step and `k` was floored.
    pub exact: bool,
}

pub fn grid_shape(total_cores: u64, step: u64) -> Result<GridShape, GridError> {
    if step < 2 {
        return Err(GridError::InvalidStep(step));
    }
    if total_cores < step {
        return Err(GridError::CoresBelowStep { cores: total_cores, step });
    }
    let mut k = 0;
    let mut power: u64 = 1;
    while let Some(next) = power.checked_mul(step).filter(|&n| n <= total_cores) {
        power = next;
        k += 1;
    }
    let exact = power == total_cores;
    if !exact {
        log::warn!("{total_cores} cores is not a power of {step}; grid spans partitions up to {power}");
    }
    Ok(GridShape { k, exact })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellState<T> {
    Pending,
    Done(Time<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell<T> {
    /// Row exponent; 0 only for the optional identity trial.
    pub i: u32,
    pub j: u32,
    /// `(s^i, s^j)` clamped to the dataset.
    pub partitioning: Partitioning,
    pub state: CellState<T>,
}

impl<T: Scalar> GridCell<T> {
    pub fn time(&self) -> Option<Time<T>> {
        match self.state {
            CellState::Done(t) => Some(t),
            CellState::Pending => None,
        }
    }
}

/// The k x k matrix of trial outcomes, stored row-major by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid<T> {
    pub step: u64,
    pub k: u32,
    pub cells: Vec<GridCell<T>>,
    /// Unpartitioned `(1, 1)` trial, present only when requested.
    pub identity: Option<GridCell<T>>,
}

impl<T: Scalar> SearchGrid<T> {
    pub fn new(d: &DatasetDescriptor, step: u64, k: u32, include_identity: bool) -> Self {
        let mut cells = Vec::with_capacity((k * k) as usize);
        for i in 1..=k {
            for j in 1..=k {
                let raw =
                    Partitioning::new(step.saturating_pow(i), step.saturating_pow(j)).expect("powers are positive");
                cells.push(GridCell { i, j, partitioning: clamp_partitioning(d, raw), state: CellState::Pending });
            }
        }
        let identity = include_identity.then(|| GridCell {
            i: 0,
            j: 0,
            partitioning: Partitioning::new(1, 1).expect("1x1 is valid"),
            state: CellState::Pending,
        });
        Self { step, k, cells, identity }
    }

    pub fn cell(&self, i: u32, j: u32) -> Option<&GridCell<T>> {
        if i == 0 && j == 0 {
            return self.identity.as_ref();
        }
        if i == 0 || j == 0 || i > self.k || j > self.k {
            return None;
        }
        self.cells.get(((i - 1) * self.k + (j - 1)) as usize)
    }

    /// Grid cells followed by the identity trial, if any.
    pub fn all_cells(&self) -> impl Iterator<Item = &GridCell<T>> {
        self.cells.iter().chain(self.identity.iter())
    }

    fn all_cells_mut(&mut self) -> impl Iterator<Item = &mut GridCell<T>> {
        self.cells.iter_mut().chain(self.identity.iter_mut())
    }

    pub fn is_complete(&self) -> bool {
        self.all_cells().all(|c| c.time().is_some())
    }

    pub fn pending(&self) -> usize {
        self.all_cells().filter(|c| c.time().is_none()).count()
    }

    /// Finished trials as `(partitioning, time)`.
    pub fn trials(&self) -> impl Iterator<Item = (Partitioning, Time<T>)> + '_ {
        self.all_cells().filter_map(|c| c.time().map(|t| (c.partitioning, t)))
    }

    /// Argmin over finished, non-failed cells using the extraction tie-break.
    pub fn best(&self) -> Result<(Partitioning, T), GridError> {
        if !self.is_complete() {
            return Err(GridError::Incomplete);
        }
        best_trial(self.trials()).ok_or(GridError::AllCellsFailed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub step: u64,
    /// Maximum number of trials in flight at once.
    pub parallelism: usize,
    pub include_identity: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { step: DEFAULT_STEP, parallelism: 1, include_identity: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome<T> {
    pub grid: SearchGrid<T>,
    pub example: TrainingExample<T>,
    pub shape: GridShape,
    /// Executor calls made by this run (resumed cells not included).
    pub invocations: usize,
}

/// Executes every pending cell of `grid`, at most `parallelism` at a time.
/// `checkpoint` sees the grid after each batch, so callers can persist it.
pub fn complete_grid<T: Scalar, E: Executor<T> + ?Sized>(
    grid: &mut SearchGrid<T>,
    d: &DatasetDescriptor,
    a: &AlgorithmDescriptor,
    e: &EnvironmentDescriptor,
    exec: &E,
    parallelism: usize,
    mut checkpoint: impl FnMut(&SearchGrid<T>),
) -> Result<usize, GridError> {
    // Finished cells seed the memo so resumed grids stay consistent.
    let mut memo: HashMap<Partitioning, Time<T>> =
        grid.all_cells().filter_map(|c| c.time().map(|t| (c.partitioning, t))).collect();
    let mut todo: Vec<Partitioning> = Vec::new();
    for c in grid.all_cells() {
        if c.time().is_none() && !memo.contains_key(&c.partitioning) && !todo.contains(&c.partitioning) {
            todo.push(c.partitioning);
        }
    }

    let fill = |grid: &mut SearchGrid<T>, memo: &HashMap<Partitioning, Time<T>>| {
        for c in grid.all_cells_mut() {
            if let (CellState::Pending, Some(t)) = (c.state, memo.get(&c.partitioning)) {
                c.state = CellState::Done(*t);
            }
        }
    };
    fill(grid, &memo);
    if todo.is_empty() {
        return Ok(0);
    }

    for batch in todo.chunks(parallelism.max(1)) {
        let results: Vec<Result<Time<T>, ExecutorError>> = if batch.len() == 1 {
            vec![exec.execute(d, a, e, batch[0])]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = batch.iter().map(|&p| s.spawn(move || exec.execute(d, a, e, p))).collect();
                handles.into_iter().map(|h| h.join().expect("executor thread panicked")).collect()
            })
        };
        for (&p, r) in batch.iter().zip(results) {
            memo.insert(p, r?);
        }
        fill(grid, &memo);
        checkpoint(grid);
    }
    Ok(todo.len())
}

/// Runs (or finishes, when `resume` holds a partial grid) the search for one
/// configuration and labels it with the best cell.
pub fn run_grid_search<T: Scalar, E: Executor<T> + ?Sized>(
    d: &DatasetDescriptor,
    a: &AlgorithmDescriptor,
    e: &EnvironmentDescriptor,
    exec: &E,
    options: SearchOptions,
    resume: Option<SearchGrid<T>>,
    checkpoint: impl FnMut(&SearchGrid<T>),
) -> Result<SearchOutcome<T>, GridError> {
    let shape = grid_shape(e.total_cores(), options.step)?;
    if d.rows() < options.step || d.cols() < options.step {
        return Err(GridError::DatasetTooSmall { rows: d.rows(), cols: d.cols(), step: options.step });
    }
    let fresh = SearchGrid::new(d, options.step, shape.k, options.include_identity);
    let mut grid = match resume {
        Some(g) => {
            let same_layout = g.step == fresh.step
                && g.k == fresh.k
                && g.identity.is_some() == fresh.identity.is_some()
                && g.all_cells()
                    .zip(fresh.all_cells())
                    .all(|(x, y)| (x.i, x.j, x.partitioning) == (y.i, y.j, y.partitioning));
            if !same_layout {
                return Err(GridError::Mismatch(format!(
                    "stored grid is step {} k {}, search needs step {} k {}",
                    g.step, g.k, fresh.step, fresh.k
                )));
            }
            g
        }
        None => fresh,
    };
    let invocations = complete_grid(&mut grid, d, a, e, exec, options.parallelism, checkpoint)?;
    let (best, best_time) = grid.best()?;
    let example = TrainingExample { key: ConfigurationKey::new(d, a, e), best, best_time };
    Ok(SearchOutcome { grid, example, shape, invocations })
}

/// Every finished, non-failed cell sorted fastest first (extraction tie-break).
pub fn exhaustive_report<T: Scalar>(grid: &SearchGrid<T>) -> Vec<(Partitioning, T)> {
    let mut rows: Vec<(Partitioning, Time<T>)> = grid.trials().filter(|(_, t)| !t.is_failed()).collect();
    rows.sort_by(|a, b| trial_order(*a, *b));
    rows.into_iter().map(|(p, t)| (p, t.seconds().expect("failed cells filtered"))).collect()
}

/// Grid file: header `v1 <step> <k>`, then one line per cell
/// `<i> <j> <p_r> <p_c> <time|FAILED|PENDING>`, tab-separated. The optional
/// identity trial is an extra `0 0 1 1 ...` line after the k x k cells.
pub fn write_grid<T: Scalar>(grid: &SearchGrid<T>) -> String {
    let mut out = format!("{FORMAT_TAG}\t{}\t{}\n", grid.step, grid.k);
    for c in grid.all_cells() {
        let state = match c.state {
            CellState::Pending => PENDING_LITERAL.to_string(),
            CellState::Done(t) => t.to_string(),
        };
        writeln!(out, "{}\t{}\t{}\t{}\t{}", c.i, c.j, c.partitioning.p_r(), c.partitioning.p_c(), state)
            .expect("writing to a String cannot fail");
    }
    out
}

pub fn read_grid<T: Scalar>(text: &str) -> Result<SearchGrid<T>, GridError> {
    let err = |line_no: usize, reason: String| GridError::Format { line_no, reason };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let h: Vec<&str> = header.split('\t').collect();
    if h.len() != 3 || h[0] != FORMAT_TAG {
        return Err(err(1, format!("bad header {header:?}")));
    }
    let step: u64 = h[1].parse().map_err(|_| err(1, "step is not an integer".into()))?;
    let k: u32 = h[2].parse().map_err(|_| err(1, "k is not an integer".into()))?;
    if step < 2 {
        return Err(GridError::InvalidStep(step));
    }

    let mut cells = Vec::with_capacity((k * k) as usize);
    let mut identity = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(line_no, format!("expected 5 fields, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| err(line_no, format!("{s:?} is not an integer")));
        let (i, j) = (int(f[0])? as u32, int(f[1])? as u32);
        let partitioning = Partitioning::new(int(f[2])?, int(f[3])?).map_err(|e| err(line_no, e.to_string()))?;
        let state = match f[4] {
            PENDING_LITERAL => CellState::Pending,
            FAILED_LITERAL => CellState::Done(Time::Failed),
            raw => CellState::Done(Time::parse(raw).map_err(|e| err(line_no, e.to_string()))?),
        };
        let cell = GridCell { i, j, partitioning, state };
        if (i, j) == (0, 0) && identity.is_none() && cells.len() == (k * k) as usize {
            identity = Some(cell);
            continue;
        }
        let n = cells.len() as u32;
        if identity.is_some() || n >= k * k || (i, j) != (n / k + 1, n % k + 1) {
            return Err(err(line_no, format!("unexpected cell ({i}, {j})")));
        }
        cells.push(cell);
    }
    if cells.len() != (k * k) as usize {
        return Err(err(0, format!("expected {} cells, found {}", k * k, cells.len())));
    }
    Ok(SearchGrid { step, k, cells, identity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Mode, TaskKind};
    use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

    fn algo() -> AlgorithmDescriptor {
        AlgorithmDescriptor::new("kmeans", TaskKind::Clustering, Mode::Train).unwrap()
    }

    fn env(cores: u64) -> EnvironmentDescriptor {
        EnvironmentDescriptor::new(1, cores, 1 << 40).unwrap()
    }

    fn part(p_r: u64, p_c: u64) -> Partitioning {
        Partitioning::new(p_r, p_c).unwrap()
    }

    /// Executor reading times from a table indexed by (p_r, p_c); `None` = failed.
    fn table_executor(
        table: Vec<((u64, u64), Option<f64>)>,
    ) -> impl Fn(
        &DatasetDescriptor,
        &AlgorithmDescriptor,
        &EnvironmentDescriptor,
        Partitioning,
    ) -> Result<Time<f64>, ExecutorError> {
        move |_, _, _, p| {
            let t = table.iter().find(|(k, _)| *k == (p.p_r(), p.p_c())).expect("cell in table").1;
            Ok(t.map(Time::Finite).unwrap_or(Time::Failed))
        }
    }

    fn two_by_two() -> impl Fn(
        &DatasetDescriptor,
        &AlgorithmDescriptor,
        &EnvironmentDescriptor,
        Partitioning,
    ) -> Result<Time<f64>, ExecutorError> {
        table_executor(vec![((2, 2), Some(9.0)), ((2, 4), Some(4.0)), ((4, 2), Some(6.0)), ((4, 4), Some(5.0))])
    }

    #[test]
    fn grid_shape_examples() {
        assert_eq!(grid_shape(64, 2).unwrap(), GridShape { k: 6, exact: true });
        assert_eq!(grid_shape(256, 2).unwrap(), GridShape { k: 8, exact: true });
        assert_eq!(grid_shape(2, 2).unwrap(), GridShape { k: 1, exact: true });
        let floored = grid_shape(48, 2).unwrap();
        assert_eq!(floored, GridShape { k: 5, exact: false });
        assert!(2u64.pow(5) <= 48 && 48 < 2u64.pow(6));
        assert_eq!(grid_shape(81, 3).unwrap().k, 4);
        assert!(matches!(grid_shape(64, 1), Err(GridError::InvalidStep(1))));
        assert!(matches!(grid_shape(1, 2), Err(GridError::CoresBelowStep { .. })));
    }

    #[test]
    fn argmin_of_explicit_matrix() {
        let d = DatasetDescriptor::new(1000, 1000).unwrap();
        let out = run_grid_search(&d, &algo(), &env(4), &two_by_two(), SearchOptions::default(), None, |_| {}).unwrap();
        assert_eq!(out.shape.k, 2);
        assert_eq!(out.example.best, part(2, 4));
        assert_eq!(out.example.best_time, 4.0);
        assert_eq!(out.invocations, 4);
    }

    #[test]
    fn all_failed_is_an_error() {
        let d = DatasetDescriptor::new(1000, 1000).unwrap();
        let exec = table_executor(vec![((2, 2), None), ((2, 4), None), ((4, 2), None), ((4, 4), None)]);
        let err = run_grid_search(&d, &algo(), &env(4), &exec, SearchOptions::default(), None, |_| {}).unwrap_err();
        assert!(matches!(err, GridError::AllCellsFailed));
    }

    #[test]
    fn failed_cells_excluded_from_argmin() {
        let d = DatasetDescriptor::new(1000, 1000).unwrap();
        let exec = table_executor(vec![((2, 2), Some(9.0)), ((2, 4), None), ((4, 2), Some(6.0)), ((4, 4), None)]);
        let out = run_grid_search(&d, &algo(), &env(4), &exec, SearchOptions::default(), None, |_| {}).unwrap();
        assert_eq!(out.example.best, part(4, 2));
        assert_eq!(exhaustive_report(&out.grid).len(), 2);
    }

    #[test]
    fn report_sorted_by_time() {
        let d = DatasetDescriptor::new(1000, 1000).unwrap();
        let out = run_grid_search(&d, &algo(), &env(4), &two_by_two(), SearchOptions::default(), None, |_| {}).unwrap();
        // Sort oracle: collect the explicit matrix and sort by value.
        let mut expected = vec![(part(2, 2), 9.0), (part(2, 4), 4.0), (part(4, 2), 6.0), (part(4, 4), 5.0)];
        expected.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        assert_eq!(exhaustive_report(&out.grid), expected);
        assert_eq!(expected, vec![(part(2, 4), 4.0), (part(4, 4), 5.0), (part(4, 2), 6.0), (part(2, 2), 9.0)]);
    }

    #[test]
    fn one_by_one_report() {
        let d = DatasetDescriptor::new(10, 10).unwrap();
        let exec = table_executor(vec![((2, 2), Some(7.0))]);
        let out = run_grid_search(&d, &algo(), &env(2), &exec, SearchOptions::default(), None, |_| {}).unwrap();
        assert_eq!(exhaustive_report(&out.grid), vec![(part(2, 2), 7.0)]);
    }

    #[test]
    fn clamped_cells_share_one_call() {
        // 27 columns: p_c in {2,4,8,16,32,64} clamps 32 and 64 to 27.
        let d = DatasetDescriptor::new(60_000, 27).unwrap();
        let calls = AtomicUsize::new(0);
        let exec = |_: &DatasetDescriptor, _: &AlgorithmDescriptor, _: &EnvironmentDescriptor, p: Partitioning| {
            calls.fetch_add(1, AtomicOrdering::SeqCst);
            Ok(Time::Finite(1.0 + (p.p_r() as f64 - 8.0).abs() + (p.p_c() as f64 - 8.0).abs()))
        };
        let out = run_grid_search(&d, &algo(), &env(64), &exec, SearchOptions::default(), None, |_| {}).unwrap();
        assert_eq!(out.grid.cells.len(), 36);
        assert_eq!(calls.load(AtomicOrdering::SeqCst), 30);
        assert_eq!(out.invocations, 30);
        assert_eq!(out.grid.cell(1, 5).unwrap().partitioning, part(2, 27));
        assert_eq!(out.grid.cell(1, 5).unwrap().state, out.grid.cell(1, 6).unwrap().state);
        assert_eq!(out.example.best, part(8, 8));
    }

    #[test]
    fn parallel_matches_sequential() {
        let d = DatasetDescriptor::new(1 << 16, 1 << 12).unwrap();
        let sim = SimulatedExecutor { params: CostModelParams::new(0.5, 1e-8, 0.02, 0.03, 11).unwrap() };
        let seq = run_grid_search(&d, &algo(), &env(64), &sim, SearchOptions::default(), None, |_| {}).unwrap();
        let par_opts = SearchOptions { parallelism: 7, ..SearchOptions::default() };
        let mut checkpoints = 0;
        let par = run_grid_search(&d, &algo(), &env(64), &sim, par_opts, None, |_| checkpoints += 1).unwrap();
        assert_eq!(seq.grid, par.grid);
        assert_eq!(seq.example, par.example);
        assert_eq!(checkpoints, 36usize.div_ceil(7));
    }

    #[test]
    fn simulator_backed_search_matches_exhaustive_oracle() {
        let d = DatasetDescriptor::with_details(1024, 1024, 1024 * 1024 * 8, Some(8)).unwrap();
        let params = CostModelParams::new(0.0, 1e-6, 0.01, 0.0, 0).unwrap();
        let sim = SimulatedExecutor { params };
        let out = run_grid_search(&d, &algo(), &env(4), &sim, SearchOptions::default(), None, |_| {}).unwrap();
        // Oracle: evaluate the closed form on every (2^i, 2^j), i,j in 1..=2.
        let mut best = (f64::INFINITY, 0, 0);
        for i in 1..=2u32 {
            for j in 1..=2u32 {
                let (pr, pc) = (2u64.pow(i), 2u64.pow(j));
                let blocks = pr * pc;
                let t =
                    (blocks.div_ceil(4) as f64) * 1e-6 * (1024 / pr) as f64 * (1024 / pc) as f64 + 0.01 * blocks as f64;
                if t < best.0 {
                    best = (t, pr, pc);
                }
            }
        }
        assert_eq!(out.example.best, part(best.1, best.2));
        assert!((out.example.best_time - best.0).abs() < 1e-12);
        assert_eq!(out.example.best, part(2, 2));
    }

    #[test]
    fn identity_trial_is_optional_and_competes() {
        let d = DatasetDescriptor::new(1000, 1000).unwrap();
        let exec = table_executor(vec![
            ((1, 1), Some(3.0)),
            ((2, 2), Some(9.0)),
            ((2, 4), Some(4.0)),
            ((4, 2), Some(6.0)),
            ((4, 4), Some(5.0)),
        ]);
        let opts = SearchOptions { include_identity: true, ..SearchOptions::default() };
        let out = run_grid_search(&d, &algo(), &env(4), &exec, opts, None, |_| {}).unwrap();
        assert_eq!(out.invocations, 5);
        assert_eq!(out.example.best, part(1, 1));
        let text = write_grid(&out.grid);
        assert_eq!(read_grid::<f64>(&text).unwrap(), out.grid);
    }

    #[test]
    fn grid_file_round_trip_and_resume() {
        let d = DatasetDescriptor::new(1000, 1000).unwrap();
        let mut partial: SearchGrid<f64> = SearchGrid::new(&d, 2, 2, false);
        partial.cells[0].state = CellState::Done(Time::Finite(9.0));
        partial.cells[3].state = CellState::Done(Time::Failed);
        let text = write_grid(&partial);
        assert_eq!(text, "v1\t2\t2\n1\t1\t2\t2\t9\n1\t2\t2\t4\tPENDING\n2\t1\t4\t2\tPENDING\n2\t2\t4\t4\tFAILED\n");
        let restored = read_grid::<f64>(&text).unwrap();
        assert_eq!(restored, partial);

        let calls = AtomicUsize::new(0);
        let inner = two_by_two();
        let exec = |d: &DatasetDescriptor, a: &AlgorithmDescriptor, e: &EnvironmentDescriptor, p: Partitioning| {
            calls.fetch_add(1, AtomicOrdering::SeqCst);
            inner(d, a, e, p)
        };
        let out =
            run_grid_search(&d, &algo(), &env(4), &exec, SearchOptions::default(), Some(restored), |_| {}).unwrap();
        assert_eq!(calls.load(AtomicOrdering::SeqCst), 2);
        assert_eq!(out.example.best, part(2, 4));
        assert!(out.grid.cell(2, 2).unwrap().time().unwrap().is_failed());
    }

    #[test]
    fn resume_rejects_mismatched_grid() {
        let d = DatasetDescriptor::new(1000, 1000).unwrap();
        let other: SearchGrid<f64> = SearchGrid::new(&d, 2, 3, false);
        let err = run_grid_search(&d, &algo(), &env(4), &two_by_two(), SearchOptions::default(), Some(other), |_| {});
        assert!(matches!(err, Err(GridError::Mismatch(_))));
    }

    #[test]
    fn malformed_grid_files() {
        assert!(read_grid::<f64>("").is_err());
        assert!(read_grid::<f64>("v1\t2\t1\n").is_err());
        assert!(read_grid::<f64>("v1\t2\t1\n2\t1\t2\t2\t5\n").is_err());
        assert!(read_grid::<f64>("v1\t2\t1\n1\t1\t2\t2\tsoon\n").is_err());
        assert!(read_grid::<f64>("v1\t1\t1\n1\t1\t2\t2\t5\n").is_err());
    }

    #[test]
    fn command_executor_contract() {
        let d = DatasetDescriptor::new(1000, 500).unwrap();
        let ok = CommandExecutor::shell("echo \"$BLOCKWISE_P_R.$BLOCKWISE_P_C\"");
        let t: Time<f64> = ok.execute(&d, &algo(), &env(4), part(3, 25)).unwrap();
        assert_eq!(t, Time::Finite(3.25));
        let echo_algo = CommandExecutor::shell(
            "test \"$BLOCKWISE_ALGO\" = kmeans && test \"$BLOCKWISE_TOTAL_CORES\" = 4 && echo 1.5",
        );
        assert_eq!(Executor::<f64>::execute(&echo_algo, &d, &algo(), &env(4), part(1, 1)).unwrap(), Time::Finite(1.5));
        let failing = CommandExecutor::shell("exit 3");
        assert!(Executor::<f64>::execute(&failing, &d, &algo(), &env(4), part(1, 1)).unwrap().is_failed());
        let garbled = CommandExecutor::shell("echo fast");
        assert!(matches!(
            Executor::<f64>::execute(&garbled, &d, &algo(), &env(4), part(1, 1)),
            Err(ExecutorError::Output(_))
        ));
        let missing = CommandExecutor { program: "/nonexistent/blockwise-runner".into(), args: vec![] };
        assert!(matches!(
            Executor::<f64>::execute(&missing, &d, &algo(), &env(4), part(1, 1)),
            Err(ExecutorError::Launch(_))
        ));
    }
}
