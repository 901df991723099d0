//! 4×4 Sudoku as `min ι_{1..4}(x)` subject to sum/product constraints on
//! every row, column and corner block.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{seeded_rng, Experiment, ExperimentError};
use crate::dynamics::{ClosedLoop, DynamicsVariant, GainSet};
use crate::integrate::{simulate, IntegrationStats, IntegratorConfig, StopReason, Trajectory};
use crate::problem::{CompositeProblem, ConstraintMap, SystemState, ZeroObjective};
use crate::prox::{project_shidoku, ShidokuRounding, Zero};

pub type Grid = [[u8; 4]; 4];

/// 0-based `(row, col, value)` givens of the reference puzzle.
pub const GIVENS: [(usize, usize, u8); 4] = [(0, 1, 1), (0, 3, 4), (2, 0, 2), (2, 2, 3)];

/// The unique completion of [`GIVENS`].
pub const SOLUTION: Grid = [[3, 1, 2, 4], [4, 2, 1, 3], [2, 4, 3, 1], [1, 3, 4, 2]];

pub const GROUP_SUM: f64 = 10.0;
pub const GROUP_PRODUCT: f64 = 24.0;

fn cell(r: usize, c: usize) -> usize {
    4 * r + c
}

/// Cell indices of the 4 rows, 4 columns and 4 corner blocks, in that order.
pub fn groups() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(12);
    for r in 0..4 {
        out.push([cell(r, 0), cell(r, 1), cell(r, 2), cell(r, 3)]);
    }
    for c in 0..4 {
        out.push([cell(0, c), cell(1, c), cell(2, c), cell(3, c)]);
    }
    for (r, c) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
        out.push([
            cell(r, c),
            cell(r, c + 1),
            cell(r + 1, c),
            cell(r + 1, c + 1),
        ]);
    }
    out
}

/// `h(x)`: a `(sum − 10, product − 24)` pair per group, one `x_k − v` row per
/// given and, optionally, `Π_{v=1..4}(x_k − v)` for every cell.
#[derive(Debug, Clone)]
pub struct ShidokuConstraints {
    groups: Vec<[usize; 4]>,
    givens: Vec<(usize, f64)>,
    polynomial: bool,
}

impl ShidokuConstraints {
    pub fn new(givens: &[(usize, usize, u8)], polynomial: bool) -> Self {
        Self {
            groups: groups(),
            givens: givens
                .iter()
                .map(|&(r, c, v)| (cell(r, c), v as f64))
                .collect(),
            polynomial,
        }
    }
}

fn quartic(v: f64) -> f64 {
    (v - 1.0) * (v - 2.0) * (v - 3.0) * (v - 4.0)
}

fn quartic_derivative(v: f64) -> f64 {
    let roots = [1.0, 2.0, 3.0, 4.0];
    (0..4)
        .map(|skip| {
            roots
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, r)| v - r)
                .product::<f64>()
        })
        .sum()
}

impl ConstraintMap for ShidokuConstraints {
    fn dim_in(&self) -> usize {
        16
    }

    fn dim_out(&self) -> usize {
        2 * self.groups.len() + self.givens.len() + if self.polynomial { 16 } else { 0 }
    }

    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim_out());
        for g in &self.groups {
            out.push(g.iter().map(|&k| x[k]).sum::<f64>() - GROUP_SUM);
            out.push(g.iter().map(|&k| x[k]).product::<f64>() - GROUP_PRODUCT);
        }
        for &(k, v) in &self.givens {
            out.push(x[k] - v);
        }
        if self.polynomial {
            out.extend(x.iter().map(|&v| quartic(v)));
        }
        DVector::from_vec(out)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dim_out(), 16);
        let mut row = 0;
        for g in &self.groups {
            for (pos, &k) in g.iter().enumerate() {
                j[(row, k)] = 1.0;
                j[(row + 1, k)] = g
                    .iter()
                    .enumerate()
                    .filter(|&(other, _)| other != pos)
                    .map(|(_, &i)| x[i])
                    .product();
            }
            row += 2;
        }
        for &(k, _) in &self.givens {
            j[(row, k)] = 1.0;
            row += 1;
        }
        if self.polynomial {
            for k in 0..16 {
                j[(row + k, k)] = quartic_derivative(x[k]);
            }
        }
        j
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShidokuInstance {
    pub givens: Vec<(usize, usize, u8)>,
    pub solution: Grid,
}

impl Default for ShidokuInstance {
    fn default() -> Self {
        Self {
            givens: GIVENS.to_vec(),
            solution: SOLUTION,
        }
    }
}

/// The reference puzzle with `g = ι_{1..4}` (prox = rounding).
pub fn build_shidoku() -> (ShidokuInstance, CompositeProblem) {
    let inst = ShidokuInstance::default();
    let p = shidoku_problem(&inst, false);
    (inst, p)
}

/// `polynomial = true` gives the smooth formulation: `g = 0` and the
/// integrality rows appended to `h`.
pub fn shidoku_problem(inst: &ShidokuInstance, polynomial: bool) -> CompositeProblem {
    let h = ShidokuConstraints::new(&inst.givens, polynomial);
    let g: Box<dyn crate::prox::ProxOperator> = if polynomial {
        Box::new(Zero)
    } else {
        Box::new(ShidokuRounding)
    };
    CompositeProblem::new(Box::new(ZeroObjective(16)), g, Box::new(h))
        .expect("16 cells on both sides")
}

/// Problem formulation the given method runs on.
pub fn problem_for(
    inst: &ShidokuInstance,
    method: DynamicsVariant,
) -> Result<CompositeProblem, ExperimentError> {
    match method {
        DynamicsVariant::StaticProxCmo | DynamicsVariant::DynamicProxCmo => {
            Ok(shidoku_problem(inst, false))
        }
        DynamicsVariant::PiCmo => Ok(shidoku_problem(inst, true)),
        other => Err(ExperimentError::UnsupportedMethod(other)),
    }
}

/// Rounds every cell to the nearest of `{1, 2, 3, 4}`.
pub fn round_grid(x: &DVector<f64>) -> Grid {
    let p = project_shidoku(x);
    let mut g = [[0u8; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            g[r][c] = p[cell(r, c)] as u8;
        }
    }
    g
}

pub fn grid_to_vector(g: &Grid) -> DVector<f64> {
    DVector::from_fn(16, |k, _| g[k / 4][k % 4] as f64)
}

/// Every row, column and corner block is a permutation of `1..=4`, and all givens are respected.
pub fn is_valid_solution(grid: &Grid, givens: &[(usize, usize, u8)]) -> bool {
    let is_perm = |vals: [u8; 4]| {
        let mut seen = [false; 5];
        vals.iter()
            .all(|&v| (1..=4).contains(&v) && !std::mem::replace(&mut seen[v as usize], true))
    };
    let rows = (0..4).all(|r| is_perm(grid[r]));
    let cols = (0..4).all(|c| is_perm([grid[0][c], grid[1][c], grid[2][c], grid[3][c]]));
    let blocks = [(0, 0), (0, 2), (2, 0), (2, 2)].iter().all(|&(r, c)| {
        is_perm([
            grid[r][c],
            grid[r][c + 1],
            grid[r + 1][c],
            grid[r + 1][c + 1],
        ])
    });
    let givens_ok = givens.iter().all(|&(r, c, v)| grid[r][c] == v);
    rows && cols && blocks && givens_ok
}

/// Random initial cells `|N(0, 1)|` for Monte Carlo run `run` of `seed`.
pub fn initial_cells(seed: u64, run: u64) -> DVector<f64> {
    let mut rng = seeded_rng(seed, run);
    DVector::from_fn(16, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z.abs()
    })
}

#[derive(Debug, Clone)]
pub struct ShidokuRun {
    pub index: usize,
    pub success: bool,
    pub grid: Option<Grid>,
    pub final_time: f64,
    pub stop: Option<StopReason>,
    pub stats: IntegrationStats,
    /// Integrator failure message, if the run aborted.
    pub failure: Option<String>,
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone)]
pub struct ShidokuReport {
    pub method: DynamicsVariant,
    pub gains: GainSet,
    pub n_runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean accepted steps over all runs.
    pub mean_steps: f64,
    pub runs: Vec<ShidokuRun>,
}

/// Simulates from the given cells with zero multipliers (and `α = 0`).
pub fn run_shidoku_from(
    inst: &ShidokuInstance,
    problem: &CompositeProblem,
    method: DynamicsVariant,
    gains: GainSet,
    x0: DVector<f64>,
    cfg: &IntegratorConfig,
    index: usize,
) -> Result<ShidokuRun, ExperimentError> {
    let cl = ClosedLoop::new(problem, method, gains)?;
    let mut s0 = SystemState::zeros(&cl.layout());
    s0.x = x0;
    Ok(match simulate(&cl, &s0, cfg) {
        Ok(traj) => {
            let grid = round_grid(&traj.final_state().x);
            ShidokuRun {
                index,
                success: is_valid_solution(&grid, &inst.givens),
                grid: Some(grid),
                final_time: traj.final_time(),
                stop: Some(traj.stop),
                stats: traj.stats,
                failure: None,
                trajectory: Some(traj),
            }
        }
        Err(e) => ShidokuRun {
            index,
            success: false,
            grid: None,
            final_time: f64::NAN,
            stop: None,
            stats: IntegrationStats::default(),
            failure: Some(e.to_string()),
            trajectory: None,
        },
    })
}

/// `n_runs` independent solves from `|N(0,1)|` cells. Runs execute in
/// parallel and are reported in index order; failures count as misses.
pub fn run_shidoku(
    method: DynamicsVariant,
    gains: GainSet,
    n_runs: usize,
    seed: u64,
    cfg: &IntegratorConfig,
) -> Result<ShidokuReport, ExperimentError> {
    if !Experiment::Shidoku.methods().contains(&method) {
        return Err(ExperimentError::UnsupportedMethod(method));
    }
    let inst = ShidokuInstance::default();
    let problem = problem_for(&inst, method)?;
    ClosedLoop::new(&problem, method, gains)?;
    let runs: Vec<ShidokuRun> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            run_shidoku_from(
                &inst,
                &problem,
                method,
                gains,
                initial_cells(seed, i as u64),
                cfg,
                i,
            )
        })
        .collect::<Result<_, _>>()?;
    let successes = runs.iter().filter(|r| r.success).count();
    let mean_steps = if n_runs == 0 {
        0.0
    } else {
        runs.iter().map(|r| r.stats.accepted as f64).sum::<f64>() / n_runs as f64
    };
    Ok(ShidokuReport {
        method,
        gains,
        n_runs,
        successes,
        success_rate: if n_runs == 0 {
            0.0
        } else {
            successes as f64 / n_runs as f64
        },
        mean_steps,
        runs,
    })
}
