//! Cartesian parameter sweeps over random affine contractions.

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::geometry::PNorm;
use crate::oracles::random_affine_instance;
use crate::solver::{banach_iterate, solve_continuous, SolveParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub ds: Vec<usize>,
    pub ps: Vec<PNorm>,
    pub epsilons: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub instances: usize,
    pub seed: u64,
    pub cloud: usize,
    /// `None` means 64 d.
    pub dirs: Option<usize>,
    pub exec: Exec,
}

impl SweepSpec {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &d in &self.ds {
            for &p in &self.ps {
                for &epsilon in &self.epsilons {
                    for &lambda in &self.lambdas {
                        for instance in 0..self.instances {
                            let seed = cell_seed(self.seed, out.len() as u64);
                            out.push(Cell { d, p, epsilon, lambda, instance, seed });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub d: usize,
    pub p: PNorm,
    pub epsilon: f64,
    pub lambda: f64,
    pub instance: usize,
    pub seed: u64,
}

fn cell_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^ (z >> 31)
}

/// One sweep result. Solve failures are recorded in `error` instead of
/// aborting the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub d: usize,
    pub p: PNorm,
    pub epsilon: f64,
    pub lambda: f64,
    pub instance: usize,
    pub seed: u64,
    pub outcome: String,
    pub queries_used: Option<usize>,
    pub bound: Option<u64>,
    pub min_rho: Option<f64>,
    pub residual: Option<f64>,
    /// Distance of the returned point to the instance's known fixpoint.
    pub fixpoint_error: Option<f64>,
    /// Queries plain Banach iteration from the centre needs on the same instance.
    pub banach_queries: Option<usize>,
    pub error: Option<String>,
}

pub fn run_cell(cell: &Cell, cloud: usize, dirs: Option<usize>, exec: Exec) -> BenchRow {
    let mut row = BenchRow {
        d: cell.d,
        p: cell.p,
        epsilon: cell.epsilon,
        lambda: cell.lambda,
        instance: cell.instance,
        seed: cell.seed,
        outcome: "error".into(),
        queries_used: None,
        bound: None,
        min_rho: None,
        residual: None,
        fixpoint_error: None,
        banach_queries: None,
        error: None,
    };
    let inst = match random_affine_instance(cell.d, cell.p, cell.lambda, cell.seed) {
        Ok(i) => i,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let mut params = SolveParams::new(cell.d, cell.p, cell.epsilon, inst.lambda());
    params.cloud = cloud;
    params.dirs = dirs.unwrap_or(params.dirs);
    params.seed = cell.seed;
    params.exec = exec;
    match solve_continuous(&inst, &params) {
        Ok(rep) => {
            row.outcome = if rep.is_fixpoint() { "fixpoint" } else { "budget_exhausted" }.into();
            row.queries_used = Some(rep.queries_used);
            row.bound = Some(rep.theoretical_bound);
            row.min_rho = rep.min_rho;
            row.residual = rep.final_residual();
            if let (crate::solver::Outcome::FoundFixpoint { x, .. }, Some(star)) = (&rep.outcome, inst.known_fixpoint()) {
                row.fixpoint_error = Some(cell.p.dist(x, star));
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.banach_queries = banach_iterate(&inst, &vec![0.5; cell.d], cell.epsilon, inst.lambda(), cell.p)
        .ok()
        .map(|r| r.queries);
    row
}

/// Runs every cell; rows come back in cell order whatever the execution mode.
pub fn run_sweep(spec: &SweepSpec) -> Vec<BenchRow> {
    let cells = spec.cells();
    spec.exec
        .map_tasks(cells.len(), |i| run_cell(&cells[i], spec.cloud, spec.dirs, spec.exec))
}
