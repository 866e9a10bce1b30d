//! Fairness-constrained anchor-graph construction.
//!
//! Solves
//!
//! ```text
//! min_Z ‖X − HZ‖²_F + α‖Z‖²_F
//!   s.t. Σ_{j∈C_l} Σ_{i∈G_r} Z_ji = t_lr   for every (cluster l, group r)
//!        every column of Z in the probability simplex
//! ```
//!
//! with ADMM on the split `Z = E`: `Z` carries the simplex constraints and
//! is updated column by column with Frank-Wolfe, `E` carries the block-sum
//! constraints and has a closed-form projection. The dual variable is kept
//! in scaled form (`U = Λ/ρ`).

mod constraints;
mod frank_wolfe;

use ndarray::{Array2, ArrayView2, ShapeBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use constraints::{ConstraintTable, TableSummary};
pub use frank_wolfe::{frank_wolfe, FwParams, FwSolution, FwVariant};

use crate::clustering::AnchorLabeling;
use crate::error::{Error, Result};
use crate::model::{AnchorGraph, AnchorSet, Dataset};
use crate::scalar::Scalar;
use frank_wolfe::FwScratch;

/// ADMM and inner-solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Weight of the `‖Z‖²` regularizer.
    pub alpha: f64,
    /// Initial penalty.
    pub rho0: f64,
    /// Stop when both residuals fall below this.
    pub tol: f64,
    /// Maximum ADMM iterations.
    pub max_iter: usize,
    /// Maximum Frank-Wolfe iterations per column and ADMM iteration.
    pub fw_max_iter: usize,
    pub fw_tol: f64,
    pub fw_curvature_tol: f64,
    /// Frank-Wolfe step rule for the Z-update.
    pub fw_variant: FwVariant,
    /// Penalty growth/shrink factor.
    pub beta: f64,
    /// Residual imbalance that triggers a penalty change.
    pub tau: f64,
    /// Iterations between penalty adjustments.
    pub rho_interval: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 1e-2,
            rho0: 10.0,
            tol: 1e-4,
            max_iter: 500,
            fw_max_iter: 200,
            fw_tol: 1e-8,
            fw_curvature_tol: 1e-12,
            fw_variant: FwVariant::Corrective,
            beta: 2.0,
            tau: 10.0,
            rho_interval: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho0", self.rho0),
            ("tol", self.tol),
            ("fw_tol", self.fw_tol),
            ("fw_curvature_tol", self.fw_curvature_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 1.0 && self.tau > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "beta and tau must exceed 1, got {} and {}",
                self.beta, self.tau
            )));
        }
        if self.max_iter == 0 || self.fw_max_iter == 0 || self.rho_interval == 0 {
            return Err(Error::InvalidArgument(
                "iteration limits and rho_interval must be positive".into(),
            ));
        }
        Ok(())
    }

    fn fw_params<T: Scalar>(&self) -> FwParams<T> {
        FwParams {
            max_iter: self.fw_max_iter,
            gap_tol: T::of(self.fw_tol),
            curvature_tol: T::of(self.fw_curvature_tol),
            variant: self.fw_variant,
        }
    }
}

/// Whether the anchor graph carries the fairness constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    Fair,
    Unconstrained,
}

impl std::str::FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fair" => Ok(GraphMode::Fair),
            "unconstrained" => Ok(GraphMode::Unconstrained),
            _ => Err(Error::Unknown {
                kind: "graph mode",
                name: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for GraphMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphMode::Fair => "fair",
            GraphMode::Unconstrained => "unconstrained",
        })
    }
}

/// ADMM iterate. Matrices are `m × n` in column-major layout.
#[derive(Debug, Clone)]
pub struct AdmmState<T> {
    pub z: Array2<T>,
    pub e: Array2<T>,
    /// Scaled dual `Λ/ρ`.
    pub dual: Array2<T>,
    pub rho: T,
    pub iteration: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    pub objective_trace: Vec<T>,
}

impl<T: Scalar> AdmmState<T> {
    /// `Z = E = 1/m` everywhere, zero dual.
    pub fn initial(m: usize, n: usize, rho: T) -> Self {
        let uniform = Array2::from_elem((m, n).f(), T::one() / T::of_usize(m));
        AdmmState {
            e: uniform.clone(),
            z: uniform,
            dual: Array2::zeros((m, n).f()),
            rho,
            iteration: 0,
            primal_residual: T::zero(),
            dual_residual: T::zero(),
            objective_trace: Vec::new(),
        }
    }
}

impl<T: Scalar> AdmmState<T> {
    /// `Z = E` at the table's evenly spread feasible point, zero dual.
    pub fn feasible(table: &ConstraintTable<T>, rho: T) -> Self {
        let z = table.feasible_point();
        AdmmState {
            e: z.clone(),
            dual: Array2::zeros(z.raw_dim().f()),
            z,
            rho,
            iteration: 0,
            primal_residual: T::zero(),
            dual_residual: T::zero(),
            objective_trace: Vec::new(),
        }
    }
}

/// One line of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub mode: GraphMode,
    pub iterations: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub final_rho: f64,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct GraphSolution<T> {
    pub graph: AnchorGraph<T>,
    pub report: SolveReport,
}

/// Data-dependent pieces shared by every Z-update.
pub struct ReconstructionProblem<T> {
    m: usize,
    d: usize,
    /// Samples, one contiguous `d`-vector each.
    samples: Vec<T>,
    sample_norms: Vec<T>,
    /// Anchors, one contiguous `d`-vector each.
    anchors: Vec<T>,
    gram: Array2<T>,
    alpha: T,
}

impl<T: Scalar> ReconstructionProblem<T> {
    pub fn new(x: ArrayView2<'_, T>, h: ArrayView2<'_, T>, alpha: T) -> Result<Self> {
        let (d, n) = x.dim();
        let (dh, m) = h.dim();
        if d != dh {
            return Err(Error::Shape(format!(
                "samples have {d} features, anchors {dh}"
            )));
        }
        if m == 0 || n == 0 {
            return Err(Error::EmptyDataset("no samples or anchors".into()));
        }
        let samples: Vec<T> = x.t().iter().copied().collect();
        let sample_norms = samples
            .chunks(d)
            .map(|s| s.iter().map(|&v| v * v).sum())
            .collect();
        let anchors: Vec<T> = h.t().iter().copied().collect();
        let gram = h.t().dot(&h);
        Ok(ReconstructionProblem {
            m,
            d,
            samples,
            sample_norms,
            anchors,
            gram,
            alpha,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.sample_norms.len()
    }

    /// `HᵀH`.
    pub fn gram(&self) -> &Array2<T> {
        &self.gram
    }

    /// `Q = 2(HᵀH + (α + ρ/2) I)`.
    pub fn hessian(&self, rho: T) -> Array2<T> {
        let two = T::of(2.0);
        let mut q = &self.gram * two;
        let shift = two * self.alpha + rho;
        for j in 0..self.m {
            q[[j, j]] += shift;
        }
        q
    }

    fn anchor_products(&self, i: usize, out: &mut [T]) {
        let x = &self.samples[i * self.d..(i + 1) * self.d];
        for (o, h) in out.iter_mut().zip(self.anchors.chunks(self.d)) {
            *o = h.iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }

    /// `‖X − HZ‖²_F + α‖Z‖²_F`.
    pub fn objective(&self, z: ArrayView2<'_, T>) -> T {
        let mut hx = vec![T::zero(); self.m];
        let mut total = T::zero();
        for (i, col) in z.columns().into_iter().enumerate() {
            self.anchor_products(i, &mut hx);
            let col: Vec<T> = col.to_vec();
            let mut quad = T::zero();
            for (a, row) in self.gram.rows().into_iter().enumerate() {
                quad += col[a] * row.iter().zip(&col).map(|(&g, &v)| g * v).sum::<T>();
            }
            let cross: T = col.iter().zip(&hx).map(|(&a, &b)| a * b).sum();
            let sq: T = col.iter().map(|&v| v * v).sum();
            total += self.sample_norms[i] - (cross + cross) + quad + self.alpha * sq;
        }
        total
    }
}

/// Z-update: every column solves `min ½ zᵀQz + cᵢᵀz` over the simplex with
/// `cᵢ = −2Hᵀxᵢ − ρ(eᵢ − uᵢ)`, warm-started from the current column.
/// Returns the reconstruction objective at the new `Z`.
pub fn update_z<T: Scalar>(
    state: &mut AdmmState<T>,
    problem: &ReconstructionProblem<T>,
    config: &SolverConfig,
) -> T {
    let rho = state.rho;
    let q = problem.hessian(rho);
    let columns = minimize_columns(
        problem,
        &q,
        rho,
        config,
        state.z.as_slice_memory_order_mut().expect("contiguous Z"),
        Some((
            state.e.as_slice_memory_order().expect("contiguous E"),
            state.dual.as_slice_memory_order().expect("contiguous dual"),
        )),
    );
    columns.into_iter().sum()
}

/// Runs Frank-Wolfe on each column of `z` (column-major, `m` rows) and
/// returns each column's objective contribution.
fn minimize_columns<T: Scalar>(
    problem: &ReconstructionProblem<T>,
    q: &Array2<T>,
    rho: T,
    config: &SolverConfig,
    z: &mut [T],
    consensus: Option<(&[T], &[T])>,
) -> Vec<T> {
    let m = problem.m;
    let params = config.fw_params::<T>();
    let two = T::of(2.0);
    let ridge = two * problem.alpha + rho;
    let q = q.view();
    let d = problem.d;
    let low_rank = d < m;

    let mut objectives = vec![T::zero(); problem.n()];
    z.par_chunks_mut(m)
        .zip(objectives.par_iter_mut())
        .enumerate()
        .for_each_init(
            || {
                let mut scratch = FwScratch::new(m);
                if low_rank {
                    scratch.set_low_rank(&problem.anchors, d, two, ridge);
                }
                (scratch, vec![T::zero(); m], vec![T::zero(); m])
            },
            |(scratch, hx, c), (i, (col, obj))| {
                problem.anchor_products(i, hx);
                match consensus {
                    Some((e, u)) => {
                        let (e, u) = (&e[i * m..(i + 1) * m], &u[i * m..(i + 1) * m]);
                        for j in 0..m {
                            c[j] = -(two * hx[j]) - rho * (e[j] - u[j]);
                        }
                    }
                    None => {
                        for j in 0..m {
                            c[j] = -(two * hx[j]);
                        }
                    }
                }
                let stats = scratch.solve(q, c, col, &params);
                let sq: T = col.iter().map(|&v| v * v).sum();
                let cross: T = col.iter().zip(hx.iter()).map(|(&a, &b)| a * b).sum();
                let gram_quad = (stats.quad - ridge * sq) / two;
                *obj = problem.sample_norms[i] - two * cross + gram_quad + problem.alpha * sq;
            },
        );
    objectives
}

/// Euclidean projection of `r` onto the block-sum constraints: each block
/// `(l, r)` is shifted uniformly so that its sum equals the target.
pub fn project_onto_blocks<T: Scalar>(
    r: ArrayView2<'_, T>,
    table: &ConstraintTable<T>,
) -> Result<Array2<T>> {
    let corrections = block_corrections(&table.block_sums(r), table)?;
    let mut e = Array2::zeros(r.raw_dim().f());
    for ((j, i), out) in e.indexed_iter_mut() {
        let l = table.anchor_cluster()[j];
        let g = table.sample_group()[i];
        *out = r[[j, i]] + corrections[[l, g]];
    }
    Ok(e)
}

fn block_corrections<T: Scalar>(sums: &Array2<T>, table: &ConstraintTable<T>) -> Result<Array2<T>> {
    let targets = table.targets();
    let mut corrections = Array2::zeros(sums.dim());
    for ((l, r), out) in corrections.indexed_iter_mut() {
        let size = table.block_size(l, r);
        if size == 0 {
            if targets[[l, r]] > T::zero() {
                return Err(Error::Infeasible(format!(
                    "block ({l}, {r}) is empty but has target {}",
                    targets[[l, r]]
                )));
            }
            continue;
        }
        *out = (targets[[l, r]] - sums[[l, r]]) / T::of_usize(size);
    }
    Ok(corrections)
}

/// E-update: projects `R = Z + U` onto the block-sum constraints.
pub fn update_e<T: Scalar>(state: &AdmmState<T>, table: &ConstraintTable<T>) -> Result<Array2<T>> {
    let mut r = state.z.clone();
    r += &state.dual;
    project_onto_blocks(r.view(), table)
}

/// Residual-balancing penalty rule.
pub fn update_rho<T: Scalar>(rho: T, primal: T, dual: T, beta: T, tau: T) -> T {
    if primal > tau * dual {
        rho * beta
    } else if dual > tau * primal {
        rho / beta
    } else {
        rho
    }
}

/// Builds the constraint table and solves the fair anchor graph.
pub fn solve<T: Scalar>(
    dataset: &Dataset<T>,
    anchors: &AnchorSet<T>,
    labeling: &AnchorLabeling<T>,
    config: &SolverConfig,
) -> Result<GraphSolution<T>> {
    let table = ConstraintTable::build(labeling, dataset)?;
    let problem = ReconstructionProblem::new(
        dataset.features().view(),
        anchors.features().view(),
        T::of(config.alpha),
    )?;
    solve_with_table(&problem, &table, config)
}

/// ADMM on a prepared problem and constraint table.
pub fn solve_with_table<T: Scalar>(
    problem: &ReconstructionProblem<T>,
    table: &ConstraintTable<T>,
    config: &SolverConfig,
) -> Result<GraphSolution<T>> {
    config.validate()?;
    let (m, n) = (problem.m(), problem.n());
    if table.anchor_cluster().len() != m || table.sample_group().len() != n {
        return Err(Error::Shape(format!(
            "constraint table covers {}x{}, problem is {m}x{n}",
            table.anchor_cluster().len(),
            table.sample_group().len()
        )));
    }
    // feasibility of empty blocks is checked once up front
    block_corrections(&Array2::zeros((table.k(), table.t())), table)?;

    let mut state = AdmmState::initial(m, n, T::of(config.rho0));
    let initial_objective = problem.objective(state.z.view());
    let beta = T::of(config.beta);
    let tau = T::of(config.tau);
    let mut trace = Vec::new();
    let mut converged = false;

    for k in 0..config.max_iter {
        let objective = update_z(&mut state, problem, config);
        let (primal, dual) = fused_e_and_dual_update(&mut state, table)?;
        state.iteration = k + 1;
        state.primal_residual = primal;
        state.dual_residual = dual;
        state.objective_trace.push(objective);
        if !(objective.is_finite() && primal.is_finite() && dual.is_finite()) {
            return Err(Error::Diverged(k + 1));
        }
        trace.push(TraceRecord {
            iteration: k + 1,
            objective: objective.as_f64(),
            primal_residual: primal.as_f64(),
            dual_residual: dual.as_f64(),
            rho: state.rho.as_f64(),
        });
        log::debug!(
            "admm {:>4}: objective {:.6e} r {:.3e} s {:.3e} rho {:.3e}",
            k + 1,
            objective.as_f64(),
            primal.as_f64(),
            dual.as_f64(),
            state.rho.as_f64()
        );
        if primal.max(dual) < T::of(config.tol) {
            converged = true;
            break;
        }
        if k % config.rho_interval == 0 {
            let next = update_rho(state.rho, primal, dual, beta, tau);
            if next != state.rho {
                let scale = state.rho / next;
                state.dual.mapv_inplace(|u| u * scale);
                state.rho = next;
            }
        }
    }

    let report = SolveReport {
        mode: GraphMode::Fair,
        iterations: state.iteration,
        converged,
        initial_objective: initial_objective.as_f64(),
        final_objective: trace
            .last()
            .map_or(initial_objective.as_f64(), |t| t.objective),
        primal_residual: state.primal_residual.as_f64(),
        dual_residual: state.dual_residual.as_f64(),
        final_rho: state.rho.as_f64(),
        trace,
    };
    Ok(GraphSolution {
        graph: AnchorGraph::new(state.z)?,
        report,
    })
}

/// E-update, dual ascent and residuals in one pass over the `m × n` matrices.
fn fused_e_and_dual_update<T: Scalar>(
    state: &mut AdmmState<T>,
    table: &ConstraintTable<T>,
) -> Result<(T, T)> {
    let mut sums = table.block_sums(state.z.view());
    sums += &table.block_sums(state.dual.view());
    let corrections = block_corrections(&sums, table)?;

    let m = state.z.nrows();
    let z = state.z.as_slice_memory_order().expect("contiguous Z");
    let e = state.e.as_slice_memory_order_mut().expect("contiguous E");
    let u = state
        .dual
        .as_slice_memory_order_mut()
        .expect("contiguous dual");
    let clusters = table.anchor_cluster();
    let groups = table.sample_group();

    let mut primal_sq = T::zero();
    let mut dual_sq = T::zero();
    for (i, ((zc, ec), uc)) in z
        .chunks(m)
        .zip(e.chunks_mut(m))
        .zip(u.chunks_mut(m))
        .enumerate()
    {
        let g = groups[i];
        for j in 0..m {
            let next = zc[j] + uc[j] + corrections[[clusters[j], g]];
            let step = next - ec[j];
            let gap = zc[j] - next;
            dual_sq += step * step;
            primal_sq += gap * gap;
            ec[j] = next;
            uc[j] += gap;
        }
    }
    Ok((primal_sq.sqrt(), state.rho * dual_sq.sqrt()))
}

/// Same reconstruction objective without the fairness constraints: one
/// Frank-Wolfe solve per column from the uniform start.
pub fn solve_unconstrained<T: Scalar>(
    dataset: &Dataset<T>,
    anchors: &AnchorSet<T>,
    config: &SolverConfig,
) -> Result<GraphSolution<T>> {
    config.validate()?;
    let problem = ReconstructionProblem::new(
        dataset.features().view(),
        anchors.features().view(),
        T::of(config.alpha),
    )?;
    let (m, n) = (problem.m(), problem.n());
    let mut z = Array2::from_elem((m, n).f(), T::one() / T::of_usize(m));
    let initial_objective = problem.objective(z.view()).as_f64();
    let q = problem.hessian(T::zero());
    let unconstrained = SolverConfig {
        fw_max_iter: config.fw_max_iter * config.max_iter.min(10),
        ..*config
    };
    let objective: T = minimize_columns(
        &problem,
        &q,
        T::zero(),
        &unconstrained,
        z.as_slice_memory_order_mut().expect("contiguous Z"),
        None,
    )
    .into_iter()
    .sum();
    if !objective.is_finite() {
        return Err(Error::Diverged(1));
    }
    let report = SolveReport {
        mode: GraphMode::Unconstrained,
        iterations: 1,
        converged: true,
        initial_objective,
        final_objective: objective.as_f64(),
        primal_residual: 0.0,
        dual_residual: 0.0,
        final_rho: 0.0,
        trace: vec![TraceRecord {
            iteration: 1,
            objective: objective.as_f64(),
            primal_residual: 0.0,
            dual_residual: 0.0,
            rho: 0.0,
        }],
    };
    Ok(GraphSolution {
        graph: AnchorGraph::new(z)?,
        report,
    })
}
