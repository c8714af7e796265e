//! Offline training: alternating updates of the augmented Lagrangian over
//! view weights, projections, rotation, consensus representation, binary
//! codes, low-rank bases and the rotation splitting variables.
//!
//! The rating matrix only enters through its rank-`o` SVD `S ≈ P Σ Q`
//! (`P` n×o, `Q` o×m). Every product touching it is grouped so that the
//! largest intermediate is r×n, r×m or r×o.

mod model_io;

pub use model_io::{decode_model, encode_model, read_model, write_model, MODEL_FORMAT_VERSION};

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, EncoderSet, FeatureBlock};
use crate::fusion::{self, FusionState};
use crate::numerics::{self, orthogonal_procrustes, truncated_svd_with, CsrMatrix, NumericsError, SvdOptions, TruncatedSvd};
use crate::rng;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid hyperparameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training diverged at iteration {iteration}: non-finite values after the {step} update")]
    Diverged { step: &'static str, iteration: usize },
    #[error("singular {0} system")]
    Singular(&'static str),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    /// Weight of the rating reconstruction term.
    pub alpha: f64,
    /// Weight of the binary quantization term.
    pub beta: f64,
    /// Weight of the low-rank projection penalty.
    pub gamma: f64,
    /// Augmented Lagrangian penalty on `R = Z_R`.
    pub lambda: f64,
    /// Code length r.
    pub bits: usize,
    /// Rank budget k; `r − k` trailing directions are penalized. Defaults to r/2.
    pub rank_budget: Option<usize>,
    /// Rank o of the truncated SVD of S. Defaults to min(128, n, m).
    pub svd_rank: Option<usize>,
    pub max_iters: usize,
    /// Relative objective change below which training stops.
    pub tol: f64,
    /// Ridge ε added to X Xᵀ and H Hᵀ before inversion.
    pub ridge: f64,
    pub seed: u64,
    /// Map ratings affinely onto [−1, 1] before the SVD.
    pub normalize_ratings: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 1e3,
            beta: 10.0,
            gamma: 1.0,
            lambda: 1.0,
            bits: 32,
            rank_budget: None,
            svd_rank: None,
            max_iters: 50,
            tol: 1e-4,
            ridge: 1e-6,
            seed: 0,
            normalize_ratings: false,
        }
    }
}

impl Hyperparams {
    pub fn rank_budget(&self) -> usize {
        self.rank_budget.unwrap_or(self.bits / 2)
    }

    pub fn svd_rank(&self, n: usize, m: usize) -> usize {
        self.svd_rank.unwrap_or_else(|| 128.min(n.min(m)))
    }

    /// Copy with the data-dependent defaults filled in.
    pub fn resolved(&self, n: usize, m: usize) -> Hyperparams {
        Hyperparams { rank_budget: Some(self.rank_budget()), svd_rank: Some(self.svd_rank(n, m)), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SolverError::Parameter(msg));
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda = {} must be finite and positive", self.lambda));
        }
        if self.bits == 0 {
            return bad("code length must be at least 1".into());
        }
        if self.rank_budget() > self.bits {
            return bad(format!("rank budget {} exceeds code length {}", self.rank_budget(), self.bits));
        }
        if self.svd_rank == Some(0) {
            return bad("SVD rank must be at least 1".into());
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad(format!("tol = {} must be positive", self.tol));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge = {} must be finite and non-negative", self.ridge));
        }
        Ok(())
    }
}

/// Binary codes, rotation and splitting variables, plus the fixed SVD of S.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// User codes, r×n, entries ±1.
    pub b: DMatrix<f64>,
    /// Item codes, r×m, entries ±1.
    pub d: DMatrix<f64>,
    /// Orthogonal rotation, r×r.
    pub r: DMatrix<f64>,
    /// Orthogonal auxiliary copy of R.
    pub z_r: DMatrix<f64>,
    /// Multiplier of the constraint R = Z_R.
    pub g_r: DMatrix<f64>,
    pub lambda: f64,
    pub svd: TruncatedSvd,
}

/// `sgn` with zero mapped to +1.
pub fn sign(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
}

fn check_views(views: &[DMatrix<f64>], n: usize) -> Result<()> {
    if views.is_empty() {
        return Err(SolverError::Dimension("at least one feature view is required".into()));
    }
    for (k, x) in views.iter().enumerate() {
        if x.ncols() != n {
            return Err(SolverError::Dimension(format!("view {k} has {} columns, expected {n} users", x.ncols())));
        }
    }
    Ok(())
}

/// Seeded initialization: Gaussian H, random orthogonal R = Z_R, G_R = 0,
/// uniform μ, zero W, empty V, B = sgn(RH), D = sgn(Gaussian).
pub fn init_state(views: &[DMatrix<f64>], svd: TruncatedSvd, hyper: &Hyperparams) -> Result<(FusionState, SolverState)> {
    hyper.validate()?;
    let (n, m) = svd.source_shape;
    check_views(views, n)?;
    let r = hyper.bits;
    let mut stream = rng::stream(hyper.seed, rng::INIT);
    let h = rng::gaussian_matrix(&mut stream, r, n);
    let rot = rng::gaussian_matrix(&mut stream, r, r).qr().q();
    let d = sign(&rng::gaussian_matrix(&mut stream, r, m));
    let b = sign(&(&rot * &h));
    let fusion = FusionState {
        w: views.iter().map(|x| DMatrix::zeros(r, x.nrows())).collect(),
        v: views.iter().map(|_| DMatrix::zeros(r, 0)).collect(),
        mu: DVector::from_element(views.len(), 1.0 / views.len() as f64),
        h,
        rank_budget: hyper.rank_budget(),
        gamma: hyper.gamma,
    };
    let state = SolverState { b, d, z_r: rot.clone(), r: rot, g_r: DMatrix::zeros(r, r), lambda: hyper.lambda, svd };
    Ok((fusion, state))
}

/// `D Qᵀ Σ`, r×o.
fn items_through_svd(d: &DMatrix<f64>, svd: &TruncatedSvd) -> DMatrix<f64> {
    let mut dq = d * svd.right.transpose();
    for (j, s) in svd.singulars.iter().enumerate() {
        dq.column_mut(j).scale_mut(*s);
    }
    dq
}

/// `D Sᵀ Hᵀ` through the factors, r×r.
fn d_st_ht(d: &DMatrix<f64>, h: &DMatrix<f64>, svd: &TruncatedSvd) -> DMatrix<f64> {
    items_through_svd(d, svd) * (h * &svd.left).transpose()
}

/// Target of the rotation step:
/// `2α D Sᵀ Hᵀ − α D Dᵀ Z_R H Hᵀ + 2β B Hᵀ + λ Z_R − G_R`.
pub fn rotation_target(state: &SolverState, fusion: &FusionState, hyper: &Hyperparams) -> DMatrix<f64> {
    let h = &fusion.h;
    let hht = h * h.transpose();
    let ddt = &state.d * state.d.transpose();
    d_st_ht(&state.d, h, &state.svd) * (2.0 * hyper.alpha) - (ddt * &state.z_r * hht) * hyper.alpha
        + (&state.b * h.transpose()) * (2.0 * hyper.beta)
        + &state.z_r * state.lambda
        - &state.g_r
}

pub fn update_rotation(state: &SolverState, fusion: &FusionState, hyper: &Hyperparams) -> Result<DMatrix<f64>> {
    Ok(orthogonal_procrustes(&rotation_target(state, fusion, hyper))?)
}

fn solve_spd(a: DMatrix<f64>, rhs: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&rhs));
    }
    a.lu().solve(&rhs).ok_or(SolverError::Singular(what))
}

/// Exact minimizer over H:
/// `((Σ1/μ + β) I + α RᵀDDᵀR)⁻¹ (Σ (1/μ) W X + α Rᵀ D Sᵀ + β Rᵀ B)`.
pub fn update_h(state: &SolverState, fusion: &FusionState, views: &[DMatrix<f64>], hyper: &Hyperparams) -> Result<DMatrix<f64>> {
    let r = fusion.bits();
    let inv = fusion::inverse_weights(&fusion.mu);
    let rt = state.r.transpose();
    let rtd = &rt * &state.d;
    let mut system = (&rtd * rtd.transpose()) * hyper.alpha;
    let diag = inv.iter().sum::<f64>() + hyper.beta;
    for i in 0..r {
        system[(i, i)] += diag;
    }
    let mut rhs = (&rt * items_through_svd(&state.d, &state.svd) * state.svd.left.transpose()) * hyper.alpha;
    rhs += (&rt * &state.b) * hyper.beta;
    for ((w, x), i) in fusion.w.iter().zip(views).zip(&inv) {
        rhs += (w * x) * *i;
    }
    solve_spd(system, rhs, "H")
}

pub fn update_b(r: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    sign(&(r * h))
}

/// Argument of the item-code sign: `R (HHᵀ + εI)⁻¹ H P Σ Q`, r×m.
pub fn item_code_argument(r: &DMatrix<f64>, h: &DMatrix<f64>, svd: &TruncatedSvd, ridge: f64) -> Result<DMatrix<f64>> {
    let mut gram = h * h.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let mut core = r * solve_spd(gram, h * &svd.left, "H Hᵀ")?;
    for (j, s) in svd.singulars.iter().enumerate() {
        core.column_mut(j).scale_mut(*s);
    }
    Ok(core * &svd.right)
}

pub fn update_d(r: &DMatrix<f64>, h: &DMatrix<f64>, svd: &TruncatedSvd, ridge: f64) -> Result<DMatrix<f64>> {
    let arg = item_code_argument(r, h, svd, ridge)?;
    if arg.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::Numerics(NumericsError::NonFinite("update_d")));
    }
    Ok(sign(&arg))
}

/// `−α DDᵀ R HHᵀ + λR + G_R`.
pub fn auxiliary_target(state: &SolverState, fusion: &FusionState, hyper: &Hyperparams) -> DMatrix<f64> {
    let h = &fusion.h;
    (&state.d * state.d.transpose() * &state.r * (h * h.transpose())) * (-hyper.alpha) + &state.r * state.lambda + &state.g_r
}

pub fn update_zr(state: &SolverState, fusion: &FusionState, hyper: &Hyperparams) -> Result<DMatrix<f64>> {
    Ok(orthogonal_procrustes(&auxiliary_target(state, fusion, hyper))?)
}

pub fn update_gr(g_r: &DMatrix<f64>, r: &DMatrix<f64>, z_r: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    g_r + (r - z_r) * lambda
}

/// The five weighted terms of the augmented Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// `Σ (1/μ)‖H − WX‖²`.
    pub fusion_fit: f64,
    /// `α‖S − HᵀRᵀD‖²`.
    pub rating: f64,
    /// `β‖B − RH‖²`.
    pub quantization: f64,
    /// `γ Σ tr(VᵀWWᵀV)`.
    pub rank_penalty: f64,
    /// `(λ/2)‖R − Z_R + G_R/λ‖²`.
    pub consensus: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.fusion_fit + self.rating + self.quantization + self.rank_penalty + self.consensus
    }
}

/// Evaluates the objective without forming any n×m matrix; `‖S‖²` is the
/// squared norm of the rank-o factorization.
pub fn objective(state: &SolverState, fusion: &FusionState, views: &[DMatrix<f64>], hyper: &Hyperparams) -> ObjectiveTerms {
    let h = &fusion.h;
    let inv = fusion::inverse_weights(&fusion.mu);
    let fusion_fit = fusion::view_residuals(h, &fusion.w, views).iter().zip(&inv).map(|(res, i)| i * res * res).sum();
    let rank_penalty = hyper.gamma * fusion.w.iter().zip(&fusion.v).map(|(w, v)| fusion::rank_penalty(w, v)).sum::<f64>();

    let cross = (d_st_ht(&state.d, h, &state.svd) * state.r.transpose()).trace();
    let rtd = state.r.transpose() * &state.d;
    let quad = ((&rtd * rtd.transpose()) * (h * h.transpose())).trace();
    let rating = hyper.alpha * (state.svd.frobenius_norm_sq() - 2.0 * cross + quad);

    let quantization = hyper.beta * (&state.b - &state.r * h).norm_squared();
    let consensus = 0.5 * state.lambda * (&state.r - &state.z_r + &state.g_r / state.lambda).norm_squared();
    ObjectiveTerms { fusion_fit, rating, quantization, rank_penalty, consensus }
}

/// Progress of one training iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub terms: ObjectiveTerms,
    /// `|L_prev − L| / |L_prev|`.
    pub relative_change: f64,
    /// `‖R − Z_R‖_F`.
    pub consensus_gap: f64,
    pub seconds: f64,
}

/// Training loop that can be driven one iteration at a time.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    views: &'a [DMatrix<f64>],
    hyper: Hyperparams,
    pub fusion: FusionState,
    pub state: SolverState,
    iteration: usize,
    last_objective: f64,
}

fn finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

impl<'a> Trainer<'a> {
    /// Computes the truncated SVD of `s` and initializes the state.
    pub fn new(s: &CsrMatrix, views: &'a [DMatrix<f64>], hyper: &Hyperparams) -> Result<Self> {
        hyper.validate()?;
        let (n, m) = s.shape();
        let hyper = hyper.resolved(n, m);
        let o = hyper.svd_rank(n, m);
        let opts = SvdOptions { seed: hyper.seed, ..SvdOptions::default() };
        let svd = truncated_svd_with(s, o, &opts)?;
        Self::from_svd(svd, views, &hyper)
    }

    pub fn from_svd(svd: TruncatedSvd, views: &'a [DMatrix<f64>], hyper: &Hyperparams) -> Result<Self> {
        let (n, m) = svd.source_shape;
        let hyper = hyper.resolved(n, m);
        let (fusion, state) = init_state(views, svd, &hyper)?;
        let last_objective = objective(&state, &fusion, views, &hyper).total();
        Ok(Self { views, hyper, fusion, state, iteration: 0, last_objective })
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn objective(&self) -> ObjectiveTerms {
        objective(&self.state, &self.fusion, self.views, &self.hyper)
    }

    fn guard(&self, ok: bool, step: &'static str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(SolverError::Diverged { step, iteration: self.iteration })
        }
    }

    /// One pass over μ, W, R, H, D, B, V, Z_R, G_R.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let start = Instant::now();
        self.iteration += 1;
        let hp = &self.hyper;
        let views = self.views;

        self.fusion.mu = fusion::update_weights(&self.fusion.h, &self.fusion.w, views);
        self.guard(self.fusion.mu.iter().all(|v| v.is_finite()), "mu")?;

        self.fusion.w = fusion::update_projections(&self.fusion.h, views, &self.fusion.mu, &self.fusion.v, hp.gamma, hp.ridge)
            .map_err(|e| self.diverged_or(e, "W"))?;
        self.guard(self.fusion.w.iter().all(finite), "W")?;

        self.state.r = update_rotation(&self.state, &self.fusion, hp).map_err(|e| self.diverged_or_solver(e, "R"))?;

        self.fusion.h = update_h(&self.state, &self.fusion, views, hp)?;
        self.guard(finite(&self.fusion.h), "H")?;

        self.state.d = update_d(&self.state.r, &self.fusion.h, &self.state.svd, hp.ridge).map_err(|e| self.diverged_or_solver(e, "D"))?;
        self.state.b = update_b(&self.state.r, &self.fusion.h);

        self.fusion.v = fusion::update_lowrank_basis(&self.fusion.w, self.fusion.rank_budget).map_err(|e| self.diverged_or(e, "V"))?;

        self.state.z_r = update_zr(&self.state, &self.fusion, hp).map_err(|e| self.diverged_or_solver(e, "Z_R"))?;
        self.state.g_r = update_gr(&self.state.g_r, &self.state.r, &self.state.z_r, self.state.lambda);
        self.guard(finite(&self.state.g_r), "G_R")?;

        let terms = self.objective();
        let value = terms.total();
        self.guard(value.is_finite(), "objective")?;
        let relative_change = if self.last_objective == value {
            0.0
        } else {
            (self.last_objective - value).abs() / self.last_objective.abs().max(f64::MIN_POSITIVE)
        };
        self.last_objective = value;
        Ok(IterationRecord {
            iteration: self.iteration,
            objective: value,
            terms,
            relative_change,
            consensus_gap: (&self.state.r - &self.state.z_r).norm(),
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn diverged_or(&self, e: NumericsError, step: &'static str) -> SolverError {
        match e {
            NumericsError::NonFinite(_) => SolverError::Diverged { step, iteration: self.iteration },
            other => SolverError::Numerics(other),
        }
    }

    fn diverged_or_solver(&self, e: SolverError, step: &'static str) -> SolverError {
        match e {
            SolverError::Numerics(inner) => self.diverged_or(inner, step),
            other => other,
        }
    }

    /// Iterates until the relative change drops below `tol` or `max_iters`
    /// is reached.
    pub fn run(mut self, sink: &mut dyn FnMut(&IterationRecord)) -> Result<TrainOutcome> {
        let mut history = Vec::new();
        while self.iteration < self.hyper.max_iters.max(1) {
            let record = self.step()?;
            sink(&record);
            let done = record.relative_change < self.hyper.tol;
            history.push(record);
            if done {
                break;
            }
        }
        Ok(TrainOutcome { fusion: self.fusion, state: self.state, hyper: self.hyper, history })
    }
}

/// Final variables of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub fusion: FusionState,
    pub state: SolverState,
    /// Hyperparameters with data-dependent defaults resolved.
    pub hyper: Hyperparams,
    pub history: Vec<IterationRecord>,
}

/// Trains on a rating matrix and raw feature views.
pub fn train_matrices(
    s: &CsrMatrix,
    views: &[DMatrix<f64>],
    hyper: &Hyperparams,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<TrainOutcome> {
    Trainer::new(s, views, hyper)?.run(sink)
}

/// Deployable result of training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    /// Per-view projections, r×d_m.
    pub w: Vec<DMatrix<f64>>,
    /// Item codes, r×m.
    pub d: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Training-user codes, r×n.
    pub b: DMatrix<f64>,
    pub hyper: Hyperparams,
    pub dataset: String,
    pub encoders: EncoderSet,
}

impl TrainedModel {
    pub fn bits(&self) -> usize {
        self.r.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_items(&self) -> usize {
        self.d.ncols()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.w.iter().map(DMatrix::ncols).collect()
    }

    /// Cold-start projections `R W⁽ᵐ⁾` into the item-code space.
    pub fn effective_projections(&self) -> Vec<DMatrix<f64>> {
        self.w.iter().map(|w| &self.r * w).collect()
    }

    pub fn check(&self) -> Result<()> {
        let r = self.bits();
        if self.r.ncols() != r || self.d.nrows() != r || self.b.nrows() != r || self.w.iter().any(|w| w.nrows() != r) {
            return Err(SolverError::Dimension("model blocks disagree on the code length".into()));
        }
        if self.encoders.views.len() != self.w.len() || self.encoders.dims() != self.view_dims() {
            return Err(SolverError::Dimension("encoders do not match the projection blocks".into()));
        }
        if self.d.iter().chain(self.b.iter()).any(|&v| v != 1.0 && v != -1.0) {
            return Err(SolverError::Parameter("codes must be ±1".into()));
        }
        Ok(())
    }
}

/// Trains on `dataset`'s ratings and the given feature views.
pub fn train(
    dataset: &Dataset,
    views: &[FeatureBlock],
    encoders: &EncoderSet,
    hyper: &Hyperparams,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<(TrainedModel, Vec<IterationRecord>)> {
    if encoders.dims() != views.iter().map(FeatureBlock::dim).collect::<Vec<_>>() {
        return Err(SolverError::Dimension("encoders do not match the feature views".into()));
    }
    let s = dataset.ratings.to_csr(hyper.normalize_ratings);
    let x: Vec<DMatrix<f64>> = views.iter().map(|v| v.data.clone()).collect();
    let out = train_matrices(&s, &x, hyper, sink)?;
    let model = TrainedModel {
        w: out.fusion.w,
        d: out.state.d,
        r: out.state.r,
        b: out.state.b,
        hyper: out.hyper,
        dataset: dataset.name.clone(),
        encoders: encoders.clone(),
    };
    Ok((model, out.history))
}

/// Largest `‖RᵀR − I‖_F` and `‖Z_RᵀZ_R − I‖_F`.
pub fn orthogonality_violation(state: &SolverState) -> f64 {
    numerics::orthogonality_error(&state.r).max(numerics::orthogonality_error(&state.z_r))
}
