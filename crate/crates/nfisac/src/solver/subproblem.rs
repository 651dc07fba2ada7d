//! Conic formulation of the fixed-selection power/common-rate subproblem.
//!
//! For fixed multipliers the subproblem is convex: minimize `Tr(U⁻¹)` over
//! powers, common-rate shares and the 2×2 auxiliary `U`, subject to the
//! information LMI, the surrogate rate constraints, and the power budget.
//! Two interchangeable backends are provided:
//!
//! * [`Backend::ExactConic`] — the full conic form. `Tr(U⁻¹)` becomes
//!   `Tr(V)` under the LMI `[[V, I],[I, U]] ⪰ 0`; every `√P` term gets a
//!   rotated quadratic-cone epigraph; every `log₂(1+·)` constraint an
//!   exponential-cone epigraph.
//! * [`Backend::Linearized`] — a fallback needing only PSD and linear cones:
//!   the `√P` epigraphs become 2×2 LMIs and the logarithms are replaced by
//!   first-order expansions at the incumbent, which keeps the incumbent
//!   feasible and the outer loop monotone.
//!
//! The information LMI mixes angle terms (~1e8) with distance terms (~1)
//! and echo-energy terms (~1e16), so the blocks are equilibrated by a
//! congruence `diag(w_θ, w_d, w_g, w_g)`. With both auxiliaries rescaled
//! (`U' = W₁UW₁`, `V' = W₁⁻¹VW₁⁻¹`) the epigraph LMI is exactly
//! `[[V', I],[I, U']] ⪰ 0` and the weights move into the objective
//! coefficients, keeping `Tr(V) = Tr(U⁻¹)` exact while every cone variable
//! stays near unity. Powers are optimized in units of the budget.

use crate::channel::SensingChannelBundle;
use crate::linalg::Mat2;
use crate::precoding::PrecoderSet;
use crate::rates::SelectionVector;
use crate::scalar::{conv, Scalar};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT::{self, ExponentialConeT, NonnegativeConeT, PSDTriangleConeT, SecondOrderConeT, ZeroConeT},
};

use super::SurrogateMultipliers;

/// Which convex machinery the subproblem runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    ExactConic,
    Linearized,
}

#[derive(Debug)]
pub(crate) enum SubError {
    Infeasible,
    Numerical(String),
}

/// Per-beam contribution coefficients to the information traces: with
/// `R = Σ_i P_i·p_i·p_iᴴ`, every trace `Tr(G_y R G_xᴴ)` is `Σ_i coef_i·P_i`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BeamFim<S> {
    pub tt: S,
    pub td: S,
    pub dd: S,
    pub gg: S,
    pub et_re: S,
    pub et_im: S,
    pub ed_re: S,
    pub ed_im: S,
}

#[derive(Debug, Clone)]
pub(crate) struct FimCoefficients<S> {
    pub beams: Vec<BeamFim<S>>,
    /// `2|β_s|²T/σ²` applied to the parameter block.
    pub kappa1: S,
    /// `2T/σ²` applied to the coupling and nuisance blocks.
    pub kappa2: S,
}

/// Project every beam through the sensing channel and its Jacobians once per
/// outer solve; each conic assembly then only forms affine sums.
pub(crate) fn fim_coefficients<S: Scalar>(
    bundle: &SensingChannelBundle<S>,
    precoders: &PrecoderSet<S>,
    coherence_len: usize,
    sigma2: S,
) -> FimCoefficients<S> {
    let k = precoders.k_users();
    let gain_conj = bundle.gain.conj();
    let beams = (0..=k)
        .map(|i| {
            let p = precoders.beam(i);
            let gp = bundle.response.matvec(&p);
            let tp = bundle.d_theta.matvec(&p);
            let dp = bundle.d_dist.matvec(&p);
            let e_t = gain_conj * crate::linalg::dot_h(&tp, &gp);
            let e_d = gain_conj * crate::linalg::dot_h(&dp, &gp);
            BeamFim {
                tt: crate::linalg::norm_sqr(&tp),
                td: crate::linalg::dot_h(&tp, &dp).re,
                dd: crate::linalg::norm_sqr(&dp),
                gg: crate::linalg::norm_sqr(&gp),
                et_re: e_t.re,
                et_im: e_t.im,
                ed_re: e_d.re,
                ed_im: e_d.im,
            }
        })
        .collect();
    let two_t = conv::<S>(2.0) * conv::<S>(coherence_len as f64);
    FimCoefficients {
        beams,
        kappa1: two_t * bundle.gain.norm_sqr() / sigma2,
        kappa2: two_t / sigma2,
    }
}

/// Everything the subproblem needs that stays fixed across outer iterations.
#[derive(Debug, Clone)]
pub(crate) struct Workspace<S> {
    pub k: usize,
    pub k1: Vec<usize>,
    pub k2: Vec<usize>,
    pub common_active: bool,
    pub gains: Vec<Vec<S>>,
    pub fim: FimCoefficients<S>,
    pub noise_user: S,
    pub p_max: S,
    pub qos: S,
    /// Congruence weights (w_θ, w_d, w_g) equilibrating the information LMI.
    pub lmi_scale: (S, S, S),
}

impl<S: Scalar> Workspace<S> {
    pub fn new(
        selection: &SelectionVector,
        gains: Vec<Vec<S>>,
        fim: FimCoefficients<S>,
        noise_user: S,
        p_max: S,
        qos: S,
    ) -> Self {
        let k = selection.len();
        // Nominal uniform power sets the equilibration scale.
        let nominal = p_max / conv::<S>((k + 1) as f64);
        let sum = |f: &dyn Fn(&BeamFim<S>) -> S| -> S {
            fim.beams.iter().map(|b| f(b)).fold(S::zero(), |a, v| a + v) * nominal
        };
        let weight = |x: S| -> S {
            if x > S::zero() {
                x.sqrt().recip()
            } else {
                S::one()
            }
        };
        let w_theta = weight(fim.kappa1 * sum(&|b| b.tt));
        let w_dist = weight(fim.kappa1 * sum(&|b| b.dd));
        let w_gain = weight(fim.kappa2 * sum(&|b| b.gg));
        Self {
            k,
            k1: selection.k1_indices(),
            k2: selection.k2_indices(),
            common_active: selection.k1_size() > 0,
            gains,
            fim,
            noise_user,
            p_max,
            qos,
            lmi_scale: (w_theta, w_dist, w_gain),
        }
    }

    #[inline]
    fn idx_p(&self, i: usize) -> usize {
        i
    }
    #[inline]
    fn idx_r(&self, k: usize) -> usize {
        self.k + 1 + k
    }
    #[inline]
    fn idx_u(&self, j: usize) -> usize {
        2 * self.k + 1 + j
    }
    #[inline]
    fn idx_v(&self, j: usize) -> usize {
        2 * self.k + 4 + j
    }
    #[inline]
    fn idx_w(&self, i: usize) -> usize {
        2 * self.k + 7 + i
    }
    fn n_vars(&self) -> usize {
        3 * self.k + 8
    }

    /// Surrogate for the common-stream SINR of user `k` as an affine
    /// expression in (w₀, P_k): `2y·√(g₀P_max)·w₀ − y²·(g_k·P_max·x_k + σ²)`.
    fn common_surrogate(&self, k: usize, y: S) -> Expr<S> {
        let g0 = self.gains[k][0];
        let gk = self.gains[k][k + 1];
        let mut e = Expr::constant(-(y * y) * self.noise_user);
        e.add_term(
            self.idx_w(0),
            conv::<S>(2.0) * y * (g0 * self.p_max).sqrt(),
        );
        e.add_term(self.idx_p(k + 1), -(y * y) * gk * self.p_max);
        e
    }

    /// Surrogate for the private-stream SINR of user `k`; members of the
    /// rate-splitting group see no common-beam interference.
    fn private_surrogate(&self, k: usize, y: S, is_member: bool) -> Expr<S> {
        let g0 = self.gains[k][0];
        let gk = self.gains[k][k + 1];
        let mut e = Expr::constant(-(y * y) * self.noise_user);
        e.add_term(
            self.idx_w(k + 1),
            conv::<S>(2.0) * y * (gk * self.p_max).sqrt(),
        );
        if !is_member {
            e.add_term(self.idx_p(0), -(y * y) * g0 * self.p_max);
        }
        e
    }

    fn eval_surrogate(&self, e: &Expr<S>, x: &[S]) -> S {
        e.eval(x)
    }

    /// Solver-unit point (powers and √-auxiliaries) for a watt allocation.
    fn scaled_point(&self, comm: &[S]) -> Vec<S> {
        let mut x = vec![S::zero(); self.n_vars()];
        for i in 0..=self.k {
            let p = (comm[i] / self.p_max).max(S::zero());
            x[self.idx_p(i)] = p;
            x[self.idx_w(i)] = p.sqrt();
        }
        x
    }
}

/// Converged output of one conic solve (powers back in watts).
#[derive(Debug, Clone)]
pub(crate) struct SubSolution<S> {
    pub comm: Vec<S>,
    pub shares: Vec<S>,
    pub u: Mat2<S>,
    /// `Tr(U⁻¹)` of the returned `U`.
    pub objective: S,
}

/// Affine expression `c + Σ a_j·x_j` feeding one cone slot.
#[derive(Debug, Clone)]
struct Expr<S> {
    c: S,
    terms: Vec<(usize, S)>,
}

impl<S: Scalar> Expr<S> {
    fn constant(c: S) -> Self {
        Self { c, terms: Vec::new() }
    }

    fn var(j: usize) -> Self {
        Self {
            c: S::zero(),
            terms: vec![(j, S::one())],
        }
    }

    fn add_term(&mut self, j: usize, a: S) {
        if a != S::zero() {
            self.terms.push((j, a));
        }
    }

    fn add(&mut self, other: &Expr<S>) {
        self.c = self.c + other.c;
        self.terms.extend_from_slice(&other.terms);
    }

    fn scaled(&self, f: S) -> Self {
        Self {
            c: self.c * f,
            terms: self.terms.iter().map(|&(j, a)| (j, a * f)).collect(),
        }
    }

    fn neg(&self) -> Self {
        self.scaled(-S::one())
    }

    fn eval(&self, x: &[S]) -> S {
        self.terms
            .iter()
            .fold(self.c, |acc, &(j, a)| acc + a * x[j])
    }
}

/// Incremental builder for the Clarabel problem `Ax + s = b, s ∈ K`.
/// Rows are appended in cone order; each helper pushes its slots and the
/// matching cone tag together.
struct ConicBuilder<S> {
    n: usize,
    rows: usize,
    ti: Vec<usize>,
    tj: Vec<usize>,
    tv: Vec<S>,
    b: Vec<S>,
    cones: Vec<SupportedConeT<S>>,
}

impl<S: Scalar> ConicBuilder<S> {
    fn new(n: usize) -> Self {
        Self {
            n,
            rows: 0,
            ti: Vec::new(),
            tj: Vec::new(),
            tv: Vec::new(),
            b: Vec::new(),
            cones: Vec::new(),
        }
    }

    /// One cone slot holding `s_row = expr`.
    fn push_slot(&mut self, e: &Expr<S>) {
        self.b.push(e.c);
        for &(j, a) in &e.terms {
            debug_assert!(j < self.n);
            self.ti.push(self.rows);
            self.tj.push(j);
            self.tv.push(-a);
        }
        self.rows += 1;
    }

    fn zero(&mut self, exprs: &[Expr<S>]) {
        if exprs.is_empty() {
            return;
        }
        for e in exprs {
            self.push_slot(e);
        }
        self.cones.push(ZeroConeT(exprs.len()));
    }

    fn nonneg(&mut self, exprs: &[Expr<S>]) {
        if exprs.is_empty() {
            return;
        }
        for e in exprs {
            self.push_slot(e);
        }
        self.cones.push(NonnegativeConeT(exprs.len()));
    }

    /// Rotated quadratic cone `2·u·v ≥ z²` via the standard second-order
    /// cone map `(u+v, u−v, √2·z)`.
    fn rotated(&mut self, u: &Expr<S>, v: &Expr<S>, z: &Expr<S>) {
        let mut first = u.clone();
        first.add(v);
        let mut second = u.clone();
        second.add(&v.neg());
        let third = z.scaled(S::SQRT_2());
        self.push_slot(&first);
        self.push_slot(&second);
        self.push_slot(&third);
        self.cones.push(SecondOrderConeT(3));
    }

    /// Exponential-cone slot triple: `y·exp(x/y) ≤ z`.
    fn expcone(&mut self, x: &Expr<S>, y: &Expr<S>, z: &Expr<S>) {
        self.push_slot(x);
        self.push_slot(y);
        self.push_slot(z);
        self.cones.push(ExponentialConeT());
    }

    /// PSD cone over the upper triangle (column-major) of a `d×d` symmetric
    /// matrix; off-diagonal slots are scaled by √2 here.
    fn psd(&mut self, d: usize, entries: &[Expr<S>]) {
        debug_assert_eq!(entries.len(), d * (d + 1) / 2);
        let mut idx = 0;
        for col in 0..d {
            for row in 0..=col {
                let e = &entries[idx];
                if row == col {
                    self.push_slot(e);
                } else {
                    self.push_slot(&e.scaled(S::SQRT_2()));
                }
                idx += 1;
            }
        }
        self.cones.push(PSDTriangleConeT(d));
    }

    fn solve(self, q: Vec<S>, tight: bool) -> Result<(Vec<S>, SolverStatus), SubError> {
        let p = CscMatrix::<S>::zeros((self.n, self.n));
        let a = CscMatrix::new_from_triplets(self.rows, self.n, self.ti, self.tj, self.tv);
        // Exact-backend feasibility is driven well below the defaults: the
        // bound trace is dominated by the smallest eigenvalue of the Schur
        // complement, which amplifies LMI residuals by its condition number.
        // A stalled tight solve is retried at stock tolerances before
        // giving up. Cut rounds run at stock tolerances only; their
        // accuracy gate is the rate-violation test in the refinement loop.
        let tiers: &[(f64, f64, f64)] = if tight {
            &[(1e-10, 1e-12, 1e-9), (1e-8, 1e-10, 1e-8)]
        } else {
            &[(1e-8, 1e-10, 1e-8)]
        };
        let (res_gate, gap_gate) = if tight {
            (conv::<S>(1e-8), conv::<S>(1e-4))
        } else {
            (conv::<S>(1e-5), conv::<S>(5e-2))
        };
        let mut last = SubError::Numerical("no solve attempted".into());
        for &(feas, gap_abs, gap_rel) in tiers {
            let settings = DefaultSettings {
                verbose: std::env::var_os("NFISAC_SOLVER_VERBOSE").is_some(),
                max_iter: 300,
                tol_feas: conv::<S>(feas),
                tol_gap_abs: conv::<S>(gap_abs),
                tol_gap_rel: conv::<S>(gap_rel),
                // The 4×4 LMIs are nearly dense; decomposing them buys
                // nothing and degrades accuracy on ill-conditioned instances.
                chordal_decomposition_enable: false,
                ..DefaultSettings::default()
            };
            let mut solver = DefaultSolver::new(&p, &q, &a, &self.b, &self.cones, settings)
                .map_err(|e| SubError::Numerical(format!("problem assembly: {e:?}")))?;
            solver.solve();
            let status = solver.solution.status;
            match status {
                SolverStatus::Solved | SolverStatus::AlmostSolved => {
                    return Ok((solver.solution.x.clone(), status));
                }
                SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                    return Err(SubError::Infeasible);
                }
                SolverStatus::InsufficientProgress
                    if solver.info.res_primal < res_gate && solver.info.gap_rel < gap_gate =>
                {
                    // Stalled chasing the last digits; the iterate is good
                    // enough for the caller to proceed (cut loops keep their
                    // own closure test and re-polish afterwards).
                    return Ok((solver.solution.x.clone(), status));
                }
                other => {
                    if std::env::var_os("NFISAC_SOLVER_DEBUG").is_some() {
                        eprintln!(
                            "solve tier failed: {other:?} (res_primal {:e}, res_dual {:e}, gap_rel {:e})",
                            solver.info.res_primal, solver.info.res_dual, solver.info.gap_rel
                        );
                    }
                    last = SubError::Numerical(format!("solver status {other:?}"));
                }
            }
        }
        Err(last)
    }
}

/// Solve the fixed-multiplier subproblem. `incumbent_comm` (watts, length
/// K+1) anchors the linearized backend; the exact backend ignores it.
pub(crate) fn solve_subproblem<S: Scalar>(
    ws: &Workspace<S>,
    multipliers: &SurrogateMultipliers<S>,
    incumbent_comm: &[S],
    backend: Backend,
) -> Result<SubSolution<S>, SubError> {
    match backend {
        Backend::ExactConic => {
            solve_once(ws, multipliers, &ws.scaled_point(incumbent_comm), None, true)
        }
        Backend::Linearized => solve_with_cuts(ws, multipliers, incumbent_comm),
    }
}

/// Rate-constraint tangent anchors for the linearized backend, per member of
/// the rate-splitting group.
struct CutAnchors<S> {
    common: Vec<Vec<S>>,
    private: Vec<Vec<S>>,
}

/// Linearized backend: each `log₂(1+f)` is the lower envelope of its
/// tangents, so tangents at the incumbent are refined with cuts at the
/// trial points until the true rate constraints hold at the solution.
/// Every subproblem in the loop uses PSD and linear cones only.
fn solve_with_cuts<S: Scalar>(
    ws: &Workspace<S>,
    multipliers: &SurrogateMultipliers<S>,
    incumbent_comm: &[S],
) -> Result<SubSolution<S>, SubError> {
    let ln2 = conv::<S>(std::f64::consts::LN_2);
    let log2_1p = |z: S| (S::one() + z).ln() / ln2;
    // Rate-space closure tolerance, well inside the reporting slack.
    let viol_tol = conv::<S>(1e-8);
    let members = ws.k1.clone();

    let x_hat = ws.scaled_point(incumbent_comm);
    let mut anchors = CutAnchors {
        common: vec![Vec::new(); ws.k],
        private: vec![Vec::new(); ws.k],
    };
    for &j in &members {
        let zc = ws
            .eval_surrogate(&ws.common_surrogate(j, multipliers.y_common[j]), &x_hat)
            .max(S::zero());
        let zp = ws
            .eval_surrogate(&ws.private_surrogate(j, multipliers.y_private[j], true), &x_hat)
            .max(S::zero());
        anchors.common[j].push(zc);
        anchors.private[j].push(zp);
    }

    let mut last = None;
    for _round in 0..30 {
        let sol = solve_once(ws, multipliers, &x_hat, Some(&anchors), false)?;
        let x = ws.scaled_point(&sol.comm);
        let shared: S = members
            .iter()
            .map(|&m| sol.shares[m])
            .fold(S::zero(), |a, b| a + b);
        let mut worst = S::zero();
        for &j in &members {
            let fc = ws
                .eval_surrogate(&ws.common_surrogate(j, multipliers.y_common[j]), &x)
                .max(S::zero());
            let fp = ws
                .eval_surrogate(&ws.private_surrogate(j, multipliers.y_private[j], true), &x)
                .max(S::zero());
            worst = worst.max(shared - log2_1p(fc));
            worst = worst.max(ws.qos - sol.shares[j] - log2_1p(fp));
            push_anchor(&mut anchors.common[j], fc);
            push_anchor(&mut anchors.private[j], fp);
        }
        if worst <= viol_tol {
            // Cuts are closed; polish once at the tight tolerances (the
            // loose rounds may carry a stalled-iterate gap).
            return match solve_once(ws, multipliers, &x_hat, Some(&anchors), true) {
                Ok(polished) => Ok(polished),
                Err(_) => Ok(sol),
            };
        }
        last = Some(sol);
    }
    // Residual violation is inside the reporting slack in practice; return
    // the final iterate rather than failing the outer loop.
    last.ok_or_else(|| SubError::Numerical("cut refinement made no progress".into()))
}

fn push_anchor<S: Scalar>(anchors: &mut Vec<S>, z: S) {
    let fresh = anchors
        .iter()
        .all(|&a| (a - z).abs() > conv::<S>(1e-9) * (S::one() + z.abs()));
    if fresh && anchors.len() < 40 {
        anchors.push(z);
    }
}

fn solve_once<S: Scalar>(
    ws: &Workspace<S>,
    multipliers: &SurrogateMultipliers<S>,
    anchor: &[S],
    cuts: Option<&CutAnchors<S>>,
    tight: bool,
) -> Result<SubSolution<S>, SubError> {
    let k = ws.k;
    let ln2 = conv::<S>(std::f64::consts::LN_2);
    let mut builder = ConicBuilder::<S>::new(ws.n_vars());

    // --- equalities -------------------------------------------------------
    let mut pinned: Vec<Expr<S>> = ws.k2.iter().map(|&j| Expr::var(ws.idx_r(j))).collect();
    if !ws.common_active {
        pinned.push(Expr::var(ws.idx_p(0)));
        pinned.push(Expr::var(ws.idx_w(0)));
    }
    builder.zero(&pinned);

    // --- linear inequalities ----------------------------------------------
    let mut lin: Vec<Expr<S>> = Vec::new();
    for i in 0..=k {
        lin.push(Expr::var(ws.idx_p(i)));
        lin.push(Expr::var(ws.idx_w(i)));
    }
    for &j in &ws.k1 {
        lin.push(Expr::var(ws.idx_r(j)));
    }
    // Power budget: 1 − Σ xᵢ ≥ 0 in budget units.
    let mut budget = Expr::constant(S::one());
    for i in 0..=k {
        budget.add_term(ws.idx_p(i), -S::one());
    }
    lin.push(budget);
    // Outside the group the rate floor is a linear surrogate bound:
    // f_{k,p} ≥ 2^qos − 1 (exact in both backends).
    let qos_floor = (conv::<S>(2.0).powf(ws.qos)) - S::one();
    for &j in &ws.k2 {
        let mut e = ws.private_surrogate(j, multipliers.y_private[j], false);
        e.c = e.c - qos_floor;
        lin.push(e);
    }

    if let Some(anchors) = cuts {
        // Tangent cuts: log₂(1+f) ≤ log₂(1+ẑ) + (f − ẑ)/((1+ẑ)·ln2) for
        // every anchor ẑ; the envelope over anchors under-approximates the
        // feasible set from outside and closes as anchors accumulate.
        let tangent = |e: &Expr<S>, z_hat: S| -> Expr<S> {
            let slope = ((S::one() + z_hat) * ln2).recip();
            let mut t = e.scaled(slope);
            t.c = t.c + (S::one() + z_hat).ln() / ln2 - z_hat * slope;
            t
        };
        for &j in &ws.k1 {
            let f_c = ws.common_surrogate(j, multipliers.y_common[j]);
            for &z in &anchors.common[j] {
                // Σ_{m∈K₁} r_m ≤ tangent of log₂(1 + f_{j,c}) at ẑ.
                let mut row = tangent(&f_c, z);
                for &m in &ws.k1 {
                    row.add_term(ws.idx_r(m), -S::one());
                }
                lin.push(row);
            }
            let f_p = ws.private_surrogate(j, multipliers.y_private[j], true);
            for &z in &anchors.private[j] {
                // r_j + tangent of log₂(1 + f_{j,p}) at ẑ ≥ qos.
                let mut row = tangent(&f_p, z);
                row.add_term(ws.idx_r(j), S::one());
                row.c = row.c - ws.qos;
                lin.push(row);
            }
        }
    }
    builder.nonneg(&lin);

    // --- √P epigraphs -------------------------------------------------------
    let half = Expr::constant(conv::<S>(0.5));
    let one = Expr::constant(S::one());
    for i in 0..=k {
        if i == 0 && !ws.common_active {
            continue;
        }
        let p = Expr::var(ws.idx_p(i));
        let w = Expr::var(ws.idx_w(i));
        if cuts.is_none() {
            // 2·(P)·(1/2) ≥ w².
            builder.rotated(&p, &half, &w);
        } else {
            // [[P, w],[w, 1]] ⪰ 0 keeps the fallback PSD-only.
            builder.psd(2, &[p, w, one.clone()]);
        }
    }

    // --- rate constraints (exact backend) -----------------------------------
    if cuts.is_none() {
        // Surrogate SINRs reach 1e4..1e5; each cone is normalized by its
        // incumbent value λ = 1 + f̂ (exp(x) ≤ z ⟺ exp(x − ln λ) ≤ z/λ) so
        // the nonsymmetric-cone slots stay near unity.
        let unit = Expr::constant(S::one());
        for &j in &ws.k1 {
            let f_c = ws.common_surrogate(j, multipliers.y_common[j]);
            let lam_c = S::one() + ws.eval_surrogate(&f_c, anchor).max(S::zero());
            // exp(ln2·Σ r − ln λ) ≤ (1 + f_{j,c})/λ.
            let mut x = Expr::constant(-lam_c.ln());
            for &m in &ws.k1 {
                x.add_term(ws.idx_r(m), ln2);
            }
            let mut z = f_c.scaled(lam_c.recip());
            z.c = z.c + lam_c.recip();
            builder.expcone(&x, &unit, &z);

            let f_p = ws.private_surrogate(j, multipliers.y_private[j], true);
            let lam_p = S::one() + ws.eval_surrogate(&f_p, anchor).max(S::zero());
            // exp(ln2·(qos − r_j) − ln λ) ≤ (1 + f_{j,p})/λ.
            let mut x = Expr::constant(ln2 * ws.qos - lam_p.ln());
            x.add_term(ws.idx_r(j), -ln2);
            let mut z = f_p.scaled(lam_p.recip());
            z.c = z.c + lam_p.recip();
            builder.expcone(&x, &unit, &z);
        }
    }

    // --- information LMI -----------------------------------------------------
    let (wt, wd, wg) = ws.lmi_scale;
    let sum_expr = |pick: &dyn Fn(&BeamFim<S>) -> S, factor: S| -> Expr<S> {
        let mut e = Expr::constant(S::zero());
        for (i, beam) in ws.fim.beams.iter().enumerate() {
            e.add_term(ws.idx_p(i), pick(beam) * ws.p_max * factor);
        }
        e
    };
    let k1c = ws.fim.kappa1;
    let k2c = ws.fim.kappa2;
    let mut m00 = sum_expr(&|b| b.tt, k1c * wt * wt);
    m00.add_term(ws.idx_u(0), -S::one());
    let mut m01 = sum_expr(&|b| b.td, k1c * wt * wd);
    m01.add_term(ws.idx_u(1), -S::one());
    let mut m11 = sum_expr(&|b| b.dd, k1c * wd * wd);
    m11.add_term(ws.idx_u(2), -S::one());
    let m02 = sum_expr(&|b| b.et_re, k2c * wt * wg);
    let m03 = sum_expr(&|b| -b.et_im, k2c * wt * wg);
    let m12 = sum_expr(&|b| b.ed_re, k2c * wd * wg);
    let m13 = sum_expr(&|b| -b.ed_im, k2c * wd * wg);
    let m22 = sum_expr(&|b| b.gg, k2c * wg * wg);
    let zero = Expr::constant(S::zero());
    // Column-major upper triangle: (00) (01 11) (02 12 22) (03 13 23 33).
    builder.psd(
        4,
        &[
            m00,
            m01,
            m11,
            m02,
            m12,
            m22.clone(),
            m03,
            m13,
            zero.clone(),
            m22,
        ],
    );

    // --- objective LMI -------------------------------------------------------
    // With V' = W₁⁻¹·V·W₁⁻¹ the epigraph LMI collapses to [[V', I],[I, U']]
    // (⟺ V' ⪰ U'⁻¹), keeping every cone variable near unity; the bound scale
    // moves into the objective coefficients: Tr(V) = w_θ²·v'₁₁ + w_d²·v'₂₂.
    builder.psd(
        4,
        &[
            Expr::var(ws.idx_v(0)),
            Expr::var(ws.idx_v(1)),
            Expr::var(ws.idx_v(2)),
            Expr::constant(S::one()),
            zero.clone(),
            Expr::var(ws.idx_u(0)),
            zero.clone(),
            Expr::constant(S::one()),
            Expr::var(ws.idx_u(1)),
            Expr::var(ws.idx_u(2)),
        ],
    );

    let mut q = vec![S::zero(); ws.n_vars()];
    q[ws.idx_v(0)] = wt * wt;
    q[ws.idx_v(2)] = wd * wd;

    let (x, _status) = builder.solve(q, tight)?;

    // --- extraction -----------------------------------------------------------
    let mut comm: Vec<S> = (0..=k)
        .map(|i| (x[ws.idx_p(i)].max(S::zero())) * ws.p_max)
        .collect();
    if !ws.common_active {
        // Pinned by the zero cone; clear the equality residual exactly.
        comm[0] = S::zero();
    }
    let total = comm.iter().fold(S::zero(), |a, &b| a + b);
    if total > ws.p_max {
        // Project solver slack back onto the budget.
        let shrink = ws.p_max / total;
        for p in &mut comm {
            *p = *p * shrink;
        }
    }
    let shares: Vec<S> = (0..k)
        .map(|j| {
            if ws.k1.contains(&j) {
                x[ws.idx_r(j)].max(S::zero())
            } else {
                S::zero()
            }
        })
        .collect();
    let u = Mat2::new(
        x[ws.idx_u(0)] / (wt * wt),
        x[ws.idx_u(1)] / (wt * wd),
        x[ws.idx_u(1)] / (wt * wd),
        x[ws.idx_u(2)] / (wd * wd),
    );
    // The certified objective is Tr(V). Recomputing Tr(U⁻¹) from the
    // returned U is unstable: between V'⁻¹ and the information Schur
    // complement, U is degenerate in directions the objective cannot see.
    let objective = wt * wt * x[ws.idx_v(0)] + wd * wd * x[ws.idx_v(2)];
    if !objective.is_finite() || objective <= S::zero() {
        return Err(SubError::Numerical("non-finite objective".into()));
    }
    Ok(SubSolution {
        comm,
        shares,
        u,
        objective,
    })
}
