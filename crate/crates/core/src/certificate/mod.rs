//! Stability and performance certificates.
//!
//! [`certify`] chains the checks in dependency order: ideal-system Lyapunov
//! functions, reference-system Lyapunov functions over the Θ×Ω vertices,
//! dwell time, the error-dynamics constants, reference bounds ρ_r/ρ_ur and
//! finally the Ts condition with a self-consistent δ0.

pub mod analysis;
pub mod bounds;
pub mod lyapunov;
pub mod report;

use serde::{Serialize, Serializer};

use crate::controller::FilterRealization;
use crate::error::Result;
use crate::linalg::{self, Matrix, Vector};
use crate::model::{uncertainty_bounds, ModeSet, SwitchingSignal, UncertaintyBounds, UncertaintySets};
use crate::reference::{build_closedloop_matrices, reference_initial};

pub use analysis::{analysis_matrices, compute_g_case, compute_nu, AnalysisMatrices, GammaBound};
pub use bounds::{alpha_bars, max_ts, ts_condition, AlphaBars, BoundInputs, TsCondition};
pub use lyapunov::{dwell_time, extract_q, find_mode_lyapunov, verify_reference_lyapunov, SchurParts};
pub use report::{theorem1_report, Observed, Theorem1Report};

pub(crate) fn ser_matrices<S: Serializer>(ms: &[Matrix], s: S) -> std::result::Result<S::Ok, S::Error> {
    let all: Vec<Vec<Vec<f64>>> = ms
        .iter()
        .map(|m| (0..m.nrows()).map(|r| m.row(r).iter().cloned().collect()).collect())
        .collect();
    all.serialize(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub a_star: f64,
    pub a: f64,
    /// Fixed δ0; `None` selects the smallest self-consistent value (with 5% margin).
    pub delta0: Option<f64>,
    /// Use `max ‖I - ω‖` instead of `max |trace(ω - I)|` as D_ω.
    pub strict_norm_bounds: bool,
    /// Upper end of the Ts search range reported as `max_Ts`.
    pub ts_search_max: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { a_star: 0.5, a: 0.25, delta0: None, strict_norm_bounds: false, ts_search_max: 0.1 }
    }
}

/// Everything the certificate needs from a scenario.
#[derive(Debug, Clone)]
pub struct CertifyInput<'a> {
    pub modes: &'a ModeSet,
    pub sets: &'a UncertaintySets,
    pub filter: &'a FilterRealization,
    pub ts: f64,
    pub signal: &'a SwitchingSignal,
    pub x0: &'a Vector,
    /// `sup_t ‖r(t)‖`
    pub r_max: f64,
    /// Empirical `(ρ_r, ρ_ur)` from a vertex sweep, margin already applied.
    pub empirical_rho: Option<(f64, f64)>,
    pub options: CertifyOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdealSection {
    #[serde(rename = "P_list", serialize_with = "ser_matrices")]
    pub p_list: Vec<Matrix>,
    pub lambda: f64,
    pub mu: f64,
    pub tau_d: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceSection {
    #[serde(rename = "Pbar_list", serialize_with = "ser_matrices")]
    pub pbar_list: Vec<Matrix>,
    pub lambda: f64,
    pub mu: f64,
    pub tau_d: f64,
    pub worst_vertices: Vec<lyapunov::VertexResult>,
}

/// All constants from λ onwards. Non-finite values serialize as `null`.
#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct Constants {
    pub lambda: f64,
    pub mu: f64,
    pub a_star: f64,
    pub a: f64,
    pub tau_d: f64,
    pub tau_d_required: f64,
    pub min_switch_gap: Option<f64>,
    pub Ts: f64,
    pub alpha_bars: AlphaBars,
    pub D_theta: f64,
    pub D_d: f64,
    pub D_omega: f64,
    pub D_omega_norm: f64,
    pub D_omega_used: f64,
    pub rho_r: f64,
    pub rho_ur: f64,
    pub rho_r_empirical: Option<f64>,
    pub rho_ur_empirical: Option<f64>,
    pub rho_r_analytic: Option<f64>,
    pub rho_ur_analytic: Option<f64>,
    pub rho_source: String,
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub rho: f64,
    pub rho_u: f64,
    pub ts_condition: TsCondition,
    /// `ᾱ3 (D_ω ρ_u + D_θ ρ + D_d)`: the sample-instant bound on ‖x̃‖ and the re-initialization budget.
    pub sample_bound: f64,
    pub nu: f64,
    pub g: f64,
    pub kappa_gamma: f64,
    pub kappa_gamma_validated: f64,
    pub kappa_gamma_used: f64,
    pub Lambda_Fbar: f64,
    pub delta1_over_delta0: f64,
    pub delta2_over_delta0: f64,
    #[serde(rename = "Q_list", serialize_with = "ser_matrices")]
    pub q_list: Vec<Matrix>,
    #[serde(rename = "R_list", serialize_with = "ser_matrices")]
    pub r_list: Vec<Matrix>,
    #[serde(rename = "S_list", serialize_with = "ser_matrices")]
    pub s_list: Vec<Matrix>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub feasible: bool,
    /// Violated conditions, first failure first.
    pub violations: Vec<String>,
    pub notes: Vec<String>,
    pub ideal: Option<IdealSection>,
    pub reference: Option<ReferenceSection>,
    pub constants: Option<Constants>,
}

impl CertificateReport {
    pub fn first_violation(&self) -> Option<&str> {
        self.violations.first().map(|s| s.as_str())
    }

    fn stop(violations: Vec<String>, notes: Vec<String>, ideal: Option<IdealSection>, reference: Option<ReferenceSection>) -> Self {
        Self { feasible: false, violations, notes, ideal, reference, constants: None }
    }
}

/// Ts-independent part of the certificate; reused by Ts sweeps.
#[derive(Debug, Clone)]
pub struct CertificateCore {
    pub bounds: UncertaintyBounds,
    pub d_omega_used: f64,
    pub c1: f64,
    pub c2: f64,
    pub rho_r: f64,
    pub rho_ur: f64,
    pub delta0_fixed: Option<f64>,
}

/// δ's and the Ts condition at one sampling time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TsEvaluation {
    pub ts: f64,
    pub alpha_bars: AlphaBars,
    pub lhs: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub rho: f64,
    pub rho_u: f64,
    pub satisfied: bool,
    pub self_consistent: bool,
}

/// Floor for δ0 when every uncertainty bound is zero and any positive δ0 works.
pub const DELTA0_FLOOR: f64 = 1e-6;
/// Margin applied to the smallest self-consistent δ0.
pub const DELTA0_MARGIN: f64 = 1.05;

impl CertificateCore {
    /// Coefficient of δ0 inside the Ts condition: `D_ω c2 + D_θ c1`.
    fn feedback(&self) -> f64 {
        self.d_omega_used * self.c2 + self.bounds.d_theta * self.c1
    }

    fn base_drive(&self) -> f64 {
        self.d_omega_used * self.rho_ur + self.bounds.d_theta * self.rho_r + self.bounds.d_d
    }

    pub fn evaluate_at(&self, ab: AlphaBars, ts: f64) -> TsEvaluation {
        let k = ab.lemma_gain();
        let (delta0, self_consistent) = match self.delta0_fixed {
            Some(d) => (d, true),
            None => {
                let denom = 1.0 - k * self.feedback();
                if denom <= 0.0 {
                    (f64::INFINITY, false)
                } else {
                    let d = DELTA0_MARGIN * k * self.base_drive() / denom;
                    (if d > 0.0 { d } else { DELTA0_FLOOR }, true)
                }
            }
        };
        let delta1 = self.c1 * delta0;
        let delta2 = self.c2 * delta0;
        let rho = self.rho_r + delta1;
        let rho_u = self.rho_ur + delta2;
        let inputs = BoundInputs {
            d_omega: self.d_omega_used,
            d_theta: self.bounds.d_theta,
            d_d: self.bounds.d_d,
            rho,
            rho_u,
        };
        let lhs = bounds::ts_lhs(&ab, &inputs);
        TsEvaluation {
            ts,
            alpha_bars: ab,
            lhs,
            delta0,
            delta1,
            delta2,
            rho,
            rho_u,
            satisfied: self_consistent && lhs < delta0,
            self_consistent,
        }
    }

    pub fn evaluate(&self, modes: &ModeSet, ts: f64) -> Result<TsEvaluation> {
        Ok(self.evaluate_at(alpha_bars(modes, ts)?, ts))
    }

    /// Largest Ts (up to `ts_hi`) at which the condition can hold.
    pub fn max_ts(&self, modes: &ModeSet, eval: &TsEvaluation, ts_hi: f64) -> Result<f64> {
        match self.delta0_fixed {
            Some(d0) => {
                let drive = BoundInputs {
                    d_omega: self.d_omega_used,
                    d_theta: self.bounds.d_theta,
                    d_d: self.bounds.d_d,
                    rho: eval.rho,
                    rho_u: eval.rho_u,
                }
                .drive();
                bounds::max_ts_by(modes, ts_hi, |k| k * drive < d0)
            }
            None => {
                let fb = self.feedback();
                bounds::max_ts_by(modes, ts_hi, |k| k * fb < 1.0)
            }
        }
    }
}

/// Analytic reference bounds from the switched Lyapunov ellipsoid.
fn analytic_rho(
    input: &CertifyInput<'_>,
    pbar: &[Matrix],
    lambda: f64,
    mu: f64,
    dd: f64,
) -> Result<Option<(f64, f64)>> {
    let (n, m, nf) = (input.modes.n(), input.modes.m(), input.filter.nf());
    let xbar0 = reference_initial(input.x0, nf, m);
    let mut w0: f64 = 0.0;
    let mut s: f64 = 0.0;
    let mut gx: f64 = 0.0;
    let mut gu: f64 = 0.0;
    for (i, mode) in input.modes.iter().enumerate() {
        let p = &pbar[i];
        let half = linalg::sqrtm_psd(p);
        let cl = build_closedloop_matrices(mode, &input.sets.theta_centroid(), &input.sets.omega_centroid(), input.filter)?;
        s = s.max(linalg::norm2(&(&half * &cl.bbar)) * dd + linalg::norm2(&(&half * &cl.ebar)) * input.r_max);
        w0 = w0.max((xbar0.transpose() * p * &xbar0)[(0, 0)].max(0.0).sqrt());
        let inv_half = half
            .clone()
            .lu()
            .solve(&Matrix::identity(p.nrows(), p.nrows()))
            .ok_or_else(|| crate::Error::NotSpd("P̄".into()))?;
        gx = gx.max(linalg::norm2(&inv_half.view((0, 0), (n, p.nrows())).into_owned()));
        gu = gu.max(linalg::norm2(&(&cl.cbar * &inv_half)));
    }
    let c = 2.0 * s / lambda;
    let u = match input.signal.min_gap() {
        None => w0.max(c),
        Some(tau) => {
            let q = (-lambda * tau / 2.0).exp();
            let sq = mu.sqrt();
            if sq * q >= 1.0 {
                return Ok(None);
            }
            sq * w0.max(c * (1.0 - q) / (1.0 - sq * q))
        }
    };
    Ok(Some((gx * u, gu * u)))
}

/// Runs the full certificate chain.
pub fn certify(input: &CertifyInput<'_>) -> Result<CertificateReport> {
    let opts = input.options;
    let modes = input.modes;
    input.sets.check_dims(modes.n(), modes.m())?;
    let mut violations = Vec::new();
    let mut notes = vec!["the D_sigma term of the Ts condition is evaluated with D_d".to_string()];

    // Ideal-system certificate.
    let ideal = match find_mode_lyapunov(modes, None) {
        Ok(c) => c,
        Err(e) => {
            violations.push(format!("ideal Lyapunov: {e}"));
            return Ok(CertificateReport::stop(violations, notes, None, None));
        }
    };
    let ideal_tau = dwell_time(ideal.lambda, ideal.mu, opts.a_star)?;
    let ideal_sec = IdealSection { p_list: ideal.p.clone(), lambda: ideal.lambda, mu: ideal.mu, tau_d: ideal_tau };

    // Reference-system certificate.
    let refl = verify_reference_lyapunov(modes, input.sets, input.filter, None)?;
    if !refl.feasible {
        violations.push(refl.violation.clone().unwrap_or_else(|| "reference Lyapunov".into()));
        return Ok(CertificateReport::stop(violations, notes, Some(ideal_sec), None));
    }
    let tau_d = dwell_time(refl.lambda, refl.mu, opts.a_star)?;
    let ref_sec = ReferenceSection {
        pbar_list: refl.pbar.clone(),
        lambda: refl.lambda,
        mu: refl.mu,
        tau_d,
        worst_vertices: refl.per_mode.clone(),
    };
    let tau_required = tau_d.max(ideal_tau);
    let gap = input.signal.min_gap();
    if let Some(g) = gap {
        if g < tau_required * (1.0 - 1e-12) {
            violations.push(format!("dwell time: switching gap {g:.4} s is below the required {tau_required:.4} s"));
        }
    }

    // Error-dynamics constants.
    let (lambda, mu) = (refl.lambda, refl.mu);
    let n = modes.n();
    let mut q_list = Vec::new();
    let mut r_list = Vec::new();
    let mut s_list = Vec::new();
    for p in &refl.pbar {
        let parts = extract_q(p, n)?;
        q_list.push(parts.q);
        r_list.push(parts.r);
        s_list.push(parts.s);
    }
    let mut cases: Vec<(usize, AnalysisMatrices)> = Vec::new();
    for (i, mode) in modes.iter().enumerate() {
        for omega in &input.sets.omega {
            cases.push((i, analysis_matrices(mode, omega, input.filter)?));
        }
    }
    let nu_cases: Vec<(&Matrix, &Matrix, &Matrix)> =
        cases.iter().map(|(i, am)| (&refl.pbar[*i], &q_list[*i], &am.hbar)).collect();
    let nu = compute_nu(&nu_cases, lambda, opts.a)?;
    let mut g: f64 = 0.0;
    for (i, am) in &cases {
        match compute_g_case(&refl.pbar[*i], &q_list[*i], am, lambda, opts.a, nu) {
            Ok(v) => g = g.max(v),
            Err(e) => {
                violations.insert(0, format!("g: {e}"));
                return Ok(CertificateReport::stop(violations, notes, Some(ideal_sec), Some(ref_sec)));
            }
        }
    }
    let ams: Vec<AnalysisMatrices> = cases.into_iter().map(|c| c.1).collect();
    let gamma = analysis::gamma_bound(&ams)?;
    if gamma.kappa_validated > gamma.kappa_literal {
        notes.push(format!(
            "validated kappa_gamma {:.4e} exceeds the literal {:.4e}; the validated value is used",
            gamma.kappa_validated, gamma.kappa_literal
        ));
    }
    let ratios = analysis::delta_ratios(
        mu,
        opts.a,
        opts.a_star,
        g,
        lambda,
        gamma.kappa_used(),
        nu,
        &ams,
        &input.filter.df,
    );
    if ratios.mu_one_substituted {
        notes.push(format!(
            "mu = 1: the switching factor is evaluated at mu = 1 + {:e}",
            analysis::MU_ONE_OFFSET
        ));
    }

    // Reference bounds.
    let ub = uncertainty_bounds(input.sets);
    let d_omega_used = ub.omega_bound(opts.strict_norm_bounds);
    if !opts.strict_norm_bounds && ub.d_omega_norm > ub.d_omega {
        notes.push(format!(
            "D_omega (trace) = {:.4e} is below max ||I - omega|| = {:.4e}; pass --strict-norm-bounds to use the latter",
            ub.d_omega, ub.d_omega_norm
        ));
    }
    let analytic = analytic_rho(input, &refl.pbar, lambda, mu, ub.d_d)?;
    let (rho_r, rho_ur, source) = match (analytic, input.empirical_rho) {
        (Some((a, b)), _) => (a, b, "analytic"),
        (None, Some((a, b))) => (a, b, "empirical"),
        (None, None) => {
            violations.push("reference bounds: neither an analytic nor an empirical rho_r is available".into());
            (f64::INFINITY, f64::INFINITY, "none")
        }
    };
    let core = CertificateCore {
        bounds: ub,
        d_omega_used,
        c1: ratios.c1,
        c2: ratios.c2,
        rho_r,
        rho_ur,
        delta0_fixed: opts.delta0,
    };
    let eval = core.evaluate(modes, input.ts)?;
    let max_ts = core.max_ts(modes, &eval, opts.ts_search_max.max(input.ts))?;
    if !eval.self_consistent {
        violations.push(format!(
            "Ts condition: no self-consistent delta0 exists at Ts = {} s (largest admissible Ts is {max_ts:.4e} s)",
            input.ts
        ));
    } else if !eval.satisfied {
        violations.push(format!(
            "Ts condition: lhs {:.4e} >= delta0 {:.4e} at Ts = {} s",
            eval.lhs, eval.delta0, input.ts
        ));
    }
    let sample_bound = eval.alpha_bars.alpha3
        * BoundInputs { d_omega: d_omega_used, d_theta: ub.d_theta, d_d: ub.d_d, rho: eval.rho, rho_u: eval.rho_u }
            .drive();

    let constants = Constants {
        lambda,
        mu,
        a_star: opts.a_star,
        a: opts.a,
        tau_d,
        tau_d_required: tau_required,
        min_switch_gap: gap,
        Ts: input.ts,
        alpha_bars: eval.alpha_bars,
        D_theta: ub.d_theta,
        D_d: ub.d_d,
        D_omega: ub.d_omega,
        D_omega_norm: ub.d_omega_norm,
        D_omega_used: d_omega_used,
        rho_r,
        rho_ur,
        rho_r_empirical: input.empirical_rho.map(|p| p.0),
        rho_ur_empirical: input.empirical_rho.map(|p| p.1),
        rho_r_analytic: analytic.map(|p| p.0),
        rho_ur_analytic: analytic.map(|p| p.1),
        rho_source: source.into(),
        delta0: eval.delta0,
        delta1: eval.delta1,
        delta2: eval.delta2,
        rho: eval.rho,
        rho_u: eval.rho_u,
        ts_condition: TsCondition { satisfied: eval.satisfied, lhs: eval.lhs, max_ts },
        sample_bound,
        nu,
        g,
        kappa_gamma: gamma.kappa_literal,
        kappa_gamma_validated: gamma.kappa_validated,
        kappa_gamma_used: gamma.kappa_used(),
        Lambda_Fbar: gamma.lambda_fbar,
        delta1_over_delta0: ratios.c1,
        delta2_over_delta0: ratios.c2,
        q_list,
        r_list,
        s_list,
    };
    Ok(CertificateReport {
        feasible: violations.is_empty(),
        violations,
        notes,
        ideal: Some(ideal_sec),
        reference: Some(ref_sec),
        constants: Some(constants),
    })
}

/// Ts-independent constants for sweeps; `None` when the chain stops early.
pub fn certificate_core(input: &CertifyInput<'_>, report: &CertificateReport) -> Option<CertificateCore> {
    let c = report.constants.as_ref()?;
    Some(CertificateCore {
        bounds: UncertaintyBounds { d_theta: c.D_theta, d_d: c.D_d, d_omega: c.D_omega, d_omega_norm: c.D_omega_norm },
        d_omega_used: c.D_omega_used,
        c1: c.delta1_over_delta0,
        c2: c.delta2_over_delta0,
        rho_r: c.rho_r,
        rho_ur: c.rho_ur,
        delta0_fixed: input.options.delta0,
    })
}
