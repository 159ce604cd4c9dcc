//! Observed-versus-guaranteed comparison for the five transient bounds.

use serde::Serialize;

use super::Constants;

/// Simulated sup norms over the horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Observed {
    pub xtilde: f64,
    pub x: f64,
    pub u: f64,
    pub e: f64,
    pub e_u: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub bound: f64,
    pub observed: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    pub guaranteed: bool,
    pub flag: Option<String>,
    pub checks: Vec<BoundCheck>,
}

impl Theorem1Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub const TS_FLAG: &str = "Ts condition unsatisfied; bounds not guaranteed";

/// Compares observed sups against `δ0, ρ, ρ_u, δ1, δ2`. A check passes only
/// with strictly positive margin.
pub fn theorem1_report(constants: &Constants, dwell_ok: bool, observed: &Observed) -> Theorem1Report {
    let guaranteed = constants.ts_condition.satisfied && dwell_ok;
    let flag = if !constants.ts_condition.satisfied {
        Some(TS_FLAG.to_string())
    } else if !dwell_ok {
        Some("dwell time violated; bounds not guaranteed".to_string())
    } else {
        None
    };
    let mk = |name, bound: f64, obs: f64| BoundCheck {
        name,
        bound,
        observed: obs,
        margin: bound - obs,
        pass: bound.is_finite() && obs < bound,
    };
    let checks = vec![
        mk("xtilde < delta0", constants.delta0, observed.xtilde),
        mk("x <= rho", constants.rho, observed.x),
        mk("u <= rho_u", constants.rho_u, observed.u),
        mk("x_ref - x <= delta1", constants.delta1, observed.e),
        mk("u_ref - u <= delta2", constants.delta2, observed.e_u),
    ];
    Theorem1Report { guaranteed, flag, checks }
}
