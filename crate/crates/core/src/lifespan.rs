//! Blow-up constant, predicted lifespan and the ODE models that produce it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::InitialDataSet;
use crate::error::{Error, Result};
use crate::nullform::{form_value, CoefficientSet, FormKind, SpeedVector};
use crate::quadrature::{golden_max, GaussLegendre};
use crate::radiation::{Radiation, RadiationTable};

/// `Theta_i^i(-c_i, omega)`.
pub fn theta_on_cone(coeffs: &CoefficientSet, speeds: &SpeedVector, i: usize, omega: f64) -> f64 {
    let c = speeds.get(i);
    form_value(FormKind::Theta, coeffs, i, i, [-c, omega.cos(), omega.sin()])
}

/// The quantity maximized in the definition of `H_i`.
pub fn h_density(theta: f64, c: f64, f_rho: f64, f_rhorho: f64) -> f64 {
    -theta * f_rho * f_rhorho / (c * c)
}

/// Where `H_i` is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentH {
    pub component: usize,
    pub h: f64,
    pub rho: f64,
    pub omega: f64,
    /// the best table node sits on `rho_min`, so the table may be too short
    pub at_table_edge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HReport {
    pub h: f64,
    pub components: Vec<ComponentH>,
}

impl HReport {
    pub fn per_component(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.h).collect()
    }

    /// Component attaining the maximum.
    pub fn argmax(&self) -> &ComponentH {
        self.components
            .iter()
            .fold(&self.components[0], |best, c| if c.h > best.h { c } else { best })
    }

    pub fn predict(&self, epsilon: f64) -> Result<LifespanEstimate> {
        let mut est = predict_lifespan(self.h, epsilon)?;
        est.per_component = self.per_component();
        Ok(est)
    }
}

/// Off-grid evaluation used to polish the table maximum.
#[derive(Clone, Copy)]
pub struct Refiner<'a> {
    pub radiation: &'a Radiation,
    pub data: &'a InitialDataSet,
    pub tolerance: f64,
}

/// Computes `H_i` for every table and `H = max_i H_i`.
///
/// Each `H_i` is the best table node, optionally polished by alternating
/// golden-section searches in `rho` and `omega` around it.
pub fn compute_h(
    coeffs: &CoefficientSet,
    speeds: &SpeedVector,
    tables: &[RadiationTable],
    refine: Option<Refiner<'_>>,
) -> Result<HReport> {
    if tables.len() != speeds.m() || coeffs.m() != speeds.m() {
        return Err(Error::domain(format!(
            "need one radiation table per component: {} tables, {} speeds, {} components in coefficients",
            tables.len(),
            speeds.m(),
            coeffs.m()
        )));
    }
    let mut components = Vec::with_capacity(tables.len());
    for (i, table) in tables.iter().enumerate() {
        if table.is_empty() {
            return Err(Error::domain(format!(
                "radiation table for component {} is empty",
                i + 1
            )));
        }
        if table.component != i {
            return Err(Error::domain(format!(
                "table {} holds component {}",
                i + 1,
                table.component + 1
            )));
        }
        let c = speeds.get(i);
        let thetas: Vec<f64> = table
            .omega
            .iter()
            .map(|&w| theta_on_cone(coeffs, speeds, i, w))
            .collect();
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for r in 0..table.n_rho() {
            for (w, &th) in thetas.iter().enumerate() {
                let v = table.at(r, w);
                let d = h_density(th, c, v[1], v[2]);
                if d > best.0 {
                    best = (d, r, w);
                }
            }
        }
        let (mut h, r, w) = best;
        let mut rho = table.rho[r];
        let mut omega = table.omega[w];
        if let (Some(rf), true) = (refine, h > 0.0) {
            let density = |rho: f64, omega: f64| -> f64 {
                let th = theta_on_cone(coeffs, speeds, i, omega);
                if th == 0.0 {
                    return 0.0;
                }
                match rf.radiation.radiation_derivatives(rf.data, i, c, rho, omega) {
                    Ok((d1, d2)) => h_density(th, c, d1, d2),
                    Err(_) => f64::NEG_INFINITY,
                }
            };
            let lo = table.rho[r.saturating_sub(1)];
            let hi = table.rho[(r + 1).min(table.n_rho() - 1)];
            let dw = if table.n_omega() > 1 {
                2.0 * PI / table.n_omega() as f64
            } else {
                0.0
            };
            let tol = rf.tolerance.max(1e-12);
            // coordinate ascent; ridges oblique to the axes need many sweeps
            for _ in 0..200 {
                let before = h;
                let (x, v) = golden_max(lo, hi, tol, |x| density(x, omega));
                if v > h {
                    h = v;
                    rho = x;
                }
                if dw > 0.0 {
                    let (y, v) = golden_max(omega - dw, omega + dw, tol, |y| density(rho, y));
                    if v > h {
                        h = v;
                        omega = y.rem_euclid(2.0 * PI);
                    }
                }
                if dw == 0.0 || h - before <= tol * h.abs().max(1.0) {
                    break;
                }
            }
        }
        if h < 0.0 {
            return Err(Error::numerical(format!(
                "H_{} = {h} is negative; the table does not reach the support edge",
                i + 1
            )));
        }
        components.push(ComponentH {
            component: i,
            h: if h == 0.0 { 0.0 } else { h },
            rho,
            omega,
            at_table_edge: r == 0 && h > 0.0,
        });
    }
    let h = components.iter().map(|c| c.h).fold(0.0, f64::max);
    Ok(HReport { h, components })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifespanEstimate {
    pub h: f64,
    pub per_component: Vec<f64>,
    pub epsilon: f64,
    /// `1/(H eps^2)`, infinite when `H = 0`
    pub predicted_log_horizon: f64,
    /// `exp(1/(H eps^2)) - 1`, saturating to infinity
    pub predicted_t: f64,
}

impl LifespanEstimate {
    pub fn is_unbounded(&self) -> bool {
        self.predicted_log_horizon.is_infinite()
    }
}

/// Lower bound `T` with `eps^2 log(1 + T) = 1/H`.
pub fn predict_lifespan(h: f64, epsilon: f64) -> Result<LifespanEstimate> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::domain(format!("H must be finite and nonnegative, got {h}")));
    }
    let log_horizon = if h == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (h * epsilon * epsilon)
    };
    Ok(LifespanEstimate {
        h,
        per_component: vec![h],
        epsilon,
        predicted_log_horizon: log_horizon,
        predicted_t: log_horizon.exp_m1(),
    })
}

/// `w' = alpha w^2/(1 + t) + q(t)` on `[t0, t1]` with `w(t0) = w0`.
#[derive(Clone)]
pub struct RiccatiProblem<Q> {
    pub alpha: f64,
    pub q: Q,
    pub t0: f64,
    pub w0: f64,
    pub t1: f64,
}

impl RiccatiProblem<fn(f64) -> f64> {
    pub fn unforced(alpha: f64, w0: f64, t0: f64, t1: f64) -> Self {
        fn zero(_: f64) -> f64 {
            0.0
        }
        Self {
            alpha,
            q: zero,
            t0,
            w0,
            t1,
        }
    }
}

impl<Q: Fn(f64) -> f64> RiccatiProblem<Q> {
    fn validate(&self) -> Result<()> {
        if !(self.t0 > -1.0) || !(self.t0 < self.t1) || !self.w0.is_finite() || !self.alpha.is_finite() {
            return Err(Error::domain(format!(
                "invalid Riccati problem: need -1 < T0 < T1 and finite data (T0 = {}, T1 = {}, w0 = {}, alpha = {})",
                self.t0, self.t1, self.w0, self.alpha
            )));
        }
        Ok(())
    }

    fn rhs(&self, t: f64, w: f64) -> f64 {
        self.alpha * w * w / (1.0 + t) + (self.q)(t)
    }

    /// Blow-up time of the unforced equation, if any.
    pub fn unforced_blowup_time(&self) -> Option<f64> {
        let aw = self.alpha * self.w0;
        (aw > 0.0).then(|| (1.0 + self.t0) * (1.0 / aw).exp() - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiccatiOptions {
    /// blow-up is declared once `|w|` exceeds `1/tolerance`
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_tolerance() -> f64 {
    1e-10
}
fn default_rtol() -> f64 {
    1e-10
}
fn default_max_steps() -> usize {
    1_000_000
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
            rtol: default_rtol(),
            max_steps: default_max_steps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiccatiOutcome {
    BlowUp { time: f64, step_underflow: bool },
    HorizonReached,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiSolution {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub outcome: RiccatiOutcome,
}

impl RiccatiSolution {
    pub fn blowup_time(&self) -> Option<f64> {
        match self.outcome {
            RiccatiOutcome::BlowUp { time, .. } => Some(time),
            RiccatiOutcome::HorizonReached => None,
        }
    }

    /// Linear interpolation of the trajectory; `None` outside the integrated range.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let k = self.t.partition_point(|&s| s < t);
        if k == 0 {
            return (self.t.first() == Some(&t)).then(|| self.w[0]);
        }
        if k == self.t.len() {
            return None;
        }
        let (ta, tb) = (self.t[k - 1], self.t[k]);
        let s = (t - ta) / (tb - ta);
        Some(self.w[k - 1] + s * (self.w[k] - self.w[k - 1]))
    }
}

// Dormand–Prince 5(4) tableau
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince integration with blow-up detection.
pub fn riccati_integrate<Q: Fn(f64) -> f64>(p: &RiccatiProblem<Q>, opts: &RiccatiOptions) -> Result<RiccatiSolution> {
    p.validate()?;
    let threshold = 1.0 / opts.tolerance;
    let mut t = p.t0;
    let mut w = p.w0;
    let mut ts = vec![t];
    let mut ws = vec![w];
    let mut h = 1e-3 * (1.0 + t.abs()).min(p.t1 - p.t0);
    for _ in 0..opts.max_steps {
        if t >= p.t1 {
            return Ok(RiccatiSolution {
                t: ts,
                w: ws,
                outcome: RiccatiOutcome::HorizonReached,
            });
        }
        if w.abs() > threshold {
            let aw = p.alpha * w;
            // near blow-up w ~ (1 + t)/(alpha (T - t))
            let time = if aw > 0.0 { t + (1.0 + t) / aw } else { t };
            return Ok(RiccatiSolution {
                t: ts,
                w: ws,
                outcome: RiccatiOutcome::BlowUp {
                    time,
                    step_underflow: false,
                },
            });
        }
        if h < 1e-15 * (1.0 + t.abs()) {
            return Ok(RiccatiSolution {
                t: ts,
                w: ws,
                outcome: RiccatiOutcome::BlowUp {
                    time: t,
                    step_underflow: true,
                },
            });
        }
        h = h.min(p.t1 - t);
        let mut k = [0.0; 7];
        for s in 0..7 {
            let ws_ = w + h * (0..s).map(|j| DP_A[s][j] * k[j]).sum::<f64>();
            k[s] = p.rhs(t + DP_C[s] * h, ws_);
        }
        let w5 = w + h * (0..7).map(|j| DP_B5[j] * k[j]).sum::<f64>();
        let w4 = w + h * (0..7).map(|j| DP_B4[j] * k[j]).sum::<f64>();
        let scale = opts.rtol * w.abs().max(w5.abs()) + opts.rtol * 1e-2;
        let err = if w5.is_finite() {
            (w5 - w4).abs() / scale
        } else {
            f64::INFINITY
        };
        if err <= 1.0 {
            t += h;
            w = w5;
            ts.push(t);
            ws.push(w);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Err(Error::numerical(format!(
        "Riccati integration exceeded {} steps at t = {t}",
        opts.max_steps
    )))
}

/// `int_{T0}^{T1} |q|`, integrated in `log(1 + t)`.
pub fn forcing_mass<Q: Fn(f64) -> f64>(q: &Q, t0: f64, t1: f64) -> f64 {
    let rule = GaussLegendre::new(16);
    let (y0, y1) = ((1.0 + t0).ln(), (1.0 + t1).ln());
    let panels = 64;
    let width = (y1 - y0) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = y0 + width * k as f64;
            rule.integrate(lo, lo + width, |y| q(y.exp_m1()).abs() * y.exp())
        })
        .sum()
}

/// Comparison bound on `|w(t)|`.
///
/// Requires `2 alpha q_* (log(1 + T1) - log(1 + T0)) < 1`; once the
/// denominator reaches zero the bound no longer exists.
pub fn riccati_bound<Q: Fn(f64) -> f64>(p: &RiccatiProblem<Q>, t: f64) -> Result<f64> {
    p.validate()?;
    if t < p.t0 || t > p.t1 {
        return Err(Error::domain(format!("t = {t} outside [{}, {}]", p.t0, p.t1)));
    }
    let q_star = forcing_mass(&p.q, p.t0, p.t1);
    let span = (1.0 + p.t1).ln() - (1.0 + p.t0).ln();
    if !(2.0 * p.alpha * q_star * span < 1.0) {
        return Err(Error::domain(format!(
            "bound hypotheses fail: 2 alpha q_* log-span = {}",
            2.0 * p.alpha * q_star * span
        )));
    }
    let denominator = 1.0 - p.alpha * (p.w0 + q_star) * ((1.0 + t).ln() - (1.0 + p.t0).ln());
    if denominator <= 0.0 {
        return Err(Error::BoundExpired { t, denominator });
    }
    Ok((1.0 + 1.0 / denominator) * (p.w0.abs() + q_star))
}

/// `alpha` and `w(t0)` of the model Riccati equation along the curve labelled
/// `(lambda, omega)`, from `F_rho` and `F_rhorho` there.
pub fn riccati_seed(theta: f64, c: f64, epsilon: f64, f_rho: f64, f_rhorho: f64) -> (f64, f64) {
    let alpha = -epsilon * theta * f_rho / c.powi(4);
    let w0 = epsilon * c * c * f_rhorho;
    (alpha, w0)
}

/// Starting time of the characteristic labelled `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartRule {
    /// `1/eps` for `|lambda| < eps^(-1/4)`, otherwise `lambda^4`
    Default {
        epsilon: f64,
    },
    Fixed {
        t0: f64,
    },
}

impl StartRule {
    pub fn t0(&self, lambda: f64) -> f64 {
        match *self {
            StartRule::Default { epsilon } => {
                if lambda.abs() < epsilon.powf(-0.25) {
                    1.0 / epsilon
                } else {
                    lambda.powi(4)
                }
            }
            StartRule::Fixed { t0 } => t0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharCurveState {
    pub component: usize,
    pub lambda: f64,
    pub omega: f64,
    pub t0: f64,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
}

/// RK4 for `dr/dt = c + Theta(-c, omega) (d_0 u)^2 / (2 c^3)` from `r(t0) = c t0 + lambda`.
///
/// `sampler(r, t)` returns `d_0 u^i(r omega, t)`.
#[allow(clippy::too_many_arguments)]
pub fn characteristic_curve<S>(
    i: usize,
    lambda: f64,
    omega: f64,
    mut sampler: S,
    coeffs: &CoefficientSet,
    speeds: &SpeedVector,
    start: StartRule,
    t_end: f64,
    n_steps: usize,
) -> Result<CharCurveState>
where
    S: FnMut(f64, f64) -> Result<f64>,
{
    if i >= speeds.m() {
        return Err(Error::domain(format!("component {} out of range", i + 1)));
    }
    let c = speeds.get(i);
    let t0 = start.t0(lambda);
    if !(t_end > t0) || n_steps == 0 {
        return Err(Error::domain(format!("need t_end > t0 = {t0} and at least one step")));
    }
    let coef = theta_on_cone(coeffs, speeds, i, omega) / (2.0 * c.powi(3));
    let mut rhs = |r: f64, t: f64| -> Result<f64> {
        if coef == 0.0 {
            return Ok(c);
        }
        let u0 = sampler(r, t)?;
        Ok(c + coef * u0 * u0)
    };
    let dt = (t_end - t0) / n_steps as f64;
    let mut t = t0;
    let mut r = c * t0 + lambda;
    let mut out_t = vec![t];
    let mut out_r = vec![r];
    for n in 0..n_steps {
        let k1 = rhs(r, t)?;
        let k2 = rhs(r + 0.5 * dt * k1, t + 0.5 * dt)?;
        let k3 = rhs(r + 0.5 * dt * k2, t + 0.5 * dt)?;
        let k4 = rhs(r + dt * k3, t + dt)?;
        r += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = t0 + dt * (n + 1) as f64;
        if !(r > 0.0) {
            return Err(Error::numerical(format!("characteristic left r > 0 at t = {t}")));
        }
        out_t.push(t);
        out_r.push(r);
    }
    Ok(CharCurveState {
        component: i,
        lambda,
        omega,
        t0,
        t: out_t,
        r: out_r,
    })
}
