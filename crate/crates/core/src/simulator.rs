//! Explicit finite-difference evolution of the quasilinear system.
//!
//! Leapfrog in time; at every point the time accelerations of all
//! components are coupled through `A^{i,00}_l`, so each update solves the
//! small system `(I - A^{00}) u_tt = c^2 Lap u + (remaining terms)`.
//! Two geometries share the same pointwise nonlinearity: a square planar
//! grid and, for radial data with a rotation-invariant nonlinearity, a
//! cell-centred radial grid.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::InitialDataSet;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::lifespan::{predict_lifespan, theta_on_cone, StartRule};
use crate::nullform::{CoefficientSet, SpeedVector};
use crate::waveops::{exponents, region_classify, GridField, SpacetimePoint};

/// Largest component count handled by the pointwise solver.
pub const MAX_COMPONENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// radial when the data and nonlinearity allow it, planar otherwise
    #[default]
    Auto,
    Planar,
    Radial,
}

/// Numerical settings of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default)]
    pub geometry: Geometry,
    /// half-width of the planar grid or outer radius of the radial grid;
    /// defaults to `c_m t_max + M` plus the margin
    #[serde(default)]
    pub extent: Option<f64>,
    /// grid points per axis (planar) or radial cells
    pub n: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_max: f64,
    /// blow-up once `sup (1+|x|)^(1/2) |u_tt|` exceeds this multiple of its early maximum
    #[serde(default = "default_blowup_factor")]
    pub blowup_factor: f64,
    /// end of the window defining the early maximum; defaults to `M / c_1`
    #[serde(default)]
    pub reference_time: Option<f64>,
    #[serde(default = "default_output_interval")]
    pub output_interval: f64,
    /// cells beyond the outermost cone that are still updated; the exact
    /// solution vanishes there, so larger values only admit the scheme's
    /// dispersive precursor
    #[serde(default = "default_margin")]
    pub margin_cells: usize,
    /// restarts with halved time step used to refine a blow-up time
    #[serde(default = "default_bisection")]
    pub bisection_levels: usize,
}

fn default_cfl() -> f64 {
    0.45
}
fn default_blowup_factor() -> f64 {
    10.0
}
fn default_output_interval() -> f64 {
    0.5
}
fn default_margin() -> usize {
    2
}
fn default_bisection() -> usize {
    2
}

impl SimSettings {
    pub fn new(n: usize, t_max: f64) -> Self {
        Self {
            geometry: Geometry::Auto,
            extent: None,
            n,
            cfl: default_cfl(),
            t_max,
            blowup_factor: default_blowup_factor(),
            reference_time: None,
            output_interval: default_output_interval(),
            margin_cells: default_margin(),
            bisection_levels: default_bisection(),
        }
    }
}

/// A tracer following the pseudo-characteristic `dr/dt = c + Theta (d_0 u)^2/(2 c^3)`
/// from `r(t0) = c t0 + lambda`, recording `W = r^(1/2) d_0^2 u` along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub component: usize,
    pub lambda: f64,
    pub omega: f64,
    pub t0: f64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub coeffs: CoefficientSet,
    pub speeds: SpeedVector,
    pub data: InitialDataSet,
    pub epsilon: f64,
    pub settings: SimSettings,
    pub probes: Vec<ProbeSpec>,
}

impl SimConfig {
    pub fn new(
        coeffs: CoefficientSet,
        speeds: SpeedVector,
        data: InitialDataSet,
        epsilon: f64,
        settings: SimSettings,
    ) -> Self {
        Self {
            coeffs,
            speeds,
            data,
            epsilon,
            settings,
            probes: Vec::new(),
        }
    }

    /// Geometry actually used.
    pub fn resolved_geometry(&self) -> Geometry {
        match self.settings.geometry {
            Geometry::Auto if self.data.is_radial() && is_rotation_invariant(&self.coeffs) => Geometry::Radial,
            Geometry::Auto => Geometry::Planar,
            g => g,
        }
    }

    pub fn extent(&self) -> f64 {
        let s = &self.settings;
        s.extent.unwrap_or_else(|| {
            let base = self.speeds.max() * s.t_max + self.data.support_radius();
            let h = base / s.n.max(2) as f64;
            base + (s.margin_cells as f64 + 4.0) * h
        })
    }

    pub fn grid_spacing(&self) -> f64 {
        match self.resolved_geometry() {
            Geometry::Radial => self.extent() / self.settings.n as f64,
            _ => 2.0 * self.extent() / (self.settings.n as f64 - 1.0),
        }
    }

    /// Time step rounded so that `t_max` is reached exactly.
    pub fn time_step(&self) -> (f64, usize) {
        let s = &self.settings;
        let dt0 = s.cfl * self.grid_spacing() / (2f64.sqrt() * self.speeds.max());
        let steps = (s.t_max / dt0).ceil().max(1.0) as usize;
        (s.t_max / steps as f64, steps)
    }

    pub fn reference_time(&self) -> f64 {
        self.settings
            .reference_time
            .unwrap_or(self.data.support_radius() / self.speeds.get(0))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        let m = self.speeds.m();
        if self.coeffs.m() != m || self.data.m() != m {
            return Err(Error::domain(format!(
                "component counts disagree: {m} speeds, {} coefficient components, {} data components",
                self.coeffs.m(),
                self.data.m()
            )));
        }
        if m > MAX_COMPONENTS {
            return Err(Error::domain(format!(
                "at most {MAX_COMPONENTS} components are supported"
            )));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(s.cfl > 0.0 && s.cfl <= 1.0) {
            return Err(Error::domain(format!("cfl must lie in (0, 1], got {}", s.cfl)));
        }
        if !(s.t_max > 0.0) || !s.t_max.is_finite() {
            return Err(Error::domain(format!("t_max must be positive, got {}", s.t_max)));
        }
        if s.n < 5 {
            return Err(Error::domain(format!("grid needs at least 5 points, got {}", s.n)));
        }
        if !(s.blowup_factor > 1.0) {
            return Err(Error::domain(format!(
                "blowup_factor must exceed 1, got {}",
                s.blowup_factor
            )));
        }
        if !(s.output_interval > 0.0) {
            return Err(Error::domain("output_interval must be positive"));
        }
        let needed = self.speeds.max() * s.t_max + self.data.support_radius();
        if self.extent() < needed {
            return Err(Error::domain(format!(
                "extent {} does not contain the domain of influence c_m t_max + M = {needed}",
                self.extent()
            )));
        }
        if self.settings.geometry == Geometry::Radial && !(self.data.is_radial() && is_rotation_invariant(&self.coeffs))
        {
            return Err(Error::domain(
                "radial geometry needs radial data and a rotation-invariant nonlinearity",
            ));
        }
        for p in &self.probes {
            if p.component >= m {
                return Err(Error::domain(format!(
                    "probe component {} out of range",
                    p.component + 1
                )));
            }
        }
        Ok(())
    }
}

/// Coefficients flattened for the pointwise solver.
#[derive(Debug, Clone)]
struct Compiled {
    m: usize,
    speeds2: Vec<f64>,
    a: Vec<([usize; 6], f64)>,
    b: Vec<([usize; 5], f64)>,
    c: Vec<([usize; 8], f64)>,
    d: Vec<([usize; 7], f64)>,
}

/// First and second derivatives of every component at one point.
#[derive(Clone, Copy)]
struct Point {
    du: [[f64; 3]; MAX_COMPONENTS],
    d2: [[[f64; 3]; 3]; MAX_COMPONENTS],
    lap: [f64; MAX_COMPONENTS],
}

impl Point {
    fn zero() -> Self {
        Self {
            du: [[0.0; 3]; MAX_COMPONENTS],
            d2: [[[0.0; 3]; 3]; MAX_COMPONENTS],
            lap: [0.0; MAX_COMPONENTS],
        }
    }
}

/// `I - A^{00}` is singular or its determinant has turned negative, so the
/// system is no longer hyperbolic in time.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Singular;

impl Compiled {
    fn new(coeffs: &CoefficientSet, speeds: &SpeedVector) -> Self {
        Self {
            m: speeds.m(),
            speeds2: speeds.as_slice().iter().map(|c| c * c).collect(),
            a: coeffs.a.iter().map(|(k, v)| (*k, *v)).collect(),
            b: coeffs.b.iter().map(|(k, v)| (*k, *v)).collect(),
            c: coeffs.c.iter().map(|(k, v)| (*k, *v)).collect(),
            d: coeffs.d.iter().map(|(k, v)| (*k, *v)).collect(),
        }
    }

    fn is_linear(&self) -> bool {
        self.a.is_empty() && self.b.is_empty() && self.c.is_empty() && self.d.is_empty()
    }

    /// Solves for `u_tt` of every component; `p.d2[_][0][0]` is ignored.
    /// Only the leading `m x m` block of `mat` is touched.
    fn accel(&self, p: &Point, mat: &mut Matrix, out: &mut [f64]) -> std::result::Result<(), Singular> {
        let m = self.m;
        let mut rhs = [0.0; MAX_COMPONENTS];
        for i in 0..m {
            rhs[i] = self.speeds2[i] * p.lap[i];
        }
        if self.is_linear() {
            out[..m].copy_from_slice(&rhs[..m]);
            return Ok(());
        }
        for (i, row) in mat.iter_mut().enumerate().take(m) {
            row[..m].fill(0.0);
            row[i] = 1.0;
        }
        let du = &p.du;
        for &([i, l, j, al, be, ga], v) in &self.a {
            let coef = v * du[j][ga];
            if al == 0 && be == 0 {
                mat[i][l] -= coef;
            } else {
                rhs[i] += coef * p.d2[l][al][be];
            }
        }
        for &([i, l, j, k, al, be, ga, de], v) in &self.c {
            let coef = v * du[j][ga] * du[k][de];
            if al == 0 && be == 0 {
                mat[i][l] -= coef;
            } else {
                rhs[i] += coef * p.d2[l][al][be];
            }
        }
        for &([i, j, k, al, be], v) in &self.b {
            rhs[i] += v * du[j][al] * du[k][be];
        }
        for &([i, j, k, l, al, be, ga], v) in &self.d {
            rhs[i] += v * du[j][al] * du[k][be] * du[l][ga];
        }
        solve_small(mat, &mut rhs, m)?;
        out[..m].copy_from_slice(&rhs[..m]);
        Ok(())
    }
}

type Matrix = [[f64; MAX_COMPONENTS]; MAX_COMPONENTS];

fn solve_small(mat: &mut Matrix, rhs: &mut [f64; MAX_COMPONENTS], m: usize) -> std::result::Result<(), Singular> {
    if m == 1 {
        if !(mat[0][0] > 1e-12) || !mat[0][0].is_finite() {
            return Err(Singular);
        }
        rhs[0] /= mat[0][0];
        return Ok(());
    }
    let mut det_sign = 1.0;
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&a, &b| mat[a][col].abs().total_cmp(&mat[b][col].abs()))
            .unwrap();
        if mat[piv][col].abs() < 1e-12 || !mat[piv][col].is_finite() {
            return Err(Singular);
        }
        if piv != col {
            det_sign = -det_sign;
        }
        det_sign *= mat[piv][col].signum();
        mat.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..m {
            let f = mat[r][col] / mat[col][col];
            for k in col..m {
                mat[r][k] -= f * mat[col][k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    if det_sign < 0.0 {
        return Err(Singular);
    }
    for col in (0..m).rev() {
        let mut s = rhs[col];
        for k in col + 1..m {
            s -= mat[col][k] * rhs[k];
        }
        rhs[col] = s / mat[col][col];
    }
    Ok(())
}

/// True when `F^i` commutes with rotations, tested on random radial jets.
pub fn is_rotation_invariant(coeffs: &CoefficientSet) -> bool {
    let m = coeffs.m();
    if m > MAX_COMPONENTS {
        return false;
    }
    let speeds = SpeedVector::new((1..=m).map(|k| k as f64).collect()).expect("increasing");
    let comp = Compiled::new(coeffs, &speeds);
    if comp.is_linear() {
        return true;
    }
    // deterministic pseudo-random radial jets
    let mut state = 0x2545f4914f6cdd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for _ in 0..6 {
        let jets: Vec<[f64; 6]> = (0..m)
            .map(|_| [next(), next(), next(), next(), next(), next()])
            .collect();
        let eval = |theta: f64| -> Option<Vec<f64>> {
            let e = [theta.cos(), theta.sin()];
            let mut p = Point::zero();
            for (i, &[ut, ur, utt, utr, urr, ur_over_r]) in jets.iter().enumerate() {
                p.du[i] = [ut, e[0] * ur, e[1] * ur];
                p.d2[i][0][0] = utt;
                for a in 0..2 {
                    p.d2[i][0][a + 1] = e[a] * utr;
                    p.d2[i][a + 1][0] = e[a] * utr;
                    for b in 0..2 {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        p.d2[i][a + 1][b + 1] = e[a] * e[b] * urr + (delta - e[a] * e[b]) * ur_over_r;
                    }
                }
                p.lap[i] = urr + ur_over_r;
            }
            let mut out = [0.0; MAX_COMPONENTS];
            comp.accel(&p, &mut [[0.0; MAX_COMPONENTS]; MAX_COMPONENTS], &mut out)
                .ok()?;
            Some(out[..m].to_vec())
        };
        let base = match eval(0.0) {
            Some(v) => v,
            None => continue,
        };
        for theta in [0.7, 2.3, 4.1] {
            match eval(theta) {
                Some(v) => {
                    if base
                        .iter()
                        .zip(&v)
                        .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
                    {
                        return false;
                    }
                }
                None => return false,
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Blowup,
    Unstable,
}

/// One diagnostics sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagRow {
    pub t: f64,
    /// `sup_i |d u^i|`
    pub sup_du: f64,
    /// discrete linear energy, exactly conserved by the linear scheme
    pub energy: f64,
    /// `[d u]_0`
    pub bracket_norm: f64,
    /// `<u>_0`
    pub angle_norm: f64,
    /// `sup (1 + |x|)^(1/2) |u_tt|`, the blow-up proxy
    pub w_proxy: f64,
}

pub const DIAG_HEADER: &str = "t,sup_du,energy,bracket_norm,angle_norm,w_proxy";

impl DiagRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            fmt_f64(self.t),
            fmt_f64(self.sup_du),
            fmt_f64(self.energy),
            fmt_f64(self.bracket_norm),
            fmt_f64(self.angle_norm),
            fmt_f64(self.w_proxy)
        )
    }
}

/// Samples recorded by a probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeTrace {
    pub spec: ProbeSpec,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub w: Vec<f64>,
}

/// Final fields: planar snapshots or radial profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Planar(Vec<GridField>),
    Radial { r: Vec<f64>, u: Vec<Vec<f64>> },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: Outcome,
    /// last stable time, or the interpolated blow-up time
    pub t_emp: f64,
    pub geometry: Geometry,
    pub dt: f64,
    pub h: f64,
    pub diagnostics: Vec<DiagRow>,
    /// maximum of `|d u|` seen in the exterior (index 0) and each cone slab
    pub region_max: Vec<f64>,
    /// first times `sup |d u|` exceeds 1e2, 1e3, 1e4 times its initial value
    pub gradient_crossings: [Option<f64>; 3],
    /// the early maximum of the blow-up proxy
    pub w_reference: f64,
    pub probes: Vec<ProbeTrace>,
    pub snapshot: Snapshot,
}

impl RunResult {
    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from(DIAG_HEADER);
        s.push('\n');
        for row in &self.diagnostics {
            s.push_str(&row.csv_line());
            s.push('\n');
        }
        s
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.diagnostics.first().map_or(0.0, |d| d.energy);
        let worst = self
            .diagnostics
            .iter()
            .map(|d| (d.energy - e0).abs())
            .fold(0.0, f64::max);
        if e0 == 0.0 {
            worst
        } else {
            worst / e0.abs()
        }
    }
}

/// Discrete operators of one geometry on interleaved fields `u[cell * m + i]`.
trait Mesh: Sync {
    fn cells(&self) -> usize;
    fn h(&self) -> f64;
    /// `|x|` of a cell
    fn radius(&self, cell: usize) -> f64;
    /// cells whose update may be nonzero when the data fills radius `reach`
    fn active(&self, reach: f64) -> Vec<std::ops::Range<usize>>;
    fn initial(&self, data: &InitialDataSet, eps: f64, m: usize) -> (Vec<f64>, Vec<f64>);
    /// Overwrites the entries of the first `m` components of `p`.
    fn point(&self, u: &[f64], v: &[f64], cell: usize, m: usize, p: &mut Point);
    /// `sum_i c_i^2 <grad u_a^i, grad u_b^i>` over the grid, with the cell measure
    fn grad_pairing(&self, ua: &[f64], ub: &[f64], speeds2: &[f64], m: usize) -> f64;
    fn measure(&self, cell: usize) -> f64;
    fn sample(&self, f: &[f64], r: f64, omega: f64, m: usize, i: usize) -> f64;
    fn snapshot(&self, u: &[f64], t: f64, m: usize) -> Snapshot;
}

struct Planar {
    n: usize,
    h: f64,
}

impl Planar {
    fn coords(&self, cell: usize) -> [f64; 2] {
        let (jx, jy) = (cell % self.n, cell / self.n);
        let mid = 0.5 * (self.n as f64 - 1.0);
        [(jx as f64 - mid) * self.h, (jy as f64 - mid) * self.h]
    }
}

impl Mesh for Planar {
    fn cells(&self) -> usize {
        self.n * self.n
    }
    fn h(&self) -> f64 {
        self.h
    }
    fn radius(&self, cell: usize) -> f64 {
        let x = self.coords(cell);
        x[0].hypot(x[1])
    }
    fn active(&self, reach: f64) -> Vec<std::ops::Range<usize>> {
        let n = self.n;
        let mid = 0.5 * (n as f64 - 1.0);
        let span = reach / self.h;
        let lo = ((mid - span).ceil().max(1.0)) as usize;
        let hi = ((mid + span).floor().min(n as f64 - 2.0)) as usize;
        (lo..=hi)
            .filter_map(|jy| {
                let dy = jy as f64 - mid;
                let half = (span * span - dy * dy).max(0.0).sqrt();
                let a = ((mid - half).ceil().max(1.0)) as usize;
                let b = ((mid + half).floor().min(n as f64 - 2.0)) as usize;
                (a <= b).then(|| jy * n + a..jy * n + b + 1)
            })
            .collect()
    }
    fn initial(&self, data: &InitialDataSet, eps: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![0.0; self.cells() * m];
        let mut v = vec![0.0; self.cells() * m];
        let reach = data.support_radius();
        for range in self.active(reach) {
            for cell in range {
                let x = self.coords(cell);
                for i in 0..m {
                    u[cell * m + i] = eps * data.f(i).value(x);
                    v[cell * m + i] = eps * data.g(i).value(x);
                }
            }
        }
        (u, v)
    }
    fn point(&self, u: &[f64], v: &[f64], cell: usize, m: usize, p: &mut Point) {
        let (e, nn) = (m, self.n * m);
        let k0 = cell * m;
        let (h, h2) = (self.h, self.h * self.h);
        for i in 0..m {
            let k = k0 + i;
            let c = u[k];
            let (xp, xm, yp, ym) = (u[k + e], u[k - e], u[k + nn], u[k - nn]);
            let d1 = (xp - xm) / (2.0 * h);
            let d2 = (yp - ym) / (2.0 * h);
            let d11 = (xp - 2.0 * c + xm) / h2;
            let d22 = (yp - 2.0 * c + ym) / h2;
            let d12 = (u[k + nn + e] - u[k + nn - e] - u[k - nn + e] + u[k - nn - e]) / (4.0 * h2);
            let d01 = (v[k + e] - v[k - e]) / (2.0 * h);
            let d02 = (v[k + nn] - v[k - nn]) / (2.0 * h);
            p.du[i] = [v[k], d1, d2];
            p.d2[i] = [[0.0, d01, d02], [d01, d11, d12], [d02, d12, d22]];
            p.lap[i] = d11 + d22;
        }
    }
    fn grad_pairing(&self, ua: &[f64], ub: &[f64], speeds2: &[f64], m: usize) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for jy in 0..n - 1 {
            for jx in 0..n - 1 {
                let cell = jy * n + jx;
                for i in 0..m {
                    let k = cell * m + i;
                    let ax = ua[k + m] - ua[k];
                    let bx = ub[k + m] - ub[k];
                    let ay = ua[k + n * m] - ua[k];
                    let by = ub[k + n * m] - ub[k];
                    acc += speeds2[i] * (ax * bx + ay * by);
                }
            }
        }
        // cell area h^2 cancels the 1/h^2 of the differences
        acc
    }
    fn measure(&self, _cell: usize) -> f64 {
        self.h * self.h
    }
    fn sample(&self, f: &[f64], r: f64, omega: f64, m: usize, i: usize) -> f64 {
        let mid = 0.5 * (self.n as f64 - 1.0);
        let gx = r * omega.cos() / self.h + mid;
        let gy = r * omega.sin() / self.h + mid;
        if gx < 0.0 || gy < 0.0 || gx >= (self.n - 1) as f64 || gy >= (self.n - 1) as f64 {
            return 0.0;
        }
        let (jx, jy) = (gx.floor() as usize, gy.floor() as usize);
        let (sx, sy) = (gx - jx as f64, gy - jy as f64);
        let at = |a: usize, b: usize| f[(b * self.n + a) * m + i];
        (1.0 - sx) * (1.0 - sy) * at(jx, jy)
            + sx * (1.0 - sy) * at(jx + 1, jy)
            + (1.0 - sx) * sy * at(jx, jy + 1)
            + sx * sy * at(jx + 1, jy + 1)
    }
    fn snapshot(&self, u: &[f64], t: f64, m: usize) -> Snapshot {
        Snapshot::Planar(
            (0..m)
                .map(|i| {
                    let mut g = GridField::zeros(self.n, self.n, self.h, t, i);
                    for cell in 0..self.cells() {
                        g.values[cell] = u[cell * m + i];
                    }
                    g
                })
                .collect(),
        )
    }
}

/// Cell-centred radial grid, `r_j = (j + 1/2) h`.
struct Radial {
    n: usize,
    h: f64,
    inv_r: Vec<f64>,
}

impl Radial {
    fn new(n: usize, h: f64) -> Self {
        let inv_r = (0..n).map(|j| 1.0 / ((j as f64 + 0.5) * h)).collect();
        Self { n, h, inv_r }
    }

    fn r(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h
    }
}

impl Mesh for Radial {
    fn cells(&self) -> usize {
        self.n
    }
    fn h(&self) -> f64 {
        self.h
    }
    fn radius(&self, cell: usize) -> f64 {
        self.r(cell)
    }
    fn active(&self, reach: f64) -> Vec<std::ops::Range<usize>> {
        // cells with r_j <= reach
        let hi = ((reach / self.h + 0.5).floor().max(0.0) as usize).min(self.n - 1);
        vec![0..hi]
    }
    fn initial(&self, data: &InitialDataSet, eps: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![0.0; self.n * m];
        let mut v = vec![0.0; self.n * m];
        for j in 0..self.n {
            let x = [self.r(j), 0.0];
            for i in 0..m {
                u[j * m + i] = eps * data.f(i).value(x);
                v[j * m + i] = eps * data.g(i).value(x);
            }
        }
        (u, v)
    }
    fn point(&self, u: &[f64], v: &[f64], j: usize, m: usize, p: &mut Point) {
        let inv_2h = 0.5 / self.h;
        let inv_h2 = 1.0 / (self.h * self.h);
        let inv_r = self.inv_r[j];
        // (r -+ h/2) / r
        let (wp, wm) = (1.0 + 0.5 * self.h * inv_r, 1.0 - 0.5 * self.h * inv_r);
        for i in 0..m {
            let k = j * m + i;
            let c = u[k];
            // even reflection at the origin
            let (um, vm) = if j == 0 { (u[k], v[k]) } else { (u[k - m], v[k - m]) };
            let (up, vp) = (u[k + m], v[k + m]);
            let ur = (up - um) * inv_2h;
            let urr = (up - 2.0 * c + um) * inv_h2;
            let vr = (vp - vm) * inv_2h;
            let lap = (wp * (up - c) - wm * (c - um)) * inv_h2;
            p.du[i] = [v[k], ur, 0.0];
            p.d2[i] = [[0.0, vr, 0.0], [vr, urr, 0.0], [0.0, 0.0, ur * inv_r]];
            p.lap[i] = lap;
        }
    }
    fn grad_pairing(&self, ua: &[f64], ub: &[f64], speeds2: &[f64], m: usize) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.n - 1 {
            let rf = (j as f64 + 1.0) * self.h;
            for i in 0..m {
                let k = j * m + i;
                acc += speeds2[i] * rf * (ua[k + m] - ua[k]) * (ub[k + m] - ub[k]);
            }
        }
        2.0 * PI * acc / self.h
    }
    fn measure(&self, j: usize) -> f64 {
        2.0 * PI * self.r(j) * self.h
    }
    fn sample(&self, f: &[f64], r: f64, _omega: f64, m: usize, i: usize) -> f64 {
        let g = r / self.h - 0.5;
        if g < 0.0 {
            return f[i];
        }
        let j = g.floor() as usize;
        if j + 1 >= self.n {
            return 0.0;
        }
        let s = g - j as f64;
        (1.0 - s) * f[j * m + i] + s * f[(j + 1) * m + i]
    }
    fn snapshot(&self, u: &[f64], _t: f64, m: usize) -> Snapshot {
        Snapshot::Radial {
            r: (0..self.n).map(|j| self.r(j)).collect(),
            u: (0..m).map(|i| (0..self.n).map(|j| u[j * m + i]).collect()).collect(),
        }
    }
}

/// Leapfrog state on some mesh.
#[derive(Clone)]
struct State {
    t: f64,
    step: usize,
    prev: Vec<f64>,
    cur: Vec<f64>,
    v: Vec<f64>,
    acc: Vec<f64>,
}

struct Evolver<'a, M: Mesh> {
    mesh: M,
    comp: Compiled,
    cfg: &'a SimConfig,
    m: usize,
    margin: f64,
    support: f64,
    cmax: f64,
    /// `(1 + |x|)^(1/2)` per cell
    proxy_weight: Vec<f64>,
}

enum StepError {
    Singular(f64),
    NonFinite(f64),
}

impl<'a, M: Mesh> Evolver<'a, M> {
    fn reach(&self, t: f64, steps_taken: usize) -> f64 {
        let physical = self.cmax * t + self.support + self.margin;
        let numerical = self.support + (steps_taken as f64 + 2.0) * self.mesh.h() * 2f64.sqrt();
        physical.min(numerical)
    }

    fn compute_acc(&self, u: &[f64], v: &[f64], acc: &mut [f64], reach: f64) -> std::result::Result<(), f64> {
        let m = self.m;
        let mut chunks = Vec::new();
        let mut rest = acc;
        let mut offset = 0;
        for range in self.mesh.active(reach) {
            let tail = std::mem::take(&mut rest);
            let (_, tail) = tail.split_at_mut(range.start * m - offset);
            let (chunk, tail) = tail.split_at_mut(range.len() * m);
            offset = range.end * m;
            rest = tail;
            chunks.push((range, chunk));
        }
        let bad: Vec<Option<usize>> = chunks
            .into_par_iter()
            .map(|(range, out)| {
                let mut p = Point::zero();
                let mut mat = [[0.0; MAX_COMPONENTS]; MAX_COMPONENTS];
                for (o, cell) in range.enumerate() {
                    self.mesh.point(u, v, cell, m, &mut p);
                    if self.comp.accel(&p, &mut mat, &mut out[o * m..(o + 1) * m]).is_err() {
                        return Some(cell);
                    }
                }
                None
            })
            .collect();
        match bad.into_iter().flatten().next() {
            Some(cell) => Err(self.mesh.radius(cell)),
            None => Ok(()),
        }
    }

    fn init(&self) -> std::result::Result<State, StepError> {
        let (u0, v0) = self.mesh.initial(&self.cfg.data, self.cfg.epsilon, self.m);
        self.start_from(0.0, 0, u0, v0)
    }

    /// Taylor start from `(u, u_t)` at time `t`.
    fn start_from(&self, t: f64, step: usize, u0: Vec<f64>, v0: Vec<f64>) -> std::result::Result<State, StepError> {
        let mut acc = vec![0.0; u0.len()];
        self.compute_acc(&u0, &v0, &mut acc, self.reach(t, step))
            .map_err(|_| StepError::Singular(t))?;
        Ok(State {
            t,
            step,
            prev: u0.clone(),
            cur: u0,
            v: v0,
            acc,
        })
    }

    /// Advances by `dt` in place; the first step after a start uses the Taylor formula.
    /// On error only `cur` is guaranteed intact.
    fn advance(&self, s: &mut State, dt: f64, first: bool) -> std::result::Result<(), StepError> {
        let m = self.m;
        let reach = self.reach(s.t + dt, s.step + 1);
        let ranges = self.mesh.active(reach);
        let dt2 = dt * dt;
        let taylor = first || s.step == 0;
        if s.prev.len() != s.cur.len() {
            s.prev = s.cur.clone();
        }
        let mut finite = true;
        for range in &ranges {
            for k in range.start * m..range.end * m {
                let next = if taylor {
                    s.cur[k] + dt * s.v[k] + 0.5 * dt2 * s.acc[k]
                } else {
                    2.0 * s.cur[k] - s.prev[k] + dt2 * s.acc[k]
                };
                finite &= next.is_finite();
                s.prev[k] = next;
            }
        }
        if !finite {
            return Err(StepError::NonFinite(s.t + dt));
        }
        std::mem::swap(&mut s.prev, &mut s.cur);
        for range in &ranges {
            for k in range.start * m..range.end * m {
                s.v[k] = (s.cur[k] - s.prev[k]) / dt + 0.5 * dt * s.acc[k];
            }
        }
        s.t += dt;
        s.step += 1;
        self.compute_acc(&s.cur, &s.v, &mut s.acc, reach)
            .map_err(|_| StepError::Singular(s.t))?;
        let finite = ranges
            .iter()
            .all(|r| s.acc[r.start * m..r.end * m].iter().all(|x| x.is_finite()));
        if !finite {
            return Err(StepError::NonFinite(s.t));
        }
        Ok(())
    }

    fn next_level(&self, s: &State, dt: f64, reach: f64) -> Vec<f64> {
        let dt2 = dt * dt;
        let mut next = vec![0.0; s.cur.len()];
        for range in self.mesh.active(reach) {
            for k in range.start * self.m..range.end * self.m {
                next[k] = if s.step == 0 || s.prev.is_empty() {
                    s.cur[k] + dt * s.v[k] + 0.5 * dt2 * s.acc[k]
                } else {
                    2.0 * s.cur[k] - s.prev[k] + dt2 * s.acc[k]
                };
            }
        }
        next
    }

    fn w_proxy(&self, s: &State) -> f64 {
        let m = self.m;
        let mut best = 0.0f64;
        for range in self.mesh.active(self.reach(s.t, s.step)) {
            for cell in range {
                let w = self.proxy_weight[cell];
                for i in 0..m {
                    best = best.max(w * s.acc[cell * m + i].abs());
                }
            }
        }
        best
    }

    /// Diagnostics at `s.t`; the energy pairs the current and next levels.
    fn diagnostics(&self, s: &State, dt: f64, region_max: &mut [f64]) -> DiagRow {
        let m = self.m;
        let t = s.t;
        let speeds = &self.cfg.speeds;
        let reach = self.reach(t + dt, s.step + 1);
        let next = self.next_level(s, dt, reach);
        let mut kinetic = 0.0;
        for cell in 0..self.mesh.cells() {
            let meas = self.mesh.measure(cell);
            for i in 0..m {
                let k = cell * m + i;
                let d = (next[k] - s.cur[k]) / dt;
                kinetic += 0.5 * meas * d * d;
            }
        }
        let potential = 0.5 * self.mesh.grad_pairing(&next, &s.cur, &self.comp.speeds2, m);
        let (mut sup_du, mut bracket, mut angle, mut w_proxy) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut p = Point::zero();
        for range in self.mesh.active(reach) {
            for cell in range {
                let r = self.mesh.radius(cell);
                self.mesh.point(&s.cur, &s.v, cell, m, &mut p);
                let (mut bsum, mut usum, mut local_du) = (0.0, 0.0, 0.0f64);
                for i in 0..m {
                    let du = p.du[i].map(f64::abs);
                    local_du = local_du.max(du[0].max(du[1]).max(du[2]));
                    let c = speeds.get(i);
                    let wb = (1.0 + r).powf(exponents::BRACKET_RADIAL)
                        * (1.0 + (r - c * t).abs()).powf(exponents::BRACKET_CONE);
                    bsum += wb * (du[0] + du[1] + du[2]);
                    usum += s.cur[cell * m + i].abs();
                    w_proxy = w_proxy.max((1.0 + r).sqrt() * s.acc[cell * m + i].abs());
                }
                sup_du = sup_du.max(local_du);
                bracket = bracket.max(bsum);
                angle = angle.max((1.0 + r + t).powf(exponents::ANGLE) * usum);
                if local_du > 0.0 {
                    let region = region_classify(SpacetimePoint::new([r, 0.0], t), speeds)
                        .map(|g| g.index())
                        .unwrap_or(0);
                    region_max[region] = region_max[region].max(local_du);
                }
            }
        }
        DiagRow {
            t,
            sup_du,
            energy: kinetic + potential,
            bracket_norm: bracket,
            angle_norm: angle,
            w_proxy,
        }
    }
}

fn probe_coefficients(cfg: &SimConfig) -> Vec<f64> {
    cfg.probes
        .iter()
        .map(|p| {
            let c = cfg.speeds.get(p.component);
            theta_on_cone(&cfg.coeffs, &cfg.speeds, p.component, p.omega) / (2.0 * c.powi(3))
        })
        .collect()
}

struct Crossing {
    /// last sample time and proxy at or below the threshold
    before: (f64, f64),
    after: (f64, f64),
    checkpoint: State,
}

fn run_on<M: Mesh>(cfg: &SimConfig, mesh: M, geometry: Geometry) -> Result<RunResult> {
    let m = cfg.speeds.m();
    let ev = Evolver {
        margin: cfg.settings.margin_cells as f64 * mesh.h(),
        proxy_weight: (0..mesh.cells()).map(|c| (1.0 + mesh.radius(c)).sqrt()).collect(),
        mesh,
        comp: Compiled::new(&cfg.coeffs, &cfg.speeds),
        cfg,
        m,
        support: cfg.data.support_radius(),
        cmax: cfg.speeds.max(),
    };
    let (dt, steps) = cfg.time_step();
    let out_every = ((cfg.settings.output_interval / dt).round() as usize).max(1);
    let t_ref = cfg.reference_time();
    let mut region_max = vec![0.0; m + 1];
    let mut diagnostics = Vec::new();
    let mut gradient_crossings = [None; 3];
    let probe_coef = probe_coefficients(cfg);
    let mut probes: Vec<(f64, bool, ProbeTrace)> = cfg
        .probes
        .iter()
        .map(|p| {
            (
                0.0,
                false,
                ProbeTrace {
                    spec: *p,
                    t: vec![],
                    r: vec![],
                    w: vec![],
                },
            )
        })
        .collect();

    let finish = |outcome,
                  t_emp,
                  diagnostics,
                  region_max,
                  gradient_crossings,
                  w_ref,
                  probes: Vec<(f64, bool, ProbeTrace)>,
                  state: &State| {
        Ok(RunResult {
            outcome,
            t_emp,
            geometry,
            dt,
            h: ev.mesh.h(),
            diagnostics,
            region_max,
            gradient_crossings,
            w_reference: w_ref,
            probes: probes.into_iter().map(|p| p.2).collect(),
            snapshot: ev.mesh.snapshot(&state.cur, state.t, m),
        })
    };

    let mut state = match ev.init() {
        Ok(s) => s,
        Err(_) => {
            let (u, _) = ev.mesh.initial(&cfg.data, cfg.epsilon, m);
            let s = State {
                t: 0.0,
                step: 0,
                prev: u.clone(),
                cur: u.clone(),
                v: u.clone(),
                acc: u,
            };
            return finish(
                Outcome::Unstable,
                0.0,
                diagnostics,
                region_max,
                gradient_crossings,
                0.0,
                probes,
                &s,
            );
        }
    };
    let mut w_ref = 0.0f64;
    let mut du0 = None;
    let mut last_sample = (0.0, 0.0);
    let mut checkpoint = state.clone();
    let mut crossing: Option<Crossing> = None;
    let mut failure: Option<StepError> = None;

    for n in 0..=steps {
        let w = ev.w_proxy(&state);
        if state.t <= t_ref + 1e-12 {
            w_ref = w_ref.max(w);
        } else if crossing.is_none() && w_ref > 0.0 && w > cfg.settings.blowup_factor * w_ref {
            crossing = Some(Crossing {
                before: last_sample,
                after: (state.t, w),
                checkpoint: checkpoint.clone(),
            });
        }
        last_sample = (state.t, w);
        if n % out_every == 0 || n == steps || crossing.is_some() {
            let row = ev.diagnostics(&state, dt, &mut region_max);
            let base = *du0.get_or_insert(row.sup_du);
            for (slot, factor) in gradient_crossings.iter_mut().zip([1e2, 1e3, 1e4]) {
                if slot.is_none() && base > 0.0 && row.sup_du > factor * base {
                    *slot = Some(row.t);
                }
            }
            diagnostics.push(row);
            for (r, started, trace) in probes.iter_mut() {
                if *started {
                    let i = trace.spec.component;
                    trace.t.push(state.t);
                    trace.r.push(*r);
                    trace
                        .w
                        .push(r.sqrt() * ev.mesh.sample(&state.acc, *r, trace.spec.omega, m, i));
                }
            }
        }
        if crossing.is_some() || n == steps {
            break;
        }
        if n % out_every == 0 {
            checkpoint = state.clone();
        }
        // advance probes with the field at the current level
        for (k, (r, started, trace)) in probes.iter_mut().enumerate() {
            let spec = trace.spec;
            let c = cfg.speeds.get(spec.component);
            if !*started && state.t + 0.5 * dt >= spec.t0 {
                *started = true;
                *r = c * spec.t0 + spec.lambda + c * (state.t - spec.t0);
                trace.t.push(state.t);
                trace.r.push(*r);
                trace
                    .w
                    .push(r.sqrt() * ev.mesh.sample(&state.acc, *r, spec.omega, m, spec.component));
            }
            if *started {
                let u0 = ev.mesh.sample(&state.v, *r, spec.omega, m, spec.component);
                *r += dt * (c + probe_coef[k] * u0 * u0);
            }
        }
        if let Err(e) = ev.advance(&mut state, dt, n == 0) {
            failure = Some(e);
            break;
        }
    }

    if let Some(c) = crossing {
        let t_emp = refine_crossing(
            &ev,
            c,
            dt,
            cfg.settings.blowup_factor * w_ref,
            cfg.settings.bisection_levels,
        );
        return finish(
            Outcome::Blowup,
            t_emp,
            diagnostics,
            region_max,
            gradient_crossings,
            w_ref,
            probes,
            &state,
        );
    }
    match failure {
        Some(StepError::NonFinite(t)) => finish(
            Outcome::Blowup,
            t,
            diagnostics,
            region_max,
            gradient_crossings,
            w_ref,
            probes,
            &state,
        ),
        Some(StepError::Singular(t)) => finish(
            Outcome::Unstable,
            t,
            diagnostics,
            region_max,
            gradient_crossings,
            w_ref,
            probes,
            &state,
        ),
        None => finish(
            Outcome::Completed,
            cfg.settings.t_max,
            diagnostics,
            region_max,
            gradient_crossings,
            w_ref,
            probes,
            &state,
        ),
    }
}

/// Locates the threshold crossing by restarting from the checkpoint with
/// halved time steps, then interpolating `log W` linearly in time.
fn refine_crossing<M: Mesh>(ev: &Evolver<'_, M>, c: Crossing, dt: f64, threshold: f64, levels: usize) -> f64 {
    let interp = |a: (f64, f64), b: (f64, f64)| -> f64 {
        if !(a.1 > 0.0 && b.1 > a.1) {
            return b.0;
        }
        let s = ((threshold.ln() - a.1.ln()) / (b.1.ln() - a.1.ln())).clamp(0.0, 1.0);
        a.0 + s * (b.0 - a.0)
    };
    let mut best = interp(c.before, c.after);
    let mut start = c.checkpoint;
    let mut window_end = c.after.0;
    let mut step = dt;
    for _ in 0..levels {
        step *= 0.5;
        let mut s = match ev.start_from(start.t, start.step, start.cur.clone(), start.v.clone()) {
            Ok(s) => s,
            Err(_) => break,
        };
        let mut prev = (s.t, ev.w_proxy(&s));
        let mut prev_state = s.clone();
        let mut first = true;
        let mut found = None;
        while s.t < window_end + step {
            if ev.advance(&mut s, step, first).is_err() {
                break;
            }
            first = false;
            let w = ev.w_proxy(&s);
            if w > threshold {
                found = Some((prev, (s.t, w)));
                break;
            }
            prev = (s.t, w);
            prev_state = s.clone();
        }
        match found {
            Some((a, b)) => {
                best = interp(a, b);
                window_end = b.0;
                start = prev_state;
            }
            None => break,
        }
    }
    best
}

/// Runs the configured evolution.
pub fn run(cfg: &SimConfig) -> Result<RunResult> {
    cfg.validate()?;
    let h = cfg.grid_spacing();
    match cfg.resolved_geometry() {
        Geometry::Radial => run_on(cfg, Radial::new(cfg.settings.n, h), Geometry::Radial),
        _ => run_on(cfg, Planar { n: cfg.settings.n, h }, Geometry::Planar),
    }
}

/// Empirical lifespan: `Some(T)` at blow-up or instability, `None` when the
/// run reached `t_max`.
pub fn estimate_lifespan(cfg: &SimConfig, epsilon: f64) -> Result<Option<f64>> {
    let mut c = cfg.clone();
    c.epsilon = epsilon;
    let r = run(&c)?;
    Ok(match r.outcome {
        Outcome::Completed => None,
        _ => Some(r.t_emp),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    /// `None` when the run reached `t_max`
    pub t_emp: Option<f64>,
    pub eps2_log1p_t: Option<f64>,
    pub inverse_h: f64,
    pub predicted_t: f64,
    /// `eps^2 log(1 + T_emp)` fell below `(1 - tol) / H`
    pub flagged: bool,
    /// the run blew up before the reference window ended
    pub invalid: bool,
}

pub const SCALING_HEADER: &str = "epsilon,H,predicted_T,empirical_T,eps2_log1pT,inverse_H,flagged,valid";

impl ScalingRow {
    pub fn csv_line(&self, h: f64) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "inf".to_string(), fmt_f64);
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt_f64(self.epsilon),
            fmt_f64(h),
            fmt_f64(self.predicted_t),
            opt(self.t_emp),
            opt(self.eps2_log1p_t),
            fmt_f64(self.inverse_h),
            self.flagged,
            !self.invalid
        )
    }
}

/// Runs the lifespan estimate for every `epsilon` in parallel.
pub fn scaling_study(cfg: &SimConfig, epsilons: &[f64], h: f64, tolerance: f64) -> Result<Vec<ScalingRow>> {
    let runs: Vec<Result<(f64, RunResult)>> = epsilons
        .par_iter()
        .map(|&eps| {
            let mut c = cfg.clone();
            c.epsilon = eps;
            Ok((eps, run(&c)?))
        })
        .collect();
    let inverse_h = if h > 0.0 { 1.0 / h } else { f64::INFINITY };
    runs.into_iter()
        .map(|r| {
            let (eps, res) = r?;
            let t_emp = match res.outcome {
                Outcome::Completed => None,
                _ => Some(res.t_emp),
            };
            let ratio = t_emp.map(|t| eps * eps * t.ln_1p());
            let invalid = t_emp.is_some_and(|t| t <= cfg.reference_time());
            let predicted_t = predict_lifespan(h.max(0.0), eps).map_or(f64::NAN, |e| e.predicted_t);
            Ok(ScalingRow {
                epsilon: eps,
                t_emp,
                eps2_log1p_t: ratio,
                inverse_h,
                predicted_t,
                flagged: !invalid && ratio.is_some_and(|q| q < (1.0 - tolerance) * inverse_h),
                invalid,
            })
        })
        .collect()
}

/// Probe placed on the characteristic labelled `(lambda, omega)` with the default start rule.
pub fn default_probe(component: usize, lambda: f64, omega: f64, epsilon: f64) -> ProbeSpec {
    ProbeSpec {
        component,
        lambda,
        omega,
        t0: StartRule::Default { epsilon }.t0(lambda),
    }
}
