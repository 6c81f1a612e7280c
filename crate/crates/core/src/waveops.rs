//! Linear reference solvers, commuting vector fields and weighted norms.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{InitialDataSet, ScalarField};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::nullform::SpeedVector;
use crate::quadrature::GaussLegendre;

/// Exponents of the weighted norms.
pub mod exponents {
    /// cone-distance exponent in `[v]`
    pub const BRACKET_CONE: f64 = 15.0 / 16.0;
    /// cone-distance exponent in `[[v]]`
    pub const DOUBLE_BRACKET_CONE: f64 = 1.0;
    /// radial exponent shared by both brackets
    pub const BRACKET_RADIAL: f64 = 1.0 / 2.0;
    /// exponent in `<v>`
    pub const ANGLE: f64 = 7.0 / 16.0;
    /// exponent in `<<v>>`
    pub const DOUBLE_ANGLE: f64 = 1.0 / 2.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub x: [f64; 2],
    pub t: f64,
}

impl SpacetimePoint {
    pub fn new(x: [f64; 2], t: f64) -> Self {
        Self { x, t }
    }

    pub fn radius(&self) -> f64 {
        self.x[0].hypot(self.x[1])
    }
}

/// Cone slab `||x| - c_i t| <= c_* t` containing a point, or the exterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    Exterior,
    /// 0-based component
    Cone(usize),
}

impl Region {
    /// 0 for the exterior, `i + 1` for the slab of component `i`.
    pub fn index(self) -> usize {
        match self {
            Region::Exterior => 0,
            Region::Cone(i) => i + 1,
        }
    }
}

pub fn region_classify(p: SpacetimePoint, speeds: &SpeedVector) -> Result<Region> {
    if !(p.t >= 0.0) || !p.t.is_finite() {
        return Err(Error::domain(format!(
            "time must be finite and nonnegative, got {}",
            p.t
        )));
    }
    let r = p.radius();
    let width = speeds.c_star() * p.t;
    Ok(speeds
        .as_slice()
        .iter()
        .position(|&c| (r - c * p.t).abs() <= width && p.t > 0.0)
        .map_or(Region::Exterior, Region::Cone))
}

/// `(1 + s + lambda)^(1 + mu) (1 + |lambda - c_j s|)^(1 + nu)` with `c_0 = 0`.
pub fn weight_z(region: Region, mu: f64, nu: f64, lambda: f64, s: f64, speeds: &SpeedVector) -> f64 {
    let c = match region {
        Region::Exterior => 0.0,
        Region::Cone(i) => speeds.get(i),
    };
    (1.0 + s + lambda).powf(1.0 + mu) * (1.0 + (lambda - c * s).abs()).powf(1.0 + nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonOptions {
    #[serde(default = "default_poisson_nodes")]
    pub n_radial: usize,
    #[serde(default = "default_poisson_nodes")]
    pub n_angular: usize,
}

fn default_poisson_nodes() -> usize {
    64
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            n_radial: default_poisson_nodes(),
            n_angular: default_poisson_nodes(),
        }
    }
}

/// Quadrature over the disk `|y| < R` about `x` in the variables
/// `y = R sin(psi) e_phi`, restricted to the disk `|x + y| < support`.
///
/// `visit(point, e_phi, sin_psi, weight)` receives nodes of
/// `int int (...) dpsi dphi`.
struct DiskRule {
    radial: GaussLegendre,
    arc: GaussLegendre,
    n_periodic: usize,
}

impl DiskRule {
    fn new(n_radial: usize, n_angular: usize) -> Self {
        Self {
            radial: GaussLegendre::new(n_radial.max(1)),
            arc: GaussLegendre::new(n_angular.max(1)),
            n_periodic: n_angular.max(1),
        }
    }

    fn visit<V: FnMut([f64; 2], [f64; 2], f64, f64)>(&self, x: [f64; 2], big_r: f64, support: f64, mut visit: V) {
        if big_r <= 0.0 || support <= 0.0 {
            return;
        }
        let a = x[0].hypot(x[1]);
        let lo = if support.is_finite() {
            (a - support).max(0.0)
        } else {
            0.0
        };
        let hi = if support.is_finite() {
            (a + support).min(big_r)
        } else {
            big_r
        };
        if lo >= hi {
            return;
        }
        let psi_lo = (lo / big_r).min(1.0).asin();
        let psi_hi = if hi >= big_r { FRAC_PI_2 } else { (hi / big_r).asin() };
        let toward_origin = (-x[1]).atan2(-x[0]);
        for (psi, wpsi) in self.radial.mapped(psi_lo, psi_hi) {
            let sin_psi = psi.sin();
            let rho = big_r * sin_psi;
            let full = !support.is_finite() || a == 0.0 || rho + a <= support;
            let mut node = |phi: f64, w: f64| {
                let e = [phi.cos(), phi.sin()];
                visit([x[0] + rho * e[0], x[1] + rho * e[1]], e, sin_psi, wpsi * w);
            };
            if full {
                let w = 2.0 * PI / self.n_periodic as f64;
                for k in 0..self.n_periodic {
                    node(w * k as f64, w);
                }
            } else {
                let cos_half = ((rho * rho + a * a - support * support) / (2.0 * rho * a)).clamp(-1.0, 1.0);
                let half = cos_half.acos();
                if half <= 0.0 {
                    continue;
                }
                for (phi, w) in self.arc.mapped(toward_origin - half, toward_origin + half) {
                    node(phi, w);
                }
            }
        }
    }
}

/// `W_h` and `d_t W_h` for the speed-`c` wave kernel, where `W_h` solves the
/// wave equation with data `(0, h)`.
fn kernel_pair(rule: &DiskRule, h: &dyn ScalarField, c: f64, x: [f64; 2], t: f64) -> (f64, f64) {
    let big_r = c * t;
    let (mut w, mut dw) = (0.0, 0.0);
    rule.visit(x, big_r, h.support_radius(), |p, e, s, wt| {
        let jet = h.line_jet(p, e);
        w += wt * s * jet.value();
        dw += wt * s * s * jet.derivative(1);
    });
    let w = t / (2.0 * PI) * w;
    (w, w / t + big_r / (2.0 * PI) * dw)
}

/// Homogeneous linear solution with data `(f^i, g^i)`: returns `(u, d_t u)`.
pub struct LinearSolver<'a> {
    data: &'a InitialDataSet,
    rule: DiskRule,
}

impl<'a> LinearSolver<'a> {
    pub fn new(data: &'a InitialDataSet, opts: PoissonOptions) -> Self {
        Self {
            data,
            rule: DiskRule::new(opts.n_radial, opts.n_angular),
        }
    }

    pub fn evaluate(&self, i: usize, c: f64, p: SpacetimePoint) -> Result<(f64, f64)> {
        self.data.check_component(i)?;
        if !(p.t >= 0.0) || !p.t.is_finite() || !(c > 0.0) {
            return Err(Error::domain(format!(
                "need t >= 0 and c > 0, got t = {}, c = {c}",
                p.t
            )));
        }
        let (f, g) = (self.data.f(i), self.data.g(i));
        if p.t == 0.0 {
            return Ok((f.value(p.x), g.value(p.x)));
        }
        let (wg, dwg) = kernel_pair(&self.rule, g, c, p.x, p.t);
        let (_, dwf) = kernel_pair(&self.rule, f, c, p.x, p.t);
        let mut wlap = 0.0;
        self.rule.visit(p.x, c * p.t, f.support_radius(), |q, _, s, wt| {
            wlap += wt * s * f.laplacian(q);
        });
        let wlap = p.t / (2.0 * PI) * wlap;
        Ok((dwf + wg, c * c * wlap + dwg))
    }
}

/// One-off evaluation of the homogeneous solution; see [`LinearSolver`].
pub fn linear_solution(data: &InitialDataSet, i: usize, c: f64, p: SpacetimePoint) -> Result<(f64, f64)> {
    LinearSolver::new(data, PoissonOptions::default()).evaluate(i, c, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuhamelOptions {
    pub n_time: usize,
    pub n_radial: usize,
    pub n_angular: usize,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        Self {
            n_time: 24,
            n_radial: 24,
            n_angular: 24,
        }
    }
}

/// Solution of `w_tt - c^2 Lap w = F` with zero data, at `p`.
pub fn duhamel<F>(forcing: F, c: f64, p: SpacetimePoint, opts: DuhamelOptions) -> Result<f64>
where
    F: Fn([f64; 2], f64) -> f64,
{
    if !(p.t >= 0.0) || !p.t.is_finite() || !(c > 0.0) {
        return Err(Error::domain(format!(
            "need t >= 0 and c > 0, got t = {}, c = {c}",
            p.t
        )));
    }
    if p.t == 0.0 {
        return Ok(0.0);
    }
    let time = GaussLegendre::new(opts.n_time.max(1));
    let rule = DiskRule::new(opts.n_radial, opts.n_angular);
    let mut total = 0.0;
    for (tau, wt) in time.mapped(0.0, p.t) {
        let s = p.t - tau;
        let mut inner = 0.0;
        rule.visit(p.x, c * tau, f64::INFINITY, |q, _, sin_psi, w| {
            inner += w * sin_psi * forcing(q, s);
        });
        total += wt * tau / (2.0 * PI) * inner;
    }
    Ok(total)
}

/// Scalar samples on a uniform origin-centred grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub t: f64,
    pub component: usize,
    /// row-major, `values[jy * nx + jx]`
    pub values: Vec<f64>,
    /// cells where the value is meaningful
    pub valid: Vec<bool>,
}

impl GridField {
    pub fn zeros(nx: usize, ny: usize, h: f64, t: f64, component: usize) -> Self {
        Self {
            nx,
            ny,
            h,
            t,
            component,
            values: vec![0.0; nx * ny],
            valid: vec![true; nx * ny],
        }
    }

    pub fn from_fn<F: Fn([f64; 2]) -> f64>(nx: usize, ny: usize, h: f64, t: f64, component: usize, f: F) -> Self {
        let mut g = Self::zeros(nx, ny, h, t, component);
        for jy in 0..ny {
            for jx in 0..nx {
                g.values[jy * nx + jx] = f(g.coords(jx, jy));
            }
        }
        g
    }

    pub fn coords(&self, jx: usize, jy: usize) -> [f64; 2] {
        [
            (jx as f64 - 0.5 * (self.nx as f64 - 1.0)) * self.h,
            (jy as f64 - 0.5 * (self.ny as f64 - 1.0)) * self.h,
        ]
    }

    pub fn get(&self, jx: usize, jy: usize) -> f64 {
        self.values[jy * self.nx + jx]
    }

    pub fn is_valid(&self, jx: usize, jy: usize) -> bool {
        self.valid[jy * self.nx + jx]
    }

    /// Largest `|x|` with every point of that disk inside the grid.
    pub fn inner_radius(&self) -> f64 {
        0.5 * (self.nx.min(self.ny) as f64 - 1.0) * self.h
    }

    fn same_shape(&self, other: &GridField) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.h == other.h
    }

    pub fn max_abs_valid(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Binary layout: `nx, ny` as u64, `h, t` as f64, component as u64, then
    /// row-major f64 values, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.nx as u64).to_le_bytes())?;
        w.write_all(&(self.ny as u64).to_le_bytes())?;
        w.write_all(&self.h.to_le_bytes())?;
        w.write_all(&self.t.to_le_bytes())?;
        w.write_all(&(self.component as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b)?;
            Ok(b)
        };
        let nx = u64::from_le_bytes(next(&mut r)?) as usize;
        let ny = u64::from_le_bytes(next(&mut r)?) as usize;
        let h = f64::from_le_bytes(next(&mut r)?);
        let t = f64::from_le_bytes(next(&mut r)?);
        let component = u64::from_le_bytes(next(&mut r)?) as usize;
        let n = nx
            .checked_mul(ny)
            .filter(|&n| n <= 1 << 32)
            .ok_or_else(|| Error::Parse(format!("implausible grid size {nx} x {ny}")))?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(Self {
            nx,
            ny,
            h,
            t,
            component,
            values,
            valid: vec![true; n],
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,value\n");
        for jy in 0..self.ny {
            for jx in 0..self.nx {
                let [x1, x2] = self.coords(jx, jy);
                out.push_str(&format!(
                    "{},{},{}\n",
                    fmt_f64(x1),
                    fmt_f64(x2),
                    fmt_f64(self.get(jx, jy))
                ));
            }
        }
        out
    }
}

/// The commuting fields `d_0, d_1, d_2, Omega = x_1 d_2 - x_2 d_1, S = t d_0 + x . grad`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    D0,
    D1,
    D2,
    Omega,
    Scaling,
}

impl Gamma {
    pub const ALL: [Gamma; 5] = [Gamma::D0, Gamma::D1, Gamma::D2, Gamma::Omega, Gamma::Scaling];

    pub fn from_index(k: usize) -> Result<Self> {
        Self::ALL
            .get(k)
            .copied()
            .ok_or_else(|| Error::domain(format!("generator index {k} out of range 0..4")))
    }

    fn uses_time(self) -> bool {
        matches!(self, Gamma::D0 | Gamma::Scaling)
    }
}

/// Consecutive time levels of one component, equally spaced by `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStack {
    pub levels: Vec<GridField>,
    pub dt: f64,
}

const D4: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];

impl FieldStack {
    pub fn new(levels: Vec<GridField>, dt: f64) -> Result<Self> {
        let first = levels
            .first()
            .ok_or_else(|| Error::domain("field stack needs at least one level"))?;
        if levels
            .iter()
            .any(|l| !l.same_shape(first) || l.values.len() != l.nx * l.ny)
        {
            return Err(Error::domain("field stack levels differ in shape"));
        }
        if levels.len() > 1 && !(dt > 0.0) {
            return Err(Error::domain(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { levels, dt })
    }

    pub fn center(&self) -> &GridField {
        &self.levels[self.levels.len() / 2]
    }

    fn spatial(g: &GridField, axis: usize) -> GridField {
        let mut out = GridField::zeros(g.nx, g.ny, g.h, g.t, g.component);
        for jy in 0..g.ny {
            for jx in 0..g.nx {
                let k = jy * g.nx + jx;
                let (j, n) = if axis == 0 { (jx, g.nx) } else { (jy, g.ny) };
                if j < 2 || j + 2 >= n {
                    out.valid[k] = false;
                    continue;
                }
                let stride = if axis == 0 { 1 } else { g.nx };
                let mut acc = 0.0;
                let mut ok = true;
                for (m, &w) in D4.iter().enumerate() {
                    let idx = k + m * stride - 2 * stride;
                    acc += w * g.values[idx];
                    ok &= g.valid[idx];
                }
                out.values[k] = acc / g.h;
                out.valid[k] = ok;
            }
        }
        out
    }

    fn time_derivative(&self, n: usize) -> GridField {
        let g = &self.levels[n];
        let mut out = GridField::zeros(g.nx, g.ny, g.h, g.t, g.component);
        for k in 0..g.values.len() {
            let mut acc = 0.0;
            let mut ok = true;
            for (m, &w) in D4.iter().enumerate() {
                let l = &self.levels[n + m - 2];
                acc += w * l.values[k];
                ok &= l.valid[k];
            }
            out.values[k] = acc / self.dt;
            out.valid[k] = ok;
        }
        out
    }

    /// Applies `op` to every level where its stencil fits; time derivatives
    /// drop two levels at each end.
    pub fn apply(&self, op: Gamma) -> Result<FieldStack> {
        let n = self.levels.len();
        if op.uses_time() && n < 5 {
            return Err(Error::domain(format!("{op:?} needs 5 time levels, stack has {n}")));
        }
        let range = if op.uses_time() { 2..n - 2 } else { 0..n };
        let levels = range
            .map(|l| {
                let g = &self.levels[l];
                match op {
                    Gamma::D0 => self.time_derivative(l),
                    Gamma::D1 => Self::spatial(g, 0),
                    Gamma::D2 => Self::spatial(g, 1),
                    Gamma::Omega => {
                        let (d1, d2) = (Self::spatial(g, 0), Self::spatial(g, 1));
                        combine(g, |x, _, k| x[0] * d2.values[k] - x[1] * d1.values[k], &[&d1, &d2])
                    }
                    Gamma::Scaling => {
                        let (d0, d1, d2) = (self.time_derivative(l), Self::spatial(g, 0), Self::spatial(g, 1));
                        combine(
                            g,
                            |x, t, k| t * d0.values[k] + x[0] * d1.values[k] + x[1] * d2.values[k],
                            &[&d0, &d1, &d2],
                        )
                    }
                }
            })
            .collect();
        Ok(FieldStack { levels, dt: self.dt })
    }
}

fn combine<F: Fn([f64; 2], f64, usize) -> f64>(g: &GridField, f: F, parts: &[&GridField]) -> GridField {
    let mut out = GridField::zeros(g.nx, g.ny, g.h, g.t, g.component);
    for jy in 0..g.ny {
        for jx in 0..g.nx {
            let k = jy * g.nx + jx;
            out.values[k] = f(g.coords(jx, jy), g.t, k);
            out.valid[k] = parts.iter().all(|p| p.valid[k]);
        }
    }
    out
}

/// `Gamma_k` applied at the centre level of the stack.
pub fn apply_gamma(stack: &FieldStack, k: usize) -> Result<GridField> {
    let op = Gamma::from_index(k)?;
    Ok(stack.apply(op)?.center().clone())
}

fn check_z_args(stack: &FieldStack, speeds: &SpeedVector, i: usize, alpha: usize) -> Result<f64> {
    if i >= speeds.m() {
        return Err(Error::domain(format!("component {} out of range", i + 1)));
    }
    if !(alpha == 1 || alpha == 2) {
        return Err(Error::domain(format!("Z index must be 1 or 2, got {alpha}")));
    }
    if stack.levels.len() < 5 {
        return Err(Error::domain("Z needs 5 time levels"));
    }
    Ok(speeds.get(i))
}

fn mask_origin(out: &mut GridField) {
    for jy in 0..out.ny {
        for jx in 0..out.nx {
            let x = out.coords(jx, jy);
            if x[0].hypot(x[1]) < 2.0 * out.h {
                out.valid[jy * out.nx + jx] = false;
            }
        }
    }
}

/// `Z_alpha^i = c_i d_alpha + (x_alpha/|x|) d_0` at the centre level; cells
/// with `|x| < 2h` are masked.
pub fn apply_z(stack: &FieldStack, speeds: &SpeedVector, i: usize, alpha: usize) -> Result<GridField> {
    let c = check_z_args(stack, speeds, i, alpha)?;
    let g = stack.center();
    let d0 = stack.apply(Gamma::D0)?.center().clone();
    let da = stack
        .apply(if alpha == 1 { Gamma::D1 } else { Gamma::D2 })?
        .center()
        .clone();
    let mut out = combine(
        g,
        |x, _, k| {
            let r = x[0].hypot(x[1]);
            c * da.values[k] + x[alpha - 1] / r * d0.values[k]
        },
        &[&d0, &da],
    );
    mask_origin(&mut out);
    Ok(out)
}

/// The same operator written through `d_alpha`, `S` and `Omega`:
/// `(c_i t - |x|)/t d_alpha + (x_alpha S -+ x_beta Omega)/(|x| t)`.
pub fn apply_z_decomposed(stack: &FieldStack, speeds: &SpeedVector, i: usize, alpha: usize) -> Result<GridField> {
    let c = check_z_args(stack, speeds, i, alpha)?;
    let g = stack.center();
    if !(g.t > 0.0) {
        return Err(Error::domain("decomposition needs t > 0"));
    }
    let s = stack.apply(Gamma::Scaling)?.center().clone();
    let om = stack.apply(Gamma::Omega)?.center().clone();
    let da = stack
        .apply(if alpha == 1 { Gamma::D1 } else { Gamma::D2 })?
        .center()
        .clone();
    let mut out = combine(
        g,
        |x, t, k| {
            let r = x[0].hypot(x[1]);
            let tail = if alpha == 1 {
                x[0] * s.values[k] - x[1] * om.values[k]
            } else {
                x[1] * s.values[k] + x[0] * om.values[k]
            };
            (c * t - r) / t * da.values[k] + tail / (r * t)
        },
        &[&s, &om, &da],
    );
    mask_origin(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `(1+|x|)^(1/2) (1+||x|-c t|)^(15/16)`
    Bracket,
    /// cone exponent 1
    DoubleBracket,
    /// `(1+|x|+t)^(7/16)`
    Angle,
    /// `(1+|x|+t)^(1/2)`
    DoubleAngle,
    L2,
    Sup,
}

/// Multi-indices `|a| <= k` as operator lists, applied right to left.
fn multi_indices(k: usize) -> Vec<Vec<Gamma>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::new();
        for a in &frontier {
            let last = a
                .last()
                .map_or(0, |g: &Gamma| Gamma::ALL.iter().position(|h| h == g).unwrap());
            for op in &Gamma::ALL[last..] {
                let mut b = a.clone();
                b.push(*op);
                next.push(b);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub const MAX_NORM_ORDER: usize = 2;

/// Discrete `|Gamma^a v|` summed over `|a| <= k`, then weighted and reduced
/// over valid cells at the centre level.
pub fn weighted_norm(stack: &FieldStack, kind: NormKind, speeds: &SpeedVector, i: usize, k: usize) -> Result<f64> {
    if k > MAX_NORM_ORDER {
        return Err(Error::domain(format!(
            "norm order {k} unsupported (max {MAX_NORM_ORDER})"
        )));
    }
    if i >= speeds.m() {
        return Err(Error::domain(format!("component {} out of range", i + 1)));
    }
    if k > 0 && stack.levels.len() < 4 * k + 1 {
        return Err(Error::domain(format!(
            "order {k} needs {} time levels, stack has {}",
            4 * k + 1,
            stack.levels.len()
        )));
    }
    let c = speeds.get(i);
    let parts: Vec<GridField> = multi_indices(k)
        .into_iter()
        .map(|ops| {
            let mut s = stack.clone();
            for op in ops.iter().rev() {
                s = s.apply(*op)?;
            }
            Ok(s.center().clone())
        })
        .collect::<Result<_>>()?;
    let g = stack.center();
    let t = g.t;
    let ok = |idx: usize| parts.iter().all(|p| p.valid[idx]);
    if kind == NormKind::L2 {
        let cell = g.h * g.h;
        return Ok(parts
            .iter()
            .map(|p| {
                (0..p.values.len())
                    .filter(|&idx| ok(idx))
                    .map(|idx| p.values[idx] * p.values[idx] * cell)
                    .sum::<f64>()
                    .sqrt()
            })
            .sum());
    }
    let mut best = 0.0f64;
    for jy in 0..g.ny {
        for jx in 0..g.nx {
            let idx = jy * g.nx + jx;
            if !ok(idx) {
                continue;
            }
            let x = g.coords(jx, jy);
            let r = x[0].hypot(x[1]);
            let w = match kind {
                NormKind::Bracket => {
                    (1.0 + r).powf(exponents::BRACKET_RADIAL) * (1.0 + (r - c * t).abs()).powf(exponents::BRACKET_CONE)
                }
                NormKind::DoubleBracket => {
                    (1.0 + r).powf(exponents::BRACKET_RADIAL)
                        * (1.0 + (r - c * t).abs()).powf(exponents::DOUBLE_BRACKET_CONE)
                }
                NormKind::Angle => (1.0 + r + t).powf(exponents::ANGLE),
                NormKind::DoubleAngle => (1.0 + r + t).powf(exponents::DOUBLE_ANGLE),
                NormKind::Sup => 1.0,
                NormKind::L2 => unreachable!(),
            };
            let sum: f64 = parts.iter().map(|p| p.values[idx].abs()).sum();
            best = best.max(w * sum);
        }
    }
    Ok(best)
}

/// `sup |x|^(1/2) |u| / ||u||_2` at the centre level.
pub fn sobolev_ratio(stack: &FieldStack, speeds: &SpeedVector, i: usize) -> Result<f64> {
    let l2 = weighted_norm(stack, NormKind::L2, speeds, i, 2)?;
    let g = stack.center();
    let mut sup = 0.0f64;
    for jy in 0..g.ny {
        for jx in 0..g.nx {
            let x = g.coords(jx, jy);
            sup = sup.max(x[0].hypot(x[1]).sqrt() * g.get(jx, jy).abs());
        }
    }
    if l2 == 0.0 {
        return Ok(0.0);
    }
    Ok(sup / l2)
}
