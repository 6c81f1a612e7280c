//! Nonlinearity coefficient tensors and the structural / null-condition checks
//! on them.
//!
//! Component indices are 0-based in the API (`0..m`) and 1-based in the JSON
//! coefficient files, which follow the usual mathematical labelling. Greek
//! (spacetime) indices are `0..=2` everywhere, `0` being time.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing positive wave speeds `c_1 < ... < c_m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SpeedVector(Vec<f64>);

impl SpeedVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::domain("at least one wave speed is required"));
        }
        if c.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::domain(format!(
                "wave speeds must be positive and finite, got {c:?}"
            )));
        }
        if c.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!(
                "wave speeds must be strictly increasing (0 < c_1 < c_2 < ... < c_m), got {c:?}"
            )));
        }
        Ok(Self(c))
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        *self.0.last().expect("non-empty")
    }

    /// One third of the smallest gap between consecutive speeds, with `c_0 = 0`.
    pub fn c_star(&self) -> f64 {
        let mut prev = 0.0;
        let mut gap = f64::INFINITY;
        for &c in &self.0 {
            gap = gap.min(c - prev);
            prev = c;
        }
        gap / 3.0
    }
}

impl<'de> Deserialize<'de> for SpeedVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        SpeedVector::new(v).map_err(serde::de::Error::custom)
    }
}

/// Which coefficient tensor an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tensor {
    /// `a_{lj}^{i,abg}`, indices `(i, l, j, alpha, beta, gamma)`
    A,
    /// `b_{jk}^{i,ab}`, indices `(i, j, k, alpha, beta)`
    B,
    /// `c_{ljk}^{i,abgd}`, indices `(i, l, j, k, alpha, beta, gamma, delta)`
    C,
    /// `d_{jkl}^{i,abg}`, indices `(i, j, k, l, alpha, beta, gamma)`
    D,
}

impl Tensor {
    /// (number of component indices, number of spacetime indices)
    pub fn arity(self) -> (usize, usize) {
        match self {
            Tensor::A => (3, 3),
            Tensor::B => (3, 2),
            Tensor::C => (4, 4),
            Tensor::D => (4, 3),
        }
    }
}

/// One line of a coefficient file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientRecord {
    pub tensor: Tensor,
    pub indices: Vec<usize>,
    pub value: f64,
}

/// Sparse storage of the quadratic and cubic nonlinearity coefficients.
/// Absent entries are zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoefficientSet {
    m: usize,
    pub(crate) a: BTreeMap<[usize; 6], f64>,
    pub(crate) b: BTreeMap<[usize; 5], f64>,
    pub(crate) c: BTreeMap<[usize; 8], f64>,
    pub(crate) d: BTreeMap<[usize; 7], f64>,
}

impl CoefficientSet {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            ..Default::default()
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Sets one entry. `indices` lists component indices (0-based) followed by
    /// spacetime indices, in the order documented on [`Tensor`]. Zero values
    /// remove the entry.
    pub fn set(&mut self, tensor: Tensor, indices: &[usize], value: f64) -> Result<()> {
        let (nc, ng) = tensor.arity();
        if indices.len() != nc + ng {
            return Err(Error::domain(format!(
                "tensor {tensor:?} takes {} indices, got {}",
                nc + ng,
                indices.len()
            )));
        }
        if let Some(&bad) = indices[..nc].iter().find(|&&k| k >= self.m) {
            return Err(Error::domain(format!(
                "component index {bad} out of range for m = {}",
                self.m
            )));
        }
        if let Some(&bad) = indices[nc..].iter().find(|&&k| k > 2) {
            return Err(Error::domain(format!("spacetime index {bad} out of range 0..=2")));
        }
        if !value.is_finite() {
            return Err(Error::domain("coefficient values must be finite"));
        }
        fn put<const N: usize>(map: &mut BTreeMap<[usize; N], f64>, idx: &[usize], v: f64) {
            let key: [usize; N] = idx.try_into().expect("length checked");
            if v == 0.0 {
                map.remove(&key);
            } else {
                map.insert(key, v);
            }
        }
        match tensor {
            Tensor::A => put(&mut self.a, indices, value),
            Tensor::B => put(&mut self.b, indices, value),
            Tensor::C => put(&mut self.c, indices, value),
            Tensor::D => put(&mut self.d, indices, value),
        }
        Ok(())
    }

    pub fn get(&self, tensor: Tensor, indices: &[usize]) -> f64 {
        fn lookup<const N: usize>(map: &BTreeMap<[usize; N], f64>, idx: &[usize]) -> f64 {
            <[usize; N]>::try_from(idx)
                .ok()
                .and_then(|k| map.get(&k).copied())
                .unwrap_or(0.0)
        }
        match tensor {
            Tensor::A => lookup(&self.a, indices),
            Tensor::B => lookup(&self.b, indices),
            Tensor::C => lookup(&self.c, indices),
            Tensor::D => lookup(&self.d, indices),
        }
    }

    /// Multiplies every entry of one tensor by `factor`.
    pub fn scaled(&self, tensor: Tensor, factor: f64) -> Self {
        let mut out = self.clone();
        match tensor {
            Tensor::A => out.a.values_mut().for_each(|v| *v *= factor),
            Tensor::B => out.b.values_mut().for_each(|v| *v *= factor),
            Tensor::C => out.c.values_mut().for_each(|v| *v *= factor),
            Tensor::D => out.d.values_mut().for_each(|v| *v *= factor),
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty() && self.b.is_empty() && self.c.is_empty() && self.d.is_empty()
    }

    /// Builds a set from file records (1-based component indices).
    pub fn from_records(m: usize, records: &[CoefficientRecord]) -> Result<Self> {
        let mut out = Self::new(m);
        for (n, r) in records.iter().enumerate() {
            let (nc, _) = r.tensor.arity();
            let mut idx = r.indices.clone();
            for k in idx.iter_mut().take(nc) {
                if *k == 0 {
                    return Err(Error::domain(format!(
                        "record {n}: component indices are 1-based, found 0"
                    )));
                }
                *k -= 1;
            }
            out.set(r.tensor, &idx, r.value)
                .map_err(|e| Error::domain(format!("record {n}: {e}")))?;
        }
        Ok(out)
    }

    /// Records in a canonical order (tensor, then indices), 1-based components.
    pub fn to_records(&self) -> Vec<CoefficientRecord> {
        fn emit<const N: usize>(out: &mut Vec<CoefficientRecord>, tensor: Tensor, map: &BTreeMap<[usize; N], f64>) {
            let (nc, _) = tensor.arity();
            for (k, &v) in map {
                let mut indices = k.to_vec();
                indices.iter_mut().take(nc).for_each(|x| *x += 1);
                out.push(CoefficientRecord {
                    tensor,
                    indices,
                    value: v,
                });
            }
        }
        let mut out = Vec::new();
        emit(&mut out, Tensor::A, &self.a);
        emit(&mut out, Tensor::B, &self.b);
        emit(&mut out, Tensor::C, &self.c);
        emit(&mut out, Tensor::D, &self.d);
        out
    }

    pub fn from_json_str(m: usize, s: &str) -> Result<Self> {
        let records: Vec<CoefficientRecord> =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("coefficient file: {e}")))?;
        Self::from_records(m, &records)
    }

    pub fn from_json_file(m: usize, path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json_str(m, &s)
    }

    fn check_pair(&self, i: usize, l: usize) -> Result<()> {
        if i >= self.m || l >= self.m {
            return Err(Error::domain(format!(
                "component pair ({i}, {l}) out of range for m = {}",
                self.m
            )));
        }
        Ok(())
    }
}

/// The four null forms built from the diagonal parts of the tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormKind {
    /// cubic, from `a_{ll}^{i}`
    Phi,
    /// quadratic, from `b_{ll}^{i}`
    Psi,
    /// quartic, from `c_{lll}^{i}`
    Theta,
    /// cubic, from `d_{lll}^{i}`
    Xi,
}

impl FormKind {
    pub const ALL: [FormKind; 4] = [FormKind::Phi, FormKind::Psi, FormKind::Theta, FormKind::Xi];

    pub fn degree(self) -> usize {
        match self {
            FormKind::Phi | FormKind::Xi => 3,
            FormKind::Psi => 2,
            FormKind::Theta => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullMode {
    /// every pair `(i, l)` on the cone of speed `c_l`
    Strong,
    /// only the self-interaction `l = i`
    Standard,
}

/// A cone point at which a form failed to vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub i: usize,
    pub l: usize,
    pub theta: f64,
    pub sign: i8,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullReport {
    pub form: FormKind,
    pub mode: NullMode,
    pub holds: bool,
    pub witnesses: Vec<Witness>,
}

/// Evaluates `Phi_l^i`, `Psi_l^i`, `Theta_l^i` or `Xi_l^i` at `x`.
pub fn eval_form(kind: FormKind, coeffs: &CoefficientSet, i: usize, l: usize, x: [f64; 3]) -> Result<f64> {
    coeffs.check_pair(i, l)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("form argument must be finite"));
    }
    Ok(form_value(kind, coeffs, i, l, x))
}

pub(crate) fn form_value(kind: FormKind, coeffs: &CoefficientSet, i: usize, l: usize, x: [f64; 3]) -> f64 {
    match kind {
        FormKind::Phi => coeffs
            .a
            .range([i, l, l, 0, 0, 0]..=[i, l, l, 2, 2, 2])
            .map(|(k, v)| v * x[k[3]] * x[k[4]] * x[k[5]])
            .sum(),
        FormKind::Psi => coeffs
            .b
            .range([i, l, l, 0, 0]..=[i, l, l, 2, 2])
            .map(|(k, v)| v * x[k[3]] * x[k[4]])
            .sum(),
        FormKind::Theta => coeffs
            .c
            .range([i, l, l, l, 0, 0, 0, 0]..=[i, l, l, l, 2, 2, 2, 2])
            .map(|(k, v)| v * x[k[4]] * x[k[5]] * x[k[6]] * x[k[7]])
            .sum(),
        FormKind::Xi => coeffs
            .d
            .range([i, l, l, l, 0, 0, 0]..=[i, l, l, l, 2, 2, 2])
            .map(|(k, v)| v * x[k[4]] * x[k[5]] * x[k[6]])
            .sum(),
    }
}

/// Sum of absolute values of the tensor entries feeding one form.
fn form_coefficient_mass(kind: FormKind, coeffs: &CoefficientSet, i: usize, l: usize) -> f64 {
    match kind {
        FormKind::Phi => coeffs
            .a
            .range([i, l, l, 0, 0, 0]..=[i, l, l, 2, 2, 2])
            .map(|(_, v)| v.abs())
            .sum(),
        FormKind::Psi => coeffs
            .b
            .range([i, l, l, 0, 0]..=[i, l, l, 2, 2])
            .map(|(_, v)| v.abs())
            .sum(),
        FormKind::Theta => coeffs
            .c
            .range([i, l, l, l, 0, 0, 0, 0]..=[i, l, l, l, 2, 2, 2, 2])
            .map(|(_, v)| v.abs())
            .sum(),
        FormKind::Xi => coeffs
            .d
            .range([i, l, l, l, 0, 0, 0]..=[i, l, l, l, 2, 2, 2])
            .map(|(_, v)| v.abs())
            .sum(),
    }
}

/// Relative zero tolerance for the cone test.
pub const NULL_ZERO_TOL: f64 = 1e-12;

/// Decides the strong or standard null condition for one form.
///
/// On the cone `X_0^2 = c_l^2 |X'|^2` homogeneity lets us restrict to
/// `X = (sigma c_l, cos theta, sin theta)`. There the form is a trigonometric
/// polynomial of degree `deg`, so `2 deg + 1` equispaced samples determine it
/// and its discrete Fourier coefficients decide vanishing exactly.
pub fn check_null(coeffs: &CoefficientSet, speeds: &SpeedVector, kind: FormKind, mode: NullMode) -> Result<NullReport> {
    if coeffs.m() != speeds.m() {
        return Err(Error::domain(format!(
            "coefficient set has m = {} but {} speeds were given",
            coeffs.m(),
            speeds.m()
        )));
    }
    let m = coeffs.m();
    let deg = kind.degree();
    let n = 2 * deg + 1;
    let mut witnesses = Vec::new();
    for i in 0..m {
        let ls: Vec<usize> = match mode {
            NullMode::Strong => (0..m).collect(),
            NullMode::Standard => vec![i],
        };
        for l in ls {
            let c = speeds.get(l);
            let mass = form_coefficient_mass(kind, coeffs, i, l);
            if mass == 0.0 {
                continue;
            }
            let tol = NULL_ZERO_TOL * (mass * c.max(1.0).powi(deg as i32) + 1.0);
            for sign in [1i8, -1] {
                let samples: Vec<(f64, f64)> = (0..n)
                    .map(|k| {
                        let theta = 2.0 * PI * k as f64 / n as f64;
                        let x = [sign as f64 * c, theta.cos(), theta.sin()];
                        (theta, form_value(kind, coeffs, i, l, x))
                    })
                    .collect();
                let max_coef = dft_magnitudes(&samples).into_iter().fold(0.0, f64::max);
                if max_coef > tol {
                    witnesses.extend(
                        samples
                            .iter()
                            .filter(|(_, v)| v.abs() > tol)
                            .map(|&(theta, value)| Witness {
                                i,
                                l,
                                theta,
                                sign,
                                value,
                            }),
                    );
                }
            }
        }
    }
    Ok(NullReport {
        form: kind,
        mode,
        holds: witnesses.is_empty(),
        witnesses,
    })
}

fn dft_magnitudes(samples: &[(f64, f64)]) -> Vec<f64> {
    let n = samples.len();
    (0..n)
        .map(|freq| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, &(_, v)) in samples.iter().enumerate() {
                let ang = -2.0 * PI * (freq * k) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re.hypot(im) / n as f64
        })
        .collect()
}

/// Polynomial coefficients of `A_l^{i,ab}(v)` keyed by
/// `(i, l, alpha, beta, monomial)`; a monomial is one or two `(j, gamma)`
/// slots of `v = du`, sorted.
type PolyKey = (usize, usize, usize, usize, Vec<(usize, usize)>);

fn a_polynomial(coeffs: &CoefficientSet) -> BTreeMap<PolyKey, f64> {
    let mut poly: BTreeMap<PolyKey, f64> = BTreeMap::new();
    for (k, &v) in &coeffs.a {
        let [i, l, j, al, be, ga] = *k;
        *poly.entry((i, l, al, be, vec![(j, ga)])).or_default() += v;
    }
    for (k, &v) in &coeffs.c {
        let [i, l, j, kk, al, be, ga, de] = *k;
        let mut mono = vec![(j, ga), (kk, de)];
        mono.sort_unstable();
        *poly.entry((i, l, al, be, mono)).or_default() += v;
    }
    poly
}

/// Checks `A_l^{i,ab} = A_i^{l,ab} = A_i^{l,ba}` for the linear (`a`) and
/// quadratic (`c`) parts of `A` as polynomials in `du`.
pub fn check_symmetry(coeffs: &CoefficientSet, tolerance: f64) -> bool {
    let poly = a_polynomial(coeffs);
    let get = |k: &PolyKey| poly.get(k).copied().unwrap_or(0.0);
    poly.keys().all(|key| {
        let (i, l, al, be, mono) = key;
        let v = get(key);
        let swapped = get(&(*l, *i, *al, *be, mono.clone()));
        let transposed = get(&(*l, *i, *be, *al, mono.clone()));
        (v - swapped).abs() <= tolerance && (v - transposed).abs() <= tolerance
    })
}

/// True when only `du^i d^2u^i` appears in the quasilinear quadratic part of
/// `F^i` and only squares `du^j du^j` in the semilinear quadratic part.
pub fn check_structure(coeffs: &CoefficientSet) -> bool {
    let a_ok = coeffs.a.keys().all(|&[i, l, j, ..]| j == i && l == i);
    let b_ok = coeffs.b.keys().all(|&[_, j, k, ..]| j == k);
    a_ok && b_ok
}

/// Upper bound on `sup_{|v| <= r} |A_l^{i,ab}(v)|` over all `(i, l, a, b)`.
///
/// With `A(v) = L.v + v^T Q v`, the bound is `|L| r + |Q|_F r^2`; it is
/// conservative (never below the true supremum).
pub fn smallness_bound(coeffs: &CoefficientSet, gradient_bound: f64) -> f64 {
    let r = gradient_bound.max(0.0);
    let mut lin: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    let mut quad: BTreeMap<(usize, usize, usize, usize), BTreeMap<[usize; 4], f64>> = BTreeMap::new();
    // each (j, gamma) appears once per key, so this accumulates |L|^2
    for (&[i, l, _, al, be, _], &v) in &coeffs.a {
        *lin.entry((i, l, al, be)).or_default() += v * v;
    }
    for (&[i, l, j, k, al, be, ga, de], &v) in &coeffs.c {
        // symmetrized quadratic form entry
        let (p, q) = ((j, ga), (k, de));
        let key = if p <= q {
            [p.0, p.1, q.0, q.1]
        } else {
            [q.0, q.1, p.0, p.1]
        };
        *quad.entry((i, l, al, be)).or_default().entry(key).or_default() += v;
    }
    let mut keys: BTreeSet<(usize, usize, usize, usize)> = lin.keys().copied().collect();
    keys.extend(quad.keys().copied());
    keys.into_iter()
        .map(|key| {
            let l_norm = lin.get(&key).copied().unwrap_or(0.0).sqrt();
            // ||Q_sym||_F: diagonal monomials appear once, off-diagonal ones are split in half twice
            let q_frob = quad.get(&key).map_or(0.0, |m| {
                m.iter()
                    .map(|(k, v)| {
                        if k[0] == k[2] && k[1] == k[3] {
                            v * v
                        } else {
                            2.0 * (v / 2.0) * (v / 2.0)
                        }
                    })
                    .sum::<f64>()
                    .sqrt()
            });
            l_norm * r + q_frob * r * r
        })
        .fold(0.0, f64::max)
}

/// The smallness threshold `min(1, c_1)^2 / (2m)`.
pub fn smallness_threshold(speeds: &SpeedVector) -> f64 {
    let c1 = speeds.get(0).min(1.0);
    c1 * c1 / (2.0 * speeds.m() as f64)
}

/// True when `|A_l^{i,ab}(v)|` stays below the smallness threshold for every
/// `|v| <= gradient_bound`, judged by the conservative [`smallness_bound`].
pub fn check_smallness(coeffs: &CoefficientSet, speeds: &SpeedVector, gradient_bound: f64) -> bool {
    smallness_bound(coeffs, gradient_bound) < smallness_threshold(speeds)
}

/// Summary of every assumption check, as printed by `check-null`.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub symmetry: bool,
    pub structure: bool,
    pub null: Vec<NullReport>,
}

impl AssumptionReport {
    pub fn evaluate(coeffs: &CoefficientSet, speeds: &SpeedVector) -> Result<Self> {
        let mut null = Vec::new();
        for kind in FormKind::ALL {
            for mode in [NullMode::Strong, NullMode::Standard] {
                null.push(check_null(coeffs, speeds, kind, mode)?);
            }
        }
        Ok(Self {
            symmetry: check_symmetry(coeffs, 1e-12),
            structure: check_structure(coeffs),
            null,
        })
    }

    fn holds(&self, kind: FormKind, mode: NullMode) -> bool {
        self.null.iter().any(|r| r.form == kind && r.mode == mode && r.holds)
    }

    /// Null hypotheses of the lifespan theorem: Phi and Psi strong, Xi standard.
    pub fn lifespan_hypotheses_hold(&self) -> bool {
        self.holds(FormKind::Phi, NullMode::Strong)
            && self.holds(FormKind::Psi, NullMode::Strong)
            && self.holds(FormKind::Xi, NullMode::Standard)
    }
}
