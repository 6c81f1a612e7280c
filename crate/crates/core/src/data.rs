//! Compactly supported initial data `(f^i, g^i)`.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;

/// A real scalar field on the plane that vanishes outside a disk about the
/// origin.
pub trait ScalarField: Send + Sync + Debug {
    fn value(&self, x: [f64; 2]) -> f64;

    /// Radius of a disk about the origin containing the support.
    fn support_radius(&self) -> f64;

    /// Taylor jet of `s -> h(p + s * dir)` at `s = 0`.
    ///
    /// The default uses centered differences of [`ScalarField::value`] with
    /// step `1e-3 * support_radius`; fields with closed forms should override.
    fn line_jet(&self, p: [f64; 2], dir: [f64; 2]) -> Jet {
        let h = 1e-3 * self.support_radius().max(1e-3);
        let at = |k: f64| self.value([p[0] + k * h * dir[0], p[1] + k * h * dir[1]]);
        let (m2, m1, z, p1, p2) = (at(-2.0), at(-1.0), at(0.0), at(1.0), at(2.0));
        let d1 = (p1 - m1) / (2.0 * h);
        let d2 = (p1 - 2.0 * z + m1) / (h * h);
        let d3 = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * h * h * h);
        let d4 = (p2 - 4.0 * p1 + 6.0 * z - 4.0 * m1 + m2) / (h * h * h * h);
        Jet([z, d1, d2 / 2.0, d3 / 6.0, d4 / 24.0])
    }

    /// True when the field is invariant under rotations about the origin.
    fn is_radial(&self) -> bool {
        false
    }

    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.line_jet(x, [1.0, 0.0]).derivative(1),
            self.line_jet(x, [0.0, 1.0]).derivative(1),
        ]
    }

    fn laplacian(&self, x: [f64; 2]) -> f64 {
        self.line_jet(x, [1.0, 0.0]).derivative(2) + self.line_jet(x, [0.0, 1.0]).derivative(2)
    }
}

/// Identically zero field.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl ScalarField for ZeroField {
    fn value(&self, _x: [f64; 2]) -> f64 {
        0.0
    }
    fn support_radius(&self) -> f64 {
        0.0
    }
    fn line_jet(&self, _p: [f64; 2], _dir: [f64; 2]) -> Jet {
        Jet::ZERO
    }
    fn is_radial(&self) -> bool {
        true
    }
}

/// Angular modulation factor `1 + amplitude * Re(w^order)` where
/// `w = e^{-i phase} (x - center) / radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulation {
    pub amplitude: f64,
    pub order: u32,
    #[serde(default)]
    pub phase: f64,
}

/// `A * (1 + modulation) * exp(-1 / (1 - |x - center|^2 / radius^2))` inside
/// the disk, zero outside. The modulation factor is a polynomial in `x`, so
/// the field stays smooth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub amplitude: f64,
    pub radius: f64,
    pub center: [f64; 2],
    pub modulation: Option<Modulation>,
}

impl Bump {
    pub fn radial(amplitude: f64, radius: f64) -> Self {
        Self {
            amplitude,
            radius,
            center: [0.0, 0.0],
            modulation: None,
        }
    }

    fn jet_at(&self, zr: Jet, zi: Jet) -> Jet {
        let q = zr * zr + zi * zi;
        if q.value() >= 1.0 {
            return Jet::ZERO;
        }
        let envelope = (Jet::constant(1.0) - q).recip().scale(-1.0).exp();
        let factor = match self.modulation {
            Some(m) if m.amplitude != 0.0 && m.order > 0 => {
                let (s, c) = m.phase.sin_cos();
                let wr = zr.scale(c) + zi.scale(s);
                let wi = zi.scale(c) - zr.scale(s);
                let (mut pr, mut pi) = (Jet::constant(1.0), Jet::ZERO);
                for _ in 0..m.order {
                    let nr = pr * wr - pi * wi;
                    let ni = pr * wi + pi * wr;
                    pr = nr;
                    pi = ni;
                }
                Jet::constant(1.0) + pr.scale(m.amplitude)
            }
            _ => Jet::constant(1.0),
        };
        (factor * envelope).scale(self.amplitude)
    }
}

impl ScalarField for Bump {
    fn value(&self, x: [f64; 2]) -> f64 {
        let zr = (x[0] - self.center[0]) / self.radius;
        let zi = (x[1] - self.center[1]) / self.radius;
        self.jet_at(Jet::constant(zr), Jet::constant(zi)).value()
    }

    fn support_radius(&self) -> f64 {
        self.center[0].hypot(self.center[1]) + self.radius
    }

    fn line_jet(&self, p: [f64; 2], dir: [f64; 2]) -> Jet {
        let zr = Jet::affine((p[0] - self.center[0]) / self.radius, dir[0] / self.radius);
        let zi = Jet::affine((p[1] - self.center[1]) / self.radius, dir[1] / self.radius);
        self.jet_at(zr, zi)
    }

    fn is_radial(&self) -> bool {
        self.center == [0.0, 0.0] && self.modulation.is_none_or(|m| m.amplitude == 0.0)
    }
}

/// Annular profile `A * exp(k - k / (1 - q^2))` with `q = (|x| - radius) / width`,
/// zero for `|q| >= 1`. Its peak value is `A`; larger `k` concentrates it
/// toward the middle of the annulus.
///
/// With `velocity = Some(c)` the field is instead `-c (phi' + phi / (2|x|))`
/// for the radial profile `phi`, the time derivative that pairs with the
/// profile as position data to give a mostly outgoing wave of speed `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ring {
    pub amplitude: f64,
    pub radius: f64,
    pub width: f64,
    pub sharpness: f64,
    pub velocity: Option<f64>,
}

impl Ring {
    fn jet_of_radius(&self, rho: Jet) -> Jet {
        let q = (rho - Jet::constant(self.radius)).scale(1.0 / self.width);
        if q.value().abs() >= 1.0 {
            return Jet::ZERO;
        }
        let inv = (Jet::constant(1.0) - q * q).recip();
        let k = self.sharpness;
        let phi = (Jet::constant(k) - inv.scale(k)).exp().scale(self.amplitude);
        match self.velocity {
            None => phi,
            Some(c) => {
                let dphi = phi * q * inv * inv.scale(-2.0 * k / self.width);
                (dphi + phi * rho.recip().scale(0.5)).scale(-c)
            }
        }
    }
}

impl ScalarField for Ring {
    fn value(&self, x: [f64; 2]) -> f64 {
        self.jet_of_radius(Jet::constant(x[0].hypot(x[1]))).value()
    }

    fn support_radius(&self) -> f64 {
        self.radius + self.width
    }

    fn line_jet(&self, p: [f64; 2], dir: [f64; 2]) -> Jet {
        let r2 = p[0] * p[0] + p[1] * p[1];
        // the annulus excludes a disk about the origin
        if r2.sqrt() <= self.radius - self.width {
            return Jet::ZERO;
        }
        let x = Jet::affine(p[0], dir[0]);
        let y = Jet::affine(p[1], dir[1]);
        self.jet_of_radius((x * x + y * y).sqrt())
    }

    fn is_radial(&self) -> bool {
        true
    }
}

fn unit() -> f64 {
    1.0
}

/// Serializable description of one built-in field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Bump {
        amplitude: f64,
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modulation: Option<Modulation>,
    },
    Ring {
        amplitude: f64,
        radius: f64,
        width: f64,
        #[serde(default = "unit")]
        sharpness: f64,
    },
    /// Velocity companion of a `ring` position field; see [`Ring`].
    OutgoingRing {
        amplitude: f64,
        radius: f64,
        width: f64,
        #[serde(default = "unit")]
        sharpness: f64,
        #[serde(default = "unit")]
        speed: f64,
    },
}

impl FieldSpec {
    pub fn build(&self) -> Result<Arc<dyn ScalarField>> {
        match *self {
            FieldSpec::Zero => Ok(Arc::new(ZeroField)),
            FieldSpec::Bump {
                amplitude,
                radius,
                center,
                modulation,
            } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::domain(format!("bump radius must be positive, got {radius}")));
                }
                if !amplitude.is_finite() || !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::domain("bump parameters must be finite"));
                }
                Ok(Arc::new(Bump {
                    amplitude,
                    radius,
                    center,
                    modulation,
                }))
            }
            FieldSpec::Ring {
                amplitude,
                radius,
                width,
                sharpness,
            } => build_ring(amplitude, radius, width, sharpness, None),
            FieldSpec::OutgoingRing {
                amplitude,
                radius,
                width,
                sharpness,
                speed,
            } => {
                if !(speed > 0.0) || !speed.is_finite() {
                    return Err(Error::domain(format!("ring speed must be positive, got {speed}")));
                }
                build_ring(amplitude, radius, width, sharpness, Some(speed))
            }
        }
    }

    /// The same field rotated by `angle` about the origin.
    pub fn rotated(&self, angle: f64) -> FieldSpec {
        match self {
            FieldSpec::Zero | FieldSpec::Ring { .. } | FieldSpec::OutgoingRing { .. } => self.clone(),
            FieldSpec::Bump {
                amplitude,
                radius,
                center,
                modulation,
            } => {
                let (s, c) = angle.sin_cos();
                FieldSpec::Bump {
                    amplitude: *amplitude,
                    radius: *radius,
                    center: [c * center[0] - s * center[1], s * center[0] + c * center[1]],
                    modulation: modulation.map(|m| Modulation {
                        phase: m.phase + angle,
                        ..m
                    }),
                }
            }
        }
    }
}

fn build_ring(
    amplitude: f64,
    radius: f64,
    width: f64,
    sharpness: f64,
    velocity: Option<f64>,
) -> Result<Arc<dyn ScalarField>> {
    if !(width > 0.0) || !(radius > width) || !radius.is_finite() {
        return Err(Error::domain(format!(
            "ring needs 0 < width < radius, got width {width} and radius {radius}"
        )));
    }
    if !(sharpness > 0.0) || !sharpness.is_finite() || !amplitude.is_finite() {
        return Err(Error::domain(
            "ring amplitude and sharpness must be finite, sharpness positive",
        ));
    }
    Ok(Arc::new(Ring {
        amplitude,
        radius,
        width,
        sharpness,
        velocity,
    }))
}

/// Initial data for an m-component system (amplitude factor excluded).
#[derive(Debug, Clone)]
pub struct InitialDataSet {
    f: Vec<Arc<dyn ScalarField>>,
    g: Vec<Arc<dyn ScalarField>>,
    support: f64,
}

impl InitialDataSet {
    pub fn new(f: Vec<Arc<dyn ScalarField>>, g: Vec<Arc<dyn ScalarField>>) -> Result<Self> {
        if f.is_empty() || f.len() != g.len() {
            return Err(Error::domain(format!(
                "need one (f, g) pair per component, got {} f and {} g",
                f.len(),
                g.len()
            )));
        }
        let support = f.iter().chain(&g).map(|h| h.support_radius()).fold(0.0, f64::max);
        // keep a nonzero radius so quadrature intervals are never empty
        let support = if support > 0.0 { support } else { 1.0 };
        Ok(Self { f, g, support })
    }

    pub fn from_specs(f: &[FieldSpec], g: &[FieldSpec]) -> Result<Self> {
        let f = f.iter().map(FieldSpec::build).collect::<Result<Vec<_>>>()?;
        let g = g.iter().map(FieldSpec::build).collect::<Result<Vec<_>>>()?;
        Self::new(f, g)
    }

    pub fn zeros(m: usize) -> Self {
        let z: Arc<dyn ScalarField> = Arc::new(ZeroField);
        Self::new(vec![z.clone(); m], vec![z; m]).expect("m >= 1")
    }

    pub fn m(&self) -> usize {
        self.f.len()
    }

    /// The common support radius `M`.
    pub fn support_radius(&self) -> f64 {
        self.support
    }

    pub fn f(&self, i: usize) -> &dyn ScalarField {
        self.f[i].as_ref()
    }

    pub fn g(&self, i: usize) -> &dyn ScalarField {
        self.g[i].as_ref()
    }

    pub fn is_radial(&self) -> bool {
        self.f.iter().chain(&self.g).all(|h| h.is_radial())
    }

    pub(crate) fn check_component(&self, i: usize) -> Result<()> {
        if i >= self.m() {
            return Err(Error::domain(format!(
                "component {i} out of range for {} components",
                self.m()
            )));
        }
        Ok(())
    }
}
