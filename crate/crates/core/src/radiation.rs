//! Radon transforms of the initial data and the Friedlander radiation field.
//!
//! For the speed-`c` wave equation the radiation field of component `i` is
//!
//! ```text
//! F(rho, w) = 1/(2 sqrt(2) pi) * int_rho^inf (s - rho)^(-1/2) (R_g(s, w)/c - d_s R_f(s, w)) ds
//! ```
//!
//! The substitution `s = rho + u^2` turns this into the smooth integral
//! `1/(sqrt(2) pi) * int_0^sqrt(M - rho) G(rho + u^2) du`, and rho-derivatives
//! fall on `G`. The s-derivatives of `R_h` are Radon transforms of directional
//! derivatives of `h`, obtained exactly from the fields' Taylor jets.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InitialDataSet, ScalarField};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::jet::Jet;
use crate::quadrature::GaussLegendre;

/// Quadrature resolution for Radon and Abel integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadonOptions {
    /// nodes along each chord
    #[serde(default = "default_n_line")]
    pub n_line: usize,
    /// nodes in the Abel integral
    #[serde(default = "default_n_abel")]
    pub n_abel: usize,
}

fn default_n_line() -> usize {
    128
}
fn default_n_abel() -> usize {
    96
}

impl Default for RadonOptions {
    fn default() -> Self {
        Self {
            n_line: default_n_line(),
            n_abel: default_n_abel(),
        }
    }
}

impl RadonOptions {
    /// Same options with both node counts multiplied by `k`.
    pub fn refined(self, k: usize) -> Self {
        Self {
            n_line: self.n_line * k,
            n_abel: self.n_abel * k,
        }
    }
}

/// Prebuilt quadrature rules for repeated radiation-field evaluation.
#[derive(Debug, Clone)]
pub struct Radiation {
    line: GaussLegendre,
    abel: GaussLegendre,
}

impl Radiation {
    pub fn new(opts: RadonOptions) -> Self {
        Self {
            line: GaussLegendre::new(opts.n_line.max(1)),
            abel: GaussLegendre::new(opts.n_abel.max(1)),
        }
    }

    /// Jet in `s` of `R_h(s, w)`; coefficient `k` is `d_s^k R_h / k!`.
    pub fn radon_jet(&self, h: &dyn ScalarField, s: f64, omega: f64) -> Jet {
        let m = h.support_radius();
        if s.abs() >= m || !s.is_finite() {
            return Jet::ZERO;
        }
        let half = (m * m - s * s).sqrt();
        let (sw, cw) = omega.sin_cos();
        let dir = [cw, sw];
        let perp = [-sw, cw];
        let mut acc = Jet::ZERO;
        for (tau, w) in self.line.mapped(-half, half) {
            let p = [s * cw + tau * perp[0], s * sw + tau * perp[1]];
            acc = acc + h.line_jet(p, dir).scale(w);
        }
        acc
    }

    /// Line integral of `h` over `{y : w . y = s}`.
    pub fn radon_transform(&self, h: &dyn ScalarField, s: f64, omega: f64) -> f64 {
        self.radon_jet(h, s, omega).value()
    }

    /// `(F, d_rho F, d_rho^2 F)` for component `i` propagating at speed `c`.
    pub fn field_with_derivatives(
        &self,
        data: &InitialDataSet,
        i: usize,
        c: f64,
        rho: f64,
        omega: f64,
    ) -> Result<[f64; 3]> {
        data.check_component(i)?;
        if !(c > 0.0) {
            return Err(Error::domain(format!("speed must be positive, got {c}")));
        }
        let m = data.support_radius();
        if rho >= m {
            return Ok([0.0; 3]);
        }
        let (f, g) = (data.f(i), data.g(i));
        let source = |s: f64| -> [f64; 3] {
            let rf = self.radon_jet(f, s, omega);
            let rg = self.radon_jet(g, s, omega);
            [
                rg.derivative(0) / c - rf.derivative(1),
                rg.derivative(1) / c - rf.derivative(2),
                rg.derivative(2) / c - rf.derivative(3),
            ]
        };
        let mut acc = [0.0; 3];
        if rho >= -m {
            // s = rho + u^2 removes the inverse square root
            let top = (m - rho).sqrt();
            for (u, w) in self.abel.mapped(0.0, top) {
                let gk = source(rho + u * u);
                for k in 0..3 {
                    acc[k] += w * gk[k];
                }
            }
            let norm = 1.0 / (SQRT_2 * PI);
            Ok(acc.map(|v| v * norm))
        } else {
            // the kernel is smooth on the support [-M, M]
            for (s, w) in self.abel.mapped(-m, m) {
                let gk = source(s);
                let kernel = w / (s - rho).sqrt();
                for k in 0..3 {
                    acc[k] += kernel * gk[k];
                }
            }
            let norm = 1.0 / (2.0 * SQRT_2 * PI);
            Ok(acc.map(|v| v * norm))
        }
    }

    pub fn radiation_field(&self, data: &InitialDataSet, i: usize, c: f64, rho: f64, omega: f64) -> Result<f64> {
        Ok(self.field_with_derivatives(data, i, c, rho, omega)?[0])
    }

    /// `(d_rho F, d_rho^2 F)`.
    pub fn radiation_derivatives(
        &self,
        data: &InitialDataSet,
        i: usize,
        c: f64,
        rho: f64,
        omega: f64,
    ) -> Result<(f64, f64)> {
        let [_, d1, d2] = self.field_with_derivatives(data, i, c, rho, omega)?;
        Ok((d1, d2))
    }
}

/// Tabulated `F`, `F_rho`, `F_rhorho` on a uniform `(rho, omega)` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiationTable {
    pub component: usize,
    pub speed: f64,
    pub rho: Vec<f64>,
    pub omega: Vec<f64>,
    /// row-major over `(rho, omega)`
    values: Vec<[f64; 3]>,
    /// smallest `C_l` with `|d^l F| <= C_l (1 + |rho|)^(-1/2 - l)` over the table
    pub decay: [f64; 3],
}

impl RadiationTable {
    pub fn at(&self, r: usize, w: usize) -> [f64; 3] {
        self.values[r * self.omega.len() + w]
    }

    pub fn n_rho(&self) -> usize {
        self.rho.len()
    }

    pub fn n_omega(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,omega,F,F_rho,F_rhorho\n");
        for (r, &rho) in self.rho.iter().enumerate() {
            for (w, &om) in self.omega.iter().enumerate() {
                let v = self.at(r, w);
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f64(rho),
                    fmt_f64(om),
                    fmt_f64(v[0]),
                    fmt_f64(v[1]),
                    fmt_f64(v[2])
                ));
            }
        }
        out
    }
}

/// Uniform grid of `n` points from `lo` to `hi` inclusive.
pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + step * k as f64).collect()
}

/// Angles `2 pi k / n`.
pub(crate) fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

/// Tabulates the radiation field of component `i` over `rho in [rho_min, M]`.
pub fn build_radiation_table(
    rad: &Radiation,
    data: &InitialDataSet,
    i: usize,
    speed: f64,
    rho_min: f64,
    n_rho: usize,
    n_omega: usize,
) -> Result<RadiationTable> {
    data.check_component(i)?;
    let m = data.support_radius();
    if !(rho_min < m) {
        return Err(Error::domain(format!(
            "rho_min = {rho_min} must lie below the support radius {m}"
        )));
    }
    if n_rho < 2 || n_omega < 1 {
        return Err(Error::domain(format!(
            "table needs n_rho >= 2 and n_omega >= 1, got {n_rho} x {n_omega}"
        )));
    }
    let rho = linspace(rho_min, m, n_rho);
    let omega = angle_grid(n_omega);
    let values = (0..n_rho * n_omega)
        .into_par_iter()
        .map(|k| {
            let (r, w) = (k / n_omega, k % n_omega);
            let v = rad.field_with_derivatives(data, i, speed, rho[r], omega[w])?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::numerical(format!(
                    "non-finite radiation field at rho = {}, omega = {}",
                    rho[r], omega[w]
                )));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut decay = [0.0f64; 3];
    for (k, v) in values.iter().enumerate() {
        let weight = 1.0 + rho[k / n_omega].abs();
        for l in 0..3 {
            decay[l] = decay[l].max(v[l].abs() * weight.powf(0.5 + l as f64));
        }
    }
    Ok(RadiationTable {
        component: i,
        speed,
        rho,
        omega,
        values,
        decay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Bump, FieldSpec, ZeroField};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    #[derive(Debug)]
    struct Disk(f64);
    impl ScalarField for Disk {
        fn value(&self, x: [f64; 2]) -> f64 {
            if x[0].hypot(x[1]) < self.0 {
                1.0
            } else {
                0.0
            }
        }
        fn support_radius(&self) -> f64 {
            self.0
        }
    }

    fn bump_g() -> InitialDataSet {
        InitialDataSet::new(vec![Arc::new(ZeroField)], vec![Arc::new(Bump::radial(1.0, 1.0))]).unwrap()
    }

    #[test]
    fn disk_chord_lengths() {
        let rad = Radiation::new(RadonOptions::default());
        let d = Disk(1.0);
        assert_relative_eq!(rad.radon_transform(&d, 0.0, 0.3), 2.0, max_relative = 1e-13);
        assert_relative_eq!(rad.radon_transform(&d, 0.6, 1.1), 1.6, max_relative = 1e-12);
    }

    #[test]
    fn outside_support_is_exactly_zero() {
        let rad = Radiation::new(RadonOptions::default());
        let b = Bump::radial(1.0, 2.0);
        assert_eq!(rad.radon_transform(&b, 3.0, 0.2), 0.0);
        assert_eq!(rad.radon_transform(&b, -2.0, 0.2), 0.0);
    }

    #[test]
    fn radial_field_radon_is_angle_independent() {
        let rad = Radiation::new(RadonOptions::default());
        let b = Bump::radial(1.0, 1.5);
        let a = rad.radon_transform(&b, 0.4, 0.0);
        let c = rad.radon_transform(&b, 0.4, 2.1);
        assert_relative_eq!(a, c, max_relative = 1e-13);
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let rad = Radiation::new(RadonOptions::default());
        let data = InitialDataSet::zeros(2);
        for rho in [-3.0, 0.0, 0.5] {
            assert_eq!(rad.field_with_derivatives(&data, 1, 2.0, rho, 0.7).unwrap(), [0.0; 3]);
        }
    }

    #[test]
    fn field_vanishes_at_and_beyond_support() {
        let rad = Radiation::new(RadonOptions::default());
        let data = bump_g();
        assert_eq!(rad.field_with_derivatives(&data, 0, 1.0, 1.0, 0.0).unwrap(), [0.0; 3]);
        assert_eq!(rad.radiation_derivatives(&data, 0, 1.0, 4.0, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn refined_quadrature_agrees() {
        let data = bump_g();
        let base = Radiation::new(RadonOptions::default());
        let fine = Radiation::new(RadonOptions::default().refined(10));
        let a = base.radiation_field(&data, 0, 1.0, 0.0, 0.0).unwrap();
        let b = fine.radiation_field(&data, 0, 1.0, 0.0, 0.0).unwrap();
        assert!(a.abs() > 1e-3);
        assert_relative_eq!(a, b, max_relative = 1e-6);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let data = InitialDataSet::from_specs(
            &[FieldSpec::Bump {
                amplitude: 0.5,
                radius: 1.0,
                center: [0.1, 0.0],
                modulation: None,
            }],
            &[FieldSpec::Bump {
                amplitude: 1.0,
                radius: 1.0,
                center: [0.0, 0.0],
                modulation: None,
            }],
        )
        .unwrap();
        let rad = Radiation::new(RadonOptions::default());
        let h = 1e-3;
        let f = |r: f64| rad.radiation_field(&data, 0, 1.0, r, 0.3).unwrap();
        let (d1, d2) = rad.radiation_derivatives(&data, 0, 1.0, 0.3, 0.3).unwrap();
        let fd1 = (f(0.3 + h) - f(0.3 - h)) / (2.0 * h);
        let fd2 = (f(0.3 + h) - 2.0 * f(0.3) + f(0.3 - h)) / (h * h);
        assert!((d1 - fd1).abs() < 1e-4, "{d1} vs {fd1}");
        assert!((d2 - fd2).abs() < 1e-4, "{d2} vs {fd2}");
    }

    #[test]
    fn derivatives_continuous_across_branch_point() {
        // rho = -M switches between the two integration forms
        let data = bump_g();
        let rad = Radiation::new(RadonOptions::default());
        let a = rad.field_with_derivatives(&data, 0, 1.0, -1.0 - 1e-9, 0.0).unwrap();
        let b = rad.field_with_derivatives(&data, 0, 1.0, -1.0 + 1e-9, 0.0).unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-7 * (1.0 + a[k].abs()), "{k}: {a:?} {b:?}");
        }
    }

    #[test]
    fn table_zero_and_radial() {
        let rad = Radiation::new(RadonOptions { n_line: 48, n_abel: 48 });
        let t = build_radiation_table(&rad, &InitialDataSet::zeros(1), 0, 1.0, -2.0, 5, 3).unwrap();
        assert!((0..5).all(|r| (0..3).all(|w| t.at(r, w) == [0.0; 3])));
        let t = build_radiation_table(&rad, &bump_g(), 0, 1.0, -3.0, 9, 5).unwrap();
        for r in 0..9 {
            for w in 1..5 {
                for k in 0..3 {
                    assert!((t.at(r, w)[k] - t.at(r, 0)[k]).abs() < 1e-9);
                }
            }
        }
        assert!(t.decay.iter().all(|c| c.is_finite() && *c > 0.0));
    }

    #[test]
    fn table_rejects_bad_grids() {
        let rad = Radiation::new(RadonOptions::default());
        let d = bump_g();
        assert!(build_radiation_table(&rad, &d, 0, 1.0, 2.0, 10, 1).is_err());
        assert!(build_radiation_table(&rad, &d, 0, 1.0, -1.0, 1, 1).is_err());
        assert!(build_radiation_table(&rad, &d, 0, 1.0, -1.0, 4, 0).is_err());
        assert!(build_radiation_table(&rad, &d, 3, 1.0, -1.0, 4, 1).is_err());
    }
}
