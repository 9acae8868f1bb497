use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Batch;
use crate::error::{config_err, Error, Result};

/// The eight 2-D benchmark datasets.
///
/// Raw generators (before standardisation):
///
/// | name | definition |
/// |------|------------|
/// | `swissroll` | `theta ~ U[1.5 pi, 4.5 pi]`, `(theta cos theta, theta sin theta) / 3 + N(0, 0.05^2)` |
/// | `circles` | radius 1 or 0.5 (equal odds), uniform angle, `+ N(0, 0.08^2)` |
/// | `rings` | radius in {0.25, 0.5, 0.75, 1.0}, uniform angle, `+ N(0, 0.025^2)` |
/// | `moons` | upper half circle `(cos, sin)` or lower `(1 - cos, 0.5 - sin)`, shifted by `(-0.5, -0.25)`, `+ N(0, 0.08^2)` |
/// | `8gaussians` | means `2 (cos k pi/4, sin k pi/4)`, `sigma = 0.2` |
/// | `pinwheel` | 5 blades, polar noise `N(0, diag(0.3^2, 0.05^2))` around radius 1, angle sheared by `0.3 exp(r)` |
/// | `2spirals` | `theta ~ U[0, 3 pi]`, `r = 2 theta / pi`, random sign, `+ N(0, 0.1^2)` |
/// | `checkerboard` | uniform on the 8 dark 2x2 cells of `[-4, 4]^2` (cells where `floor(x/2) + floor(y/2)` is even) |
///
/// Every dataset except `8gaussians` and `checkerboard` is then shifted and
/// divided by fixed constants (measured once on 10^6 draws) so that it has
/// approximately zero mean and unit standard deviation per coordinate.
/// `8gaussians` and `checkerboard` keep the raw coordinates above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToyName {
    #[serde(rename = "swissroll")]
    Swissroll,
    #[serde(rename = "circles")]
    Circles,
    #[serde(rename = "rings")]
    Rings,
    #[serde(rename = "moons")]
    Moons,
    #[serde(rename = "8gaussians")]
    EightGaussians,
    #[serde(rename = "pinwheel")]
    Pinwheel,
    #[serde(rename = "2spirals")]
    TwoSpirals,
    #[serde(rename = "checkerboard")]
    Checkerboard,
}

impl ToyName {
    pub const ALL: [ToyName; 8] = [
        ToyName::Swissroll,
        ToyName::Circles,
        ToyName::Rings,
        ToyName::Moons,
        ToyName::EightGaussians,
        ToyName::Pinwheel,
        ToyName::TwoSpirals,
        ToyName::Checkerboard,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ToyName::Swissroll => "swissroll",
            ToyName::Circles => "circles",
            ToyName::Rings => "rings",
            ToyName::Moons => "moons",
            ToyName::EightGaussians => "8gaussians",
            ToyName::Pinwheel => "pinwheel",
            ToyName::TwoSpirals => "2spirals",
            ToyName::Checkerboard => "checkerboard",
        }
    }

    /// `(shift, scale)` applied as `(raw - shift) / scale`.
    fn standardization(&self) -> ([f64; 2], f64) {
        match self {
            ToyName::Swissroll => ([0.6657, 0.0739], 2.264),
            ToyName::Circles => ([0.0, 0.0], 0.5646),
            ToyName::Rings => ([0.0, 0.0], 0.4851),
            ToyName::Moons => ([0.0, 0.0], 0.7099),
            ToyName::Pinwheel => ([0.0, 0.0], 0.7391),
            ToyName::TwoSpirals => ([0.0, 0.0], 2.452),
            ToyName::EightGaussians | ToyName::Checkerboard => ([0.0, 0.0], 1.0),
        }
    }

    /// Means of the `8gaussians` mixture.
    pub fn eight_gaussian_means() -> [[f64; 2]; 8] {
        let mut out = [[0.0; 2]; 8];
        for (k, m) in out.iter_mut().enumerate() {
            let a = k as f64 * PI / 4.0;
            *m = [2.0 * a.cos(), 2.0 * a.sin()];
        }
        out
    }

    fn raw_point<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match self {
            ToyName::Swissroll => {
                let theta = rng.random_range(1.5 * PI..4.5 * PI);
                [
                    theta * theta.cos() / 3.0 + 0.05 * gauss(rng),
                    theta * theta.sin() / 3.0 + 0.05 * gauss(rng),
                ]
            }
            ToyName::Circles => {
                let r = if rng.random_bool(0.5) { 1.0 } else { 0.5 };
                on_circle(r, 0.08, rng)
            }
            ToyName::Rings => {
                let r = 0.25 * (rng.random_range(0..4u32) + 1) as f64;
                on_circle(r, 0.025, rng)
            }
            ToyName::Moons => {
                let a = rng.random_range(0.0..PI);
                let p = if rng.random_bool(0.5) { [a.cos(), a.sin()] } else { [1.0 - a.cos(), 0.5 - a.sin()] };
                [p[0] - 0.5 + 0.08 * gauss(rng), p[1] - 0.25 + 0.08 * gauss(rng)]
            }
            ToyName::EightGaussians => {
                let m = Self::eight_gaussian_means()[rng.random_range(0..8usize)];
                [m[0] + 0.2 * gauss(rng), m[1] + 0.2 * gauss(rng)]
            }
            ToyName::Pinwheel => {
                let blade = rng.random_range(0..5u32) as f64;
                let radial = 1.0 + 0.3 * gauss(rng);
                let tangential = 0.05 * gauss(rng);
                let angle = blade * 2.0 * PI / 5.0 + 0.3 * radial.exp();
                let (s, c) = angle.sin_cos();
                [c * radial - s * tangential, s * radial + c * tangential]
            }
            ToyName::TwoSpirals => {
                let theta = rng.random_range(0.0..3.0 * PI);
                let r = 2.0 * theta / PI;
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                [
                    sign * r * theta.cos() + 0.1 * gauss(rng),
                    sign * r * theta.sin() + 0.1 * gauss(rng),
                ]
            }
            ToyName::Checkerboard => {
                let x = rng.random_range(-4.0..4.0);
                let cx = (x / 2.0).floor() as i64;
                // rows of cells whose parity matches the column: two of {-2, -1, 0, 1}
                let first = if cx.rem_euclid(2) == 0 { -2 } else { -1 };
                let cy = first + 2 * rng.random_range(0..2i64);
                let y = 2.0 * cy as f64 + rng.random_range(0.0..2.0);
                [x, y]
            }
        }
    }

    /// Whether `p` lies in a light (empty) checkerboard cell.
    pub fn checkerboard_is_light(p: &[f64]) -> bool {
        let cx = (p[0] / 2.0).floor() as i64;
        let cy = (p[1] / 2.0).floor() as i64;
        (cx + cy).rem_euclid(2) != 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if n == 0 {
            return Err(config_err("sample count must be at least 1"));
        }
        let (shift, scale) = self.standardization();
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let p = self.raw_point(rng);
            data.push((p[0] - shift[0]) / scale);
            data.push((p[1] - shift[1]) / scale);
        }
        Batch::new(n, 2, data)
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn on_circle<R: Rng + ?Sized>(r: f64, noise: f64, rng: &mut R) -> [f64; 2] {
    let a = rng.random_range(0.0..2.0 * PI);
    [r * a.cos() + noise * gauss(rng), r * a.sin() + noise * gauss(rng)]
}

impl fmt::Display for ToyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ToyName::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| config_err(format!("unknown dataset {s:?}")))
    }
}
