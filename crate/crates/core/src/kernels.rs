//! Second-order kernels supported on `[-1, 1]` and their scaled versions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `K(u) = 0.5 * 1(|u| <= 1)`.
    #[default]
    Box,
    /// `K(u) = 0.75 * (1 - u^2) * 1(|u| <= 1)`.
    Epanechnikov,
}

impl KernelFamily {
    /// Base kernel value `K(u)`; the support is the closed interval `[-1, 1]`.
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            KernelFamily::Box => 0.5,
            KernelFamily::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }

    /// `K(0)`.
    pub fn peak(self) -> f64 {
        self.eval(0.0)
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "box" | "uniform" => Ok(KernelFamily::Box),
            "epanechnikov" | "epa" => Ok(KernelFamily::Epanechnikov),
            other => Err(Error::InvalidArgument(format!("unknown kernel '{other}'"))),
        }
    }
}

/// A kernel family paired with a bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    h: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidBandwidth(h));
        }
        Ok(KernelSpec { family, h })
    }

    pub fn boxcar(h: f64) -> Result<Self> {
        Self::new(KernelFamily::Box, h)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(self.family, h)
    }

    /// Unscaled kernel value `K(u)`.
    #[inline]
    pub fn kernel_eval(&self, u: f64) -> f64 {
        self.family.eval(u)
    }

    /// Scaled kernel `K_h(u) = K(u / h) / h`.
    #[inline]
    pub fn kh(&self, u: f64) -> f64 {
        self.family.eval(u / self.h) / self.h
    }

    /// Whether `u` lies in the closed support of `K_h`; agrees exactly with
    /// `kh(u) != 0` for the box kernel.
    #[inline]
    pub fn in_support(&self, u: f64) -> bool {
        (u / self.h).abs() <= 1.0
    }
}
