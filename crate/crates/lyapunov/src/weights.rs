//! Increasing weight profiles `q` and their shifted versions `w`.

use crate::{LyapunovError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    /// Used for a beam controlled at `x = ℓ`; `w = q − q(0) ≥ 0`.
    Pos,
    /// Used for a beam controlled at `x = 0`; `w = q − q(ℓ) ≤ 0`.
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind {
    ExpPos { a: f64, b: f64 },
    ExpNeg { a: f64, b: f64 },
    PolyPlus { n: u32 },
    PolyMinus { n: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFunction {
    pub kind: WeightKind,
    pub eta: f64,
    pub length: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(LyapunovError::Parameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl WeightFunction {
    /// `pos`: `q = a + e^{−η(ℓ−x)} (x/ℓ)(b − a)` with `0 ≤ a < b`;
    /// `neg`: `q = −e^{−ηx}(b − a)(1 − x/ℓ) + b` with `a < b ≤ 0`.
    pub fn exp(a: f64, b: f64, eta: f64, length: f64, sign: Sign) -> Result<Self> {
        check_positive("eta", eta)?;
        check_positive("length", length)?;
        let ok = match sign {
            Sign::Pos => 0.0 <= a && a < b,
            Sign::Neg => a < b && b <= 0.0,
        };
        if !ok || !b.is_finite() {
            let need = if sign == Sign::Pos { "0 ≤ a < b" } else { "a < b ≤ 0" };
            return Err(LyapunovError::Parameter(format!("exponential weight needs {need}, got a = {a}, b = {b}")));
        }
        let kind = if sign == Sign::Pos { WeightKind::ExpPos { a, b } } else { WeightKind::ExpNeg { a, b } };
        Ok(Self { kind, eta, length })
    }

    /// `p⁻ = −(½ − ηx/n)ⁿ`, `p⁺ = 2⁻ⁿ + (½ + η(x−ℓ)/n)ⁿ`; needs `2ηℓ < n`.
    pub fn poly(n: u32, eta: f64, length: f64, sign: Sign) -> Result<Self> {
        check_positive("eta", eta)?;
        check_positive("length", length)?;
        if !(2.0 * eta * length < n as f64) {
            return Err(LyapunovError::Parameter(format!(
                "polynomial weight needs 2ηℓ < n, got 2ηℓ = {} and n = {n}",
                2.0 * eta * length
            )));
        }
        let kind = if sign == Sign::Pos { WeightKind::PolyPlus { n } } else { WeightKind::PolyMinus { n } };
        Ok(Self { kind, eta, length })
    }

    pub fn sign(&self) -> Sign {
        match self.kind {
            WeightKind::ExpPos { .. } | WeightKind::PolyPlus { .. } => Sign::Pos,
            WeightKind::ExpNeg { .. } | WeightKind::PolyMinus { .. } => Sign::Neg,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let (eta, l) = (self.eta, self.length);
        match self.kind {
            WeightKind::ExpPos { a, b } => a + (-eta * (l - x)).exp() * x / l * (b - a),
            WeightKind::ExpNeg { a, b } => -(-eta * x).exp() * (b - a) * (1.0 - x / l) + b,
            WeightKind::PolyPlus { n } => {
                0.5f64.powi(n as i32) + (0.5 + eta / n as f64 * (x - l)).powi(n as i32)
            }
            WeightKind::PolyMinus { n } => -(0.5 - eta / n as f64 * x).powi(n as i32),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (eta, l) = (self.eta, self.length);
        match self.kind {
            WeightKind::ExpPos { a, b } => (b - a) / l * (-eta * (l - x)).exp() * (1.0 + eta * x),
            WeightKind::ExpNeg { a, b } => (b - a) * (-eta * x).exp() * (eta * (1.0 - x / l) + 1.0 / l),
            WeightKind::PolyPlus { n } => eta * (0.5 + eta / n as f64 * (x - l)).powi(n as i32 - 1),
            WeightKind::PolyMinus { n } => eta * (0.5 - eta / n as f64 * x).powi(n as i32 - 1),
        }
    }

    /// Smallest value over `pts` uniform points of `q′ − η(q − q(0))` (pos)
    /// or `q′ − η(q(ℓ) − q)` (neg); positive when the inequality holds.
    pub fn inequality_margin(&self, pts: usize) -> f64 {
        let (q0, ql) = (self.value(0.0), self.value(self.length));
        grid(self.length, pts)
            .map(|x| {
                let gap = match self.sign() {
                    Sign::Pos => self.value(x) - q0,
                    Sign::Neg => ql - self.value(x),
                };
                self.derivative(x) - self.eta * gap
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `w = q − q(0)` for the pos families, `w = q − q(ℓ)` for the neg ones.
    pub fn shifted(&self) -> Weight {
        let offset = match self.sign() {
            Sign::Pos => self.value(0.0),
            Sign::Neg => self.value(self.length),
        };
        Weight { function: Some(*self), offset }
    }
}

/// `pts ≥ 2` uniform points on `[0, ℓ]` including both ends.
pub fn grid(length: f64, pts: usize) -> impl Iterator<Item = f64> {
    let pts = pts.max(2);
    (0..pts).map(move |i| if i + 1 == pts { length } else { length * i as f64 / (pts - 1) as f64 })
}

/// Weight `w(x) = q(x) − offset`; `function = None` takes `q ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight {
    pub function: Option<WeightFunction>,
    pub offset: f64,
}

impl Weight {
    pub fn zero() -> Self {
        Self { function: None, offset: 0.0 }
    }

    /// Constant weight `w ≡ c`.
    pub fn constant(c: f64) -> Self {
        Self { function: None, offset: -c }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.function.map_or(0.0, |f| f.value(x)) - self.offset
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.function.map_or(0.0, |f| f.derivative(x))
    }
}
