use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Axis-aligned closed rectangle `[min.0, max.0] x [min.1, max.1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect<S> {
    pub min: [S; 2],
    pub max: [S; 2],
}

impl<S: Scalar> Rect<S> {
    pub fn new(min: [S; 2], max: [S; 2]) -> Result<Self> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(Error::InvalidDomain(format!(
                "rectangle min {:?} must be below max {:?} componentwise",
                min, max
            )));
        }
        Ok(Self { min, max })
    }

    pub fn unit() -> Self {
        Self { min: [S::zero(); 2], max: [S::one(); 2] }
    }

    pub fn width(&self) -> S {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> S {
        self.max[1] - self.min[1]
    }

    pub fn diam(&self) -> S {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> [S; 2] {
        let h = S::lit(0.5);
        [(self.min[0] + self.max[0]) * h, (self.min[1] + self.max[1]) * h]
    }

    pub fn contains(&self, p: [S; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    /// Grow every side by `m`.
    pub fn inflate(&self, m: S) -> Self {
        Self { min: [self.min[0] - m, self.min[1] - m], max: [self.max[0] + m, self.max[1] + m] }
    }

    /// Distance from `p` (assumed inside) to the nearest side.
    pub fn inner_distance(&self, p: [S; 2]) -> S {
        (p[0] - self.min[0])
            .min(self.max[0] - p[0])
            .min(p[1] - self.min[1])
            .min(self.max[1] - p[1])
    }
}

/// The working domain: a rectangle together with the extension margin used
/// by mollification and the Poisson solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain<S> {
    pub rect: Rect<S>,
    pub margin: S,
}

impl<S: Scalar> Domain<S> {
    pub fn new(rect_min: [S; 2], rect_max: [S; 2], margin: S) -> Result<Self> {
        let rect = Rect::new(rect_min, rect_max)?;
        if !(margin >= S::zero()) {
            return Err(Error::InvalidDomain(format!("margin must be nonnegative, got {margin}")));
        }
        Ok(Self { rect, margin })
    }

    /// Unit square with the given margin.
    pub fn unit_square(margin: S) -> Self {
        Self { rect: Rect::unit(), margin }
    }

    pub fn extended(&self) -> Rect<S> {
        self.rect.inflate(self.margin)
    }

    pub fn check_extended(&self, p: [S; 2]) -> Result<()> {
        if self.extended().contains(p) {
            Ok(())
        } else {
            Err(Error::Domain { x: p[0].as_f64(), y: p[1].as_f64() })
        }
    }

    /// Fails unless the margin covers a mollification at scale `l`.
    pub fn require_margin(&self, l: S) -> Result<()> {
        if self.margin < l {
            Err(Error::InsufficientExtension { l: l.as_f64(), margin: self.margin.as_f64() })
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_rectangles() {
        assert!(Rect::new([0.0, 0.0], [0.0, 1.0]).is_err());
        assert!(Domain::new([0.0, 0.0], [1.0, 1.0], -0.1).is_err());
    }

    #[test]
    fn extension_strictly_contains_omega() {
        let d = Domain::unit_square(0.2);
        let e = d.extended();
        assert!(e.min[0] < 0.0 && e.max[1] > 1.0);
        assert!(d.check_extended([1.1, 0.0]).is_ok());
        assert!(d.check_extended([1.3, 0.0]).is_err());
        assert!(d.require_margin(0.3).is_err());
    }
}
