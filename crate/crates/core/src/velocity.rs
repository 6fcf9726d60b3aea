use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point of velocity space R³.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity(pub [f64; 3]);

impl Velocity {
    pub const ZERO: Velocity = Velocity([0.0; 3]);

    #[inline]
    pub const fn new(vx: f64, vy: f64, vz: f64) -> Self {
        Velocity([vx, vy, vz])
    }

    #[inline]
    pub fn vx(&self) -> f64 {
        self.0[0]
    }
    #[inline]
    pub fn vy(&self) -> f64 {
        self.0[1]
    }
    #[inline]
    pub fn vz(&self) -> f64 {
        self.0[2]
    }

    #[inline]
    pub fn dot(&self, other: &Velocity) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Unit vector along `self`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Velocity> {
        let n = self.norm();
        (n > 0.0).then(|| *self * (1.0 / n))
    }

    /// Two unit vectors completing `self` (assumed unit) to a right-handed orthonormal frame.
    pub fn orthonormal_complement(&self) -> (Velocity, Velocity) {
        let [x, y, z] = self.0;
        // Duff et al. branchless basis.
        let sign = 1.0_f64.copysign(z);
        let a = -1.0 / (sign + z);
        let b = x * y * a;
        let e1 = Velocity::new(1.0 + sign * x * x * a, sign * b, -sign * x);
        let e2 = Velocity::new(b, sign + y * y * a, -y);
        (e1, e2)
    }
}

impl From<[f64; 3]> for Velocity {
    fn from(v: [f64; 3]) -> Self {
        Velocity(v)
    }
}

impl Add for Velocity {
    type Output = Velocity;
    #[inline]
    fn add(self, rhs: Velocity) -> Velocity {
        Velocity([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

impl AddAssign for Velocity {
    #[inline]
    fn add_assign(&mut self, rhs: Velocity) {
        *self = *self + rhs;
    }
}

impl Sub for Velocity {
    type Output = Velocity;
    #[inline]
    fn sub(self, rhs: Velocity) -> Velocity {
        Velocity([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1], self.0[2] - rhs.0[2]])
    }
}

impl SubAssign for Velocity {
    #[inline]
    fn sub_assign(&mut self, rhs: Velocity) {
        *self = *self - rhs;
    }
}

impl Mul<f64> for Velocity {
    type Output = Velocity;
    #[inline]
    fn mul(self, k: f64) -> Velocity {
        Velocity([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }
}

impl Neg for Velocity {
    type Output = Velocity;
    #[inline]
    fn neg(self) -> Velocity {
        self * -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthonormal() {
        for d in [
            Velocity::new(0.0, 0.0, 1.0),
            Velocity::new(0.0, 0.0, -1.0),
            Velocity::new(0.3, -0.4, 0.1),
            Velocity::new(-1.0, 0.0, 0.0),
        ] {
            let d = d.normalized().unwrap();
            let (e1, e2) = d.orthonormal_complement();
            for (a, b) in [(d, e1), (d, e2), (e1, e2)] {
                assert!(a.dot(&b).abs() < 1e-14);
            }
            assert!((e1.norm() - 1.0).abs() < 1e-14);
            assert!((e2.norm() - 1.0).abs() < 1e-14);
        }
    }
}
