use core::ops::{Add, Mul, Sub};

/// Lengths below this are treated as degenerate.
pub(crate) const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn is_degenerate(self) -> bool {
        let n = self.norm();
        !n.is_finite() || n < EPS
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Self) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Self) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Unsigned planar angle between two vectors in `[0, π]`, or `None` if either
/// vector is degenerate.
pub(crate) fn angle_between(a: Vec2, b: Vec2) -> Option<f64> {
    if a.is_degenerate() || b.is_degenerate() {
        return None;
    }
    // atan2 of |cross| and dot stays accurate near 0 and π, unlike acos.
    let angle = libm::atan2(libm::fabs(a.cross(b)), a.dot(b));
    if angle.is_finite() {
        Some(angle.clamp(0.0, core::f64::consts::PI))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn right_and_straight_angles() {
        let right = Vec2::new(1.0, 0.0);
        assert_eq!(angle_between(right, Vec2::new(-3.0, 0.0)), Some(PI));
        assert!((angle_between(right, Vec2::new(0.0, 2.0)).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(angle_between(right, right * 5.0), Some(0.0));
    }

    #[test]
    fn degenerate_vectors_have_no_angle() {
        assert_eq!(angle_between(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)), None);
        assert_eq!(angle_between(Vec2::new(f64::NAN, 0.0), Vec2::new(1.0, 0.0)), None);
    }
}
