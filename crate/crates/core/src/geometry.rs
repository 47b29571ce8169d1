use std::ops::{Add, Mul, Sub};

/// A point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Reflection about the vertical line `x = axis`.
    pub fn mirror_x(self, axis: f64) -> Point2 {
        Point2::new(2.0 * axis - self.x, self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// `(cos, sin)` of the angle `2π·j/m`.
///
/// The angle is reduced to the first octant before evaluating the
/// trigonometric functions, so values at angles related by a quarter turn or
/// by the reflection `θ ↦ π − θ` are exact negations/swaps of each other.
/// Mirror-symmetric meshes and sample sets depend on this.
pub fn unit_circle_point(j: usize, m: usize) -> (f64, f64) {
    assert!(m > 0);
    let j = j % m;
    if j == 0 {
        return (1.0, 0.0);
    }
    let g = gcd(j, m);
    let (j, m) = (j / g, m / g);
    // canonical denominator divisible by four
    let k = 4 / gcd(m, 4);
    let (j, m) = (j * k, m * k);
    let quarter = m / 4;
    let quadrant = j / quarter;
    let rem = j % quarter;
    // (cos, sin) of 2π·rem/m with rem in [0, quarter)
    let (cb, sb) = if rem == 0 {
        (1.0, 0.0)
    } else if 2 * rem == quarter {
        (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2)
    } else if 2 * rem < quarter {
        let a = std::f64::consts::TAU * rem as f64 / m as f64;
        (a.cos(), a.sin())
    } else {
        let a = std::f64::consts::TAU * (quarter - rem) as f64 / m as f64;
        (a.sin(), a.cos())
    };
    match quadrant {
        0 => (cb, sb),
        1 => (-sb, cb),
        2 => (-cb, -sb),
        _ => (sb, -cb),
    }
}

/// Point at angle `2π·j/m` on the circle of given center and radius.
pub fn circle_point(center: Point2, radius: f64, j: usize, m: usize) -> Point2 {
    let (c, s) = unit_circle_point(j, m);
    Point2::new(center.x + radius * c, center.y + radius * s)
}

/// Polar angle of `p` around `center`, in `[0, 2π)`.
pub fn polar_angle(center: Point2, p: Point2) -> f64 {
    let a = (p.y - center.y).atan2(p.x - center.x);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}
