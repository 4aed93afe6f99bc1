use serde::{Deserialize, Serialize};

pub type Point3 = [f64; 3];

pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Point3) -> Point3 {
    let n = norm(a);
    if n == 0.0 {
        a
    } else {
        scale(a, 1.0 / n)
    }
}

pub fn distance(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}

pub fn mean(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let mut acc = [0.0; 3];
    for p in points {
        acc = add(acc, *p);
    }
    Some(scale(acc, 1.0 / points.len() as f64))
}

/// Rigid world-from-camera transform stored as a row-major 4×4 matrix.
///
/// Camera axes follow the pinhole convention: +x right, +y down, +z forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose(pub [[f64; 4]; 4]);

impl Pose {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Pose(m)
    }

    /// Builds a camera pose at `eye` looking at `target`, with `up` as the
    /// world's vertical direction.
    pub fn look_at(eye: Point3, target: Point3, up: Point3) -> Self {
        let forward = normalize(sub(target, eye));
        let right = normalize(cross(forward, up));
        let down = cross(forward, right);
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            m[i][0] = right[i];
            m[i][1] = down[i];
            m[i][2] = forward[i];
            m[i][3] = eye[i];
        }
        m[3][3] = 1.0;
        Pose(m)
    }

    pub fn translation(&self) -> Point3 {
        [self.0[0][3], self.0[1][3], self.0[2][3]]
    }

    pub fn camera_to_world(&self, p: Point3) -> Point3 {
        let m = &self.0;
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3];
        }
        out
    }

    pub fn world_to_camera(&self, p: Point3) -> Point3 {
        let m = &self.0;
        let d = sub(p, self.translation());
        // R^T · (p - t)
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            *o = m[0][j] * d[0] + m[1][j] * d[1] + m[2][j] * d[2];
        }
        out
    }

    /// Largest deviation of RᵀR from the identity, plus the deviation of the
    /// bottom row from `[0, 0, 0, 1]`.
    pub fn orthonormality_error(&self) -> f64 {
        let m = &self.0;
        let mut err: f64 = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let d: f64 = (0..3).map(|i| m[i][a] * m[i][b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                err = err.max((d - target).abs());
            }
        }
        for (j, v) in m[3].iter().enumerate() {
            let target = if j == 3 { 1.0 } else { 0.0 };
            err = err.max((v - target).abs());
        }
        err
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Pinhole projection of a camera-frame point; `None` behind the camera.
    pub fn project(&self, p: Point3) -> Option<[f64; 2]> {
        if p[2] <= 1e-9 {
            return None;
        }
        Some([
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        ])
    }

    pub fn image_box(&self) -> BBox2 {
        BBox2::new(0.0, 0.0, self.width as f64, self.height as f64)
    }
}

/// Axis-aligned image box in pixel coordinates, origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox2 {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox2 {
    fn from(v: [f64; 4]) -> Self {
        BBox2::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox2> for [f64; 4] {
    fn from(b: BBox2) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox2 {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox2 {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn is_well_ordered(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    pub fn intersect(&self, other: &BBox2) -> Option<BBox2> {
        let b = BBox2::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        );
        b.is_well_ordered().then_some(b)
    }

    pub fn iou(&self, other: &BBox2) -> f64 {
        let inter = self.intersect(other).map_or(0.0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Axis-aligned 3D box in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb3 {
    pub fn from_center_size(center: Point3, size: Point3) -> Self {
        let h = scale(size, 0.5);
        Aabb3 {
            min: sub(center, h),
            max: add(center, h),
        }
    }

    pub fn from_points(points: &[Point3]) -> Option<Self> {
        let first = *points.first()?;
        let mut b = Aabb3 {
            min: first,
            max: first,
        };
        for p in &points[1..] {
            for i in 0..3 {
                b.min[i] = b.min[i].min(p[i]);
                b.max[i] = b.max[i].max(p[i]);
            }
        }
        Some(b)
    }

    pub fn center(&self) -> Point3 {
        scale(add(self.min, self.max), 0.5)
    }

    pub fn size(&self) -> Point3 {
        sub(self.max, self.min)
    }

    pub fn diagonal(&self) -> f64 {
        norm(self.size())
    }

    pub fn volume(&self) -> f64 {
        let s = self.size();
        s[0].max(0.0) * s[1].max(0.0) * s[2].max(0.0)
    }

    pub fn corners(&self) -> [Point3; 8] {
        let mut out = [[0.0; 3]; 8];
        for (k, c) in out.iter_mut().enumerate() {
            for i in 0..3 {
                c[i] = if k >> i & 1 == 0 {
                    self.min[i]
                } else {
                    self.max[i]
                };
            }
        }
        out
    }

    /// Containment up to 1e-9 m, so shared faces computed in floating point
    /// still count as inside.
    pub fn contains_box(&self, other: &Aabb3) -> bool {
        const TOL: f64 = 1e-9;
        (0..3).all(|i| self.min[i] <= other.min[i] + TOL && other.max[i] <= self.max[i] + TOL)
    }

    pub fn iou(&self, other: &Aabb3) -> f64 {
        let mut inter = 1.0;
        for i in 0..3 {
            let lo = self.min[i].max(other.min[i]);
            let hi = self.max[i].min(other.max[i]);
            if hi <= lo {
                return 0.0;
            }
            inter *= hi - lo;
        }
        let union = self.volume() + other.volume() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Cosine similarity, 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}
