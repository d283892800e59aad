//! Initial data of the benchmark tests, zero-level-set extraction from
//! continuous reconstructions, and one-sided distances to reference curves.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::dg::{DgField, DgSpace, FieldKind};
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::operators::ScalarField;

/// Benchmark initial interfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TestCase {
    /// Ellipse `x^2/0.36 + y^2/0.04 = 1`.
    Test1,
    /// Two touching circles.
    Test2,
    /// Four circles of radius 0.2.
    Test3,
    /// User-supplied signed distance.
    Custom,
}

impl TestCase {
    pub fn id(self) -> &'static str {
        match self {
            TestCase::Test1 => "1",
            TestCase::Test2 => "2",
            TestCase::Test3 => "3",
            TestCase::Custom => "custom",
        }
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TestCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(TestCase::Test1),
            "2" => Ok(TestCase::Test2),
            "3" => Ok(TestCase::Test3),
            "custom" => Ok(TestCase::Custom),
            other => Err(Error::Parse(format!("unknown test case '{other}'"))),
        }
    }
}

pub const TEST1_SEMI_AXES: (f64, f64) = (0.6, 0.2);

/// Signed distance to an axis-aligned ellipse centred at the origin,
/// positive outside, with the closest point on the ellipse.
pub fn ellipse_signed_distance(a: f64, b: f64, p: Point) -> (f64, Point) {
    // work with a >= b in the first quadrant
    let swap = b > a;
    let (a, b) = if swap { (b, a) } else { (a, b) };
    let (px, py) = if swap { (p[1], p[0]) } else { (p[0], p[1]) };
    let (x, y) = (px.abs(), py.abs());
    let q = if y <= 1e-300 {
        let limit = (a * a - b * b) / a;
        if x < limit {
            let qx = a * a * x / (a * a - b * b);
            [qx, b * (1.0 - (qx / a).powi(2)).max(0.0).sqrt()]
        } else {
            [a, 0.0]
        }
    } else if x <= 1e-300 {
        [0.0, b]
    } else {
        // unknown u = t + b^2 keeps the pole at u = 0 free of cancellation
        let c = a * a - b * b;
        let f = |u: f64| (a * x / (u + c)).powi(2) + (b * y / u).powi(2) - 1.0;
        let df = |u: f64| -2.0 * (a * x).powi(2) / (u + c).powi(3) - 2.0 * (b * y).powi(2) / u.powi(3);
        // F decreases on (0, inf); bracket the root
        let mut lo = b * y;
        let mut hi = (a * a * x * x + b * b * y * y).sqrt();
        let mut u = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fu = f(u);
            if fu == 0.0 {
                break;
            }
            if fu > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let newton = u - fu / df(u);
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if next == u || hi - lo <= 2.0 * f64::EPSILON * u {
                break;
            }
            u = next;
        }
        [a * a * x / (u + c), b * b * y / u]
    };
    let dist = ((x - q[0]).powi(2) + (y - q[1]).powi(2)).sqrt();
    let inside = (x / a).powi(2) + (y / b).powi(2) < 1.0;
    let q = [q[0].copysign(px), q[1].copysign(py)];
    let q = if swap { [q[1], q[0]] } else { q };
    (if inside { -dist } else { dist }, q)
}

type DistanceFn = dyn Fn(Point) -> f64 + Send + Sync;

/// `u0(x) = tanh(d0(x) / (sqrt(2) eps))` for a signed distance `d0`.
#[derive(Clone)]
pub struct InitialCondition {
    test: TestCase,
    epsilon: f64,
    custom: Option<Arc<DistanceFn>>,
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialCondition")
            .field("test", &self.test)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

const TEST2_CIRCLES: [([f64; 2], f64); 2] = [([-0.3, 0.0], 0.3), ([0.3, 0.0], 0.25)];
const TEST3_CIRCLES: [([f64; 2], f64); 4] = [
    ([0.3, 0.0], 0.2),
    ([-0.3, 0.0], 0.2),
    ([0.0, 0.3], 0.2),
    ([0.0, -0.3], 0.2),
];

fn circles_distance(circles: &[([f64; 2], f64)], p: Point) -> (f64, [f64; 2]) {
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for &(c, r) in circles {
        let dx = p[0] - c[0];
        let dy = p[1] - c[1];
        let rho = (dx * dx + dy * dy).sqrt();
        let d = rho - r;
        if d < best.0 {
            let g = if rho > 0.0 { [dx / rho, dy / rho] } else { [0.0, 0.0] };
            best = (d, g);
        }
    }
    best
}

impl InitialCondition {
    /// Initial data of Test 1, 2 or 3.
    pub fn new(test: TestCase, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        if test == TestCase::Custom {
            return Err(Error::InvalidArgument(
                "custom initial data needs a distance function".into(),
            ));
        }
        Ok(Self {
            test,
            epsilon,
            custom: None,
        })
    }

    pub fn custom(epsilon: f64, d0: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            test: TestCase::Custom,
            epsilon,
            custom: Some(Arc::new(d0)),
        })
    }

    pub fn test(&self) -> TestCase {
        self.test
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Signed distance `d0`, positive outside the initial interface.
    pub fn distance(&self, p: Point) -> f64 {
        self.distance_and_gradient(p).0
    }

    fn distance_and_gradient(&self, p: Point) -> (f64, [f64; 2]) {
        match self.test {
            TestCase::Test1 => {
                let (a, b) = TEST1_SEMI_AXES;
                let (d, q) = ellipse_signed_distance(a, b, p);
                let nx = q[0] / (a * a);
                let ny = q[1] / (b * b);
                let norm = (nx * nx + ny * ny).sqrt();
                (d, [nx / norm, ny / norm])
            }
            TestCase::Test2 => circles_distance(&TEST2_CIRCLES, p),
            TestCase::Test3 => circles_distance(&TEST3_CIRCLES, p),
            TestCase::Custom => {
                let f = self.custom.as_ref().expect("custom distance");
                let h = 1e-7;
                let g = [
                    (f([p[0] + h, p[1]]) - f([p[0] - h, p[1]])) / (2.0 * h),
                    (f([p[0], p[1] + h]) - f([p[0], p[1] - h])) / (2.0 * h),
                ];
                (f(p), g)
            }
        }
    }
}

impl ScalarField for InitialCondition {
    fn value(&self, p: Point) -> f64 {
        (self.distance(p) / (std::f64::consts::SQRT_2 * self.epsilon)).tanh()
    }

    fn gradient(&self, p: Point) -> [f64; 2] {
        let s = std::f64::consts::SQRT_2 * self.epsilon;
        let (d, g) = self.distance_and_gradient(p);
        let c = 1.0 / (d / s).cosh().powi(2) / s;
        [c * g[0], c * g[1]]
    }
}

/// One chord of the zero level set inside a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub cell: usize,
    pub p0: Point,
    pub p1: Point,
}

impl Segment {
    pub fn length(&self) -> f64 {
        ((self.p1[0] - self.p0[0]).powi(2) + (self.p1[1] - self.p0[1]).powi(2)).sqrt()
    }

    pub fn midpoint(&self) -> Point {
        [0.5 * (self.p0[0] + self.p1[0]), 0.5 * (self.p0[1] + self.p1[1])]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePolyline {
    pub time: f64,
    pub segments: Vec<Segment>,
}

pub const INTERFACE_HEADER: &str = "time,segment,x0,y0,x1,y1";

impl InterfacePolyline {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// Rows of the interface CSV, without header.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for (i, seg) in self.segments.iter().enumerate() {
            s.push_str(&format!(
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.time, i, seg.p0[0], seg.p0[1], seg.p1[0], seg.p1[1]
            ));
        }
        s
    }
}

/// Relative size below which nodal values count as zero.
pub const VERTEX_ZERO_THRESHOLD: f64 = 1e-13;

/// Zero level set of the piecewise-linear interpolant of a continuous
/// field's vertex values: at most one chord per cell.
pub fn extract_zero_level_set(space: &DgSpace, v: &DgField, time: f64) -> Result<InterfacePolyline> {
    space.check(v)?;
    if v.kind() != FieldKind::Continuous {
        let defect = v.continuity_defect(space);
        let scale = crate::linalg::max_abs(v.coeffs()).max(f64::MIN_POSITIVE);
        if defect > 1e-13 * scale {
            return Err(Error::InvalidArgument(
                "level-set extraction needs a continuous field".into(),
            ));
        }
    }
    let scale = crate::linalg::max_abs(v.coeffs());
    let mesh = space.mesh();
    let d = space.local_dim();
    let vertex_nodes = space.basis().vertex_nodes();
    let mut segments = Vec::new();
    if scale == 0.0 {
        return Ok(InterfacePolyline { time, segments });
    }
    let floor = VERTEX_ZERO_THRESHOLD * scale;
    for cell in 0..mesh.num_cells() {
        let verts = mesh.cell_vertices(cell);
        let mut f = [0.0; 3];
        for (fi, &node) in f.iter_mut().zip(&vertex_nodes) {
            let val = v.coeffs()[cell * d + node];
            *fi = if val.abs() <= floor { f64::EPSILON * scale } else { val };
        }
        let mut pts = Vec::with_capacity(2);
        for (i, j) in [(0usize, 1usize), (1, 2), (0, 2)] {
            if (f[i] > 0.0) != (f[j] > 0.0) {
                let s = f[i] / (f[i] - f[j]);
                let a = verts[i];
                let b = verts[j];
                pts.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
            }
        }
        if pts.len() == 2 {
            segments.push(Segment {
                cell,
                p0: pts[0],
                p1: pts[1],
            });
        }
    }
    Ok(InterfacePolyline { time, segments })
}

/// Closed reference curve sampled uniformly in its parameter.
pub trait ReferenceCurve {
    fn sample(&self, count: usize) -> Vec<Point>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Point,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl ReferenceCurve for Ellipse {
    fn sample(&self, count: usize) -> Vec<Point> {
        (0..count)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                [self.center[0] + self.a * t.cos(), self.center[1] + self.b * t.sin()]
            })
            .collect()
    }
}

impl ReferenceCurve for Circle {
    fn sample(&self, count: usize) -> Vec<Point> {
        Ellipse {
            center: self.center,
            a: self.radius,
            b: self.radius,
        }
        .sample(count)
    }
}

/// `ellipse:a,b` or `circle:cx,cy,r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSpec {
    Ellipse(Ellipse),
    Circle(Circle),
}

impl ReferenceCurve for ReferenceSpec {
    fn sample(&self, count: usize) -> Vec<Point> {
        match self {
            ReferenceSpec::Ellipse(e) => e.sample(count),
            ReferenceSpec::Circle(c) => c.sample(count),
        }
    }
}

impl FromStr for ReferenceSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad reference curve '{s}'"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let vals = args
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad());
        }
        match (kind.trim(), vals.as_slice()) {
            ("ellipse", &[a, b]) if a > 0.0 && b > 0.0 => Ok(ReferenceSpec::Ellipse(Ellipse {
                center: [0.0, 0.0],
                a,
                b,
            })),
            ("circle", &[cx, cy, r]) if r > 0.0 => Ok(ReferenceSpec::Circle(Circle {
                center: [cx, cy],
                radius: r,
            })),
            _ => Err(bad()),
        }
    }
}

/// `sup_x dist(x, reference)` over the polyline and the resolution of the
/// sampled reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceDistance {
    pub distance: f64,
    pub accuracy_bound: f64,
}

pub const MIN_REFERENCE_SAMPLES: usize = 2048;
pub const DEFAULT_REFERENCE_SAMPLES: usize = 4096;

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + s * ab[0], a[1] + s * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// One-sided distance from the polyline to a closed reference curve, sampled
/// at segment endpoints and midpoints.
pub fn interface_distance(
    poly: &InterfacePolyline,
    reference: &dyn ReferenceCurve,
    samples: usize,
) -> Result<InterfaceDistance> {
    if poly.is_empty() {
        return Err(Error::EmptyInterface);
    }
    if samples < MIN_REFERENCE_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "reference needs at least {MIN_REFERENCE_SAMPLES} samples, got {samples}"
        )));
    }
    let curve = reference.sample(samples);
    let m = curve.len();
    let spacing = (0..m)
        .map(|i| {
            let a = curve[i];
            let b = curve[(i + 1) % m];
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max);
    let mut sup: f64 = 0.0;
    for seg in &poly.segments {
        for p in [seg.p0, seg.midpoint(), seg.p1] {
            let (idx, _) = curve
                .iter()
                .enumerate()
                .map(|(i, c)| (i, (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            let prev = curve[(idx + m - 1) % m];
            let next = curve[(idx + 1) % m];
            let d = point_segment_distance(p, prev, curve[idx])
                .min(point_segment_distance(p, curve[idx], next));
            sup = sup.max(d);
        }
    }
    Ok(InterfaceDistance {
        distance: sup,
        accuracy_bound: 0.5 * spacing,
    })
}

/// Linear blend of two stored states at an intermediate time.
pub fn interpolate_in_time(t: f64, (t0, u0): (f64, &DgField), (t1, u1): (f64, &DgField)) -> Result<DgField> {
    if u0.len() != u1.len() || u0.degree() != u1.degree() {
        return Err(Error::SpaceMismatch {
            expected: u0.len(),
            got: u1.len(),
        });
    }
    if !(t1 > t0) || t < t0 || t > t1 {
        return Err(Error::InvalidArgument(format!(
            "time {t} outside [{t0}, {t1}]"
        )));
    }
    let s = (t - t0) / (t1 - t0);
    let coeffs = u0
        .coeffs()
        .iter()
        .zip(u1.coeffs())
        .map(|(a, b)| (1.0 - s) * a + s * b)
        .collect();
    let kind = if u0.kind() == FieldKind::Continuous && u1.kind() == FieldKind::Continuous {
        FieldKind::Continuous
    } else {
        FieldKind::Broken
    };
    Ok(u0.with_coeffs(coeffs, kind))
}
