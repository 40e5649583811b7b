//! Coordinate types and projective/affine primitives.
//!
//! Image coordinates follow the usual raster convention: `u` grows to the
//! right, `v` grows downward. Quads are stored top-left, top-right,
//! bottom-right, bottom-left, which is a positive turn at every corner in
//! that frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image-plane point in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Point in a camera's Model-Grid frame (model px).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint2D {
    pub a: f64,
    pub b: f64,
}

impl ModelPoint2D {
    pub const fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }
}

/// World point in millimetres; origin at a bottom corner of Grid A, z up.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &WorldPoint3D) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn set(&mut self, axis: Axis, value: f64) {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Axis-aligned bounding box in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BBox {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Result<Self> {
        let finite = [u_min, v_min, u_max, v_max].iter().all(|v| v.is_finite());
        if !finite || u_min >= u_max || v_min >= v_max {
            return Err(Error::DegenerateQuad(format!(
                "invalid box ({u_min}, {v_min}, {u_max}, {v_max})"
            )));
        }
        Ok(Self {
            u_min,
            v_min,
            u_max,
            v_max,
        })
    }

    /// Box of half-size `half` centred on `c`.
    pub fn around(c: PixelPoint, half: f64) -> Self {
        Self {
            u_min: c.u - half,
            v_min: c.v - half,
            u_max: c.u + half,
            v_max: c.v + half,
        }
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(
            (self.u_min + self.u_max) / 2.0,
            (self.v_min + self.v_max) / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        (self.u_max - self.u_min) * (self.v_max - self.v_min)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.u_min, self.v_min, self.u_max, self.v_max]
    }
}

fn cross(o: PixelPoint, a: PixelPoint, b: PixelPoint) -> f64 {
    (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u)
}

/// Four image corners in TL, TR, BR, BL order. Construction validates
/// strict convexity and winding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    corners: [PixelPoint; 4],
}

impl Quad {
    pub fn new(corners: [PixelPoint; 4]) -> Result<Self> {
        if corners.iter().any(|c| !c.u.is_finite() || !c.v.is_finite()) {
            return Err(Error::DegenerateQuad("non-finite corner".into()));
        }
        let scale = corners
            .iter()
            .flat_map(|c| [c.u.abs(), c.v.abs()])
            .fold(1.0_f64, f64::max);
        for i in 0..4 {
            let prev = corners[(i + 3) % 4];
            let cur = corners[i];
            let next = corners[(i + 1) % 4];
            let turn = cross(prev, cur, next);
            if turn.abs() <= 1e-12 * scale * scale {
                return Err(Error::DegenerateQuad(format!(
                    "corners {}, {}, {} are collinear",
                    (i + 3) % 4,
                    i,
                    (i + 1) % 4
                )));
            }
            if turn < 0.0 {
                return Err(Error::DegenerateQuad(format!(
                    "corner {i} breaks convexity or TL,TR,BR,BL winding"
                )));
            }
        }
        Ok(Self { corners })
    }

    /// Convenience constructor from `[u, v]` pairs.
    pub fn from_array(pts: [[f64; 2]; 4]) -> Result<Self> {
        Self::new(pts.map(|[u, v]| PixelPoint::new(u, v)))
    }

    /// Axis-aligned rectangle with top-left at `(u0, v0)`.
    pub fn rect(u0: f64, v0: f64, w: f64, h: f64) -> Result<Self> {
        Self::from_array([[u0, v0], [u0 + w, v0], [u0 + w, v0 + h], [u0, v0 + h]])
    }

    pub fn corners(&self) -> &[PixelPoint; 4] {
        &self.corners
    }

    pub fn to_array(&self) -> [[f64; 2]; 4] {
        self.corners.map(|c| [c.u, c.v])
    }

    pub fn area(&self) -> f64 {
        let c = &self.corners;
        0.5 * (cross(c[0], c[1], c[2]) + cross(c[0], c[2], c[3]))
    }

    pub fn centroid(&self) -> PixelPoint {
        let (su, sv) = self
            .corners
            .iter()
            .fold((0.0, 0.0), |(su, sv), c| (su + c.u, sv + c.v));
        PixelPoint::new(su / 4.0, sv / 4.0)
    }

    /// Returns the corner list rotated by `k` positions. The result is not
    /// re-validated against the TL-first convention, only against winding.
    pub fn rotated(&self, k: usize) -> Quad {
        let mut corners = self.corners;
        corners.rotate_left(k % 4);
        Quad { corners }
    }

    /// Mean lengths of the (top, bottom) and (left, right) edge pairs.
    pub fn mean_side_lengths(&self) -> (f64, f64) {
        let c = &self.corners;
        let len = |a: PixelPoint, b: PixelPoint| (b.u - a.u).hypot(b.v - a.v);
        let w = 0.5 * (len(c[0], c[1]) + len(c[3], c[2]));
        let h = 0.5 * (len(c[0], c[3]) + len(c[1], c[2]));
        (w, h)
    }
}

/// Inside-or-on-boundary test for a convex quad, boundary tolerance 1e-9 px.
pub fn point_in_quad(q: &Quad, p: PixelPoint) -> bool {
    let c = q.corners();
    (0..4).all(|i| {
        let a = c[i];
        let b = c[(i + 1) % 4];
        let len = (b.u - a.u).hypot(b.v - a.v);
        cross(a, b, p) >= -1e-9 * len
    })
}

/// Per-axis scale factors of the scaling step applied after rectification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRatios {
    pub rx: f64,
    pub ry: f64,
}

impl ScaleRatios {
    pub const IDENTITY: ScaleRatios = ScaleRatios { rx: 1.0, ry: 1.0 };

    pub fn new(rx: f64, ry: f64) -> Result<Self> {
        if !(rx > 0.0 && rx.is_finite() && ry > 0.0 && ry.is_finite()) {
            return Err(Error::NonPositiveLength(format!(
                "scale ratios must be positive, got ({rx}, {ry})"
            )));
        }
        Ok(Self { rx, ry })
    }
}

/// `origin + (rx * (p.a - origin.a), ry * (p.b - origin.b))`.
pub fn apply_scale(s: ScaleRatios, p: ModelPoint2D, origin: ModelPoint2D) -> ModelPoint2D {
    ModelPoint2D::new(
        origin.a + s.rx * (p.a - origin.a),
        origin.b + s.ry * (p.b - origin.b),
    )
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// 3×3 projective map, normalised so `h33 == 1` when `|h33| > 1e-9` and to
/// unit Frobenius norm otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Mat3,
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Builds a homography from raw entries, normalising it. Fails when the
    /// matrix is singular or non-finite.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateQuad("non-finite homography entry".into()));
        }
        // |det| against the Hadamard bound, so the test ignores row scaling
        let bound: f64 = m
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .product();
        if bound == 0.0 || det3(&m).abs() <= 1e-12 * bound {
            return Err(Error::DegenerateQuad("singular homography".into()));
        }
        Ok(Self { m: normalize(m) })
    }

    /// Entries stored as given; used when loading persisted matrices so
    /// that the in-memory value is bit-identical to the file.
    pub(crate) fn from_stored(m: Mat3) -> Result<Self> {
        Self::from_matrix(m)?;
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn inverse(&self) -> Homography {
        let m = &self.m;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        // adjugate is a scalar multiple of the inverse; normalisation removes it
        Homography { m: normalize(adj) }
    }

    pub fn compose(&self, rhs: &Homography) -> Homography {
        Homography {
            m: normalize(mat_mul(&self.m, &rhs.m)),
        }
    }

    pub fn apply(&self, p: PixelPoint) -> Result<ModelPoint2D> {
        apply_homography(self, p)
    }
}

fn normalize(mut m: Mat3) -> Mat3 {
    let h33 = m[2][2];
    let div = if h33.abs() > 1e-9 {
        h33
    } else {
        m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    };
    for v in m.iter_mut().flatten() {
        *v /= div;
    }
    m
}

/// `(x'₁/x'₃, x'₂/x'₃)` for `x' = H (u, v, 1)ᵀ`.
pub fn apply_homography(h: &Homography, p: PixelPoint) -> Result<ModelPoint2D> {
    let m = &h.m;
    let x = m[0][0] * p.u + m[0][1] * p.v + m[0][2];
    let y = m[1][0] * p.u + m[1][1] * p.v + m[1][2];
    let w = m[2][0] * p.u + m[2][1] * p.v + m[2][2];
    if w.abs() < 1e-12 {
        return Err(Error::PointAtInfinity(w));
    }
    Ok(ModelPoint2D::new(x / w, y / w))
}

/// Similarity that moves the quad's centroid to the origin and sets the
/// mean corner distance to √2.
fn conditioning(q: &Quad) -> Mat3 {
    let c = q.centroid();
    let mean = q
        .corners()
        .iter()
        .map(|p| (p.u - c.u).hypot(p.v - c.v))
        .sum::<f64>()
        / 4.0;
    let s = std::f64::consts::SQRT_2 / mean;
    [[s, 0.0, -s * c.u], [0.0, s, -s * c.v], [0.0, 0.0, 1.0]]
}

fn transform(m: &Mat3, p: PixelPoint) -> PixelPoint {
    let w = m[2][0] * p.u + m[2][1] * p.v + m[2][2];
    PixelPoint::new(
        (m[0][0] * p.u + m[0][1] * p.v + m[0][2]) / w,
        (m[1][0] * p.u + m[1][1] * p.v + m[1][2]) / w,
    )
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below 1e-12 in magnitude.
fn solve_dense<const N: usize>(a: &mut [[f64; N]; N], b: &mut [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Exact four-point homography taking each `src` corner to the matching
/// `dst` corner.
pub fn compute_homography(src: &Quad, dst: &Quad) -> Result<Homography> {
    let ts = conditioning(src);
    let td = conditioning(dst);

    let mut a = [[0.0; 8]; 8];
    let mut b = [0.0; 8];
    for i in 0..4 {
        let p = transform(&ts, src.corners()[i]);
        let q = transform(&td, dst.corners()[i]);
        let (x, y, u, v) = (p.u, p.v, q.u, q.v);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y];
        b[2 * i] = u;
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y];
        b[2 * i + 1] = v;
    }
    let h = solve_dense(&mut a, &mut b)
        .ok_or_else(|| Error::DegenerateQuad("8x8 DLT system is singular".into()))?;
    let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]];
    // singularity is judged in the well-scaled conditioned frame
    Homography::from_matrix(hn)?;

    let td_inv = Homography::from_matrix(td)?.inverse();
    let full = mat_mul(&td_inv.m, &mat_mul(&hn, &ts));
    if full.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateQuad("non-finite homography entry".into()));
    }
    Ok(Homography { m: normalize(full) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Quad {
        Quad::rect(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn assert_mat_close(h: &Homography, expected: Mat3, tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (h.matrix()[i][j] - expected[i][j]).abs() < tol,
                    "entry ({i},{j}): {} vs {}",
                    h.matrix()[i][j],
                    expected[i][j]
                );
            }
        }
    }

    #[test]
    fn identity_and_translation() {
        let h = compute_homography(&unit(), &unit()).unwrap();
        assert_mat_close(&h, Homography::IDENTITY.m, 1e-12);

        let shifted = Quad::rect(5.0, 7.0, 1.0, 1.0).unwrap();
        let h = compute_homography(&unit(), &shifted).unwrap();
        assert_mat_close(&h, [[1.0, 0.0, 5.0], [0.0, 1.0, 7.0], [0.0, 0.0, 1.0]], 1e-12);
    }

    #[test]
    fn apply_examples() {
        let p = apply_homography(&Homography::IDENTITY, PixelPoint::new(3.5, 4.5)).unwrap();
        assert_eq!(p, ModelPoint2D::new(3.5, 4.5));

        let h = Homography::from_matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
            .unwrap();
        let p = apply_homography(&h, PixelPoint::new(1.0, 1.0)).unwrap();
        assert_eq!(p, ModelPoint2D::new(0.5, 0.5));
    }

    #[test]
    fn point_at_infinity() {
        let h = Homography::from_matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
            .unwrap();
        assert!(matches!(
            apply_homography(&h, PixelPoint::new(-1.0, 3.0)),
            Err(Error::PointAtInfinity(_))
        ));
    }

    #[test]
    fn scale_examples() {
        let p = ModelPoint2D::new(10.0, 10.0);
        let o = ModelPoint2D::new(0.0, 0.0);
        assert_eq!(apply_scale(ScaleRatios::IDENTITY, p, o), p);
        let s = ScaleRatios::new(2.0, 0.5).unwrap();
        assert_eq!(apply_scale(s, p, o), ModelPoint2D::new(20.0, 5.0));
        let s = ScaleRatios::new(2.0, 2.0).unwrap();
        assert_eq!(apply_scale(s, p, p), p);
        assert!(ScaleRatios::new(0.0, 1.0).is_err());
    }

    #[test]
    fn point_in_quad_examples() {
        let q = unit();
        assert!(point_in_quad(&q, PixelPoint::new(0.5, 0.5)));
        assert!(!point_in_quad(&q, PixelPoint::new(2.0, 2.0)));
        assert!(point_in_quad(&q, PixelPoint::new(1.0, 0.5)));
        assert!(!point_in_quad(&q, PixelPoint::new(1.0 + 1e-6, 0.5)));
    }

    #[test]
    fn quad_validation() {
        assert!(matches!(
            Quad::from_array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]),
            Err(Error::DegenerateQuad(_))
        ));
        // counter-clockwise in raster coordinates
        assert!(Quad::from_array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).is_err());
        // bow-tie
        assert!(Quad::from_array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).is_err());
        assert!(Quad::from_array([[0.0, 0.0], [f64::NAN, 0.0], [1.0, 1.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn singular_matrix_rejected() {
        assert!(Homography::from_matrix([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]])
            .is_err());
    }

    #[test]
    fn zero_h33_falls_back_to_frobenius() {
        let h = Homography::from_matrix([[0.0, 0.0, 2.0], [0.0, 2.0, 0.0], [2.0, 0.0, 0.0]])
            .unwrap();
        let norm: f64 = h.matrix().iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-15);
        assert_eq!(h.matrix()[2][2], 0.0);
    }
}
