use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::{build_topology, RingMode, TriMesh, Vec3};

const LEAF_SIZE: usize = 4;
/// Far-field cutoff for the dipole winding-number approximation, in units of
/// cluster radius.
const WINDING_FAR_FIELD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedDistanceResult {
    /// Negative inside the body.
    pub distance: f64,
    pub closest: Vec3,
    /// Unit gradient of the distance field: points away from the surface
    /// outside, towards it (still outward) inside.
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn distance_squared(&self, p: &Vec3) -> f64 {
        let d = (self.min - p).sup(&(p - self.max)).sup(&Vec3::zeros());
        d.norm_squared()
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `[start, end)` into `order`. Interior: children indices.
    kind: NodeKind,
    /// Sum of area-weighted normals (half cross products) of the cluster.
    area_normal: Vec3,
    /// Area-weighted centroid and enclosing radius about it.
    center: Vec3,
    radius: f64,
}

#[derive(Debug, Clone, Copy)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

/// Posed body surface with a bounding-volume hierarchy for closest-point and
/// generalized-winding-number queries. Immutable; queries are `&self` and may
/// run concurrently.
#[derive(Debug, Clone)]
pub struct BodySdf {
    mesh: TriMesh,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl BodySdf {
    /// Fails unless the mesh is closed (no boundary edges).
    pub fn new(mesh: TriMesh) -> Result<Self> {
        mesh.validate()?;
        if mesh.faces.is_empty() {
            return Err(Error::InvalidMesh("body mesh has no faces".into()));
        }
        let topo = build_topology(&mesh, RingMode::Open)?;
        let boundary = topo.boundary_edge_count();
        if boundary > 0 {
            return Err(Error::NotWatertight(boundary));
        }
        let mut sdf = Self {
            order: (0..mesh.faces.len()).collect(),
            nodes: Vec::new(),
            mesh,
        };
        let count = sdf.order.len();
        sdf.build(0, count);
        Ok(sdf)
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.mesh.faces[f];
        [self.mesh.vertices[a], self.mesh.vertices[b], self.mesh.vertices[c]]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        let mut centroid_bounds = Aabb::empty();
        let mut area_normal = Vec3::zeros();
        let mut weighted = Vec3::zeros();
        let mut area_sum = 0.0;
        for &f in &self.order[start..end] {
            let t = self.triangle(f);
            for p in &t {
                bounds.grow(p);
            }
            let c = (t[0] + t[1] + t[2]) / 3.0;
            centroid_bounds.grow(&c);
            let n = 0.5 * (t[1] - t[0]).cross(&(t[2] - t[0]));
            let a = n.norm();
            area_normal += n;
            weighted += c * a;
            area_sum += a;
        }
        let center = if area_sum > 0.0 {
            weighted / area_sum
        } else {
            (bounds.min + bounds.max) * 0.5
        };
        let mut radius: f64 = 0.0;
        for &f in &self.order[start..end] {
            for p in &self.triangle(f) {
                radius = radius.max((p - center).norm());
            }
        }

        let id = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf { start, end },
            area_normal,
            center,
            radius,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }

        let extent = centroid_bounds.max - centroid_bounds.min;
        let axis = extent.imax();
        let mid = (start + end) / 2;
        let mesh = &self.mesh;
        let key = |f: usize| {
            let [a, b, c] = mesh.faces[f];
            mesh.vertices[a][axis] + mesh.vertices[b][axis] + mesh.vertices[c][axis]
        };
        self.order[start..end].select_nth_unstable_by(mid - start, |&x, &y| {
            key(x).total_cmp(&key(y)).then(x.cmp(&y))
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    /// Closest surface point: `(face, point, squared distance)`.
    fn closest(&self, q: &Vec3) -> (usize, Vec3, f64) {
        let mut best = (usize::MAX, Vec3::zeros(), f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bounds.distance_squared(q) > best.2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &f in &self.order[start..end] {
                        let [a, b, c] = self.triangle(f);
                        let p = closest_point_on_triangle(q, &a, &b, &c);
                        let d2 = (p - q).norm_squared();
                        if d2 < best.2 || (d2 == best.2 && f < best.0) {
                            best = (f, p, d2);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left].bounds.distance_squared(q);
                    let dr = self.nodes[right].bounds.distance_squared(q);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }

    /// Generalized winding number, exact near the query and dipole-approximated
    /// for distant clusters.
    pub fn winding_number(&self, q: &Vec3) -> f64 {
        let mut total = 0.0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let r = node.center - q;
            let dist = r.norm();
            if dist > WINDING_FAR_FIELD * node.radius {
                total += node.area_normal.dot(&r) / (dist * dist * dist);
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &f in &self.order[start..end] {
                        let [a, b, c] = self.triangle(f);
                        total += solid_angle(q, &a, &b, &c);
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        total / (4.0 * PI)
    }

    /// Winding number summed over every triangle without approximation.
    pub fn winding_number_exact(&self, q: &Vec3) -> f64 {
        (0..self.mesh.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                solid_angle(q, &a, &b, &c)
            })
            .sum::<f64>()
            / (4.0 * PI)
    }

    pub fn query(&self, q: &Vec3) -> SignedDistanceResult {
        let (face, closest, d2) = self.closest(q);
        let unsigned = d2.sqrt();
        let inside = self.winding_number(q) > 0.5;
        let sign = if inside { -1.0 } else { 1.0 };
        let normal = if unsigned > 1e-12 {
            (q - closest) * (sign / unsigned)
        } else {
            self.mesh.face_normal(face)
        };
        SignedDistanceResult {
            distance: sign * unsigned,
            closest,
            normal,
        }
    }

    /// Pseudo-normal sign test: the side of the closest triangle's plane.
    /// Less robust than the winding number near edges and vertices.
    pub fn face_normal_sign(&self, q: &Vec3) -> f64 {
        let (face, closest, _) = self.closest(q);
        (q - closest).dot(&self.mesh.face_normal(face)).signum()
    }
}

/// Signed solid angle subtended by triangle `abc` at `q`.
pub fn solid_angle(q: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (a, b, c) = (a - q, b - q, c - q);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(&b.cross(&c));
    let denom = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * det.atan2(denom)
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::fixtures;

    fn sphere() -> BodySdf {
        BodySdf::new(fixtures::uv_sphere(1.0, 24, 48)).unwrap()
    }

    #[test]
    fn rejects_open_mesh() {
        assert!(matches!(BodySdf::new(fixtures::unit_square()), Err(Error::NotWatertight(4))));
    }

    #[test]
    fn sphere_center_and_exterior() {
        let sdf = sphere();
        // the tessellated sphere sits inside the unit sphere by at most
        // 1 - cos(pi/24) along its flattest facets
        let tess = 1.0 - (PI / 24.0).cos();
        let c = sdf.query(&Vec3::zeros());
        assert!(c.distance < 0.0);
        assert!((c.distance + 1.0).abs() <= tess + 1e-12);
        let out = sdf.query(&Vec3::new(2.0, 0.0, 0.0));
        assert!((out.distance - 1.0).abs() <= tess + 1e-12);
        assert_relative_eq!(out.normal, Vec3::x(), epsilon = 1e-9);
    }

    #[test]
    fn query_on_vertex_is_zero() {
        let sdf = sphere();
        let v = sdf.mesh().vertices[37];
        let r = sdf.query(&v);
        assert!(r.distance.abs() < 1e-9);
        assert_relative_eq!(r.normal.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn closest_point_matches_brute_force() {
        let sdf = BodySdf::new(fixtures::capsule(0.25, 1.0, 4, 8, 16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let q = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0));
            let r = sdf.query(&q);
            let brute = (0..sdf.mesh().face_count())
                .map(|f| {
                    let [a, b, c] = sdf.triangle(f);
                    (closest_point_on_triangle(&q, &a, &b, &c) - q).norm()
                })
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!(r.distance.abs(), brute, epsilon = 1e-12);
            assert_relative_eq!((r.closest - q).norm(), r.distance.abs(), epsilon = 1e-9);
            assert_relative_eq!(r.normal.norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn approximate_winding_agrees_with_exact() {
        let sdf = sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let exact = sdf.winding_number_exact(&q);
            let fast = sdf.winding_number(&q);
            assert!((exact - fast).abs() < 0.05, "{exact} vs {fast}");
            assert_eq!(exact > 0.5, fast > 0.5);
        }
    }

    #[test]
    fn pseudo_normal_sign_agrees_away_from_surface() {
        let sdf = sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let q = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let r = sdf.query(&q);
            if r.distance.abs() > 1e-3 {
                assert_eq!(r.distance.signum(), sdf.face_normal_sign(&q));
            }
        }
    }
}
