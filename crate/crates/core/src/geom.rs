//! Minimum-distance kernels between a tool tip and simlet geometry.
//!
//! All distances are surface distances in millimeters and clamp to zero
//! inside solid primitives. Meshes are treated as surfaces and traversed
//! triangle by triangle.

use crate::model::{GeometryPrimitive, Simlet, Vec3};

pub fn dist_point_sphere(p: Vec3, center: Vec3, radius: f64) -> f64 {
    (p.distance(center) - radius).max(0.0)
}

/// Closest point to `p` on the segment `ab`.
pub fn closest_point_segment(p: Vec3, a: Vec3, b: Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn dist_point_segment(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    p.distance(closest_point_segment(p, a, b))
}

pub fn dist_point_capsule(p: Vec3, a: Vec3, b: Vec3, radius: f64) -> f64 {
    (dist_point_segment(p, a, b) - radius).max(0.0)
}

/// Closest point to `p` on triangle `abc`, by Voronoi region classification.
pub fn closest_point_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
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

    let denom = va + vb + vc;
    if denom == 0.0 {
        // Degenerate (collinear) triangle: fall back to the closest edge.
        return [(a, b), (b, c), (c, a)]
            .into_iter()
            .map(|(s, e)| closest_point_segment(p, s, e))
            .min_by(|x, y| p.distance(*x).total_cmp(&p.distance(*y)))
            .expect("three edges");
    }
    let v = vb / denom;
    let w = vc / denom;
    a + ab * v + ac * w
}

pub fn dist_point_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    p.distance(closest_point_triangle(p, a, b, c))
}

pub fn dist_point_mesh(p: Vec3, vertices: &[Vec3], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|&[i, j, k]| dist_point_triangle(p, vertices[i], vertices[j], vertices[k]))
        .fold(f64::INFINITY, f64::min)
}

pub fn dist_point_primitive(p: Vec3, g: &GeometryPrimitive) -> f64 {
    match g {
        GeometryPrimitive::Sphere { center, radius } => dist_point_sphere(p, *center, *radius),
        GeometryPrimitive::Capsule {
            endpoint_a,
            endpoint_b,
            radius,
        } => dist_point_capsule(p, *endpoint_a, *endpoint_b, *radius),
        GeometryPrimitive::TriangleMesh {
            vertices,
            triangles,
        } => dist_point_mesh(p, vertices, triangles),
    }
}

/// Minimum over the simlet's primitives. Infinite for a simlet without
/// geometry, which catalog validation rules out.
pub fn dist_point_simlet(p: Vec3, s: &Simlet) -> f64 {
    s.geometry
        .iter()
        .map(|g| dist_point_primitive(p, g))
        .fold(f64::INFINITY, f64::min)
}
