//! Point distances to spheres, capsules, triangle meshes and whole simlets.
//!
//! cargo run --example distance_kernels

use surgsafe::geom::{dist_point_mesh, dist_point_primitive, dist_point_simlet};
use surgsafe::harness::golden_catalog;
use surgsafe::model::{GeometryPrimitive, Vec3};

fn main() {
    let capsule = GeometryPrimitive::Capsule {
        endpoint_a: Vec3::new(0.0, 0.0, 0.0),
        endpoint_b: Vec3::new(0.0, 0.0, 100.0),
        radius: 4.0,
    };
    for p in [
        Vec3::new(7.0, 0.0, 50.0),
        Vec3::new(0.0, 0.0, 110.0),
        Vec3::new(1.0, 1.0, 20.0),
    ] {
        println!("capsule  {p:?}: {:.4} mm", dist_point_primitive(p, &capsule));
    }

    let tri = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(4.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0)];
    let p = Vec3::new(5.0, 2.0, 0.0);
    println!("triangle {p:?}: {:.4} mm", dist_point_mesh(p, &tri, &[[0, 1, 2]]));

    let catalog = golden_catalog();
    let tip = Vec3::new(20.0, 5.0, 70.0);
    for s in catalog.simlets() {
        println!("{:<55} {:8.3} mm", s.name, dist_point_simlet(tip, s));
    }
}
