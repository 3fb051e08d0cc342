//! Fixtures shared by the criterion benches.

use pxlap_core::{make_benchmark, Interval, Mesh, NodalField};

pub fn square_mesh(m: usize) -> Mesh {
    Mesh::uniform_rect(Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0), m).expect("valid mesh size")
}

/// Interpolant of the exact benchmark solution for parameter `b`.
pub fn benchmark_interpolant(mesh: &Mesh, b: f64) -> NodalField<'_> {
    let case = make_benchmark(b).expect("valid benchmark parameter");
    pxlap_core::mesh::interpolate(|x| case.exact_u(x), mesh)
}
