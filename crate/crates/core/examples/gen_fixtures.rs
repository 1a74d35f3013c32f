//! Regenerate the committed geometry fixtures under `fixtures/`.

use splinedeform::io::{save_geometry, Geometry};
use splinedeform::sample_domains;
use std::path::Path;

fn main() {
    let dir = Path::new("fixtures");
    std::fs::create_dir_all(dir).unwrap();
    save_geometry(
        &dir.join("puzzle.geo"),
        &Geometry::Shell(sample_domains::puzzle_shell_2d()),
    )
    .unwrap();
    save_geometry(
        &dir.join("concave.geo"),
        &Geometry::Shell(sample_domains::concave_shell_2d()),
    )
    .unwrap();
    save_geometry(
        &dir.join("unit_square_shell.geo"),
        &Geometry::Shell(sample_domains::identity_square(1, 2).boundary()),
    )
    .unwrap();
    save_geometry(
        &dir.join("identity_square.geo"),
        &Geometry::Patch(sample_domains::identity_square(2, 5)),
    )
    .unwrap();
    save_geometry(
        &dir.join("wavy_square.geo"),
        &Geometry::Patch(sample_domains::wavy_square()),
    )
    .unwrap();
    println!("fixtures written to {}", dir.display());
}
