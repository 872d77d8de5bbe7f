//! Projects a point file into a pseudo-image and prints it.
//!
//! `cargo run --example project_cloud [points.txt]` reads "x y z" lines; with
//! no argument a small synthetic scene is used.

use std::fs::File;
use std::io::BufReader;

use asyncnav::pointcloud::{project, read_xyz, PillarGridSpec, PointCloud};
use nalgebra::Vector3;

fn main() -> asyncnav::Result<()> {
    let raw = match std::env::args().nth(1) {
        Some(path) => read_xyz(BufReader::new(File::open(path)?))?,
        None => (0..40)
            .map(|k| {
                let z = -0.5 + 0.05 * k as f64;
                Vector3::new(3.0, 0.4 * (k % 5) as f64 - 0.8, z)
            })
            .collect(),
    };
    let spec = PillarGridSpec::paper_default();
    let img = project(&spec, &PointCloud::from_cartesian(&raw)?);
    println!(
        "{} points -> {}x{} image",
        raw.len(),
        spec.n_phi(),
        spec.n_theta()
    );
    img.write_to(std::io::stdout().lock())?;
    Ok(())
}
