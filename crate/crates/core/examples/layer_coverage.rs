//! How much of each surface the first k layers capture.

use spmap::encode::{coverage, encode_with_stats, EncodeConfig};
use spmap::mesh::normalize_mesh;
use spmap::sphere::SphericalGrid;

fn main() -> spmap::Result<()> {
    let grid = SphericalGrid::new(128, 256)?;
    println!("{:<16} {:>7} {:>7} {:>7} {:>7} {:>9}", "mesh", "k=1", "k=2", "k=3", "k=4", "max hits");
    for f in spmap::fixtures::desk_corpus() {
        let mesh = normalize_mesh(&f.mesh)?;
        let mut row = Vec::new();
        let mut max_hits = 0;
        for k in 1..=4 {
            let (map, stats) = encode_with_stats(&mesh, &EncodeConfig::new(grid, k))?;
            max_hits = stats.max_hits;
            row.push(coverage(&mesh, &map, 10_000, 0.02, 0)?);
        }
        println!(
            "{:<16} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>9}",
            f.id, row[0], row[1], row[2], row[3], max_hits
        );
    }
    Ok(())
}
