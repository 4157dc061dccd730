//! Files written by the runner.

use std::fmt::Write as _;
use std::path::Path;

use ucfem::analysis::CSV_HEADER;
use ucfem::mesh::Mesh;

use crate::{CliError, Result};

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Plain-text mesh: a header `nv nt nb ni`, then one `x y` line per vertex and
/// one `i j k` line per triangle (0-based).
pub fn mesh_dump(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {} {} {}",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.boundary_edges().len(),
        mesh.interior_faces().len()
    );
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {}", v[0], v[1]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// Column `name` of a CSV produced by the runner, with empty cells as `None`.
pub fn csv_column(csv: &str, name: &str) -> Option<Vec<Option<f64>>> {
    let mut lines = csv.lines();
    let header = lines.next()?;
    if header != CSV_HEADER {
        return None;
    }
    let idx = header.split(',').position(|c| c == name)?;
    lines
        .map(|l| {
            let cell = l.split(',').nth(idx)?;
            if cell.is_empty() {
                Some(None)
            } else {
                cell.parse().ok().map(Some)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_dump_layout() {
        let mesh = Mesh::unit_square(3).unwrap();
        let dump = mesh_dump(&mesh);
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines[0], "9 8 8 8");
        assert_eq!(lines.len(), 1 + 9 + 8);
        assert_eq!(lines[1], "0 0");
        let tri: Vec<usize> = lines[10].split(' ').map(|v| v.parse().unwrap()).collect();
        assert!(tri.iter().all(|&i| i < 9));
    }

    #[test]
    fn csv_column_reads_empty_cells() {
        let csv = format!(
            "{CSV_HEADER}\n0,5,0.5,25,1,2,,3,4,5,6,7,25,1,\n1,9,0.25,81,0.5,1,,3,4,5,6,7,25,1,1\n"
        );
        assert_eq!(csv_column(&csv, "rate_h1").unwrap(), vec![None, Some(1.0)]);
        assert_eq!(csv_column(&csv, "n").unwrap(), vec![Some(5.0), Some(9.0)]);
        assert!(csv_column(&csv.replace("err_h1", "err_H1"), "n").is_none());
    }
}
