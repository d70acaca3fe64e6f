//! Field snapshots as legacy VTK ASCII unstructured grids.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::state::{Problem, SimState};

/// VTK cell type codes for the simplices we write.
const VTK_VERTEX: u8 = 1;
const VTK_LINE: u8 = 3;
const VTK_TRIANGLE: u8 = 5;

/// Renders `state` on the problem mesh. Point data: displacement (padded to
/// three components), temperature and, for nodal internal variables, one
/// scalar per component; element-wise internal variables go to cell data.
pub fn render_fields(problem: &Problem, state: &SimState) -> String {
    let mesh = &problem.mesh;
    let ops = &problem.ops;
    let d = mesh.dim;
    let n = mesh.nodes.len();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "thermogsm t={:e}", state.t);
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for x in &mesh.nodes {
        let _ = writeln!(s, "{:e} {:e} 0e0", x[0], x[1]);
    }
    let (cells, kind): (Vec<Vec<usize>>, u8) = match d {
        0 => (vec![vec![0]], VTK_VERTEX),
        1 => (mesh.elements.clone(), VTK_LINE),
        _ => (mesh.elements.clone(), VTK_TRIANGLE),
    };
    let size: usize = cells.iter().map(|c| c.len() + 1).sum();
    let _ = writeln!(s, "CELLS {} {size}", cells.len());
    for c in &cells {
        let ids: Vec<String> = c.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "{} {}", c.len(), ids.join(" "));
    }
    let _ = writeln!(s, "CELL_TYPES {}", cells.len());
    for _ in &cells {
        let _ = writeln!(s, "{kind}");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    let _ = writeln!(s, "VECTORS u double");
    for i in 0..n {
        let mut u = [0.0; 3];
        for c in 0..d {
            u[c] = state.u[i * d + c];
        }
        let _ = writeln!(s, "{:e} {:e} {:e}", u[0], u[1], u[2]);
    }
    scalars(&mut s, "theta", state.theta.iter().copied());
    let m = problem.material.z_dim();
    let nodal = ops.points.len() == n && d > 0 && ops.points.iter().enumerate().all(|(k, p)| {
        matches!(p.site, crate::fem::PointSite::Node(i) if i == k)
    });
    if nodal || d == 0 {
        for k in 0..m {
            scalars(&mut s, &format!("z{k}"), state.z.iter().map(|z| z[k]));
        }
    } else {
        let _ = writeln!(s, "CELL_DATA {}", cells.len());
        for k in 0..m {
            scalars(&mut s, &format!("z{k}"), state.z.iter().map(|z| z[k]));
        }
    }
    s
}

fn scalars(s: &mut String, name: &str, values: impl Iterator<Item = f64>) {
    let _ = writeln!(s, "SCALARS {name} double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(s, "{v:e}");
    }
}

pub fn write_fields<W: Write>(problem: &Problem, state: &SimState, mut out: W) -> Result<()> {
    out.write_all(render_fields(problem, state).as_bytes())?;
    Ok(())
}
