//! File formats: edge-list graph text, JSON exports, per-vertex value
//! arrays, edge-field text, and trajectory/diagnostics CSV.
//!
//! Graph text format, one item per line with `#` comments:
//!
//! ```text
//! mode=closed root=0
//! 0 1 1.0
//! 1 2 1.0
//! ```
//!
//! Absorbing graphs additionally carry the parent measure as `pi <i> <v>`
//! lines (required for every vertex); closed graphs reject them, since the
//! measure is recomputed from the weights.
//!
//! Per-vertex data (densities, potentials) are JSON arrays indexed by
//! vertex. CSV floats are printed with 17 significant digits so parsing
//! them back is exact; JSON floats use the shortest exact representation.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fpe::Trajectory;
use crate::graph::{TruncationMode, WeightedGraph};
use crate::operators::EdgeField;

/// Formats a float with 17 significant digits (exact f64 round-trip).
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses the graph text format.
pub fn parse_graph_text(text: &str) -> Result<WeightedGraph> {
    let mut mode: Option<TruncationMode> = None;
    let mut root = 0usize;
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut pi_entries: Vec<(usize, f64)> = Vec::new();
    let mut saw_header = false;

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let human_line = lineno + 1;
        if line.contains('=') {
            if saw_header {
                return Err(Error::Parse(format!(
                    "line {human_line}: duplicate header line"
                )));
            }
            saw_header = true;
            for field in line.split_whitespace() {
                let (key, value) = field.split_once('=').ok_or_else(|| {
                    Error::Parse(format!("line {human_line}: malformed header field {field}"))
                })?;
                match key {
                    "mode" => {
                        mode = Some(match value {
                            "closed" => TruncationMode::Closed,
                            "absorbing" => TruncationMode::Absorbing,
                            other => {
                                return Err(Error::Parse(format!(
                                    "line {human_line}: unknown mode {other}"
                                )))
                            }
                        });
                    }
                    "root" => {
                        root = value.parse().map_err(|_| {
                            Error::Parse(format!("line {human_line}: bad root index {value}"))
                        })?;
                    }
                    other => {
                        return Err(Error::Parse(format!(
                            "line {human_line}: unknown header key {other}"
                        )))
                    }
                }
            }
            continue;
        }

        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["pi", idx, value] => {
                let i: usize = idx.parse().map_err(|_| {
                    Error::Parse(format!("line {human_line}: bad vertex index {idx}"))
                })?;
                let v: f64 = value.parse().map_err(|_| {
                    Error::Parse(format!("line {human_line}: bad measure value {value}"))
                })?;
                pi_entries.push((i, v));
            }
            [i, j, w] => {
                let i: usize = i
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {human_line}: bad vertex index {i}")))?;
                let j: usize = j
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {human_line}: bad vertex index {j}")))?;
                let w: f64 = w
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {human_line}: bad weight {w}")))?;
                edges.push((i, j, w));
            }
            _ => {
                return Err(Error::Parse(format!(
                    "line {human_line}: expected `i j weight`, `pi i value`, or a header"
                )))
            }
        }
    }

    let mode = mode.ok_or_else(|| {
        Error::Parse("missing header line `mode=closed|absorbing root=<k>`".into())
    })?;
    match mode {
        TruncationMode::Closed => {
            if !pi_entries.is_empty() {
                return Err(Error::Parse(
                    "closed mode recomputes the measure; `pi` lines are not allowed".into(),
                ));
            }
            WeightedGraph::closed(&edges, root)
        }
        TruncationMode::Absorbing => {
            let n = edges
                .iter()
                .map(|&(i, j, _)| i.max(j))
                .max()
                .map(|m| m + 1)
                .unwrap_or(0);
            let mut measure = vec![f64::NAN; n];
            for (i, v) in pi_entries {
                if i >= n {
                    return Err(Error::Parse(format!(
                        "pi entry for vertex {i} outside the edge-defined range"
                    )));
                }
                measure[i] = v;
            }
            if let Some(missing) = measure.iter().position(|v| v.is_nan()) {
                return Err(Error::Parse(format!(
                    "absorbing mode requires a `pi` line for every vertex; vertex {missing} missing"
                )));
            }
            WeightedGraph::absorbing(&edges, &measure, root)
        }
    }
}

pub fn read_graph_text(path: impl AsRef<Path>) -> Result<WeightedGraph> {
    parse_graph_text(&std::fs::read_to_string(path)?)
}

/// Emits the graph text format; parses back to an identical graph.
pub fn graph_to_text(g: &WeightedGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("mode={} root={}\n", g.mode(), g.root()));
    if g.mode() == TruncationMode::Absorbing {
        for (i, pi) in g.measure().iter().enumerate() {
            out.push_str(&format!("pi {} {}\n", i, format_float(*pi)));
        }
    }
    for e in g.edges() {
        out.push_str(&format!("{} {} {}\n", e.u, e.v, format_float(e.weight)));
    }
    out
}

pub fn write_graph_text(g: &WeightedGraph, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, graph_to_text(g))?)
}

#[derive(Serialize)]
struct GraphJson<'a> {
    n: usize,
    root: usize,
    mode: TruncationMode,
    measure: &'a [f64],
    deficit: &'a [f64],
    edges: Vec<EdgeJson>,
}

#[derive(Serialize)]
struct EdgeJson {
    i: usize,
    j: usize,
    weight: f64,
}

/// JSON export with vertices, edges, and the measure.
pub fn graph_to_json(g: &WeightedGraph) -> String {
    let doc = GraphJson {
        n: g.n(),
        root: g.root(),
        mode: g.mode(),
        measure: g.measure(),
        deficit: g.deficit(),
        edges: g
            .edges()
            .iter()
            .map(|e| EdgeJson {
                i: e.u,
                j: e.v,
                weight: e.weight,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("graph serialization cannot fail")
}

pub fn write_graph_json(g: &WeightedGraph, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, graph_to_json(g))?)
}

/// Parses a JSON array of per-vertex values.
pub fn parse_values_json(text: &str) -> Result<Vec<f64>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("bad value array: {e}")))
}

pub fn read_values_json(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_values_json(&std::fs::read_to_string(path)?)
}

pub fn values_to_json(values: &[f64]) -> String {
    serde_json::to_string(values).expect("value serialization cannot fail")
}

pub fn write_values_json(values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, values_to_json(values))?)
}

/// CSV export `vertex,rho` for plotting.
pub fn density_to_csv(values: &[f64]) -> String {
    let mut out = String::from("vertex,rho\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", format_float(*v)));
    }
    out
}

pub fn write_density_csv(values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, density_to_csv(values))?)
}

/// Edge-field debug text: one `i j value` line per canonical edge.
pub fn edge_field_to_text(phi: &EdgeField, g: &WeightedGraph) -> String {
    let mut out = String::new();
    for (e, v) in g.edges().iter().zip(phi.values()) {
        out.push_str(&format!("{} {} {}\n", e.u, e.v, format_float(*v)));
    }
    out
}

/// Parses `i j value` lines into an edge field on the given graph.
/// Orientation follows the listed pair: a line `j i v` with `j > i` stores
/// `-v` on the canonical edge.
pub fn parse_edge_field_text(text: &str, g: &WeightedGraph) -> Result<EdgeField> {
    let mut values = vec![None; g.num_edges()];
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let human_line = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [i, j, v] = fields.as_slice() else {
            return Err(Error::Parse(format!(
                "line {human_line}: expected `i j value`"
            )));
        };
        let i: usize = i
            .parse()
            .map_err(|_| Error::Parse(format!("line {human_line}: bad vertex index {i}")))?;
        let j: usize = j
            .parse()
            .map_err(|_| Error::Parse(format!("line {human_line}: bad vertex index {j}")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Parse(format!("line {human_line}: bad value {v}")))?;
        let Some(edge_idx) = g
            .edges()
            .iter()
            .position(|e| (e.u, e.v) == (i.min(j), i.max(j)))
        else {
            return Err(Error::Parse(format!(
                "line {human_line}: ({i}, {j}) is not an edge"
            )));
        };
        let canonical = if i < j { v } else { -v };
        if values[edge_idx].is_some() {
            return Err(Error::Parse(format!(
                "line {human_line}: duplicate value for edge ({i}, {j})"
            )));
        }
        values[edge_idx] = Some(canonical);
    }
    let filled: Vec<f64> = values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    EdgeField::from_values(g, filled)
}

/// Trajectory CSV: `t,rho_0,...,rho_{n-1}`, one row per recorded state.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map(Vec::len).unwrap_or(0);
    let mut out = String::from("t");
    for i in 0..n {
        out.push_str(&format!(",rho_{i}"));
    }
    out.push('\n');
    for (t, state) in traj.times.iter().zip(&traj.states) {
        out.push_str(&format_float(*t));
        for v in state {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, trajectory_to_csv(traj))?)
}

/// Parses a trajectory CSV back into times and states.
pub fn parse_trajectory_csv(text: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse("empty trajectory file".into()));
    };
    if !header.starts_with("t,") {
        return Err(Error::Parse("trajectory header must start with `t,`".into()));
    }
    let cols = header.split(',').count();
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let human_line = lineno + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Parse(format!(
                "line {human_line}: expected {cols} columns, got {}",
                fields.len()
            )));
        }
        let mut parsed = fields.iter().map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {human_line}: bad number {f}")))
        });
        times.push(parsed.next().unwrap()?);
        states.push(parsed.collect::<Result<Vec<f64>>>()?);
    }
    Ok((times, states))
}

/// Diagnostics CSV. Column order:
/// `t,mass_defect,free_energy,dissipation,min_rho,second_moment`, then one
/// `l<p>_to_gibbs` column per configured even exponent, then
/// `linf_to_gibbs,step_size,rejected_steps`.
pub fn diagnostics_to_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,mass_defect,free_energy,dissipation,min_rho,second_moment");
    for p in &traj.exponents {
        out.push_str(&format!(",l{p}_to_gibbs"));
    }
    out.push_str(",linf_to_gibbs,step_size,rejected_steps\n");
    for (t, d) in traj.times.iter().zip(&traj.diagnostics) {
        out.push_str(&format_float(*t));
        for v in [
            d.mass_defect,
            d.free_energy,
            d.dissipation,
            d.min_density,
            d.second_moment,
        ] {
            out.push(',');
            out.push_str(&format_float(v));
        }
        for v in &d.distances_to_gibbs {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push(',');
        out.push_str(&format_float(d.sup_distance_to_gibbs));
        out.push(',');
        out.push_str(&format_float(d.step_size));
        out.push_str(&format!(",{}\n", d.rejected_steps));
    }
    out
}

pub fn write_diagnostics_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, diagnostics_to_csv(traj))?)
}
