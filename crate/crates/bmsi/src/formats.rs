//! Output and input file formats.
//!
//! Every CSV starts with one `#` provenance line followed by a header row. JSON
//! documents carry the same information in a top-level `provenance` object.

use std::fs;
use std::path::Path;

use bmsi_core::dictionary::{BasisId, CouplingKind, Dictionary, EdgeIndex, ModelLayout, Trig};
use bmsi_core::oscillator::{Trajectory, TrajectoryMeta};
use bmsi_core::sampler::{InclusionTable, PosteriorSamples, SampleRecord};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Provenance { tool: "bmsi", version: env!("CARGO_PKG_VERSION"), config_sha256: cfg.hash(), seed: cfg.seed() }
    }

    pub fn line(&self) -> String {
        format!("# {} {} config_sha256={} seed={}", self.tool, self.version, self.config_sha256, self.seed)
    }
}

/// Full-precision float text (17 significant digits).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::config(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_csv<I, R>(path: &Path, prov: &Provenance, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut buf = Vec::new();
    buf.extend_from_slice(prov.line().as_bytes());
    buf.push(b'\n');
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(header).map_err(|e| csv_error(path, e))?;
        for row in rows {
            w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, prov: &Provenance, body: Value) -> Result<(), CliError> {
    let mut doc = serde_json::Map::new();
    doc.insert("provenance".into(), serde_json::to_value(prov).expect("provenance serializes"));
    match body {
        Value::Object(map) => doc.extend(map),
        other => {
            doc.insert("data".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("json serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_trajectory(path: &Path, prov: &Provenance, traj: &Trajectory) -> Result<(), CliError> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.n_nodes()).map(|i| format!("x{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..traj.n_samples()).map(|m| {
        let mut row = vec![num(m as f64 * traj.dt)];
        row.extend(traj.x.iter().map(|xi| num(xi[m])));
        row
    });
    write_csv(path, prov, &header, rows)
}

/// Reads a `t,x1,...,xN` file. The sampling interval must match `dt`.
pub fn read_trajectory(path: &Path, dt: f64, meta: TrajectoryMeta) -> Result<Trajectory, CliError> {
    let bad = |why: String| CliError::config(format!("{}: {why}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() || &header[0] != "t" {
        return Err(bad("expected a header row starting with `t`".into()));
    }
    let n = header.len() - 1;
    if n == 0 {
        return Err(bad("no phase columns".into()));
    }
    let mut t = Vec::new();
    let mut x = vec![Vec::new(); n];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = line + 2;
        if rec.len() != n + 1 {
            return Err(bad(format!("row {row}: {} fields, expected {}", rec.len(), n + 1)));
        }
        let parse = |k: usize| rec[k].trim().parse::<f64>().map_err(|e| bad(format!("row {row}, column {}: {e}", k + 1)));
        t.push(parse(0)?);
        for i in 0..n {
            x[i].push(parse(i + 1)?);
        }
    }
    if t.len() < 2 {
        return Err(bad(format!("{} data rows; at least 2 are needed", t.len())));
    }
    for m in 1..t.len() {
        let step = t[m] - t[m - 1];
        if (step - dt).abs() > 1e-9 * dt.max(1.0) * m as f64 {
            return Err(bad(format!("row {}: time step {step} does not match dt = {dt}", m + 2)));
        }
    }
    let mut traj = Trajectory::new(x, dt)?;
    traj.meta = meta;
    Ok(traj)
}

fn node_list(nodes: &[usize]) -> Vec<String> {
    nodes.iter().map(|n| (n + 1).to_string()).collect()
}

pub fn trig_name(t: Trig) -> &'static str {
    match t {
        Trig::Sin => "sin",
        Trig::Cos => "cos",
    }
}

pub fn kind_name(k: CouplingKind) -> &'static str {
    match k {
        CouplingKind::Pairwise => "pairwise",
        CouplingKind::ThreeBodyAsym => "asym",
        CouplingKind::ThreeBodySym => "sym",
    }
}

/// Human-readable form of a column, with 1-based node indices.
pub fn basis_label(b: &BasisId) -> String {
    match b {
        BasisId::Intrinsic => "omega".into(),
        BasisId::Coupling { edge, harmonic, trig } => {
            let (i, j) = (edge.i + 1, edge.j + 1);
            let arg = match (edge.kind, edge.k.map(|k| k + 1)) {
                (CouplingKind::ThreeBodyAsym, Some(k)) => format!("2*x{k}-x{i}-x{j}"),
                (CouplingKind::ThreeBodySym, Some(k)) => format!("x{k}+x{j}-2*x{i}"),
                _ => format!("x{j}-x{i}"),
            };
            format!("{}({harmonic}*({arg}))", trig_name(*trig))
        }
    }
}

pub fn dictionary_json(dicts: &[Dictionary]) -> Value {
    let nodes: Vec<Value> = dicts
        .iter()
        .map(|d| {
            let cols: Vec<Value> = d
                .entries
                .iter()
                .enumerate()
                .map(|(c, b)| match b {
                    BasisId::Intrinsic => json!({"column": c, "basis": "intrinsic", "label": basis_label(b)}),
                    BasisId::Coupling { edge, harmonic, trig } => {
                        let mut nodes = vec![edge.i, edge.j];
                        nodes.extend(edge.k);
                        json!({
                            "column": c,
                            "basis": kind_name(edge.kind),
                            "nodes": nodes.iter().map(|n| n + 1).collect::<Vec<_>>(),
                            "harmonic": harmonic,
                            "trig": trig_name(*trig),
                            "label": basis_label(b),
                        })
                    }
                })
                .collect();
            json!({"node": d.node + 1, "l2_max": d.l2_max, "l3_max": d.l3_max, "columns": cols})
        })
        .collect();
    json!({ "dictionaries": nodes })
}

/// Writes `c_pairwise.csv`, `c_asym.csv`, `c_sym.csv`, `d.csv`, `L2_hist.csv`, `L3_hist.csv`.
pub fn write_inclusion(dir: &Path, prov: &Provenance, table: &InclusionTable, n_nodes: usize) -> Result<(), CliError> {
    let idx = EdgeIndex::new(n_nodes);
    let mut pair = vec![vec![String::new(); n_nodes]; n_nodes];
    for (b, e) in idx.edges.iter().enumerate().filter(|(_, e)| e.is_pairwise()) {
        pair[e.i][e.j] = num(table.edges[b]);
    }
    let mut header = vec!["i".to_string()];
    header.extend((1..=n_nodes).map(|j| format!("j{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = pair.into_iter().enumerate().map(|(i, r)| std::iter::once((i + 1).to_string()).chain(r));
    write_csv(&dir.join("c_pairwise.csv"), prov, &header, rows)?;
    for (kind, file) in [(CouplingKind::ThreeBodyAsym, "c_asym.csv"), (CouplingKind::ThreeBodySym, "c_sym.csv")] {
        let rows = idx.edges.iter().enumerate().filter(|(_, e)| e.kind == kind).map(|(b, e)| {
            let mut row = node_list(&[e.i, e.j, e.k.expect("three-body edge")]);
            row.push(num(table.edges[b]));
            row
        });
        write_csv(&dir.join(file), prov, &["i", "j", "k", "probability"], rows)?;
    }
    let rows = table.d.iter().enumerate().flat_map(|(v, d)| {
        CouplingKind::ALL.into_iter().flat_map(move |kind| {
            [Trig::Sin, Trig::Cos].into_iter().map(move |trig| {
                let bit = bmsi_core::dictionary::d_bit(kind, trig);
                vec![(v + 1).to_string(), kind_name(kind).to_string(), trig_name(trig).to_string(), num(d[bit])]
            })
        })
    });
    write_csv(&dir.join("d.csv"), prov, &["d_vector", "class", "trig", "probability"], rows)?;
    for (hist, file) in [(&table.l2_hist, "L2_hist.csv"), (&table.l3_hist, "L3_hist.csv")] {
        let rows = hist.iter().enumerate().map(|(l, p)| vec![(l + 1).to_string(), num(*p)]);
        write_csv(&dir.join(file), prov, &["l", "probability"], rows)?;
    }
    Ok(())
}

pub fn write_theta(path: &Path, prov: &Provenance, dicts: &[Dictionary], active: &[Vec<bool>], theta: &[Vec<f64>]) -> Result<(), CliError> {
    let rows = dicts.iter().enumerate().flat_map(|(i, d)| {
        d.entries.iter().enumerate().map(move |(c, b)| {
            vec![(i + 1).to_string(), c.to_string(), basis_label(b), (active[i][c] as u8).to_string(), num(theta[i][c])]
        })
    });
    write_csv(path, prov, &["node", "column", "basis", "active", "coefficient"], rows)
}

/// Hex form of a bitset; bit 0 is the least significant bit of the last digit.
pub fn bits_hex(bits: &[bool]) -> String {
    if bits.is_empty() {
        return "0".into();
    }
    let digits = bits.len().div_ceil(4);
    (0..digits)
        .rev()
        .map(|d| {
            let v = (0..4).filter(|&b| bits.get(4 * d + b).copied().unwrap_or(false)).fold(0u32, |acc, b| acc | 1 << b);
            char::from_digit(v, 16).expect("nibble")
        })
        .collect()
}

pub fn sample_json(r: &SampleRecord) -> Value {
    json!({
        "sweep": r.sweep,
        "log_posterior": r.log_posterior,
        "edges": bits_hex(&r.structure.edges),
        "d": r.structure.d.iter().map(|d| d.iter().map(|&b| b as u8).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "l2": r.structure.l2,
        "l3": r.structure.l3,
        "sigma": r.sigma,
    })
}

/// One JSON line per record, with the provenance as the first line.
pub fn write_samples(path: &Path, prov: &Provenance, samples: &PosteriorSamples) -> Result<(), CliError> {
    let mut text = serde_json::to_string(&json!({ "provenance": prov })).expect("json serializes");
    text.push('\n');
    for r in &samples.records {
        text.push_str(&sample_json(r).to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn diagnostics_json(samples: &PosteriorSamples, layout: &ModelLayout, sigma_hat: &[f64]) -> Value {
    let rate = |t: &bmsi_core::sampler::Tally| json!({"proposed": t.proposed, "accepted": t.accepted, "rate": t.rate()});
    json!({
        "records": samples.records.len(),
        "n_bits": layout.n_bits,
        "betas": samples.betas,
        "swaps": samples.swaps.iter().enumerate().map(|(r, t)| {
            json!({"rungs": [r, r + 1], "proposed": t.proposed, "accepted": t.accepted, "rate": t.rate()})
        }).collect::<Vec<_>>(),
        "moves": samples.moves.iter().map(|m| json!({
            "edge": rate(&m.edge), "d": rate(&m.d), "sigma": rate(&m.sigma), "tau": rate(&m.tau), "order": rate(&m.order),
        })).collect::<Vec<_>>(),
        "mean_log_likelihood": samples.mean_loglik,
        "sigma_steps": samples.sigma_steps,
        "tau_steps": samples.tau_steps,
        "sigma_hat": sigma_hat,
    })
}
