use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendKind, BenchSample, Op, Result};
use crate::pfs::StoreCounters;

pub const CSV_HEADER: &str = "records,op,backend,wall_ns,simulated_ns,bytes_cleared,ciphertext_bytes_copied_in,\
nodes_decrypted,nodes_encrypted,boundary_reads,boundary_writes,ops";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    records: u64,
    op: Op,
    backend: BackendKind,
    wall_ns: u64,
    simulated_ns: u64,
    bytes_cleared: u64,
    ciphertext_bytes_copied_in: u64,
    nodes_decrypted: u64,
    nodes_encrypted: u64,
    boundary_reads: u64,
    boundary_writes: u64,
    ops: u64,
}

impl From<&BenchSample> for Row {
    fn from(s: &BenchSample) -> Row {
        let c = &s.counters;
        Row {
            records: s.records,
            op: s.op,
            backend: s.backend,
            wall_ns: s.wall_ns,
            simulated_ns: s.simulated_ns,
            bytes_cleared: c.bytes_cleared,
            ciphertext_bytes_copied_in: c.ciphertext_bytes_copied_in,
            nodes_decrypted: c.nodes_decrypted,
            nodes_encrypted: c.nodes_encrypted,
            boundary_reads: c.boundary_reads,
            boundary_writes: c.boundary_writes,
            ops: s.ops,
        }
    }
}

impl From<Row> for BenchSample {
    fn from(r: Row) -> BenchSample {
        BenchSample {
            records: r.records,
            op: r.op,
            backend: r.backend,
            wall_ns: r.wall_ns,
            simulated_ns: r.simulated_ns,
            counters: StoreCounters {
                bytes_cleared: r.bytes_cleared,
                ciphertext_bytes_copied_in: r.ciphertext_bytes_copied_in,
                nodes_decrypted: r.nodes_decrypted,
                nodes_encrypted: r.nodes_encrypted,
                boundary_reads: r.boundary_reads,
                boundary_writes: r.boundary_writes,
            },
            ops: r.ops,
        }
    }
}

/// Writes the header and one LF-terminated row per sample.
pub fn emit_csv<W: Write>(samples: &[BenchSample], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for s in samples {
        w.serialize(Row::from(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<BenchSample>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<Row>()
        .map(|row| Ok(BenchSample::from(row?)))
        .collect()
}

pub fn write_csv_file(samples: &[BenchSample], path: &Path) -> Result<()> {
    emit_csv(samples, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn read_csv_file(path: &Path) -> Result<Vec<BenchSample>> {
    parse_csv(std::fs::File::open(path)?)
}
