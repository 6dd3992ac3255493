use std::io::Read;
use std::path::Path;

use log::warn;

use super::normalize::normalize_record;
use super::{FeatureVector, RawFlowRecord};
use crate::error::{Error, Result};

/// NetFlow v1 (NF-ToN-IoT) column layout.
pub const CSV_COLUMNS: [&str; 13] = [
    "IPV4_SRC_ADDR",
    "L4_SRC_PORT",
    "IPV4_DST_ADDR",
    "L4_DST_PORT",
    "PROTOCOL",
    "L7_PROTO",
    "IN_BYTES",
    "OUT_BYTES",
    "IN_PKTS",
    "OUT_PKTS",
    "TCP_FLAGS",
    "FLOW_DURATION_MILLISECONDS",
    "Label",
];

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Abort on the first malformed row instead of collecting it.
    pub strict: bool,
    /// Clamp values above the byte-width bound instead of rejecting the row.
    pub clamp: bool,
    /// Zero the two port components.
    pub drop_ports: bool,
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub vectors: Vec<FeatureVector>,
    /// Rejected rows, each an [`Error::Row`] carrying its 1-based line number.
    pub row_errors: Vec<Error>,
    pub clamped_rows: usize,
}

pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<IngestReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, options)
}

pub fn ingest_reader<R: Read>(reader: R, options: &IngestOptions) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; CSV_COLUMNS.len()];
    let mut missing = Vec::new();
    for (slot, col) in index.iter_mut().zip(CSV_COLUMNS) {
        match headers.iter().position(|h| h.trim() == col) {
            Some(i) => *slot = i,
            None => missing.push(col.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema(missing));
    }

    let mut report = IngestReport::default();
    for result in rdr.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parsed = parse_row(&record, &index).and_then(|raw| normalize_record(&raw, options.clamp, options.drop_ports));
        match parsed {
            Ok((vector, clamped)) => {
                if clamped {
                    warn!("line {line}: value clamped to its byte-width bound");
                    report.clamped_rows += 1;
                }
                report.vectors.push(vector);
            }
            Err(e) => {
                let err = Error::Row { line, message: e.to_string() };
                if options.strict {
                    return Err(err);
                }
                report.row_errors.push(err);
            }
        }
    }
    Ok(report)
}

fn parse_row(record: &csv::StringRecord, index: &[usize; CSV_COLUMNS.len()]) -> Result<RawFlowRecord> {
    let field = |i: usize| -> Result<&str> {
        record
            .get(index[i])
            .map(str::trim)
            .ok_or_else(|| Error::InvalidArgument(format!("missing field {}", CSV_COLUMNS[i])))
    };
    let int = |i: usize| -> Result<u64> {
        let s = field(i)?;
        if let Ok(v) = s.parse::<u64>() {
            return Ok(v);
        }
        // nDPI exports L7_PROTO as "major.minor".
        if CSV_COLUMNS[i] == "L7_PROTO" {
            if let Ok(v) = s.parse::<f64>() {
                if v.is_finite() && v >= 0.0 {
                    return Ok(v.trunc() as u64);
                }
            }
        }
        Err(Error::InvalidArgument(format!("{}: cannot parse '{s}' as a non-negative integer", CSV_COLUMNS[i])))
    };
    let label = int(12)?;
    if label > 1 {
        return Err(Error::InvalidArgument(format!("Label must be 0 or 1, got {label}")));
    }
    Ok(RawFlowRecord {
        src_addr: field(0)?.to_string(),
        l4_src_port: int(1)?,
        dst_addr: field(2)?.to_string(),
        l4_dst_port: int(3)?,
        protocol: int(4)?,
        l7_proto: int(5)?,
        in_bytes: int(6)?,
        out_bytes: int(7)?,
        in_pkts: int(8)?,
        out_pkts: int(9)?,
        tcp_flags: int(10)?,
        flow_duration_ms: int(11)?,
        label: label as u8,
    })
}

/// Write raw records in the [`CSV_COLUMNS`] layout.
pub fn write_csv<W: std::io::Write>(writer: W, records: &[RawFlowRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.src_addr.clone(),
            r.l4_src_port.to_string(),
            r.dst_addr.clone(),
            r.l4_dst_port.to_string(),
            r.protocol.to_string(),
            r.l7_proto.to_string(),
            r.in_bytes.to_string(),
            r.out_bytes.to_string(),
            r.in_pkts.to_string(),
            r.out_pkts.to_string(),
            r.tcp_flags.to_string(),
            r.flow_duration_ms.to_string(),
            r.label.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "IPV4_SRC_ADDR,L4_SRC_PORT,IPV4_DST_ADDR,L4_DST_PORT,PROTOCOL,L7_PROTO,IN_BYTES,OUT_BYTES,IN_PKTS,OUT_PKTS,TCP_FLAGS,FLOW_DURATION_MILLISECONDS,Label\n";

    #[test]
    fn header_only() {
        let report = ingest_reader(HEADER.as_bytes(), &IngestOptions::default()).unwrap();
        assert!(report.vectors.is_empty());
        assert!(report.row_errors.is_empty());
    }

    #[test]
    fn single_row() {
        let csv = format!("{HEADER}192.168.1.1,49152,10.0.0.1,80,6,7.178,900,0,20,0,27,600,1\n");
        let report = ingest_reader(csv.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(report.vectors.len(), 1);
        let v = &report.vectors[0];
        assert_eq!(v.values[0], 6.0 / 255.0);
        assert_eq!(v.label, 1);
        assert!((v.values[3] - 0.842_700_792_949_714_9).abs() < 1e-12);
        assert_eq!(v.values[9], 7.0 / 65535.0);
    }

    #[test]
    fn bad_protocol_reports_line() {
        let csv = format!("{HEADER}1.1.1.1,1,2.2.2.2,2,999,0,0,0,0,0,0,0,0\n1.1.1.1,1,2.2.2.2,2,6,0,0,0,0,0,0,0,0\n");
        let report = ingest_reader(csv.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(report.vectors.len(), 1);
        assert_eq!(report.row_errors.len(), 1);
        match &report.row_errors[0] {
            Error::Row { line, message } => {
                assert_eq!(*line, 2);
                assert!(message.contains("PROTOCOL"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let strict = IngestOptions { strict: true, ..Default::default() };
        assert!(matches!(ingest_reader(csv.as_bytes(), &strict), Err(Error::Row { line: 2, .. })));
    }

    #[test]
    fn missing_columns() {
        let err = ingest_reader("PROTOCOL,Label\n6,0\n".as_bytes(), &IngestOptions::default()).unwrap_err();
        match err {
            Error::Schema(cols) => assert!(cols.contains(&"IN_BYTES".to_string())),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparsable_field_is_row_error() {
        let csv = format!("{HEADER}1.1.1.1,abc,2.2.2.2,2,6,0,0,0,0,0,0,0,0\n");
        let report = ingest_reader(csv.as_bytes(), &IngestOptions::default()).unwrap();
        assert!(report.vectors.is_empty());
        assert!(report.row_errors[0].to_string().contains("L4_SRC_PORT"));
    }
}
