//! NetFlow records and their normalized feature vectors.
//!
//! Source and destination addresses are dropped. The remaining ten features
//! keep the column order of the normalization table below, which is also the
//! layout used by checkpoints and explanations.

mod ingest;
mod normalize;
mod split;
mod store;

pub use ingest::{ingest_csv, ingest_reader, write_csv, IngestOptions, IngestReport, CSV_COLUMNS};
pub use normalize::{erf, normalize_erf, normalize_minmax, normalize_record};
pub use split::{stratified_split, Split};
pub use store::{load_features, read_binary, read_json, save_features, write_binary, write_json, FeatureFormat};

use serde::{Deserialize, Serialize};

/// Number of model-facing NetFlow features.
pub const NUM_FEATURES: usize = 10;

/// Model-facing feature names in vector order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "PROTOCOL",
    "L4_SRC_PORT",
    "L4_DST_PORT",
    "IN_PKTS",
    "OUT_PKTS",
    "IN_BYTES",
    "OUT_BYTES",
    "TCP_FLAGS",
    "FLOW_DURATION_MILLISECONDS",
    "L7_PROTO",
];

/// Indices of the two port features inside a [`FeatureVector`].
pub const PORT_FEATURES: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMethod {
    MinMax,
    Erf,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationSpec {
    pub feature_name: &'static str,
    pub method: NormMethod,
    pub feature_size_bytes: u32,
    pub k_w: Option<f64>,
}

impl NormalizationSpec {
    const fn new(feature_name: &'static str, method: NormMethod, feature_size_bytes: u32, k_w: Option<f64>) -> Self {
        Self { feature_name, method, feature_size_bytes, k_w }
    }

    /// Largest representable raw value, `256^size - 1`.
    pub fn x_max(&self) -> f64 {
        256f64.powi(self.feature_size_bytes as i32) - 1.0
    }
}

/// Per-feature normalization for all twelve NetFlow columns.
pub const NORMALIZATION_TABLE: [NormalizationSpec; 12] = [
    NormalizationSpec::new("IPV4_SRC_ADDR", NormMethod::Drop, 4, None),
    NormalizationSpec::new("IPV4_DST_ADDR", NormMethod::Drop, 4, None),
    NormalizationSpec::new("PROTOCOL", NormMethod::MinMax, 1, None),
    NormalizationSpec::new("L4_SRC_PORT", NormMethod::MinMax, 2, None),
    NormalizationSpec::new("L4_DST_PORT", NormMethod::MinMax, 2, None),
    NormalizationSpec::new("IN_PKTS", NormMethod::Erf, 4, Some(20.0)),
    NormalizationSpec::new("OUT_PKTS", NormMethod::Erf, 4, Some(20.0)),
    NormalizationSpec::new("IN_BYTES", NormMethod::Erf, 4, Some(900.0)),
    NormalizationSpec::new("OUT_BYTES", NormMethod::Erf, 4, Some(900.0)),
    NormalizationSpec::new("TCP_FLAGS", NormMethod::MinMax, 1, None),
    NormalizationSpec::new("FLOW_DURATION_MILLISECONDS", NormMethod::Erf, 4, Some(600.0)),
    NormalizationSpec::new("L7_PROTO", NormMethod::MinMax, 2, None),
];

/// Look up the table entry for a column name.
pub fn spec_for(name: &str) -> Option<&'static NormalizationSpec> {
    NORMALIZATION_TABLE.iter().find(|s| s.feature_name == name)
}

/// One NetFlow record as exported by the collector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawFlowRecord {
    pub src_addr: String,
    pub dst_addr: String,
    pub protocol: u64,
    pub l4_src_port: u64,
    pub l4_dst_port: u64,
    pub in_pkts: u64,
    pub out_pkts: u64,
    pub in_bytes: u64,
    pub out_bytes: u64,
    pub tcp_flags: u64,
    pub flow_duration_ms: u64,
    pub l7_proto: u64,
    pub label: u8,
}

impl RawFlowRecord {
    /// Raw values of the model-facing features in [`FEATURE_NAMES`] order.
    pub fn feature_values(&self) -> [u64; NUM_FEATURES] {
        [
            self.protocol,
            self.l4_src_port,
            self.l4_dst_port,
            self.in_pkts,
            self.out_pkts,
            self.in_bytes,
            self.out_bytes,
            self.tcp_flags,
            self.flow_duration_ms,
            self.l7_proto,
        ]
    }
}

/// A normalized flow: ten components in `[0, 1]` plus the binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; NUM_FEATURES],
    pub label: u8,
}

impl FeatureVector {
    pub fn new(values: [f64; NUM_FEATURES], label: u8) -> Self {
        Self { values, label }
    }

    pub fn is_attack(&self) -> bool {
        self.label == 1
    }
}
