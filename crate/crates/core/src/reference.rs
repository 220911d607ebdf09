//! Published K3 maxima used as regression targets and for deviation columns.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const TABLE1_JSON: &str = include_str!("../data/table1_reference.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpCell {
    #[serde(rename = "M")]
    pub m: usize,
    pub k3_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxCell {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub k3_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Reference {
    pub schema_version: u32,
    pub sdp: Vec<SdpCell>,
    pub max: Vec<MaxCell>,
}

impl Table1Reference {
    pub fn sdp_value(&self, m: usize) -> Option<f64> {
        self.sdp.iter().find(|c| c.m == m).map(|c| c.k3_max)
    }

    pub fn max_value(&self, m: usize, n: usize) -> Option<f64> {
        self.max.iter().find(|c| c.m == m && c.n == n).map(|c| c.k3_max)
    }

    /// `(M, N)` pairs of the MAX block in table order.
    pub fn max_pairs(&self) -> Vec<(usize, usize)> {
        self.max.iter().map(|c| (c.m, c.n)).collect()
    }
}

pub fn table1() -> &'static Table1Reference {
    static TABLE: OnceLock<Table1Reference> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(TABLE1_JSON).expect("bundled reference table is valid JSON"))
}
