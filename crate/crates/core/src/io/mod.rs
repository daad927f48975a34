//! File formats and configuration.

pub mod codec;
pub mod config;
pub mod results;

pub use codec::{
    decode_basis, decode_snapshots, decode_trajectory, encode_basis, encode_snapshots, encode_trajectory,
};
pub use config::RunConfig;
pub use results::{parse_records, records_to_csv};
