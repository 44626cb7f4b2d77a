//! Tables of mixed continuous/categorical cells and their numeric encoding.

mod bayes_net;
mod csv_io;
mod encoder;
mod schema;
mod table;

pub use bayes_net::{bayes_net_schema, d2_probs, generate_bayesian_network};
pub use csv_io::{infer_schema, load_table, read_table, write_table, CATEGORICAL_MAX_LEVELS};
pub use encoder::{decode, encode, expand_mask, fit_encoder, EncodedBatch};
pub use schema::{ColumnSpec, Kind, Schema};
pub use table::{Cell, Table};
