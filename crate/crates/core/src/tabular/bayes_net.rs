//! Five-node Bayesian network with two continuous and three discrete columns.
//!
//! ```text
//! C1 ~ N(25, 2²)           C2 | C1 ~ N(0.1·C1 + 50, 5²)      D1 ~ Bernoulli(0.3)
//! D2 | C1, C2, D1 ~ Ca(·)  (table below)
//! D3 | D2 ~ Bernoulli(0.2 / 0.4 / 0.8) for D2 = 0 / 1 / 2
//! ```
//!
//! Normal parameters are (mean, standard deviation). Ties at C1 = 26 or
//! C2 = 55 take the `≤` branches.

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::tabular::schema::{ColumnSpec, Schema};
use crate::tabular::table::{Cell, Table};

pub const C1_MEAN: f64 = 25.0;
pub const C1_SD: f64 = 2.0;
pub const C2_SLOPE: f64 = 0.1;
pub const C2_OFFSET: f64 = 50.0;
pub const C2_SD: f64 = 5.0;
pub const D1_P: f64 = 0.3;
pub const D3_P: [f64; 3] = [0.2, 0.4, 0.8];

/// Category probabilities of D2.
pub fn d2_probs(c1: f64, c2: f64, d1: bool) -> [f64; 3] {
    if !d1 {
        return [0.05, 0.05, 0.9];
    }
    match (c1 > 26.0, c2 > 55.0) {
        (true, true) => [0.3, 0.6, 0.1],
        (true, false) => [0.2, 0.3, 0.5],
        (false, true) => [0.7, 0.1, 0.2],
        (false, false) => [0.1, 0.2, 0.7],
    }
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

pub fn bayes_net_schema() -> Schema {
    Schema::new(vec![
        ColumnSpec::continuous("C1"),
        ColumnSpec::continuous("C2"),
        ColumnSpec::categorical("D1", labels(2)),
        ColumnSpec::categorical("D2", labels(3)),
        ColumnSpec::categorical("D3", labels(2)),
    ])
    .expect("static schema is valid")
}

pub fn generate_bayesian_network(n: usize, rng: &mut Rng) -> Result<Table> {
    if n == 0 {
        return Err(Error::InvalidConfig("Bayesian network needs n >= 1 rows".into()));
    }
    let rows = (0..n)
        .map(|_| {
            let c1 = rng.normal_with(C1_MEAN, C1_SD);
            let c2 = rng.normal_with(C2_SLOPE * c1 + C2_OFFSET, C2_SD);
            let d1 = rng.bernoulli(D1_P);
            let d2 = rng.categorical(&d2_probs(c1, c2, d1));
            let d3 = rng.bernoulli(D3_P[d2]);
            vec![
                Cell::Number(c1),
                Cell::Number(c2),
                Cell::Category((d1 as u8).to_string()),
                Cell::Category(d2.to_string()),
                Cell::Category((d3 as u8).to_string()),
            ]
        })
        .collect();
    Table::new(bayes_net_schema(), rows)
}
