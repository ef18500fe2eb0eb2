//! Dense matrices, lp norms, row-block streams and file ingestion.

mod io;
mod matrix;
mod norm;
mod stream;

pub use io::{
    load_matrix, load_matrix_with, parse_csv, parse_matrix_market, to_csv_string, write_csv,
    write_triples, write_vector_csv, LoadOptions, MatrixFormat,
};
pub use matrix::{dot, entrywise_pnorm, entrywise_pnorm_pow, MatrixF};
pub use norm::{vector_pnorm, vector_pnorm_pow, PNorm};
pub use stream::{block_iter, block_iter_owned, RowBlockStream};
