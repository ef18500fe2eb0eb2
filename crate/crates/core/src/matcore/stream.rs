use super::matrix::MatrixF;
use crate::error::{Error, Result};

/// Row source cut into blocks of at most `block_size` rows.
///
/// Rows arrive in source order; concatenating every yielded block gives
/// back the source. A row of the wrong width ends the stream with an error.
pub struct RowBlockStream<'a> {
    source: Box<dyn Iterator<Item = Vec<f64>> + 'a>,
    width: usize,
    block_size: usize,
    rows_seen: usize,
    failed: bool,
}

impl<'a> RowBlockStream<'a> {
    pub fn from_rows<I>(rows: I, width: usize, block_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<f64>>,
        I::IntoIter: 'a,
    {
        if block_size == 0 {
            return Err(Error::InvalidArgument("block size must be at least 1".into()));
        }
        Ok(RowBlockStream {
            source: Box::new(rows.into_iter()),
            width,
            block_size,
            rows_seen: 0,
            failed: false,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Rows consumed so far.
    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    /// Same source, different block size.
    pub fn rebatch(self, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidArgument("block size must be at least 1".into()));
        }
        Ok(RowBlockStream { block_size, ..self })
    }

    /// Pulls the next single row (ignores blocking).
    pub fn next_row(&mut self) -> Option<Result<Vec<f64>>> {
        if self.failed {
            return None;
        }
        let row = self.source.next()?;
        if row.len() != self.width {
            self.failed = true;
            return Some(Err(Error::DimensionMismatch(format!(
                "stream row {} has {} entries, expected {}",
                self.rows_seen,
                row.len(),
                self.width
            ))));
        }
        if let Some(col) = row.iter().position(|x| !x.is_finite()) {
            self.failed = true;
            return Some(Err(Error::NonFinite { row: self.rows_seen, col }));
        }
        self.rows_seen += 1;
        Some(Ok(row))
    }
}

impl Iterator for RowBlockStream<'_> {
    type Item = Result<MatrixF>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut data = Vec::with_capacity(self.block_size * self.width);
        let mut count = 0;
        while count < self.block_size {
            match self.next_row() {
                Some(Ok(r)) => {
                    data.extend_from_slice(&r);
                    count += 1;
                }
                Some(Err(e)) => return Some(Err(e)),
                None => break,
            }
        }
        if count == 0 {
            return None;
        }
        Some(Ok(MatrixF::from_raw(count, self.width, data)))
    }
}

/// Blocks of `b` consecutive rows of `m`; the last block may be short.
pub fn block_iter(m: &MatrixF, b: usize) -> Result<RowBlockStream<'_>> {
    let rows = m.row_iter().map(|r| r.to_vec());
    RowBlockStream::from_rows(rows, m.cols(), b)
}

/// Owned variant of [`block_iter`] for callers that outlive the matrix borrow.
pub fn block_iter_owned(m: MatrixF, b: usize) -> Result<RowBlockStream<'static>> {
    let d = m.cols();
    let n = m.rows();
    let rows = (0..n).map(move |i| m.row(i).to_vec());
    RowBlockStream::from_rows(rows, d, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(n: usize, b: usize) -> Vec<usize> {
        let m = MatrixF::zeros(n, 2);
        block_iter(&m, b).unwrap().map(|blk| blk.unwrap().rows()).collect()
    }

    #[test]
    fn block_sizes() {
        assert_eq!(sizes(10, 4), vec![4, 4, 2]);
        assert_eq!(sizes(3, 10), vec![3]);
        assert!(sizes(0, 3).is_empty());
        assert!(block_iter(&MatrixF::zeros(2, 2), 0).is_err());
    }

    #[test]
    fn concatenation_restores_source() {
        let data: Vec<f64> = (0..21).map(|x| x as f64).collect();
        let m = MatrixF::new(7, 3, data).unwrap();
        let mut acc = MatrixF::empty(3);
        for blk in block_iter(&m, 3).unwrap() {
            acc = acc.vstack(&blk.unwrap()).unwrap();
        }
        assert_eq!(acc, m);
    }

    #[test]
    fn ragged_row_stops_stream() {
        let rows = vec![vec![1.0, 2.0], vec![3.0], vec![4.0, 5.0]];
        let mut s = RowBlockStream::from_rows(rows, 2, 2).unwrap();
        assert!(s.next().unwrap().is_err());
        assert!(s.next().is_none());
    }
}
