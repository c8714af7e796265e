//! Little-endian binary framing shared by the dataset cache, the model file
//! and the code files.

use std::io::{self, Read, Write};

use nalgebra::DMatrix;

pub(crate) struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }

    pub fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.inner.write_all(b)
    }

    pub fn u8(&mut self, v: u8) -> io::Result<()> {
        self.bytes(&[v])
    }

    pub fn u32(&mut self, v: u32) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn len(&mut self, v: usize) -> io::Result<()> {
        self.u64(v as u64)
    }

    pub fn str(&mut self, s: &str) -> io::Result<()> {
        self.len(s.len())?;
        self.bytes(s.as_bytes())
    }

    /// Row-major f64 block, shape written by the caller.
    pub fn matrix_rows(&mut self, m: &DMatrix<f64>) -> io::Result<()> {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)])?;
            }
        }
        Ok(())
    }
}

pub(crate) struct Reader<R: Read> {
    inner: R,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

impl<R: Read> Reader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner }
    }

    pub fn array<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }

    pub fn bytes(&mut self, n: usize) -> io::Result<Vec<u8>> {
        let mut buf = Vec::new();
        (&mut self.inner).take(n as u64).read_to_end(&mut buf)?;
        if buf.len() != n {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated block"));
        }
        Ok(buf)
    }

    pub fn u8(&mut self) -> io::Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn len(&mut self) -> io::Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| invalid("length overflows usize"))
    }

    pub fn str(&mut self) -> io::Result<String> {
        let n = self.len()?;
        String::from_utf8(self.bytes(n)?).map_err(|_| invalid("invalid utf-8 string"))
    }

    pub fn matrix_rows(&mut self, rows: usize, cols: usize) -> io::Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }

    pub fn expect_end(&mut self) -> io::Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(invalid("trailing bytes after payload")),
        }
    }
}

pub(crate) fn invalid_data(msg: impl Into<String>) -> io::Error {
    invalid(msg)
}

/// Packs ±1 entries of `m` row-major, bit `k = i·cols + j` at byte `k / 8`,
/// position `k % 8`; a set bit encodes +1.
pub(crate) fn pack_signs_row_major(m: &DMatrix<f64>) -> Vec<u8> {
    let total = m.nrows() * m.ncols();
    let mut out = vec![0u8; total.div_ceil(8)];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] > 0.0 {
                let k = i * m.ncols() + j;
                out[k / 8] |= 1 << (k % 8);
            }
        }
    }
    out
}

pub(crate) fn unpack_signs_row_major(bytes: &[u8], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| {
        let k = i * cols + j;
        if bytes[k / 8] >> (k % 8) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_order_is_little_endian_row_major() {
        let m = DMatrix::from_row_slice(2, 5, &[1., -1., -1., -1., -1., -1., -1., -1., 1., 1.]);
        let packed = pack_signs_row_major(&m);
        // bits 0, 8, 9 set
        assert_eq!(packed, vec![0b0000_0001, 0b0000_0011]);
        assert_eq!(unpack_signs_row_major(&packed, 2, 5), m);
    }
}
