//! Thin wrapper over `matrixmultiply::dgemm` for row-major slices.

/// Row-major matrix operand with an optional transpose.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    /// Logical transpose without copying.
    pub fn t(self) -> Self {
        Mat {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical(&self) -> (usize, usize, isize, isize) {
        let (rs, cs) = (self.cols as isize, 1isize);
        if self.transposed {
            (self.cols, self.rows, cs, rs)
        } else {
            (self.rows, self.cols, rs, cs)
        }
    }
}

/// `out = a · b + beta · out`, with `out` row-major `[m, n]`.
pub(crate) fn gemm(a: Mat<'_>, b: Mat<'_>, out: &mut [f64], beta: f64) {
    let (m, k, rsa, csa) = a.logical();
    let (k2, n, rsb, csb) = b.logical();
    assert_eq!(k, k2, "inner dimensions disagree");
    assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the logical extents and strides describe regions that lie within
    // `a.data`, `b.data` and `out`, whose lengths were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_with_transposes() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut out = [0.0; 4];
        gemm(Mat::new(&a, 2, 3), Mat::new(&b, 3, 2), &mut out, 0.0);
        assert_eq!(out, [4.0, 5.0, 10.0, 11.0]);

        // a^T a  (3x3)
        let mut ata = [0.0; 9];
        gemm(Mat::new(&a, 2, 3).t(), Mat::new(&a, 2, 3), &mut ata, 0.0);
        assert_eq!(ata, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);

        let mut acc = [1.0; 4];
        gemm(Mat::new(&a, 2, 3), Mat::new(&b, 3, 2), &mut acc, 1.0);
        assert_eq!(acc, [5.0, 6.0, 11.0, 12.0]);
    }
}
