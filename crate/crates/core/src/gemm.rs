//! Dense kernels: bounds-checked strided matrix products on top of
//! `matrixmultiply`, and a vectorizable inner product.
#![allow(unsafe_code)]

/// A read-only matrix view: `data[r * row_stride + c * col_stride]`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> View<'a> {
    /// Row-major `rows x cols`.
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn fits(&self) -> bool {
        self.rows == 0 || self.cols == 0 || (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride < self.data.len()
    }
}

/// Inner product with four independent accumulators so the loop vectorizes.
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `c = beta * c + a b` with `c` row-major `a.rows x b.cols`.
pub(crate) fn gemm(a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert!(a.fits() && b.fits(), "matrix view exceeds its buffer");
    assert_eq!(c.len(), a.rows * b.cols, "output buffer has the wrong size");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    // SAFETY: both views were checked to stay inside their slices, `c` holds
    // exactly `a.rows * b.cols` elements with row stride `b.cols`, and the
    // output does not alias the inputs (it is a unique borrow).
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matches_naive_product() {
        let a: alloc::vec::Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: alloc::vec::Vec<f64> = (0..12).map(|v| 0.5 * v as f64 - 2.0).collect(); // 3x4
        let mut c = vec![1.0; 8];
        gemm(View::new(&a, 2, 3), View::new(&b, 3, 4), 2.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let naive: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert!((c[i * 4 + j] - (2.0 + naive)).abs() < 1e-12);
            }
        }
        let mut ct = vec![0.0; 4];
        // (2x3)(2x3)^T
        gemm(View::new(&a, 2, 3), View::new(&a, 2, 3).t(), 0.0, &mut ct);
        assert_eq!(ct, vec![5.0, 14.0, 14.0, 50.0]);
    }
}
