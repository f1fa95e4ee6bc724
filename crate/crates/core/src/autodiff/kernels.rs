//! Numeric kernels behind the graph operators.

/// `c (+)= op(a) * op(b)` with `op(a)` of shape `m x k` and `op(b)` of
/// shape `k x n`; all matrices row-major and densely packed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: strides describe the packed buffers whose lengths are checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: [usize; 2],
    pub pad: [usize; 2],
}

impl ConvGeometry {
    pub fn out_hw(&self) -> (usize, usize) {
        let oh = (self.height + 2 * self.pad[0] - self.kh) / self.stride[0] + 1;
        let ow = (self.width + 2 * self.pad[1] - self.kw) / self.stride[1] + 1;
        (oh, ow)
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }
}

/// Unfolds one `C x H x W` image into `(C*kh*kw) x (oh*ow)` patches.
pub fn im2col(x: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let (oh, ow) = g.out_hw();
    let (h, w) = (g.height as isize, g.width as isize);
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let out = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride[0] + i) as isize - g.pad[0] as isize;
                    let dst = &mut out[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride[1] + j) as isize - g.pad[1] as isize;
                        *d = if ix < 0 || ix >= w { 0.0 } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
pub fn col2im(cols: &[f64], g: &ConvGeometry, dx: &mut [f64]) {
    let (oh, ow) = g.out_hw();
    let (h, w) = (g.height as isize, g.width as isize);
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride[0] + i) as isize - g.pad[0] as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..ow {
                        let ix = (ox * g.stride[1] + j) as isize - g.pad[1] as isize;
                        if ix >= 0 && ix < w {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward convolution over a batch; `w` is `O x C x kh x kw`.
pub fn conv2d_forward(x: &[f64], batch: usize, g: &ConvGeometry, w: &[f64], out_ch: usize) -> Vec<f64> {
    let (oh, ow) = g.out_hw();
    let plane_in = g.channels * g.height * g.width;
    let plane_out = out_ch * oh * ow;
    let ck = g.col_rows();
    let mut out = vec![0.0; batch * plane_out];
    let mut cols = vec![0.0; ck * oh * ow];
    for b in 0..batch {
        let xb = &x[b * plane_in..(b + 1) * plane_in];
        let ob = &mut out[b * plane_out..(b + 1) * plane_out];
        if g.kh == 1 && g.kw == 1 && g.stride == [1, 1] && g.pad == [0, 0] {
            gemm(out_ch, ck, oh * ow, w, false, xb, false, ob, false);
        } else {
            im2col(xb, g, &mut cols);
            gemm(out_ch, ck, oh * ow, w, false, &cols, false, ob, false);
        }
    }
    out
}

/// Returns `(dx, dw)`; either may be skipped when not needed.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    x: &[f64],
    batch: usize,
    g: &ConvGeometry,
    w: &[f64],
    out_ch: usize,
    dy: &[f64],
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let (oh, ow) = g.out_hw();
    let plane_in = g.channels * g.height * g.width;
    let plane_out = out_ch * oh * ow;
    let ck = g.col_rows();
    let mut dx = want_dx.then(|| vec![0.0; batch * plane_in]);
    let mut dw = want_dw.then(|| vec![0.0; out_ch * ck]);
    let mut cols = vec![0.0; ck * oh * ow];
    let mut dcols = vec![0.0; ck * oh * ow];
    for b in 0..batch {
        let xb = &x[b * plane_in..(b + 1) * plane_in];
        let dyb = &dy[b * plane_out..(b + 1) * plane_out];
        if let Some(dw) = dw.as_mut() {
            im2col(xb, g, &mut cols);
            // dw += dy_b (O x P) * cols^T (P x CK)
            gemm(out_ch, oh * ow, ck, dyb, false, &cols, true, dw, true);
        }
        if let Some(dx) = dx.as_mut() {
            // dcols = w^T (CK x O) * dy_b (O x P)
            gemm(ck, out_ch, oh * ow, w, true, dyb, false, &mut dcols, false);
            col2im(&dcols, g, &mut dx[b * plane_in..(b + 1) * plane_in]);
        }
    }
    (dx, dw)
}
