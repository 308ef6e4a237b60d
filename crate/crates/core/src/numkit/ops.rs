use crate::error::{Error, Result};
use crate::exec::Exec;

use super::{Tensor, GELU_CUBIC, GELU_SQRT_2_OVER_PI};

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    matmul_with(Exec::default(), a, b)
}

/// `c[i,j] = sum_k a[i,k] * b[k,j]`, rows of `c` computed independently.
pub fn matmul_with(exec: Exec, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul").map_err(|_| shape_err("matmul", a, b))?;
    let (k2, n) = b.dims2("matmul").map_err(|_| shape_err("matmul", a, b))?;
    if k != k2 {
        return Err(shape_err("matmul", a, b));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    exec.for_each_row(&mut out, n, |i, row| {
        for (p, &aik) in ad[i * k..(i + 1) * k].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (c, &bkj) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *c += aik * bkj;
            }
        }
    });
    Tensor::new(vec![m, n], out)
}

/// Adds a `[C]` bias to every row of an `[R x C]` tensor.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, c) = x.dims2("add_bias")?;
    if bias.shape() != [c] {
        return Err(shape_err("add_bias", x, bias));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Ok(out)
}

/// Bias gradient: column sums of the upstream gradient.
pub fn add_bias_backward(dy: &Tensor) -> Result<Tensor> {
    let (_, c) = dy.dims2("add_bias_backward")?;
    let mut db = vec![0.0; c];
    for row in dy.data().chunks(c) {
        for (d, v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    Tensor::new(vec![c], db)
}

struct Conv1dGeom {
    len: usize,
    c_in: usize,
    k: usize,
    c_out: usize,
    out_len: usize,
}

fn conv1d_geom(x: &Tensor, kernel: &Tensor, stride: usize, pad_right: usize) -> Result<Conv1dGeom> {
    let (len, c_in) = x.dims2("conv1d").map_err(|_| shape_err("conv1d", x, kernel))?;
    let (k, kc, c_out) = match kernel.shape()[..] {
        [k, kc, co] => (k, kc, co),
        _ => return Err(shape_err("conv1d", x, kernel)),
    };
    if kc != c_in {
        return Err(shape_err("conv1d", x, kernel));
    }
    if stride == 0 {
        return Err(Error::contract("conv1d: stride must be positive"));
    }
    if len + pad_right < k {
        return Err(Error::Underflow {
            op: "conv1d",
            detail: format!("L + pad_right = {} < kernel {k}", len + pad_right),
        });
    }
    Ok(Conv1dGeom {
        len,
        c_in,
        k,
        c_out,
        out_len: (len + pad_right - k) / stride + 1,
    })
}

pub fn conv1d(x: &Tensor, kernel: &Tensor, stride: usize, pad_right: usize) -> Result<Tensor> {
    conv1d_with(Exec::default(), x, kernel, stride, pad_right)
}

/// Valid cross-correlation over `x` right-padded with `pad_right` zero rows.
///
/// `x` is `[L x C_in]`, `kernel` is `[k x C_in x C_out]`; the output has
/// `floor((L + pad_right - k) / stride) + 1` rows. Because `x` is row-major,
/// the receptive field of output row `t` is the contiguous slice starting at
/// row `t * stride`, so each output row is one vector-matrix product.
pub fn conv1d_with(exec: Exec, x: &Tensor, kernel: &Tensor, stride: usize, pad_right: usize) -> Result<Tensor> {
    let g = conv1d_geom(x, kernel, stride, pad_right)?;
    let mut xp = x.data().to_vec();
    xp.resize((g.len + pad_right) * g.c_in, 0.0);
    let kd = kernel.data();
    let window = g.k * g.c_in;
    let mut out = vec![0.0; g.out_len * g.c_out];
    exec.for_each_row(&mut out, g.c_out, |t, row| {
        let start = t * stride * g.c_in;
        for (m, &xv) in xp[start..start + window].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (o, &kv) in row.iter_mut().zip(&kd[m * g.c_out..(m + 1) * g.c_out]) {
                *o += xv * kv;
            }
        }
    });
    Tensor::new(vec![g.out_len, g.c_out], out)
}

/// Adjoint of [`conv1d`]: returns `(dx, dkernel)`.
pub fn conv1d_backward(
    x: &Tensor,
    kernel: &Tensor,
    stride: usize,
    pad_right: usize,
    dy: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let g = conv1d_geom(x, kernel, stride, pad_right)?;
    if dy.shape() != [g.out_len, g.c_out] {
        return Err(shape_err("conv1d_backward", dy, kernel));
    }
    let mut xp = x.data().to_vec();
    xp.resize((g.len + pad_right) * g.c_in, 0.0);
    let (kd, dyd) = (kernel.data(), dy.data());
    let window = g.k * g.c_in;
    let mut dxp = vec![0.0; xp.len()];
    let mut dk = vec![0.0; kd.len()];
    for t in 0..g.out_len {
        let start = t * stride * g.c_in;
        let dy_row = &dyd[t * g.c_out..(t + 1) * g.c_out];
        for m in 0..window {
            let krow = &kd[m * g.c_out..(m + 1) * g.c_out];
            let dkrow = &mut dk[m * g.c_out..(m + 1) * g.c_out];
            let xv = xp[start + m];
            let mut acc = 0.0;
            for ((dkv, &kv), &d) in dkrow.iter_mut().zip(krow).zip(dy_row) {
                *dkv += xv * d;
                acc += kv * d;
            }
            dxp[start + m] += acc;
        }
    }
    dxp.truncate(g.len * g.c_in);
    Ok((
        Tensor::new(vec![g.len, g.c_in], dxp)?,
        Tensor::new(kernel.shape().to_vec(), dk)?,
    ))
}

struct Conv2dGeom {
    h: usize,
    w: usize,
    c_in: usize,
    kh: usize,
    kw: usize,
    c_out: usize,
    oh: usize,
    ow: usize,
}

fn conv2d_geom(x: &Tensor, kernel: &Tensor, pad_bottom: usize, pad_right: usize) -> Result<Conv2dGeom> {
    let (h, w, c_in) = match x.shape()[..] {
        [h, w, c] => (h, w, c),
        _ => return Err(shape_err("conv2d", x, kernel)),
    };
    let (kh, kw, kc, c_out) = match kernel.shape()[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => return Err(shape_err("conv2d", x, kernel)),
    };
    if kc != c_in {
        return Err(shape_err("conv2d", x, kernel));
    }
    if h + pad_bottom < kh || w + pad_right < kw {
        return Err(Error::Underflow {
            op: "conv2d",
            detail: format!(
                "padded input {}x{} smaller than kernel {kh}x{kw}",
                h + pad_bottom,
                w + pad_right
            ),
        });
    }
    Ok(Conv2dGeom {
        h,
        w,
        c_in,
        kh,
        kw,
        c_out,
        oh: h + pad_bottom - kh + 1,
        ow: w + pad_right - kw + 1,
    })
}

impl Conv2dGeom {
    /// Flattened receptive field of output `(i, j)`, zeros outside the input.
    fn patch(&self, xd: &[f64], i: usize, j: usize, buf: &mut Vec<f64>) {
        buf.clear();
        for di in 0..self.kh {
            for dj in 0..self.kw {
                let (r, c) = (i + di, j + dj);
                if r < self.h && c < self.w {
                    let base = (r * self.w + c) * self.c_in;
                    buf.extend_from_slice(&xd[base..base + self.c_in]);
                } else {
                    buf.extend(std::iter::repeat_n(0.0, self.c_in));
                }
            }
        }
    }
}

/// Stride-1 2-D cross-correlation with zero padding on the bottom and right.
///
/// `x` is `[H x W x C_in]`, `kernel` is `[kh x kw x C_in x C_out]`.
pub fn conv2d(x: &Tensor, kernel: &Tensor, pad_bottom: usize, pad_right: usize) -> Result<Tensor> {
    let g = conv2d_geom(x, kernel, pad_bottom, pad_right)?;
    let (xd, kd) = (x.data(), kernel.data());
    let mut out = vec![0.0; g.oh * g.ow * g.c_out];
    Exec::default().for_each_row(&mut out, g.ow * g.c_out, |i, out_row| {
        let mut patch = Vec::with_capacity(g.kh * g.kw * g.c_in);
        for j in 0..g.ow {
            g.patch(xd, i, j, &mut patch);
            let o = &mut out_row[j * g.c_out..(j + 1) * g.c_out];
            for (m, &pv) in patch.iter().enumerate() {
                if pv == 0.0 {
                    continue;
                }
                for (ov, &kv) in o.iter_mut().zip(&kd[m * g.c_out..(m + 1) * g.c_out]) {
                    *ov += pv * kv;
                }
            }
        }
    });
    Tensor::new(vec![g.oh, g.ow, g.c_out], out)
}

/// Adjoint of [`conv2d`]: returns `(dx, dkernel)`.
pub fn conv2d_backward(
    x: &Tensor,
    kernel: &Tensor,
    pad_bottom: usize,
    pad_right: usize,
    dy: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let g = conv2d_geom(x, kernel, pad_bottom, pad_right)?;
    if dy.shape() != [g.oh, g.ow, g.c_out] {
        return Err(shape_err("conv2d_backward", dy, kernel));
    }
    let (xd, kd, dyd) = (x.data(), kernel.data(), dy.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dk = vec![0.0; kd.len()];
    let mut patch = Vec::with_capacity(g.kh * g.kw * g.c_in);
    for i in 0..g.oh {
        for j in 0..g.ow {
            g.patch(xd, i, j, &mut patch);
            let d = &dyd[(i * g.ow + j) * g.c_out..(i * g.ow + j + 1) * g.c_out];
            for (m, &pv) in patch.iter().enumerate() {
                let krow = &kd[m * g.c_out..(m + 1) * g.c_out];
                let dkrow = &mut dk[m * g.c_out..(m + 1) * g.c_out];
                let mut acc = 0.0;
                for ((dkv, &kv), &dv) in dkrow.iter_mut().zip(krow).zip(d) {
                    *dkv += pv * dv;
                    acc += kv * dv;
                }
                let (di, rest) = (m / (g.kw * g.c_in), m % (g.kw * g.c_in));
                let (dj, c) = (rest / g.c_in, rest % g.c_in);
                let (r, col) = (i + di, j + dj);
                if r < g.h && col < g.w {
                    dx[(r * g.w + col) * g.c_in + c] += acc;
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(kernel.shape().to_vec(), dk)?,
    ))
}

/// How [`pool2x2`] treats an odd column count. Rows are always floored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadPolicy {
    /// Drop a trailing odd row and column.
    FloorRows,
    /// Drop a trailing odd row; right-pad an odd column count to even.
    PadCols,
}

fn pool_geom(x: &Tensor, policy: PadPolicy) -> Result<(usize, usize, usize, usize, usize)> {
    let (h, w, c) = match x.shape()[..] {
        [h, w, c] => (h, w, c),
        _ => {
            return Err(Error::Shape {
                op: "pool2x2",
                left: x.shape().to_vec(),
                right: vec![0, 0, 0],
            })
        }
    };
    if h < 2 {
        return Err(Error::Underflow {
            op: "pool2x2",
            detail: format!("H = {h} < 2"),
        });
    }
    let ow = match policy {
        PadPolicy::PadCols => w.div_ceil(2),
        PadPolicy::FloorRows if w >= 2 => w / 2,
        PadPolicy::FloorRows => {
            return Err(Error::Underflow {
                op: "pool2x2",
                detail: format!("W = {w} < 2"),
            })
        }
    };
    Ok((h, w, c, (h - 2) / 2 + 1, ow))
}

/// In-bounds cells of the 2x2 window at output `(i, j)`.
fn window(i: usize, j: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    [(0, 0), (0, 1), (1, 0), (1, 1)]
        .into_iter()
        .map(move |(di, dj)| (2 * i + di, 2 * j + dj))
        .filter(move |&(_, col)| col < w)
}

/// Stride-2 2x2 mean pooling over an `[H x W x C]` grid.
///
/// Output height is `floor((H - 2) / 2) + 1`. Padded cells do not count
/// towards the mean, so a constant field pools to the same constant.
pub fn pool2x2(x: &Tensor, policy: PadPolicy) -> Result<Tensor> {
    let (_, w, c, oh, ow) = pool_geom(x, policy)?;
    let xd = x.data();
    let mut out = vec![0.0; oh * ow * c];
    for i in 0..oh {
        for j in 0..ow {
            let o = &mut out[(i * ow + j) * c..(i * ow + j + 1) * c];
            let cells: Vec<_> = window(i, j, w).collect();
            let inv = 1.0 / cells.len() as f64;
            for (r, col) in cells {
                let base = (r * w + col) * c;
                for (ov, &xv) in o.iter_mut().zip(&xd[base..base + c]) {
                    *ov += xv * inv;
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

pub fn pool2x2_backward(x_shape: &[usize], policy: PadPolicy, dy: &Tensor) -> Result<Tensor> {
    let probe = Tensor::zeros(x_shape);
    let (_, w, c, oh, ow) = pool_geom(&probe, policy)?;
    if dy.shape() != [oh, ow, c] {
        return Err(shape_err("pool2x2_backward", dy, &probe));
    }
    let mut dx = probe;
    let dxd = dx.data_mut();
    for i in 0..oh {
        for j in 0..ow {
            let d = &dy.data()[(i * ow + j) * c..(i * ow + j + 1) * c];
            let cells: Vec<_> = window(i, j, w).collect();
            let inv = 1.0 / cells.len() as f64;
            for (r, col) in cells {
                let base = (r * w + col) * c;
                for (g, &dv) in dxd[base..base + c].iter_mut().zip(d) {
                    *g += dv * inv;
                }
            }
        }
    }
    Ok(dx)
}

fn gelu_scalar(x: f64) -> f64 {
    let t = (GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh();
    0.5 * x * (1.0 + t)
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let t = (GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

/// GELU, tanh approximation.
pub fn gelu(x: &Tensor) -> Tensor {
    x.map(gelu_scalar)
}

pub fn gelu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    x.zip_map(dy, "gelu_backward", |v, d| gelu_grad_scalar(v) * d)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Takes the sigmoid *output* `s`, since `ds/dx = s (1 - s)`.
pub fn sigmoid_backward(s: &Tensor, dy: &Tensor) -> Result<Tensor> {
    s.zip_map(dy, "sigmoid_backward", |s, d| s * (1.0 - s) * d)
}

pub fn elementwise_mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, "elementwise_mul", |x, y| x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_cases() {
        let id = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = t2(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(matmul(&id, &b).unwrap(), b);
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), t2(&[&[19.0, 22.0], &[43.0, 50.0]]));

        let bad = matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
        let msg = bad.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn conv1d_cases() {
        let x = Tensor::zeros(&[10, 1]);
        let k = Tensor::zeros(&[2, 1, 1]);
        assert_eq!(conv1d(&x, &k, 2, 0).unwrap().shape(), &[5, 1]);

        let x = Tensor::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(conv1d(&x, &k, 1, 0).unwrap().data(), &[3.0, 5.0, 7.0]);

        let x = Tensor::zeros(&[1, 1]);
        assert!(matches!(conv1d(&x, &k, 1, 0), Err(Error::Underflow { .. })));
        // right padding rescues the short input
        assert_eq!(conv1d(&x, &k, 1, 1).unwrap().shape(), &[1, 1]);
    }

    #[test]
    fn conv1d_identity_delta() {
        let x = Tensor::from_fn(&[7, 3], |i| (i as f64).sin());
        let mut k = Tensor::zeros(&[1, 3, 3]);
        for c in 0..3 {
            k.data_mut()[c * 3 + c] = 1.0;
        }
        assert_eq!(conv1d(&x, &k, 1, 0).unwrap(), x);
    }

    #[test]
    fn pool_cases() {
        let ones = Tensor::full(&[4, 4, 1], 1.0);
        assert_eq!(
            pool2x2(&ones, PadPolicy::FloorRows).unwrap(),
            Tensor::full(&[2, 2, 1], 1.0)
        );
        let grid = Tensor::full(&[27, 27, 2], 3.5);
        let pooled = pool2x2(&grid, PadPolicy::PadCols).unwrap();
        assert_eq!(pooled.shape(), &[13, 14, 2]);
        assert!(pooled.data().iter().all(|&v| v == 3.5));
        assert_eq!(pool2x2(&grid, PadPolicy::FloorRows).unwrap().shape(), &[13, 13, 2]);
        assert!(pool2x2(&Tensor::zeros(&[1, 4, 1]), PadPolicy::PadCols).is_err());
    }

    #[test]
    fn pointwise_cases() {
        assert_eq!(gelu(&Tensor::scalar(0.0)).data(), &[0.0]);
        assert_eq!(sigmoid(&Tensor::scalar(0.0)).data(), &[0.5]);
        let a = Tensor::new(vec![2], vec![2.0, 3.0]).unwrap();
        let b = Tensor::new(vec![2], vec![4.0, 5.0]).unwrap();
        assert_eq!(elementwise_mul(&a, &b).unwrap().data(), &[8.0, 15.0]);
        assert!(elementwise_mul(&a, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn conv2d_same_size_with_bottom_right_padding() {
        let x = Tensor::from_fn(&[4, 5, 2], |i| i as f64);
        let k = Tensor::full(&[3, 3, 2, 1], 1.0);
        let y = conv2d(&x, &k, 2, 2).unwrap();
        assert_eq!(y.shape(), &[4, 5, 1]);
        // bottom-right corner only sees itself
        assert_eq!(y.data()[19], x.data()[38] + x.data()[39]);
    }
}
