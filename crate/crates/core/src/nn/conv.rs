use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// 2-D convolution over NCHW batches with square kernels and zero padding.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// `[out_channels, in_channels, kernel, kernel]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub weight_grad: Tensor<T>,
    pub bias_grad: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        let wshape = [out_channels, in_channels, kernel, kernel];
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: Tensor::zeros(&wshape),
            bias: Tensor::zeros(&[out_channels]),
            weight_grad: Tensor::zeros(&wshape),
            bias_grad: Tensor::zeros(&[out_channels]),
            input: None,
        }
    }

    /// Output spatial size, or `None` when the kernel does not fit.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (ph, pw) = (h + 2 * self.pad, w + 2 * self.pad);
        if self.kernel == 0 || self.stride == 0 || ph < self.kernel || pw < self.kernel {
            return None;
        }
        Some(((ph - self.kernel) / self.stride + 1, (pw - self.kernel) / self.stride + 1))
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn fan_out(&self) -> usize {
        self.out_channels * self.kernel * self.kernel
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<Geometry> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects [N, {}, H, W], got {s:?}",
                self.in_channels
            )));
        }
        let (ho, wo) = self
            .output_hw(s[2], s[3])
            .ok_or_else(|| Error::Shape(format!("conv kernel does not fit input {s:?}")))?;
        Ok(Geometry {
            n: s[0],
            c: s[1],
            h: s[2],
            w: s[3],
            ho,
            wo,
            k: self.kernel,
            stride: self.stride,
            pad: self.pad,
        })
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(x)?;
        let rows = g.c * g.k * g.k;
        let cols = g.ho * g.wo;
        let f = self.out_channels;
        let mut out = Tensor::zeros(&[g.n, f, g.ho, g.wo]);
        let mut col = vec![T::zero(); rows * cols];
        let in_len = g.c * g.h * g.w;
        for (img, y) in x
            .data()
            .chunks_exact(in_len)
            .zip(out.data_mut().chunks_exact_mut(f * cols))
        {
            im2col(img, &g, &mut col);
            T::gemm(
                f,
                rows,
                cols,
                T::one(),
                self.weight.data(),
                (rows as isize, 1),
                &col,
                (cols as isize, 1),
                T::zero(),
                y,
                (cols as isize, 1),
            );
            for (plane, &b) in y.chunks_exact_mut(cols).zip(self.bias.data()) {
                plane.iter_mut().for_each(|v| *v += b);
            }
        }
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    /// Writes parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("conv backward called before forward".into()))?;
        let g = self.geometry(x)?;
        let rows = g.c * g.k * g.k;
        let cols = g.ho * g.wo;
        let f = self.out_channels;
        if dy.shape() != [g.n, f, g.ho, g.wo] {
            return Err(Error::Shape(format!(
                "conv upstream gradient {:?} does not match output [{}, {f}, {}, {}]",
                dy.shape(),
                g.n,
                g.ho,
                g.wo
            )));
        }
        self.weight_grad.fill(T::zero());
        self.bias_grad.fill(T::zero());
        let mut dx = Tensor::zeros(x.shape());
        let mut col = vec![T::zero(); rows * cols];
        let mut dcol = vec![T::zero(); rows * cols];
        let in_len = g.c * g.h * g.w;
        for ((img, dimg), dyi) in x
            .data()
            .chunks_exact(in_len)
            .zip(dx.data_mut().chunks_exact_mut(in_len))
            .zip(dy.data().chunks_exact(f * cols))
        {
            im2col(img, &g, &mut col);
            // dW += dy · colᵀ
            T::gemm(
                f,
                cols,
                rows,
                T::one(),
                dyi,
                (cols as isize, 1),
                &col,
                (1, cols as isize),
                T::one(),
                self.weight_grad.data_mut(),
                (rows as isize, 1),
            );
            for (db, plane) in self.bias_grad.data_mut().iter_mut().zip(dyi.chunks_exact(cols)) {
                *db += plane.iter().copied().sum::<T>();
            }
            // dcol = Wᵀ · dy
            T::gemm(
                rows,
                f,
                cols,
                T::one(),
                self.weight.data(),
                (1, rows as isize),
                dyi,
                (cols as isize, 1),
                T::zero(),
                &mut dcol,
                (cols as isize, 1),
            );
            col2im(&dcol, &g, dimg);
        }
        Ok(dx)
    }
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

/// Unfolds one `[C, H, W]` image into a `[C·K·K, Ho·Wo]` patch matrix.
fn im2col<T: Scalar>(img: &[T], g: &Geometry, col: &mut [T]) {
    let cols = g.ho * g.wo;
    for ci in 0..g.c {
        let plane = &img[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im<T: Scalar>(dcol: &[T], g: &Geometry, dimg: &mut [T]) {
    let cols = g.ho * g.wo;
    for ci in 0..g.c {
        let plane = &mut dimg[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &dcol[row * cols..(row + 1) * cols];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            line[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}
