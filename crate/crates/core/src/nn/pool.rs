use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Max pooling with ceil-mode output sizing; windows overhanging the
/// border are clipped to the input.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub window: usize,
    pub stride: usize,
    cache: Option<PoolCache>,
}

#[derive(Clone, Debug)]
struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Ceil-mode pooled extent; the last window must start inside the input.
pub fn pooled_extent(len: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || len < window {
        return None;
    }
    let mut out = (len - window).div_ceil(stride) + 1;
    if (out - 1) * stride >= len {
        out -= 1;
    }
    Some(out)
}

impl MaxPool2d {
    pub fn new(window: usize, stride: usize) -> Self {
        MaxPool2d {
            window,
            stride,
            cache: None,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        Some((
            pooled_extent(h, self.window, self.stride)?,
            pooled_extent(w, self.window, self.stride)?,
        ))
    }

    fn run<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(Error::Shape(format!("pool expects [N, C, H, W], got {s:?}")));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = self
            .output_hw(h, w)
            .ok_or_else(|| Error::Shape(format!("pool window does not fit input {s:?}")))?;
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        let xd = x.data();
        let od = out.data_mut();
        let mut o = 0;
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                let y0 = oy * self.stride;
                let y1 = (y0 + self.window).min(h);
                for ox in 0..wo {
                    let x0 = ox * self.stride;
                    let x1 = (x0 + self.window).min(w);
                    let mut best = base + y0 * w + x0;
                    for iy in y0..y1 {
                        for ix in x0..x1 {
                            let idx = base + iy * w + ix;
                            // strict comparison: ties keep the first in row-major order
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    od[o] = xd[best];
                    argmax.push(best);
                    o += 1;
                }
            }
        }
        Ok((out, argmax))
    }

    pub fn infer<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x)?.0)
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, argmax) = self.run(x)?;
        self.cache = Some(PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        });
        Ok(out)
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("pool backward called before forward".into()))?;
        if dy.len() != cache.argmax.len() {
            return Err(Error::Shape(format!(
                "pool upstream gradient {:?} does not match recorded output",
                dy.shape()
            )));
        }
        let mut dx = Tensor::zeros(&cache.input_shape);
        let dxd = dx.data_mut();
        for (&g, &idx) in dy.data().iter().zip(&cache.argmax) {
            dxd[idx] += g;
        }
        Ok(dx)
    }
}
