use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};

use super::params::{join, Parameters};
use crate::rng::Rng;

/// A batch of feature maps stored channel-major: row `c` holds channel `c`
/// of every image, laid out as `[batch][y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub data: Array2<f64>,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
}

impl FeatureMap {
    /// Stacks CHW image tensors into one batch.
    pub fn from_images(images: &[&[f64]], channels: usize, height: usize, width: usize) -> Self {
        let plane = height * width;
        let batch = images.len();
        let mut data = Array2::zeros((channels, batch * plane));
        for (b, img) in images.iter().enumerate() {
            assert_eq!(img.len(), channels * plane, "image tensor size");
            for c in 0..channels {
                data.row_mut(c)
                    .as_slice_mut()
                    .expect("contiguous")[b * plane..(b + 1) * plane]
                    .copy_from_slice(&img[c * plane..(c + 1) * plane]);
            }
        }
        Self {
            data,
            batch,
            height,
            width,
        }
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    /// Per-image channel means, `[batch, channels]`.
    pub fn global_avg_pool(&self) -> Array2<f64> {
        let plane = self.height * self.width;
        let mut out = Array2::zeros((self.batch, self.channels()));
        for (c, row) in self.data.axis_iter(Axis(0)).enumerate() {
            let row = row.as_slice().expect("contiguous");
            for b in 0..self.batch {
                out[[b, c]] = row[b * plane..(b + 1) * plane].iter().sum::<f64>() / plane as f64;
            }
        }
        out
    }

    /// Adjoint of [`global_avg_pool`](Self::global_avg_pool).
    pub fn global_avg_pool_backward(dy: &Array2<f64>, height: usize, width: usize) -> Self {
        let (batch, channels) = dy.dim();
        let plane = height * width;
        let mut data = Array2::zeros((channels, batch * plane));
        for c in 0..channels {
            let row = data.row_mut(c).into_slice().expect("contiguous");
            for b in 0..batch {
                row[b * plane..(b + 1) * plane].fill(dy[[b, c]] / plane as f64);
            }
        }
        Self {
            data,
            batch,
            height,
            width,
        }
    }
}

/// Square-kernel 2-D convolution computed through im2col.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out_channels, in_channels * k * k]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Saved activations of a convolution, reused by the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    pub cols: Array2<f64>,
    pub in_height: usize,
    pub in_width: usize,
}

impl Conv2d {
    /// He-normal initialisation.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
        Self {
            weight: Array2::from_shape_fn((out_channels, fan_in), |_| dist.sample(rng)),
            bias: Array1::zeros(out_channels),
            in_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel;
        let p = 2 * self.padding;
        ((h + p - k) / self.stride + 1, (w + p - k) / self.stride + 1)
    }

    fn im2col(&self, x: &FeatureMap) -> Array2<f64> {
        let (k, s, pad) = (self.kernel, self.stride, self.padding as isize);
        let (h, w) = (x.height, x.width);
        let (oh, ow) = self.output_size(h, w);
        let mut cols = Array2::zeros((self.in_channels * k * k, x.batch * oh * ow));
        for c in 0..self.in_channels {
            let src = x.data.row(c);
            let src = src.as_slice().expect("contiguous");
            for ky in 0..k {
                for kx in 0..k {
                    let mut dst = cols.row_mut((c * k + ky) * k + kx);
                    let dst = dst.as_slice_mut().expect("contiguous");
                    for b in 0..x.batch {
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for ox in 0..ow {
                                let ix = (ox * s + kx) as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                dst[(b * oh + oy) * ow + ox] =
                                    src[(b * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<f64>, batch: usize, h: usize, w: usize) -> FeatureMap {
        let (k, s, pad) = (self.kernel, self.stride, self.padding as isize);
        let (oh, ow) = self.output_size(h, w);
        let mut data = Array2::zeros((self.in_channels, batch * h * w));
        for c in 0..self.in_channels {
            let mut dst = data.row_mut(c);
            let dst = dst.as_slice_mut().expect("contiguous");
            for ky in 0..k {
                for kx in 0..k {
                    let src = cols.row((c * k + ky) * k + kx);
                    let src = src.as_slice().expect("contiguous");
                    for b in 0..batch {
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for ox in 0..ow {
                                let ix = (ox * s + kx) as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                dst[(b * h + iy as usize) * w + ix as usize] +=
                                    src[(b * oh + oy) * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        FeatureMap {
            data,
            batch,
            height: h,
            width: w,
        }
    }

    /// Pre-activation output and the cache needed by [`backward`](Self::backward).
    pub fn forward(&self, x: &FeatureMap) -> (FeatureMap, ConvCache) {
        assert_eq!(x.channels(), self.in_channels, "conv input channels");
        let cols = self.im2col(x);
        let mut out = self.weight.dot(&cols);
        for (mut row, b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row += *b;
        }
        let (oh, ow) = self.output_size(x.height, x.width);
        (
            FeatureMap {
                data: out,
                batch: x.batch,
                height: oh,
                width: ow,
            },
            ConvCache {
                cols,
                in_height: x.height,
                in_width: x.width,
            },
        )
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(
        &self,
        cache: &ConvCache,
        dy: &FeatureMap,
        grad: &mut Conv2d,
        need_input_grad: bool,
    ) -> Option<FeatureMap> {
        grad.weight += &dy.data.dot(&cache.cols.t());
        grad.bias += &dy.data.sum_axis(Axis(1));
        need_input_grad.then(|| {
            let dcols = self.weight.t().dot(&dy.data);
            self.col2im(&dcols, dy.batch, cache.in_height, cache.in_width)
        })
    }
}

impl Parameters for Conv2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        f(
            join(prefix, "weight"),
            self.weight.shape(),
            self.weight.as_slice().expect("contiguous"),
        );
        f(
            join(prefix, "bias"),
            self.bias.shape(),
            self.bias.as_slice().expect("contiguous"),
        );
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.weight.as_slice_mut().expect("contiguous"));
        f(self.bias.as_slice_mut().expect("contiguous"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Direct nested-loop convolution.
    fn naive_conv(conv: &Conv2d, img: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = conv.output_size(h, w);
        let k = conv.kernel;
        let mut out = vec![0.0; conv.out_channels() * oh * ow];
        for o in 0..conv.out_channels() {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias[o];
                    for c in 0..conv.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride + ky) as isize - conv.padding as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += conv.weight[[o, (c * k + ky) * k + kx]]
                                    * img[(c * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_matches_naive_convolution() {
        let mut r = rng::stream(1, "conv-test");
        let mut conv = Conv2d::new(3, 4, 3, 2, 1, &mut r);
        conv.bias = Array1::from_vec(vec![0.1, -0.2, 0.3, 0.0]);
        let (h, w) = (7, 6);
        let imgs: Vec<Vec<f64>> = (0..2)
            .map(|b| (0..3 * h * w).map(|k| ((k * 7 + b * 3) % 11) as f64 / 11.0).collect())
            .collect();
        let refs: Vec<&[f64]> = imgs.iter().map(Vec::as_slice).collect();
        let (y, _) = conv.forward(&FeatureMap::from_images(&refs, 3, h, w));
        let (oh, ow) = conv.output_size(h, w);
        for (b, img) in imgs.iter().enumerate() {
            let expect = naive_conv(&conv, img, h, w);
            for o in 0..4 {
                for p in 0..oh * ow {
                    let got = y.data[[o, b * oh * ow + p]];
                    assert!((got - expect[o * oh * ow + p]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let mut r = rng::stream(2, "conv-test");
        let conv = Conv2d::new(2, 3, 3, 2, 1, &mut r);
        let (h, w) = (5, 5);
        let x: Vec<f64> = (0..2 * h * w).map(|k| (k as f64 * 0.37).sin()).collect();
        let fm = FeatureMap::from_images(&[&x], 2, h, w);
        let cols = conv.im2col(&fm);
        let c = cols.mapv(|v| v * 0.5 + 0.25) + 1.0;
        let lhs: f64 = (&cols * &c).sum();
        let back = conv.col2im(&c, 1, h, w);
        let rhs: f64 = (&fm.data * &back.data).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
