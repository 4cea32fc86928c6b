//! Dense planar image and batch tensors.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("index ({c}, {y}, {x}) out of range for image {channels}x{height}x{width}")]
    Index {
        c: usize,
        y: usize,
        x: usize,
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("data length {len} does not match shape product {expected}")]
    Length { len: usize, expected: usize },
    #[error("dimensions must be at least 1, got {0:?}")]
    ZeroDim((usize, usize, usize)),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("cannot build a batch from an empty sample list")]
    EmptyBatch,
}

/// Channel-major image: `data[c*H*W + y*W + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T = f32> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self, TensorError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(TensorError::ZeroDim((channels, height, width)));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(TensorError::Length { len: data.len(), expected });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self, TensorError> {
        Self::new(channels, height, width, vec![T::zero(); channels * height * width])
    }

    /// Builds an image from data the caller guarantees is valid.
    pub(crate) fn from_parts(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> Result<T, TensorError> {
        if c >= self.channels || y >= self.height || x >= self.width {
            return Err(TensorError::Index {
                c,
                y,
                x,
                channels: self.channels,
                height: self.height,
                width: self.width,
            });
        }
        Ok(self.at(c, y, x))
    }

    /// Unchecked-by-contract accessor; panics on out-of-range indices.
    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image::from_parts(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T = f32> {
    pub image: Image<T>,
    pub label: usize,
}

impl<T: Scalar> LabeledSample<T> {
    pub fn new(image: Image<T>, label: usize) -> Self {
        Self { image, label }
    }
}

/// NCHW batch or feature-map tensor: `data[((n*C + c)*H + h)*W + w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self, TensorError> {
        let expected = n * c * h * w;
        if data.len() != expected {
            return Err(TensorError::Length { len: data.len(), expected });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w, data: vec![T::zero(); n * c * h * w] }
    }

    /// Skips the finiteness scan; used for intermediate activations where
    /// divergence is detected by the caller.
    pub(crate) fn from_parts(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), n * c * h * w);
        Self { n, c, h, w, data }
    }

    /// `(n, c, h, w)`
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Elements per sample (`c*h*w`).
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[((n * self.c + c) * self.h + h) * self.w + w]
    }

    pub fn sample_data(&self, i: usize) -> &[T] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    /// Copies sample `i` out as an image.
    pub fn sample(&self, i: usize) -> Image<T> {
        Image::from_parts(self.c, self.h, self.w, self.sample_data(i).to_vec())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4::from_parts(
            self.n,
            self.c,
            self.h,
            self.w,
            self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        )
    }
}

impl<T: Scalar> From<Image<T>> for Tensor4<T> {
    fn from(img: Image<T>) -> Self {
        let (c, h, w) = img.shape();
        Tensor4::from_parts(1, c, h, w, img.into_data())
    }
}

/// Stacks samples into an NCHW batch, preserving order.
pub fn batch_from_samples<T: Scalar>(samples: &[LabeledSample<T>]) -> Result<(Tensor4<T>, Vec<usize>), TensorError> {
    let first = samples.first().ok_or(TensorError::EmptyBatch)?;
    let shape = first.image.shape();
    let mut data = Vec::with_capacity(samples.len() * first.image.data().len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        if s.image.shape() != shape {
            return Err(TensorError::Shape { expected: shape, got: s.image.shape() });
        }
        data.extend_from_slice(s.image.data());
        labels.push(s.label);
    }
    let (c, h, w) = shape;
    Ok((Tensor4::from_parts(samples.len(), c, h, w, data), labels))
}
