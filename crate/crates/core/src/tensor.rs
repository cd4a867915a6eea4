use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Height × width × channels tensor, row-major and channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureTensor<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Argument(format!(
                "tensor data has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, v: T) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![v; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn cast<U: Scalar>(&self) -> FeatureTensor<U> {
        FeatureTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }
}
