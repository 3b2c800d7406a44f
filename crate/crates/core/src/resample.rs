//! Bilinear resampling of single rasters and channel stacks.
//!
//! Coordinates follow the half-pixel-center convention with edge clamping:
//! output cell `j` along an axis of source length `n` and target length `t`
//! samples the source at `s = (j + 0.5) * (n / t) - 0.5`, clamped to
//! `[0, n - 1]`. Resizing to the source's own dimensions returns an exact
//! copy.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A finite, row-major `height x width` grid of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster2D {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Raster2D {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid(format!("raster dims must be positive, got {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(invalid(format!(
                "raster {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("raster contains non-finite values"));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                values.push(f(i, j));
            }
        }
        Self::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Raster2D) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(invalid(format!(
                "dims differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// `channels` rasters sharing one spatial size, stored channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterStack {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RasterStack {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(invalid(format!(
                "stack dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(invalid(format!(
                "stack {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn from_rasters(rasters: &[Raster2D]) -> Result<Self> {
        let first = rasters.first().ok_or_else(|| invalid("stack needs at least one channel"))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(rasters.len() * h * w);
        for (k, r) in rasters.iter().enumerate() {
            if r.dims() != (h, w) {
                return Err(invalid(format!(
                    "channel {k} is {:?}, expected {:?}",
                    r.dims(),
                    (h, w)
                )));
            }
            data.extend_from_slice(r.values());
        }
        Self::new(rasters.len(), h, w, data)
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

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn channel_raster(&self, k: usize) -> Result<Raster2D> {
        Raster2D::new(self.height, self.width, self.channel(k).to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-axis sampling table: for each output index, the two source indices
/// and the weight of the second.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    let last = (src_len - 1) as f64;
    (0..dst_len)
        .map(|j| {
            let s = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

fn check_target(target: (usize, usize)) -> Result<()> {
    if target.0 == 0 || target.1 == 0 {
        return Err(invalid(format!(
            "target dims must be positive, got {}x{}",
            target.0, target.1
        )));
    }
    Ok(())
}

/// Resamples one `src_h x src_w` plane into `out` (length `dst_h * dst_w`).
fn resize_plane(
    src: &[f64],
    src_w: usize,
    rows: &[(usize, usize, f64)],
    cols: &[(usize, usize, f64)],
    out: &mut [f64],
) {
    let dst_w = cols.len();
    for (i, &(r0, r1, fy)) in rows.iter().enumerate() {
        let top = &src[r0 * src_w..(r0 + 1) * src_w];
        let bottom = &src[r1 * src_w..(r1 + 1) * src_w];
        let dst = &mut out[i * dst_w..(i + 1) * dst_w];
        for (o, &(c0, c1, fx)) in dst.iter_mut().zip(cols) {
            let upper = top[c0] * (1.0 - fx) + top[c1] * fx;
            let lower = bottom[c0] * (1.0 - fx) + bottom[c1] * fx;
            *o = upper * (1.0 - fy) + lower * fy;
        }
    }
}

/// Bilinear resize of a raster to `target = (height, width)`.
pub fn bilinear_resize(src: &Raster2D, target: (usize, usize)) -> Result<Raster2D> {
    check_target(target)?;
    if src.values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("source raster contains non-finite values"));
    }
    if src.dims() == target {
        return Ok(src.clone());
    }
    let rows = axis_taps(src.height, target.0);
    let cols = axis_taps(src.width, target.1);
    let mut out = vec![0.0; target.0 * target.1];
    resize_plane(&src.values, src.width, &rows, &cols, &mut out);
    Raster2D::new(target.0, target.1, out)
}

/// Channel-wise bilinear resize; channel order is preserved.
pub fn resize_stack(src: &RasterStack, target: (usize, usize)) -> Result<RasterStack> {
    check_target(target)?;
    if !src.is_finite() {
        return Err(invalid("source stack contains non-finite values"));
    }
    if (src.height, src.width) == target {
        return Ok(src.clone());
    }
    let rows = axis_taps(src.height, target.0);
    let cols = axis_taps(src.width, target.1);
    let plane = target.0 * target.1;
    let mut out = vec![0.0; src.channels * plane];
    for (k, dst) in out.chunks_mut(plane).enumerate() {
        resize_plane(src.channel(k), src.width, &rows, &cols, dst);
    }
    RasterStack::new(src.channels, target.0, target.1, out)
}

/// Frobenius error of a down-then-up round trip through `low_dims`.
pub fn roundtrip_error(reference: &Raster2D, low_dims: (usize, usize)) -> Result<f64> {
    check_target(low_dims)?;
    if low_dims.0 > reference.height || low_dims.1 > reference.width {
        return Err(invalid(format!(
            "low dims {low_dims:?} exceed reference dims {:?}",
            reference.dims()
        )));
    }
    let low = bilinear_resize(reference, low_dims)?;
    let back = bilinear_resize(&low, reference.dims())?;
    reference.distance(&back)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_single_pixel_broadcasts() {
        let src = Raster2D::filled(1, 1, 3.5).unwrap();
        let out = bilinear_resize(&src, (5, 5)).unwrap();
        assert!(out.values().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn identity_is_exact() {
        let src = Raster2D::new(2, 2, vec![0.1, -7.25, 1e-9, 42.0]).unwrap();
        assert_eq!(bilinear_resize(&src, (2, 2)).unwrap(), src);
    }

    #[test]
    fn row_upsample_matches_hand_evaluation() {
        // s = (j + 0.5) / 2 - 0.5 -> [-0.25 (clamped to 0), 0.25, 0.75, 1.25 (clamped to 1)]
        let src = Raster2D::new(1, 2, vec![0.0, 1.0]).unwrap();
        let out = bilinear_resize(&src, (1, 4)).unwrap();
        assert_eq!(out.values(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn rejects_bad_targets_and_values() {
        let src = Raster2D::filled(2, 2, 1.0).unwrap();
        assert!(bilinear_resize(&src, (0, 3)).is_err());
        assert!(bilinear_resize(&src, (3, 0)).is_err());
        assert!(Raster2D::new(1, 2, vec![f64::NAN, 0.0]).is_err());
        assert!(Raster2D::new(0, 2, vec![]).is_err());
        let stack = RasterStack::new(1, 1, 2, vec![f64::INFINITY, 0.0]).unwrap();
        assert!(resize_stack(&stack, (2, 2)).is_err());
    }

    #[test]
    fn stack_of_constants_stays_constant() {
        let rasters: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&v| Raster2D::filled(4, 4, v).unwrap())
            .collect();
        let stack = RasterStack::from_rasters(&rasters).unwrap();
        let out = resize_stack(&stack, (8, 8)).unwrap();
        assert_eq!(out.shape(), (3, 8, 8));
        for (k, v) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert!(out.channel(k).iter().all(|x| (x - v).abs() < 1e-12));
        }
    }

    #[test]
    fn single_channel_stack_equals_raster_resize() {
        let r = Raster2D::from_fn(3, 5, |i, j| (i * 5 + j) as f64 * 0.3 - 1.0).unwrap();
        let stack = RasterStack::from_rasters(std::slice::from_ref(&r)).unwrap();
        let a = resize_stack(&stack, (7, 4)).unwrap();
        let b = bilinear_resize(&r, (7, 4)).unwrap();
        assert_eq!(a.channel(0), b.values());
    }

    #[test]
    fn mismatched_channels_rejected() {
        let a = Raster2D::filled(2, 2, 0.0).unwrap();
        let b = Raster2D::filled(2, 3, 0.0).unwrap();
        assert!(RasterStack::from_rasters(&[a, b]).is_err());
    }

    #[test]
    fn roundtrip_at_reference_dims_is_zero() {
        let r = Raster2D::from_fn(6, 6, |i, j| (i as f64).sin() + j as f64).unwrap();
        assert_eq!(roundtrip_error(&r, (6, 6)).unwrap(), 0.0);
        assert!(roundtrip_error(&r, (7, 6)).is_err());
        let c = Raster2D::filled(9, 9, -2.0).unwrap();
        assert!(roundtrip_error(&c, (3, 5)).unwrap() < 1e-12);
    }
}
