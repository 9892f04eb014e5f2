use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{GradientField, Result, TactileError};
use crate::imaging_io::{FloatMap, MapUnit};

/// Type-I discrete sine transform of equal-length rows, computed through an
/// odd-symmetric complex FFT of length `2(n + 1)`.
struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl Dst1 {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        let m = 2 * (n + 1);
        Self {
            n,
            fft: planner.plan_fft_forward(m),
            buf: vec![Complex::default(); m],
        }
    }

    /// `X_k = Σ_{j=1..n} x_j sin(π j k / (n + 1))`, in place, for `a` and
    /// optionally `b` with one FFT. The odd extension of a real row has
    /// a purely imaginary spectrum, so packing the second row into the
    /// imaginary part keeps the two spectra apart.
    fn apply_pair(&mut self, a: &mut [f64], mut b: Option<&mut [f64]>) {
        let n = self.n;
        self.buf.iter_mut().for_each(|c| *c = Complex::default());
        for j in 0..n {
            let v = Complex::new(a[j], b.as_ref().map_or(0.0, |b| b[j]));
            self.buf[j + 1] = v;
            self.buf[2 * n + 1 - j] = -v;
        }
        self.fft.process(&mut self.buf);
        for k in 0..n {
            let c = self.buf[k + 1];
            a[k] = -0.5 * c.im;
            if let Some(b) = b.as_mut() {
                b[k] = 0.5 * c.re;
            }
        }
    }
}

/// Solves `∇²z = ∂gx/∂x + ∂gy/∂y` on the pixel grid with `z = 0` on the
/// outer ring of pixels, using the 5-point Laplacian.
///
/// `gx(x, y)` is read as the slope between pixels `x` and `x + 1`, so the
/// divergence is a backward difference. The slope field is dimensionless
/// (mm/mm); the result is the surface height in pixel units.
pub fn solve_poisson_dirichlet(gx: &[f64], gy: &[f64], width: usize, height: usize) -> Vec<f64> {
    let (nx, ny) = (width - 2, height - 2);
    let mut rhs = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i + 1, j + 1);
            let p = y * width + x;
            rhs[j * nx + i] = gx[p] - gx[p - 1] + gy[p] - gy[p - width];
        }
    }
    let mut planner = FftPlanner::new();
    let mut row_dst = Dst1::new(nx, &mut planner);
    let mut col_dst = Dst1::new(ny, &mut planner);
    let mut columns = vec![0.0; 2 * ny];
    let transform_2d =
        |data: &mut [f64], row_dst: &mut Dst1, col_dst: &mut Dst1, columns: &mut [f64]| {
            for rows in data.chunks_mut(2 * nx) {
                let (a, b) = rows.split_at_mut(nx);
                row_dst.apply_pair(a, (!b.is_empty()).then_some(b));
            }
            let mut i = 0;
            while i < nx {
                let pair = i + 1 < nx;
                for j in 0..ny {
                    columns[j] = data[j * nx + i];
                    if pair {
                        columns[ny + j] = data[j * nx + i + 1];
                    }
                }
                let (a, b) = columns.split_at_mut(ny);
                col_dst.apply_pair(a, pair.then_some(b));
                for j in 0..ny {
                    data[j * nx + i] = columns[j];
                    if pair {
                        data[j * nx + i + 1] = columns[ny + j];
                    }
                }
                i += 2;
            }
        };
    transform_2d(&mut rhs, &mut row_dst, &mut col_dst, &mut columns);
    let pi = std::f64::consts::PI;
    let ex: Vec<f64> = (1..=nx)
        .map(|k| 2.0 * (pi * k as f64 / (nx + 1) as f64).cos() - 2.0)
        .collect();
    let ey: Vec<f64> = (1..=ny)
        .map(|k| 2.0 * (pi * k as f64 / (ny + 1) as f64).cos() - 2.0)
        .collect();
    let norm = 4.0 / ((nx + 1) * (ny + 1)) as f64;
    for j in 0..ny {
        for i in 0..nx {
            rhs[j * nx + i] *= norm / (ex[i] + ey[j]);
        }
    }
    transform_2d(&mut rhs, &mut row_dst, &mut col_dst, &mut columns);
    let mut z = vec![0.0; width * height];
    for j in 0..ny {
        z[(j + 1) * width + 1..(j + 1) * width + 1 + nx]
            .copy_from_slice(&rhs[j * nx..(j + 1) * nx]);
    }
    z
}

/// Depth map in mm (positive into the membrane) from a gradient field of
/// the surface height, at `px_per_mm`.
///
/// The map is not clamped, so the solve stays exactly linear in the field.
pub fn integrate_fast_poisson(field: &GradientField, px_per_mm: f64) -> Result<FloatMap> {
    let (w, h) = (field.gx.width(), field.gx.height());
    if !field.gx.same_size(&field.gy) {
        return Err(TactileError::SizeMismatch(
            "gx and gy differ in size".into(),
        ));
    }
    if w < 3 || h < 3 {
        return Err(TactileError::GridTooSmall {
            width: w,
            height: h,
        });
    }
    if !(px_per_mm > 0.0) {
        return Err(TactileError::InvalidInput(
            "pixel scale must be positive".into(),
        ));
    }
    let read = |m: &FloatMap| -> Result<Vec<f64>> {
        m.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(TactileError::NonFiniteGradient(i))
                }
            })
            .collect()
    };
    let (gx, gy) = (read(&field.gx)?, read(&field.gy)?);
    let z = solve_poisson_dirichlet(&gx, &gy, w, h);
    let depth = z.iter().map(|&v| (-v / px_per_mm) as f32).collect();
    Ok(FloatMap::from_values(w, h, depth, MapUnit::Mm)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    #[test]
    fn dst_matches_definition() {
        let n = 7;
        let x: Vec<f64> = (0..n)
            .map(|i| (i as f64 * 0.37).sin() + 0.1 * i as f64)
            .collect();
        let mut y = x.clone();
        Dst1::new(n, &mut FftPlanner::new()).apply_pair(&mut y, None);
        for k in 1..=n {
            let direct: f64 = (1..=n)
                .map(|j| x[j - 1] * (std::f64::consts::PI * (j * k) as f64 / (n + 1) as f64).sin())
                .sum();
            assert!((direct - y[k - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn paired_rows_match_single_rows() {
        let n = 9;
        let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 3.5).collect();
        let mut dst = Dst1::new(n, &mut FftPlanner::new());
        let (mut a1, mut b1) = (a.clone(), b.clone());
        dst.apply_pair(&mut a1, None);
        dst.apply_pair(&mut b1, None);
        let (mut a2, mut b2) = (a, b);
        dst.apply_pair(&mut a2, Some(&mut b2));
        for k in 0..n {
            assert!((a1[k] - a2[k]).abs() < 1e-12 && (b1[k] - b2[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_field_gives_zero_depth() {
        let f = GradientField::zeros(16, 9);
        let d = integrate_fast_poisson(&f, 15.0).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiny_grid_rejected() {
        assert!(integrate_fast_poisson(&GradientField::zeros(2, 9), 15.0).is_err());
    }

    #[test]
    fn forward_difference_field_is_exact() {
        // A field built from forward differences of z integrates back to z.
        let (w, h) = (20, 14);
        let z: Vec<f64> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    0.0
                } else {
                    ((x * 7 + y * 3) % 11) as f64 * 0.1
                }
            })
            .collect();
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    gx[y * w + x] = z[y * w + x + 1] - z[y * w + x];
                }
                if y + 1 < h {
                    gy[y * w + x] = z[(y + 1) * w + x] - z[y * w + x];
                }
            }
        }
        let sol = solve_poisson_dirichlet(&gx, &gy, w, h);
        for (a, b) in sol.iter().zip(&z) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
