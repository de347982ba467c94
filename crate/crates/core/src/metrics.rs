//! Image quality metrics and rank statistics.

use crate::error::{Error, Result};
use crate::grid::Image;

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if a.height != b.height || a.width != b.width || a.channels != b.channels {
        return Err(Error::invalid(format!(
            "shape mismatch: {}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio `10 log10(peak^2 / MSE)`, capped at 99 dB.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    check_shapes(a, b)?;
    if peak <= 0.0 {
        return Err(Error::invalid("peak must be positive"));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(99.0);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(99.0))
}

/// Mean absolute difference.
pub fn l1_fidelity(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    Ok(a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64)
}

/// Structural similarity with sliding 8×8 uniform windows and the standard
/// stabilizers `C1 = (0.01 peak)^2`, `C2 = (0.03 peak)^2`; mean over all
/// window positions and channels.
pub fn ssim(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    check_shapes(a, b)?;
    if peak <= 0.0 {
        return Err(Error::invalid("peak must be positive"));
    }
    let win = 8usize;
    if a.height < win || a.width < win {
        return Err(Error::invalid("image smaller than the 8x8 SSIM window"));
    }
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let norm = 1.0 / (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels {
        for i0 in 0..=a.height - win {
            for j0 in 0..=a.width - win {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in i0..i0 + win {
                    for j in j0..j0 + win {
                        ma += a.at(i, j, c);
                        mb += b.at(i, j, c);
                    }
                }
                ma *= norm;
                mb *= norm;
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in i0..i0 + win {
                    for j in j0..j0 + win {
                        let da = a.at(i, j, c) - ma;
                        let db = b.at(i, j, c) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                }
                va *= norm;
                vb *= norm;
                cov *= norm;
                let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                total += s;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (ties receive averaged ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("length mismatch"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::invalid("constant input has no rank correlation"));
    }
    Ok(cov / (vx * vy).sqrt())
}
