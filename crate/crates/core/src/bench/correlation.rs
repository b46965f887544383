use crate::error::{Error, Result};

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 samples, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite input".into()));
    }
    Ok(())
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero-variance input".into()));
    }
    let scale = (saa * sbb).sqrt();
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { saa.sqrt() * sbb.sqrt() };
    Ok((sab / scale).clamp(-1.0, 1.0))
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    pearson_unchecked(a, b)
}

/// Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    pearson_unchecked(&average_ranks(a), &average_ranks(b))
}

/// Kendall's tau-b.
pub fn kendall(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let n = a.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tied_a, mut tied_b) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].total_cmp(&a[j]) as i64;
            let db = b[i].total_cmp(&b[j]) as i64;
            if da == 0 {
                tied_a += 1;
            }
            if db == 0 {
                tied_b += 1;
            }
            match da * db {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - tied_a) * (pairs - tied_b)) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedCorrelation("zero-variance input".into()));
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}
