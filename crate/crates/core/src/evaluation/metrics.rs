//! Rank correlation and embedding-geometry diagnostics.

use ndarray::{Array1, ArrayView1};

use crate::{Error, Result};

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn has_ties(x: &[f64]) -> bool {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).any(|w| w[0] == w[1])
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation. Without ties this is `1 − 6Σd²/(m(m²−1))`
/// evaluated directly; with ties it is the Pearson correlation of midranks.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two observations".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in correlation input".into()));
    }
    let rx = midranks(x);
    let ry = midranks(y);
    if !has_ties(x) && !has_ties(y) {
        let m = x.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        return Ok(1.0 - 6.0 * d2 / (m * (m * m - 1.0)));
    }
    pearson(&rx, &ry).ok_or_else(|| Error::UndefinedCorrelation("constant input has no rank variance".into()))
}

fn normalized(v: ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = v.dot(&v).sqrt();
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(v.mapv(|x| x / n))
}

fn sq_dist(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean squared distance between L2-normalized positive pairs.
pub fn alignment(pairs: &[(ArrayView1<f64>, ArrayView1<f64>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("alignment needs at least one pair".into()));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        total += sq_dist(&normalized(*a)?, &normalized(*b)?);
    }
    Ok(total / pairs.len() as f64)
}

/// `log mean exp(−2‖x − y‖²)` over distinct unordered pairs of normalized vectors.
pub fn uniformity(embeddings: &[ArrayView1<f64>]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::InvalidInput("uniformity needs at least two vectors".into()));
    }
    let unit = embeddings.iter().map(|v| normalized(*v)).collect::<Result<Vec<_>>>()?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..unit.len() {
        for j in i + 1..unit.len() {
            sum += (-2.0 * sq_dist(&unit[i], &unit[j])).exp();
            count += 1;
        }
    }
    Ok((sum / count as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn midrank_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 20.0, 5.0]), [2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn srocc_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(srocc(&x, &x.map(|v| v * v)).unwrap(), 1.0);
        assert_eq!(srocc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // Σd² = 4 over five ranks: 1 − 24/120.
        assert!((srocc(&x, &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(srocc(&x, &[1.0; 5]), Err(Error::UndefinedCorrelation(_))));
        assert!(srocc(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn srocc_with_ties_is_rank_pearson() {
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        // ranks x: 1, 2.5, 2.5, 4; y: 1, 3, 2, 4
        let rx = [1.0, 2.5, 2.5, 4.0];
        let ry = [1.0, 3.0, 2.0, 4.0];
        let expected = {
            let (mx, my) = (2.5, 2.5);
            let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
            let syy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
            sxy / (sxx * syy).sqrt()
        };
        assert!((srocc(&x, &y).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn geometry_closed_forms() {
        let e1 = array![1.0, 0.0];
        let neg = array![-1.0, 0.0];
        assert_eq!(alignment(&[(e1.view(), e1.view())]).unwrap(), 0.0);
        assert_eq!(alignment(&[(e1.view(), neg.view())]).unwrap(), 4.0);
        assert_eq!(uniformity(&[e1.view(), e1.view(), e1.view()]).unwrap(), 0.0);
        assert!((uniformity(&[e1.view(), neg.view()]).unwrap() + 8.0).abs() < 1e-12);
        assert!(uniformity(&[e1.view()]).is_err());
        let z = array![0.0, 0.0];
        assert!(matches!(alignment(&[(e1.view(), z.view())]), Err(Error::ZeroNorm)));
    }
}
