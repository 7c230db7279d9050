use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Principal component projection of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit principal directions, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Projected points, one row per input sample.
    pub points: Vec<Vec<f64>>,
    /// Sample variance along each component.
    pub variance: Vec<f64>,
    /// Fraction of the total variance carried by each component (0 when the total is 0).
    pub variance_ratio: Vec<f64>,
}

/// Projects mean-centered features onto the top `dims` eigenvectors of the sample
/// covariance. Each component's sign makes its largest-magnitude loading positive.
pub fn pca_project(features: &[Vec<f64>], dims: usize) -> Result<Pca> {
    let n = features.len();
    if n < 2 {
        return Err(Error::domain("PCA needs at least two samples"));
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|f| f.len() != d) {
        return Err(Error::shape("PCA features must share a non-zero dimension"));
    }
    if dims == 0 || dims > d {
        return Err(Error::domain(format!("cannot keep {dims} of {d} components")));
    }
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    // descending eigenvalue, ties by index for a stable order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0)).sum();

    let mut components = Vec::with_capacity(dims);
    let mut variance = Vec::with_capacity(dims);
    for &k in order.iter().take(dims) {
        let mut c: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = c
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best });
        if lead.1 < 0.0 {
            for v in &mut c {
                *v = -*v;
            }
        }
        components.push(c);
        variance.push(eig.eigenvalues[k].max(0.0));
    }
    let points = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().zip(x.row(i).iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let variance_ratio = variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(Pca {
        mean,
        components,
        points,
        variance,
        variance_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tightness {
    /// Mean intra-class pairwise distance divided by mean inter-centroid distance.
    pub ratio: f64,
    pub intra: f64,
    pub inter: f64,
    pub classes: usize,
    /// Singleton classes left out of the computation.
    pub skipped: usize,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Cluster tightness of labeled features; lower is tighter.
///
/// The intra term averages each class's mean pairwise distance with equal class
/// weight; the inter term is the mean distance over all centroid pairs.
pub fn cluster_tightness(features: &[Vec<f64>], classes: &[usize]) -> Result<Tightness> {
    if features.len() != classes.len() {
        return Err(Error::shape("one class id per feature vector required"));
    }
    let mut groups: BTreeMap<usize, Vec<&[f64]>> = BTreeMap::new();
    for (f, &c) in features.iter().zip(classes) {
        groups.entry(c).or_default().push(f);
    }
    let skipped = groups.values().filter(|g| g.len() < 2).count();
    if skipped > 0 {
        log::warn!("cluster tightness: skipping {skipped} singleton class(es)");
    }
    let groups: Vec<Vec<&[f64]>> = groups.into_values().filter(|g| g.len() >= 2).collect();
    if groups.len() < 2 {
        return Err(Error::domain("cluster tightness needs at least two classes with two samples"));
    }
    let mut intra = 0.0;
    let mut centroids = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut sum = 0.0;
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                sum += dist(g[i], g[j]);
            }
        }
        intra += sum / (g.len() * (g.len() - 1) / 2) as f64;
        let d = g[0].len();
        let c: Vec<f64> = (0..d).map(|k| g.iter().map(|v| v[k]).sum::<f64>() / g.len() as f64).collect();
        centroids.push(c);
    }
    intra /= groups.len() as f64;
    let mut inter = 0.0;
    let mut pairs = 0;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            inter += dist(&centroids[i], &centroids[j]);
            pairs += 1;
        }
    }
    inter /= pairs as f64;
    if !(inter > 0.0) {
        return Err(Error::domain("all class centroids coincide; tightness is undefined"));
    }
    Ok(Tightness {
        ratio: intra / inter,
        intra,
        inter,
        classes: groups.len(),
        skipped,
    })
}
