use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use super::{Result, StereoError};
use crate::imaging_io::PointCloud3D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierStats {
    pub removed: usize,
    /// Distance threshold (mm) above which a point counted as an outlier.
    pub threshold: f64,
    /// True when the 50 % guard capped the removal.
    pub capped: bool,
}

/// Statistical outlier removal: a point is dropped when its mean distance to
/// its `k` nearest neighbours exceeds `mean + std_ratio · std` of that
/// statistic over the cloud. At most half of the points are ever removed;
/// past that, only the worst half goes.
///
/// Returns the filtered cloud together with a keep mask over the input.
pub fn remove_outliers(
    cloud: &PointCloud3D,
    k: usize,
    std_ratio: f64,
) -> Result<(PointCloud3D, Vec<bool>, OutlierStats)> {
    if k == 0 || cloud.len() <= k {
        return Err(StereoError::CloudTooSmall {
            points: cloud.len(),
            k,
        });
    }
    let tree = ImmutableKdTree::new_from_slice(&cloud.points)
        .map_err(|e| StereoError::InvalidSettings(format!("kd-tree construction failed: {e:?}")))?;
    let want = NonZero::new(k + 1).expect("k + 1 > 0");
    let mean_dist: Vec<f64> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = tree
                .query(p)
                .nearest_n::<SquaredEuclidean<f64>>(want)
                .execute();
            let mut sum = 0.0;
            let mut count = 0;
            for n in nn.iter().filter(|n| n.item as usize != i).take(k) {
                sum += n.distance.sqrt();
                count += 1;
            }
            sum / count as f64
        })
        .collect();
    let n = mean_dist.len() as f64;
    let mu = mean_dist.iter().sum::<f64>() / n;
    let sigma = (mean_dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    let threshold = mu + std_ratio * sigma;
    let mut keep: Vec<bool> = mean_dist.iter().map(|&d| d <= threshold).collect();
    let mut removed = keep.iter().filter(|k| !**k).count();
    let limit = cloud.len() / 2;
    let capped = removed > limit;
    if capped {
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        order.sort_by(|&a, &b| mean_dist[b].total_cmp(&mean_dist[a]).then(a.cmp(&b)));
        keep.iter_mut().for_each(|k| *k = true);
        for &i in &order[..limit] {
            keep[i] = false;
        }
        removed = limit;
    }
    Ok((
        cloud.retain_indices(&keep),
        keep,
        OutlierStats {
            removed,
            threshold,
            capped,
        },
    ))
}
