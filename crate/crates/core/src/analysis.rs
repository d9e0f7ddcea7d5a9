//! PCA projection of node vectors, community separation metrics and network
//! statistics for selected edge sets.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::artifact::ArtifactKind;
use crate::edges::{EdgeList, SimilarityView};
use crate::error::{Error, Result};
use crate::vectors::NodeVectors;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub labels: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub explained_variance: [f64; 2],
    /// Unit principal directions in the input space.
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
}

/// Projects onto the top two principal directions, found by SVD of the
/// column-centered data. Each direction's largest-magnitude loading is made
/// positive.
pub fn pca_project(vectors: &NodeVectors) -> Result<Projection2D> {
    let (n, d) = (vectors.len(), vectors.dim());
    if n < 3 || d < 2 {
        return Err(Error::DegenerateData(format!(
            "PCA needs at least 3 points in at least 2 dimensions, got {n}x{d}"
        )));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(vectors.row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, k| vectors.row(i)[k] - mean[k]);

    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateData("all points coincide".into()));
    }
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let component = |rank: usize| -> (Vec<f64>, f64) {
        let Some(&k) = order.get(rank) else {
            return (vec![0.0; d], 0.0);
        };
        let mut dir: Vec<f64> = v_t.row(k).iter().copied().collect();
        let pivot = dir
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map_or(0.0, |(_, x)| x);
        if pivot < 0.0 {
            dir.iter_mut().for_each(|x| *x = -*x);
        }
        let s = svd.singular_values[k];
        (dir, s * s / total)
    };
    let (first, var1) = component(0);
    let (second, var2) = component(1);

    let coords = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let project = |dir: &[f64]| row.iter().zip(dir).map(|(x, y)| x * y).sum::<f64>();
            [project(&first), project(&second)]
        })
        .collect();
    Ok(Projection2D {
        labels: vectors.labels().to_vec(),
        coords,
        explained_variance: [var1, var2],
        components: [first, second],
        mean,
    })
}

impl Projection2D {
    pub fn to_csv(&self, communities: Option<&[usize]>) -> String {
        let mut out = ArtifactKind::Projection.header();
        out.push_str(if communities.is_some() {
            "\nlabel,x,y,community\n"
        } else {
            "\nlabel,x,y\n"
        });
        for (i, (label, [x, y])) in self.labels.iter().zip(&self.coords).enumerate() {
            let _ = write!(out, "{label},{x},{y}");
            if let Some(c) = communities {
                let _ = write!(out, ",G{}", c[i] + 1);
            }
            out.push('\n');
        }
        out
    }

    /// Scatter plot on a fixed 1000×1000 canvas, one color per community.
    pub fn to_svg(&self, communities: Option<&[usize]>) -> String {
        const PALETTE: [&str; 10] = [
            "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf",
        ];
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &self.coords {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let span = |a: usize| if hi[a] > lo[a] { hi[a] - lo[a] } else { 1.0 };
        let mut out = String::from(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"1000\" viewBox=\"0 0 1000 1000\">\n<rect width=\"1000\" height=\"1000\" fill=\"white\"/>\n",
        );
        for (i, p) in self.coords.iter().enumerate() {
            let x = 50.0 + 900.0 * (p[0] - lo[0]) / span(0);
            let y = 950.0 - 900.0 * (p[1] - lo[1]) / span(1);
            let color = PALETTE[communities.map_or(0, |c| c[i]) % PALETTE.len()];
            let _ = writeln!(
                out,
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.7\"/>"
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    /// `degree_histogram[k]` counts nodes of degree k.
    pub degree_histogram: Vec<usize>,
    pub isolated_nodes: usize,
    pub isolated_percent: f64,
    /// 2|E| / (|N|(|N|−1)).
    pub density: f64,
}

pub fn network_stats(edges: &EdgeList, n_nodes: usize) -> Result<NetworkStats> {
    let mut degrees = vec![0usize; n_nodes];
    for e in edges.edges() {
        if e.target as usize >= n_nodes {
            return Err(Error::Consistency(format!(
                "edge endpoint {} beyond {n_nodes} nodes",
                e.target
            )));
        }
        degrees[e.source as usize] += 1;
        degrees[e.target as usize] += 1;
    }
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0; max_degree + 1];
    degrees.iter().for_each(|&k| histogram[k] += 1);
    let isolated = if n_nodes == 0 { 0 } else { histogram[0] };
    let density = if n_nodes < 2 {
        0.0
    } else {
        2.0 * edges.len() as f64 / (n_nodes as f64 * (n_nodes as f64 - 1.0))
    };
    Ok(NetworkStats {
        n_nodes,
        n_edges: edges.len(),
        degree_histogram: if n_nodes == 0 { Vec::new() } else { histogram },
        isolated_nodes: isolated,
        isolated_percent: if n_nodes == 0 {
            0.0
        } else {
            100.0 * isolated as f64 / n_nodes as f64
        },
        density,
    })
}

impl NetworkStats {
    pub fn to_csv(&self) -> String {
        format!(
            "{}\nn_nodes,n_edges,isolated_nodes,isolated_percent,density\n{},{},{},{},{}\n",
            ArtifactKind::Stats.header(),
            self.n_nodes,
            self.n_edges,
            self.isolated_nodes,
            self.isolated_percent,
            self.density
        )
    }

    pub fn degrees_csv(&self) -> String {
        let mut out = ArtifactKind::Degrees.header();
        out.push_str("\ndegree,count\n");
        for (k, count) in self.degree_histogram.iter().enumerate() {
            let _ = writeln!(out, "{k},{count}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// 1 − cos; used on raw embeddings.
    Cosine,
    /// Used on 2-D projections.
    Euclidean,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub centroids: Vec<Vec<f64>>,
    /// Pairwise centroid distances under the chosen metric.
    pub centroid_distances: Vec<Vec<f64>>,
    /// Fraction of points whose nearest centroid is their own community's.
    pub purity: f64,
}

/// Community centroids and nearest-centroid purity. `points` are rows of
/// equal length; `communities[i]` must be below `n_communities` and every
/// community must have a member.
pub fn community_separation(
    points: &[&[f64]],
    communities: &[usize],
    n_communities: usize,
    metric: Metric,
) -> Result<Separation> {
    if points.len() != communities.len() {
        return Err(Error::Label(format!(
            "{} labels for {} points",
            communities.len(),
            points.len()
        )));
    }
    let dim = points.first().map_or(0, |p| p.len());
    let mut centroids = vec![vec![0.0; dim]; n_communities];
    let mut counts = vec![0usize; n_communities];
    for (p, &c) in points.iter().zip(communities) {
        if c >= n_communities {
            return Err(Error::Label(format!("community index {c} out of range")));
        }
        counts[c] += 1;
        centroids[c].iter_mut().zip(*p).for_each(|(s, x)| *s += x);
    }
    if let Some(empty) = counts.iter().position(|&k| k == 0) {
        return Err(Error::Label(format!("community {} has no members", empty + 1)));
    }
    for (centroid, &k) in centroids.iter_mut().zip(&counts) {
        centroid.iter_mut().for_each(|s| *s /= k as f64);
    }
    let centroid_distances = centroids
        .iter()
        .map(|a| centroids.iter().map(|b| metric.distance(a, b)).collect())
        .collect();
    let hits = points
        .iter()
        .zip(communities)
        .filter(|(p, &c)| {
            let nearest = centroids
                .iter()
                .map(|centroid| metric.distance(p, centroid))
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k);
            nearest == Some(c)
        })
        .count();
    Ok(Separation {
        centroids,
        centroid_distances,
        purity: if points.is_empty() {
            1.0
        } else {
            hits as f64 / points.len() as f64
        },
    })
}

pub fn rows(vectors: &NodeVectors) -> Vec<&[f64]> {
    (0..vectors.len()).map(|i| vectors.row(i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub remaining_edges: usize,
    pub isolated_nodes: usize,
    pub isolated_percent: f64,
}

/// GTE edge counts and isolated-node shares over a grid of thresholds, from
/// one pass over the similarity-sorted pair stream. Rows follow grid order.
pub fn threshold_sweep(sim: &SimilarityView, grid: &[f64]) -> Vec<SweepRow> {
    let n = sim.n_nodes();
    let pairs = sim.positive_pairs();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let mut degree = vec![0usize; n];
    let mut isolated = n;
    let mut taken = 0;
    let mut rows = vec![None; grid.len()];
    for k in order {
        let tau = grid[k];
        while taken < pairs.len() && pairs[taken].0 > tau {
            let (_, i, j) = pairs[taken];
            for v in [i as usize, j as usize] {
                if degree[v] == 0 {
                    isolated -= 1;
                }
                degree[v] += 1;
            }
            taken += 1;
        }
        rows[k] = Some(SweepRow {
            threshold: tau,
            remaining_edges: taken,
            isolated_nodes: isolated,
            isolated_percent: if n == 0 {
                0.0
            } else {
                100.0 * isolated as f64 / n as f64
            },
        });
    }
    rows.into_iter().map(|r| r.expect("every grid point visited")).collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = ArtifactKind::Sweep.header();
    out.push_str("\nthreshold,remaining_edges,isolated_nodes,isolated_percent\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.threshold, r.remaining_edges, r.isolated_nodes, r.isolated_percent
        );
    }
    out
}
