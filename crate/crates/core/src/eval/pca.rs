use std::io::Write;
use std::path::Path;

use crate::error::{DialError, Result};
use crate::linalg::{dot, power_iteration_psd};
use crate::model::{batch_matrix, Example, ModelParams};

const PCA_TOL: f64 = 1e-9;
const PCA_MAX_ITERS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Principal directions in the input space of the projection.
    pub components: [Vec<f64>; 2],
    /// Variance along each component.
    pub variance: [f64; 2],
}

/// Flip `v` so its largest-magnitude coordinate is positive.
fn orient(v: &mut [f64]) {
    let lead = v
        .iter()
        .copied()
        .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Top-two PCA by power iteration with deflation.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Projection> {
    let n = points.len();
    if n < 3 {
        return Err(DialError::InvalidArgument(format!(
            "projection needs >= 3 points, got {n}"
        )));
    }
    let d = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != d) {
        return Err(DialError::SizeMismatch(d, bad.len()));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n as f64;
        }
    }
    let centred: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for p in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += p[i] * p[j] / n as f64;
            }
        }
    }

    let mut comps: [Vec<f64>; 2] = [vec![0.0; d], vec![0.0; d]];
    let mut var = [0.0f64; 2];
    for k in 0..2.min(d) {
        let (lambda, mut v) = power_iteration_psd(&cov, d, PCA_MAX_ITERS, PCA_TOL)?;
        if lambda <= 1e-12 * var[0].max(1.0) {
            log::warn!("embedding cloud has rank < {}; component {} set to zero", k + 1, k + 1);
            break;
        }
        orient(&mut v);
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        var[k] = lambda;
        comps[k] = v;
    }
    let coords = centred.iter().map(|p| [dot(p, &comps[0]), dot(p, &comps[1])]).collect();
    Ok(Projection {
        coords,
        components: comps,
        variance: var,
    })
}

/// One CSV row of the embedding projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub pc1: f64,
    pub pc2: f64,
    pub domain_tag: String,
    pub label_tag: String,
}

/// Embeds `examples` and projects them onto the top two principal axes.
pub fn project_embeddings(
    params: &ModelParams,
    examples: &[Example],
    domain_tags: &[String],
    label_tags: &[String],
) -> Result<Vec<ProjectionRow>> {
    if domain_tags.len() != examples.len() || label_tags.len() != examples.len() {
        return Err(DialError::SizeMismatch(
            examples.len(),
            domain_tags.len().min(label_tags.len()),
        ));
    }
    if examples.len() < 3 {
        return Err(DialError::InvalidArgument("projection needs >= 3 examples".into()));
    }
    let emb = params.embed_batch(&batch_matrix(examples)?)?.to_rows();
    let proj = pca_2d(&emb)?;
    Ok(proj
        .coords
        .iter()
        .zip(domain_tags.iter().zip(label_tags))
        .map(|(c, (d, l))| ProjectionRow {
            pc1: c[0],
            pc2: c[1],
            domain_tag: d.clone(),
            label_tag: l.clone(),
        })
        .collect())
}

pub fn write_embeddings_csv(path: &Path, rows: &[ProjectionRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "pc1,pc2,domain_tag,label_tag")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.pc1, r.pc2, r.domain_tag, r.label_tag)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_axes() {
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = (i / 2) as f64 / 19.0 - 0.5;
                vec![if i % 2 == 0 { 0.5 } else { -0.5 }, 10.0 * t]
            })
            .collect();
        let p = pca_2d(&pts).unwrap();
        assert!((p.components[0][1] - 1.0).abs() < 1e-6);
        assert!(p.components[0][0].abs() < 1e-6);
        assert!((p.components[1][0].abs() - 1.0).abs() < 1e-6);
        assert!(p.variance[0] >= p.variance[1]);
        let c1: f64 = p.coords.iter().map(|c| c[0]).sum();
        let c2: f64 = p.coords.iter().map(|c| c[1]).sum();
        assert!(c1.abs() < 1e-9 && c2.abs() < 1e-9);
    }

    #[test]
    fn sign_convention() {
        let pts = vec![vec![0.0, 0.0], vec![-1.0, -2.0], vec![1.0, 2.0], vec![2.0, 4.0]];
        let p = pca_2d(&pts).unwrap();
        let lead = p.components[0]
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(lead > 0.0);
        // collinear input: second component is zero
        assert_eq!(p.variance[1], 0.0);
        assert!(p.components[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_few_points() {
        assert!(pca_2d(&[vec![0.0], vec![1.0]]).is_err());
    }
}
