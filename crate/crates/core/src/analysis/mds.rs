use nalgebra::{DMatrix, SymmetricEigen};

use super::DistanceMatrix;

/// Planar layout of a distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub points: Vec<[f64; 2]>,
    /// Kruskal stress-1 of the layout against the input distances.
    pub stress: f64,
    pub warning: Option<String>,
}

/// Classical multidimensional scaling: double-centre the squared distances and
/// keep the top two eigenvectors scaled by the root of their eigenvalues.
/// Each axis is oriented so that the sum of cubed coordinates is positive.
pub fn embed_2d(d: &DistanceMatrix) -> Embedding {
    let n = d.len();
    if n == 0 {
        return Embedding { points: Vec::new(), stress: 0.0, warning: None };
    }
    if (0..n).all(|i| (0..n).all(|j| d.get(i, j) == 0.0)) {
        return Embedding {
            points: vec![[0.0, 0.0]; n],
            stress: 0.0,
            warning: Some("all distances are zero; every point placed at the origin".into()),
        };
    }
    let sq = DMatrix::from_fn(n, n, |i, j| d.get(i, j) * d.get(i, j));
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut points = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        let v = eig.eigenvectors.column(k);
        let cubes: f64 = v.iter().map(|x| x * x * x).sum();
        let sign = if cubes < 0.0 { -1.0 } else { 1.0 };
        for (i, p) in points.iter_mut().enumerate() {
            p[axis] = sign * scale * v[i];
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let e = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
            num += (e - d.get(i, j)).powi(2);
            den += d.get(i, j).powi(2);
        }
    }
    Embedding {
        points,
        stress: (num / den).sqrt(),
        warning: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64; 2], q: &[f64; 2]) -> f64 {
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    #[test]
    fn two_points_unit_apart() {
        let e = embed_2d(&DistanceMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        assert!((dist(&e.points[0], &e.points[1]) - 1.0).abs() < 1e-12);
        assert!(e.stress < 1e-12);
    }

    #[test]
    fn equilateral_is_planar() {
        let rows = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let e = embed_2d(&DistanceMatrix::from_rows(&rows).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert!((dist(&e.points[i], &e.points[j]) - rows[i][j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_matrix_collapses_with_warning() {
        let e = embed_2d(&DistanceMatrix::from_rows(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap());
        assert_eq!(e.points, vec![[0.0, 0.0]; 3]);
        assert!(e.warning.is_some());
    }
}
