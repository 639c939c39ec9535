//! Semi-supervised k-means++ starting values.
//!
//! Every labeled class seeds its own component at the mean of its labeled
//! points. The remaining components are seeded by D² sampling over all
//! points, then a Lloyd pass with labeled points pinned to their class's
//! cluster refines the partition before it is turned into mixture
//! parameters.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{raw_covariances, regularize, CovModel, GaussianComponent};
use crate::rng::{stream, StreamRng};
use crate::ssem::{Dataset, GmmParams};

pub const MAX_LLOYD_ITER: usize = 50;

/// Relative covariance floor used when a cluster's scatter is degenerate.
const DEGENERATE_FLOOR: f64 = 1e-6;

const MIN_INIT_WEIGHT: f64 = 1e-6;

const INIT_TAG: u64 = 0x1417;

fn sq_dist(data: &DMatrix<f64>, i: usize, center: &DVector<f64>) -> f64 {
    (0..data.ncols()).map(|j| (data[(i, j)] - center[j]).powi(2)).sum()
}

/// Class means for mapped components, D² samples for the rest.
pub(crate) fn initial_centers(data: &Dataset, g: usize, rng: &mut StreamRng) -> Vec<DVector<f64>> {
    let x = data.x();
    let (n, dim) = x.shape();
    let mut centers: Vec<Option<DVector<f64>>> = vec![None; g];

    let mut sums = vec![DVector::<f64>::zeros(dim); data.n_classes()];
    let mut counts = vec![0usize; data.n_classes()];
    for (i, label) in data.labels().iter().enumerate() {
        if let Some(c) = *label {
            sums[c] += x.row(i).transpose();
            counts[c] += 1;
        }
    }
    for (c, &j) in data.class_to_component().iter().enumerate() {
        if counts[c] > 0 {
            centers[j] = Some(&sums[c] / counts[c] as f64);
        }
    }

    for k in 0..g {
        if centers[k].is_some() {
            continue;
        }
        let existing: Vec<&DVector<f64>> = centers.iter().flatten().collect();
        let pick = if existing.is_empty() {
            rng.gen_range(0..n)
        } else {
            let d2: Vec<f64> = (0..n)
                .map(|i| {
                    existing
                        .iter()
                        .map(|c| sq_dist(x, i, c))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            match WeightedIndex::new(&d2) {
                Ok(dist) => dist.sample(rng),
                // every point coincides with a center
                Err(_) => rng.gen_range(0..n),
            }
        };
        centers[k] = Some(x.row(pick).transpose());
    }
    centers.into_iter().map(|c| c.expect("all centers seeded")).collect()
}

fn nearest(data: &DMatrix<f64>, i: usize, centers: &[DVector<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(data, i, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Moves every empty cluster to the unlabeled point farthest from its own
/// center, taking that point with it.
fn reseed_empty(
    data: &Dataset,
    assignment: &mut [usize],
    centers: &mut [DVector<f64>],
) -> Result<()> {
    let x = data.x();
    let g = centers.len();
    let mut counts = vec![0usize; g];
    for &k in assignment.iter() {
        counts[k] += 1;
    }
    for k in 0..g {
        if counts[k] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for i in 0..x.nrows() {
            if data.labels()[i].is_some() || counts[assignment[i]] < 2 {
                continue;
            }
            let d = sq_dist(x, i, &centers[assignment[i]]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.ok_or_else(|| {
            Error::InsufficientData(format!("no unlabeled point can re-seed empty cluster {k}"))
        })?;
        counts[assignment[i]] -= 1;
        counts[k] = 1;
        assignment[i] = k;
        centers[k] = x.row(i).transpose();
    }
    Ok(())
}

/// Lloyd iterations with labeled rows pinned. Returns the final hard
/// assignment, with every cluster non-empty.
pub(crate) fn constrained_lloyd(data: &Dataset, mut centers: Vec<DVector<f64>>) -> Result<Vec<usize>> {
    let x = data.x();
    let (n, dim) = x.shape();
    let g = centers.len();
    let assign_all = |centers: &[DVector<f64>]| -> Vec<usize> {
        (0..n)
            .map(|i| data.fixed_component(i).unwrap_or_else(|| nearest(x, i, centers)))
            .collect()
    };

    let mut assignment = assign_all(&centers);
    for _ in 0..MAX_LLOYD_ITER {
        reseed_empty(data, &mut assignment, &mut centers)?;
        let mut sums = vec![DVector::<f64>::zeros(dim); g];
        let mut counts = vec![0usize; g];
        for (i, &k) in assignment.iter().enumerate() {
            sums[k] += x.row(i).transpose();
            counts[k] += 1;
        }
        for k in 0..g {
            centers[k] = &sums[k] / counts[k] as f64;
        }
        let next = assign_all(&centers);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    reseed_empty(data, &mut assignment, &mut centers)?;
    Ok(assignment)
}

/// Turns a hard partition into mixture parameters obeying `model`.
pub(crate) fn params_from_partition(data: &Dataset, assignment: &[usize], g: usize, model: CovModel) -> Result<GmmParams> {
    let x = data.x();
    let (n, dim) = x.shape();
    let resp = DMatrix::from_fn(n, g, |i, k| if assignment[i] == k { 1.0 } else { 0.0 });

    let mut means = Vec::with_capacity(g);
    for k in 0..g {
        let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == k).collect();
        if members.is_empty() {
            return Err(Error::EmptyComponent { component: k, count: 0.0 });
        }
        let mut m = DVector::zeros(dim);
        for &i in &members {
            m += x.row(i).transpose();
        }
        means.push(m / members.len() as f64);
    }

    let raw = raw_covariances(x, &resp, &means, model)?;
    let floor = {
        let mean = x.row_mean();
        let var: f64 = (0..n)
            .map(|i| (0..dim).map(|j| (x[(i, j)] - mean[j]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (n as f64 * dim as f64);
        DEGENERATE_FLOOR * if var > 0.0 { var } else { 1.0 }
    };
    let covariances = raw
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            regularize(c.clone(), k).or_else(|_| regularize(c + DMatrix::identity(dim, dim) * floor, k))
        })
        .collect::<Result<Vec<_>>>()?;

    let n1 = data.n_unlabeled();
    let mut weights = vec![0.0; g];
    for i in (0..n).filter(|&i| data.labels()[i].is_none()) {
        weights[assignment[i]] += 1.0;
    }
    if n1 == 0 || weights.iter().any(|&w| w / (n1 as f64) < MIN_INIT_WEIGHT) {
        weights = vec![1.0 / g as f64; g];
    } else {
        for w in &mut weights {
            *w /= n1 as f64;
        }
    }

    let components = means
        .into_iter()
        .zip(covariances)
        .map(|(mean, covariance)| GaussianComponent::new(mean, covariance))
        .collect::<Result<Vec<_>>>()?;
    let params = GmmParams {
        weights,
        components,
        model,
    };
    params.validate()?;
    Ok(params)
}

/// Semi-supervised k-means++ starting parameters for a `g`-component mixture.
pub fn ss_kmeanspp(data: &Dataset, g: usize, model: CovModel, seed: u64) -> Result<GmmParams> {
    data.check_components(g)?;
    if data.n() < g {
        return Err(Error::InsufficientData(format!(
            "{} observations cannot seed {g} components",
            data.n()
        )));
    }
    let mut rng = stream(seed, &[INIT_TAG, g as u64]);
    let centers = initial_centers(data, g, &mut rng);
    let assignment = constrained_lloyd(data, centers)?;
    params_from_partition(data, &assignment, g, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssem::{e_step, fit, FitOptions};
    use rand::SeedableRng;
    use rand_distr::StandardNormal;

    fn blobs(seed: u64, per: usize, centers: &[[f64; 2]]) -> DMatrix<f64> {
        let mut rng = StreamRng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for c in centers {
            for _ in 0..per {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                rows.extend_from_slice(&[c[0] + a, c[1] + b]);
            }
        }
        DMatrix::from_row_slice(per * centers.len(), 2, &rows)
    }

    #[test]
    fn single_labeled_points_are_the_centers() {
        let x = DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 5.0, 5.0, 9.0, 1.0, 1.0, 1.0, 4.0, 4.0]);
        let data = Dataset::new(x.clone(), vec![Some(0), Some(1), Some(2), None, None]).unwrap();
        let mut rng = StreamRng::seed_from_u64(3);
        let centers = initial_centers(&data, 3, &mut rng);
        for k in 0..3 {
            assert_eq!(centers[k], x.row(k).transpose());
        }
    }

    #[test]
    fn class_mean_seeds_mapped_component() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 3.0, 10.0, 11.0]);
        let data = Dataset::with_class_map(x, vec![Some(0), Some(0), None, None], vec![1]).unwrap();
        let mut rng = StreamRng::seed_from_u64(0);
        let centers = initial_centers(&data, 2, &mut rng);
        assert_eq!(centers[1][0], 2.0);
    }

    #[test]
    fn two_points_two_components() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 1.0]);
        let data = Dataset::unlabeled(x.clone()).unwrap();
        for model in CovModel::ALL {
            let p = ss_kmeanspp(&data, 2, model, 11).unwrap();
            assert_eq!(p.weights, vec![0.5, 0.5]);
            let mut means: Vec<Vec<f64>> = p.components.iter().map(|c| c.mean.iter().cloned().collect()).collect();
            means.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(means, vec![vec![0.0, 0.0], vec![3.0, 1.0]]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let data = Dataset::unlabeled(blobs(1, 20, &[[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])).unwrap();
        let a = ss_kmeanspp(&data, 3, CovModel::VVV, 42).unwrap();
        let b = ss_kmeanspp(&data, 3, CovModel::VVV, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_points() {
        let data = Dataset::unlabeled(DMatrix::from_row_slice(2, 1, &[0.0, 1.0])).unwrap();
        assert!(matches!(ss_kmeanspp(&data, 3, CovModel::EII, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn labeled_points_stay_with_their_class() {
        // Labeled points sit inside the other blob; Lloyd must not move them.
        let mut x = blobs(5, 15, &[[0.0, 0.0], [8.0, 8.0]]);
        x = x.insert_rows(30, 2, 0.0);
        x[(30, 0)] = 8.0;
        x[(30, 1)] = 8.0;
        x[(31, 0)] = 0.1;
        x[(31, 1)] = 0.0;
        let mut labels = vec![None; 32];
        labels[30] = Some(0);
        labels[31] = Some(1);
        let data = Dataset::new(x, labels).unwrap();
        let mut rng = StreamRng::seed_from_u64(9);
        let centers = initial_centers(&data, 3, &mut rng);
        let assign = constrained_lloyd(&data, centers).unwrap();
        assert_eq!(assign[30], 0);
        assert_eq!(assign[31], 1);
    }

    #[test]
    fn valid_fit_input_for_every_model() {
        let x = blobs(2, 25, &[[0.0, 0.0], [5.0, 5.0]]);
        let mut labels = vec![None; 50];
        labels[0] = Some(0);
        let data = Dataset::new(x, labels).unwrap();
        for model in CovModel::ALL {
            for g in 1..=4 {
                let p = ss_kmeanspp(&data, g, model, 7).unwrap();
                p.validate().unwrap();
                assert_eq!(p.model, model);
                e_step(&data, &p).unwrap();
                // EM may still collapse a component later; that is a candidate failure, not a bad start.
                if let Err(e) = fit(&data, &p, &FitOptions::default()) {
                    assert!(e.is_candidate_failure(), "{model} G={g}: {e}");
                }
            }
        }
    }

    #[test]
    fn shared_models_give_identical_covariances() {
        let data = Dataset::unlabeled(blobs(4, 10, &[[0.0, 0.0], [5.0, 0.0]])).unwrap();
        for model in [CovModel::EII, CovModel::EEE] {
            let p = ss_kmeanspp(&data, 2, model, 1).unwrap();
            assert_eq!(p.components[0].covariance, p.components[1].covariance);
        }
    }
}
