use crate::cluster::{ClusterAssignment, HolderShares, ReconstructionInfo};
use crate::field::{dequantize_bounded, FieldElement, QuantConfig};
use crate::lcc::{self, LccParams, ShareBundle};

use super::ProtocolError;

/// What holder `j` sends to the server: its summed shares for every cluster,
/// concatenated in cluster order.
pub fn holder_aggregate(params: &LccParams, shares: &HolderShares, s: &ClusterAssignment) -> ShareBundle {
    let f = params.field();
    let width = shares.per_user.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(width * s.len());
    for c in s.clusters() {
        let mut acc = vec![f.zero(); width];
        for &i in c {
            f.add_assign_vec(&mut acc, &shares.per_user[i]);
        }
        out.extend(acc);
    }
    ShareBundle { holder: shares.holder, share: out }
}

/// Decodes per-cluster mean gradients from the holders' aggregate shares.
/// The sums are linear in the shares, so decoding uses degree `ell + t - 1`.
pub fn decode_aggregates(
    bundles: &[ShareBundle],
    s: &ClusterAssignment,
    params: &LccParams,
    quant: &QuantConfig,
    dim: usize,
) -> Result<(Vec<Vec<f64>>, ReconstructionInfo), ProtocolError> {
    let degree = params.recon_degree(1);
    let slices = lcc::recon(bundles, degree, params)?;
    let width = slices.first().map_or(0, |v| v.len()) / s.len().max(1);
    let f = params.field();
    let mut means = Vec::with_capacity(s.len());
    for (c, members) in s.clusters().iter().enumerate() {
        let per_slice: Vec<Vec<FieldElement>> =
            slices.iter().map(|sl| sl[c * width..(c + 1) * width].to_vec()).collect();
        let summed = lcc::unslice(&per_slice, dim);
        let size = members.len() as f64;
        let bound = (size * (quant.eta() + 1.0)).ceil() as u128;
        let total = dequantize_bounded(&summed, quant, f, 1, bound)?;
        means.push(total.into_iter().map(|v| v / size).collect());
    }
    let info = ReconstructionInfo {
        what: "aggregate".into(),
        degree,
        holders: bundles.iter().map(|b| b.holder).collect(),
    };
    Ok((means, info))
}

/// Cluster-wise secure averaging of coded gradients; individual gradients
/// are never decoded.
pub fn secure_aggregate(
    holders: &[HolderShares],
    s: &ClusterAssignment,
    params: &LccParams,
    quant: &QuantConfig,
    dim: usize,
) -> Result<Vec<Vec<f64>>, ProtocolError> {
    let bundles: Vec<ShareBundle> = holders.iter().map(|h| holder_aggregate(params, h, s)).collect();
    Ok(decode_aggregates(&bundles, s, params, quant, dim)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{share_reduced, to_holders};
    use crate::field::PrimeField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn setup(n: usize) -> (LccParams, QuantConfig) {
        let field = PrimeField::above(10_000_000_000).unwrap();
        let t = n / 3;
        (
            LccParams::new(field, n, t, LccParams::default_ell(n, t), 2).unwrap(),
            QuantConfig::new(1000, 10.0).unwrap(),
        )
    }

    #[test]
    fn singleton_and_cancellation() {
        let (params, quant) = setup(6);
        let g = vec![0.25, -1.5, 3.0, 0.0, 2.125];
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let grads = vec![g.clone(), neg, g.clone(), vec![1.0; 5], vec![-1.0; 5], vec![0.5; 5]];
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let holders = to_holders(&share_reduced(&grads, &params, &quant, &mut rng).unwrap(), 6);
        let s = ClusterAssignment::new(6, vec![vec![0, 1], vec![2], vec![3, 4, 5]]).unwrap();
        let means = secure_aggregate(&holders, &s, &params, &quant, 5).unwrap();
        for v in &means[0] {
            assert!(v.abs() <= 1e-3);
        }
        for (a, b) in means[1].iter().zip(&g) {
            assert!((a - b).abs() <= 1e-3);
        }
        for v in &means[2] {
            assert!((v - 0.5 / 3.0).abs() <= 1e-3);
        }
    }

    #[test]
    fn random_cluster_matches_plaintext_mean() {
        let (params, quant) = setup(9);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let grads: Vec<Vec<f64>> =
            (0..9).map(|_| (0..12).map(|_| rng.random_range(-8.0..8.0)).collect()).collect();
        let holders = to_holders(&share_reduced(&grads, &params, &quant, &mut rng).unwrap(), 9);
        let s = ClusterAssignment::new(9, vec![vec![0, 2, 3, 4, 6, 7, 8], vec![1, 5]]).unwrap();
        let means = secure_aggregate(&holders, &s, &params, &quant, 12).unwrap();
        for c in 0..12 {
            let want = s.clusters()[0].iter().map(|&i| grads[i][c]).sum::<f64>() / 7.0;
            // floor quantization shifts each entry by less than 1/lambda
            assert!((means[0][c] - want).abs() <= 1e-3 * want.abs().max(1.0), "{} vs {want}", means[0][c]);
        }
    }

    #[test]
    fn erasures_are_tolerated() {
        let (params, quant) = setup(9);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let grads: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64; 4]).collect();
        let holders = to_holders(&share_reduced(&grads, &params, &quant, &mut rng).unwrap(), 9);
        let s = ClusterAssignment::single(9);
        let keep = params.code_degree() + 1;
        let means = secure_aggregate(&holders[9 - keep..], &s, &params, &quant, 4).unwrap();
        assert!((means[0][0] - 4.0).abs() < 1e-3);
    }
}
