//! Shared helpers for integration tests: the finite-difference oracle and a
//! deterministic dataset fixture.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use mmvr_core::corpus::manifest::{generate_dataset, load_dataset, LoadedDataset};

pub const FD_EPSILON: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Central finite difference of a scalar function along one coordinate of
/// its input vector. Independent of the tape: it only re-evaluates `f`.
pub fn central_difference<F>(f: &F, x: &[f64], coord: usize, epsilon: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut plus = x.to_vec();
    plus[coord] += epsilon;
    let mut minus = x.to_vec();
    minus[coord] -= epsilon;
    (f(&plus) - f(&minus)) / (2.0 * epsilon)
}

/// Relative error with an absolute floor, so near-zero gradients do not
/// blow the ratio up.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

/// Assert finite-difference agreement on a set of coordinates.
pub fn assert_gradient_matches<F>(
    f: &F,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    context: &str,
) where
    F: Fn(&[f64]) -> f64,
{
    for &c in coords {
        let numeric = central_difference(f, x, c, FD_EPSILON);
        let err = relative_error(analytic[c], numeric);
        assert!(
            err < FD_TOLERANCE,
            "{context}: coord {c} analytic {} vs numeric {numeric} (rel err {err:.3e})",
            analytic[c]
        );
    }
}

/// Brute-force BLEU-style clipped precisions from raw position scans; no
/// hash maps, no shared code with the production counter. Mirrors the
/// production smoothing rule (add-one at orders >= 2 when nothing matched).
pub fn oracle_bleu_precisions(
    candidate: &[mmvr_core::TokenId],
    refs: &[&[mmvr_core::TokenId]],
    order: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(order);
    for n in 1..=order {
        let (matched, total) = if candidate.len() < n {
            (0usize, 0usize)
        } else {
            let total = candidate.len() - n + 1;
            let occurrences = |hay: &[mmvr_core::TokenId], gram: &[mmvr_core::TokenId]| -> usize {
                if hay.len() < n {
                    return 0;
                }
                (0..=hay.len() - n).filter(|&i| &hay[i..i + n] == gram).count()
            };
            let mut matched = 0;
            for i in 0..total {
                let gram = &candidate[i..i + n];
                if (0..i).any(|j| &candidate[j..j + n] == gram) {
                    continue;
                }
                let cand_count = occurrences(candidate, gram);
                let ref_count = refs.iter().map(|r| occurrences(r, gram)).max().unwrap_or(0);
                matched += cand_count.min(ref_count);
            }
            (matched, total)
        };
        let p = if n >= 2 && matched == 0 {
            (matched + 1) as f64 / (total + 1) as f64
        } else {
            matched as f64 / total as f64
        };
        out.push(p);
    }
    out
}

/// Deterministic dataset shared across integration tests. Generated once
/// into a temp directory that lives for the whole test process.
pub fn shared_dataset(count: usize, seed: u64) -> LoadedDataset {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, base) = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().to_path_buf();
        (dir, path)
    });
    let sub = base.join(format!("ds_{count}_{seed}"));
    if !sub.join("manifest.json").exists() {
        generate_dataset(count, seed, &sub).expect("dataset generation");
    }
    load_dataset(&sub.join("manifest.json")).expect("dataset load")
}
