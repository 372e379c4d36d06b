//! Simplex value types and the ALR/CLR/ILR log-ratio transforms.
//!
//! A [`Composition`] is one point on the open simplex: strictly positive
//! shares summing to one. The additive log-ratio (ALR) transform maps a
//! J-component composition to an unconstrained (J-1)-vector of log ratios
//! against a chosen reference component; its inverse is a softmax that
//! restores the reference slot. CLR and ILR are the usual linearly related
//! alternatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the share sum before an input is rejected outright.
/// Anything closer to 1 than this is renormalized silently.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Smallest share produced by [`alr_inv`]; keeps downstream Dirichlet
/// log-densities finite on the open simplex.
pub const SIMPLEX_EPS: f64 = 1e-12;

/// One point on the open simplex: strictly positive shares summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    values: Vec<f64>,
}

impl Composition {
    /// Validates and renormalizes a share vector.
    ///
    /// Entries must be finite and strictly positive and the sum must lie
    /// within [`SUM_TOLERANCE`] of 1; the stored values are divided by the
    /// exact sum.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain(format!(
                "composition needs at least 2 components, got {}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!(
                    "component {i} is {v}; shares must be strictly positive"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!(
                "shares sum to {sum}, outside 1 ± {SUM_TOLERANCE}"
            )));
        }
        Ok(Self::renormalized(values, sum))
    }

    /// Equal shares 1/J.
    pub fn equal(n_components: usize) -> Self {
        assert!(n_components >= 2);
        Self {
            values: vec![1.0 / n_components as f64; n_components],
        }
    }

    fn renormalized(mut values: Vec<f64>, sum: f64) -> Self {
        for v in &mut values {
            *v /= sum;
        }
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of components J.
    pub fn n_components(&self) -> usize {
        self.values.len()
    }
}

/// Normalizes a positive vector onto the simplex (the closure operation).
pub fn close(raw: &[f64]) -> Result<Composition> {
    if raw.len() < 2 {
        return Err(Error::Domain(format!(
            "closure needs at least 2 entries, got {}",
            raw.len()
        )));
    }
    for (i, &v) in raw.iter().enumerate() {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Domain(format!(
                "entry {i} is {v}; closure requires strictly positive input"
            )));
        }
    }
    let sum: f64 = raw.iter().sum();
    Ok(Composition::renormalized(raw.to_vec(), sum))
}

/// An ALR-transformed point: (J-1) log ratios plus the reference index
/// that makes the inverse unambiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlrVector {
    values: Vec<f64>,
    ref_index: usize,
}

impl AlrVector {
    /// `ref_index` is the 0-based position of the reference component in
    /// the original composition (so J = values.len() + 1).
    pub fn new(values: Vec<f64>, ref_index: usize) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("ALR coordinates must be finite".into()));
        }
        if ref_index > values.len() {
            return Err(Error::Domain(format!(
                "reference index {ref_index} out of range for {} coordinates",
                values.len()
            )));
        }
        Ok(Self { values, ref_index })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ref_index(&self) -> usize {
        self.ref_index
    }

    /// Number of components of the underlying composition.
    pub fn n_components(&self) -> usize {
        self.values.len() + 1
    }
}

/// Additive log-ratio transform against the component at `ref_index`
/// (0-based). Component order is preserved with the reference slot omitted.
pub fn alr(c: &Composition, ref_index: usize) -> Result<AlrVector> {
    let j = c.n_components();
    if ref_index >= j {
        return Err(Error::Domain(format!(
            "reference index {ref_index} out of range for {j} components"
        )));
    }
    let log_ref = c.values[ref_index].ln();
    let values: Vec<f64> = c
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ref_index)
        .map(|(_, &v)| v.ln() - log_ref)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite ALR coordinate".into()));
    }
    Ok(AlrVector { values, ref_index })
}

/// Inverse ALR: a softmax that reinserts the reference slot.
///
/// Overflow is guarded by max-subtraction and outputs are clamped into
/// `[SIMPLEX_EPS, 1 - SIMPLEX_EPS]` then renormalized, so the result never
/// touches the simplex boundary.
pub fn alr_inv(v: &AlrVector) -> Composition {
    let j = v.n_components();
    let mut logits = Vec::with_capacity(j);
    let mut it = v.values.iter();
    for i in 0..j {
        if i == v.ref_index {
            logits.push(0.0);
        } else {
            logits.push(*it.next().expect("coordinate count"));
        }
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut shares: Vec<f64> = logits.iter().map(|&u| (u - max).exp()).collect();
    let sum: f64 = shares.iter().sum();
    for s in &mut shares {
        *s = (*s / sum).max(SIMPLEX_EPS);
    }
    let sum: f64 = shares.iter().sum();
    Composition::renormalized(shares, sum)
}

/// Centered log-ratio: log shares centered by their mean, so the output
/// sums to zero.
pub fn clr(c: &Composition) -> Vec<f64> {
    let logs: Vec<f64> = c.values.iter().map(|v| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.into_iter().map(|l| l - mean).collect()
}

/// One step of a sequential binary partition: the two disjoint groups
/// (0-based component indices) split at this step.
pub type PartitionStep = (Vec<usize>, Vec<usize>);

/// The pivot partition: component j against all later components.
pub fn pivot_partition(n_components: usize) -> Vec<PartitionStep> {
    (0..n_components - 1)
        .map(|j| (vec![j], (j + 1..n_components).collect()))
        .collect()
}

fn validate_partition(n_components: usize, partition: &[PartitionStep]) -> Result<()> {
    if partition.len() != n_components - 1 {
        return Err(Error::Config(format!(
            "partition must have {} steps for {} components, got {}",
            n_components - 1,
            n_components,
            partition.len()
        )));
    }
    // Each step must split one active group exactly in two.
    let mut active: Vec<Vec<usize>> = vec![(0..n_components).collect()];
    for (step, (s, h)) in partition.iter().enumerate() {
        if s.is_empty() || h.is_empty() {
            return Err(Error::Config(format!("partition step {step} has an empty side")));
        }
        let mut merged: Vec<usize> = s.iter().chain(h.iter()).copied().collect();
        merged.sort_unstable();
        if merged.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!(
                "partition step {step} repeats a component"
            )));
        }
        let pos = active.iter().position(|g| *g == merged).ok_or_else(|| {
            Error::Config(format!(
                "partition step {step} does not split an active group"
            ))
        })?;
        active.swap_remove(pos);
        let mut s = s.clone();
        let mut h = h.clone();
        s.sort_unstable();
        h.sort_unstable();
        active.push(s);
        active.push(h);
    }
    Ok(())
}

/// Isometric log-ratio coordinates for a sequential binary partition.
///
/// Coordinate j is `sqrt(r_j / (r_j + 1)) * ln(g(S_j) / g(H_j))` with `g`
/// the geometric mean and `r_j = |H_j|`.
pub fn ilr(c: &Composition, partition: &[PartitionStep]) -> Result<Vec<f64>> {
    validate_partition(c.n_components(), partition)?;
    let geo_mean = |idx: &[usize]| -> f64 {
        idx.iter().map(|&i| c.values[i].ln()).sum::<f64>() / idx.len() as f64
    };
    Ok(partition
        .iter()
        .map(|(s, h)| {
            let r = h.len() as f64;
            (r / (r + 1.0)).sqrt() * (geo_mean(s) - geo_mean(h))
        })
        .collect())
}

/// A time-ordered sequence of compositions sharing one component count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositionalSeries {
    rows: Vec<Composition>,
    time_index: Vec<String>,
}

impl CompositionalSeries {
    pub fn new(rows: Vec<Composition>, time_index: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("series must contain at least one row".into()));
        }
        if rows.len() != time_index.len() {
            return Err(Error::Data(format!(
                "{} rows but {} time labels",
                rows.len(),
                time_index.len()
            )));
        }
        let j = rows[0].n_components();
        if rows.iter().any(|r| r.n_components() != j) {
            return Err(Error::Data("rows must share one component count".into()));
        }
        // Integer labels compare numerically, anything else lexicographically
        // (which covers ISO dates).
        let as_ints: Option<Vec<i64>> = time_index.iter().map(|s| s.parse().ok()).collect();
        let increasing = match as_ints {
            Some(ints) => ints.windows(2).all(|w| w[0] < w[1]),
            None => time_index.windows(2).all(|w| w[0] < w[1]),
        };
        if !increasing {
            return Err(Error::Data("time index must be strictly increasing".into()));
        }
        Ok(Self { rows, time_index })
    }

    /// Rows labelled 0..T-1.
    pub fn with_default_index(rows: Vec<Composition>) -> Result<Self> {
        let labels = (0..rows.len()).map(|t| t.to_string()).collect();
        Self::new(rows, labels)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_components(&self) -> usize {
        self.rows[0].n_components()
    }

    pub fn rows(&self) -> &[Composition] {
        &self.rows
    }

    pub fn row(&self, t: usize) -> &Composition {
        &self.rows[t]
    }

    pub fn time_index(&self) -> &[String] {
        &self.time_index
    }

    /// First `len` rows as a new series.
    pub fn head(&self, len: usize) -> Self {
        Self {
            rows: self.rows[..len].to_vec(),
            time_index: self.time_index[..len].to_vec(),
        }
    }

    /// Rows from `start` onward as a new series.
    pub fn tail(&self, start: usize) -> Self {
        Self {
            rows: self.rows[start..].to_vec(),
            time_index: self.time_index[start..].to_vec(),
        }
    }

    /// Replaces row `t`, keeping the label.
    pub fn set_row(&mut self, t: usize, row: Composition) {
        assert_eq!(row.n_components(), self.n_components());
        self.rows[t] = row;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_composition(rng: &mut impl Rng, j: usize) -> Composition {
        let raw: Vec<f64> = (0..j).map(|_| rng.gen_range(0.05..4.0)).collect();
        close(&raw).unwrap()
    }

    #[test]
    fn alr_equal_shares_is_zero() {
        let c = Composition::equal(4);
        let v = alr(&c, 3).unwrap();
        for &x in v.values() {
            assert_relative_eq!(x, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn alr_direct_ratio() {
        let c = Composition::new(vec![0.5, 0.25, 0.25]).unwrap();
        let v = alr(&c, 2).unwrap();
        assert_relative_eq!(v.values()[0], 2.0_f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(v.values()[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn alr_inv_trivial_cases() {
        let v = AlrVector::new(vec![0.0, 0.0, 0.0], 3).unwrap();
        let c = alr_inv(&v);
        for &x in c.values() {
            assert_relative_eq!(x, 0.25, epsilon = 1e-12);
        }
        let v = AlrVector::new(vec![2.0_f64.ln(), 0.0], 2).unwrap();
        let c = alr_inv(&v);
        assert_relative_eq!(c.values()[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(c.values()[1], 0.25, epsilon = 1e-12);
        assert_relative_eq!(c.values()[2], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn alr_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let j = rng.gen_range(2..8);
            let c = random_composition(&mut rng, j);
            let r = rng.gen_range(0..j);
            let back = alr_inv(&alr(&c, r).unwrap());
            for (a, b) in c.values().iter().zip(back.values()) {
                assert!((a - b).abs() < 1e-12, "roundtrip drift {a} vs {b}");
            }
        }
    }

    #[test]
    fn alr_scale_invariant() {
        let raw = [3.0, 1.5, 0.25, 2.0];
        let scaled: Vec<f64> = raw.iter().map(|v| v * 17.0).collect();
        let a = alr(&close(&raw).unwrap(), 0).unwrap();
        let b = alr(&close(&scaled).unwrap(), 0).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn clr_sums_to_zero() {
        let c = Composition::new(vec![0.5, 0.25, 0.25]).unwrap();
        let z = clr(&c);
        assert!(z.iter().sum::<f64>().abs() < 1e-10);
        let equal = Composition::equal(5);
        assert!(clr(&equal).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn clr_relates_to_alr_by_linear_map() {
        // With reference J, log shares are [v; 0] up to an additive constant,
        // and clr is the centering projection applied to them.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let j = rng.gen_range(2..7);
            let c = random_composition(&mut rng, j);
            let v = alr(&c, j - 1).unwrap();
            let mut padded: Vec<f64> = v.values().to_vec();
            padded.push(0.0);
            let mean = padded.iter().sum::<f64>() / j as f64;
            let mapped: Vec<f64> = padded.iter().map(|x| x - mean).collect();
            for (a, b) in mapped.iter().zip(clr(&c)) {
                assert_relative_eq!(*a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn ilr_two_components() {
        let c = Composition::new(vec![0.5, 0.5]).unwrap();
        let z = ilr(&c, &pivot_partition(2)).unwrap();
        assert_eq!(z.len(), 1);
        assert_relative_eq!(z[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn ilr_equal_shares_zero_any_partition() {
        let c = Composition::equal(4);
        let partitions = vec![
            pivot_partition(4),
            vec![
                (vec![0, 1], vec![2, 3]),
                (vec![0], vec![1]),
                (vec![2], vec![3]),
            ],
        ];
        for p in partitions {
            let z = ilr(&c, &p).unwrap();
            assert!(z.iter().all(|v| v.abs() < 1e-14), "{z:?}");
        }
    }

    #[test]
    fn ilr_pivot_preserves_norm() {
        // Pivot coordinates are orthonormal: their Euclidean norm matches the
        // clr norm, and permuting components with a matching partition keeps it.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let j = rng.gen_range(3..7);
            let c = random_composition(&mut rng, j);
            let z = ilr(&c, &pivot_partition(j)).unwrap();
            let norm_z = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let norm_clr = clr(&c).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_relative_eq!(norm_z, norm_clr, epsilon = 1e-10);

            let mut perm: Vec<usize> = (0..j).collect();
            perm.reverse();
            let permuted = close(&perm.iter().map(|&i| c.values()[i]).collect::<Vec<_>>()).unwrap();
            let permuted_partition: Vec<PartitionStep> = pivot_partition(j)
                .iter()
                .map(|(s, h)| {
                    (
                        s.iter().map(|&i| perm.iter().position(|&p| p == i).unwrap()).collect(),
                        h.iter().map(|&i| perm.iter().position(|&p| p == i).unwrap()).collect(),
                    )
                })
                .collect();
            let z2 = ilr(&permuted, &permuted_partition).unwrap();
            for (a, b) in z.iter().zip(&z2) {
                assert_relative_eq!(*a, *b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn ilr_rejects_invalid_partition() {
        let c = Composition::equal(3);
        // Second step does not split an active group.
        let bad = vec![(vec![0], vec![1, 2]), (vec![0], vec![1])];
        assert!(ilr(&c, &bad).is_err());
        let too_short = vec![(vec![0], vec![1, 2])];
        assert!(ilr(&c, &too_short).is_err());
    }

    #[test]
    fn close_cases() {
        let c = close(&[1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(c.values().iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let c = close(&[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.values(), &[0.5, 0.25, 0.25]);
        assert!(close(&[1.0, 0.0]).is_err());
        assert!(close(&[1.0, -0.2, 0.4]).is_err());
    }

    #[test]
    fn composition_validation() {
        assert!(Composition::new(vec![0.5]).is_err());
        assert!(Composition::new(vec![0.5, 0.6]).is_err());
        assert!(Composition::new(vec![0.5, 0.5 + 2e-9]).is_err());
        // Within tolerance: renormalized silently.
        let c = Composition::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert!((c.values().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn series_validation() {
        let rows = vec![Composition::equal(3), Composition::equal(3)];
        assert!(CompositionalSeries::new(rows.clone(), vec!["1".into(), "2".into()]).is_ok());
        assert!(CompositionalSeries::new(rows.clone(), vec!["2".into(), "1".into()]).is_err());
        assert!(CompositionalSeries::new(
            rows.clone(),
            vec!["2020-01-01".into(), "2020-01-02".into()]
        )
        .is_ok());
        assert!(CompositionalSeries::new(rows, vec!["a".into(), "a".into()]).is_err());
        let mixed = vec![Composition::equal(3), Composition::equal(4)];
        assert!(CompositionalSeries::new(mixed, vec!["1".into(), "2".into()]).is_err());
    }

    proptest! {
        #[test]
        fn prop_alr_roundtrip(raw in proptest::collection::vec(0.01f64..10.0, 2..7), seed in 0usize..6) {
            let c = close(&raw).unwrap();
            let r = seed % raw.len();
            let back = alr_inv(&alr(&c, r).unwrap());
            for (a, b) in c.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_close_scale_invariant(raw in proptest::collection::vec(0.01f64..10.0, 2..7), k in 0.001f64..1000.0) {
            let scaled: Vec<f64> = raw.iter().map(|v| v * k).collect();
            let a = alr(&close(&raw).unwrap(), 0).unwrap();
            let b = alr(&close(&scaled).unwrap(), 0).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
