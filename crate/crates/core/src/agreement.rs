//! Priority spectrums and the double-entropy agreement index.
//!
//! A spectrum bins the values one priority coordinate takes across all
//! tree-derived vectors onto grades `1..=N`, each value contributing its
//! weight as mass. The index combines two normalized Shannon entropies:
//!
//! * gap entropy `H(P)` over the distances between consecutive occupied
//!   grades (plus a residual closing the sum to `d`), min-max normalized over
//!   all supports of the same size;
//! * frequency entropy `H(Q)` of the mass shares, divided by its attainable
//!   maximum `ln(min(m, N))` for `m` contributions.
//!
//! `K = 1 - (H*(P) + H*(Q)) / 2`, with `K = 1` for a single occupied grade.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spantree::PriorityVector;

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_THRESHOLD: f64 = 0.7;

/// Rounding of priority values onto spectrum grades.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    epsilon: f64,
    grades: u32,
}

impl Binning {
    /// Bin width `epsilon`; `1 / epsilon` must be an integer of at least 2.
    pub fn from_epsilon(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::InvalidBinning(format!(
                "epsilon {epsilon} must lie in (0, 0.5]"
            )));
        }
        let grades = (1.0 / epsilon).round();
        if (grades * epsilon - 1.0).abs() > 1e-9 || grades > 1e7 {
            return Err(Error::InvalidBinning(format!(
                "1/epsilon must be a whole number, got {}",
                1.0 / epsilon
            )));
        }
        Ok(Self {
            epsilon,
            grades: grades as u32,
        })
    }

    /// Explicit grade count, e.g. 9 to bin onto a 1..9 scale.
    pub fn with_grades(grades: u32) -> Result<Self> {
        if grades < 2 {
            return Err(Error::InvalidBinning(format!(
                "need at least 2 grades, got {grades}"
            )));
        }
        Ok(Self {
            epsilon: 1.0 / f64::from(grades),
            grades,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn grades(&self) -> u32 {
        self.grades
    }

    /// Grade of `value`: `round(value / epsilon)`, raised to 1 for values
    /// below half a bin.
    pub fn grade_of(&self, value: f64) -> Result<u32> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::Domain(value));
        }
        let g = (value / self.epsilon).round() as u32;
        Ok(g.clamp(1, self.grades))
    }
}

impl Default for Binning {
    fn default() -> Self {
        Self::from_epsilon(DEFAULT_EPSILON).expect("default epsilon is valid")
    }
}

/// Mass per grade for one priority coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    grades: u32,
    mass: BTreeMap<u32, f64>,
    contributions: usize,
    /// Masses are whole rater counts.
    #[serde(default)]
    counts: bool,
}

impl Spectrum {
    /// Spectrum from explicit per-grade masses and the number of
    /// contributions (raters or tree replicas) they came from.
    pub fn from_masses<I>(grades: u32, masses: I, contributions: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        if grades < 2 {
            return Err(Error::InvalidBinning(format!(
                "need at least 2 grades, got {grades}"
            )));
        }
        let mut mass = BTreeMap::new();
        for (g, r) in masses {
            if g == 0 || g > grades {
                return Err(Error::InvalidBinning(format!(
                    "grade {g} outside 1..={grades}"
                )));
            }
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidBinning(format!(
                    "mass {r} must be non-negative"
                )));
            }
            if r > 0.0 {
                *mass.entry(g).or_insert(0.0) += r;
            }
        }
        if mass.is_empty() {
            return Err(Error::UndefinedSpectrum);
        }
        if contributions < mass.len() {
            return Err(Error::InvalidBinning(format!(
                "{} occupied grades cannot come from {contributions} contributions",
                mass.len()
            )));
        }
        Ok(Self {
            grades,
            mass,
            contributions,
            counts: false,
        })
    }

    /// Spectrum of raters: `counts[g]` raters chose grade `g`.
    pub fn from_counts<I>(grades: u32, counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let counts: Vec<(u32, u32)> = counts.into_iter().collect();
        let raters = counts.iter().map(|(_, c)| *c as usize).sum();
        let mut spectrum = Self::from_masses(
            grades,
            counts.into_iter().map(|(g, c)| (g, f64::from(c))),
            raters,
        )?;
        spectrum.counts = true;
        Ok(spectrum)
    }

    pub fn grades(&self) -> u32 {
        self.grades
    }

    pub fn support(&self) -> Vec<u32> {
        self.mass.keys().copied().collect()
    }

    pub fn mass(&self) -> &BTreeMap<u32, f64> {
        &self.mass
    }

    pub fn contributions(&self) -> usize {
        self.contributions
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.values().sum()
    }

    /// Built from rater counts rather than real masses.
    pub fn is_counts(&self) -> bool {
        self.counts
    }

    /// Two-column text table, one `grade<TAB>mass` line per occupied grade.
    pub fn to_table(&self) -> String {
        let mut out = String::from("grade\tmass\n");
        for (g, r) in &self.mass {
            out.push_str(&format!("{g}\t{r}\n"));
        }
        out
    }
}

/// Bins weighted values onto grades. Zero-weight values are ignored.
pub fn build_spectrum(values: &[(f64, f64)], binning: Binning) -> Result<Spectrum> {
    let mut masses = Vec::with_capacity(values.len());
    let mut contributions = 0;
    for &(value, weight) in values {
        let grade = binning.grade_of(value)?;
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidBinning(format!(
                "weight {weight} must be non-negative"
            )));
        }
        if weight > 0.0 {
            contributions += 1;
            masses.push((grade, weight));
        }
    }
    Spectrum::from_masses(binning.grades(), masses, contributions)
}

fn shannon<I: IntoIterator<Item = f64>>(probabilities: I) -> f64 {
    -probabilities
        .into_iter()
        .filter(|p| *p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Entropy of the integer parts `parts` of their total.
fn composition_entropy(parts: &[u64]) -> f64 {
    let total: u64 = parts.iter().sum();
    shannon(parts.iter().map(|&x| x as f64 / total as f64))
}

/// Total gap length `d` for `k` occupied grades out of `n`.
pub fn gap_total(n: u32, k: u32) -> u64 {
    let n = u64::from(n);
    let k = u64::from(k);
    if k <= 1 {
        n
    } else {
        n - 1 + (n - 1) / (k - 1)
    }
}

/// Gap parts for a sorted support: consecutive distances plus the residual
/// `d - (i_k - i_1)`, so the parts always sum to `d`.
pub fn gap_parts(n: u32, support: &[u32]) -> Vec<u64> {
    let k = support.len() as u32;
    let d = gap_total(n, k);
    let mut parts: Vec<u64> = support.windows(2).map(|w| u64::from(w[1] - w[0])).collect();
    let span = support
        .last()
        .zip(support.first())
        .map_or(0, |(hi, lo)| u64::from(hi - lo));
    parts.push(d - span);
    parts
}

/// Exact minimum and maximum of `H(P)` over every `k`-point support in
/// `1..=n`.
///
/// All gap vectors are compositions of `d` into `k` positive parts with the
/// residual at least `floor((n-1)/(k-1))`. The clustered support
/// `(d-k+1, 1, ..., 1)` majorizes every such composition and the balanced
/// composition of `d` is always reachable because `d/k >= floor((n-1)/(k-1))`,
/// so they give the minimum and maximum entropy respectively.
pub fn gap_entropy_bounds(n: u32, k: u32) -> (f64, f64) {
    assert!(k >= 1 && k <= n, "support size {k} outside 1..={n}");
    if k == 1 {
        return (0.0, 0.0);
    }
    let d = gap_total(n, k);
    let k64 = u64::from(k);
    let mut clustered = vec![1u64; k as usize];
    clustered[0] = d - (k64 - 1);
    (
        composition_entropy(&clustered),
        composition_entropy(&balanced(d, k64)),
    )
}

/// `total` split into `parts` integers differing by at most one.
fn balanced(total: u64, parts: u64) -> Vec<u64> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts)
        .map(|i| if i < extra { base + 1 } else { base })
        .collect()
}

/// Largest attainable frequency entropy for `contributions` over `n` grades.
///
/// Real masses reach `ln(min(contributions, n))`. Whole rater counts can
/// only split as evenly as the integers allow, so with more raters than
/// grades the bound is the entropy of the most even split.
pub fn max_frequency_entropy(n: u32, contributions: usize, counts: bool) -> f64 {
    let k = contributions.min(n as usize);
    if !counts || k == contributions {
        (k as f64).ln()
    } else {
        composition_entropy(&balanced(contributions as u64, k as u64))
    }
}

/// All parts of the index for one spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleEntropy {
    pub support: usize,
    pub gap_entropy: f64,
    pub gap_entropy_normalized: f64,
    pub frequency_entropy: f64,
    pub frequency_entropy_normalized: f64,
    pub index: f64,
}

pub fn double_entropy(spectrum: &Spectrum) -> Result<DoubleEntropy> {
    let total = spectrum.total_mass();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::UndefinedSpectrum);
    }
    let n = spectrum.grades();
    let support = spectrum.support();
    let k = support.len();
    if k == 1 {
        return Ok(DoubleEntropy {
            support: 1,
            gap_entropy: 0.0,
            gap_entropy_normalized: 0.0,
            frequency_entropy: 0.0,
            frequency_entropy_normalized: 0.0,
            index: 1.0,
        });
    }

    let gap_entropy = composition_entropy(&gap_parts(n, &support));
    let gap_entropy_normalized = if k as u32 == n {
        1.0
    } else {
        let (lo, hi) = gap_entropy_bounds(n, k as u32);
        if hi - lo <= 1e-12 {
            // every k-point support has the same gap entropy
            1.0
        } else {
            ((gap_entropy - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
    };

    let frequency_entropy = shannon(spectrum.mass().values().map(|r| r / total));
    let frequency_entropy_normalized = (frequency_entropy
        / max_frequency_entropy(n, spectrum.contributions(), spectrum.is_counts()))
    .clamp(0.0, 1.0);

    let index = 1.0 - (gap_entropy_normalized + frequency_entropy_normalized) / 2.0;
    Ok(DoubleEntropy {
        support: k,
        gap_entropy,
        gap_entropy_normalized,
        frequency_entropy,
        frequency_entropy_normalized,
        index,
    })
}

/// Double-entropy agreement index in `[0, 1]`; 1 means full agreement.
pub fn double_entropy_index(spectrum: &Spectrum) -> Result<f64> {
    double_entropy(spectrum).map(|d| d.index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// One index per priority coordinate.
    pub indices: Vec<f64>,
    pub threshold: f64,
    pub passing: bool,
    pub worst_coordinate: usize,
}

impl AgreementReport {
    pub fn min_index(&self) -> f64 {
        self.indices[self.worst_coordinate]
    }

    /// Coordinates at or below the threshold, worst first.
    pub fn failing_coordinates(&self) -> Vec<usize> {
        let mut failing: Vec<usize> = (0..self.indices.len())
            .filter(|&l| self.indices[l] <= self.threshold)
            .collect();
        failing.sort_by(|&a, &b| self.indices[a].total_cmp(&self.indices[b]).then(a.cmp(&b)));
        failing
    }
}

/// Spectrums of every coordinate of the weighted vectors.
pub fn coordinate_spectrums(
    vectors: &[(&PriorityVector, f64)],
    binning: Binning,
) -> Result<Vec<Spectrum>> {
    let n = vectors.first().map(|(v, _)| v.len()).ok_or(Error::NoData)?;
    if let Some((v, _)) = vectors.iter().find(|(v, _)| v.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            got: v.len(),
        });
    }
    (0..n)
        .map(|l| {
            let values: Vec<(f64, f64)> = vectors.iter().map(|(v, w)| (v[l], *w)).collect();
            build_spectrum(&values, binning)
        })
        .collect()
}

/// Index per coordinate; passes when every index exceeds `threshold`.
pub fn agreement_report(
    vectors: &[(&PriorityVector, f64)],
    binning: Binning,
    threshold: f64,
) -> Result<AgreementReport> {
    let indices = coordinate_spectrums(vectors, binning)?
        .iter()
        .map(double_entropy_index)
        .collect::<Result<Vec<f64>>>()?;
    let worst_coordinate = indices
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(l, _)| l)
        .expect("at least one coordinate");
    let passing = indices[worst_coordinate] > threshold;
    Ok(AgreementReport {
        indices,
        threshold,
        passing,
        worst_coordinate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force gap-entropy range over all k-subsets of 1..=n.
    fn brute_bounds(n: u32, k: u32) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() != k {
                continue;
            }
            let support: Vec<u32> = (0..n)
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| b + 1)
                .collect();
            let h = composition_entropy(&gap_parts(n, &support));
            lo = lo.min(h);
            hi = hi.max(h);
        }
        (lo, hi)
    }

    #[test]
    fn closed_form_bounds_match_brute_force() {
        for n in 2..=14 {
            for k in 1..=n {
                let (lo, hi) = gap_entropy_bounds(n, k);
                let (blo, bhi) = brute_bounds(n, k);
                assert!((lo - blo).abs() < 1e-12, "min n={n} k={k}");
                assert!((hi - bhi).abs() < 1e-12, "max n={n} k={k}");
            }
        }
    }

    #[test]
    fn frequency_bound_for_counts_is_attainable() {
        // 3 raters on 2 grades split at best 2 + 1
        let best = -(2.0f64 / 3.0 * (2.0f64 / 3.0).ln() + 1.0 / 3.0 * (1.0f64 / 3.0).ln());
        assert!((max_frequency_entropy(2, 3, true) - best).abs() < 1e-15);
        assert_eq!(max_frequency_entropy(2, 3, false), 2f64.ln());
        assert_eq!(max_frequency_entropy(5, 3, true), 3f64.ln());
        assert_eq!(max_frequency_entropy(2, 4, true), 2f64.ln());

        let s = Spectrum::from_counts(2, [(1, 2), (2, 1)]).unwrap();
        assert!(s.is_counts());
        let d = double_entropy(&s).unwrap();
        assert!((d.frequency_entropy_normalized - 1.0).abs() < 1e-12);
        assert!(!Spectrum::from_masses(2, [(1, 2.0), (2, 1.0)], 3)
            .unwrap()
            .is_counts());
    }

    #[test]
    fn gaps_sum_to_d_and_are_positive() {
        for n in 2..=12u32 {
            for mask in 1u32..(1 << n) {
                let support: Vec<u32> = (0..n)
                    .filter(|b| mask >> b & 1 == 1)
                    .map(|b| b + 1)
                    .collect();
                let parts = gap_parts(n, &support);
                assert_eq!(
                    parts.iter().sum::<u64>(),
                    gap_total(n, support.len() as u32)
                );
                assert!(parts.iter().all(|&p| p >= 1));
            }
        }
    }

    #[test]
    fn spectrum_examples() {
        let b = Binning::from_epsilon(0.01).unwrap();
        let s = build_spectrum(&[(0.25, 1.0), (0.25, 1.0)], b).unwrap();
        assert_eq!(s.support(), vec![25]);
        assert_eq!(s.mass()[&25], 2.0);
        assert_eq!(s.grades(), 100);

        let s = build_spectrum(&[(0.254, 1.0), (0.246, 1.0)], b).unwrap();
        assert_eq!(s.support(), vec![25]);
        assert_eq!(s.mass()[&25], 2.0);

        let s = build_spectrum(
            &[(0.2, 0.5), (0.8, 0.5)],
            Binning::from_epsilon(0.1).unwrap(),
        )
        .unwrap();
        assert_eq!(s.support(), vec![2, 8]);
        assert_eq!(s.mass()[&2], 0.5);
        assert_eq!(s.mass()[&8], 0.5);
    }

    /// Rounding oracle on the decimal representation: scale by 10^digits
    /// using integer arithmetic on the printed value.
    fn decimal_round(value: f64, digits: u32) -> u32 {
        let printed = format!("{value:.12}");
        let (int, frac) = printed.split_once('.').unwrap();
        let scaled: u64 = format!("{int}{}", &frac[..digits as usize])
            .parse()
            .unwrap();
        let next = frac.as_bytes()[digits as usize] - b'0';
        (scaled + u64::from(next >= 5)) as u32
    }

    #[test]
    fn binning_matches_decimal_rounding() {
        let b = Binning::from_epsilon(0.01).unwrap();
        for v in [0.254, 0.246, 0.5, 0.999, 0.015, 0.0351, 0.7749, 0.125] {
            assert_eq!(b.grade_of(v).unwrap(), decimal_round(v, 2).max(1), "{v}");
        }
    }

    #[test]
    fn binning_rejects_out_of_domain() {
        let b = Binning::default();
        assert_eq!(b.grade_of(0.0), Err(Error::Domain(0.0)));
        assert!(b.grade_of(1.2).is_err());
        assert!(b.grade_of(f64::NAN).is_err());
        assert_eq!(b.grade_of(0.001).unwrap(), 1);
        assert_eq!(b.grade_of(1.0).unwrap(), 100);
        assert!(Binning::from_epsilon(0.03).is_err());
        assert!(Binning::from_epsilon(0.0).is_err());
        for e in [0.1, 0.01, 0.001, 0.0001] {
            assert!(Binning::from_epsilon(e).is_ok());
        }
    }

    #[test]
    fn zero_mass_is_undefined() {
        assert_eq!(
            build_spectrum(&[(0.3, 0.0)], Binning::default()),
            Err(Error::UndefinedSpectrum)
        );
    }

    #[test]
    fn unanimity_is_full_agreement() {
        let s = Spectrum::from_counts(9, [(4, 5)]).unwrap();
        assert_eq!(double_entropy_index(&s).unwrap(), 1.0);
    }

    #[test]
    fn uniform_full_support_is_zero() {
        for n in 2..=9 {
            let s = Spectrum::from_counts(n, (1..=n).map(|g| (g, 1))).unwrap();
            assert!(double_entropy_index(&s).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn two_adjacent_grades_n9() {
        // Independent evaluation: support {g, g+1}, d = 16, gaps (1, 15);
        // adjacency is the minimum-entropy layout so H*(P) = 0, and equal
        // masses over 2 raters give H*(Q) = ln2 / ln2 = 1.
        for g in 1..9 {
            let s = Spectrum::from_counts(9, [(g, 1), (g + 1, 1)]).unwrap();
            let parts = gap_parts(9, &s.support());
            assert_eq!(parts, vec![1, 15]);
            let idx = double_entropy_index(&s).unwrap();
            assert!((idx - 0.5).abs() < 1e-12);
        }
        // adjacency maximizes the index among two-point supports
        let adjacent =
            double_entropy_index(&Spectrum::from_counts(9, [(3, 1), (4, 1)]).unwrap()).unwrap();
        for a in 1..=9 {
            for b in a + 1..=9 {
                let s = Spectrum::from_counts(9, [(a, 1), (b, 1)]).unwrap();
                assert!(double_entropy_index(&s).unwrap() <= adjacent + 1e-12);
            }
        }
    }

    #[test]
    fn k2_index_non_increasing_in_gap() {
        for n in 3..=20u32 {
            let mut prev = f64::INFINITY;
            for gap in 1..n {
                let s = Spectrum::from_counts(n, [(1, 1), (1 + gap, 1)]).unwrap();
                let idx = double_entropy_index(&s).unwrap();
                assert!(idx <= prev + 1e-12, "n={n} gap={gap}");
                prev = idx;
            }
        }
    }

    #[test]
    fn report_picks_worst_and_threshold() {
        let a = PriorityVector::normalized(vec![0.5, 0.3, 0.2]).unwrap();
        let same: Vec<(&PriorityVector, f64)> = vec![(&a, 1.0), (&a, 1.0), (&a, 1.0)];
        let r = agreement_report(&same, Binning::default(), DEFAULT_THRESHOLD).unwrap();
        assert_eq!(r.indices, vec![1.0, 1.0, 1.0]);
        assert!(r.passing);

        let b = PriorityVector::normalized(vec![0.2, 0.3, 0.5]).unwrap();
        let mixed: Vec<(&PriorityVector, f64)> = vec![(&a, 1.0), (&a, 1.0), (&b, 1.0)];
        let r = agreement_report(&mixed, Binning::default(), DEFAULT_THRESHOLD).unwrap();
        assert_eq!(r.indices[1], 1.0);
        assert!(!r.passing);
        assert!(r.min_index() <= DEFAULT_THRESHOLD);
        assert_eq!(r.worst_coordinate, 0);
        assert_eq!(r.failing_coordinates(), vec![0, 2]);

        let r = agreement_report(&mixed, Binning::default(), 0.0).unwrap();
        assert!(r.indices.iter().all(|&k| k > 0.0));
        assert!(r.passing);
    }

    #[test]
    fn table_export() {
        let s = Spectrum::from_counts(9, [(2, 1), (5, 3)]).unwrap();
        assert_eq!(s.to_table(), "grade\tmass\n2\t1\n5\t3\n");
    }

    fn arb_spectrum() -> impl Strategy<Value = Spectrum> {
        (2u32..=50).prop_flat_map(|n| {
            prop::collection::vec((1..=n, 0.01f64..10.0), 1..40).prop_map(move |entries| {
                let contributions = entries.len();
                Spectrum::from_masses(n, entries, contributions).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn index_in_unit_interval(s in arb_spectrum()) {
            let d = double_entropy(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&d.index));
            prop_assert!((0.0..=1.0).contains(&d.gap_entropy_normalized));
            prop_assert!((0.0..=1.0).contains(&d.frequency_entropy_normalized));
        }

        #[test]
        fn index_invariant_under_mass_scaling_and_reflection(s in arb_spectrum(), factor in 0.01f64..100.0) {
            let base = double_entropy_index(&s).unwrap();
            let scaled = Spectrum::from_masses(
                s.grades(), s.mass().iter().map(|(g, r)| (*g, r * factor)), s.contributions()).unwrap();
            prop_assert!((double_entropy_index(&scaled).unwrap() - base).abs() < 1e-12);
            let n = s.grades();
            let reflected = Spectrum::from_masses(
                n, s.mass().iter().map(|(g, r)| (n + 1 - g, *r)), s.contributions()).unwrap();
            prop_assert!((double_entropy_index(&reflected).unwrap() - base).abs() < 1e-12);
        }
    }
}
