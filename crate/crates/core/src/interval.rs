//! Finite unions of real intervals with possibly infinite endpoints.
//!
//! Every set is kept in normal form: half-open pieces `[lo, hi)`, sorted,
//! pairwise disjoint and with touching pieces merged. Infinite endpoints are
//! stored as IEEE infinities, so measures of unbounded sets are exactly
//! `f64::INFINITY` rather than a large float.
//!
//! The same type is used in the time domain (glue sets, observation sets)
//! and in the frequency domain (spectrum gaps).

use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether a grid point sits on an
/// interval boundary.
const GRID_SNAP: f64 = 1e-9;

/// A single half-open interval `[lo, hi)` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t < self.hi
    }
}

/// Measure-theoretic class of an interval set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetClass {
    Empty,
    /// Positive, finite measure.
    FiniteMeasure,
    /// Contains a half-line `(a, +inf)` or `(-inf, a)`.
    HalfLine,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The whole real line.
    pub fn real_line() -> Self {
        Self {
            intervals: vec![Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            }],
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::from_pairs([(lo, hi)])
    }

    /// `(a, +inf)`.
    pub fn above(a: f64) -> Self {
        Self::interval(a, f64::INFINITY)
    }

    /// `(-inf, a)`.
    pub fn below(a: f64) -> Self {
        Self::interval(f64::NEG_INFINITY, a)
    }

    /// Symmetric interval `(center - half_width, center + half_width)`.
    pub fn centered(center: f64, half_width: f64) -> Self {
        Self::interval(center - half_width, center + half_width)
    }

    /// Complement of the band `[-omega, omega]`.
    pub fn outside_band(omega: f64) -> Self {
        Self::interval(-omega, omega).complement()
    }

    /// Builds a normalized set from arbitrary pairs. Empty or reversed
    /// pairs are dropped; NaN endpoints panic.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut intervals: Vec<Interval> = pairs
            .into_iter()
            .map(|(lo, hi)| {
                assert!(!lo.is_nan() && !hi.is_nan(), "NaN interval endpoint");
                Interval { lo, hi }
            })
            .filter(|iv| iv.lo < iv.hi)
            .collect();
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => merged.push(iv),
            }
        }
        Self { intervals: merged }
    }

    pub fn try_from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs.iter().any(|(lo, hi)| lo.is_nan() || hi.is_nan()) {
            return Err(Error::InvalidInput("NaN interval endpoint".into()));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.intervals.iter().map(|iv| (iv.lo, iv.hi)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(t))
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_pairs(self.pairs().into_iter().chain(other.pairs()))
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].lo.max(b[j].lo);
            let hi = a[i].hi.min(b[j].hi);
            if lo < hi {
                out.push((lo, hi));
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_pairs(out)
    }

    pub fn complement(&self) -> Self {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut cursor = f64::NEG_INFINITY;
        for iv in &self.intervals {
            if cursor < iv.lo {
                out.push((cursor, iv.lo));
            }
            cursor = iv.hi;
        }
        if cursor < f64::INFINITY {
            out.push((cursor, f64::INFINITY));
        }
        Self::from_pairs(out)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.intersect(&other.complement())
    }

    /// Image under `t -> scale * t + shift` with `scale != 0`.
    pub fn affine_image(&self, scale: f64, shift: f64) -> Self {
        assert!(scale != 0.0, "degenerate affine image");
        Self::from_pairs(self.intervals.iter().map(|iv| {
            let (a, b) = (scale * iv.lo + shift, scale * iv.hi + shift);
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        }))
    }

    /// Lebesgue measure; `f64::INFINITY` iff some endpoint is infinite.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    pub fn classify(&self) -> SetClass {
        let Some(first) = self.intervals.first() else {
            return SetClass::Empty;
        };
        let last = self.intervals.last().unwrap();
        if first.lo == f64::NEG_INFINITY || last.hi == f64::INFINITY {
            SetClass::HalfLine
        } else {
            // A finite union of bounded intervals has finite measure.
            debug_assert!(self.measure().is_finite());
            SetClass::FiniteMeasure
        }
    }

    /// Grid indices `n` such that `lo + n * step` lies in the set, for grid
    /// points inside the window `[lo, hi)`.
    pub fn clip_to_window(&self, window: (f64, f64), step: f64) -> Vec<usize> {
        let (lo, hi) = window;
        assert!(lo < hi && step > 0.0, "invalid window or step");
        let count = ((hi - lo) / step - GRID_SNAP).ceil().max(0.0) as usize;
        (0..count)
            .filter(|&n| self.contains_grid_point(lo + n as f64 * step, step))
            .collect()
    }

    /// Membership test for a grid point, snapping boundaries within a small
    /// fraction of the grid step so that `t = lo` is in and `t = hi` is out.
    pub fn contains_grid_point(&self, t: f64, step: f64) -> bool {
        let eps = GRID_SNAP * step;
        self.intervals
            .iter()
            .any(|iv| t >= iv.lo - eps && t < iv.hi - eps)
    }

    /// Boolean membership mask over arbitrary sample points with a common
    /// spacing `step`.
    pub fn mask(&self, points: &[f64], step: f64) -> Vec<bool> {
        points
            .iter()
            .map(|&t| self.contains_grid_point(t, step))
            .collect()
    }
}

fn fmt_endpoint(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "{{}}");
        }
        let parts: Vec<String> = self
            .intervals
            .iter()
            .map(|iv| format!("[{}, {})", fmt_endpoint(iv.lo), fmt_endpoint(iv.hi)))
            .collect();
        write!(f, "{}", parts.join(" u "))
    }
}

/// Endpoint in the textual form: a number, or one of `-inf`, `inf`, `+inf`.
struct Endpoint(f64);

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Endpoint;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"-inf\", \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Endpoint, E> {
                if v.is_nan() {
                    return Err(E::custom("NaN endpoint"));
                }
                Ok(Endpoint(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Endpoint, E> {
                match v.trim() {
                    "-inf" | "-infinity" => Ok(Endpoint(f64::NEG_INFINITY)),
                    "inf" | "+inf" | "infinity" => Ok(Endpoint(f64::INFINITY)),
                    other => other
                        .parse::<f64>()
                        .ok()
                        .filter(|x| !x.is_nan())
                        .map(Endpoint)
                        .ok_or_else(|| E::custom(format!("bad endpoint `{other}`"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl Serialize for IntervalSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.intervals.len()))?;
        for iv in &self.intervals {
            seq.serialize_element(&[fmt_or_num(iv.lo), fmt_or_num(iv.hi)])?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum EndpointOut {
    Num(f64),
    Text(&'static str),
}

fn fmt_or_num(x: f64) -> EndpointOut {
    if x == f64::INFINITY {
        EndpointOut::Text("inf")
    } else if x == f64::NEG_INFINITY {
        EndpointOut::Text("-inf")
    } else {
        EndpointOut::Num(x)
    }
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = IntervalSet;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of [lo, hi] pairs")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<IntervalSet, A::Error> {
                let mut pairs = Vec::new();
                while let Some((lo, hi)) = seq.next_element::<(Endpoint, Endpoint)>()? {
                    if lo.0 >= hi.0 {
                        return Err(de::Error::custom(format!(
                            "interval [{}, {}] is empty",
                            fmt_endpoint(lo.0),
                            fmt_endpoint(hi.0)
                        )));
                    }
                    pairs.push((lo.0, hi.0));
                }
                Ok(IntervalSet::from_pairs(pairs))
            }
        }
        d.deserialize_seq(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn union_of_two_half_lines_stays_split() {
        let s = IntervalSet::below(0.0).union(&IntervalSet::above(1.0));
        assert_eq!(s.pairs(), vec![(-INF, 0.0), (1.0, INF)]);
    }

    #[test]
    fn union_with_empty_is_identity() {
        let a = IntervalSet::from_pairs([(0.0, 2.0), (5.0, 6.0)]);
        assert_eq!(a.union(&IntervalSet::empty()), a);
    }

    #[test]
    fn overlapping_union_merges() {
        let s = IntervalSet::interval(0.0, 2.0).union(&IntervalSet::interval(1.0, 3.0));
        assert_eq!(s.pairs(), vec![(0.0, 3.0)]);
    }

    #[test]
    fn touching_intervals_merge() {
        let s = IntervalSet::from_pairs([(0.0, 1.0), (1.0, 2.0)]);
        assert_eq!(s.pairs(), vec![(0.0, 2.0)]);
    }

    #[test]
    fn intersections() {
        let s = IntervalSet::below(0.0).intersect(&IntervalSet::interval(-1.0, 1.0));
        assert_eq!(s.pairs(), vec![(-1.0, 0.0)]);
        let a = IntervalSet::from_pairs([(0.0, 2.0), (5.0, 6.0)]);
        assert_eq!(a.intersect(&a), a);
        let s = IntervalSet::above(3.0).intersect(&IntervalSet::above(5.0));
        assert_eq!(s.pairs(), vec![(5.0, INF)]);
    }

    #[test]
    fn measures() {
        assert_eq!(IntervalSet::interval(6.0, 7.0).measure(), 1.0);
        assert_eq!(IntervalSet::empty().measure(), 0.0);
        assert_eq!(IntervalSet::below(0.0).measure(), INF);
    }

    #[test]
    fn classification() {
        assert_eq!(IntervalSet::above(3.0).classify(), SetClass::HalfLine);
        assert_eq!(
            IntervalSet::interval(6.0, 7.0).classify(),
            SetClass::FiniteMeasure
        );
        assert_eq!(IntervalSet::empty().classify(), SetClass::Empty);
        assert_eq!(IntervalSet::real_line().classify(), SetClass::HalfLine);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(
            IntervalSet::below(0.0).clip_to_window((-2.0, 2.0), 1.0),
            vec![0, 1]
        );
        assert!(IntervalSet::empty()
            .clip_to_window((-2.0, 2.0), 1.0)
            .is_empty());
        assert_eq!(
            IntervalSet::interval(0.5, 1.5).clip_to_window((0.0, 2.0), 0.5),
            vec![1, 2]
        );
    }

    #[test]
    fn clip_snaps_rounded_grid_points() {
        // 0.1 * 3 rounds above 0.3; the point still belongs to [0.3, 0.5).
        let idx = IntervalSet::interval(0.3, 0.5).clip_to_window((0.0, 1.0), 0.1);
        assert_eq!(idx, vec![3, 4]);
    }

    #[test]
    fn complement_and_band() {
        let g = IntervalSet::outside_band(2.0);
        assert_eq!(g.pairs(), vec![(-INF, -2.0), (2.0, INF)]);
        assert_eq!(g.complement().pairs(), vec![(-2.0, 2.0)]);
        assert_eq!(IntervalSet::empty().complement(), IntervalSet::real_line());
    }

    #[test]
    fn affine_image_reverses_orientation() {
        let s = IntervalSet::above(3.0).affine_image(-1.0, 6.0);
        assert_eq!(s.pairs(), vec![(-INF, 3.0)]);
    }

    #[test]
    fn textual_form_round_trips_through_toml() {
        #[derive(Deserialize, Serialize)]
        struct Doc {
            set: IntervalSet,
        }
        let doc: Doc = toml::from_str("set = [[-inf, 0], [1, inf]]").unwrap();
        assert_eq!(doc.set.pairs(), vec![(-INF, 0.0), (1.0, INF)]);
        let doc: Doc = toml::from_str("set = [[\"-inf\", 0.5], [1.5, \"+inf\"]]").unwrap();
        assert_eq!(doc.set.pairs(), vec![(-INF, 0.5), (1.5, INF)]);
        let json = serde_json::to_string(&doc.set).unwrap();
        assert_eq!(json, r#"[["-inf",0.5],[1.5,"inf"]]"#);
        let back: IntervalSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc.set);
        assert!(toml::from_str::<Doc>("set = [[1, 0]]").is_err());
    }

    fn endpoint() -> impl Strategy<Value = f64> {
        prop_oneof![
            1 => Just(f64::NEG_INFINITY),
            1 => Just(f64::INFINITY),
            8 => (-20i32..20).prop_map(|k| k as f64 * 0.5),
        ]
    }

    fn interval_set() -> impl Strategy<Value = IntervalSet> {
        prop::collection::vec((endpoint(), endpoint()), 0..5).prop_map(IntervalSet::from_pairs)
    }

    fn add_inf(a: f64, b: f64) -> f64 {
        if a.is_infinite() || b.is_infinite() {
            INF
        } else {
            a + b
        }
    }

    proptest! {
        #[test]
        fn union_intersect_commute_and_associate(a in interval_set(), b in interval_set(), c in interval_set()) {
            prop_assert_eq!(a.union(&b), b.union(&a));
            prop_assert_eq!(a.intersect(&b), b.intersect(&a));
            prop_assert_eq!(a.union(&b).union(&c), a.union(&b.union(&c)));
            prop_assert_eq!(a.intersect(&b).intersect(&c), a.intersect(&b.intersect(&c)));
        }

        #[test]
        fn normalization_is_idempotent(a in interval_set()) {
            prop_assert_eq!(IntervalSet::from_pairs(a.pairs()), a.clone());
            for w in a.intervals().windows(2) {
                prop_assert!(w[0].hi < w[1].lo);
            }
        }

        #[test]
        fn inclusion_exclusion(a in interval_set(), b in interval_set()) {
            let lhs = add_inf(a.union(&b).measure(), a.intersect(&b).measure());
            let rhs = add_inf(a.measure(), b.measure());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn classes_agree_with_measure(a in interval_set()) {
            match a.classify() {
                SetClass::HalfLine => prop_assert_eq!(a.measure(), INF),
                SetClass::FiniteMeasure => prop_assert!(a.measure() > 0.0 && a.measure() < INF),
                SetClass::Empty => prop_assert_eq!(a.measure(), 0.0),
            }
        }

        #[test]
        fn complement_partitions_the_line(a in interval_set(), t in -12.0f64..12.0) {
            prop_assert!(a.contains(t) != a.complement().contains(t));
        }
    }
}
