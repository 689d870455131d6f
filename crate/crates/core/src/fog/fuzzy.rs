//! Triangular fuzzy partitions, Mamdani inference and centroid defuzzification.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuzzyError {
    #[error("variable {0}: {1}")]
    Variable(String, String),
    #[error("rule {0}: {1}")]
    Rule(usize, String),
    #[error("rule base leaves inputs uncovered at labels {0:?}")]
    Uncovered(Vec<String>),
    #[error("no rule fired")]
    NoRuleFired,
    #[error("aggregate has zero mass")]
    ZeroMass,
    #[error("rulebase line {0}: {1}")]
    Parse(usize, String),
    #[error("missing input value for {0}")]
    MissingInput(String),
}

/// A linguistic variable whose labels form a triangular Ruspini partition of `[lo, hi]`.
///
/// Label `i` peaks at `apexes[i]` and falls to zero at the neighbouring apexes; the first
/// and last labels stay at 1 out to the domain ends, so degrees sum to one everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyVariable {
    name: String,
    lo: f64,
    hi: f64,
    labels: Vec<String>,
    apexes: Vec<f64>,
}

impl FuzzyVariable {
    pub fn new(name: &str, lo: f64, hi: f64, labels: &[(&str, f64)]) -> Result<Self, FuzzyError> {
        let err = |m: &str| FuzzyError::Variable(name.to_string(), m.to_string());
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(err("domain must be finite with lo < hi"));
        }
        if labels.is_empty() {
            return Err(err("needs at least one label"));
        }
        for w in labels.windows(2) {
            if !(w[0].1 < w[1].1) {
                return Err(err("label apexes must be strictly increasing"));
            }
        }
        if labels.iter().any(|(_, a)| !(lo..=hi).contains(a)) {
            return Err(err("label apexes must lie inside the domain"));
        }
        let mut names: Vec<&str> = labels.iter().map(|(l, _)| *l).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != labels.len() {
            return Err(err("duplicate label"));
        }
        Ok(FuzzyVariable {
            name: name.to_string(),
            lo,
            hi,
            labels: labels.iter().map(|(l, _)| l.to_string()).collect(),
            apexes: labels.iter().map(|(_, a)| *a).collect(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn apexes(&self) -> &[f64] {
        &self.apexes
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        if x.is_nan() {
            self.lo
        } else {
            x.clamp(self.lo, self.hi)
        }
    }

    /// Degree of label `i` at `x` (clamped to the domain).
    pub fn membership(&self, i: usize, x: f64) -> f64 {
        let x = self.clamp(x);
        let a = &self.apexes;
        let n = a.len();
        if n == 1 {
            return 1.0;
        }
        let rise = |l: f64, r: f64| ((x - l) / (r - l)).clamp(0.0, 1.0);
        let fall = |l: f64, r: f64| ((r - x) / (r - l)).clamp(0.0, 1.0);
        if i == 0 {
            if x <= a[0] {
                1.0
            } else {
                fall(a[0], a[1])
            }
        } else if i == n - 1 {
            if x >= a[n - 1] {
                1.0
            } else {
                rise(a[n - 2], a[n - 1])
            }
        } else if x <= a[i] {
            rise(a[i - 1], a[i])
        } else {
            fall(a[i], a[i + 1])
        }
    }

    /// Degrees of all labels at `x`, by label index.
    pub fn degrees(&self, x: f64) -> Vec<f64> {
        (0..self.labels.len()).map(|i| self.membership(i, x)).collect()
    }

    /// Corner points of label `i`'s membership function inside the domain.
    fn vertices(&self, i: usize) -> Vec<f64> {
        let mut v = vec![self.lo, self.hi, self.apexes[i]];
        if i > 0 {
            v.push(self.apexes[i - 1]);
        }
        if i + 1 < self.apexes.len() {
            v.push(self.apexes[i + 1]);
        }
        v
    }

    /// Points where label `i` crosses height `h` (0 < h < 1).
    fn level_crossings(&self, i: usize, h: f64) -> Vec<f64> {
        let a = &self.apexes;
        let mut v = Vec::new();
        if i > 0 {
            v.push(a[i - 1] + h * (a[i] - a[i - 1]));
        }
        if i + 1 < a.len() {
            v.push(a[i + 1] - h * (a[i + 1] - a[i]));
        }
        v
    }
}

/// Label -> degree map for `x`.
pub fn fuzzify(x: f64, var: &FuzzyVariable) -> BTreeMap<String, f64> {
    var.labels
        .iter()
        .cloned()
        .zip(var.degrees(x))
        .collect()
}

/// Max-aggregation of consequent sets clipped at per-label heights.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate<'a> {
    output: &'a FuzzyVariable,
    heights: Vec<f64>,
}

impl<'a> Aggregate<'a> {
    /// `heights[i]` clips output label `i`; values are clamped to `[0, 1]`.
    pub fn new(output: &'a FuzzyVariable, heights: Vec<f64>) -> Self {
        assert_eq!(heights.len(), output.labels.len(), "one height per output label");
        let heights = heights.into_iter().map(|h| h.clamp(0.0, 1.0)).collect();
        Aggregate { output, heights }
    }

    pub fn output(&self) -> &FuzzyVariable {
        self.output
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn membership(&self, x: f64) -> f64 {
        self.heights
            .iter()
            .enumerate()
            .filter(|(_, h)| **h > 0.0)
            .map(|(i, h)| h.min(self.output.membership(i, x)))
            .fold(0.0, f64::max)
    }

    /// Sorted abscissae between which the aggregate is exactly linear.
    pub fn breakpoints(&self) -> Vec<f64> {
        let out = self.output;
        let mut pts = vec![out.lo, out.hi];
        for (i, &h) in self.heights.iter().enumerate() {
            if h <= 0.0 {
                continue;
            }
            pts.extend(out.vertices(i));
            if h < 1.0 {
                pts.extend(out.level_crossings(i, h));
            }
        }
        pts.retain(|p| (out.lo..=out.hi).contains(p));
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();

        // every clipped set is linear on each base interval; add where two of them cross
        let active: Vec<usize> = (0..self.heights.len()).filter(|&i| self.heights[i] > 0.0).collect();
        let clipped = |i: usize, x: f64| self.heights[i].min(out.membership(i, x));
        let mut refined = Vec::with_capacity(pts.len() * 2);
        for w in pts.windows(2) {
            let (p, q) = (w[0], w[1]);
            refined.push(p);
            let mut inner = Vec::new();
            for (k, &i) in active.iter().enumerate() {
                for &j in &active[k + 1..] {
                    let dp = clipped(i, p) - clipped(j, p);
                    let dq = clipped(i, q) - clipped(j, q);
                    if dp * dq < 0.0 {
                        inner.push(p + (q - p) * dp / (dp - dq));
                    }
                }
            }
            inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
            refined.extend(inner);
        }
        if let Some(&last) = pts.last() {
            refined.push(last);
        }
        refined.dedup();
        refined
    }
}

/// Centroid of the aggregate over the output domain.
///
/// The aggregate is piecewise linear, so the integrals of `mu` and `x * mu` are evaluated in
/// closed form on each linear piece.
pub fn defuzzify_centroid(agg: &Aggregate<'_>) -> Result<f64, FuzzyError> {
    let pts = agg.breakpoints();
    let mut mass = 0.0;
    let mut moment = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &x in &pts {
        let y = agg.membership(x);
        if let Some((a, ya)) = prev {
            let w = x - a;
            mass += w * (ya + y) / 2.0;
            moment += w / 6.0 * (a * (2.0 * ya + y) + x * (ya + 2.0 * y));
        }
        prev = Some((x, y));
    }
    if mass <= 0.0 {
        return Err(FuzzyError::ZeroMass);
    }
    let (lo, hi) = agg.output.domain();
    Ok((moment / mass).clamp(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> FuzzyVariable {
        FuzzyVariable::new("v", 0.0, 10.0, &[("low", 0.0), ("mid", 4.0), ("high", 8.0)]).unwrap()
    }

    #[test]
    fn apex_is_crisp() {
        let v = three();
        assert_eq!(v.degrees(4.0), vec![0.0, 1.0, 0.0]);
        assert_eq!(v.degrees(10.0), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn midpoint_splits_evenly() {
        assert_eq!(three().degrees(2.0), vec![0.5, 0.5, 0.0]);
        assert_eq!(three().degrees(6.0), vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn clamps_below_domain() {
        let v = three();
        assert_eq!(v.degrees(-5.0), v.degrees(0.0));
        assert_eq!(fuzzify(-5.0, &v)["low"], 1.0);
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(FuzzyVariable::new("v", 0.0, 1.0, &[("a", 0.5), ("b", 0.5)]).is_err());
        assert!(FuzzyVariable::new("v", 0.0, 1.0, &[("a", 0.0), ("a", 1.0)]).is_err());
        assert!(FuzzyVariable::new("v", 0.0, 1.0, &[("a", 2.0)]).is_err());
        assert!(FuzzyVariable::new("v", 1.0, 1.0, &[("a", 1.0)]).is_err());
    }

    #[test]
    fn symmetric_triangle_centroid() {
        let out = FuzzyVariable::new("s", 0.0, 1.0, &[("lo", 0.0), ("mid", 0.5), ("hi", 1.0)]).unwrap();
        let agg = Aggregate::new(&out, vec![0.0, 1.0, 0.0]);
        assert!((defuzzify_centroid(&agg).unwrap() - 0.5).abs() < 1e-12);
        let clipped = Aggregate::new(&out, vec![0.0, 0.37, 0.0]);
        assert!((defuzzify_centroid(&clipped).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_centroid() {
        // a single label covers the whole domain at constant height
        let out = FuzzyVariable::new("s", 0.0, 1.0, &[("all", 0.5)]).unwrap();
        let agg = Aggregate::new(&out, vec![0.3]);
        assert!((defuzzify_centroid(&agg).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_is_error() {
        let out = three();
        assert_eq!(defuzzify_centroid(&Aggregate::new(&out, vec![0.0; 3])), Err(FuzzyError::ZeroMass));
    }
}
