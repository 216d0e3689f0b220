//! Random edge-weight environments on Z^d.
//!
//! A weight τ(x, α) is a pure function of the root seed, the medium spec and
//! the edge, so any window of the lattice can be queried without storing
//! arrays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{hash_words, mix64, unit_interval};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 8;

const PROB_TOL: f64 = 1e-12;

/// A unit step ±e_axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Direction {
    pub axis: usize,
    pub sign: i8,
}

impl Direction {
    pub fn new(axis: usize, sign: i8) -> Self {
        debug_assert!(sign == 1 || sign == -1);
        Direction { axis, sign }
    }

    /// All 2d directions in table order `+e_0, -e_0, +e_1, -e_1, ...`.
    pub fn all(dim: usize) -> Vec<Direction> {
        (0..2 * dim).map(Direction::from_index).collect()
    }

    /// Position of this direction in [`Direction::all`].
    #[inline]
    pub fn index(self) -> usize {
        2 * self.axis + usize::from(self.sign < 0)
    }

    #[inline]
    pub fn from_index(i: usize) -> Direction {
        Direction {
            axis: i / 2,
            sign: if i % 2 == 0 { 1 } else { -1 },
        }
    }

    #[inline]
    pub fn reverse(self) -> Direction {
        Direction {
            axis: self.axis,
            sign: -self.sign,
        }
    }

    /// p · α
    #[inline]
    pub fn dot(self, p: &[f64]) -> f64 {
        f64::from(self.sign) * p[self.axis]
    }

    /// x + α
    pub fn step(self, x: &[i64]) -> Vec<i64> {
        let mut y = x.to_vec();
        y[self.axis] += i64::from(self.sign);
        y
    }
}

/// Almost-sure bounds a ≤ τ ≤ b of a medium.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightBounds {
    pub a: f64,
    pub b: f64,
}

impl WeightBounds {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && a <= b) {
            return Err(Error::invalid(format!("weight bounds need 0 < a <= b < inf, got a={a}, b={b}")));
        }
        Ok(WeightBounds { a, b })
    }
}

/// Weight law of a medium.
///
/// Periodic tables are indexed by the period cell in row-major order (axis 0
/// slowest) and then by direction in [`Direction::all`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MediumKind {
    Constant {
        value: f64,
    },
    IidDiscrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
    IidUniform {
        lo: f64,
        hi: f64,
    },
    Periodic {
        period: Vec<usize>,
        weights: Vec<Vec<f64>>,
    },
    /// One atom per diagonal level Σx_i; τ(x, +e_i) is coordinate i of the
    /// atom at the level of x.
    DiagonalSymmetric {
        atoms: Vec<Vec<f64>>,
        probs: Vec<f64>,
        #[serde(default)]
        level_seed: u64,
    },
}

impl MediumKind {
    pub fn name(&self) -> &'static str {
        match self {
            MediumKind::Constant { .. } => "constant",
            MediumKind::IidDiscrete { .. } => "iid_discrete",
            MediumKind::IidUniform { .. } => "iid_uniform",
            MediumKind::Periodic { .. } => "periodic",
            MediumKind::DiagonalSymmetric { .. } => "diagonal_symmetric",
        }
    }
}

/// Serializable description of a medium.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumSpec {
    pub dimension: usize,
    pub kind: MediumKind,
    #[serde(default)]
    pub undirected: bool,
    #[serde(default)]
    pub seed: u64,
}

impl MediumSpec {
    pub fn new(dimension: usize, kind: MediumKind, undirected: bool) -> Self {
        MediumSpec {
            dimension,
            kind,
            undirected,
            seed: 0,
        }
    }

    pub fn constant(dimension: usize, value: f64) -> Self {
        MediumSpec::new(dimension, MediumKind::Constant { value }, true)
    }

    pub fn iid_uniform(dimension: usize, lo: f64, hi: f64) -> Self {
        MediumSpec::new(dimension, MediumKind::IidUniform { lo, hi }, true)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn check_weight(w: f64, what: &str) -> Result<()> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::invalid(format!("{what}: weight {w} is not a positive finite number")));
    }
    Ok(())
}

fn normalized_cdf(probs: &[f64], expected_len: usize, what: &str) -> Result<Vec<f64>> {
    if probs.len() != expected_len {
        return Err(Error::invalid(format!(
            "{what}: {} probabilities for {expected_len} outcomes",
            probs.len()
        )));
    }
    if expected_len == 0 {
        return Err(Error::invalid(format!("{what}: empty support")));
    }
    if probs.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
        return Err(Error::invalid(format!("{what}: probabilities must be finite and nonnegative")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::invalid(format!("{what}: probabilities sum to {total}, expected 1")));
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p / total;
            acc
        })
        .collect();
    *cdf.last_mut().unwrap() = f64::INFINITY;
    Ok(cdf)
}

#[inline]
fn sample_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

#[derive(Clone, Debug)]
enum Sampler {
    Constant(f64),
    Discrete { values: Vec<f64>, cdf: Vec<f64> },
    Uniform { lo: f64, width: f64 },
    Periodic { period: Vec<i64>, table: Vec<Vec<f64>> },
    Diagonal { atoms: Vec<Vec<f64>>, cdf: Vec<f64>, level_key: u64 },
}

/// A validated medium together with the seed that fixes its realization.
#[derive(Clone, Debug)]
pub struct Environment {
    spec: MediumSpec,
    seed: u64,
    bounds: WeightBounds,
    sampler: Sampler,
}

impl Environment {
    /// Builds the environment using the seed stored in the spec.
    pub fn new(spec: MediumSpec) -> Result<Self> {
        let seed = spec.seed;
        Environment::with_spec_seed(spec, seed)
    }

    /// Builds the environment with an explicit seed, overriding the spec's.
    pub fn with_spec_seed(mut spec: MediumSpec, seed: u64) -> Result<Self> {
        spec.seed = seed;
        let d = spec.dimension;
        if d == 0 || d > MAX_DIM {
            return Err(Error::invalid(format!("dimension must be in 1..={MAX_DIM}, got {d}")));
        }
        let (bounds, sampler) = match &spec.kind {
            MediumKind::Constant { value } => {
                check_weight(*value, "constant")?;
                (WeightBounds::new(*value, *value)?, Sampler::Constant(*value))
            }
            MediumKind::IidDiscrete { values, probs } => {
                for &v in values {
                    check_weight(v, "iid_discrete")?;
                }
                let cdf = normalized_cdf(probs, values.len(), "iid_discrete")?;
                let a = values.iter().copied().fold(f64::INFINITY, f64::min);
                let b = values.iter().copied().fold(0.0, f64::max);
                (
                    WeightBounds::new(a, b)?,
                    Sampler::Discrete {
                        values: values.clone(),
                        cdf,
                    },
                )
            }
            MediumKind::IidUniform { lo, hi } => {
                check_weight(*lo, "iid_uniform lo")?;
                check_weight(*hi, "iid_uniform hi")?;
                if lo > hi {
                    return Err(Error::invalid(format!("iid_uniform: lo={lo} exceeds hi={hi}")));
                }
                (
                    WeightBounds::new(*lo, *hi)?,
                    Sampler::Uniform {
                        lo: *lo,
                        width: hi - lo,
                    },
                )
            }
            MediumKind::Periodic { period, weights } => {
                if period.len() != d {
                    return Err(Error::invalid(format!("periodic: period has {} axes, expected {d}", period.len())));
                }
                if period.contains(&0) {
                    return Err(Error::invalid("periodic: period entries must be positive"));
                }
                let cells: usize = period.iter().product();
                if weights.len() != cells {
                    return Err(Error::invalid(format!(
                        "periodic: table has {} cells, period needs {cells}",
                        weights.len()
                    )));
                }
                let mut a = f64::INFINITY;
                let mut b: f64 = 0.0;
                for row in weights {
                    if row.len() != 2 * d {
                        return Err(Error::invalid(format!(
                            "periodic: each cell needs {} weights, got {}",
                            2 * d,
                            row.len()
                        )));
                    }
                    for &w in row {
                        check_weight(w, "periodic")?;
                        a = a.min(w);
                        b = b.max(w);
                    }
                }
                (
                    WeightBounds::new(a, b)?,
                    Sampler::Periodic {
                        period: period.iter().map(|&n| n as i64).collect(),
                        table: weights.clone(),
                    },
                )
            }
            MediumKind::DiagonalSymmetric {
                atoms,
                probs,
                level_seed,
            } => {
                if !spec.undirected {
                    return Err(Error::invalid("diagonal_symmetric media must be undirected"));
                }
                let cdf = normalized_cdf(probs, atoms.len(), "diagonal_symmetric")?;
                let mut a = f64::INFINITY;
                let mut b: f64 = 0.0;
                for q in atoms {
                    if q.len() != d {
                        return Err(Error::invalid(format!(
                            "diagonal_symmetric: atom has {} entries, expected {d}",
                            q.len()
                        )));
                    }
                    for &w in q {
                        check_weight(w, "diagonal_symmetric")?;
                        a = a.min(w);
                        b = b.max(w);
                    }
                }
                (
                    WeightBounds::new(a, b)?,
                    Sampler::Diagonal {
                        atoms: atoms.clone(),
                        cdf,
                        level_key: mix64(*level_seed ^ 0x5A5A_0F0F_3C3C_9696),
                    },
                )
            }
        };
        let env = Environment {
            spec,
            seed,
            bounds,
            sampler,
        };
        if env.spec.undirected {
            env.check_periodic_reversal()?;
        }
        Ok(env)
    }

    fn check_periodic_reversal(&self) -> Result<()> {
        let Sampler::Periodic { period, .. } = &self.sampler else {
            return Ok(());
        };
        let d = self.dim();
        let cells: i64 = period.iter().product();
        let mut x = vec![0i64; d];
        for c in 0..cells {
            let mut rem = c;
            for axis in (0..d).rev() {
                x[axis] = rem % period[axis];
                rem /= period[axis];
            }
            for alpha in Direction::all(d) {
                let y = alpha.step(&x);
                let fwd = self.table_weight(&x, alpha);
                let back = self.table_weight(&y, alpha.reverse());
                if fwd != back {
                    return Err(Error::invalid(format!(
                        "periodic: undirected table is inconsistent at {x:?} direction {alpha:?} ({fwd} vs {back})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &MediumSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.spec.dimension
    }

    pub fn bounds(&self) -> WeightBounds {
        self.bounds
    }

    pub fn is_undirected(&self) -> bool {
        self.spec.undirected
    }

    /// Same law, different realization.
    pub fn reseeded(&self, seed: u64) -> Environment {
        Environment {
            seed,
            spec: MediumSpec {
                seed,
                ..self.spec.clone()
            },
            ..self.clone()
        }
    }

    #[inline]
    fn table_weight(&self, x: &[i64], alpha: Direction) -> f64 {
        let Sampler::Periodic { period, table } = &self.sampler else {
            unreachable!()
        };
        let mut cell = 0usize;
        for (xi, &n) in x.iter().zip(period) {
            cell = cell * n as usize + xi.rem_euclid(n) as usize;
        }
        table[cell][alpha.index()]
    }

    #[inline]
    fn edge_hash(&self, x: &[i64], alpha: Direction) -> u64 {
        let d = x.len();
        let mut words = [0u64; MAX_DIM + 1];
        for (w, &xi) in words.iter_mut().zip(x) {
            *w = xi as u64;
        }
        if self.spec.undirected {
            // canonical key: lower endpoint plus positive axis
            if alpha.sign < 0 {
                words[alpha.axis] = words[alpha.axis].wrapping_sub(1);
            }
            words[d] = alpha.axis as u64;
        } else {
            words[d] = alpha.index() as u64 | 0x100;
        }
        hash_words(self.seed, &words[..=d])
    }

    fn level_atom(&self, level: i64) -> usize {
        let Sampler::Diagonal { cdf, level_key, .. } = &self.sampler else {
            unreachable!()
        };
        sample_cdf(cdf, unit_interval(hash_words(self.seed ^ level_key, &[level as u64])))
    }

    /// Edge weight τ(x, α).
    #[inline]
    pub fn weight(&self, x: &[i64], alpha: Direction) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match &self.sampler {
            Sampler::Constant(c) => *c,
            Sampler::Discrete { values, cdf } => values[sample_cdf(cdf, unit_interval(self.edge_hash(x, alpha)))],
            Sampler::Uniform { lo, width } => lo + width * unit_interval(self.edge_hash(x, alpha)),
            Sampler::Periodic { .. } => self.table_weight(x, alpha),
            Sampler::Diagonal { atoms, .. } => {
                let level: i64 = x.iter().sum();
                let level = if alpha.sign > 0 { level } else { level - 1 };
                atoms[self.level_atom(level)][alpha.axis]
            }
        }
    }

    /// Atom index at the diagonal level `Σ x_i`.
    pub fn atom_of(&self, x: &[i64]) -> Result<usize> {
        self.atom_at_level(x.iter().sum())
    }

    /// Atom index at diagonal level `level`.
    pub fn atom_at_level(&self, level: i64) -> Result<usize> {
        match self.sampler {
            Sampler::Diagonal { .. } => Ok(self.level_atom(level)),
            _ => Err(Error::WrongKind {
                expected: "diagonal_symmetric",
                found: self.spec.kind.name(),
            }),
        }
    }

    /// Atoms of a diagonal-symmetric medium.
    pub fn atoms(&self) -> Option<&[Vec<f64>]> {
        match &self.sampler {
            Sampler::Diagonal { atoms, .. } => Some(atoms),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_table_order() {
        let dirs = Direction::all(2);
        assert_eq!(dirs.len(), 4);
        for (i, d) in dirs.iter().enumerate() {
            assert_eq!(d.index(), i);
            assert_eq!(d.reverse().reverse(), *d);
        }
        assert_eq!(dirs[1], Direction::new(0, -1));
    }

    #[test]
    fn constant_weight() {
        let env = Environment::new(MediumSpec::constant(2, 2.0)).unwrap();
        for alpha in Direction::all(2) {
            assert_eq!(env.weight(&[5, -3], alpha), 2.0);
        }
    }

    #[test]
    fn probs_must_sum_to_one() {
        let spec = MediumSpec::new(
            2,
            MediumKind::IidDiscrete {
                values: vec![1.0, 2.0],
                probs: vec![0.5, 0.4],
            },
            true,
        );
        assert!(matches!(Environment::new(spec), Err(Error::Validation(_))));
    }

    #[test]
    fn directed_diagonal_rejected() {
        let spec = MediumSpec::new(
            2,
            MediumKind::DiagonalSymmetric {
                atoms: vec![vec![1.0, 2.0]],
                probs: vec![1.0],
                level_seed: 0,
            },
            false,
        );
        assert!(Environment::new(spec).is_err());
    }

    #[test]
    fn inconsistent_undirected_table_rejected() {
        // 1D period 2: edge 0->1 is +e0 at cell 0 and -e0 at cell 1
        let spec = MediumSpec::new(
            1,
            MediumKind::Periodic {
                period: vec![2],
                weights: vec![vec![1.0, 2.0], vec![3.0, 1.0]],
            },
            true,
        );
        assert!(Environment::new(spec.clone()).is_err());
        let ok = MediumSpec::new(
            1,
            MediumKind::Periodic {
                period: vec![2],
                weights: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
            },
            true,
        );
        assert!(Environment::new(ok).is_ok());
    }

    #[test]
    fn atom_of_wrong_kind() {
        let env = Environment::new(MediumSpec::constant(2, 1.0)).unwrap();
        assert!(matches!(env.atom_of(&[0, 0]), Err(Error::WrongKind { .. })));
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = MediumSpec::iid_uniform(3, 1.0, 2.5).with_seed(11);
        let text = serde_json::to_string(&spec).unwrap();
        let back: MediumSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
