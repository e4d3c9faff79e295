//! Set testers, vertex testers and the guest-vertex weight functions they use.

use serde::{Deserialize, Serialize};

use crate::graph::Graph;

/// A weight on guest vertices, evaluated lazily.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Weight {
    /// The same value on every vertex.
    Uniform { value: f64 },
    /// `ω(x) = deg_H(x)` in the guest `x` belongs to.
    Degree,
    /// 1 on the listed `[guest, x]` pairs (kept sorted), 0 elsewhere.
    Indicator { members: Vec<[usize; 2]> },
    /// Explicit values, `values[guest][x]`.
    Table { values: Vec<Vec<f64>> },
}

impl Weight {
    pub fn indicator(mut members: Vec<[usize; 2]>) -> Weight {
        members.sort_unstable();
        members.dedup();
        Weight::Indicator { members }
    }

    pub fn eval(&self, guests: &[Graph], guest: usize, x: usize) -> f64 {
        match self {
            Weight::Uniform { value } => *value,
            Weight::Degree => guests[guest].degree(x) as f64,
            Weight::Indicator { members } => {
                if members.binary_search(&[guest, x]).is_ok() {
                    1.0
                } else {
                    0.0
                }
            }
            Weight::Table { values } => values
                .get(guest)
                .and_then(|v| v.get(x))
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// Sum of the weight over a vertex set of one guest.
    pub fn total(&self, guests: &[Graph], guest: usize, xs: &[usize]) -> f64 {
        xs.iter().map(|&x| self.eval(guests, guest, x)).sum()
    }
}

/// `(W, Y_1, …, Y_k)`: `W ⊆ V_i` and `Y_j ⊆ X_i` of pairwise distinct guests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetTester {
    pub cluster: usize,
    pub w: Vec<usize>,
    /// `(guest, Y)` pairs.
    pub ys: Vec<(usize, Vec<usize>)>,
}

impl SetTester {
    pub fn arity(&self) -> usize {
        self.ys.len()
    }

    /// `|W| |Y_1| ⋯ |Y_k| / n^k`.
    pub fn target(&self, n: f64) -> f64 {
        self.ys
            .iter()
            .fold(self.w.len() as f64, |acc, (_, y)| acc * y.len() as f64 / n)
    }
}

/// `(v, ω)` with `v ∈ V_i` and `ω` a weight on `⋃_H X_i^H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexTester {
    pub cluster: usize,
    pub v: usize,
    pub weight: Weight,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TesterSuite {
    pub set_testers: Vec<SetTester>,
    pub vertex_testers: Vec<VertexTester>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_tester_target_multiplies_fractions() {
        let t = SetTester { cluster: 1, w: (0..10).collect(), ys: vec![(0, (0..5).collect()), (1, (0..4).collect())] };
        assert!((t.target(20.0) - 10.0 * 5.0 * 4.0 / 400.0).abs() < 1e-12);
    }

    #[test]
    fn indicator_weight_is_order_insensitive() {
        let g = vec![Graph::new(3), Graph::new(3)];
        let w = Weight::indicator(vec![[1, 2], [0, 1], [1, 2]]);
        assert_eq!(w.eval(&g, 0, 1), 1.0);
        assert_eq!(w.eval(&g, 1, 2), 1.0);
        assert_eq!(w.eval(&g, 1, 1), 0.0);
    }
}
