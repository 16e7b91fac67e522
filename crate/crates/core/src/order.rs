//! The preorder `x ≼_A y ⇔ A(y − x) ≥ 0` and its cone `K_A = {z : Az ≥ 0}`.
//!
//! All comparisons are exact integer arithmetic. A matrix with rational
//! entries is accepted through [`OrderSpec::from_rational`], which scales
//! every row by the lcm of its denominators; this leaves the preorder
//! unchanged.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::model::{NetStructure, Network, State};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderSpec {
    rows: Vec<Vec<i64>>,
}

impl OrderSpec {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if d == 0 {
            return Err(Error::Validation("order matrix must have at least one row and column".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        if rows.iter().any(|r| r.iter().all(|a| *a == 0)) {
            return Err(Error::Validation("order matrix has a zero row".into()));
        }
        Ok(OrderSpec { rows })
    }

    pub fn from_rational(rows: Vec<Vec<BigRational>>) -> Result<Self> {
        let scaled = rows
            .into_iter()
            .map(|row| {
                let l = row.iter().fold(BigInt::from(1), |l, a| l.lcm(a.denom()));
                row.iter()
                    .map(|a| {
                        (a * BigRational::from_integer(l.clone()))
                            .to_integer()
                            .to_i64()
                            .ok_or_else(|| Error::Validation("order matrix entry overflows i64".into()))
                    })
                    .collect::<Result<Vec<i64>>>()
            })
            .collect::<Result<_>>()?;
        OrderSpec::new(scaled)
    }

    /// The `order_matrix` stored in a model file.
    pub fn from_network(net: &Network) -> Result<Self> {
        let rows = net
            .order_matrix()
            .ok_or_else(|| Error::Validation("model has no order_matrix".into()))?;
        let a = OrderSpec::new(rows.to_vec())?;
        a.check_dim(net.dim())?;
        Ok(a)
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    /// Number of rows `m`.
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Number of columns `d`.
    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if d == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim(), got: d })
        }
    }

    pub fn row_dot(&self, i: usize, v: &[i64]) -> i64 {
        self.rows[i].iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `A v`.
    pub fn apply(&self, v: &[i64]) -> Vec<i64> {
        (0..self.m()).map(|i| self.row_dot(i, v)).collect()
    }

    /// `x ≼ y` without dimension checks.
    pub fn le(&self, x: &[i64], y: &[i64]) -> bool {
        self.rows
            .iter()
            .all(|r| r.iter().zip(x.iter().zip(y)).map(|(a, (x, y))| a * (y - x)).sum::<i64>() >= 0)
    }

    /// Rank of `A` over the rationals. When it equals `d` the preorder is
    /// a partial order.
    pub fn rank(&self) -> usize {
        let mut m: Vec<Vec<BigRational>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|a| BigRational::from_integer((*a).into())).collect())
            .collect();
        let (rows, cols) = (m.len(), self.dim());
        let mut rank = 0;
        for c in 0..cols {
            let Some(p) = (rank..rows).find(|&r| !m[r][c].is_zero()) else { continue };
            m.swap(rank, p);
            for r in 0..rows {
                if r != rank && !m[r][c].is_zero() {
                    let f = &m[r][c] / &m[rank][c];
                    for k in c..cols {
                        let delta = &f * &m[rank][k];
                        m[r][k] -= delta;
                    }
                }
            }
            rank += 1;
        }
        rank
    }
}

fn dims(order: &OrderSpec, x: &[i64], y: &[i64]) -> Result<()> {
    order.check_dim(x.len())?;
    order.check_dim(y.len())
}

/// `x ≼_A y`.
pub fn preceq(order: &OrderSpec, x: &[i64], y: &[i64]) -> Result<bool> {
    dims(order, x, y)?;
    Ok(order.le(x, y))
}

/// Rows `i` with `⟨A_i, y − x⟩ = 0`, i.e. the facets `∂_i(K_A + x)` that
/// contain `y`.
pub fn boundary_indices(order: &OrderSpec, x: &[i64], y: &[i64]) -> Result<Vec<usize>> {
    dims(order, x, y)?;
    let diff: Vec<i64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let ad = order.apply(&diff);
    if ad.iter().any(|v| *v < 0) {
        return Err(Error::NotComparable);
    }
    Ok(ad.iter().enumerate().filter(|(_, v)| **v == 0).map(|(i, _)| i).collect())
}

/// `A v_j` for every net change, and whether all entries lie in `{-1, 0, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvReport {
    pub products: Vec<Vec<i64>>,
    pub unit_entries: bool,
    /// `(j, i)` pairs with `|⟨A_i, v_j⟩| > 1`.
    pub offending: Vec<(usize, usize)>,
}

pub fn check_av_entries(order: &OrderSpec, ns: &NetStructure) -> AvReport {
    let products: Vec<Vec<i64>> = ns.vectors().iter().map(|v| order.apply(v)).collect();
    let offending: Vec<(usize, usize)> = products
        .iter()
        .enumerate()
        .flat_map(|(j, p)| {
            p.iter().enumerate().filter(|(_, a)| a.abs() > 1).map(move |(i, _)| (j, i))
        })
        .collect();
    AvReport { unit_entries: offending.is_empty(), products, offending }
}

/// A pair showing that a set is not increasing (or decreasing).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderWitness {
    pub inside: State,
    pub outside: State,
}

/// Check `x ∈ Γ, x ≼ y ⇒ y ∈ Γ` over the listed states.
pub fn verify_increasing(
    order: &OrderSpec,
    states: &[State],
    gamma: impl Fn(&[i64]) -> bool,
) -> std::result::Result<(), OrderWitness> {
    let inside: Vec<&State> = states.iter().filter(|s| gamma(s)).collect();
    for x in &inside {
        if let Some(y) = states.iter().find(|y| !gamma(y) && order.le(x, y)) {
            return Err(OrderWitness { inside: (*x).clone(), outside: y.clone() });
        }
    }
    Ok(())
}

/// Check `x ∈ Γ, y ≼ x ⇒ y ∈ Γ` over the listed states.
pub fn verify_decreasing(
    order: &OrderSpec,
    states: &[State],
    gamma: impl Fn(&[i64]) -> bool,
) -> std::result::Result<(), OrderWitness> {
    let inside: Vec<&State> = states.iter().filter(|s| gamma(s)).collect();
    for x in &inside {
        if let Some(y) = states.iter().find(|y| !gamma(y) && order.le(y, x)) {
            return Err(OrderWitness { inside: (*x).clone(), outside: y.clone() });
        }
    }
    Ok(())
}

/// States `x` such that `x ≼ y` forces `y ≼ x`.
pub fn maximal_elements(order: &OrderSpec, states: &[State]) -> Vec<State> {
    states
        .iter()
        .filter(|x| states.iter().all(|y| !order.le(x, y) || order.le(y, x)))
        .cloned()
        .collect()
}

/// States `x` such that `y ≼ x` forces `x ≼ y`.
pub fn minimal_elements(order: &OrderSpec, states: &[State]) -> Vec<State> {
    states
        .iter()
        .filter(|x| states.iter().all(|y| !order.le(y, x) || order.le(x, y)))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_states, LinearConstraint, StateSpaceSpec};

    fn enzyme_order() -> OrderSpec {
        OrderSpec::new(vec![vec![-1, 0, 0, 0], vec![0, 1, 0, 0]]).unwrap()
    }

    #[test]
    fn preceq_follows_the_cone() {
        let a = enzyme_order();
        assert!(preceq(&a, &[3, 0, 2, 0], &[0, 3, 2, 0]).unwrap());
        assert!(!preceq(&a, &[0, 3, 2, 0], &[3, 0, 2, 0]).unwrap());
        assert_eq!(
            preceq(&a, &[1, 2], &[1, 2, 3, 4]),
            Err(Error::DimensionMismatch { expected: 4, got: 2 })
        );
    }

    #[test]
    fn boundary_rows() {
        let a = enzyme_order();
        assert_eq!(boundary_indices(&a, &[2, 0, 1, 1], &[2, 1, 2, 0]).unwrap(), vec![0]);
        assert_eq!(boundary_indices(&a, &[2, 0, 1, 1], &[2, 0, 0, 2]).unwrap(), vec![0, 1]);
        assert_eq!(boundary_indices(&a, &[2, 0, 1, 1], &[3, 0, 0, 0]), Err(Error::NotComparable));
    }

    #[test]
    fn rational_rows_are_scaled() {
        let q = |p: i64, d: i64| BigRational::new(p.into(), d.into());
        let a = OrderSpec::from_rational(vec![vec![q(1, 2), q(-1, 3)], vec![q(2, 1), q(0, 1)]]).unwrap();
        assert_eq!(a.rows(), &[vec![3, -2], vec![2, 0]]);
    }

    #[test]
    fn rank_and_antisymmetry() {
        assert_eq!(enzyme_order().rank(), 2);
        let full = OrderSpec::new(vec![vec![-1, 0], vec![0, 1]]).unwrap();
        assert_eq!(full.rank(), 2);
        let dup = OrderSpec::new(vec![vec![1, 2], vec![2, 4]]).unwrap();
        assert_eq!(dup.rank(), 1);
        assert!(OrderSpec::new(vec![vec![0, 0]]).is_err());
    }

    #[test]
    fn enzyme_extremes() {
        let spec = StateSpaceSpec::conservation(vec![
            LinearConstraint::new(&[1, 1, 0, 1], 3),
            LinearConstraint::new(&[0, 0, 1, 1], 2),
        ]);
        let states = enumerate_states(&spec).unwrap();
        let a = enzyme_order();
        assert_eq!(maximal_elements(&a, &states), vec![vec![0, 3, 2, 0]]);
        assert_eq!(minimal_elements(&a, &states), vec![vec![3, 0, 2, 0]]);
        let p = vec![0, 3, 2, 0];
        assert!(verify_increasing(&a, &states, |x| x == p.as_slice()).is_ok());
        assert!(verify_decreasing(&a, &states, |x| x == p.as_slice()).is_err());
        let s = vec![3, 0, 2, 0];
        assert!(verify_decreasing(&a, &states, |x| x == s.as_slice()).is_ok());
    }
}
