//! Non-dominated fronts under (fidelity up, complexity down).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub config_id: String,
    pub fidelity: f64,
    pub complexity: f64,
    pub dominated: bool,
}

/// `a` dominates `b`: at least as good on both axes, strictly better on one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
}

/// Indices of the non-dominated points of `(fidelity, complexity)` pairs,
/// sorted by increasing complexity. Exact duplicates keep the lowest index.
pub fn nondominated_front(points: &[(f64, f64)]) -> Result<Vec<usize>> {
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(invalid("pareto points must be finite"));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .1
            .total_cmp(&points[j].1)
            .then(points[j].0.total_cmp(&points[i].0))
            .then(i.cmp(&j))
    });
    let mut front = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for i in order {
        if points[i].0 > best {
            best = points[i].0;
            front.push(i);
        }
    }
    Ok(front)
}

/// Marks every point not on the front as dominated.
pub fn mark_front(points: &mut [ParetoPoint]) -> Result<Vec<usize>> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.fidelity, p.complexity)).collect();
    let front = nondominated_front(&pairs)?;
    for p in points.iter_mut() {
        p.dominated = true;
    }
    for &i in &front {
        points[i].dominated = false;
    }
    Ok(front)
}
