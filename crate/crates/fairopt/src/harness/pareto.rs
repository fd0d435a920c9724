//! Non-dominated frontier over (accuracy, fairness) points.

use super::ParetoPoint;

fn acc_key(p: &ParetoPoint) -> f64 {
    if p.accuracy_metric.higher_is_better() {
        p.accuracy
    } else {
        -p.accuracy
    }
}

fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    let (aa, ab) = (acc_key(a), acc_key(b));
    a.fairness <= b.fairness && aa >= ab && (a.fairness < b.fairness || aa > ab)
}

/// The non-dominated subset under (best accuracy, smallest fairness value),
/// sorted by fairness with ties broken by smaller ε then smaller level.
/// Points whose metrics are not finite (all folds failed) are excluded.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let valid: Vec<&ParetoPoint> = points.iter().filter(|p| p.valid()).collect();
    let mut frontier: Vec<ParetoPoint> = valid
        .iter()
        .filter(|p| !valid.iter().any(|q| dominates(q, p)))
        .map(|p| (*p).clone())
        .collect();
    frontier.sort_by(|a, b| {
        let fa = a.fairness.partial_cmp(&b.fairness).unwrap();
        if fa != std::cmp::Ordering::Equal {
            return fa;
        }
        let ea = a.epsilon.unwrap_or(f64::INFINITY);
        let eb = b.epsilon.unwrap_or(f64::INFINITY);
        match ea.partial_cmp(&eb).unwrap() {
            std::cmp::Ordering::Equal => a.level.cmp(&b.level),
            other => other,
        }
    });
    frontier
}
