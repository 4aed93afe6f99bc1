//! Temporal edge beliefs for fine-grained nodes.
//!
//! Each fine node keeps a candidate set of parent objects with accumulated
//! log-odds `L(o)` and a soft assignment `z` on the probability simplex. Each
//! step maximizes
//!
//! ```text
//! Σ_o z_o L(o) + λ_H · H(z) − λ_D · ½ Σ_o (z_o − z_prev,o)²
//! ```
//!
//! and the emitted edge is the argmax of `L(o) + log z_o`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeOptParams {
    /// Entropy weight.
    pub lambda_h: f64,
    /// Temporal smoothing weight.
    pub lambda_d: f64,
    pub eps_clamp: f64,
    pub solver_iters: usize,
    pub solver_tol: f64,
    /// Observations required before an edge is emitted.
    pub min_obs: usize,
}

impl Default for EdgeOptParams {
    fn default() -> Self {
        EdgeOptParams {
            lambda_h: 1.0,
            lambda_d: 1.0,
            eps_clamp: 1e-6,
            solver_iters: 200,
            solver_tol: 1e-8,
            min_obs: 2,
        }
    }
}

impl EdgeOptParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_clamp > 0.0 && self.eps_clamp < 0.5) {
            return Err(Error::invalid(
                "edgeopt params",
                "eps_clamp must lie in (0, 0.5)",
            ));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::invalid(
                "edgeopt params",
                "solver_tol must be positive",
            ));
        }
        if !(self.lambda_h >= 0.0 && self.lambda_d >= 0.0) {
            return Err(Error::invalid(
                "edgeopt params",
                "term weights must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Per-candidate state inside an [`EdgeBelief`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateBelief {
    pub object: NodeId,
    /// Accumulated log-odds over `obs_frames`.
    pub logodds: f64,
    pub z: f64,
    pub z_prev: f64,
    pub obs_frames: BTreeSet<u64>,
    /// Frames in which this candidate had the highest 2D score.
    #[serde(default)]
    pub top1_count: usize,
}

/// Edge belief of one fine-grained node over its candidate parent objects,
/// in candidate creation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBelief {
    pub fine_id: NodeId,
    pub candidates: Vec<CandidateBelief>,
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl EdgeBelief {
    pub fn new(fine_id: NodeId) -> Self {
        EdgeBelief {
            fine_id,
            candidates: Vec::new(),
        }
    }

    pub fn total_observations(&self) -> usize {
        self.candidates.iter().map(|c| c.obs_frames.len()).sum()
    }

    pub fn z(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.z).collect()
    }

    pub fn logodds(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.logodds).collect()
    }

    pub fn candidate(&self, object: NodeId) -> Option<&CandidateBelief> {
        self.candidates.iter().find(|c| c.object == object)
    }

    /// Adds an empty candidate, rescaling existing mass so `z` and `z_prev`
    /// stay on the simplex.
    fn push_candidate(&mut self, object: NodeId) -> usize {
        let k = self.candidates.len() as f64;
        let keep = k / (k + 1.0);
        for c in &mut self.candidates {
            c.z *= keep;
            c.z_prev *= keep;
        }
        self.candidates.push(CandidateBelief {
            object,
            logodds: 0.0,
            z: 1.0 / (k + 1.0),
            z_prev: 1.0 / (k + 1.0),
            obs_frames: BTreeSet::new(),
            top1_count: 0,
        });
        self.candidates.len() - 1
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Ok(());
        }
        let s: f64 = self.candidates.iter().map(|c| c.z).sum();
        if self.candidates.iter().any(|c| c.z < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Invariant(format!(
                "belief of node {} left the simplex (sum {s})",
                self.fine_id
            )));
        }
        Ok(())
    }
}

/// Folds one frame's 2D evidence for `object ← fine` into the belief.
pub fn accumulate(
    belief: &mut EdgeBelief,
    object: NodeId,
    s_2d: f64,
    frame_id: u64,
    params: &EdgeOptParams,
) -> Result<()> {
    if !s_2d.is_finite() {
        return Err(Error::NonFinite("edge score"));
    }
    let idx = match belief.candidates.iter().position(|c| c.object == object) {
        Some(i) => {
            if belief.candidates[i].obs_frames.contains(&frame_id) {
                return Err(Error::DuplicateEvidence {
                    candidate: object,
                    frame: frame_id,
                });
            }
            i
        }
        None => belief.push_candidate(object),
    };
    let eps = params.eps_clamp;
    let c = &mut belief.candidates[idx];
    c.logodds += logit(s_2d.clamp(eps, 1.0 - eps));
    c.obs_frames.insert(frame_id);
    Ok(())
}

/// Value of the per-step objective at `z`.
pub fn objective(z: &[f64], logodds: &[f64], anchor: &[f64], lambda_h: f64, lambda_d: f64) -> f64 {
    let mut data = 0.0;
    let mut entropy = 0.0;
    let mut smooth = 0.0;
    for i in 0..z.len() {
        data += z[i] * logodds[i];
        if z[i] > 0.0 {
            entropy -= z[i] * z[i].ln();
        }
        smooth += (z[i] - anchor[i]).powi(2);
    }
    data + lambda_h * entropy - lambda_d * 0.5 * smooth
}

fn log_normalize(logz: &mut [f64]) {
    let m = logz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logz.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logz.iter_mut().for_each(|v| *v -= lse);
}

fn exp_normalized(logz: &[f64]) -> Vec<f64> {
    let mut z: Vec<f64> = logz.iter().map(|v| v.exp()).collect();
    let s: f64 = z.iter().sum();
    z.iter_mut().for_each(|v| *v /= s);
    z
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Maximizes the per-step objective on the simplex given accumulated
/// log-odds and the previous distribution `anchor`.
///
/// With `λ_H > 0` this runs entropic mirror ascent with step
/// `1/(λ_H + λ_D)`; the multiplicative update keeps every iterate strictly
/// inside the simplex. With `λ_H = 0` the maximizer is the Euclidean
/// projection of `anchor + L/λ_D`, or a vertex when both weights vanish.
pub fn solve_simplex(
    logodds: &[f64],
    anchor: &[f64],
    lambda_h: f64,
    lambda_d: f64,
    iters: usize,
    tol: f64,
) -> Vec<f64> {
    let n = logodds.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![1.0];
    }
    if lambda_h == 0.0 {
        if lambda_d == 0.0 {
            let mut best = 0;
            for i in 1..n {
                if logodds[i] > logodds[best] {
                    best = i;
                }
            }
            let mut z = vec![0.0; n];
            z[best] = 1.0;
            return z;
        }
        let shifted: Vec<f64> = (0..n).map(|i| anchor[i] + logodds[i] / lambda_d).collect();
        return project_simplex(&shifted);
    }

    let eta = 1.0 / (lambda_h + lambda_d);
    let keep = 1.0 - eta * lambda_h;
    let mut logz: Vec<f64> = anchor.iter().map(|a| a.max(1e-300).ln()).collect();
    log_normalize(&mut logz);
    let mut z = exp_normalized(&logz);
    for _ in 0..iters.max(1) {
        for i in 0..n {
            let grad = logodds[i] - lambda_d * (z[i] - anchor[i]);
            logz[i] = keep * logz[i] + eta * grad;
        }
        log_normalize(&mut logz);
        let next = exp_normalized(&logz);
        let step = next
            .iter()
            .zip(&z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        z = next;
        if step < tol {
            break;
        }
    }
    z
}

/// One optimization step: the current `z` becomes the smoothing anchor and
/// moves to `z_prev`; the new maximizer replaces `z`.
pub fn optimize_step(belief: &mut EdgeBelief, params: &EdgeOptParams) -> Result<Vec<f64>> {
    if belief.candidates.is_empty() {
        return Ok(Vec::new());
    }
    let logodds = belief.logodds();
    if logodds.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("accumulated log-odds"));
    }
    let anchor = belief.z();
    let z = solve_simplex(
        &logodds,
        &anchor,
        params.lambda_h,
        params.lambda_d,
        params.solver_iters,
        params.solver_tol,
    );
    for (c, (zn, zp)) in belief.candidates.iter_mut().zip(z.iter().zip(&anchor)) {
        c.z_prev = *zp;
        c.z = *zn;
    }
    Ok(z)
}

/// Integrated decision score `L(o) + log z(o)`, `-inf` where `z(o) = 0`.
pub fn decision_score(belief: &EdgeBelief) -> Vec<(NodeId, f64)> {
    belief
        .candidates
        .iter()
        .map(|c| {
            let s = if c.z > 0.0 {
                c.logodds + c.z.ln()
            } else {
                f64::NEG_INFINITY
            };
            (c.object, s)
        })
        .collect()
}

fn first_argmax<T: PartialOrd + Copy>(
    items: impl Iterator<Item = (NodeId, T)>,
) -> Option<(NodeId, T)> {
    let mut best: Option<(NodeId, T)> = None;
    for (id, v) in items {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((id, v)),
        }
    }
    best
}

/// Top-1 parent by decision score once the belief has `min_obs`
/// observations. Ties go to the earliest-created candidate.
pub fn select_edge(belief: &EdgeBelief, params: &EdgeOptParams) -> Option<NodeId> {
    if belief.total_observations() < params.min_obs {
        return None;
    }
    first_argmax(
        decision_score(belief)
            .into_iter()
            .filter(|(_, s)| *s > f64::NEG_INFINITY),
    )
    .map(|(id, _)| id)
}

/// Credits the frame's top-scoring candidate, given one frame's
/// `(object, s_2d)` evidence for this belief. Ties go to the first entry.
pub fn tally_top1(belief: &mut EdgeBelief, frame_scores: &[(NodeId, f64)]) {
    let Some((object, _)) = first_argmax(frame_scores.iter().copied()) else {
        return;
    };
    if let Some(c) = belief.candidates.iter_mut().find(|c| c.object == object) {
        c.top1_count += 1;
    }
}

/// Parent that was the per-frame 2D top-1 in the most frames.
pub fn select_by_count(belief: &EdgeBelief, params: &EdgeOptParams) -> Option<NodeId> {
    if belief.total_observations() < params.min_obs {
        return None;
    }
    first_argmax(belief.candidates.iter().map(|c| (c.object, c.top1_count))).map(|(id, _)| id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EdgeOptParams {
        EdgeOptParams::default()
    }

    #[test]
    fn neutral_score_leaves_logodds() {
        let mut b = EdgeBelief::new(1);
        accumulate(&mut b, 10, 0.5, 0, &params()).unwrap();
        assert_eq!(b.candidates[0].logodds, 0.0);
    }

    #[test]
    fn duplicate_frame_is_rejected() {
        let mut b = EdgeBelief::new(1);
        accumulate(&mut b, 10, 0.7, 3, &params()).unwrap();
        let e = accumulate(&mut b, 10, 0.7, 3, &params());
        assert!(matches!(
            e,
            Err(Error::DuplicateEvidence {
                candidate: 10,
                frame: 3
            })
        ));
        // a different candidate in the same frame is fine
        accumulate(&mut b, 11, 0.7, 3, &params()).unwrap();
    }

    #[test]
    fn newcomer_rescales_existing_mass() {
        let mut b = EdgeBelief::new(1);
        accumulate(&mut b, 10, 0.9, 0, &params()).unwrap();
        accumulate(&mut b, 11, 0.9, 0, &params()).unwrap();
        b.candidates[0].z = 0.8;
        b.candidates[1].z = 0.2;
        accumulate(&mut b, 12, 0.9, 1, &params()).unwrap();
        let z = b.z();
        assert!((z[0] - 0.8 * 2.0 / 3.0).abs() < 1e-15);
        assert!((z[1] - 0.2 * 2.0 / 3.0).abs() < 1e-15);
        assert!((z[2] - 1.0 / 3.0).abs() < 1e-15);
        b.check_invariants().unwrap();
    }

    #[test]
    fn single_and_symmetric_cases() {
        let mut b = EdgeBelief::new(1);
        accumulate(&mut b, 10, 0.9, 0, &params()).unwrap();
        assert_eq!(optimize_step(&mut b, &params()).unwrap(), vec![1.0]);

        let mut b = EdgeBelief::new(1);
        accumulate(&mut b, 10, 0.7, 0, &params()).unwrap();
        accumulate(&mut b, 11, 0.7, 0, &params()).unwrap();
        let z = optimize_step(&mut b, &params()).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-12 && (z[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_logodds_rejected() {
        let mut b = EdgeBelief::new(1);
        accumulate(&mut b, 10, 0.7, 0, &params()).unwrap();
        b.candidates[0].logodds = f64::NAN;
        assert!(optimize_step(&mut b, &params()).is_err());
    }

    #[test]
    fn hard_limits() {
        // λ_H = λ_D = 0 picks the vertex of the largest L
        assert_eq!(
            solve_simplex(&[0.1, 2.0, 1.0], &[1.0 / 3.0; 3], 0.0, 0.0, 10, 1e-9),
            vec![0.0, 1.0, 0.0]
        );
        // λ_H = 0: projection of anchor + L/λ_D
        let z = solve_simplex(&[1.0, 0.0], &[0.5, 0.5], 0.0, 4.0, 10, 1e-9);
        assert!((z[0] - 0.625).abs() < 1e-12 && (z[1] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn decision_and_selection() {
        let mut b = EdgeBelief::new(1);
        accumulate(&mut b, 10, 0.9, 0, &params()).unwrap();
        assert_eq!(select_edge(&b, &params()), None);
        accumulate(&mut b, 10, 0.9, 1, &params()).unwrap();
        assert_eq!(select_edge(&b, &params()), Some(10));

        // zero mass never wins
        let mut b = EdgeBelief::new(1);
        accumulate(&mut b, 10, 0.9, 0, &params()).unwrap();
        accumulate(&mut b, 11, 0.9, 1, &params()).unwrap();
        b.candidates[0].z = 0.0;
        b.candidates[1].z = 1.0;
        b.candidates[0].logodds = 50.0;
        assert_eq!(decision_score(&b)[0].1, f64::NEG_INFINITY);
        assert_eq!(select_edge(&b, &params()), Some(11));

        // ties go to the earliest candidate
        b.candidates[0].z = 0.5;
        b.candidates[1].z = 0.5;
        b.candidates[0].logodds = 1.0;
        b.candidates[1].logodds = 1.0;
        assert_eq!(select_edge(&b, &params()), Some(10));
    }

    #[test]
    fn count_selection() {
        let mut b = EdgeBelief::new(1);
        for f in 0..3 {
            accumulate(&mut b, 10, 0.3, f, &params()).unwrap();
        }
        accumulate(&mut b, 11, 0.99, 0, &params()).unwrap();
        tally_top1(&mut b, &[(10, 0.3), (11, 0.99)]);
        tally_top1(&mut b, &[(10, 0.3)]);
        tally_top1(&mut b, &[(10, 0.3)]);
        assert_eq!(b.candidates[0].top1_count, 2);
        assert_eq!(b.candidates[1].top1_count, 1);
        optimize_step(&mut b, &params()).unwrap();
        assert_eq!(select_by_count(&b, &params()), Some(10));
        assert_eq!(select_edge(&b, &params()), Some(11));
    }
}
