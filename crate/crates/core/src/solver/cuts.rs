//! Outer-approximation cuts for second-order cones.

use alloc::vec::Vec;

use super::{SocCone, VarId};

/// Linear cut `head − Σ coef·tail ≥ 0`, valid for the whole cone.
#[derive(Debug, Clone, PartialEq)]
pub struct SocCut {
    pub head: VarId,
    pub tail: Vec<(VarId, f64)>,
}

impl SocCut {
    /// Row terms for `head − Σ coef·tail ≥ 0`.
    pub fn terms(&self) -> Vec<(VarId, f64)> {
        let mut t = Vec::with_capacity(self.tail.len() + 1);
        t.push((self.head, 1.0));
        t.extend(self.tail.iter().map(|&(v, c)| (v, -c)));
        t
    }

    pub fn slack(&self, x: &[f64]) -> f64 {
        x[self.head.0] - self.tail.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }
}

/// Gradient cut `y ≥ (x̂/‖x̂‖)·x` at a point violating `y ≥ ‖x‖` by more
/// than `tol`; `y ≥ 0` when the tail is zero. `None` if the point is inside.
pub fn soc_violation_cut(cone: &SocCone, point: &[f64], tol: f64) -> Option<SocCut> {
    let y = point[cone.head.0];
    let norm = cone.tail_norm(point);
    if y >= norm - tol {
        return None;
    }
    let tail = if norm <= 1e-12 {
        Vec::new()
    } else {
        cone.tail.iter().map(|&v| (v, point[v.0] / norm)).collect()
    };
    Some(SocCut {
        head: cone.head,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cone() -> SocCone {
        SocCone {
            name: "c".into(),
            head: VarId(0),
            tail: vec![VarId(1), VarId(2)],
        }
    }

    #[test]
    fn gradient_cut_at_three_four() {
        let cut = soc_violation_cut(&cone(), &[3.0, 3.0, 4.0], 1e-9).unwrap();
        assert_eq!(cut.tail, vec![(VarId(1), 0.6), (VarId(2), 0.8)]);
        assert!((cut.slack(&[3.0, 3.0, 4.0]) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_cut_inside_cone_and_zero_tail_cut() {
        assert!(soc_violation_cut(&cone(), &[5.0, 3.0, 4.0], 1e-9).is_none());
        let cut = soc_violation_cut(&cone(), &[-1.0, 0.0, 0.0], 1e-9).unwrap();
        assert!(cut.tail.is_empty());
    }

    #[test]
    fn cut_is_valid_on_cone_points() {
        let cut = soc_violation_cut(&cone(), &[1.0, 2.0, -1.0], 1e-9).unwrap();
        for &(a, b) in &[(1.0, 0.0), (-3.0, 4.0), (0.3, -0.2), (0.0, 0.0)] {
            let y = libm::sqrt(a * a + b * b);
            assert!(cut.slack(&[y, a, b]) >= -1e-12);
        }
    }
}
