//! Finite probability tables over (D, Y, Z) for exact mutual-information
//! decompositions and exact checks of the risk-gap inequality.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::bound::divergence::dh_delta_h_discrete;
use crate::bound::hypothesis::FiniteHypothesisClass;
use crate::bound::BoundError;

/// Joint distribution over domain (binary), label, and feature cell.
#[derive(Clone, Debug)]
pub struct DiscreteJoint {
    y_size: usize,
    z_size: usize,
    /// p[d][y][z] flattened as ((d * y_size) + y) * z_size + z.
    p: Vec<f64>,
}

/// The three exact mutual informations of the decomposition
/// I(D; Y, Z) = I(D; Z) + I(D; Y | Z), each computed from its own
/// definitional formula (nats).
#[derive(Clone, Copy, Debug)]
pub struct MiDecomposition {
    pub i_dz: f64,
    pub i_dy_given_z: f64,
    pub i_d_yz: f64,
}

/// Exact evaluation of both sides of the risk-gap inequality for one
/// hypothesis class: for every h, |eps_S(h) - eps_T(h)| must be at most
/// |n_S + n_T| + the symmetric-difference distance + the smaller
/// cross-domain disagreement of the optimal predictors.
#[derive(Clone, Copy, Debug)]
pub struct LemmaCheck {
    /// Largest left-hand side over the class.
    pub max_lhs: f64,
    /// Right-hand side (shared by all h).
    pub rhs: f64,
    /// Smallest rhs - lhs margin over the class.
    pub min_slack: f64,
    pub holds: bool,
}

impl DiscreteJoint {
    pub fn new(y_size: usize, z_size: usize, p: Vec<f64>) -> Result<Self, BoundError> {
        if y_size == 0 || z_size == 0 || p.len() != 2 * y_size * z_size {
            return Err(BoundError::BadInput(format!(
                "table length {} does not match 2 x {y_size} x {z_size}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BoundError::BadInput("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(BoundError::BadInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteJoint { y_size, z_size, p })
    }

    /// Builds a joint from arbitrary nonnegative weights by normalizing.
    pub fn from_weights(y_size: usize, z_size: usize, w: Vec<f64>) -> Result<Self, BoundError> {
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(BoundError::BadInput("weights must have positive sum".into()));
        }
        let p = w.iter().map(|v| v / total).collect();
        DiscreteJoint::new(y_size, z_size, p)
    }

    /// Random strictly-positive table, the fuzzing workhorse.
    pub fn random(rng: &mut ChaCha12Rng, y_size: usize, z_size: usize) -> Self {
        let w: Vec<f64> = (0..2 * y_size * z_size).map(|_| rng.gen_range(0.01..1.0)).collect();
        DiscreteJoint::from_weights(y_size, z_size, w).unwrap()
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn z_size(&self) -> usize {
        self.z_size
    }

    pub fn p(&self, d: usize, y: usize, z: usize) -> f64 {
        self.p[(d * self.y_size + y) * self.z_size + z]
    }

    pub fn p_d(&self, d: usize) -> f64 {
        let mut total = 0.0;
        for y in 0..self.y_size {
            for z in 0..self.z_size {
                total += self.p(d, y, z);
            }
        }
        total
    }

    pub fn p_z(&self, z: usize) -> f64 {
        let mut total = 0.0;
        for d in 0..2 {
            for y in 0..self.y_size {
                total += self.p(d, y, z);
            }
        }
        total
    }

    pub fn p_dz(&self, d: usize, z: usize) -> f64 {
        (0..self.y_size).map(|y| self.p(d, y, z)).sum()
    }

    pub fn p_yz(&self, y: usize, z: usize) -> f64 {
        self.p(0, y, z) + self.p(1, y, z)
    }

    /// Feature distribution conditioned on the domain.
    pub fn z_given_d(&self, d: usize) -> Result<Vec<f64>, BoundError> {
        let pd = self.p_d(d);
        if pd <= 0.0 {
            return Err(BoundError::BadInput(format!("domain {d} has zero mass")));
        }
        Ok((0..self.z_size).map(|z| self.p_dz(d, z) / pd).collect())
    }

    /// Conditional mean of Y (binary) per feature cell within a domain;
    /// cells with no mass get the uninformative value 1/2.
    pub fn conditional_mean(&self, d: usize) -> Result<Vec<f64>, BoundError> {
        if self.y_size != 2 {
            return Err(BoundError::BadInput("conditional mean needs binary labels".into()));
        }
        let mut out = Vec::with_capacity(self.z_size);
        for z in 0..self.z_size {
            let mass = self.p_dz(d, z);
            if mass > 0.0 {
                out.push(self.p(d, 1, z) / mass);
            } else {
                out.push(0.5);
            }
        }
        Ok(out)
    }

    /// Exact mutual informations, each from its own formula (0 log 0 = 0).
    pub fn mi_decomposition(&self) -> MiDecomposition {
        let term = |joint: f64, a: f64, b: f64| -> f64 {
            if joint > 0.0 {
                joint * (joint / (a * b)).ln()
            } else {
                0.0
            }
        };

        let mut i_dz = 0.0;
        for d in 0..2 {
            let pd = self.p_d(d);
            for z in 0..self.z_size {
                i_dz += term(self.p_dz(d, z), pd, self.p_z(z));
            }
        }

        let mut i_d_yz = 0.0;
        for d in 0..2 {
            let pd = self.p_d(d);
            for y in 0..self.y_size {
                for z in 0..self.z_size {
                    i_d_yz += term(self.p(d, y, z), pd, self.p_yz(y, z));
                }
            }
        }

        // I(D; Y | Z) = sum_z p(z) * MI of (D, Y) under p(. , . | z)
        let mut i_dy_given_z = 0.0;
        for z in 0..self.z_size {
            let pz = self.p_z(z);
            if pz <= 0.0 {
                continue;
            }
            for d in 0..2 {
                let pdz = self.p_dz(d, z) / pz;
                for y in 0..self.y_size {
                    let pyz = self.p_yz(y, z) / pz;
                    let joint = self.p(d, y, z) / pz;
                    i_dy_given_z += pz * term(joint, pdz, pyz);
                }
            }
        }

        MiDecomposition { i_dz, i_dy_given_z, i_d_yz }
    }

    /// Exact risk of a binary hypothesis (indexed over feature cells) in a
    /// domain: E[|h(Z) - Y|].
    pub fn risk(&self, d: usize, h: &super::hypothesis::Hypothesis) -> Result<f64, BoundError> {
        if self.y_size != 2 {
            return Err(BoundError::BadInput("risk needs binary labels".into()));
        }
        let pd = self.p_d(d);
        if pd <= 0.0 {
            return Err(BoundError::BadInput(format!("domain {d} has zero mass")));
        }
        let mut total = 0.0;
        for z in 0..self.z_size {
            let hv = f64::from(h.eval_index(z));
            for y in 0..2 {
                total += self.p(d, y, z) * (hv - y as f64).abs();
            }
        }
        Ok(total / pd)
    }

    /// Noise level of one domain: E[|Y - f_d(Z)|] with f_d the conditional mean.
    pub fn noise(&self, d: usize) -> Result<f64, BoundError> {
        let f = self.conditional_mean(d)?;
        let pd = self.p_d(d);
        let mut total = 0.0;
        for z in 0..self.z_size {
            for y in 0..2 {
                total += self.p(d, y, z) * (y as f64 - f[z]).abs();
            }
        }
        Ok(total / pd)
    }

    /// min over domains of E_domain[|f_S(Z) - f_T(Z)|].
    pub fn disagreement(&self) -> Result<f64, BoundError> {
        let f_s = self.conditional_mean(0)?;
        let f_t = self.conditional_mean(1)?;
        let mut per_domain = [0.0, 0.0];
        for (d, out) in per_domain.iter_mut().enumerate() {
            let pz = self.z_given_d(d)?;
            *out = (0..self.z_size).map(|z| pz[z] * (f_s[z] - f_t[z]).abs()).sum();
        }
        Ok(per_domain[0].min(per_domain[1]))
    }
}

/// Exact two-sided evaluation of the risk-gap inequality for every
/// hypothesis in the class, straight from the probability table.
pub fn lemma_a2_check(
    joint: &DiscreteJoint,
    class: &FiniteHypothesisClass,
) -> Result<LemmaCheck, BoundError> {
    class.ensure_nonempty()?;
    let n_s = joint.noise(0)?;
    let n_t = joint.noise(1)?;
    let p_s = joint.z_given_d(0)?;
    let p_t = joint.z_given_d(1)?;
    let distance = dh_delta_h_discrete(class, &p_s, &p_t)?;
    let disagreement = joint.disagreement()?;
    let rhs = (n_s + n_t).abs() + distance + disagreement;

    let mut max_lhs: f64 = 0.0;
    for h in &class.hypotheses {
        let lhs = (joint.risk(0, h)? - joint.risk(1, h)?).abs();
        max_lhs = max_lhs.max(lhs);
    }
    let min_slack = rhs - max_lhs;
    Ok(LemmaCheck { max_lhs, rhs, min_slack, holds: min_slack >= -1e-9 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn independent_domain_has_zero_information() {
        // p(d, y, z) = p(d) p(y, z): all three informations vanish
        let mut w = Vec::new();
        let pyz = [0.1, 0.2, 0.3, 0.4];
        for d in [0.3, 0.7] {
            for v in pyz {
                w.push(d * v);
            }
        }
        let joint = DiscreteJoint::new(2, 2, w).unwrap();
        let mi = joint.mi_decomposition();
        assert!(mi.i_dz.abs() < 1e-14);
        assert!(mi.i_dy_given_z.abs() < 1e-14);
        assert!(mi.i_d_yz.abs() < 1e-14);
    }

    #[test]
    fn chain_rule_holds_on_random_joints() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        for _ in 0..200 {
            let y = rng.gen_range(2..5);
            let z = rng.gen_range(2..7);
            let joint = DiscreteJoint::random(&mut rng, y, z);
            let mi = joint.mi_decomposition();
            assert!((mi.i_d_yz - mi.i_dz - mi.i_dy_given_z).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_case_d_equals_y() {
        // D == Y, Z constant, uniform D: I(D; Y, Z) = ln 2, I(D; Z) = 0,
        // I(D; Y | Z) = ln 2
        let mut w = vec![0.0; 2 * 2 * 1];
        w[0] = 0.5; // d=0, y=0
        w[3] = 0.5; // d=1, y=1
        let joint = DiscreteJoint::new(2, 1, w).unwrap();
        let mi = joint.mi_decomposition();
        assert!((mi.i_d_yz - LN_2).abs() < 1e-14);
        assert!(mi.i_dz.abs() < 1e-14);
        assert!((mi.i_dy_given_z - LN_2).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(DiscreteJoint::new(2, 2, vec![0.5; 4]).is_err());
        assert!(DiscreteJoint::new(2, 2, vec![0.125; 8]).is_ok());
        // sums to 1 but has a negative entry
        let mut bad = vec![0.125; 8];
        bad[0] = -0.125;
        bad[1] = 0.375;
        assert!(DiscreteJoint::new(2, 2, bad).is_err());
    }

    #[test]
    fn lemma_holds_with_equal_domains() {
        // D_S == D_T: lhs is 0 for every h, rhs is the (nonnegative) noise
        let mut w = Vec::new();
        for _d in 0..2 {
            for y in 0..2 {
                for z in 0..3 {
                    w.push(0.05 + 0.1 * ((y + z) % 3) as f64);
                }
            }
        }
        let joint = DiscreteJoint::from_weights(2, 3, w).unwrap();
        let class = FiniteHypothesisClass::finite_stumps(3).unwrap();
        let check = lemma_a2_check(&joint, &class).unwrap();
        assert!(check.max_lhs.abs() < 1e-12);
        assert!(check.holds);
    }

    #[test]
    fn lemma_zero_noise_reduces_rhs_to_distance_terms() {
        // deterministic labels per (domain, cell): noise terms vanish
        let y_of = |d: usize, z: usize| (d + z) % 2;
        let mut w = vec![0.0; 2 * 2 * 4];
        for d in 0..2 {
            for z in 0..4 {
                let y = y_of(d, z);
                w[(d * 2 + y) * 4 + z] = 1.0 + (d + z) as f64 * 0.3;
            }
        }
        let joint = DiscreteJoint::from_weights(2, 4, w).unwrap();
        assert!(joint.noise(0).unwrap().abs() < 1e-14);
        assert!(joint.noise(1).unwrap().abs() < 1e-14);
        let class = FiniteHypothesisClass::finite_stumps(4).unwrap();
        let check = lemma_a2_check(&joint, &class).unwrap();
        let p_s = joint.z_given_d(0).unwrap();
        let p_t = joint.z_given_d(1).unwrap();
        let expected_rhs = dh_delta_h_discrete(&class, &p_s, &p_t).unwrap()
            + joint.disagreement().unwrap();
        assert!((check.rhs - expected_rhs).abs() < 1e-14);
        assert!(check.holds);
    }

    #[test]
    fn lemma_fuzz_small() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for i in 0..200 {
            let z = rng.gen_range(2..=10);
            let joint = DiscreteJoint::random(&mut rng, 2, z);
            let class = FiniteHypothesisClass::finite_stumps(z).unwrap();
            let check = lemma_a2_check(&joint, &class).unwrap();
            assert!(check.holds, "instance {i}: slack {}", check.min_slack);
        }
    }
}
