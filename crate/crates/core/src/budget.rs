//! Photon-collection efficiency chain and heralded entanglement rates.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Measured,
    Computed,
    Assumed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyFactor {
    pub name: String,
    pub value: f64,
    #[serde(default)]
    pub relative_uncertainty: f64,
    pub provenance: Provenance,
}

impl EfficiencyFactor {
    pub fn new(name: impl Into<String>, value: f64, relative_uncertainty: f64, provenance: Provenance) -> Result<Self> {
        let f = EfficiencyFactor {
            name: name.into(),
            value,
            relative_uncertainty,
            provenance,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        ensure((0.0..=1.0).contains(&self.value), || {
            format!("factor `{}` = {} outside [0, 1]", self.name, self.value)
        })?;
        ensure(self.relative_uncertainty >= 0.0 && self.relative_uncertainty.is_finite(), || {
            format!("factor `{}` has negative uncertainty", self.name)
        })
    }
}

/// Fraction of the full sphere inside a cone of half-angle asin(na).
pub fn solid_angle_fraction(na: f64) -> Result<f64> {
    ensure((0.0..=1.0).contains(&na), || format!("NA {na} outside [0, 1]"))?;
    Ok(0.5 * (1.0 - (1.0 - na * na).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainResult {
    pub value: f64,
    pub uncertainty: f64,
    pub relative_uncertainty: f64,
}

/// Product of the factors with relative uncertainties added in quadrature.
pub fn chain(factors: &[EfficiencyFactor]) -> Result<ChainResult> {
    if factors.is_empty() {
        return Err(Error::InvalidParameter("empty efficiency chain".into()));
    }
    for f in factors {
        f.validate()?;
    }
    let value: f64 = factors.iter().map(|f| f.value).product();
    let rel = factors.iter().map(|f| f.relative_uncertainty.powi(2)).sum::<f64>().sqrt();
    Ok(ChainResult {
        value,
        uncertainty: value * rel,
        relative_uncertainty: rel,
    })
}

/// Total from two independently collecting sides.
pub fn total_two_sided(a: f64, b: f64) -> Result<f64> {
    ensure((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b), || "side fractions must lie in [0, 1]".into())?;
    let s = a + b;
    ensure(s <= 1.0, || format!("two-sided total {s} exceeds 1"))?;
    Ok(s)
}

/// Two-sided total with absolute uncertainties added in quadrature.
pub fn total_two_sided_with_uncertainty(a: ChainResult, b: ChainResult) -> Result<ChainResult> {
    let value = total_two_sided(a.value, b.value)?;
    let u = a.uncertainty.hypot(b.uncertainty);
    Ok(ChainResult {
        value,
        uncertainty: u,
        relative_uncertainty: if value > 0.0 { u / value } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub per_attempt_success: f64,
    /// attempts per second
    pub attempt_rate: f64,
    /// collection directions feeding the link, 1 or 2
    pub directions_per_node: u32,
}

impl RateModel {
    pub fn validate(&self) -> Result<()> {
        ensure((0.0..=1.0).contains(&self.per_attempt_success), || {
            format!("success probability {} outside [0, 1]", self.per_attempt_success)
        })?;
        ensure(self.attempt_rate > 0.0 && self.attempt_rate.is_finite(), || "attempt rate must be positive".into())?;
        ensure(matches!(self.directions_per_node, 1 | 2), || "directions per node must be 1 or 2".into())
    }
}

pub fn entanglement_rate(model: &RateModel) -> Result<f64> {
    model.validate()?;
    Ok(model.per_attempt_success * model.attempt_rate * model.directions_per_node as f64)
}

/// Attempt rate implied by an observed entanglement rate and success
/// probability.
pub fn implied_attempt_rate(rate: f64, per_attempt_success: f64) -> Result<f64> {
    ensure(per_attempt_success > 0.0 && rate >= 0.0, || "success probability must be positive".into())?;
    Ok(rate / per_attempt_success)
}

pub fn rate_ratio(new: &RateModel, baseline: &RateModel) -> Result<f64> {
    let b = entanglement_rate(baseline)?;
    if b == 0.0 {
        return Err(Error::InvalidParameter("baseline rate is zero".into()));
    }
    Ok(entanglement_rate(new)? / b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// Both collection directions of each node feed the same link.
    TwoNode,
    /// Each direction links to a different neighbour.
    ThreeNode,
}

/// Assumption set for comparing a new collection system against a
/// reference link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub version: u32,
    /// Set when the assumption set is not stated by the source and was
    /// reconstructed to reach a quoted figure.
    pub reconstructed: bool,
    pub topology: Topology,
    pub baseline_success: f64,
    pub baseline_rate: f64,
    /// Per-node collection efficiency of the reference system (assumed).
    pub baseline_collection: f64,
    pub baseline_directions: u32,
    /// Factors held equal between both systems; listed for audit only.
    #[serde(default)]
    pub common_factors: Vec<EfficiencyFactor>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub attempt_rate: f64,
    pub baseline: RateModel,
    pub new: RateModel,
    /// (new collection / baseline collection)^2
    pub collection_factor: f64,
    pub direction_factor: f64,
    pub rate_ratio: f64,
    pub new_rate: f64,
}

/// Two-photon heralding scales with the product of both nodes'
/// collection efficiencies; attempt rate and every other factor are held.
pub fn evaluate_scenario(s: &Scenario, new_collection: f64) -> Result<ScenarioOutcome> {
    ensure(s.baseline_collection > 0.0 && s.baseline_collection <= 1.0, || {
        "baseline collection must lie in (0, 1]".into()
    })?;
    ensure((0.0..=1.0).contains(&new_collection), || "new collection must lie in [0, 1]".into())?;
    for f in &s.common_factors {
        f.validate()?;
    }
    let attempt_rate = implied_attempt_rate(s.baseline_rate, s.baseline_success)?;
    let baseline = RateModel {
        per_attempt_success: s.baseline_success,
        attempt_rate,
        directions_per_node: s.baseline_directions,
    };
    let collection_factor = (new_collection / s.baseline_collection).powi(2);
    let p_new = s.baseline_success * collection_factor;
    let directions = match s.topology {
        Topology::TwoNode => 2,
        Topology::ThreeNode => 1,
    };
    let new = RateModel {
        per_attempt_success: p_new.min(1.0),
        attempt_rate,
        directions_per_node: directions,
    };
    let ratio = rate_ratio(&new, &baseline)?;
    Ok(ScenarioOutcome {
        attempt_rate,
        baseline,
        new,
        collection_factor,
        direction_factor: directions as f64 / s.baseline_directions as f64,
        rate_ratio: ratio,
        new_rate: entanglement_rate(&new)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn measured_chain() -> Vec<EfficiencyFactor> {
        vec![
            EfficiencyFactor::new("solid angle", solid_angle_fraction(0.8).unwrap(), 0.0, Provenance::Computed).unwrap(),
            EfficiencyFactor::new("asphere transmission", 0.91, 3.0 / 91.0, Provenance::Measured).unwrap(),
            EfficiencyFactor::new("rod transmission", 0.97, 1.0 / 97.0, Provenance::Measured).unwrap(),
            EfficiencyFactor::new("fiber coupling", 0.30, 0.1, Provenance::Measured).unwrap(),
        ]
    }

    #[test]
    fn solid_angle() {
        assert!((solid_angle_fraction(0.8).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(solid_angle_fraction(0.0).unwrap(), 0.0);
        assert_eq!(solid_angle_fraction(1.0).unwrap(), 0.5);
        // (1 - sqrt(1 - 0.0676)) / 2
        assert!((solid_angle_fraction(0.26).unwrap() - 0.017_195_691_817_067_5).abs() < 1e-15);
        assert!(solid_angle_fraction(1.1).is_err());
    }

    #[test]
    fn measured_chain_value() {
        let c = chain(&measured_chain()).unwrap();
        assert!((c.value - 0.20 * 0.91 * 0.97 * 0.30).abs() < 1e-15);
        // quadrature oracle
        let rel = ((3.0f64 / 91.0).powi(2) + (1.0f64 / 97.0).powi(2) + 0.01).sqrt();
        assert!((c.uncertainty - c.value * rel).abs() < 1e-15);
        assert!((c.uncertainty / 0.005 - 1.0).abs() < 0.15);
        let total = total_two_sided_with_uncertainty(c, c).unwrap();
        assert!((total.value - 0.105_924).abs() < 1e-9);
    }

    #[test]
    fn chain_edges() {
        let one = chain(&measured_chain()[1..2]).unwrap();
        assert_eq!(one.value, 0.91);
        let mut z = measured_chain();
        z[2].value = 0.0;
        assert_eq!(chain(&z).unwrap().value, 0.0);
        assert!(chain(&[]).is_err());
    }

    #[test]
    fn two_sided() {
        assert_eq!(total_two_sided(0.0, 0.053).unwrap(), 0.053);
        assert_eq!(total_two_sided(0.05, 0.06).unwrap(), total_two_sided(0.06, 0.05).unwrap());
        assert!(total_two_sided(0.6, 0.5).is_err());
    }

    #[test]
    fn rates() {
        let r = implied_attempt_rate(182.0, 2.18e-4).unwrap();
        assert!((r / 8.35e5 - 1.0).abs() < 5e-3);
        let m = RateModel { per_attempt_success: 2.18e-4, attempt_rate: r, directions_per_node: 1 };
        assert!((entanglement_rate(&m).unwrap() - 182.0).abs() < 1e-9);
        let zero = RateModel { per_attempt_success: 0.0, ..m };
        assert_eq!(entanglement_rate(&zero).unwrap(), 0.0);
        let fast = RateModel { attempt_rate: 2.0 * r, ..m };
        assert!((entanglement_rate(&fast).unwrap() - 364.0).abs() < 1e-9);
        assert_eq!(rate_ratio(&m, &m).unwrap(), 1.0);
        let k = RateModel { per_attempt_success: 3.0 * 2.18e-4, ..m };
        assert!((rate_ratio(&k, &m).unwrap() - 3.0).abs() < 1e-12);
        assert!(rate_ratio(&m, &zero).is_err());
    }

    #[test]
    fn scenario_decomposition() {
        let s = Scenario {
            name: "test".into(),
            version: 1,
            reconstructed: true,
            topology: Topology::TwoNode,
            baseline_success: 2.18e-4,
            baseline_rate: 182.0,
            baseline_collection: 0.04,
            baseline_directions: 1,
            common_factors: vec![],
            notes: vec![],
        };
        let o = evaluate_scenario(&s, 0.052969).unwrap();
        assert!((o.rate_ratio - o.collection_factor * o.direction_factor).abs() < 1e-12);
        assert!((o.rate_ratio - 2.0 * (0.052969f64 / 0.04).powi(2)).abs() < 1e-12);
        let three = Scenario { topology: Topology::ThreeNode, ..s };
        let o3 = evaluate_scenario(&three, 0.052969).unwrap();
        assert!((o3.rate_ratio - o.rate_ratio / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn chain_order_invariant(vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..0.3), 1..8), seed in 0usize..100) {
            let f: Vec<EfficiencyFactor> = vals.iter().enumerate()
                .map(|(i, (v, u))| EfficiencyFactor::new(format!("f{i}"), *v, *u, Provenance::Assumed).unwrap())
                .collect();
            let a = chain(&f).unwrap();
            let mut g = f.clone();
            g.rotate_left(seed % f.len());
            let b = chain(&g).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-15 * a.value.max(1e-300));
            prop_assert!((a.relative_uncertainty - b.relative_uncertainty).abs() < 1e-15);
            let max_in = vals.iter().map(|p| p.1).fold(0.0, f64::max);
            prop_assert!(a.relative_uncertainty >= max_in - 1e-15);
            // grouping: chain of a sub-chain result
            if f.len() > 1 {
                let head = chain(&f[..1]).unwrap();
                let tail = chain(&f[1..]).unwrap();
                let grouped = chain(&[
                    EfficiencyFactor::new("h", head.value, head.relative_uncertainty, Provenance::Computed).unwrap(),
                    EfficiencyFactor::new("t", tail.value, tail.relative_uncertainty, Provenance::Computed).unwrap(),
                ]).unwrap();
                prop_assert!((grouped.value - a.value).abs() <= 1e-15);
                prop_assert!((grouped.relative_uncertainty - a.relative_uncertainty).abs() < 1e-14);
            }
        }

        #[test]
        fn solid_angle_increasing(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assume!(a < b);
            prop_assert!(solid_angle_fraction(a).unwrap() < solid_angle_fraction(b).unwrap());
        }
    }
}
