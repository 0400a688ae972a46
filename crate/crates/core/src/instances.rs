//! Named instances and a seeded random instance generator.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{NoiseFamily, ProblemInstance};
use crate::condition::{check_assumption1, check_assumption3, check_assumption4, constants, find_ordering_witness};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Properties an entry is known to have; `None` means not pinned.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExpectedProperties {
    pub eps_approx: Option<f64>,
    pub witness: Option<bool>,
    pub k3_condition_value: Option<f64>,
    pub assumption4: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub id: &'static str,
    pub description: &'static str,
    pub instance: ProblemInstance<f64>,
    pub expected: ExpectedProperties,
}

fn entry(
    id: &'static str,
    description: &'static str,
    columns: &[Vec<f64>],
    rewards: &[f64],
    expected: ExpectedProperties,
) -> RegistryEntry {
    let x = Matrix::from_columns(columns).expect("registry matrices are rectangular");
    let r_max = rewards.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let instance = ProblemInstance::new_strict(x, rewards.to_vec(), r_max, None).expect("registry instance is valid");
    RegistryEntry { id, description, instance, expected }
}

/// All named instances.
pub fn registry() -> Vec<RegistryEntry> {
    vec![
        entry(
            "example-1",
            "four arms; features preserve the reward order",
            &[vec![0.0, -1.0, 0.0, 2.0], vec![-2.0, 0.0, 1.0, 0.0]],
            &[9.0, 8.0, 7.0, 6.0],
            ExpectedProperties {
                eps_approx: Some(202.6_f64.sqrt()),
                witness: Some(true),
                assumption4: Some(true),
                ..Default::default()
            },
        ),
        entry(
            "example-2",
            "example-1 with two feature entries swapped; no order-preserving direction",
            &[vec![0.0, 0.0, -1.0, 2.0], vec![-2.0, 1.0, 0.0, 0.0]],
            &[9.0, 8.0, 7.0, 6.0],
            ExpectedProperties { eps_approx: Some(205.0_f64.sqrt()), witness: Some(false), ..Default::default() },
        ),
        entry(
            "example-3",
            "three arms satisfying the K = 3 condition",
            &[vec![0.0, -0.3, 1.0], vec![-1.0, 0.6, 0.0]],
            &[1.0, 0.5, 0.0],
            ExpectedProperties { witness: Some(true), k3_condition_value: Some(0.7), ..Default::default() },
        ),
        entry(
            "example-4",
            "three arms with an order-preserving direction but a negative K = 3 value",
            &[vec![0.0, 0.6, 1.0], vec![-1.0, 0.6, 0.0]],
            &[1.0, 0.5, 0.0],
            ExpectedProperties {
                witness: Some(true),
                k3_condition_value: Some(-0.2),
                assumption4: Some(false),
                ..Default::default()
            },
        ),
        entry(
            "prop-3",
            "three arms with positive K = 3 value but no order-preserving direction",
            &[vec![3.0, 5.0, 1.0], vec![4.0, 6.0, 2.0]],
            &[3.0, 2.0, 1.0],
            ExpectedProperties {
                witness: Some(false),
                k3_condition_value: Some(16.0),
                assumption4: Some(false),
                ..Default::default()
            },
        ),
        entry(
            "tabular-3",
            "three arms with one-hot features",
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            &[1.0, 0.5, 0.0],
            ExpectedProperties {
                eps_approx: Some(0.0),
                witness: Some(true),
                k3_condition_value: Some(1.0),
                assumption4: Some(true),
            },
        ),
    ]
}

pub fn registry_ids() -> Vec<&'static str> {
    registry().into_iter().map(|e| e.id).collect()
}

/// Instance for a registry id.
pub fn lookup(id: &str) -> Result<ProblemInstance<f64>> {
    registry()
        .into_iter()
        .find(|e| e.id == id)
        .map(|e| e.instance)
        .ok_or_else(|| Error::UnknownInstance(id.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Assumption {
    A1,
    A2,
    A3,
    A4,
}

impl std::str::FromStr for Assumption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A1" | "1" => Ok(Assumption::A1),
            "A2" | "2" => Ok(Assumption::A2),
            "A3" | "3" => Ok(Assumption::A3),
            "A4" | "4" => Ok(Assumption::A4),
            other => Err(Error::InvalidConfig(format!("unknown assumption `{other}`"))),
        }
    }
}

/// How candidate feature matrices are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureFamily {
    /// Ordered family when A2 or A4 is required, uniform otherwise.
    #[default]
    Auto,
    /// Every entry uniform on the feature range.
    Uniform,
    /// Columns that are non-increasing in reward rank, shifted by a random
    /// offset around their mean, then rotated by a random orthogonal matrix.
    Ordered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub require: BTreeSet<Assumption>,
    pub reward_range: (f64, f64),
    pub feature_range: (f64, f64),
    pub min_gap: f64,
    pub max_rejections: usize,
    pub seed: u64,
    #[serde(default)]
    pub family: FeatureFamily,
    /// Extra acceptance filter on the Gram condition number.
    #[serde(default)]
    pub max_kappa: Option<f64>,
    #[serde(default)]
    pub noise: Option<NoiseFamily>,
}

impl GeneratorSpec {
    pub fn new(k: usize, d: usize, require: &[Assumption], seed: u64) -> Self {
        Self {
            k,
            d,
            require: require.iter().copied().collect(),
            reward_range: (0.0, 1.0),
            feature_range: (-1.0, 1.0),
            min_gap: 0.05,
            max_rejections: 10_000,
            seed,
            family: FeatureFamily::Auto,
            max_kappa: None,
            noise: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k < 2 || self.d < 1 || self.d > self.k {
            return bad(format!("need K >= 2 and 1 <= d <= K, got K={}, d={}", self.k, self.d));
        }
        let (lo, hi) = self.reward_range;
        let (flo, fhi) = self.feature_range;
        if !(lo < hi && flo < fhi) || ![lo, hi, flo, fhi].iter().all(|v| v.is_finite()) {
            return bad("ranges must be finite with low < high".into());
        }
        if !(self.min_gap >= 0.0) || self.min_gap * (self.k - 1) as f64 > hi - lo {
            return bad(format!("cannot fit {} rewards {} apart in [{lo}, {hi}]", self.k, self.min_gap));
        }
        if self.require.contains(&Assumption::A3) && self.k != 3 {
            return bad("A3 can only be required when K = 3".into());
        }
        if self.max_rejections == 0 {
            return bad("max_rejections must be positive".into());
        }
        Ok(())
    }

    fn family(&self) -> FeatureFamily {
        match self.family {
            FeatureFamily::Auto
                if self.require.contains(&Assumption::A2) || self.require.contains(&Assumption::A4) =>
            {
                FeatureFamily::Ordered
            }
            FeatureFamily::Auto => FeatureFamily::Uniform,
            f => f,
        }
    }
}

/// Descending rewards with consecutive gaps of at least `gap`, inside `[lo, hi]`.
fn draw_rewards(rng: &mut ChaCha8Rng, k: usize, (lo, hi): (f64, f64), gap: f64) -> Vec<f64> {
    let mut r: Vec<f64> = (0..k).map(|_| rng.random_range(lo..=hi)).collect();
    r.sort_by(|a, b| b.total_cmp(a));
    for i in 1..k {
        r[i] = r[i].min(r[i - 1] - gap);
    }
    r[k - 1] = r[k - 1].max(lo);
    for i in (0..k - 1).rev() {
        r[i] = r[i].max(r[i + 1] + gap);
    }
    r
}

fn uniform_features(rng: &mut ChaCha8Rng, k: usize, d: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    (0..k * d).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Random `d x d` orthogonal matrix by Gram-Schmidt on uniform columns.
fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    loop {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-3 {
                break;
            }
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
        if basis.len() == d {
            return basis;
        }
    }
}

/// Rows are in descending reward order, which the rewards already follow.
fn ordered_features(rng: &mut ChaCha8Rng, k: usize, d: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for c in 0..d {
        let mut col = vec![0.0; k];
        for a in (0..k - 1).rev() {
            let step = rng.random_range(0.0..1.0);
            let step = if c == 0 { 0.1 + step } else { step * step };
            col[a] = col[a + 1] + step;
        }
        let mean = col.iter().sum::<f64>() / k as f64;
        let spread = col[0] - col[k - 1];
        let offset = rng.random_range(-0.5..0.5) * spread;
        col.iter_mut().for_each(|v| *v += offset - mean);
        cols.push(col);
    }
    let rot = random_rotation(rng, d);
    let mut x = vec![0.0; k * d];
    for a in 0..k {
        for j in 0..d {
            x[a * d + j] = (0..d).map(|c| cols[c][a] * rot[c][j]).sum();
        }
    }
    let half = 0.5 * (hi - lo);
    let centre = 0.5 * (hi + lo);
    let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { half / peak } else { 1.0 };
    x.iter().map(|v| centre + v * scale).collect()
}

fn accepts(spec: &GeneratorSpec, inst: &ProblemInstance<f64>) -> Result<bool> {
    let Ok(c) = constants(inst) else { return Ok(false) };
    if spec.max_kappa.is_some_and(|m| c.kappa > m) {
        return Ok(false);
    }
    if !check_assumption1(inst) {
        return Ok(false);
    }
    for a in &spec.require {
        let ok = match a {
            Assumption::A1 => true,
            Assumption::A2 => find_ordering_witness(inst)?.is_some(),
            Assumption::A3 => check_assumption3(inst)? > crate::linalg::TOLERANCES.inner_product_sign,
            Assumption::A4 => check_assumption4(inst)?.0,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Draws instances until one passes every required check.
pub fn generate(spec: &GeneratorSpec) -> Result<ProblemInstance<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r_max = spec.reward_range.0.abs().max(spec.reward_range.1.abs());
    let family = spec.family();
    for _ in 0..spec.max_rejections {
        let rewards = draw_rewards(&mut rng, spec.k, spec.reward_range, spec.min_gap);
        let data = match family {
            FeatureFamily::Ordered => ordered_features(&mut rng, spec.k, spec.d, spec.feature_range),
            _ => uniform_features(&mut rng, spec.k, spec.d, spec.feature_range),
        };
        let x = Matrix::new(spec.k, spec.d, data)?;
        let Ok(inst) = ProblemInstance::new(x, rewards, r_max, spec.noise) else { continue };
        if accepts(spec, &inst)? {
            return Ok(inst);
        }
    }
    Err(Error::GenerationFailed { attempts: spec.max_rejections, acceptance_rate: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::analyze;

    #[test]
    fn registry_has_six_unique_entries() {
        let ids = registry_ids();
        assert_eq!(ids.len(), 6);
        assert_eq!(ids.iter().collect::<BTreeSet<_>>().len(), 6);
        assert!(matches!(lookup("nope"), Err(Error::UnknownInstance(_))));
    }

    #[test]
    fn registry_matrices_are_verbatim() {
        let e1 = lookup("example-1").unwrap();
        assert_eq!(e1.features().transpose().as_slice(), &[0.0, -1.0, 0.0, 2.0, -2.0, 0.0, 1.0, 0.0]);
        assert_eq!(e1.rewards(), &[9.0, 8.0, 7.0, 6.0]);
        let e4 = lookup("example-4").unwrap();
        assert_eq!(e4.features().transpose().as_slice(), &[0.0, 0.6, 1.0, -1.0, 0.6, 0.0]);
        let p3 = lookup("prop-3").unwrap();
        assert_eq!(p3.features().transpose().as_slice(), &[3.0, 5.0, 1.0, 4.0, 6.0, 2.0]);
        assert_eq!(p3.rewards(), &[3.0, 2.0, 1.0]);
        assert_eq!(p3.reward_bound(), 3.0);
    }

    #[test]
    fn registry_round_trips_through_the_analyzer() {
        for e in registry() {
            let rep = analyze(&e.instance).unwrap();
            let x = e.expected;
            if let Some(eps) = x.eps_approx {
                assert!((rep.eps_approx - eps).abs() < 1e-9, "{}: {}", e.id, rep.eps_approx);
            }
            if let Some(w) = x.witness {
                assert_eq!(rep.assumption2, w, "{}", e.id);
            }
            if let Some(v) = x.k3_condition_value {
                assert!((rep.k3_condition_value.unwrap() - v).abs() < 1e-12, "{}", e.id);
            }
            if let Some(a4) = x.assumption4 {
                assert_eq!(rep.assumption4, a4, "{}", e.id);
            }
        }
    }

    #[test]
    fn rewards_are_regapped_into_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let r = draw_rewards(&mut rng, 6, (0.0, 1.0), 0.15);
            assert!(r.windows(2).all(|w| w[0] - w[1] >= 0.15 - 1e-12), "{r:?}");
            assert!(r.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)), "{r:?}");
        }
    }

    #[test]
    fn generated_instances_meet_their_requirements() {
        let spec = GeneratorSpec::new(3, 2, &[Assumption::A1, Assumption::A2, Assumption::A3], 4);
        let inst = generate(&spec).unwrap();
        assert!(check_assumption3(&inst).unwrap() > 0.0);
        assert!(find_ordering_witness(&inst).unwrap().is_some());

        let spec = GeneratorSpec::new(6, 3, &[Assumption::A1, Assumption::A4], 9);
        let inst = generate(&spec).unwrap();
        assert!(check_assumption4(&inst).unwrap().0);
        assert_eq!((inst.num_actions(), inst.dim()), (6, 3));
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = GeneratorSpec::new(5, 3, &[Assumption::A1, Assumption::A2, Assumption::A4], 77);
        assert_eq!(generate(&spec).unwrap().to_json(), generate(&spec).unwrap().to_json());
        let other = GeneratorSpec { seed: 78, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().to_json(), generate(&other).unwrap().to_json());
    }

    #[test]
    fn impossible_specs_fail_cleanly() {
        let mut spec = GeneratorSpec::new(3, 1, &[Assumption::A1, Assumption::A3], 1);
        spec.family = FeatureFamily::Uniform;
        spec.feature_range = (0.0, 1e-300);
        spec.max_rejections = 20;
        assert!(matches!(generate(&spec), Err(Error::GenerationFailed { attempts: 20, .. })));
        assert!(GeneratorSpec::new(4, 2, &[Assumption::A3], 0).validate().is_err());
        assert!(GeneratorSpec::new(2, 3, &[], 0).validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = GeneratorSpec::new(6, 3, &[Assumption::A1, Assumption::A4], 3);
        let back: GeneratorSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
