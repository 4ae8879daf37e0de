//! Deterministic synthetic fixture cases.
//!
//! Substitutes for proprietary deal data in offline runs. A planted feature
//! rule makes the ground truth recoverable by construction, so rule-based
//! oracle agents can hit 100% match rate and end-to-end tests have an exact
//! expected value.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{CandidateRecord, CasePool, FeatureKind, FeatureValue, Profile, TaskContext};
use crate::ingest::IngestError;

/// Which features (if any) are made to separate ground truth from the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlantedSignal {
    None,
    /// Ground-truth candidates receive strictly higher values of `feature`
    /// than every other candidate.
    FeatureRule {
        feature: String,
    },
}

/// Parameters for a synthetic case set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_cases: usize,
    pub candidates_per_case: (usize, usize),
    pub ground_truth_per_case: (usize, usize),
    pub seed: u64,
    pub planted_signal: PlantedSignal,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_cases: 10,
            candidates_per_case: (30, 40),
            ground_truth_per_case: (2, 5),
            seed: 0,
            planted_signal: PlantedSignal::FeatureRule {
                feature: "pair_tie_strength".to_string(),
            },
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), IngestError> {
        let (cmin, cmax) = self.candidates_per_case;
        let (gmin, gmax) = self.ground_truth_per_case;
        if self.num_cases == 0 {
            return Err(IngestError::BadSyntheticSpec(
                "num_cases must be >= 1".into(),
            ));
        }
        if cmin < 3 {
            return Err(IngestError::BadSyntheticSpec(
                "candidates_per_case min must be >= 3".into(),
            ));
        }
        if cmin > cmax || gmin > gmax {
            return Err(IngestError::BadSyntheticSpec("empty range".into()));
        }
        if gmax >= cmin {
            return Err(IngestError::BadSyntheticSpec(
                "ground_truth_per_case max must be < candidates_per_case min".into(),
            ));
        }
        Ok(())
    }
}

const FIRM_TYPES: &[&str] = &[
    "Private Equity Firm",
    "Venture Capital Firm",
    "Corporate VC",
    "Angel Group",
];
const STATES: &[&str] = &["CA", "NY", "MA", "TX", "WA", "IL", "CO", "PA"];
const INDUSTRIES: &[&str] = &[
    "High Tech",
    "Software",
    "Biotech",
    "Consumer",
    "Fintech",
    "Energy",
    "Medical Devices",
];
const STAGES: &[&str] = &["Seed Stage", "Early Stage", "Balanced Stage", "Later Stage"];

fn numeric(v: f64) -> FeatureValue {
    // Round to 3 decimals so the canonical file stays compact.
    FeatureValue::Numeric((v * 1000.0).round() / 1000.0)
}

/// Candidate feature schema every synthetic pool shares.
pub fn synthetic_schema() -> Vec<(String, FeatureKind)> {
    vec![
        ("firmtype".into(), FeatureKind::Categorical),
        ("firmstate".into(), FeatureKind::Categorical),
        ("firmindustrypreference".into(), FeatureKind::Text),
        ("firminvestmentstagepreference".into(), FeatureKind::Text),
        ("vcfirm_dealcount_20qtr".into(), FeatureKind::Numeric),
        ("vcfirm_IPOcount_cum".into(), FeatureKind::Numeric),
        ("boncent".into(), FeatureKind::Numeric),
        ("degree".into(), FeatureKind::Numeric),
        ("pair_tie_strength".into(), FeatureKind::Numeric),
        ("uslat_vc".into(), FeatureKind::Numeric),
        ("uslng_vc".into(), FeatureKind::Numeric),
    ]
}

/// Generates `spec.num_cases` pools, deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<CasePool>, IngestError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let schema = synthetic_schema();
    let mut pools = Vec::with_capacity(spec.num_cases);

    for case_idx in 0..spec.num_cases {
        let case_id = format!("case_{:04}", case_idx + 1);
        let m = rng.gen_range(spec.candidates_per_case.0..=spec.candidates_per_case.1);
        let truth_n = rng.gen_range(spec.ground_truth_per_case.0..=spec.ground_truth_per_case.1);

        let year = rng.gen_range(2005..=2023);
        let quarter = rng.gen_range(1..=4);
        let industry = *INDUSTRIES.choose(&mut rng).expect("non-empty");
        let state = *STATES.choose(&mut rng).expect("non-empty");

        let mut target_profile = Profile::new();
        target_profile.insert("year".into(), FeatureValue::Numeric(f64::from(year)));
        target_profile.insert(
            "companyindustrymajorgroup".into(),
            FeatureValue::Categorical(industry.to_string()),
        );
        target_profile.insert(
            "companystate".into(),
            FeatureValue::Categorical(state.to_string()),
        );
        target_profile.insert("companylat".into(), numeric(rng.gen_range(25.0..49.0)));
        target_profile.insert("companylng".into(), numeric(rng.gen_range(-124.0..-67.0)));

        let lead_id = format!("vc_{case_id}_lead");
        let mut lead_profile = Profile::new();
        lead_profile.insert("leadvc".into(), FeatureValue::Identifier(lead_id.clone()));
        lead_profile.insert(
            "firmtype".into(),
            FeatureValue::Categorical(FIRM_TYPES.choose(&mut rng).expect("non-empty").to_string()),
        );
        lead_profile.insert(
            "firmstate".into(),
            FeatureValue::Categorical(STATES.choose(&mut rng).expect("non-empty").to_string()),
        );
        lead_profile.insert(
            "firmindustrypreference".into(),
            FeatureValue::Text(industry.to_string()),
        );
        lead_profile.insert(
            "vcfirm_dealcount_20qtr".into(),
            numeric(rng.gen_range(5.0..120.0)),
        );

        let mut truth_positions: Vec<usize> = (0..m).collect();
        truth_positions.shuffle(&mut rng);
        truth_positions.truncate(truth_n);
        truth_positions.sort_unstable();

        let mut candidates = Vec::with_capacity(m);
        for j in 0..m {
            let firm_id = format!("vc_{case_id}_{j:03}");
            let is_truth = truth_positions.contains(&j);
            let mut features = Profile::new();
            features.insert(
                "firmtype".into(),
                FeatureValue::Categorical(
                    FIRM_TYPES.choose(&mut rng).expect("non-empty").to_string(),
                ),
            );
            // Some state fields are genuinely unavailable.
            features.insert(
                "firmstate".into(),
                if rng.gen_bool(0.1) {
                    FeatureValue::Missing
                } else {
                    FeatureValue::Categorical(
                        STATES.choose(&mut rng).expect("non-empty").to_string(),
                    )
                },
            );
            features.insert(
                "firmindustrypreference".into(),
                FeatureValue::Text(INDUSTRIES.choose(&mut rng).expect("non-empty").to_string()),
            );
            features.insert(
                "firminvestmentstagepreference".into(),
                FeatureValue::Text(STAGES.choose(&mut rng).expect("non-empty").to_string()),
            );
            features.insert(
                "vcfirm_dealcount_20qtr".into(),
                numeric(rng.gen_range(0.0..150.0)),
            );
            features.insert(
                "vcfirm_IPOcount_cum".into(),
                numeric(rng.gen_range(0.0..40.0)),
            );
            features.insert("boncent".into(), numeric(rng.gen_range(0.0..1.0)));
            features.insert("degree".into(), numeric(rng.gen_range(0.0..200.0)));
            let tie = match &spec.planted_signal {
                PlantedSignal::FeatureRule { feature } if feature == "pair_tie_strength" => {
                    planted_value(&mut rng, is_truth)
                }
                _ => numeric(rng.gen_range(0.0..4.0)),
            };
            features.insert("pair_tie_strength".into(), tie);
            features.insert("uslat_vc".into(), numeric(rng.gen_range(25.0..49.0)));
            features.insert("uslng_vc".into(), numeric(rng.gen_range(-124.0..-67.0)));

            // Planted rules on any other declared feature override the draw.
            if let PlantedSignal::FeatureRule { feature } = &spec.planted_signal {
                if feature != "pair_tie_strength" {
                    features.insert(feature.clone(), planted_value(&mut rng, is_truth));
                }
            }

            candidates.push(CandidateRecord {
                firm_id,
                features,
                is_ground_truth: is_truth,
            });
        }

        let mut schema = schema.clone();
        if let PlantedSignal::FeatureRule { feature } = &spec.planted_signal {
            if !schema.iter().any(|(n, _)| n == feature) {
                schema.push((feature.clone(), FeatureKind::Numeric));
            }
        }

        let context = TaskContext::new(
            case_id,
            lead_profile,
            target_profile,
            format!("{year}Q{quarter}"),
        )?;
        pools.push(CasePool::new(context, candidates, schema, Some(truth_n))?);
    }
    Ok(pools)
}

fn planted_value(rng: &mut ChaCha8Rng, is_truth: bool) -> FeatureValue {
    if is_truth {
        numeric(rng.gen_range(5.0..10.0))
    } else {
        numeric(rng.gen_range(0.0..4.0))
    }
}

/// Ranks the pool's firms by a single numeric feature, descending, missing
/// values last, ties broken by firm id. This is the rule a planted-signal
/// oracle applies.
pub fn rank_by_feature(pool: &CasePool, feature: &str) -> Vec<String> {
    let mut scored: Vec<(&str, Option<f64>)> = pool
        .candidates
        .iter()
        .map(|c| {
            (
                c.firm_id.as_str(),
                c.features.get(feature).and_then(FeatureValue::as_numeric),
            )
        })
        .collect();
    scored.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => y.partial_cmp(&x).unwrap().then_with(|| a.0.cmp(b.0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.0.cmp(b.0),
    });
    scored.into_iter().map(|(id, _)| id.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::save_cases_csv;

    #[test]
    fn same_seed_is_byte_identical() {
        let spec = SyntheticSpec {
            num_cases: 5,
            seed: 7,
            ..SyntheticSpec::default()
        };
        let a = save_cases_csv(&generate_synthetic(&spec).unwrap()).unwrap();
        let b = save_cases_csv(&generate_synthetic(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn case_count_and_pool_sizes_respect_spec() {
        let spec = SyntheticSpec {
            num_cases: 140,
            candidates_per_case: (30, 40),
            ..SyntheticSpec::default()
        };
        let pools = generate_synthetic(&spec).unwrap();
        assert_eq!(pools.len(), 140);
        for pool in &pools {
            assert!((30..=40).contains(&pool.size()), "m={}", pool.size());
            assert_eq!(pool.declared_real_size, Some(pool.ground_truth.len()));
        }
    }

    #[test]
    fn planted_rule_oracle_recovers_ground_truth_exactly() {
        let spec = SyntheticSpec {
            num_cases: 25,
            seed: 13,
            ..SyntheticSpec::default()
        };
        let pools = generate_synthetic(&spec).unwrap();
        for pool in &pools {
            let ranking = rank_by_feature(pool, "pair_tie_strength");
            let top: std::collections::BTreeSet<String> = ranking
                .iter()
                .take(pool.ground_truth.len())
                .cloned()
                .collect();
            assert_eq!(top, pool.ground_truth, "case {}", pool.case_id());
        }
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let bad = SyntheticSpec {
            candidates_per_case: (4, 6),
            ground_truth_per_case: (4, 4),
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&bad).is_err());
        let bad = SyntheticSpec {
            candidates_per_case: (2, 6),
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&bad).is_err());
    }

    #[test]
    fn synthetic_pools_survive_canonical_round_trip() {
        let spec = SyntheticSpec {
            num_cases: 4,
            seed: 21,
            ..SyntheticSpec::default()
        };
        let pools = generate_synthetic(&spec).unwrap();
        let text = save_cases_csv(&pools).unwrap();
        let reloaded = crate::ingest::load_delimited_from_reader(text.as_bytes()).unwrap();
        assert_eq!(pools, reloaded.pools);
    }
}
