use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::question::fill;
use super::{base_query, genqueries, sub_seed, tuple_key, Draft, GenConfig, HopGold, QaGenError, Skip, TemplateConfig};
use crate::interval::{AllenRelation, QueryRelation, ReferenceInterval, SampleMode, SamplerConfig};
use crate::sql::{print_sql, Provenance};
use crate::store::{check_tfd, infer_joined_tfd, temporal_natural_join, TFDecl, TemporalRelation, Tuple};

/// An intermediate hop: the attributes whose values a model must name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopSpec {
    pub description: String,
    pub attrs: Vec<String>,
    /// Also accept the start year of the right-hand source interval.
    #[serde(default)]
    pub event_year: bool,
}

/// `left ⋈T right` where `tfd` holds on `left` and the plain `fd` on
/// `right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub name: String,
    pub left: String,
    pub right: String,
    pub fd: TFDecl,
    pub tfd: TFDecl,
    /// Relations to sample on the joined relation; by default the join
    /// alone constrains time.
    #[serde(default)]
    pub relations: Option<Vec<QueryRelation>>,
    #[serde(default)]
    pub hops: Option<Vec<HopSpec>>,
    #[serde(default)]
    pub questions: TemplateConfig,
    #[serde(default)]
    pub context_rows: Option<usize>,
}

impl JoinSpec {
    pub fn hop_specs(&self) -> Vec<HopSpec> {
        self.hops.clone().unwrap_or_else(|| {
            vec![HopSpec {
                description: format!("{} and time of {{{}}}", self.fd.rhs.join(", "), self.fd.lhs.join("}, {")),
                attrs: self.fd.rhs.clone(),
                event_year: true,
            }]
        })
    }
}

#[derive(Debug, Clone)]
pub struct MultiHop {
    pub joined: TemporalRelation,
    pub tfd: TFDecl,
    pub drafts: Vec<Draft>,
    pub skipped: Vec<Skip>,
}

fn holds_on(relation: &TemporalRelation, dep: &TFDecl) -> Result<(), QaGenError> {
    relation.validate_dependency(dep)?;
    let report = check_tfd(relation, dep)?;
    if report.holds() {
        Ok(())
    } else {
        Err(QaGenError::TfdViolated {
            relation: relation.name.clone(),
            tfd: dep.to_string(),
            violations: report.violations.len(),
        })
    }
}

fn hops_for(
    joined: &TemporalRelation,
    u: &Tuple,
    specs: &[HopSpec],
    aliases: &BTreeMap<String, Vec<String>>,
) -> Vec<HopGold> {
    let slots: BTreeMap<String, String> = joined
        .value_attr_names()
        .into_iter()
        .zip(u.values.iter().map(|v| v.to_string()))
        .collect();
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut gold: Vec<String> = Vec::new();
            let mut add = |s: String| {
                if !gold.contains(&s) {
                    gold.push(s);
                }
            };
            for v in joined.project(u, &spec.attrs) {
                let v = v.to_string();
                for alias in aliases.get(&v).into_iter().flatten() {
                    add(alias.clone());
                }
                add(v);
            }
            if spec.event_year {
                let source = u.lineage.map(|l| l.right).unwrap_or(u.interval);
                add(source.start.year_value().to_string());
            }
            HopGold {
                hop: i + 1,
                description: fill(&spec.description, &slots),
                gold,
            }
        })
        .collect()
}

/// Joins the two relations, infers and verifies the joined TFD and drafts
/// one multi-hop query per distinct key.
pub fn gen_multihop(
    spec: &JoinSpec,
    left: &TemporalRelation,
    right: &TemporalRelation,
    sampler: &SamplerConfig,
    seed: u64,
    aliases: &BTreeMap<String, Vec<String>>,
) -> Result<MultiHop, QaGenError> {
    holds_on(left, &spec.tfd)?;
    holds_on(right, &spec.fd)?;
    let joined = temporal_natural_join(left, right)?;
    let tfd = infer_joined_tfd(&spec.fd, &spec.tfd, &joined)?;
    let specs = spec.hop_specs();
    for h in &specs {
        if let Some(a) = h.attrs.iter().find(|a| joined.value_index(a).is_none()) {
            return Err(QaGenError::Invalid(format!("hop attribute `{a}` is not in `{}`", joined.name)));
        }
    }
    let final_hop = Some(spec.tfd.rhs.join(", "));
    let mut drafts = Vec::new();
    let mut skipped = Vec::new();

    if let Some(relations) = &spec.relations {
        let config = GenConfig {
            sampler: sampler.clone(),
            answer_extensions: Vec::new(),
            seed,
        };
        let generated = genqueries(&spec.name, &joined, std::slice::from_ref(&tfd), relations, &config)?;
        skipped = generated.skipped;
        for ast in generated.queries {
            let source = ast.provenance.as_ref().map(|p| p.source_tuple).unwrap_or(0);
            let mut draft = Draft::single(&spec.name, ast, sampler.finished_by)?;
            draft.hops = Some(hops_for(&joined, &joined.tuples[source], &specs, aliases));
            draft.final_hop = final_hop.clone();
            drafts.push(draft);
        }
        return Ok(MultiHop {
            joined,
            tfd,
            drafts,
            skipped,
        });
    }

    let equal = QueryRelation::from(AllenRelation::Equal);
    let mut seen = BTreeSet::new();
    let global = seed.to_string();
    let tfd_text = tfd.to_string();
    for (i, u) in joined.tuples.iter().enumerate() {
        let mut ast = base_query(&joined, &tfd, u, &[], equal);
        if !seen.insert(print_sql(&ast)) {
            continue;
        }
        let reference = match u.interval.end {
            Some(end) => ReferenceInterval::spanning(u.interval.start, end, None),
            None => Err(crate::interval::IntervalError::OpenInterval(u.interval)),
        };
        let reference = match reference {
            Ok(b) => b,
            Err(e) => {
                skipped.push(Skip {
                    tuple: i,
                    tfd: tfd.clone(),
                    relation: equal,
                    mode: SampleMode::Satisfying,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        ast.provenance = Some(Provenance {
            source_tuple: i,
            tfd: tfd.clone(),
            relation: equal,
            reference,
            mode: SampleMode::Satisfying,
            seed: sub_seed(&[&global, "multihop", &spec.name, &tuple_key(u), &tfd_text]),
        });
        drafts.push(Draft {
            dataset: spec.name.clone(),
            ast,
            relation: equal,
            hops: Some(hops_for(&joined, u, &specs, aliases)),
            final_hop: final_hop.clone(),
            style: sampler.finished_by,
        });
    }
    Ok(MultiHop {
        joined,
        tfd,
        drafts,
        skipped,
    })
}
