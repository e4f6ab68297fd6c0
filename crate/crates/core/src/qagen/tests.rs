use std::collections::BTreeMap;

use super::*;
use crate::interval::{AllenRelation, ReferenceInterval, TemporalCondition};
use crate::store::{AttributeSchema, Value};
use crate::time::Duration;

fn tp(s: &str) -> TimePoint {
    s.parse().unwrap()
}

fn relation(name: &str, text: &[&str], g: Granularity, rows: &[(&[&str], &str, Option<&str>)]) -> TemporalRelation {
    let mut schema: Vec<AttributeSchema> = text.iter().map(|a| AttributeSchema::text(a)).collect();
    schema.push(AttributeSchema::date("start"));
    schema.push(AttributeSchema::date("end"));
    let mut r = TemporalRelation::new(name, schema, "start", "end", g, vec![]).unwrap();
    for (values, s, e) in rows {
        r.push(
            values.iter().map(|v| Value::text(v)).collect(),
            Interval {
                start: tp(s),
                end: e.map(tp),
            },
        )
        .unwrap();
    }
    r
}

fn three_leaders(elizabeth_end: Option<&'static str>) -> TemporalRelation {
    relation(
        "Leader",
        &["country", "role", "gender", "name"],
        Granularity::Year,
        &[
            (&["USA", "President", "M", "Bush"], "2001", Some("2009")),
            (&["USA", "President", "M", "Obama"], "2009", Some("2017")),
            (&["U.K.", "Monarch", "F", "Elizabeth"], "1952", elizabeth_end),
        ],
    )
}

fn leader_tfd() -> TFDecl {
    TFDecl::temporal(&["country", "role"], &["name"])
}

fn config(seed: u64) -> GenConfig {
    GenConfig {
        seed,
        ..GenConfig::default()
    }
}

#[test]
fn count_law_on_three_leaders() {
    let r = three_leaders(Some("2022"));
    for seed in [7, 8, 9] {
        let out = genqueries("leader", &r, &[leader_tfd()], &QueryRelation::all_base(), &config(seed)).unwrap();
        assert_eq!(out.queries.len() + out.skipped.len(), 39);
        assert_eq!(out.queries.len(), 39, "skips: {:?}", out.skipped);
    }
}

#[test]
fn empty_relation_yields_nothing() {
    let r = relation("Leader", &["country", "role", "gender", "name"], Granularity::Year, &[]);
    let out = genqueries("leader", &r, &[leader_tfd()], &QueryRelation::all_base(), &config(7)).unwrap();
    assert!(out.queries.is_empty() && out.skipped.is_empty());
}

#[test]
fn current_variant_needs_open_rows() {
    let rels = [QueryRelation::CURRENT];
    let mut cfg = config(7);
    cfg.sampler.miss_probability = 0.0;
    let closed = genqueries("leader", &three_leaders(Some("2022")), &[leader_tfd()], &rels, &cfg).unwrap();
    assert_eq!(closed.queries.len(), 0);
    assert_eq!(closed.skipped.len(), 3);
    let open = genqueries("leader", &three_leaders(None), &[leader_tfd()], &rels, &cfg).unwrap();
    assert_eq!(open.queries.len(), 1);
    assert_eq!(open.queries[0].provenance.as_ref().unwrap().source_tuple, 2);
}

#[test]
fn violated_tfd_is_refused() {
    let mut r = three_leaders(Some("2022"));
    r.push(
        vec![Value::text("USA"), Value::text("President"), Value::text("M"), Value::text("Gore")],
        Interval::closed(tp("2005"), tp("2010")),
    )
    .unwrap();
    let err = genqueries("leader", &r, &[leader_tfd()], &QueryRelation::all_base(), &config(7)).unwrap_err();
    assert!(matches!(err, QaGenError::TfdViolated { violations: 2, .. }));
}

#[test]
fn generation_is_deterministic_and_consistent() {
    let r = three_leaders(Some("2022"));
    let a = genqueries("leader", &r, &[leader_tfd()], &QueryRelation::all_base(), &config(7)).unwrap();
    let b = genqueries("leader", &r, &[leader_tfd()], &QueryRelation::all_base(), &config(7)).unwrap();
    assert_eq!(a.queries, b.queries);
    for ast in &a.queries {
        let p = ast.provenance.clone().unwrap();
        let (card, answers, refs) = classify_cardinality(ast, &r, p.relation).unwrap().unwrap();
        match p.mode {
            SampleMode::Satisfying => {
                assert_ne!(card, Cardinality::None, "{}", print_sql(ast));
                let name = r.tuples[p.source_tuple].values[3].to_string();
                assert!(answers.iter().any(|a| a.values == vec![name.clone()]));
            }
            SampleMode::Miss => assert_eq!(card, Cardinality::None, "{}", print_sql(ast)),
        }
        assert_eq!(refs.len(), answers.len());
        for a in &answers {
            assert!(crate::interval::holds(p.relation, &a.interval, &p.reference, r.granularity));
        }
    }
}

fn brazil() -> TemporalRelation {
    relation(
        "Leader",
        &["country", "role", "name"],
        Granularity::Day,
        &[
            (&["Brazil", "President", "Dilma Rousseff"], "2011-01-01", Some("2016-08-31")),
            (&["Brazil", "President", "Michel Temer"], "2016-08-31", Some("2019-01-01")),
            (&["Brazil", "President", "Jair Bolsonaro"], "2019-01-01", Some("2023-01-01")),
            (&["USA", "President", "Bill Clinton"], "1993-01-20", Some("2001-01-20")),
            (&["USA", "President", "George W. Bush"], "2001-01-20", Some("2009-01-20")),
            (&["Netherlands", "King", "Willem-Alexander"], "2013-04-30", None),
        ],
    )
}

fn ast_for(r: &TemporalRelation, keys: &[(&str, &str)], rel: QueryRelation, b: ReferenceInterval) -> QueryAst {
    let tfd = TFDecl::temporal(&keys.iter().map(|k| k.0).collect::<Vec<_>>(), &["name"]);
    let u = r
        .tuples
        .iter()
        .find(|u| keys.iter().all(|(a, v)| r.project(u, &[a.to_string()])[0] == &Value::text(v)))
        .unwrap();
    let mut ast = base_query(r, &tfd, u, &[], rel);
    ast.condition = condition_for(rel, &b, ConditionStyle::Allen);
    ast.provenance = Some(Provenance {
        source_tuple: 0,
        tfd,
        relation: rel,
        reference: b,
        mode: SampleMode::Satisfying,
        seed: 1,
    });
    ast
}

#[test]
fn brazil_meet_is_unique_with_end_reference() {
    let r = brazil();
    let b = ReferenceInterval::from_end(tp("2019-05-01"), Duration::months(4)).unwrap();
    let meet = AllenRelation::Meet.into();
    let ast = ast_for(&r, &[("country", "Brazil"), ("role", "President")], meet, b);
    assert_eq!(
        print_sql(&ast),
        "SELECT name, end FROM Leader WHERE Country='Brazil' AND Role='President' AND date(end) = date('2019-05-01', '-4 month')"
    );
    let (card, answers, refs) = classify_cardinality(&ast, &r, meet).unwrap().unwrap();
    assert_eq!(card, Cardinality::Unique);
    assert_eq!(answers[0].values, vec!["Michel Temer"]);
    assert_eq!(refs[0], BTreeMap::from([(TimeRole::End, tp("2019-01-01"))]));
}

#[test]
fn half_a_year_before_clinton_end_has_no_answer() {
    let r = brazil();
    let b = ReferenceInterval::from_end(tp("2001-01-20"), Duration::months(6)).unwrap();
    let meet = AllenRelation::Meet.into();
    let ast = ast_for(&r, &[("country", "USA"), ("role", "President")], meet, b);
    let (card, answers, refs) = classify_cardinality(&ast, &r, meet).unwrap().unwrap();
    assert_eq!((card, answers.len(), refs.len()), (Cardinality::None, 0, 0));
}

#[test]
fn current_template_question() {
    let r = brazil();
    let b = ReferenceInterval::from_start(tp("2020-01-01"), Duration::years(1)).unwrap();
    let mut ast = ast_for(&r, &[("country", "Netherlands"), ("role", "King")], QueryRelation::CURRENT, b);
    ast.condition = TemporalCondition::currently_open();
    assert_eq!(
        print_sql(&ast),
        "SELECT name, start FROM Leader WHERE Country='Netherlands' AND Role='King' AND End IS NULL"
    );
    let config = TemplateConfig {
        subject: Some("the {role} of {country}".into()),
        display: BTreeMap::from([(
            "country".to_string(),
            BTreeMap::from([("Netherlands".to_string(), "the Netherlands".to_string())]),
        )]),
        ..TemplateConfig::default()
    };
    assert_eq!(
        render_template(&ast, QueryRelation::CURRENT, &config),
        "Who is currently serving as the King of the Netherlands?"
    );
    let (card, answers, refs) = classify_cardinality(&ast, &r, QueryRelation::CURRENT).unwrap().unwrap();
    assert_eq!(card, Cardinality::Unique);
    assert_eq!(answers[0].values, vec!["Willem-Alexander"]);
    assert_eq!(refs[0], BTreeMap::from([(TimeRole::Start, tp("2013-04-30"))]));
}

#[test]
fn meet_template_reads_naturally() {
    let r = brazil();
    let b = ReferenceInterval::from_end(tp("2019-05-01"), Duration::months(4)).unwrap();
    let ast = ast_for(&r, &[("country", "Brazil"), ("role", "President")], AllenRelation::Meet.into(), b);
    let config = TemplateConfig {
        subject: Some("the {role} of {country}".into()),
        ..TemplateConfig::default()
    };
    assert_eq!(
        render_template(&ast, AllenRelation::Meet.into(), &config),
        "Who was the President of Brazil whose term ended exactly four months before May 1, 2019?"
    );
}

#[test]
fn parses_q_lines() {
    let raw = "Q: Who was the president of Brazil?\n1. Q: Which Brazilian president left office?\nnoise\n- Q:  ";
    assert_eq!(
        parse_questions(raw),
        vec!["Who was the president of Brazil?", "Which Brazilian president left office?"]
    );
    assert!(parse_questions("I cannot help with that.").is_empty());
}

#[test]
fn context_keeps_full_history_and_samples_the_rest() {
    let r = brazil();
    let b = ReferenceInterval::from_end(tp("2001-01-20"), Duration::months(6)).unwrap();
    let ast = ast_for(&r, &[("country", "Brazil"), ("role", "President")], AllenRelation::Meet.into(), b);
    let mut rng = seeded_rng(3);
    let c = build_context(&ast, &r, &mut rng, 2).unwrap();
    assert_eq!(c.relevant.len(), 3);
    assert_eq!(c.irrelevant.len(), 2);
    assert!(c.irrelevant.iter().all(|row| row[0] != "Brazil"));
    assert_eq!(c.header, vec!["country", "role", "name", "start", "end"]);
    let c0 = build_context(&ast, &r, &mut rng, 0).unwrap();
    assert!(c0.irrelevant.is_empty() && !c0.short);
    let all = build_context(&ast, &r, &mut rng, 10).unwrap();
    assert_eq!(all.irrelevant.len(), 3);
    assert!(all.short);
}

fn olympics() -> (TemporalRelation, TemporalRelation) {
    let leader = relation(
        "Leader",
        &["country", "role", "name"],
        Granularity::Day,
        &[
            (&["Italy", "President", "Luigi Einaudi"], "1948-05-12", Some("1955-05-11")),
            (&["Italy", "President", "Giovanni Gronchi"], "1955-05-11", Some("1962-05-11")),
            (&["Italy", "Prime Minister", "Antonio Segni"], "1955-07-06", Some("1957-05-19")),
            (&["South Korea", "President", "Chun Doo-hwan"], "1980-09-01", Some("1988-02-25")),
            (&["South Korea", "President", "Roh Tae-woo"], "1988-02-25", Some("1993-02-25")),
        ],
    );
    let olympic = relation(
        "Olympic",
        &["game_edition", "game_round", "game_name", "city", "country"],
        Granularity::Day,
        &[
            (
                &["7th Winter", "7th Winter Olympics", "1956 Winter Olympics", "Cortina d'Ampezzo", "Italy"],
                "1956-01-26",
                Some("1956-02-05"),
            ),
            (
                &["24th Summer", "24th Summer Olympics", "1988 Summer Olympics", "Seoul", "South Korea"],
                "1988-09-17",
                Some("1988-10-02"),
            ),
        ],
    );
    (leader, olympic)
}

fn join_spec() -> JoinSpec {
    JoinSpec {
        name: "olympic-leader".into(),
        left: "Leader".into(),
        right: "Olympic".into(),
        fd: TFDecl::plain(&["game_edition"], &["country"]),
        tfd: leader_tfd(),
        relations: None,
        hops: None,
        questions: TemplateConfig::default(),
        context_rows: None,
    }
}

#[test]
fn olympic_two_hop() {
    let (leader, olympic) = olympics();
    let aliases = BTreeMap::new();
    let mh = gen_multihop(&join_spec(), &leader, &olympic, &SamplerConfig::default(), 7, &aliases).unwrap();
    assert_eq!(mh.tfd, TFDecl::temporal(&["game_edition", "role"], &["name"]));
    let sqls: Vec<String> = mh.drafts.iter().map(|d| print_sql(&d.ast)).collect();
    assert!(sqls.contains(
        &"SELECT name, start, end FROM Leader ⋈T Olympic WHERE game_edition='7th Winter' AND Role='President'".to_string()
    ));
    let draft = mh
        .drafts
        .iter()
        .find(|d| print_sql(&d.ast).contains("'7th Winter' AND Role='President'"))
        .unwrap();
    let item = assemble_item(draft, &mh.joined, vec!["q".into()], None, vec![]).unwrap().unwrap();
    assert_eq!(item.answers.len(), 1);
    assert_eq!(item.answers[0].values, vec!["Giovanni Gronchi"]);
    assert_eq!(item.answers[0].interval, Interval::closed(tp("1956-01-26"), tp("1956-02-05")));
    assert_eq!(
        item.time_refs[0],
        BTreeMap::from([(TimeRole::Start, tp("1955-05-11")), (TimeRole::End, tp("1962-05-11"))])
    );
    let hops = item.hops.unwrap();
    assert_eq!(hops.len(), 2);
    assert_eq!(hops[0].gold, vec!["Italy", "1956"]);
    assert_eq!(hops[1].gold, vec!["Giovanni Gronchi"]);
}

#[test]
fn three_hop_chain_ends_in_1988_president() {
    let (leader, olympic) = olympics();
    let spec = JoinSpec {
        fd: TFDecl::plain(&["game_round"], &["country"]),
        hops: Some(vec![
            HopSpec {
                description: "name of the {game_round}".into(),
                attrs: vec!["game_name".into()],
                event_year: false,
            },
            HopSpec {
                description: "host country".into(),
                attrs: vec!["country".into()],
                event_year: true,
            },
        ]),
        ..join_spec()
    };
    let aliases = BTreeMap::from([("South Korea".to_string(), vec!["Korea".to_string()])]);
    let mh = gen_multihop(&spec, &leader, &olympic, &SamplerConfig::default(), 7, &aliases).unwrap();
    let draft = mh
        .drafts
        .iter()
        .find(|d| print_sql(&d.ast).contains("game_round='24th Summer Olympics' AND Role='President'"))
        .unwrap();
    let item = assemble_item(draft, &mh.joined, vec!["q".into()], None, vec![]).unwrap().unwrap();
    let hops = item.hops.unwrap();
    assert_eq!(hops.len(), 3);
    assert_eq!(hops[0].gold, vec!["1988 Summer Olympics"]);
    assert_eq!(hops[0].description, "name of the 24th Summer Olympics");
    assert_eq!(hops[1].gold, vec!["Korea", "South Korea", "1988"]);
    assert_eq!(hops[2].gold, vec!["Roh Tae-woo"]);
}

#[test]
fn dirty_join_emits_nothing() {
    let (mut leader, olympic) = olympics();
    leader
        .push(
            vec![Value::text("Italy"), Value::text("President"), Value::text("Impostor")],
            Interval::closed(tp("1956-01-01"), tp("1956-03-01")),
        )
        .unwrap();
    let err = gen_multihop(&join_spec(), &leader, &olympic, &SamplerConfig::default(), 7, &BTreeMap::new());
    assert!(matches!(err, Err(QaGenError::TfdViolated { .. })));
}

#[test]
fn ids_are_content_hashes() {
    assert_eq!(item_id("d", "SELECT 1", 7), item_id("d", "SELECT 1", 7));
    assert_ne!(item_id("d", "SELECT 1", 7), item_id("d", "SELECT 1", 8));
    assert_ne!(item_id("d", "SELECT 1", 7), item_id("e", "SELECT 1", 7));
    assert_eq!(item_id("d", "SELECT 1", 7).len(), 16);
}
