mod common;

use common::{date, narrative_of, options_at, scripted_config, state_of};
use valuation_core::llm::ScriptRule;
use valuation_core::orchestrator::run_full_valuation;
use valuation_core::reporting::{extract_claims, write_report, IssueCategory, ReportMaterials, Verdict, Whitelist};
use valuation_core::store::RunRecord;

fn byd_run(tmp: &std::path::Path) -> RunRecord {
    run_full_valuation("BYD", Some(date("2024-11-04")), &scripted_config(tmp), &options_at("2024-11-04")).unwrap()
}

fn with_materials<T>(record: &RunRecord, f: impl FnOnce(&ReportMaterials<'_>) -> T) -> T {
    let state = state_of(record);
    let history = state.history();
    let m = ReportMaterials {
        inputs: &record.final_inputs,
        result: &record.final_value,
        decision: record.decision.unwrap(),
        sensitivity: state.latest_sensitivity(),
        comparables: state.latest_comparables(),
        news: state.latest_news(),
        news_thresholds: Default::default(),
        history: &history,
        sources: vec!["fixture".into()],
        extra_numbers: vec![],
    };
    f(&m)
}

#[test]
fn published_report_has_only_traceable_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let record = byd_run(tmp.path());
    let paths = record.report_paths.as_ref().unwrap();
    assert_eq!(paths.verdict, Verdict::Pass);
    let md = std::fs::read_to_string(&paths.report).unwrap();
    let claims = extract_claims(narrative_of(&md), "report");
    assert!(claims.len() >= 5, "{}", claims.len());
    with_materials(&record, |m| {
        let w = Whitelist::from_materials(m);
        let loose: Vec<_> = claims.iter().filter(|c| !w.admits(c)).map(|c| c.text.clone()).collect();
        assert!(loose.is_empty(), "{loose:?}");
    });
    for chart in &paths.charts {
        assert!(std::path::Path::new(chart).is_file());
        assert!(md.contains(&format!("charts/{}", std::path::Path::new(chart).file_name().unwrap().to_string_lossy())));
    }
}

#[test]
fn seeded_number_fails_then_annex_lists_it() {
    let tmp = tempfile::tempdir().unwrap();
    let record = byd_run(tmp.path());
    let mut rules = common::byd_rules();
    for r in rules.rules.iter_mut().filter(|r| r.template == "report_writer" || r.template == "report_reviser") {
        r.response = r.response.replacen("revenue growth of 10% next year", "revenue growth of 23% next year", 1);
    }
    let gw = valuation_core::llm::Gateway::scripted(rules);
    let outcome = with_materials(&record, |m| write_report(&gw, m, &Default::default()).unwrap());
    assert_eq!(outcome.verdict, Verdict::Fail);
    assert_eq!(outcome.revisions, 3);
    let first = &outcome.critiques[0];
    assert_eq!(first.issues.len(), 1);
    assert_eq!(first.issues[0].category, IssueCategory::UnverifiedNumber);
    assert!(first.issues[0].detail.contains("23%"));
    let annex = outcome.draft.sections.last().unwrap();
    assert_eq!(annex.heading, "Unresolved issues");
    assert!(annex.body.contains("unverified_number"));
}

#[test]
fn reviser_can_fix_a_seeded_number() {
    let tmp = tempfile::tempdir().unwrap();
    let record = byd_run(tmp.path());
    let rules = common::byd_rules();
    let clean = rules.rules.iter().find(|r| r.template == "report_writer").unwrap().response.clone();
    let seeded = clean.replacen("revenue growth of 10% next year", "revenue growth of 23% next year", 1);
    let gw = common::gateway_with(vec![ScriptRule::new("report_writer", seeded)]);
    let outcome = with_materials(&record, |m| write_report(&gw, m, &Default::default()).unwrap());
    assert_eq!(outcome.verdict, Verdict::Pass);
    assert_eq!(outcome.revisions, 1);
    assert_eq!(outcome.critiques[0].verdict, Verdict::Fail);
    assert!(outcome.critiques[1].issues.is_empty());
}
