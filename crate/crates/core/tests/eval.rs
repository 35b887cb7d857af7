use sepsislab::data::{generate_cohort, Cohort, GeneratorConfig};
use sepsislab::eval::{run_condition, ConditionRegistry, EvalContext, EvalPatient, ExperimentReport};
use sepsislab::predictor::{LogisticModel, RiskModel};
use sepsislab::rng::request_seed;
use sepsislab::uncertainty::{fit_imputation, ImputationModel, PolicyConfig, Scenario};
use sepsislab::Error;

struct Fixture {
    cohort: Cohort,
    model: LogisticModel,
    imputation: ImputationModel,
}

fn fixture(n: usize) -> Fixture {
    let cohort = generate_cohort(42, n, &GeneratorConfig::default()).unwrap();
    let model = LogisticModel::fit_records(&cohort.records, &cohort.vocabulary, 1e-2).unwrap();
    let imputation = fit_imputation(&cohort.records, &cohort.vocabulary).unwrap();
    Fixture { cohort, model, imputation }
}

fn ctx(f: &Fixture, budget: f64) -> EvalContext<'_> {
    EvalContext {
        model: &f.model,
        imputation: &f.imputation,
        vocab: &f.cohort.vocabulary,
        policy: PolicyConfig {
            counterfactual_samples: 20,
            mcs_samples: 10,
            seed: 3,
            ..Default::default()
        },
        budget,
    }
}

fn run(f: &Fixture, condition: &str, budget: f64, n: usize) -> ExperimentReport {
    let reg = ConditionRegistry::default();
    run_condition(reg.get(condition).unwrap(), &ctx(f, budget), &f.cohort.records[..n]).unwrap()
}

#[test]
fn zero_budget_recommended_equals_masked() {
    let f = fixture(80);
    let masked = run(&f, "masked", 0.0, 80);
    let rec = run(&f, "recommended", 0.0, 80);
    assert_eq!(rec.auc, masked.auc);
    assert_eq!(rec.acquired_fraction, 0.0);
    for (a, b) in rec.log.iter().zip(&masked.log) {
        assert_eq!(a.p_mean, b.p_mean);
        assert!(a.acquisitions.is_empty());
    }
}

#[test]
fn full_beats_masked_and_budget_is_respected() {
    let f = fixture(400);
    let masked = run(&f, "masked", 0.25, 400);
    let full = run(&f, "full", 0.25, 400);
    assert!(full.auc >= masked.auc, "full {} masked {}", full.auc, masked.auc);
    let rec = run(&f, "recommended", 0.25, 120);
    assert!(rec.acquired_fraction <= 0.25);
    for o in &rec.log {
        assert!(o.acquisitions.len() as f64 <= 0.25 * o.n_withheld as f64 + 1e-9);
    }
    assert_eq!(rec.n_patients, 120);
    assert!(rec.log.windows(2).all(|w| w[0].patient_id < w[1].patient_id));
}

#[test]
fn acquisition_log_replays_from_scratch() {
    let f = fixture(60);
    let c = ctx(&f, 1.0);
    let v = &f.cohort.vocabulary;
    let reg = ConditionRegistry::default();
    let strategy = reg.get("recommended").unwrap();
    let mut replayed = 0;
    for r in &f.cohort.records {
        let patient = EvalPatient::new(r, v).unwrap();
        let out = strategy.evaluate(&c, &patient).unwrap();
        let seed = request_seed(c.policy.seed, &r.patient_id, patient.t);
        let mut record = patient.masked.clone();
        for a in &out.acquisitions {
            let before = Scenario::new(c.model, c.imputation, v, &record, patient.t).unwrap();
            assert_eq!(before.predict(c.policy.mcs_samples, seed).entropy, a.entropy_before);
            assert!(!before.snapshot.is_observed(a.variable));
            let obs = patient.latest_fresh(a.variable, v).unwrap();
            assert_eq!((obs.time, obs.value), (a.time, a.value));
            record.push_observation(obs).unwrap();
            let after = Scenario::new(c.model, c.imputation, v, &record, patient.t).unwrap();
            let u = after.predict(c.policy.mcs_samples, seed);
            assert_eq!((u.entropy, u.p_mean), (a.entropy_after, a.p_after));
            replayed += 1;
        }
        let final_u = Scenario::new(c.model, c.imputation, v, &record, patient.t)
            .unwrap()
            .predict(c.policy.mcs_samples, seed);
        assert_eq!(final_u.p_mean, out.p_mean);
        if !out.truncated && out.entropy > c.policy.th_e {
            // stopped because no fresh withheld lab was left to reveal
            let s = Scenario::new(c.model, c.imputation, v, &record, patient.t).unwrap();
            assert!(s.missing().iter().all(|&m| patient.latest_fresh(m, v).is_none()));
        }
    }
    assert!(replayed > 0);
}

#[test]
fn evaluation_is_deterministic() {
    let f = fixture(50);
    assert_eq!(run(&f, "recommended", 0.25, 50).log, run(&f, "recommended", 0.25, 50).log);
}

#[test]
fn masked_patient_keeps_vitals_only() {
    let f = fixture(20);
    let v = &f.cohort.vocabulary;
    for r in &f.cohort.records {
        let p = EvalPatient::new(r, v).unwrap();
        assert!(p.masked.observations().iter().all(|o| !v.is_lab(o.variable) || o.time > p.t));
        assert_eq!(
            p.masked.observations().len() + p.withheld.len(),
            r.observations().len()
        );
        assert_eq!(p.allowance(0.25), (0.25 * p.withheld.len() as f64).floor() as usize);
    }
}

#[test]
fn bad_inputs_rejected() {
    let f = fixture(20);
    let reg = ConditionRegistry::default();
    assert!(matches!(reg.get("random"), Err(Error::UnknownStrategy { .. })));
    assert!(run_condition(reg.get("masked").unwrap(), &ctx(&f, 1.5), &f.cohort.records).is_err());
    let mut unlabelled = f.cohort.records.clone();
    unlabelled[0].label = None;
    assert!(run_condition(reg.get("masked").unwrap(), &ctx(&f, 0.1), &unlabelled).is_err());
    assert_eq!(f.model.kind(), "logistic");
}
