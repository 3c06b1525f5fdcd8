use episde::integrate::{read_binary, simulate, write_binary};
use episde::safety::{cross_semantics_report, ConstraintSpec, CrossSemanticsSettings, Verdict};
use episde::{catalog_lookup, CatalogOptions, IntegrationSettings, SdeScheme, SystemSpec, TimeGrid};

#[test]
fn system_documents_round_trip_and_simulate_identically() {
    let entry = catalog_lookup("linear-feedback", &CatalogOptions::default()).unwrap();
    let grid = TimeGrid::new(2.0, 40).unwrap();
    for spec in [&entry.epistemic, &entry.aleatoric] {
        let back = SystemSpec::from_json(&spec.to_json().unwrap()).unwrap();
        let a = simulate(
            spec,
            &grid,
            64,
            9,
            SdeScheme::EulerMaruyama,
            &IntegrationSettings::default(),
        )
        .unwrap();
        let b = simulate(
            &back,
            &grid,
            64,
            9,
            SdeScheme::EulerMaruyama,
            &IntegrationSettings::default(),
        )
        .unwrap();
        assert_eq!(a, b);
        let mut bytes = Vec::new();
        write_binary(&a, &mut bytes).unwrap();
        // The container keeps states and parameters; extrema are not stored.
        let c = read_binary(&mut bytes.as_slice()).unwrap();
        assert_eq!((c.grid(), c.kind(), c.num_paths()), (a.grid(), a.kind(), a.num_paths()));
        for j in 0..a.num_paths() {
            assert_eq!(c.path(j), a.path(j));
            assert_eq!(c.parameters(j), a.parameters(j));
        }
    }
}

#[test]
fn chance_verdicts_flip_between_semantics() {
    let settings = CrossSemanticsSettings {
        horizon: 1.0,
        num_steps: 1000,
        num_paths: 10_000,
        master_seed: 42,
        ..CrossSemanticsSettings::default()
    };
    let constraint = ConstraintSpec::symmetric(2.0, 1.0, 0.07).unwrap();
    let report =
        cross_semantics_report("scalar-drift", &CatalogOptions::default(), Some(&constraint), &settings).unwrap();
    assert_eq!(report.epistemic.chance.as_ref().unwrap().verdict, Verdict::Satisfied);
    assert_eq!(report.aleatoric.chance.as_ref().unwrap().verdict, Verdict::Violated);
    assert_eq!(report.chance_agree, Some(false));
}
