//! Parse/serialize isomorphism and parser robustness.

use fmkit_core::analysis::count_solutions;
use fmkit_core::cnf::encode;
use fmkit_core::formats::{
    export_dimacs, parse_dimacs, parse_fide_xml, parse_uvl, serialize_fide_xml, serialize_uvl,
    transform, FormatKind,
};
use fmkit_testkit::gen::{random_model, rng, ModelShape};
use fmkit_testkit::iso::isomorphic;
use proptest::prelude::*;

fn shape() -> ModelShape {
    ModelShape {
        min_features: 1,
        max_features: 50,
        max_constraints: 10,
        exotic_names: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn uvl_round_trip(seed in any::<u64>()) {
        let m = random_model(&mut rng(seed), shape());
        let text = serialize_uvl(&m);
        let back = parse_uvl(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(isomorphic(&m, &back), Ok(()));
        prop_assert_eq!(serialize_uvl(&back), text);
    }

    #[test]
    fn xml_round_trip(seed in any::<u64>()) {
        let m = random_model(&mut rng(seed), shape());
        let text = serialize_fide_xml(&m);
        let back = parse_fide_xml(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(isomorphic(&m, &back), Ok(()));
    }

    #[test]
    fn dimacs_line_count(seed in any::<u64>()) {
        let m = random_model(&mut rng(seed), shape());
        let cnf = encode(&m);
        let text = export_dimacs(&cnf);
        prop_assert_eq!(text.lines().count(), cnf.clauses().len() + cnf.variable_count() + 1);
        let (_, clauses, _) = parse_dimacs(&text).unwrap();
        prop_assert_eq!(clauses.as_slice(), cnf.clauses());
    }

    #[test]
    fn parsers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_uvl(&text);
        let _ = parse_fide_xml(&text);
        let _ = parse_dimacs(&text);
    }

    #[test]
    fn uvl_shaped_noise_never_panics(lines in proptest::collection::vec("[\t ]{0,3}[a-z!&|=>()\"{} ]{0,12}", 0..12)) {
        let text = format!("features\n{}", lines.join("\n"));
        let _ = parse_uvl(&text);
    }
}

#[test]
fn car_double_round_trip_through_xml() {
    let car = fmkit_testkit::car();
    let xml = transform(&serialize_uvl(&car), FormatKind::Uvl, FormatKind::FideXml).unwrap();
    let back = parse_uvl(&transform(&xml, FormatKind::FideXml, FormatKind::Uvl).unwrap()).unwrap();
    assert_eq!(isomorphic(&car, &back), Ok(()));
}

#[test]
fn car_dimacs_has_three_projected_models() {
    let car = fmkit_testkit::car();
    let text = export_dimacs(&encode(&car));
    let (vars, clauses, names) = parse_dimacs(&text).unwrap();
    assert_eq!(names.len(), 5);
    // enumerate all assignments of the re-parsed clause set
    let count = (0u32..1 << vars)
        .filter(|bits| {
            clauses.iter().all(|c| {
                c.iter()
                    .any(|&l| (bits >> (l.unsigned_abs() - 1) & 1 == 1) == (l > 0))
            })
        })
        .count();
    assert_eq!(count as u64, count_solutions(&car).unwrap());
    assert_eq!(count, 3);
}
