mod common;

use common::{rng, FormulaGen};
use ltn_core::logic::{Formula, Term};
use ltn_core::parser::{
    format_formula, parse_formula, parse_formula_file, parse_formula_with_free,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn parse_inverts_format(seed in any::<u64>(), depth in 1usize..=6) {
        let gen = FormulaGen { max_depth: depth.max(2), ..FormulaGen::default() };
        let f = gen.closed(&mut rng(seed));
        let text = format_formula(&f);
        prop_assert_eq!(parse_formula(&text).unwrap(), f, "{}", text);
    }
}

#[test]
fn shipped_formula_files_parse() {
    let files = [
        (
            "protocol.axioms",
            include_str!("../../../configs/axioms/protocol.axioms"),
            9,
        ),
        (
            "kdd_multilabel.axioms",
            include_str!("../../../configs/axioms/kdd_multilabel.axioms"),
            15,
        ),
        (
            "cic.axioms",
            include_str!("../../../configs/axioms/cic.axioms"),
            3,
        ),
        (
            "beam.axioms",
            include_str!("../../../configs/axioms/beam.axioms"),
            1,
        ),
        (
            "protocol.queries",
            include_str!("../../../configs/queries/protocol.queries"),
            3,
        ),
        (
            "kdd_multilabel.queries",
            include_str!("../../../configs/queries/kdd_multilabel.queries"),
            3,
        ),
    ];
    for (name, text, count) in files {
        let parsed = parse_formula_file(text, "A").unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parsed.len(), count, "{name}");
        assert!(
            parsed.iter().all(|(_, f)| f.free_vars().is_empty()),
            "{name}"
        );
    }
}

#[test]
fn precedence_and_associativity() {
    let p = |s: &str| parse_formula_with_free(s, &["x"]).unwrap();
    let a = || Formula::pred("A", vec![Term::var("x")]);
    let b = || Formula::pred("B", vec![Term::var("x")]);
    let c = || Formula::pred("C", vec![Term::var("x")]);
    assert_eq!(
        p("~A(x) & B(x) | C(x)"),
        Formula::or(Formula::and(Formula::not(a()), b()), c())
    );
    assert_eq!(
        p("A(x) -> B(x) -> C(x)"),
        Formula::implies(a(), Formula::implies(b(), c()))
    );
    assert_eq!(
        p("A(x) | B(x) -> C(x)"),
        Formula::implies(Formula::or(a(), b()), c())
    );
    assert_eq!(
        p("¬A(x) ∧ B(x) ∨ C(x) → A(x)"),
        p("~A(x) & B(x) | C(x) -> A(x)")
    );
    assert_eq!(p("!(A(x) & B(x))"), Formula::not(Formula::and(a(), b())));
}

#[test]
fn quantifier_bodies_extend_to_the_end() {
    let f = parse_formula("forall x: A(x) -> exists y p=6: R(x, y) & B(y)").unwrap();
    let Formula::Forall { vars, body, p } = &f else {
        panic!("{f:?}")
    };
    assert_eq!((vars.as_slice(), *p), (&["x".to_string()][..], None));
    let Formula::Implies(_, rhs) = body.as_ref() else {
        panic!("{body:?}")
    };
    assert!(matches!(rhs.as_ref(), Formula::Exists { p: Some(p), .. } if *p == 6.0));
    assert_eq!(
        parse_formula("∀x: A(x)").unwrap(),
        parse_formula("forall x: A(x)").unwrap()
    );
    assert_eq!(
        parse_formula("∃ x, y: R(x, y)").unwrap(),
        Formula::exists(
            &["x", "y"],
            Formula::pred("R", vec![Term::var("x"), Term::var("y")])
        )
    );
}

#[test]
fn unbound_identifiers_are_constants() {
    let f = parse_formula("forall x_tcp: P(x_tcp, tcp)").unwrap();
    assert_eq!(
        f,
        Formula::forall(
            &["x_tcp"],
            Formula::pred("P", vec![Term::var("x_tcp"), Term::constant("tcp")])
        )
    );
    let g = parse_formula("forall x, y: Sim(f(x), y)").unwrap();
    let Formula::Forall { body, .. } = g else {
        unreachable!()
    };
    assert_eq!(
        *body,
        Formula::pred(
            "Sim",
            vec![Term::Func("f".into(), vec![Term::var("x")]), Term::var("y")]
        )
    );
}

#[test]
fn errors_carry_line_and_column() {
    let e = parse_formula("forall : P(x)").unwrap_err();
    assert_eq!((e.span.line, e.span.column), (1, 8));
    let msg = e.to_string();
    assert!(msg.starts_with("line 1, column 8: expected"), "{msg}");
    assert!(!msg.contains('\n'));

    let e = parse_formula_file("# header\nforall x: P(x)\nforall x: P(x) &\n", "A").unwrap_err();
    assert_eq!(e.span.line, 3);
    for bad in [
        "P(x",
        "forall x P(x)",
        "A(x) B(x)",
        "forall x p=0.5: P(x)",
        "P(x,)",
        "",
        "->",
    ] {
        assert!(parse_formula(bad).is_err(), "{bad:?} parsed");
    }
}

#[test]
fn formula_files_name_their_entries() {
    let text = "# comment\n\nforall x: A(x)\nsafe := forall x: ~B(x)  # trailing\nexists x: A(x)\n";
    let parsed = parse_formula_file(text, "ax").unwrap();
    let names: Vec<&str> = parsed.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["ax1", "safe", "ax3"]);
}

#[test]
fn formatting_is_canonical() {
    let f = parse_formula("forall x:(A(x)&B(x))|~C(x)").unwrap();
    assert_eq!(format_formula(&f), "forall x: A(x) & B(x) | ~C(x)");
    let text = format_formula(&f);
    assert_eq!(format_formula(&parse_formula(&text).unwrap()), text);
}
