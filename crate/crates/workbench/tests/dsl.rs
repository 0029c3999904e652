use omega_core::presheaf::StructureError;
use omega_workbench::dsl::{parse_tuple, DslErrorKind, LoadOptions, Workspace};

fn load(src: &str) -> Result<Workspace, omega_workbench::dsl::DslError> {
    let mut ws = Workspace::new(LoadOptions::default());
    ws.load("t.wb", src)?;
    Ok(ws)
}

#[test]
fn syntax_errors_carry_line_numbers() {
    let e = load("# header\nstructure M over omega2 {\n  section a extent ;\n}\n")
        .err()
        .unwrap();
    assert_eq!(e.line, 3);
    assert!(matches!(e.kind, DslErrorKind::Syntax(_)));
    assert!(e.to_string().starts_with("t.wb:3: "));
}

#[test]
fn unknown_and_duplicate_names() {
    let e = load("structure M over nope { section a extent top; }")
        .err()
        .unwrap();
    assert!(matches!(e.kind, DslErrorKind::UnknownName(_)));
    let e = load("algebra omega2 = chain3;").err().unwrap();
    assert!(matches!(e.kind, DslErrorKind::Duplicate(_)));
}

#[test]
fn downset_algebras_name_their_elements() {
    let ws = load(
        "algebra V = downsets { points: u, v, w; order: u <= w, v <= w; }\n\
         structure M over V { section s extent {u}; section t extent {u,v,w}; }",
    )
    .unwrap();
    let v = ws.algebra("V").unwrap();
    assert_eq!(v.size(), 5);
    let m = ws.structure("M").unwrap();
    let s = m.section("s").unwrap();
    assert_eq!(v.name(m.extent(s)), "{u}");
}

#[test]
fn tuples_parse_with_restrictions_and_parentheses() {
    let ws = load(
        "structure M over chain3 { section a, b extent top; section d extent m; identify a|m = d; }",
    )
    .unwrap();
    let m = ws.structure("M").unwrap();
    assert!(parse_tuple(m, "empty").unwrap().is_empty());
    assert!(parse_tuple(m, "()").unwrap().is_empty());
    let t = parse_tuple(m, "(a, b|m)").unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!(parse_tuple(m, "a|m").unwrap(), parse_tuple(m, "d").unwrap());
    assert!(matches!(
        parse_tuple(m, "a, zz"),
        Err(StructureError::UnknownSection(_))
    ));
}

#[test]
fn relations_respect_the_extent_law() {
    let e = load(
        "signature P { rel P/1; }\n\
         structure M over chain3 sig P {\n  section d extent m;\n  rel P(d) = top;\n}",
    )
    .err()
    .unwrap();
    assert!(matches!(e.kind, DslErrorKind::Structure(_)));
    assert!(e.to_string().contains("characteristic function law"));
}
