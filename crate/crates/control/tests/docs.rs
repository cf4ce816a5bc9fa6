//! The shipped OpenAPI description and format notes stay in step with the code.

use care_control::ApiError;

const ROUTER: &str = include_str!("../src/api.rs");
const OPENAPI: &str = include_str!("../../../docs/openapi.yaml");
const FORMATS: &str = include_str!("../../../docs/formats.md");

fn routes() -> Vec<&'static str> {
    ROUTER
        .split(".route(\"")
        .skip(1)
        .map(|rest| &rest[..rest.find('"').unwrap()])
        .collect()
}

#[test]
fn every_route_is_described() {
    let routes = routes();
    assert_eq!(routes.len(), 24);
    for r in routes {
        assert!(OPENAPI.contains(&format!("\n  {r}:\n")), "{r} missing from openapi.yaml");
    }
}

#[test]
fn documented_codes_map_to_their_status() {
    let table = FORMATS.split("## Error codes").nth(1).unwrap();
    let mut seen = 0;
    for line in table.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| HTTP")) {
        let cells: Vec<&str> = line.split('|').map(str::trim).collect();
        let status: u16 = cells[1].parse().unwrap();
        for code in cells[2].split(", ") {
            let code = code.trim_matches('`');
            assert_eq!(ApiError::new(code, "").status(), status, "{code}");
            seen += 1;
        }
    }
    assert!(seen > 50);
}
