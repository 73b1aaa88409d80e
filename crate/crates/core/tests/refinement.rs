use proptest::prelude::*;
use signorini::adaptivity::{contact_corner_mesh, doerfler_mark};
use signorini::manufactured::square_mesh;
use signorini::mesh::{BoundaryLabel, MarkedSet, Mesh};

fn boundary_length(mesh: &Mesh, label: BoundaryLabel) -> f64 {
    mesh.boundary_sides(label).map(|s| mesh.side(s).length).sum()
}

fn refine_randomly(mut mesh: Mesh, picks: &[Vec<usize>]) -> Mesh {
    for pick in picks {
        let n = mesh.num_elements();
        let marked = MarkedSet::new(pick.iter().map(|&p| p % n).collect(), n);
        mesh = mesh.rgb_refine(&marked);
    }
    mesh
}

#[test]
fn red_refinement_quadruples_and_keeps_angles() {
    let mesh = square_mesh(0).unwrap();
    let angle = mesh.min_angle();
    let mut m = mesh;
    for _ in 0..4 {
        let fine = m.red_refine();
        assert_eq!(fine.num_elements(), 4 * m.num_elements());
        assert!((fine.min_angle() - angle).abs() < 1e-12);
        fine.check_invariants().unwrap();
        m = fine;
    }
}

#[test]
fn text_format_round_trips() {
    let mesh = refine_randomly(contact_corner_mesh().unwrap(), &[vec![0, 3], vec![5]]);
    let mut buf = Vec::new();
    mesh.write_text(&mut buf).unwrap();
    let back = Mesh::read_text(buf.as_slice()).unwrap();
    assert_eq!(back.triangles(), mesh.triangles());
    assert_eq!(back.num_sides(), mesh.num_sides());
    for label in [BoundaryLabel::Dirichlet, BoundaryLabel::Neumann, BoundaryLabel::Contact] {
        assert_eq!(back.count_sides(label), mesh.count_sides(label));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rgb_refinement_preserves_geometry(picks in prop::collection::vec(prop::collection::vec(0usize..10_000, 1..6), 1..5)) {
        let coarse = contact_corner_mesh().unwrap();
        let fine = refine_randomly(coarse.clone(), &picks);
        prop_assert!(fine.check_invariants().is_ok());
        prop_assert!((fine.total_area() - coarse.total_area()).abs() < 1e-12);
        for label in [BoundaryLabel::Dirichlet, BoundaryLabel::Neumann, BoundaryLabel::Contact] {
            prop_assert!((boundary_length(&fine, label) - boundary_length(&coarse, label)).abs() < 1e-12);
        }
        prop_assert!(fine.num_elements() > coarse.num_elements());
        prop_assert!(fine.min_angle() >= 0.5 * coarse.min_angle() - 1e-12);
    }

    #[test]
    fn marked_elements_are_refined(picks in prop::collection::vec(0usize..10_000, 1..8)) {
        let coarse = square_mesh(1).unwrap();
        let n = coarse.num_elements();
        let marked = MarkedSet::new(picks.iter().map(|&p| p % n).collect(), n);
        let (fine, parents) = coarse.rgb_refine_with_parents(&marked);
        let mut children = vec![0usize; n];
        for &p in &parents {
            children[p] += 1;
        }
        for &p in &picks {
            prop_assert!(children[p % n] >= 2);
        }
        for t in 0..n {
            let area: f64 = (0..fine.num_elements()).filter(|&c| parents[c] == t).map(|c| fine.area(c)).sum();
            prop_assert!((area - coarse.area(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn doerfler_set_is_minimal(values in prop::collection::vec(0.0f64..1.0, 1..60), theta in 0.05f64..1.0) {
        let marked = doerfler_mark(&values, theta);
        let total: f64 = values.iter().sum();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        let mut minimal = 0;
        while acc < theta * theta * total && minimal < sorted.len() {
            acc += sorted[minimal];
            minimal += 1;
        }
        prop_assert_eq!(marked.len(), minimal);
    }
}
