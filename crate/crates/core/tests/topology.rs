use proptest::prelude::*;

use spectral_collapse::builders::{
    build_circle, build_flat_torus, build_icosphere, build_s3_600cell, cycle_complex, subdivide, suspension,
};
use spectral_collapse::cohomology::betti_numbers;
use spectral_collapse::complex::SimplicialComplex;
use spectral_collapse::geometry::Projection;
use spectral_collapse::meshio::MeshFile;

fn random_complex() -> impl Strategy<Value = SimplicialComplex> {
    (1usize..=3).prop_flat_map(|dim| {
        proptest::collection::vec(proptest::sample::subsequence((0..7).collect::<Vec<usize>>(), dim + 1), 1..8)
            .prop_map(move |tops| SimplicialComplex::from_top_simplices(dim, &tops).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn boundary_squares_to_zero(k in random_complex()) {
        for p in 2..=k.dimension() {
            let dd = k.boundary_matrix(p - 1).unwrap().matmul(&k.boundary_matrix(p).unwrap()).unwrap();
            prop_assert!(dd.is_zero());
        }
        prop_assert!(k.validate().is_empty());
    }

    #[test]
    fn betti_numbers_match_euler_characteristic(k in random_complex()) {
        let b = betti_numbers(&k).unwrap();
        prop_assert_eq!(b.euler_characteristic(), k.euler_characteristic());
    }

    #[test]
    fn mesh_file_round_trip(k in random_complex()) {
        let file = MeshFile::new(&k, None);
        let back = MeshFile::from_json(&file.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.complex().unwrap(), k);
    }
}

#[test]
fn built_in_betti_numbers() {
    let (c, _) = build_circle(12).unwrap();
    assert_eq!(betti_numbers(&c).unwrap().values, vec![1, 1]);
    let (t, _, _) = build_flat_torus(4, 4).unwrap();
    assert_eq!(betti_numbers(&t).unwrap().values, vec![1, 2, 1]);
    for level in 0..=2 {
        let (s, _, _) = build_icosphere(level).unwrap();
        assert_eq!(betti_numbers(&s).unwrap().values, vec![1, 0, 1]);
    }
    let (s3, _, _) = build_s3_600cell(0).unwrap();
    assert_eq!(betti_numbers(&s3).unwrap().values, vec![1, 0, 0, 1]);
}

#[test]
fn suspension_shifts_reduced_betti_numbers() {
    let (ico, _, _) = build_icosphere(0).unwrap();
    let (t, _, _) = build_flat_torus(3, 3).unwrap();
    for k in [cycle_complex(12).unwrap(), (*ico).clone(), (*t).clone()] {
        let before = betti_numbers(&k).unwrap().reduced();
        let after = betti_numbers(&suspension(&k)).unwrap().reduced();
        assert_eq!(after[0], 0);
        assert_eq!(&after[1..], &before[..]);
    }
    assert_eq!(betti_numbers(&suspension(&cycle_complex(12).unwrap())).unwrap().values, vec![1, 0, 1]);
    assert_eq!(betti_numbers(&suspension(&ico)).unwrap().values, vec![1, 0, 0, 1]);
}

#[test]
fn subdivision_preserves_topology() {
    let (ico, g, _) = build_icosphere(0).unwrap();
    let (fine, _) = subdivide(&ico, g.vertices(), Projection::UnitSphere).unwrap();
    assert_eq!(betti_numbers(&fine).unwrap().values, betti_numbers(&ico).unwrap().values);
    assert_eq!(fine.euler_characteristic(), ico.euler_characteristic());

    let (t, g, _) = build_flat_torus(3, 3).unwrap();
    // unwrapped coordinates are not needed for the combinatorics
    let (fine, _) = subdivide(&t, g.vertices(), Projection::Identity).unwrap();
    assert_eq!(betti_numbers(&fine).unwrap().values, vec![1, 2, 1]);

    let (s3, g, _) = build_s3_600cell(0).unwrap();
    let (fine, _) = subdivide(&s3, g.vertices(), Projection::UnitSphere).unwrap();
    assert_eq!(fine.counts(), vec![840, 5640, 9600, 4800]);
    assert_eq!(fine.euler_characteristic(), 0);
}
