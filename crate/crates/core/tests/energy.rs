//! Properties of the normalized Laplacian and the Dirichlet energy on random
//! graphs, checked against an independent eigenvalue oracle.

mod common;

use common::{gaussian, jacobi_eigenvalues, random_adjacency};
use egodiff::graph::{dirichlet_energy, dirichlet_energy_edges, normalized_energy_of, normalized_laplacian};
use egodiff::rng::stream;
use ndarray::{array, Array2};
use proptest::prelude::*;

fn permute(m: &Array2<f64>, perm: &[usize], square: bool) -> Array2<f64> {
    let cols = m.ncols();
    if square {
        Array2::from_shape_fn((perm.len(), perm.len()), |(i, j)| m[[perm[i], perm[j]]])
    } else {
        Array2::from_shape_fn((perm.len(), cols), |(i, j)| m[[perm[i], j]])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn laplacian_spectrum_lies_in_zero_two(seed in any::<u64>(), n in 1usize..9, p in 0.0f64..1.0) {
        let a = random_adjacency(n, p, &mut stream(seed, &[0]));
        let lap = normalized_laplacian(&a, &vec![true; n]).unwrap();
        let ev = jacobi_eigenvalues(&lap.l);
        prop_assert!(ev[0] >= -1e-9);
        prop_assert!(ev[n - 1] <= 2.0 + 1e-9);
        prop_assert!((lap.spectral_radius() - ev[n - 1]).abs() < 1e-6);
    }

    #[test]
    fn energy_forms_agree_and_are_bounded(seed in any::<u64>(), n in 1usize..9, f in 1usize..4, p in 0.0f64..1.0) {
        let mut rng = stream(seed, &[1]);
        let a = random_adjacency(n, p, &mut rng);
        let x = gaussian(n, f, &mut rng);
        let mask = vec![true; n];
        let lap = normalized_laplacian(&a, &mask).unwrap();
        let trace = dirichlet_energy(&x, &lap).unwrap();
        let edges = dirichlet_energy_edges(&x, &a, &mask).unwrap();
        prop_assert!((trace - edges).abs() <= 1e-9 * (1.0 + edges));
        let e = normalized_energy_of(&x, &a, &mask).unwrap();
        let rho = jacobi_eigenvalues(&lap.l)[n - 1];
        prop_assert!((0.0..=2.0).contains(&e));
        prop_assert!(e <= rho + 1e-9);
    }

    #[test]
    fn energy_is_permutation_invariant(seed in any::<u64>(), n in 2usize..9, p in 0.1f64..1.0) {
        let mut rng = stream(seed, &[2]);
        let a = random_adjacency(n, p, &mut rng);
        let x = gaussian(n, 2, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(seed as usize % n);
        perm.swap(0, n - 1);
        let mask = vec![true; n];
        let e = normalized_energy_of(&x, &a, &mask).unwrap();
        let ep = normalized_energy_of(&permute(&x, &perm, false), &permute(&a, &perm, true), &mask).unwrap();
        prop_assert!((e - ep).abs() < 1e-12);
    }

    #[test]
    fn padding_slots_are_ignored(seed in any::<u64>(), n in 1usize..7, pad in 1usize..4) {
        let mut rng = stream(seed, &[3]);
        let a = random_adjacency(n, 0.5, &mut rng);
        let x = gaussian(n, 2, &mut rng);
        let e = normalized_energy_of(&x, &a, &vec![true; n]).unwrap();
        let m = n + pad;
        // garbage in the padded slots must not leak in
        let xp = Array2::from_shape_fn((m, 2), |(i, j)| if i < n { x[[i, j]] } else { 7.0 });
        let ap = Array2::from_shape_fn((m, m), |(i, j)| if i < n && j < n { a[[i, j]] } else if i != j { 1.0 } else { 0.0 });
        let mask: Vec<bool> = (0..m).map(|i| i < n).collect();
        prop_assert!((normalized_energy_of(&xp, &ap, &mask).unwrap() - e).abs() < 1e-12);
    }
}

#[test]
fn oracle_values() {
    let k2 = array![[0.0, 1.0], [1.0, 0.0]];
    assert!((normalized_energy_of(&array![[1.0], [-1.0]], &k2, &[true; 2]).unwrap() - 2.0).abs() < 1e-9);
    let p3 = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
    assert!((normalized_energy_of(&array![[1.0], [0.0], [1.0]], &p3, &[true; 3]).unwrap() - 1.0).abs() < 1e-9);
    // constant features on regular graphs
    for n in 3..8 {
        let cycle = Array2::from_shape_fn(
            (n, n),
            |(i, j)| if (i + 1) % n == j || (j + 1) % n == i { 1.0 } else { 0.0 },
        );
        let e = normalized_energy_of(&Array2::from_elem((n, 3), 0.7), &cycle, &vec![true; n]).unwrap();
        assert!(e.abs() < 1e-9);
    }
}
