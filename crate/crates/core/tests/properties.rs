use std::f64::consts::TAU;

use freesurf::config::SimulationConfig;
use freesurf::elliptic::{Cholesky, SolverOptions, WideOperator};
use freesurf::evolution::{FlowState, Physics, Scheme};
use freesurf::grid::{Clustering, Field, Grid, VectorField};
use freesurf::io::{decode_checkpoint, encode_checkpoint};
use freesurf::operators::{
    div_phi, div_phi_componentwise, div_phi_matrix, grad_phi, grad_phi_matrix, metric_matrices,
};
use freesurf::surface::{build_diffeomorphism, Diffeomorphism, SurfaceState};
use freesurf::viscous::StrainForm;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rustfft::num_complex::Complex64;

fn surface(g: &Grid, a1: f64, a2: f64, th: f64) -> (SurfaceState, Diffeomorphism) {
    let h = SurfaceState::from_fn(g, |y| a1 * (y + th).cos() + a2 * (2.0 * y).sin());
    let d = build_diffeomorphism(g, &h, 1.0, 0.2, &Default::default()).unwrap();
    (h, d)
}

fn field(g: &Grid, c: [f64; 4]) -> Field {
    Field::from_fn(g, |y, z| c[0] * (y + c[1]).sin() * (c[2] * z).exp() + c[3] * z * z * (2.0 * y).cos())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cholesky_matches_dense_solve(seed in prop::collection::vec(-1.0f64..1.0, 36), rhs in prop::collection::vec(-1.0f64..1.0, 6)) {
        let n = 6;
        let b = DMatrix::from_row_slice(n, n, &seed);
        let a = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
        let x = a.clone().lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        let mut z: Vec<Complex64> = rhs.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        Cholesky::factor(n, a.transpose().as_slice().to_vec()).unwrap().solve(&mut z);
        for i in 0..n {
            prop_assert!((z[i].re - x[i]).abs() < 1e-10 * (1.0 + x[i].abs()));
        }
    }

    #[test]
    fn vertical_difference_sums_by_parts(f in prop::collection::vec(-1.0f64..1.0, 20), h in prop::collection::vec(-1.0f64..1.0, 20), beta in 0.5f64..3.0) {
        let g = Grid::new(8, 20, TAU, 2.0, Clustering::Tanh { beta }).unwrap();
        let w = g.quadrature_weights_z();
        let df = g.diff_column(&f);
        let dh = g.diff_column(&h);
        let lhs: f64 = (0..20).map(|k| w[k] * (f[k] * dh[k] + h[k] * df[k])).sum();
        let rhs = f[19] * h[19] - f[0] * h[0];
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn operator_routes_agree(a1 in -0.2f64..0.2, a2 in -0.1f64..0.1, th in 0.0f64..TAU, c in prop::array::uniform4(-1.0f64..1.0)) {
        let g = Grid::new(16, 16, TAU, 2.0, Clustering::Tanh { beta: 2.0 }).unwrap();
        let (_, d) = surface(&g, a1, a2, th);
        let m = metric_matrices(&d).unwrap();
        let f = field(&g, c);
        prop_assert!((&grad_phi(&g, &f, &d).unwrap() - &grad_phi_matrix(&g, &f, &m)).max_abs() < 1e-12);
        let v = VectorField::new(f.clone(), field(&g, [c[3], c[2], c[1], c[0]]));
        let dv = div_phi_componentwise(&g, &v, &d).unwrap();
        prop_assert!((&dv - &div_phi_matrix(&g, &v, &m)).max_abs() < 1e-12 * (1.0 + dv.max_abs()));
    }

    #[test]
    fn projection_is_divergence_free_and_idempotent(a1 in -0.15f64..0.15, th in 0.0f64..TAU, c in prop::array::uniform4(-1.0f64..1.0)) {
        let g = Grid::new(16, 16, TAU, 2.0, Clustering::Uniform).unwrap();
        let (_, d) = surface(&g, a1, 0.0, th);
        let w = WideOperator::new(&g, &d, &metric_matrices(&d).unwrap()).unwrap();
        let v = VectorField::new(field(&g, c), field(&g, [c[1], c[0], c[3], c[2]]));
        let opts = SolverOptions::with_tol(1e-12);
        let (p, _) = w.project(&g, &v, &opts).unwrap();
        let div = div_phi(&g, &p, &d).unwrap();
        let interior = (1..g.top()).map(|k| div.row(k).iter().fold(0.0f64, |a, b| a.max(b.abs()))).fold(0.0, f64::max);
        let scale = 1.0 + v.y.max_abs().max(v.z.max_abs());
        prop_assert!(interior < 1e-8 * scale);
        let (pp, _) = w.project(&g, &p, &opts).unwrap();
        prop_assert!((&pp - &p).max_abs() < 1e-8 * scale);
    }

    #[test]
    fn strain_form_is_symmetric_and_nonnegative(a1 in -0.2f64..0.2, th in 0.0f64..TAU, c in prop::array::uniform4(-1.0f64..1.0), e in prop::array::uniform4(-1.0f64..1.0)) {
        let g = Grid::new(16, 12, TAU, 2.0, Clustering::Tanh { beta: 1.5 }).unwrap();
        let (_, d) = surface(&g, a1, 0.0, th);
        let k = StrainForm::assemble(&g, &d).unwrap();
        let u = VectorField::new(field(&g, c), field(&g, e));
        let w = VectorField::new(field(&g, e), field(&g, c));
        let stack = |v: &VectorField| [v.y.values(), v.z.values()].concat();
        let (x, y) = (stack(&u), stack(&w));
        let mut kx = vec![0.0; x.len()];
        let mut ky = vec![0.0; y.len()];
        k.apply(&x, &mut kx);
        k.apply(&y, &mut ky);
        let a: f64 = ky.iter().zip(&x).map(|(p, q)| p * q).sum();
        let b: f64 = kx.iter().zip(&y).map(|(p, q)| p * q).sum();
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        prop_assert!(k.energy(&u) >= -1e-13);
    }

    #[test]
    fn checkpoints_round_trip(a1 in -0.2f64..0.2, th in 0.0f64..TAU, c in prop::array::uniform4(-1.0f64..1.0), t in 0.0f64..10.0, step in 0u64..10_000) {
        let g = Grid::new(8, 10, TAU, 2.0, Clustering::Uniform).unwrap();
        let (h, _) = surface(&g, a1, 0.0, th);
        let v = VectorField::new(field(&g, c), field(&g, [c[2], c[3], c[0], c[1]]));
        let mut s = FlowState::new(&g, v, h, 1.0, &Scheme::default()).unwrap();
        s.t = t;
        s.step = step;
        let p = Physics { eps: c[0].abs(), g: 1.0, sigma: c[1].abs() };
        let bytes = encode_checkpoint(&g, &s, &p);
        let (_, back) = decode_checkpoint(&g, &Scheme::default(), &bytes).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(encode_checkpoint(&g, &back, &p), bytes);
    }

    #[test]
    fn configs_round_trip(eps in 0.0f64..1.0, sigma in 0.0f64..2.0, n in 4usize..32, a in -0.1f64..0.1, t in 0.01f64..10.0) {
        let text = format!(
            "[grid]\nn_y = {}\n[physics]\neps = {eps}\nsigma = {sigma}\n[scheme]\nt_final = {t}\n[initial]\npreset = \"standing_wave\"\na = {a}\nk = 1\n",
            2 * n
        );
        let c = SimulationConfig::parse(&text).unwrap();
        prop_assert_eq!(&SimulationConfig::parse(&c.to_toml()).unwrap(), &c);
    }
}
