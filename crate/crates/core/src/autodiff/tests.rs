use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check;
use super::*;

const H: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn values(tape: &Tape<f64>, v: Var) -> Vec<f64> {
    tape.value(v).data().to_vec()
}

#[test]
fn matmul_identity_and_hand_cases() {
    let mut t = Tape::<f64>::new();
    let i = t.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
    let b = t.constant(Tensor::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]).unwrap());
    let c = t.matmul(i, b).unwrap();
    assert_eq!(values(&t, c), vec![3.0, 4.0, 5.0, 6.0]);

    let x = t.constant(Tensor::from_rows(&[&[1.0, 2.0]]).unwrap());
    let y = t.constant(Tensor::from_rows(&[&[3.0], &[4.0]]).unwrap());
    let z = t.matmul(x, y).unwrap();
    assert_eq!(t.value(z).shape(), &[1, 1]);
    assert_eq!(values(&t, z), vec![11.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut t = Tape::<f64>::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    match t.matmul(a, b) {
        Err(Error::Dimension { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[4, 5]);
    let b = rand_tensor(&mut rng, &[5, 3]);
    let w = rand_tensor(&mut rng, &[4, 3]);
    let r = check(&[a, b, w], H, |t, v| {
        let c = t.matmul(v[0], v[1])?;
        let cw = t.mul(c, v[2])?;
        Ok(t.sum(cw))
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn elementwise_identities_and_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_tensor(&mut rng, &[3, 3]);
    let mut t = Tape::<f64>::new();
    let xv = t.constant(x.clone());
    let zero = t.constant(Tensor::scalar(0.0));
    let one = t.constant(Tensor::scalar(1.0));
    let s = t.add(xv, zero).unwrap();
    let m = t.mul(xv, one).unwrap();
    assert_eq!(t.value(s), &x);
    assert_eq!(t.value(m).data(), x.data());

    let other = t.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(t.add(xv, other), Err(Error::Dimension { .. })));
}

#[test]
fn elementwise_gradients_including_scalar_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_tensor(&mut rng, &[3, 3]);
    let b = rand_tensor(&mut rng, &[3, 3]);
    let s = rand_tensor(&mut rng, &[1]);
    let r = check(&[a, b, s], H, |t, v| {
        let d = t.sub(v[0], v[1])?;
        let e = t.mul(d, v[0])?;
        let f = t.mul(e, v[2])?;
        let g = t.add(f, v[2])?;
        Ok(t.sum(g))
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn softmax_rows_are_distributions() {
    let mut t = Tape::<f64>::new();
    let a = t.constant(Tensor::from_rows(&[&[0.0, 0.0, 0.0]]).unwrap());
    let s = t.softmax_rows(a);
    for &p in t.value(s).data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let b = t.constant(Tensor::from_rows(&[&[1000.0, 0.0]]).unwrap());
    let s = t.softmax_rows(b);
    let v = values(&t, s);
    assert!(v.iter().all(|x| x.is_finite()));
    assert!((v[0] - 1.0).abs() < 1e-12 && v[1] < 1e-300 + 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let x = rand_tensor(&mut rng, &[5, 7]).map(|v| v * 30.0);
        let xv = t.constant(x);
        let s = t.softmax_rows(xv);
        for r in 0..5 {
            let row = t.value(s).row(r);
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn softmax_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = rand_tensor(&mut rng, &[2, 4]);
    let w = rand_tensor(&mut rng, &[2, 4]);
    let r = check(&[a, w], H, |t, v| {
        let s = t.softmax_rows_r(v[0])?;
        let sw = t.mul(s, v[1])?;
        Ok(t.sum(sw))
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

// `softmax_rows` is infallible; adapt it for the `?` chains above.
trait InfallibleOk {
    fn ok_var(self) -> Result<Var>;
}

impl InfallibleOk for Var {
    fn ok_var(self) -> Result<Var> {
        Ok(self)
    }
}

impl<T: Real> Tape<T> {
    fn softmax_rows_r(&mut self, a: Var) -> Result<Var> {
        self.softmax_rows(a).ok_var()
    }
}

#[test]
fn rms_norm_degenerate_and_constant_slices() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::from_rows(&[&[2.5; 8], &[0.0; 8], &[-1.5; 8]]).unwrap());
    let g = t.constant(Tensor::vector(vec![1.0; 8]));
    let y = t.rms_norm(x, g).unwrap();
    let out = t.value(y);
    for &v in out.row(0) {
        assert!((v - 2.5 / (2.5f64 * 2.5 + 1e-6).sqrt()).abs() < 1e-15);
        assert!((v - 1.0).abs() < 1e-6);
    }
    assert!(out.row(1).iter().all(|&v| v == 0.0));
    assert!(out.row(2).iter().all(|&v| (v + 1.0).abs() < 1e-6));

    let bad = t.constant(Tensor::vector(vec![1.0; 7]));
    assert!(t.rms_norm(x, bad).is_err());
}

#[test]
fn rms_norm_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = rand_tensor(&mut rng, &[2, 8]);
    let g = rand_tensor(&mut rng, &[8]);
    let w = rand_tensor(&mut rng, &[2, 8]);
    let r = check(&[a, g, w], H, |t, v| {
        let y = t.rms_norm(v[0], v[1])?;
        let yw = t.mul(y, v[2])?;
        Ok(t.sum(yw))
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn silu_concat_mse_basics() {
    let mut t = Tape::<f64>::new();
    let z = t.constant(Tensor::scalar(0.0));
    let s = t.silu(z);
    assert_eq!(values(&t, s), vec![0.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_tensor(&mut rng, &[6, 4]);
    let xv = t.constant(x);
    let m = t.mse(xv, xv).unwrap();
    assert_eq!(values(&t, m), vec![0.0]);

    let a = rand_tensor(&mut rng, &[5, 2]);
    let b = rand_tensor(&mut rng, &[5, 3]);
    let (av, bv) = (t.constant(a.clone()), t.constant(b.clone()));
    let c = t.concat_cols(&[av, bv]).unwrap();
    assert_eq!(t.value(c).shape(), &[5, 5]);
    for r in 0..5 {
        for j in 0..2 {
            assert_eq!(t.value(c).get2(r, j), a.get2(r, j));
        }
        for j in 0..3 {
            assert_eq!(t.value(c).get2(r, 2 + j), b.get2(r, j));
        }
    }
    let wrong = t.constant(Tensor::zeros(&[4, 3]));
    assert!(matches!(t.concat_cols(&[av, wrong]), Err(Error::Dimension { .. })));
    assert!(matches!(t.mse(av, bv), Err(Error::Dimension { .. })));
}

#[test]
fn backward_of_sum_is_ones_and_accumulates() {
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::from_rows(&[&[1.0, -2.0], &[3.0, 0.5]]).unwrap());
    let s = t.sum(x);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[1.0; 4]);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[2.0; 4]);
    t.zero_grads();
    assert!(t.grad(x).is_none());
    assert!(matches!(t.backward(x), Err(Error::Contract(_))));
}

#[test]
fn mse_of_linear_map_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w = rand_tensor(&mut rng, &[3, 4]);
    let x = rand_tensor(&mut rng, &[4, 2]);
    let y = rand_tensor(&mut rng, &[3, 2]);
    let r = check(&[w, x, y], H, |t, v| {
        let wx = t.matmul(v[0], v[1])?;
        t.mse(wx, v[2])
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-5, "{r:?}");
}

#[test]
fn two_layer_mlp_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&mut rng, &[5, 3]);
    let w1 = rand_tensor(&mut rng, &[3, 6]);
    let b1 = rand_tensor(&mut rng, &[6]);
    let w2 = rand_tensor(&mut rng, &[6, 2]);
    let b2 = rand_tensor(&mut rng, &[2]);
    let y = rand_tensor(&mut rng, &[5, 2]);
    let r = check(&[x, w1, b1, w2, b2, y], H, |t, v| {
        let h = t.matmul(v[0], v[1])?;
        let h = t.add_row(h, v[2])?;
        let h = t.silu(h);
        let o = t.matmul(h, v[3])?;
        let o = t.add_row(o, v[4])?;
        t.mse(o, v[5])
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-5, "{r:?}");
}

#[test]
fn structural_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let params = RopeParams::new(4).unwrap();
    let positions = [0.0, 1.5, 7.0];
    for _ in 0..20 {
        let a = rand_tensor(&mut rng, &[3, 8]);
        let b = rand_tensor(&mut rng, &[3, 2]);
        let w = rand_tensor(&mut rng, &[3, 7]);
        let r = check(&[a, b, w], H, |t, v| {
            let r = t.rope(v[0], &positions, &params)?;
            let s = t.slice_cols(r, 1, 5)?;
            let c = t.concat_cols(&[s, v[1]])?;
            let tt = t.transpose(c)?;
            let back = t.transpose(tt)?;
            let sc = t.scale(back, 0.7);
            let p = t.mul(sc, v[2])?;
            let q = t.softmax_rows_r(p)?;
            let q = t.mul(q, v[2])?;
            Ok(t.sum(q))
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-5, "{r:?}");
    }
}

#[test]
fn ops_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_tensor(&mut rng, &[6, 6]);
    let run = || {
        let mut t = Tape::<f64>::new();
        let v = t.param(a.clone());
        let m = t.matmul(v, v).unwrap();
        let s = t.softmax_rows(m);
        let l = t.sum(s);
        t.backward(l).unwrap();
        (values(&t, s), t.grad(v).unwrap().to_vec())
    };
    assert_eq!(run(), run());
}

#[test]
fn mac_counter_tracks_matmuls() {
    let mut t = Tape::<f32>::new();
    let a = t.constant(Tensor::zeros(&[3, 4]));
    let b = t.constant(Tensor::zeros(&[4, 5]));
    t.matmul(a, b).unwrap();
    assert_eq!(t.macs(), 60);
}
