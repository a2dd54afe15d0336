use std::path::Path;

use metastab::checkpoint::{decode, encode, load_params, save_params};
use metastab::flowfile;
use metastab_core::flow::FlowField;
use metastab_core::tensor::{ParamSet, Tensor};
use proptest::prelude::*;

fn table() -> impl Strategy<Value = Vec<(String, Vec<usize>, Vec<f32>)>> {
    prop::collection::vec(
        ("[a-z][a-z0-9._]{0,12}", prop::collection::vec(1usize..4, 0..4)).prop_flat_map(|(name, shape)| {
            let n = shape.iter().product::<usize>();
            (Just(name), Just(shape), prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), n))
        }),
        0..5,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoint_round_trip_is_bit_exact(entries in table()) {
        let mut ps = ParamSet::new();
        for (name, shape, data) in &entries {
            ps.push(name.clone(), Tensor::param(shape, data.clone()).unwrap());
        }
        let bytes = encode(&ps);
        let back = decode(&bytes, Path::new("p")).unwrap();
        prop_assert_eq!(back.len(), ps.len());
        for (a, b) in ps.iter().zip(back.iter()) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(a.tensor.shape(), b.tensor.shape());
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.tensor), bits(&b.tensor));
        }
        prop_assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn flow_round_trip_is_bit_exact(w in 1usize..9, h in 1usize..9, seed in any::<u32>()) {
        let n = w * h;
        let u: Vec<f32> = (0..n).map(|i| (i as f32 - seed as f32 * 1e-3).sin() * 40.0).collect();
        let v: Vec<f32> = (0..n).map(|i| (i as f32 * 0.7 + seed as f32).cos() * -3.0).collect();
        let f = FlowField::new(w, h, u.clone(), v.clone(), vec![1.0; n]).unwrap();
        let back = flowfile::decode(&flowfile::encode(&f), Path::new("f")).unwrap();
        prop_assert_eq!(back.u(), &u[..]);
        prop_assert_eq!(back.v(), &v[..]);
    }
}

#[test]
fn checkpoint_files_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let mut ps = ParamSet::new();
    ps.push("a.w", Tensor::param(&[2, 2], vec![0.1f32, -0.2, 0.3, -0.4]).unwrap());
    let p = d.path().join("nested/m.mstb");
    save_params(&ps, &p).unwrap();
    assert_eq!(encode(&load_params(&p).unwrap()), encode(&ps));
    assert!(load_params(d.path().join("missing.mstb")).is_err());
}
