use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

type Build = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

/// Central-difference oracle: perturbs each input element of each
/// differentiable input and re-runs the forward pass only.
fn numeric_grads(inputs: &[(Vec<usize>, Vec<f64>)], f: &Build, h: f64) -> Vec<Vec<f64>> {
    let eval = |vals: &[(Vec<usize>, Vec<f64>)]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|(s, d)| tape.constant(s, d.clone()).unwrap()).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.scalar(out)
    };
    let mut out = Vec::new();
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].1.len()];
        for k in 0..g.len() {
            let mut plus = inputs.to_vec();
            plus[i].1[k] += h;
            let mut minus = inputs.to_vec();
            minus[i].1[k] -= h;
            g[k] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

fn analytic_grads(inputs: &[(Vec<usize>, Vec<f64>)], f: &Build) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|(s, d)| tape.variable(s, d.clone()).unwrap()).collect();
    let out = f(&mut tape, &vars).unwrap();
    tape.backward(out).unwrap();
    vars.iter()
        .map(|&v| tape.grad(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; tape.value(v).len()]))
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn check(inputs: Vec<(Vec<usize>, Vec<f64>)>, f: &Build) -> f64 {
    let a = analytic_grads(&inputs, f);
    let n = numeric_grads(&inputs, f, 1e-3);
    a.iter().zip(&n).map(|(x, y)| rel_err(x, y)).fold(0.0, f64::max)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero so kinks are not crossed by the stencil.
fn rand_signed(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Scalarises any output with a fixed random projection.
fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.shape(out).to_vec();
    let n = tape.value(out).len();
    let w = tape.constant(&shape, rand_vec(&mut rng, n, -1.0, 1.0))?;
    let m = tape.mul(out, w)?;
    Ok(tape.sum(m))
}

const TOL: f64 = 1e-5;

#[test]
fn conv2d_center_of_ones_is_nine() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(&[1, 1, 4, 4], vec![1.0; 16]).unwrap();
    let w = tape.constant(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
    let y = tape.conv2d(x, w, None, 1, 1).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 4, 4]);
    assert_eq!(tape.value(y)[5], 9.0);
    assert_eq!(tape.value(y)[0], 4.0);
}

#[test]
fn relu_examples() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(&[2], vec![-2.0, 3.0]).unwrap();
    let y = tape.relu(x);
    assert_eq!(tape.value(y), &[0.0, 3.0]);
}

#[test]
fn bilinear_sampling_on_integer_grid_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (h, w) = (5, 7);
    let img = rand_vec(&mut rng, 2 * h * w, 0.0, 1.0);
    let mut coords = vec![0.0; 2 * h * w];
    for y in 0..h {
        for x in 0..w {
            coords[y * w + x] = x as f64;
            coords[h * w + y * w + x] = y as f64;
        }
    }
    let mut tape = Tape::<f64>::new();
    let i = tape.constant(&[1, 2, h, w], img.clone()).unwrap();
    let c = tape.constant(&[1, 2, h, w], coords).unwrap();
    let o = tape.grid_sample(i, c).unwrap();
    assert_eq!(tape.value(o), img.as_slice());
}

#[test]
fn sum_of_squares_gradient() {
    let mut tape = Tape::<f64>::new();
    let x = tape.variable(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
}

#[test]
fn mean_abs_gradient() {
    let mut tape = Tape::<f64>::new();
    let x = tape.variable(&[3], vec![1.0, -1.0, 2.0]).unwrap();
    let a = tape.abs(x);
    let m = tape.mean(a);
    tape.backward(m).unwrap();
    let g = tape.grad(x).unwrap();
    for (got, want) in g.iter().zip([1.0 / 3.0, -1.0 / 3.0, 1.0 / 3.0]) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn backward_rejects_non_scalar_root() {
    let mut tape = Tape::<f32>::new();
    let x = tape.variable(&[2], vec![1.0, 2.0]).unwrap();
    assert_eq!(tape.backward(x), Err(Error::NonScalarRoot(vec![2])));
}

#[test]
fn shape_errors_name_operation_and_shapes() {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(&[2, 3], vec![0.0; 6]).unwrap();
    let b = tape.constant(&[2, 2], vec![0.0; 4]).unwrap();
    match tape.add(a, b) {
        Err(Error::ShapeMismatch { op, lhs, rhs }) => {
            assert_eq!(op, "add");
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 2]);
        }
        other => panic!("unexpected {other:?}"),
    }
    let err = tape.matmul(a, b).unwrap_err();
    assert!(alloc::format!("{err}").contains("matmul"));
}

#[test]
fn constants_never_receive_gradients() {
    let mut tape = Tape::<f64>::new();
    let c = tape.constant(&[2], vec![1.0, 2.0]).unwrap();
    let x = tape.variable(&[2], vec![3.0, 4.0]).unwrap();
    let p = tape.mul(c, x).unwrap();
    let s = tape.sum(p);
    tape.backward(s).unwrap();
    assert!(tape.grad(c).is_none());
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 2.0]);
}

#[test]
fn gradcheck_elementwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_signed(&mut rng, 12);
    let b = rand_signed(&mut rng, 12);
    let pos = rand_vec(&mut rng, 12, 0.2, 2.0);
    let s = vec![3, 4];
    for (name, f) in [
        ("add", (|t: &mut Tape<f64>, v: &[Var]| t.add(v[0], v[1])) as fn(&mut Tape<f64>, &[Var]) -> Result<Var>),
        ("sub", |t, v| t.sub(v[0], v[1])),
        ("mul", |t, v| t.mul(v[0], v[1])),
        ("div", |t, v| t.div(v[0], v[1])),
    ] {
        let second = if name == "div" { pos.clone() } else { b.clone() };
        let build = move |t: &mut Tape<f64>, v: &[Var]| {
            let o = f(t, v)?;
            project(t, o, 1)
        };
        let e = check(vec![(s.clone(), a.clone()), (s.clone(), second)], &build);
        assert!(e < TOL, "{name}: {e}");
    }
    for (name, f) in [
        ("relu", (|t: &mut Tape<f64>, x: Var| Ok(t.relu(x))) as fn(&mut Tape<f64>, Var) -> Result<Var>),
        ("leaky_relu", |t, x| Ok(t.leaky_relu(x, 0.2))),
        ("abs", |t, x| Ok(t.abs(x))),
        ("square", |t, x| Ok(t.square(x))),
        ("exp", |t, x| Ok(t.exp(x))),
        ("scale", |t, x| Ok(t.scale(x, -1.7))),
        ("offset", |t, x| Ok(t.offset(x, 0.3))),
        ("clamp", |t, x| Ok(t.clamp(x, -0.5, 0.5))),
        ("sum", |t, x| Ok(t.sum(x))),
        ("mean", |t, x| Ok(t.mean(x))),
        ("reshape", |t, x| t.reshape(x, &[2, 6])),
        ("transpose", |t, x| t.transpose(x)),
    ] {
        let mut input = a.clone();
        if name == "clamp" {
            // keep clear of the clamp boundaries
            input.iter_mut().for_each(|v| {
                if (v.abs() - 0.5).abs() < 0.02 {
                    *v *= 0.8
                }
            });
        }
        let build = move |t: &mut Tape<f64>, v: &[Var]| {
            let o = f(t, v[0])?;
            project(t, o, 2)
        };
        let e = check(vec![(s.clone(), input)], &build);
        assert!(e < TOL, "{name}: {e}");
    }
    for (name, f) in [
        ("sqrt", (|t: &mut Tape<f64>, x: Var| Ok(t.sqrt(x))) as fn(&mut Tape<f64>, Var) -> Result<Var>),
        ("ln", |t, x| Ok(t.ln(x))),
    ] {
        let build = move |t: &mut Tape<f64>, v: &[Var]| {
            let o = f(t, v[0])?;
            project(t, o, 3)
        };
        let e = check(vec![(s.clone(), pos.clone())], &build);
        assert!(e < TOL, "{name}: {e}");
    }
}

#[test]
fn gradcheck_matmul_and_broadcasts() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = rand_vec(&mut rng, 12, -1.0, 1.0);
    let b = rand_vec(&mut rng, 20, -1.0, 1.0);
    let build = |t: &mut Tape<f64>, v: &[Var]| {
        let o = t.matmul(v[0], v[1])?;
        project(t, o, 4)
    };
    let e = check(vec![(vec![3, 4], a.clone()), (vec![4, 5], b)], &build);
    assert!(e < TOL, "matmul: {e}");

    let rows = rand_vec(&mut rng, 3, 0.5, 1.5);
    let cols = rand_vec(&mut rng, 4, 0.5, 1.5);
    for kind in [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div] {
        let build = move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.per_row(kind, v[0], v[1])?;
            project(t, o, 5)
        };
        let e = check(vec![(vec![3, 4], a.clone()), (vec![3], rows.clone())], &build);
        assert!(e < TOL, "per_row {kind:?}: {e}");
        let build = move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.per_col(kind, v[0], v[1])?;
            project(t, o, 6)
        };
        let e = check(vec![(vec![3, 4], a.clone()), (vec![4], cols.clone())], &build);
        assert!(e < TOL, "per_col {kind:?}: {e}");
    }
    for axis in [0, 1] {
        for kind in [Reduce::Sum, Reduce::Max, Reduce::Min] {
            let build = move |t: &mut Tape<f64>, v: &[Var]| {
                let o = t.reduce(v[0], axis, kind)?;
                project(t, o, 7)
            };
            let e = check(vec![(vec![3, 4], a.clone())], &build);
            assert!(e < TOL, "reduce {axis} {kind:?}: {e}");
        }
    }
}

#[test]
fn gradcheck_spatial_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = rand_vec(&mut rng, 2 * 3 * 6 * 6, -1.0, 1.0);
    let w = rand_vec(&mut rng, 4 * 3 * 3 * 3, -0.5, 0.5);
    let b = rand_vec(&mut rng, 4, -0.5, 0.5);
    for (stride, pad) in [(1, 1), (2, 1), (1, 0)] {
        let build = move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
            project(t, o, 8)
        };
        let e = check(
            vec![(vec![2, 3, 6, 6], x.clone()), (vec![4, 3, 3, 3], w.clone()), (vec![4], b.clone())],
            &build,
        );
        assert!(e < TOL, "conv2d s{stride} p{pad}: {e}");
    }
    for (name, f) in [
        ("upsample2x", (|t: &mut Tape<f64>, x: Var| t.upsample2x(x)) as fn(&mut Tape<f64>, Var) -> Result<Var>),
        ("avg_pool2x", |t, x| t.avg_pool2x(x)),
        ("spatial_mean", |t, x| t.spatial_mean(x)),
        ("narrow", |t, x| t.narrow(x, 1, 1, 2)),
        ("narrow_batch", |t, x| t.narrow(x, 0, 1, 1)),
    ] {
        let build = move |t: &mut Tape<f64>, v: &[Var]| {
            let o = f(t, v[0])?;
            project(t, o, 9)
        };
        let e = check(vec![(vec![2, 3, 6, 6], x.clone())], &build);
        assert!(e < TOL, "{name}: {e}");
    }
    let y = rand_vec(&mut rng, 2 * 2 * 6 * 6, -1.0, 1.0);
    let build = |t: &mut Tape<f64>, v: &[Var]| {
        let o = t.concat(&[v[0], v[1]])?;
        project(t, o, 10)
    };
    let e = check(vec![(vec![2, 3, 6, 6], x.clone()), (vec![2, 2, 6, 6], y)], &build);
    assert!(e < TOL, "concat: {e}");
}

#[test]
fn gradcheck_grid_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (h, w) = (6, 7);
    let img = rand_vec(&mut rng, 2 * 2 * h * w, 0.0, 1.0);
    // fractional parts away from 0 and 1 so the stencil stays in one cell,
    // some coordinates fall outside the image to exercise edge replication
    let mut coords = Vec::new();
    for _ in 0..2 {
        for axis in 0..2 {
            let lim = if axis == 0 { w } else { h } as f64;
            for _ in 0..(4 * 5) {
                let base: f64 = rng.random_range(-2.0..lim + 1.0);
                coords.push(base.floor() + rng.random_range(0.1..0.9));
            }
        }
    }
    let build = |t: &mut Tape<f64>, v: &[Var]| {
        let o = t.grid_sample(v[0], v[1])?;
        project(t, o, 11)
    };
    let e = check(vec![(vec![2, 2, h, w], img), (vec![2, 2, 4, 5], coords)], &build);
    assert!(e < TOL, "grid_sample: {e}");
}

#[test]
fn gradcheck_three_layer_conv_net() {
    // Piecewise-linear activations make the stencil wrong wherever a
    // perturbation flips a pre-activation sign; those coordinates are
    // detected by comparing activation patterns and left out.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = rand_vec(&mut rng, 3 * 8 * 8, 0.0, 1.0);
    let w1 = rand_vec(&mut rng, 4 * 3 * 9, -0.5, 0.5);
    let w2 = rand_vec(&mut rng, 4 * 4 * 9, -0.5, 0.5);
    let w3 = rand_vec(&mut rng, 2 * 4 * 9, -0.5, 0.5);
    let forward = |t: &mut Tape<f64>, v: &[Var]| -> Result<(Var, Vec<bool>)> {
        let a1 = t.conv2d(v[0], v[1], None, 1, 1)?;
        let h = t.leaky_relu(a1, 0.2);
        let a2 = t.conv2d(h, v[2], None, 2, 1)?;
        let h = t.relu(a2);
        let h = t.conv2d(h, v[3], None, 1, 1)?;
        let sq = t.square(h);
        let pattern = t.value(a1).iter().chain(t.value(a2)).map(|&z| z > 0.0).collect();
        Ok((t.mean(sq), pattern))
    };
    let inputs = vec![
        (vec![1, 3, 8, 8], x),
        (vec![4, 3, 3, 3], w1),
        (vec![4, 4, 3, 3], w2),
        (vec![2, 4, 3, 3], w3),
    ];
    let build = move |t: &mut Tape<f64>, v: &[Var]| forward(t, v).map(|(o, _)| o);
    let pattern_at = |vals: &[(Vec<usize>, Vec<f64>)]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|(s, d)| t.constant(s, d.clone()).unwrap()).collect();
        forward(&mut t, &vars).unwrap().1
    };
    let h = 1e-3;
    let centre = pattern_at(&inputs);
    let analytic = analytic_grads(&inputs, &build);
    let numeric = numeric_grads(&inputs, &build, h);
    let mut skipped = 0;
    let mut total = 0;
    for i in 0..inputs.len() {
        let (mut a, mut n) = (Vec::new(), Vec::new());
        for k in 0..inputs[i].1.len() {
            total += 1;
            let mut plus = inputs.clone();
            plus[i].1[k] += h;
            let mut minus = inputs.clone();
            minus[i].1[k] -= h;
            if pattern_at(&plus) != centre || pattern_at(&minus) != centre {
                skipped += 1;
                continue;
            }
            a.push(analytic[i][k]);
            n.push(numeric[i][k]);
        }
        let e = rel_err(&a, &n);
        assert!(e < TOL, "3-layer conv net input {i}: {e}");
    }
    assert!(skipped * 10 < total, "too many kink crossings: {skipped}/{total}");
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x: Vec<f32> = (0..3 * 16 * 16).map(|_| rng.random()).collect();
    let w: Vec<f32> = (0..8 * 3 * 9).map(|_| rng.random::<f32>() - 0.5).collect();
    let run = || {
        let mut t = Tape::<f32>::new();
        let xv = t.constant(&[1, 3, 16, 16], x.clone()).unwrap();
        let wv = t.constant(&[8, 3, 3, 3], w.clone()).unwrap();
        let y = t.conv2d(xv, wv, None, 1, 1).unwrap();
        t.value(y).to_vec()
    };
    let (a, b) = (run(), run());
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn backward_visits_each_node_once() {
    // a diamond: the shared node must accumulate both branches exactly once
    let mut tape = Tape::<f64>::new();
    let x = tape.variable(&[1], vec![2.0]).unwrap();
    let a = tape.scale(x, 3.0);
    let b = tape.square(a);
    let c = tape.add(a, b).unwrap();
    let s = tape.sum(c);
    tape.backward(s).unwrap();
    // d/dx (3x + 9x^2) = 3 + 18x = 39
    assert_eq!(tape.grad(x).unwrap(), &[39.0]);
}

