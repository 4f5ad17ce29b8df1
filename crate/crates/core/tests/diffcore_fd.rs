//! Finite-difference validation of every primitive, first and second order,
//! plus bit-determinism of graph evaluation.

use lbt_core::diffcore::{finite_difference_check, gradient, Node, Rng, Tensor};

struct Case {
    name: &'static str,
    len: usize,
    lo: f64,
    hi: f64,
    f: Box<dyn Fn(&Node) -> Node>,
}

fn weights(len: usize) -> Tensor {
    // Fixed non-uniform weights so reductions have distinct per-coordinate
    // gradients.
    let data: Vec<f64> = (0..len).map(|i| 0.3 + 0.17 * i as f64).collect();
    Tensor::from_vec(vec![len], data).unwrap()
}

fn weighted_sum(y: &Node) -> Node {
    let n = y.numel();
    let w = Node::constant(weights(n).reshaped_like(y.shape()));
    (y * &w).sum()
}

trait ReshapeLike {
    fn reshaped_like(self, shape: &[usize]) -> Tensor;
}

impl ReshapeLike for Tensor {
    fn reshaped_like(self, shape: &[usize]) -> Tensor {
        Tensor::from_vec(shape.to_vec(), self.into_data()).unwrap()
    }
}

fn cases() -> Vec<Case> {
    let c6 = Tensor::vector(&[0.7, -1.1, 2.3, 0.4, -0.6, 1.9]);
    let c6_pos = Tensor::vector(&[0.7, 1.1, 2.3, 0.4, 0.6, 1.9]);
    let m32 = Tensor::matrix(3, 2, vec![0.2, -0.4, 1.1, 0.9, -0.7, 0.3]).unwrap();
    vec![
        Case {
            name: "add",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: {
                let c = c6.clone();
                Box::new(move |x| weighted_sum(&(x + &Node::constant(c.clone()))))
            },
        },
        Case {
            name: "sub",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: {
                let c = c6.clone();
                Box::new(move |x| weighted_sum(&(&Node::constant(c.clone()) - x)))
            },
        },
        Case {
            name: "mul",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: {
                let c = c6.clone();
                Box::new(move |x| weighted_sum(&(x * &Node::constant(c.clone()))))
            },
        },
        Case {
            name: "div_numerator",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: {
                let c = c6_pos.clone();
                Box::new(move |x| weighted_sum(&(x / &Node::constant(c.clone()))))
            },
        },
        Case {
            name: "div_denominator",
            len: 6,
            lo: 0.5,
            hi: 2.0,
            f: {
                let c = c6.clone();
                Box::new(move |x| weighted_sum(&(&Node::constant(c.clone()) / x)))
            },
        },
        Case {
            name: "neg",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.neg())),
        },
        Case {
            name: "matmul_lhs",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: {
                let m = m32.clone();
                Box::new(move |x| weighted_sum(&x.reshape([2, 3]).matmul(&Node::constant(m.clone()))))
            },
        },
        Case {
            name: "matmul_rhs",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: {
                let m = m32.clone();
                Box::new(move |x| {
                    weighted_sum(&Node::constant(m.clone()).transpose().matmul(&x.reshape([3, 2])))
                })
            },
        },
        Case {
            name: "sum",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| x.sum().square()),
        },
        Case {
            name: "mean",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| x.mean().square()),
        },
        Case {
            name: "broadcast",
            len: 3,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.broadcast([4, 3]).square())),
        },
        Case {
            name: "sum_to",
            len: 12,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.reshape([4, 3]).sum_to([3]).square())),
        },
        Case {
            name: "reshape_transpose",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.reshape([2, 3]).transpose().square())),
        },
        Case {
            name: "exp",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.exp())),
        },
        Case {
            name: "log",
            len: 6,
            lo: 0.5,
            hi: 2.5,
            f: Box::new(|x| weighted_sum(&x.log())),
        },
        Case {
            name: "tanh",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.tanh())),
        },
        Case {
            name: "sigmoid",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.sigmoid())),
        },
        Case {
            name: "square",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.square().exp())),
        },
        Case {
            name: "logsumexp_axis0",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.reshape([2, 3]).logsumexp(0))),
        },
        Case {
            name: "logsumexp_axis1",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.reshape([2, 3]).logsumexp(1))),
        },
        Case {
            name: "concat",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: {
                let c = c6.clone();
                Box::new(move |x| {
                    let left = x.slice(0, 0, 2).square();
                    let mid = Node::constant(c.clone()).slice(0, 0, 2);
                    let right = x.slice(0, 2, 6).tanh();
                    weighted_sum(&Node::concat(&[left, mid, right], 0))
                })
            },
        },
        Case {
            name: "slice",
            len: 6,
            lo: -2.0,
            hi: 2.0,
            f: Box::new(|x| weighted_sum(&x.slice(0, 1, 4).exp())),
        },
    ]
}

fn random_point(rng: &mut Rng, len: usize, lo: f64, hi: f64) -> Tensor {
    let data: Vec<f64> = (0..len).map(|_| rng.uniform(lo, hi)).collect();
    Tensor::from_vec(vec![len], data).unwrap()
}

#[test]
fn every_primitive_matches_central_differences() {
    let mut rng = Rng::from_seed(0xD1FF);
    for case in cases() {
        for trial in 0..100 {
            let point = random_point(&mut rng, case.len, case.lo, case.hi);
            let report = finite_difference_check(&case.f, &point, 1e-5).unwrap();
            assert!(
                report.max_rel_err < 1e-6,
                "{} trial {trial}: rel err {} at coord {}",
                case.name,
                report.max_rel_err,
                report.worst_coord
            );
        }
    }
}

#[test]
fn second_order_matches_differences_of_gradient() {
    let mut rng = Rng::from_seed(0x5EC0);
    for case in cases() {
        for _trial in 0..10 {
            let point = random_point(&mut rng, case.len, case.lo, case.hi);
            for coord in [0, case.len - 1] {
                let f = &case.f;
                let report = finite_difference_check(
                    |x| {
                        let y = f(x);
                        let g = gradient(&y, std::slice::from_ref(x)).unwrap().remove(0);
                        g.slice(0, coord, coord + 1)
                    },
                    &point,
                    1e-5,
                )
                .unwrap();
                assert!(
                    report.max_rel_err < 1e-4,
                    "{} coord {coord}: second-order rel err {}",
                    case.name,
                    report.max_rel_err
                );
            }
        }
    }
}

#[test]
fn evaluation_is_bit_deterministic() {
    let mut rng = Rng::from_seed(99);
    for case in cases() {
        let point = random_point(&mut rng, case.len, case.lo, case.hi);
        let build = |t: &Tensor| {
            let x = Node::leaf(t.clone());
            let y = (case.f)(&x);
            let g = gradient(&y, std::slice::from_ref(&x)).unwrap().remove(0);
            (
                y.value().scalar_value(),
                g.value().data().to_vec(),
            )
        };
        let (y1, g1) = build(&point);
        let (y2, g2) = build(&point);
        assert_eq!(y1.to_bits(), y2.to_bits(), "{}", case.name);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&g1), bits(&g2), "{}", case.name);
    }
}
