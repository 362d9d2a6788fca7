//! Strategies and property bodies shared by the property suites and the
//! acceptance run.

#![allow(dead_code)]

use blowuplab::expr::{BinOp, Expr, ParamMap, UnaryOp};
use blowuplab::lyapunov::{generator_apply, lambda_extremes};
use blowuplab::mc::{estimate_explosion_prob, martingale_check, simulate_all, SimConfig};
use blowuplab::model::{builtin_candidates, JumpApply, JumpSizeDist, JumpSpec, LyapunovCandidate, SdeModel};
use blowuplab::quad::{integrate_improper, IntegralStatus, TailConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub const PARAMS: [&str; 2] = ["a", "b"];

pub fn params() -> ParamMap {
    let mut p = ParamMap::new();
    p.insert("a".into(), 1.3);
    p.insert("b".into(), 0.7);
    p
}

/// Runs `test` on `cases` draws from `strategy` with a fixed RNG seed.
pub fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        max_global_rejects: 1_000_000,
        max_local_rejects: 1_000_000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

// ---- expression trees ----

fn exponent() -> impl Strategy<Value = Expr> {
    prop_oneof![
        prop::sample::select(vec![-2.0, -1.0, 0.5, 1.5, 2.0, 3.0]).prop_map(Expr::Const),
        Just(Expr::param("a")),
        Just(-Expr::param("b")),
        Just(Expr::param("a") - Expr::Const(1.0)),
    ]
}

fn tree(leaf: BoxedStrategy<Expr>, unary_ops: Vec<UnaryOp>) -> impl Strategy<Value = Expr> {
    leaf.prop_recursive(6, 64, 2, move |inner| {
        prop_oneof![
            (prop::sample::select(unary_ops.clone()), inner.clone()).prop_map(|(op, a)| Expr::unary(op, a)),
            (
                prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (inner, exponent()).prop_map(|(a, e)| Expr::pow(a, e)),
        ]
    })
}

pub fn any_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        any::<f64>().prop_filter("finite", |c| c.is_finite()).prop_map(Expr::Const),
        (0usize..4).prop_map(Expr::Var),
        Just(Expr::Norm),
        prop::sample::select(PARAMS.to_vec()).prop_map(Expr::param),
    ]
    .boxed();
    tree(leaf, vec![UnaryOp::Neg, UnaryOp::Exp, UnaryOp::Ln, UnaryOp::Sqrt, UnaryOp::Abs])
}

pub fn smooth_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.1f64..5.0).prop_map(Expr::Const),
        (0usize..3).prop_map(Expr::Var),
        Just(Expr::Norm),
        prop::sample::select(PARAMS.to_vec()).prop_map(Expr::param),
    ]
    .boxed();
    tree(leaf, vec![UnaryOp::Neg, UnaryOp::Exp, UnaryOp::Ln, UnaryOp::Sqrt])
}

fn all_subexpressions_moderate(e: &Expr, state: &[f64], p: &ParamMap) -> bool {
    let mut ok = true;
    e.visit(&mut |s| {
        let v = s.eval_unchecked(state, p).abs();
        if !(1e-3..=1e3).contains(&v) {
            ok = false;
        }
    });
    ok
}

fn central_difference(e: &Expr, state: &[f64], p: &ParamMap, i: usize, h: f64) -> f64 {
    let mut up = state.to_vec();
    let mut down = state.to_vec();
    up[i] += h;
    down[i] -= h;
    (e.eval_unchecked(&up, p) - e.eval_unchecked(&down, p)) / (2.0 * h)
}

pub fn render_parse_round_trip(t: Expr) -> Result<(), TestCaseError> {
    let src = t.render();
    let back = Expr::parse_with_params(&src, &PARAMS).map_err(|e| TestCaseError::fail(format!("{src}: {e}")))?;
    prop_assert_eq!(back, t, "{}", src);
    Ok(())
}

pub fn derivative_point() -> impl Strategy<Value = (Expr, Vec<f64>, usize)> {
    (smooth_tree(), prop::collection::vec(0.5f64..2.0, 3), 0usize..3)
}

pub fn derivative_matches_difference((t, state, i): (Expr, Vec<f64>, usize)) -> Result<(), TestCaseError> {
    let p = params();
    prop_assume!(all_subexpressions_moderate(&t, &state, &p));
    let h = 1e-5;
    let fd = central_difference(&t, &state, &p, i, h);
    // The difference quotient itself must have converged to serve as a reference.
    let fd_coarse = central_difference(&t, &state, &p, i, 2.0 * h);
    prop_assume!((fd - fd_coarse).abs() <= 1e-6 * (1.0 + fd.abs()));
    let d = t
        .differentiate(i)
        .map_err(|e| TestCaseError::fail(e.to_string()))?
        .eval_unchecked(&state, &p);
    prop_assert!(
        (d - fd).abs() <= 1e-5 * (1.0 + d.abs()),
        "d/dx{} {} = {} but finite difference gives {}",
        i + 1,
        t.render(),
        d,
        fd
    );
    Ok(())
}

// ---- quadrature ----

/// `int_1^inf y^-q dy` over a grid of exponents: divergent below 1, never
/// convergent at 1, convergent to `1/(q-1)` above.
pub fn power_tail_dichotomy() -> Result<(), String> {
    let cfg = TailConfig::default();
    for q in [0.5, 0.8, 0.9, 1.0, 1.2, 1.5, 2.0, 3.0] {
        let v = integrate_improper(|y: f64| y.powf(-q), 1.0, &cfg);
        if q < 1.0 {
            if !v.is_divergent() {
                return Err(format!("q = {q}: expected divergence, got {:?}", v.status));
            }
        } else if q == 1.0 {
            if v.is_convergent() {
                return Err(format!("q = 1 must not converge: {:?}", v.status));
            }
        } else {
            match v.status {
                IntegralStatus::Convergent { value, .. } => {
                    let exact = 1.0 / (q - 1.0);
                    if (value - exact).abs() > 1e-6 {
                        return Err(format!("q = {q}: {value} vs {exact}"));
                    }
                }
                other => return Err(format!("q = {q}: expected convergence, got {other:?}")),
            }
        }
    }
    Ok(())
}

// ---- generator ----

fn model(toml: &str) -> SdeModel {
    SdeModel::from_toml_str(toml).expect("test model")
}

pub fn planar_models() -> Vec<SdeModel> {
    vec![
        model(
            r#"name = "rotation"
dim = 2
drift = ["x2", "-x1^3"]
diffusion = [["1", "0"], ["0", "x1"]]"#,
        ),
        model(
            r#"name = "coupled"
dim = 2
drift = ["-x1 + x2^2", "x1*x2"]
diffusion = [["norm(x)", "0"], ["0.5", "norm(x)^2"]]"#,
        ),
        model(
            r#"name = "rectangular_noise"
dim = 2
drift = ["0.5 - x1", "2*x2"]
diffusion = [["1", "x2", "0.3"], ["x1", "1", "0"]]"#,
        ),
    ]
}

pub fn spatial_models() -> Vec<SdeModel> {
    vec![
        SdeModel::diagonal_noise(3, "norm(x)^2").expect("test model"),
        model(
            r#"name = "spatial_mixed"
dim = 3
drift = ["x2", "x3", "-x1 + x1*x2"]
diffusion = [["1", "0", "x3"], ["0", "norm(x)", "0"], ["x1", "0", "1"]]"#,
        ),
    ]
}

pub const PLANAR_CANDIDATES: [&str; 5] =
    ["x1^2 + x2^2", "ln(1 + norm(x)^2)", "x1^4 + x2^2", "exp(-x1^2)*x2", "norm(x)^3"];

fn user(src: &str) -> LyapunovCandidate {
    LyapunovCandidate::user(src, Expr::parse(src).expect("candidate"))
}

pub fn linearity_case() -> impl Strategy<Value = (usize, usize, usize, f64, f64, Vec<f64>)> {
    (
        0usize..3,
        0usize..PLANAR_CANDIDATES.len(),
        0usize..PLANAR_CANDIDATES.len(),
        -3.0f64..3.0,
        -3.0f64..3.0,
        prop::collection::vec(-3.0f64..3.0, 2),
    )
}

/// `L(a V1 + b V2) = a L V1 + b L V2`.
pub fn generator_is_linear((mi, i, j, a, b, x): (usize, usize, usize, f64, f64, Vec<f64>)) -> Result<(), TestCaseError> {
    prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 0.01);
    let m = &planar_models()[mi];
    let (v1, v2) = (PLANAR_CANDIDATES[i], PLANAR_CANDIDATES[j]);
    let combo = format!("({a})*({v1}) + ({b})*({v2})");
    let lv = |c: &LyapunovCandidate| generator_apply(m, c).map(|g| g.value_at(&x));
    let fail = |e: blowuplab::lyapunov::LyapunovError| TestCaseError::fail(e.to_string());
    let whole = lv(&user(&combo)).map_err(fail)?;
    let l1 = lv(&user(v1)).map_err(fail)?;
    let l2 = lv(&user(v2)).map_err(fail)?;
    let parts = a * l1 + b * l2;
    let scale = (a * l1).abs() + (b * l2).abs();
    prop_assert!(
        (whole - parts).abs() <= 1e-9 * scale.max(1.0),
        "{} on {}: {} vs {}",
        combo,
        m.name,
        whole,
        parts
    );
    Ok(())
}

pub fn log_norm_case() -> impl Strategy<Value = (bool, usize, Vec<f64>)> {
    (any::<bool>(), 0usize..2, prop::collection::vec(-5.0f64..5.0, 3))
}

/// The generator of `ln |x|^2` computed symbolically equals
/// `(2 <x, b> + tr A) / |x|^2 - 2 x'Ax / |x|^4` computed from the coefficients.
pub fn log_norm_generator_identity((spatial, mi, x): (bool, usize, Vec<f64>)) -> Result<(), TestCaseError> {
    let m = if spatial { spatial_models().swap_remove(mi) } else { planar_models().swap_remove(mi) };
    let x = &x[..m.dim];
    let r2: f64 = x.iter().map(|v| v * v).sum();
    prop_assume!(r2 > 0.01);
    let cand = builtin_candidates(&m).into_iter().find(|c| c.name == "log_squared_norm").expect("log candidate");
    let symbolic = generator_apply(&m, &cand).map_err(|e| TestCaseError::fail(e.to_string()))?.value_at(x);
    let d = m.dim;
    let mut b = vec![0.0; d];
    m.drift_at(x, &mut b);
    let a = m.covariance_at(x);
    let xb: f64 = x.iter().zip(&b).map(|(p, q)| p * q).sum();
    let trace: f64 = (0..d).map(|i| a[i * d + i]).sum();
    let xax: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| x[i] * a[i * d + j] * x[j]).sum();
    let closed = (2.0 * xb + trace) / r2 - 2.0 * xax / (r2 * r2);
    let scale = (2.0 * xb.abs() + trace.abs()) / r2 + 2.0 * xax.abs() / (r2 * r2);
    prop_assert!(
        (symbolic - closed).abs() <= 1e-9 * scale.max(1e-300),
        "{} at {:?}: {} vs {}",
        m.name,
        x,
        symbolic,
        closed
    );
    Ok(())
}

pub fn point_mass_case() -> impl Strategy<Value = (usize, f64, f64, bool)> {
    (0usize..4, 0.1f64..10.0, 0.2f64..6.0, any::<bool>())
}

/// A jump of size zero leaves the generator unchanged, in closed form and
/// through the sampled expectation.
pub fn zero_jumps_change_nothing((vi, lambda, x, negative): (usize, f64, f64, bool)) -> Result<(), TestCaseError> {
    let v = ["x^2", "x^4 - 3*x", "ln(1 + x^2)", "exp(-x^2)"][vi];
    let x = if negative { -x } else { x };
    let base = SdeModel::scalar("x - x^3", "1 + 0.5*x").map_err(|e| TestCaseError::fail(e.to_string()))?;
    let jumps = JumpSpec { lambda, dist: JumpSizeDist::PointMass { y: 0.0 }, apply: JumpApply::Additive };
    let with = base.clone().with_jumps(jumps).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let c = user(v);
    let plain = generator_apply(&base, &c).map_err(|e| TestCaseError::fail(e.to_string()))?.eval(&[x]);
    let jumped = generator_apply(&with, &c).map_err(|e| TestCaseError::fail(e.to_string()))?.eval(&[x]);
    prop_assert_eq!(jumped.std_error, 0.0);
    prop_assert!((plain.value - jumped.value).abs() <= 1e-12 * plain.value.abs().max(1.0), "{}: {} vs {}", v, plain.value, jumped.value);
    Ok(())
}

pub fn symmetric_matrix() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1usize..=4).prop_flat_map(|d| {
        (Just(d), prop::collection::vec(-10.0f64..10.0, d * d), prop::collection::vec(-1.0f64..1.0, d))
    })
}

/// `lambda_min |v|^2 <= v'Av <= lambda_max |v|^2`.
pub fn eigenvalues_sandwich_quadratic_form((d, raw, v): (usize, Vec<f64>, Vec<f64>)) -> Result<(), TestCaseError> {
    let mut a = raw.clone();
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = 0.5 * (raw[i * d + j] + raw[j * d + i]);
        }
    }
    let (lo, hi) = lambda_extremes(&a, d).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let vv: f64 = v.iter().map(|c| c * c).sum();
    let vav: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| v[i] * a[i * d + j] * v[j]).sum();
    let tol = 1e-10 * (1.0 + lo.abs().max(hi.abs())) * vv.max(1.0);
    prop_assert!(lo * vv <= vav + tol && vav <= hi * vv + tol, "{} <= {} <= {}", lo * vv, vav, hi * vv);
    let trace: f64 = (0..d).map(|i| a[i * d + i]).sum();
    prop_assert!(lo * d as f64 <= trace + tol && trace <= hi * d as f64 + tol);
    Ok(())
}

// ---- simulation ----

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
}

/// Explosion estimates and per-path results are bit-identical whatever the
/// number of worker threads.
pub fn reproducible_across_workers() -> Result<(), String> {
    let merton = SdeModel::scalar("0.05*x", "0.2*x")
        .and_then(|m| m.with_domain(blowuplab::model::StateDomain::PositiveHalfLine))
        .and_then(|m| {
            m.with_jumps(JumpSpec {
                lambda: 3.0,
                dist: JumpSizeDist::Lognormal { mu: 0.0, sigma: 0.3 },
                apply: JumpApply::Merton,
            })
        })
        .map_err(|e| e.to_string())?;
    let quadratic = SdeModel::scalar("x^2", "1").map_err(|e| e.to_string())?;
    for (m, x0) in [(&quadratic, 1.0), (&merton, 1.0)] {
        let cfg = SimConfig { x0: vec![x0], horizon: 2.0, n_paths: 300, seed: 11, ..SimConfig::from_model(m) };
        let runs: Vec<(String, String)> = [1, 2, 4]
            .into_iter()
            .map(|t| {
                in_pool(t, || {
                    let est = estimate_explosion_prob(m, &cfg).map(|e| serde_json::to_string(&e).expect("json"));
                    let paths = simulate_all(m, &cfg).map(|r| format!("{r:?}"));
                    (format!("{est:?}"), format!("{paths:?}"))
                })
            })
            .collect();
        if runs.iter().any(|r| r != &runs[0]) {
            return Err(format!("{}: results differ across worker counts", m.name));
        }
    }
    Ok(())
}

/// Discrete Ito sums of the integrands 1 and W have mean zero within three
/// standard errors.
pub fn martingale_integrands() -> Result<(), String> {
    for src in ["1", "x"] {
        let e = Expr::parse(src).map_err(|e| e.to_string())?;
        let r = martingale_check(&e, 1.0, 10_000, 5);
        if !r.pass {
            return Err(format!("integrand {src}: mean {} with standard error {}", r.mean, r.std_error));
        }
    }
    Ok(())
}
