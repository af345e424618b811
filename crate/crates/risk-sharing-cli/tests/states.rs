mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use scenario_io::states::{clip_correlation, standard_normal_rule};
use scenario_io::{build_state_space, IoError, Scenario};

fn gaussian(extra: &str) -> Scenario {
    common::scenario(&format!(
        r#"
[states]
model = "gaussian"
{extra}

[[agents]]
delta = 1.0

[[agents]]
delta = 1.0
"#
    ))
}

#[test]
fn two_point_rule_is_plus_minus_one() {
    let s = gaussian("variables = [\"X\"]\nquadrature_order = 2");
    let st = build_state_space(&s).unwrap();
    let x = st.variables["X"].values();
    assert_eq!(st.len(), 2);
    assert_abs_diff_eq!(x[0], -1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-14);
    for w in st.baseline.weights() {
        assert_abs_diff_eq!(*w, 0.5, epsilon = 1e-15);
    }
}

#[test]
fn rule_integrates_normal_moments() {
    // E[X^2] = 1, E[X^4] = 3, E[X^6] = 15 are exact for order >= 4.
    let (x, lw) = standard_normal_rule(6);
    let m = |k: i32| x.iter().zip(&lw).map(|(x, l)| l.exp() * x.powi(k)).sum::<f64>();
    assert_abs_diff_eq!(m(1), 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(m(2), 1.0, epsilon = 1e-13);
    assert_abs_diff_eq!(m(4), 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(m(6), 15.0, epsilon = 1e-11);
}

#[test]
fn explicit_model_passes_through() {
    let s = common::scenario(
        r#"
[states]
model = "explicit"
weights = [1.0, 3.0]
labels = ["a", "b"]
[states.variables]
y = [2.0, -2.0]

[[agents]]
delta = 1.0
[[agents]]
delta = 1.0
"#,
    );
    let st = build_state_space(&s).unwrap();
    assert_eq!(st.labels, vec!["a", "b"]);
    assert_abs_diff_eq!(st.baseline.weights()[0], 0.25, epsilon = 1e-15);
    assert_eq!(st.variables["y"].values(), &[2.0, -2.0]);
}

#[test]
fn grid_reproduces_covariance() {
    let s = gaussian(
        "variables = [\"A\", \"B\"]\nmean = [1.0, -2.0]\ncovariance = [[2.0, 0.6], [0.6, 0.5]]\nquadrature_order = 5",
    );
    let st = build_state_space(&s).unwrap();
    assert_eq!(st.len(), 25);
    let w = st.baseline.weights();
    let a = st.variables["A"].values();
    let b = st.variables["B"].values();
    let e = |f: &dyn Fn(usize) -> f64| (0..w.len()).map(|s| w[s] * f(s)).sum::<f64>();
    assert_abs_diff_eq!(e(&|s| a[s]), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(e(&|s| b[s]), -2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(e(&|s| (a[s] - 1.0).powi(2)), 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(e(&|s| (b[s] + 2.0).powi(2)), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(e(&|s| (a[s] - 1.0) * (b[s] + 2.0)), 0.6, epsilon = 1e-12);
}

#[test]
fn degenerate_directions_are_dropped() {
    // B = 2A exactly: one factor, so q states rather than q^2.
    let s = gaussian("variables = [\"A\", \"B\"]\ncovariance = [[1.0, 2.0], [2.0, 4.0]]\nquadrature_order = 7");
    let st = build_state_space(&s).unwrap();
    assert_eq!(st.len(), 7);
    assert_eq!(st.info.rank, Some(1));
    for (a, b) in st.variables["A"].iter().zip(st.variables["B"].iter()) {
        assert_abs_diff_eq!(2.0 * a, *b, epsilon = 1e-12);
    }
}

#[test]
fn non_psd_is_rejected_unless_clipped() {
    let corr = "correlation = [[1.0, -0.9, 0.7], [-0.9, 1.0, -0.3], [0.7, -0.3, 1.0]]";
    let strict = gaussian(&format!("variables = [\"a\", \"b\", \"c\"]\n{corr}\nquadrature_order = 3"));
    assert!(matches!(build_state_space(&strict), Err(IoError::Validation(_))));

    let clipped = gaussian(&format!(
        "variables = [\"a\", \"b\", \"c\"]\n{corr}\nquadrature_order = 3\npsd_repair = \"clip\""
    ));
    let st = build_state_space(&clipped).unwrap();
    assert!(st.info.repaired);
    assert!(st.info.min_eigenvalue.unwrap() < -1e-3);
    assert_eq!(st.info.rank, Some(2));
    assert_eq!(st.len(), 9);
}

#[test]
fn clipped_correlation_is_a_correlation() {
    let c = nalgebra::DMatrix::from_row_slice(3, 3, &[1.0, -0.9, 0.7, -0.9, 1.0, -0.3, 0.7, -0.3, 1.0]);
    let r = clip_correlation(&c);
    for i in 0..3 {
        assert_abs_diff_eq!(r[(i, i)], 1.0, epsilon = 1e-15);
    }
    let eig = nalgebra::SymmetricEigen::new(r.clone());
    assert!(eig.eigenvalues.iter().all(|v| *v > -1e-12));
    assert!((r.clone() - c).amax() < 0.01);
}

#[test]
fn state_cap_is_enforced() {
    let s = gaussian("variables = [\"a\", \"b\", \"c\"]\nquadrature_order = 101");
    assert!(matches!(build_state_space(&s), Err(IoError::Size { states: 1_030_301, .. })));
    let s = gaussian("variables = [\"a\"]\nsamples = 2000000\nseed = 1");
    assert!(matches!(build_state_space(&s), Err(IoError::Size { .. })));
}

#[test]
fn sampling_is_deterministic_in_the_seed() {
    let a = build_state_space(&gaussian("variables = [\"X\", \"Y\"]\nsamples = 500\nseed = 11")).unwrap();
    let b = build_state_space(&gaussian("variables = [\"X\", \"Y\"]\nsamples = 500\nseed = 11")).unwrap();
    let c = build_state_space(&gaussian("variables = [\"X\", \"Y\"]\nsamples = 500\nseed = 12")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.variables["X"], c.variables["X"]);
    assert_abs_diff_eq!(a.baseline.weights()[0], 1.0 / 500.0, epsilon = 1e-18);
}

#[test]
fn sample_moments_are_close() {
    let st = build_state_space(&gaussian(
        "variables = [\"X\", \"Y\"]\nstd = [1.0, 2.0]\ncorrelation = [[1.0, 0.5], [0.5, 1.0]]\nsamples = 100000\nseed = 3",
    ))
    .unwrap();
    let n = st.len() as f64;
    let x = st.variables["X"].values();
    let y = st.variables["Y"].values();
    let cov: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
    let vy: f64 = y.iter().map(|b| b * b).sum::<f64>() / n;
    assert!((cov - 1.0).abs() < 0.05, "{cov}");
    assert!((vy - 4.0).abs() < 0.1, "{vy}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grid_covariance_matches_any_psd_input(a in proptest::collection::vec(-2.0f64..2.0, 6), q in 3usize..6) {
        // Covariance A Aᵀ for a random 3x2 factor, so rank at most 2.
        let m = |i: usize, j: usize| a[2 * i] * a[2 * j] + a[2 * i + 1] * a[2 * j + 1];
        let rows: Vec<String> = (0..3)
            .map(|i| format!("[{}, {}, {}]", m(i, 0), m(i, 1), m(i, 2)))
            .collect();
        let s = gaussian(&format!(
            "variables = [\"a\", \"b\", \"c\"]\ncovariance = [{}]\nquadrature_order = {q}",
            rows.join(", ")
        ));
        let st = build_state_space(&s).unwrap();
        let w = st.baseline.weights();
        let names = ["a", "b", "c"];
        for i in 0..3 {
            for j in 0..3 {
                let xi = st.variables[names[i]].values();
                let xj = st.variables[names[j]].values();
                let c: f64 = (0..w.len()).map(|s| w[s] * xi[s] * xj[s]).sum();
                prop_assert!((c - m(i, j)).abs() <= 1e-9 * (1.0 + m(i, i).max(m(j, j))));
            }
        }
    }
}
