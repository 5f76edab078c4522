use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ranvar::models::{beta_bernoulli, branching_program};
use ranvar::{
    align_bindings, bindings, capture, capture_trace, intervene, make_log_joint, Alignment,
    Backend, Bindings, Ctx, Distribution, Error, Program, Result, Scalar,
};
use statrs::distribution::{Beta, Continuous};

fn chain(ctx: &mut Ctx, _: &()) -> Result<Vec<Scalar>> {
    let z = ctx.rv("z", Distribution::normal(0.0, 1.0)?)?;
    let x = ctx.rv("x", Distribution::normal(z.item(), 1.0)?)?;
    Ok(x.into_value())
}

#[test]
fn coin_log_joint_at_half() {
    let lj = make_log_joint(beta_bernoulli().program);
    // Oracle: Beta(1, 1) pdf from statrs plus 50 Bernoulli(0.5) log masses.
    let oracle = Beta::new(1.0, 1.0).unwrap().ln_pdf(0.5) + 50.0 * 0.5f64.ln();
    for x in [1.0, 0.0] {
        let b = bindings([("p", vec![0.5]), ("x", vec![x; 50])]);
        let v = lj.eval(&b).unwrap().value();
        assert!((v - oracle).abs() < 1e-9, "{v} vs {oracle}");
        assert!((v + 34.657_359_0).abs() < 1e-7);
    }
}

#[test]
fn single_normal_log_joint() {
    let program = |ctx: &mut Ctx, _: &()| -> Result<()> {
        ctx.rv("z", Distribution::normal(0.0, 1.0)?)?;
        Ok(())
    };
    let v = make_log_joint(program).eval(&bindings([("z", vec![0.0])])).unwrap();
    assert!((v.value() + 0.918_938_5).abs() < 1e-7);
}

#[test]
fn missing_and_unused_bindings() {
    let lj = make_log_joint(chain);
    let err = lj.eval(&bindings([("z", vec![0.0])])).unwrap_err();
    assert_eq!(err, Error::MissingBinding(vec!["x".into()]));

    let b = bindings([("z", vec![0.0]), ("x", vec![1.0]), ("extra", vec![3.0])]);
    let (v, report) = lj.eval_report(&(), &b).unwrap();
    assert!(v.value().is_finite());
    assert_eq!(report.unused, vec!["extra".to_owned()]);
    assert_eq!(report.visited, vec!["z".to_owned(), "x".to_owned()]);
}

#[test]
fn required_names_follow_the_bound_control_flow() {
    let lj = make_log_joint(branching_program().program);
    let heads = bindings([("coin", vec![1.0]), ("a", vec![0.3]), ("y", vec![0.0, 0.0])]);
    assert!(lj.eval(&heads).is_ok());
    let tails = bindings([("coin", vec![0.0]), ("a", vec![0.3]), ("y", vec![0.0, 0.0])]);
    assert_eq!(lj.eval(&tails).unwrap_err(), Error::MissingBinding(vec!["b".into()]));
}

#[test]
fn log_joint_is_differentiable_in_its_bindings() {
    let lj = make_log_joint(chain);
    let g = ranvar::autodiff::try_value_and_gradient(
        |v| {
            let b = Bindings::from([("z".to_owned(), vec![v[0].clone()]), ("x".to_owned(), vec![v[1].clone()])]);
            lj.eval(&b)
        },
        &[0.4, 1.0],
    )
    .unwrap()
    .1;
    // ∂/∂z = −z + (x − z), ∂/∂x = −(x − z)
    assert!((g[0] - (-0.4 + 0.6)).abs() < 1e-12);
    assert!((g[1] + 0.6).abs() < 1e-12);
}

#[test]
fn do_z_ten_moves_the_downstream_mean() {
    let model = intervene(chain, bindings([("z", vec![10.0])]));
    let n = 10_000;
    let mean = (0..n)
        .map(|seed| {
            let mut ctx = Ctx::new(seed);
            model.run(&mut ctx, &()).unwrap()[0].value()
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - 10.0).abs() < 0.05, "{mean}");
    assert!(model.unused().is_empty());
}

fn snapshots<P: Program<(), Output = O>, O>(p: &P, seed: u64) -> Vec<(String, Vec<(&'static str, Vec<f64>)>, Vec<f64>)> {
    let t = capture(&mut Ctx::new(seed), p, &()).unwrap();
    t.nodes.iter().map(|n| (n.name().to_owned(), n.params(), n.rv.values())).collect()
}

#[test]
fn intervening_on_a_leaf_leaves_everything_else_alone() {
    let model = intervene(chain, bindings([("x", vec![-3.0])]));
    for seed in 0..50 {
        let a = snapshots(&chain, seed);
        let b = snapshots(&model, seed);
        // x is no longer a random choice, so only z reaches the recorder.
        assert_eq!(b.len(), 1);
        assert_eq!(a[0], b[0]);
        assert_eq!(model.run(&mut Ctx::new(seed), &()).unwrap()[0].value(), -3.0);
    }
}

#[test]
fn empty_intervention_is_the_identity() {
    let model = intervene(chain, Bindings::new());
    for seed in 0..50 {
        assert_eq!(snapshots(&chain, seed), snapshots(&model, seed));
    }
}

#[test]
fn unreached_do_names_are_reported() {
    let model = intervene(chain, bindings([("nowhere", vec![1.0])]));
    model.run(&mut Ctx::new(0), &()).unwrap();
    assert_eq!(model.unused(), vec!["nowhere".to_owned()]);
}

#[test]
fn log_joint_of_an_intervened_model_scores_only_the_rest() {
    // Mutilate, then score: z is no longer a random choice of the program.
    let lj = make_log_joint(intervene(chain, bindings([("z", vec![2.0])])));
    let v = lj.eval(&bindings([("x", vec![2.5])])).unwrap().value();
    let oracle = -0.5 * 0.25 - 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((v - oracle).abs() < 1e-12);
}

fn confounded(ctx: &mut Ctx, _: &()) -> Result<(f64, f64)> {
    let u = ctx.rv("u", Distribution::normal(0.0, 1.0)?)?;
    let z = ctx.rv("z", Distribution::normal(u.item(), 1.0)?)?;
    let x = ctx.rv("x", Distribution::normal(u.item() + z.item(), 1.0)?)?;
    Ok((z.values()[0], x.values()[0]))
}

#[test]
fn intervention_is_not_conditioning() {
    // u → z, u → x, z → x. E[x | do(z = 1)] = 1 while E[x | z = 1] = 1.5.
    let n = 100_000;
    let forced = intervene(confounded, bindings([("z", vec![1.0])]));
    let do_mean = (0..n)
        .map(|s| forced.run(&mut Ctx::new(s).with_backend(Backend::Plain), &()).unwrap().1)
        .sum::<f64>()
        / n as f64;
    let accepted: Vec<f64> = (0..n)
        .filter_map(|s| {
            let (z, x) = confounded(&mut Ctx::new(s).with_backend(Backend::Plain), &()).unwrap();
            ((z - 1.0).abs() < 0.05).then_some(x)
        })
        .collect();
    let cond_mean = accepted.iter().sum::<f64>() / accepted.len() as f64;
    let se_do = (2.0 / n as f64).sqrt();
    let se_cond = (1.5 / accepted.len() as f64).sqrt();
    assert!((do_mean - 1.0).abs() < 4.0 * se_do, "{do_mean}");
    assert!((cond_mean - 1.5).abs() < 4.0 * se_cond + 0.01, "{cond_mean}");
    assert!(cond_mean - do_mean > 0.3);
}

#[test]
fn alignment_examples() {
    let a = Alignment::new().latent("z", "qz").unwrap().observed("x", "data_x").unwrap();
    let q = bindings([("qz", vec![0.7])]);
    let data = bindings([("data_x", vec![1.0])]);
    let b = align_bindings(&["z", "x"], &a, &q, &data).unwrap();
    assert_eq!(b["z"][0].value(), 0.7);
    assert_eq!(b["x"][0].value(), 1.0);

    // Order of discovery does not matter: names are the contract.
    let b2 = align_bindings(&["x", "z"], &a, &q, &data).unwrap();
    assert_eq!(b.keys().collect::<Vec<_>>(), b2.keys().collect::<Vec<_>>());

    let empty: [&str; 0] = [];
    assert!(align_bindings(&empty, &Alignment::new(), &q, &data).unwrap().is_empty());

    assert_eq!(
        align_bindings(&["z", "x", "w"], &a, &q, &data).unwrap_err(),
        Error::AlignmentGap(vec!["w".into()])
    );
    assert_eq!(
        align_bindings(&["z"], &a, &q, &data).unwrap_err(),
        Error::DanglingAlignment(vec!["x".into()])
    );
    assert!(matches!(
        Alignment::new().latent("z", "a").unwrap().latent("z", "b"),
        Err(Error::DuplicateAlignmentKey(_))
    ));
}

#[derive(Clone, Debug)]
struct Dag {
    parents: Vec<Vec<(usize, f64)>>,
}

impl Program for Dag {
    type Output = ();
    fn run(&self, ctx: &mut Ctx, _: &()) -> Result<()> {
        let mut values: Vec<Scalar> = Vec::new();
        for (i, ps) in self.parents.iter().enumerate() {
            let loc = ps.iter().fold(Scalar::constant(0.0), |acc, (p, c)| acc + &values[*p] * *c);
            let rv = ctx.rv(&format!("n{i}"), Distribution::normal(loc, 1.0)?)?;
            values.push(rv.item());
        }
        Ok(())
    }
}

fn dag_strategy() -> impl Strategy<Value = Dag> {
    (2usize..=6)
        .prop_flat_map(|n| {
            (0..n)
                .map(|i| prop::collection::vec((0..i.max(1), prop_oneof![-2.0..-0.5, 0.5..2.0f64]), 0..=i.min(3)))
                .collect::<Vec<_>>()
        })
        .prop_map(|mut parents| {
            parents[0].clear();
            for ps in &mut parents {
                ps.sort_by_key(|p| p.0);
                ps.dedup_by_key(|p| p.0);
            }
            Dag { parents }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interventions_only_touch_descendants(dag in dag_strategy(), pick in 0usize..6, seed in 0u64..500) {
        let v = format!("n{}", pick % dag.parents.len());
        let base = capture_trace(&dag, &(), seed, Backend::Differentiable).unwrap();
        let downstream = base.descendants(&v).unwrap();
        let forced = intervene(dag.clone(), bindings([(v.as_str(), vec![5.5])]));
        let after = capture(&mut Ctx::new(seed), &forced, &()).unwrap();
        prop_assert!(after.get(&v).is_none());
        for a in base.nodes.iter().filter(|a| a.name() != v) {
            let b = after.get(a.name()).unwrap();
            let same = a.params() == b.params() && a.rv.values() == b.rv.values();
            prop_assert_eq!(same, !downstream.contains(a.name()), "node {}", a.name());
        }
    }
}

#[test]
fn random_bindings_for_coin_flips_match_closed_form() {
    let lj = make_log_joint(beta_bernoulli().program);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let p: f64 = rng.random_range(0.01..0.99);
        let x: Vec<f64> = (0..50).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
        let k = x.iter().sum::<f64>();
        let oracle = k * p.ln() + (50.0 - k) * (1.0 - p).ln();
        let v = lj.eval(&bindings([("p", vec![p]), ("x", x)])).unwrap().value();
        assert!((v - oracle).abs() < 1e-9);
    }
}
