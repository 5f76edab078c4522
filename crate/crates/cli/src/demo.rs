//! Small end-to-end runs of each library feature.

use ranvar::inference::diagnostics::mean;
use ranvar::inference::{
    learn_preconditioner, mcmc_within_vi, traced_density, vi_train, Elbo, LearnConfig, ViConfig,
};
use ranvar::models::{beta_bernoulli, conjugate_normal, CONJUGATE_LOG_MARGINAL, CONJUGATE_X};
use ranvar::{bindings, capture_trace, intervene, Alignment, Backend, Ctx, Distribution, Program, Result, Scalar};
use serde_json::{json, Value};

use crate::error::CliError;

pub const DEMOS: [&str; 5] = ["beta_bernoulli", "intervene", "vi", "l2l", "mcmc_within_vi"];

fn q_normal(ctx: &mut Ctx, phi: &[Scalar]) -> Result<Vec<Scalar>> {
    Ok(ctx.rv("qz", Distribution::normal(phi[0].clone(), phi[1].exp())?)?.into_value())
}

fn conjugate_elbo() -> Result<Elbo<impl Program<(), Output = Vec<Scalar>>, impl Program<[Scalar], Output = Vec<Scalar>>>> {
    let alignment = Alignment::new().latent("z", "qz")?.observed("x", "x")?;
    Elbo::new(
        conjugate_normal().program,
        q_normal,
        alignment,
        bindings([("x", vec![CONJUGATE_X])]),
        2,
        1,
    )
}

pub fn run_demo(name: &str, seed: u64) -> std::result::Result<Value, CliError> {
    Ok(match name {
        "beta_bernoulli" => {
            let t = capture_trace(&*beta_bernoulli().program, &(), seed, Backend::Differentiable)?;
            let x: Vec<f64> = t.output.iter().map(Scalar::value).collect();
            json!({ "demo": name, "seed": seed, "p": t.get("p").map(|n| n.rv.values()[0]), "x": x })
        }
        "intervene" => {
            let model = intervene(conjugate_normal().program, bindings([("z", vec![10.0])]));
            let n = 10_000;
            let xs: Vec<f64> = (0..n)
                .map(|s| {
                    let mut ctx = Ctx::new(seed.wrapping_add(s)).with_backend(Backend::Plain);
                    model.run(&mut ctx, &()).map(|x| x[0].value())
                })
                .collect::<Result<_>>()?;
            json!({ "demo": name, "seed": seed, "do": { "z": 10.0 }, "runs": n, "downstream_mean": mean(&xs) })
        }
        "vi" => {
            let cfg = ViConfig { steps: 2000, lr: 0.05, seed };
            let out = vi_train(&conjugate_elbo()?, &[0.0, 0.0], &[1.0, 1.0], &cfg)?;
            json!({
                "demo": name,
                "seed": seed,
                "q_loc": out.state.phi[0],
                "q_scale": out.state.phi[1].exp(),
                "final_loss": out.final_loss,
                "posterior": { "loc": 0.5, "scale": 0.5f64.sqrt() },
                "neg_log_marginal": -CONJUGATE_LOG_MARGINAL,
            })
        }
        "l2l" => {
            let inner = ViConfig { steps: 30, lr: 0.05, seed };
            let cfg = LearnConfig { inner: inner.clone(), outer_steps: 15, outer_lr: 0.5, floor: 1e-3 };
            let e = conjugate_elbo()?;
            let phi0 = [-1.0, 0.8];
            let learned = learn_preconditioner(&e, &phi0, &cfg)?;
            let ones = vi_train(&e, &phi0, &[1.0, 1.0], &inner)?.final_loss;
            let tuned = vi_train(&e, &phi0, &learned.preconditioner, &inner)?.final_loss;
            json!({
                "demo": name,
                "seed": seed,
                "preconditioner": learned.preconditioner,
                "outer_losses": learned.outer_losses,
                "inner_loss_ones": ones,
                "inner_loss_learned": tuned,
            })
        }
        "mcmc_within_vi" => {
            let entry = conjugate_normal();
            let alignment = Alignment::new().latent("z", "qz")?.observed("x", "x")?;
            let chains = 2000;
            let mut out = serde_json::Map::new();
            out.insert("demo".into(), json!(name));
            out.insert("seed".into(), json!(seed));
            for k in [0usize, 5, 25] {
                let refine = mcmc_within_vi(q_normal, vec![0.0, 0.0], alignment.clone(), traced_density(&entry), k, 0.5);
                let zs: Vec<f64> = (0..chains)
                    .map(|c| refine.run(&mut Ctx::new(seed.wrapping_add(c)), &()).map(|z| z[0]))
                    .collect::<Result<_>>()?;
                out.insert(format!("mean_after_{k}"), json!(mean(&zs)));
            }
            out.insert("posterior_mean".into(), json!(0.5));
            Value::Object(out)
        }
        _ => {
            return Err(CliError::Usage(format!(
                "unknown demo {name:?}; choose one of {}",
                DEMOS.join(", ")
            )))
        }
    })
}
