use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use shotgrad::allocators::{psr_allocate, ulge_allocate, GeneratorDecomposition, MeasurementPlan, Method};
use shotgrad::estimator::{
    estimate_gradient, estimate_partial, minimum_gradient_budget, posterior_objective, postprocess_weights,
    split_budget, EstimatorOptions, LayerPriors, Sampling,
};
use shotgrad::experiments::{layer_priors, mean_stderr, rng_for, PriorSettings};
use shotgrad::qaoa::{random_graph, CircuitParams, LayerKind, QaoaSimulator};
use shotgrad::Error;

fn setup(n: u32, layers: usize, seed: u64) -> (QaoaSimulator, CircuitParams, LayerPriors) {
    let sim = QaoaSimulator::new(random_graph(n, seed).unwrap()).unwrap();
    let params = CircuitParams::random(layers, &mut ChaCha8Rng::seed_from_u64(seed));
    let priors = layer_priors(&sim, &PriorSettings::default(), seed).unwrap();
    (sim, params, priors)
}

fn repeated(
    sim: &QaoaSimulator,
    params: &CircuitParams,
    layer: usize,
    plan: &MeasurementPlan,
    priors: &LayerPriors,
    reps: u64,
) -> (f64, f64) {
    let prior = priors.get(LayerKind::of(layer));
    let est: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(17, &[r]);
            estimate_partial(sim, params, layer, plan, prior, EstimatorOptions::default(), &mut rng)
                .unwrap()
                .delta_hat
        })
        .collect();
    mean_stderr(&est)
}

#[test]
fn unbiased_plans_are_unbiased_under_shots() {
    let (sim, params, priors) = setup(7, 2, 3);
    let exact = sim.exact_gradient(&params).unwrap();
    for layer in [2usize, 3] {
        let kind = LayerKind::of(layer);
        let plans = [
            ulge_allocate(&sim.layer_spectrum(kind).unwrap(), 4000).unwrap(),
            psr_allocate(
                &GeneratorDecomposition::uniform(sim.generator_count(kind)).unwrap(),
                4000,
            )
            .unwrap(),
        ];
        for plan in &plans {
            let (mean, se) = repeated(&sim, &params, layer, plan, &priors, 3000);
            assert!(
                (mean - exact[layer]).abs() < 4.0 * se,
                "{:?} layer {layer}: {mean} ± {se} vs {}",
                plan.method,
                exact[layer]
            );
        }
    }
}

#[test]
fn zero_weights_give_zero_estimate() {
    let (sim, params, priors) = setup(6, 2, 1);
    let plan = MeasurementPlan {
        method: Method::Blge,
        positions: vec![0.3, 1.1],
        weights: vec![0.0, 0.0],
        rounds: vec![5, 5],
        generator_indices: None,
    };
    let opts = EstimatorOptions {
        sampling: Sampling::Shots,
        postprocess: false,
    };
    let r = estimate_partial(
        &sim,
        &params,
        0,
        &plan,
        &priors.mixer,
        opts,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert_eq!(r.delta_hat, 0.0);
    assert_eq!(r.rounds_spent, 20);
}

#[test]
fn single_round_positions_use_prior_variance() {
    let (sim, params, priors) = setup(6, 2, 1);
    let plan = MeasurementPlan {
        method: Method::Slge,
        positions: vec![0.4],
        weights: vec![1.0],
        rounds: vec![1],
        generator_indices: None,
    };
    let r = estimate_partial(
        &sim,
        &params,
        1,
        &plan,
        &priors.cost,
        EstimatorOptions {
            sampling: Sampling::Shots,
            postprocess: true,
        },
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert!(r.per_position[0].substituted);
    assert_eq!(r.per_position[0].sigma2, priors.cost.shot_variance());
    assert!(r.postprocessed);
}

#[test]
fn postprocess_minimises_the_posterior_objective() {
    let (_, _, priors) = setup(8, 2, 2);
    let prior = &priors.cost;
    let positions = [0.2, 0.7, 1.9];
    let v = [0.01, 0.03, 0.02];
    let w = postprocess_weights(prior, &positions, &v).unwrap();
    let best = posterior_objective(prior, &positions, &w, &v);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let p: Vec<f64> = w
            .iter()
            .map(|x| x + rand::Rng::random_range(&mut rng, -0.05..0.05))
            .collect();
        assert!(posterior_objective(prior, &positions, &p, &v) >= best - 1e-14);
    }
}

#[test]
fn gradient_is_deterministic_and_spends_the_budget() {
    let (sim, params, priors) = setup(8, 3, 5);
    for method in [Method::Blge, Method::Ulge, Method::Slge, Method::Psr] {
        let m_g = minimum_gradient_budget(&sim, 3, method).max(900);
        let a = estimate_gradient(&sim, &params, m_g, method, &priors, EstimatorOptions::default(), 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool
            .install(|| estimate_gradient(&sim, &params, m_g, method, &priors, EstimatorOptions::default(), 9))
            .unwrap();
        assert_eq!(a.gradient, b.gradient, "{method:?}");
        assert!(a.rounds_spent() <= m_g);
        let budgets = split_budget(3, m_g);
        for (rep, m) in a.reports.iter().zip(&budgets) {
            assert!(rep.rounds_spent <= *m);
        }
        let c = estimate_gradient(&sim, &params, m_g, method, &priors, EstimatorOptions::default(), 10).unwrap();
        assert_ne!(a.gradient, c.gradient);
    }
}

#[test]
fn budget_split_and_minimum() {
    assert_eq!(split_budget(2, 600), vec![100, 200, 100, 200]);
    assert_eq!(split_budget(2, 603), vec![100, 202, 100, 201]);
    let (sim, params, priors) = setup(10, 6, 0);
    assert_eq!(minimum_gradient_budget(&sim, 6, Method::Psr), 360);
    let err = estimate_gradient(&sim, &params, 359, Method::Psr, &priors, EstimatorOptions::default(), 0);
    assert!(matches!(err, Err(Error::BudgetTooSmall { needed: 360, got: 359 })));
    assert!(estimate_gradient(&sim, &params, 360, Method::Psr, &priors, EstimatorOptions::default(), 0).is_ok());
}
