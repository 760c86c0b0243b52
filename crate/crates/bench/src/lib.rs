//! Fixtures shared by the benchmarks.

use gr2d2::hyper::make_hyperparams;
use gr2d2::sampler::{Gibbs, SuffStats};
use gr2d2::simlab::{build_scenario, simulate_dataset};
use gr2d2::{ChainState, Method, RandomStream, ScenarioId, Strategy, Variant};

/// Sampler on one scenario-5 dataset with `p` coefficients in groups of 10,
/// set up as `method` would be.
pub fn scenario_sampler(n: usize, p: usize, method: Method) -> (Gibbs, ChainState) {
    let scenario = build_scenario(ScenarioId::S5, n, p, 0.7, 1).expect("valid scenario");
    let mut data = simulate_dataset(&scenario, &mut RandomStream::new(2)).expect("simulated data");
    let (strategy, variant) = match method {
        Method::Gr2d2D => (Strategy::EmpiricalBayes, Variant::Dirichlet),
        Method::Gr2d2L => (Strategy::Sparsity, Variant::LogisticNormal),
        Method::R2d2 => {
            data = data
                .regroup(gr2d2::GroupStructure::new(vec![p]).expect("one group"))
                .expect("regrouped");
            (Strategy::Sparsity, Variant::Dirichlet)
        }
    };
    let hyper =
        make_hyperparams(strategy, 0.5, 0.5, Some(&data), data.groups()).expect("hyperparameters");
    let gibbs = Gibbs::new(
        SuffStats::from_dataset(&data),
        data.groups().clone(),
        hyper,
        variant,
    )
    .expect("sampler");
    let state = gibbs.initial_state();
    (gibbs, state)
}
