use std::collections::BTreeSet;

use dadmm_core::graph::{greedy_color, validate_coloring, AgentGraph, GraphFile};
use dadmm_core::lasso::{lasso_dual_update, sign};
use dadmm_core::linreg::{linreg_dual_update_lambda, linreg_dual_update_mu};
use dadmm_core::schedule::ThetaFile;
use dadmm_core::{disagreement, mse_loss, HyperparameterSchedule, ProblemKind, ShareMode};
use proptest::prelude::*;

/// Connected graphs: a random spanning tree plus random extra edges.
fn arb_graph() -> impl Strategy<Value = AgentGraph> {
    (1usize..14).prop_flat_map(|n| {
        let parents = (1..n).map(|i| 0..i).collect::<Vec<_>>();
        let pairs = n * (n - 1) / 2;
        (
            Just(n),
            parents,
            prop::collection::vec(prop::bool::weighted(0.3), pairs),
        )
            .prop_map(|(n, parents, extra)| {
                let tree = parents.into_iter().enumerate().map(|(i, p)| (p, i + 1));
                let all = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
                let extra = all.zip(extra).filter(|(_, k)| *k).map(|(e, _)| e);
                AgentGraph::new(n, tree.chain(extra)).unwrap()
            })
    })
}

fn arb_kind() -> impl Strategy<Value = ProblemKind> {
    prop_oneof![Just(ProblemKind::Lasso), Just(ProblemKind::Linreg)]
}

fn arb_mode() -> impl Strategy<Value = ShareMode> {
    prop_oneof![Just(ShareMode::Shared), Just(ShareMode::AgentSpecific)]
}

proptest! {
    #[test]
    fn greedy_coloring_is_proper_and_small(graph in arb_graph()) {
        let coloring = greedy_color(&graph);
        prop_assert!(validate_coloring(&graph, &coloring).passed());
        prop_assert!(coloring.num_colors() <= graph.max_degree() + 1);
        for &(i, j) in graph.edges() {
            prop_assert_ne!(coloring.color_of(i), coloring.color_of(j));
        }
        let covered: usize = coloring.classes().iter().map(Vec::len).sum();
        prop_assert_eq!(covered, graph.num_agents());
    }

    #[test]
    fn graph_file_round_trips(graph in arb_graph()) {
        let coloring = greedy_color(&graph);
        let json = serde_json::to_string(&GraphFile::new(&graph, &coloring)).unwrap();
        let (g, c) = serde_json::from_str::<GraphFile>(&json).unwrap().into_parts().unwrap();
        prop_assert_eq!(g, graph);
        prop_assert_eq!(c, coloring);
    }

    #[test]
    fn sign_is_odd_and_bounded(x in -1e6f64..1e6) {
        prop_assert_eq!(sign(-x), -sign(x));
        prop_assert!(sign(x).abs() <= 1.0);
        prop_assert_eq!(sign(x) * x, x.abs());
    }

    #[test]
    fn duals_stay_put_at_consensus(
        y in prop::collection::vec(-10.0f64..10.0, 1..6),
        lambda_seed in -5.0f64..5.0,
        neighbors in 1usize..5,
        eta in 0.0f64..3.0,
    ) {
        let lambda: Vec<f64> = y.iter().map(|v| v * lambda_seed).collect();
        let copies: Vec<&[f64]> = (0..neighbors).map(|_| y.as_slice()).collect();
        prop_assert_eq!(lasso_dual_update(&lambda, &y, &copies, eta), lambda.clone());
        prop_assert_eq!(linreg_dual_update_mu(&lambda, &y, &copies, eta), lambda.clone());
        let omegas = vec![y[0]; neighbors];
        prop_assert_eq!(linreg_dual_update_lambda(lambda_seed, y[0], &omegas, eta), lambda_seed);
    }

    #[test]
    fn disagreement_vanishes_only_at_consensus(
        graph in arb_graph(),
        base in prop::collection::vec(-5.0f64..5.0, 1..4),
        bump in 0.1f64..2.0,
    ) {
        let n = graph.num_agents();
        let mut primals = vec![base.clone(); n];
        prop_assert_eq!(disagreement(&primals, &graph), 0.0);
        if let Some(&(i, _)) = graph.edges().first() {
            primals[i][0] += bump;
            prop_assert!(disagreement(&primals, &graph) > 0.0);
        }
    }

    #[test]
    fn schedule_offsets_tile_the_values(
        kind in arb_kind(),
        mode in arb_mode(),
        depth in 1usize..8,
        agents in 1usize..6,
    ) {
        let tuple = vec![0.5; kind.tuple_len()];
        let schedule = HyperparameterSchedule::repeated(kind, mode, depth, agents, &tuple).unwrap();
        let bound = match mode {
            ShareMode::Shared => 1,
            ShareMode::AgentSpecific => agents,
        };
        prop_assert_eq!(schedule.num_scalars(), depth * bound * kind.tuple_len());
        let mut starts = BTreeSet::new();
        for k in 0..depth {
            for p in 0..agents {
                let off = schedule.offset(k, p);
                prop_assert!(off + kind.tuple_len() <= schedule.num_scalars());
                prop_assert!(schedule.iteration_span(k..k + 1).contains(&off));
                starts.insert(off);
            }
        }
        prop_assert_eq!(starts.len(), depth * bound);
        prop_assert!(schedule.covers(depth));
        prop_assert!(!schedule.covers(depth + 1));
    }

    #[test]
    fn theta_file_round_trips(
        kind in arb_kind(),
        mode in arb_mode(),
        depth in 1usize..5,
        agents in 1usize..4,
        scale in 0.01f64..10.0,
    ) {
        let tuple: Vec<f64> = (0..kind.tuple_len()).map(|i| scale / (i + 1) as f64).collect();
        let schedule = HyperparameterSchedule::repeated(kind, mode, depth, agents, &tuple).unwrap();
        let json = serde_json::to_string(&ThetaFile::from_schedule(&schedule).unwrap()).unwrap();
        let back = serde_json::from_str::<ThetaFile>(&json).unwrap().into_schedule().unwrap();
        prop_assert_eq!(back, schedule);
    }

    #[test]
    fn mse_loss_is_zero_only_on_targets(
        target in prop::collection::vec(-3.0f64..3.0, 1..5),
        agents in 1usize..4,
        offset in 0.01f64..1.0,
    ) {
        let exact = vec![vec![target.clone(); agents]];
        prop_assert_eq!(mse_loss(&exact, std::slice::from_ref(&target)).unwrap(), 0.0);
        let shifted: Vec<f64> = target.iter().map(|v| v + offset).collect();
        let off = vec![vec![shifted; agents]];
        let loss = mse_loss(&off, std::slice::from_ref(&target)).unwrap();
        prop_assert!(loss > 0.0);
    }
}
