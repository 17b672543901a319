use std::collections::HashMap;

use pipebo_core::acquisition::InnerOptimizerOptions;
use pipebo_core::engine::{run, EngineConfig, EngineState, ExperimentalSet, PipelineProblem, Strategy};
use pipebo_core::gp::FitOptions;

fn quick_config() -> EngineConfig {
    EngineConfig {
        inner: InnerOptimizerOptions {
            candidates: 300,
            refine_top: 3,
            max_iters: 50,
            tolerance: 1e-6,
        },
        fit: FitOptions {
            restarts: 0,
            ..FitOptions::default()
        },
        lipschitz_samples: 100,
        ..EngineConfig::default()
    }
}

fn sphere(x: &[f64]) -> f64 {
    -x.iter().enumerate().map(|(i, v)| (v - 0.5 * i as f64).powi(2)).sum::<f64>()
}

fn bits(points: &[Vec<f64>]) -> Vec<Vec<u64>> {
    points.iter().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect()
}

fn snapshot(state: &EngineState) -> Vec<ExperimentalSet> {
    state.in_flight().cloned().collect()
}

#[test]
fn committed_prefixes_never_move_over_a_full_run() {
    let problem = PipelineProblem::on_standard_box(vec![1, 1, 1], 1, 200).unwrap();
    let k = problem.processes();
    let mut state = EngineState::new(Strategy::PipeBo, problem.clone(), quick_config(), 11);
    let mut last: HashMap<usize, ExperimentalSet> = HashMap::new();
    for (n, set) in state.in_flight().enumerate() {
        assert_eq!(set.committed, k - n);
        last.insert(set.index, set.clone());
    }
    let mut moved = 0;
    while !state.is_finished() {
        state.step(&mut sphere).unwrap();
        let t = state.clock();
        assert_eq!(state.in_flight().count(), k, "step {t}");
        assert_eq!(state.completed().len(), t - k + 1, "step {t}");
        for (i, done) in state.completed().iter().enumerate() {
            assert_eq!(done.index, i + 1);
            assert!(done.result.is_some());
        }
        let done = state.completed().last().unwrap();
        assert_eq!(bits(&done.points), bits(&last[&done.index].points), "B{} changed after full commit", done.index);
        for set in state.in_flight() {
            assert!(set.result.is_none());
            if let Some(prev) = last.get(&set.index) {
                assert_eq!(set.committed, prev.committed + 1);
                let m = problem.prefix_len(prev.committed);
                for (a, b) in set.points.iter().zip(&prev.points) {
                    assert_eq!(bits(&[a[..m].to_vec()]), bits(&[b[..m].to_vec()]), "B{} prefix moved at step {t}", set.index);
                    if a != b {
                        moved += 1;
                    }
                }
            } else {
                assert_eq!(set.committed, 1, "new set B{}", set.index);
            }
        }
        last = snapshot(&state).into_iter().map(|s| (s.index, s)).collect();
    }
    assert_eq!(state.clock(), 200);
    // The updates must actually do something for the test to mean anything.
    assert!(moved > 0);
}

#[test]
fn noupdate_freezes_whole_sets() {
    let problem = PipelineProblem::on_standard_box(vec![1, 1, 1], 1, 40).unwrap();
    let mut state = EngineState::new(Strategy::NoUpdate, problem, quick_config(), 5);
    let mut first_seen: HashMap<usize, Vec<Vec<u64>>> = HashMap::new();
    while !state.is_finished() {
        for set in state.in_flight() {
            let b = bits(&set.points);
            assert_eq!(first_seen.entry(set.index).or_insert_with(|| b.clone()), &b);
        }
        state.step(&mut sphere).unwrap();
    }
}

#[test]
fn unobserved_results_do_not_leak_into_the_next_proposal() {
    let problem = PipelineProblem::on_standard_box(vec![1, 2, 1], 2, 200).unwrap();
    for strategy in [Strategy::PipeBo, Strategy::NoUpdate] {
        for t_stop in [3, 9, 17] {
            let mut reference = EngineState::new(strategy, problem.clone(), quick_config(), 21);
            while reference.clock() < t_stop {
                reference.step(&mut sphere).unwrap();
            }
            // Every point not yet evaluated at t_stop, in its current form.
            let pending: Vec<Vec<u64>> = reference.in_flight().flat_map(|s| bits(&s.points)).collect();
            let mut perturbed = |x: &[f64]| {
                let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
                sphere(x) + if pending.contains(&key) { 1e3 } else { 0.0 }
            };
            let mut other = EngineState::new(strategy, problem.clone(), quick_config(), 21);
            while other.clock() < t_stop {
                other.step(&mut perturbed).unwrap();
            }
            let a = snapshot(&reference);
            let b = snapshot(&other);
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.index, y.index);
                assert_eq!(bits(&x.points), bits(&y.points), "{strategy} at step {t_stop}: B{} differs", x.index);
            }
            assert_eq!(a.last().unwrap().index, t_stop + 1);
        }
    }
}

#[test]
fn throughput_matches_the_pipeline_arithmetic() {
    for dims in [vec![2], vec![1, 1], vec![1, 1, 1], vec![1, 1, 1, 1, 1]] {
        let k = dims.len();
        for p in [1, 2] {
            for steps in [k, 13, 24] {
                let problem = PipelineProblem::on_standard_box(dims.clone(), p, steps).unwrap();
                let pipe = run(Strategy::PipeBo, &problem, &mut sphere, 3, &quick_config()).unwrap();
                assert_eq!(pipe.completed_sets, steps - k + 1, "K={k} P={p} S={steps}");
                assert_eq!(pipe.evaluations.len(), p * (steps - k + 1));
                let vanilla = run(Strategy::Vanilla, &problem, &mut sphere, 3, &quick_config()).unwrap();
                assert_eq!(vanilla.completed_sets, steps / k, "K={k} P={p} S={steps}");
                assert_eq!(vanilla.evaluations.len(), p * (steps / k));
                for out in [&pipe, &vanilla] {
                    assert_eq!(out.best_values.len(), steps);
                }
            }
        }
    }
}

#[test]
fn penalizer_count_before_proposal_is_all_running_points() {
    for (dims, p) in [(vec![1, 1], 1), (vec![1, 1, 1], 2), (vec![1, 1, 1, 1, 1], 1)] {
        let k = dims.len();
        let problem = PipelineProblem::on_standard_box(dims, p, 12).unwrap();
        for strategy in [Strategy::PipeBo, Strategy::NoUpdate] {
            let mut state = EngineState::new(strategy, problem.clone(), quick_config(), 8);
            while !state.is_finished() {
                state.step(&mut sphere).unwrap();
                assert_eq!(state.last_report().penalizers_before_proposal, (k - 1) * p);
            }
        }
    }
}

#[test]
fn single_process_pipelines_reduce_to_vanilla() {
    let problem = PipelineProblem::on_standard_box(vec![3], 1, 25).unwrap();
    let vanilla = run(Strategy::Vanilla, &problem, &mut sphere, 2, &quick_config()).unwrap();
    for strategy in [Strategy::PipeBo, Strategy::NoUpdate] {
        let other = run(strategy, &problem, &mut sphere, 2, &quick_config()).unwrap();
        assert_eq!(other.evaluations, vanilla.evaluations, "{strategy}");
        let a: Vec<u64> = other.best_values.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = vanilla.best_values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn best_values_follow_the_evaluation_log() {
    let problem = PipelineProblem::on_standard_box(vec![2, 1], 2, 30).unwrap();
    for strategy in Strategy::ALL {
        let out = run(strategy, &problem, &mut sphere, 4, &quick_config()).unwrap();
        for (i, b) in out.best_values.iter().enumerate() {
            let step = i + 1;
            let oracle = out
                .evaluations
                .iter()
                .filter(|e| e.step <= step)
                .map(|e| e.y)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(b.to_bits(), oracle.to_bits(), "{strategy} step {step}");
        }
        for e in &out.evaluations {
            assert_eq!(e.y, sphere(&e.x));
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let problem = PipelineProblem::on_standard_box(vec![1, 2], 1, 20).unwrap();
    for strategy in Strategy::ALL {
        let a = run(strategy, &problem, &mut sphere, 9, &quick_config()).unwrap();
        let b = run(strategy, &problem, &mut sphere, 9, &quick_config()).unwrap();
        assert_eq!(a, b);
        let c = run(strategy, &problem, &mut sphere, 10, &quick_config()).unwrap();
        assert_ne!(a.evaluations, c.evaluations);
    }
}
