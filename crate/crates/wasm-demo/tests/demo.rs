use racetune_wasm::{selection_demo, synthetic_run, tsp_solve};

#[test]
fn synthetic_run_reports_every_race() {
    let s = synthetic_run("entropy", 600, 2).unwrap();
    assert!(s.used <= 600);
    assert!(!s.races.is_empty());
    assert_eq!(s.races.iter().map(|r| r.evaluations).sum::<u64>(), s.used);
    assert!(s.races.iter().all(|r| r.best_cost.is_finite()));
    assert!(synthetic_run("best", 600, 2).is_err());
}

#[test]
fn tsp_tour_is_a_permutation() {
    let t = tsp_solve(30, 5, "mmas", true, 200, 1).unwrap();
    let mut tour = t.tour.clone();
    tour.sort_unstable();
    assert_eq!(tour, (0..30).collect::<Vec<_>>());
    assert_eq!(t.coords.len(), 30);
    assert_eq!(*t.history.last().unwrap(), t.length);
    assert!(tsp_solve(30, 5, "xyz", false, 200, 1).is_err());
}

#[test]
fn every_strategy_keeps_the_best() {
    let d = selection_demo(40, 5, 3).unwrap();
    assert_eq!(d.selections.len(), 4);
    let best = d.population[0].id;
    for s in &d.selections {
        assert_eq!(s.members.len(), 5);
        assert!(s.members.contains(&best), "{}", s.strategy);
    }
}
