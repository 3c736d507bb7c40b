use proptest::prelude::*;

use lbmpk::exec::{run_baseline, Variant};
use lbmpk::levels::{bfs_levels, build_level_structure, Graph, LevelParams};
use lbmpk::matrix::{
    gen_random_symmetric, gen_stencil_2d7pt, permute_symmetric, read_matrix_market, write_matrix_market,
};
use lbmpk::schedule::{build_schedule, NodeClass, Step};
use lbmpk::traffic::{simulate_traffic, CacheModel, Trace};
use lbmpk::{CrsMatrix, GroupBudget, MpkConfig, MpkEngine};

fn path(n: usize) -> CrsMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    CrsMatrix::from_triplets(n, &t).unwrap()
}

fn random_matrix() -> impl Strategy<Value = CrsMatrix> {
    (2usize..150, 0usize..6, any::<u64>()).prop_map(|(n, d, s)| gen_random_symmetric(n, d, s).unwrap())
}

fn check_leaves_cover(a: &CrsMatrix, params: &LevelParams) {
    let s = build_level_structure(a, params).unwrap();
    let mut next = 0;
    for g in s.tree.leaves() {
        assert_eq!(g.row_start, next);
        next = g.row_end;
    }
    assert_eq!(next, a.n_rows());
    assert!(s.tree.depth() <= params.s_max);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn levels_confine_neighbours(a in random_matrix(), root_frac in 0.0f64..1.0) {
        let root = ((a.n_rows() - 1) as f64 * root_frac) as usize;
        let (ls, perm) = bfs_levels(&a, root).unwrap();
        let g = Graph::from_matrix(&a);
        let mut level_of = vec![0usize; a.n_rows()];
        for l in 0..ls.n_levels() {
            prop_assert!(!ls.level(l).is_empty());
            for r in ls.level(l) {
                level_of[perm.perm()[r]] = l;
            }
        }
        prop_assert_eq!(perm.perm()[0], root);
        for v in 0..a.n_rows() {
            for &u in g.neighbors(v) {
                prop_assert!(level_of[u as usize].abs_diff(level_of[v]) <= 1);
            }
        }
    }

    #[test]
    fn subgraph_levels_confine_neighbours(a in random_matrix(), rows in 1usize..12, s_max in 1usize..4) {
        let params = LevelParams { p_max: 3, budget: GroupBudget::MaxRows(rows), s_max, root: 0 };
        let s = build_level_structure(&a, &params).unwrap();
        let ap = permute_symmetric(&a, &s.perm).unwrap();
        let mut stack = vec![&s.tree];
        while let Some(t) = stack.pop() {
            let ls = &t.levels;
            let rows = t.rows();
            let mut level_of = vec![usize::MAX; ap.n_rows()];
            for l in 0..ls.n_levels() {
                for r in ls.level(l) {
                    level_of[r] = l;
                }
            }
            // rows of refined spans were renumbered by the child
            let refined = |r: usize| t.spans.iter().any(|s| s.child.rows().contains(&r));
            if t.stage > 0 {
                for r in rows.clone().filter(|&r| !refined(r)) {
                    for &c in ap.row(r).0 {
                        let c = c as usize;
                        if rows.contains(&c) && !refined(c) {
                            prop_assert!(level_of[c].abs_diff(level_of[r]) <= 1);
                        }
                    }
                }
            }
            stack.extend(t.spans.iter().map(|s| &s.child));
        }
        check_leaves_cover(&a, &params);
    }

    #[test]
    fn preprocessing_is_deterministic(a in random_matrix(), rows in 1usize..10) {
        let params = LevelParams { p_max: 4, budget: GroupBudget::MaxRows(rows), s_max: 2, root: 0 };
        let s1 = build_level_structure(&a, &params).unwrap();
        let s2 = build_level_structure(&a, &params).unwrap();
        prop_assert_eq!(&s1.tree, &s2.tree);
        prop_assert_eq!(s1.perm.perm(), s2.perm.perm());
        let mut seen = vec![false; a.n_rows()];
        for &v in s1.perm.perm() {
            prop_assert!(!seen[v]);
            seen[v] = true;
        }
    }

    #[test]
    fn schedules_are_topological(l_m in 1usize..200, p_max in 1usize..16, rows in 1usize..8) {
        let a = path(l_m);
        let params = LevelParams { p_max, budget: GroupBudget::MaxRows(rows), s_max: 0, root: 0 };
        let s = build_level_structure(&a, &params).unwrap();
        let ap = permute_symmetric(&a, &s.perm).unwrap();
        let sch = build_schedule(&s.tree, &ap, p_max).unwrap();
        prop_assert_eq!(sch.n_nodes(), s.tree.groups.len() * p_max);
        prop_assert!(sch.is_topological());
        prop_assert_eq!(&sch.order, &sch.ideal_order());
        for u in 0..sch.units.len() {
            for p in 1..p_max {
                prop_assert!(sch.reuse_distance(u, p).unwrap() <= p_max + 1);
            }
        }
    }

    #[test]
    fn recursive_schedules_are_topological(a in random_matrix(), p_max in 1usize..10, rows in 1usize..10, s_max in 0usize..3) {
        let params = LevelParams { p_max, budget: GroupBudget::MaxRows(rows), s_max, root: 0 };
        let s = build_level_structure(&a, &params).unwrap();
        let ap = permute_symmetric(&a, &s.perm).unwrap();
        let sch = build_schedule(&s.tree, &ap, p_max).unwrap();
        prop_assert_eq!(sch.n_nodes(), sch.units.len() * p_max);
        prop_assert!(sch.is_topological());
        // every node in exactly one place
        let mut seen = vec![false; sch.n_nodes()];
        for n in &sch.order {
            let id = n.unit * p_max + n.power - 1;
            prop_assert!(!seen[id]);
            seen[id] = true;
        }
        // macro contents are inside or diamond nodes
        fn check(steps: &[Step], in_macro: bool) -> bool {
            steps.iter().all(|s| match s {
                Step::Node(n) => !in_macro || matches!(n.class, NodeClass::Inside | NodeClass::Diamond),
                Step::Macro { steps, .. } => check(steps, true),
            })
        }
        prop_assert!(check(&sch.steps, false));
    }

    #[test]
    fn variants_match_baseline(a in random_matrix(), p_max in 1usize..6, w in 1usize..4, rows in 1usize..12) {
        let x: Vec<f64> = (0..a.n_rows()).map(|i| (i as f64 * 0.61).sin()).collect();
        for v in Variant::ALL {
            let cfg = MpkConfig::new(v, p_max).with_workers(w).with_budget(GroupBudget::MaxRows(rows)).with_s_max(2);
            let e = MpkEngine::new(&a, cfg).unwrap();
            let xp = e.permutation().apply(&x);
            let (pv, _) = e.run_permuted(&xp).unwrap();
            let base = run_baseline(e.matrix(), &xp, p_max, 1).unwrap();
            prop_assert!(pv.bits_eq(&base), "{}", v);
        }
    }

    #[test]
    fn matrix_market_round_trip(a in random_matrix()) {
        let mut buf = Vec::new();
        write_matrix_market(&a, &mut buf).unwrap();
        let b = read_matrix_market(std::io::Cursor::new(buf)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn traffic_monotone_in_capacity(n in 4usize..20, p_max in 1usize..5, caps in proptest::collection::vec(0usize..40_000, 2)) {
        let a = gen_stencil_2d7pt(n, n).unwrap();
        let e = MpkEngine::new(&a, MpkConfig::new(Variant::LbLg, p_max).with_budget(GroupBudget::MaxRows(2 * n))).unwrap();
        let (lo, hi) = (caps[0].min(caps[1]), caps[0].max(caps[1]));
        let mut small = CacheModel::new(lo, 64).unwrap();
        let mut big = CacheModel::new(hi, 64).unwrap();
        let rs = simulate_traffic(e.matrix(), Trace::Schedule(e.schedule()), p_max, &mut small).unwrap();
        let rb = simulate_traffic(e.matrix(), Trace::Schedule(e.schedule()), p_max, &mut big).unwrap();
        prop_assert!(rb.total_bytes <= rs.total_bytes);
        prop_assert_eq!(rs.total_bytes, rs.matrix_bytes + rs.row_ptr_bytes + rs.vector_bytes);
        prop_assert!(small.occupied_lines() * 64 <= lo);
    }
}

#[test]
fn stencil_round_trips_through_matrix_market() {
    let a = gen_stencil_2d7pt(8, 8).unwrap();
    let dir = std::env::temp_dir().join(format!("lbmpk-mm-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("stencil.mtx");
    write_matrix_market(&a, std::fs::File::create(&p).unwrap()).unwrap();
    let b = lbmpk::matrix::load_matrix_market(&p).unwrap();
    assert_eq!(a, b);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn lb_traffic_falls_with_power() {
    // one grouping valid for the largest power, scheduled for each power
    let a = lbmpk::matrix::gen_stencil_3d(16, 2).unwrap();
    let cache = 12 * a.nnz() / 2;
    let cfg = MpkConfig::new(Variant::LbLg, 4).with_budget(GroupBudget::cache(cache as f64));
    let e4 = MpkEngine::new(&a, cfg).unwrap();
    assert!(e4.tree().unwrap().groups.iter().all(|g| !g.violating));
    let mut last = f64::INFINITY;
    for p in [1, 2, 3, 4] {
        let e = e4.with_power(p).unwrap();
        let mut c = CacheModel::new(cache, 64).unwrap();
        let r = simulate_traffic(e.matrix(), Trace::Schedule(e.schedule()), p, &mut c).unwrap();
        assert!(r.matrix_code_balance <= last);
        last = r.matrix_code_balance;
    }
}
