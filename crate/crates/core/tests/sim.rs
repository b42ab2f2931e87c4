use proptest::prelude::*;
use twinehost_core::sim::{Accounting, Bucket, CostModel, Direction, Simulator};

#[derive(Debug, Clone)]
enum Charge {
    Crossing,
    Clear(u64),
    SecureWrite(u64),
    Io(u64),
    App(u64),
}

fn charge() -> impl Strategy<Value = Charge> {
    prop_oneof![
        Just(Charge::Crossing),
        (0u64..1 << 20).prop_map(Charge::Clear),
        (0u64..1 << 20).prop_map(Charge::SecureWrite),
        (0u64..1 << 20).prop_map(Charge::Io),
        (0u64..1000).prop_map(Charge::App),
    ]
}

fn apply(sim: &mut Simulator, cs: &[Charge]) {
    for c in cs {
        match *c {
            Charge::Crossing => sim.crossing(Direction::Ocall),
            Charge::Clear(n) => sim.mem(n, 0, 0),
            Charge::SecureWrite(n) => sim.mem(0, n, 0),
            Charge::Io(n) => sim.untrusted_io(n),
            Charge::App(n) => sim.app(n),
        }
    }
}

fn run(cs: &[Charge]) -> Accounting {
    let mut sim = Simulator::new(CostModel::paper());
    apply(&mut sim, cs);
    sim.report()
}

proptest! {
    #[test]
    fn charges_are_deterministic_and_order_free(mut cs in prop::collection::vec(charge(), 0..200), split in 0usize..200) {
        let a = run(&cs);
        prop_assert_eq!(a.clone(), run(&cs));
        let total: u64 = Bucket::ALL.iter().map(|&b| a.bucket_ps(b)).sum();
        prop_assert_eq!(total, a.total_ps());

        // additive across separately run halves
        let split = split.min(cs.len());
        let mut merged = run(&cs[..split]);
        merged.merge(&run(&cs[split..]));
        prop_assert_eq!(merged.total_ps(), a.total_ps());

        cs.reverse();
        prop_assert_eq!(run(&cs).total_ps(), a.total_ps());
    }

    #[test]
    fn disabled_model_never_charges(cs in prop::collection::vec(charge(), 0..100)) {
        let mut sim = Simulator::new(CostModel::disabled());
        apply(&mut sim, &cs);
        let r = sim.report();
        prop_assert_eq!(r.total_ps(), 0);
        let crossings = cs.iter().filter(|c| matches!(c, Charge::Crossing)).count() as u64;
        prop_assert_eq!(r.crossings, crossings);
    }
}

#[test]
fn crossing_costs_the_reference_cycle_count_each_way() {
    let mut sim = Simulator::new(CostModel::paper());
    sim.crossing(Direction::Ecall);
    let ns = sim.report().bucket_ns(Bucket::Boundary);
    assert!((ns - 2.0 * 13_100.0 / 3.8).abs() < 1.0, "{ns}");
}

#[test]
fn growing_past_the_limit_faults_on_the_excess_pages() {
    let mut sim = Simulator::new(CostModel::paper().with_epc_limit(92 << 20));
    sim.mem(0, 0, 96 << 20);
    assert_eq!(sim.report().page_faults, 1024);
    let mut sim = Simulator::new(CostModel::paper().with_epc_limit(92 << 20));
    sim.mem(0, 0, 92 << 20);
    assert_eq!(sim.report().page_faults, 0);
    sim.mem(0, 0, 4 << 20);
    assert_eq!(sim.report().page_faults, 1024);

    let mut sim = Simulator::new(CostModel::paper().with_epc_limit(93 << 20));
    sim.mem(0, 0, 92 << 20);
    sim.mem(0, 0, 4 << 20);
    assert_eq!(sim.report().page_faults, 768);
    assert_eq!(sim.report().bucket_ns(Bucket::Paging), 768.0 * CostModel::paper().page_fault_ns);
}

#[test]
fn named_profiles_differ_only_where_expected() {
    let p = CostModel::named("paper").unwrap();
    let r = CostModel::named("roundtrip-4ms").unwrap();
    assert_eq!(r.crossing_ns, 2_000_000.0);
    assert_eq!((p.clear_ns_per_byte, p.epc_limit), (r.clear_ns_per_byte, r.epc_limit));
    assert!(!CostModel::named("off").unwrap().enabled);
    assert!(CostModel::named("nope").is_err());
}
