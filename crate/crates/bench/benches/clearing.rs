use criterion::{criterion_group, criterion_main, Criterion};
use gridshare_bench::scenario;
use gridshare_core::coordinator::Mode;
use gridshare_core::opf::PeerInjections;
use gridshare_core::{build_opf, build_trade_graph_parallel, run_price_adjustment, solve_opf, OpfInput};

fn opf(c: &mut Criterion) {
    let s = scenario("141bus", Mode::System, 0.0);
    let input = OpfInput {
        case: &s.case,
        injections: PeerInjections::none(&s.case),
    };
    let prog = build_opf(&input).unwrap();
    c.bench_function("opf_141_build", |b| b.iter(|| build_opf(&input).unwrap()));
    c.bench_function("opf_141_solve", |b| b.iter(|| solve_opf(&prog).unwrap()));
}

fn clearing(c: &mut Criterion) {
    let small = scenario("15bus", Mode::System, 1.0);
    c.bench_function("system_15", |b| b.iter(|| small.run().unwrap()));
    let large = scenario("141bus", Mode::System, 0.3);
    c.bench_function("system_141_gamma_0.3", |b| b.iter(|| large.run().unwrap()));
    let peer = scenario("15bus", Mode::Peer, 1.0);
    c.bench_function("peer_15", |b| b.iter(|| peer.run().unwrap()));
}

fn matching(c: &mut Criterion) {
    let s = scenario("141bus", Mode::Peer, 0.3);
    let cfg = s.config.matching;
    let graph = build_trade_graph_parallel(&s.peers, &cfg).unwrap();
    let charges = vec![0.0; graph.len()];
    c.bench_function("match_141_gamma_0.3", |b| {
        b.iter(|| run_price_adjustment(&graph, &s.peers, &charges, &cfg, None).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = opf, clearing, matching
}
criterion_main!(benches);
