// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "fairmib/graph.hpp"
#include "fairmib/harness.hpp"
#include "fairmib/model.hpp"
#include "fairmib/rng.hpp"
#include "fairmib/views.hpp"

using namespace fairmib;

namespace {

GraphDataset bench_graph(int per_cell, int dim) {
    SynthSpec spec;
    spec.cell_sizes = {per_cell, per_cell, per_cell, per_cell};
    spec.feature_dim = dim;
    spec.intra_cell_edge_prob = 0.02;
    spec.cross_cell_edge_prob = 0.01;
    spec.seed = 1;
    GraphDataset g = gen_synthetic(spec);
    return make_splits(g, SplitSpec{0.5, 0.25, 0.25, 2});
}

void BM_spmm(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    GraphDataset g = bench_graph(n / 4, 9);
    CsrMatrix a = normalize_adjacency(g);
    Rng rng(3);
    Matrix x = rng.normal_matrix(g.n, 16);
    Matrix out;
    for (auto _ : state) {
        a.multiply(x, out);
        benchmark::DoNotOptimize(out.data.data());
    }
    state.SetItemsProcessed(state.iterations() * a.nnz());
}
BENCHMARK(BM_spmm)->Arg(400)->Arg(2000)->Arg(8000);

void BM_diffuse(benchmark::State& state) {
    GraphDataset g = bench_graph(static_cast<int>(state.range(0)) / 4, 9);
    CsrMatrix a = normalize_adjacency(g);
    for (auto _ : state) {
        Matrix out = diffuse(a, g.features, 0.1, 3);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(BM_diffuse)->Arg(400)->Arg(2000);

void BM_infonce_pair(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(4);
    Matrix za = rng.normal_matrix(n, 16), zb = rng.normal_matrix(n, 16);
    for (auto _ : state) {
        Tape t;
        TensorId loss = infonce_pair(t, t.leaf(za, true), t.leaf(zb, true), 0.5);
        t.backward(loss);
        benchmark::DoNotOptimize(t.grad(0).data.data());
    }
}
BENCHMARK(BM_infonce_pair)->Arg(100)->Arg(400)->Arg(1000);

void BM_training_epoch(benchmark::State& state) {
    RunConfig cfg;
    cfg.synth.cell_sizes = {100, 100, 100, 100};
    cfg.synth.feature_dim = 9;
    cfg.synth.seed = 5;
    GraphDataset g = prepare_dataset(cfg);
    ViewConfig vc;
    vc.propensity.epochs = 50;
    ViewBundle views = build_views(g, vc);
    ModelConfig mc;
    mc.input_dim = views.feature_view.features.cols;
    Rng rng(6);
    FairMibNet net(mc, rng);
    AdamState adam;
    std::vector<double> s_col(g.n);
    for (int i = 0; i < g.n; ++i) s_col[i] = g.sensitive[i];

    for (auto _ : state) {
        NoiseSet noise = NoiseSet::sample(rng, mc, g.n);
        Tape tape;
        ForwardIds f = net.forward(tape, views, &s_col, &noise);
        TotalLossIds ids;
        ids.task = task_loss(tape, f.logits, g.labels, g.train_mask);
        std::vector<TensorId> codes;
        for (int slot = 0; slot < 3; ++slot)
            if (f.latents[slot]) {
                ids.kl[slot] = kl_standard_normal(tape, *f.latents[slot]);
                codes.push_back(f.latents[slot]->z);
            }
        ids.con = consistency_loss(tape, codes, 0.5);
        total_loss(tape, ids, 1e-3, 1e-3);
        tape.backward(ids.total);
        adam.step(net.params(), net.collect_grads(tape, f));
    }
}
BENCHMARK(BM_training_epoch);

void BM_build_views(benchmark::State& state) {
    GraphDataset g = bench_graph(static_cast<int>(state.range(0)) / 4, 9);
    ViewConfig vc;
    for (auto _ : state) {
        ViewBundle b = build_views(g, vc);
        benchmark::DoNotOptimize(b.diffusion_view.features.data.data());
    }
}
BENCHMARK(BM_build_views)->Arg(400)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
