// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "cycletrack/cycle.hpp"
#include "cycletrack/eval.hpp"

namespace {

using namespace cycletrack;

void BM_Giou(benchmark::State& state) {
  const BBox a{10, 10, 8, 6}, b{12, 9, 7, 7};
  for (auto _ : state) {
    benchmark::DoNotOptimize(giou(a, b));
  }
}
BENCHMARK(BM_Giou);

void BM_Crop(benchmark::State& state) {
  Image img(160, 160);
  Rng rng(2);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(256));
  const BBox box{80, 80, 32, 32};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        crop(img, box, 4.0, static_cast<int>(state.range(0))));
  }
}
BENCHMARK(BM_Crop)->Arg(128)->Arg(64);

void BM_ScoreAndTopk(benchmark::State& state) {
  Rng rng(3);
  const int n_s = static_cast<int>(state.range(0));
  ad::Mat<float> attn(4, n_s), cls(n_s, 1);
  for (int h = 0; h < 4; ++h)
    for (int j = 0; j < n_s; ++j) attn(h, j) = static_cast<float>(rng.uniform());
  for (int j = 0; j < n_s; ++j) cls(j, 0) = static_cast<float>(rng.uniform());
  for (auto _ : state) {
    const auto s = dca::score_tokens<float>(attn, cls);
    benchmark::DoNotOptimize(dca::topk_indices(s, 8));
  }
}
BENCHMARK(BM_ScoreAndTopk)->Arg(64)->Arg(256);

struct EncodeFixture {
  EncoderConfig cfg;
  TrackModel<float> model;
  ad::Mat<float> z, x;

  EncodeFixture() {
    cfg.patch_size = 16;
    cfg.embed_dim = 128;
    cfg.depth = 4;
    cfg.num_heads = 4;
    cfg.template_res = 64;
    cfg.search_res = 128;
    model = TrackModel<float>::create(cfg, 7);
    Rng rng(8);
    z = ad::Mat<float>(cfg.n_template_tokens(), cfg.embed_dim);
    x = ad::Mat<float>(cfg.n_search_tokens(), cfg.embed_dim);
    for (int i = 0; i < z.size(); ++i) z.data()[i] = static_cast<float>(rng.normal());
    for (int i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
  }
};

void BM_EncodeForward(benchmark::State& state) {
  EncodeFixture f;
  for (auto _ : state) {
    ad::Graph<float> g;
    const auto out =
        f.model.encoder.encode(g, f.model.params, g.input(f.z), g.input(f.x));
    benchmark::DoNotOptimize(g.value(out.f_x));
  }
}
BENCHMARK(BM_EncodeForward)->Unit(benchmark::kMillisecond);

void BM_EncodeForwardBackward(benchmark::State& state) {
  EncodeFixture f;
  for (auto _ : state) {
    ad::Graph<float> g;
    const auto out =
        f.model.encoder.encode(g, f.model.params, g.input(f.z), g.input(f.x));
    g.backward(g.sum(out.f_x));
    benchmark::DoNotOptimize(g.grad(out.f_x));
  }
}
BENCHMARK(BM_EncodeForwardBackward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  EncodeFixture f;
  SceneSpec spec;
  spec.canvas_w = spec.canvas_h = 160;
  spec.target_w = spec.target_h = 32;
  spec.speed = 2;
  spec.length = 8;
  std::vector<FrameSequence> data{generate(spec, 1), generate(spec, 2)};
  TrainSchedule sched;
  sched.batch_size = static_cast<int>(state.range(0));
  sched.dca.switch_epoch = 1000;
  Trainer<float> trainer(f.model, sched, CropConfig{}, TrainVariant::Full, 9, 2);
  Rng rng(10);
  int step = 0;
  for (auto _ : state) {
    auto batch = sample_training_batch(data, sched.batch_size, 2, rng);
    benchmark::DoNotOptimize(trainer.train_step(batch.samples, 0, step++));
  }
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
