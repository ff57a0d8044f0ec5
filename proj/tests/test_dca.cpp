#include <doctest.h>

#include "cycletrack/dca.hpp"
#include "cycletrack/model.hpp"

#include <set>

using namespace cycletrack;
using dca::ContextMode;

namespace {

template <typename S>
ad::Mat<S> random_mat(Rng& rng, int r, int c, double lo = 0.0, double hi = 1.0) {
  ad::Mat<S> m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = static_cast<S>(rng.uniform(lo, hi));
  return m;
}

std::set<int> brute_force_topk(const Eigen::VectorXd& s, int k) {
  std::vector<std::pair<double, int>> all;
  for (int i = 0; i < s.size(); ++i) all.emplace_back(s(i), i);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::set<int> out;
  for (int i = 0; i < k; ++i) out.insert(all[i].second);
  return out;
}

}  // namespace

TEST_CASE("score_tokens forced arithmetic") {
  ad::Mat<double> attn(2, 2);
  attn << 0.2, 0.8, 0.4, 0.6;
  ad::Mat<double> cls(2, 1);
  cls << 0.5, 0.5;
  const auto s = dca::score_tokens<double>(attn, cls);
  CHECK(s(0) == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(s(1) == doctest::Approx(0.35).epsilon(1e-15));

  // zero cls absorbs
  cls.setZero();
  CHECK(dca::score_tokens<double>(attn, cls).isZero());

  // length mismatch
  ad::Mat<double> bad(3, 1);
  CHECK_THROWS_AS(dca::score_tokens<double>(attn, bad), std::invalid_argument);
}

TEST_CASE("score_tokens equals the naive double-loop oracle exactly") {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + rng.uniform_int(4);
    const int ns = 2 + rng.uniform_int(30);
    const auto attn = random_mat<double>(rng, n, ns);
    const auto cls = random_mat<double>(rng, ns, 1);
    const auto s = dca::score_tokens<double>(attn, cls);
    for (int j = 0; j < ns; ++j) {
      double acc = 0.0;
      for (int h = 0; h < n; ++h) acc += attn(h, j) * cls(j, 0);
      acc /= n;
      CHECK(s(j) == doctest::Approx(acc).epsilon(1e-15));
    }
  }
}

TEST_CASE("score_tokens is linear in cls; top-k invariant under positive scale") {
  Rng rng(4);
  const auto attn = random_mat<double>(rng, 3, 20);
  const auto cls = random_mat<double>(rng, 20, 1);
  const auto s1 = dca::score_tokens<double>(attn, cls);
  const double a = 3.7;
  const auto s2 = dca::score_tokens<double>(attn, (cls * a).eval());
  CHECK((s2 - a * s1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(brute_force_topk(s1, 5) == brute_force_topk(s2, 5));
}

TEST_CASE("sample_prompt selects the exact top-k set") {
  // forced ranking
  {
    ad::Graph<double> g;
    const int fx = g.input(ad::Mat<double>::Random(4, 8));
    ad::Mat<double> attn(1, 4);
    attn << 0.1, 0.9, 0.3, 0.5;
    ad::Mat<double> cls = ad::Mat<double>::Ones(4, 1);
    const auto ctx = dca::sample_prompt(g, fx, attn, cls, 2);
    CHECK(ctx.mode == ContextMode::Prompt);
    const std::set<int> got(ctx.source_indices.begin(), ctx.source_indices.end());
    CHECK(got == std::set<int>{1, 3});
    // gathered rows carry the selected token values
    CHECK(g.value(ctx.node).row(0) == g.value(fx).row(ctx.source_indices[0]));
  }

  // k = N_s selects everything
  {
    ad::Graph<double> g;
    const int fx = g.input(ad::Mat<double>::Random(6, 4));
    Rng ra(5), rb(6);
    const auto ctx = dca::sample_prompt(g, fx, random_mat<double>(ra, 2, 6),
                                        random_mat<double>(rb, 6, 1), 6);
    CHECK(ctx.count() == 6);
    std::set<int> got(ctx.source_indices.begin(), ctx.source_indices.end());
    CHECK(got.size() == 6);
  }

  // random trials against the full-sort oracle, including ties
  Rng rng(7);
  for (int t = 0; t < 1000; ++t) {
    const int ns = 2 + rng.uniform_int(40);
    const int n = 1 + rng.uniform_int(3);
    ad::Mat<double> attn = random_mat<double>(rng, n, ns);
    ad::Mat<double> cls = random_mat<double>(rng, ns, 1);
    if (t % 4 == 0) {
      // inject exact ties
      for (int j = 1; j < ns; j += 2) attn.col(j) = attn.col(j - 1);
      for (int j = 1; j < ns; j += 2) cls(j, 0) = cls(j - 1, 0);
    }
    const int k = 1 + rng.uniform_int(ns);
    ad::Graph<double> g;
    const int fx = g.input(ad::Mat<double>::Zero(ns, 4));
    const auto ctx = dca::sample_prompt(g, fx, attn, cls, k);
    const auto s = dca::score_tokens<double>(attn, cls);
    CHECK(std::set<int>(ctx.source_indices.begin(), ctx.source_indices.end()) ==
          brute_force_topk(s, k));
  }

  // k too large
  ad::Graph<double> g;
  const int fx = g.input(ad::Mat<double>::Zero(4, 4));
  const ad::Mat<double> ones_attn = ad::Mat<double>::Ones(1, 4);
  const ad::Mat<double> ones_cls = ad::Mat<double>::Ones(4, 1);
  CHECK_THROWS_AS(dca::sample_prompt(g, fx, ones_attn, ones_cls, 5),
                  std::invalid_argument);
}

TEST_CASE("prompt sampling on a concentrated fixture stays on target") {
  // cls and attention mass both concentrated on tokens {5, 6, 9, 10}
  const std::set<int> region{5, 6, 9, 10};
  ad::Mat<double> attn = ad::Mat<double>::Constant(2, 16, 0.01);
  ad::Mat<double> cls = ad::Mat<double>::Constant(16, 1, 0.05);
  for (int i : region) {
    attn(0, i) = attn(1, i) = 0.2;
    cls(i, 0) = 0.9;
  }
  ad::Graph<double> g;
  const int fx = g.input(ad::Mat<double>::Zero(16, 8));
  const auto ctx = dca::sample_prompt(g, fx, attn, cls, 4);
  for (int i : ctx.source_indices) CHECK(region.count(i) == 1);
}

TEST_CASE("sample_noise: determinism, exhaustiveness, uniformity") {
  {
    ad::Graph<double> g;
    const int fx = g.input(ad::Mat<double>::Random(16, 4));
    Rng r1(42), r2(42);
    const auto a = dca::sample_noise(g, fx, 5, r1);
    const auto b = dca::sample_noise(g, fx, 5, r2);
    CHECK(a.source_indices == b.source_indices);
    CHECK(a.mode == ContextMode::Noise);
  }
  {
    ad::Graph<double> g;
    const int fx = g.input(ad::Mat<double>::Random(8, 4));
    Rng r(1);
    const auto all = dca::sample_noise(g, fx, 8, r);
    std::set<int> got(all.source_indices.begin(), all.source_indices.end());
    CHECK(got.size() == 8);
    CHECK_THROWS_AS(dca::sample_noise(g, fx, 9, r), std::invalid_argument);
  }
  {
    // frequency of each index within +-3 sigma of uniform over 1e5 draws
    ad::Graph<double> g;
    const int fx = g.input(ad::Mat<double>::Random(16, 2));
    Rng r(99);
    const int draws = 100000;
    std::vector<int> freq(16, 0);
    for (int i = 0; i < draws; ++i)
      freq[dca::sample_noise(g, fx, 1, r).source_indices[0]]++;
    const double p = 1.0 / 16;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (int i = 0; i < 16; ++i)
      CHECK(std::abs(freq[i] - draws * p) <= 3 * sigma);
  }
  {
    // exclusion removes the given indices from the pool
    ad::Graph<double> g;
    const int fx = g.input(ad::Mat<double>::Random(8, 2));
    Rng r(5);
    const std::vector<int> excl{0, 1, 2, 3};
    for (int t = 0; t < 50; ++t) {
      const auto ctx = dca::sample_noise(g, fx, 4, r, &excl);
      for (int i : ctx.source_indices) CHECK(i >= 4);
    }
  }
}

TEST_CASE("select_mode schedule law") {
  dca::DcaSchedule s;
  s.switch_epoch = 75;
  CHECK(dca::select_mode(75, s) == ContextMode::Prompt);
  CHECK(dca::select_mode(76, s) == ContextMode::Noise);

  s.switch_epoch = 0;
  CHECK(dca::select_mode(0, s) == ContextMode::Prompt);  // boundary inclusive
  CHECK(dca::select_mode(1, s) == ContextMode::Noise);

  s.switch_epoch = 1 << 20;
  for (int e = 0; e < 1000; ++e) CHECK(dca::select_mode(e, s) == ContextMode::Prompt);

  // exhaustive law over [0, 2K]
  s.switch_epoch = 13;
  for (int e = 0; e <= 26; ++e) {
    const bool prompt = dca::select_mode(e, s) == ContextMode::Prompt;
    CHECK(prompt == (e <= 13));
  }
  CHECK_THROWS_AS(dca::select_mode(-1, s), std::invalid_argument);
}

TEST_CASE("noise_decode: shape contract, residual identity, gradients") {
  EncoderConfig c;
  c.patch_size = 8;
  c.embed_dim = 32;
  c.depth = 1;
  c.num_heads = 2;
  c.template_res = 16;
  c.search_res = 32;  // 16 tokens, 4x4 grid
  auto model = TrackModel<double>::create(c, 17);
  Rng rng(18);

  ad::Graph<double> g;
  const int fx = g.input(random_mat<double>(rng, 16, c.embed_dim, -1, 1));
  Rng nr(19);
  auto noise = dca::sample_noise(g, fx, 4, nr);

  const auto maps = dca::noise_decode(g, model.params, model.noise_block,
                                      model.heads_noise, fx, noise, 4, 4,
                                      model.head_tables);
  const auto main_maps = predict(g, model.params, model.heads_main, fx, 4, 4,
                                 model.head_tables);
  CHECK(g.rows(maps.cls) == g.rows(main_maps.cls));
  CHECK(g.cols(maps.offset) == g.cols(main_maps.offset));
  CHECK(g.cols(maps.size) == g.cols(main_maps.size));

  // wrong mode is rejected
  dca::ContextTokens<double> prompt_ctx;
  prompt_ctx.mode = ContextMode::Prompt;
  prompt_ctx.node = noise.node;
  prompt_ctx.source_indices = noise.source_indices;
  CHECK_THROWS_AS(dca::noise_decode(g, model.params, model.noise_block,
                                    model.heads_noise, fx, prompt_ctx, 4, 4,
                                    model.head_tables),
                  std::invalid_argument);

  // zero noise tokens + zero-initialized residual projections leave f_x
  // untouched (the noise block is created with zero-init out projections)
  const int zero_ctx = g.input(ad::Mat<double>::Zero(4, c.embed_dim));
  const int perturbed =
      model.noise_block.apply_cross(g, model.params, fx, zero_ctx);
  CHECK((g.value(perturbed) - g.value(fx)).cwiseAbs().maxCoeff() == 0.0);

  // gradients reach both f_x and the noise tokens
  ad::Graph<double> g2;
  const int fx2 = g2.input(random_mat<double>(rng, 16, c.embed_dim, -1, 1));
  // give the zero-initialized projections nonzero values so gradients pass
  auto params_copy = model.params;
  Rng pr(20);
  nn::fill_trunc_normal(params_copy[model.noise_block.attn.o.w].value, pr, 0.1);
  nn::fill_trunc_normal(params_copy[model.noise_block.fc2.w].value, pr, 0.1);
  Rng nr2(21);
  auto noise2 = dca::sample_noise(g2, fx2, 4, nr2);
  const auto maps2 = dca::noise_decode(g2, params_copy, model.noise_block,
                                       model.heads_noise, fx2, noise2, 4, 4,
                                       model.head_tables);
  const int root = g2.add(g2.sum(maps2.cls),
                          g2.add(g2.sum(maps2.offset), g2.sum(maps2.size)));
  g2.backward(root);
  CHECK(g2.grad(fx2).norm() > 0.0);
  CHECK(g2.grad(noise2.node).norm() > 0.0);
}

TEST_CASE("sampling counters track calls") {
  dca::reset_counters();
  ad::Graph<double> g;
  const int fx = g.input(ad::Mat<double>::Random(8, 4));
  Rng r(1);
  (void)dca::sample_noise(g, fx, 2, r);
  const ad::Mat<double> attn1 = ad::Mat<double>::Ones(1, 8);
  const ad::Mat<double> cls1 = ad::Mat<double>::Ones(8, 1);
  (void)dca::sample_prompt(g, fx, attn1, cls1, 2);
  (void)dca::sample_prompt(g, fx, attn1, cls1, 2);
  CHECK(dca::counters().noise_calls.load() == 1);
  CHECK(dca::counters().prompt_calls.load() == 2);
  dca::reset_counters();
  CHECK(dca::counters().prompt_calls.load() == 0);
}
