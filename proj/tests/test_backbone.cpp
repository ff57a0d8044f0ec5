#include <doctest.h>

#include "cycletrack/backbone.hpp"
#include "cycletrack/model.hpp"

#include <cmath>

using namespace cycletrack;

namespace {

template <typename S>
ad::Mat<S> random_mat(Rng& rng, int r, int c, double lo = -1.0,
                      double hi = 1.0) {
  ad::Mat<S> m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = static_cast<S>(rng.uniform(lo, hi));
  return m;
}

FloatImage random_image(Rng& rng, int res) {
  FloatImage img(res, res);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(0, 255));
  return img;
}

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.patch_size = 8;
  c.embed_dim = 32;
  c.depth = 2;
  c.num_heads = 2;
  c.template_res = 16;  // 4 tokens
  c.search_res = 32;    // 16 tokens
  c.max_context_tokens = 8;
  return c;
}

}  // namespace

TEST_CASE("patch_embed token counts and determinism") {
  EncoderConfig c;
  c.patch_size = 16;
  c.embed_dim = 64;
  c.depth = 1;
  c.num_heads = 2;
  c.template_res = 64;
  c.search_res = 128;
  auto model = TrackModel<double>::create(c, 42);
  Rng rng(5);
  const FloatImage zimg = random_image(rng, 64);
  const FloatImage ximg = random_image(rng, 128);

  ad::Graph<double> g;
  const int zp = image_input(g, zimg, model.pix_mean, model.pix_std);
  const int z = model.encoder.patch_embed(g, model.params, zp,
                                          Encoder<double>::PatchKind::Template);
  CHECK(g.rows(z) == 16);  // 64/16 squared
  CHECK(g.cols(z) == 64);
  const int xp = image_input(g, ximg, model.pix_mean, model.pix_std);
  const int x = model.encoder.patch_embed(g, model.params, xp,
                                          Encoder<double>::PatchKind::Search);
  CHECK(g.rows(x) == 64);  // 128/16 squared

  // identical image -> identical tokens
  const int zp2 = image_input(g, zimg, model.pix_mean, model.pix_std);
  const int z2 = model.encoder.patch_embed(g, model.params, zp2,
                                           Encoder<double>::PatchKind::Template);
  CHECK(g.value(z) == g.value(z2));

  // wrong resolution
  const int bad = image_input(g, random_image(rng, 32), model.pix_mean,
                              model.pix_std);
  CHECK_THROWS_AS(model.encoder.patch_embed(
                      g, model.params, bad, Encoder<double>::PatchKind::Template),
                  std::invalid_argument);
}

TEST_CASE("encode shape contracts with and without context") {
  const EncoderConfig c = tiny_config();
  auto model = TrackModel<double>::create(c, 7);
  Rng rng(9);

  ad::Graph<double> g;
  const int z = g.input(random_mat<double>(rng, c.n_template_tokens(), c.embed_dim));
  const int x = g.input(random_mat<double>(rng, c.n_search_tokens(), c.embed_dim));

  const auto out0 = model.encoder.encode(g, model.params, z, x);
  CHECK(g.rows(out0.f_x) == c.n_search_tokens());
  CHECK(g.cols(out0.f_x) == c.embed_dim);
  CHECK(out0.saliency.rows() == c.num_heads);
  CHECK(out0.saliency.cols() == c.n_search_tokens());

  const int ctx = g.input(random_mat<double>(rng, 8, c.embed_dim));
  const auto out1 = model.encoder.encode(g, model.params, z, x, ctx);
  CHECK(g.rows(out1.f_x) == c.n_search_tokens());
  CHECK(g.cols(out1.f_x) == c.embed_dim);
  CHECK(out1.saliency.rows() == c.num_heads);
  CHECK(out1.saliency.cols() == c.n_search_tokens());

  // too many context tokens
  const int big = g.input(random_mat<double>(rng, 9, c.embed_dim));
  CHECK_THROWS_AS(model.encoder.encode(g, model.params, z, x, big),
                  std::invalid_argument);
  // dimension mismatch
  const int narrow = g.input(random_mat<double>(rng, 4, c.embed_dim / 2));
  CHECK_THROWS_AS(model.encoder.encode(g, model.params, z, narrow),
                  std::invalid_argument);
}

TEST_CASE("encode is deterministic under fixed parameters") {
  const EncoderConfig c = tiny_config();
  auto model = TrackModel<double>::create(c, 21);
  Rng rng(22);
  const auto zv = random_mat<double>(rng, c.n_template_tokens(), c.embed_dim);
  const auto xv = random_mat<double>(rng, c.n_search_tokens(), c.embed_dim);

  auto run = [&]() {
    ad::Graph<double> g;
    const auto out =
        model.encoder.encode(g, model.params, g.input(zv), g.input(xv));
    return std::make_pair(ad::Mat<double>(g.value(out.f_x)), out.saliency);
  };
  const auto [f1, s1] = run();
  const auto [f2, s2] = run();
  CHECK(f1 == f2);  // bitwise
  CHECK(s1 == s2);
}

TEST_CASE("shape contracts hold over random configs") {
  Rng rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    EncoderConfig c;
    c.patch_size = 8;
    c.num_heads = 1 + rng.uniform_int(3);
    c.embed_dim = c.num_heads * (4 + 4 * rng.uniform_int(3));
    c.depth = 1 + rng.uniform_int(2);
    c.template_res = 8 * (1 + rng.uniform_int(2));
    c.search_res = 8 * (2 + rng.uniform_int(2));
    c.max_context_tokens = 8;
    auto model = TrackModel<double>::create(c, 100 + trial);
    ad::Graph<double> g;
    const int z =
        g.input(random_mat<double>(rng, c.n_template_tokens(), c.embed_dim));
    const int x =
        g.input(random_mat<double>(rng, c.n_search_tokens(), c.embed_dim));
    const int k = 1 + rng.uniform_int(8);
    const int ctx = g.input(random_mat<double>(rng, k, c.embed_dim));
    const auto a = model.encoder.encode(g, model.params, z, x);
    const auto b = model.encoder.encode(g, model.params, z, x, ctx);
    CHECK(g.rows(a.f_x) == c.n_search_tokens());
    CHECK(g.rows(b.f_x) == c.n_search_tokens());
    CHECK(a.saliency.rows() == c.num_heads);
    CHECK(b.saliency.rows() == c.num_heads);
    CHECK(a.saliency.cols() == c.n_search_tokens());
    CHECK(b.saliency.cols() == c.n_search_tokens());
  }
}

TEST_CASE("extract_saliency: uniform and one-hot attention") {
  const int n_z = 2, n_s = 3, seq = 6;
  // uniform attention: every search token gets 1/seq per head
  std::vector<ad::Mat<double>> probs{
      ad::Mat<double>::Constant(seq, seq, 1.0 / seq),
      ad::Mat<double>::Constant(seq, seq, 1.0 / seq)};
  auto sal = extract_saliency<double>(probs, n_z, n_s,
                                      SaliencyDirection::TemplateToSearch);
  CHECK(sal.rows() == 2);
  CHECK(sal.cols() == n_s);
  for (int h = 0; h < 2; ++h)
    for (int j = 0; j < n_s; ++j)
      CHECK(sal(h, j) == doctest::Approx(1.0 / seq));

  // one template query attends fully to search token 1: that query
  // contributes 1/n_z to the token's saliency
  ad::Mat<double> p = ad::Mat<double>::Zero(seq, seq);
  p(0, n_z + 1) = 1.0;             // template query 0 -> search key 1
  p.row(1).setConstant(1.0 / seq);  // the other template query is uniform
  auto sal2 = extract_saliency<double>({p}, n_z, n_s,
                                       SaliencyDirection::TemplateToSearch);
  CHECK(sal2(0, 1) == doctest::Approx(1.0 / n_z + 1.0 / (n_z * seq)));
  CHECK(sal2(0, 0) == doctest::Approx(1.0 / (n_z * seq)));

  // rows are sub-distributions
  ad::Mat<double> rowsum = sal.rowwise().sum();
  for (int h = 0; h < 2; ++h) CHECK(rowsum(h, 0) <= 1.0 + 1e-12);

  // the alternative slicing direction reads search->template attention
  ad::Mat<double> q = ad::Mat<double>::Zero(seq, seq);
  q(n_z + 2, 0) = 0.6;  // search query 2 -> template key 0
  q(n_z + 2, 1) = 0.2;  // search query 2 -> template key 1
  auto sal3 = extract_saliency<double>({q}, n_z, n_s,
                                       SaliencyDirection::SearchToTemplate);
  CHECK(sal3(0, 2) == doctest::Approx(0.4));  // mean over the 2 template keys
  CHECK(sal3(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("gradients flow to z, x and context inputs") {
  const EncoderConfig c = tiny_config();

  // shared float-representable input values
  Rng rng(55);
  ad::Mat<double> zv = random_mat<double>(rng, c.n_template_tokens(), c.embed_dim);
  ad::Mat<double> xv = random_mat<double>(rng, c.n_search_tokens(), c.embed_dim);
  ad::Mat<double> cv = random_mat<double>(rng, 4, c.embed_dim);
  zv = zv.cast<float>().cast<double>();
  xv = xv.cast<float>().cast<double>();
  cv = cv.cast<float>().cast<double>();
  ad::Mat<double> proj = random_mat<double>(rng, c.n_search_tokens(), c.embed_dim);
  proj = proj.cast<float>().cast<double>();

  auto model64 = TrackModel<double>::create(c, 1234);
  // float twin with identical parameter values
  auto model32 = TrackModel<float>::create(c, 1234);
  for (std::size_t i = 0; i < model64.params.entries.size(); ++i) {
    model64.params.entries[i].value =
        model64.params.entries[i].value.cast<float>().cast<double>();
    model32.params.entries[i].value =
        model64.params.entries[i].value.cast<float>();
  }

  auto scalar_out64 = [&](const ad::Mat<double>& z, const ad::Mat<double>& x,
                          const ad::Mat<double>& ctx) {
    ad::Graph<double> g;
    const auto out = model64.encoder.encode(g, model64.params, g.input(z),
                                            g.input(x), g.input(ctx));
    return g.value(g.sum(g.mul(out.f_x, g.constant(proj))))(0, 0);
  };

  // 64-bit autodiff vs central differences
  ad::Graph<double> g64;
  const int z64 = g64.input(zv), x64 = g64.input(xv), c64 = g64.input(cv);
  const auto out64 = model64.encoder.encode(g64, model64.params, z64, x64, c64);
  g64.backward(g64.sum(g64.mul(out64.f_x, g64.constant(proj))));
  CHECK(g64.grad(z64).norm() > 0.0);
  CHECK(g64.grad(x64).norm() > 0.0);
  CHECK(g64.grad(c64).norm() > 0.0);

  // 32-bit autodiff on the same values
  ad::Graph<float> g32;
  const int z32 = g32.input(zv.cast<float>()), x32 = g32.input(xv.cast<float>()),
            c32 = g32.input(cv.cast<float>());
  const auto out32 = model32.encoder.encode(g32, model32.params, z32, x32, c32);
  g32.backward(
      g32.sum(g32.mul(out32.f_x, g32.constant(proj.cast<float>().eval()))));

  Rng pick(77);
  const double h = 1e-5;
  auto check_entries = [&](int leaf64, int leaf32, ad::Mat<double>* leaf_val) {
    for (int probe = 0; probe < 6; ++probe) {
      const int i = pick.uniform_int(static_cast<int>(leaf_val->rows()));
      const int j = pick.uniform_int(static_cast<int>(leaf_val->cols()));
      auto plus = *leaf_val, minus = *leaf_val;
      plus(i, j) += h;
      minus(i, j) -= h;
      auto eval = [&](const ad::Mat<double>& v) {
        if (leaf_val == &zv) return scalar_out64(v, xv, cv);
        if (leaf_val == &xv) return scalar_out64(zv, v, cv);
        return scalar_out64(zv, xv, v);
      };
      const double fd = (eval(plus) - eval(minus)) / (2 * h);
      const double ad64 = g64.grad(leaf64)(i, j);
      const double ad32 = static_cast<double>(g32.grad(leaf32)(i, j));
      const double denom = std::max(std::abs(fd), 1e-3);
      CHECK(std::abs(ad64 - fd) / denom <= 1e-5);
      CHECK(std::abs(ad32 - fd) / denom <= 1e-3);
    }
  };
  check_entries(z64, z32, &zv);
  check_entries(x64, x32, &xv);
  check_entries(c64, c32, &cv);
}
