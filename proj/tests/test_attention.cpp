#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fastface/attention.hpp"
#include "fastface/errors.hpp"
#include "oracles.hpp"

using namespace fastface;

namespace {

Matrix to_matrix(const oracle::Mat& m) {
  Matrix out(m.size(), m[0].size());
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[0].size(); ++c) out(r, c) = m[r][c];
  return out;
}

AttentionMap random_map(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                        BlockGroup g = BlockGroup::Up) {
  return {softmax_rows(to_matrix(oracle::random_mat(rng, rows, cols, -3.0, 3.0)), 1.0), g, 0};
}

std::size_t row_argmax(const Matrix& m, std::size_t r) {
  const auto row = m.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

struct Fixture {
  std::mt19937_64 rng{41};
  oracle::Mat z, wq, wk, wv, wk_id, wv_id, text, id;
  DecoupledBlockParams params;
  Fixture() {
    z = oracle::random_mat(rng, 6, 8);
    wq = oracle::random_mat(rng, 8, 4);
    wk = oracle::random_mat(rng, 5, 4);
    wv = oracle::random_mat(rng, 5, 8);
    wk_id = oracle::random_mat(rng, 5, 4);
    wv_id = oracle::random_mat(rng, 5, 8);
    text = oracle::random_mat(rng, 3, 5);
    id = oracle::random_mat(rng, 4, 5);
    params = {to_matrix(wq), to_matrix(wk), to_matrix(wv), to_matrix(wk_id), to_matrix(wv_id),
              4, 0.8, BlockGroup::Up};
  }
  Matrix run(const AMConfig& am, int step = 1, AttentionTrace* trace = nullptr) const {
    return decoupled_attention(to_matrix(z), params, to_matrix(text), to_matrix(id), am, step, 4,
                               trace);
  }
};

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("decoupled attention with the adapter off is plain cross-attention") {
    Fixture f;
    f.params.adapter_scale = 0.0;
    const Matrix out = f.run(AMConfig::scheduled_softmask_preset());
    const auto expect = oracle::attention(f.z, f.wq, f.wk, f.wv, f.text, 4);
    CHECK(out == to_matrix(expect));
  }

  TEST_CASE("decoupled attention matches the two-branch oracle") {
    Fixture f;
    const Matrix out = f.run(AMConfig{});
    const auto expect = oracle::two_branch(f.z, f.wq, f.wk, f.wv, f.wk_id, f.wv_id, f.text, f.id, 4, 0.8);
    for (std::size_t i = 0; i < out.rows; ++i)
      for (std::size_t j = 0; j < out.cols; ++j) CHECK(std::abs(out(i, j) - expect[i][j]) <= 1e-6);
  }

  TEST_CASE("scale_power with unit parameters leaves the block unchanged") {
    Fixture f;
    AMConfig sp = AMConfig::scale_power_preset();
    sp.s_down = sp.s_up = 1.0;
    sp.p_power = 1.0;
    const Matrix a = f.run(AMConfig{});
    const Matrix b = f.run(sp);
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-9);
  }

  TEST_CASE("transforms only touch targeted groups") {
    Fixture f;
    f.params.group = BlockGroup::Mid;
    const Matrix plain = f.run(AMConfig{});
    CHECK(f.run(AMConfig::scale_power_preset()) == plain);
    CHECK(f.run(AMConfig::scheduled_softmask_preset()) == plain);
    f.params.group = BlockGroup::Down;
    CHECK_FALSE(f.run(AMConfig::scale_power_preset()) == f.run(AMConfig{}));
  }

  TEST_CASE("dimension mismatch names the projection") {
    Fixture f;
    f.params.wv_id = Matrix(3, 8);
    CHECK_THROWS_WITH_AS(f.run(AMConfig{}), doctest::Contains("Wv_id"), ConfigError);
    f.params.wv_id = to_matrix(f.wv_id);
    f.params.wq = Matrix(7, 4);
    CHECK_THROWS_WITH_AS(f.run(AMConfig{}), doctest::Contains("Wq"), ConfigError);
  }

  TEST_CASE("trace exposes pre-transform maps whose rows sum to one") {
    Fixture f;
    AttentionTrace trace;
    f.run(AMConfig::scale_power_preset(), 2, &trace);
    CHECK(trace.transformed);
    for (std::size_t r = 0; r < trace.before.probs.rows; ++r) {
      double s = 0;
      for (double v : trace.before.probs.row(r)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
    CHECK(trace.after.probs(0, 0) ==
          doctest::Approx(1.55 * std::pow(trace.before.probs(0, 0), 1.3)).epsilon(1e-12));
  }

  TEST_CASE("scale_power") {
    std::mt19937_64 rng(42);
    const AttentionMap a = random_map(rng, 8, 5);
    CHECK(scale_power(a, 1.0, 1.0).probs == a.probs);
    const AttentionMap half{Matrix(1, 1, 0.5), BlockGroup::Down, 0};
    CHECK(scale_power(half, 1.45, 1.3).probs(0, 0) ==
          doctest::Approx(0.5888829873582707).epsilon(1e-12));
    const AttentionMap t = scale_power(a, 1.45, 1.3);
    for (std::size_t r = 0; r < a.probs.rows; ++r) CHECK(row_argmax(t.probs, r) == row_argmax(a.probs, r));
  }

  TEST_CASE("softmask orders entries around the quantile") {
    std::mt19937_64 rng(43);
    const AttentionMap constant{Matrix(4, 3, 0.25), BlockGroup::Up, 0};
    const AttentionMap c = softmask(constant, 7.5, 0.65, 1.55);
    for (double v : c.probs.data) CHECK(v == c.probs.data[0]);

    for (int trial = 0; trial < 20; ++trial) {
      const AttentionMap a = random_map(rng, 10, 6);
      const double d = 0.5 + trial;
      const AttentionMap m = softmask(a, d, 0.65, 1.0);
      const double q = oracle::sort_quantile(a.probs.data, 0.65);
      for (std::size_t i = 0; i < a.probs.data.size(); ++i) {
        for (std::size_t j = 0; j < a.probs.data.size(); ++j) {
          if (a.probs.data[i] > q && a.probs.data[j] < q) CHECK(m.probs.data[i] > m.probs.data[j]);
        }
      }
    }
  }

  TEST_CASE("softmask sign escape hatch reverses the order") {
    std::mt19937_64 rng(44);
    const AttentionMap a = random_map(rng, 6, 4);
    const AttentionMap up = softmask(a, 5.0, 0.5, 1.0, 1.0);
    const AttentionMap down = softmask(a, 5.0, 0.5, 1.0, -1.0);
    const auto hi = std::max_element(a.probs.data.begin(), a.probs.data.end()) - a.probs.data.begin();
    CHECK(up.probs.data[hi] == *std::max_element(up.probs.data.begin(), up.probs.data.end()));
    CHECK(down.probs.data[hi] == *std::min_element(down.probs.data.begin(), down.probs.data.end()));
  }

  TEST_CASE("scheduled_softmask blend endpoints") {
    std::mt19937_64 rng(45);
    const AttentionMap a = random_map(rng, 12, 4);
    AMConfig c = AMConfig::scheduled_softmask_preset();
    c.blend_w = 1.0;
    CHECK(scheduled_softmask(a, c, 1).probs == softmask(a, c.d_rest, c.quantile_p, c.s_up).probs);
    CHECK(scheduled_softmask(a, c, 0).probs == softmask(a, c.d_first, c.quantile_p, c.s_first).probs);

    c.blend_w = 0.0;
    const AttentionMap out = scheduled_softmask(a, c, 1);
    const MapStats src = mean_std(a.probs.data);
    const MapStats got = mean_std(out.probs.data);
    CHECK(std::abs(got.mean - src.mean) <= 1e-6);
    CHECK(std::abs(got.std - src.std) <= 1e-6);
  }

  TEST_CASE("scheduled_softmask differs between steps only through d and s") {
    std::mt19937_64 rng(46);
    const AttentionMap a = random_map(rng, 12, 4);
    AMConfig c = AMConfig::scheduled_softmask_preset();
    const AttentionMap first = scheduled_softmask(a, c, 0);
    CHECK_FALSE(scheduled_softmask(a, c, 1).probs == first.probs);
    AMConfig swapped = c;
    swapped.d_rest = c.d_first;
    swapped.s_up = c.s_first;
    CHECK(scheduled_softmask(a, swapped, 1).probs == first.probs);
  }

  TEST_CASE("invert_first_token") {
    std::mt19937_64 rng(47);
    const AttentionMap col{Matrix(3, 1, {0.0, 1.0, 0.5}), BlockGroup::Up, 0};
    CHECK(invert_first_token(col).probs.data == std::vector<double>{1.0, 0.0, 0.5});
    const AttentionMap a = random_map(rng, 9, 5);
    const AttentionMap once = invert_first_token(a);
    for (std::size_t r = 0; r < 9; ++r)
      for (std::size_t c = 1; c < 5; ++c) CHECK(once.probs(r, c) == a.probs(r, c));
    const AttentionMap twice = invert_first_token(once);
    for (std::size_t i = 0; i < a.probs.data.size(); ++i)
      CHECK(std::abs(twice.probs.data[i] - a.probs.data[i]) <= 1e-15);
  }

  TEST_CASE("adain_block_output") {
    std::mt19937_64 rng(48);
    const Matrix orig = to_matrix(oracle::random_mat(rng, 5, 7, -2.0, 3.0));
    const Matrix trans = to_matrix(oracle::random_mat(rng, 5, 7, 0.0, 9.0));
    CHECK(adain_block_output(orig, trans, 1.0) == trans);
    const Matrix zero = adain_block_output(orig, trans, 0.0);
    CHECK(std::abs(mean_std(zero.data).mean - mean_std(orig.data).mean) <= 1e-6);
    CHECK(std::abs(mean_std(zero.data).std - mean_std(orig.data).std) <= 1e-6);

    const Matrix blended = adain_block_output(orig, trans, 0.7);
    const double mo = oracle::pop_mean(orig.data), so = oracle::pop_std(orig.data);
    const double mt = oracle::pop_mean(trans.data), st = oracle::pop_std(trans.data);
    for (std::size_t i = 0; i < trans.data.size(); ++i) {
      const double expect = 0.7 * trans.data[i] + 0.3 * (so * (trans.data[i] - mt) / st + mo);
      CHECK(std::abs(blended.data[i] - expect) <= 1e-9);
    }
    CHECK_THROWS_AS(adain_block_output(orig, Matrix(7, 5), 0.5), ConfigError);
  }

  TEST_CASE("first-token inversion wraps the transform") {
    std::mt19937_64 rng(49);
    const AttentionMap a = random_map(rng, 8, 4);
    AMConfig c = AMConfig::scheduled_softmask_preset();
    const AttentionMap expect = invert_first_token(scheduled_softmask(invert_first_token(a), c, 2));
    CHECK(apply_transform(a, c, 2).probs == expect.probs);
  }

  TEST_CASE("AMConfig validation") {
    AMConfig c = AMConfig::scheduled_softmask_preset();
    c.quantile_p = 1.2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = AMConfig::scheduled_softmask_preset();
    c.d_rest = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
