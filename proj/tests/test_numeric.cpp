#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "support.hpp"
#include "tae/autodiff.hpp"
#include "tae/checkpoint.hpp"
#include "tae/kernels.hpp"
#include "tae/parameters.hpp"

using namespace tae;
using testing::param_with;
using tae::kernels::Trans;

namespace {

template <typename T>
std::vector<T> naive_product(Trans ta, Trans tb, int m, int n, int k, const std::vector<T>& a,
                             const std::vector<T>& b) {
  std::vector<T> c(static_cast<std::size_t>(m) * n, T(0));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      long double s = 0;
      for (int p = 0; p < k; ++p) {
        const T x = ta == Trans::no ? a[i * k + p] : a[p * m + i];
        const T y = tb == Trans::no ? b[p * n + j] : b[j * k + p];
        s += static_cast<long double>(x) * y;
      }
      c[i * n + j] = static_cast<T>(s);
    }
  return c;
}

}  // namespace

TEST_CASE("gemm matches a naive product for every transpose combination") {
  for (Trans ta : {Trans::no, Trans::yes})
    for (Trans tb : {Trans::no, Trans::yes})
      for (int size : {3, 17, 70}) {
        const int m = size, n = size + 2, k = size + 5;
        std::vector<double> a(m * k), b(k * n);
        Rng rng(static_cast<std::uint64_t>(size));
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();
        const auto want = naive_product(ta, tb, m, n, k, a, b);
        std::vector<double> fast(m * n, 0.5), ref(m * n, 0.5);
        const int lda = ta == Trans::no ? k : m, ldb = tb == Trans::no ? n : k;
        kernels::gemm(ta, tb, m, n, k, 2.0, a.data(), lda, b.data(), ldb, 1.0, fast.data(), n);
        kernels::reference::gemm(ta, tb, m, n, k, 2.0, a.data(), lda, b.data(), ldb, 1.0, ref.data(), n);
        for (int i = 0; i < m * n; ++i) {
          CHECK(fast[i] == doctest::Approx(2 * want[i] + 0.5).epsilon(1e-12));
          CHECK(ref[i] == doctest::Approx(2 * want[i] + 0.5).epsilon(1e-12));
        }
      }
}

TEST_CASE("softmax rows sum to one, are shift invariant and match the reference") {
  const int rows = 5, cols = 9;
  std::vector<double> x(rows * cols);
  Rng rng(3);
  for (auto& v : x) v = 4 * rng.normal();
  auto a = x, b = x, shifted = x;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) shifted[r * cols + c] += 100.0 * (r + 1);
  kernels::softmax_rows(a.data(), rows, cols);
  kernels::reference::softmax_rows(b.data(), rows, cols);
  kernels::softmax_rows(shifted.data(), rows, cols);
  for (int r = 0; r < rows; ++r) {
    double s = 0;
    for (int c = 0; c < cols; ++c) {
      const double v = a[r * cols + c];
      CHECK(v >= 0.0);
      CHECK(v == doctest::Approx(b[r * cols + c]).epsilon(1e-14));
      CHECK(v == doctest::Approx(shifted[r * cols + c]).epsilon(1e-12));
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax gives masked entries zero mass") {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> x = {1.0, -inf, 2.0, -inf};
  kernels::softmax_rows(x.data(), 1, 4);
  CHECK(x[1] == 0.0);
  CHECK(x[3] == 0.0);
  CHECK(x[0] + x[2] == doctest::Approx(1.0));
  CHECK(x[2] / x[0] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
  const int rows = 4, cols = 32;
  std::vector<double> x(rows * cols), xhat(x.size()), inv(rows), xhat_ref(x.size()), inv_ref(rows);
  Rng rng(5);
  for (auto& v : x) v = 3 + 2 * rng.normal();
  kernels::layer_norm_rows(x.data(), xhat.data(), inv.data(), rows, cols, 1e-12);
  kernels::reference::layer_norm_rows(x.data(), xhat_ref.data(), inv_ref.data(), rows, cols, 1e-12);
  for (int r = 0; r < rows; ++r) {
    double mean = 0, var = 0;
    for (int c = 0; c < cols; ++c) mean += xhat[r * cols + c];
    mean /= cols;
    for (int c = 0; c < cols; ++c) var += (xhat[r * cols + c] - mean) * (xhat[r * cols + c] - mean);
    var /= cols;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(inv[r] == doctest::Approx(inv_ref[r]).epsilon(1e-12));
  }
}

TEST_CASE("gradient of a linear map is the transposed input") {
  ParameterStore<double> store;
  auto& w = param_with(store, "w", 2, 3, {1, 2, 3, 4, 5, 6});
  auto& b = param_with(store, "b", 1, 3, {0, 0, 0});
  Tape<double> tape;
  const Var x = tape.constant(1, 2, {0.5, -2.0});
  const Var y = ops::linear(tape, x, tape.param(w), tape.param(b));
  tape.backward(ops::sum_all(tape, y));
  const std::vector<double> want = {0.5, 0.5, 0.5, -2.0, -2.0, -2.0};
  for (int i = 0; i < 6; ++i) CHECK(w.grad[i] == doctest::Approx(want[i]));
  for (int i = 0; i < 3; ++i) CHECK(b.grad[i] == doctest::Approx(1.0));
}

TEST_CASE("softmax cross-entropy gradient is p - y") {
  ParameterStore<double> store;
  auto& z = param_with(store, "z", 1, 4, {0.3, -1.0, 2.0, 0.0});
  Tape<double> tape;
  const int gold[] = {2};
  tape.backward(ops::softmax_cross_entropy(tape, tape.param(z), gold, 0.0, -1, 1.0));
  std::vector<double> p = z.value;
  kernels::reference::softmax_rows(p.data(), 1, 4);
  for (int i = 0; i < 4; ++i) CHECK(z.grad[i] == doctest::Approx(p[i] - (i == 2 ? 1.0 : 0.0)).epsilon(1e-12));
}

TEST_CASE("quadratic fixture gradient check") {
  ParameterStore<double> store;
  auto& x = param_with(store, "x", 1, 4, {0.5, -1.5, 2.0, 0.25});
  auto& a = param_with(store, "a", 4, 4, {});
  a.value.resize(16);
  Rng rng(9);
  for (auto& v : a.value) v = rng.normal();
  // L = sum((x A) * x) = x^T A x
  auto build = [&](Tape<double>& t) {
    const Var xv = t.param(x);
    return ops::sum_all(t, ops::mul(t, ops::matmul(t, xv, t.param(a)), xv));
  };
  const auto res = grad_check(store, build, 1e-5, 100, 1);
  CHECK(res.checked == 20);
  CHECK(res.max_relative_error < 1e-6);
  // Analytic check: dL/dx = (A + A^T) x.
  store.zero_grad();
  Tape<double> tape;
  tape.backward(build(tape));
  for (int i = 0; i < 4; ++i) {
    double want = 0;
    for (int j = 0; j < 4; ++j) want += (a.value[i * 4 + j] + a.value[j * 4 + i]) * x.value[j];
    CHECK(x.grad[i] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("two-layer network passes the gradient check") {
  ParameterStore<double> store;
  auto init = [&](const char* name, int r, int c, std::uint64_t seed) -> Parameter<double>& {
    auto& p = store.add(name, Partition::decoder, r, c);
    Rng rng(seed);
    for (auto& v : p.value) v = 0.5 * rng.normal();
    return p;
  };
  auto& w1 = init("w1", 3, 5, 1);
  auto& b1 = init("b1", 1, 5, 2);
  auto& g = init("gamma", 1, 5, 3);
  auto& be = init("beta", 1, 5, 4);
  auto& w2 = init("w2", 5, 4, 5);
  auto& b2 = init("b2", 1, 4, 6);
  const std::vector<double> xin = {0.1, -0.7, 1.3, 0.4, 0.9, -1.1};
  auto build = [&](Tape<double>& t) {
    const Var x = t.constant(2, 3, xin);
    Var h = ops::gelu(t, ops::linear(t, x, t.param(w1), t.param(b1)));
    h = ops::layer_norm(t, h, t.param(g), t.param(be));
    h = ops::tanh(t, h);
    const Var logits = ops::linear(t, h, t.param(w2), t.param(b2));
    const int gold[] = {1, 3};
    return ops::softmax_cross_entropy(t, logits, gold, 0.1, -1, 0.5);
  };
  const auto res = grad_check(store, build, 1e-5, 50, 2);
  CHECK(res.excluded == 0);
  CHECK(res.max_relative_error < 1e-6);
}

TEST_CASE("attention with one head matches a hand-computed 2x2 case") {
  Tape<double> tape(false);
  const Var q = tape.constant(2, 2, {1, 0, 0, 1});
  const Var k = tape.constant(2, 2, {1, 0, 1, 1});
  const Var v = tape.constant(2, 2, {1, 2, 3, 4});
  const Var w = ops::attention_weights(tape, q, k, 1, false, {});
  const Var ctx = ops::attention_context(tape, w, v, 1);
  // scores / sqrt(2): row0 = [1, 1], row1 = [0, 1]
  const double s = 1 / std::sqrt(2.0);
  const double a1 = std::exp(s) / (1 + std::exp(s));  // row1 weight on key 1
  const auto wv = tape.value(w);
  CHECK(wv[0] == doctest::Approx(0.5));
  CHECK(wv[1] == doctest::Approx(0.5));
  CHECK(wv[2] == doctest::Approx(1 - a1));
  CHECK(wv[3] == doctest::Approx(a1));
  const auto cv = tape.value(ctx);
  CHECK(cv[0] == doctest::Approx(2.0));
  CHECK(cv[1] == doctest::Approx(3.0));
  CHECK(cv[2] == doctest::Approx((1 - a1) * 1 + a1 * 3));
  CHECK(cv[3] == doctest::Approx((1 - a1) * 2 + a1 * 4));
}

TEST_CASE("causal and padding masks hide keys") {
  Tape<double> tape(false);
  std::vector<double> vals(4 * 4);
  Rng rng(2);
  for (auto& x : vals) x = rng.normal();
  const Var q = tape.constant(4, 4, vals);
  const char valid[] = {1, 1, 0, 1};
  const Var w = ops::attention_weights(tape, q, q, 2, true, std::span<const char>(valid));
  const auto wv = tape.value(w);
  for (int r = 0; r < 8; ++r) {
    const int i = r % 4;
    double total = 0;
    for (int j = 0; j < 4; ++j) {
      const double p = wv[r * 4 + j];
      if (j > i || j == 2) CHECK(p == 0.0);
      total += p;
    }
    CHECK(total == doctest::Approx(1.0));
  }
}

TEST_CASE("untracked parameters receive no gradient and are reported as excluded") {
  ParameterStore<double> store;
  auto& a = param_with(store, "a", 1, 2, {1, 2});
  auto& b = param_with(store, "b", 1, 2, {3, 4});
  auto build = [&](Tape<double>& t) {
    return ops::sum_all(t, ops::mul(t, t.param(a), t.param(b, false)));
  };
  const auto res = grad_check(store, build, 1e-6, 10, 1);
  CHECK(res.excluded == 2);
  CHECK(res.checked == 2);
  CHECK(a.touched);
  CHECK_FALSE(b.touched);
  CHECK(b.grad == std::vector<double>{0, 0});
}

TEST_CASE("coordinates with no gradient are counted below the noise floor") {
  ParameterStore<double> store;
  auto& a = param_with(store, "a", 1, 2, {1, 2});
  auto& b = param_with(store, "b", 1, 2, {3, 4});
  auto build = [&](Tape<double>& t) {
    const Var sq = ops::sum_all(t, ops::mul(t, t.param(a), t.param(a)));
    const Var dead = ops::sum_all(t, ops::mul(t, t.param(b), t.constant(1, 2, {0.0, 0.0})));
    return ops::add(t, sq, dead);
  };
  const auto res = grad_check(store, build, 1e-6, 10, 1);
  CHECK(res.checked == 2);
  CHECK(res.negligible == 2);
  CHECK(res.max_negligible_abs_error == 0.0);
  CHECK(res.max_relative_error < 1e-8);
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> tape;
  ParameterStore<double> store;
  auto& a = param_with(store, "a", 1, 2, {1, 2});
  const Var v = tape.param(a);
  CHECK_THROWS(tape.backward(ops::scale(tape, v, 2.0)));
}

TEST_CASE("zero_grad clears accumulators and touched flags") {
  ParameterStore<double> store;
  auto& a = param_with(store, "a", 1, 2, {1, 2});
  {
    Tape<double> tape;
    tape.backward(ops::sum_all(tape, tape.param(a)));
  }
  CHECK(a.grad[0] == 1.0);
  store.zero_grad();
  CHECK(a.grad == std::vector<double>{0, 0});
  CHECK_FALSE(a.touched);
}

TEST_CASE("dropout with rate zero is the identity and otherwise keeps the expectation") {
  Tape<double> tape(false);
  std::vector<double> ones(10000, 1.0);
  Rng rng(4);
  const Var x = tape.constant(1, 10000, ones);
  const auto id = tape.value(ops::dropout(tape, x, 0.0, rng));
  CHECK(std::vector<double>(id.begin(), id.end()) == ones);
  const auto d = tape.value(ops::dropout(tape, x, 0.25, rng));
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / d.size();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("parameter store rejects duplicate names and unknown lookups") {
  ParameterStore<float> store;
  store.add("a", Partition::encoder, 2, 2);
  CHECK_THROWS(store.add("a", Partition::decoder, 1, 1));
  CHECK_THROWS(store.get("missing"));
  CHECK(store.count_values() == 4);
  CHECK(partition_from_string(to_string(Partition::shared_embedding)) == Partition::shared_embedding);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = testing::scratch_dir("ckpt");
  Seq2SeqModel<float> model(testing::tiny_model(40), 11);
  nlohmann::json meta = {{"note", "x"}};
  save_checkpoint(dir / "a.ckpt", model.params(), meta);
  const Checkpoint ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.meta["note"] == "x");
  Seq2SeqModel<float> other(testing::tiny_model(40), 12);
  apply_checkpoint(ck, other.params());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    CHECK(other.params()[i].name == model.params()[i].name);
    CHECK(std::memcmp(other.params()[i].value.data(), model.params()[i].value.data(),
                      model.params()[i].value.size() * sizeof(float)) == 0);
  }
  save_checkpoint(dir / "b.ckpt", other.params(), meta);
  CHECK(testing::content_equal(dir / "a.ckpt", dir / "b.ckpt"));
}

TEST_CASE("checkpoint rejects a shape mismatch and a bad magic") {
  const auto dir = testing::scratch_dir("ckpt_bad");
  Seq2SeqModel<float> model(testing::tiny_model(40), 11);
  save_checkpoint(dir / "a.ckpt", model.params(), nlohmann::json::object());
  Seq2SeqModel<float> bigger(testing::tiny_model(41), 11);
  CHECK_THROWS(apply_checkpoint(load_checkpoint(dir / "a.ckpt"), bigger.params()));
  {
    std::ofstream(dir / "bad.ckpt") << "NOTACKPT";
  }
  CHECK_THROWS(load_checkpoint(dir / "bad.ckpt"));
}

TEST_CASE("model save and load keeps config, tokenizer and parameters") {
  const auto dir = testing::scratch_dir("model_io");
  const std::vector<std::string> texts = {"a b c", "b c d"};
  const auto tok = SubwordModel::train(texts, 30);
  auto cfg = testing::tiny_model(tok.size());
  Seq2SeqModel<float> model(cfg, 3);
  save_model(dir / "m.ckpt", model, tok);
  const auto loaded = load_model(dir / "m.ckpt");
  CHECK(loaded.model->config() == cfg);
  CHECK(loaded.tokenizer == tok);
  for (std::size_t i = 0; i < model.params().size(); ++i)
    CHECK(loaded.model->params()[i].value == model.params()[i].value);
}
