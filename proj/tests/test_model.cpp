#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/naive_scorer.hpp"
#include "xdsp/gradcheck.hpp"
#include "xdsp/model.hpp"
#include "xdsp/rng.hpp"

using namespace xdsp;
using namespace xdsp::num;
using namespace xdsp::model;

namespace {

GruCellParams<double> zero_gru(Index input, Index state) {
  GruCellParams<double> g;
  g.w_update = Tensor<double>::matrix(Mat<double>::Zero(state, input));
  g.u_update = Tensor<double>::matrix(Mat<double>::Zero(state, state));
  g.b_update = Tensor<double>::vector(Vec<double>::Zero(state));
  g.w_reset = g.w_update;
  g.u_reset = g.u_update;
  g.b_reset = g.b_update;
  g.w_cand = g.w_update;
  g.u_cand = g.u_update;
  g.b_cand = g.b_update;
  return g;
}

GruCellParams<double> random_gru(Rng& rng, Index input, Index state) {
  auto fill = [&rng](Index r, Index c) {
    Mat<double> m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-0.8, 0.8);
    return m;
  };
  GruCellParams<double> g;
  g.w_update = Tensor<double>::matrix(fill(state, input));
  g.u_update = Tensor<double>::matrix(fill(state, state));
  g.b_update = Tensor<double>::vector(fill(state, 1));
  g.w_reset = Tensor<double>::matrix(fill(state, input));
  g.u_reset = Tensor<double>::matrix(fill(state, state));
  g.b_reset = Tensor<double>::vector(fill(state, 1));
  g.w_cand = Tensor<double>::matrix(fill(state, input));
  g.u_cand = Tensor<double>::matrix(fill(state, state));
  g.b_cand = Tensor<double>::vector(fill(state, 1));
  return g;
}

}  // namespace

TEST_CASE("gru_cell hand cases") {
  SUBCASE("all-zero parameters halve the previous state") {
    auto g = zero_gru(3, 2);
    Mat<double> x = Mat<double>::Ones(3, 1);
    Mat<double> h(2, 1);
    h << 0.8, -0.4;
    Mat<double> out = gru_cell<double>(x, h, g);
    CHECK(out(0, 0) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(out(1, 0) == doctest::Approx(-0.2).epsilon(1e-15));
  }
  SUBCASE("zero state stays zero under zero weights") {
    auto g = zero_gru(3, 2);
    Mat<double> out = gru_cell<double>(Mat<double>::Ones(3, 1), Mat<double>::Zero(2, 1), g);
    CHECK(out.isZero(0.0));
  }
  SUBCASE("output bounded by max(|h_prev|, 1)") {
    Rng rng(17);
    for (int rep = 0; rep < 30; ++rep) {
      auto g = random_gru(rng, 4, 3);
      Mat<double> x(4, 1), h(3, 1);
      for (Index i = 0; i < 4; ++i) x(i, 0) = rng.uniform(-3, 3);
      for (Index i = 0; i < 3; ++i) h(i, 0) = rng.uniform(-2, 2);
      Mat<double> out = gru_cell<double>(x, h, g);
      double bound = std::max(h.cwiseAbs().maxCoeff(), 1.0);
      CHECK(out.cwiseAbs().maxCoeff() <= bound + 1e-12);
    }
  }
  SUBCASE("dimension mismatch") {
    auto g = zero_gru(3, 2);
    CHECK_THROWS_AS(gru_cell<double>(Mat<double>::Ones(2, 1), Mat<double>::Zero(2, 1), g),
                    ContractError);
  }
}

TEST_CASE("encode") {
  auto P = ModelParams<double>::init(10, 4, 3, 5);
  SUBCASE("single position uses the same token both ways") {
    auto enc = encode<double>({7}, P);
    CHECK(enc.states.rows() == 6);
    CHECK(enc.states.cols() == 1);
    CHECK(enc.fw_last == enc.states.topRows(3));
    CHECK(enc.bw_first == enc.states.bottomRows(3));
  }
  SUBCASE("empty sequence rejected") {
    CHECK_THROWS_AS(encode<double>({}, P), ContractError);
  }
  SUBCASE("id out of range rejected") {
    CHECK_THROWS_AS(encode<double>({10}, P), VocabularyError);
  }
  SUBCASE("length above maximum rejected, not truncated") {
    std::vector<int> long_seq(61, 4);
    CHECK_THROWS_AS(encode<double>(long_seq, P), ContractError);
    std::vector<int> ok_seq(60, 4);
    CHECK_NOTHROW(encode<double>(ok_seq, P));
  }
  SUBCASE("reversing input swaps the role of the two directions") {
    ModelParams<double> swapped = P;
    swapped.enc_fw = P.enc_bw;
    swapped.enc_bw = P.enc_fw;
    std::vector<int> u = {4, 5, 6, 7};
    std::vector<int> rev(u.rbegin(), u.rend());
    auto enc_u = encode<double>(u, P);
    auto enc_r = encode<double>(rev, swapped);
    const Index m = 4, s = 3;
    for (Index i = 0; i < m; ++i) {
      // backward states of u at i == forward states of reversed u at m-1-i
      CHECK(enc_u.states.block(s, i, s, 1) == enc_r.states.block(0, m - 1 - i, s, 1));
    }
  }
  SUBCASE("deterministic when dropout is disabled") {
    auto a = encode<double>({4, 5, 6}, P);
    auto b = encode<double>({4, 5, 6}, P);
    CHECK(a.states == b.states);
  }
}

TEST_CASE("decoder_init") {
  auto P = ModelParams<double>::init(10, 4, 3, 5);
  SUBCASE("zero W0 gives zero state") {
    ModelParams<double> Z = P;
    Z.w_init = Tensor<double>::matrix(Mat<double>::Zero(3, 6));
    auto enc = encode<double>({4, 5}, Z);
    CHECK(decoder_init<double>(enc, Z).isZero(0.0));
  }
  SUBCASE("entries bounded by one in magnitude") {
    auto enc = encode<double>({4, 5}, P);
    CHECK(decoder_init<double>(enc, P).cwiseAbs().maxCoeff() < 1.0);
  }
  SUBCASE("matches the written form on a toy") {
    auto enc = encode<double>({4, 5}, P);
    Mat<double> boundary(6, 1);
    boundary.topRows(3) = enc.fw_last;
    boundary.bottomRows(3) = enc.bw_first;
    Mat<double> expected = (P.w_init.mat() * boundary).array().tanh().matrix();
    CHECK(decoder_init<double>(enc, P) == expected);
  }
}

TEST_CASE("decoder_step") {
  auto P = ModelParams<double>::init(12, 4, 3, 9);
  SUBCASE("zero attention vector gives uniform weights and the mean summary") {
    ModelParams<double> Z = P;
    Z.v_att = Tensor<double>::vector(Vec<double>::Zero(3));
    auto enc = encode<double>({4, 5, 6}, Z);
    Mat<double> d = decoder_init<double>(enc, Z);
    auto a = step_attend<double>(d, enc, Z);
    for (Index i = 0; i < 3; ++i)
      CHECK(a.attention(i, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    Mat<double> mean = (enc.states.col(0) + enc.states.col(1) + enc.states.col(2)) / 3.0;
    for (Index k = 0; k < 6; ++k)
      CHECK(a.summary(k, 0) == doctest::Approx(mean(k, 0)).epsilon(1e-12));
  }
  SUBCASE("single position gets full attention") {
    auto enc = encode<double>({7}, P);
    Mat<double> d = decoder_init<double>(enc, P);
    auto a = step_attend<double>(d, enc, P);
    CHECK(a.attention(0, 0) == 1.0);
    CHECK(a.summary == Mat<double>(enc.states.col(0)));
  }
  SUBCASE("attention weights are a distribution at every step") {
    auto enc = encode<double>({4, 5, 6, 7}, P);
    Mat<double> d = decoder_init<double>(enc, P);
    for (int tok : {5, 6, 3}) {
      auto a = step_attend<double>(d, enc, P);
      double sum = 0;
      for (Index i = 0; i < a.attention.rows(); ++i) {
        CHECK(a.attention(i, 0) >= 0.0);
        sum += a.attention(i, 0);
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
      CHECK(std::abs(a.dist.sum() - 1.0) < 1e-9);
      d = advance<double>(d, tok, a.summary, P);
    }
  }
  SUBCASE("matches the independent step-by-step scorer exactly") {
    std::vector<int> u = {4, 5, 6};
    std::vector<int> c = {7, 8};
    double ours = sequence_log_prob<double>(u, c, P);
    double ref = naive::score<double>(u, c, P);
    CHECK(ours == ref);  // bit-equal
  }
}

TEST_CASE("sequence_log_prob") {
  auto P = ModelParams<double>::init(20, 4, 3, 21);
  SUBCASE("always non-positive") {
    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<int> u(1 + rng.index(5)), c(1 + rng.index(5));
      for (auto& t : u) t = 4 + static_cast<int>(rng.index(16));
      for (auto& t : c) t = 4 + static_cast<int>(rng.index(16));
      CHECK(sequence_log_prob<double>(u, c, P) <= 0.0);
    }
  }
  SUBCASE("all-zero output projection gives the uniform score") {
    ModelParams<double> Z = P;
    Z.w_out = Tensor<double>::matrix(Mat<double>::Zero(20, 9));
    Z.b_out = Tensor<double>::vector(Vec<double>::Zero(20));
    std::vector<int> c = {5, 6, 7};
    double lp = sequence_log_prob<double>({4, 5}, c, Z);
    CHECK(lp == doctest::Approx(-4.0 * std::log(20.0)).epsilon(1e-12));
  }
  SUBCASE("exp of the sum equals the product of per-step probabilities") {
    std::vector<int> u = {4, 5}, c = {6, 7};
    EncoderStates<double> enc = encode<double>(u, P);
    Mat<double> d = decoder_init<double>(enc, P);
    std::vector<int> targets = c;
    targets.push_back(corpus::Vocabulary::kEos);
    double product = 1.0;
    for (int tok : targets) {
      auto a = step_attend<double>(d, enc, P);
      product *= a.dist(tok, 0);
      d = advance<double>(d, tok, a.summary, P);
    }
    CHECK(std::exp(sequence_log_prob<double>(u, c, P)) ==
          doctest::Approx(product).epsilon(1e-12));
  }
}

TEST_CASE("generate_greedy") {
  auto P = ModelParams<double>::init(12, 4, 3, 33);
  SUBCASE("deterministic") {
    auto a = generate_greedy<double>({4, 5}, P, 10);
    auto b = generate_greedy<double>({4, 5}, P, 10);
    CHECK(a.ids == b.ids);
    CHECK(a.truncated == b.truncated);
  }
  SUBCASE("max_len 1 emits at most one token") {
    auto r = generate_greedy<double>({4, 5}, P, 1);
    CHECK(r.ids.size() <= 1);
    if (r.ids.size() == 1) CHECK(r.truncated);
  }
  SUBCASE("never emits pad or bos") {
    auto r = generate_greedy<double>({4, 5, 6}, P, 20);
    for (int id : r.ids) {
      CHECK(id != corpus::Vocabulary::kPad);
      CHECK(id != corpus::Vocabulary::kBos);
    }
  }
}

TEST_CASE("tape path agrees with the inference path") {
  auto P = ModelParams<double>::init(15, 5, 4, 77);
  std::vector<int> u = {4, 5, 6, 7}, c = {8, 9};
  Tape<double> tape;
  auto bound = BoundModel<double>::bind(tape, P);
  Value<double> nll = example_nll_on_tape<double>(bound, u, c, nullptr);
  double direct = sequence_log_prob<double>(u, c, P);
  CHECK(nll.scalar() == doctest::Approx(-direct).epsilon(1e-12));
  CHECK(std::abs(nll.scalar() + direct) < 1e-10);
}

TEST_CASE("batch_loss") {
  auto P = ModelParams<double>::init(15, 5, 4, 78);
  DropoutConfig<double> off;
  std::vector<int> u1 = {4, 5, 6}, c1 = {7, 8};
  std::vector<int> u2 = {9, 10}, c2 = {11, 12, 13};

  SUBCASE("singleton batch equals the negative sequence log prob") {
    Batch b;
    b.u_ids = {u1};
    b.c_ids = {c1};
    Tape<double> tape;
    auto bound = BoundModel<double>::bind(tape, P);
    double loss = batch_loss_on_tape<double>(bound, b, off, nullptr).scalar();
    CHECK(std::abs(loss + sequence_log_prob<double>(u1, c1, P)) < 1e-10);
  }
  SUBCASE("duplicating an example leaves the mean unchanged") {
    Batch b1, b2;
    b1.u_ids = {u1};
    b1.c_ids = {c1};
    b2.u_ids = {u1, u1};
    b2.c_ids = {c1, c1};
    Tape<double> t1, t2;
    auto m1 = BoundModel<double>::bind(t1, P);
    auto m2 = BoundModel<double>::bind(t2, P);
    CHECK(batch_loss_on_tape<double>(m1, b1, off, nullptr).scalar() ==
          batch_loss_on_tape<double>(m2, b2, off, nullptr).scalar());
  }
  SUBCASE("batched loss equals the mean of independent naive scores") {
    Batch b;
    b.u_ids = {u1, u2};
    b.c_ids = {c1, c2};
    Tape<double> tape;
    auto bound = BoundModel<double>::bind(tape, P);
    double loss = batch_loss_on_tape<double>(bound, b, off, nullptr).scalar();
    double expect = -(naive::score<double>(u1, c1, P) + naive::score<double>(u2, c2, P)) / 2.0;
    CHECK(std::abs(loss - expect) < 1e-10);
  }
  SUBCASE("padding round trip never changes the contributing tokens") {
    Batch b;
    b.u_ids = {u1, u2};
    b.c_ids = {c1, c2};
    auto [up, cp] = b.padded();
    CHECK(up.cols() == 3);
    CHECK(cp.cols() == 3);
    CHECK(up(1, 2) == corpus::Vocabulary::kPad);
    Batch b2;
    for (Eigen::Index i = 0; i < up.rows(); ++i) {
      b2.u_ids.push_back(Batch::strip_padding(up.row(i)));
      b2.c_ids.push_back(Batch::strip_padding(cp.row(i)));
    }
    Tape<double> t1, t2;
    auto m1 = BoundModel<double>::bind(t1, P);
    auto m2 = BoundModel<double>::bind(t2, P);
    CHECK(batch_loss_on_tape<double>(m1, b, off, nullptr).scalar() ==
          batch_loss_on_tape<double>(m2, b2, off, nullptr).scalar());
  }
  SUBCASE("dropout draws reproduce under the same seed and differ otherwise") {
    DropoutConfig<double> on;
    on.enabled = true;
    Batch b;
    b.u_ids = {u1};
    b.c_ids = {c1};
    auto run = [&](std::uint64_t seed) {
      Rng rng(seed);
      Tape<double> tape;
      auto bound = BoundModel<double>::bind(tape, P);
      return batch_loss_on_tape<double>(bound, b, on, &rng).scalar();
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));
  }
}

TEST_CASE("gradients of the full model pass the finite-difference check") {
  // Smaller than the acceptance run; the acceptance suite uses the pinned sizes.
  auto P = ModelParams<double>::init(8, 3, 2, 99);
  Batch batch;
  batch.u_ids = {{4, 5}, {6}};
  batch.c_ids = {{7}, {5, 4}};
  auto theta = P.to_map();
  double err = num::grad_check(
      [&](Tape<double>& tape, const num::ParamMap& pm) {
        ModelParams<double> local = P;
        local.assign_from_map(pm);
        auto bound = BoundModel<double>::bind(tape, local);
        DropoutConfig<double> off;
        return batch_loss_on_tape<double>(bound, batch, off, nullptr);
      },
      theta);
  CHECK(err < 1e-4);
}
