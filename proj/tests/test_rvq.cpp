#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "omnisat/rvq.hpp"

using namespace omnisat;

namespace {

Codebook random_book(std::mt19937_64& rng, int layers, int size, int dim, bool null_slot = true) {
  auto book = Codebook::zeros(PartRole::position, layers, size, dim, 0.99, null_slot);
  for (int l = 0; l < layers; ++l) {
    for (int k = book.pinned(0) ? 1 : 0; k < size; ++k) {
      book.set_codeword(l, k, testing::random_vector(rng, dim) / (l + 1.0));
    }
  }
  return book;
}

// Exhaustive scan, strict comparison so the first minimum is kept.
int scan_nearest(const Matrix& table, const Vector& r) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < table.rows(); ++k) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < table.cols(); ++j) d += (table(k, j) - r(j)) * (table(k, j) - r(j));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

CodebookSet single_group(Codebook book) {
  CodebookSet set;
  set.books[static_cast<int>(book.group)] = std::move(book);
  return set;
}

}  // namespace

TEST_CASE("nearest_codeword examples") {
  std::mt19937_64 rng(31);
  const Matrix table = testing::random_matrix(rng, 8, 4);
  const auto hit = nearest_codeword(table, table.row(3).transpose());
  CHECK(hit.index == 3);
  CHECK(hit.distance2 == 0.0);

  const Matrix one = testing::random_matrix(rng, 1, 4);
  for (int i = 0; i < 10; ++i) CHECK(nearest_codeword(one, testing::random_vector(rng, 4)).index == 0);

  Matrix dup(3, 2);
  dup << 1, 0, 1, 0, -1, 0;
  CHECK(nearest_codeword(dup, Vector::Zero(2)).index == 0);

  CHECK_THROWS_AS(nearest_codeword(Matrix(0, 4), Vector::Zero(4)), Error);
  Vector bad = Vector::Zero(4);
  bad(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(nearest_codeword(table, bad), Error);
}

TEST_CASE("property: nearest_codeword matches an exhaustive scan") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = testing::random_int(rng, 1, 20);
    const int n = testing::random_int(rng, 1, 10);
    const Matrix table = testing::random_matrix(rng, k, n);
    const Vector r = testing::random_vector(rng, n, -1.5, 1.5);
    CHECK(nearest_codeword(table, r).index == scan_nearest(table, r));
  }
}

TEST_CASE("encode_channel examples") {
  std::mt19937_64 rng(33);
  const Vector s = testing::random_vector(rng, 8);

  auto one = Codebook::zeros(PartRole::position, 1, 4, 8, 0.99, false);
  one.set_codeword(0, 2, s);
  const auto e1 = encode_channel(one, s);
  CHECK(e1.indices == std::vector<int>{2});
  CHECK(e1.residual.back().norm() == 0.0);

  auto deep = random_book(rng, 4, 16, 8);
  deep.set_codeword(0, 7, s);
  const auto e4 = encode_channel(deep, s);
  CHECK(e4.indices[0] == 7);
  for (int l = 1; l < 4; ++l) CHECK(e4.indices[static_cast<std::size_t>(l)] == kNullCodeword);
  CHECK(e4.residual.back().norm() == 0.0);
  CHECK(decode_channel(deep, e4.indices) == s);

  CHECK(decode_channel(deep, std::vector<int>{0, 0, 0, 0}).norm() == 0.0);
  CHECK_THROWS_AS(decode_channel(deep, std::vector<int>{0, 16, 0, 0}), Error);
  CHECK_THROWS_AS(decode_channel(deep, std::vector<int>{0, 0}), Error);
  CHECK_THROWS_AS(encode_channel(deep, Vector::Zero(7)), Error);
}

TEST_CASE("property: greedy steps match a per-layer oracle and never increase the residual") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    const auto book = random_book(rng, 3, 16, testing::random_int(rng, 2, 8));
    const Vector s = testing::random_vector(rng, book.dim());
    const auto enc = encode_channel(book, s);
    for (int l = 0; l < 3; ++l) {
      const auto& r = enc.residual[static_cast<std::size_t>(l)];
      CHECK(enc.indices[static_cast<std::size_t>(l)] == scan_nearest(book.codewords[static_cast<std::size_t>(l)], r));
      CHECK(enc.residual[static_cast<std::size_t>(l + 1)].norm() <= r.norm() + 1e-12);
    }
  }
}

TEST_CASE("property: decode_prefix error is non-increasing") {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 200; ++trial) {
    const int depth = testing::random_int(rng, 1, 8);
    const auto book = random_book(rng, depth, testing::random_int(rng, 2, 32), 8);
    const Vector s = testing::random_vector(rng, 8);
    const auto enc = encode_channel(book, s);
    double prev = s.norm();
    for (int l = 0; l <= depth; ++l) {
      const double err = (s - decode_prefix(book, enc.indices, l)).norm();
      CHECK(err <= prev + 1e-9);
      prev = err;
    }
    CHECK(decode_prefix(book, enc.indices, depth) == decode_channel(book, enc.indices));
    CHECK((decode_channel(book, enc.indices) - (s - enc.residual.back())).norm() <= 1e-12);
  }
}

TEST_CASE("masked layers pass the residual through") {
  std::mt19937_64 rng(36);
  const auto book = random_book(rng, 4, 8, 5);
  const Vector s = testing::random_vector(rng, 5);
  const bool mask[4] = {true, false, true, false};
  const auto enc = encode_channel(book, s, mask);
  CHECK(enc.indices[1] == kSkippedLayer);
  CHECK(enc.indices[3] == kSkippedLayer);
  CHECK(enc.residual[2] == enc.residual[1]);
  CHECK(enc.residual[4] == enc.residual[3]);
  const bool all[4] = {true, true, true, true};
  CHECK(encode_channel(book, s, all).indices == encode_channel(book, s).indices);
  const bool short_mask[2] = {true, true};
  CHECK_THROWS_AS(encode_channel(book, s, short_mask), Error);
}

TEST_CASE("encode_chunk layout") {
  std::mt19937_64 rng(37);
  CodebookSet books;
  for (const auto role : {PartRole::position, PartRole::rotation, PartRole::gripper}) {
    auto b = random_book(rng, 8, role == PartRole::gripper ? 64 : 256, 8);
    b.group = role;
    books.books[static_cast<int>(role)] = std::move(b);
  }
  const auto roles = testing::arm_roles();
  const Matrix c = testing::random_matrix(rng, 8, 7);
  const auto tokens = encode_chunk(books, c, roles);
  CHECK(tokens.layers == 8);
  CHECK(tokens.indices.size() == 56);
  for (std::size_t i = 0; i < 56; ++i) {
    CHECK(tokens.indices[i] >= 0);
    CHECK(tokens.indices[i] < (i >= 48 ? 64 : 256));
  }
  CHECK((decode_chunk(books, tokens, roles) - c).norm() < c.norm());

  // Single channel matches encode_channel.
  const std::vector<PartRole> solo{PartRole::rotation};
  const auto single = encode_chunk(books, c.col(4), solo);
  CHECK(single.indices == encode_channel(books.at(PartRole::rotation), c.col(4)).indices);

  // Swapping two position channels swaps their index blocks.
  Matrix swapped = c;
  swapped.col(0).swap(swapped.col(2));
  const auto t2 = encode_chunk(books, swapped, roles);
  for (int l = 0; l < 8; ++l) {
    CHECK(t2.indices[static_cast<std::size_t>(l)] == tokens.indices[static_cast<std::size_t>(16 + l)]);
    CHECK(t2.indices[static_cast<std::size_t>(16 + l)] == tokens.indices[static_cast<std::size_t>(l)]);
    CHECK(t2.indices[static_cast<std::size_t>(8 + l)] == tokens.indices[static_cast<std::size_t>(8 + l)]);
  }
  CHECK(std::equal(t2.indices.begin() + 24, t2.indices.end(), tokens.indices.begin() + 24));

  // Group-major order: a gripper channel listed first still lands last.
  const std::vector<PartRole> mixed{PartRole::gripper, PartRole::position};
  CHECK(group_major_order(mixed) == std::vector<std::size_t>{1, 0});
  const auto tm = encode_chunk(books, c.leftCols(2), mixed);
  CHECK(std::vector<int>(tm.indices.begin(), tm.indices.begin() + 8) ==
        encode_channel(books.at(PartRole::position), c.col(1)).indices);
  CHECK((decode_chunk(books, tm, mixed).col(0) - decode_channel(books.at(PartRole::gripper), encode_channel(books.at(PartRole::gripper), c.col(0)).indices)).norm() == 0.0);

  const auto only_pos = single_group(books.at(PartRole::position));
  CHECK_THROWS_AS(encode_chunk(only_pos, c, roles), Error);
}

TEST_CASE("EMA with identical inputs converges within the geometric bound") {
  std::mt19937_64 rng(38);
  const Vector v = testing::random_vector(rng, 8);
  for (const bool null_slot : {false, true}) {
    RvqConfig cfg;
    cfg.layers = 1;
    cfg.codebook_size = {null_slot ? 2 : 1, 2, 2};
    cfg.null_codeword = null_slot;
    cfg.drop_p = 0.0;
    cfg.batch_size = 4;
    auto book = Codebook::zeros(PartRole::position, 1, cfg.codebook_size[0], 8, 0.99, null_slot);
    const int slot = null_slot ? 1 : 0;
    const Vector init = v + 0.01 * testing::random_vector(rng, 8);
    book.set_codeword(0, slot, init);
    auto books = single_group(book);

    const std::vector<PartRole> roles{PartRole::position};
    std::vector<TrainingSample> batch(4, TrainingSample{Matrix(v), Matrix()});
    const double d0 = (init - v).norm();
    for (int n = 1; n <= 20; ++n) {
      train_epoch(books, batch, roles, SplineConfig{}, cfg, 1, n);
      const auto& b = books.at(PartRole::position);
      const Vector cw = b.codewords[0].row(slot).transpose();
      CHECK((cw - v).norm() <= std::pow(0.99, n) * d0 + 1e-12);
      // Closed-form recurrence from zero state: count_n = (1 - a^n) * B.
      CHECK(b.ema_counts[0](slot) == doctest::Approx((1.0 - std::pow(0.99, n)) * 4.0).epsilon(1e-12));
      if (null_slot) {
        CHECK(b.codewords[0].row(0).norm() == 0.0);
      }
    }
  }
}

TEST_CASE("drop_p = 0 makes the dropout term equal the representation term") {
  std::mt19937_64 rng(39);
  const std::vector<PartRole> roles{PartRole::position, PartRole::gripper};
  std::vector<TrainingSample> samples;
  for (int i = 0; i < 40; ++i) samples.push_back({testing::random_matrix(rng, 8, 2), Matrix()});
  RvqConfig cfg;
  cfg.layers = 3;
  cfg.codebook_size = {16, 16, 8};
  cfg.drop_p = 0.0;
  cfg.batch_size = 16;
  auto books = init_codebooks(samples, roles, cfg, 5);
  const auto report = train_epoch(books, samples, roles, SplineConfig{}, cfg, 5);
  CHECK(report.dropout == report.recon_repr);
  CHECK(report.updates == 3);
  CHECK(report.samples == 40);
  CHECK(report.total == doctest::Approx(report.recon + report.commitment + 0.2 * report.dropout));

  cfg.drop_p = 0.5;
  auto dropped = init_codebooks(samples, roles, cfg, 5);
  const auto r2 = train_epoch(dropped, samples, roles, SplineConfig{}, cfg, 5);
  CHECK(r2.dropout >= r2.recon_repr);

  CHECK_THROWS_AS(train_epoch(books, std::span<const TrainingSample>{}, roles, SplineConfig{}, cfg, 5), Error);
  cfg.drop_p = 1.0;
  CHECK_THROWS_AS(train_epoch(books, samples, roles, SplineConfig{}, cfg, 5), Error);
}

TEST_CASE("property: trained codewords equal EMA sums over counts") {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<PartRole> roles{PartRole::position, PartRole::rotation};
    std::vector<TrainingSample> samples;
    const int n = testing::random_int(rng, 20, 120);
    for (int i = 0; i < n; ++i) samples.push_back({testing::random_matrix(rng, 6, 2), Matrix()});
    RvqConfig cfg;
    cfg.layers = testing::random_int(rng, 1, 4);
    cfg.codebook_size = {testing::random_int(rng, 2, 12), testing::random_int(rng, 2, 12), 2};
    cfg.batch_size = testing::random_int(rng, 1, 40);
    cfg.reseed_threshold = 0.0;  // no reseeds
    const auto seed = static_cast<std::uint64_t>(trial);
    auto books = init_codebooks(samples, roles, cfg, seed);
    for (int e = 0; e < 3; ++e) {
      const auto r = train_epoch(books, samples, roles, SplineConfig{}, cfg, seed, e);
      CHECK(r.reseeded == 0);
    }
    for (const auto role : roles) {
      const auto& b = books.at(role);
      for (int l = 0; l < b.layers(); ++l) {
        for (int k = 1; k < b.size(); ++k) {
          const double count = b.ema_counts[static_cast<std::size_t>(l)](k);
          CHECK(count >= 0.0);
          if (count > 0.0) {
            const Vector want = b.ema_sums[static_cast<std::size_t>(l)].row(k).transpose() / count;
            CHECK((b.codewords[static_cast<std::size_t>(l)].row(k).transpose() - want).norm() <= 1e-10);
          }
        }
      }
    }
  }
}

TEST_CASE("dead codewords are reseeded from current residuals") {
  std::mt19937_64 rng(41);
  const std::vector<PartRole> roles{PartRole::position};
  std::vector<TrainingSample> samples;
  for (int i = 0; i < 32; ++i) samples.push_back({Matrix(testing::random_vector(rng, 4, 0.4, 0.6)), Matrix()});
  RvqConfig cfg;
  cfg.layers = 1;
  cfg.codebook_size = {4, 2, 2};
  cfg.drop_p = 0.0;
  cfg.batch_size = 32;
  auto book = Codebook::zeros(PartRole::position, 1, 4, 4, 0.99);
  book.set_codeword(0, 1, Vector::Constant(4, 0.5));
  book.set_codeword(0, 2, Vector::Constant(4, 50.0));  // never nearest
  book.set_codeword(0, 3, Vector::Constant(4, -50.0));
  auto books = single_group(book);
  const auto r = train_epoch(books, samples, roles, SplineConfig{}, cfg, 3);
  CHECK(r.reseeded == 2);
  const auto& b = books.at(PartRole::position);
  for (int k = 2; k < 4; ++k) {
    bool from_pool = false;
    for (const auto& s : samples) from_pool |= b.codewords[0].row(k).transpose() == s.controls.col(0);
    CHECK(from_pool);
    CHECK(b.ema_counts[0](k) == 0.0);
  }
  CHECK(b.codewords[0].row(0).norm() == 0.0);
}

TEST_CASE("training is deterministic under the seed") {
  std::mt19937_64 rng(42);
  const auto roles = testing::arm_roles();
  std::vector<TrainingSample> samples;
  for (int i = 0; i < 100; ++i) samples.push_back({testing::random_matrix(rng, 8, 7), Matrix()});
  RvqConfig cfg;
  cfg.layers = 4;
  cfg.codebook_size = {16, 16, 4};
  cfg.batch_size = 32;
  const auto run = [&](std::uint64_t seed) {
    auto books = init_codebooks(samples, roles, cfg, seed);
    for (int e = 0; e < 2; ++e) train_epoch(books, samples, roles, SplineConfig{}, cfg, seed, e);
    return books;
  };
  const auto a = run(9);
  const auto b = run(9);
  const auto c = run(10);
  bool differs = false;
  for (const auto role : {PartRole::position, PartRole::rotation, PartRole::gripper}) {
    for (int l = 0; l < 4; ++l) {
      CHECK(a.at(role).codewords[static_cast<std::size_t>(l)] == b.at(role).codewords[static_cast<std::size_t>(l)]);
      CHECK(a.at(role).ema_counts[static_cast<std::size_t>(l)] == b.at(role).ema_counts[static_cast<std::size_t>(l)]);
      differs |= a.at(role).codewords[static_cast<std::size_t>(l)] != c.at(role).codewords[static_cast<std::size_t>(l)];
    }
  }
  CHECK(differs);
}

TEST_CASE("property: range safety and dropout neutrality at inference") {
  std::mt19937_64 rng(43);
  const auto roles = testing::arm_roles();
  std::vector<TrainingSample> samples;
  for (int i = 0; i < 60; ++i) samples.push_back({testing::random_matrix(rng, 8, 7), Matrix()});
  RvqConfig cfg;
  cfg.layers = 3;
  cfg.codebook_size = {12, 10, 3};
  cfg.batch_size = 20;
  auto books = init_codebooks(samples, roles, cfg, 4);
  train_epoch(books, samples, roles, SplineConfig{}, cfg, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix c = testing::random_matrix(rng, 8, 7, -3, 3);
    const auto t = encode_chunk(books, c, roles);
    for (std::size_t i = 0; i < t.indices.size(); ++i) {
      const int k = i >= 18 ? 3 : (i >= 9 ? 10 : 12);
      CHECK(t.indices[i] >= 0);
      CHECK(t.indices[i] < k);
    }
    // Any in-range list decodes.
    TokenList random_list{3, {}};
    for (std::size_t i = 0; i < 21; ++i) {
      random_list.indices.push_back(testing::random_int(rng, 0, i >= 18 ? 2 : (i >= 9 ? 9 : 11)));
    }
    CHECK_NOTHROW(decode_chunk(books, random_list, roles));
  }

  // Inference encode is a pure function of the codebooks, whatever drop_p trained them.
  const Matrix probe = testing::random_matrix(rng, 8, 7);
  const auto before = encode_chunk(books, probe, roles);
  cfg.drop_p = 0.5;
  CHECK(encode_chunk(books, probe, roles) == before);
}

TEST_CASE("utilization_stats examples") {
  std::mt19937_64 rng(44);
  auto book = random_book(rng, 2, 4, 3);
  const auto books = single_group(book);
  const std::vector<PartRole> roles{PartRole::position};

  std::vector<TokenList> uniform;
  for (int k = 0; k < 4; ++k) uniform.push_back({2, {k, 2}});
  const auto u = utilization_stats(books, uniform, roles);
  REQUIRE(u.size() == 2);
  CHECK(u[0].perplexity == doctest::Approx(4.0));
  CHECK(u[0].dead == 0);
  CHECK(u[1].perplexity == doctest::Approx(1.0));
  CHECK(u[1].dead == 3);
  CHECK(u[1].layer == 2);

  std::vector<TokenList> random_set;
  for (int i = 0; i < 50; ++i) random_set.push_back({2, {testing::random_int(rng, 0, 3), testing::random_int(rng, 0, 3)}});
  for (const auto& layer : utilization_stats(books, random_set, roles)) {
    std::uint64_t total = 0;
    for (const auto h : layer.histogram) total += h;
    CHECK(total == 50);
    CHECK(layer.assignments == 50);
  }
  CHECK_THROWS_AS(utilization_stats(books, std::vector<TokenList>{{2, {0}}}, roles), Error);
  CHECK_THROWS_AS(utilization_stats(books, std::vector<TokenList>{{2, {0, 9}}}, roles), Error);
}
