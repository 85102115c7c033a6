#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "dsanet/error.hpp"
#include "dsanet/eval.hpp"
#include "support.hpp"

using namespace dsanet;

namespace {

// L x P estimate whose column perm[i] holds ground-truth row i.
std::vector<double> columns_from_rows(const std::vector<double>& gt, std::size_t P, std::size_t L,
                                      const std::vector<std::size_t>& perm) {
  std::vector<double> est(L * P);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t l = 0; l < L; ++l) est[l * P + perm[i]] = gt[i * L + l];
  return est;
}

std::vector<std::size_t> brute_force_match(const std::vector<double>& est, const std::vector<double>& gt,
                                           std::size_t P, std::size_t L) {
  std::vector<std::size_t> perm(P), best;
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best_cost = 1e300;
  std::vector<double> col(L);
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      for (std::size_t l = 0; l < L; ++l) col[l] = est[l * P + perm[i]];
      double dot = 0, a = 0, b = 0;
      for (std::size_t l = 0; l < L; ++l) {
        dot += gt[i * L + l] * col[l];
        a += gt[i * L + l] * gt[i * L + l];
        b += col[l] * col[l];
      }
      cost += std::acos(std::clamp(dot / std::sqrt(a * b), -1.0, 1.0));
    }
    if (cost < best_cost) best_cost = cost, best = perm;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

UnmixResult random_result(Rng& rng, std::size_t H, std::size_t W, std::size_t L, std::size_t P) {
  UnmixResult r;
  r.height = H;
  r.width = W;
  r.bands = L;
  r.materials = P;
  r.endmembers.resize(L * P);
  for (double& v : r.endmembers) v = rng.uniform(0.05, 1.0);
  r.abundances.resize(H * W * P);
  for (std::size_t n = 0; n < H * W; ++n) {
    double total = 0;
    for (std::size_t p = 0; p < P; ++p) total += r.abundances[n * P + p] = rng.uniform(0.01, 1.0);
    for (std::size_t p = 0; p < P; ++p) r.abundances[n * P + p] /= total;
  }
  return r;
}

}  // namespace

TEST_CASE("closed-form metric values") {
  const std::vector<double> a{1, 2, 3};
  CHECK(std::abs(eval::sad_metric(a, a)) <= 1e-12);
  CHECK(std::abs(eval::sad_metric(std::vector<double>{1, 0}, std::vector<double>{0, 1}) -
                 std::numbers::pi / 2) <= 1e-12);
  CHECK(std::abs(eval::sad_metric(std::vector<double>{1, 1}, std::vector<double>{1, 0}) -
                 std::numbers::pi / 4) <= 1e-12);
  CHECK(std::abs(eval::sad_metric(std::vector<double>{1, 0}, std::vector<double>{-1, 0}) -
                 std::numbers::pi) <= 1e-12);
  CHECK(std::abs(eval::rmse_metric(std::vector<double>{0}, std::vector<double>{1}) - 1.0) <= 1e-12);
  CHECK(eval::rmse_metric(std::vector<double>{0, 0}, std::vector<double>{3, 4}) ==
        doctest::Approx(std::sqrt(12.5)));
  CHECK(eval::rmse_metric(a, a) == 0.0);

  CHECK_THROWS_AS(eval::sad_metric(std::vector<double>{0, 0}, std::vector<double>{1, 0}), DegenerateError);
  CHECK_THROWS_AS(eval::sad_metric(std::vector<double>{1}, std::vector<double>{1, 0}), DimensionError);
  CHECK_THROWS_AS(eval::rmse_metric(std::vector<double>{1}, std::vector<double>{1, 0}), DimensionError);
  CHECK_THROWS_AS(eval::rmse_metric(std::vector<double>{}, std::vector<double>{}), DimensionError);
}

TEST_CASE("metric properties") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(10), y(10), z(10);
    for (std::size_t i = 0; i < 10; ++i) {
      x[i] = rng.uniform(-1, 1);
      y[i] = rng.uniform(-1, 1);
      z[i] = rng.uniform(-1, 1);
    }
    const double s = eval::sad_metric(x, y);
    CHECK(s >= 0.0);
    CHECK(s <= std::numbers::pi);
    CHECK(eval::sad_metric(y, x) == doctest::Approx(s).epsilon(1e-12));
    CHECK(eval::rmse_metric(x, z) <= eval::rmse_metric(x, y) + eval::rmse_metric(y, z) + 1e-12);
  }
}

TEST_CASE("endmember matching") {
  const std::size_t P = 3, L = 5;
  Rng rng(2);
  std::vector<double> gt(P * L);
  for (double& v : gt) v = rng.uniform(0.05, 1.0);

  CHECK(eval::match_endmembers(columns_from_rows(gt, P, L, {0, 1, 2}), gt, P, L) ==
        std::vector<std::size_t>{0, 1, 2});
  CHECK(eval::match_endmembers(columns_from_rows(gt, P, L, {1, 0, 2}), gt, P, L) ==
        std::vector<std::size_t>{1, 0, 2});

  SUBCASE("ties pick the lexicographically smallest permutation") {
    std::vector<double> same(P * L, 1.0);
    CHECK(eval::match_endmembers(std::vector<double>(L * P, 1.0), same, P, L) ==
          std::vector<std::size_t>{0, 1, 2});
  }
  SUBCASE("agrees with brute force and ignores column scaling") {
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t Q = 4, B = 6;
      std::vector<double> g(Q * B), e(B * Q);
      for (double& v : g) v = rng.uniform(0.0, 1.0);
      for (double& v : e) v = rng.uniform(0.0, 1.0);
      const auto perm = eval::match_endmembers(e, g, Q, B);
      CHECK(perm == brute_force_match(e, g, Q, B));
      auto scaled = e;
      for (std::size_t j = 0; j < Q; ++j) {
        const double c = rng.uniform(0.1, 10.0);
        for (std::size_t l = 0; l < B; ++l) scaled[l * Q + j] *= c;
      }
      CHECK(eval::match_endmembers(scaled, g, Q, B) == perm);
    }
  }
  CHECK_THROWS_AS(eval::match_endmembers(std::vector<double>(9 * 2, 1.0), std::vector<double>(9 * 2, 1.0), 9, 2),
                  ConfigError);
  CHECK_THROWS_AS(eval::match_endmembers(std::vector<double>(4, 1.0), gt, P, L), DimensionError);
}

TEST_CASE("evaluate") {
  Rng rng(3);
  const auto result = random_result(rng, 4, 5, 7, 3);
  const auto truth = eval::to_ground_truth(result);

  SUBCASE("verbatim ground truth scores zero") {
    const auto report = eval::evaluate(result, truth);
    CHECK(report.permutation == std::vector<std::size_t>{0, 1, 2});
    for (double v : report.sad_per_em) CHECK(std::abs(v) < 1e-7);
    for (double v : report.rmse_per_em) CHECK(v == 0.0);
  }
  SUBCASE("permuted ground truth scores zero after matching") {
    const std::vector<std::size_t> perm{2, 0, 1};
    auto moved = truth;
    for (std::size_t i = 0; i < 3; ++i) {
      std::copy(truth.endmember(i).begin(), truth.endmember(i).end(), moved.endmembers.begin() + perm[i] * 7);
      for (std::size_t n = 0; n < 20; ++n) moved.abundances[n * 3 + perm[i]] = truth.abundances[n * 3 + i];
    }
    const auto report = eval::evaluate(result, moved);
    for (std::size_t i = 0; i < 3; ++i) CHECK(report.permutation[perm[i]] == i);
    for (double v : report.sad_per_em) CHECK(std::abs(v) < 1e-7);
    for (double v : report.rmse_per_em) CHECK(v == 0.0);
  }
  SUBCASE("averages are the means of the entries") {
    const auto other = eval::to_ground_truth(random_result(rng, 4, 5, 7, 3));
    const auto report = eval::evaluate(result, other);
    std::vector<double> col(7), a(20), b(20);
    double sad = 0, rmse = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::size_t j = report.permutation[i];
      for (std::size_t l = 0; l < 7; ++l) col[l] = result.endmember(l, j);
      const double s = eval::sad_metric(other.endmember(i), col);
      for (std::size_t n = 0; n < 20; ++n) {
        a[n] = other.abundances[n * 3 + i];
        b[n] = result.abundances[n * 3 + j];
      }
      const double r = eval::rmse_metric(a, b);
      CHECK(report.sad_per_em[i] == s);
      CHECK(report.rmse_per_em[i] == r);
      sad += s;
      rmse += r;
    }
    CHECK(report.sad_avg == doctest::Approx(sad / 3).epsilon(1e-15));
    CHECK(report.rmse_avg == doctest::Approx(rmse / 3).epsilon(1e-15));
  }
  auto wrong = truth;
  wrong.height = 5;
  CHECK_THROWS_AS(eval::evaluate(result, wrong), DimensionError);
}

TEST_CASE("uniform baseline") {
  hsi::GroundTruth t{2, 1, 1, 2, {1, 1}, {1, 0, 0, 1}};
  CHECK(eval::uniform_baseline_rmse(t) == doctest::Approx(0.5));
}

TEST_CASE("exports") {
  SUBCASE("PGM bytes") {
    const auto bytes = eval::encode_pgm(std::vector<double>{0.0, 0.5, 0.501, 1.0}, 2, 2);
    const std::string header = "P5\n2 2\n255\n";
    REQUIRE(bytes.size() == header.size() + 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + header.size()) == header);
    CHECK(std::vector<unsigned>(bytes.begin() + header.size(), bytes.end()) ==
          std::vector<unsigned>{0, 128, 128, 255});
    const auto clamped = eval::encode_pgm(std::vector<double>{-1.0, 2.0, 0.2}, 1, 3);
    CHECK(std::string(clamped.begin(), clamped.begin() + 11) == "P5\n3 1\n255\n");
    CHECK(clamped[11] == 0);
    CHECK(clamped[12] == 255);
    CHECK(clamped[13] == 51);
    CHECK_THROWS_AS(eval::encode_pgm(std::vector<double>(3, 0.0), 2, 2), DimensionError);
  }
  SUBCASE("maps and CSV on disk") {
    Rng rng(4);
    const auto result = random_result(rng, 3, 4, 5, 3);
    testing::TempDir dir("exports");
    const auto paths = eval::export_abundance_maps(result, dir.path());
    REQUIRE(paths.size() == 3);
    for (std::size_t p = 0; p < 3; ++p) {
      CHECK(paths[p].filename() == "abundance_" + std::to_string(p) + ".pgm");
      const auto bytes = testing::read_bytes(paths[p]);
      CHECK(bytes.size() == std::string("P5\n4 3\n255\n").size() + 12);
    }
    eval::export_endmembers_csv(result, dir / "em.csv");
    std::istringstream csv(testing::read_text(dir / "em.csv"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
      ++rows;
      CHECK(std::count(line.begin(), line.end(), ',') == 4);
    }
    CHECK(rows == 3);
  }
}

TEST_CASE("report JSON") {
  Rng rng(5);
  const auto result = random_result(rng, 3, 3, 6, 3);
  const auto truth = eval::to_ground_truth(random_result(rng, 3, 3, 6, 3));
  auto report = eval::evaluate(result, truth);
  report.runtime_s = 1.25;
  const auto j = eval::report_to_json(report);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"permutation", "sad_per_em", "rmse_per_em", "sad_avg",
                                         "rmse_avg", "runtime_s"});

  testing::TempDir dir("report");
  eval::export_report_json(j, dir / "report.json");
  const auto text = testing::read_text(dir / "report.json");
  const auto back = eval::report_from_json(nlohmann::json::parse(text));
  CHECK(back.permutation == report.permutation);
  CHECK(back.sad_per_em == report.sad_per_em);
  CHECK(back.rmse_per_em == report.rmse_per_em);
  CHECK(back.sad_avg == report.sad_avg);
  CHECK(back.rmse_avg == report.rmse_avg);
  CHECK(back.runtime_s == 1.25);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::abs(back.sad_per_em[i] - report.sad_per_em[i]) < 1e-12);

  CHECK_THROWS_AS(eval::report_from_json(nlohmann::json::parse(R"({"permutation": "x"})")), ParseError);
  CHECK_THROWS_AS(eval::report_from_json(nlohmann::json::array()), ParseError);
}
