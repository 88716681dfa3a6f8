#include <doctest.h>

#include <atomic>
#include <cmath>
#include <limits>

#include "muscale/rng.hpp"
#include "muscale/search.hpp"

using namespace muscale;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

HpGrid lr_grid(std::vector<double> lrs) {
  HpGrid g;
  g.lr = std::move(lrs);
  g.base.init_matrix = 0.05;
  g.base.init_other = 0.05;
  g.base.init_scale = InitScale::stddev;
  g.base.mult_output = 5.0;
  return g;
}

// the published base-width searches: lrs and final losses
const std::vector<double> kGpt12Lrs = {5e-4, 1e-3, 5e-3, 1e-2, 3e-2, 5e-2, 7e-2, 1e-1};
const std::vector<double> kGpt12Losses = {7.3, 7.03, 5.97, 5.57, 3.74, 5.86, 7.22, 7.25};
const std::vector<double> kGpt64Lrs = {1e-4, 5e-4, 7e-4, 1e-3, 3e-3, 5e-3, 7e-3, 1e-2};
const std::vector<double> kGpt64Losses = {4.35, 3.73, 3.69, 3.64, 8.37, 13.3, 9.66, 8.12};

}  // namespace

TEST_SUITE("search") {

TEST_CASE("replaying the 12-layer GPT row selects lr 3e-2") {
  const GridResult r = grid_result_from_losses(lr_grid(kGpt12Lrs), kGpt12Losses);
  CHECK(r.best().hp.lr_matrix == 3e-2);
  CHECK(r.best().final_loss == 3.74);
}

TEST_CASE("replaying the 64-layer row selects lr 1e-3") {
  const GridResult r = grid_result_from_losses(lr_grid(kGpt64Lrs), kGpt64Losses);
  CHECK(r.best().hp.lr_matrix == 1e-3);
  CHECK(r.best().final_loss == 3.64);
}

TEST_CASE("a single-point grid returns that point") {
  const GridResult r = grid_result_from_losses(lr_grid({1e-3}), {2.5});
  CHECK(r.best_index == 0);
  CHECK(r.best().hp.lr_matrix == 1e-3);
}

TEST_CASE("NaN losses are treated as +inf and never selected") {
  const GridResult r = grid_result_from_losses(
      lr_grid({1e-3, 1e-2, 1e-1}), {5.0, std::nan(""), 6.0});
  CHECK(r.best().hp.lr_matrix == 1e-3);
  CHECK(r.points[1].diverged);
}

TEST_CASE("all-divergent grids raise a no-basin error") {
  CHECK_THROWS_WITH_AS(
      (void)grid_result_from_losses(lr_grid({1e-3, 1e-2}), {kInf, std::nan("")}),
      doctest::Contains("no basin found"), SpecError);
}

TEST_CASE("ties break toward the smaller learning rate") {
  const GridResult r = grid_result_from_losses(lr_grid({1e-3, 1e-2, 1e-1}), {4.0, 4.0, 4.0});
  CHECK(r.best().hp.lr_matrix == 1e-3);
}

TEST_CASE("argmin is invariant to positive scaling of the losses") {
  std::vector<double> scaled = kGpt12Losses;
  for (auto& l : scaled) l *= 17.0;
  const GridResult a = grid_result_from_losses(lr_grid(kGpt12Lrs), kGpt12Losses);
  const GridResult b = grid_result_from_losses(lr_grid(kGpt12Lrs), scaled);
  CHECK(a.best_index == b.best_index);
}

TEST_CASE("grid search issues exactly one run per point") {
  HpGrid g = lr_grid({1e-3, 1e-2});
  g.init = {0.02, 0.05, 0.1};
  g.mult_output = {1.0, 5.0};
  CHECK(g.size() == 12);
  std::atomic<int> runs{0};
  const GridResult r = grid_search(g, [&](const MuHyperparams& hp, std::int64_t) {
    ++runs;
    RunRecord rec;
    rec.hp = hp;
    rec.final_loss = hp.lr_matrix + hp.init_matrix + hp.mult_output;
    return rec;
  });
  CHECK(runs.load() == 12);
  CHECK(r.points.size() == 12);
  // the smallest of every axis minimizes this synthetic objective
  CHECK(r.best().hp.lr_matrix == 1e-3);
  CHECK(r.best().hp.init_matrix == 0.02);
  CHECK(r.best().hp.mult_output == 1.0);
}

TEST_CASE("parallel grid search matches the serial result") {
  HpGrid g = lr_grid({1e-3, 3e-3, 1e-2, 3e-2, 1e-1});
  auto runner = [](const MuHyperparams& hp, std::int64_t i) {
    RunRecord rec;
    rec.hp = hp;
    rec.final_loss = std::abs(std::log(hp.lr_matrix / 3e-3)) + static_cast<double>(i % 2) * 0.01;
    return rec;
  };
  const GridResult serial = grid_search(g, runner, 1);
  const GridResult parallel = grid_search(g, runner, 4);
  CHECK(serial.best_index == parallel.best_index);
  for (std::size_t i = 0; i < serial.points.size(); ++i)
    CHECK(serial.points[i].final_loss == parallel.points[i].final_loss);
}

TEST_CASE("basin membership at tolerance 0, 2.0, and infinity") {
  const GridResult r = grid_result_from_losses(lr_grid(kGpt12Lrs), kGpt12Losses);
  CHECK(basin_members(r, 0.0) == std::vector<std::int64_t>{4});
  // 5.57 <= 3.74 + 2.0; every other loss exceeds 5.74
  CHECK(basin_members(r, 2.0) == std::vector<std::int64_t>{3, 4});
  CHECK(basin_members(r, kInf).size() == kGpt12Losses.size());
}

TEST_CASE("basin membership is monotone in the tolerance") {
  Rng rng(55);
  std::vector<double> losses;
  for (int i = 0; i < 8; ++i) losses.push_back(2.0 + 3.0 * rng.next_double());
  const GridResult r = grid_result_from_losses(lr_grid(kGpt12Lrs), losses);
  std::size_t prev = 0;
  for (double tol : {0.0, 0.1, 0.5, 1.0, 2.0, 10.0}) {
    const auto members = basin_members(r, tol);
    CHECK(members.size() >= prev);
    prev = members.size();
  }
}

TEST_CASE("basin averaging per width") {
  auto rec = [](std::int64_t width, double loss, bool diverged = false) {
    RunRecord r;
    r.width = width;
    r.final_loss = loss;
    r.diverged = diverged;
    r.label = "w" + std::to_string(width);
    return r;
  };
  SUBCASE("one run per width is the identity") {
    const BasinAverage avg = basin_average_losses({rec(64, 2.0), rec(128, 1.5)});
    CHECK(avg.mean_loss_by_width.at(64) == 2.0);
    CHECK(avg.mean_loss_by_width.at(128) == 1.5);
  }
  SUBCASE("losses {2.0, 2.2} average to 2.1") {
    const BasinAverage avg = basin_average_losses({rec(64, 2.0), rec(64, 2.2)});
    CHECK(avg.mean_loss_by_width.at(64) == doctest::Approx(2.1).epsilon(1e-15));
  }
  SUBCASE("divergent runs are excluded and flagged") {
    const BasinAverage avg = basin_average_losses({rec(64, 2.0), rec(64, kInf, true)});
    CHECK(avg.mean_loss_by_width.at(64) == 2.0);
    REQUIRE(avg.excluded.size() == 1);
    CHECK(avg.excluded[0].find("64") != std::string::npos);
  }
  SUBCASE("a width with no finite run is an error naming the width") {
    CHECK_THROWS_WITH_AS((void)basin_average_losses({rec(64, 2.0), rec(128, kInf, true)}),
                         doctest::Contains("128"), SpecError);
  }
}

TEST_CASE("grid validation rejects empty and non-positive axes") {
  HpGrid g;
  CHECK_THROWS_AS(g.validate(), SpecError);
  g.lr = {1e-3, -1.0};
  CHECK_THROWS_AS(g.validate(), SpecError);
  CHECK_THROWS_AS(
      (void)grid_result_from_losses(lr_grid({1e-3, 1e-2}), {1.0}), SpecError);
}

}  // TEST_SUITE
