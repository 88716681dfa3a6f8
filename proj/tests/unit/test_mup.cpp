#include <doctest.h>

#include <cmath>

#include "muscale/mup.hpp"
#include "muscale/rng.hpp"

using namespace muscale;

namespace {

MuHyperparams random_hp(Rng& rng) {
  MuHyperparams hp;
  hp.lr_matrix = std::exp(-8.0 + 6.0 * rng.next_double());
  hp.lr_other = std::exp(-8.0 + 6.0 * rng.next_double());
  hp.init_matrix = std::exp(-5.0 + 4.0 * rng.next_double());
  hp.init_other = std::exp(-5.0 + 4.0 * rng.next_double());
  hp.mult_output = 0.25 + 8.0 * rng.next_double();
  hp.mult_other = 0.25 + 4.0 * rng.next_double();
  hp.base_width = 256.0;
  return hp;
}

bool close(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_SUITE("mup") {

TEST_CASE("transfer at r=1 is the identity") {
  MuHyperparams hp;
  hp.lr_matrix = 3e-2;
  hp.lr_other = 3e-2;
  hp.init_matrix = 0.05;
  hp.mult_output = 5.0;
  hp.base_width = 256;
  const MuHyperparams out = transfer(hp, WidthRatio(1, 1));
  CHECK(out.lr_matrix == hp.lr_matrix);
  CHECK(out.lr_other == hp.lr_other);
  CHECK(out.init_matrix == hp.init_matrix);
  CHECK(out.init_other == hp.init_other);
  CHECK(out.mult_output == hp.mult_output);
  CHECK(out.mult_other == hp.mult_other);
  CHECK(out.base_width == hp.base_width);
}

TEST_CASE("the 12-layer optimum transfers 256 -> 1024 as l/r") {
  MuHyperparams hp;
  hp.lr_matrix = 3e-2;
  hp.lr_other = 3e-2;
  const MuHyperparams out = transfer(hp, width_ratio(256, 1024));
  CHECK(out.lr_matrix == doctest::Approx(7.5e-3).epsilon(1e-15));
  CHECK(out.lr_other == 3e-2);
}

TEST_CASE("output multiplier scales as tau/r, other multiplier unchanged") {
  MuHyperparams hp;
  hp.mult_output = 5.0;
  hp.mult_other = 1.0;
  const MuHyperparams out = transfer(hp, WidthRatio(8, 1));
  CHECK(out.mult_output == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(out.mult_other == 1.0);
}

TEST_CASE("width_ratio is an exact rational") {
  CHECK(width_ratio(256, 8192) == WidthRatio(32, 1));
  CHECK(width_ratio(256, 256) == WidthRatio(1, 1));
  CHECK(width_ratio(256, 384).value() == 1.5);
  CHECK_THROWS_AS(width_ratio(0, 64), SpecError);
  CHECK_THROWS_AS(WidthRatio(-3, 2), SpecError);
}

TEST_CASE("variance mode divides variance by r; stddev mode divides std by sqrt r") {
  MuHyperparams hp;
  hp.init_matrix = 0.05;
  hp.init_scale = InitScale::stddev;
  const MuHyperparams out = transfer(hp, WidthRatio(4, 1));
  CHECK(out.init_matrix == doctest::Approx(0.025).epsilon(1e-15));
  CHECK(out.variance_matrix() == doctest::Approx(0.05 * 0.05 / 4.0).epsilon(1e-12));

  MuHyperparams hv;
  hv.init_matrix = 0.0025;
  hv.init_scale = InitScale::variance;
  const MuHyperparams outv = transfer(hv, WidthRatio(4, 1));
  CHECK(outv.init_matrix == doctest::Approx(0.000625).epsilon(1e-15));
  // both interpretations agree once mapped to the sampler variance
  CHECK(outv.variance_matrix() == doctest::Approx(out.variance_matrix()).epsilon(1e-12));
}

TEST_CASE("composition, inversion, and class separation over random pairs") {
  Rng rng(20240);
  for (int trial = 0; trial < 1000; ++trial) {
    MuHyperparams hp = random_hp(rng);
    if (trial % 2 == 0) hp.init_scale = InitScale::stddev;
    const WidthRatio r1(1 + static_cast<std::int64_t>(rng.next_below(64)),
                        1 + static_cast<std::int64_t>(rng.next_below(64)));
    const WidthRatio r2(1 + static_cast<std::int64_t>(rng.next_below(64)),
                        1 + static_cast<std::int64_t>(rng.next_below(64)));

    const MuHyperparams once = transfer(hp, r1 * r2);
    const MuHyperparams twice = transfer(transfer(hp, r1), r2);
    CHECK(close(once.lr_matrix, twice.lr_matrix));
    CHECK(close(once.init_matrix, twice.init_matrix));
    CHECK(close(once.mult_output, twice.mult_output));
    CHECK(close(once.base_width, twice.base_width));

    const MuHyperparams back = transfer(transfer(hp, r1), r1.inverse());
    CHECK(close(back.lr_matrix, hp.lr_matrix));
    CHECK(close(back.init_matrix, hp.init_matrix));
    CHECK(close(back.mult_output, hp.mult_output));

    // "others" fields are bit-unchanged for any r
    const MuHyperparams moved = transfer(hp, r1);
    CHECK(moved.lr_other == hp.lr_other);
    CHECK(moved.init_other == hp.init_other);
    CHECK(moved.mult_other == hp.mult_other);
  }
}

TEST_CASE("ratio products reduce exactly") {
  const WidthRatio a(3, 2), b(2, 3);
  CHECK(a * b == WidthRatio(1, 1));
  CHECK((width_ratio(256, 8192) * width_ratio(8192, 256)) == WidthRatio(1, 1));
}

TEST_CASE("validation rejects non-positive fields") {
  MuHyperparams hp;
  hp.lr_matrix = 0.0;
  CHECK_THROWS_AS(hp.validate(), SpecError);
  MuHyperparams hm;
  hm.mult_output = -1.0;
  CHECK_THROWS_AS(hm.validate(), SpecError);
}

}  // TEST_SUITE
