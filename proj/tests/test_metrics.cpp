#include <doctest.h>

#include <cmath>

#include "crossnet/metrics.hpp"
#include "crossnet/tensor.hpp"

using namespace crossnet;

namespace {

Mask random_mask(int w, int h, Rng& rng, real density) {
  Mask m = Mask::filled(w, h, false);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (rng.uniform() < density) m.set(r, c, true);
  return m;
}

/// Independent oracle: boundary via the same adjacency rule, distances as
/// plain double loops with per-pair square roots.
double brute_force_hausdorff(const Mask& a, const Mask& b) {
  auto boundary = [](const Mask& m) {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < m.height; ++r)
      for (int c = 0; c < m.width; ++c) {
        if (!m.at(r, c)) continue;
        bool edge = r == 0 || r == m.height - 1 || c == 0 || c == m.width - 1;
        if (!edge) {
          edge = !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1);
        }
        if (edge) out.push_back({r, c});
      }
    return out;
  };
  const auto ba = boundary(a), bb = boundary(b);
  double worst = 0;
  for (int dir = 0; dir < 2; ++dir) {
    const auto& from = dir == 0 ? ba : bb;
    const auto& to = dir == 0 ? bb : ba;
    for (const auto& [pr, pc] : from) {
      double best = 1e300;
      for (const auto& [qr, qc] : to) {
        best = std::min(best, std::sqrt(double((pr - qr) * (pr - qr) + (pc - qc) * (pc - qc))));
      }
      worst = std::max(worst, best);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("dsc hand values") {
  Mask a = Mask::filled(4, 4, false);
  a.set(0, 0, true);
  a.set(0, 1, true);
  a.set(1, 0, true);
  a.set(1, 1, true);
  CHECK(dsc(a, a) == 1);

  Mask b = Mask::filled(4, 4, false);
  b.set(3, 3, true);
  CHECK(dsc(a, b) == 0);

  Mask c = Mask::filled(4, 4, false);
  c.set(1, 0, true);
  c.set(1, 1, true);
  c.set(2, 0, true);
  c.set(2, 1, true);
  CHECK(dsc(a, c) == doctest::Approx(0.5));  // |P|=|G|=4, two shared

  CHECK(dsc(Mask::filled(4, 4, false), Mask::filled(4, 4, false)) == 1);
  CHECK_THROWS_AS(dsc(a, Mask::filled(3, 3, false)), std::invalid_argument);
}

TEST_CASE("dsc is symmetric and 1 only for equal masks") {
  Rng rng(17);
  for (int it = 0; it < 20; ++it) {
    const Mask a = random_mask(12, 12, rng, real(0.4));
    const Mask b = random_mask(12, 12, rng, real(0.4));
    CHECK(dsc(a, b) == dsc(b, a));
    if (a.count() > 0 && dsc(a, b) == 1) CHECK(a.data == b.data);
  }
}

TEST_CASE("hausdorff hand values") {
  Mask a = Mask::filled(8, 8, false);
  a.set(0, 0, true);
  Mask b = Mask::filled(8, 8, false);
  b.set(3, 4, true);
  CHECK(*hausdorff(a, b) == doctest::Approx(5));
  CHECK(*hausdorff(a, a) == 0);
  CHECK_FALSE(hausdorff(a, Mask::filled(8, 8, false)).has_value());
  CHECK_FALSE(hausdorff(Mask::filled(8, 8, false), b).has_value());
}

TEST_CASE("hausdorff matches the brute-force oracle on random pairs") {
  Rng rng(2718);
  int done = 0;
  while (done < 50) {
    const Mask a = random_mask(32, 32, rng, real(0.2));
    const Mask b = random_mask(32, 32, rng, real(0.2));
    if (a.count() == 0 || b.count() == 0) continue;
    ++done;
    const auto hd = hausdorff(a, b);
    REQUIRE(hd.has_value());
    CHECK(std::abs(static_cast<double>(*hd) - brute_force_hausdorff(a, b)) <= 1e-9);
    CHECK(*hausdorff(b, a) == *hd);
  }
}

TEST_CASE("over_under hand values") {
  Mask g = Mask::filled(6, 6, false);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) g.set(r, c, true);

  SUBCASE("identical masks") {
    const auto [o, u] = over_under(g, g);
    CHECK(o == 0);
    CHECK(u == 0);
  }
  SUBCASE("prediction doubles the truth") {
    Mask p = g;
    for (int r = 2; r < 4; ++r)
      for (int c = 0; c < 2; ++c) p.set(r, c, true);
    const auto [o, u] = over_under(p, g);
    CHECK(o == doctest::Approx(0.5));
    CHECK(u == 0);
  }
  SUBCASE("empty prediction is a total miss") {
    const auto [o, u] = over_under(Mask::filled(6, 6, false), g);
    CHECK(o == 0);
    CHECK(u == 1);
  }
  SUBCASE("empty ground truth rejected") {
    CHECK_THROWS_AS(over_under(g, Mask::filled(6, 6, false)), std::invalid_argument);
  }
}

TEST_CASE("over_under stays within bounds") {
  Rng rng(5);
  for (int it = 0; it < 30; ++it) {
    const Mask p = random_mask(16, 16, rng, real(0.3));
    Mask g = random_mask(16, 16, rng, real(0.3));
    g.set(8, 8, true);  // keep gt non-empty
    const auto [o, u] = over_under(p, g);
    CHECK(o >= 0);
    CHECK(u >= 0);
    CHECK(o <= 1);
    CHECK(u <= 1);
    CHECK(o + u <= 1);
  }
}

TEST_CASE("evaluate_masks assembles a full report") {
  Mask g = Mask::filled(8, 8, false);
  for (int r = 2; r < 6; ++r)
    for (int c = 2; c < 6; ++c) g.set(r, c, true);
  const MetricsReport rep = evaluate_masks(g, g);
  CHECK(rep.dsc == 1);
  CHECK(*rep.hd == 0);
  CHECK(rep.or_ratio == 0);
  CHECK(rep.ur_ratio == 0);
}
