#include "vtrack/similarity.hpp"

#include <cmath>
#include <map>

#include "doctest.h"
#include "vtrack/rng.hpp"

using namespace vtrack;

namespace {

Volume cube(int n, float fill = 0.0f) {
  Volume v;
  v.dims = {n, n, n};
  v.spacing = Vec3(1, 1, 1);
  v.data.assign(v.voxel_count(), fill);
  return v;
}

Volume random_cube(int n, std::uint64_t seed) {
  Volume v = cube(n);
  Rng rng(seed);
  for (auto& x : v.data) x = static_cast<float>(rng.next_double());
  return v;
}

EvaluationDomain full_domain(const Volume& v) {
  const Vec3 lo = v.world_from_index(0, 0, 0) - Vec3::Constant(0.5);
  const Vec3 hi = v.world_from_index(v.dims[0] - 1, v.dims[1] - 1, v.dims[2] - 1) +
                  Vec3::Constant(0.5);
  return make_lattice_domain(v, lo, hi, "test full domain");
}

// Independent NMI oracle built on a map-based joint histogram.
double nmi_oracle(const std::vector<std::pair<float, float>>& pairs, int bins) {
  float min_x = pairs[0].first, max_x = pairs[0].first;
  float min_y = pairs[0].second, max_y = pairs[0].second;
  for (const auto& [x, y] : pairs) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> px, py;
  for (const auto& [x, y] : pairs) {
    int bx = static_cast<int>((x - min_x) / (max_x - min_x) * bins);
    int by = static_cast<int>((y - min_y) / (max_y - min_y) * bins);
    bx = std::min(bx, bins - 1);
    by = std::min(by, bins - 1);
    joint[{bx, by}] += 1.0;
    px[bx] += 1.0;
    py[by] += 1.0;
  }
  const double n = static_cast<double>(pairs.size());
  double hx = 0, hy = 0, hxy = 0;
  for (const auto& [b, c] : px) hx -= c / n * std::log(c / n);
  for (const auto& [b, c] : py) hy -= c / n * std::log(c / n);
  for (const auto& [b, c] : joint) hxy -= c / n * std::log(c / n);
  return (hx + hy) / hxy;
}

}  // namespace

TEST_CASE("pearson cc") {
  const Volume ref = random_cube(10, 301);
  const EvaluationDomain domain = full_domain(ref);

  SUBCASE("self correlation is one") {
    const auto cc = pearson_cc(domain, ref, RigidTransform::identity(), 0.25);
    REQUIRE(cc.has_value());
    CHECK(*cc == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("positive affine maps leave cc at one, negation flips it") {
    Volume scaled = ref;
    for (auto& x : scaled.data) x = 2.0f * x + 0.25f;
    auto cc = pearson_cc(domain, scaled, RigidTransform::identity(), 0.25);
    REQUIRE(cc.has_value());
    CHECK(*cc == doctest::Approx(1.0).epsilon(1e-9));

    Volume negated = ref;
    for (auto& x : negated.data) x = -x;
    cc = pearson_cc(domain, negated, RigidTransform::identity(), 0.25);
    REQUIRE(cc.has_value());
    CHECK(*cc == doctest::Approx(-1.0).epsilon(1e-9));
  }

  SUBCASE("affine invariance against the unscaled value") {
    const Volume other = random_cube(10, 302);
    const auto base = pearson_cc(domain, other, RigidTransform::identity(), 0.25);
    REQUIRE(base.has_value());

    // Power-of-two scaling commutes with every rounding step: bit exact.
    Volume scaled = other;
    for (auto& x : scaled.data) x = 4.0f * x;
    const auto after_scale = pearson_cc(domain, scaled, RigidTransform::identity(), 0.25);
    REQUIRE(after_scale.has_value());
    CHECK(*after_scale == *base);

    // General positive affine maps only perturb through f32 rounding.
    Volume mapped = other;
    for (auto& x : mapped.data) x = 1.7f * x + 3.0f;
    const auto after = pearson_cc(domain, mapped, RigidTransform::identity(), 0.25);
    REQUIRE(after.has_value());
    CHECK(std::abs(*after - *base) < 1e-6);
  }

  SUBCASE("constant moving image has no defined correlation") {
    const Volume flat = cube(10, 3.0f);
    CHECK_FALSE(pearson_cc(domain, flat, RigidTransform::identity(), 0.25).has_value());
  }

  SUBCASE("overlap rule") {
    RigidTransform far;
    far.translation = Vec3(100, 0, 0);
    CHECK_FALSE(pearson_cc(domain, ref, far, 0.25).has_value());

    // Partial overlap: defined iff the threshold admits it, and lowering
    // min_overlap never turns a defined value absent.
    RigidTransform shift;
    shift.translation = Vec3(6.0, 0, 0);  // 4 of 10 columns remain
    const auto strict = pearson_cc(domain, ref, shift, 0.5);
    const auto loose = pearson_cc(domain, ref, shift, 0.1);
    CHECK_FALSE(strict.has_value());
    CHECK(loose.has_value());
  }

  SUBCASE("determinism is bit exact") {
    RigidTransform t;
    t.rotation =
        Eigen::AngleAxisd(0.37, Vec3(1, 1, 0).normalized()).toRotationMatrix();
    t.translation = Vec3(0.3, -0.7, 0.2);
    const Volume moving = random_cube(10, 303);
    const auto a = pearson_cc(domain, moving, t, 0.1);
    const auto b = pearson_cc(domain, moving, t, 0.1);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(*a == *b);
  }
}

TEST_CASE("attribute energy") {
  const Volume ref = random_cube(12, 311);
  const Volume ref_grad = gradient_magnitude(ref);
  const EvaluationDomain dom_int = full_domain(ref);
  const EvaluationDomain dom_grad = full_domain(ref_grad);

  SUBCASE("self alignment scores zero") {
    const auto e = attribute_energy(dom_int, dom_grad, ref, ref_grad,
                                    RigidTransform::identity(), 0.25);
    REQUIRE(e.has_value());
    CHECK(*e == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(*e >= 0.0);
  }

  SUBCASE("negated moving image is a documented zero of the energy") {
    Volume negated = ref;
    for (auto& x : negated.data) x = -x;
    const Volume negated_grad = gradient_magnitude(negated);
    const auto e = attribute_energy(dom_int, dom_grad, negated, negated_grad,
                                    RigidTransform::identity(), 0.25);
    REQUIRE(e.has_value());
    CHECK(std::abs(*e) < 1e-6);
  }

  SUBCASE("decorrelated noise scores near one") {
    // Interior domain: the one-sided boundary stencils brighten the faces
    // of both gradient fields the same way, which would correlate them.
    const Vec3 lo = Vec3::Constant(0.5), hi = Vec3::Constant(14.5);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Volume a = random_cube(16, 7000 + seed);
      const Volume b = random_cube(16, 9000 + seed);
      const Volume a_grad = gradient_magnitude(a);
      const Volume b_grad = gradient_magnitude(b);
      const auto e = attribute_energy(make_lattice_domain(a, lo, hi, "int"),
                                      make_lattice_domain(a_grad, lo, hi, "grad"), b,
                                      b_grad, RigidTransform::identity(), 0.25);
      REQUIRE(e.has_value());
      CHECK(std::abs(*e - 1.0) <= 0.2);
    }
  }

  SUBCASE("invariant under positive affine intensity maps of the moving image") {
    const Volume moving = random_cube(12, 312);
    const Volume moving_grad = gradient_magnitude(moving);
    RigidTransform t;
    t.translation = Vec3(0.4, 0.1, -0.3);
    const auto base =
        attribute_energy(dom_int, dom_grad, moving, moving_grad, t, 0.25);

    Volume mapped = moving;
    for (auto& x : mapped.data) x = 2.0f * x + 4.0f;
    const Volume mapped_grad = gradient_magnitude(mapped);
    const auto after =
        attribute_energy(dom_int, dom_grad, mapped, mapped_grad, t, 0.25);
    REQUIRE(base.has_value());
    REQUIRE(after.has_value());
    CHECK(std::abs(*after - *base) <= 1e-9);
  }
}

TEST_CASE("nmi") {
  SUBCASE("self alignment maximizes over a translation sweep") {
    const Volume ref = random_cube(12, 321);
    const EvaluationDomain domain = full_domain(ref);
    const auto self = nmi(domain, ref, RigidTransform::identity(), 16, 0.1);
    REQUIRE(self.has_value());
    for (double dx : {-3.0, -1.5, 1.0, 2.5, 4.0}) {
      RigidTransform t;
      t.translation = Vec3(dx, 0.5 * dx, 0);
      const auto other = nmi(domain, ref, t, 16, 0.1);
      if (other) CHECK(*other < *self);
    }
  }

  SUBCASE("independent noise sits at the finite-sample floor above one") {
    // 10^4 samples, bins = 64, fixed seed; the bias floor is about
    // (bins-1)^2 / (2 n) nats spread over ~2 ln bins of entropy.
    Volume a = cube(22), b = cube(22);
    Rng rng(322);
    for (auto& x : a.data) x = static_cast<float>(rng.next_double());
    for (auto& x : b.data) x = static_cast<float>(rng.next_double());
    const EvaluationDomain domain = full_domain(a);
    const auto got = nmi(domain, b, RigidTransform::identity(), 64, 0.25);
    REQUIRE(got.has_value());

    std::vector<std::pair<float, float>> pairs;
    for (std::size_t i = 0; i < a.data.size(); ++i) pairs.push_back({a.data[i], b.data[i]});
    CHECK(*got == doctest::Approx(nmi_oracle(pairs, 64)).epsilon(1e-12));
    CHECK(std::abs(*got - 1.0) < 0.05);
  }

  SUBCASE("bin-preserving monotone maps leave nmi unchanged") {
    // Values at bin centers k + 0.5 with anchors 0 and 64 pinned; the map
    // k+0.5 -> k+0.3 (fixing the anchors) is monotone and keeps every
    // value's bin index.
    Volume a = cube(12), b = cube(12);
    Rng rng(323);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      a.data[i] = static_cast<float>(rng.next_u64() % 64) + 0.5f;
      b.data[i] = static_cast<float>(rng.next_u64() % 64) + 0.5f;
    }
    a.data[0] = 0.0f;
    a.data[1] = 64.0f;
    b.data[0] = 0.0f;
    b.data[1] = 64.0f;

    const auto map_value = [](float v) {
      if (v == 0.0f || v == 64.0f) return v;
      return std::floor(v) + 0.3f;
    };
    Volume am = a, bm = b;
    for (auto& x : am.data) x = map_value(x);
    for (auto& x : bm.data) x = map_value(x);

    const auto before = nmi(full_domain(a), b, RigidTransform::identity(), 64, 0.25);
    const auto after = nmi(full_domain(am), bm, RigidTransform::identity(), 64, 0.25);
    REQUIRE(before.has_value());
    REQUIRE(after.has_value());
    CHECK(*after == doctest::Approx(*before).epsilon(1e-9));
  }
}

TEST_CASE("ssd") {
  const Volume ref = random_cube(10, 331);
  const EvaluationDomain domain = full_domain(ref);

  SUBCASE("identical images score zero") {
    const auto v = ssd(domain, ref, RigidTransform::identity(), 0.25);
    REQUIRE(v.has_value());
    CHECK(*v == doctest::Approx(0.0));
  }

  SUBCASE("constant offset squares") {
    Volume shifted = ref;
    for (auto& x : shifted.data) x += 5.0f;
    const auto v = ssd(domain, shifted, RigidTransform::identity(), 0.25);
    REQUIRE(v.has_value());
    CHECK(*v == doctest::Approx(25.0).epsilon(1e-9));
  }

  SUBCASE("matches direct re-summation") {
    const Volume moving = random_cube(10, 332);
    const auto v = ssd(domain, moving, RigidTransform::identity(), 0.25);
    REQUIRE(v.has_value());
    double expected = 0.0;
    for (std::size_t i = 0; i < ref.data.size(); ++i) {
      const double d = static_cast<double>(ref.data[i]) - moving.data[i];
      expected += d * d;
    }
    expected /= static_cast<double>(ref.data.size());
    CHECK(*v == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("overlap stats invariants") {
  OverlapStats stats;
  stats.accumulate(1.0, 2.0);
  stats.accumulate(3.0, -1.0);
  stats.accumulate(2.0, 0.5);
  CHECK(stats.n == 3);
  CHECK(stats.variance_x() >= -1e-9);
  CHECK(stats.variance_y() >= -1e-9);
}
