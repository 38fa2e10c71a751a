#pragma once

#include <random>
#include <vector>

#include "stablenorm/metric.hpp"

namespace testing {

using namespace stablenorm;

inline std::vector<MediumSpec> gallery() {
  MediumSpec ell1 = MediumSpec::homogeneous_medium(1.0, BaseNormKind::ell1);
  MediumSpec ellipse = MediumSpec::smooth_trig_medium(1.5, 0.4);
  ellipse.base.kind = BaseNormKind::ellipse;
  ellipse.base.axes = {1.0, 2.0, 1.0};
  std::vector<double> samples(16);
  for (std::size_t k = 0; k < samples.size(); ++k) samples[k] = 1.0 + 0.1 * double((5 * k) % 16);
  return {MediumSpec::homogeneous_medium(),
          MediumSpec::laminate_medium(1.0, 2.0),
          MediumSpec::laminate_medium(1.0, 3.0, 0.25, 0),
          MediumSpec::checkerboard_medium(1.0, 2.0, 1.0 / 32.0),
          MediumSpec::smooth_trig_medium(1.5, 0.5),
          MediumSpec::sampled_medium(4, samples),
          ell1,
          ellipse};
}

struct Sampler {
  std::mt19937_64 rng;
  explicit Sampler(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  Vec point() { return vec2(uniform(0.0, 1.0), uniform(0.0, 1.0)); }
  Vec vector(double scale = 3.0) { return vec2(uniform(-scale, scale), uniform(-scale, scale)); }
};

}  // namespace testing
