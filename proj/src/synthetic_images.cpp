#include "cupl/synthetic_images.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "cupl/error.hpp"

namespace cupl::fixture {

namespace {

class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : gen_(seed) {}

  double next() {
    if (spare_) {
      spare_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * std::numbers::pi * u2);
    spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 gen_;
  bool spare_ = false;
  double cached_ = 0.0;
};

}  // namespace

std::string synthetic_image_key(const std::string& label, std::size_t j) {
  std::string key = label;
  for (auto& c : key) {
    if (c == ' ' || c == '/' || c == ',') c = '_';
  }
  return key + (j < 10 ? "_0" : "_") + std::to_string(j);
}

SyntheticImages synthesize_images(const std::vector<WeightedPrototypes>& centers, const std::string& dataset_id,
                                  const SyntheticImageSpec& spec) {
  if (centers.empty() || !centers.front().set) throw Error(ErrorCode::EmptyInput, "no class centers given");
  const auto& first = *centers.front().set;
  for (const auto& c : centers) {
    if (!c.set || c.set->size() != first.size() || c.set->dim != first.dim) {
      throw Error(ErrorCode::DimMismatch, "class center sets disagree in size or dim");
    }
  }

  Gaussian noise(spec.seed);
  SyntheticImages out;
  out.manifest.dataset_id = dataset_id;
  for (std::size_t cls = 0; cls < first.size(); ++cls) {
    std::vector<double> center(first.dim, 0.0);
    for (const auto& c : centers) {
      const auto& v = c.set->prototypes[cls].vector.components;
      for (std::size_t i = 0; i < first.dim; ++i) center[i] += c.weight * static_cast<double>(v[i]);
    }
    for (std::size_t j = 0; j < spec.per_class; ++j) {
      std::vector<double> point(center);
      double norm_sq = 0.0;
      for (auto& x : point) {
        x += spec.sigma * noise.next();
        norm_sq += x * x;
      }
      const double norm = std::sqrt(norm_sq);
      std::vector<float> components(first.dim);
      for (std::size_t i = 0; i < first.dim; ++i) components[i] = static_cast<float>(point[i] / norm);
      const auto key = synthetic_image_key(first.prototypes[cls].class_label, j);
      out.images.insert(key, EmbeddingVector(std::move(components)));
      out.manifest.items.push_back({key, cls});
    }
  }
  return out;
}

}  // namespace cupl::fixture
