#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cvote/error.hpp"

namespace cvote {

// Stored feature and weight vectors are 32-bit. Anything accumulated
// (means, losses, gradients, fit sums) is carried in 64-bit.
using Vec32 = std::vector<float>;
using Vec64 = std::vector<double>;

// SplitMix64 stream with Box-Muller normals.
//
// The integer sequence is fully specified by the seed (Steele, Lea & Flood,
// "Fast splittable pseudorandom number generators"), so uniform draws,
// shuffles and index sampling are bitwise portable. Normal draws additionally
// depend on the platform's log/sqrt/cos/sin.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform01();
  // Uniform integer on [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal draw.
  double gaussian();

  // Deterministic child stream; used to give independent consumers
  // (data order, init, augmentation) their own sequences.
  static RngStream derive(std::uint64_t seed, std::uint64_t stream_id);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

void check_same_dim(std::size_t a, std::size_t b, const char* where);
void check_finite(std::span<const float> v, const char* where);

double euclidean_distance(std::span<const float> a, std::span<const float> b);
// Distance from a stored feature to a 64-bit running mean.
double euclidean_distance(std::span<const float> a, std::span<const double> b);
double squared_distance(std::span<const float> a, std::span<const double> b);

double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> a);

Vec64 softmax(std::span<const double> logits);

struct XentResult {
  double loss;
  Vec64 grad;  // softmax(logits) - onehot(target)
};
XentResult softmax_xent_grad(std::span<const double> logits, std::size_t target);

// Element j ~ N(0, sigma[j]); zero sigma gives exactly 0. One normal draw is
// consumed per element regardless of sigma.
Vec32 gaussian_sample(RngStream& rng, std::span<const double> sigma);
Vec32 gaussian_sample(RngStream& rng, std::span<const float> sigma);

struct LineFit {
  double slope;
  double intercept;
};
LineFit least_squares_line(std::span<const std::pair<double, double>> points);

}  // namespace cvote
