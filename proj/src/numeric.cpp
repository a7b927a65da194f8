#include "cvote/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace cvote {

std::uint64_t RngStream::next_u64() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double RngStream::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) fail(ErrorKind::numeric, "uniform_index: empty range");
  // Rejection on the biased tail keeps the draw exactly uniform.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t x = next_u64();
    if (x >= threshold) return x % n;
  }
}

double RngStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

RngStream RngStream::derive(std::uint64_t seed, std::uint64_t stream_id) {
  RngStream mixer(seed ^ (stream_id * 0xd1b54a32d192ed03ULL));
  mixer.next_u64();
  return RngStream(mixer.next_u64());
}

void check_same_dim(std::size_t a, std::size_t b, const char* where) {
  if (a != b) {
    fail(ErrorKind::dimension,
         std::string(where) + ": dimension mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

void check_finite(std::span<const float> v, const char* where) {
  for (float x : v) {
    if (!std::isfinite(x)) fail(ErrorKind::numeric, std::string(where) + ": non-finite value");
  }
}

double euclidean_distance(std::span<const float> a, std::span<const float> b) {
  check_same_dim(a.size(), b.size(), "euclidean_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

double squared_distance(std::span<const float> a, std::span<const double> b) {
  check_same_dim(a.size(), b.size(), "squared_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

double euclidean_distance(std::span<const float> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

double dot(std::span<const float> a, std::span<const float> b) {
  check_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

double l2_norm(std::span<const float> a) {
  double acc = 0.0;
  for (float x : a) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

Vec64 softmax(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorKind::numeric, "softmax: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec64 p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

XentResult softmax_xent_grad(std::span<const double> logits, std::size_t target) {
  if (logits.empty()) fail(ErrorKind::numeric, "softmax_xent_grad: empty logits");
  if (target >= logits.size()) fail(ErrorKind::numeric, "softmax_xent_grad: target out of range");
  const auto top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  const double mx = logits[top];
  // log-sum-exp as mx + log1p(sum of the non-maximal terms), which keeps
  // tiny losses (confident correct predictions) accurate.
  double rest = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (i != top) rest += std::exp(logits[i] - mx);
  }
  const double lse = mx + std::log1p(rest);
  XentResult r;
  r.loss = lse - logits[target];
  r.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) r.grad[i] = std::exp(logits[i] - lse);
  r.grad[target] -= 1.0;
  return r;
}

Vec32 gaussian_sample(RngStream& rng, std::span<const double> sigma) {
  Vec32 out(sigma.size());
  for (std::size_t j = 0; j < sigma.size(); ++j) {
    if (!(sigma[j] >= 0.0)) fail(ErrorKind::numeric, "gaussian_sample: negative or NaN sigma");
    const double z = rng.gaussian();
    out[j] = sigma[j] == 0.0 ? 0.0f : static_cast<float>(sigma[j] * z);
  }
  return out;
}

Vec32 gaussian_sample(RngStream& rng, std::span<const float> sigma) {
  Vec64 wide(sigma.begin(), sigma.end());
  return gaussian_sample(rng, wide);
}

LineFit least_squares_line(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) fail(ErrorKind::numeric, "least_squares_line: need at least 2 points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) fail(ErrorKind::numeric, "least_squares_line: singular fit (all x equal)");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace cvote
