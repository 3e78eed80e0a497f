#include "samplepilot/nets.hpp"

#include <algorithm>
#include <cmath>

#include "samplepilot/error.hpp"
#include "samplepilot/rng.hpp"

namespace samplepilot {

Mlp::Mlp(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed)
    : in_(in), hidden_(hidden), out_(out) {
  if (in == 0 || hidden == 0 || out == 0) throw Error(ErrorCode::InvalidArgument, "network sizes must be positive");
  params_.reserve(hidden * in + hidden + hidden * hidden + hidden + out * hidden + out);
  Rng rng(seed);
  auto layer = [&](std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < fan_out * fan_in + fan_out; ++i) params_.push_back((2.0 * rng.uniform() - 1.0) * bound);
  };
  layer(in, hidden);
  layer(hidden, hidden);
  layer(hidden, out);
}

namespace {

// y = W x + b with W stored row-major at p.
void affine(const double* p, std::size_t in, std::size_t out, std::span<const double> x, std::vector<double>& y) {
  y.assign(out, 0.0);
  const double* b = p + out * in;
  for (std::size_t o = 0; o < out; ++o) {
    const double* w = p + o * in;
    double s = b[o];
    for (std::size_t i = 0; i < in; ++i) s += w[i] * x[i];
    y[o] = s;
  }
}

}  // namespace

void Mlp::forward(std::span<const double> x, Cache& c) const {
  if (x.size() != in_) throw Error(ErrorCode::InvalidArgument, "network input width mismatch");
  c.x.assign(x.begin(), x.end());
  const double* p = params_.data();
  affine(p, in_, hidden_, c.x, c.h1);
  for (double& v : c.h1) v = std::tanh(v);
  p += hidden_ * in_ + hidden_;
  affine(p, hidden_, hidden_, c.h1, c.h2);
  for (double& v : c.h2) v = std::tanh(v);
  p += hidden_ * hidden_ + hidden_;
  affine(p, hidden_, out_, c.h2, c.y);
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  Cache c;
  forward(x, c);
  return c.y;
}

void Mlp::backward(const Cache& c, std::span<const double> dy, std::vector<double>& grad) const {
  grad.resize(params_.size(), 0.0);
  const std::size_t o1 = 0, o2 = hidden_ * in_ + hidden_, o3 = o2 + hidden_ * hidden_ + hidden_;
  const double* w3 = params_.data() + o3;
  const double* w2 = params_.data() + o2;

  std::vector<double> dh2(hidden_, 0.0), dh1(hidden_, 0.0);
  for (std::size_t o = 0; o < out_; ++o) {
    double* g = grad.data() + o3 + o * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) {
      g[i] += dy[o] * c.h2[i];
      dh2[i] += dy[o] * w3[o * hidden_ + i];
    }
    grad[o3 + out_ * hidden_ + o] += dy[o];
  }
  for (std::size_t i = 0; i < hidden_; ++i) dh2[i] *= 1.0 - c.h2[i] * c.h2[i];
  for (std::size_t o = 0; o < hidden_; ++o) {
    double* g = grad.data() + o2 + o * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) {
      g[i] += dh2[o] * c.h1[i];
      dh1[i] += dh2[o] * w2[o * hidden_ + i];
    }
    grad[o2 + hidden_ * hidden_ + o] += dh2[o];
  }
  for (std::size_t i = 0; i < hidden_; ++i) dh1[i] *= 1.0 - c.h1[i] * c.h1[i];
  for (std::size_t o = 0; o < hidden_; ++o) {
    double* g = grad.data() + o1 + o * in_;
    for (std::size_t i = 0; i < in_; ++i) g[i] += dh1[o] * c.x[i];
    grad[o1 + hidden_ * in_ + o] += dh1[o];
  }
}

nlohmann::json Mlp::to_json() const {
  return {{"in", in_}, {"hidden", hidden_}, {"out", out_}, {"params", params_}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp m;
  m.in_ = j.at("in").get<std::size_t>();
  m.hidden_ = j.at("hidden").get<std::size_t>();
  m.out_ = j.at("out").get<std::size_t>();
  m.params_ = j.at("params").get<std::vector<double>>();
  const std::size_t expect = m.hidden_ * m.in_ + m.hidden_ + m.hidden_ * m.hidden_ + m.hidden_ + m.out_ * m.hidden_ + m.out_;
  if (m.params_.size() != expect) throw Error(ErrorCode::InvalidConfig, "network parameter count mismatch");
  return m;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double top = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (double& v : p) total += (v = std::exp(v - top));
  for (double& v : p) v /= total;
  return p;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

void RmsProp::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
  if (square_avg.size() != params.size()) square_avg.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    square_avg[i] = alpha * square_avg[i] + (1.0 - alpha) * grad[i] * grad[i];
    params[i] -= lr * grad[i] / (std::sqrt(square_avg[i]) + eps);
  }
}

}  // namespace samplepilot
