#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace samplepilot {

// Fully connected tanh network: in -> hidden -> hidden -> out (linear).
// Parameters live in one flat vector: W1, b1, W2, b2, W3, b3 (row-major).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed);

  struct Cache {
    std::vector<double> x, h1, h2, y;
  };

  std::size_t inputs() const noexcept { return in_; }
  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t outputs() const noexcept { return out_; }
  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }

  std::vector<double> forward(std::span<const double> x) const;
  void forward(std::span<const double> x, Cache& cache) const;
  // Adds d(loss)/d(params) for one input to `grad`, given d(loss)/d(output).
  void backward(const Cache& cache, std::span<const double> dy, std::vector<double>& grad) const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  std::size_t in_ = 0, hidden_ = 0, out_ = 0;
  std::vector<double> params_;
};

std::vector<double> softmax(std::span<const double> logits);
double entropy(std::span<const double> probs);

struct RmsProp {
  double alpha = 0.99;
  double eps = 1e-5;
  std::vector<double> square_avg;

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr);
};

}  // namespace samplepilot
