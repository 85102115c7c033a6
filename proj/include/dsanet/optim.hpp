#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsanet/tensor.hpp"

namespace dsanet::ad {

struct Parameter {
  std::string name;
  Tensor value;
  // Clamped elementwise to >= 0 after every step (decoder endmembers).
  bool nonnegative = false;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Parameter> params, AdamOptions options = {});

  // Applies one update from the accumulated gradients, zeroes them, and
  // clamps nonnegative parameters.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Parameter> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace dsanet::ad
