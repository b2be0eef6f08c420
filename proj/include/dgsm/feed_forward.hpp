#pragma once

#include "dgsm/types.hpp"

#include <string>
#include <vector>

namespace dgsm {

/// Named slice of a flat parameter vector (weights are stored column-major, rows = fan_out).
struct ParameterSegment {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
};

using ParameterLayout = std::vector<ParameterSegment>;

enum class Activation { Identity, Tanh };

struct DenseSpec {
  Index fan_in = 0;
  Index fan_out = 0;
  Activation activation = Activation::Tanh;
};

/// Stack of dense layers whose weights live in an externally owned flat
/// vector starting at `offset`. Columns of the input matrix are independent
/// examples; forward/backward are exact and allocation-light.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::string name, std::vector<DenseSpec> layers, Index offset);

  Index offset() const { return offset_; }
  Index parameter_count() const { return count_; }
  Index input_dim() const { return layers_.front().fan_in; }
  Index output_dim() const { return layers_.back().fan_out; }

  void append_layout(ParameterLayout& layout) const;

  /// Glorot-uniform weights, zero biases.
  void initialize(Vector& params, Rng& rng) const;

  /// Zeroes the final layer (weights and bias).
  void zero_output_layer(Vector& params) const;

  struct Cache {
    std::vector<Matrix> inputs;  // input of each layer
    Matrix output;
  };

  Matrix forward(const Vector& params, const Matrix& input, Cache* cache = nullptr) const;

  /// Accumulates dLoss/dParams into `grad` and returns dLoss/dInput.
  Matrix backward(const Vector& params, const Cache& cache, const Matrix& d_output, Vector& grad) const;

 private:
  std::string name_;
  std::vector<DenseSpec> layers_;
  std::vector<Index> weight_offsets_;
  Index offset_ = 0;
  Index count_ = 0;
};

}  // namespace dgsm
