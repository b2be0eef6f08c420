#include "dgsm/feed_forward.hpp"

#include "dgsm/error.hpp"

#include <cmath>

namespace dgsm {

FeedForward::FeedForward(std::string name, std::vector<DenseSpec> layers, Index offset)
    : name_(std::move(name)), layers_(std::move(layers)), offset_(offset) {
  if (layers_.empty()) throw Error(ErrorCode::ShapeMismatch, name_ + ": no layers");
  Index cursor = offset_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.fan_in < 1 || l.fan_out < 1) throw Error(ErrorCode::ShapeMismatch, name_ + ": empty layer");
    if (i > 0 && layers_[i - 1].fan_out != l.fan_in)
      throw Error(ErrorCode::ShapeMismatch, name_ + ": layer widths do not chain");
    weight_offsets_.push_back(cursor);
    cursor += l.fan_in * l.fan_out + l.fan_out;
  }
  count_ = cursor - offset_;
}

void FeedForward::append_layout(ParameterLayout& layout) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const auto tag = name_ + "." + std::to_string(i);
    layout.push_back({tag + ".weight", weight_offsets_[i], l.fan_out, l.fan_in});
    layout.push_back({tag + ".bias", weight_offsets_[i] + l.fan_in * l.fan_out, l.fan_out, 1});
  }
}

void FeedForward::initialize(Vector& params, Rng& rng) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const double a = std::sqrt(6.0 / static_cast<double>(l.fan_in + l.fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    const Index w = weight_offsets_[i];
    for (Index k = 0; k < l.fan_in * l.fan_out; ++k) params[w + k] = dist(rng);
    params.segment(w + l.fan_in * l.fan_out, l.fan_out).setZero();
  }
}

void FeedForward::zero_output_layer(Vector& params) const {
  const auto& l = layers_.back();
  params.segment(weight_offsets_.back(), l.fan_in * l.fan_out + l.fan_out).setZero();
}

Matrix FeedForward::forward(const Vector& params, const Matrix& input, Cache* cache) const {
  if (input.rows() != input_dim()) throw Error(ErrorCode::ShapeMismatch, name_ + ": input width");
  if (cache) cache->inputs.clear();
  Matrix x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const Index w = weight_offsets_[i];
    Eigen::Map<const Matrix> weight(params.data() + w, l.fan_out, l.fan_in);
    Eigen::Map<const Vector> bias(params.data() + w + l.fan_in * l.fan_out, l.fan_out);
    Matrix z = weight * x;
    z.colwise() += bias;
    if (l.activation == Activation::Tanh) z = z.array().tanh().matrix();
    if (cache) cache->inputs.push_back(std::move(x));
    x = std::move(z);
  }
  if (cache) cache->output = x;
  return x;
}

Matrix FeedForward::backward(const Vector& params, const Cache& cache, const Matrix& d_output, Vector& grad) const {
  Matrix delta = d_output;
  for (std::size_t r = layers_.size(); r-- > 0;) {
    const auto& l = layers_[r];
    const Index w = weight_offsets_[r];
    const Matrix& out = (r + 1 == layers_.size()) ? cache.output : cache.inputs[r + 1];
    if (l.activation == Activation::Tanh) delta.array() *= (1.0 - out.array().square());

    Eigen::Map<const Matrix> weight(params.data() + w, l.fan_out, l.fan_in);
    Eigen::Map<Matrix> d_weight(grad.data() + w, l.fan_out, l.fan_in);
    Eigen::Map<Vector> d_bias(grad.data() + w + l.fan_in * l.fan_out, l.fan_out);
    d_weight.noalias() += delta * cache.inputs[r].transpose();
    d_bias.noalias() += delta.rowwise().sum();
    delta = weight.transpose() * delta;
  }
  return delta;
}

}  // namespace dgsm
