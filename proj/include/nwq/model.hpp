#pragma once

// U-shaped encoder-decoder over depthwise-separable convolutions.
//
// Encoder stage i (0..depth) runs two separable 3x3 blocks at resolution H/2^i with
// base_channels*2^i channels; stages after the first start with 2x2 max pooling. Each
// encoder output passes through an optional channel+spatial attention gate before it
// is used as a skip connection. Decoder stages upsample bilinearly, concatenate the
// skip and run two separable blocks. A 1x1 head maps to L (deterministic) or L*|Q|
// (quantile) channels and a final max(x, 0) keeps forecasts non-negative.
//
// Quantile output layout is lead-time-major: channel = lead * |Q| + quantile_index.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nwq/tensor.hpp"

namespace nwq {

/// Ordered quantile levels with one positive loss weight each.
struct QuantileSpec {
  std::vector<double> levels;
  std::vector<double> weights;

  std::size_t size() const { return levels.size(); }
  /// Throws ConfigError unless 0 < q < 1, strictly increasing, weights > 0, same length.
  void validate() const;
  /// Index of `level`, or nullopt.
  std::optional<std::size_t> find(double level) const;

  /// {0.5, 0.9, 0.95} with weights {1.0, 0.5, 0.5}.
  static QuantileSpec standard();
  /// {0.5, 0.9, 0.95} with weights {1.0, w, w}.
  static QuantileSpec with_upper_weight(double upper_weight);

  bool operator==(const QuantileSpec&) const = default;
};

struct ModelConfig {
  std::size_t input_frames = 4;
  std::size_t lead_times = 3;
  std::optional<QuantileSpec> quantiles;
  std::size_t base_channels = 16;
  std::size_t depth = 2;
  std::size_t grid_h = 32;
  std::size_t grid_w = 32;
  bool attention_enabled = true;
  std::uint64_t seed = 0;

  std::size_t quantile_count() const { return quantiles ? quantiles->size() : 1; }
  std::size_t output_channels() const { return lead_times * quantile_count(); }
  /// Throws ConfigError on zero sizes, grid not divisible by 2^depth or a bad QuantileSpec.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Named parameter tensors in a fixed (insertion) order.
template <typename T>
class Parameters {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void add(std::string name, Tensor<T> tensor);
  bool contains(std::string_view name) const;
  const Tensor<T>& at(std::string_view name) const;
  Tensor<T>& at(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  std::size_t total_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  /// Deep copy; gradients are not copied.
  Parameters clone() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename To, typename From>
Parameters<To> cast_parameters(const Parameters<From>& params) {
  Parameters<To> out;
  for (const auto& [name, t] : params) out.add(name, tensor_cast<To>(t));
  return out;
}

/// One row of the architecture table.
struct LayerInfo {
  std::string name;
  Shape shape;
  std::size_t count;
  std::size_t fan_in;
};

/// Every parameter tensor the config implies, in initialization order.
std::vector<LayerInfo> architecture(const ModelConfig& config);

/// Plain-text table: name, shape, parameter count, and a total line.
std::string architecture_table(const ModelConfig& config);

/// Fan-in scaled uniform weights, zero biases; a pure function of the config (incl. seed).
Parameters<float> init_parameters(const ModelConfig& config);

/// input [B, m, H, W] -> [B, output_channels, H, W], all values >= 0.
template <typename T>
Tensor<T> forward(Tape<T>& tape, const Parameters<T>& params, const ModelConfig& config,
                  const Tensor<T>& input);

/// Channels lead * |Q| + q_index for every lead: [B, L*|Q|, H, W] -> [B, L, H, W].
template <typename T>
Tensor<T> extract_quantile(Tape<T>& tape, const Tensor<T>& output, std::size_t q_index,
                           const QuantileSpec& spec);

template <typename T>
Tensor<T> extract_quantile(const Tensor<T>& output, std::size_t q_index, const QuantileSpec& spec) {
  Tape<T> tape(false);
  return extract_quantile(tape, output, q_index, spec);
}

/// Parameter slice of one attention gate on C channels.
template <typename T>
struct AttentionParams {
  Tensor<T> fc1_weight, fc1_bias;        // [hidden, C, 1, 1], [hidden]
  Tensor<T> fc2_weight, fc2_bias;        // [C, hidden, 1, 1], [C]
  Tensor<T> spatial_weight, spatial_bias;  // [1, 2, 7, 7], [1]

  static AttentionParams from(const Parameters<T>& params, const std::string& prefix);
};

/// Hidden width of the channel-attention bottleneck for C channels.
inline std::size_t attention_hidden(std::size_t channels) {
  return channels / 4 > 0 ? channels / 4 : 1;
}

/// x * channel_scale * spatial_scale, where channel_scale = sigmoid(MLP(avgpool(x))) and
/// spatial_scale = sigmoid(conv7x7([mean_c, max_c](x * channel_scale))).
template <typename T>
Tensor<T> attention_gate(Tape<T>& tape, const Tensor<T>& x, const AttentionParams<T>& p);

extern template class Parameters<float>;
extern template class Parameters<double>;

}  // namespace nwq
