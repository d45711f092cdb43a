#include "nwq/error.hpp"
#include "nwq/model.hpp"
#include "nwq/ops.hpp"

namespace nwq {

template <typename T>
AttentionParams<T> AttentionParams<T>::from(const Parameters<T>& params, const std::string& prefix) {
  return AttentionParams{params.at(prefix + ".fc1.weight"),     params.at(prefix + ".fc1.bias"),
                         params.at(prefix + ".fc2.weight"),     params.at(prefix + ".fc2.bias"),
                         params.at(prefix + ".spatial.weight"), params.at(prefix + ".spatial.bias")};
}

template <typename T>
Tensor<T> attention_gate(Tape<T>& tape, const Tensor<T>& x, const AttentionParams<T>& p) {
  if (x.rank() != 4) {
    throw DimensionError("attention_gate: input must be rank 4, got " + shape_string(x.shape()));
  }
  // Channel branch: squeeze, bottleneck, excite.
  auto pooled = global_avg_pool(tape, x);
  auto hidden = leaky_relu(tape, pointwise_conv2d(tape, pooled, p.fc1_weight, p.fc1_bias));
  auto channel_scale = sigmoid(tape, pointwise_conv2d(tape, hidden, p.fc2_weight, p.fc2_bias));
  auto refined = scale_channels(tape, x, channel_scale);

  // Spatial branch over the channel-refined features.
  auto maps = channel_avg_max(tape, refined);
  auto spatial_scale = sigmoid(tape, conv2d(tape, maps, p.spatial_weight, p.spatial_bias, 3, 1));
  return scale_spatial(tape, refined, spatial_scale);
}

template struct AttentionParams<float>;
template struct AttentionParams<double>;
template Tensor<float> attention_gate<float>(Tape<float>&, const Tensor<float>&,
                                             const AttentionParams<float>&);
template Tensor<double> attention_gate<double>(Tape<double>&, const Tensor<double>&,
                                               const AttentionParams<double>&);

}  // namespace nwq
