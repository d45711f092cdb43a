#include "nwq/model.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "nwq/error.hpp"
#include "nwq/ops.hpp"
#include "nwq/random.hpp"

namespace nwq {

void QuantileSpec::validate() const {
  if (levels.empty()) throw ConfigError("quantile spec needs at least one level");
  if (levels.size() != weights.size()) {
    throw ConfigError("quantile spec has " + std::to_string(levels.size()) + " levels but " +
                      std::to_string(weights.size()) + " weights");
  }
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] < 1.0)) {
      throw ConfigError("quantile level " + std::to_string(levels[i]) + " outside (0, 1)");
    }
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw ConfigError("quantile levels must be strictly increasing");
    }
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw ConfigError("quantile weight " + std::to_string(weights[i]) + " must be positive");
    }
  }
}

std::optional<std::size_t> QuantileSpec::find(double level) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (std::abs(levels[i] - level) < 1e-12) return i;
  }
  return std::nullopt;
}

QuantileSpec QuantileSpec::standard() { return with_upper_weight(0.5); }

QuantileSpec QuantileSpec::with_upper_weight(double upper_weight) {
  return QuantileSpec{{0.5, 0.9, 0.95}, {1.0, upper_weight, upper_weight}};
}

void ModelConfig::validate() const {
  if (input_frames == 0 || lead_times == 0 || base_channels == 0 || grid_h == 0 || grid_w == 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (depth > 6) throw ConfigError("model depth above 6 is not supported");
  const std::size_t step = std::size_t{1} << depth;
  if (grid_h % step != 0 || grid_w % step != 0) {
    throw ConfigError("grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                      " is not divisible by 2^depth = " + std::to_string(step));
  }
  if (quantiles) quantiles->validate();
}

// --- Parameters ------------------------------------------------------------------

template <typename T>
void Parameters<T>::add(std::string name, Tensor<T> tensor) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

template <typename T>
bool Parameters<T>::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

template <typename T>
const Tensor<T>& Parameters<T>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter " + std::string(name));
  return entries_[it->second].second;
}

template <typename T>
Tensor<T>& Parameters<T>::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter " + std::string(name));
  return entries_[it->second].second;
}

template <typename T>
std::size_t Parameters<T>::total_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

template <typename T>
void Parameters<T>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

template <typename T>
Parameters<T> Parameters<T>::clone() const {
  Parameters out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone());
  return out;
}

template class Parameters<float>;
template class Parameters<double>;

// --- Architecture ----------------------------------------------------------------

namespace {

std::size_t stage_channels(const ModelConfig& c, std::size_t stage) {
  return c.base_channels << stage;
}

void add_layer(std::vector<LayerInfo>& out, std::string name, Shape shape, std::size_t fan_in) {
  const std::size_t count = shape_numel(shape);
  out.push_back({std::move(name), std::move(shape), count, fan_in});
}

void add_separable(std::vector<LayerInfo>& out, const std::string& prefix, std::size_t in,
                   std::size_t outc) {
  add_layer(out, prefix + ".dw.weight", {in, 1, 3, 3}, 9);
  add_layer(out, prefix + ".dw.bias", {in}, 0);
  add_layer(out, prefix + ".pw.weight", {outc, in, 1, 1}, in);
  add_layer(out, prefix + ".pw.bias", {outc}, 0);
}

void add_double_separable(std::vector<LayerInfo>& out, const std::string& prefix, std::size_t in,
                          std::size_t outc) {
  add_separable(out, prefix + ".conv1", in, outc);
  add_separable(out, prefix + ".conv2", outc, outc);
}

void add_attention(std::vector<LayerInfo>& out, const std::string& prefix, std::size_t c) {
  const std::size_t hidden = attention_hidden(c);
  add_layer(out, prefix + ".fc1.weight", {hidden, c, 1, 1}, c);
  add_layer(out, prefix + ".fc1.bias", {hidden}, 0);
  add_layer(out, prefix + ".fc2.weight", {c, hidden, 1, 1}, hidden);
  add_layer(out, prefix + ".fc2.bias", {c}, 0);
  add_layer(out, prefix + ".spatial.weight", {1, 2, 7, 7}, 2 * 49);
  add_layer(out, prefix + ".spatial.bias", {1}, 0);
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<LayerInfo> architecture(const ModelConfig& config) {
  config.validate();
  std::vector<LayerInfo> layers;
  for (std::size_t i = 0; i <= config.depth; ++i) {
    const std::size_t in = i == 0 ? config.input_frames : stage_channels(config, i - 1);
    add_double_separable(layers, "enc" + std::to_string(i), in, stage_channels(config, i));
    if (config.attention_enabled) {
      add_attention(layers, "att" + std::to_string(i), stage_channels(config, i));
    }
  }
  for (std::size_t i = config.depth; i-- > 0;) {
    const std::size_t in = stage_channels(config, i) + stage_channels(config, i + 1);
    add_double_separable(layers, "dec" + std::to_string(i), in, stage_channels(config, i));
  }
  add_layer(layers, "head.weight", {config.output_channels(), stage_channels(config, 0), 1, 1},
            stage_channels(config, 0));
  add_layer(layers, "head.bias", {config.output_channels()}, 0);
  return layers;
}

std::string architecture_table(const ModelConfig& config) {
  const auto layers = architecture(config);
  std::ostringstream os;
  os << std::left << std::setw(28) << "layer" << std::setw(18) << "shape" << std::right
     << std::setw(10) << "params" << '\n';
  std::size_t total = 0;
  for (const auto& l : layers) {
    os << std::left << std::setw(28) << l.name << std::setw(18) << shape_string(l.shape)
       << std::right << std::setw(10) << l.count << '\n';
    total += l.count;
  }
  os << std::left << std::setw(46) << "total" << std::right << std::setw(10) << total << '\n';
  return os.str();
}

Parameters<float> init_parameters(const ModelConfig& config) {
  Rng rng(config.seed);
  Parameters<float> params;
  for (const auto& layer : architecture(config)) {
    std::vector<float> values(layer.count, 0.0f);
    if (layer.fan_in > 0) {
      // Pointwise layers feed a leaky ReLU and get the He bound; everything else the
      // unit-gain bound, so each separable block keeps activation variance roughly flat.
      const bool feeds_activation = ends_with(layer.name, ".pw.weight");
      const double bound = std::sqrt((feeds_activation ? 6.0 : 3.0) / static_cast<double>(layer.fan_in));
      for (auto& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    params.add(layer.name, Tensor<float>(layer.shape, std::move(values), true));
  }
  return params;
}

// --- Forward ---------------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> separable_block(Tape<T>& tape, const Parameters<T>& p, const std::string& prefix,
                          const Tensor<T>& x) {
  auto h = depthwise_conv2d(tape, x, p.at(prefix + ".dw.weight"), p.at(prefix + ".dw.bias"), 1);
  h = pointwise_conv2d(tape, h, p.at(prefix + ".pw.weight"), p.at(prefix + ".pw.bias"));
  return leaky_relu(tape, h);
}

template <typename T>
Tensor<T> double_separable(Tape<T>& tape, const Parameters<T>& p, const std::string& prefix,
                           const Tensor<T>& x) {
  return separable_block(tape, p, prefix + ".conv2", separable_block(tape, p, prefix + ".conv1", x));
}

}  // namespace

template <typename T>
Tensor<T> forward(Tape<T>& tape, const Parameters<T>& params, const ModelConfig& config,
                  const Tensor<T>& input) {
  if (input.rank() != 4) {
    throw DimensionError("forward: input must be [B, m, H, W], got " + shape_string(input.shape()));
  }
  if (input.dim(0) == 0) throw ContractError("forward: batch has zero samples");
  if (input.dim(1) != config.input_frames || input.dim(2) != config.grid_h ||
      input.dim(3) != config.grid_w) {
    throw DimensionError("forward: input " + shape_string(input.shape()) +
                         " does not match config (m=" + std::to_string(config.input_frames) +
                         ", " + std::to_string(config.grid_h) + "x" + std::to_string(config.grid_w) +
                         ")");
  }

  std::vector<Tensor<T>> skips;
  Tensor<T> h = input;
  for (std::size_t i = 0; i <= config.depth; ++i) {
    const std::string stage = std::to_string(i);
    if (i > 0) h = max_pool2(tape, h);
    h = double_separable(tape, params, "enc" + stage, h);
    skips.push_back(config.attention_enabled
                        ? attention_gate(tape, h, AttentionParams<T>::from(params, "att" + stage))
                        : h);
  }

  Tensor<T> cur = skips.back();
  for (std::size_t i = config.depth; i-- > 0;) {
    auto up = bilinear_upsample2(tape, cur);
    cur = double_separable(tape, params, "dec" + std::to_string(i), concat_channels(tape, skips[i], up));
  }
  auto out = pointwise_conv2d(tape, cur, params.at("head.weight"), params.at("head.bias"));
  return relu(tape, out);
}

template <typename T>
Tensor<T> extract_quantile(Tape<T>& tape, const Tensor<T>& output, std::size_t q_index,
                           const QuantileSpec& spec) {
  const std::size_t nq = spec.size();
  if (q_index >= nq) {
    throw ContractError("extract_quantile: index " + std::to_string(q_index) + " out of range for " +
                        std::to_string(nq) + " quantiles");
  }
  if (output.rank() != 4 || output.dim(1) % nq != 0) {
    throw DimensionError("extract_quantile: output " + shape_string(output.shape()) +
                         " is not a multiple of " + std::to_string(nq) + " channels");
  }
  const std::size_t leads = output.dim(1) / nq;
  std::vector<std::size_t> index(leads);
  for (std::size_t l = 0; l < leads; ++l) index[l] = l * nq + q_index;
  return select_channels(tape, output, std::span<const std::size_t>(index));
}

template Tensor<float> forward<float>(Tape<float>&, const Parameters<float>&, const ModelConfig&,
                                      const Tensor<float>&);
template Tensor<double> forward<double>(Tape<double>&, const Parameters<double>&,
                                        const ModelConfig&, const Tensor<double>&);
template Tensor<float> extract_quantile<float>(Tape<float>&, const Tensor<float>&, std::size_t,
                                               const QuantileSpec&);
template Tensor<double> extract_quantile<double>(Tape<double>&, const Tensor<double>&, std::size_t,
                                                 const QuantileSpec&);

}  // namespace nwq
