#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nwq/json_fields.hpp"
#include "nwq/training.hpp"

namespace nwq {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'N', 'W', 'Q', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

void put_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void floats(std::span<float> out, const char* what) {
    for (auto& f : out) f = std::bit_cast<float>(u32(what));
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("NWQC: truncated ") + what, bytes_.size());
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

json history_to_json(const std::vector<EpochRecord>& history) {
  json rows = json::array();
  for (const auto& r : history) rows.push_back(json::array({r.epoch, r.train_loss, r.val_loss, r.learning_rate}));
  return rows;
}

std::vector<EpochRecord> history_from_json(const json& rows) {
  std::vector<EpochRecord> out;
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != 4) throw ConfigError("checkpoint history rows need 4 entries");
    out.push_back({row[0].get<std::size_t>(), row[1].get<double>(), row[2].get<double>(), row[3].get<double>(), 0.0});
  }
  return out;
}

}  // namespace

Checkpoint Checkpoint::clone() const {
  Checkpoint c = *this;
  c.params = params.clone();
  return c;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.adam.m.size() != ckpt.params.size() || ckpt.adam.v.size() != ckpt.params.size()) {
    throw ContractError("serialize_checkpoint: optimizer state does not match the parameters");
  }
  json blocks = json::array();
  for (const auto& [name, t] : ckpt.params) blocks.push_back(json{{"name", name}, {"shape", t.shape()}});
  json header{{"model", model_config_to_json(ckpt.model)},
              {"train_max", ckpt.stats.train_max},
              {"loss", loss_name(ckpt.loss)},
              {"epoch", ckpt.epoch},
              {"validation_loss", ckpt.validation_loss},
              {"run_index", ckpt.run_index},
              {"learning_rate", ckpt.learning_rate},
              {"adam_step", ckpt.adam.step},
              {"history", history_to_json(ckpt.history)},
              {"blocks", blocks}};
  if (const auto* q = std::get_if<MultiQuantileLoss>(&ckpt.loss)) {
    header["loss_quantiles"] = quantile_spec_to_json(q->spec);
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : ckpt.params) put_floats(out, t.values());
  for (const auto& m : ckpt.adam.m) put_floats(out, m);
  for (const auto& v : ckpt.adam.v) put_floats(out, v);
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), magic.begin())) throw FormatError("NWQC: bad magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("NWQC: unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")",
                      4);
  }
  const std::uint32_t header_len = r.u32("header length");
  const std::size_t header_at = r.pos();
  const auto header_bytes = r.take(header_len, "header");

  Checkpoint c;
  std::vector<std::pair<std::string, Shape>> blocks;
  try {
    const json h = json::parse(header_bytes.begin(), header_bytes.end());
    JsonFields f(h, "checkpoint");
    const auto* model = f.object("model");
    if (!model) throw ConfigError("checkpoint: missing model configuration");
    c.model = model_config_from_json(*model);
    f.require("train_max", c.stats.train_max);
    std::string loss;
    f.require("loss", loss);
    QuantileSpec spec = QuantileSpec::standard();
    if (const auto* q = f.object("loss_quantiles")) spec = quantile_spec_from_json(*q);
    c.loss = parse_loss(loss, spec);
    f.require("epoch", c.epoch);
    f.require("validation_loss", c.validation_loss);
    f.require("run_index", c.run_index);
    f.require("learning_rate", c.learning_rate);
    f.require("adam_step", c.adam.step);
    if (const auto* hist = f.object("history")) c.history = history_from_json(*hist);
    const auto* bl = f.object("blocks");
    if (!bl || !bl->is_array()) throw ConfigError("checkpoint: missing block table");
    for (const auto& b : *bl) blocks.emplace_back(b.at("name").get<std::string>(), b.at("shape").get<Shape>());
    f.finish();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("NWQC: malformed header: ") + e.what(), header_at);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("NWQC: invalid header: ") + e.what(), header_at);
  }

  const auto expected = architecture(c.model);
  if (expected.size() != blocks.size()) {
    throw FormatError("NWQC: block table does not match the model configuration", header_at);
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].first != expected[i].name || blocks[i].second != expected[i].shape) {
      throw FormatError("NWQC: block " + blocks[i].first + " does not match the architecture", header_at);
    }
  }
  for (const auto& [name, shape] : blocks) {
    std::vector<float> values(shape_numel(shape));
    r.floats(values, "parameter block");
    c.params.add(name, Tensor<float>(shape, std::move(values), true));
  }
  const std::uint64_t step = c.adam.step;
  c.adam = AdamState::for_parameters(c.params);
  c.adam.step = step;
  for (auto& m : c.adam.m) r.floats(m, "first-moment block");
  for (auto& v : c.adam.v) r.floats(v, "second-moment block");
  if (r.remaining() != 0) throw FormatError("NWQC: trailing bytes after the last block", r.pos());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

bool checkpoints_identical(const Checkpoint& a, const Checkpoint& b) {
  return serialize_checkpoint(a) == serialize_checkpoint(b);
}

}  // namespace nwq
