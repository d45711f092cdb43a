#pragma once

// Strict reading of JSON objects into config structs: every key must be consumed,
// unknown keys and type mismatches become ConfigError.

#include <set>
#include <string>

#include "json.hpp"
#include "nwq/error.hpp"

namespace nwq {

class JsonFields {
 public:
  JsonFields(const nlohmann::json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  /// Reads `key` into `out` when present; leaves `out` untouched otherwise.
  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void require(const char* key, T& out) {
    if (!j_.contains(key)) throw ConfigError(context_ + ": missing key '" + key + "'");
    get(key, out);
  }

  /// Sub-object, or nullptr when absent. Marks the key as consumed.
  const nlohmann::json* object(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  /// Throws ConfigError naming the first key that was never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) {
        throw ConfigError(context_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

  const std::string& context() const { return context_; }

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace nwq
