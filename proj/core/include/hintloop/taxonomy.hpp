#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace hintloop {

struct Policy {
  std::string id;
  std::string name;
  std::string category;
  int egregiousness = 1;  // >= 1, higher is more egregious
  bool hint_enabled = true;

  friend bool operator==(const Policy&, const Policy&) = default;
};

/// Immutable, validated policy catalog. Policies are kept sorted by id.
class PolicyTaxonomy {
 public:
  /// Validates and sorts; throws Error on empty input, duplicate ids or
  /// egregiousness < 1.
  explicit PolicyTaxonomy(std::vector<Policy> policies);

  const std::vector<Policy>& policies() const noexcept { return policies_; }
  const std::string& version() const noexcept { return version_; }
  std::size_t size() const noexcept { return policies_.size(); }

  const Policy* find(std::string_view id) const;
  const Policy& at(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  std::vector<std::string> categories() const;
  std::vector<std::string> hint_enabled_ids() const;
  std::vector<std::string> ids() const;

  friend bool operator==(const PolicyTaxonomy& a, const PolicyTaxonomy& b) {
    return a.policies_ == b.policies_;
  }

 private:
  std::vector<Policy> policies_;
  std::string version_;
};

PolicyTaxonomy parse_taxonomy(const nlohmann::json& doc);
PolicyTaxonomy parse_taxonomy(std::string_view text);
PolicyTaxonomy load_taxonomy(const std::filesystem::path& path);

nlohmann::json taxonomy_to_json(const PolicyTaxonomy& taxonomy);
std::string serialize_taxonomy(const PolicyTaxonomy& taxonomy);
void save_taxonomy(const PolicyTaxonomy& taxonomy, const std::filesystem::path& path);

int egregiousness_tier(const PolicyTaxonomy& taxonomy, std::string_view policy_id);

}  // namespace hintloop
