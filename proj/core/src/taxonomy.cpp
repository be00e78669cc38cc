#include "hintloop/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "hintloop/error.hpp"
#include "hintloop/hash.hpp"

namespace hintloop {
namespace {

const std::set<std::string, std::less<>> kPolicyFields = {"id", "name", "category",
                                                          "egregiousness", "hint_enabled"};

std::string describe(std::size_t index, const nlohmann::json& record) {
  if (record.is_object() && record.contains("id") && record["id"].is_string()) {
    return fmt::format("record {} (id \"{}\")", index, record["id"].get<std::string>());
  }
  return fmt::format("record {}", index);
}

Policy parse_policy(std::size_t index, const nlohmann::json& record) {
  if (!record.is_object()) {
    throw Error(ErrorCode::kParse, fmt::format("{}: expected an object", describe(index, record)));
  }
  for (const auto& [key, _] : record.items()) {
    if (!kPolicyFields.contains(key)) {
      throw Error(ErrorCode::kParse,
                  fmt::format("{}: unknown field \"{}\"", describe(index, record), key));
    }
  }
  auto require = [&](const char* key, auto check, const char* kind) -> const nlohmann::json& {
    if (!record.contains(key) || !check(record.at(key))) {
      throw Error(ErrorCode::kParse, fmt::format("{}: field \"{}\" missing or not {}",
                                                 describe(index, record), key, kind));
    }
    return record.at(key);
  };
  auto is_string = [](const nlohmann::json& j) { return j.is_string(); };
  auto is_integer = [](const nlohmann::json& j) { return j.is_number_integer(); };
  auto is_bool = [](const nlohmann::json& j) { return j.is_boolean(); };

  Policy p;
  p.id = require("id", is_string, "a string").get<std::string>();
  p.name = require("name", is_string, "a string").get<std::string>();
  p.category = require("category", is_string, "a string").get<std::string>();
  p.egregiousness = require("egregiousness", is_integer, "an integer").get<int>();
  p.hint_enabled = require("hint_enabled", is_bool, "a boolean").get<bool>();
  if (p.id.empty()) {
    throw Error(ErrorCode::kValidation, fmt::format("{}: empty id", describe(index, record)));
  }
  if (p.egregiousness < 1) {
    throw Error(ErrorCode::kValidation,
                fmt::format("{}: egregiousness {} < 1", describe(index, record), p.egregiousness));
  }
  return p;
}

}  // namespace

PolicyTaxonomy::PolicyTaxonomy(std::vector<Policy> policies) : policies_(std::move(policies)) {
  if (policies_.empty()) {
    throw Error(ErrorCode::kValidation, "empty taxonomy");
  }
  std::sort(policies_.begin(), policies_.end(),
            [](const Policy& a, const Policy& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < policies_.size(); ++i) {
    const Policy& p = policies_[i];
    if (p.id.empty()) {
      throw Error(ErrorCode::kValidation, "policy with empty id");
    }
    if (p.category.empty()) {
      throw Error(ErrorCode::kValidation, fmt::format("policy \"{}\": empty category", p.id));
    }
    if (p.egregiousness < 1) {
      throw Error(ErrorCode::kValidation,
                  fmt::format("policy \"{}\": egregiousness {} < 1", p.id, p.egregiousness));
    }
    if (i > 0 && policies_[i - 1].id == p.id) {
      throw Error(ErrorCode::kDuplicate, fmt::format("duplicate policy id \"{}\"", p.id));
    }
  }
  version_ = to_hex(fnv1a64(taxonomy_to_json(*this).dump()));
}

const Policy* PolicyTaxonomy::find(std::string_view id) const {
  auto it = std::lower_bound(policies_.begin(), policies_.end(), id,
                             [](const Policy& p, std::string_view key) { return p.id < key; });
  if (it == policies_.end() || it->id != id) return nullptr;
  return &*it;
}

const Policy& PolicyTaxonomy::at(std::string_view id) const {
  const Policy* p = find(id);
  if (p == nullptr) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown policy id \"{}\"", id));
  }
  return *p;
}

std::vector<std::string> PolicyTaxonomy::categories() const {
  std::set<std::string> cats;
  for (const auto& p : policies_) cats.insert(p.category);
  return {cats.begin(), cats.end()};
}

std::vector<std::string> PolicyTaxonomy::hint_enabled_ids() const {
  std::vector<std::string> out;
  for (const auto& p : policies_) {
    if (p.hint_enabled) out.push_back(p.id);
  }
  return out;
}

std::vector<std::string> PolicyTaxonomy::ids() const {
  std::vector<std::string> out;
  out.reserve(policies_.size());
  for (const auto& p : policies_) out.push_back(p.id);
  return out;
}

PolicyTaxonomy parse_taxonomy(const nlohmann::json& doc) {
  if (!doc.is_array()) {
    throw Error(ErrorCode::kParse, "taxonomy must be a JSON array of policy objects");
  }
  std::vector<Policy> policies;
  std::set<std::string, std::less<>> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    Policy p = parse_policy(i, doc[i]);
    if (!seen.insert(p.id).second) {
      throw Error(ErrorCode::kDuplicate,
                  fmt::format("record {}: duplicate policy id \"{}\"", i, p.id));
    }
    policies.push_back(std::move(p));
  }
  return PolicyTaxonomy(std::move(policies));
}

PolicyTaxonomy parse_taxonomy(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, fmt::format("taxonomy: {}", e.what()));
  }
  return parse_taxonomy(doc);
}

PolicyTaxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, fmt::format("cannot open taxonomy file {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_taxonomy(std::string_view(buf.str()));
}

nlohmann::json taxonomy_to_json(const PolicyTaxonomy& taxonomy) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : taxonomy.policies()) {
    out.push_back({{"id", p.id},
                   {"name", p.name},
                   {"category", p.category},
                   {"egregiousness", p.egregiousness},
                   {"hint_enabled", p.hint_enabled}});
  }
  return out;
}

std::string serialize_taxonomy(const PolicyTaxonomy& taxonomy) {
  return taxonomy_to_json(taxonomy).dump(2) + "\n";
}

void save_taxonomy(const PolicyTaxonomy& taxonomy, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, fmt::format("cannot write taxonomy file {}", path.string()));
  }
  out << serialize_taxonomy(taxonomy);
}

int egregiousness_tier(const PolicyTaxonomy& taxonomy, std::string_view policy_id) {
  return taxonomy.at(policy_id).egregiousness;
}

}  // namespace hintloop
