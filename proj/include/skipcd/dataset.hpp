#pragma once

// Line-delimited JSON records: {"id", "lang", "question", "answer", "chain"?}.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "skipcd/error.hpp"

namespace skipcd {

inline constexpr std::array<std::string_view, 7> kHighResourceLangs = {"en", "de", "fr", "es", "ru", "zh", "ja"};
inline constexpr std::array<std::string_view, 4> kLowResourceLangs = {"th", "te", "bn", "sw"};

inline bool is_high_resource(std::string_view lang) {
  return std::find(kHighResourceLangs.begin(), kHighResourceLangs.end(), lang) != kHighResourceLangs.end();
}

inline bool is_low_resource(std::string_view lang) {
  return std::find(kLowResourceLangs.begin(), kLowResourceLangs.end(), lang) != kLowResourceLangs.end();
}

inline bool is_known_lang(std::string_view lang) { return is_high_resource(lang) || is_low_resource(lang); }

// Integer or decimal, optional sign, optional thousands commas.
inline bool is_numeric_answer(std::string_view s) {
  static const std::regex re(R"(^[+-]?(\d{1,3}(,\d{3})+|\d+)(\.\d+)?$)");
  return std::regex_match(s.begin(), s.end(), re);
}

struct DatasetRecord {
  std::string id;
  std::string lang;
  std::string question;
  std::string answer;
  std::optional<std::string> chain;
};

inline DatasetRecord parse_record(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("record is not an object");
  DatasetRecord r;
  auto required = [&](const char* key) -> std::string {
    if (!j.contains(key)) throw FormatError(std::string("missing required field '") + key + "'");
    if (!j.at(key).is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
  };
  r.id = required("id");
  try {
    r.lang = required("lang");
    r.question = required("question");
    r.answer = required("answer");
    if (j.contains("chain") && !j.at("chain").is_null()) {
      if (!j.at("chain").is_string()) throw FormatError("field 'chain' must be a string");
      r.chain = j.at("chain").get<std::string>();
    }
    if (!is_known_lang(r.lang)) throw FormatError("unknown lang '" + r.lang + "'");
    if (!is_numeric_answer(r.answer)) throw FormatError("answer '" + r.answer + "' is not a number");
  } catch (const FormatError& e) {
    throw FormatError("record '" + r.id + "': " + e.what());
  }
  return r;
}

inline std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::vector<DatasetRecord> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace skipcd
