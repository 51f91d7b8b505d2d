#include "layerscope/fst.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace layerscope {

namespace {

constexpr char32_t kReplacement = 0xFFFD;
constexpr char32_t kEllipsisChar = 0x2026;

bool is_upper(char32_t c) { return c >= U'A' && c <= U'Z'; }
bool is_lower(char32_t c) { return c >= U'a' && c <= U'z'; }
bool is_letter(char32_t c) { return is_upper(c) || is_lower(c); }
bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
         c == 0x00A0;
}

// Period at p preceded by exactly one letter: the "U." of "U.S.".
bool is_letter_unit(std::u32string_view t, std::size_t p) {
  if (p == 0 || p >= t.size() || t[p] != U'.' || !is_letter(t[p - 1])) return false;
  return p < 2 || !is_letter(t[p - 2]);
}

bool in_ellipsis(std::u32string_view t, std::size_t i) {
  if ((i > 0 && t[i - 1] == kEllipsisChar) || (i + 1 < t.size() && t[i + 1] == kEllipsisChar)) {
    return true;
  }
  std::size_t lo = i;
  while (lo > 0 && t[lo - 1] == U'.') --lo;
  std::size_t hi = i;
  while (hi + 1 < t.size() && t[hi + 1] == U'.') ++hi;
  return hi - lo + 1 >= 3;
}

bool is_decimal(std::u32string_view t, std::size_t i) {
  return i > 0 && i + 1 < t.size() && is_digit(t[i - 1]) && is_digit(t[i + 1]);
}

bool in_multi_dot(std::u32string_view t, std::size_t i) {
  if (!is_letter_unit(t, i)) return false;
  std::size_t units = 1;
  for (std::size_t p = i; p >= 2 && is_letter_unit(t, p - 2); p -= 2) ++units;
  for (std::size_t p = i + 2; is_letter_unit(t, p); p += 2) ++units;
  return units >= 2;
}

bool is_word_abbrev(std::u32string_view t, std::size_t i, const ExceptionRules& rules) {
  std::size_t start = i;
  while (start > 0 && (is_letter(t[start - 1]) || t[start - 1] == U'.')) --start;
  return rules.abbreviations.contains(encode_utf8(t.substr(start, i - start + 1)));
}

bool is_initial(std::u32string_view t, std::size_t i) {
  if (i == 0 || !is_upper(t[i - 1]) || (i >= 2 && is_letter(t[i - 2]))) return false;
  std::size_t j = i + 1;
  while (j < t.size() && is_space(t[j])) ++j;
  return j < t.size() && is_upper(t[j]);
}

bool is_extra_terminator(char32_t c, const ExceptionRules& rules) {
  return rules.extra_terminators.contains(c) || (rules.newline_terminates && c == U'\n');
}

SentenceBoundary scan(std::u32string_view text, const ExceptionRules& rules,
                      std::array<std::size_t, kPeriodClassCount>* counts) {
  if (text.empty()) throw Error(ErrorCode::empty_input, "first_sentence_end: empty text");
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char32_t c = text[i];
    if (c == U'.') {
      const PeriodClass cls = classify_period(text, i, rules);
      if (counts) ++(*counts)[static_cast<std::size_t>(cls)];
      if (cls == PeriodClass::terminator) return {i, c, std::nullopt, false};
    } else if (is_extra_terminator(c, rules)) {
      return {i, c, std::nullopt, false};
    }
  }
  return {text.size() - 1, text.back(), std::nullopt, true};
}

std::vector<TokenSpan> parse_offsets(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::malformed, "\"offsets\" must be an array");
  std::vector<TokenSpan> spans;
  spans.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_number_unsigned() ||
        !item[1].is_number_unsigned()) {
      throw Error(ErrorCode::malformed, "each offset must be a [start, end] pair of non-negative integers");
    }
    spans.emplace_back(item[0].get<std::size_t>(), item[1].get<std::size_t>());
  }
  return spans;
}

}  // namespace

std::string_view to_string(PeriodClass cls) noexcept {
  switch (cls) {
    case PeriodClass::terminator: return "terminator";
    case PeriodClass::ellipsis: return "ellipsis";
    case PeriodClass::decimal: return "decimal";
    case PeriodClass::multi_dot_abbrev: return "multi_dot_abbrev";
    case PeriodClass::word_abbrev: return "word_abbrev";
    case PeriodClass::initial: return "initial";
  }
  return "unknown";
}

ExceptionRules ExceptionRules::from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed, std::string("rules file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::malformed, "rules file must hold a JSON object");

  ExceptionRules rules;
  auto read_abbrevs = [](const nlohmann::json& arr, std::set<std::string>& into) {
    if (!arr.is_array()) throw Error(ErrorCode::malformed, "abbreviation lists must be arrays");
    for (const auto& a : arr) {
      if (!a.is_string()) throw Error(ErrorCode::malformed, "abbreviations must be strings");
      auto s = a.get<std::string>();
      if (s.empty() || s.back() != '.') {
        throw Error(ErrorCode::malformed, "abbreviation '" + s + "' must end with '.'");
      }
      into.insert(std::move(s));
    }
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "abbreviations") {
      rules.abbreviations.clear();
      read_abbrevs(value, rules.abbreviations);
    } else if (key == "extra_abbreviations") {
      read_abbrevs(value, rules.abbreviations);
    } else if (key == "extra_terminators") {
      if (!value.is_array()) throw Error(ErrorCode::malformed, "extra_terminators must be an array");
      rules.extra_terminators.clear();
      for (const auto& t : value) {
        const std::u32string cp = t.is_string() ? decode_utf8(t.get<std::string>()) : std::u32string{};
        if (cp.size() != 1) {
          throw Error(ErrorCode::malformed, "extra_terminators entries must be single characters");
        }
        rules.extra_terminators.insert(cp.front());
      }
    } else {
      bool* flag = key == "ellipsis"             ? &rules.ellipsis
                   : key == "decimal"            ? &rules.decimal
                   : key == "multi_dot"          ? &rules.multi_dot
                   : key == "abbreviation"       ? &rules.abbreviation
                   : key == "initial"            ? &rules.initial
                   : key == "newline_terminates" ? &rules.newline_terminates
                                                 : nullptr;
      if (!flag) throw Error(ErrorCode::malformed, "unknown rules key '" + key + "'");
      if (!value.is_boolean()) throw Error(ErrorCode::malformed, "'" + key + "' must be a boolean");
      *flag = value.get<bool>();
    }
  }
  return rules;
}

ExceptionRules ExceptionRules::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open rules file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::u32string decode_utf8(std::string_view bytes) {
  std::u32string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4, cp = b0 & 0x07, min = 0x10000;
    }
    bool ok = len != 0 && i + len <= bytes.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(bytes[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (ok && (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (ok) {
      out.push_back(cp);
      i += len;
    } else {
      out.push_back(kReplacement);
      ++i;
    }
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

PeriodClass classify_period(std::u32string_view text, std::size_t i, const ExceptionRules& rules) {
  if (i >= text.size()) {
    throw Error(ErrorCode::invalid_argument, "classify_period: index " + std::to_string(i) +
                                                 " out of range for length " +
                                                 std::to_string(text.size()));
  }
  if (text[i] != U'.') {
    throw Error(ErrorCode::invalid_argument,
                "classify_period: character " + std::to_string(i) + " is not a period");
  }
  if (rules.ellipsis && in_ellipsis(text, i)) return PeriodClass::ellipsis;
  if (rules.decimal && is_decimal(text, i)) return PeriodClass::decimal;
  if (rules.multi_dot && in_multi_dot(text, i)) return PeriodClass::multi_dot_abbrev;
  if (rules.abbreviation && is_word_abbrev(text, i, rules)) return PeriodClass::word_abbrev;
  if (rules.initial && is_initial(text, i)) return PeriodClass::initial;
  return PeriodClass::terminator;
}

PeriodClass classify_period(std::string_view utf8_text, std::size_t i, const ExceptionRules& rules) {
  return classify_period(decode_utf8(utf8_text), i, rules);
}

SentenceBoundary first_sentence_end(std::u32string_view text, const ExceptionRules& rules) {
  return scan(text, rules, nullptr);
}

SentenceBoundary first_sentence_end(std::string_view utf8_text, const ExceptionRules& rules) {
  return scan(decode_utf8(utf8_text), rules, nullptr);
}

std::size_t boundary_token(std::span<const TokenSpan> offsets, const SentenceBoundary& boundary) {
  if (offsets.empty()) throw Error(ErrorCode::coverage, "boundary_token: no token offsets");
  std::size_t previous_end = 0;
  for (const auto& [start, end] : offsets) {
    if (end < start || start < previous_end) {
      throw Error(ErrorCode::malformed, "token offsets must be ordered and non-overlapping");
    }
    previous_end = end;
  }
  if (boundary.whole_text_fallback) return offsets.size() - 1;
  const std::size_t c = boundary.char_index;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    if (offsets[k].second > c) {
      if (offsets[k].first > c) break;
      return k;
    }
  }
  throw Error(ErrorCode::coverage,
              "no token span covers character " + std::to_string(c));
}

FstCorpusResult process_corpus(std::istream& in, const ExceptionRules& rules) {
  FstCorpusResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string id;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      if (!j.is_object()) throw Error(ErrorCode::malformed, "record is not a JSON object");
      if (j.contains("id")) {
        id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
      }
      if (!j.contains("id")) throw Error(ErrorCode::malformed, "record has no \"id\"");
      if (!j.contains("text") || !j["text"].is_string()) {
        throw Error(ErrorCode::malformed, "record has no string \"text\"");
      }
      const std::u32string text = decode_utf8(j["text"].get<std::string>());
      std::array<std::size_t, kPeriodClassCount> counts{};
      SentenceBoundary b = scan(text, rules, &counts);
      if (j.contains("offsets") && !j["offsets"].is_null()) {
        const std::vector<TokenSpan> spans = parse_offsets(j["offsets"]);
        b.token_index = boundary_token(spans, b);
      }
      for (std::size_t k = 0; k < kPeriodClassCount; ++k) result.summary.periods[k] += counts[k];
      if (b.whole_text_fallback) ++result.summary.fallbacks;
      ++result.summary.records;
      result.outputs.push_back({std::move(id), b});
    } catch (const nlohmann::json::exception& e) {
      result.errors.push_back({id, line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const Error& e) {
      result.errors.push_back({id, line_no, e.what()});
    }
  }
  result.summary.errors = result.errors.size();
  return result;
}

void write_fst_outputs(std::ostream& out, const std::vector<FstRecordResult>& outputs) {
  for (const auto& r : outputs) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["char_index"] = r.boundary.char_index;
    if (r.boundary.token_index) j["token_index"] = *r.boundary.token_index;
    j["terminator"] = encode_utf8(std::u32string_view(&r.boundary.terminator, 1));
    j["fallback"] = r.boundary.whole_text_fallback;
    out << j.dump() << '\n';
  }
}

std::string summary_json(const FstSummary& summary, const std::vector<FstRecordError>& errors) {
  nlohmann::ordered_json j;
  j["records"] = summary.records;
  j["fallbacks"] = summary.fallbacks;
  j["errors"] = summary.errors;
  nlohmann::ordered_json periods = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < kPeriodClassCount; ++k) {
    periods[std::string(to_string(static_cast<PeriodClass>(k)))] = summary.periods[k];
  }
  j["periods"] = periods;
  j["error_records"] = nlohmann::ordered_json::array();
  for (const auto& e : errors) {
    j["error_records"].push_back({{"id", e.id}, {"line", e.line}, {"message", e.message}});
  }
  return j.dump(2);
}

}  // namespace layerscope
