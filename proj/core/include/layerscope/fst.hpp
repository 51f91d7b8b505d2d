#pragma once

#include "layerscope/common.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace layerscope {

/// Rule-based first-sentence truncation.
///
/// Text is handled as a sequence of Unicode code points, and every index
/// (boundary position, token offsets) counts code points rather than bytes.
/// Letters and digits are ASCII.

enum class PeriodClass { terminator, ellipsis, decimal, multi_dot_abbrev, word_abbrev, initial };

inline constexpr std::size_t kPeriodClassCount = 6;

std::string_view to_string(PeriodClass cls) noexcept;

struct ExceptionRules {
  std::set<std::string> abbreviations{"Dr.", "Mr.",  "Mrs.", "Ms.", "Prof.", "etc.", "e.g.", "i.e.",
                                      "No.", "vs.",  "St.",  "Jr.", "Sr.",   "Fig.", "Eq."};
  bool ellipsis = true;
  bool decimal = true;
  bool multi_dot = true;
  bool abbreviation = true;
  bool initial = true;
  std::set<char32_t> extra_terminators{U'?', U'!'};
  bool newline_terminates = false;

  /// Defaults overridden by the keys present in a JSON object:
  /// "abbreviations" (replaces the list), "extra_abbreviations" (adds),
  /// "ellipsis", "decimal", "multi_dot", "abbreviation", "initial",
  /// "extra_terminators" (array of one-character strings), "newline_terminates".
  static ExceptionRules from_json(std::string_view json_text);
  static ExceptionRules load(const std::filesystem::path& path);
};

/// UTF-8 to code points; each invalid byte becomes U+FFFD.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view text);

/// Classification of the '.' at index i. Rules are tried in the order
/// ellipsis, decimal, multi-dot, word abbreviation, initial; disabled rules
/// are skipped.
PeriodClass classify_period(std::u32string_view text, std::size_t i,
                            const ExceptionRules& rules = {});
PeriodClass classify_period(std::string_view utf8_text, std::size_t i,
                            const ExceptionRules& rules = {});

struct SentenceBoundary {
  std::size_t char_index = 0;
  char32_t terminator = 0;
  std::optional<std::size_t> token_index;
  bool whole_text_fallback = false;
};

/// Scans left to right for the first extra terminator or terminating '.'.
/// Without one, the boundary is the last character and the fallback flag is set.
SentenceBoundary first_sentence_end(std::u32string_view text, const ExceptionRules& rules = {});
SentenceBoundary first_sentence_end(std::string_view utf8_text, const ExceptionRules& rules = {});

using TokenSpan = std::pair<std::size_t, std::size_t>;  ///< [start, end)

/// Index of the token containing the boundary character; a fallback boundary
/// maps to the last token. Offsets must be ordered and non-overlapping.
std::size_t boundary_token(std::span<const TokenSpan> offsets, const SentenceBoundary& boundary);

struct FstRecordResult {
  std::string id;
  SentenceBoundary boundary;
};

struct FstRecordError {
  std::string id;
  std::size_t line = 0;  ///< 1-based input line
  std::string message;
};

struct FstSummary {
  std::size_t records = 0;
  std::size_t fallbacks = 0;
  std::size_t errors = 0;
  std::array<std::size_t, kPeriodClassCount> periods{};  ///< indexed by PeriodClass, scanned periods only
};

struct FstCorpusResult {
  std::vector<FstRecordResult> outputs;
  std::vector<FstRecordError> errors;
  FstSummary summary;
};

/// Reads JSONL records {"id", "text", "offsets"?} and resolves each one.
/// Malformed records are reported and skipped; order is preserved.
FstCorpusResult process_corpus(std::istream& in, const ExceptionRules& rules = {});

/// {"id", "char_index", "token_index"?, "terminator", "fallback"} per line.
void write_fst_outputs(std::ostream& out, const std::vector<FstRecordResult>& outputs);
std::string summary_json(const FstSummary& summary, const std::vector<FstRecordError>& errors);

}  // namespace layerscope
