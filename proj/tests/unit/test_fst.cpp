#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fst_props.hpp"
#include "layerscope/fst.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace layerscope;

namespace {

std::size_t period_at(std::string_view text, std::string_view anchor) {
  return text.find(anchor) + anchor.find('.');
}

}  // namespace

TEST_CASE("period classes") {
  const std::string pi = "is 3.14.";
  CHECK(classify_period(pi, 4) == PeriodClass::decimal);
  CHECK(classify_period(pi, 7) == PeriodClass::terminator);
  const std::string us = "the U.S. won";
  CHECK(classify_period(us, 5) == PeriodClass::multi_dot_abbrev);
  CHECK(classify_period(us, 7) == PeriodClass::multi_dot_abbrev);
  const std::string g = "met G. Smith";
  CHECK(classify_period(g, 5) == PeriodClass::initial);
  CHECK(classify_period(std::string("wait... no"), 5) == PeriodClass::ellipsis);
  CHECK(classify_period(std::string("Dr. Who"), 2) == PeriodClass::word_abbrev);
  CHECK(classify_period(std::string("see i.e. this"), 5) == PeriodClass::multi_dot_abbrev);
  CHECK(classify_period(std::string("B. it"), 1) == PeriodClass::terminator);
  CHECK(classify_period(std::string("a.b"), 1) == PeriodClass::terminator);

  CHECK_THROWS_AS(classify_period(std::string("abc"), 1), Error);
  CHECK_THROWS_AS(classify_period(std::string("abc."), 9), Error);
}

TEST_CASE("rules can be switched off") {
  ExceptionRules rules;
  rules.decimal = false;
  CHECK(classify_period(std::string("3.14"), 1, rules) == PeriodClass::terminator);
  rules = {};
  rules.abbreviation = false;
  CHECK(first_sentence_end(std::string("Dr. Smith arrived. He left."), rules).char_index == 2);
  rules = {};
  rules.extra_terminators.clear();
  CHECK(first_sentence_end(std::string("Why? Because. Yes"), rules).char_index == 12);
  rules = {};
  rules.newline_terminates = true;
  const SentenceBoundary nl = first_sentence_end(std::string("line one\nline two."), rules);
  CHECK(nl.char_index == 8);
  CHECK(nl.terminator == U'\n');
}

TEST_CASE("first sentence examples") {
  CHECK(first_sentence_end(std::string("Paris is the capital. It is big.")).char_index == 20);
  CHECK(first_sentence_end(std::string("The value is 3.14. Next.")).char_index == 17);
  CHECK(first_sentence_end(std::string("Dr. Smith arrived. He left.")).char_index == 17);
  const SentenceBoundary fb = first_sentence_end(std::string("no end"));
  CHECK(fb.whole_text_fallback);
  CHECK(fb.char_index == 5);
  CHECK(fb.terminator == U'd');
  CHECK_THROWS_AS(first_sentence_end(std::string("")), Error);
}

TEST_CASE("golden corpus") {
  std::ifstream in(std::string(LAYERSCOPE_TEST_DATA) + "/fst_golden.jsonl");
  REQUIRE(in);
  std::string line;
  std::size_t cases = 0;
  std::set<std::string> classes;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const std::string text = j["text"];
    const SentenceBoundary b = first_sentence_end(text);
    INFO("case " << j["case"] << ": " << text);
    CHECK(b.char_index == j["char_index"].get<std::size_t>());
    CHECK(b.whole_text_fallback == j["fallback"].get<bool>());
    CHECK(encode_utf8(std::u32string(1, b.terminator)) == j["terminator"].get<std::string>());
    classes.insert(j["class"].get<std::string>());
    ++cases;
  }
  CHECK(cases >= 30);
  for (const char* c : {"decimal", "ellipsis", "multi_dot", "word_abbrev", "initial", "question", "exclaim", "fallback"}) {
    CHECK(classes.count(c) == 1);
  }
}

TEST_CASE("code point indexing") {
  const std::string text = "Café … ok. Next";
  const SentenceBoundary b = first_sentence_end(text);
  CHECK(b.char_index == 9);
  CHECK(decode_utf8(text)[b.char_index] == U'.');
  CHECK(decode_utf8("\xff" "a") == std::u32string{U'�', U'a'});
  CHECK(encode_utf8(decode_utf8(text)) == text);
}

TEST_CASE("boundary tokens") {
  const std::vector<TokenSpan> offsets{{0, 3}, {3, 6}, {6, 9}};
  SentenceBoundary b;
  b.char_index = 5;
  CHECK(boundary_token(offsets, b) == 1);
  b.char_index = 2;
  CHECK(boundary_token(offsets, b) == 0);
  b.whole_text_fallback = true;
  CHECK(boundary_token(offsets, b) == 2);
  b.whole_text_fallback = false;

  const std::vector<TokenSpan> gap{{0, 3}, {6, 9}};
  b.char_index = 4;
  try {
    boundary_token(gap, b);
    FAIL("expected coverage error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::coverage);
  }
  const std::vector<TokenSpan> overlap{{0, 4}, {3, 6}};
  CHECK_THROWS_AS(boundary_token(overlap, b), Error);
  CHECK_THROWS_AS(boundary_token({}, b), Error);
}

TEST_CASE("fuzzed properties") {
  std::mt19937_64 gen(99);
  std::size_t stable_checked = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::u32string s = fuzz::text(gen);
    const std::u32string extra = fuzz::text(gen);
    REQUIRE(fuzz::idempotent(s));
    REQUIRE(fuzz::prefix_stable(s, extra));
    const SentenceBoundary b = first_sentence_end(s);
    if (!b.whole_text_fallback) {
      ++stable_checked;
      CHECK(s[b.char_index] == b.terminator);
      for (std::size_t k = 0; k < b.char_index; ++k) {
        REQUIRE(s[k] != U'?');
        REQUIRE(s[k] != U'!');
        if (s[k] == U'.') REQUIRE(classify_period(s, k) != PeriodClass::terminator);
      }
    }
  }
  CHECK(stable_checked > 1000);
}

TEST_CASE("rules json") {
  const ExceptionRules r = ExceptionRules::from_json(
      R"({"extra_abbreviations": ["approx."], "initial": false, "extra_terminators": ["?"], "newline_terminates": true})");
  CHECK(r.abbreviations.count("approx.") == 1);
  CHECK(r.abbreviations.count("Dr.") == 1);
  CHECK_FALSE(r.initial);
  CHECK(r.extra_terminators == std::set<char32_t>{U'?'});
  CHECK(r.newline_terminates);
  const ExceptionRules only = ExceptionRules::from_json(R"({"abbreviations": ["Xy."]})");
  CHECK(only.abbreviations == std::set<std::string>{"Xy."});
  CHECK_THROWS_AS(ExceptionRules::from_json(R"({"colour": true})"), Error);
  CHECK_THROWS_AS(ExceptionRules::from_json(R"({"abbreviations": ["Dr"]})"), Error);
  CHECK_THROWS_AS(ExceptionRules::from_json("[1,2"), Error);
  CHECK(first_sentence_end(std::string("It is approx. ten. Yes"), r).char_index == period_at("It is approx. ten. Yes", "ten."));
}

TEST_CASE("corpus processing") {
  std::istringstream in(
      "{\"id\": \"a\", \"text\": \"One. Two.\", \"offsets\": [[0,3],[3,4],[4,5],[5,9]]}\n"
      "\n"
      "{\"id\": \"b\"}\n"
      "not json\n"
      "{\"id\": \"c\", \"text\": \"Dr. Who? Yes.\"}\n"
      "{\"id\": \"d\", \"text\": \"no end\"}\n");
  const FstCorpusResult r = process_corpus(in);
  REQUIRE(r.outputs.size() == 3);
  CHECK(r.outputs[0].id == "a");
  CHECK(r.outputs[0].boundary.token_index == std::optional<std::size_t>(1));
  CHECK(r.outputs[1].boundary.char_index == 7);
  CHECK(r.outputs[2].boundary.whole_text_fallback);
  REQUIRE(r.errors.size() == 2);
  CHECK(r.errors[0].id == "b");
  CHECK(r.errors[0].line == 3);
  CHECK(r.errors[1].line == 4);
  CHECK(r.summary.records == 3);
  CHECK(r.summary.fallbacks == 1);
  CHECK(r.summary.errors == 2);
  CHECK(r.summary.periods[static_cast<std::size_t>(PeriodClass::word_abbrev)] == 1);

  std::ostringstream out;
  write_fst_outputs(out, r.outputs);
  std::istringstream lines(out.str());
  std::string first;
  std::getline(lines, first);
  const auto j = nlohmann::json::parse(first);
  CHECK(j["char_index"] == 3);
  CHECK(j["token_index"] == 1);
  CHECK(j["terminator"] == ".");
  CHECK(j["fallback"] == false);
  const auto s = nlohmann::json::parse(summary_json(r.summary, r.errors));
  CHECK(s["records"] == 3);

  std::istringstream empty("");
  const FstCorpusResult none = process_corpus(empty);
  CHECK(none.outputs.empty());
  CHECK(none.summary.records == 0);
}
