#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attralign/attribgen/client.hpp"
#include "attralign/attribgen/prompts.hpp"
#include "attralign/numerics.hpp"

namespace attralign::attribgen {

/// Attribute names for one super-category; the general description comes first.
struct AttributeSet {
  std::string super_category;
  std::vector<std::string> names;

  void validate() const;
  friend bool operator==(const AttributeSet&, const AttributeSet&) = default;
};

/// Splits a free-form answer into attribute names: one per line, with list
/// markers ("1.", "2)", "-", "*") and surrounding whitespace removed.
std::vector<std::string> parse_attribute_list(std::string_view response);

/// Prepends the general attribute and drops case-insensitive duplicates,
/// keeping the first occurrence.
AttributeSet make_attribute_set(std::string super_category, const std::vector<std::string>& names);

/// One image to describe.
struct SampleRef {
  std::size_t id = 0;
  std::string image;  // URL or data URI
  std::size_t category = 0;

  friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

struct Corpus {
  std::string super_category;
  std::string class_unit = "types";
  std::vector<std::string> category_names;  // optional, used for scrubbing
  std::vector<SampleRef> samples;
};

/// JSON: {"super_category", "class_unit", "category_names", "samples": [{"id", "image", "category"}]}.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

enum class KeyStatus { Ok, Failed };

struct AttributeValue {
  std::string name;
  std::string value;  // verbatim response; empty when failed
  KeyStatus status = KeyStatus::Ok;
  std::string error;

  friend bool operator==(const AttributeValue&, const AttributeValue&) = default;
};

struct SampleAttributes {
  SampleRef sample;
  std::vector<AttributeValue> values;  // in attribute-set order
  std::string summary;

  bool complete() const;
  friend bool operator==(const SampleAttributes&, const SampleAttributes&) = default;
};

struct PipelineOptions {
  PromptSet prompts;
  std::string class_unit = "types";
  std::size_t max_in_flight = 1;  // samples extracted concurrently
  bool scrub_class_names = false;
};

AttributeSet discover(ChatClient& client, const std::string& super_category, const PipelineOptions& options = {});

/// One request per attribute. Keys whose transport fails after retries are
/// marked Failed; the others are kept.
SampleAttributes extract(ChatClient& client, const SampleRef& sample, const AttributeSet& attrs,
                         const PipelineOptions& options = {});

/// Retries only the Failed keys of an earlier extraction.
SampleAttributes retry_failed(ChatClient& client, SampleAttributes partial, const AttributeSet& attrs,
                              const PipelineOptions& options = {});

/// Throws MissingKeys listing attributes without an Ok value.
SampleAttributes summarize(ChatClient& client, SampleAttributes attrs, const AttributeSet& set,
                           const PipelineOptions& options = {});

/// The key-value block placed in front of the summarize instruction.
std::string attribute_block(const SampleAttributes& attrs);

/// Replaces whole-word, case-insensitive occurrences of each name with "this".
std::string scrub_class_names(std::string_view text, const std::vector<std::string>& names);

struct PipelineResult {
  AttributeSet attributes;
  std::vector<SampleAttributes> samples;
};

/// discover, then extract every sample (up to max_in_flight at once), then
/// summarize the complete ones. Samples with failed keys are returned
/// unsummarized.
PipelineResult run_pipeline(ChatClient& client, const Corpus& corpus, const PipelineOptions& options = {});

/// Stable JSON rendering of a pipeline result (samples sorted by id).
std::string triples_to_json(const PipelineResult& result);
PipelineResult triples_from_json(std::string_view text);

std::string attribute_set_to_json(const AttributeSet& set);
AttributeSet attribute_set_from_json(std::string_view text);

/// Deterministic hashing embedder: character trigrams of the lower-cased,
/// boundary-padded text are hashed (FNV-1a with `seed`) into `dim` signed
/// buckets and the result is L2-normalized. Throws EmptyText.
Vector embed_toy(std::string_view text, std::size_t dim = 64, std::uint64_t seed = 0);

}  // namespace attralign::attribgen
