#pragma once

#include <map>
#include <string>
#include <string_view>

namespace attralign::attribgen {

enum class PromptId { Discover, Extract, ExtractGeneral, Summarize };

std::string_view to_string(PromptId id) noexcept;

/// Name of the attribute that every attribute set starts with.
inline constexpr std::string_view kGeneralAttribute = "General description of the image";

/// Prompt text with `{SUPERCLASS}`, `{CLASSUNIT}` and `{ATTRIBUTE}` slots.
struct PromptTemplate {
  PromptId id = PromptId::Discover;
  std::string text;

  /// Substitutes every `{NAME}` slot. Throws UnboundPlaceholder naming the
  /// first slot without a binding.
  std::string render(const std::map<std::string, std::string>& bindings) const;

  static PromptTemplate standard(PromptId id);
};

/// Prompt wording used by the pipeline; each field defaults to the standard text.
struct PromptSet {
  PromptTemplate discover = PromptTemplate::standard(PromptId::Discover);
  PromptTemplate extract = PromptTemplate::standard(PromptId::Extract);
  PromptTemplate extract_general = PromptTemplate::standard(PromptId::ExtractGeneral);
  PromptTemplate summarize = PromptTemplate::standard(PromptId::Summarize);
};

}  // namespace attralign::attribgen
