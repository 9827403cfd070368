#include "attralign/attribgen/prompts.hpp"

#include "attralign/error.hpp"

namespace attralign::attribgen {

std::string_view to_string(PromptId id) noexcept {
  switch (id) {
    case PromptId::Discover: return "discover";
    case PromptId::Extract: return "extract";
    case PromptId::ExtractGeneral: return "extract-general";
    case PromptId::Summarize: return "summarize";
  }
  return "?";
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find('{', pos);
    if (open == std::string::npos) {
      out.append(text, pos);
      break;
    }
    const std::size_t close = text.find('}', open + 1);
    if (close == std::string::npos) {
      out.append(text, pos);
      break;
    }
    out.append(text, pos, open - pos);
    const std::string name = text.substr(open + 1, close - open - 1);
    const auto it = bindings.find(name);
    if (it == bindings.end()) {
      throw Error(ErrorCode::UnboundPlaceholder,
                  std::string(to_string(id)) + " prompt: placeholder {" + name + "} has no value");
    }
    out += it->second;
    pos = close + 1;
  }
  return out;
}

PromptTemplate PromptTemplate::standard(PromptId id) {
  switch (id) {
    case PromptId::Discover:
      return {id, "Your task is to tell me what are the useful attributes for distinguishing {SUPERCLASS} "
                  "{CLASSUNIT} in a photo of a {SUPERCLASS}"};
    case PromptId::Extract:
      return {id, "Questions: Give a brief description of the {ATTRIBUTE} of the {SUPERCLASS} in this image. Answer:"};
    case PromptId::ExtractGeneral:
      return {id, "Questions: Describe this image in details. Answer:"};
    case PromptId::Summarize:
      return {id, "Summarize the information you get about the {SUPERCLASS} from the general description and "
                  "attribute description with five sentences."};
  }
  throw Error(ErrorCode::InvalidArgument, "unknown prompt id");
}

}  // namespace attralign::attribgen
