#pragma once

// Deterministic chat endpoint stand-in shared by the attribute pipeline tests.

#include <chrono>
#include <string>

#include "attralign/attribgen/pipeline.hpp"

namespace mockchat {

inline const char* const kSummary =
    "The aircraft has swept wings. Its tail is tall. It carries two engines. The fuselage is long. It is painted white.";

inline std::string answer_for(const attralign::attribgen::ChatRequest& r) {
  if (r.prompt.rfind("Your task is", 0) == 0) return "1. wing shape\n2. tail design\n3. engine count\n";
  if (r.prompt.find("Summarize") != std::string::npos) return kSummary;
  const std::size_t at = r.prompt.find("of the ");
  const std::string topic = at == std::string::npos ? "overall" : r.prompt.substr(at + 7, r.prompt.find(" of", at + 7) - at - 7);
  return topic + " seen in " + r.image.value_or("?");
}

inline attralign::attribgen::ChatResponse respond(const attralign::attribgen::ChatRequest& r, std::size_t) {
  return {200, answer_for(r)};
}

inline attralign::attribgen::Corpus three_sample_corpus() {
  attralign::attribgen::Corpus c;
  c.super_category = "aircraft";
  c.class_unit = "types";
  c.category_names = {"Boeing 747", "A320", "Cessna"};
  c.samples = {{12, "img://12.jpg", 0}, {3, "img://3.jpg", 1}, {7, "data:image/png;base64,AAAA", 2}};
  return c;
}

inline attralign::attribgen::EndpointConfig fast_endpoint() {
  attralign::attribgen::EndpointConfig e;
  e.backoff_base = std::chrono::milliseconds(1);
  return e;
}

}  // namespace mockchat
