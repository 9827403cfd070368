#include "attralign/attribgen/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <set>
#include <thread>

#include "attralign/binary_io.hpp"
#include "attralign/error.hpp"

namespace attralign::attribgen {

using ojson = nlohmann::ordered_json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view strip_marker(std::string_view s) {
  s = trim(s);
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
    s.remove_prefix(i + 1);
  } else if (!s.empty() && (s.front() == '-' || s.front() == '*')) {
    s.remove_prefix(1);
  } else if (s.starts_with("\xE2\x80\xA2")) {  // bullet
    s.remove_prefix(3);
  }
  s = trim(s);
  while (!s.empty() && (s.back() == '.' || s.back() == ',' || s.back() == ';')) s.remove_suffix(1);
  return trim(s);
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

const char* status_name(KeyStatus s) { return s == KeyStatus::Ok ? "ok" : "failed"; }

}  // namespace

void AttributeSet::validate() const {
  if (names.empty() || names.front() != kGeneralAttribute) {
    throw Error(ErrorCode::InvalidArgument, "attribute set must start with the general description attribute");
  }
  std::set<std::string> seen;
  for (const std::string& n : names) {
    if (n.empty()) throw Error(ErrorCode::InvalidArgument, "attribute names must be non-empty");
    if (!seen.insert(lower(n)).second) throw Error(ErrorCode::InvalidArgument, "duplicate attribute name: " + n);
  }
}

std::vector<std::string> parse_attribute_list(std::string_view response) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= response.size()) {
    const std::size_t end = response.find('\n', start);
    lines.push_back(response.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  std::vector<std::string_view> non_empty;
  for (auto l : lines) {
    if (!trim(l).empty()) non_empty.push_back(l);
  }
  // A single comma-separated line is treated as a list too.
  if (non_empty.size() == 1 && non_empty.front().find(',') != std::string_view::npos) {
    std::string_view only = non_empty.front();
    non_empty.clear();
    std::size_t s = 0;
    while (s <= only.size()) {
      const std::size_t e = only.find(',', s);
      non_empty.push_back(only.substr(s, e == std::string_view::npos ? std::string_view::npos : e - s));
      if (e == std::string_view::npos) break;
      s = e + 1;
    }
  }
  std::vector<std::string> out;
  for (auto l : non_empty) {
    const auto name = strip_marker(l);
    if (!name.empty()) out.emplace_back(name);
  }
  return out;
}

AttributeSet make_attribute_set(std::string super_category, const std::vector<std::string>& names) {
  AttributeSet set{std::move(super_category), {std::string(kGeneralAttribute)}};
  std::set<std::string> seen{lower(kGeneralAttribute)};
  for (const std::string& n : names) {
    if (n.empty()) continue;
    if (seen.insert(lower(n)).second) set.names.push_back(n);
  }
  return set;
}

Corpus load_corpus(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Corpus c;
  try {
    const auto j = ojson::parse(text);
    c.super_category = j.at("super_category").get<std::string>();
    if (j.contains("class_unit")) c.class_unit = j["class_unit"].get<std::string>();
    if (j.contains("category_names")) c.category_names = j["category_names"].get<std::vector<std::string>>();
    for (const auto& s : j.at("samples")) {
      c.samples.push_back({s.at("id").get<std::size_t>(), s.at("image").get<std::string>(),
                           s.value("category", std::size_t{0})});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  return c;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  ojson j;
  j["super_category"] = corpus.super_category;
  j["class_unit"] = corpus.class_unit;
  j["category_names"] = corpus.category_names;
  j["samples"] = ojson::array();
  for (const SampleRef& s : corpus.samples) {
    j["samples"].push_back({{"id", s.id}, {"image", s.image}, {"category", s.category}});
  }
  write_text_file(path, j.dump(2) + "\n");
}

bool SampleAttributes::complete() const {
  return std::all_of(values.begin(), values.end(), [](const AttributeValue& v) { return v.status == KeyStatus::Ok; });
}

AttributeSet discover(ChatClient& client, const std::string& super_category, const PipelineOptions& options) {
  const std::string prompt =
      options.prompts.discover.render({{"SUPERCLASS", super_category}, {"CLASSUNIT", options.class_unit}});
  const std::string response = client.complete(prompt, "");
  const auto names = parse_attribute_list(response);
  if (names.empty()) {
    throw Error(ErrorCode::ParseError, "no attribute names in the discovery response; raw response: \"" +
                                           response + "\"");
  }
  return make_attribute_set(super_category, names);
}

namespace {

AttributeValue query_key(ChatClient& client, const SampleRef& sample, const std::string& super_category,
                         const std::string& name, const PipelineOptions& options) {
  const std::string prompt = name == kGeneralAttribute
                                 ? options.prompts.extract_general.render({{"SUPERCLASS", super_category}})
                                 : options.prompts.extract.render({{"SUPERCLASS", super_category}, {"ATTRIBUTE", name}});
  AttributeValue v{name, "", KeyStatus::Ok, ""};
  try {
    v.value = client.complete(prompt, sample.image, sample.image);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TransportError) throw;
    v.status = KeyStatus::Failed;
    v.error = e.what();
  }
  return v;
}

}  // namespace

SampleAttributes extract(ChatClient& client, const SampleRef& sample, const AttributeSet& attrs,
                         const PipelineOptions& options) {
  attrs.validate();
  SampleAttributes out{sample, {}, ""};
  for (const std::string& name : attrs.names) {
    out.values.push_back(query_key(client, sample, attrs.super_category, name, options));
  }
  return out;
}

SampleAttributes retry_failed(ChatClient& client, SampleAttributes partial, const AttributeSet& attrs,
                              const PipelineOptions& options) {
  for (AttributeValue& v : partial.values) {
    if (v.status == KeyStatus::Failed) v = query_key(client, partial.sample, attrs.super_category, v.name, options);
  }
  return partial;
}

std::string attribute_block(const SampleAttributes& attrs) {
  std::string out;
  for (const AttributeValue& v : attrs.values) out += v.name + ": " + v.value + "\n";
  return out;
}

SampleAttributes summarize(ChatClient& client, SampleAttributes attrs, const AttributeSet& set,
                           const PipelineOptions& options) {
  std::vector<std::string> missing;
  for (const std::string& name : set.names) {
    const auto it = std::find_if(attrs.values.begin(), attrs.values.end(),
                                 [&](const AttributeValue& v) { return v.name == name; });
    if (it == attrs.values.end() || it->status != KeyStatus::Ok) missing.push_back(name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const std::string& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorCode::MissingKeys,
                "sample " + std::to_string(attrs.sample.id) + " lacks attribute values for: " + list);
  }
  const std::string prompt =
      attribute_block(attrs) + "\n" + options.prompts.summarize.render({{"SUPERCLASS", set.super_category}});
  attrs.summary = client.complete(prompt, attrs.sample.image);
  return attrs;
}

std::string scrub_class_names(std::string_view text, const std::vector<std::string>& names) {
  std::vector<std::string> ordered;
  for (const std::string& n : names) {
    if (!trim(n).empty()) ordered.emplace_back(trim(n));
  }
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });

  std::string out(text);
  for (const std::string& name : ordered) {
    const std::string needle = lower(name);
    std::string result;
    const std::string hay = lower(out);
    std::size_t pos = 0;
    while (true) {
      const std::size_t hit = hay.find(needle, pos);
      if (hit == std::string::npos) break;
      const bool left_ok = hit == 0 || !word_char(hay[hit - 1]);
      const bool right_ok = hit + needle.size() == hay.size() || !word_char(hay[hit + needle.size()]);
      if (left_ok && right_ok) {
        result.append(out, pos, hit - pos);
        result += "this";
      } else {
        result.append(out, pos, hit + 1 - pos);
        pos = hit + 1;
        continue;
      }
      pos = hit + needle.size();
    }
    result.append(out, pos);
    out = std::move(result);
  }
  return out;
}

PipelineResult run_pipeline(ChatClient& client, const Corpus& corpus, const PipelineOptions& options) {
  PipelineOptions opts = options;
  opts.class_unit = corpus.class_unit;
  PipelineResult result;
  result.attributes = discover(client, corpus.super_category, opts);
  result.samples.resize(corpus.samples.size());

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(corpus.samples.size());
  auto work = [&] {
    for (std::size_t i = next++; i < corpus.samples.size(); i = next++) {
      try {
        SampleAttributes s = extract(client, corpus.samples[i], result.attributes, opts);
        if (s.complete()) {
          s = summarize(client, std::move(s), result.attributes, opts);
          if (opts.scrub_class_names) s.summary = scrub_class_names(s.summary, corpus.category_names);
        }
        result.samples[i] = std::move(s);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(opts.max_in_flight, 1, std::max<std::size_t>(1, corpus.samples.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::sort(result.samples.begin(), result.samples.end(),
            [](const SampleAttributes& a, const SampleAttributes& b) { return a.sample.id < b.sample.id; });
  return result;
}

std::string attribute_set_to_json(const AttributeSet& set) {
  ojson j;
  j["super_category"] = set.super_category;
  j["attributes"] = set.names;
  return j.dump(2) + "\n";
}

AttributeSet attribute_set_from_json(std::string_view text) {
  AttributeSet set;
  try {
    const auto j = ojson::parse(text);
    set.super_category = j.at("super_category").get<std::string>();
    set.names = j.at("attributes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("attribute set: ") + e.what());
  }
  set.validate();
  return set;
}

std::string triples_to_json(const PipelineResult& result) {
  std::vector<const SampleAttributes*> order;
  for (const auto& s : result.samples) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->sample.id < b->sample.id; });

  ojson j;
  j["super_category"] = result.attributes.super_category;
  j["attributes"] = result.attributes.names;
  j["samples"] = ojson::array();
  for (const SampleAttributes* s : order) {
    ojson values = ojson::array();
    for (const AttributeValue& v : s->values) {
      ojson e{{"name", v.name}, {"value", v.value}, {"status", status_name(v.status)}};
      if (v.status == KeyStatus::Failed) e["error"] = v.error;
      values.push_back(std::move(e));
    }
    j["samples"].push_back({{"id", s->sample.id},
                            {"category", s->sample.category},
                            {"image", s->sample.image},
                            {"values", std::move(values)},
                            {"summary", s->summary}});
  }
  return j.dump(2) + "\n";
}

PipelineResult triples_from_json(std::string_view text) {
  PipelineResult r;
  try {
    const auto j = ojson::parse(text);
    r.attributes.super_category = j.at("super_category").get<std::string>();
    r.attributes.names = j.at("attributes").get<std::vector<std::string>>();
    for (const auto& s : j.at("samples")) {
      SampleAttributes a;
      a.sample = {s.at("id").get<std::size_t>(), s.at("image").get<std::string>(),
                  s.at("category").get<std::size_t>()};
      for (const auto& v : s.at("values")) {
        const std::string status = v.at("status").get<std::string>();
        if (status != "ok" && status != "failed") throw Error(ErrorCode::FormatError, "unknown key status " + status);
        a.values.push_back({v.at("name").get<std::string>(), v.at("value").get<std::string>(),
                            status == "ok" ? KeyStatus::Ok : KeyStatus::Failed, v.value("error", std::string())});
      }
      a.summary = s.at("summary").get<std::string>();
      r.samples.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("triples file: ") + e.what());
  }
  return r;
}

Vector embed_toy(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (text.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
  const std::string padded = "^" + lower(text) + "$";
  std::vector<double> v(dim, 0.0);
  std::size_t first_bucket = 0;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::uint64_t h = 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
    for (std::size_t k = i; k < i + 3; ++k) {
      h ^= static_cast<unsigned char>(padded[k]);
      h *= 1099511628211ULL;
    }
    const std::size_t bucket = h % dim;
    if (i == 0) first_bucket = bucket;
    v[bucket] += ((h >> 32) & 1) != 0 ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) {
    v[first_bucket] = 1.0;  // every trigram cancelled out
    norm = 1.0;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return Vector(std::move(v));
}

}  // namespace attralign::attribgen
