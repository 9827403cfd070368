#include "attralign/mining.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "attralign/binary_io.hpp"

namespace attralign {

const std::vector<HardNegative>& HardNegativeSet::of(std::size_t sample_id) const {
  auto it = entries.find(sample_id);
  if (it == entries.end()) {
    throw Error(ErrorCode::MiningIncomplete, "no negatives mined for sample " + std::to_string(sample_id));
  }
  return it->second;
}

std::size_t HardNegativeSet::effective_k() const {
  std::size_t best = 0;
  for (const auto& [id, negs] : entries) best = std::max(best, negs.size());
  return best;
}

namespace {

struct MiningIndex {
  std::vector<std::vector<std::size_t>> members;  // train ids per category
  std::vector<std::vector<double>> prototypes;    // empty when a category has no train samples
};

MiningIndex build_index(const AlignmentDataset& ds) {
  MiningIndex index;
  const std::size_t c = ds.num_categories();
  const std::size_t dim = ds.embedding_dim_object();
  index.members.resize(c);
  index.prototypes.resize(c);
  for (std::size_t id : ds.split_ids(Split::Train)) index.members[ds.sample(id).category].push_back(id);
  for (std::size_t cat = 0; cat < c; ++cat) {
    if (index.members[cat].empty()) continue;
    std::vector<double> proto(dim, 0.0);
    for (std::size_t id : index.members[cat]) {
      const auto& v = ds.sample(id).object_embedding.raw();
      for (std::size_t i = 0; i < dim; ++i) proto[i] += v[i];
    }
    for (double& x : proto) x /= static_cast<double>(index.members[cat].size());
    index.prototypes[cat] = std::move(proto);
  }
  return index;
}

std::vector<HardNegative> mine_one(const AlignmentDataset& ds, const MiningIndex& index,
                                   std::size_t anchor, std::size_t k) {
  const SampleTriple& a = ds.sample(anchor);
  const auto anchor_vec = a.object_embedding.values();

  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t cat = 0; cat < index.prototypes.size(); ++cat) {
    if (cat == a.category || index.prototypes[cat].empty()) continue;
    ranked.emplace_back(cosine_sim(anchor_vec, index.prototypes[cat]), cat);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  if (ranked.size() > k) ranked.resize(k);

  std::vector<HardNegative> out;
  out.reserve(ranked.size());
  for (const auto& [sim, cat] : ranked) {
    std::size_t best = index.members[cat].front();
    double best_sim = cosine_sim(anchor_vec, ds.sample(best).object_embedding.values());
    for (std::size_t id : index.members[cat]) {
      const double s = cosine_sim(anchor_vec, ds.sample(id).object_embedding.values());
      if (s > best_sim) {
        best_sim = s;
        best = id;
      }
    }
    out.push_back({cat, best});
  }
  return out;
}

}  // namespace

HardNegativeSet mine(const AlignmentDataset& ds, std::size_t k, MiningReference /*reference*/,
                     std::size_t threads) {
  if (k == 0) {
    throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  }
  if (ds.num_categories() < 2) {
    throw Error(ErrorCode::TooFewCategories, "mining needs at least 2 categories");
  }
  const MiningIndex index = build_index(ds);
  const std::vector<std::size_t> anchors = ds.split_ids(Split::Train);
  std::vector<std::vector<HardNegative>> results(anchors.size());

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, anchors.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < anchors.size(); ++i) results[i] = mine_one(ds, index, anchors[i], k);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < anchors.size(); i += workers) {
          results[i] = mine_one(ds, index, anchors[i], k);
        }
      });
    }
  }

  HardNegativeSet set;
  set.k = k;
  for (std::size_t i = 0; i < anchors.size(); ++i) set.entries.emplace(anchors[i], std::move(results[i]));
  return set;
}

HardNegativeSet sample_simple_negatives(const AlignmentDataset& ds, std::size_t k, std::uint64_t seed) {
  if (k == 0) {
    throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  }
  if (ds.num_categories() < 2) {
    throw Error(ErrorCode::TooFewCategories, "negative sampling needs at least 2 categories");
  }
  const MiningIndex index = build_index(ds);
  std::mt19937_64 rng(seed);
  HardNegativeSet set;
  set.k = k;
  for (std::size_t anchor : ds.split_ids(Split::Train)) {
    const std::size_t own = ds.sample(anchor).category;
    std::vector<std::size_t> candidates;
    for (std::size_t cat = 0; cat < index.members.size(); ++cat) {
      if (cat != own && !index.members[cat].empty()) candidates.push_back(cat);
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    if (candidates.size() > k) candidates.resize(k);
    std::vector<HardNegative> negs;
    for (std::size_t cat : candidates) {
      const auto& members = index.members[cat];
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      negs.push_back({cat, members[pick(rng)]});
    }
    set.entries.emplace(anchor, std::move(negs));
  }
  return set;
}

void save_negatives(const HardNegativeSet& set, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "k " << set.k << "\n";
  for (const auto& [id, negs] : set.entries) {
    out << id;
    for (const HardNegative& n : negs) out << ' ' << n.category << ':' << n.sample;
    out << "\n";
  }
  write_text_file(path, out.str());
}

HardNegativeSet load_negatives(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  HardNegativeSet set;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::FormatError, path.filename().string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (!header) {
      std::string tag;
      if (!(ls >> tag >> set.k) || tag != "k" || set.k == 0) fail("expected header 'k <value>'");
      header = true;
      continue;
    }
    std::size_t id = 0;
    if (!(ls >> id)) fail("expected a sample id");
    std::vector<HardNegative> negs;
    std::string token;
    while (ls >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) fail("expected <category>:<sample>, got '" + token + "'");
      try {
        negs.push_back({std::stoul(token.substr(0, colon)), std::stoul(token.substr(colon + 1))});
      } catch (const std::exception&) {
        fail("bad entry '" + token + "'");
      }
    }
    if (!set.entries.emplace(id, std::move(negs)).second) fail("duplicate sample id " + std::to_string(id));
  }
  if (!header) {
    line_no = 0;
    fail("empty negatives file");
  }
  return set;
}

}  // namespace attralign
