#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "attralign/dataset.hpp"

namespace attralign {

struct HardNegative {
  std::size_t category = 0;
  std::size_t sample = 0;

  friend bool operator==(const HardNegative&, const HardNegative&) = default;
};

/// Per-anchor negatives, hardest first. Anchors are train-split sample ids.
struct HardNegativeSet {
  std::size_t k = 3;
  std::map<std::size_t, std::vector<HardNegative>> entries;

  const std::vector<HardNegative>& of(std::size_t sample_id) const;
  bool covers(std::size_t sample_id) const { return entries.contains(sample_id); }
  /// Largest number of negatives any anchor actually received.
  std::size_t effective_k() const;

  friend bool operator==(const HardNegativeSet&, const HardNegativeSet&) = default;
};

enum class MiningReference { ObjectEmbedding };

/// For every train sample: rank the other categories by cosine between the
/// sample's raw object embedding and each category's train-split prototype
/// (mean raw object embedding), keep the top k, and from each of those pick
/// the train sample whose object embedding is most similar to the anchor.
/// Ties resolve to the lower category id / sample id. When fewer than k
/// other categories exist, every one of them is returned.
HardNegativeSet mine(const AlignmentDataset& ds, std::size_t k,
                     MiningReference reference = MiningReference::ObjectEmbedding,
                     std::size_t threads = 1);

/// Uniformly random incorrect categories with a uniformly random train
/// representative each; the "simple negatives" ablation arm.
HardNegativeSet sample_simple_negatives(const AlignmentDataset& ds, std::size_t k, std::uint64_t seed);

/// Text format, one anchor per line after a `k <value>` header line:
///   <sample id> <category>:<sample> <category>:<sample> ...
void save_negatives(const HardNegativeSet& set, const std::filesystem::path& path);
HardNegativeSet load_negatives(const std::filesystem::path& path);

}  // namespace attralign
