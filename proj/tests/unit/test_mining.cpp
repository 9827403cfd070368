#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "attralign/binary_io.hpp"
#include "attralign/dataset.hpp"
#include "attralign/mining.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace attralign;

namespace {

// One train sample per class; the anchor (class 3) sits at e0 and class c's
// only sample sits at cosine cos[c] from it.
AlignmentDataset constructed_ordering() {
  const double cos[3] = {0.1, 0.9, 0.5};
  CategoryTable table;
  std::vector<SampleTriple> samples;
  for (std::size_t c = 0; c < 4; ++c) table.categories.push_back({c, "c" + std::to_string(c), Vector{1, 0}});
  for (std::size_t c = 0; c < 3; ++c) {
    samples.push_back({c, Vector{cos[c], std::sqrt(1 - cos[c] * cos[c])}, Vector{1, 0}, c, Split::Train, {}, {}});
  }
  samples.push_back({3, Vector{1, 0}, Vector{1, 0}, 3, Split::Train, {}, {}});
  return AlignmentDataset(table, samples);
}

SynthConfig small_config(std::uint64_t seed, std::size_t classes, std::size_t per_class, double sigma) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.num_classes = classes;
  cfg.samples_per_class = per_class;
  cfg.dim_object = 8;
  cfg.dim_text = 8;
  cfg.intra_class_sigma = sigma;
  return cfg;
}

}  // namespace

TEST(Mine, ConstructedOrderingHardestFirst) {
  const auto ds = constructed_ordering();
  const auto set = mine(ds, 3);
  const auto& negs = set.of(3);
  ASSERT_EQ(negs.size(), 3u);
  EXPECT_EQ(negs[0], (HardNegative{1, 1}));
  EXPECT_EQ(negs[1], (HardNegative{2, 2}));
  EXPECT_EQ(negs[2], (HardNegative{0, 0}));
}

TEST(Mine, ClampsWhenFewerCategoriesThanK) {
  SynthConfig cfg = small_config(1, 3, 5, 0.1);
  const auto set = mine(generate_synthetic(cfg), 3);
  for (const auto& [id, negs] : set.entries) EXPECT_EQ(negs.size(), 2u) << id;
  EXPECT_EQ(set.effective_k(), 2u);
}

TEST(Mine, MatchesBruteForceOnRandomDatasets) {
  const std::size_t shapes[][2] = {{10, 20}, {20, 25}, {5, 100}, {2, 50}, {17, 13}};
  std::uint64_t seed = 100;
  for (const auto& shape : shapes) {
    for (double sigma : {0.05, 0.35, 1.0}) {
      const auto ds = generate_synthetic(small_config(seed++, shape[0], shape[1], sigma));
      ASSERT_LE(ds.size(), 500u);
      EXPECT_TRUE(mine(ds, 3) == oracle::brute_force_mine(ds, 3)) << "classes " << shape[0] << " sigma " << sigma;
    }
  }
}

TEST(Mine, OwnClassNeverANegativeOverFiftySeeds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto ds = generate_synthetic(small_config(seed, 2 + seed % 9, 6 + seed % 5, 0.5));
    const auto set = mine(ds, 3);
    for (const auto& [anchor, negs] : set.entries) {
      const std::size_t own = ds.sample(anchor).category;
      std::set<std::size_t> cats;
      for (const auto& n : negs) {
        EXPECT_NE(n.category, own) << "seed " << seed << " anchor " << anchor;
        EXPECT_EQ(ds.sample(n.sample).category, n.category);
        EXPECT_EQ(ds.sample(n.sample).split, Split::Train);
        cats.insert(n.category);
      }
      EXPECT_EQ(cats.size(), negs.size()) << "duplicate negative category";
      EXPECT_EQ(negs.size(), std::min<std::size_t>(3, ds.num_categories() - 1));
    }
  }
}

TEST(Mine, CoversExactlyTheTrainSplit) {
  const auto ds = generate_synthetic(small_config(4, 6, 10, 0.1));
  const auto set = mine(ds, 2);
  EXPECT_EQ(set.entries.size(), ds.split_ids(Split::Train).size());
  for (std::size_t id : ds.split_ids(Split::Test)) EXPECT_FALSE(set.covers(id));
  EXPECT_ERROR_CODE(set.of(ds.split_ids(Split::Test).front()), ErrorCode::MiningIncomplete);
}

TEST(Mine, ThreadCountDoesNotChangeResult) {
  const auto ds = generate_synthetic(small_config(9, 12, 20, 0.3));
  EXPECT_TRUE(mine(ds, 3, MiningReference::ObjectEmbedding, 1) == mine(ds, 3, MiningReference::ObjectEmbedding, 4));
}

TEST(Mine, Errors) {
  const auto ds = generate_synthetic(small_config(1, 3, 5, 0.1));
  EXPECT_ERROR_CODE(mine(ds, 0), ErrorCode::InvalidArgument);
  CategoryTable one;
  one.categories = {{0, "only", Vector{1, 0}}};
  const AlignmentDataset single(one, {{0, Vector{1, 0}, Vector{1, 0}, 0, Split::Train, {}, {}}});
  EXPECT_ERROR_CODE(mine(single, 3), ErrorCode::TooFewCategories);
  EXPECT_ERROR_CODE(sample_simple_negatives(single, 3, 0), ErrorCode::TooFewCategories);
}

TEST(SimpleNegatives, ValidAndSeedDeterministic) {
  const auto ds = generate_synthetic(small_config(2, 8, 10, 0.1));
  const auto a = sample_simple_negatives(ds, 3, 5);
  EXPECT_TRUE(a == sample_simple_negatives(ds, 3, 5));
  EXPECT_FALSE(a == sample_simple_negatives(ds, 3, 6));
  for (const auto& [anchor, negs] : a.entries) {
    ASSERT_EQ(negs.size(), 3u);
    std::set<std::size_t> cats;
    for (const auto& n : negs) {
      EXPECT_NE(n.category, ds.sample(anchor).category);
      EXPECT_EQ(ds.sample(n.sample).category, n.category);
      EXPECT_EQ(ds.sample(n.sample).split, Split::Train);
      cats.insert(n.category);
    }
    EXPECT_EQ(cats.size(), 3u);
  }
}

TEST(NegativesIo, RoundTripAndFormatErrors) {
  const auto ds = generate_synthetic(small_config(3, 5, 6, 0.1));
  const auto set = mine(ds, 3);
  const auto dir = testutil::scratch_dir();
  save_negatives(set, dir / "negs.txt");
  EXPECT_TRUE(load_negatives(dir / "negs.txt") == set);

  write_text_file(dir / "bad.txt", "k 3\n0 1-2\n");
  EXPECT_ERROR_CODE(load_negatives(dir / "bad.txt"), ErrorCode::FormatError);
  write_text_file(dir / "empty.txt", "");
  EXPECT_ERROR_CODE(load_negatives(dir / "empty.txt"), ErrorCode::FormatError);
  write_text_file(dir / "dup.txt", "k 1\n0 1:1\n0 1:2\n");
  EXPECT_ERROR_CODE(load_negatives(dir / "dup.txt"), ErrorCode::FormatError);
}
