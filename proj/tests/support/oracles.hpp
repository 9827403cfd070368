#pragma once

// Reference implementations used as test oracles. Everything here is written
// as plain loops straight from the definitions and deliberately avoids the
// library's kernels (cosine, log-sum-exp, tape) so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "attralign/dataset.hpp"
#include "attralign/losses.hpp"
#include "attralign/mining.hpp"
#include "attralign/numerics.hpp"

namespace oracle {

using attralign::BatchViews;
using attralign::Matrix;

inline double cos_naive(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    ab += a(i, k) * b(j, k);
    aa += a(i, k) * a(i, k);
    bb += b(j, k) * b(j, k);
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline double sim(const BatchViews& v, const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  return cos_naive(a, i, b, j) / v.temperature;
}

inline std::size_t neg_begin(const BatchViews& v, std::size_t i) { return v.negative_offsets[i]; }
inline std::size_t neg_end(const BatchViews& v, std::size_t i) { return v.negative_offsets[i + 1]; }

// sum_i -log exp(s(o_i,a_i)) / (sum_j exp(s(o_i,a_j)) + sum_w exp(s(o_i,a_w)))
inline double l_oa(const BatchViews& v) {
  double total = 0;
  for (std::size_t i = 0; i < v.batch_size(); ++i) {
    double den = 0;
    for (std::size_t j = 0; j < v.batch_size(); ++j) den += std::exp(sim(v, v.objects, i, v.attributes, j));
    for (std::size_t w = neg_begin(v, i); w < neg_end(v, i); ++w) {
      den += std::exp(sim(v, v.objects, i, v.negative_attributes, w));
    }
    total += -std::log(std::exp(sim(v, v.objects, i, v.attributes, i)) / den);
  }
  return total;
}

// sum_i -log exp(s(o_i,a_i)) / sum_k exp(s(o_k,a_i))
inline double l_ao(const BatchViews& v) {
  double total = 0;
  for (std::size_t i = 0; i < v.batch_size(); ++i) {
    double den = 0;
    for (std::size_t k = 0; k < v.batch_size(); ++k) den += std::exp(sim(v, v.objects, k, v.attributes, i));
    total += -std::log(std::exp(sim(v, v.objects, i, v.attributes, i)) / den);
  }
  return total;
}

// sum_i -log exp(s(a_i,c_i)) / (sum_j exp(s(a_i,c_j)) + sum_w exp(s(a_i,c_w)))
inline double l_ac(const BatchViews& v) {
  double total = 0;
  for (std::size_t i = 0; i < v.batch_size(); ++i) {
    double den = 0;
    for (std::size_t j = 0; j < v.batch_size(); ++j) den += std::exp(sim(v, v.attributes, i, v.categories, j));
    for (std::size_t w = neg_begin(v, i); w < neg_end(v, i); ++w) {
      den += std::exp(sim(v, v.attributes, i, v.negative_categories, w));
    }
    total += -std::log(std::exp(sim(v, v.attributes, i, v.categories, i)) / den);
  }
  return total;
}

// sum_i -log exp(s(a_i,c_i)) / (sum_j exp(s(a_j,c_i)) + sum_w exp(s(a_w,c_i)))
inline double l_ca(const BatchViews& v) {
  double total = 0;
  for (std::size_t i = 0; i < v.batch_size(); ++i) {
    double den = 0;
    for (std::size_t j = 0; j < v.batch_size(); ++j) den += std::exp(sim(v, v.attributes, j, v.categories, i));
    for (std::size_t w = neg_begin(v, i); w < neg_end(v, i); ++w) {
      den += std::exp(sim(v, v.negative_attributes, w, v.categories, i));
    }
    total += -std::log(std::exp(sim(v, v.attributes, i, v.categories, i)) / den);
  }
  return total;
}

// sum_i -log 1 / sum_k exp(s(c_i,c_k)) over the hard-negative categories of i
inline double l_ccc(const BatchViews& v) {
  double total = 0;
  for (std::size_t i = 0; i < v.batch_size(); ++i) {
    double den = 0;
    for (std::size_t k = neg_begin(v, i); k < neg_end(v, i); ++k) {
      den += std::exp(sim(v, v.categories, i, v.negative_categories, k));
    }
    total += -std::log(1.0 / den);
  }
  return total;
}

// Object-category analogues: objects contrasted directly with categories.
inline double l_oc(const BatchViews& v) {
  double total = 0;
  for (std::size_t i = 0; i < v.batch_size(); ++i) {
    double den = 0;
    for (std::size_t j = 0; j < v.batch_size(); ++j) den += std::exp(sim(v, v.objects, i, v.categories, j));
    for (std::size_t w = neg_begin(v, i); w < neg_end(v, i); ++w) {
      den += std::exp(sim(v, v.objects, i, v.negative_categories, w));
    }
    total += -std::log(std::exp(sim(v, v.objects, i, v.categories, i)) / den);
  }
  return total;
}

inline double l_co(const BatchViews& v) {
  double total = 0;
  for (std::size_t i = 0; i < v.batch_size(); ++i) {
    double den = 0;
    for (std::size_t k = 0; k < v.batch_size(); ++k) den += std::exp(sim(v, v.objects, k, v.categories, i));
    total += -std::log(std::exp(sim(v, v.objects, i, v.categories, i)) / den);
  }
  return total;
}

inline double stage1_triple(const BatchViews& v) {
  const double oac = (l_oa(v) + l_ao(v)) / 2;
  const double acc = (l_ac(v) + l_ca(v)) / 2;
  return (oac + acc + l_ccc(v)) / 2;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = n(rng);
  return m;
}

/// Random batch: B anchors, each with between min_neg and max_neg negatives.
inline BatchViews random_batch(std::mt19937_64& rng, std::size_t b, std::size_t d, std::size_t min_neg,
                               std::size_t max_neg, double temperature = 1.0) {
  BatchViews v;
  v.objects = random_matrix(rng, b, d);
  v.attributes = random_matrix(rng, b, d);
  v.categories = random_matrix(rng, b, d);
  std::uniform_int_distribution<std::size_t> count(min_neg, max_neg);
  v.negative_offsets.push_back(0);
  for (std::size_t i = 0; i < b; ++i) v.negative_offsets.push_back(v.negative_offsets.back() + count(rng));
  v.negative_attributes = random_matrix(rng, v.negative_offsets.back(), d);
  v.negative_categories = random_matrix(rng, v.negative_offsets.back(), d);
  v.temperature = temperature;
  return v;
}

/// Exhaustive hard-negative mining: prototypes are train-split means; every
/// candidate is scored and fully sorted.
inline attralign::HardNegativeSet brute_force_mine(const attralign::AlignmentDataset& ds, std::size_t k) {
  const std::size_t c = ds.num_categories();
  const std::size_t dim = ds.embedding_dim_object();
  Matrix proto(c, dim);
  std::vector<double> counts(c, 0.0);
  for (const auto& s : ds.samples()) {
    if (s.split != attralign::Split::Train) continue;
    for (std::size_t j = 0; j < dim; ++j) proto(s.category, j) += s.object_embedding[j];
    counts[s.category] += 1;
  }
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t j = 0; j < dim; ++j) proto(r, j) /= counts[r];
  }
  auto cos_vec = [&](const attralign::Vector& a, const double* b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      ab += a[j] * b[j];
      aa += a[j] * a[j];
      bb += b[j] * b[j];
    }
    return ab / std::sqrt(aa * bb);
  };

  attralign::HardNegativeSet out;
  out.k = k;
  for (const auto& anchor : ds.samples()) {
    if (anchor.split != attralign::Split::Train) continue;
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t cat = 0; cat < c; ++cat) {
      if (cat == anchor.category) continue;
      scored.push_back({cos_vec(anchor.object_embedding, &proto.data()[cat * dim]), cat});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    std::vector<attralign::HardNegative> negs;
    for (std::size_t r = 0; r < std::min(k, scored.size()); ++r) {
      const std::size_t cat = scored[r].second;
      double best = -2;
      std::size_t best_id = 0;
      for (const auto& cand : ds.samples()) {
        if (cand.split != attralign::Split::Train || cand.category != cat) continue;
        const double s = cos_vec(anchor.object_embedding, cand.object_embedding.raw().data());
        if (s > best) {
          best = s;
          best_id = cand.id;
        }
      }
      negs.push_back({cat, best_id});
    }
    out.entries[anchor.id] = negs;
  }
  return out;
}

/// Central finite differences of f over every entry of `x`.
inline Matrix finite_difference(Matrix& x, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  auto xs = x.data();
  auto gs = g.data();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double orig = xs[i];
    xs[i] = orig + h;
    const double up = f();
    xs[i] = orig - h;
    const double down = f();
    xs[i] = orig;
    gs[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Relative error |a - b| / max(|a|, |b|, floor), maximized over entries.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor) {
  double worst = 0;
  auto as = a.data();
  auto bs = b.data();
  for (std::size_t i = 0; i < as.size(); ++i) {
    const double scale = std::max({std::abs(as[i]), std::abs(bs[i]), floor});
    worst = std::max(worst, std::abs(as[i] - bs[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
