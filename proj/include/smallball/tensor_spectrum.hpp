#pragma once

// Spectra of d-fold tensor products: the products lambda^(1)_{n_1} ...
// lambda^(d)_{n_d} over all index tuples. Products are handled as sums of
// ln(lambda), accumulated in factor order, so both code paths below see
// bit-identical values and exact ties stay exact.

#include <cstdint>
#include <queue>
#include <set>
#include <vector>

#include "smallball/marginal_spectra.hpp"
#include "smallball/svf.hpp"

namespace sbl {

struct TensorSpec {
  std::vector<EigenSequence> factors;
  /// 2 <= d <= 8 and every factor passes check_invariants.
  void validate() const;
  int order() const { return static_cast<int>(factors.size()); }
};

struct TensorProduct {
  double log_value;
  std::vector<std::int64_t> index;  ///< 1-based, one entry per factor
};

/// Best-first enumeration of products in nonincreasing order; ties come out
/// in lexicographic index order. Single consumer.
class ProductStream {
 public:
  explicit ProductStream(const TensorSpec& spec);
  /// False once every tuple inside the truncation box was emitted.
  bool next(TensorProduct& out);
  std::int64_t emitted() const { return emitted_; }
  /// True when a successor beyond the truncation of an incomplete factor was
  /// needed.
  bool hit_truncation() const { return hit_truncation_; }

 private:
  struct Entry {
    double log_value;
    std::vector<std::int64_t> index;
  };
  struct Less {
    bool operator()(const Entry& x, const Entry& y) const;
  };

  double log_product(const std::vector<std::int64_t>& index);
  void push(std::vector<std::int64_t> index);

  const TensorSpec* spec_;
  std::vector<std::vector<double>> log_cache_;
  std::priority_queue<Entry, std::vector<Entry>, Less> frontier_;
  std::set<std::vector<std::int64_t>> visited_;
  std::int64_t emitted_ = 0;
  bool hit_truncation_ = false;
};

/// The K largest products, nonincreasing. Throws TruncationExhausted unless
/// lambda^(j)_{N_max} prod_{i != j} lambda^(i)_1 < K-th value for every
/// incomplete factor j, and InvalidParameters if fewer than K products exist.
std::vector<TensorProduct> top_k_products(const TensorSpec& spec, std::int64_t K);

struct TensorCount {
  std::int64_t count = 0;
  /// Every tuple cut by truncation provably has product <= t.
  bool certified = true;
};

enum class TruncationPolicy { throw_error, report };

/// #{tuples : product > t} with t = exp(log_t), by recursion over factors.
TensorCount tensor_counting_exact(const TensorSpec& spec, double log_t,
                                  TruncationPolicy policy = TruncationPolicy::throw_error);

/// Iterated closed-form convolution of the marginal counting asymptotics.
SvfExpr tensor_counting_asym(const std::vector<SvfExpr>& phis);

}  // namespace sbl
