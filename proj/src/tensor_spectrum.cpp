#include "smallball/tensor_spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "smallball/errors.hpp"

namespace sbl {

void TensorSpec::validate() const {
  if (factors.size() < 2 || factors.size() > 8) {
    throw InvalidParameters("TensorSpec: need 2 <= d <= 8 factors, got " +
                            std::to_string(factors.size()));
  }
  for (const EigenSequence& f : factors) f.check_invariants();
}

namespace {

// ln lambda^(j)_n cached per factor, filled on demand.
class LogTable {
 public:
  explicit LogTable(const TensorSpec& spec) : spec_(&spec), cache_(spec.factors.size()) {}
  double operator()(std::size_t j, std::int64_t n) {
    std::vector<double>& c = cache_[j];
    while (static_cast<std::int64_t>(c.size()) < n) {
      c.push_back(spec_->factors[j].log_at(static_cast<std::int64_t>(c.size()) + 1));
    }
    return c[n - 1];
  }

 private:
  const TensorSpec* spec_;
  std::vector<std::vector<double>> cache_;
};

// Largest product among tuples with n_j > N_max_j, bounded through
// lambda^(j)_{N_max}; summed in factor order like every other product.
double dropped_bound(LogTable& lg, const TensorSpec& spec, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < spec.factors.size(); ++i) {
    s += (i == j) ? lg(i, spec.factors[i].n_max()) : lg(i, 1);
  }
  return s;
}

}  // namespace

bool ProductStream::Less::operator()(const Entry& x, const Entry& y) const {
  if (x.log_value != y.log_value) return x.log_value < y.log_value;
  return x.index > y.index;
}

ProductStream::ProductStream(const TensorSpec& spec)
    : spec_(&spec), log_cache_(spec.factors.size()) {
  if (spec.factors.empty()) throw InvalidParameters("ProductStream: no factors");
  push(std::vector<std::int64_t>(spec.factors.size(), 1));
}

double ProductStream::log_product(const std::vector<std::int64_t>& index) {
  double s = 0.0;
  for (std::size_t j = 0; j < index.size(); ++j) {
    std::vector<double>& c = log_cache_[j];
    while (static_cast<std::int64_t>(c.size()) < index[j]) {
      c.push_back(spec_->factors[j].log_at(static_cast<std::int64_t>(c.size()) + 1));
    }
    s += c[index[j] - 1];
  }
  return s;
}

void ProductStream::push(std::vector<std::int64_t> index) {
  if (!visited_.insert(index).second) return;
  const double v = log_product(index);
  frontier_.push({v, std::move(index)});
}

bool ProductStream::next(TensorProduct& out) {
  if (frontier_.empty()) return false;
  Entry top = frontier_.top();
  frontier_.pop();
  for (std::size_t j = 0; j < top.index.size(); ++j) {
    std::vector<std::int64_t> succ = top.index;
    ++succ[j];
    if (succ[j] > spec_->factors[j].n_max()) {
      if (!spec_->factors[j].complete()) hit_truncation_ = true;
      continue;
    }
    push(std::move(succ));
  }
  ++emitted_;
  out.log_value = top.log_value;
  out.index = std::move(top.index);
  return true;
}

std::vector<TensorProduct> top_k_products(const TensorSpec& spec, std::int64_t K) {
  if (K < 1) throw InvalidParameters("top_k_products: K must be >= 1");
  ProductStream stream(spec);
  std::vector<TensorProduct> out;
  out.reserve(static_cast<std::size_t>(K));
  TensorProduct p;
  while (static_cast<std::int64_t>(out.size()) < K && stream.next(p)) out.push_back(p);
  if (static_cast<std::int64_t>(out.size()) < K) {
    if (stream.hit_truncation()) {
      throw TruncationExhausted("top_k_products: the truncation box holds only " +
                                std::to_string(out.size()) + " products, K = " +
                                std::to_string(K));
    }
    throw InvalidParameters("top_k_products: only " + std::to_string(out.size()) +
                            " products exist, K = " + std::to_string(K));
  }
  LogTable lg(spec);
  const double kth = out.back().log_value;
  for (std::size_t j = 0; j < spec.factors.size(); ++j) {
    if (spec.factors[j].complete()) continue;
    if (!(dropped_bound(lg, spec, j) < kth)) {
      throw TruncationExhausted("top_k_products: factor " + std::to_string(j + 1) + " ('" +
                                spec.factors[j].name() + "') truncated at N_max = " +
                                std::to_string(spec.factors[j].n_max()) +
                                " is too short for K = " + std::to_string(K));
    }
  }
  return out;
}

namespace {

struct Counter {
  const TensorSpec& spec;
  LogTable& lg;
  double theta;

  // Tuples (n_0..n_{j-1} fixed, partial = their log sum) extended over
  // factors j..d-1 with product > theta.
  std::int64_t count(std::size_t j, double partial) {
    const std::size_t d = spec.factors.size();
    const std::int64_t n_max = spec.factors[j].n_max();
    if (j + 1 == d) {
      // Largest n with partial + ln lambda_n > theta (monotone in n).
      if (!(partial + lg(j, 1) > theta)) return 0;
      std::int64_t lo = 1;
      std::int64_t hi = 2;
      while (hi <= n_max && partial + lg(j, hi) > theta) {
        lo = hi;
        hi *= 2;
      }
      hi = std::min(hi, n_max + 1);  // first index known to fail, or past the end
      while (hi - lo > 1) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        (partial + lg(j, mid) > theta ? lo : hi) = mid;
      }
      return lo;
    }
    std::int64_t total = 0;
    for (std::int64_t n = 1; n <= n_max; ++n) {
      const double s = partial + lg(j, n);
      // Best continuation: every later index at 1.
      double best = s;
      for (std::size_t i = j + 1; i < d; ++i) best += lg(i, 1);
      if (!(best > theta)) break;
      total += count(j + 1, s);
    }
    return total;
  }
};

}  // namespace

TensorCount tensor_counting_exact(const TensorSpec& spec, double log_t, TruncationPolicy policy) {
  spec.validate();
  if (std::isnan(log_t)) throw DomainError("tensor_counting_exact: t must be > 0");
  LogTable lg(spec);
  TensorCount result;
  for (std::size_t j = 0; j < spec.factors.size(); ++j) {
    if (spec.factors[j].complete()) continue;
    if (!(dropped_bound(lg, spec, j) <= log_t)) {
      result.certified = false;
      if (policy == TruncationPolicy::throw_error) {
        throw TruncationExhausted("tensor_counting_exact: t = exp(" + std::to_string(log_t) +
                                  ") lies above the truncation floor of factor " +
                                  std::to_string(j + 1) + " ('" + spec.factors[j].name() + "')");
      }
    }
  }
  Counter c{spec, lg, log_t};
  result.count = c.count(0, 0.0);
  return result;
}

SvfExpr tensor_counting_asym(const std::vector<SvfExpr>& phis) {
  if (phis.empty()) throw InvalidParameters("tensor_counting_asym: no factors");
  for (const SvfExpr& f : phis) {
    if (!is_unbounded(validated(f))) {
      throw DomainError("tensor_counting_asym: counting asymptotics must be unbounded, got " +
                        to_string(f));
    }
  }
  SvfExpr acc = validated(phis.front());
  for (std::size_t i = 1; i < phis.size(); ++i) acc = convolve_closed(acc, phis[i]);
  return acc;
}

}  // namespace sbl
